//! Bivariate polynomials and rational functions over Q(i) in `x` and `c`.
//!
//! Used for cancellation in symbolic configurations, for the linearity test
//! and for exact equivalence checks.

use std::collections::BTreeMap;

use num_traits::ToPrimitive;
use thiserror::Error;

use crate::expr::Expr;
use crate::number::Number;

/// Largest exponent magnitude accepted when building rational functions.
pub const MAX_POLY_EXPONENT: i64 = 256;

/// Deterministic work counter standing in for a wall-clock timeout.
#[derive(Debug, Clone)]
pub struct Budget {
    left: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("simplification budget exceeded")]
pub struct BudgetExceeded;

impl Budget {
    pub fn new(units: usize) -> Self {
        Budget { left: units }
    }

    pub fn charge(&mut self, units: usize) -> Result<(), BudgetExceeded> {
        if units > self.left {
            self.left = 0;
            return Err(BudgetExceeded);
        }
        self.left -= units;
        Ok(())
    }

    pub fn remaining(&self) -> usize {
        self.left
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RatError {
    #[error("expression is not a rational function")]
    NotRational,
    #[error("division by the zero polynomial")]
    Pole,
    #[error(transparent)]
    Budget(#[from] BudgetExceeded),
}

/// Monomial exponents `(deg_x, deg_c)`. Tuple order is lex with `x` major.
pub type Mono = (u32, u32);

/// Sparse polynomial; never stores a zero coefficient.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Poly {
    terms: BTreeMap<Mono, Number>,
}

impl Poly {
    pub fn zero() -> Poly {
        Poly::default()
    }

    pub fn constant(n: Number) -> Poly {
        Poly::monomial(n, (0, 0))
    }

    pub fn one() -> Poly {
        Poly::constant(Number::one())
    }

    pub fn monomial(n: Number, m: Mono) -> Poly {
        let mut terms = BTreeMap::new();
        if !n.is_zero() {
            terms.insert(m, n);
        }
        Poly { terms }
    }

    pub fn x() -> Poly {
        Poly::monomial(Number::one(), (1, 0))
    }

    pub fn c() -> Poly {
        Poly::monomial(Number::one(), (0, 1))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1 && self.terms.get(&(0, 0)).is_some_and(Number::is_one)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in ascending lex order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Mono, &Number)> {
        self.terms.iter()
    }

    pub fn as_constant(&self) -> Option<Number> {
        match self.terms.len() {
            0 => Some(Number::zero()),
            1 => self.terms.get(&(0, 0)).cloned(),
            _ => None,
        }
    }

    pub fn deg_x(&self) -> u32 {
        self.terms.keys().map(|m| m.0).max().unwrap_or(0)
    }

    pub fn deg_c(&self) -> u32 {
        self.terms.keys().map(|m| m.1).max().unwrap_or(0)
    }

    pub fn leading(&self) -> Option<(Mono, &Number)> {
        self.terms.iter().next_back().map(|(m, n)| (*m, n))
    }

    fn add_term(&mut self, m: Mono, n: &Number) {
        if n.is_zero() {
            return;
        }
        let sum = match self.terms.get(&m) {
            Some(old) => old.add(n),
            None => n.clone(),
        };
        if sum.is_zero() {
            self.terms.remove(&m);
        } else {
            self.terms.insert(m, sum);
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, n) in &other.terms {
            out.add_term(*m, n);
        }
        out
    }

    pub fn neg(&self) -> Poly {
        Poly { terms: self.terms.iter().map(|(m, n)| (*m, n.neg())).collect() }
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn scale(&self, k: &Number) -> Poly {
        if k.is_zero() {
            return Poly::zero();
        }
        Poly { terms: self.terms.iter().map(|(m, n)| (*m, n.mul(k))).collect() }
    }

    pub fn mul(&self, other: &Poly, budget: &mut Budget) -> Result<Poly, BudgetExceeded> {
        budget.charge(self.len() * other.len())?;
        let mut out = Poly::zero();
        for (ma, na) in &self.terms {
            for (mb, nb) in &other.terms {
                out.add_term((ma.0 + mb.0, ma.1 + mb.1), &na.mul(nb));
            }
        }
        Ok(out)
    }

    pub fn pow(&self, k: u32, budget: &mut Budget) -> Result<Poly, BudgetExceeded> {
        let mut result = Poly::one();
        let mut sq = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&sq, budget)?;
            }
            e >>= 1;
            if e > 0 {
                sq = sq.mul(&sq, budget)?;
            }
        }
        Ok(result)
    }

    /// Coefficient of `x^i` as a polynomial in `c`.
    pub fn coeff_x(&self, i: u32) -> Poly {
        Poly { terms: self.terms.iter().filter(|(m, _)| m.0 == i).map(|(m, n)| ((0, m.1), n.clone())).collect() }
    }

    fn shift(&self, dx: u32, dc: u32) -> Poly {
        Poly { terms: self.terms.iter().map(|(m, n)| ((m.0 + dx, m.1 + dc), n.clone())).collect() }
    }

    /// Divide by the lex-leading coefficient.
    pub fn monic(&self) -> Poly {
        match self.leading() {
            Some((_, lc)) => self.scale(&lc.recip().expect("nonzero leading coefficient")),
            None => Poly::zero(),
        }
    }

    /// `self / d` when the division is exact, else `None`.
    pub fn div_exact(&self, d: &Poly, budget: &mut Budget) -> Result<Option<Poly>, BudgetExceeded> {
        let (dm, dc) = d.leading().expect("division by zero polynomial");
        let dc_inv = dc.recip().expect("nonzero leading coefficient");
        let mut r = self.clone();
        let mut q = Poly::zero();
        while let Some((rm, rc)) = r.leading() {
            if rm.0 < dm.0 || rm.1 < dm.1 {
                return Ok(None);
            }
            let t = Poly::monomial(rc.mul(&dc_inv), (rm.0 - dm.0, rm.1 - dm.1));
            r = r.sub(&t.mul(d, budget)?);
            q = q.add(&t);
        }
        Ok(Some(q))
    }

    /// Pseudo-remainder with respect to `x`.
    fn prem_x(&self, b: &Poly, budget: &mut Budget) -> Result<Poly, BudgetExceeded> {
        let db = b.deg_x();
        let lcb = b.coeff_x(db);
        let mut r = self.clone();
        while !r.is_zero() && r.deg_x() >= db {
            let dr = r.deg_x();
            let lcr = r.coeff_x(dr);
            r = lcb.mul(&r, budget)?.sub(&lcr.shift(dr - db, 0).mul(b, budget)?);
        }
        Ok(r)
    }

    /// Content with respect to `x`: gcd of the coefficients in `c`.
    fn content_x(&self, budget: &mut Budget) -> Result<Poly, BudgetExceeded> {
        let mut g = Poly::zero();
        for i in 0..=self.deg_x() {
            let co = self.coeff_x(i);
            if !co.is_zero() {
                g = gcd_c(&g, &co, budget)?;
                if g.is_one() {
                    break;
                }
            }
        }
        Ok(g)
    }

    fn primitive_x(&self, budget: &mut Budget) -> Result<(Poly, Poly), BudgetExceeded> {
        let cont = self.content_x(budget)?;
        let pp = self.div_exact(&cont, budget)?.expect("content divides");
        Ok((cont, pp))
    }
}

/// Remainder of univariate polynomials in `c`.
fn rem_c(a: &Poly, b: &Poly, budget: &mut Budget) -> Result<Poly, BudgetExceeded> {
    let (bm, bc) = b.leading().expect("nonzero divisor");
    let bc_inv = bc.recip().expect("nonzero leading coefficient");
    let mut r = a.clone();
    while let Some((rm, rc)) = r.leading() {
        if rm.1 < bm.1 {
            break;
        }
        let t = Poly::monomial(rc.mul(&bc_inv), (0, rm.1 - bm.1));
        r = r.sub(&t.mul(b, budget)?);
    }
    Ok(r)
}

/// Monic gcd of two `x`-free polynomials (Euclid over the coefficient field).
fn gcd_c(a: &Poly, b: &Poly, budget: &mut Budget) -> Result<Poly, BudgetExceeded> {
    let (mut a, mut b) = (a.clone(), b.clone());
    while !b.is_zero() {
        let r = rem_c(&a, &b, budget)?;
        a = b;
        b = r;
    }
    Ok(a.monic())
}

/// Monic gcd of two bivariate polynomials by content splitting and a
/// primitive remainder sequence in `x`.
pub fn gcd(a: &Poly, b: &Poly, budget: &mut Budget) -> Result<Poly, BudgetExceeded> {
    if a.is_zero() {
        return Ok(b.monic());
    }
    if b.is_zero() {
        return Ok(a.monic());
    }
    let (ca, mut pa) = a.primitive_x(budget)?;
    let (cb, mut pb) = b.primitive_x(budget)?;
    let content = gcd_c(&ca, &cb, budget)?;
    if pa.deg_x() < pb.deg_x() {
        std::mem::swap(&mut pa, &mut pb);
    }
    let prim = loop {
        if pb.deg_x() == 0 {
            break Poly::one();
        }
        let r = pa.prem_x(&pb, budget)?;
        if r.is_zero() {
            break pb;
        }
        pa = pb;
        pb = r.primitive_x(budget)?.1;
    };
    Ok(content.mul(&prim, budget)?.monic())
}

/// Reduced fraction `num / den` with `den` monic in lex order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatFunc {
    pub num: Poly,
    pub den: Poly,
}

impl RatFunc {
    pub fn from_poly(p: Poly) -> RatFunc {
        RatFunc { num: p, den: Poly::one() }
    }

    fn reduced(num: Poly, den: Poly, budget: &mut Budget) -> Result<RatFunc, RatError> {
        if den.is_zero() {
            return Err(RatError::Pole);
        }
        if num.is_zero() {
            return Ok(RatFunc::from_poly(Poly::zero()));
        }
        let g = gcd(&num, &den, budget)?;
        let (num, den) = if g.is_one() {
            (num, den)
        } else {
            (
                num.div_exact(&g, budget)?.expect("gcd divides numerator"),
                den.div_exact(&g, budget)?.expect("gcd divides denominator"),
            )
        };
        let lc = den.leading().map(|(_, n)| n.clone()).expect("nonzero denominator");
        let inv = lc.recip().expect("nonzero");
        Ok(RatFunc { num: num.scale(&inv), den: den.scale(&inv) })
    }

    pub fn add(&self, o: &RatFunc, budget: &mut Budget) -> Result<RatFunc, RatError> {
        if self.den == o.den {
            return RatFunc::reduced(self.num.add(&o.num), self.den.clone(), budget);
        }
        let num = self.num.mul(&o.den, budget)?.add(&o.num.mul(&self.den, budget)?);
        let den = self.den.mul(&o.den, budget)?;
        RatFunc::reduced(num, den, budget)
    }

    pub fn mul(&self, o: &RatFunc, budget: &mut Budget) -> Result<RatFunc, RatError> {
        let num = self.num.mul(&o.num, budget)?;
        let den = self.den.mul(&o.den, budget)?;
        RatFunc::reduced(num, den, budget)
    }

    pub fn powi(&self, k: i64, budget: &mut Budget) -> Result<RatFunc, RatError> {
        if k.abs() > MAX_POLY_EXPONENT {
            return Err(RatError::Budget(BudgetExceeded));
        }
        let e = k.unsigned_abs() as u32;
        let (num, den) = (self.num.pow(e, budget)?, self.den.pow(e, budget)?);
        if k >= 0 {
            Ok(RatFunc { num, den })
        } else {
            RatFunc::reduced(den, num, budget)
        }
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    /// Convert an expression with integer exponents.
    pub fn from_expr(e: &Expr, budget: &mut Budget) -> Result<RatFunc, RatError> {
        budget.charge(1)?;
        match e {
            Expr::Num(n) => Ok(RatFunc::from_poly(Poly::constant(n.clone()))),
            Expr::Unknown => Ok(RatFunc::from_poly(Poly::x())),
            Expr::SymConst => Ok(RatFunc::from_poly(Poly::c())),
            Expr::Add(v) => {
                let mut acc = RatFunc::from_poly(Poly::zero());
                for t in v {
                    acc = acc.add(&RatFunc::from_expr(t, budget)?, budget)?;
                }
                Ok(acc)
            }
            Expr::Mul(v) => {
                let mut acc = RatFunc::from_poly(Poly::one());
                for t in v {
                    acc = acc.mul(&RatFunc::from_expr(t, budget)?, budget)?;
                }
                Ok(acc)
            }
            Expr::Pow(b, x) => {
                let k = x
                    .as_num()
                    .filter(|n| n.is_integer())
                    .and_then(|n| n.re().to_integer().to_i64())
                    .ok_or(RatError::NotRational)?;
                if k.is_negative() && k.abs() > MAX_POLY_EXPONENT {
                    return Err(RatError::Budget(BudgetExceeded));
                }
                RatFunc::from_expr(b, budget)?.powi(k, budget)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;

    fn rf(s: &str) -> RatFunc {
        RatFunc::from_expr(&parse_expression(s).unwrap(), &mut Budget::new(1_000_000)).unwrap()
    }

    fn poly(s: &str) -> Poly {
        let r = rf(s);
        assert!(r.den.is_one(), "{s} is not a polynomial");
        r.num
    }

    #[test]
    fn expansion() {
        assert_eq!(poly("(x + 1)*(x - 1)"), poly("x^2 - 1"));
        assert_eq!(poly("(x + c)^2"), poly("x^2 + 2*x*c + c^2"));
    }

    #[test]
    fn bivariate_gcd() {
        let mut b = Budget::new(1_000_000);
        let g = gcd(&poly("(x + c)*(x - 2)*(c + 1)"), &poly("(x + c)*(c + 1)*(x + 3)"), &mut b).unwrap();
        assert_eq!(g, poly("(x + c)*(c + 1)").monic());
        let g = gcd(&poly("2*x + 2"), &poly("3*c"), &mut b).unwrap();
        assert!(g.is_one());
        let g = gcd(&poly("x*c + c"), &poly("c^2"), &mut b).unwrap();
        assert_eq!(g, poly("c"));
    }

    #[test]
    fn cancellation() {
        let r = rf("(-1*(2*x + 1))*(2*x + 1)^-1");
        assert_eq!(r.num, poly("-1"));
        assert!(r.den.is_one());
        let r = rf("(x^2 - c^2)*(x + c)^-1");
        assert_eq!(r, RatFunc::from_poly(poly("x - c")));
        let r = rf("x*(2*c + 4)^-1");
        assert_eq!(r.den, poly("c + 2"));
        assert_eq!(r.num, poly("1/2*x"));
    }

    #[test]
    fn complex_coefficients() {
        let r = rf("(x^2 + 1)*(x + I)^-1");
        assert_eq!(r, RatFunc::from_poly(poly("x - I")));
    }

    #[test]
    fn poles_and_limits() {
        let mut b = Budget::new(1_000_000);
        assert_eq!(RatFunc::from_expr(&parse_expression("(x - x)^-1").unwrap(), &mut b), Err(RatError::Pole));
        assert_eq!(RatFunc::from_expr(&parse_expression("2^x").unwrap(), &mut b), Err(RatError::NotRational));
        let mut tiny = Budget::new(20);
        assert!(matches!(
            RatFunc::from_expr(&parse_expression("(x + c + 1)^12").unwrap(), &mut tiny),
            Err(RatError::Budget(_))
        ));
    }
}
