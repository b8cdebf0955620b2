//! Automatic simplification applied after every state change, and the
//! solved-state and linearity tests.
//!
//! The pipeline mirrors a computer-algebra system without heuristic
//! simplification: construction-time canonicalization, optional
//! distributive expansion, optional cancellation to a single reduced
//! fraction, collection in `x`, a final numeric grouping pass and a seeded
//! shuffle of commutative operands.

use std::fmt;

use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::expr::{parse_equation, Expr, ParseError, Symbol};
use crate::number::{ArithError, Number};
use crate::poly::{Budget, BudgetExceeded, Poly, RatError, RatFunc, MAX_POLY_EXPONENT};

pub const DEFAULT_BUDGET: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum NormalizeError {
    #[error("simplification budget exceeded")]
    BudgetExceeded,
    #[error("expression is undefined (division by zero)")]
    Undefined,
}

impl From<BudgetExceeded> for NormalizeError {
    fn from(_: BudgetExceeded) -> Self {
        NormalizeError::BudgetExceeded
    }
}

impl From<ArithError> for NormalizeError {
    fn from(e: ArithError) -> Self {
        match e {
            ArithError::DivisionByZero => NormalizeError::Undefined,
            ArithError::BadExponent | ArithError::TooLarge => NormalizeError::BudgetExceeded,
        }
    }
}

type Res<T> = Result<T, NormalizeError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimplifyOptions {
    /// Distributive expansion (complex or symbolic configurations).
    pub expand: bool,
    /// Cancellation to a reduced fraction (symbolic configurations).
    pub cancel: bool,
    pub shuffle: bool,
    /// Work units before the result counts as a timeout.
    pub budget: usize,
}

impl SimplifyOptions {
    pub fn for_config(symbolic: bool, complex: bool) -> Self {
        SimplifyOptions { expand: symbolic || complex, cancel: symbolic, shuffle: true, budget: DEFAULT_BUDGET }
    }

    pub fn without_shuffle(mut self) -> Self {
        self.shuffle = false;
        self
    }
}

/// Run the full pipeline on one term.
pub fn normalize<R: Rng + ?Sized>(e: &Expr, opts: &SimplifyOptions, rng: &mut R) -> Res<Expr> {
    let mut b = Budget::new(opts.budget);
    let mut out = auto(e, &mut b)?;
    if opts.expand {
        out = expand(&out, &mut b)?;
    }
    if opts.cancel {
        out = cancel(&out, &mut b)?;
    }
    out = collect(&out, &mut b)?;
    out = auto(&out, &mut b)?;
    if opts.shuffle {
        shuffle(&mut out, rng);
    }
    Ok(out)
}

/// Construction-time canonicalization: flatten, fold numbers, merge like
/// terms and like bases, distribute a lone numeric factor over a sum.
pub fn auto(e: &Expr, b: &mut Budget) -> Res<Expr> {
    b.charge(1)?;
    match e {
        Expr::Add(v) => {
            let kids = v.iter().map(|t| auto(t, b)).collect::<Res<Vec<_>>>()?;
            auto_add(kids, b)
        }
        Expr::Mul(v) => {
            let kids = v.iter().map(|t| auto(t, b)).collect::<Res<Vec<_>>>()?;
            auto_mul(kids, b)
        }
        Expr::Pow(base, exp) => {
            let base = auto(base, b)?;
            let exp = auto(exp, b)?;
            auto_pow(base, exp, b)
        }
        leaf => Ok(leaf.clone()),
    }
}

/// Split a term into its numeric coefficient and remaining factors.
fn split_coeff(term: Expr) -> (Number, Vec<Expr>) {
    match term {
        Expr::Num(n) => (n, vec![]),
        Expr::Mul(v) => {
            let mut coeff = Number::one();
            let mut rest = Vec::with_capacity(v.len());
            for f in v {
                match f {
                    Expr::Num(n) => coeff = coeff.mul(&n),
                    other => rest.push(other),
                }
            }
            (coeff, rest)
        }
        other => (Number::one(), vec![other]),
    }
}

fn with_coeff(coeff: Number, mut factors: Vec<Expr>) -> Expr {
    if coeff.is_one() {
        return Expr::mul(factors);
    }
    if factors.is_empty() {
        return Expr::Num(coeff);
    }
    factors.insert(0, Expr::Num(coeff));
    Expr::Mul(factors)
}

fn auto_add(kids: Vec<Expr>, b: &mut Budget) -> Res<Expr> {
    let mut flat = Vec::with_capacity(kids.len());
    for k in kids {
        match k {
            Expr::Add(v) => flat.extend(v),
            other => flat.push(other),
        }
    }
    b.charge(flat.len())?;
    let mut number = Number::zero();
    // (canonical key, factors, coefficient), first occurrence order.
    let mut groups: Vec<(Expr, Vec<Expr>, Number)> = Vec::new();
    for t in flat {
        if let Expr::Num(n) = &t {
            number = number.add(n);
            continue;
        }
        let (coeff, rest) = split_coeff(t);
        let key = Expr::mul(rest.clone()).canonical();
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => g.2 = g.2.add(&coeff),
            None => groups.push((key, rest, coeff)),
        }
    }
    let mut out = Vec::with_capacity(groups.len() + 1);
    if !number.is_zero() {
        out.push(Expr::Num(number));
    }
    for (_, rest, coeff) in groups {
        if !coeff.is_zero() {
            out.push(with_coeff(coeff, rest));
        }
    }
    Ok(Expr::add(out))
}

fn auto_mul(kids: Vec<Expr>, b: &mut Budget) -> Res<Expr> {
    let mut flat = Vec::with_capacity(kids.len());
    for k in kids {
        match k {
            Expr::Mul(v) => flat.extend(v),
            other => flat.push(other),
        }
    }
    b.charge(flat.len())?;
    let mut coeff = Number::one();
    // (canonical base, base, summed exponent)
    let mut groups: Vec<(Expr, Expr, Expr)> = Vec::new();
    for f in flat {
        let (base, exp) = match f {
            Expr::Num(n) => {
                coeff = coeff.mul(&n);
                continue;
            }
            Expr::Pow(base, exp) => (*base, *exp),
            other => (other, Expr::int(1)),
        };
        let key = base.canonical();
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => {
                let sum = std::mem::replace(&mut g.2, Expr::int(0));
                g.2 = auto_add(vec![sum, exp], b)?;
            }
            None => groups.push((key, base, exp)),
        }
    }
    if coeff.is_zero() {
        return Ok(Expr::int(0));
    }
    let mut factors = Vec::with_capacity(groups.len());
    for (_, base, exp) in groups {
        match auto_pow(base, exp, b)? {
            Expr::Num(n) => coeff = coeff.mul(&n),
            Expr::Mul(v) => {
                for f in v {
                    match f {
                        Expr::Num(n) => coeff = coeff.mul(&n),
                        other => factors.push(other),
                    }
                }
            }
            other => factors.push(other),
        }
    }
    if coeff.is_zero() {
        return Ok(Expr::int(0));
    }
    if !coeff.is_one() && factors.len() == 1 && matches!(factors[0], Expr::Add(_)) {
        let Some(Expr::Add(terms)) = factors.pop() else { unreachable!() };
        let mut scaled = Vec::with_capacity(terms.len());
        for t in terms {
            scaled.push(auto_mul(vec![Expr::Num(coeff.clone()), t], b)?);
        }
        return auto_add(scaled, b);
    }
    Ok(with_coeff(coeff, factors))
}

fn integer_of(e: &Expr) -> Option<&Number> {
    e.as_num().filter(|n| n.is_integer())
}

fn auto_pow(base: Expr, exp: Expr, b: &mut Budget) -> Res<Expr> {
    b.charge(1)?;
    if let Some(en) = exp.as_num() {
        if en.is_zero() {
            return Ok(Expr::int(1));
        }
        if en.is_one() {
            return Ok(base);
        }
        if let Some(bn) = base.as_num() {
            if en.is_integer() {
                return Ok(Expr::Num(bn.pow(en.re().numer())?));
            }
            return Ok(Expr::pow(base, exp));
        }
        if en.is_integer() {
            match base {
                Expr::Pow(inner, inner_exp) if integer_of(&inner_exp).is_some() => {
                    let prod = inner_exp.as_num().unwrap().mul(en);
                    return auto_pow(*inner, Expr::Num(prod), b);
                }
                Expr::Mul(v) => {
                    let mut parts = Vec::with_capacity(v.len());
                    for f in v {
                        parts.push(auto_pow(f, exp.clone(), b)?);
                    }
                    return auto_mul(parts, b);
                }
                other => return Ok(Expr::pow(other, exp)),
            }
        }
    }
    if let Some(bn) = base.as_num() {
        if bn.is_one() {
            return Ok(Expr::int(1));
        }
    }
    Ok(Expr::pow(base, exp))
}

/// Distributive expansion of products and positive integer powers of sums.
pub fn expand(e: &Expr, b: &mut Budget) -> Res<Expr> {
    b.charge(1)?;
    match e {
        Expr::Add(v) => {
            let kids = v.iter().map(|t| expand(t, b)).collect::<Res<Vec<_>>>()?;
            auto_add(kids, b)
        }
        Expr::Mul(v) => {
            let kids = v.iter().map(|t| expand(t, b)).collect::<Res<Vec<_>>>()?;
            distribute(kids, b)
        }
        Expr::Pow(base, exp) => {
            let base = expand(base, b)?;
            let exp = expand(exp, b)?;
            let k = integer_of(&exp).and_then(|n| n.as_i64());
            match (k, &base) {
                (Some(k), Expr::Add(_)) if k > 0 => {
                    if k > MAX_POLY_EXPONENT {
                        return Err(NormalizeError::BudgetExceeded);
                    }
                    distribute(vec![base; k as usize], b)
                }
                (Some(k), Expr::Add(_)) if k < -1 => {
                    let pos = distribute(vec![base; k.unsigned_abs() as usize], b)?;
                    auto_pow(pos, Expr::int(-1), b)
                }
                _ => auto_pow(base, exp, b),
            }
        }
        leaf => Ok(leaf.clone()),
    }
}

fn distribute(factors: Vec<Expr>, b: &mut Budget) -> Res<Expr> {
    let mut products: Vec<Vec<Expr>> = vec![vec![]];
    for f in factors {
        match f {
            Expr::Add(terms) => {
                b.charge(products.len() * terms.len())?;
                let mut next = Vec::with_capacity(products.len() * terms.len());
                for p in &products {
                    for t in &terms {
                        let mut q = p.clone();
                        q.push(t.clone());
                        next.push(q);
                    }
                }
                products = next;
            }
            other => products.iter_mut().for_each(|p| p.push(other.clone())),
        }
    }
    let mut terms = Vec::with_capacity(products.len());
    for p in products {
        terms.push(auto_mul(p, b)?);
    }
    auto_add(terms, b)
}

/// Rewrite as a single reduced fraction `N * D^-1` with both parts expanded.
/// Expressions with non-integer exponents are returned unchanged.
pub fn cancel(e: &Expr, b: &mut Budget) -> Res<Expr> {
    match RatFunc::from_expr(e, b) {
        Ok(r) => ratfunc_to_expr(&r, b),
        Err(RatError::NotRational) => Ok(e.clone()),
        Err(RatError::Pole) => Err(NormalizeError::Undefined),
        Err(RatError::Budget(_)) => Err(NormalizeError::BudgetExceeded),
    }
}

fn power_of(sym: Expr, k: u32) -> Option<Expr> {
    match k {
        0 => None,
        1 => Some(sym),
        k => Some(Expr::pow(sym, Expr::int(k as i64))),
    }
}

/// Expanded sum of monomials, ascending lex order.
pub fn poly_to_expr(p: &Poly) -> Expr {
    let terms = p
        .terms()
        .map(|(&(dx, dc), n)| {
            let factors: Vec<Expr> =
                [power_of(Expr::c(), dc), power_of(Expr::x(), dx)].into_iter().flatten().collect();
            with_coeff(n.clone(), factors)
        })
        .collect();
    Expr::add(terms)
}

pub fn ratfunc_to_expr(r: &RatFunc, b: &mut Budget) -> Res<Expr> {
    let num = poly_to_expr(&r.num);
    if r.den.is_one() {
        return Ok(num);
    }
    let den = Expr::pow(poly_to_expr(&r.den), Expr::int(-1));
    auto_mul(vec![num, den], b)
}

/// Collect the terms of every sum by their `x`-dependent factors.
pub fn collect(e: &Expr, b: &mut Budget) -> Res<Expr> {
    b.charge(1)?;
    match e {
        Expr::Add(v) => {
            let kids = v.iter().map(|t| collect(t, b)).collect::<Res<Vec<_>>>()?;
            let mut free = Vec::new();
            // (canonical x-part, x factors, coefficient terms, original term)
            let mut groups: Vec<(Expr, Vec<Expr>, Vec<Expr>, Expr)> = Vec::new();
            for t in kids {
                if !t.contains_x() {
                    free.push(t);
                    continue;
                }
                let factors = match &t {
                    Expr::Mul(f) => f.clone(),
                    other => vec![other.clone()],
                };
                let (xs, cs): (Vec<Expr>, Vec<Expr>) = factors.into_iter().partition(Expr::contains_x);
                let key = Expr::mul(xs.clone()).canonical();
                let coeff = Expr::mul(cs);
                match groups.iter_mut().find(|g| g.0 == key) {
                    Some(g) => g.2.push(coeff),
                    None => groups.push((key, xs, vec![coeff], t)),
                }
            }
            let mut out = free;
            for (_, xs, coeffs, original) in groups {
                if coeffs.len() == 1 {
                    out.push(original);
                    continue;
                }
                let coeff = auto_add(coeffs, b)?;
                let mut factors = vec![coeff];
                factors.extend(xs);
                out.push(auto_mul(factors, b)?);
            }
            Ok(Expr::add(out))
        }
        Expr::Mul(v) => Ok(Expr::Mul(v.iter().map(|t| collect(t, b)).collect::<Res<Vec<_>>>()?)),
        Expr::Pow(base, exp) => Ok(Expr::pow(collect(base, b)?, (**exp).clone())),
        leaf => Ok(leaf.clone()),
    }
}

/// Randomly permute the operands of every sum and product.
pub fn shuffle<R: Rng + ?Sized>(e: &mut Expr, rng: &mut R) {
    match e {
        Expr::Add(v) | Expr::Mul(v) => {
            v.shuffle(rng);
            v.iter_mut().for_each(|t| shuffle(t, rng));
        }
        Expr::Pow(base, exp) => {
            shuffle(base, rng);
            shuffle(exp, rng);
        }
        _ => {}
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Equation {
    pub lhs: Expr,
    pub rhs: Expr,
}

impl Equation {
    pub fn new(lhs: Expr, rhs: Expr) -> Self {
        Equation { lhs, rhs }
    }

    pub fn parse(text: &str) -> Result<Equation, ParseError> {
        parse_equation(text).map(|(lhs, rhs)| Equation { lhs, rhs })
    }

    pub fn swapped(&self) -> Equation {
        Equation { lhs: self.rhs.clone(), rhs: self.lhs.clone() }
    }

    pub fn normalized<R: Rng + ?Sized>(&self, opts: &SimplifyOptions, rng: &mut R) -> Res<Equation> {
        Ok(Equation { lhs: normalize(&self.lhs, opts, rng)?, rhs: normalize(&self.rhs, opts, rng)? })
    }

    /// `lhs - rhs` as an expression.
    pub fn difference(&self) -> Expr {
        Expr::Add(vec![self.lhs.clone(), Expr::Mul(vec![Expr::int(-1), self.rhs.clone()])])
    }

    pub fn contains(&self, sym: Symbol) -> bool {
        self.lhs.contains(sym) || self.rhs.contains(sym)
    }
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.lhs, self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolvedStatus {
    Solved(Expr),
    UnknownEliminated,
    Unsolved,
}

pub fn classify(eq: &Equation) -> SolvedStatus {
    let (l, r) = (eq.lhs.contains_x(), eq.rhs.contains_x());
    if !l && !r {
        return SolvedStatus::UnknownEliminated;
    }
    if eq.lhs == Expr::Unknown && !r {
        return SolvedStatus::Solved(eq.rhs.clone());
    }
    if eq.rhs == Expr::Unknown && !l {
        return SolvedStatus::Solved(eq.lhs.clone());
    }
    SolvedStatus::Unsolved
}

/// Both sides are polynomials of degree at most one in `var`; coefficients
/// may be rational in the other symbol.
pub fn is_linear_in(eq: &Equation, var: Symbol) -> bool {
    let side = |e: &Expr| {
        let mut b = Budget::new(DEFAULT_BUDGET * 10);
        match RatFunc::from_expr(e, &mut b) {
            Ok(r) => match var {
                Symbol::X => r.den.deg_x() == 0 && r.num.deg_x() <= 1,
                Symbol::C => r.den.deg_c() == 0 && r.num.deg_c() <= 1,
            },
            Err(_) => false,
        }
    };
    side(&eq.lhs) && side(&eq.rhs)
}

/// Exact check that `x = value` satisfies `eq`, generically in `c`.
/// `None` when the check itself does not finish within `budget`.
pub fn satisfies(eq: &Equation, value: &Expr, budget: usize) -> Option<bool> {
    let diff = Equation::new(eq.lhs.substitute_x(value), eq.rhs.substitute_x(value)).difference();
    match RatFunc::from_expr(&diff, &mut Budget::new(budget)) {
        Ok(r) => Some(r.is_zero()),
        Err(RatError::Pole) => Some(false),
        Err(RatError::NotRational) => Some(false),
        Err(RatError::Budget(_)) => None,
    }
}

/// True when `lhs - rhs` does not depend on `x` as a rational function.
pub fn difference_is_x_free(eq: &Equation, budget: usize) -> Option<bool> {
    match RatFunc::from_expr(&eq.difference(), &mut Budget::new(budget)) {
        Ok(r) => Some(r.num.deg_x() == 0 && r.den.deg_x() == 0),
        Err(RatError::Budget(_)) => None,
        Err(_) => Some(false),
    }
}

/// Numeric magnitude check used for bad-state detection: every literal has
/// both parts within `[-cap, cap]`.
pub fn literals_within(e: &Expr, cap: i64) -> bool {
    match e {
        Expr::Num(n) => n.within(cap),
        Expr::Add(v) | Expr::Mul(v) => v.iter().all(|t| literals_within(t, cap)),
        Expr::Pow(base, exp) => literals_within(base, cap) && literals_within(exp, cap),
        _ => true,
    }
}

/// Integer exponent value of a literal, if it is a real integer that fits.
pub fn exponent_value(e: &Expr) -> Option<i64> {
    integer_of(e).and_then(|n| n.re().to_integer().to_i64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(s: &str) -> Expr {
        parse_expression(s).unwrap()
    }

    fn norm(s: &str, symbolic: bool) -> Expr {
        let opts = SimplifyOptions::for_config(symbolic, false).without_shuffle();
        normalize(&p(s), &opts, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn collects_in_x() {
        let out = norm("3*x + 2*c*x - 1", true);
        assert!(out.equiv(&p("(3 + 2*c)*x - 1")), "{out}");
    }

    #[test]
    fn groups_numbers() {
        let out = norm("1 + x + 3/2 + 2*c", true);
        assert!(out.equiv(&p("5/2 + x + 2*c")), "{out}");
        assert_eq!(norm("1 + x + 3/2", false).to_string(), "5/2 + x");
    }

    #[test]
    fn cancels_negated_factor() {
        assert_eq!(norm("(-1*(2*x + 1))*(2*x + 1)^-1", true), Expr::int(-1));
        // Without cancellation the negation distributes first and the residue stays.
        assert!(norm("(-1*(2*x + 1))*(2*x + 1)^-1", false).contains_x());
        assert_eq!(norm("(x + c)*(x + c)^-1", true), Expr::int(1));
        assert!(norm("(x*c + c)*(c*x - 2*c)^-1", true).equiv(&p("(1 + x)*(-2 + x)^-1")));
    }

    #[test]
    fn auto_canonicalization() {
        assert_eq!(norm("2*(x + 1)", false).to_string(), "2 + 2*x");
        assert_eq!(norm("x*x^-1", false), Expr::int(1));
        assert_eq!(norm("3*x*2", false).to_string(), "6*x");
        assert_eq!(norm("x + x", false).to_string(), "2*x");
        assert_eq!(norm("(2*x)^-1", false).to_string(), "1/2*x^-1");
        assert_eq!(norm("(x^2)^3", false).to_string(), "x^6");
        assert_eq!(norm("0*x + 4", false).to_string(), "4");
        assert_eq!(norm("(x + 1)*(x + 2)", false).to_string(), "(1 + x)*(2 + x)");
    }

    #[test]
    fn expansion_in_complex_configs() {
        let opts = SimplifyOptions::for_config(false, true).without_shuffle();
        let out = normalize(&p("(x + I)*(x - I)"), &opts, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(out.equiv(&p("1 + x^2")), "{out}");
    }

    #[test]
    fn budget_and_poles() {
        let mut opts = SimplifyOptions::for_config(true, false).without_shuffle();
        opts.budget = 30;
        let r = normalize(&p("(x + c + 1)^8"), &opts, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(r, Err(NormalizeError::BudgetExceeded));
        let big = SimplifyOptions::for_config(false, false);
        assert_eq!(
            normalize(&Expr::pow(Expr::int(0), Expr::int(-1)), &big, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(NormalizeError::Undefined)
        );
    }

    #[test]
    fn classification() {
        let eq = Equation::parse("x = 2 - c").unwrap();
        assert_eq!(classify(&eq), SolvedStatus::Solved(p("2 - c")));
        assert_eq!(classify(&eq.swapped()), SolvedStatus::Solved(p("2 - c")));
        assert_eq!(classify(&Equation::parse("x = 3*x + 1").unwrap()), SolvedStatus::Unsolved);
        assert_eq!(classify(&Equation::parse("0 = 0").unwrap()), SolvedStatus::UnknownEliminated);
    }

    #[test]
    fn linearity() {
        let lin = |s: &str| is_linear_in(&Equation::parse(s).unwrap(), Symbol::X);
        assert!(lin("3 + 2*x = 5 + 7*x"));
        assert!(!lin("x*x = 1"));
        assert!(lin("(1 + c)*x = c"));
        assert!(lin("x*c^-1 = 2"));
        assert!(!lin("x^-1 = 2"));
    }

    #[test]
    fn exact_solution_check() {
        let eq = Equation::parse("-1/5 + 3/4*x = 5/8 + 2*x").unwrap();
        assert_eq!(satisfies(&eq, &p("-33/50"), 100_000), Some(true));
        assert_eq!(satisfies(&eq, &p("-9"), 100_000), Some(false));
        let eq = Equation::parse("(1 + c)*x = c").unwrap();
        assert_eq!(satisfies(&eq, &p("c*(1 + c)^-1"), 100_000), Some(true));
        assert_eq!(difference_is_x_free(&Equation::parse("2*x + 1 = 2*x + 3").unwrap(), 100_000), Some(true));
    }
}
