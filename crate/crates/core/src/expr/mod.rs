//! Symbolic expression trees over exact numbers, the unknown `x` and the
//! symbolic constant `c`.

mod parse;
mod units;

use std::cmp::Ordering;
use std::fmt;

pub use parse::{parse_equation, parse_expression, ParseError};
pub use units::{enumerate_units, render_units, subterm_at, Unit, UnitKind};

use crate::number::{ArithError, Number};

/// Symbol of a leaf variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    /// The unknown to solve for.
    X,
    /// The symbolic constant.
    C,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Num(Number),
    Unknown,
    SymConst,
    /// n-ary sum, at least two operands.
    Add(Vec<Expr>),
    /// n-ary product, at least two operands.
    Mul(Vec<Expr>),
    /// `base ^ exponent`.
    Pow(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn num(n: Number) -> Expr {
        Expr::Num(n)
    }

    pub fn int(n: i64) -> Expr {
        Expr::Num(Number::int(n))
    }

    pub fn x() -> Expr {
        Expr::Unknown
    }

    pub fn c() -> Expr {
        Expr::SymConst
    }

    /// Sum node; collapses to the operand (or 0) when fewer than two are given.
    pub fn add(mut terms: Vec<Expr>) -> Expr {
        match terms.len() {
            0 => Expr::int(0),
            1 => terms.pop().unwrap(),
            _ => Expr::Add(terms),
        }
    }

    /// Product node; collapses to the operand (or 1) when fewer than two are given.
    pub fn mul(mut factors: Vec<Expr>) -> Expr {
        match factors.len() {
            0 => Expr::int(1),
            1 => factors.pop().unwrap(),
            _ => Expr::Mul(factors),
        }
    }

    pub fn pow(base: Expr, exp: Expr) -> Expr {
        Expr::Pow(Box::new(base), Box::new(exp))
    }

    pub fn as_num(&self) -> Option<&Number> {
        match self {
            Expr::Num(n) => Some(n),
            _ => None,
        }
    }

    pub fn is_num(&self) -> bool {
        matches!(self, Expr::Num(_))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(n) if n.is_zero())
    }

    pub fn children(&self) -> &[Expr] {
        match self {
            Expr::Add(v) | Expr::Mul(v) => v,
            _ => &[],
        }
    }

    pub fn contains(&self, sym: Symbol) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Unknown => sym == Symbol::X,
            Expr::SymConst => sym == Symbol::C,
            Expr::Add(v) | Expr::Mul(v) => v.iter().any(|e| e.contains(sym)),
            Expr::Pow(b, e) => b.contains(sym) || e.contains(sym),
        }
    }

    pub fn contains_x(&self) -> bool {
        self.contains(Symbol::X)
    }

    /// True if the expression involves `x` or `c`.
    pub fn has_symbols(&self) -> bool {
        self.contains(Symbol::X) || self.contains(Symbol::C)
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Add(v) | Expr::Mul(v) => 1 + v.iter().map(Expr::node_count).sum::<usize>(),
            Expr::Pow(b, e) => 1 + b.node_count() + e.node_count(),
            _ => 1,
        }
    }

    fn kind_rank(&self) -> u8 {
        match self {
            Expr::Num(_) => 0,
            Expr::Unknown => 1,
            Expr::SymConst => 2,
            Expr::Add(_) => 3,
            Expr::Mul(_) => 4,
            Expr::Pow(..) => 5,
        }
    }

    /// Copy with every commutative operand list sorted by [`Expr::canonical_cmp`].
    pub fn canonical(&self) -> Expr {
        match self {
            Expr::Add(v) | Expr::Mul(v) => {
                let mut kids: Vec<Expr> = v.iter().map(Expr::canonical).collect();
                kids.sort_by(Expr::canonical_cmp);
                if matches!(self, Expr::Add(_)) {
                    Expr::Add(kids)
                } else {
                    Expr::Mul(kids)
                }
            }
            Expr::Pow(b, e) => Expr::pow(b.canonical(), e.canonical()),
            other => other.clone(),
        }
    }

    /// Total order: node kind, then payload, then children in stored order.
    /// Apply to [`Expr::canonical`] forms for an order-insensitive comparison.
    pub fn canonical_cmp(&self, other: &Expr) -> Ordering {
        match self.kind_rank().cmp(&other.kind_rank()) {
            Ordering::Equal => {}
            o => return o,
        }
        match (self, other) {
            (Expr::Num(a), Expr::Num(b)) => a.cmp(b),
            (Expr::Add(a), Expr::Add(b)) | (Expr::Mul(a), Expr::Mul(b)) => {
                for (x, y) in a.iter().zip(b) {
                    match x.canonical_cmp(y) {
                        Ordering::Equal => {}
                        o => return o,
                    }
                }
                a.len().cmp(&b.len())
            }
            (Expr::Pow(b1, e1), Expr::Pow(b2, e2)) => b1.canonical_cmp(b2).then_with(|| e1.canonical_cmp(e2)),
            _ => Ordering::Equal,
        }
    }

    /// Equality up to reordering of commutative operands.
    pub fn equiv(&self, other: &Expr) -> bool {
        self.canonical() == other.canonical()
    }

    /// Exact evaluation at a point. `None` for poles or non-integer exponents.
    pub fn eval(&self, x: &Number, c: &Number) -> Option<Number> {
        match self {
            Expr::Num(n) => Some(n.clone()),
            Expr::Unknown => Some(x.clone()),
            Expr::SymConst => Some(c.clone()),
            Expr::Add(v) => v.iter().try_fold(Number::zero(), |acc, e| Some(acc.add(&e.eval(x, c)?))),
            Expr::Mul(v) => v.iter().try_fold(Number::one(), |acc, e| Some(acc.mul(&e.eval(x, c)?))),
            Expr::Pow(b, e) => {
                let base = b.eval(x, c)?;
                let exp = e.eval(x, c)?;
                if !exp.is_integer() {
                    return None;
                }
                base.pow(exp.re().numer()).ok()
            }
        }
    }

    /// Replace every `x` by `value`.
    pub fn substitute_x(&self, value: &Expr) -> Expr {
        match self {
            Expr::Unknown => value.clone(),
            Expr::Add(v) => Expr::Add(v.iter().map(|e| e.substitute_x(value)).collect()),
            Expr::Mul(v) => Expr::Mul(v.iter().map(|e| e.substitute_x(value)).collect()),
            Expr::Pow(b, e) => Expr::pow(b.substitute_x(value), e.substitute_x(value)),
            other => other.clone(),
        }
    }
}

/// Arithmetic on a pair of stack terms, before simplification.
pub fn combine_terms(a: &Expr, b: &Expr, op: crate::number::BinOp) -> Result<Expr, ArithError> {
    use crate::number::BinOp;
    if let (Some(x), Some(y)) = (a.as_num(), b.as_num()) {
        return crate::number::combine_numbers(x, y, op).map(Expr::Num);
    }
    Ok(match op {
        BinOp::Add => Expr::Add(vec![a.clone(), b.clone()]),
        BinOp::Mul => Expr::Mul(vec![a.clone(), b.clone()]),
        BinOp::Pow => Expr::pow(a.clone(), b.clone()),
    })
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_infix(self))
    }
}

/// Canonical infix text, e.g. `-1/5 + 3/4*x`.
pub fn render_infix(e: &Expr) -> String {
    render_units(&enumerate_units(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapsing_builders() {
        assert_eq!(Expr::add(vec![]), Expr::int(0));
        assert_eq!(Expr::mul(vec![Expr::x()]), Expr::x());
        assert!(matches!(Expr::mul(vec![Expr::x(), Expr::c()]), Expr::Mul(v) if v.len() == 2));
    }

    #[test]
    fn order_insensitive_equivalence() {
        let a = Expr::Add(vec![Expr::x(), Expr::int(1), Expr::c()]);
        let b = Expr::Add(vec![Expr::c(), Expr::x(), Expr::int(1)]);
        assert_ne!(a, b);
        assert!(a.equiv(&b));
        assert!(!a.equiv(&Expr::Mul(vec![Expr::x(), Expr::int(1), Expr::c()])));
    }

    #[test]
    fn exact_evaluation() {
        let e = parse_expression("3/4*x + c^-1").unwrap();
        let v = e.eval(&Number::int(2), &Number::int(4)).unwrap();
        assert_eq!(v, Number::ratio(7, 4));
        let pole = parse_expression("(x - 2)^-1").unwrap();
        assert!(pole.eval(&Number::int(2), &Number::zero()).is_none());
    }
}
