//! Recursive-descent parser for infix expressions and equations.
//!
//! ```text
//! equation := expr '=' expr
//! expr     := term (('+' | '-') term)*
//! term     := unary (('*' | '/') unary)*
//! unary    := '-' unary | power
//! power    := primary ('^' exponent)?
//! exponent := '-' exponent | atom ('^' exponent)?
//! primary  := INT ('/' INT)? | atom
//! atom     := INT | 'x' | 'c' | 'I' | '(' expr ')'
//! ```
//!
//! `a - b` becomes `a + (-1)*b` with the sign folded into a leading literal,
//! `a / b` becomes `a * b^-1` (or the reciprocal literal). Sums, products and
//! powers whose operands are all literals are folded into a single number.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use thiserror::Error;

use super::Expr;
use crate::number::{ArithError, Number};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("arithmetic error at position {pos}: {source}")]
    Arith { pos: usize, source: ArithError },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match self {
            ParseError::Syntax { pos, .. } | ParseError::Arith { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(BigInt),
    X,
    C,
    I,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Eq,
}

/// Tokens with their 1-based character positions.
fn lex(text: &str) -> Result<(Vec<(Tok, usize)>, usize), ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        let pos = i + 1;
        if ch.is_whitespace() {
            i += 1;
            continue;
        }
        if ch.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let digits: String = chars[start..i].iter().collect();
            toks.push((Tok::Int(digits.parse().expect("digit run")), pos));
            continue;
        }
        let tok = match ch {
            'x' => Tok::X,
            'c' => Tok::C,
            'I' => Tok::I,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '=' => Tok::Eq,
            other => {
                return Err(ParseError::Syntax { pos, msg: format!("unexpected character '{other}'") });
            }
        };
        toks.push((tok, pos));
        i += 1;
    }
    Ok((toks, chars.len() + 1))
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    end_pos: usize,
}

/// Parsed node plus whether it came from an explicit parenthesis group,
/// which blocks flattening into an enclosing sum or product.
type Node = (Expr, bool);

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.0)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end_pos, |t| t.1)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|t| t.0.clone());
        self.at += 1;
        t
    }

    fn err<T>(&self, msg: &str) -> Result<T, ParseError> {
        let found = match self.peek() {
            None => "end of input".to_string(),
            Some(t) => format!("{t:?}"),
        };
        Err(ParseError::Syntax { pos: self.pos(), msg: format!("{msg}, found {found}") })
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let first = self.term()?;
        if !matches!(self.peek(), Some(Tok::Plus | Tok::Minus)) {
            return Ok(first);
        }
        let mut terms = Vec::new();
        push_flat(&mut terms, first, true);
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    let t = self.term()?;
                    push_flat(&mut terms, t, true);
                }
                Some(Tok::Minus) => {
                    self.bump();
                    let t = self.term()?;
                    terms.push(negate(t));
                }
                _ => break,
            }
        }
        let pos = self.pos();
        Ok((fold(Expr::Add(terms), pos)?, false))
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let first = self.unary()?;
        if !matches!(self.peek(), Some(Tok::Star | Tok::Slash)) {
            return Ok(first);
        }
        let mut factors = Vec::new();
        push_flat(&mut factors, first, false);
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    let f = self.unary()?;
                    push_flat(&mut factors, f, false);
                }
                Some(Tok::Slash) => {
                    self.bump();
                    let pos = self.pos();
                    let (f, _) = self.unary()?;
                    factors.push(invert(f, pos)?);
                }
                _ => break,
            }
        }
        let pos = self.pos();
        Ok((fold(Expr::Mul(factors), pos)?, false))
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            let inner = self.unary()?;
            return Ok((negate(inner), false));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary(true)?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.bump();
            let pos = self.pos();
            let exp = self.exponent()?;
            return Ok((fold(Expr::pow(base.0, exp), pos)?, false));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<Expr, ParseError> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            let inner = self.exponent()?;
            return Ok(negate((inner, false)));
        }
        let (atom, _) = self.primary(false)?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.bump();
            let pos = self.pos();
            let exp = self.exponent()?;
            return fold(Expr::pow(atom, exp), pos);
        }
        Ok(atom)
    }

    fn primary(&mut self, allow_fraction: bool) -> Result<Node, ParseError> {
        match self.peek() {
            Some(Tok::Int(_)) => {
                let Some(Tok::Int(p)) = self.bump() else { unreachable!() };
                let is_fraction = allow_fraction
                    && matches!(self.peek(), Some(Tok::Slash))
                    && matches!(self.toks.get(self.at + 1), Some((Tok::Int(_), _)));
                if is_fraction {
                    self.bump();
                    let qpos = self.pos();
                    let Some(Tok::Int(q)) = self.bump() else { unreachable!() };
                    if q.is_zero() {
                        return Err(ParseError::Arith { pos: qpos, source: ArithError::DivisionByZero });
                    }
                    return Ok((Expr::Num(Number::real(BigRational::new(p, q))), false));
                }
                Ok((Expr::Num(Number::real(BigRational::from_integer(p))), false))
            }
            Some(Tok::X) => {
                self.bump();
                Ok((Expr::Unknown, false))
            }
            Some(Tok::C) => {
                self.bump();
                Ok((Expr::SymConst, false))
            }
            Some(Tok::I) => {
                self.bump();
                Ok((Expr::Num(Number::i()), false))
            }
            Some(Tok::LParen) => {
                self.bump();
                let (inner, _) = self.expr()?;
                if !matches!(self.peek(), Some(Tok::RParen)) {
                    return self.err("expected ')'");
                }
                self.bump();
                Ok((inner, true))
            }
            _ => self.err("expected a number, 'x', 'c', 'I' or '('"),
        }
    }
}

fn push_flat(list: &mut Vec<Expr>, (e, grouped): Node, is_sum: bool) {
    match e {
        Expr::Add(v) if is_sum && !grouped => list.extend(v),
        Expr::Mul(v) if !is_sum && !grouped => list.extend(v),
        other => list.push(other),
    }
}

fn negate((e, grouped): Node) -> Expr {
    match e {
        Expr::Num(n) => Expr::Num(n.neg()),
        Expr::Mul(mut v) if !grouped => {
            if let Expr::Num(n) = &v[0] {
                v[0] = Expr::Num(n.neg());
            } else {
                v.insert(0, Expr::int(-1));
            }
            Expr::Mul(v)
        }
        other => Expr::Mul(vec![Expr::int(-1), other]),
    }
}

fn invert(e: Expr, pos: usize) -> Result<Expr, ParseError> {
    match e {
        Expr::Num(n) => n.recip().map(Expr::Num).map_err(|source| ParseError::Arith { pos, source }),
        other => Ok(Expr::pow(other, Expr::int(-1))),
    }
}

/// Collapse a node whose operands are all literals.
fn fold(e: Expr, pos: usize) -> Result<Expr, ParseError> {
    let arith = |source| ParseError::Arith { pos, source };
    match e {
        Expr::Add(v) if v.iter().all(Expr::is_num) => {
            Ok(Expr::Num(v.iter().fold(Number::zero(), |acc, t| acc.add(t.as_num().unwrap()))))
        }
        Expr::Mul(v) if v.iter().all(Expr::is_num) => {
            Ok(Expr::Num(v.iter().fold(Number::one(), |acc, t| acc.mul(t.as_num().unwrap()))))
        }
        Expr::Pow(b, x) => match (b.as_num(), x.as_num()) {
            (Some(bn), Some(xn)) if xn.is_integer() => bn.pow(xn.re().numer()).map(Expr::Num).map_err(arith),
            _ => Ok(Expr::Pow(b, x)),
        },
        other => Ok(other),
    }
}

/// Parse one infix expression.
pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    let (toks, end_pos) = lex(text)?;
    let mut p = Parser { toks, at: 0, end_pos };
    let (e, _) = p.expr()?;
    if p.peek().is_some() {
        return p.err("unexpected trailing input");
    }
    Ok(e)
}

/// Parse `LHS = RHS`.
pub fn parse_equation(text: &str) -> Result<(Expr, Expr), ParseError> {
    let (toks, end_pos) = lex(text)?;
    let mut p = Parser { toks, at: 0, end_pos };
    let (lhs, _) = p.expr()?;
    if !matches!(p.peek(), Some(Tok::Eq)) {
        return p.err("expected '='");
    }
    p.bump();
    let (rhs, _) = p.expr()?;
    if p.peek().is_some() {
        return p.err("unexpected trailing input");
    }
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_alone() {
        assert_eq!(parse_expression("x").unwrap(), Expr::Unknown);
    }

    #[test]
    fn figure_instance_lhs() {
        let e = parse_expression("-1/5 + 3/4*x").unwrap();
        assert_eq!(
            e,
            Expr::Add(vec![
                Expr::Num(Number::ratio(-1, 5)),
                Expr::Mul(vec![Expr::Num(Number::ratio(3, 4)), Expr::Unknown]),
            ])
        );
    }

    #[test]
    fn unterminated_group_reports_position() {
        let err = parse_expression("2*x + (").unwrap_err();
        assert_eq!(err.position(), 8);
        assert!(matches!(err, ParseError::Syntax { .. }));
    }

    #[test]
    fn sugar_for_minus_and_divide() {
        assert_eq!(parse_expression("x - c").unwrap(), parse_expression("x + -1*c").unwrap());
        assert_eq!(parse_expression("x/4").unwrap(), Expr::Mul(vec![Expr::x(), Expr::Num(Number::ratio(1, 4))]));
        assert_eq!(parse_expression("1/x").unwrap(), Expr::Mul(vec![Expr::int(1), Expr::pow(Expr::x(), Expr::int(-1))]));
        assert_eq!(parse_expression("-x*c").unwrap(), Expr::Mul(vec![Expr::int(-1), Expr::x(), Expr::c()]));
        assert_eq!(parse_expression("x^-1").unwrap(), Expr::pow(Expr::x(), Expr::int(-1)));
        assert_eq!(parse_expression("-2^2").unwrap(), Expr::int(-4));
        assert_eq!(parse_expression("x^2/3").unwrap(), Expr::Mul(vec![Expr::pow(Expr::x(), Expr::int(2)), Expr::Num(Number::ratio(1, 3))]));
    }

    #[test]
    fn literal_folding() {
        assert_eq!(parse_expression("(2 - I)").unwrap(), Expr::Num(Number::int(2).add(&Number::i().neg())));
        assert_eq!(parse_expression("(2*I)*x").unwrap(), Expr::Mul(vec![Expr::Num(Number::int(2).mul(&Number::i())), Expr::x()]));
        assert_eq!(parse_expression("1/2/3").unwrap(), Expr::Num(Number::ratio(1, 6)));
    }

    #[test]
    fn groups_are_not_flattened() {
        let e = parse_expression("(x*c)*2").unwrap();
        assert_eq!(e, Expr::Mul(vec![Expr::Mul(vec![Expr::x(), Expr::c()]), Expr::int(2)]));
        let e = parse_expression("x + (c + 1)").unwrap();
        assert_eq!(e, Expr::Add(vec![Expr::x(), Expr::Add(vec![Expr::c(), Expr::int(1)])]));
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_expression("1/0"), Err(ParseError::Arith { .. })));
        assert!(matches!(parse_expression("x $ 2"), Err(ParseError::Syntax { pos: 3, .. })));
        assert!(parse_expression("").is_err());
        assert!(parse_expression("x)").is_err());
        assert!(parse_equation("x + 1").is_err());
        let (l, r) = parse_equation(" x = 2 - c ").unwrap();
        assert_eq!(l, Expr::x());
        assert_eq!(r, parse_expression("2 - c").unwrap());
    }
}
