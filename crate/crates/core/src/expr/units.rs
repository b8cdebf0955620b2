use super::Expr;
use crate::number::{BinOp, Number};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UnitKind {
    Op(BinOp),
    LParen,
    RParen,
    Unknown,
    SymConst,
    Number(Number),
}

/// One elementary unit of the infix form of a term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unit {
    pub kind: UnitKind,
    /// Child-index path from the root to the subterm this unit stands for.
    /// Operators anchor the node they belong to, parentheses the enclosed term.
    pub anchor: Vec<usize>,
}

/// Infix-order units of `e`. Operand order is the stored order.
pub fn enumerate_units(e: &Expr) -> Vec<Unit> {
    let mut out = Vec::new();
    let mut path = Vec::new();
    emit(e, &mut path, &mut out);
    out
}

fn push(out: &mut Vec<Unit>, kind: UnitKind, path: &[usize]) {
    out.push(Unit { kind, anchor: path.to_vec() });
}

fn emit(e: &Expr, path: &mut Vec<usize>, out: &mut Vec<Unit>) {
    match e {
        Expr::Num(n) => push(out, UnitKind::Number(n.clone()), path),
        Expr::Unknown => push(out, UnitKind::Unknown, path),
        Expr::SymConst => push(out, UnitKind::SymConst, path),
        Expr::Add(v) | Expr::Mul(v) => {
            let op = if matches!(e, Expr::Add(_)) { BinOp::Add } else { BinOp::Mul };
            for (i, child) in v.iter().enumerate() {
                if i > 0 {
                    push(out, UnitKind::Op(op), path);
                }
                let paren = match op {
                    BinOp::Add => matches!(child, Expr::Add(_)),
                    _ => matches!(child, Expr::Add(_) | Expr::Mul(_)),
                };
                emit_child(child, i, paren, path, out);
            }
        }
        Expr::Pow(b, x) => {
            emit_child(b, 0, base_needs_paren(b), path, out);
            push(out, UnitKind::Op(BinOp::Pow), path);
            emit_child(x, 1, exponent_needs_paren(x), path, out);
        }
    }
}

fn emit_child(child: &Expr, index: usize, paren: bool, path: &mut Vec<usize>, out: &mut Vec<Unit>) {
    path.push(index);
    if paren {
        push(out, UnitKind::LParen, path);
    }
    emit(child, path, out);
    if paren {
        push(out, UnitKind::RParen, path);
    }
    path.pop();
}

fn base_needs_paren(b: &Expr) -> bool {
    match b {
        Expr::Add(_) | Expr::Mul(_) | Expr::Pow(..) => true,
        Expr::Num(n) => n.to_string().starts_with('-') || (n.is_real() && !n.is_integer()),
        _ => false,
    }
}

fn exponent_needs_paren(x: &Expr) -> bool {
    match x {
        Expr::Add(_) | Expr::Mul(_) | Expr::Pow(..) => true,
        Expr::Num(n) => n.is_real() && !n.is_integer(),
        _ => false,
    }
}

/// Join units into display text. A `+` followed by a negative literal is
/// written as a subtraction.
pub fn render_units(units: &[Unit]) -> String {
    let mut s = String::new();
    let mut strip_minus = false;
    for (i, u) in units.iter().enumerate() {
        match &u.kind {
            UnitKind::Op(BinOp::Add) => {
                let negative_next = matches!(
                    units.get(i + 1).map(|n| &n.kind),
                    Some(UnitKind::Number(n)) if n.to_string().starts_with('-')
                );
                if negative_next {
                    s.push_str(" - ");
                    strip_minus = true;
                } else {
                    s.push_str(" + ");
                }
            }
            UnitKind::Op(op) => s.push(op.symbol()),
            UnitKind::LParen => s.push('('),
            UnitKind::RParen => s.push(')'),
            UnitKind::Unknown => s.push('x'),
            UnitKind::SymConst => s.push('c'),
            UnitKind::Number(n) => {
                let text = n.to_string();
                if strip_minus {
                    s.push_str(&text[1..]);
                    strip_minus = false;
                } else {
                    s.push_str(&text);
                }
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unit index {index} out of range 1..={len}")]
pub struct UnitIndexError {
    pub index: usize,
    pub len: usize,
}

fn node_at<'a>(e: &'a Expr, path: &[usize]) -> &'a Expr {
    path.iter().fold(e, |node, &i| match node {
        Expr::Add(v) | Expr::Mul(v) => &v[i],
        Expr::Pow(b, x) => {
            if i == 0 {
                b
            } else {
                x
            }
        }
        _ => unreachable!("unit anchor descends into a leaf"),
    })
}

/// The subterm selected by the 1-based unit index `n`.
pub fn subterm_at(e: &Expr, n: usize) -> Result<Expr, UnitIndexError> {
    let units = enumerate_units(e);
    if n == 0 || n > units.len() {
        return Err(UnitIndexError { index: n, len: units.len() });
    }
    Ok(node_at(e, &units[n - 1].anchor).clone())
}
