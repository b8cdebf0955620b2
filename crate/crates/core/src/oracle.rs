//! Scripted policy for linear equations built from four-step macros: copy a
//! term, push -1, combine, apply to both sides.
//!
//! Goals in order: move the unknown's term off the right side, move the
//! constant off the left side, divide by the coefficient.

use crate::env::{Action, Env, EnvState};
use crate::expr::{combine_terms, enumerate_units, subterm_at, Expr};
use crate::number::{BinOp, Number};
use crate::simplify::{normalize, Equation};
use crate::trainer::Policy;

#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePolicy;

impl Policy for OraclePolicy {
    fn choose(&self, env: &Env, st: &EnvState, mask: &[bool]) -> usize {
        plan(env, st)
            .map(|a| env.cfg.index_of(a))
            .filter(|&i| mask[i])
            .unwrap_or_else(|| mask.iter().position(|&m| m).expect("a valid action"))
    }
}

fn terms(side: &Expr) -> &[Expr] {
    match side {
        Expr::Add(ts) => ts,
        other => std::slice::from_ref(other),
    }
}

/// `(op, t)`: the next equation operation is `op` with `-t` for addition or
/// `t^-1` for multiplication.
fn goal(eq: &Equation) -> Option<(BinOp, Expr)> {
    if let Some(t) = terms(&eq.rhs).iter().find(|t| t.contains_x()) {
        return Some((BinOp::Add, t.clone()));
    }
    if !eq.lhs.contains_x() {
        return None;
    }
    if matches!(eq.lhs, Expr::Add(_)) {
        return terms(&eq.lhs).iter().find(|t| !t.contains_x()).map(|t| (BinOp::Add, t.clone()));
    }
    match &eq.lhs {
        Expr::Mul(fs) => {
            let free: Vec<&Expr> = fs.iter().filter(|f| !f.contains_x()).collect();
            (free.len() == 1).then(|| (BinOp::Mul, free[0].clone()))
        }
        _ => None,
    }
}

/// Next action under the macro script, if the script applies.
pub fn plan(env: &Env, st: &EnvState) -> Option<Action> {
    let minus_one = Number::int(-1);
    let neg = env.cfg.constants.iter().position(|c| *c == minus_one)?;
    let (op, t) = goal(&st.equation)?;
    let combine = if op == BinOp::Add { BinOp::Mul } else { BinOp::Pow };
    let opts = env.cfg.simplify_options().without_shuffle();
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let g = normalize(&combine_terms(&t, &Expr::Num(minus_one.clone()), combine).ok()?, &opts, &mut rng).ok()?;
    let top = st.stack.first();
    let second = st.stack.get(1);
    if top.and_then(Expr::as_num) == Some(&minus_one) && second.is_some_and(|e| e.equiv(&t)) {
        return Some(Action::StackOp(combine));
    }
    if top.is_some_and(|e| e.equiv(&g)) {
        return Some(Action::EqOp(op));
    }
    if top.is_some_and(|e| e.equiv(&t)) {
        return Some(Action::PushConst(neg));
    }
    copy_of(&st.equation, &t)
}

fn copy_of(eq: &Equation, t: &Expr) -> Option<Action> {
    for (side, lhs) in [(&eq.lhs, true), (&eq.rhs, false)] {
        for n in 1..=enumerate_units(side).len() {
            if subterm_at(side, n).is_ok_and(|s| s.equiv(t)) {
                return Some(if lhs { Action::CopyLhs(n) } else { Action::CopyRhs(n) });
            }
        }
    }
    None
}
