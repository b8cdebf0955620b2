//! The stack-calculator environment: state, actions, masking, transitions,
//! assumptions and rewards.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{combine_terms, enumerate_units, subterm_at, Expr, Symbol};
use crate::number::{BinOp, Number};
use crate::simplify::{
    classify, difference_is_x_free, exponent_value, is_linear_in, literals_within, normalize, satisfies,
    Equation, NormalizeError, SimplifyOptions, SolvedStatus, DEFAULT_BUDGET,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rewards {
    pub r_slv: f64,
    pub r_so: f64,
    pub p_st: f64,
    pub p_as: f64,
}

impl Default for Rewards {
    fn default() -> Self {
        Rewards { r_slv: 3.0, r_so: -0.25, p_st: 1.0, p_as: 0.25 }
    }
}

/// Who drives the episode. The generator never terminates on a solved form,
/// pays a per-step penalty and may submit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Solver,
    Generator { p_step: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    /// Stack capacity `S`.
    pub stack_size: usize,
    /// Maximum units per term `T`.
    pub max_units: usize,
    pub eq_ops: Vec<BinOp>,
    pub constants: Vec<Number>,
    pub symbolic: bool,
    pub complex: bool,
    pub t_max: usize,
    pub rewards: Rewards,
    pub simplify_budget: usize,
    pub shuffle: bool,
    /// Literal magnitude bound; larger values make the state bad.
    pub number_cap: i64,
    pub submit: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("invalid environment configuration: {0}")]
    Invalid(String),
    #[error("equation uses the symbolic constant but the configuration has none")]
    UnexpectedSymbol,
    #[error("equation has complex coefficients but the configuration is real")]
    UnexpectedComplex,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.stack_size == 0 || self.max_units == 0 || self.t_max == 0 {
            return bad("S, T and t_max must be positive");
        }
        if self.constants.is_empty() {
            return bad("at least one pushable constant is required");
        }
        if self.complex && !self.constants.contains(&Number::i()) {
            return bad("complex configurations must be able to push I");
        }
        if self.eq_ops.is_empty() {
            return bad("at least one equation operation is required");
        }
        Ok(())
    }

    pub fn simplify_options(&self) -> SimplifyOptions {
        let mut o = SimplifyOptions::for_config(self.symbolic, self.complex);
        o.budget = self.simplify_budget;
        o.shuffle = self.shuffle;
        o
    }

    /// `A = 2T + O_eq + C_num + O_st` (+1 with submit).
    pub fn num_actions(&self) -> usize {
        2 * self.max_units + self.eq_ops.len() + self.constants.len() + STACK_OPS.len() + usize::from(self.submit)
    }

    pub fn action(&self, index: usize) -> Action {
        let t = self.max_units;
        let mut i = index;
        if i < t {
            return Action::CopyLhs(i + 1);
        }
        i -= t;
        if i < t {
            return Action::CopyRhs(i + 1);
        }
        i -= t;
        if i < self.eq_ops.len() {
            return Action::EqOp(self.eq_ops[i]);
        }
        i -= self.eq_ops.len();
        if i < self.constants.len() {
            return Action::PushConst(i);
        }
        i -= self.constants.len();
        if i < STACK_OPS.len() {
            return Action::StackOp(STACK_OPS[i]);
        }
        assert!(self.submit && i == STACK_OPS.len(), "action index {index} out of range");
        Action::Submit
    }

    pub fn index_of(&self, a: Action) -> usize {
        let t = self.max_units;
        let eq = self.eq_ops.len();
        let nc = self.constants.len();
        match a {
            Action::CopyLhs(n) => n - 1,
            Action::CopyRhs(n) => t + n - 1,
            Action::EqOp(op) => 2 * t + self.eq_ops.iter().position(|&o| o == op).expect("configured op"),
            Action::PushConst(k) => 2 * t + eq + k,
            Action::StackOp(op) => 2 * t + eq + nc + STACK_OPS.iter().position(|&o| o == op).unwrap(),
            Action::Submit => 2 * t + eq + nc + STACK_OPS.len(),
        }
    }

    pub fn action_name(&self, a: Action) -> String {
        match a {
            Action::PushConst(k) => format!("PushConst {}", self.constants[k]),
            other => other.to_string(),
        }
    }
}

pub const STACK_OPS: [BinOp; 3] = [BinOp::Add, BinOp::Mul, BinOp::Pow];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    /// Copy the subterm at a 1-based unit position of the left side.
    CopyLhs(usize),
    CopyRhs(usize),
    EqOp(BinOp),
    /// Index into the configured constants.
    PushConst(usize),
    StackOp(BinOp),
    Submit,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::CopyLhs(n) => write!(f, "CopyLHS {n}"),
            Action::CopyRhs(n) => write!(f, "CopyRHS {n}"),
            Action::EqOp(op) => write!(f, "EqOp {}", op.symbol()),
            Action::PushConst(k) => write!(f, "PushConst #{k}"),
            Action::StackOp(op) => write!(f, "StackOp {}", op.symbol()),
            Action::Submit => f.write_str("Submit"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Solved,
    Eliminated,
    Timeout,
    Bad,
    StepLimit,
    Submitted,
}

impl Terminal {
    pub fn is_success(self) -> bool {
        matches!(self, Terminal::Solved | Terminal::Eliminated)
    }

    pub fn label(self) -> &'static str {
        match self {
            Terminal::Solved => "solved",
            Terminal::Eliminated => "eliminated",
            Terminal::Timeout => "timeout",
            Terminal::Bad => "bad",
            Terminal::StepLimit => "step_limit",
            Terminal::Submitted => "submitted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Normal,
    StackOverflow,
    Terminal(Terminal),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub terminal: bool,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    /// The task as given, before simplification.
    pub initial: Equation,
    pub equation: Equation,
    /// Index 0 is the top.
    pub stack: Vec<Expr>,
    /// Canonical forms of terms assumed nonzero, deduplicated, in insertion order.
    pub assumptions: Vec<Expr>,
    pub steps: usize,
    pub digit_streak: bool,
    pub terminal: Option<Terminal>,
    /// Set when a solved or eliminated form failed the exactness check.
    pub unsound_claim: bool,
}

impl EnvState {
    pub fn is_terminal(&self) -> bool {
        self.terminal.is_some()
    }

    pub fn solution(&self) -> Option<Expr> {
        match (self.terminal, classify(&self.equation)) {
            (Some(Terminal::Solved), SolvedStatus::Solved(v)) => Some(v),
            _ => None,
        }
    }

    fn add_assumption(&mut self, g: &Expr) {
        let key = g.canonical();
        if !self.assumptions.contains(&key) {
            self.assumptions.push(key);
        }
    }
}

/// `r_slv - (n_st / S) p_st - n_as p_as`.
pub fn final_reward(n_st: usize, n_as: usize, stack_size: usize, r: &Rewards) -> f64 {
    r.r_slv - (n_st as f64 / stack_size as f64) * r.p_st - n_as as f64 * r.p_as
}

fn has_complex(e: &Expr) -> bool {
    match e {
        Expr::Num(n) => !n.is_real(),
        Expr::Add(v) | Expr::Mul(v) => v.iter().any(has_complex),
        Expr::Pow(b, x) => has_complex(b) || has_complex(x),
        _ => false,
    }
}

fn unit_count(e: &Expr) -> usize {
    enumerate_units(e).len()
}

#[derive(Debug, Clone)]
pub struct Env {
    pub cfg: EnvConfig,
    pub mode: Mode,
    opts: SimplifyOptions,
}

impl Env {
    pub fn new(cfg: EnvConfig, mode: Mode) -> Result<Env, ConfigError> {
        cfg.validate()?;
        let opts = cfg.simplify_options();
        Ok(Env { cfg, mode, opts })
    }

    pub fn solver(cfg: EnvConfig) -> Result<Env, ConfigError> {
        Env::new(cfg, Mode::Solver)
    }

    pub fn num_actions(&self) -> usize {
        self.cfg.num_actions()
    }

    fn is_generator(&self) -> bool {
        matches!(self.mode, Mode::Generator { .. })
    }

    fn p_step(&self) -> f64 {
        match self.mode {
            Mode::Generator { p_step } => p_step,
            Mode::Solver => 0.0,
        }
    }

    pub fn reset<R: Rng + ?Sized>(&self, eq: &Equation, rng: &mut R) -> Result<EnvState, ConfigError> {
        if !self.cfg.symbolic && eq.contains(Symbol::C) {
            return Err(ConfigError::UnexpectedSymbol);
        }
        if !self.cfg.complex && (has_complex(&eq.lhs) || has_complex(&eq.rhs)) {
            return Err(ConfigError::UnexpectedComplex);
        }
        let mut st = EnvState {
            initial: eq.clone(),
            equation: eq.clone(),
            stack: Vec::new(),
            assumptions: Vec::new(),
            steps: 0,
            digit_streak: false,
            terminal: None,
            unsound_claim: false,
        };
        match eq.normalized(&self.opts, rng) {
            Ok(n) => st.equation = n,
            Err(e) => {
                st.terminal = Some(failure_terminal(e));
                return Ok(st);
            }
        }
        st.terminal = self.check_terminal(&mut st, false);
        Ok(st)
    }

    /// Validity mask over all action indices.
    pub fn valid_actions(&self, st: &EnvState) -> Vec<bool> {
        assert!(!st.is_terminal(), "valid_actions called on a terminal state");
        let cfg = &self.cfg;
        let t = cfg.max_units;
        let (nl, nr) = (unit_count(&st.equation.lhs), unit_count(&st.equation.rhs));
        let mut mask = Vec::with_capacity(cfg.num_actions());
        mask.extend((1..=t).map(|n| n <= nl));
        mask.extend((1..=t).map(|n| n <= nr));
        let top = st.stack.first();
        for &op in &cfg.eq_ops {
            mask.push(match (op, top) {
                (_, None) => false,
                (BinOp::Add, Some(_)) => true,
                (BinOp::Mul, Some(g)) => !g.is_zero(),
                (BinOp::Pow, Some(g)) => match exponent_value(g) {
                    Some(0) | None => false,
                    Some(k) => k > 0 || !(st.equation.lhs.is_zero() || st.equation.rhs.is_zero()),
                },
            });
        }
        mask.extend(std::iter::repeat_n(true, cfg.constants.len()));
        for op in STACK_OPS {
            mask.push(st.stack.len() >= 2 && (op != BinOp::Pow || pow_operands_ok(&st.stack[1], &st.stack[0])));
        }
        if cfg.submit {
            mask.push(self.is_generator() && is_linear_in(&st.equation, Symbol::X));
        }
        mask
    }

    fn push(&self, st: &mut EnvState, e: Expr) -> bool {
        let overflow = st.stack.len() >= self.cfg.stack_size;
        if overflow {
            st.stack.pop();
        }
        st.stack.insert(0, e);
        overflow
    }

    /// Apply one valid action in place.
    pub fn step<R: Rng + ?Sized>(&self, st: &mut EnvState, a: Action, rng: &mut R) -> StepOutcome {
        assert!(!st.is_terminal(), "step on a terminal state");
        let mut overflow = false;
        let mut failure: Option<NormalizeError> = None;
        let streak = st.digit_streak;
        st.digit_streak = false;
        match a {
            Action::CopyLhs(n) | Action::CopyRhs(n) => {
                let side = if matches!(a, Action::CopyLhs(_)) { &st.equation.lhs } else { &st.equation.rhs };
                let term = subterm_at(side, n).expect("masked copy index");
                overflow = self.push(st, term);
            }
            Action::PushConst(k) => {
                let value = self.cfg.constants[k].clone();
                let digit = if value.is_zero() || value.is_one() { value.as_i64() } else { None };
                match (digit, streak, st.stack.first().and_then(Expr::as_num)) {
                    (Some(d), true, Some(top)) if top.is_integer() => {
                        st.stack[0] = Expr::Num(top.add(top).add(&Number::int(d)));
                    }
                    _ => overflow = self.push(st, Expr::Num(value)),
                }
                st.digit_streak = digit.is_some();
            }
            Action::StackOp(op) => {
                let b = st.stack.remove(0);
                let base = st.stack.remove(0);
                if op == BinOp::Pow && exponent_value(&b).is_some_and(|k| k < 0) && base.has_symbols() {
                    st.add_assumption(&base);
                }
                match combine_terms(&base, &b, op).map_err(NormalizeError::from).and_then(|e| self.norm(&e, rng)) {
                    Ok(r) => st.stack.insert(0, r),
                    Err(e) => failure = Some(e),
                }
            }
            Action::EqOp(op) => {
                let g = st.stack.remove(0);
                match op {
                    BinOp::Mul if g.has_symbols() => st.add_assumption(&g),
                    BinOp::Pow if exponent_value(&g).is_some_and(|k| k < 0) => {
                        for side in [st.equation.lhs.clone(), st.equation.rhs.clone()] {
                            if side.has_symbols() {
                                st.add_assumption(&side);
                            }
                        }
                    }
                    _ => {}
                }
                let apply = |side: &Expr, rng: &mut R| {
                    combine_terms(side, &g, op).map_err(NormalizeError::from).and_then(|e| self.norm(&e, rng))
                };
                match apply(&st.equation.lhs, rng).and_then(|l| Ok((l, apply(&st.equation.rhs, rng)?))) {
                    Ok((l, r)) => st.equation = Equation::new(l, r),
                    Err(e) => failure = Some(e),
                }
            }
            Action::Submit => {
                st.steps += 1;
                st.terminal = Some(Terminal::Submitted);
                return StepOutcome { reward: 0.0, terminal: true, event: Event::Terminal(Terminal::Submitted) };
            }
        }
        st.steps += 1;
        let terminal = match failure {
            Some(e) => Some(failure_terminal(e)),
            None => self.check_terminal(st, true),
        };
        st.terminal = terminal;
        let mut reward = 0.0;
        if self.is_generator() {
            reward -= self.p_step();
        } else {
            if overflow {
                reward += self.cfg.rewards.r_so;
            }
            if terminal.is_some_and(Terminal::is_success) {
                reward += final_reward(st.stack.len(), st.assumptions.len(), self.cfg.stack_size, &self.cfg.rewards);
            }
        }
        let event = match (terminal, overflow) {
            (Some(t), _) => Event::Terminal(t),
            (None, true) => Event::StackOverflow,
            (None, false) => Event::Normal,
        };
        StepOutcome { reward, terminal: terminal.is_some(), event }
    }

    fn norm<R: Rng + ?Sized>(&self, e: &Expr, rng: &mut R) -> Result<Expr, NormalizeError> {
        normalize(e, &self.opts, rng)
    }

    /// Terminal classification after a state change: solved or eliminated
    /// (solver only), then bad, then the step limit.
    fn check_terminal(&self, st: &mut EnvState, count_steps: bool) -> Option<Terminal> {
        if !self.is_generator() {
            let check_budget = self.cfg.simplify_budget.max(DEFAULT_BUDGET) * 10;
            match classify(&st.equation) {
                SolvedStatus::Solved(v) => match satisfies(&st.initial, &v, check_budget) {
                    Some(true) => return Some(Terminal::Solved),
                    Some(false) => {
                        st.unsound_claim = true;
                        return Some(Terminal::Bad);
                    }
                    None => return Some(Terminal::Timeout),
                },
                SolvedStatus::UnknownEliminated => match difference_is_x_free(&st.initial, check_budget) {
                    Some(true) => return Some(Terminal::Eliminated),
                    Some(false) => {
                        st.unsound_claim = true;
                        return Some(Terminal::Bad);
                    }
                    None => return Some(Terminal::Timeout),
                },
                SolvedStatus::Unsolved => {}
            }
        }
        if self.is_bad(st) {
            return Some(Terminal::Bad);
        }
        if count_steps && st.steps >= self.cfg.t_max {
            return Some(Terminal::StepLimit);
        }
        None
    }

    fn is_bad(&self, st: &EnvState) -> bool {
        let cap = self.cfg.number_cap;
        let t = self.cfg.max_units;
        std::iter::once(&st.equation.lhs)
            .chain(std::iter::once(&st.equation.rhs))
            .chain(st.stack.iter())
            .any(|e| !literals_within(e, cap) || unit_count(e) > t)
    }
}

fn pow_operands_ok(base: &Expr, exp: &Expr) -> bool {
    !base.is_zero() && exponent_value(exp).is_some_and(|k| k != 0)
}

fn failure_terminal(e: NormalizeError) -> Terminal {
    match e {
        NormalizeError::BudgetExceeded => Terminal::Timeout,
        NormalizeError::Undefined => Terminal::Bad,
    }
}

/// One line of an episode trace. Step 0 is the state after reset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub episode: usize,
    pub step: usize,
    pub action: Option<String>,
    pub lhs: String,
    pub rhs: String,
    pub stack: Vec<String>,
    pub assumptions: Vec<String>,
    pub reward: f64,
    pub terminal: Option<Terminal>,
}

impl TraceRecord {
    pub fn capture(episode: usize, st: &EnvState, action: Option<String>, reward: f64) -> TraceRecord {
        TraceRecord {
            episode,
            step: st.steps,
            action,
            lhs: st.equation.lhs.to_string(),
            rhs: st.equation.rhs.to_string(),
            stack: st.stack.iter().map(Expr::to_string).collect(),
            assumptions: st.assumptions.iter().map(|g| format!("{g} != 0")).collect(),
            reward,
            terminal: st.terminal,
        }
    }
}
