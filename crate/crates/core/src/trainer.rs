//! Double deep-Q learning with experience replay, masked ε-greedy
//! exploration, a blended target network and greedy evaluation.

use std::collections::VecDeque;
use std::io::Write;
use std::path::PathBuf;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::EncoderConfig;
use crate::env::{ConfigError, Env, EnvState, Terminal, TraceRecord};
use crate::nn::{Checkpoint, Network, NnError};
use crate::simplify::Equation;

pub type TrainRng = ChaCha8Rng;

/// Independent stream `stream` of the generator seeded by `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> TrainRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EpsilonSchedule {
    /// `(init - fin) exp(-epoch / t_eps) + fin`.
    Exponential { init: f64, fin: f64, t_eps: f64 },
    /// `(init - fin) (1 - s)^alpha + fin` for success statistic `s`.
    Adaptive { init: f64, fin: f64, alpha: f64 },
}

impl EpsilonSchedule {
    pub fn value(&self, epoch: u64, s: f64) -> f64 {
        match *self {
            EpsilonSchedule::Exponential { init, fin, t_eps } => (init - fin) * (-(epoch as f64) / t_eps).exp() + fin,
            EpsilonSchedule::Adaptive { init, fin, alpha } => adaptive(init, fin, alpha, s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LrSchedule {
    Fixed(f64),
    Adaptive { init: f64, fin: f64, alpha: f64 },
}

impl LrSchedule {
    pub fn value(&self, s: f64) -> f64 {
        match *self {
            LrSchedule::Fixed(eta) => eta,
            LrSchedule::Adaptive { init, fin, alpha } => adaptive(init, fin, alpha, s),
        }
    }
}

fn adaptive(init: f64, fin: f64, alpha: f64, s: f64) -> f64 {
    (init - fin) * (1.0 - s.clamp(0.0, 1.0)).powf(alpha) + fin
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma: f64,
    /// Replay capacity `M`.
    pub memory: usize,
    pub batch: usize,
    /// Exploration steps per update `p`.
    pub explore_steps: usize,
    /// Target sync period in epochs.
    pub target_period: u64,
    /// Target blend factor.
    pub target_blend: f64,
    pub epsilon: EpsilonSchedule,
    pub lr: LrSchedule,
    pub momentum: f64,
    /// Episodes in the success window.
    pub window: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let mut errs = Vec::new();
        if !(0.0..1.0).contains(&self.gamma) {
            errs.push(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.target_blend > 0.0 && self.target_blend <= 1.0) {
            errs.push(format!("target blend must lie in (0, 1], got {}", self.target_blend));
        }
        if self.batch == 0 || self.batch > self.memory {
            errs.push(format!("batch size {} must be in 1..=M ({})", self.batch, self.memory));
        }
        if self.explore_steps == 0 || self.target_period == 0 || self.window == 0 {
            errs.push("p, target period and window must be positive".into());
        }
        if self.momentum < 0.0 || self.momentum >= 1.0 {
            errs.push(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        let (ei, ef) = match self.epsilon {
            EpsilonSchedule::Exponential { init, fin, t_eps } => {
                if t_eps.is_nan() || t_eps <= 0.0 {
                    errs.push(format!("T_eps must be positive, got {t_eps}"));
                }
                (init, fin)
            }
            EpsilonSchedule::Adaptive { init, fin, alpha } => {
                if alpha.is_nan() || alpha < 0.0 {
                    errs.push(format!("epsilon exponent must be non-negative, got {alpha}"));
                }
                (init, fin)
            }
        };
        if !(0.0..=1.0).contains(&ei) || !(0.0..=1.0).contains(&ef) {
            errs.push(format!("epsilon values must lie in [0, 1], got {ei} and {ef}"));
        }
        let (li, lf) = match self.lr {
            LrSchedule::Fixed(eta) => (eta, eta),
            LrSchedule::Adaptive { init, fin, alpha } => {
                if alpha.is_nan() || alpha < 0.0 {
                    errs.push(format!("eta exponent must be non-negative, got {alpha}"));
                }
                (init, fin)
            }
        };
        if !(li > 0.0 && lf > 0.0 && li.is_finite() && lf.is_finite()) {
            errs.push(format!("eta must be positive and finite, got {li} and {lf}"));
        }
        if self.hidden.contains(&0) {
            errs.push("hidden layer widths must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(TrainError::Config(errs.join("; ")))
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: non-finite loss or gradient")]
    Diverged { epoch: u64 },
    #[error("network: {0}")]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("metrics: {0}")]
    Json(#[from] serde_json::Error),
}

/// Encoded state stored by its nonzero entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseState {
    idx: Vec<u32>,
    val: Vec<f64>,
}

impl SparseState {
    pub fn from_dense(x: &[f64]) -> SparseState {
        let mut s = SparseState { idx: Vec::new(), val: Vec::new() };
        for (i, &v) in x.iter().enumerate() {
            if v != 0.0 {
                s.idx.push(i as u32);
                s.val.push(v);
            }
        }
        s
    }

    /// Write into a zeroed row.
    pub fn scatter(&self, row: &mut [f64]) {
        for (&i, &v) in self.idx.iter().zip(&self.val) {
            row[i as usize] = v;
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        self.scatter(&mut v);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: SparseState,
    pub a: usize,
    pub r: f64,
    /// Next state and its validity mask, `None` when terminal.
    pub next: Option<(SparseState, Vec<bool>)>,
}

/// Ring buffer overwriting the oldest transition once full.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> ReplayMemory {
        assert!(capacity > 0);
        ReplayMemory { capacity, items: Vec::new(), head: 0 }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform draw with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a Transition> {
        assert!(!self.items.is_empty(), "sampling from empty replay memory");
        (0..n).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}

/// Highest-valued valid index, ties to the lowest.
pub fn masked_argmax(q: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&v, &ok)) in q.iter().zip(mask).enumerate() {
        if ok && best.is_none_or(|b| v > q[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no valid action")]
pub struct EmptyMask;

/// ε-greedy over valid actions. Always draws once for the coin, and once
/// more for the uniform pick when exploring.
pub fn select_action<R: Rng + ?Sized>(q: &[f64], mask: &[bool], eps: f64, rng: &mut R) -> Result<usize, EmptyMask> {
    let valid = mask.iter().filter(|&&m| m).count();
    if valid == 0 {
        return Err(EmptyMask);
    }
    if rng.gen::<f64>() < eps {
        let k = rng.gen_range(0..valid);
        return Ok(mask.iter().enumerate().filter(|(_, &m)| m).nth(k).unwrap().0);
    }
    Ok(masked_argmax(q, mask).unwrap())
}

/// `r` for terminal transitions, else `r + γ target(s')[a']` with `a'` the
/// online network's masked argmax at `s'`.
pub fn bellman_target(r: f64, next: Option<(&[f64], &[f64], &[bool])>, gamma: f64) -> f64 {
    match next {
        None => r,
        Some((online_q, target_q, mask)) => {
            let a = masked_argmax(online_q, mask).expect("non-terminal state has a valid action");
            r + gamma * target_q[a]
        }
    }
}

/// Online and target networks, replay memory and counters.
#[derive(Debug, Clone)]
pub struct Learner {
    pub cfg: TrainConfig,
    pub online: Network,
    pub target: Network,
    pub replay: ReplayMemory,
    pub rng: TrainRng,
    /// Parameter updates so far.
    pub epoch: u64,
    pub episodes: u64,
    pub env_steps: u64,
    /// Replaces the success window as the schedule statistic when set.
    pub external_score: Option<f64>,
    since_update: usize,
    window: VecDeque<bool>,
    loss_sum: f64,
    loss_count: u64,
}

impl Learner {
    pub fn new(cfg: TrainConfig, input_dim: usize, num_actions: usize) -> Result<Learner, TrainError> {
        cfg.validate()?;
        let mut sizes = vec![input_dim];
        sizes.extend(&cfg.hidden);
        sizes.push(num_actions);
        let online = Network::init(&sizes, &mut rng_stream(cfg.seed, 0));
        Ok(Learner::with_network(cfg, online))
    }

    pub fn with_network(cfg: TrainConfig, online: Network) -> Learner {
        let target = online.clone();
        Learner {
            replay: ReplayMemory::new(cfg.memory),
            rng: rng_stream(cfg.seed, 1),
            window: VecDeque::with_capacity(cfg.window),
            cfg,
            online,
            target,
            epoch: 0,
            episodes: 0,
            env_steps: 0,
            external_score: None,
            since_update: 0,
            loss_sum: 0.0,
            loss_count: 0,
        }
    }

    /// Success fraction over the last `window` episodes; zero until the
    /// window is full.
    pub fn success_rate(&self) -> f64 {
        if let Some(s) = self.external_score {
            return s;
        }
        if self.window.len() < self.cfg.window {
            return 0.0;
        }
        self.window.iter().filter(|&&s| s).count() as f64 / self.window.len() as f64
    }

    /// Like [`Learner::success_rate`] but over however many episodes exist.
    pub fn recent_success(&self) -> Option<f64> {
        (!self.window.is_empty())
            .then(|| self.window.iter().filter(|&&s| s).count() as f64 / self.window.len() as f64)
    }

    pub fn epsilon(&self) -> f64 {
        self.cfg.epsilon.value(self.epoch, self.success_rate())
    }

    pub fn lr(&self) -> f64 {
        self.cfg.lr.value(self.success_rate())
    }

    pub fn act(&mut self, x: &[f64], mask: &[bool]) -> Result<usize, TrainError> {
        let q = self.online.forward(x)?;
        let eps = self.epsilon();
        let a = select_action(&q, mask, eps, &mut self.rng).map_err(|_| TrainError::Config("state without valid actions".into()))?;
        debug_assert!(mask[a], "masked-out action selected");
        Ok(a)
    }

    /// Store a transition; run an update after every `p` of them once the
    /// memory holds a full batch. Returns whether an update ran.
    pub fn observe(&mut self, t: Transition) -> Result<bool, TrainError> {
        self.replay.push(t);
        self.env_steps += 1;
        self.since_update += 1;
        if self.since_update >= self.cfg.explore_steps && self.replay.len() >= self.cfg.batch {
            self.since_update = 0;
            self.update()?;
            return Ok(true);
        }
        Ok(false)
    }

    pub fn end_episode(&mut self, success: bool) {
        self.episodes += 1;
        if self.window.len() == self.cfg.window {
            self.window.pop_front();
        }
        self.window.push_back(success);
    }

    /// One gradient step on a uniformly sampled batch.
    pub fn update(&mut self) -> Result<f64, TrainError> {
        let dim = self.online.input_dim();
        let batch = self.replay.sample(self.cfg.batch, &mut self.rng);
        let mut x = Array2::<f64>::zeros((batch.len(), dim));
        let live: Vec<usize> = (0..batch.len()).filter(|&k| batch[k].next.is_some()).collect();
        let mut xn = Array2::<f64>::zeros((live.len(), dim));
        for (k, t) in batch.iter().enumerate() {
            t.s.scatter(x.row_mut(k).as_slice_mut().unwrap());
        }
        for (row, &k) in live.iter().enumerate() {
            batch[k].next.as_ref().unwrap().0.scatter(xn.row_mut(row).as_slice_mut().unwrap());
        }
        let mut targets: Vec<f64> = batch.iter().map(|t| t.r).collect();
        if !live.is_empty() {
            let qo = self.online.forward_batch(xn.view())?;
            let qt = self.target.forward_batch(xn.view())?;
            for (row, &k) in live.iter().enumerate() {
                let mask = &batch[k].next.as_ref().unwrap().1;
                let o = qo.row(row);
                let t = qt.row(row);
                targets[k] = bellman_target(batch[k].r, Some((o.as_slice().unwrap(), t.as_slice().unwrap(), mask)), self.cfg.gamma);
            }
        }
        let actions: Vec<usize> = batch.iter().map(|t| t.a).collect();
        let eta = self.lr();
        let loss = match self.online.train_step(x.view(), &actions, &targets, eta, self.cfg.momentum) {
            Ok(l) => l,
            Err(NnError::NonFinite) => return Err(TrainError::Diverged { epoch: self.epoch }),
            Err(e) => return Err(e.into()),
        };
        if !self.online.all_finite() {
            return Err(TrainError::Diverged { epoch: self.epoch });
        }
        self.epoch += 1;
        if self.epoch.is_multiple_of(self.cfg.target_period) {
            self.target.blend_from(&self.online, self.cfg.target_blend);
        }
        self.loss_sum += loss;
        self.loss_count += 1;
        Ok(loss)
    }

    /// Mean loss since the previous call.
    pub fn take_mean_loss(&mut self) -> Option<f64> {
        let mean = (self.loss_count > 0).then(|| self.loss_sum / self.loss_count as f64);
        self.loss_sum = 0.0;
        self.loss_count = 0;
        mean
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { seed: self.cfg.seed, epoch: self.epoch, net: self.online.clone() }
    }
}

/// Episodic environment as seen by the learner.
pub trait QEnv {
    type State;
    fn input_dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    /// A fresh non-terminal start state.
    fn reset(&mut self, rng: &mut TrainRng) -> Self::State;
    fn encode(&self, s: &Self::State, out: &mut [f64]);
    fn mask(&self, s: &Self::State) -> Vec<bool>;
    fn step(&mut self, s: &mut Self::State, action: usize, rng: &mut TrainRng) -> EnvStep;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvStep {
    pub reward: f64,
    /// `Some(success)` once the episode has ended.
    pub done: Option<bool>,
    /// Episode cut short while the state is still live; the next state is
    /// bootstrapped and a new episode begins.
    pub cut: bool,
}

/// When to evaluate, checkpoint and stop.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub epochs: u64,
    pub eval_every: u64,
    pub checkpoint_every: u64,
    pub out_dir: Option<PathBuf>,
    /// Stop once every evaluated set reaches this success rate.
    pub stop_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub name: String,
    pub success: f64,
    /// Mean steps over successes, reported only at ≥2% success.
    pub avg_steps: Option<f64>,
    pub episodes: usize,
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: u64,
    pub episodes: u64,
    pub env_steps: u64,
    pub loss: Option<f64>,
    pub epsilon: f64,
    pub eta: f64,
    pub train_success: f64,
    pub evals: Vec<EvalSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub epochs: u64,
    pub last: Option<MetricsRecord>,
    pub stopped_early: bool,
}

pub fn checkpoint_path(dir: &std::path::Path, epoch: u64) -> PathBuf {
    dir.join(format!("checkpoint-{epoch:010}.symq"))
}

/// Learner coupled with the environment it explores.
pub struct Trainer<E: QEnv> {
    pub learner: Learner,
    pub env: E,
    pub env_rng: TrainRng,
    current: Option<E::State>,
    buf: Vec<f64>,
}

impl<E: QEnv> Trainer<E> {
    pub fn new(cfg: TrainConfig, env: E) -> Result<Trainer<E>, TrainError> {
        let learner = Learner::new(cfg, env.input_dim(), env.num_actions())?;
        Ok(Trainer::with_learner(learner, env))
    }

    pub fn with_learner(learner: Learner, env: E) -> Trainer<E> {
        let env_rng = rng_stream(learner.cfg.seed, 2);
        let buf = vec![0.0; env.input_dim()];
        Trainer { learner, env, env_rng, current: None, buf }
    }

    /// One exploration step, starting a new episode when needed. Returns
    /// whether it triggered an update.
    pub fn explore_step(&mut self) -> Result<bool, TrainError> {
        let mut s = match self.current.take() {
            Some(s) => s,
            None => self.env.reset(&mut self.env_rng),
        };
        self.buf.fill(0.0);
        self.env.encode(&s, &mut self.buf);
        let sparse = SparseState::from_dense(&self.buf);
        let mask = self.env.mask(&s);
        let a = self.learner.act(&self.buf, &mask)?;
        assert!(mask[a], "invalid action {a} selected during training");
        let out = self.env.step(&mut s, a, &mut self.env_rng);
        let next = if out.done.is_some() {
            None
        } else {
            self.buf.fill(0.0);
            self.env.encode(&s, &mut self.buf);
            Some((SparseState::from_dense(&self.buf), self.env.mask(&s)))
        };
        let updated = self.learner.observe(Transition { s: sparse, a, r: out.reward, next })?;
        match out.done {
            Some(success) => self.learner.end_episode(success),
            None if out.cut => self.learner.end_episode(false),
            None => self.current = Some(s),
        }
        Ok(updated)
    }

    /// Explore until one more update has run.
    pub fn train_epoch(&mut self) -> Result<(), TrainError> {
        while !self.explore_step()? {}
        Ok(())
    }

    /// Train to `opts.epochs`, evaluating, logging and checkpointing along
    /// the way.
    pub fn run(
        &mut self,
        opts: &RunOptions,
        eval: &mut dyn FnMut(&Network) -> Result<Vec<EvalSummary>, TrainError>,
        log: &mut dyn Write,
    ) -> Result<RunSummary, TrainError> {
        if let Some(dir) = &opts.out_dir {
            std::fs::create_dir_all(dir)?;
        }
        let mut last = None;
        let mut stopped_early = false;
        while self.learner.epoch < opts.epochs {
            self.train_epoch()?;
            let e = self.learner.epoch;
            let done = e == opts.epochs;
            if (opts.eval_every > 0 && e.is_multiple_of(opts.eval_every)) || done {
                let record = self.record(eval(&self.learner.online)?);
                serde_json::to_writer(&mut *log, &record)?;
                writeln!(log)?;
                log.flush()?;
                stopped_early = !done
                    && opts.stop_at.is_some_and(|thr| !record.evals.is_empty() && record.evals.iter().all(|r| r.success >= thr));
                last = Some(record);
            }
            if let Some(dir) = &opts.out_dir {
                if (opts.checkpoint_every > 0 && e.is_multiple_of(opts.checkpoint_every)) || done || stopped_early {
                    self.learner.checkpoint().save(&checkpoint_path(dir, e))?;
                }
            }
            if stopped_early {
                break;
            }
        }
        Ok(RunSummary { epochs: self.learner.epoch, last, stopped_early })
    }

    fn record(&mut self, evals: Vec<EvalSummary>) -> MetricsRecord {
        let l = &mut self.learner;
        MetricsRecord {
            epoch: l.epoch,
            episodes: l.episodes,
            env_steps: l.env_steps,
            loss: l.take_mean_loss(),
            epsilon: l.epsilon(),
            eta: l.lr(),
            train_success: l.recent_success().unwrap_or(0.0),
            evals,
        }
    }
}

/// Source of training equations.
pub trait TaskSource {
    fn next_task(&mut self, rng: &mut TrainRng) -> Equation;
}

/// Cycles through a fixed list.
#[derive(Debug, Clone)]
pub struct ListSource {
    pub tasks: Vec<Equation>,
    next: usize,
}

impl ListSource {
    pub fn new(tasks: Vec<Equation>) -> ListSource {
        assert!(!tasks.is_empty());
        ListSource { tasks, next: 0 }
    }
}

impl TaskSource for ListSource {
    fn next_task(&mut self, _rng: &mut TrainRng) -> Equation {
        let eq = self.tasks[self.next].clone();
        self.next = (self.next + 1) % self.tasks.len();
        eq
    }
}

/// The equation environment driven by a task source.
pub struct SolverEnv<T: TaskSource> {
    pub env: Env,
    pub enc: EncoderConfig,
    pub tasks: T,
}

const MAX_RESAMPLES: usize = 10_000;

impl<T: TaskSource> QEnv for SolverEnv<T> {
    type State = EnvState;

    fn input_dim(&self) -> usize {
        self.enc.input_dim()
    }

    fn num_actions(&self) -> usize {
        self.env.num_actions()
    }

    /// Tasks that are terminal right after normalization are redrawn.
    fn reset(&mut self, rng: &mut TrainRng) -> EnvState {
        for _ in 0..MAX_RESAMPLES {
            let eq = self.tasks.next_task(rng);
            let st = self.env.reset(&eq, rng).unwrap_or_else(|e| panic!("task {eq} does not fit the environment: {e}"));
            if !st.is_terminal() {
                return st;
            }
        }
        panic!("task source produced only terminal equations");
    }

    fn encode(&self, s: &EnvState, out: &mut [f64]) {
        self.enc.encode_state_into(s, out).expect("non-terminal states are encodable");
    }

    fn mask(&self, s: &EnvState) -> Vec<bool> {
        self.env.valid_actions(s)
    }

    fn step(&mut self, s: &mut EnvState, action: usize, rng: &mut TrainRng) -> EnvStep {
        let out = self.env.step(s, self.env.cfg.action(action), rng);
        EnvStep { reward: out.reward, done: s.terminal.map(Terminal::is_success), cut: false }
    }
}

/// Next state (`None` if terminal) and reward.
pub type MdpEdge = (Option<usize>, f64);

/// Deterministic finite MDP with one-hot state features. `table[s][a]` is
/// `None` for a masked action.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    pub table: Vec<Vec<Option<MdpEdge>>>,
    pub starts: Vec<usize>,
    /// Episodes are cut (without a terminal marker) after this many steps.
    pub horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TabularState {
    pub state: usize,
    pub steps: usize,
}

impl QEnv for TabularMdp {
    type State = TabularState;

    fn input_dim(&self) -> usize {
        self.table.len()
    }

    fn num_actions(&self) -> usize {
        self.table[0].len()
    }

    fn reset(&mut self, rng: &mut TrainRng) -> TabularState {
        TabularState { state: self.starts[rng.gen_range(0..self.starts.len())], steps: 0 }
    }

    fn encode(&self, s: &TabularState, out: &mut [f64]) {
        out[s.state] = 1.0;
    }

    fn mask(&self, s: &TabularState) -> Vec<bool> {
        self.table[s.state].iter().map(Option::is_some).collect()
    }

    fn step(&mut self, s: &mut TabularState, action: usize, _rng: &mut TrainRng) -> EnvStep {
        let (next, reward) = self.table[s.state][action].expect("valid action");
        s.steps += 1;
        match next {
            None => EnvStep { reward, done: Some(true), cut: false },
            Some(n) => {
                s.state = n;
                EnvStep { reward, done: None, cut: s.steps >= self.horizon }
            }
        }
    }
}

/// Chooses actions for evaluation and solving.
pub trait Policy: Sync {
    fn choose(&self, env: &Env, st: &EnvState, mask: &[bool]) -> usize;
}

/// Greedy masked argmax of a network's Q-values.
pub struct GreedyPolicy<'a> {
    pub net: &'a Network,
    pub enc: EncoderConfig,
}

impl Policy for GreedyPolicy<'_> {
    fn choose(&self, _env: &Env, st: &EnvState, mask: &[bool]) -> usize {
        let x = self.enc.encode_state(st).expect("non-terminal states are encodable");
        let q = self.net.forward(&x).expect("network matches encoder");
        masked_argmax(&q, mask).expect("non-terminal state has a valid action")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub terminal: Terminal,
    pub steps: usize,
    pub reward: f64,
    pub final_state: EnvState,
    /// Filled when requested.
    pub trace: Vec<TraceRecord>,
}

/// Run `policy` on one equation until a terminal state.
pub fn run_episode<R: Rng + ?Sized>(
    env: &Env,
    policy: &dyn Policy,
    eq: &Equation,
    rng: &mut R,
    trace_id: Option<usize>,
) -> Result<EpisodeResult, ConfigError> {
    let mut st = env.reset(eq, rng)?;
    let mut trace = Vec::new();
    if let Some(id) = trace_id {
        trace.push(TraceRecord::capture(id, &st, None, 0.0));
    }
    let mut reward = 0.0;
    while !st.is_terminal() {
        let mask = env.valid_actions(&st);
        let idx = policy.choose(env, &st, &mask);
        assert!(mask[idx], "policy chose masked action {idx}");
        let action = env.cfg.action(idx);
        let out = env.step(&mut st, action, rng);
        reward += out.reward;
        if let Some(id) = trace_id {
            trace.push(TraceRecord::capture(id, &st, Some(env.cfg.action_name(action)), reward));
        }
    }
    Ok(EpisodeResult { terminal: st.terminal.unwrap(), steps: st.steps, reward, final_state: st, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub summary: EvalSummary,
    pub outcomes: Vec<(Terminal, usize)>,
}

/// Per-equation seed so results do not depend on scheduling.
pub fn episode_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Greedy episodes over a dataset, fanned out over `workers` threads and
/// merged in dataset order.
pub fn evaluate(
    env: &Env,
    policy: &dyn Policy,
    name: &str,
    dataset: &[Equation],
    seed: u64,
    workers: usize,
) -> Result<EvalReport, ConfigError> {
    let run = |(i, eq): (usize, &Equation)| {
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(seed, i));
        run_episode(env, policy, eq, &mut rng, None).map(|r| (r.terminal, r.steps))
    };
    let outcomes: Result<Vec<_>, _> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool");
        pool.install(|| dataset.par_iter().enumerate().map(run).collect())
    } else {
        dataset.iter().enumerate().map(run).collect()
    };
    let outcomes = outcomes?;
    Ok(EvalReport { summary: summarize(name, &outcomes), outcomes })
}

pub fn summarize(name: &str, outcomes: &[(Terminal, usize)]) -> EvalSummary {
    let n = outcomes.len();
    let wins: Vec<usize> = outcomes.iter().filter(|(t, _)| t.is_success()).map(|&(_, s)| s).collect();
    let success = if n == 0 { 0.0 } else { wins.len() as f64 / n as f64 };
    let avg_steps = (success >= 0.02).then(|| wins.iter().sum::<usize>() as f64 / wins.len() as f64);
    EvalSummary { name: name.to_string(), success, avg_steps, episodes: n }
}
