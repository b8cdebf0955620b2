//! The generator agent and solver/generator co-training.
//!
//! The generator starts from a solved equation, transforms it with the
//! solver's action set plus a submit action, and is rewarded when the
//! solver fails on the submitted equation.

use std::collections::VecDeque;
use std::io::Write;
use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::env::{Action, Env, EnvConfig, EnvState, Mode, StepOutcome, Terminal};
use crate::expr::{Expr, Symbol};
use crate::number::Number;
use crate::simplify::{is_linear_in, satisfies, Equation, DEFAULT_BUDGET};
use crate::taskgen::SamplerConfig;
use crate::trainer::{
    checkpoint_path, run_episode, EpisodeResult, EvalSummary, GreedyPolicy, Learner, MetricsRecord, Policy, SparseState,
    TrainConfig, TrainError, TrainRng, Transition,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeedFamily {
    /// `x = a1`.
    Constant,
    /// `x = (a1 + b1*c) / (a2 + b2*c)`.
    Fraction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub family: SeedFamily,
    /// Coefficient distribution of the seed solution.
    pub sampler: SamplerConfig,
    pub r_fool: f64,
    pub p_step: f64,
}

/// Generator environment: the solver's configuration plus a submit action.
pub fn generator_env(solver_cfg: &EnvConfig, gcfg: &GeneratorConfig) -> Result<Env, crate::env::ConfigError> {
    let mut cfg = solver_cfg.clone();
    cfg.submit = true;
    Env::new(cfg, Mode::Generator { p_step: gcfg.p_step })
}

fn seed_solution<R: Rng + ?Sized>(gcfg: &GeneratorConfig, rng: &mut R) -> Expr {
    let s = &gcfg.sampler;
    match gcfg.family {
        SeedFamily::Constant => Expr::num(s.sample_number(rng)),
        SeedFamily::Fraction => {
            let draw_b = |rng: &mut R| if rng.gen::<f64>() < s.p0 { Number::zero() } else { s.sample_number(rng) };
            let a1 = s.sample_number(rng);
            let b1 = draw_b(rng);
            let (a2, b2) = loop {
                let a2 = s.sample_number(rng);
                let b2 = draw_b(rng);
                if !(a2.is_zero() && b2.is_zero()) {
                    break (a2, b2);
                }
            };
            let lin = |a: Number, b: Number| Expr::add(vec![Expr::num(a), Expr::mul(vec![Expr::num(b), Expr::c()])]);
            Expr::mul(vec![lin(a1, b1), Expr::pow(lin(a2, b2), Expr::int(-1))])
        }
    }
}

/// Fresh generator episode on `x = seed`. Returns the state and the seed.
pub fn generator_reset<R: Rng + ?Sized>(env: &Env, gcfg: &GeneratorConfig, rng: &mut R) -> (EnvState, Expr) {
    loop {
        let seed = seed_solution(gcfg, rng);
        let st = env
            .reset(&Equation::new(Expr::x(), seed.clone()), rng)
            .unwrap_or_else(|e| panic!("seed family does not fit the generator environment: {e}"));
        if !st.is_terminal() {
            return (st, seed);
        }
    }
}

/// Submit reward: `r_fool` if the solver failed, minus the stack and
/// assumption penalties of the generator's final state.
pub fn fool_reward(fooled: bool, st: &EnvState, env: &Env, gcfg: &GeneratorConfig) -> f64 {
    let r = &env.cfg.rewards;
    let base = if fooled { gcfg.r_fool } else { 0.0 };
    base - (st.stack.len() as f64 / env.cfg.stack_size as f64) * r.p_st - st.assumptions.len() as f64 * r.p_as
}

#[derive(Debug, Clone)]
pub struct GeneratorStep {
    pub outcome: StepOutcome,
    /// The solver's greedy episode on the submitted equation.
    pub solver: Option<EpisodeResult>,
}

/// One generator action. Submit runs `solver` greedily on the current
/// equation and pays the fooling reward.
pub fn generator_step<R: Rng + ?Sized>(
    env: &Env,
    st: &mut EnvState,
    action: Action,
    solver_env: &Env,
    solver: &dyn Policy,
    gcfg: &GeneratorConfig,
    rng: &mut R,
) -> Result<GeneratorStep, TrainError> {
    if action != Action::Submit {
        return Ok(GeneratorStep { outcome: env.step(st, action, rng), solver: None });
    }
    let submitted = st.equation.clone();
    let mut outcome = env.step(st, action, rng);
    let result = run_episode(solver_env, solver, &submitted, rng, None)?;
    outcome.reward = fool_reward(!result.terminal.is_success(), st, env, gcfg);
    Ok(GeneratorStep { outcome, solver: Some(result) })
}

/// Who answers submitted equations.
pub enum Opponent {
    /// A solver trained alongside the generator.
    Learned(Box<Learner>),
    /// A fixed policy that is never updated.
    Frozen(Box<dyn Policy + Send>),
}

/// One line of the generated-task log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub episode: u64,
    pub seed: String,
    pub submitted: Option<String>,
    pub generator_steps: usize,
    pub generator_terminal: Terminal,
    pub generator_reward: f64,
    /// Stack entries and assumptions at the end of the generator episode.
    pub stack_len: usize,
    pub assumptions: usize,
    pub solver_terminal: Option<Terminal>,
    pub solver_steps: Option<usize>,
    pub fooled: bool,
    pub linear: Option<bool>,
    /// Whether the seed still satisfies the submitted equation.
    pub equivalent: Option<bool>,
}

pub struct CoTrainer {
    pub generator: Learner,
    pub opponent: Opponent,
    pub gen_env: Env,
    pub solver_env: Env,
    pub enc: EncoderConfig,
    pub gcfg: GeneratorConfig,
    pub rng: TrainRng,
    pub episodes: u64,
    window: usize,
    valid: VecDeque<bool>,
    fooled: VecDeque<bool>,
    buf: Vec<f64>,
}

struct SolverView<'a> {
    learner: &'a Learner,
    enc: EncoderConfig,
}

impl Policy for SolverView<'_> {
    fn choose(&self, env: &Env, st: &EnvState, mask: &[bool]) -> usize {
        GreedyPolicy { net: &self.learner.online, enc: self.enc }.choose(env, st, mask)
    }
}

fn push_window(w: &mut VecDeque<bool>, cap: usize, v: bool) {
    if w.len() == cap {
        w.pop_front();
    }
    w.push_back(v);
}

fn rate(w: &VecDeque<bool>) -> f64 {
    if w.is_empty() {
        0.0
    } else {
        w.iter().filter(|&&b| b).count() as f64 / w.len() as f64
    }
}

impl CoTrainer {
    pub fn new(
        solver_env: Env,
        enc: EncoderConfig,
        gcfg: GeneratorConfig,
        gen_train: TrainConfig,
        opponent: Opponent,
    ) -> Result<CoTrainer, TrainError> {
        let gen_env = generator_env(&solver_env.cfg, &gcfg)?;
        let generator = Learner::new(gen_train, enc.input_dim(), gen_env.num_actions())?;
        if let Opponent::Learned(s) = &opponent {
            if s.online.input_dim() != enc.input_dim() || s.online.output_dim() != solver_env.num_actions() {
                return Err(TrainError::Config("solver network does not match the environment".into()));
            }
        }
        let rng = crate::trainer::rng_stream(generator.cfg.seed, 3);
        let window = generator.cfg.window;
        Ok(CoTrainer {
            generator,
            opponent,
            gen_env,
            solver_env,
            enc,
            gcfg,
            rng,
            episodes: 0,
            window,
            valid: VecDeque::new(),
            fooled: VecDeque::new(),
            buf: vec![0.0; enc.input_dim()],
        })
    }

    /// Generator statistic: the lower of the valid-submission rate and the
    /// solver's failure rate on submissions, zero until the window fills.
    pub fn generator_score(&self) -> f64 {
        if self.valid.len() < self.window {
            return 0.0;
        }
        let submitted = self.valid.iter().filter(|&&v| v).count();
        let fail = if submitted == 0 { 0.0 } else { self.fooled.iter().filter(|&&f| f).count() as f64 / submitted as f64 };
        rate(&self.valid).min(fail)
    }

    pub fn fooling_rate(&self) -> f64 {
        rate(&self.fooled)
    }

    pub fn valid_rate(&self) -> f64 {
        rate(&self.valid)
    }

    fn encode(&mut self, st: &EnvState) -> SparseState {
        self.buf.fill(0.0);
        self.enc.encode_state_into(st, &mut self.buf).expect("non-terminal states are encodable");
        SparseState::from_dense(&self.buf)
    }

    /// One generator episode, then a training episode of a learned solver
    /// on the submitted equation.
    pub fn episode(&mut self) -> Result<TaskRecord, TrainError> {
        let (mut st, seed) = generator_reset(&self.gen_env, &self.gcfg, &mut self.rng);
        let mut total = 0.0;
        let mut solver_result = None;
        let mut submitted = None;
        while !st.is_terminal() {
            let s = self.encode(&st);
            let mask = self.gen_env.valid_actions(&st);
            let a = self.generator.act(&self.buf, &mask)?;
            let action = self.gen_env.cfg.action(a);
            if action == Action::Submit {
                submitted = Some(st.equation.clone());
            }
            let step = {
                let solver: Box<dyn Policy + '_> = match &self.opponent {
                    Opponent::Learned(l) => Box::new(SolverView { learner: l, enc: self.enc }),
                    Opponent::Frozen(p) => Box::new(PolicyRef(p.as_ref())),
                };
                generator_step(&self.gen_env, &mut st, action, &self.solver_env, solver.as_ref(), &self.gcfg, &mut self.rng)?
            };
            total += step.outcome.reward;
            if step.solver.is_some() {
                solver_result = step.solver;
            }
            let next = if st.is_terminal() {
                None
            } else {
                let n = self.encode(&st);
                Some((n, self.gen_env.valid_actions(&st)))
            };
            self.generator.observe(Transition { s, a, r: step.outcome.reward, next })?;
        }
        let fooled = solver_result.as_ref().is_some_and(|r| !r.terminal.is_success());
        self.episodes += 1;
        push_window(&mut self.valid, self.window, submitted.is_some());
        push_window(&mut self.fooled, self.window, fooled);
        self.generator.end_episode(fooled);
        self.generator.external_score = Some(self.generator_score());
        if let (Some(eq), Opponent::Learned(_)) = (&submitted, &self.opponent) {
            self.train_solver(eq)?;
        }
        let budget = self.solver_env.cfg.simplify_budget.max(DEFAULT_BUDGET) * 10;
        Ok(TaskRecord {
            episode: self.episodes,
            seed: seed.to_string(),
            submitted: submitted.as_ref().map(Equation::to_string),
            generator_steps: st.steps,
            generator_terminal: st.terminal.unwrap(),
            generator_reward: total,
            stack_len: st.stack.len(),
            assumptions: st.assumptions.len(),
            solver_terminal: solver_result.as_ref().map(|r| r.terminal),
            solver_steps: solver_result.as_ref().map(|r| r.steps),
            fooled,
            linear: submitted.as_ref().map(|eq| is_linear_in(eq, Symbol::X)),
            equivalent: submitted.as_ref().and_then(|eq| satisfies(eq, &seed, budget)),
        })
    }

    /// ε-greedy solver episode feeding the solver's replay memory.
    fn train_solver(&mut self, eq: &Equation) -> Result<(), TrainError> {
        let Opponent::Learned(learner) = &mut self.opponent else { return Ok(()) };
        let mut st = self.solver_env.reset(eq, &mut self.rng)?;
        if st.is_terminal() {
            return Ok(());
        }
        let mut buf = vec![0.0; self.enc.input_dim()];
        let encode = |st: &EnvState, buf: &mut Vec<f64>| {
            buf.fill(0.0);
            self.enc.encode_state_into(st, buf).expect("non-terminal states are encodable");
            SparseState::from_dense(buf)
        };
        while !st.is_terminal() {
            let s = encode(&st, &mut buf);
            let mask = self.solver_env.valid_actions(&st);
            let a = learner.act(&buf, &mask)?;
            let out = self.solver_env.step(&mut st, self.solver_env.cfg.action(a), &mut self.rng);
            let next = if st.is_terminal() {
                None
            } else {
                Some((encode(&st, &mut buf), self.solver_env.valid_actions(&st)))
            };
            learner.observe(Transition { s, a, r: out.reward, next })?;
        }
        learner.end_episode(st.terminal.unwrap().is_success());
        Ok(())
    }

    pub fn solver(&self) -> Option<&Learner> {
        match &self.opponent {
            Opponent::Learned(l) => Some(l),
            Opponent::Frozen(_) => None,
        }
    }
}

struct PolicyRef<'a>(&'a (dyn Policy + Send));

impl Policy for PolicyRef<'_> {
    fn choose(&self, env: &Env, st: &EnvState, mask: &[bool]) -> usize {
        self.0.choose(env, st, mask)
    }
}

/// Episode counts for evaluation, logging and checkpoints.
#[derive(Debug, Clone, Default)]
pub struct CoRunOptions {
    pub episodes: u64,
    pub eval_every: u64,
    pub checkpoint_every: u64,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoRunSummary {
    pub episodes: u64,
    pub submitted: u64,
    pub fooled: u64,
    pub nonlinear_submissions: u64,
    pub inequivalent_submissions: u64,
    pub last: Option<MetricsRecord>,
}

impl CoTrainer {
    /// Run episodes, writing the task log and solver metrics; checkpoints go
    /// to `out_dir/solver` and `out_dir/generator`.
    pub fn run(
        &mut self,
        opts: &CoRunOptions,
        eval: &mut dyn FnMut(&Learner) -> Result<Vec<EvalSummary>, TrainError>,
        tasks: &mut dyn Write,
        metrics: &mut dyn Write,
    ) -> Result<CoRunSummary, TrainError> {
        let dirs = opts.out_dir.as_ref().map(|d| (d.join("solver"), d.join("generator")));
        if let Some((s, g)) = &dirs {
            std::fs::create_dir_all(s)?;
            std::fs::create_dir_all(g)?;
        }
        let mut summary = CoRunSummary {
            episodes: 0,
            submitted: 0,
            fooled: 0,
            nonlinear_submissions: 0,
            inequivalent_submissions: 0,
            last: None,
        };
        while self.episodes < opts.episodes {
            let rec = self.episode()?;
            serde_json::to_writer(&mut *tasks, &rec)?;
            writeln!(tasks)?;
            summary.episodes = self.episodes;
            if rec.submitted.is_some() {
                summary.submitted += 1;
                summary.fooled += u64::from(rec.fooled);
                summary.nonlinear_submissions += u64::from(rec.linear != Some(true));
                summary.inequivalent_submissions += u64::from(rec.equivalent != Some(true));
            }
            let e = self.episodes;
            let done = e == opts.episodes;
            if (opts.eval_every > 0 && e.is_multiple_of(opts.eval_every)) || done {
                let record = self.metrics_record(eval)?;
                serde_json::to_writer(&mut *metrics, &record)?;
                writeln!(metrics)?;
                metrics.flush()?;
                summary.last = Some(record);
            }
            if let Some((sd, gd)) = &dirs {
                if (opts.checkpoint_every > 0 && e.is_multiple_of(opts.checkpoint_every)) || done {
                    self.generator.checkpoint().save(&checkpoint_path(gd, e))?;
                    if let Some(s) = self.solver() {
                        s.checkpoint().save(&checkpoint_path(sd, e))?;
                    }
                }
            }
        }
        tasks.flush()?;
        Ok(summary)
    }

    fn metrics_record(
        &mut self,
        eval: &mut dyn FnMut(&Learner) -> Result<Vec<EvalSummary>, TrainError>,
    ) -> Result<MetricsRecord, TrainError> {
        let episodes = self.episodes;
        let fooling = self.fooling_rate();
        let gen_loss = self.generator.take_mean_loss();
        match &mut self.opponent {
            Opponent::Learned(l) => {
                let evals = eval(l)?;
                Ok(MetricsRecord {
                    epoch: l.epoch,
                    episodes,
                    env_steps: l.env_steps,
                    loss: l.take_mean_loss(),
                    epsilon: l.epsilon(),
                    eta: l.lr(),
                    train_success: 1.0 - fooling,
                    evals,
                })
            }
            Opponent::Frozen(_) => Ok(MetricsRecord {
                epoch: self.generator.epoch,
                episodes,
                env_steps: self.generator.env_steps,
                loss: gen_loss,
                epsilon: self.generator.epsilon(),
                eta: self.generator.lr(),
                train_success: fooling,
                evals: Vec::new(),
            }),
        }
    }
}
