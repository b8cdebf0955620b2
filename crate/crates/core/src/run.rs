//! Preset-driven training runs shared by the command line and the tests.

use std::io::Write;
use std::path::PathBuf;

use crate::adversary::{CoRunOptions, CoRunSummary, CoTrainer, Opponent};
use crate::config::Preset;
use crate::env::Env;
use crate::nn::Network;
use crate::simplify::Equation;
use crate::taskgen::{generate_dataset, Sampler};
use crate::trainer::{
    evaluate, EvalSummary, GreedyPolicy, Learner, RunOptions, RunSummary, SolverEnv, TrainError, Trainer,
};

/// Held-out equations evaluated during training.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub name: String,
    pub equations: Vec<Equation>,
}

/// One set per test field, drawn from a generation stream separate from
/// the training tasks.
pub fn eval_sets(preset: &Preset, seed: u64) -> Vec<EvalSet> {
    preset
        .test
        .samplers(&preset.sampler)
        .into_iter()
        .enumerate()
        .map(|(i, cfg)| EvalSet {
            name: cfg.field.to_string(),
            equations: generate_dataset(&cfg, preset.test.size, seed.wrapping_add(0x7E57 + i as u64)),
        })
        .collect()
}

pub fn evaluate_sets(
    env: &Env,
    preset: &Preset,
    net: &Network,
    sets: &[EvalSet],
    seed: u64,
    workers: usize,
) -> Result<Vec<EvalSummary>, TrainError> {
    let policy = GreedyPolicy { net, enc: preset.encoder() };
    sets.iter()
        .map(|s| Ok(evaluate(env, &policy, &s.name, &s.equations, seed, workers)?.summary))
        .collect()
}

/// Where and how long to run; unset fields fall back to the preset.
#[derive(Debug, Clone, Default)]
pub struct RunRequest {
    pub epochs: Option<u64>,
    pub episodes: Option<u64>,
    pub eval_every: Option<u64>,
    pub checkpoint_every: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub workers: usize,
}

/// Fixed-distribution training on the preset's sampler.
pub fn train_solver(preset: &Preset, req: &RunRequest, log: &mut dyn Write) -> Result<RunSummary, TrainError> {
    let env = Env::solver(preset.env.clone())?;
    let sets = eval_sets(preset, preset.train.seed);
    let solver_env = SolverEnv { env: env.clone(), enc: preset.encoder(), tasks: Sampler { cfg: preset.sampler } };
    let mut trainer = Trainer::new(preset.train.clone(), solver_env)?;
    let opts = RunOptions {
        epochs: req.epochs.unwrap_or(preset.run.epochs),
        eval_every: req.eval_every.unwrap_or(preset.run.eval_every),
        checkpoint_every: req.checkpoint_every.unwrap_or(preset.run.checkpoint_every),
        out_dir: req.out_dir.clone(),
        stop_at: preset.run.stop_at,
    };
    let seed = preset.train.seed;
    let workers = req.workers.max(1);
    trainer.run(&opts, &mut |net| evaluate_sets(&env, preset, net, &sets, seed, workers), log)
}

/// Generator and solver trained against each other.
pub fn co_train(
    preset: &Preset,
    req: &RunRequest,
    tasks: &mut dyn Write,
    metrics: &mut dyn Write,
) -> Result<CoRunSummary, TrainError> {
    let g = preset
        .generator
        .as_ref()
        .ok_or_else(|| TrainError::Config(format!("preset {} has no generator", preset.name)))?;
    let env = Env::solver(preset.env.clone())?;
    let enc = preset.encoder();
    let solver = Learner::new(preset.train.clone(), enc.input_dim(), env.num_actions())?;
    let sets = eval_sets(preset, preset.train.seed);
    let mut co = CoTrainer::new(env.clone(), enc, g.gcfg.clone(), g.train.clone(), Opponent::Learned(Box::new(solver)))?;
    let opts = CoRunOptions {
        episodes: req.episodes.unwrap_or(preset.run.episodes),
        eval_every: req.eval_every.unwrap_or(preset.run.eval_every),
        checkpoint_every: req.checkpoint_every.unwrap_or(preset.run.checkpoint_every),
        out_dir: req.out_dir.clone(),
    };
    let seed = preset.train.seed;
    let workers = req.workers.max(1);
    co.run(&opts, &mut |l| evaluate_sets(&env, preset, &l.online, &sets, seed, workers), tasks, metrics)
}
