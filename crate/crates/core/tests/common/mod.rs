//! Tabular helpers shared by the learning tests and the acceptance run.

use symstack::trainer::{EpsilonSchedule, LrSchedule, TabularMdp, TrainConfig, Trainer};

pub type Table = Vec<Vec<Option<(Option<usize>, f64)>>>;

/// Optimal Q-values by value iteration; masked entries stay `None`.
pub fn value_iteration(table: &Table, gamma: f64) -> Vec<Vec<Option<f64>>> {
    let mut q: Vec<Vec<Option<f64>>> = table.iter().map(|row| row.iter().map(|e| e.map(|_| 0.0)).collect()).collect();
    for _ in 0..10_000 {
        let v: Vec<f64> = q.iter().map(|row| row.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
        for (s, row) in table.iter().enumerate() {
            for (a, e) in row.iter().enumerate() {
                if let Some((next, r)) = e {
                    q[s][a] = Some(r + next.map_or(0.0, |n| gamma * v[n]));
                }
            }
        }
    }
    q
}

pub fn tabular_config(gamma: f64, eta: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        gamma,
        memory: 2000,
        batch: 32,
        explore_steps: 1,
        target_period: 10,
        target_blend: 1.0,
        epsilon: EpsilonSchedule::Exponential { init: 1.0, fin: 1.0, t_eps: 1.0 },
        lr: LrSchedule::Fixed(eta),
        momentum: 0.0,
        window: 100,
        hidden: vec![],
        seed,
    }
}

pub fn learned_q(trainer: &Trainer<TabularMdp>, states: usize) -> Vec<Vec<f64>> {
    (0..states)
        .map(|s| {
            let mut x = vec![0.0; states];
            x[s] = 1.0;
            trainer.learner.online.forward(&x).unwrap()
        })
        .collect()
}

pub fn max_error(table: &Table, q: &[Vec<f64>], star: &[Vec<Option<f64>>]) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..table.len() {
        for a in 0..table[s].len() {
            if let Some(v) = star[s][a] {
                worst = worst.max((q[s][a] - v).abs());
            }
        }
    }
    worst
}

/// Five states with masked actions, detours and a delayed large reward.
pub fn five_state() -> TabularMdp {
    TabularMdp {
        table: vec![
            vec![Some((Some(1), 0.0)), Some((None, 1.0)), None],
            vec![Some((Some(2), 0.0)), Some((Some(0), 0.5)), Some((None, 0.2))],
            vec![Some((Some(3), -0.1)), Some((Some(4), 0.0)), None],
            vec![Some((None, 3.0)), Some((Some(0), 0.0)), Some((Some(2), 0.0))],
            vec![Some((None, -1.0)), Some((Some(3), 0.1)), None],
        ],
        starts: vec![0, 1, 2, 3, 4],
        horizon: 30,
    }
}

