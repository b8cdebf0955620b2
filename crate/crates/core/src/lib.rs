//! Learning to solve linear equations by driving an exact stack calculator
//! with a double deep-Q network.
//!
//! The layers build on each other: [`number`] and [`expr`] hold exact
//! expressions, [`simplify`] normalizes them, [`env`] is the calculator,
//! [`encoder`] turns states into network input, [`nn`] and [`trainer`]
//! learn, [`adversary`] trains a task generator against the solver, and
//! [`analysis`] summarizes traces. [`config`] names the shipped presets and
//! [`run`] wires a preset into a training run.

pub mod expr;
pub mod number;
pub mod poly;
pub mod simplify;
pub mod env;
pub mod encoder;
pub mod nn;
pub mod trainer;
pub mod oracle;
pub mod taskgen;
pub mod adversary;
pub mod analysis;
pub mod config;
pub mod run;

pub use config::{ConfigText, Preset, PresetError};
pub use encoder::EncoderConfig;
pub use env::{Action, Env, EnvConfig, EnvState, Rewards, Terminal};
pub use expr::Expr;
pub use nn::{Checkpoint, Network};
pub use number::{BinOp, Number};
pub use simplify::Equation;
pub use trainer::{Learner, TrainConfig, TrainError};
