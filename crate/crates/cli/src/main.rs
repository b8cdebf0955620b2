use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use symstack::analysis::{metrics_csv, read_metrics, read_traces, render_trace, transition_graph, write_traces};
use symstack::config::{preset_names, ConfigText, Preset, PresetKind};
use symstack::env::{Env, Terminal, TraceRecord};
use symstack::nn::Checkpoint;
use symstack::oracle::OraclePolicy;
use symstack::run::{co_train, train_solver, RunRequest};
use symstack::simplify::Equation;
use symstack::taskgen::{generate_dataset, load_dataset, render_dataset, EqType, Field, SamplerConfig};
use symstack::trainer::{episode_seed, run_episode, summarize, GreedyPolicy, Policy};

#[derive(Parser)]
#[command(name = "symstack", version, about = "Train and run equation-solving agents on an exact stack calculator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a solver, or a generator and solver for adversarial presets.
    Train(TrainArgs),
    /// Greedy evaluation of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Solve one equation and print the step-by-step trace.
    Solve(SolveArgs),
    /// Sample equations to a file, one per line.
    GenDataset(GenArgs),
    /// Turn trace logs into a transition graph and metrics logs into CSV.
    Analyze(AnalyzeArgs),
    /// List the shipped presets, or print one preset's settings and network dimensions.
    Presets {
        name: Option<String>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Shipped preset name.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set eta=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Updates for solver presets.
    #[arg(long)]
    epochs: Option<u64>,
    /// Generator episodes for adversarial presets.
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Output directory; defaults to `$SYMSTACK_OUT/<preset>-seed<seed>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "SYMSTACK_OUT", default_value = "runs", hide_env_values = true)]
    out_root: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct PolicyArgs {
    /// Checkpoint file, or `oracle` for the scripted policy.
    #[arg(long)]
    checkpoint: String,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long)]
    dataset: PathBuf,
    /// Per-equation outcomes.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Step records for `analyze`.
    #[arg(long)]
    traces: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(allow_hyphen_values = true)]
    equation: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "Z")]
    field: String,
    #[arg(long = "type", default_value = "numeric")]
    eq_type: String,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability of a zero coefficient on the symbolic constant.
    #[arg(long, default_value_t = 0.0)]
    p0: f64,
    #[arg(long, default_value_t = 10)]
    int_bound: i64,
    #[arg(long, default_value_t = 50)]
    num_bound: i64,
    #[arg(long, default_value_t = 10)]
    den_bound: i64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Trace logs written by `eval --traces`.
    #[arg(long, num_args = 1..)]
    traces: Vec<PathBuf>,
    #[arg(long)]
    dot: Option<PathBuf>,
    /// Nodes and edges below this share of visits are dropped from the graph.
    #[arg(long, default_value_t = 0.0)]
    min_weight: f64,
    /// Metrics log written by `train`.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// Bad input maps to exit code 2, failures while doing the work to 1.
enum Failure {
    Usage(anyhow::Error),
    Task(anyhow::Error),
}

type Outcome = Result<(), Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn task(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Task(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Solve(a) => cmd_solve(a),
        Command::GenDataset(a) => cmd_gen_dataset(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Presets { name } => cmd_presets(name),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Task(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

impl ConfigArgs {
    fn text(&self, default: Option<&str>) -> Result<ConfigText, Failure> {
        let mut text = match (&self.preset, &self.config, default) {
            (Some(name), _, _) => ConfigText::shipped(name).map_err(usage)?,
            (None, Some(path), _) => {
                ConfigText::load(path).with_context(|| format!("reading {}", path.display())).map_err(usage)?
            }
            (None, None, Some(name)) => ConfigText::shipped(name).map_err(usage)?,
            (None, None, None) => return Err(usage(anyhow!("one of --preset or --config is required"))),
        };
        for s in &self.sets {
            text.set_assignment(s).map_err(usage)?;
        }
        Ok(text)
    }
}

fn print_dimensions(preset: &Preset) {
    eprint!("{}", preset.dimensions());
}

fn cmd_presets(name: Option<String>) -> Outcome {
    match name {
        None => {
            for n in preset_names() {
                println!("{n}");
            }
        }
        Some(n) => {
            let text = ConfigText::shipped(&n).map_err(usage)?;
            let preset = text.build().map_err(usage)?;
            print!("{}", text.render());
            println!();
            print!("{}", preset.dimensions());
        }
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).with_context(|| format!("creating {}", path.display())).map_err(task)
}

fn cmd_train(a: TrainArgs) -> Outcome {
    let mut text = a.config.text(None)?;
    if let Some(seed) = a.seed {
        text.set("seed", &seed.to_string()).map_err(usage)?;
    }
    let preset = text.build().map_err(usage)?;
    print_dimensions(&preset);
    let out = a.out.unwrap_or_else(|| a.out_root.join(format!("{}-seed{}", preset.name, preset.train.seed)));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display())).map_err(task)?;
    std::fs::write(out.join("config.conf"), text.render()).map_err(task)?;
    let req = RunRequest {
        epochs: a.epochs,
        episodes: a.episodes,
        eval_every: a.eval_every,
        checkpoint_every: a.checkpoint_every,
        out_dir: Some(out.clone()),
        workers: a.workers,
    };
    let mut metrics = create(&out.join("metrics.jsonl"))?;
    let last = match preset.kind {
        PresetKind::Solver => {
            let s = train_solver(&preset, &req, &mut metrics).map_err(task)?;
            println!("trained {} for {} updates{}", preset.name, s.epochs, if s.stopped_early { " (target reached)" } else { "" });
            s.last
        }
        PresetKind::Adversarial => {
            let mut tasks = create(&out.join("tasks.jsonl"))?;
            let s = co_train(&preset, &req, &mut tasks, &mut metrics).map_err(task)?;
            tasks.flush().map_err(task)?;
            println!(
                "co-trained {} for {} episodes: {} submitted, {} fooled the solver",
                preset.name, s.episodes, s.submitted, s.fooled
            );
            s.last
        }
    };
    metrics.flush().map_err(task)?;
    for e in last.iter().flat_map(|r| &r.evals) {
        println!("{}", eval_line(&e.name, e.success, e.avg_steps, e.episodes));
    }
    println!("output in {}", out.display());
    Ok(())
}

fn eval_line(name: &str, success: f64, avg_steps: Option<f64>, n: usize) -> String {
    let steps = avg_steps.map_or("-".to_string(), |s| format!("{s:.2}"));
    format!("{name}: success {:.1}% over {n} equations, avg steps {steps}", 100.0 * success)
}

/// A network checkpoint or the scripted policy.
enum Agent {
    Net(Checkpoint),
    Oracle,
}

struct Loaded {
    preset: Preset,
    env: Env,
    agent: Agent,
}

impl Loaded {
    fn policy(&self) -> Box<dyn Policy + '_> {
        match &self.agent {
            Agent::Net(c) => Box::new(GreedyPolicy { net: &c.net, enc: self.preset.encoder() }),
            Agent::Oracle => Box::new(OraclePolicy),
        }
    }
}

fn load_agent(a: &PolicyArgs) -> Result<Loaded, Failure> {
    let preset = a.config.text(Some("R1"))?.build().map_err(usage)?;
    let env = Env::solver(preset.env.clone()).map_err(usage)?;
    let agent = if a.checkpoint == "oracle" {
        Agent::Oracle
    } else {
        let path = Path::new(&a.checkpoint);
        let c = Checkpoint::load(path).with_context(|| format!("loading {}", path.display())).map_err(usage)?;
        let expected = preset.layer_sizes();
        if c.net.sizes != expected {
            return Err(usage(anyhow!(
                "checkpoint {} has layer sizes {:?} but preset {} expects {:?}",
                path.display(),
                c.net.sizes,
                preset.name,
                expected
            )));
        }
        Agent::Net(c)
    };
    Ok(Loaded { preset, env, agent })
}

fn cmd_eval(a: EvalArgs) -> Outcome {
    let loaded = load_agent(&a.policy)?;
    let dataset = load_dataset(&a.dataset).with_context(|| format!("reading {}", a.dataset.display())).map_err(usage)?;
    let policy = loaded.policy();
    let want_traces = a.traces.is_some();
    let run = |(i, eq): (usize, &Equation)| {
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(a.seed, i));
        run_episode(&loaded.env, policy.as_ref(), eq, &mut rng, want_traces.then_some(i))
            .map(|r| (r.terminal, r.steps, r.trace))
            .map_err(|e| anyhow!("equation {} ({eq}): {e}", i + 1))
    };
    let results: anyhow::Result<Vec<_>> = if a.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(a.workers).build().map_err(task)?;
        pool.install(|| dataset.par_iter().enumerate().map(run).collect())
    } else {
        dataset.iter().enumerate().map(run).collect()
    };
    let results = results.map_err(usage)?;
    let outcomes: Vec<(Terminal, usize)> = results.iter().map(|(t, s, _)| (*t, *s)).collect();
    let name = a.dataset.file_stem().map_or("dataset".into(), |s| s.to_string_lossy().into_owned());
    let summary = summarize(&name, &outcomes);
    println!("{}", eval_line(&summary.name, summary.success, summary.avg_steps, summary.episodes));
    if let Some(path) = &a.csv {
        let mut w = create(path)?;
        writeln!(w, "index,equation,terminal,solved,steps").map_err(task)?;
        for (i, (eq, (t, s))) in dataset.iter().zip(&outcomes).enumerate() {
            writeln!(w, "{},\"{}\",{},{},{}", i + 1, eq, t.label(), t.is_success(), s).map_err(task)?;
        }
        w.flush().map_err(task)?;
    }
    if let Some(path) = &a.traces {
        let mut w = create(path)?;
        let records: Vec<TraceRecord> = results.into_iter().flat_map(|(_, _, tr)| tr).collect();
        write_traces(&mut w, &records).map_err(task)?;
        w.flush().map_err(task)?;
    }
    Ok(())
}

fn cmd_solve(a: SolveArgs) -> Outcome {
    let loaded = load_agent(&a.policy)?;
    let eq = Equation::parse(&a.equation).map_err(|e| usage(anyhow!("cannot parse {:?}: {e}", a.equation)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let r = run_episode(&loaded.env, loaded.policy().as_ref(), &eq, &mut rng, Some(0)).map_err(usage)?;
    print!("{}", render_trace(&r.trace));
    if r.terminal.is_success() {
        Ok(())
    } else {
        Err(task(anyhow!("not solved: episode ended with {}", r.terminal.label())))
    }
}

fn cmd_gen_dataset(a: GenArgs) -> Outcome {
    let field: Field = a.field.parse().map_err(|e: String| usage(anyhow!(e)))?;
    let eq_type: EqType = a.eq_type.parse().map_err(|e: String| usage(anyhow!(e)))?;
    let cfg = SamplerConfig {
        field,
        eq_type,
        p0: a.p0,
        int_bound: a.int_bound,
        num_bound: a.num_bound,
        den_bound: a.den_bound,
    };
    cfg.validate().map_err(|e| usage(anyhow!(e)))?;
    let eqs = generate_dataset(&cfg, a.n, a.seed);
    let comment = format!("field={field} type={eq_type} p0={} n={} seed={}", a.p0, a.n, a.seed);
    let text = render_dataset(&eqs, Some(&comment));
    match &a.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(task)?,
        None => io::stdout().write_all(text.as_bytes()).map_err(task)?,
    }
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs) -> Outcome {
    if a.traces.is_empty() && a.metrics.is_none() {
        return Err(usage(anyhow!("nothing to analyze: give --traces and/or --metrics")));
    }
    if !a.traces.is_empty() {
        let mut episodes = Vec::new();
        for path in &a.traces {
            let f = File::open(path).with_context(|| format!("opening {}", path.display())).map_err(usage)?;
            episodes.extend(read_traces(&mut BufReader::new(f)).with_context(|| path.display().to_string()).map_err(usage)?);
        }
        let g = transition_graph(&episodes).map_err(usage)?;
        let dot = g.to_dot(a.min_weight);
        match &a.dot {
            Some(path) => std::fs::write(path, dot).map_err(task)?,
            None => print!("{dot}"),
        }
        eprintln!("{} episodes, {} superstate visits", episodes.len(), g.total_visits());
    }
    if let Some(path) = &a.metrics {
        let f = File::open(path).with_context(|| format!("opening {}", path.display())).map_err(usage)?;
        let records = read_metrics(&mut BufReader::new(f)).with_context(|| path.display().to_string()).map_err(usage)?;
        let csv = metrics_csv(&records);
        match &a.csv {
            Some(out) => std::fs::write(out, csv).map_err(task)?,
            None => print!("{csv}"),
        }
    }
    Ok(())
}
