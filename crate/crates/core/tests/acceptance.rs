//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test -p symstack --test acceptance` runs everything; a numeric
//! argument (`-- 5`) runs a single criterion. Set `SYMSTACK_ACCEPT_FULL=1`
//! to give the second desk-scale run its full update budget.

mod common;

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array2;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use symstack::adversary::{fool_reward, GeneratorConfig, SeedFamily};
use symstack::analysis::render_trace;
use symstack::config::{ConfigText, Preset};
use symstack::env::{final_reward, Action, Env, EnvConfig, EnvState, Rewards, Terminal};
use symstack::expr::{enumerate_units, Expr};
use symstack::nn::Network;
use symstack::number::{BinOp, Number};
use symstack::oracle::OraclePolicy;
use symstack::run::{co_train, train_solver, RunRequest};
use symstack::simplify::{exponent_value, Equation};
use symstack::taskgen::{EqType, Field, SamplerConfig};
use symstack::trainer::{
    masked_argmax, rng_stream, run_episode, select_action, EpsilonSchedule, LrSchedule, QEnv, TabularState, Trainer,
};

/// Tolerances and budgets, pinned here.
const EXACTNESS_EPISODES: usize = 10_000;
// Near cbrt(f64::EPSILON): smaller steps drown gradients of order 1e-7 in roundoff.
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
const FD_FLOOR: f64 = 1e-7;
const FD_BATCHES: usize = 10;
const FD_TIME: Duration = Duration::from_secs(60);
const TABULAR_UPDATES: usize = 50_000;
const TABULAR_Q_TOL: f64 = 1e-2;
const MINI_TARGET: f64 = 0.9;
const MINI_UPDATES: u64 = 200_000;
const MINI_TIME: Duration = Duration::from_secs(30 * 60);
const MINI5_TARGET: f64 = 0.5;
const MINI5_UPDATES: u64 = 1_000_000;
/// Updates given to the second run unless `SYMSTACK_ACCEPT_FULL` is set.
const MINI5_QUICK_UPDATES: u64 = 100_000;
const EXACT_TOL: f64 = 1e-12;
const FUZZ_STEPS: usize = 100_000;
const CO_TRAIN_EPISODES: u64 = 10_000;

struct Outcome {
    pass: bool,
    detail: String,
    warnings: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Outcome {
        Outcome { pass, detail: detail.into(), warnings: Vec::new() }
    }
}

type Criterion = fn() -> Outcome;

fn main() {
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let criteria: [(&str, Criterion); 10] = [
        ("exactness oracle", exactness),
        ("dimension identities", dimensions),
        ("gradient correctness", gradients),
        ("tabular convergence", tabular),
        ("desk-scale learning", desk_scale),
        ("reward and schedule formulas", formulas),
        ("masking safety", masking),
        ("determinism", determinism),
        ("adversarial loop smoke", adversarial),
        ("worked example trace", worked_example),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|k| k != n) {
            continue;
        }
        let t = Instant::now();
        let out = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Outcome::new(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        for w in &out.warnings {
            println!("WARN criterion {n} ({name}): {w}");
        }
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {n} ({name}): {} [{:.1}s]", out.detail, t.elapsed().as_secs_f64());
        failed += usize::from(!out.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn real_cfg(t_max: usize) -> EnvConfig {
    EnvConfig {
        stack_size: 5,
        max_units: 5,
        eq_ops: vec![BinOp::Add, BinOp::Mul],
        constants: vec![Number::int(0), Number::int(1), Number::int(-1)],
        symbolic: false,
        complex: false,
        t_max,
        rewards: Rewards::default(),
        simplify_budget: 10_000,
        shuffle: true,
        number_cap: 500,
        submit: false,
    }
}

fn rational(n: &Number) -> BigRational {
    assert!(n.is_real());
    n.re().clone()
}

/// `a0 + a1 x = a2 + a3 x` solved directly on the drawn coefficients.
fn linear_solve(a: &[Number]) -> Option<BigRational> {
    let (a0, a1, a2, a3) = (rational(&a[0]), rational(&a[1]), rational(&a[2]), rational(&a[3]));
    let slope = a1 - a3;
    (!slope.is_zero()).then(|| (a2 - a0) / slope)
}

fn holds_at(eq: &Equation, x: &BigRational) -> bool {
    let x = Number::real(x.clone());
    match (eq.lhs.eval(&x, &Number::zero()), eq.rhs.eval(&x, &Number::zero())) {
        (Some(l), Some(r)) => l == r,
        _ => false,
    }
}

fn exactness() -> Outcome {
    let env = Env::solver(real_cfg(100)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut solved, mut eliminated, mut mismatches, mut drift) = (0, 0, 0, 0);
    for i in 0..EXACTNESS_EPISODES {
        let field = if i % 2 == 0 { Field::Z } else { Field::Q };
        let sampler = SamplerConfig::new(field, EqType::Numeric);
        let k = sampler.sample_coefficients(&mut rng);
        let truth = linear_solve(&k.a);
        let mut st = env.reset(&sampler.assemble(&k), &mut rng).unwrap();
        while !st.is_terminal() {
            let mask = env.valid_actions(&st);
            let valid: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
            let a = valid[rng.gen_range(0..valid.len())];
            env.step(&mut st, env.cfg.action(a), &mut rng);
            let failed = matches!(st.terminal, Some(Terminal::Bad | Terminal::Timeout));
            if let (Some(x), false) = (&truth, failed) {
                drift += usize::from(!holds_at(&st.equation, x));
            }
        }
        match st.terminal.unwrap() {
            Terminal::Solved => {
                solved += 1;
                let got = st.solution().and_then(|e| e.as_num().cloned());
                if truth.as_ref().map(|x| Number::real(x.clone())) != got {
                    mismatches += 1;
                }
            }
            Terminal::Eliminated => {
                eliminated += 1;
                mismatches += usize::from(truth.is_some());
            }
            _ => {}
        }
    }
    Outcome::new(
        mismatches == 0 && drift == 0 && solved > 0,
        format!(
            "{EXACTNESS_EPISODES} random episodes, {solved} solved, {eliminated} eliminated, \
             {mismatches} disagree with the direct solve, {drift} intermediate equations lost the solution"
        ),
    )
}

fn dimensions() -> Outcome {
    let mut pass = true;
    let mut detail = String::new();
    let mut warnings = Vec::new();
    for (name, input, params) in [
        ("R1", 280, 42_290_018u64),
        ("C1", 350, 42_852_019),
        ("S1", 1071, 185_250_042),
        ("AR", 315, 44_555_020),
        ("AS1", 1020, 184_438_044),
    ] {
        let d = Preset::named(name).unwrap().dimensions();
        // A tabulated action count that disagrees with the formula is
        // reported; the parameter identity is checked at the tabulated count.
        let counted = d.solver.params_at_listed_actions.unwrap_or(d.solver.params);
        let ok = d.input == input && counted == params;
        pass &= ok;
        let _ = write!(detail, "{name}: input {} params {}{}; ", d.input, counted, if ok { "" } else { " MISMATCH" });
        warnings.extend(d.warnings());
    }
    let as_warned = warnings.iter().any(|w| w.contains("43 actions") && w.contains("44 are listed"));
    pass &= as_warned;
    Outcome { pass, detail: format!("{detail}AS action count reported: {as_warned}"), warnings }
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let nets = [vec![16, 64, 48, 32, 6], vec![16, 64, 48, 40, 32, 6]];
    for sizes in &nets {
        for _ in 0..FD_BATCHES {
            let net = Network::init(sizes, &mut rng);
            let n = 8;
            let x = Array2::from_shape_fn((n, sizes[0]), |_| rng.gen_range(-1.0..1.0));
            let actions: Vec<usize> = (0..n).map(|_| rng.gen_range(0..*sizes.last().unwrap())).collect();
            let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (_, grads) = net.gradients(x.view(), &actions, &targets).unwrap();
            let loss_at = |net: &Network| net.gradients(x.view(), &actions, &targets).unwrap().0;
            let mut probe = net.clone();
            for (li, g) in grads.iter().enumerate() {
                for (idx, &gv) in g.w.indexed_iter() {
                    let orig = probe.layers[li].w[idx];
                    probe.layers[li].w[idx] = orig + FD_STEP;
                    let up = loss_at(&probe);
                    probe.layers[li].w[idx] = orig - FD_STEP;
                    let down = loss_at(&probe);
                    probe.layers[li].w[idx] = orig;
                    let fd = (up - down) / (2.0 * FD_STEP);
                    worst = worst.max((gv - fd).abs() / (gv.abs() + fd.abs()).max(FD_FLOOR));
                }
                for (idx, &gv) in g.b.indexed_iter() {
                    let orig = probe.layers[li].b[idx];
                    probe.layers[li].b[idx] = orig + FD_STEP;
                    let up = loss_at(&probe);
                    probe.layers[li].b[idx] = orig - FD_STEP;
                    let down = loss_at(&probe);
                    probe.layers[li].b[idx] = orig;
                    let fd = (up - down) / (2.0 * FD_STEP);
                    worst = worst.max((gv - fd).abs() / (gv.abs() + fd.abs()).max(FD_FLOOR));
                }
            }
        }
    }
    let elapsed = t.elapsed();
    Outcome::new(
        worst < FD_REL_TOL && elapsed < FD_TIME,
        format!(
            "{} batches on 3 and 4 hidden layers, max relative error {worst:.2e} (limit {FD_REL_TOL:.0e}), {:.1}s",
            2 * FD_BATCHES,
            elapsed.as_secs_f64()
        ),
    )
}

fn tabular() -> Outcome {
    let mdp = common::five_state();
    let table = mdp.table.clone();
    let star = common::value_iteration(&table, 0.9);
    let mut t = Trainer::new(common::tabular_config(0.9, 0.5, 11), mdp).unwrap();
    for _ in 0..TABULAR_UPDATES {
        t.train_epoch().unwrap();
    }
    let q = common::learned_q(&t, table.len());
    let mut same_policy = true;
    for (s, row) in star.iter().enumerate() {
        let mask = t.env.mask(&TabularState { state: s, steps: 0 });
        let best: Vec<f64> = row.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect();
        same_policy &= masked_argmax(&q[s], &mask) == masked_argmax(&best, &mask);
    }
    let err = common::max_error(&table, &q, &star);
    Outcome::new(
        same_policy && err < TABULAR_Q_TOL,
        format!("{TABULAR_UPDATES} updates, greedy policy optimal: {same_policy}, max |Q - Q*| = {err:.2e}"),
    )
}

fn run_mini(name: &str, updates: u64) -> (f64, u64, Duration) {
    let mut cfg = ConfigText::shipped(name).unwrap();
    cfg.set("epochs", &updates.to_string()).unwrap();
    let preset = cfg.build().unwrap();
    let t = Instant::now();
    let summary = train_solver(&preset, &RunRequest { workers: 1, ..Default::default() }, &mut std::io::sink()).unwrap();
    let success = summary.last.map_or(0.0, |r| r.evals.iter().map(|e| e.success).fold(f64::INFINITY, f64::min));
    (success, summary.epochs, t.elapsed())
}

fn desk_scale() -> Outcome {
    let (success, updates, elapsed) = run_mini("R1-mini", MINI_UPDATES);
    let mut out = Outcome::new(
        success >= MINI_TARGET && updates <= MINI_UPDATES && elapsed < MINI_TIME,
        format!(
            "R1-mini greedy success {:.1}% on 200 held-out equations after {updates} updates in {:.0}s",
            100.0 * success,
            elapsed.as_secs_f64()
        ),
    );
    let full = std::env::var_os("SYMSTACK_ACCEPT_FULL").is_some();
    let budget = if full { MINI5_UPDATES } else { MINI5_QUICK_UPDATES };
    let (s5, u5, e5) = run_mini("R5-mini", budget);
    let note = format!("R5-mini reached {:.1}% after {u5} updates in {:.0}s", 100.0 * s5, e5.as_secs_f64());
    if s5 < MINI5_TARGET {
        let scope = if full { "full budget" } else { "shortened budget; set SYMSTACK_ACCEPT_FULL=1 for 10^6 updates" };
        out.warnings.push(format!("{note}, below {:.0}% ({scope})", 100.0 * MINI5_TARGET));
    } else {
        out.detail.push_str(&format!("; {note}"));
    }
    out
}

fn formulas() -> Outcome {
    let mut bad = Vec::new();
    let mut check = |label: &str, got: f64, want: f64| {
        if (got - want).abs() > EXACT_TOL {
            bad.push(format!("{label}: {got} != {want}"));
        }
    };
    let exp = EpsilonSchedule::Exponential { init: 1.0, fin: 0.1, t_eps: 5e6 };
    check("exponential at 0", exp.value(0, 0.0), 1.0);
    check("exponential at T_eps", exp.value(5_000_000, 0.0), 0.1 + 0.9 * (-1f64).exp());
    let ad = EpsilonSchedule::Adaptive { init: 0.5, fin: 0.1, alpha: 1.0 };
    check("adaptive epsilon at s = 0.5", ad.value(0, 0.5), 0.3);
    check("fixed eta", LrSchedule::Fixed(0.05).value(0.3), 0.05);
    let lr = LrSchedule::Adaptive { init: 0.05, fin: 0.005, alpha: 0.5 };
    check("adaptive eta at s = 1", lr.value(1.0), 0.005);
    check("adaptive eta at s = 0.75", lr.value(0.75), 0.0275);
    let r = Rewards::default();
    check("final reward (0, 0)", final_reward(0, 0, 5, &r), 3.0);
    check("final reward (1, 0), S = 5", final_reward(1, 0, 5, &r), 2.8);
    check("final reward (2, 3), S = 4", final_reward(2, 3, 4, &r), 1.75);
    check("final reward (5, 2), S = 5", final_reward(5, 2, 5, &r), 1.5);

    let mut cfg = real_cfg(100);
    cfg.stack_size = 4;
    cfg.rewards.r_so = 0.0;
    let env = Env::solver(cfg).unwrap();
    let gcfg = GeneratorConfig {
        family: SeedFamily::Constant,
        sampler: SamplerConfig::new(Field::Q, EqType::Numeric),
        r_fool: 3.0,
        p_step: 0.01,
    };
    let mut st = env.reset(&Equation::parse("x = 2").unwrap(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    check("generator fools, empty stack", fool_reward(true, &st, &env, &gcfg), 3.0);
    st.stack = vec![Expr::int(1), Expr::int(2)];
    check("generator caught, two entries, S = 4", fool_reward(false, &st, &env, &gcfg), -0.5);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let q = [1.0, 5.0, 2.0];
    let picks = [
        select_action(&q, &[true, true, true], 0.0, &mut rng).unwrap(),
        select_action(&q, &[true, false, true], 0.0, &mut rng).unwrap(),
    ];
    if picks != [1, 2] {
        bad.push(format!("greedy picks {picks:?} != [1, 2]"));
    }
    Outcome::new(bad.is_empty(), if bad.is_empty() { "15 examples exact to 1e-12".into() } else { bad.join("; ") })
}

/// Preconditions of an action, restated from the action semantics.
fn allowed(st: &EnvState, cfg: &EnvConfig, a: Action) -> bool {
    let units = |e: &Expr| enumerate_units(e).len();
    match a {
        Action::CopyLhs(n) => n >= 1 && n <= units(&st.equation.lhs),
        Action::CopyRhs(n) => n >= 1 && n <= units(&st.equation.rhs),
        Action::EqOp(op) => match (op, st.stack.first()) {
            (_, None) => false,
            (BinOp::Add, _) => true,
            (BinOp::Mul, Some(g)) => !g.is_zero(),
            (BinOp::Pow, Some(g)) => matches!(exponent_value(g), Some(k) if k != 0),
        },
        Action::PushConst(i) => i < cfg.constants.len(),
        Action::StackOp(_) => st.stack.len() >= 2,
        Action::Submit => false,
    }
}

fn masking() -> Outcome {
    let mut configs = vec![];
    for name in ["R1", "C1", "S1", "AR"] {
        let p = Preset::named(name).unwrap();
        let mut cfg = p.env.clone();
        cfg.t_max = 60;
        configs.push((name, cfg, p.sampler));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut steps, mut violations, mut overfull, mut zero_mul) = (0, 0, 0, 0);
    let mut k = 0;
    while steps < FUZZ_STEPS {
        let (_, cfg, sampler) = &configs[k % configs.len()];
        k += 1;
        let env = Env::solver(cfg.clone()).unwrap();
        let mut st = env.reset(&sampler.sample_equation(&mut rng), &mut rng).unwrap();
        while !st.is_terminal() && steps < FUZZ_STEPS {
            let mask = env.valid_actions(&st);
            for (i, &m) in mask.iter().enumerate() {
                // A masked-in action must satisfy its preconditions.
                if m && !allowed(&st, cfg, cfg.action(i)) {
                    violations += 1;
                }
            }
            let valid: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
            let a = cfg.action(valid[rng.gen_range(0..valid.len())]);
            if a == Action::EqOp(BinOp::Mul) && st.stack.first().is_some_and(Expr::is_zero) {
                zero_mul += 1;
            }
            env.step(&mut st, a, &mut rng);
            steps += 1;
            overfull += usize::from(st.stack.len() > cfg.stack_size);
        }
    }
    Outcome::new(
        violations + overfull + zero_mul == 0,
        format!(
            "{steps} steps over R, C, S and AR configurations: {violations} masked-in invalid actions, \
             {overfull} stack overflows past S, {zero_mul} multiplications by zero"
        ),
    )
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let solver_run = |dir: &Path| {
        let mut cfg = ConfigText::shipped("R1-mini").unwrap();
        cfg.set("seed", "41").unwrap();
        let p = cfg.build().unwrap();
        let req = RunRequest {
            epochs: Some(3000),
            eval_every: Some(1000),
            checkpoint_every: Some(1000),
            out_dir: Some(dir.to_path_buf()),
            workers: 1,
            ..Default::default()
        };
        let mut log = std::fs::File::create(dir.join("metrics.jsonl")).unwrap();
        train_solver(&p, &req, &mut log).unwrap();
    };
    let co_run = |dir: &Path| {
        let mut cfg = ConfigText::shipped("AR-mini").unwrap();
        cfg.set("seed", "43").unwrap();
        let p = cfg.build().unwrap();
        let req = RunRequest {
            episodes: Some(300),
            eval_every: Some(100),
            checkpoint_every: Some(150),
            out_dir: Some(dir.to_path_buf()),
            workers: 2,
            ..Default::default()
        };
        let mut tasks = std::fs::File::create(dir.join("tasks.jsonl")).unwrap();
        let mut metrics = std::fs::File::create(dir.join("metrics.jsonl")).unwrap();
        co_train(&p, &req, &mut tasks, &mut metrics).unwrap();
    };
    let mut pass = true;
    let mut files = 0;
    for (label, run) in [("solver", &solver_run as &dyn Fn(&Path)), ("co-training", &co_run)] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run(a.path());
        run(b.path());
        let (fa, fb) = (read_dir_bytes(a.path()), read_dir_bytes(b.path()));
        files += fa.len();
        if fa != fb || fa.is_empty() {
            pass = false;
            println!("  {label} runs differ");
        }
    }
    Outcome::new(pass, format!("repeated seeded solver and co-training runs, {files} files bitwise identical"))
}

fn adversarial() -> Outcome {
    let preset = Preset::named("AR-mini").unwrap();
    let req = RunRequest { episodes: Some(CO_TRAIN_EPISODES), workers: 1, ..Default::default() };
    match co_train(&preset, &req, &mut std::io::sink(), &mut std::io::sink()) {
        Ok(s) => Outcome::new(
            s.episodes == CO_TRAIN_EPISODES && s.nonlinear_submissions == 0 && s.inequivalent_submissions == 0,
            format!(
                "{} episodes, {} submissions, {} fooled the solver, {} nonlinear, {} not equivalent to the seed",
                s.episodes, s.submitted, s.fooled, s.nonlinear_submissions, s.inequivalent_submissions
            ),
        ),
        Err(e) => Outcome::new(false, format!("aborted: {e}")),
    }
}

fn worked_example() -> Outcome {
    let env = Env::solver(real_cfg(100)).unwrap();
    let eq = Equation::parse("-1/5 + 3/4*x = 5/8 + 2*x").unwrap();
    let r = run_episode(&env, &OraclePolicy, &eq, &mut rng_stream(10, 0), Some(0)).unwrap();
    let expected = BigRational::new(BigInt::from(-33), BigInt::from(50));
    let text = render_trace(&r.trace);
    let last = text.lines().last().unwrap_or_default().to_string();
    // Every intermediate equation still holds at the exact solution.
    let consistent = r.trace.iter().all(|rec| {
        Equation::parse(&format!("{} = {}", rec.lhs, rec.rhs)).is_ok_and(|e| holds_at(&e, &expected))
    });
    let ok = r.terminal == Terminal::Solved
        && r.final_state.solution() == Some(Expr::num(Number::real(expected.clone())))
        && last.ends_with("x = -33/50")
        && consistent;
    Outcome::new(ok, format!("scripted policy, {} steps, final line {last:?}, all steps consistent: {consistent}", r.steps))
}
