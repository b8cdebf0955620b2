use std::path::Path;
use std::process::{Command, Output};

use num_traits::Zero;
use symstack::expr::Expr;
use symstack::simplify::Equation;

fn symstack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symstack")).args(args).env_remove("SYMSTACK_OUT").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = symstack(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small networks and test sets so a full run takes seconds.
const SMALL_R1: &[&str] = &["--preset", "R1", "--set", "hidden=32,16,16", "--set", "test_size=20", "--set", "M=2000"];

fn train_small(out: &Path, seed: &str) {
    let mut args = vec!["train"];
    args.extend_from_slice(SMALL_R1);
    args.extend_from_slice(&["--seed", seed, "--epochs", "300", "--out", path(out)]);
    ok(&args);
}

#[test]
fn train_writes_metrics_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    train_small(&out, "7");
    let metrics = std::fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 1);
    assert!(metrics.contains("\"epoch\":300"));
    assert!(out.join("config.conf").exists());
    let ckpts: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".symq"))
        .collect();
    assert_eq!(ckpts.len(), 1, "one final checkpoint");
}

#[test]
fn training_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train_small(&a, "3");
    train_small(&b, "3");
    for entry in std::fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        let x = std::fs::read(a.join(&name)).unwrap();
        let y = std::fs::read(b.join(&name)).unwrap();
        assert!(x == y, "{name:?} differs between identical runs");
    }
}

#[test]
fn default_output_follows_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train"];
    args.extend_from_slice(SMALL_R1);
    args.extend_from_slice(&["--seed", "5", "--epochs", "50"]);
    let o = Command::new(env!("CARGO_BIN_EXE_symstack")).args(&args).env("SYMSTACK_OUT", dir.path()).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("R1-seed5").join("metrics.jsonl").exists());
}

#[test]
fn adversarial_presets_co_train() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("as1");
    let text = ok(&[
        "train", "--preset", "AS1", "--set", "hidden=16,16,16,16", "--set", "gen_hidden=16,16,16,16",
        "--set", "test_size=5", "--set", "M=500", "--set", "gen_M=500", "--set", "t_max=10",
        "--episodes", "3", "--out", path(&out),
    ]);
    assert!(text.contains("co-trained AS1 for 3 episodes"), "{text}");
    assert_eq!(std::fs::read_to_string(out.join("tasks.jsonl")).unwrap().lines().count(), 3);
    assert!(out.join("generator").is_dir() && out.join("solver").is_dir());
}

#[test]
fn unknown_preset_lists_the_valid_names() {
    let o = symstack(&["train", "--preset", "R9"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("R1") && err.contains("AS2") && err.contains("R1-mini"), "{err}");
}

#[test]
fn invalid_overrides_are_reported_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let o = symstack(&["train", "--preset", "R1", "--set", "eta=-1", "--set", "gamma=2", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("eta") && err.contains("gamma"), "{err}");
    assert!(!out.exists());
}

#[test]
fn oracle_solves_a_one_macro_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("shift.txt");
    ok(&["gen-dataset", "--type", "shift", "--int-bound", "5", "--n", "100", "--seed", "1", "--out", path(&data)]);
    let csv = dir.path().join("out.csv");
    let text = ok(&["eval", "--checkpoint", "oracle", "--dataset", path(&data), "--csv", path(&csv)]);
    assert!(text.contains("success 100.0% over 100 equations"), "{text}");
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count(), 101);
    assert!(rows.lines().skip(1).all(|l| l.ends_with(",true,4")), "{rows}");
}

#[test]
fn random_checkpoint_runs_to_completion() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    train_small(&out, "1");
    let ckpt = out.join("checkpoint-0000000300.symq");
    let data = dir.path().join("z.txt");
    ok(&["gen-dataset", "--n", "20", "--out", path(&data)]);
    let mut args = vec!["eval", "--checkpoint", path(&ckpt), "--dataset", path(&data)];
    args.extend_from_slice(SMALL_R1);
    let text = ok(&args);
    assert!(text.contains("over 20 equations"), "{text}");
}

#[test]
fn mismatched_checkpoint_names_both_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    train_small(&out, "1");
    let ckpt = out.join("checkpoint-0000000300.symq");
    let o = symstack(&["solve", "--checkpoint", path(&ckpt), "--preset", "R1-mini", "x + 1 = 2"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("[280, 32, 16, 16, 18]") && err.contains("[280, 256, 128, 64, 18]"), "{err}");
}

#[test]
fn solve_prints_the_worked_example() {
    let text = ok(&["solve", "--checkpoint", "oracle", "-1/5 + 3/4*x = 5/8 + 2*x"]);
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("solved:") && last.ends_with("x = -33/50"), "{text}");
}

#[test]
fn solved_input_gives_a_zero_step_trace() {
    let text = ok(&["solve", "--checkpoint", "oracle", "x = 1"]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert!(lines[1].trim_start().starts_with("0  start"));
    assert_eq!(lines[2], "solved: x = 1");
}

#[test]
fn garbage_is_a_parse_error() {
    let o = symstack(&["solve", "--checkpoint", "oracle", "x + = ) 2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cannot parse"));
}

#[test]
fn unfinished_episode_is_a_task_failure() {
    // Two macros need eight steps.
    let o = symstack(&["solve", "--checkpoint", "oracle", "--set", "t_max=6", "2*x + 1 = 3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).lines().last().unwrap().starts_with("step_limit:"));
}

#[test]
fn generated_datasets_reparse() {
    let text = ok(&["gen-dataset", "--field", "Q", "--n", "1000", "--seed", "4"]);
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines.len(), 1000);
    for l in lines {
        Equation::parse(l).unwrap_or_else(|e| panic!("{l}: {e}"));
    }
    assert_eq!(text, ok(&["gen-dataset", "--field", "Q", "--n", "1000", "--seed", "4"]));
}

fn numbers(e: &Expr, out: &mut Vec<symstack::Number>) {
    match e {
        Expr::Num(n) => out.push(n.clone()),
        Expr::Add(ts) | Expr::Mul(ts) => ts.iter().for_each(|t| numbers(t, out)),
        Expr::Pow(b, x) => {
            numbers(b, out);
            numbers(x, out);
        }
        Expr::Unknown | Expr::SymConst => {}
    }
}

#[test]
fn gaussian_integer_datasets_have_integer_parts() {
    let text = ok(&["gen-dataset", "--field", "Z+iZ", "--n", "200", "--seed", "9"]);
    let mut seen_imag = false;
    for l in text.lines().filter(|l| !l.starts_with('#')) {
        let eq = Equation::parse(l).unwrap();
        let mut ns = Vec::new();
        numbers(&eq.lhs, &mut ns);
        numbers(&eq.rhs, &mut ns);
        for n in ns {
            assert!(n.re().is_integer() && n.im().is_integer(), "{n} in {l}");
            seen_imag |= !n.im().is_zero();
        }
    }
    assert!(seen_imag);
}

#[test]
fn bad_dataset_options_are_usage_errors() {
    assert_eq!(symstack(&["gen-dataset", "--field", "R"]).status.code(), Some(2));
    assert_eq!(symstack(&["gen-dataset", "--type", "symbolic", "--p0", "2"]).status.code(), Some(2));
    assert_eq!(symstack(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn analyze_turns_traces_into_dot_and_metrics_into_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.txt");
    ok(&["gen-dataset", "--n", "30", "--seed", "2", "--out", path(&data)]);
    let traces = dir.path().join("t.jsonl");
    ok(&["eval", "--checkpoint", "oracle", "--dataset", path(&data), "--traces", path(&traces)]);
    let dot = dir.path().join("g.dot");
    ok(&["analyze", "--traces", path(&traces), "--dot", path(&dot)]);
    let g = std::fs::read_to_string(&dot).unwrap();
    assert!(g.starts_with("digraph") && g.trim_end().ends_with('}'), "{g}");
    assert!(g.contains("N+N*x=N+N*x"), "{g}");

    let out = dir.path().join("run");
    train_small(&out, "2");
    let csv = ok(&["analyze", "--metrics", path(&out.join("metrics.jsonl"))]);
    assert!(csv.starts_with("epoch,episodes,env_steps"), "{csv}");
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn presets_report_dimensions() {
    let names = ok(&["presets"]);
    assert_eq!(names.lines().count(), 15);
    let r1 = ok(&["presets", "R1"]);
    assert!(r1.contains("input dim: 280 (listed 280)") && r1.contains("solver parameters: 42290018 (listed 42290018)"));
    let as1 = ok(&["presets", "AS1"]);
    assert!(as1.contains("43 actions") && as1.contains("44 are listed"), "{as1}");
}
