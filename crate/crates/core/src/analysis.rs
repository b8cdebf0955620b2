//! Strategy analysis: superstates, transition graphs, trace listings and
//! metrics tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::env::{Terminal, TraceRecord};
use crate::expr::{parse_expression, Expr};
use crate::simplify::Equation;
use crate::trainer::MetricsRecord;

/// Equation pattern with every literal replaced by `N`, commutative
/// operands sorted, and the side containing `x` first (the lexicographically
/// smaller side first when both or neither do).
pub fn superstate_of(eq: &Equation) -> String {
    let (l, r) = (pattern(&eq.lhs), pattern(&eq.rhs));
    let (lx, rx) = (eq.lhs.contains_x(), eq.rhs.contains_x());
    let lhs_first = match (lx, rx) {
        (true, false) => true,
        (false, true) => false,
        _ => l <= r,
    };
    if lhs_first {
        format!("{l}={r}")
    } else {
        format!("{r}={l}")
    }
}

/// Superstate of a trace line: failure terminals map to their label.
pub fn superstate_of_record(rec: &TraceRecord) -> Result<String, AnalysisError> {
    match rec.terminal {
        Some(t @ (Terminal::Timeout | Terminal::Bad | Terminal::StepLimit)) => Ok(t.label().to_string()),
        _ => {
            let side = |s: &str| parse_expression(s).map_err(|e| AnalysisError::Parse(format!("{s:?}: {e}")));
            Ok(superstate_of(&Equation::new(side(&rec.lhs)?, side(&rec.rhs)?)))
        }
    }
}

fn rank(e: &Expr) -> u8 {
    if e.contains_x() {
        2
    } else if e.has_symbols() {
        1
    } else {
        0
    }
}

fn sorted_parts(items: &[Expr], wrap: impl Fn(&Expr) -> bool) -> Vec<String> {
    let mut parts: Vec<(u8, String)> = items
        .iter()
        .map(|e| {
            let p = pattern(e);
            (rank(e), if wrap(e) { format!("({p})") } else { p })
        })
        .collect();
    parts.sort();
    parts.into_iter().map(|(_, p)| p).collect()
}

/// Term pattern over `N x c + * ^ ( )`.
pub fn pattern(e: &Expr) -> String {
    match e {
        Expr::Num(_) => "N".into(),
        Expr::Unknown => "x".into(),
        Expr::SymConst => "c".into(),
        Expr::Add(ts) => sorted_parts(ts, |t| matches!(t, Expr::Add(_))).join("+"),
        Expr::Mul(fs) => sorted_parts(fs, |f| matches!(f, Expr::Add(_) | Expr::Mul(_))).join("*"),
        Expr::Pow(b, x) => {
            let bp = pattern(b);
            let xp = pattern(x);
            let b = if matches!(**b, Expr::Add(_) | Expr::Mul(_) | Expr::Pow(..)) { format!("({bp})") } else { bp };
            let x = if matches!(**x, Expr::Add(_) | Expr::Mul(_) | Expr::Pow(..)) { format!("({xp})") } else { xp };
            format!("{b}^{x}")
        }
    }
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no traces to analyse")]
    Empty,
    #[error("trace side does not parse: {0}")]
    Parse(String),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Superstate transition statistics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransitionGraph {
    /// Visits per superstate.
    pub visits: BTreeMap<String, usize>,
    /// Transition counts per `(from, to)`.
    pub transitions: BTreeMap<(String, String), usize>,
}

impl TransitionGraph {
    pub fn total_visits(&self) -> usize {
        self.visits.values().sum()
    }

    /// Share of all visited states spent in each superstate.
    pub fn node_weights(&self) -> BTreeMap<String, f64> {
        let total = self.total_visits() as f64;
        self.visits.iter().map(|(k, &v)| (k.clone(), v as f64 / total)).collect()
    }

    /// Frequency of each transition among those leaving its source.
    pub fn edge_weights(&self) -> BTreeMap<(String, String), f64> {
        let mut out_of: BTreeMap<&str, usize> = BTreeMap::new();
        for ((from, _), &n) in &self.transitions {
            *out_of.entry(from).or_default() += n;
        }
        self.transitions.iter().map(|(k, &n)| (k.clone(), n as f64 / out_of[k.0.as_str()] as f64)).collect()
    }

    /// Graphviz text; nodes and edges below `min_weight` are left out.
    pub fn to_dot(&self, min_weight: f64) -> String {
        let nodes = self.node_weights();
        let ids: BTreeMap<&str, usize> = nodes.keys().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
        let mut s = String::from("digraph superstates {\n  node [shape=box];\n");
        for (k, &w) in &nodes {
            if w >= min_weight {
                writeln!(s, "  n{} [label=\"{}\\n{:.1}%\"];", ids[k.as_str()], escape(k), 100.0 * w).unwrap();
            }
        }
        for ((from, to), &w) in &self.edge_weights() {
            if w >= min_weight && nodes[from] >= min_weight && nodes[to] >= min_weight {
                writeln!(s, "  n{} -> n{} [label=\"{:.1}%\"];", ids[from.as_str()], ids[to.as_str()], 100.0 * w).unwrap();
            }
        }
        s.push_str("}\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Count superstate visits and transitions over episodes.
pub fn transition_graph(traces: &[Vec<TraceRecord>]) -> Result<TransitionGraph, AnalysisError> {
    if traces.iter().all(Vec::is_empty) {
        return Err(AnalysisError::Empty);
    }
    let mut g = TransitionGraph::default();
    for trace in traces {
        let states = trace.iter().map(superstate_of_record).collect::<Result<Vec<_>, _>>()?;
        for s in &states {
            *g.visits.entry(s.clone()).or_default() += 1;
        }
        for w in states.windows(2) {
            *g.transitions.entry((w[0].clone(), w[1].clone())).or_default() += 1;
        }
    }
    Ok(g)
}

/// Step listing: action, resulting equation, stack, assumptions and
/// cumulative reward, closed by the terminal label and final equation.
pub fn render_trace(trace: &[TraceRecord]) -> String {
    let mut s = String::from("step  action          equation | stack | assumptions | reward\n");
    for r in trace {
        let stack = if r.stack.is_empty() { "-".to_string() } else { r.stack.join("; ") };
        let assumptions = if r.assumptions.is_empty() { "-".to_string() } else { r.assumptions.join(", ") };
        writeln!(
            s,
            "{:>4}  {:<14}  {} = {} | {} | {} | {}",
            r.step,
            r.action.as_deref().unwrap_or("start"),
            r.lhs,
            r.rhs,
            stack,
            assumptions,
            r.reward
        )
        .unwrap();
    }
    if let Some(last) = trace.last() {
        let label = last.terminal.map_or("unfinished", Terminal::label);
        writeln!(s, "{label}: {} = {}", last.lhs, last.rhs).unwrap();
    }
    s
}

pub fn write_traces(w: &mut dyn Write, records: &[TraceRecord]) -> Result<(), AnalysisError> {
    for r in records {
        serde_json::to_writer(&mut *w, r).map_err(|source| AnalysisError::Json { line: 0, source })?;
        writeln!(w)?;
    }
    Ok(())
}

/// JSON-lines trace records grouped into episodes. A new episode starts
/// when the episode id changes or the step counter does not increase.
pub fn read_traces(r: &mut dyn BufRead) -> Result<Vec<Vec<TraceRecord>>, AnalysisError> {
    let mut out: Vec<Vec<TraceRecord>> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line).map_err(|source| AnalysisError::Json { line: i + 1, source })?;
        match out.last_mut() {
            Some(ep) if ep.last().is_some_and(|p| p.episode == rec.episode && p.step < rec.step) => ep.push(rec),
            _ => out.push(vec![rec]),
        }
    }
    Ok(out)
}

pub fn read_metrics(r: &mut dyn BufRead) -> Result<Vec<MetricsRecord>, AnalysisError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(|source| AnalysisError::Json { line: i + 1, source })?);
        }
    }
    Ok(out)
}

/// One row per metrics record, one success and step column per evaluation
/// set.
pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut names: Vec<&str> = Vec::new();
    for r in records {
        for e in &r.evals {
            if !names.contains(&e.name.as_str()) {
                names.push(&e.name);
            }
        }
    }
    let mut s = String::from("epoch,episodes,env_steps,loss,epsilon,eta,train_success");
    for n in &names {
        write!(s, ",{n}_success,{n}_avg_steps").unwrap();
    }
    s.push('\n');
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for r in records {
        write!(s, "{},{},{},{},{},{},{}", r.epoch, r.episodes, r.env_steps, opt(r.loss), r.epsilon, r.eta, r.train_success)
            .unwrap();
        for n in &names {
            match r.evals.iter().find(|e| e.name == *n) {
                Some(e) => write!(s, ",{},{}", e.success, opt(e.avg_steps)).unwrap(),
                None => s.push_str(",,"),
            }
        }
        s.push('\n');
    }
    s
}
