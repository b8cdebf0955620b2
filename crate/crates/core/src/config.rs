//! Named run configurations stored as flat `key = value` text.
//!
//! Keys follow the hyperparameter symbols (`S`, `T`, `O_eq`, `M`, `B`, `p`,
//! `tau_hat`, `eps_i`, ...). The shipped presets live in `presets/*.conf`;
//! any key can be overridden before the preset is built.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::adversary::{GeneratorConfig, SeedFamily};
use crate::encoder::EncoderConfig;
use crate::env::{EnvConfig, Rewards};
use crate::expr::{parse_expression, Expr};
use crate::nn::parameter_count;
use crate::number::{BinOp, Number};
use crate::taskgen::{EqType, Field, SamplerConfig};
use crate::trainer::{EpsilonSchedule, LrSchedule, TrainConfig};

const SHIPPED: &[(&str, &str)] = &[
    ("R1", include_str!("../presets/R1.conf")),
    ("R2", include_str!("../presets/R2.conf")),
    ("C1", include_str!("../presets/C1.conf")),
    ("C2", include_str!("../presets/C2.conf")),
    ("S1", include_str!("../presets/S1.conf")),
    ("S2", include_str!("../presets/S2.conf")),
    ("S3", include_str!("../presets/S3.conf")),
    ("S4", include_str!("../presets/S4.conf")),
    ("S5", include_str!("../presets/S5.conf")),
    ("AR", include_str!("../presets/AR.conf")),
    ("AS1", include_str!("../presets/AS1.conf")),
    ("AS2", include_str!("../presets/AS2.conf")),
    ("R1-mini", include_str!("../presets/R1-mini.conf")),
    ("R5-mini", include_str!("../presets/R5-mini.conf")),
    ("AR-mini", include_str!("../presets/AR-mini.conf")),
];

/// Keys and their defaults. `None` marks a key without a default.
const KEYS: &[(&str, Option<&str>)] = &[
    ("name", None),
    ("kind", Some("solver")),
    ("seed", Some("0")),
    // environment
    ("S", None),
    ("T", None),
    ("O_eq", Some("+,*")),
    ("constants", None),
    ("symbolic", Some("false")),
    ("complex", Some("false")),
    ("imag_row", Some("false")),
    ("t_max", Some("100")),
    ("r_slv", Some("3")),
    ("r_so", Some("-0.25")),
    ("p_st", Some("1")),
    ("p_as", Some("0.25")),
    ("simplify_budget", Some("10000")),
    ("number_cap", Some("500")),
    ("number_scale", Some("100")),
    ("shuffle", Some("true")),
    // solver learner
    ("hidden", None),
    ("M", Some("5e5")),
    ("B", Some("128")),
    ("p", Some("4")),
    ("tau_hat", Some("100")),
    ("eps_hat", Some("1")),
    ("gamma", Some("0.9")),
    ("mu", Some("0")),
    ("epsilon", Some("exponential")),
    ("eps_i", None),
    ("eps_f", None),
    ("T_eps", Some("5e6")),
    ("alpha_eps", Some("1")),
    ("eta", None),
    ("eta_i", Some("0.05")),
    ("eta_f", Some("0.005")),
    ("alpha_eta", Some("0.5")),
    ("window", Some("100")),
    // training distribution
    ("field", Some("Z")),
    ("eq_type", Some("numeric")),
    ("p0", Some("0")),
    ("int_bound", Some("10")),
    ("num_bound", Some("50")),
    ("den_bound", Some("10")),
    // evaluation
    ("test_fields", Some("Z,Q")),
    ("test_type", Some("numeric")),
    ("test_p0", Some("0")),
    ("test_size", Some("1000")),
    ("epochs", Some("2e7")),
    ("episodes", Some("1e7")),
    ("eval_every", Some("1e4")),
    ("checkpoint_every", Some("1e4")),
    ("stop_at", Some("none")),
    // tabulated sizes, used for the dimension report
    ("A_listed", Some("none")),
    ("input_listed", Some("none")),
    ("params_listed", Some("none")),
    // generator
    ("gen_seed", Some("constant")),
    ("gen_field", Some("Q")),
    ("gen_p0", Some("0.5")),
    ("gen_hidden", Some("none")),
    ("gen_M", Some("5e5")),
    ("gen_B", Some("128")),
    ("gen_p", Some("8")),
    ("gen_tau_hat", Some("100")),
    ("gen_gamma", Some("0.9")),
    ("gen_eps_i", Some("0.5")),
    ("gen_eps_f", Some("0.1")),
    ("gen_alpha_eps", Some("1")),
    ("gen_eta_i", Some("0.01")),
    ("gen_eta_f", Some("0.001")),
    ("gen_alpha_eta", Some("0.5")),
    ("r_fool", Some("3")),
    ("p_step", Some("0.01")),
    ("gen_A_listed", Some("none")),
    ("gen_params_listed", Some("none")),
];

#[derive(Debug, Error)]
pub enum PresetError {
    #[error("unknown preset {name:?}; available presets: {}", available.join(", "))]
    UnknownPreset { name: String, available: Vec<String> },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub fn preset_names() -> Vec<&'static str> {
    SHIPPED.iter().map(|(n, _)| *n).collect()
}

/// Unbuilt configuration: validated keys with raw string values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigText {
    values: BTreeMap<String, String>,
}

impl ConfigText {
    pub fn parse(text: &str) -> Result<ConfigText, PresetError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| PresetError::Syntax { line: i + 1, msg: format!("expected key = value, got {line:?}") })?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.iter().any(|(name, _)| *name == k) {
                return Err(PresetError::Syntax { line: i + 1, msg: format!("unknown key {k:?}") });
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(PresetError::Syntax { line: i + 1, msg: format!("duplicate key {k:?}") });
            }
        }
        Ok(ConfigText { values })
    }

    pub fn shipped(name: &str) -> Result<ConfigText, PresetError> {
        let text = SHIPPED.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)).map(|(_, t)| *t).ok_or_else(|| {
            PresetError::UnknownPreset { name: name.to_string(), available: preset_names().iter().map(|s| s.to_string()).collect() }
        })?;
        ConfigText::parse(text)
    }

    pub fn load(path: &Path) -> Result<ConfigText, PresetError> {
        ConfigText::parse(&std::fs::read_to_string(path)?)
    }

    /// Override one key, e.g. from a `key=value` command-line argument.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PresetError> {
        if !KEYS.iter().any(|(name, _)| *name == key) {
            return Err(PresetError::Invalid(vec![format!("unknown key {key:?}")]));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn set_assignment(&mut self, assignment: &str) -> Result<(), PresetError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| PresetError::Invalid(vec![format!("expected key=value, got {assignment:?}")]))?;
        self.set(k.trim(), v)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .or_else(|| KEYS.iter().find(|(k, _)| *k == key).and_then(|(_, d)| *d))
    }

    /// Canonical text with every key, defaults included.
    pub fn render(&self) -> String {
        KEYS.iter()
            .filter_map(|(k, _)| self.get(k).map(|v| format!("{k} = {v}\n")))
            .collect()
    }

    pub fn build(&self) -> Result<Preset, PresetError> {
        let mut r = Reader { cfg: self, errors: Vec::new() };
        let preset = r.preset();
        match preset {
            Some(p) if r.errors.is_empty() => Ok(p),
            _ => Err(PresetError::Invalid(r.errors)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetKind {
    /// Fixed-distribution training.
    Solver,
    /// Solver trained on a generator's submissions.
    Adversarial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSpec {
    pub fields: Vec<Field>,
    pub eq_type: EqType,
    pub p0: f64,
    pub size: usize,
}

impl TestSpec {
    pub fn samplers(&self, bounds: &SamplerConfig) -> Vec<SamplerConfig> {
        self.fields
            .iter()
            .map(|&field| SamplerConfig { field, eq_type: self.eq_type, p0: self.p0, ..*bounds })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunDefaults {
    pub epochs: u64,
    pub episodes: u64,
    pub eval_every: u64,
    pub checkpoint_every: u64,
    pub stop_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Listed {
    pub actions: Option<usize>,
    pub input: Option<usize>,
    pub params: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub gcfg: GeneratorConfig,
    pub train: TrainConfig,
    pub listed: Listed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: String,
    pub kind: PresetKind,
    pub env: EnvConfig,
    pub imag_row: bool,
    /// Divisor applied to literal values in the number rows.
    pub number_scale: f64,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    pub test: TestSpec,
    pub run: RunDefaults,
    pub listed: Listed,
    pub generator: Option<GeneratorSpec>,
}

impl Preset {
    pub fn named(name: &str) -> Result<Preset, PresetError> {
        ConfigText::shipped(name)?.build()
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig { scale: self.number_scale, ..EncoderConfig::for_env(&self.env, self.imag_row) }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        sizes(self.encoder().input_dim(), &self.train.hidden, self.env.num_actions())
    }

    pub fn generator_layer_sizes(&self) -> Option<Vec<usize>> {
        let g = self.generator.as_ref()?;
        Some(sizes(self.encoder().input_dim(), &g.train.hidden, self.env.num_actions() + 1))
    }

    pub fn dimensions(&self) -> DimensionReport {
        let enc = self.encoder();
        let input = enc.input_dim();
        let solver = NetDims::new("solver", input, &self.train.hidden, self.env.num_actions(), &self.listed);
        let generator = self
            .generator
            .as_ref()
            .map(|g| NetDims::new("generator", input, &g.train.hidden, self.env.num_actions() + 1, &g.listed));
        DimensionReport {
            preset: self.name.clone(),
            char_rows: enc.char_rows(),
            number_rows: enc.number_rows,
            input,
            input_listed: self.listed.input,
            solver,
            generator,
        }
    }
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

/// Computed network sizes next to the tabulated ones.
#[derive(Debug, Clone, PartialEq)]
pub struct NetDims {
    pub role: &'static str,
    /// How `actions` is derived.
    pub formula: &'static str,
    pub actions: usize,
    pub actions_listed: Option<usize>,
    pub params: u64,
    pub params_listed: Option<u64>,
    /// Parameter count with the tabulated action count in place of the
    /// computed one.
    pub params_at_listed_actions: Option<u64>,
}

impl NetDims {
    fn new(role: &'static str, input: usize, hidden: &[usize], actions: usize, listed: &Listed) -> NetDims {
        NetDims {
            role,
            formula: if role == "generator" { "2T + O_eq + C_num + O_st + 1" } else { "2T + O_eq + C_num + O_st" },
            actions,
            actions_listed: listed.actions,
            params: parameter_count(&sizes(input, hidden, actions)) as u64,
            params_listed: listed.params,
            params_at_listed_actions: listed.actions.map(|a| parameter_count(&sizes(input, hidden, a)) as u64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionReport {
    pub preset: String,
    pub char_rows: usize,
    pub number_rows: usize,
    pub input: usize,
    pub input_listed: Option<usize>,
    pub solver: NetDims,
    pub generator: Option<NetDims>,
}

impl DimensionReport {
    /// Disagreements between computed and tabulated sizes.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if let Some(l) = self.input_listed.filter(|&l| l != self.input) {
            w.push(format!("{}: input dimension {} differs from the listed {l}", self.preset, self.input));
        }
        for net in std::iter::once(&self.solver).chain(self.generator.as_ref()) {
            if let Some(l) = net.actions_listed.filter(|&l| l != net.actions) {
                w.push(format!(
                    "{}: {} has {} actions by {} but {l} are listed; \
                     the network uses {} ({} parameters, {} with the listed count)",
                    self.preset,
                    net.role,
                    net.actions,
                    net.formula,
                    net.actions,
                    net.params,
                    net.params_at_listed_actions.unwrap_or(net.params)
                ));
            }
            let reference = net.params_at_listed_actions.unwrap_or(net.params);
            if let Some(l) = net.params_listed.filter(|&l| l != reference) {
                w.push(format!("{}: {} parameter count {reference} differs from the listed {l}", self.preset, net.role));
            }
        }
        w
    }
}

impl fmt::Display for DimensionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<String>| v.map(|s| format!(" (listed {s})")).unwrap_or_default();
        writeln!(f, "preset {}", self.preset)?;
        writeln!(f, "  rows: C = {}, N = {}", self.char_rows, self.number_rows)?;
        writeln!(f, "  input dim: {}{}", self.input, opt(self.input_listed.map(|v| v.to_string())))?;
        for net in std::iter::once(&self.solver).chain(self.generator.as_ref()) {
            writeln!(f, "  {} actions: {}{}", net.role, net.actions, opt(net.actions_listed.map(|v| v.to_string())))?;
            writeln!(f, "  {} parameters: {}{}", net.role, net.params, opt(net.params_listed.map(|v| v.to_string())))?;
        }
        for w in self.warnings() {
            writeln!(f, "  warning: {w}")?;
        }
        Ok(())
    }
}

struct Reader<'a> {
    cfg: &'a ConfigText,
    errors: Vec<String>,
}

impl Reader<'_> {
    fn raw(&mut self, key: &str) -> Option<String> {
        let v = self.cfg.get(key).map(str::to_string);
        if v.is_none() {
            self.errors.push(format!("missing required key {key:?}"));
        }
        v
    }

    fn fail<T>(&mut self, key: &str, msg: impl fmt::Display) -> Option<T> {
        self.errors.push(format!("{key}: {msg}"));
        None
    }

    fn float(&mut self, key: &str) -> Option<f64> {
        let v = self.raw(key)?;
        match parse_float(&v) {
            Some(x) => Some(x),
            None => self.fail(key, format!("expected a number, got {v:?}")),
        }
    }

    fn opt_float(&mut self, key: &str) -> Option<Option<f64>> {
        let v = self.raw(key)?;
        if v == "none" {
            return Some(None);
        }
        self.float(key).map(Some)
    }

    fn count(&mut self, key: &str) -> Option<u64> {
        let x = self.float(key)?;
        if x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(63) {
            Some(x as u64)
        } else {
            self.fail(key, format!("expected a non-negative integer, got {x}"))
        }
    }

    fn usize(&mut self, key: &str) -> Option<usize> {
        self.count(key).map(|v| v as usize)
    }

    fn opt_count(&mut self, key: &str) -> Option<Option<u64>> {
        if self.raw(key)? == "none" {
            return Some(None);
        }
        self.count(key).map(Some)
    }

    fn int(&mut self, key: &str) -> Option<i64> {
        let x = self.float(key)?;
        if x.fract() == 0.0 && x.abs() < 2f64.powi(53) {
            Some(x as i64)
        } else {
            self.fail(key, format!("expected an integer, got {x}"))
        }
    }

    fn flag(&mut self, key: &str) -> Option<bool> {
        match self.raw(key)?.as_str() {
            "true" | "yes" | "1" => Some(true),
            "false" | "no" | "0" => Some(false),
            v => {
                let msg = format!("expected true or false, got {v:?}");
                self.fail(key, msg)
            }
        }
    }

    fn parsed<T: std::str::FromStr<Err = String>>(&mut self, key: &str) -> Option<T> {
        let v = self.raw(key)?;
        match v.parse() {
            Ok(x) => Some(x),
            Err(e) => self.fail(key, e),
        }
    }

    fn list(&mut self, key: &str) -> Option<Vec<String>> {
        let v = self.raw(key)?;
        Some(v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
    }

    fn widths(&mut self, key: &str) -> Option<Vec<usize>> {
        let items = self.list(key)?;
        let parsed: Option<Vec<usize>> = items.iter().map(|s| parse_float(s).filter(|x| *x >= 1.0 && x.fract() == 0.0).map(|x| x as usize)).collect();
        match parsed {
            Some(w) if !w.is_empty() => Some(w),
            _ => self.fail(key, format!("expected comma-separated positive widths, got {items:?}")),
        }
    }

    fn eq_ops(&mut self) -> Option<Vec<BinOp>> {
        let items = self.list("O_eq")?;
        let mut ops = Vec::new();
        for s in &items {
            match s.as_str() {
                "+" => ops.push(BinOp::Add),
                "*" => ops.push(BinOp::Mul),
                "^" => ops.push(BinOp::Pow),
                _ => return self.fail("O_eq", format!("unknown operation {s:?} (expected +, * or ^)")),
            }
        }
        Some(ops)
    }

    fn constants(&mut self) -> Option<Vec<Number>> {
        let items = self.list("constants")?;
        let mut out = Vec::new();
        for s in &items {
            match parse_expression(s).ok().as_ref().and_then(Expr::as_num) {
                Some(n) => out.push(n.clone()),
                None => return self.fail("constants", format!("{s:?} is not a numeric literal")),
            }
        }
        Some(out)
    }

    fn env(&mut self) -> Option<EnvConfig> {
        let stack_size = self.usize("S");
        let max_units = self.usize("T");
        let eq_ops = self.eq_ops();
        let constants = self.constants();
        let symbolic = self.flag("symbolic");
        let complex = self.flag("complex");
        let t_max = self.usize("t_max");
        let rewards = self.rewards();
        let simplify_budget = self.usize("simplify_budget");
        let shuffle = self.flag("shuffle");
        let number_cap = self.int("number_cap");
        let cfg = EnvConfig {
            stack_size: stack_size?,
            max_units: max_units?,
            eq_ops: eq_ops?,
            constants: constants?,
            symbolic: symbolic?,
            complex: complex?,
            t_max: t_max?,
            rewards: rewards?,
            simplify_budget: simplify_budget?,
            shuffle: shuffle?,
            number_cap: number_cap?,
            submit: false,
        };
        if let Err(e) = cfg.validate() {
            return self.fail("environment", e);
        }
        Some(cfg)
    }

    fn rewards(&mut self) -> Option<Rewards> {
        let r_slv = self.float("r_slv");
        let r_so = self.float("r_so");
        let p_st = self.float("p_st");
        let p_as = self.float("p_as");
        Some(Rewards { r_slv: r_slv?, r_so: r_so?, p_st: p_st?, p_as: p_as? })
    }

    fn solver_train(&mut self, seed: u64) -> Option<TrainConfig> {
        let epsilon = match self.raw("epsilon")?.as_str() {
            "exponential" => {
                let (i, f, t) = (self.float("eps_i"), self.float("eps_f"), self.float("T_eps"));
                EpsilonSchedule::Exponential { init: i?, fin: f?, t_eps: t? }
            }
            "adaptive" => {
                let (i, f, a) = (self.float("eps_i"), self.float("eps_f"), self.float("alpha_eps"));
                EpsilonSchedule::Adaptive { init: i?, fin: f?, alpha: a? }
            }
            v => {
                let msg = format!("expected exponential or adaptive, got {v:?}");
                return self.fail("epsilon", msg);
            }
        };
        let lr = if self.raw("eta")? == "adaptive" {
            let (i, f, a) = (self.float("eta_i"), self.float("eta_f"), self.float("alpha_eta"));
            LrSchedule::Adaptive { init: i?, fin: f?, alpha: a? }
        } else {
            LrSchedule::Fixed(self.float("eta")?)
        };
        let hidden = self.widths("hidden");
        self.learner(
            ["gamma", "M", "B", "p", "tau_hat", "eps_hat", "mu", "window"],
            epsilon,
            lr,
            hidden?,
            seed,
        )
    }

    fn learner(
        &mut self,
        keys: [&str; 8],
        epsilon: EpsilonSchedule,
        lr: LrSchedule,
        hidden: Vec<usize>,
        seed: u64,
    ) -> Option<TrainConfig> {
        let [gamma, m, b, p, tau, blend, mu, window] = keys;
        let cfg = TrainConfig {
            gamma: self.float(gamma)?,
            memory: self.usize(m)?,
            batch: self.usize(b)?,
            explore_steps: self.usize(p)?,
            target_period: self.count(tau)?,
            target_blend: self.float(blend)?,
            epsilon,
            lr,
            momentum: self.float(mu)?,
            window: self.usize(window)?,
            hidden,
            seed,
        };
        if let Err(e) = cfg.validate() {
            let label = if gamma.starts_with("gen_") { "generator training" } else { "training" };
            return self.fail(label, e);
        }
        Some(cfg)
    }

    fn sampler(&mut self) -> Option<SamplerConfig> {
        let field = self.parsed::<Field>("field");
        let eq_type = self.parsed::<EqType>("eq_type");
        let p0 = self.float("p0");
        let int_bound = self.int("int_bound");
        let num_bound = self.int("num_bound");
        let den_bound = self.int("den_bound");
        let s = SamplerConfig {
            field: field?,
            eq_type: eq_type?,
            p0: p0?,
            int_bound: int_bound?,
            num_bound: num_bound?,
            den_bound: den_bound?,
        };
        if let Err(e) = s.validate() {
            return self.fail("sampler", e);
        }
        Some(s)
    }

    fn test(&mut self) -> Option<TestSpec> {
        let items = self.list("test_fields")?;
        let mut fields = Vec::new();
        for s in &items {
            match s.parse::<Field>() {
                Ok(f) => fields.push(f),
                Err(e) => return self.fail("test_fields", e),
            }
        }
        let eq_type = self.parsed::<EqType>("test_type");
        let p0 = self.float("test_p0");
        let size = self.usize("test_size");
        Some(TestSpec { fields, eq_type: eq_type?, p0: p0?, size: size? })
    }

    fn listed(&mut self, prefix: &str, with_input: bool) -> Option<Listed> {
        let actions = self.opt_count(&format!("{prefix}A_listed"));
        let input = if with_input { self.opt_count("input_listed") } else { Some(None) };
        let params = self.opt_count(&format!("{prefix}params_listed"));
        Some(Listed { actions: actions?.map(|v| v as usize), input: input?.map(|v| v as usize), params: params? })
    }

    fn generator(&mut self, seed: u64, solver_hidden: &[usize], sampler: &SamplerConfig) -> Option<GeneratorSpec> {
        let family = match self.raw("gen_seed")?.as_str() {
            "constant" => SeedFamily::Constant,
            "fraction" => SeedFamily::Fraction,
            v => {
                let msg = format!("expected constant or fraction, got {v:?}");
                return self.fail("gen_seed", msg);
            }
        };
        let field = self.parsed::<Field>("gen_field")?;
        let p0 = self.float("gen_p0")?;
        let gsampler = SamplerConfig { field, p0, ..*sampler };
        let epsilon = EpsilonSchedule::Adaptive {
            init: self.float("gen_eps_i")?,
            fin: self.float("gen_eps_f")?,
            alpha: self.float("gen_alpha_eps")?,
        };
        let lr = LrSchedule::Adaptive {
            init: self.float("gen_eta_i")?,
            fin: self.float("gen_eta_f")?,
            alpha: self.float("gen_alpha_eta")?,
        };
        let hidden = if self.raw("gen_hidden")? == "none" { solver_hidden.to_vec() } else { self.widths("gen_hidden")? };
        let train = self.learner(
            ["gen_gamma", "gen_M", "gen_B", "gen_p", "gen_tau_hat", "eps_hat", "mu", "window"],
            epsilon,
            lr,
            hidden,
            seed.wrapping_add(1),
        )?;
        let gcfg = GeneratorConfig { family, sampler: gsampler, r_fool: self.float("r_fool")?, p_step: self.float("p_step")? };
        let listed = self.listed("gen_", false)?;
        Some(GeneratorSpec { gcfg, train, listed })
    }

    fn preset(&mut self) -> Option<Preset> {
        let name = self.raw("name");
        let kind = match self.raw("kind").as_deref() {
            Some("solver") => Some(PresetKind::Solver),
            Some("adversarial") => Some(PresetKind::Adversarial),
            Some(v) => {
                let msg = format!("expected solver or adversarial, got {v:?}");
                self.fail("kind", msg)
            }
            None => None,
        };
        let seed = self.count("seed");
        let env = self.env();
        let imag_row = self.flag("imag_row");
        let number_scale = self.float("number_scale");
        if number_scale.is_some_and(|v| v.is_nan() || v <= 0.0) {
            self.errors.push("number_scale must be positive".into());
        }
        let train = seed.and_then(|s| self.solver_train(s));
        let sampler = self.sampler();
        let test = self.test();
        let epochs = self.count("epochs");
        let episodes = self.count("episodes");
        let eval_every = self.count("eval_every");
        let checkpoint_every = self.count("checkpoint_every");
        let stop_at = self.opt_float("stop_at");
        let listed = self.listed("", true);
        let (kind, env, train, sampler, seed) = (kind?, env?, train?, sampler?, seed?);
        let generator = match kind {
            PresetKind::Adversarial => Some(self.generator(seed, &train.hidden, &sampler)?),
            PresetKind::Solver => None,
        };
        if let Some(g) = &generator {
            if matches!(g.gcfg.family, SeedFamily::Fraction) && !env.symbolic {
                self.errors.push("gen_seed: fraction seeds need a symbolic environment".into());
            }
        }
        if sampler.field.is_complex() && !env.complex {
            self.errors.push(format!("field {} needs complex = true", sampler.field));
        }
        if matches!(sampler.eq_type, EqType::Symbolic | EqType::Restricted) && !env.symbolic {
            self.errors.push(format!("eq_type {} needs symbolic = true", sampler.eq_type));
        }
        Some(Preset {
            name: name?,
            kind,
            env,
            imag_row: imag_row?,
            number_scale: number_scale?,
            train,
            sampler,
            test: test?,
            run: RunDefaults {
                epochs: epochs?,
                episodes: episodes?,
                eval_every: eval_every?,
                checkpoint_every: checkpoint_every?,
                stop_at: stop_at?,
            },
            listed: listed?,
            generator,
        })
    }
}

/// Decimal, scientific or `p/q` notation.
fn parse_float(s: &str) -> Option<f64> {
    let s = s.trim();
    let x = match s.split_once('/') {
        Some((p, q)) => p.trim().parse::<f64>().ok()? / q.trim().parse::<f64>().ok()?,
        None => s.parse::<f64>().ok()?,
    };
    x.is_finite().then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_shipped_preset_builds() {
        for name in preset_names() {
            let p = Preset::named(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(p.name, name);
            assert_eq!(p.layer_sizes()[0], p.encoder().input_dim());
        }
    }

    #[test]
    fn listed_sizes_match_except_the_as_action_count() {
        for name in ["R1", "R2", "C1", "C2", "S1", "S2", "S3", "S4", "S5", "AR", "AS1", "AS2"] {
            let d = Preset::named(name).unwrap().dimensions();
            assert_eq!(d.input_listed, Some(d.input), "{name}");
            let w = d.warnings();
            if name.starts_with("AS") {
                assert_eq!(d.solver.actions, 43);
                assert_eq!(d.solver.params_at_listed_actions, d.solver.params_listed);
                assert!(w.iter().all(|m| m.contains("actions by")), "{name}: {w:?}");
                assert!(!w.is_empty());
            } else {
                assert!(w.is_empty(), "{name}: {w:?}");
                assert_eq!(Some(d.solver.params), d.solver.params_listed, "{name}");
            }
        }
    }

    #[test]
    fn overrides_and_errors() {
        let mut c = ConfigText::shipped("r1").unwrap();
        c.set_assignment("eta = 0.02").unwrap();
        c.set("hidden", "16,8").unwrap();
        let p = c.build().unwrap();
        assert_eq!(p.train.lr, LrSchedule::Fixed(0.02));
        assert_eq!(p.layer_sizes(), vec![280, 16, 8, 18]);
        assert!(c.set("bogus", "1").is_err());

        c.set("gamma", "1.5").unwrap();
        c.set("S", "zero").unwrap();
        match c.build() {
            Err(PresetError::Invalid(errs)) => {
                assert!(errs.iter().any(|e| e.starts_with("S:")), "{errs:?}");
                assert!(errs.iter().any(|e| e.contains("gamma")), "{errs:?}");
            }
            other => panic!("{other:?}"),
        }
        let err = ConfigText::shipped("nope").unwrap_err().to_string();
        assert!(err.contains("R1") && err.contains("AS2"), "{err}");
    }

    #[test]
    fn render_round_trips() {
        for name in preset_names() {
            let c = ConfigText::shipped(name).unwrap();
            let again = ConfigText::parse(&c.render()).unwrap();
            assert_eq!(again.build().unwrap(), c.build().unwrap());
        }
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let e = ConfigText::parse("name = x\nS 5\n").unwrap_err();
        assert!(matches!(e, PresetError::Syntax { line: 2, .. }));
        let e = ConfigText::parse("S = 1\nS = 2\n").unwrap_err();
        assert!(e.to_string().contains("duplicate"));
        assert_eq!(parse_float("2/3"), Some(2.0 / 3.0));
        assert_eq!(parse_float("5e5"), Some(5e5));
    }
}
