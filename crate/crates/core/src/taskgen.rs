//! Fixed-distribution sampling of linear training equations and dataset IO.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::expr::{Expr, ParseError};
use crate::number::Number;
use crate::simplify::Equation;
use crate::trainer::{TaskSource, TrainRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Z,
    Q,
    ZiZ,
    QiQ,
}

impl Field {
    pub fn is_complex(self) -> bool {
        matches!(self, Field::ZiZ | Field::QiQ)
    }
}

impl FromStr for Field {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.replace(' ', "").as_str() {
            "Z" => Ok(Field::Z),
            "Q" => Ok(Field::Q),
            "Z+iZ" | "Z+IZ" => Ok(Field::ZiZ),
            "Q+iQ" | "Q+IQ" => Ok(Field::QiQ),
            _ => Err(format!("unknown field {s:?} (expected Z, Q, Z+iZ or Q+iQ)")),
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Field::Z => "Z",
            Field::Q => "Q",
            Field::ZiZ => "Z+iZ",
            Field::QiQ => "Q+iQ",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EqType {
    /// `a0 + a1*x = a2 + a3*x`.
    Numeric,
    /// `a0 + b0*c + (a1 + b1*c)*x = a2 + b2*c + (a3 + b3*c)*x`.
    Symbolic,
    /// The symbolic type with either `a0 = b0 = a3 = b3 = 0` or
    /// `a1 = b1 = a2 = b2 = 0`, the zero terms left out.
    Restricted,
    /// `x + a = b` with `a` nonzero.
    Shift,
}

impl FromStr for EqType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "numeric" => Ok(EqType::Numeric),
            "symbolic" => Ok(EqType::Symbolic),
            "restricted" => Ok(EqType::Restricted),
            "shift" => Ok(EqType::Shift),
            _ => Err(format!("unknown equation type {s:?} (expected numeric, symbolic, restricted or shift)")),
        }
    }
}

impl fmt::Display for EqType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EqType::Numeric => "numeric",
            EqType::Symbolic => "symbolic",
            EqType::Restricted => "restricted",
            EqType::Shift => "shift",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub field: Field,
    pub eq_type: EqType,
    /// Probability that a coefficient of `c` is zero.
    pub p0: f64,
    /// Integers are uniform on `[-int_bound, int_bound]`.
    pub int_bound: i64,
    /// Rationals are `p/q` with `|p| <= num_bound`, `1 <= q <= den_bound`.
    pub num_bound: i64,
    pub den_bound: i64,
}

impl SamplerConfig {
    pub fn new(field: Field, eq_type: EqType) -> SamplerConfig {
        SamplerConfig { field, eq_type, p0: 0.0, int_bound: 10, num_bound: 50, den_bound: 10 }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.p0) {
            return Err(format!("p0 must lie in [0, 1], got {}", self.p0));
        }
        if self.int_bound < 1 || self.num_bound < 1 || self.den_bound < 1 {
            return Err("coefficient bounds must be positive".into());
        }
        Ok(())
    }

    fn real_part<R: Rng + ?Sized>(&self, rational: bool, rng: &mut R) -> Number {
        if rational {
            Number::ratio(rng.gen_range(-self.num_bound..=self.num_bound), rng.gen_range(1..=self.den_bound))
        } else {
            Number::int(rng.gen_range(-self.int_bound..=self.int_bound))
        }
    }

    /// One coefficient from the field's distribution.
    pub fn sample_number<R: Rng + ?Sized>(&self, rng: &mut R) -> Number {
        let rational = matches!(self.field, Field::Q | Field::QiQ);
        let re = self.real_part(rational, rng);
        if self.field.is_complex() {
            let im = self.real_part(rational, rng);
            re.add(&im.mul(&Number::i()))
        } else {
            re
        }
    }

    fn sample_b<R: Rng + ?Sized>(&self, rng: &mut R) -> Number {
        if rng.gen::<f64>() < self.p0 {
            Number::zero()
        } else {
            self.sample_number(rng)
        }
    }

    pub fn sample_coefficients<R: Rng + ?Sized>(&self, rng: &mut R) -> Coefficients {
        match self.eq_type {
            EqType::Numeric => Coefficients { a: (0..4).map(|_| self.sample_number(rng)).collect(), b: vec![], pattern: 0 },
            EqType::Symbolic | EqType::Restricted => {
                let a = (0..4).map(|_| self.sample_number(rng)).collect();
                let b = (0..4).map(|_| self.sample_b(rng)).collect();
                let pattern = if self.eq_type == EqType::Restricted { 1 + usize::from(rng.gen::<bool>()) } else { 0 };
                Coefficients { a, b, pattern }
            }
            EqType::Shift => {
                let mut a = self.sample_number(rng);
                while a.is_zero() {
                    a = self.sample_number(rng);
                }
                Coefficients { a: vec![a, self.sample_number(rng)], b: vec![], pattern: 0 }
            }
        }
    }

    pub fn sample_equation<R: Rng + ?Sized>(&self, rng: &mut R) -> Equation {
        self.assemble(&self.sample_coefficients(rng))
    }

    /// Build the un-normalized equation for drawn coefficients.
    pub fn assemble(&self, k: &Coefficients) -> Equation {
        let n = |v: &Number| Expr::num(v.clone());
        let lin = |coef: Expr| Expr::mul(vec![coef, Expr::x()]);
        let sym = |a: &Number, b: &Number| Expr::add(vec![n(a), Expr::mul(vec![n(b), Expr::c()])]);
        let a = &k.a;
        let b = &k.b;
        match self.eq_type {
            EqType::Numeric => Equation::new(
                Expr::add(vec![n(&a[0]), lin(n(&a[1]))]),
                Expr::add(vec![n(&a[2]), lin(n(&a[3]))]),
            ),
            EqType::Symbolic => Equation::new(
                Expr::add(vec![n(&a[0]), Expr::mul(vec![n(&b[0]), Expr::c()]), lin(sym(&a[1], &b[1]))]),
                Expr::add(vec![n(&a[2]), Expr::mul(vec![n(&b[2]), Expr::c()]), lin(sym(&a[3], &b[3]))]),
            ),
            EqType::Restricted if k.pattern == 1 => Equation::new(lin(sym(&a[1], &b[1])), sym(&a[2], &b[2])),
            EqType::Restricted => Equation::new(sym(&a[0], &b[0]), lin(sym(&a[3], &b[3]))),
            EqType::Shift => Equation::new(Expr::add(vec![Expr::x(), n(&a[0])]), n(&a[1])),
        }
    }
}

/// Drawn coefficients: `a` numeric parts, `b` parts multiplying `c`, and
/// for the restricted type which zero pattern was chosen (1 or 2).
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub a: Vec<Number>,
    pub b: Vec<Number>,
    pub pattern: usize,
}

/// Endless equation stream for training.
#[derive(Debug, Clone)]
pub struct Sampler {
    pub cfg: SamplerConfig,
}

impl TaskSource for Sampler {
    fn next_task(&mut self, rng: &mut TrainRng) -> Equation {
        self.cfg.sample_equation(rng)
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: ParseError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One `LHS = RHS` per line; blank lines and lines starting with `#` are
/// skipped.
pub fn parse_dataset(text: &str) -> Result<Vec<Equation>, DatasetError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(Equation::parse(line).map_err(|source| DatasetError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<Equation>, DatasetError> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

pub fn render_dataset(eqs: &[Equation], comment: Option<&str>) -> String {
    let mut s = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            s.push_str("# ");
            s.push_str(line);
            s.push('\n');
        }
    }
    for eq in eqs {
        s.push_str(&eq.to_string());
        s.push('\n');
    }
    s
}

pub fn save_dataset(eqs: &[Equation], path: &Path, comment: Option<&str>) -> Result<(), DatasetError> {
    std::fs::write(path, render_dataset(eqs, comment))?;
    Ok(())
}

/// `n` equations from the sampler seeded by `seed`.
pub fn generate_dataset(cfg: &SamplerConfig, n: usize, seed: u64) -> Vec<Equation> {
    let mut rng = crate::trainer::rng_stream(seed, 7);
    (0..n).map(|_| cfg.sample_equation(&mut rng)).collect()
}
