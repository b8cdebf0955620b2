//! Feature-plane encoding of environment states.
//!
//! Each term becomes a `(C + N) x T` plane whose columns are its units.
//! Character rows are one-hot by unit kind, number rows carry scaled values.
//! Planes are stacked as `[stack top .. stack bottom, LHS, RHS]`.

use thiserror::Error;

use crate::env::{EnvConfig, EnvState};
use crate::expr::{enumerate_units, Expr, UnitKind};
use crate::number::{BinOp, Number};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("numeric value outside the encodable range")]
    Overflow,
    #[error("term has more units than columns")]
    TooLong,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub stack_size: usize,
    pub max_units: usize,
    /// One row per symbolic constant (0 or 1 here).
    pub symconsts: usize,
    /// Extra character row flagging literals with a nonzero imaginary part.
    pub imag_row: bool,
    /// 1 for real values, 2 for real and imaginary parts.
    pub number_rows: usize,
    pub cap: i64,
    pub scale: f64,
}

const ROW_ADD: usize = 0;
const ROW_MUL: usize = 1;
const ROW_POW: usize = 2;
const ROW_LPAREN: usize = 3;
const ROW_RPAREN: usize = 4;
const ROW_X: usize = 5;
const ROW_C: usize = 6;

impl EncoderConfig {
    pub fn for_env(cfg: &EnvConfig, imag_row: bool) -> Self {
        EncoderConfig {
            stack_size: cfg.stack_size,
            max_units: cfg.max_units,
            symconsts: usize::from(cfg.symbolic),
            imag_row,
            number_rows: if cfg.complex { 2 } else { 1 },
            cap: cfg.number_cap,
            scale: 100.0,
        }
    }

    /// Character rows `C`.
    pub fn char_rows(&self) -> usize {
        3 + 2 + 1 + self.symconsts + usize::from(self.imag_row) + 1
    }

    pub fn rows(&self) -> usize {
        self.char_rows() + self.number_rows
    }

    pub fn plane_len(&self) -> usize {
        self.rows() * self.max_units
    }

    /// `(S + 2)(C + N)T`.
    pub fn input_dim(&self) -> usize {
        (self.stack_size + 2) * self.plane_len()
    }

    fn imag_row_index(&self) -> Option<usize> {
        self.imag_row.then_some(ROW_X + 1 + self.symconsts)
    }

    fn const_row(&self) -> usize {
        self.char_rows() - 1
    }

    pub fn encode_number(&self, n: &Number) -> Result<[f64; 2], EncodeError> {
        if !n.within(self.cap) {
            return Err(EncodeError::Overflow);
        }
        Ok([n.re_f64() / self.scale, n.im_f64() / self.scale])
    }

    /// Write one term into a zeroed plane of length [`EncoderConfig::plane_len`].
    pub fn encode_term(&self, e: &Expr, plane: &mut [f64]) -> Result<(), EncodeError> {
        debug_assert_eq!(plane.len(), self.plane_len());
        let units = enumerate_units(e);
        if units.len() > self.max_units {
            return Err(EncodeError::TooLong);
        }
        let t = self.max_units;
        let mut set = |row: usize, col: usize, v: f64| plane[row * t + col] = v;
        for (j, u) in units.iter().enumerate() {
            match &u.kind {
                UnitKind::Op(BinOp::Add) => set(ROW_ADD, j, 1.0),
                UnitKind::Op(BinOp::Mul) => set(ROW_MUL, j, 1.0),
                UnitKind::Op(BinOp::Pow) => set(ROW_POW, j, 1.0),
                UnitKind::LParen => set(ROW_LPAREN, j, 1.0),
                UnitKind::RParen => set(ROW_RPAREN, j, 1.0),
                UnitKind::Unknown => set(ROW_X, j, 1.0),
                UnitKind::SymConst => {
                    if self.symconsts > 0 {
                        set(ROW_C, j, 1.0);
                    }
                    set(self.const_row(), j, 1.0);
                }
                UnitKind::Number(n) => {
                    let [re, im] = self.encode_number(n)?;
                    set(self.const_row(), j, 1.0);
                    if let Some(r) = self.imag_row_index() {
                        if !n.is_real() {
                            set(r, j, 1.0);
                        }
                    }
                    let base = self.char_rows();
                    set(base, j, re);
                    if self.number_rows > 1 {
                        set(base + 1, j, im);
                    }
                }
            }
        }
        Ok(())
    }

    /// Flat state tensor in plane-major, row-major order.
    pub fn encode_state(&self, st: &EnvState) -> Result<Vec<f64>, EncodeError> {
        let mut out = vec![0.0; self.input_dim()];
        self.encode_state_into(st, &mut out)?;
        Ok(out)
    }

    pub fn encode_state_into(&self, st: &EnvState, out: &mut [f64]) -> Result<(), EncodeError> {
        out.fill(0.0);
        let pl = self.plane_len();
        for (i, term) in st.stack.iter().take(self.stack_size).enumerate() {
            self.encode_term(term, &mut out[i * pl..(i + 1) * pl])?;
        }
        let s = self.stack_size;
        self.encode_term(&st.equation.lhs, &mut out[s * pl..(s + 1) * pl])?;
        self.encode_term(&st.equation.rhs, &mut out[(s + 1) * pl..(s + 2) * pl])?;
        Ok(())
    }
}
