use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("{name} = {value} is outside its allowed range")]
    WeightOutOfRange { name: &'static str, value: f64 },
    #[error("{name} = {value} is outside [0, 1]")]
    InputOutOfRange { name: &'static str, value: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("input is empty")]
    EmptyInput,
    #[error("need at least {needed} items, got {got}")]
    TooFewItems { needed: usize, got: usize },
    #[error("vector {0} has zero norm")]
    ZeroVector(usize),
    #[error("vector {0} has a non-finite entry")]
    NonFinite(usize),
    #[error("no anchor has a positive")]
    AllAnchorsSkipped,
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("pair ({0}, {1}) is out of bounds or not ordered")]
    InvalidPair(usize, usize),
    #[error("component {0} is not finite")]
    NonFiniteComponent(&'static str),
}

/// A real modulation vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationVector(Vec<f64>);

impl ModulationVector {
    pub fn new(values: Vec<f64>) -> Result<Self, LossError> {
        if values.is_empty() {
            return Err(LossError::EmptyInput);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LossError::NonFinite(0));
        }
        Ok(ModulationVector(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for ModulationVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Packed affect/color supervision in `[-1, 1]^6`; see
/// [`pack_supervision`](super::pack_supervision).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupervisionVector([f64; 6]);

impl SupervisionVector {
    pub(crate) fn from_array(values: [f64; 6]) -> Self {
        SupervisionVector(values)
    }

    pub fn as_array(&self) -> [f64; 6] {
        self.0
    }
}

impl AsRef<[f64]> for SupervisionVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// HSV color target with every channel in `[0, 1]`; hue is circular.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorTarget {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

impl ColorTarget {
    pub fn new(h: f64, s: f64, v: f64) -> Self {
        ColorTarget { h, s, v }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        for (name, value) in [("h", self.h), ("s", self.s), ("v", self.v)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(LossError::InputOutOfRange { name, value });
            }
        }
        Ok(())
    }
}

/// Coefficients for every loss term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub w_vad: f64,
    pub w_col: f64,
    /// Effect lower-bound margin.
    pub m: f64,
    pub m_far: f64,
    pub m_near: f64,
    pub r0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub lambda_img: f64,
    pub lambda_eff: f64,
    pub lambda_pair: f64,
    pub lambda_dir: f64,
    pub lambda_con: f64,
    pub lambda_mag: f64,
    pub lambda_inj: f64,
    pub w_h: f64,
    pub w_s: f64,
    pub w_v: f64,
    pub supcon_temperature: f64,
    pub smoothl1_beta: f64,
    pub top_k: usize,
    pub eps_same: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_vad: 1.0,
            w_col: 1.0,
            m: 0.1,
            m_far: 0.5,
            m_near: 0.1,
            r0: 1.0,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            eta: 1.0,
            lambda_img: 1.0,
            lambda_eff: 1.0,
            lambda_pair: 1.0,
            lambda_dir: 1.0,
            lambda_con: 1.0,
            lambda_mag: 1.0,
            lambda_inj: 1.0,
            w_h: 1.0,
            w_s: 1.0,
            w_v: 1.0,
            supcon_temperature: 0.07,
            smoothl1_beta: 1.0,
            top_k: 4,
            eps_same: 1e-6,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        let nonneg = [
            ("m", self.m),
            ("m_far", self.m_far),
            ("m_near", self.m_near),
            ("r0", self.r0),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("eta", self.eta),
            ("lambda_img", self.lambda_img),
            ("lambda_eff", self.lambda_eff),
            ("lambda_pair", self.lambda_pair),
            ("lambda_dir", self.lambda_dir),
            ("lambda_con", self.lambda_con),
            ("lambda_mag", self.lambda_mag),
            ("lambda_inj", self.lambda_inj),
            ("w_h", self.w_h),
            ("w_s", self.w_s),
            ("w_v", self.w_v),
            ("eps_same", self.eps_same),
        ];
        for (name, value) in nonneg {
            if !(value.is_finite() && value >= 0.0) {
                return Err(LossError::WeightOutOfRange { name, value });
            }
        }
        for (name, value) in [("w_vad", self.w_vad), ("w_col", self.w_col)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(LossError::WeightOutOfRange { name, value });
            }
        }
        for (name, value) in [
            ("supcon_temperature", self.supcon_temperature),
            ("smoothl1_beta", self.smoothl1_beta),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(LossError::WeightOutOfRange { name, value });
            }
        }
        if self.top_k == 0 {
            return Err(LossError::WeightOutOfRange {
                name: "top_k",
                value: 0.0,
            });
        }
        Ok(())
    }
}

/// Per-term values fed to [`total_loss`](super::total_loss).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossComponents {
    pub diff: f64,
    pub img: f64,
    pub effect: f64,
    pub pair: f64,
    pub dir: f64,
    pub supcon: f64,
    pub vad_align: f64,
    pub push: f64,
    pub pull: f64,
    pub same: f64,
    pub perc: f64,
    pub mag: f64,
    pub inj: f64,
}

impl LossComponents {
    pub fn named(&self) -> [(&'static str, f64); 13] {
        [
            ("diff", self.diff),
            ("img", self.img),
            ("effect", self.effect),
            ("pair", self.pair),
            ("dir", self.dir),
            ("supcon", self.supcon),
            ("vad_align", self.vad_align),
            ("push", self.push),
            ("pull", self.pull),
            ("same", self.same),
            ("perc", self.perc),
            ("mag", self.mag),
            ("inj", self.inj),
        ]
    }
}

/// Grouped and total objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub gen: f64,
    pub align: f64,
    pub aff: f64,
    pub perc: f64,
    pub reg: f64,
    pub total: f64,
    pub components: LossComponents,
}

/// Result of [`vad_geometry`](super::vad_geometry).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VadGeometry {
    pub align: f64,
    pub push: f64,
    pub pull: f64,
    pub same: f64,
}

/// Dense row-major matrix used as a projection or a fixed linear injector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl LinearMap {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LossError> {
        if data.len() != rows * cols {
            return Err(LossError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(LinearMap { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        LinearMap { rows: n, cols: n, data }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, LossError> {
        if x.len() != self.cols {
            return Err(LossError::DimensionMismatch {
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|r| self.data[r * self.cols..(r + 1) * self.cols].iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `A^T y`.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, yr) in y.iter().enumerate().take(self.rows) {
            for (c, slot) in out.iter_mut().enumerate() {
                *slot += self.data[r * self.cols + c] * yr;
            }
        }
        out
    }
}
