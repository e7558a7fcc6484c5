//! Dense real matrices and a from-scratch Adam optimizer.
//!
//! Everything here is `f64` and row-major. The matrix type is deliberately
//! small: the reconstruction engine only needs products, elementwise maps and
//! row gathers.

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape("RealMatrix::new", "rows >= 1 and cols >= 1", format!("{rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(
                "RealMatrix::new",
                format!("{} elements", rows * cols),
                format!("{} elements", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive, got {rows}x{cols}");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        m.data.fill(value);
        m
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::shape("RealMatrix::from_rows", "rows of equal length", "ragged rows"));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Gathers the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.rows) {
            return Err(Error::Range(format!("row {bad} out of range for {} rows", self.rows)));
        }
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self::new(idx.len(), self.cols, data)
    }

    pub fn select_columns(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.cols) {
            return Err(Error::Range(format!("column {bad} out of range for {} columns", self.cols)));
        }
        let mut data = Vec::with_capacity(idx.len() * self.rows);
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(idx.iter().map(|&c| row[c]));
        }
        Self::new(self.rows, idx.len(), data)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, alpha: f64) -> Self {
        self.map(|x| alpha * x)
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_shape(other, op)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "hadamard", |a, b| a * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn ensure_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                op,
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }
}

/// `a · b`.
pub fn matmul(a: &RealMatrix, b: &RealMatrix) -> Result<RealMatrix> {
    if a.cols != b.rows {
        return Err(Error::shape(
            "matmul",
            format!("lhs cols == rhs rows ({})", a.cols),
            format!("{}x{} · {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let mut out = RealMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let a_row = a.row(i);
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (p, &aip) in a_row.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            for (o, &bpj) in out_row.iter_mut().zip(b.row(p)) {
                *o += aip * bpj;
            }
        }
    }
    Ok(out)
}

/// `aᵀ · b` without materializing the transpose.
pub fn matmul_tn(a: &RealMatrix, b: &RealMatrix) -> Result<RealMatrix> {
    if a.rows != b.rows {
        return Err(Error::shape(
            "matmul_tn",
            format!("lhs rows == rhs rows ({})", a.rows),
            format!("{}x{}ᵀ · {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let mut out = RealMatrix::zeros(a.cols, b.cols);
    for r in 0..a.rows {
        let b_row = b.row(r);
        for (i, &ari) in a.row(r).iter().enumerate() {
            if ari == 0.0 {
                continue;
            }
            for (o, &brj) in out.data[i * b.cols..(i + 1) * b.cols].iter_mut().zip(b_row) {
                *o += ari * brj;
            }
        }
    }
    Ok(out)
}

/// Sum of absolute values of all elements.
pub fn l1_norm(m: &RealMatrix) -> f64 {
    m.data.iter().map(|x| x.abs()).sum()
}

/// Elementwise sign, with `sign(0) = 0`.
pub fn sign_subgradient(m: &RealMatrix) -> RealMatrix {
    m.map(sign0)
}

#[inline]
pub(crate) fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate: 1e-3,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(self, learning_rate: f64) -> Self {
        Self { learning_rate, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::param("beta1", format!("must lie in [0, 1), got {}", self.beta1)));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::param("beta2", format!("must lie in [0, 1), got {}", self.beta2)));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::param("epsilon", format!("must be positive, got {}", self.epsilon)));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::param(
                "learning_rate",
                format!("must be positive and finite, got {}", self.learning_rate),
            ));
        }
        Ok(())
    }
}

/// First/second moment accumulators plus the number of updates applied so far.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: RealMatrix,
    pub v: RealMatrix,
    pub step: u64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: RealMatrix::zeros(rows, cols),
            v: RealMatrix::zeros(rows, cols),
            step: 0,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.m.shape()
    }
}

/// One bias-corrected Adam update, returning the new parameter and state.
pub fn adam_step(
    param: &RealMatrix,
    grad: &RealMatrix,
    state: &AdamState,
    cfg: &AdamConfig,
) -> Result<(RealMatrix, AdamState)> {
    let mut param = param.clone();
    let mut state = state.clone();
    adam_step_in_place(&mut param, grad, &mut state, cfg)?;
    Ok((param, state))
}

/// In-place form of [`adam_step`]; the parameter and state are left untouched on error.
pub fn adam_step_in_place(
    param: &mut RealMatrix,
    grad: &RealMatrix,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    param.ensure_same_shape(grad, "adam_step (param vs grad)")?;
    param.ensure_same_shape(&state.m, "adam_step (param vs first moment)")?;
    param.ensure_same_shape(&state.v, "adam_step (param vs second moment)")?;
    if let Some(pos) = grad.data.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite gradient element {} at ({}, {})",
            grad.data[pos],
            pos / grad.cols,
            pos % grad.cols
        )));
    }

    let t = state.step + 1;
    let bias1 = 1.0 - cfg.beta1.powf(t as f64);
    let bias2 = 1.0 - cfg.beta2.powf(t as f64);
    let (b1, b2) = (cfg.beta1, cfg.beta2);

    for (((x, &g), m), v) in param
        .data
        .iter_mut()
        .zip(&grad.data)
        .zip(state.m.data.iter_mut())
        .zip(state.v.data.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *x -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    state.step = t;
    Ok(())
}
