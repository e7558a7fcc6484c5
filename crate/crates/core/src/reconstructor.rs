//! Training loop that fits complex basis coefficients to masked observations.
//!
//! The model is a single complex linear layer: basis rows go in, the masked
//! synthesis `P ⊙ (Ψ·X)` comes out, and `X = X_real + i·X_imag` are the
//! weights. The objective per batch `B` of basis rows is
//!
//! ```text
//! w_real/K · Σ_B (y − Re ŷ)²  +  w_imag/K · Σ_B (Im ŷ)²  +  μ/2 · |B|/N · (‖X_real‖₁ + ‖X_imag‖₁)
//! ```
//!
//! so that summing the batch totals of one epoch gives the full-matrix
//! objective. Gradients are analytic; updates use Adam with per-segment
//! learning rates and loss weights from a [`TrainingSchedule`].

use std::sync::Arc;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::basis::{basis_rows, block_product, synthesize, BasisKind, BasisRowBlock, BasisSpec};
use crate::error::{Error, Result};
use crate::numerics::{adam_step_in_place, l1_norm, sign0, AdamConfig, AdamState, RealMatrix};
use crate::sampling::MaskMatrix;

/// Default l1 weight for the 1/K-normalized objective.
pub const DEFAULT_MU: f64 = 1024.0;

/// Default standard deviation of the Gaussian coefficient initialization.
pub const DEFAULT_INIT_STD: f64 = 1e-3;

/// Rows per block when synthesizing a full signal outside training.
pub const DEFAULT_SYNTHESIS_BLOCK: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionProblem {
    /// Masked observations, zero wherever the mask is zero.
    pub y: RealMatrix,
    pub mask: MaskMatrix,
    pub basis: BasisSpec,
    /// l1 penalty weight.
    pub mu: f64,
}

impl ReconstructionProblem {
    pub fn new(y: RealMatrix, mask: MaskMatrix, basis: BasisSpec, mu: f64) -> Result<Self> {
        if mask.shape() != y.shape() {
            return Err(Error::shape(
                "ReconstructionProblem",
                format!("mask {}x{}", mask.n(), mask.k()),
                format!("observations {}x{}", y.rows(), y.cols()),
            ));
        }
        if basis.n() != y.rows() {
            return Err(Error::shape(
                "ReconstructionProblem",
                format!("basis length {}", basis.n()),
                format!("{} observation rows", y.rows()),
            ));
        }
        if !mu.is_finite() || mu < 0.0 {
            return Err(Error::param("mu", format!("must be finite and >= 0, got {mu}")));
        }
        for r in 0..y.rows() {
            for c in 0..y.cols() {
                if mask.get(r, c) == 0 && y.get(r, c) != 0.0 {
                    return Err(Error::param(
                        "y",
                        format!("observation ({r}, {c}) is nonzero where the mask is zero"),
                    ));
                }
            }
        }
        Ok(Self { y, mask, basis, mu })
    }

    /// Masks a complete signal and wraps it as a problem.
    pub fn from_signal(u: &RealMatrix, mask: MaskMatrix, basis: BasisSpec, mu: f64) -> Result<Self> {
        let y = crate::sampling::apply_mask(&mask, u)?;
        Self::new(y, mask, basis, mu)
    }

    pub fn n(&self) -> usize {
        self.y.rows()
    }

    pub fn k(&self) -> usize {
        self.y.cols()
    }

    /// Restricts the problem to a subset of channels.
    pub fn select_channels(&self, cols: &[usize]) -> Result<Self> {
        Ok(Self {
            y: self.y.select_columns(cols)?,
            mask: self.mask.select_columns(cols)?,
            basis: self.basis,
            mu: self.mu,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSegment {
    pub epochs: usize,
    pub learning_rate: f64,
    pub w_real: f64,
    pub w_imag: f64,
    pub batch_size: usize,
}

impl ScheduleSegment {
    pub fn validate(&self, n: Option<usize>) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::param("epochs", "segment must run at least one epoch"));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::param("learning_rate", format!("must be positive, got {}", self.learning_rate)));
        }
        if !self.w_real.is_finite() || !self.w_imag.is_finite() || self.w_real <= 0.0 || self.w_imag <= 0.0 {
            return Err(Error::param(
                "loss weights",
                format!("must be positive, got ({}, {})", self.w_real, self.w_imag),
            ));
        }
        if self.batch_size == 0 || n.is_some_and(|n| self.batch_size > n) {
            return Err(Error::param(
                "batch_size",
                format!("must lie in [1, N], got {} for N = {}", self.batch_size, n.unwrap_or(0)),
            ));
        }
        Ok(())
    }
}

/// Ordered epoch segments of learning rate, loss weights and batch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrainingSchedule {
    segments: Vec<ScheduleSegment>,
}

impl Default for TrainingSchedule {
    /// Six 100-epoch segments: learning rate 1e-4 then 1e-5, real-part loss
    /// weight ramped 1 → 8192, imaginary-part weight 1 → 512, batch 128.
    fn default() -> Self {
        let rows = [
            (1e-4, 1.0, 1.0),
            (1e-4, 128.0, 1.0),
            (1e-4, 256.0, 1.0),
            (1e-5, 1024.0, 1.0),
            (1e-5, 4096.0, 512.0),
            (1e-5, 8192.0, 512.0),
        ];
        Self {
            segments: rows
                .iter()
                .map(|&(learning_rate, w_real, w_imag)| ScheduleSegment {
                    epochs: 100,
                    learning_rate,
                    w_real,
                    w_imag,
                    batch_size: 128,
                })
                .collect(),
        }
    }
}

impl TrainingSchedule {
    pub fn new(segments: Vec<ScheduleSegment>) -> Result<Self> {
        let s = Self { segments };
        s.validate(None)?;
        Ok(s)
    }

    /// One segment with unit loss weights.
    pub fn constant(epochs: usize, learning_rate: f64, batch_size: usize) -> Result<Self> {
        Self::new(vec![ScheduleSegment {
            epochs,
            learning_rate,
            w_real: 1.0,
            w_imag: 1.0,
            batch_size,
        }])
    }

    pub fn segments(&self) -> &[ScheduleSegment] {
        &self.segments
    }

    pub fn total_epochs(&self) -> usize {
        self.segments.iter().map(|s| s.epochs).sum()
    }

    /// Segment index and segment for a zero-based epoch.
    pub fn segment_at(&self, epoch: usize) -> Option<(usize, &ScheduleSegment)> {
        let mut end = 0;
        for (i, s) in self.segments.iter().enumerate() {
            end += s.epochs;
            if epoch < end {
                return Some((i, s));
            }
        }
        None
    }

    /// Same schedule with every batch size replaced.
    pub fn with_batch_size(&self, batch_size: usize) -> Self {
        Self {
            segments: self.segments.iter().map(|s| ScheduleSegment { batch_size, ..*s }).collect(),
        }
    }

    /// Same schedule with every segment's epoch count multiplied.
    pub fn scaled_epochs(&self, factor: usize) -> Self {
        Self {
            segments: self
                .segments
                .iter()
                .map(|s| ScheduleSegment {
                    epochs: s.epochs * factor,
                    ..*s
                })
                .collect(),
        }
    }

    pub fn validate(&self, n: Option<usize>) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::param("schedule", "at least one segment is required"));
        }
        self.segments.iter().try_for_each(|s| s.validate(n))
    }
}

/// Trainable coefficients and their Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientState {
    pub x_real: RealMatrix,
    pub x_imag: RealMatrix,
    pub adam_real: AdamState,
    pub adam_imag: AdamState,
}

impl CoefficientState {
    pub fn zeros(n: usize, k: usize) -> Self {
        Self::from_coefficients(RealMatrix::zeros(n, k), RealMatrix::zeros(n, k)).expect("same shape")
    }

    /// Fresh optimizer moments around the given coefficients.
    pub fn from_coefficients(x_real: RealMatrix, x_imag: RealMatrix) -> Result<Self> {
        x_real.ensure_same_shape(&x_imag, "CoefficientState")?;
        let (n, k) = x_real.shape();
        Ok(Self {
            x_real,
            x_imag,
            adam_real: AdamState::new(n, k),
            adam_imag: AdamState::new(n, k),
        })
    }

    /// Independent zero-mean Gaussian coefficients drawn from `seed`.
    pub fn initialize(n: usize, k: usize, seed: u64, std_dev: f64) -> Result<Self> {
        if !std_dev.is_finite() || std_dev < 0.0 {
            return Err(Error::param("init_std", format!("must be finite and >= 0, got {std_dev}")));
        }
        if std_dev == 0.0 {
            return Ok(Self::zeros(n, k));
        }
        let normal = Normal::new(0.0, std_dev).map_err(|e| Error::param("init_std", e.to_string()))?;
        let mut rng = init_rng(seed);
        let xr = RealMatrix::from_fn(n, k, |_, _| normal.sample(&mut rng));
        let xi = RealMatrix::from_fn(n, k, |_, _| normal.sample(&mut rng));
        Self::from_coefficients(xr, xi)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.x_real.shape()
    }

    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        let pick = |a: &AdamState| -> Result<AdamState> {
            Ok(AdamState {
                m: a.m.select_columns(cols)?,
                v: a.v.select_columns(cols)?,
                step: a.step,
            })
        };
        Ok(Self {
            x_real: self.x_real.select_columns(cols)?,
            x_imag: self.x_imag.select_columns(cols)?,
            adam_real: pick(&self.adam_real)?,
            adam_imag: pick(&self.adam_imag)?,
        })
    }

    fn check(&self, n: usize, k: usize, op: &'static str) -> Result<()> {
        for m in [
            &self.x_real,
            &self.x_imag,
            &self.adam_real.m,
            &self.adam_real.v,
            &self.adam_imag.m,
            &self.adam_imag.v,
        ] {
            if m.shape() != (n, k) {
                return Err(Error::shape(op, format!("{n}x{k} state"), format!("{}x{}", m.rows(), m.cols())));
            }
        }
        Ok(())
    }
}

/// Loss components. Per-epoch records hold the sum of that epoch's batch
/// records; `epoch` is 1-based (0 for a standalone evaluation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub data_loss_real: f64,
    pub data_loss_imag: f64,
    pub l1_penalty: f64,
    pub total: f64,
}

impl LossRecord {
    fn compose(data_loss_real: f64, data_loss_imag: f64, l1_penalty: f64, w_real: f64, w_imag: f64) -> Self {
        Self {
            epoch: 0,
            data_loss_real,
            data_loss_imag,
            l1_penalty,
            total: w_real * data_loss_real + w_imag * data_loss_imag + l1_penalty,
        }
    }

    fn accumulate(&mut self, other: &LossRecord) {
        self.data_loss_real += other.data_loss_real;
        self.data_loss_imag += other.data_loss_imag;
        self.l1_penalty += other.l1_penalty;
        self.total += other.total;
    }
}

fn check_batch(state: &CoefficientState, block: &BasisRowBlock, mask: &MaskMatrix) -> Result<()> {
    let (n, k) = mask.shape();
    if block.width() != n {
        return Err(Error::shape("forward_batch", format!("block width {n}"), format!("{}", block.width())));
    }
    state.check(n, k, "forward_batch")
}

/// Masked real and imaginary outputs for the block rows,
/// `P_B ⊙ (Ψ_B · X)`.
pub fn forward_batch(
    state: &CoefficientState,
    block: &BasisRowBlock,
    mask: &MaskMatrix,
) -> Result<(RealMatrix, RealMatrix)> {
    check_batch(state, block, mask)?;
    let (mut yr, mut yi) = block_product(block, &state.x_real, &state.x_imag)?;
    mask_rows(&mut yr, block.rows(), mask);
    mask_rows(&mut yi, block.rows(), mask);
    Ok((yr, yi))
}

fn mask_rows(m: &mut RealMatrix, rows: &[usize], mask: &MaskMatrix) {
    for (i, &r) in rows.iter().enumerate() {
        for (v, &b) in m.row_mut(i).iter_mut().zip(mask.row(r)) {
            if b == 0 {
                *v = 0.0;
            }
        }
    }
}

/// Batch loss from already-masked outputs.
#[allow(clippy::too_many_arguments)]
pub fn batch_loss(
    yhat_real: &RealMatrix,
    yhat_imag: &RealMatrix,
    y_rows: &RealMatrix,
    state: &CoefficientState,
    seg: &ScheduleSegment,
    mu: f64,
    batch_rows: usize,
    n_total: usize,
) -> Result<LossRecord> {
    yhat_real.ensure_same_shape(yhat_imag, "batch_loss (real vs imag output)")?;
    yhat_real.ensure_same_shape(y_rows, "batch_loss (output vs observations)")?;
    let k = y_rows.cols() as f64;
    let dr: f64 = yhat_real
        .as_slice()
        .iter()
        .zip(y_rows.as_slice())
        .map(|(p, y)| (y - p).powi(2))
        .sum();
    let di = yhat_imag.sum_squares();
    let l1 = l1_scale(mu, batch_rows, n_total) * (l1_norm(&state.x_real) + l1_norm(&state.x_imag));
    Ok(LossRecord::compose(dr / k, di / k, l1, seg.w_real, seg.w_imag))
}

#[inline]
fn l1_scale(mu: f64, batch_rows: usize, n_total: usize) -> f64 {
    0.5 * mu * batch_rows as f64 / n_total as f64
}

/// Analytic gradients of [`batch_loss`] with respect to `(X_real, X_imag)`.
#[allow(clippy::too_many_arguments)]
pub fn batch_gradients(
    state: &CoefficientState,
    block: &BasisRowBlock,
    mask: &MaskMatrix,
    y_rows: &RealMatrix,
    seg: &ScheduleSegment,
    mu: f64,
    batch_rows: usize,
    n_total: usize,
) -> Result<(RealMatrix, RealMatrix)> {
    let eval = evaluate_batch(state, block, mask, y_rows, seg, mu, batch_rows, n_total, true)?;
    Ok(eval.grads.expect("gradients requested"))
}

struct BatchEval {
    loss: LossRecord,
    grads: Option<(RealMatrix, RealMatrix)>,
}

/// Forward pass, loss and (optionally) gradients in one sweep over the block.
#[allow(clippy::too_many_arguments)]
fn evaluate_batch(
    state: &CoefficientState,
    block: &BasisRowBlock,
    mask: &MaskMatrix,
    y_rows: &RealMatrix,
    seg: &ScheduleSegment,
    mu: f64,
    batch_rows: usize,
    n_total: usize,
    want_grads: bool,
) -> Result<BatchEval> {
    check_batch(state, block, mask)?;
    let (n, k) = state.shape();
    if y_rows.shape() != (block.len(), k) {
        return Err(Error::shape(
            "batch",
            format!("{}x{k} observation rows", block.len()),
            format!("{}x{}", y_rows.rows(), y_rows.cols()),
        ));
    }
    let (psi_x_r, psi_x_i) = block_product(block, &state.x_real, &state.x_imag)?;

    // residuals E_r = P ⊙ (ΨX − y), E_i = P ⊙ Im(ΨX)
    let mut err_r = psi_x_r;
    let mut err_i = psi_x_i;
    let (mut dr, mut di) = (0.0, 0.0);
    for (i, &r) in block.rows().iter().enumerate() {
        let bits = mask.row(r);
        let y = y_rows.row(i);
        let er = err_r.row_mut(i);
        for c in 0..k {
            er[c] = if bits[c] == 1 { er[c] - y[c] } else { 0.0 };
            dr += er[c] * er[c];
        }
        let ei = err_i.row_mut(i);
        for c in 0..k {
            if bits[c] == 0 {
                ei[c] = 0.0;
            }
            di += ei[c] * ei[c];
        }
    }
    let lam = l1_scale(mu, batch_rows, n_total);
    let l1 = lam * (l1_norm(&state.x_real) + l1_norm(&state.x_imag));
    let kf = k as f64;
    let loss = LossRecord::compose(dr / kf, di / kf, l1, seg.w_real, seg.w_imag);
    if !want_grads {
        return Ok(BatchEval { loss, grads: None });
    }

    let sr = 2.0 * seg.w_real / kf;
    let si = 2.0 * seg.w_imag / kf;
    err_r.as_mut_slice().iter_mut().for_each(|v| *v *= sr);
    err_i.as_mut_slice().iter_mut().for_each(|v| *v *= si);

    let mut g_r = RealMatrix::zeros(n, k);
    let mut g_i = RealMatrix::zeros(n, k);
    {
        let gr = g_r.as_mut_slice();
        let gi = g_i.as_mut_slice();
        for i in 0..block.len() {
            let (er, ei) = (err_r.row(i), err_i.row(i));
            if er.iter().chain(ei).all(|&v| v == 0.0) {
                continue;
            }
            let (pr, pi) = (block.real.row(i), block.imag.row(i));
            for (j, (&a, &b)) in pr.iter().zip(pi).enumerate() {
                let gr_j = &mut gr[j * k..(j + 1) * k];
                let gi_j = &mut gi[j * k..(j + 1) * k];
                for c in 0..k {
                    gr_j[c] += a * er[c] + b * ei[c];
                    gi_j[c] += a * ei[c] - b * er[c];
                }
            }
        }
        if lam > 0.0 {
            for (g, &x) in gr.iter_mut().zip(state.x_real.as_slice()) {
                *g += lam * sign0(x);
            }
            for (g, &x) in gi.iter_mut().zip(state.x_imag.as_slice()) {
                *g += lam * sign0(x);
            }
        }
    }
    Ok(BatchEval {
        loss,
        grads: Some((g_r, g_i)),
    })
}

/// Batch evaluation through full-length FFTs. `Ψ·x` is an unnormalized
/// inverse DFT and `Ψᴴ·z` a forward DFT, so a Fourier batch costs
/// O(K·N log N) however many rows it holds.
struct FftKernel {
    inverse: Arc<dyn Fft<f64>>,
    forward: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl FftKernel {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let inverse = planner.plan_fft_inverse(n);
        let forward = planner.plan_fft_forward(n);
        let scratch_len = inverse.get_inplace_scratch_len().max(forward.get_inplace_scratch_len());
        Self {
            inverse,
            forward,
            buf: vec![Complex64::default(); n],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    /// Same quantities as [`evaluate_batch`] for a Fourier basis.
    fn evaluate(
        &mut self,
        state: &CoefficientState,
        rows: &[usize],
        problem: &ReconstructionProblem,
        seg: &ScheduleSegment,
    ) -> BatchEval {
        let (n, k) = state.shape();
        let kf = k as f64;
        let lam = l1_scale(problem.mu, rows.len(), n);
        let (sr, si) = (2.0 * seg.w_real / kf, 2.0 * seg.w_imag / kf);
        let mut g_r = RealMatrix::zeros(n, k);
        let mut g_i = RealMatrix::zeros(n, k);
        let (mut dr, mut di) = (0.0, 0.0);
        let mut resid = vec![(0.0, 0.0); rows.len()];
        for c in 0..k {
            for (j, z) in self.buf.iter_mut().enumerate() {
                *z = Complex64::new(state.x_real.get(j, c), state.x_imag.get(j, c));
            }
            self.inverse.process_with_scratch(&mut self.buf, &mut self.scratch);
            for (e, &r) in resid.iter_mut().zip(rows) {
                *e = if problem.mask.get(r, c) == 1 {
                    let z = self.buf[r];
                    (z.re - problem.y.get(r, c), z.im)
                } else {
                    (0.0, 0.0)
                };
                dr += e.0 * e.0;
                di += e.1 * e.1;
            }
            self.buf.fill(Complex64::default());
            for (&(er, ei), &r) in resid.iter().zip(rows) {
                self.buf[r] = Complex64::new(sr * er, si * ei);
            }
            self.forward.process_with_scratch(&mut self.buf, &mut self.scratch);
            for (j, z) in self.buf.iter().enumerate() {
                g_r.set(j, c, z.re + lam * sign0(state.x_real.get(j, c)));
                g_i.set(j, c, z.im + lam * sign0(state.x_imag.get(j, c)));
            }
        }
        let l1 = lam * (l1_norm(&state.x_real) + l1_norm(&state.x_imag));
        BatchEval {
            loss: LossRecord::compose(dr / kf, di / kf, l1, seg.w_real, seg.w_imag),
            grads: Some((g_r, g_i)),
        }
    }
}

/// Full-matrix objective at the given loss weights, evaluated by streamed
/// synthesis rather than batching.
pub fn objective(problem: &ReconstructionProblem, state: &CoefficientState, w_real: f64, w_imag: f64) -> Result<LossRecord> {
    let (n, k) = (problem.n(), problem.k());
    state.check(n, k, "objective")?;
    let (ur, ui) = synthesize(&problem.basis, &state.x_real, &state.x_imag, DEFAULT_SYNTHESIS_BLOCK.min(n))?;
    let (mut dr, mut di) = (0.0, 0.0);
    for r in 0..n {
        for c in 0..k {
            if problem.mask.get(r, c) == 1 {
                dr += (ur.get(r, c) - problem.y.get(r, c)).powi(2);
                di += ui.get(r, c).powi(2);
            }
        }
    }
    let l1 = 0.5 * problem.mu * (l1_norm(&state.x_real) + l1_norm(&state.x_imag));
    Ok(LossRecord::compose(dr / k as f64, di / k as f64, l1, w_real, w_imag))
}

/// Adam constants that stay fixed across segments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub init_std: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            init_std: DEFAULT_INIT_STD,
        }
    }
}

impl TrainOptions {
    fn adam(&self, learning_rate: f64) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            learning_rate,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: CoefficientState,
    pub history: Vec<LossRecord>,
}

// stream 0 seeds the coefficients, stream e + 1 shuffles epoch e
fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

/// Stateful, resumable training run.
pub struct Trainer<'a> {
    problem: &'a ReconstructionProblem,
    schedule: &'a TrainingSchedule,
    seed: u64,
    opts: TrainOptions,
    state: CoefficientState,
    epoch: usize,
    history: Vec<LossRecord>,
    fft: Option<FftKernel>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        problem: &'a ReconstructionProblem,
        schedule: &'a TrainingSchedule,
        seed: u64,
        opts: TrainOptions,
    ) -> Result<Self> {
        let state = CoefficientState::initialize(problem.n(), problem.k(), seed, opts.init_std)?;
        Self::resume(problem, schedule, seed, opts, state, 0)
    }

    /// Starts from an explicit state after `epochs_done` completed epochs.
    pub fn resume(
        problem: &'a ReconstructionProblem,
        schedule: &'a TrainingSchedule,
        seed: u64,
        opts: TrainOptions,
        state: CoefficientState,
        epochs_done: usize,
    ) -> Result<Self> {
        schedule.validate(Some(problem.n()))?;
        opts.adam(1.0).validate()?;
        state.check(problem.n(), problem.k(), "Trainer")?;
        if epochs_done > schedule.total_epochs() {
            return Err(Error::param(
                "epoch",
                format!("{epochs_done} exceeds the schedule's {} epochs", schedule.total_epochs()),
            ));
        }
        Ok(Self {
            problem,
            schedule,
            seed,
            opts,
            state,
            epoch: epochs_done,
            history: Vec::new(),
            fft: (problem.basis.kind() == BasisKind::Fourier).then(|| FftKernel::new(problem.n())),
        })
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self) -> &CoefficientState {
        &self.state
    }

    pub fn history(&self) -> &[LossRecord] {
        &self.history
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.schedule.total_epochs()
    }

    /// Runs one epoch; `None` once the schedule is exhausted.
    pub fn step_epoch(&mut self) -> Result<Option<LossRecord>> {
        let Some((_, seg)) = self.schedule.segment_at(self.epoch) else {
            return Ok(None);
        };
        let seg = *seg;
        let n = self.problem.n();
        let adam = self.opts.adam(seg.learning_rate);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut epoch_rng(self.seed, self.epoch));

        let mut record = LossRecord {
            epoch: self.epoch + 1,
            data_loss_real: 0.0,
            data_loss_imag: 0.0,
            l1_penalty: 0.0,
            total: 0.0,
        };
        for (batch, rows) in order.chunks(seg.batch_size).enumerate() {
            let eval = match self.fft.as_mut() {
                Some(kernel) => kernel.evaluate(&self.state, rows, self.problem, &seg),
                None => {
                    let block = basis_rows(&self.problem.basis, rows)?;
                    let y_rows = self.problem.y.select_rows(rows)?;
                    evaluate_batch(
                        &self.state,
                        &block,
                        &self.problem.mask,
                        &y_rows,
                        &seg,
                        self.problem.mu,
                        rows.len(),
                        n,
                        true,
                    )?
                }
            };
            let diverged = |detail: String| Error::Divergence {
                epoch: self.epoch + 1,
                batch,
                detail,
            };
            if !eval.loss.total.is_finite() {
                return Err(diverged(format!("non-finite loss {}", eval.loss.total)));
            }
            let (g_r, g_i) = eval.grads.expect("gradients requested");
            let st = &mut self.state;
            adam_step_in_place(&mut st.x_real, &g_r, &mut st.adam_real, &adam)
                .and_then(|_| adam_step_in_place(&mut st.x_imag, &g_i, &mut st.adam_imag, &adam))
                .map_err(|e| diverged(e.to_string()))?;
            record.accumulate(&eval.loss);
        }
        self.epoch += 1;
        self.history.push(record);
        Ok(Some(record))
    }

    /// Runs the remaining epochs, calling `observer` after each one.
    pub fn run_with(mut self, mut observer: impl FnMut(&LossRecord, &CoefficientState)) -> Result<TrainOutcome> {
        while let Some(rec) = self.step_epoch()? {
            observer(&rec, &self.state);
        }
        Ok(TrainOutcome {
            state: self.state,
            history: self.history,
        })
    }

    pub fn run(self) -> Result<TrainOutcome> {
        self.run_with(|_, _| {})
    }
}

/// Trains from a seeded Gaussian start with default Adam constants.
pub fn train(problem: &ReconstructionProblem, schedule: &TrainingSchedule, seed: u64) -> Result<TrainOutcome> {
    Trainer::new(problem, schedule, seed, TrainOptions::default())?.run()
}

/// `Ψ·X` for a trained state: the real part is the reconstructed signal, the
/// imaginary part a residual diagnostic.
pub fn reconstruct(state: &CoefficientState, basis: &BasisSpec) -> Result<(RealMatrix, RealMatrix)> {
    synthesize(basis, &state.x_real, &state.x_imag, DEFAULT_SYNTHESIS_BLOCK.min(basis.n()))
}
