//! Mask → train → reconstruct pipelines over slices, ratios and seeds.

use std::collections::BTreeMap;
use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::config::{ExperimentConfig, InputSource, SyntheticSpec};
use crate::error::{Error, Result};
use crate::numerics::RealMatrix;
use crate::reconstructor::{
    reconstruct, CoefficientState, LossRecord, ReconstructionProblem, TrainOptions, Trainer,
};
use crate::sampling::{effective_ratio, generate_mask_with_layout, MaskMatrix};
use crate::signals::{generate_sinusoids, reconstruction_error, slice, SignalMatrix};

/// Synthetic channels with optional white noise scaled to each channel's RMS.
pub fn synthesize_input(spec: &SyntheticSpec) -> Result<SignalMatrix> {
    let mut sig = generate_sinusoids(&spec.tones, spec.sample_rate, spec.duration, spec.include_superposition)?;
    if spec.noise > 0.0 {
        add_noise(&mut sig.data, spec.noise, spec.noise_seed)?;
    }
    Ok(sig)
}

/// Adds `N(0, (level · rms_c)²)` to every sample of channel `c`.
pub fn add_noise(data: &mut RealMatrix, level: f64, seed: u64) -> Result<()> {
    let (n, k) = data.shape();
    let std_normal = Normal::new(0.0, 1.0).map_err(|e| Error::Numeric(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rms: Vec<f64> = (0..k)
        .map(|c| (data.column(c).iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt())
        .collect();
    for r in 0..n {
        for (c, v) in data.row_mut(r).iter_mut().enumerate() {
            *v += level * rms[c] * std_normal.sample(&mut rng);
        }
    }
    Ok(())
}

/// Loads the configured input and applies the channel subset.
pub fn load_signal(cfg: &ExperimentConfig) -> Result<SignalMatrix> {
    let sig = match &cfg.input {
        InputSource::Synthetic(spec) => synthesize_input(spec).map_err(|e| Error::config("input.synthetic", e.to_string()))?,
        InputSource::Csv { path, sample_rate } => crate::io::read_signal(path, *sample_rate)?,
    };
    match &cfg.channels {
        Some(idx) => {
            if let Some(&bad) = idx.iter().find(|&&c| c >= sig.channels()) {
                return Err(Error::config("channels", format!("channel {bad} out of range for {} channels", sig.channels())));
            }
            sig.select_channels(idx)
        }
        None => Ok(sig),
    }
}

/// Slices the input; errors when the signal is shorter than one slice.
pub fn load_slices(cfg: &ExperimentConfig) -> Result<Vec<SignalMatrix>> {
    let sig = load_signal(cfg)?;
    if sig.samples() < cfg.slice_len {
        return Err(Error::config(
            "slice_len",
            format!("{} exceeds the {} available samples", cfg.slice_len, sig.samples()),
        ));
    }
    slice(&sig, cfg.slice_len)
}

/// Mask seed for one slice: slices of a run get distinct masks, ratios of
/// the same seed share uniforms so their masks are nested.
pub fn mask_seed(seed: u64, slice_index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(slice_index as u64)
}

#[derive(Debug, Clone)]
pub struct SliceOutcome {
    pub slice_index: usize,
    pub ratio: f64,
    pub seed: u64,
    pub mask: MaskMatrix,
    pub state: CoefficientState,
    pub history: Vec<LossRecord>,
    pub reconstruction: SignalMatrix,
    /// Imaginary part of `Ψ·X`, ideally zero.
    pub imag_residual: RealMatrix,
    pub xi: Vec<Option<f64>>,
    pub effective_ratio: f64,
    pub wall_time_s: f64,
    /// Reconstructions at the requested epochs.
    pub snapshots: BTreeMap<usize, RealMatrix>,
}

/// Masks, trains and reconstructs one slice.
pub fn run_slice(
    cfg: &ExperimentConfig,
    signal: &SignalMatrix,
    slice_index: usize,
    ratio: f64,
    seed: u64,
) -> Result<SliceOutcome> {
    let start = Instant::now();
    let (n, k) = signal.data.shape();
    let mask = generate_mask_with_layout(n, k, ratio, mask_seed(seed, slice_index), cfg.mask_layout)?;
    let basis = BasisSpec::new(n, cfg.basis)?;
    let problem = ReconstructionProblem::from_signal(&signal.data, mask.clone(), basis, cfg.mu)?;
    let opts = TrainOptions {
        init_std: cfg.init_std,
        ..TrainOptions::default()
    };
    let mut snapshots = BTreeMap::new();
    let mut snapshot_err = None;
    let out = Trainer::new(&problem, &cfg.schedule, seed, opts)?.run_with(|rec, state| {
        if cfg.snapshot_epochs.contains(&rec.epoch) {
            match reconstruct(state, &basis) {
                Ok((u, _)) => {
                    snapshots.insert(rec.epoch, u);
                }
                Err(e) => snapshot_err = Some(e),
            }
        }
    })?;
    if let Some(e) = snapshot_err {
        return Err(e);
    }
    let (u_rec, u_imag) = reconstruct(&out.state, &basis)?;
    let xi = reconstruction_error(&signal.data, &u_rec)?;
    for (c, v) in xi.iter().enumerate() {
        if v.is_none() {
            warn!("slice {slice_index}: channel {} is identically zero, error undefined", signal.channel_names[c]);
        }
    }
    let reconstruction = SignalMatrix::new(u_rec, signal.sample_rate, signal.channel_names.clone(), signal.t0)?;
    Ok(SliceOutcome {
        slice_index,
        ratio,
        seed,
        effective_ratio: effective_ratio(&mask),
        mask,
        state: out.state,
        history: out.history,
        reconstruction,
        imag_residual: u_imag,
        xi,
        wall_time_s: start.elapsed().as_secs_f64(),
        snapshots,
    })
}

/// One row per (slice, ratio, seed, channel).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub slice: usize,
    pub ratio: f64,
    pub seed: u64,
    pub channel: String,
    pub xi: Option<f64>,
    pub data_loss_real: Option<f64>,
    pub data_loss_imag: Option<f64>,
    pub l1_penalty: Option<f64>,
    pub total_loss: Option<f64>,
    pub effective_ratio: Option<f64>,
    pub wall_time_s: f64,
    /// Empty on success.
    pub error: String,
}

/// Column excluded when comparing sweep files across runs.
pub const TIMING_COLUMN: &str = "wall_time_s";

#[derive(Debug)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Failures in cell order, for choosing an exit code.
    pub failures: Vec<Error>,
}

/// Runs every (slice, ratio, seed) cell on a bounded worker pool. Cell
/// failures become error rows and do not stop the sweep.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    let slices = load_slices(cfg)?;
    let cells: Vec<(usize, f64, u64)> = (0..slices.len())
        .flat_map(|s| cfg.ratios.iter().flat_map(move |&r| cfg.seeds.iter().map(move |&seed| (s, r, seed))))
        .collect();
    info!("sweep: {} slices x {} ratios x {} seeds", slices.len(), cfg.ratios.len(), cfg.seeds.len());
    let run_cell = |&(s, ratio, seed): &(usize, f64, u64)| {
        let start = Instant::now();
        let res = run_slice(cfg, &slices[s], s, ratio, seed);
        match &res {
            Ok(o) => info!("slice {s} ratio {ratio} seed {seed}: {:.1} s", o.wall_time_s),
            Err(e) => warn!("slice {s} ratio {ratio} seed {seed} failed: {e}"),
        }
        (res, start.elapsed().as_secs_f64())
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    let results: Vec<_> = pool.install(|| cells.par_iter().map(run_cell).collect());

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (&(s, ratio, seed), (res, secs)) in cells.iter().zip(results) {
        let names = &slices[s].channel_names;
        match res {
            Ok(o) => {
                let last = o.history.last().copied();
                for (c, name) in names.iter().enumerate() {
                    rows.push(SweepRow {
                        slice: s,
                        ratio,
                        seed,
                        channel: name.clone(),
                        xi: o.xi[c],
                        data_loss_real: last.map(|l| l.data_loss_real),
                        data_loss_imag: last.map(|l| l.data_loss_imag),
                        l1_penalty: last.map(|l| l.l1_penalty),
                        total_loss: last.map(|l| l.total),
                        effective_ratio: Some(o.effective_ratio),
                        wall_time_s: o.wall_time_s,
                        error: if o.xi[c].is_none() { "undefined: zero-norm channel".into() } else { String::new() },
                    });
                }
            }
            Err(e) => {
                for name in names {
                    rows.push(SweepRow {
                        slice: s,
                        ratio,
                        seed,
                        channel: name.clone(),
                        xi: None,
                        data_loss_real: None,
                        data_loss_imag: None,
                        l1_penalty: None,
                        total_loss: None,
                        effective_ratio: None,
                        wall_time_s: secs,
                        error: e.to_string(),
                    });
                }
                failures.push(e);
            }
        }
    }
    let order: BTreeMap<&String, usize> = slices[0].channel_names.iter().enumerate().map(|(i, n)| (n, i)).collect();
    rows.sort_by(|a, b| {
        a.slice
            .cmp(&b.slice)
            .then(a.ratio.total_cmp(&b.ratio))
            .then(order.get(&a.channel).cmp(&order.get(&b.channel)))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(SweepReport { rows, failures })
}

/// Median ξ per (ratio, channel) over slices and seeds, skipping error rows.
pub fn median_by_ratio(rows: &[SweepRow]) -> BTreeMap<String, Vec<(f64, f64)>> {
    let mut groups: BTreeMap<(String, u64), (f64, Vec<f64>)> = BTreeMap::new();
    for row in rows {
        if let Some(xi) = row.xi {
            groups
                .entry((row.channel.clone(), row.ratio.to_bits()))
                .or_insert_with(|| (row.ratio, Vec::new()))
                .1
                .push(xi);
        }
    }
    let mut out: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for ((channel, _), (ratio, mut v)) in groups {
        out.entry(channel).or_default().push((ratio, median(&mut v)));
    }
    for series in out.values_mut() {
        series.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
