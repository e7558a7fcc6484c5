//! Synthetic sinusoids, slicing, spectra and the per-channel reconstruction error.

use std::f64::consts::TAU;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RealMatrix;

/// `N×K` samples with their time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    pub data: RealMatrix,
    pub sample_rate: f64,
    pub channel_names: Vec<String>,
    pub t0: f64,
}

impl SignalMatrix {
    pub fn new(data: RealMatrix, sample_rate: f64, channel_names: Vec<String>, t0: f64) -> Result<Self> {
        if !sample_rate.is_finite() || sample_rate <= 0.0 {
            return Err(Error::param("sample_rate", format!("must be positive, got {sample_rate}")));
        }
        if channel_names.len() != data.cols() {
            return Err(Error::shape(
                "SignalMatrix::new",
                format!("{} channel names", data.cols()),
                format!("{}", channel_names.len()),
            ));
        }
        Ok(Self {
            data,
            sample_rate,
            channel_names,
            t0,
        })
    }

    /// Uses `ch1..chK` as channel names.
    pub fn unnamed(data: RealMatrix, sample_rate: f64) -> Result<Self> {
        let names = (1..=data.cols()).map(|i| format!("ch{i}")).collect();
        Self::new(data, sample_rate, names, 0.0)
    }

    pub fn samples(&self) -> usize {
        self.data.rows()
    }

    pub fn channels(&self) -> usize {
        self.data.cols()
    }

    pub fn duration(&self) -> f64 {
        self.samples() as f64 / self.sample_rate
    }

    pub fn select_channels(&self, idx: &[usize]) -> Result<Self> {
        Ok(Self {
            data: self.data.select_columns(idx)?,
            sample_rate: self.sample_rate,
            channel_names: idx.iter().map(|&i| self.channel_names[i].clone()).collect(),
            t0: self.t0,
        })
    }
}

/// `A·cos(2π·f·t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidSpec {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

impl SinusoidSpec {
    pub fn new(amplitude: f64, frequency: f64, phase: f64) -> Self {
        Self {
            amplitude,
            frequency,
            phase,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (TAU * self.frequency * t + self.phase).cos()
    }
}

/// The five tones of the reference experiment: 10..50 Hz with amplitudes
/// (1, 0.1, 0.3, 0.5, 0.7) and phases (0, 0.1π, 0.3π, 0.5π, 0.7π).
pub fn reference_tones() -> Vec<SinusoidSpec> {
    use std::f64::consts::PI;
    vec![
        SinusoidSpec::new(1.0, 10.0, 0.0),
        SinusoidSpec::new(0.1, 20.0, 0.1 * PI),
        SinusoidSpec::new(0.3, 30.0, 0.3 * PI),
        SinusoidSpec::new(0.5, 40.0, 0.5 * PI),
        SinusoidSpec::new(0.7, 50.0, 0.7 * PI),
    ]
}

/// One channel per spec sampled at `t = j / sample_rate`, plus an optional
/// final channel holding their sum.
pub fn generate_sinusoids(
    specs: &[SinusoidSpec],
    sample_rate: f64,
    duration: f64,
    include_superposition: bool,
) -> Result<SignalMatrix> {
    if specs.is_empty() {
        return Err(Error::param("specs", "at least one sinusoid is required"));
    }
    if !sample_rate.is_finite() || sample_rate <= 0.0 {
        return Err(Error::param("sample_rate", format!("must be positive, got {sample_rate}")));
    }
    let samples = duration * sample_rate;
    let n = samples.round();
    if duration.is_nan() || duration <= 0.0 || (samples - n).abs() > 1e-6 * samples.max(1.0) || n < 1.0 {
        return Err(Error::param(
            "duration",
            format!("duration·sample_rate must be a positive whole number of samples, got {samples}"),
        ));
    }
    let n = n as usize;
    let nyquist = sample_rate / 2.0;
    for (i, s) in specs.iter().enumerate() {
        if !(s.frequency >= 0.0 && s.frequency < nyquist) {
            return Err(Error::param(
                "frequency",
                format!("spec {i}: frequency {} Hz outside [0, {nyquist}) Hz", s.frequency),
            ));
        }
    }
    let k = specs.len() + usize::from(include_superposition);
    let data = RealMatrix::from_fn(n, k, |j, c| {
        let t = j as f64 / sample_rate;
        if c < specs.len() {
            specs[c].eval(t)
        } else {
            specs.iter().map(|s| s.eval(t)).sum()
        }
    });
    let mut names: Vec<String> = (1..=specs.len()).map(|i| format!("s{i}")).collect();
    if include_superposition {
        names.push(format!("s{}", specs.len() + 1));
    }
    SignalMatrix::new(data, sample_rate, names, 0.0)
}

/// Consecutive non-overlapping windows of `slice_len` samples. A trailing
/// remainder is dropped with a warning.
pub fn slice(signal: &SignalMatrix, slice_len: usize) -> Result<Vec<SignalMatrix>> {
    let n = signal.samples();
    if slice_len == 0 || slice_len > n {
        return Err(Error::param(
            "slice_len",
            format!("must lie in [1, {n}], got {slice_len}"),
        ));
    }
    let count = n / slice_len;
    if !n.is_multiple_of(slice_len) {
        warn!("dropping trailing {} samples that do not fill a slice of {slice_len}", n % slice_len);
    }
    (0..count)
        .map(|s| {
            let rows: Vec<usize> = (s * slice_len..(s + 1) * slice_len).collect();
            Ok(SignalMatrix {
                data: signal.data.select_rows(&rows)?,
                sample_rate: signal.sample_rate,
                channel_names: signal.channel_names.clone(),
                t0: signal.t0 + (s * slice_len) as f64 / signal.sample_rate,
            })
        })
        .collect()
}

/// Stacks slices back into one signal. Inverse of [`slice`] when no
/// remainder was dropped.
pub fn concatenate(slices: &[SignalMatrix]) -> Result<SignalMatrix> {
    let first = slices.first().ok_or_else(|| Error::param("slices", "nothing to concatenate"))?;
    let k = first.channels();
    let mut data = Vec::new();
    let mut rows = 0;
    for s in slices {
        if s.channels() != k {
            return Err(Error::shape("concatenate", format!("{k} channels"), format!("{}", s.channels())));
        }
        data.extend_from_slice(s.data.as_slice());
        rows += s.samples();
    }
    SignalMatrix::new(
        RealMatrix::new(rows, k, data)?,
        first.sample_rate,
        first.channel_names.clone(),
        first.t0,
    )
}

/// Relative l2 error per channel, `‖u_k − û_k‖ / ‖u_k‖`. `None` marks a
/// channel whose original has zero norm.
pub fn reconstruction_error(u: &RealMatrix, u_rec: &RealMatrix) -> Result<Vec<Option<f64>>> {
    u.ensure_same_shape(u_rec, "reconstruction_error")?;
    let (n, k) = u.shape();
    let mut num = vec![0.0; k];
    let mut den = vec![0.0; k];
    for r in 0..n {
        for c in 0..k {
            let a = u.get(r, c);
            let d = a - u_rec.get(r, c);
            num[c] += d * d;
            den[c] += a * a;
        }
    }
    Ok(num
        .iter()
        .zip(&den)
        .map(|(&e, &s)| (s > 0.0).then(|| (e / s).sqrt()))
        .collect())
}

/// One-sided amplitude spectrum of coefficient matrices, `(⌊N/2⌋+1)×K`.
///
/// Bins strictly between DC and Nyquist are doubled so that a cosine of
/// amplitude `A` reads back as `A`. Bin `b` sits at `b·f_s/N` Hz.
pub fn amplitude_spectrum(x_real: &RealMatrix, x_imag: &RealMatrix) -> Result<RealMatrix> {
    x_real.ensure_same_shape(x_imag, "amplitude_spectrum")?;
    let (n, k) = x_real.shape();
    let half = n / 2;
    Ok(RealMatrix::from_fn(half + 1, k, |b, c| {
        let mag = x_real.get(b, c).hypot(x_imag.get(b, c));
        let edge = b == 0 || (n % 2 == 0 && b == half);
        if edge {
            mag
        } else {
            2.0 * mag
        }
    }))
}

pub fn bin_frequency(bin: usize, n: usize, sample_rate: f64) -> f64 {
    bin as f64 * sample_rate / n as f64
}

/// Largest spectrum value for channel `c` within `radius` bins of `center`.
pub fn peak_near(spectrum: &RealMatrix, c: usize, center: usize, radius: usize) -> (usize, f64) {
    let lo = center.saturating_sub(radius);
    let hi = (center + radius).min(spectrum.rows() - 1);
    (lo..=hi)
        .map(|b| (b, spectrum.get(b, c)))
        .fold((lo, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
}

/// Root-sum-square of spectrum values within `half_width` bins of `center`.
/// Recovers the tone amplitude of an off-bin sinusoid whose energy leaks into
/// neighbouring bins.
pub fn band_amplitude(spectrum: &RealMatrix, c: usize, center: usize, half_width: usize) -> f64 {
    let lo = center.saturating_sub(half_width);
    let hi = (center + half_width).min(spectrum.rows() - 1);
    (lo..=hi).map(|b| spectrum.get(b, c).powi(2)).sum::<f64>().sqrt()
}

/// Departure from conjugate symmetry: `(real, imag)` mismatch.
///
/// Real: `max |x_r[n] − x_r[N−n]|`, imaginary: `max |x_i[n] + x_i[N−n]|`
/// over `n ≥ 1` and all channels, each divided by the largest magnitude in
/// that part. A part that is identically zero has mismatch 0.
pub fn symmetry_mismatch(x_real: &RealMatrix, x_imag: &RealMatrix) -> Result<(f64, f64)> {
    x_real.ensure_same_shape(x_imag, "symmetry_mismatch")?;
    let (n, k) = x_real.shape();
    if n < 2 {
        return Err(Error::param("n", "symmetry needs at least two coefficient rows"));
    }
    let (max_r, max_i) = (x_real.max_abs(), x_imag.max_abs());
    if max_r == 0.0 && max_i == 0.0 {
        return Err(Error::Undefined("symmetry of an all-zero coefficient set".into()));
    }
    let mut dev_r: f64 = 0.0;
    let mut dev_i: f64 = 0.0;
    for b in 1..n {
        let m = n - b;
        for c in 0..k {
            dev_r = dev_r.max((x_real.get(b, c) - x_real.get(m, c)).abs());
            dev_i = dev_i.max((x_imag.get(b, c) + x_imag.get(m, c)).abs());
        }
    }
    let norm = |dev: f64, max: f64| if max > 0.0 { dev / max } else { 0.0 };
    Ok((norm(dev_r, max_r), norm(dev_i, max_i)))
}
