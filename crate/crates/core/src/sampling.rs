//! Random 0/1 masks modelling compressive acquisition.
//!
//! Masks are drawn from a ChaCha8 stream keyed by a 64-bit seed, so a
//! transmitter and a receiver sharing `(n, k, ratio, seed, layout)` rebuild the
//! identical mask.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RealMatrix;

/// How Bernoulli draws are laid out across channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskLayout {
    /// One independent draw per element.
    #[default]
    Independent,
    /// One draw per time row, shared by every channel.
    SharedAcrossChannels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskMatrix {
    n: usize,
    k: usize,
    bits: Vec<u8>,
    ratio: f64,
    seed: u64,
    layout: MaskLayout,
}

/// Regeneration record stored next to a mask CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskMeta {
    pub n: usize,
    pub k: usize,
    pub ratio: f64,
    pub seed: u64,
    #[serde(default)]
    pub layout: MaskLayout,
}

impl MaskMatrix {
    /// Builds a mask from explicit bits (row-major). `ratio` and `seed` are
    /// recorded as given.
    pub fn from_bits(n: usize, k: usize, bits: Vec<u8>, ratio: f64, seed: u64) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::shape("MaskMatrix::from_bits", "n >= 1 and k >= 1", format!("{n}x{k}")));
        }
        if bits.len() != n * k {
            return Err(Error::shape(
                "MaskMatrix::from_bits",
                format!("{} bits", n * k),
                format!("{}", bits.len()),
            ));
        }
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::param("bits", format!("mask elements must be 0 or 1, found {b}")));
        }
        Ok(Self {
            n,
            k,
            bits,
            ratio,
            seed,
            layout: MaskLayout::Independent,
        })
    }

    pub fn ones(n: usize, k: usize) -> Self {
        Self::from_bits(n, k, vec![1; n * k], 1.0, 0).expect("non-empty mask")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.k)
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layout(&self) -> MaskLayout {
        self.layout
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.bits[r * self.k + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u8] {
        &self.bits[r * self.k..(r + 1) * self.k]
    }

    pub fn meta(&self) -> MaskMeta {
        MaskMeta {
            n: self.n,
            k: self.k,
            ratio: self.ratio,
            seed: self.seed,
            layout: self.layout,
        }
    }

    pub fn to_matrix(&self) -> RealMatrix {
        RealMatrix::new(self.n, self.k, self.bits.iter().map(|&b| f64::from(b)).collect())
            .expect("mask dims are positive")
    }

    /// Restricts the mask to a subset of channels.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.k) {
            return Err(Error::Range(format!("column {bad} out of range for {} columns", self.k)));
        }
        let mut bits = Vec::with_capacity(self.n * cols.len());
        for r in 0..self.n {
            let row = self.row(r);
            bits.extend(cols.iter().map(|&c| row[c]));
        }
        Ok(Self {
            k: cols.len(),
            bits,
            ..self.clone()
        })
    }
}

/// Per-element Bernoulli(`ratio`) mask.
pub fn generate_mask(n: usize, k: usize, ratio: f64, seed: u64) -> Result<MaskMatrix> {
    generate_mask_with_layout(n, k, ratio, seed, MaskLayout::Independent)
}

pub fn generate_mask_with_layout(n: usize, k: usize, ratio: f64, seed: u64, layout: MaskLayout) -> Result<MaskMatrix> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::param("ratio", format!("sampling ratio must lie in (0, 1], got {ratio}")));
    }
    if n == 0 || k == 0 {
        return Err(Error::shape("generate_mask", "n >= 1 and k >= 1", format!("{n}x{k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // `random::<f64>()` lies in [0, 1), so ratio = 1 keeps everything
    let mut draw = || u8::from(rng.random::<f64>() < ratio);
    let bits = match layout {
        MaskLayout::Independent => (0..n * k).map(|_| draw()).collect(),
        MaskLayout::SharedAcrossChannels => (0..n)
            .flat_map(|_| {
                let b = draw();
                std::iter::repeat_n(b, k)
            })
            .collect(),
    };
    Ok(MaskMatrix {
        n,
        k,
        bits,
        ratio,
        seed,
        layout,
    })
}

/// Rebuilds a mask from its side-car record.
pub fn regenerate(meta: &MaskMeta) -> Result<MaskMatrix> {
    generate_mask_with_layout(meta.n, meta.k, meta.ratio, meta.seed, meta.layout)
}

/// `P ⊙ U`. Masked-out entries are exactly zero.
pub fn apply_mask(mask: &MaskMatrix, u: &RealMatrix) -> Result<RealMatrix> {
    if mask.shape() != u.shape() {
        return Err(Error::shape(
            "apply_mask",
            format!("{}x{}", mask.n, mask.k),
            format!("{}x{}", u.rows(), u.cols()),
        ));
    }
    let data = u
        .as_slice()
        .iter()
        .zip(&mask.bits)
        .map(|(&x, &b)| if b == 1 { x } else { 0.0 })
        .collect();
    RealMatrix::new(u.rows(), u.cols(), data)
}

/// Realized fraction of kept samples.
pub fn effective_ratio(mask: &MaskMatrix) -> f64 {
    let ones: usize = mask.bits.iter().map(|&b| usize::from(b)).sum();
    ones as f64 / (mask.n * mask.k) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_ratio_keeps_everything() {
        let m = generate_mask(50, 3, 1.0, 9).unwrap();
        assert!(m.bits().iter().all(|&b| b == 1));
        assert_eq!(effective_ratio(&m), 1.0);
    }

    #[test]
    fn ratio_validation() {
        for bad in [0.0, -0.1, 1.01, f64::NAN] {
            assert!(matches!(generate_mask(4, 4, bad, 1), Err(Error::Parameter { .. })));
        }
    }

    #[test]
    fn bernoulli_fraction_within_three_sigma() {
        let m = generate_mask(10_000, 1, 0.3, 42).unwrap();
        assert!((effective_ratio(&m) - 0.3).abs() <= 0.015);
    }

    #[test]
    fn three_sigma_on_fixed_seeds() {
        for (seed, ratio) in [(1u64, 0.1), (2, 0.2), (3, 0.35), (4, 0.5), (5, 0.8)] {
            let (n, k) = (2048, 6);
            let m = generate_mask(n, k, ratio, seed).unwrap();
            let sigma = (ratio * (1.0 - ratio) / (n * k) as f64).sqrt();
            assert!((effective_ratio(&m) - ratio).abs() <= 3.0 * sigma, "seed {seed}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_mask(300, 4, 0.25, 77).unwrap();
        let b = generate_mask(300, 4, 0.25, 77).unwrap();
        assert_eq!(a, b);
        let c = generate_mask(300, 4, 0.25, 78).unwrap();
        assert_ne!(a.bits(), c.bits());
        assert_eq!(regenerate(&a.meta()).unwrap(), a);
    }

    #[test]
    fn shared_layout_repeats_rows() {
        let m = generate_mask_with_layout(200, 5, 0.4, 3, MaskLayout::SharedAcrossChannels).unwrap();
        for r in 0..200 {
            assert!(m.row(r).iter().all(|&b| b == m.get(r, 0)));
        }
    }

    #[test]
    fn apply_mask_examples() {
        let u = RealMatrix::from_rows(&[vec![1.0, -2.0], vec![3.5, 4.0]]).unwrap();
        assert_eq!(apply_mask(&MaskMatrix::ones(2, 2), &u).unwrap(), u);
        let zeros = MaskMatrix::from_bits(2, 2, vec![0; 4], 0.5, 0).unwrap();
        assert_eq!(apply_mask(&zeros, &u).unwrap(), RealMatrix::zeros(2, 2));
        assert!(matches!(apply_mask(&zeros, &RealMatrix::zeros(3, 2)), Err(Error::Shape { .. })));
    }

    #[test]
    fn effective_ratio_half() {
        let m = MaskMatrix::from_bits(2, 2, vec![1, 0, 0, 1], 0.5, 0).unwrap();
        assert_eq!(effective_ratio(&m), 0.5);
    }

    #[test]
    fn from_bits_rejects_non_binary() {
        assert!(MaskMatrix::from_bits(1, 2, vec![0, 2], 0.5, 0).is_err());
        assert!(MaskMatrix::from_bits(1, 2, vec![0], 0.5, 0).is_err());
    }

    proptest! {
        #[test]
        fn idempotent_and_counted(n in 1usize..60, k in 1usize..5, ratio in 0.01f64..1.0, seed in any::<u64>()) {
            let m = generate_mask(n, k, ratio, seed).unwrap();
            let u = RealMatrix::from_fn(n, k, |r, c| (r as f64 * 0.37 - c as f64).sin() + 0.1);
            let once = apply_mask(&m, &u).unwrap();
            prop_assert_eq!(apply_mask(&m, &once).unwrap(), once.clone());
            let mut count = 0;
            for r in 0..n {
                for c in 0..k {
                    if m.get(r, c) == 1 {
                        count += 1;
                    } else {
                        prop_assert_eq!(once.get(r, c), 0.0);
                    }
                }
            }
            prop_assert_eq!(effective_ratio(&m), count as f64 / (n * k) as f64);
        }

        #[test]
        fn distribution_bound(ratio in 0.05f64..0.95, seed in any::<u64>()) {
            let (n, k) = (5000, 4);
            let m = generate_mask(n, k, ratio, seed).unwrap();
            // fixed seeds are held to 3σ in `three_sigma_on_fixed_seeds`
            let sigma = (ratio * (1.0 - ratio) / (n * k) as f64).sqrt();
            prop_assert!((effective_ratio(&m) - ratio).abs() <= 4.5 * sigma);
        }
    }
}
