//! Row-block generation of the complex synthesis basis.
//!
//! The full `N×N` basis is never materialized: callers ask for a set of rows,
//! use them, and drop them. For the Fourier kind, element `(n, k)` is
//! `exp(+2πi·n·k/N)` with no normalization, so that `U = Ψ·X` and a cosine of
//! amplitude `A` lands as `A/2` on each of its two conjugate bins.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RealMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Fourier,
    /// Real identity basis with a zero imaginary part. Test fixture.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    n: usize,
    kind: BasisKind,
}

impl BasisSpec {
    pub fn new(n: usize, kind: BasisKind) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("n", format!("basis length must be >= 2, got {n}")));
        }
        Ok(Self { n, kind })
    }

    pub fn fourier(n: usize) -> Result<Self> {
        Self::new(n, BasisKind::Fourier)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(n, BasisKind::Identity)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }
}

/// A set of basis rows, split into real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisRowBlock {
    rows: Vec<usize>,
    pub real: RealMatrix,
    pub imag: RealMatrix,
}

impl BasisRowBlock {
    /// Absolute basis row index of each block row.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn row_start(&self) -> usize {
        self.rows[0]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Basis length `N` (block width).
    pub fn width(&self) -> usize {
        self.real.cols()
    }
}

/// Contiguous rows `row_start .. row_start + block_rows`.
pub fn basis_block(spec: &BasisSpec, row_start: usize, block_rows: usize) -> Result<BasisRowBlock> {
    if block_rows == 0 || row_start.checked_add(block_rows).is_none_or(|end| end > spec.n) {
        return Err(Error::Range(format!(
            "rows {row_start}..{} outside basis of length {}",
            row_start.saturating_add(block_rows),
            spec.n
        )));
    }
    let rows: Vec<usize> = (row_start..row_start + block_rows).collect();
    basis_rows(spec, &rows)
}

/// Arbitrary (e.g. shuffled) rows, in the given order.
pub fn basis_rows(spec: &BasisSpec, rows: &[usize]) -> Result<BasisRowBlock> {
    let n = spec.n;
    if rows.is_empty() {
        return Err(Error::Range("empty row set".into()));
    }
    if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
        return Err(Error::Range(format!("row {bad} outside basis of length {n}")));
    }
    let b = rows.len();
    let mut real = RealMatrix::zeros(b, n);
    let mut imag = RealMatrix::zeros(b, n);
    match spec.kind {
        BasisKind::Identity => {
            for (i, &r) in rows.iter().enumerate() {
                real.set(i, r, 1.0);
            }
        }
        BasisKind::Fourier => {
            let (cos_t, sin_t) = twiddles(n);
            for (i, &r) in rows.iter().enumerate() {
                // phase index (r·k) mod n, advanced incrementally
                let mut idx = 0usize;
                for out in real.row_mut(i).iter_mut() {
                    *out = cos_t[idx];
                    idx += r;
                    if idx >= n {
                        idx -= n;
                    }
                }
                let mut idx = 0usize;
                for out in imag.row_mut(i).iter_mut() {
                    *out = sin_t[idx];
                    idx += r;
                    if idx >= n {
                        idx -= n;
                    }
                }
            }
        }
    }
    Ok(BasisRowBlock {
        rows: rows.to_vec(),
        real,
        imag,
    })
}

/// `cos(2πj/n)` and `sin(2πj/n)` for `j < n`.
fn twiddles(n: usize) -> (Vec<f64>, Vec<f64>) {
    (0..n)
        .map(|j| {
            let theta = TAU * j as f64 / n as f64;
            (theta.cos(), theta.sin())
        })
        .unzip()
}

/// Complex product of a basis block with `X = x_real + i·x_imag`:
/// `(Ψr·Xr − Ψi·Xi, Ψr·Xi + Ψi·Xr)` restricted to the block rows.
pub fn block_product(block: &BasisRowBlock, x_real: &RealMatrix, x_imag: &RealMatrix) -> Result<(RealMatrix, RealMatrix)> {
    x_real.ensure_same_shape(x_imag, "block_product (x_real vs x_imag)")?;
    if x_real.rows() != block.width() {
        return Err(Error::shape(
            "block_product",
            format!("{} coefficient rows", block.width()),
            format!("{}", x_real.rows()),
        ));
    }
    let k = x_real.cols();
    let b = block.len();
    let mut out_r = RealMatrix::zeros(b, k);
    let mut out_i = RealMatrix::zeros(b, k);
    let xr = x_real.as_slice();
    let xi = x_imag.as_slice();
    for i in 0..b {
        let pr = block.real.row(i);
        let pi = block.imag.row(i);
        let mut acc_r = vec![0.0; k];
        let mut acc_i = vec![0.0; k];
        for (j, (&re, &im)) in pr.iter().zip(pi).enumerate() {
            let xr_j = &xr[j * k..(j + 1) * k];
            let xi_j = &xi[j * k..(j + 1) * k];
            for col in 0..k {
                acc_r[col] += re * xr_j[col] - im * xi_j[col];
                acc_i[col] += re * xi_j[col] + im * xr_j[col];
            }
        }
        out_r.row_mut(i).copy_from_slice(&acc_r);
        out_i.row_mut(i).copy_from_slice(&acc_i);
    }
    Ok((out_r, out_i))
}

/// Streams `Ψ·X` in blocks of `block_rows` rows. Returns the real and
/// imaginary parts of the `N×K` product.
pub fn synthesize(
    spec: &BasisSpec,
    x_real: &RealMatrix,
    x_imag: &RealMatrix,
    block_rows: usize,
) -> Result<(RealMatrix, RealMatrix)> {
    x_real.ensure_same_shape(x_imag, "synthesize (x_real vs x_imag)")?;
    if x_real.rows() != spec.n {
        return Err(Error::shape(
            "synthesize",
            format!("{} coefficient rows", spec.n),
            format!("{}", x_real.rows()),
        ));
    }
    if block_rows == 0 {
        return Err(Error::param("block_rows", "must be >= 1"));
    }
    let (n, k) = x_real.shape();
    let mut out_r = RealMatrix::zeros(n, k);
    let mut out_i = RealMatrix::zeros(n, k);
    let mut start = 0;
    while start < n {
        let len = block_rows.min(n - start);
        let block = basis_block(spec, start, len)?;
        let (br, bi) = block_product(&block, x_real, x_imag)?;
        for i in 0..len {
            out_r.row_mut(start + i).copy_from_slice(br.row(i));
            out_i.row_mut(start + i).copy_from_slice(bi.row(i));
        }
        start += len;
    }
    Ok((out_r, out_i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn spec_rejects_short_basis() {
        assert!(BasisSpec::fourier(1).is_err());
        assert!(BasisSpec::fourier(2).is_ok());
    }

    #[test]
    fn fourier_row_zero_is_all_ones() {
        let b = basis_block(&BasisSpec::fourier(4).unwrap(), 0, 1).unwrap();
        assert_eq!(b.real.as_slice(), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(b.imag.as_slice(), &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn fourier_row_one_n4() {
        let b = basis_block(&BasisSpec::fourier(4).unwrap(), 1, 1).unwrap();
        let re = [1.0, 0.0, -1.0, 0.0];
        let im = [0.0, 1.0, 0.0, -1.0];
        for k in 0..4 {
            assert!(close(b.real.get(0, k), re[k], 1e-12));
            assert!(close(b.imag.get(0, k), im[k], 1e-12));
        }
    }

    #[test]
    fn identity_block() {
        let spec = BasisSpec::identity(3).unwrap();
        let b = basis_block(&spec, 0, 3).unwrap();
        assert_eq!(b.real, RealMatrix::identity(3));
        assert_eq!(b.imag, RealMatrix::zeros(3, 3));
    }

    #[test]
    fn out_of_range_rows() {
        let spec = BasisSpec::fourier(8).unwrap();
        assert!(matches!(basis_block(&spec, 6, 3), Err(Error::Range(_))));
        assert!(matches!(basis_block(&spec, 0, 0), Err(Error::Range(_))));
        assert!(matches!(basis_rows(&spec, &[1, 8]), Err(Error::Range(_))));
    }

    #[test]
    fn fourier_block_matches_direct_evaluation() {
        let n = 37;
        let spec = BasisSpec::fourier(n).unwrap();
        let b = basis_block(&spec, 0, n).unwrap();
        for r in 0..n {
            for k in 0..n {
                let theta = TAU * (r * k) as f64 / n as f64;
                assert!(close(b.real.get(r, k), theta.cos(), 1e-12));
                assert!(close(b.imag.get(r, k), theta.sin(), 1e-12));
            }
        }
    }

    #[test]
    fn conjugate_symmetry_of_columns() {
        let n = 24;
        let b = basis_block(&BasisSpec::fourier(n).unwrap(), 0, n).unwrap();
        for r in 0..n {
            for k in 0..n {
                let mirror = (n - k) % n;
                assert!(close(b.real.get(r, k), b.real.get(r, mirror), 1e-12));
                assert!(close(b.imag.get(r, k), -b.imag.get(r, mirror), 1e-12));
            }
        }
    }

    #[test]
    fn scaled_gram_is_identity() {
        for n in [2, 5, 16, 64] {
            let b = basis_block(&BasisSpec::fourier(n).unwrap(), 0, n).unwrap();
            // (Ψᴴ Ψ)[j,k] = Σ_r conj(ψ_rj) ψ_rk
            for j in 0..n {
                for k in 0..n {
                    let (mut re, mut im) = (0.0, 0.0);
                    for r in 0..n {
                        let (a, c) = (b.real.get(r, j), -b.imag.get(r, j));
                        let (x, y) = (b.real.get(r, k), b.imag.get(r, k));
                        re += a * x - c * y;
                        im += a * y + c * x;
                    }
                    let expect = if j == k { 1.0 } else { 0.0 };
                    assert!(close(re / n as f64, expect, 1e-9), "n={n} ({j},{k}) re={re}");
                    assert!(close(im / n as f64, 0.0, 1e-9));
                }
            }
        }
    }

    #[test]
    fn synthesize_identity_passthrough() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xr = RealMatrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0));
        let xi = RealMatrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0));
        let (ur, ui) = synthesize(&BasisSpec::identity(6).unwrap(), &xr, &xi, 4).unwrap();
        assert_eq!(ur, xr);
        assert_eq!(ui, xi);
    }

    #[test]
    fn synthesize_impulse_reads_basis_column() {
        let n = 8;
        let mut xr = RealMatrix::zeros(n, 1);
        xr.set(1, 0, 1.0);
        let xi = RealMatrix::zeros(n, 1);
        let (ur, ui) = synthesize(&BasisSpec::fourier(n).unwrap(), &xr, &xi, 3).unwrap();
        for t in 0..n {
            let theta = TAU * t as f64 / n as f64;
            assert!(close(ur.get(t, 0), theta.cos(), 1e-12));
            assert!(close(ui.get(t, 0), theta.sin(), 1e-12));
        }
    }

    #[test]
    fn synthesize_shape_errors() {
        let spec = BasisSpec::fourier(8).unwrap();
        let x = RealMatrix::zeros(7, 1);
        assert!(matches!(synthesize(&spec, &x, &x, 2), Err(Error::Shape { .. })));
        let x8 = RealMatrix::zeros(8, 1);
        assert!(matches!(synthesize(&spec, &x8, &RealMatrix::zeros(8, 2), 2), Err(Error::Shape { .. })));
    }

    #[test]
    fn conjugate_symmetric_coefficients_give_real_signal() {
        let n = 32;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut xr = RealMatrix::zeros(n, 3);
        let mut xi = RealMatrix::zeros(n, 3);
        for c in 0..3 {
            xr.set(0, c, rng.random_range(-1.0..1.0));
            xr.set(n / 2, c, rng.random_range(-1.0..1.0));
            for b in 1..n / 2 {
                let (re, im) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                xr.set(b, c, re);
                xr.set(n - b, c, re);
                xi.set(b, c, im);
                xi.set(n - b, c, -im);
            }
        }
        let (ur, ui) = synthesize(&BasisSpec::fourier(n).unwrap(), &xr, &xi, 5).unwrap();
        assert!(ui.max_abs() < 1e-9 * ur.max_abs());
    }

    /// Monolithic complex product, computed with direct trig evaluation.
    fn dense_product(n: usize, xr: &RealMatrix, xi: &RealMatrix) -> (RealMatrix, RealMatrix) {
        let k = xr.cols();
        let mut ur = RealMatrix::zeros(n, k);
        let mut ui = RealMatrix::zeros(n, k);
        for t in 0..n {
            for j in 0..n {
                let theta = TAU * ((t * j) % n) as f64 / n as f64;
                let (c, s) = (theta.cos(), theta.sin());
                for col in 0..k {
                    let (a, b) = (xr.get(j, col), xi.get(j, col));
                    ur.set(t, col, ur.get(t, col) + c * a - s * b);
                    ui.set(t, col, ui.get(t, col) + c * b + s * a);
                }
            }
        }
        (ur, ui)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn blockwise_equals_monolithic(n in 2usize..40, k in 1usize..4, block in 1usize..48, seed in any::<u64>()) {
            let block = block.min(n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xr = RealMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
            let xi = RealMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
            let (ur, ui) = synthesize(&BasisSpec::fourier(n).unwrap(), &xr, &xi, block).unwrap();
            let (dr, di) = dense_product(n, &xr, &xi);
            prop_assert!(ur.sub(&dr).unwrap().max_abs() < 1e-12 * n as f64);
            prop_assert!(ui.sub(&di).unwrap().max_abs() < 1e-12 * n as f64);
        }
    }
}
