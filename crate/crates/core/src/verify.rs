//! Self-checks run by `csrecon verify` on small random instances.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{basis_block, basis_rows, synthesize, BasisSpec};
use crate::error::Result;
use crate::numerics::{adam_step, AdamConfig, AdamState, RealMatrix};
use crate::oracle::{ista_solve, lipschitz_constant};
use crate::reconstructor::{
    batch_gradients, batch_loss, forward_batch, objective, CoefficientState, ReconstructionProblem, ScheduleSegment,
};
use crate::sampling::{apply_mask, generate_mask, regenerate};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, run: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match run() {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> RealMatrix {
    RealMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn random_problem(n: usize, k: usize, ratio: f64, mu: f64, rng: &mut ChaCha8Rng) -> Result<ReconstructionProblem> {
    let u = random_matrix(n, k, rng);
    let mask = generate_mask(n, k, ratio, rng.random())?;
    ReconstructionProblem::from_signal(&u, mask, BasisSpec::fourier(n)?, mu)
}

fn unit_segment(batch_size: usize) -> ScheduleSegment {
    ScheduleSegment {
        epochs: 1,
        learning_rate: 1e-3,
        w_real: 1.0,
        w_imag: 1.0,
        batch_size,
    }
}

/// Largest relative error between analytic and central-difference
/// gradients over `instances` random `N = 16, K = 2` problems with `μ = 0`.
pub fn gradient_check(instances: usize, seed: u64) -> Result<f64> {
    let (n, k) = (16, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let problem = random_problem(n, k, 0.6, 0.0, &mut rng)?;
        let state = CoefficientState::from_coefficients(random_matrix(n, k, &mut rng), random_matrix(n, k, &mut rng))?;
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        rows.truncate(rng.random_range(1..=n));
        let seg = ScheduleSegment {
            w_real: rng.random_range(0.5..4.0),
            w_imag: rng.random_range(0.5..4.0),
            ..unit_segment(rows.len())
        };
        let block = basis_rows(&problem.basis, &rows)?;
        let y_rows = problem.y.select_rows(&rows)?;
        let (g_r, g_i) = batch_gradients(&state, &block, &problem.mask, &y_rows, &seg, 0.0, rows.len(), n)?;
        let loss = |s: &CoefficientState| -> Result<f64> {
            let (a, b) = forward_batch(s, &block, &problem.mask)?;
            Ok(batch_loss(&a, &b, &y_rows, s, &seg, 0.0, rows.len(), n)?.total)
        };
        let h = 1e-6;
        for imag in [false, true] {
            for idx in 0..n * k {
                let mut plus = state.clone();
                let mut minus = state.clone();
                let (p, m) = if imag {
                    (&mut plus.x_imag, &mut minus.x_imag)
                } else {
                    (&mut plus.x_real, &mut minus.x_real)
                };
                p.as_mut_slice()[idx] += h;
                m.as_mut_slice()[idx] -= h;
                let fd = (loss(&plus)? - loss(&minus)?) / (2.0 * h);
                let an = if imag { g_i.as_slice()[idx] } else { g_r.as_slice()[idx] };
                worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-3));
            }
        }
    }
    Ok(worst)
}

/// Largest absolute deviation of `synthesize` and `forward_batch` across
/// block sizes on random `N = 32` instances.
pub fn blockwise_check(instances: usize, seed: u64) -> Result<f64> {
    let n = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = BasisSpec::fourier(n)?;
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let k = rng.random_range(1..=3);
        let state = CoefficientState::from_coefficients(random_matrix(n, k, &mut rng), random_matrix(n, k, &mut rng))?;
        let mask = generate_mask(n, k, 0.5, rng.random())?;
        let (ref_r, ref_i) = synthesize(&spec, &state.x_real, &state.x_imag, n)?;
        let masked_r = apply_mask(&mask, &ref_r)?;
        let masked_i = apply_mask(&mask, &ref_i)?;
        for block in [1, 3, 5, 8, 13, 32] {
            let (r, i) = synthesize(&spec, &state.x_real, &state.x_imag, block)?;
            worst = worst.max(r.sub(&ref_r)?.max_abs()).max(i.sub(&ref_i)?.max_abs());
            let mut start = 0;
            while start < n {
                let len = block.min(n - start);
                let b = basis_block(&spec, start, len)?;
                let (fr, fi) = forward_batch(&state, &b, &mask)?;
                let rows: Vec<usize> = (start..start + len).collect();
                worst = worst
                    .max(fr.sub(&masked_r.select_rows(&rows)?)?.max_abs())
                    .max(fi.sub(&masked_i.select_rows(&rows)?)?.max_abs());
                start += len;
            }
        }
    }
    Ok(worst)
}

/// Relative gap between the summed batch losses of one epoch and the full
/// objective, worst case over batch sizes.
pub fn epoch_decomposition_check(seed: u64) -> Result<f64> {
    let n = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problem = random_problem(n, 3, 0.5, 0.4, &mut rng)?;
    let state = CoefficientState::from_coefficients(random_matrix(n, 3, &mut rng), random_matrix(n, 3, &mut rng))?;
    let seg = ScheduleSegment {
        w_real: 5.0,
        w_imag: 0.5,
        ..unit_segment(1)
    };
    let full = objective(&problem, &state, seg.w_real, seg.w_imag)?.total;
    let mut worst: f64 = 0.0;
    for batch in [1, 3, 7, 16, 32] {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for rows in order.chunks(batch) {
            let block = basis_rows(&problem.basis, rows)?;
            let (a, b) = forward_batch(&state, &block, &problem.mask)?;
            let y_rows = problem.y.select_rows(rows)?;
            total += batch_loss(&a, &b, &y_rows, &state, &seg, problem.mu, rows.len(), n)?.total;
        }
        worst = worst.max((total - full).abs() / full);
    }
    Ok(worst)
}

/// Runs every check.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    vec![
        check("gradient matches finite differences", || {
            let worst = gradient_check(5, seed)?;
            Ok((worst < 1e-5, format!("max relative error {worst:.2e}")))
        }),
        check("blockwise synthesis is block-size independent", || {
            let worst = blockwise_check(3, seed)?;
            Ok((worst < 1e-12, format!("max deviation {worst:.2e}")))
        }),
        check("epoch batch losses sum to the full objective", || {
            let gap = epoch_decomposition_check(seed)?;
            Ok((gap < 1e-9, format!("relative gap {gap:.2e}")))
        }),
        check("mask regenerates from its seed", || {
            let m = generate_mask(256, 4, 0.3, seed)?;
            let u = RealMatrix::filled(256, 4, 2.0);
            let once = apply_mask(&m, &u)?;
            Ok((
                regenerate(&m.meta())? == m && apply_mask(&m, &once)? == once,
                "regenerated and idempotent".to_string(),
            ))
        }),
        check("adam leaves parameters alone under zero gradient", || {
            let p = RealMatrix::filled(3, 2, 0.7);
            let (q, st) = adam_step(&p, &RealMatrix::zeros(3, 2), &AdamState::new(3, 2), &AdamConfig::default())?;
            Ok((q == p && st.step == 1, format!("step {}", st.step)))
        }),
        check("ista objective is monotone", || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let problem = random_problem(32, 2, 0.5, 0.05, &mut rng)?;
            let r = ista_solve(&problem, 1.0 / lipschitz_constant(&problem)?, 300, 0.0)?;
            let ups = r.trace.windows(2).filter(|w| w[1] > w[0] + 1e-12).count();
            Ok((ups == 0, format!("{} iterations, {ups} increases", r.iterations)))
        }),
    ]
}
