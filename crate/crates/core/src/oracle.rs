//! Dense reference solver for small problems.
//!
//! Plain ISTA on the explicit masked complex system, independent of the
//! blockwise kernels in [`crate::basis`] and [`crate::reconstructor`]. It
//! minimizes the unit-weight objective
//!
//! ```text
//! f(X) + g(X) = 1/K · ‖P ⊙ (Ψ·X − y)‖²  +  μ/2 · (‖X_real‖₁ + ‖X_imag‖₁)
//! ```
//!
//! which is the reconstructor's objective with `w_real = w_imag = 1`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::BasisKind;
use crate::error::{Error, Result};
use crate::numerics::RealMatrix;
use crate::reconstructor::ReconstructionProblem;

/// Largest basis length the dense solver accepts.
pub const MAX_ORACLE_N: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub x_real: RealMatrix,
    pub x_imag: RealMatrix,
    pub objective: f64,
    pub iterations: usize,
    /// False when `max_iter` ran out before the stopping rule fired.
    pub converged: bool,
    /// Objective after every iteration, starting with the initial point.
    pub trace: Vec<f64>,
}

/// Explicit complex masked operator, one column of `y` at a time.
struct DenseSystem {
    n: usize,
    k: usize,
    psi: Vec<Complex64>,
    mask: Vec<f64>,
    y: Vec<f64>,
    mu: f64,
}

impl DenseSystem {
    fn new(problem: &ReconstructionProblem) -> Result<Self> {
        let (n, k) = (problem.n(), problem.k());
        if n > MAX_ORACLE_N {
            return Err(Error::param("n", format!("dense oracle supports N <= {MAX_ORACLE_N}, got {n}")));
        }
        let psi = match problem.basis.kind() {
            BasisKind::Fourier => (0..n * n)
                .map(|idx| {
                    let (r, j) = (idx / n, idx % n);
                    let theta = std::f64::consts::TAU * ((r * j) % n) as f64 / n as f64;
                    Complex64::from_polar(1.0, theta)
                })
                .collect(),
            BasisKind::Identity => (0..n * n)
                .map(|idx| if idx / n == idx % n { Complex64::ONE } else { Complex64::ZERO })
                .collect(),
        };
        Ok(Self {
            n,
            k,
            psi,
            mask: problem.mask.to_matrix().into_vec(),
            y: problem.y.as_slice().to_vec(),
            mu: problem.mu,
        })
    }

    /// `P ⊙ (Ψ·x − y)` for column `c`.
    fn residual(&self, x: &[Complex64], c: usize) -> Vec<Complex64> {
        (0..self.n)
            .map(|r| {
                let p = self.mask[r * self.k + c];
                if p == 0.0 {
                    return Complex64::ZERO;
                }
                let row = &self.psi[r * self.n..(r + 1) * self.n];
                let s: Complex64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
                s - self.y[r * self.k + c]
            })
            .collect()
    }

    /// `Ψᴴ·v`.
    fn adjoint(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::ZERO; self.n];
        for (r, &vr) in v.iter().enumerate() {
            if vr == Complex64::ZERO {
                continue;
            }
            let row = &self.psi[r * self.n..(r + 1) * self.n];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a.conj() * vr;
            }
        }
        out
    }

    fn smooth_part(&self, x: &[Vec<Complex64>]) -> f64 {
        let total: f64 = (0..self.k)
            .map(|c| self.residual(&x[c], c).iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum();
        total / self.k as f64
    }

    fn objective(&self, x: &[Vec<Complex64>]) -> f64 {
        let l1: f64 = x.iter().flatten().map(|z| z.re.abs() + z.im.abs()).sum();
        self.smooth_part(x) + 0.5 * self.mu * l1
    }

    /// Largest eigenvalue of `Ψᴴ·diag(p_c)·Ψ` over columns, by power iteration.
    fn max_gram_eigenvalue(&self) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut best: f64 = 0.0;
        for c in 0..self.k {
            let mut v: Vec<Complex64> = (0..self.n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let mut lambda = 0.0;
            for _ in 0..1000 {
                let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if norm == 0.0 {
                    break;
                }
                v.iter_mut().for_each(|z| *z /= norm);
                let pv: Vec<Complex64> = (0..self.n)
                    .map(|r| {
                        let row = &self.psi[r * self.n..(r + 1) * self.n];
                        let s: Complex64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
                        s * self.mask[r * self.k + c]
                    })
                    .collect();
                let w = self.adjoint(&pv);
                let next: f64 = v.iter().zip(&w).map(|(a, b)| (a.conj() * b).re).sum();
                v = w;
                let done = (next - lambda).abs() <= 1e-12 * next.abs();
                lambda = next;
                if done {
                    break;
                }
            }
            best = best.max(lambda);
        }
        best
    }
}

/// Lipschitz constant of the gradient of the smooth data term.
pub fn lipschitz_constant(problem: &ReconstructionProblem) -> Result<f64> {
    let sys = DenseSystem::new(problem)?;
    Ok(2.0 / sys.k as f64 * sys.max_gram_eigenvalue())
}

/// Smallest μ for which `X = 0` is optimal: the l1 subgradient then covers
/// the data-term gradient at the origin.
pub fn zero_solution_threshold(problem: &ReconstructionProblem) -> Result<f64> {
    let sys = DenseSystem::new(problem)?;
    let mut worst: f64 = 0.0;
    for c in 0..sys.k {
        let py: Vec<Complex64> = (0..sys.n).map(|r| Complex64::from(sys.y[r * sys.k + c])).collect();
        for z in sys.adjoint(&py) {
            worst = worst.max(z.re.abs()).max(z.im.abs());
        }
    }
    Ok(4.0 / sys.k as f64 * worst)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Proximal-gradient iterations from `X = 0`. Stops once an iteration lowers
/// the objective by less than `tol`; `step` must not exceed `1/L` from
/// [`lipschitz_constant`].
pub fn ista_solve(problem: &ReconstructionProblem, step: f64, max_iter: usize, tol: f64) -> Result<OracleResult> {
    let sys = DenseSystem::new(problem)?;
    let lipschitz = 2.0 / sys.k as f64 * sys.max_gram_eigenvalue();
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::param("step", format!("must be positive, got {step}")));
    }
    if lipschitz > 0.0 && step > (1.0 + 1e-9) / lipschitz {
        return Err(Error::param("step", format!("{step} exceeds 1/L = {}", 1.0 / lipschitz)));
    }
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::param("tol", format!("must be >= 0, got {tol}")));
    }
    let (n, k) = (sys.n, sys.k);
    let thresh = step * 0.5 * sys.mu;
    let grad_scale = 2.0 / k as f64;
    let mut x = vec![vec![Complex64::ZERO; n]; k];
    let mut obj = sys.objective(&x);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let next: Vec<Vec<Complex64>> = (0..k)
            .map(|c| {
                let g = sys.adjoint(&sys.residual(&x[c], c));
                x[c].iter()
                    .zip(&g)
                    .map(|(xv, gv)| {
                        let z = xv - gv * (step * grad_scale);
                        Complex64::new(soft_threshold(z.re, thresh), soft_threshold(z.im, thresh))
                    })
                    .collect()
            })
            .collect();
        let next_obj = sys.objective(&next);
        x = next;
        let decrease = obj - next_obj;
        obj = next_obj;
        trace.push(obj);
        if decrease < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("ista_solve stopped after {max_iter} iterations without meeting tol {tol}");
    }
    let x_real = RealMatrix::from_fn(n, k, |r, c| x[c][r].re);
    let x_imag = RealMatrix::from_fn(n, k, |r, c| x[c][r].im);
    Ok(OracleResult {
        x_real,
        x_imag,
        objective: obj,
        iterations,
        converged,
        trace,
    })
}
