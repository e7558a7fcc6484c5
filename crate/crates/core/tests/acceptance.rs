//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion
//! and exits non-zero when any criterion fails.

use std::f64::consts::TAU;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use csrecon::basis::{basis_block, basis_rows, synthesize, BasisSpec};
use csrecon::config::resolve;
use csrecon::experiment::{median_by_ratio, run_sweep};
use csrecon::oracle::{ista_solve, lipschitz_constant};
use csrecon::reconstructor::{
    batch_gradients, batch_loss, forward_batch, objective, reconstruct, train, CoefficientState,
    ReconstructionProblem, ScheduleSegment, TrainOutcome, TrainingSchedule,
};
use csrecon::sampling::{apply_mask, generate_mask};
use csrecon::signals::{
    amplitude_spectrum, band_amplitude, generate_sinusoids, reconstruction_error, reference_tones, slice,
    symmetry_mismatch, SignalMatrix, SinusoidSpec,
};
use csrecon::RealMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const SAMPLE_RATE: f64 = 400.0;
const DURATION: f64 = 20.48;
const SLICE_LEN: usize = 2048;
const RATIO: f64 = 0.2;
const REPLICATION_MU: f64 = 1e-3;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn reference_slices() -> Vec<SignalMatrix> {
    let sig = generate_sinusoids(&reference_tones(), SAMPLE_RATE, DURATION, true).unwrap();
    slice(&sig, SLICE_LEN).unwrap()
}

fn fourier_problem(u: &RealMatrix, ratio: f64, mu: f64, mask_seed: u64) -> ReconstructionProblem {
    let (n, k) = u.shape();
    let mask = generate_mask(n, k, ratio, mask_seed).unwrap();
    ReconstructionProblem::from_signal(u, mask, BasisSpec::fourier(n).unwrap(), mu).unwrap()
}

fn xi_of(problem: &ReconstructionProblem, u: &RealMatrix, out: &TrainOutcome) -> Vec<f64> {
    let (u_rec, _) = reconstruct(&out.state, &problem.basis).unwrap();
    reconstruction_error(u, &u_rec)
        .unwrap()
        .into_iter()
        .map(|x| x.expect("non-zero channel"))
        .collect()
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Trains every slice of the reference signal at the sampling ratio and
/// `mu`, returning (slice outcome, problem) pairs.
fn replication_runs(mu: f64, slices: &[SignalMatrix]) -> Vec<(TrainOutcome, ReconstructionProblem)> {
    slices
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let p = fourier_problem(&s.data, RATIO, mu, 100 + i as u64);
            let out = train(&p, &TrainingSchedule::default(), 1 + i as u64).unwrap();
            (out, p)
        })
        .collect()
}

struct SpectralCheck {
    ok: bool,
    detail: String,
}

/// Peak location within one bin of each tone and leakage-aware amplitude
/// (root-sum-square over the peak and its two neighbours) within 15%.
fn spectral_check(state: &CoefficientState, tones: &[SinusoidSpec]) -> SpectralCheck {
    let spec = amplitude_spectrum(&state.x_real, &state.x_imag).unwrap();
    let n = state.x_real.rows();
    let mut ok = true;
    let mut parts = Vec::new();
    for (c, tone) in tones.iter().enumerate() {
        let exact_bin = tone.frequency * n as f64 / SAMPLE_RATE;
        let (peak_bin, peak) = (1..spec.rows())
            .map(|b| (b, spec.get(b, c)))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        let located = (peak_bin as f64 - exact_bin).abs() <= 1.0;
        let band = band_amplitude(&spec, c, peak_bin, 1);
        let amp_ok = (band - tone.amplitude).abs() <= 0.15 * tone.amplitude;
        ok &= located && amp_ok;
        parts.push(format!(
            "s{}: bin {peak_bin} (tone {exact_bin:.1}) band {band:.3} raw peak {peak:.3} vs {}",
            c + 1,
            tone.amplitude
        ));
    }
    SpectralCheck {
        ok,
        detail: parts.join("; "),
    }
}

fn criterion_1(runs: &[(TrainOutcome, ReconstructionProblem)], slices: &[SignalMatrix]) -> Outcome {
    let tones = reference_tones();
    let mut good = 0;
    for (i, ((out, p), s)) in runs.iter().zip(slices).enumerate() {
        let xi = xi_of(p, &s.data, out);
        let xi_ok = xi.iter().all(|&x| x <= 0.10);
        let spectral = spectral_check(&out.state, &tones);
        let slice_ok = xi_ok && spectral.ok;
        good += usize::from(slice_ok);
        println!(
            "    slice {i}: xi {} (<= 0.10: {xi_ok}); spectrum ok: {}; {}",
            fmt(&xi),
            spectral.ok,
            spectral.detail
        );
    }
    outcome(good >= 3, format!("{good} of 4 slices meet every bound (need 3)"))
}

fn criterion_2(runs: &[(TrainOutcome, ReconstructionProblem)]) -> Outcome {
    let mut worst: (f64, f64) = (0.0, 0.0);
    for (out, _) in runs {
        let (r, i) = symmetry_mismatch(&out.state.x_real, &out.state.x_imag).unwrap();
        worst = (worst.0.max(r), worst.1.max(i));
    }
    outcome(
        worst.0 < 0.10 && worst.1 < 0.10,
        format!("worst mismatch over slices: real {:.4}, imag {:.4} (< 0.10)", worst.0, worst.1),
    )
}

fn criterion_3() -> Outcome {
    let cfg = resolve(
        "sweep",
        None,
        &json!({
            "input": { "synthetic": { "duration": 5.12, "noise": 0.05, "noise_seed": 11 } },
            "channels": [5],
            "seeds": [1, 2, 3],
            "threads": 1,
        }),
    )
    .unwrap();
    let report = run_sweep(&cfg).unwrap();
    assert!(report.failures.is_empty());
    let medians = &median_by_ratio(&report.rows)["s6"];
    let values: Vec<f64> = medians.iter().map(|m| m.1).collect();
    let inversions: Vec<f64> = values.windows(2).filter(|w| w[1] > w[0]).map(|w| w[1] - w[0]).collect();
    let ok = inversions.is_empty() || (inversions.len() == 1 && inversions[0] <= 0.01);
    outcome(
        ok,
        format!("median xi at ratios 0.10..0.50: {}; inversions {:?}", fmt(&values), inversions),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let (n, k) = (16, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let u = RealMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
        let p = fourier_problem(&u, 0.6, 0.0, rng.random());
        let rand_m = |rng: &mut ChaCha8Rng| RealMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
        let st = CoefficientState::from_coefficients(rand_m(&mut rng), rand_m(&mut rng)).unwrap();
        let batch = rng.random_range(1..=n);
        let rows: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).take(batch).collect();
        let rows = if rows.is_empty() { vec![0] } else { rows };
        let seg = ScheduleSegment {
            epochs: 1,
            learning_rate: 1e-3,
            w_real: rng.random_range(0.5..8.0),
            w_imag: rng.random_range(0.5..8.0),
            batch_size: rows.len(),
        };
        let block = basis_rows(&p.basis, &rows).unwrap();
        let y_rows = p.y.select_rows(&rows).unwrap();
        let (gr, gi) = batch_gradients(&st, &block, &p.mask, &y_rows, &seg, 0.0, rows.len(), n).unwrap();
        let loss = |s: &CoefficientState| {
            let (a, b) = forward_batch(s, &block, &p.mask).unwrap();
            batch_loss(&a, &b, &y_rows, s, &seg, 0.0, rows.len(), n).unwrap().total
        };
        let h = 1e-6;
        for part in 0..2 {
            for idx in 0..n * k {
                let mut plus = st.clone();
                let mut minus = st.clone();
                let (a, b) = if part == 0 {
                    (&mut plus.x_real, &mut minus.x_real)
                } else {
                    (&mut plus.x_imag, &mut minus.x_imag)
                };
                a.as_mut_slice()[idx] += h;
                b.as_mut_slice()[idx] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let an = if part == 0 { gr.as_slice()[idx] } else { gi.as_slice()[idx] };
                worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-3));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-5 && secs < 10.0,
        format!("max relative error {worst:.2e} (< 1e-5), {secs:.2} s (< 10 s)"),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let n = 64;
    let sig = generate_sinusoids(
        &[SinusoidSpec::new(1.0, 5.0, 0.3), SinusoidSpec::new(0.5, 12.5, 1.0)],
        64.0,
        1.0,
        true,
    )
    .unwrap();
    let schedule = TrainingSchedule::new(
        [1e-2, 1e-3, 1e-4, 1e-5]
            .iter()
            .map(|&learning_rate| ScheduleSegment {
                epochs: 5000,
                learning_rate,
                w_real: 1.0,
                w_imag: 1.0,
                batch_size: n,
            })
            .collect(),
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (seed, cols) in [(1u64, [0usize, 2]), (2, [1, 2]), (3, [0, 1])] {
        let u = sig.data.select_columns(&cols).unwrap();
        let p = fourier_problem(&u, 0.5, REPLICATION_MU, seed);
        let oracle = ista_solve(&p, 1.0 / lipschitz_constant(&p).unwrap(), 200_000, 1e-16).unwrap();
        let out = train(&p, &schedule, seed).unwrap();
        let ours = objective(&p, &out.state, 1.0, 1.0).unwrap().total;
        let rel = (ours - oracle.objective).abs() / oracle.objective;
        worst = worst.max(rel);
        parts.push(format!("seed {seed}: {ours:.6e} vs {:.6e} (rel {rel:.1e})", oracle.objective));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 0.01 && secs < 60.0,
        format!("{}; {secs:.1} s (< 60 s)", parts.join("; ")),
    )
}

fn criterion_6() -> Outcome {
    let n = 32;
    let spec = BasisSpec::fourier(n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let k = rng.random_range(1..=4);
        let mut rand_m = || RealMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
        let st = CoefficientState::from_coefficients(rand_m(), rand_m()).unwrap();
        let mask = generate_mask(n, k, 0.5, 60).unwrap();
        // direct complex sum as the reference
        let mut ref_r = RealMatrix::zeros(n, k);
        let mut ref_i = RealMatrix::zeros(n, k);
        for t in 0..n {
            for c in 0..k {
                let (mut re, mut im) = (0.0, 0.0);
                for j in 0..n {
                    let th = TAU * ((t * j) % n) as f64 / n as f64;
                    let (a, b) = (st.x_real.get(j, c), st.x_imag.get(j, c));
                    re += th.cos() * a - th.sin() * b;
                    im += th.sin() * a + th.cos() * b;
                }
                ref_r.set(t, c, re);
                ref_i.set(t, c, im);
            }
        }
        let (mr, mi) = (apply_mask(&mask, &ref_r).unwrap(), apply_mask(&mask, &ref_i).unwrap());
        for block in 1..=n {
            let (r, i) = synthesize(&spec, &st.x_real, &st.x_imag, block).unwrap();
            worst = worst.max(r.sub(&ref_r).unwrap().max_abs()).max(i.sub(&ref_i).unwrap().max_abs());
            for start in (0..n).step_by(block) {
                let len = block.min(n - start);
                let (fr, fi) = forward_batch(&st, &basis_block(&spec, start, len).unwrap(), &mask).unwrap();
                let rows: Vec<usize> = (start..start + len).collect();
                worst = worst
                    .max(fr.sub(&mr.select_rows(&rows).unwrap()).unwrap().max_abs())
                    .max(fi.sub(&mi.select_rows(&rows).unwrap()).unwrap().max_abs());
            }
        }
    }
    outcome(worst <= 1e-12, format!("max deviation {worst:.2e} over block sizes 1..=32 (<= 1e-12)"))
}

fn strip_timing(csv_text: &str) -> Vec<String> {
    let mut lines = csv_text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let drop = header.iter().position(|h| *h == "wall_time_s");
    std::iter::once(header.join(","))
        .chain(lines.map(|l| {
            l.split(',')
                .enumerate()
                .filter(|(i, _)| Some(*i) != drop)
                .map(|(_, f)| f)
                .collect::<Vec<_>>()
                .join(",")
        }))
        .collect()
}

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        serde_json::to_string_pretty(&json!({
            "defaults": { "input": { "synthetic": { "duration": 2.56 } }, "slice_len": 512 },
            "sweep": { "ratios": [0.1, 0.3, 0.5], "seeds": [1, 2] }
        }))
        .unwrap(),
    )
    .unwrap();
    let run = |out: &Path| {
        let status = Command::new(env!("CARGO_BIN_EXE_csrecon"))
            .args(["sweep", "--config"])
            .arg(&config)
            .arg("--output-dir")
            .arg(out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read_to_string(out.join("sweep.csv")).unwrap()
    };
    let (a, b) = (run(&dir.path().join("a")), run(&dir.path().join("b")));
    let (sa, sb) = (strip_timing(&a), strip_timing(&b));
    let rows = sa.len().saturating_sub(1);
    outcome(
        sa == sb && rows == 2 * 3 * 2 * 6,
        format!("{rows} rows, identical apart from timing: {}", sa == sb),
    )
}

fn complete_sampling_xi(sig: &SignalMatrix) -> Vec<f64> {
    let p = fourier_problem(&sig.data, 1.0, 0.0, 8);
    let out = train(&p, &TrainingSchedule::default(), 8).unwrap();
    xi_of(&p, &sig.data, &out)
}

fn criterion_8() -> Outcome {
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    let slices = reference_slices();
    let off_bin = generate_sinusoids(
        &[SinusoidSpec::new(0.9, 3.3, 0.2), SinusoidSpec::new(0.25, 61.7, 2.0)],
        SAMPLE_RATE,
        5.12,
        true,
    )
    .unwrap();
    for (name, sig) in [("reference slice 0", &slices[0]), ("reference slice 3", &slices[3]), ("off-bin tones", &off_bin)] {
        let xi = complete_sampling_xi(sig);
        worst = xi.iter().fold(worst, |a, &b| a.max(b));
        parts.push(format!("{name}: xi {}", fmt(&xi)));
    }
    outcome(worst < 1e-3, format!("{} (< 1e-3)", parts.join("; ")))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut record = |name: &'static str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        println!(
            "[{}] {name}: {} ({:.1} s)",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        results.push((name, o));
    };

    let slices = reference_slices();
    println!("criterion 1/2 runs: six reference channels, ratio {RATIO}, mu {REPLICATION_MU}, default schedule");
    let start = Instant::now();
    let runs = replication_runs(REPLICATION_MU, &slices);
    println!("    trained 4 slices in {:.1} s", start.elapsed().as_secs_f64());
    record("1 six-signal replication", &|| criterion_1(&runs, &slices));
    record("2 coefficient symmetry", &|| criterion_2(&runs));
    record("3 ratio-sweep trend", &criterion_3);
    record("4 gradient correctness", &criterion_4);
    record("5 convex-optimum agreement", &criterion_5);
    record("6 blockwise equivalence", &criterion_6);
    record("7 sweep determinism", &criterion_7);
    record("8 complete-sampling sanity", &criterion_8);

    let diag = replication_runs(csrecon::reconstructor::DEFAULT_MU, &slices[..1]);
    let xi = xi_of(&diag[0].1, &slices[0].data, &diag[0].0);
    let sym = symmetry_mismatch(&diag[0].0.state.x_real, &diag[0].0.state.x_imag).unwrap();
    println!(
        "diagnostic (not gating): slice 0 at default mu {}: xi {}, symmetry ({:.4}, {:.4})",
        csrecon::reconstructor::DEFAULT_MU,
        fmt(&xi),
        sym.0,
        sym.1
    );

    let loud = generate_sinusoids(&[SinusoidSpec::new(2.0, 3.3, 0.2)], SAMPLE_RATE, 5.12, false).unwrap();
    println!(
        "diagnostic (not gating): complete sampling of a single amplitude-2 tone: xi {}",
        fmt(&complete_sampling_xi(&loud))
    );

    let slice3 = &slices[3];
    let p = fourier_problem(&slice3.data, 1.0, 0.0, 8);
    let out = train(&p, &TrainingSchedule::constant(600, 1e-3, 128).unwrap(), 8).unwrap();
    println!(
        "diagnostic (not gating): complete sampling of reference slice 3 over 600 epochs at a constant rate 1e-3: xi {}",
        fmt(&xi_of(&p, &slice3.data, &out))
    );

    let failed: Vec<&str> = results.iter().filter(|r| !r.1.passed).map(|r| r.0).collect();
    println!("acceptance: {} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
