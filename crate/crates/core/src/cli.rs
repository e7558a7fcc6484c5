//! Command-line front end: argument parsing and the subcommands.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::{load_document, resolve, ExperimentConfig, InputSource};
use crate::error::{Error, Result};
use crate::experiment::{load_signal, load_slices, median_by_ratio, run_slice, run_sweep, SliceOutcome, SweepRow};
use crate::io::{
    read_checkpoint, write_checkpoint, write_json, write_loss_history, write_mask, write_matrix, write_records,
    write_signal, write_text, Checkpoint,
};
use crate::numerics::RealMatrix;
use crate::reconstructor::LossRecord;
use crate::sampling::{generate_mask_with_layout, MaskLayout};
use crate::signals::{amplitude_spectrum, bin_frequency, concatenate, symmetry_mismatch};
use crate::svg::{Chart, Series};

#[derive(Debug, Parser)]
#[command(name = "csrecon", version, about = "Compressive-sensing reconstruction of multi-channel time series")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the configured synthetic signal as CSV.
    Generate(GenerateArgs),
    /// Write a random sampling mask as CSV.
    Mask(MaskArgs),
    /// Mask, train and reconstruct every slice at one ratio and seed.
    Reconstruct(RunArgs),
    /// Reconstruct over every (slice, ratio, seed) and tabulate the errors.
    Sweep(RunArgs),
    /// Amplitude spectrum and symmetry metrics of a saved coefficient checkpoint.
    Spectrum(SpectrumArgs),
    /// Run the built-in invariant checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON configuration document.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Output directory (default from CSRECON_OUTPUT_DIR, else ./csrecon-out).
    #[arg(short, long)]
    pub output_dir: Option<PathBuf>,
    /// Signal CSV to ingest instead of the synthetic source.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Sample rate for CSV input without a side-car.
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// White noise level relative to channel RMS for synthetic input.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Zero-based channel subset.
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    #[arg(long)]
    pub slice_len: Option<usize>,
    /// l1 penalty weight.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Write SVG plots.
    #[arg(long)]
    pub svg: bool,
}

impl ConfigArgs {
    fn overrides(&self) -> Value {
        let mut m = Map::new();
        if let Some(d) = &self.output_dir {
            m.insert("output_dir".into(), json!(d));
        }
        match (&self.input, self.sample_rate) {
            (Some(path), rate) => {
                m.insert("input".into(), json!({ "csv": { "path": path, "sample_rate": rate } }));
            }
            (None, Some(rate)) => {
                m.insert("input".into(), json!({ "csv": { "sample_rate": rate } }));
            }
            (None, None) => {}
        }
        if let Some(noise) = self.noise {
            match m.get_mut("input").and_then(|i| i.get_mut("csv")).and_then(Value::as_object_mut) {
                Some(csv) => {
                    csv.insert("noise".into(), json!(noise));
                }
                None => {
                    m.insert("input".into(), json!({ "synthetic": { "noise": noise } }));
                }
            }
        }
        if let Some(c) = &self.channels {
            m.insert("channels".into(), json!(c));
        }
        if let Some(v) = self.slice_len {
            m.insert("slice_len".into(), json!(v));
        }
        if let Some(v) = self.mu {
            m.insert("mu".into(), json!(v));
        }
        if self.svg {
            m.insert("svg".into(), json!(true));
        }
        Value::Object(m)
    }

    fn resolve(&self, command: &str, extra: Value) -> Result<ExperimentConfig> {
        let doc = self.config.as_deref().map(load_document).transpose()?;
        let mut overrides = self.overrides();
        crate::config::merge(&mut overrides, &extra);
        resolve(command, doc.as_ref(), &overrides)
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "signal.csv")]
    pub name: String,
}

#[derive(Debug, Clone, Args)]
pub struct MaskArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Rows of the mask (default: slice length).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Columns of the mask (default: channels of the configured input).
    #[arg(long)]
    pub columns: Option<usize>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// One draw per row shared by all columns.
    #[arg(long)]
    pub shared: bool,
    #[arg(long, default_value = "mask.csv")]
    pub name: String,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Sampling ratios in (0, 1].
    #[arg(long, alias = "ratio", value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    #[arg(long, alias = "seed", value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Epochs after which to save intermediate reconstructions.
    #[arg(long, value_delimiter = ',')]
    pub snapshot_epochs: Option<Vec<usize>>,
    /// Worker threads for independent runs.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl RunArgs {
    fn resolve(&self, command: &str) -> Result<ExperimentConfig> {
        let mut extra = Map::new();
        if let Some(r) = &self.ratios {
            extra.insert("ratios".into(), json!(r));
        }
        if let Some(s) = &self.seeds {
            extra.insert("seeds".into(), json!(s));
        }
        if let Some(e) = &self.snapshot_epochs {
            extra.insert("snapshot_epochs".into(), json!(e));
        }
        if let Some(t) = self.threads {
            extra.insert("threads".into(), json!(t));
        }
        self.config.resolve(command, Value::Object(extra))
    }
}

#[derive(Debug, Clone, Args)]
pub struct SpectrumArgs {
    /// Checkpoint directory written by `reconstruct`.
    pub checkpoint: PathBuf,
    /// Output directory (default: the checkpoint directory).
    #[arg(short, long)]
    pub output_dir: Option<PathBuf>,
    /// Sample rate when the checkpoint does not record one.
    #[arg(long)]
    pub sample_rate: Option<f64>,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a).map(|_| ()),
        Command::Mask(a) => cmd_mask(a).map(|_| ()),
        Command::Reconstruct(a) => cmd_reconstruct(&a.resolve("reconstruct")?).map(|_| ()),
        Command::Sweep(a) => cmd_sweep(&a.resolve("sweep")?).map(|_| ()),
        Command::Spectrum(a) => cmd_spectrum(a).map(|_| ()),
        Command::Verify(a) => cmd_verify(a),
    }
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<PathBuf> {
    let cfg = args.config.resolve("generate", json!({}))?;
    if !matches!(cfg.input, InputSource::Synthetic(_)) {
        return Err(Error::config("input", "generate needs a synthetic input"));
    }
    let sig = load_signal(&cfg)?;
    let path = cfg.output_dir.join(&args.name);
    write_signal(&path, &sig)?;
    println!("wrote {} ({} samples x {} channels)", path.display(), sig.samples(), sig.channels());
    Ok(path)
}

pub fn cmd_mask(args: &MaskArgs) -> Result<PathBuf> {
    let mut extra = Map::new();
    if let Some(r) = args.ratio {
        extra.insert("ratios".into(), json!([r]));
    }
    if let Some(s) = args.seed {
        extra.insert("seeds".into(), json!([s]));
    }
    let cfg = args.config.resolve("mask", Value::Object(extra))?;
    let n = args.samples.unwrap_or(cfg.slice_len);
    let k = match args.columns {
        Some(k) => k,
        None => load_signal(&cfg)?.channels(),
    };
    let layout = if args.shared {
        MaskLayout::SharedAcrossChannels
    } else {
        cfg.mask_layout
    };
    let mask = generate_mask_with_layout(n, k, cfg.ratios[0], cfg.seeds[0], layout)
        .map_err(|e| Error::config("mask", e.to_string()))?;
    let path = cfg.output_dir.join(&args.name);
    write_mask(&path, &mask)?;
    println!("wrote {} ({n} x {k}, ratio {})", path.display(), mask.ratio());
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub slice: usize,
    pub t0: f64,
    pub ratio: f64,
    pub seed: u64,
    pub effective_ratio: f64,
    pub channels: Vec<String>,
    /// Per-channel relative error; `null` for a zero-norm channel.
    pub xi: Vec<Option<f64>>,
    pub final_loss: Option<LossRecord>,
    /// RMS of the imaginary part of the synthesis.
    pub imag_residual_rms: f64,
    /// `(real, imaginary)` symmetry mismatch of the coefficients.
    pub symmetry: Option<(f64, f64)>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructReport {
    pub config: ExperimentConfig,
    pub slices: Vec<SliceReport>,
}

fn slice_dir(out: &Path, i: usize) -> PathBuf {
    out.join(format!("slice{i}"))
}

fn loss_chart(history: &[LossRecord], title: String) -> Chart {
    let series = |name: &str, f: fn(&LossRecord) -> f64| Series {
        name: name.into(),
        points: history.iter().map(|r| (r.epoch as f64, f(r))).collect(),
    };
    Chart {
        title,
        x_label: "epoch".into(),
        y_label: "loss".into(),
        log_y: true,
        series: vec![
            series("total", |r| r.total),
            series("real MSE", |r| r.data_loss_real),
            series("imag MSE", |r| r.data_loss_imag),
            series("l1", |r| r.l1_penalty),
        ],
    }
}

fn write_slice_outputs(cfg: &ExperimentConfig, o: &SliceOutcome) -> Result<SliceReport> {
    let dir = slice_dir(&cfg.output_dir, o.slice_index);
    write_loss_history(&dir.join("loss.csv"), &o.history)?;
    write_mask(&dir.join("mask.csv"), &o.mask)?;
    let ckpt = Checkpoint::new(
        o.state.clone(),
        &cfg.schedule,
        cfg.schedule.total_epochs(),
        o.seed,
        cfg.basis,
        Some(o.reconstruction.sample_rate),
        o.reconstruction.channel_names.clone(),
    );
    write_checkpoint(&dir.join("checkpoint"), &ckpt, true)?;
    for (epoch, u) in &o.snapshots {
        write_matrix(
            &dir.join("snapshots").join(format!("epoch{epoch}.csv")),
            u,
            &o.reconstruction.channel_names,
        )?;
    }
    if cfg.svg {
        write_text(
            &dir.join("loss.svg"),
            &loss_chart(&o.history, format!("slice {} training loss", o.slice_index)).render(),
        )?;
    }
    let imag = &o.imag_residual;
    Ok(SliceReport {
        slice: o.slice_index,
        t0: o.reconstruction.t0,
        ratio: o.ratio,
        seed: o.seed,
        effective_ratio: o.effective_ratio,
        channels: o.reconstruction.channel_names.clone(),
        xi: o.xi.clone(),
        final_loss: o.history.last().copied(),
        imag_residual_rms: (imag.sum_squares() / (imag.rows() * imag.cols()) as f64).sqrt(),
        symmetry: symmetry_mismatch(&o.state.x_real, &o.state.x_imag).ok(),
        wall_time_s: o.wall_time_s,
    })
}

fn thread_pool(cfg: &ExperimentConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))
}

/// Writes `reconstruction.csv`, `report.json` and per-slice
/// `slice<i>/{loss.csv, mask.csv, checkpoint/, snapshots/}`.
pub fn cmd_reconstruct(cfg: &ExperimentConfig) -> Result<ReconstructReport> {
    if cfg.ratios.len() != 1 || cfg.seeds.len() != 1 {
        return Err(Error::config(
            "ratios",
            format!(
                "reconstruct takes one ratio and one seed, got {} and {}",
                cfg.ratios.len(),
                cfg.seeds.len()
            ),
        ));
    }
    let (ratio, seed) = (cfg.ratios[0], cfg.seeds[0]);
    let slices = load_slices(cfg)?;
    info!("reconstruct: {} slices, ratio {ratio}, seed {seed}", slices.len());
    let outcomes: Vec<SliceOutcome> = thread_pool(cfg)?.install(|| {
        slices
            .par_iter()
            .enumerate()
            .map(|(i, s)| run_slice(cfg, s, i, ratio, seed))
            .collect::<Result<_>>()
    })?;
    let recon = concatenate(&outcomes.iter().map(|o| o.reconstruction.clone()).collect::<Vec<_>>())?;
    write_signal(&cfg.output_dir.join("reconstruction.csv"), &recon)?;
    let slices = outcomes
        .iter()
        .map(|o| write_slice_outputs(cfg, o))
        .collect::<Result<Vec<_>>>()?;
    let report = ReconstructReport {
        config: cfg.clone(),
        slices,
    };
    write_json(&cfg.output_dir.join("report.json"), &report)?;
    for s in &report.slices {
        let xi: Vec<String> = s
            .xi
            .iter()
            .map(|x| x.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}")))
            .collect();
        println!("slice {}: xi = [{}]", s.slice, xi.join(", "));
    }
    println!("wrote {}", cfg.output_dir.display());
    Ok(report)
}

/// Writes `sweep.csv` and `sweep_summary.csv` (median ξ per ratio and
/// channel). Failed cells are reported after the files are written.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let report = run_sweep(cfg)?;
    write_records(&cfg.output_dir.join("sweep.csv"), &report.rows)?;
    let medians = median_by_ratio(&report.rows);
    #[derive(Serialize)]
    struct SummaryRow<'a> {
        channel: &'a str,
        ratio: f64,
        median_xi: f64,
    }
    let summary: Vec<SummaryRow> = medians
        .iter()
        .flat_map(|(c, pts)| {
            pts.iter().map(move |&(ratio, median_xi)| SummaryRow {
                channel: c,
                ratio,
                median_xi,
            })
        })
        .collect();
    write_records(&cfg.output_dir.join("sweep_summary.csv"), &summary)?;
    if cfg.svg {
        let chart = Chart {
            title: "median reconstruction error".into(),
            x_label: "sampling ratio".into(),
            y_label: "xi".into(),
            log_y: false,
            series: medians
                .iter()
                .map(|(c, pts)| Series {
                    name: c.clone(),
                    points: pts.clone(),
                })
                .collect(),
        };
        write_text(&cfg.output_dir.join("sweep.svg"), &chart.render())?;
    }
    for s in &summary {
        println!("{:>8} ratio {:.2}: median xi {:.4}", s.channel, s.ratio, s.median_xi);
    }
    println!("wrote {}", cfg.output_dir.join("sweep.csv").display());
    match report.failures.into_iter().next() {
        Some(first) => Err(first),
        None => Ok(report.rows),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub channel: String,
    pub real_mismatch: Option<f64>,
    pub imag_mismatch: Option<f64>,
}

/// Writes `spectrum.csv` (`bin, frequency_hz, <channel>...`) and
/// `symmetry.json`.
pub fn cmd_spectrum(args: &SpectrumArgs) -> Result<Vec<SymmetryReport>> {
    let ckpt = read_checkpoint(&args.checkpoint)?;
    let st = &ckpt.state;
    let (n, k) = st.shape();
    let names = if ckpt.header.channel_names.len() == k {
        ckpt.header.channel_names.clone()
    } else {
        crate::io::index_header(k)
    };
    let rate = ckpt.header.sample_rate.or(args.sample_rate);
    let spec = amplitude_spectrum(&st.x_real, &st.x_imag)?;
    let mut table = RealMatrix::zeros(spec.rows(), k + 2);
    for b in 0..spec.rows() {
        table.set(b, 0, b as f64);
        table.set(b, 1, rate.map_or(b as f64 / n as f64, |r| bin_frequency(b, n, r)));
        for c in 0..k {
            table.set(b, c + 2, spec.get(b, c));
        }
    }
    let mut header = vec!["bin".to_string(), if rate.is_some() { "frequency_hz" } else { "cycles_per_sample" }.to_string()];
    header.extend(names.iter().cloned());
    let out = args.output_dir.clone().unwrap_or_else(|| args.checkpoint.clone());
    write_matrix(&out.join("spectrum.csv"), &table, &header)?;

    let mut reports = Vec::with_capacity(k + 1);
    let entry = |channel: String, cols: &[usize]| -> Result<SymmetryReport> {
        let m = symmetry_mismatch(&st.x_real.select_columns(cols)?, &st.x_imag.select_columns(cols)?).ok();
        Ok(SymmetryReport {
            channel,
            real_mismatch: m.map(|v| v.0),
            imag_mismatch: m.map(|v| v.1),
        })
    };
    reports.push(entry("all".into(), &(0..k).collect::<Vec<_>>())?);
    for (c, name) in names.iter().enumerate() {
        reports.push(entry(name.clone(), &[c])?);
    }
    write_json(&out.join("symmetry.json"), &reports)?;
    if args.svg {
        let chart = Chart {
            title: "amplitude spectrum".into(),
            x_label: header[1].clone(),
            y_label: "amplitude".into(),
            log_y: false,
            series: names
                .iter()
                .enumerate()
                .map(|(c, name)| Series {
                    name: name.clone(),
                    points: (0..spec.rows()).map(|b| (table.get(b, 1), spec.get(b, c))).collect(),
                })
                .collect(),
        };
        write_text(&out.join("spectrum.svg"), &chart.render())?;
    }
    let all = &reports[0];
    println!(
        "symmetry mismatch: real {}, imag {}",
        all.real_mismatch.map_or("undefined".into(), |v| format!("{v:.3e}")),
        all.imag_mismatch.map_or("undefined".into(), |v| format!("{v:.3e}"))
    );
    println!("wrote {}", out.join("spectrum.csv").display());
    Ok(reports)
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<()> {
    let results = crate::verify::run_all(args.seed);
    let mut failed = 0;
    for r in &results {
        println!("[{}] {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        return Err(Error::Numeric(format!("{failed} of {} checks failed", results.len())));
    }
    Ok(())
}
