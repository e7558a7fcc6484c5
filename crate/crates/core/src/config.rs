//! Experiment configuration.
//!
//! A configuration file is one JSON document. Its `defaults` object applies
//! to every subcommand and an object named after a subcommand (`generate`,
//! `reconstruct`, `sweep`, ...) overlays it; command-line flags win over
//! both. Objects merge key by key, everything else is replaced.
//!
//! ```json
//! {
//!   "defaults": { "mu": 1024, "output_dir": "runs/a" },
//!   "sweep": { "ratios": [0.1, 0.3, 0.5], "seeds": [1, 2, 3] }
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::basis::BasisKind;
use crate::error::{Error, Result};
use crate::reconstructor::{TrainingSchedule, DEFAULT_INIT_STD, DEFAULT_MU};
use crate::sampling::MaskLayout;
use crate::signals::{reference_tones, SinusoidSpec};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "CSRECON_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSource {
    Synthetic(SyntheticSpec),
    Csv {
        path: PathBuf,
        /// Used when the CSV has no side-car.
        #[serde(default)]
        sample_rate: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub tones: Vec<SinusoidSpec>,
    pub sample_rate: f64,
    pub duration: f64,
    #[serde(default)]
    pub include_superposition: bool,
    /// White-noise standard deviation relative to each channel's RMS.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub noise_seed: u64,
}

impl Default for SyntheticSpec {
    /// Five reference tones and their sum at 400 Hz for 20.48 s.
    fn default() -> Self {
        Self {
            tones: reference_tones(),
            sample_rate: 400.0,
            duration: 20.48,
            include_superposition: true,
            noise: 0.0,
            noise_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub input: InputSource,
    /// Zero-based channel subset; all channels when absent.
    #[serde(default)]
    pub channels: Option<Vec<usize>>,
    pub slice_len: usize,
    pub ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    pub schedule: TrainingSchedule,
    pub mu: f64,
    pub basis: BasisKind,
    pub mask_layout: MaskLayout,
    pub init_std: f64,
    pub output_dir: PathBuf,
    /// Epochs after which `reconstruct` saves the intermediate signal.
    #[serde(default)]
    pub snapshot_epochs: Vec<usize>,
    /// Worker threads for sweeps; rayon's default when absent.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Write SVG plots next to the CSV outputs.
    #[serde(default)]
    pub svg: bool,
}

/// Ratios 0.10, 0.15, ..., 0.50.
pub fn default_ratios() -> Vec<f64> {
    (0..9).map(|i| (10 + 5 * i) as f64 / 100.0).collect()
}

/// Built-in document every configuration file is layered on.
pub fn builtin_document() -> Value {
    let output_dir = std::env::var(OUTPUT_DIR_ENV).unwrap_or_else(|_| "csrecon-out".to_string());
    json!({
        "defaults": {
            "input": { "synthetic": SyntheticSpec::default() },
            "channels": null,
            "slice_len": 2048,
            "ratios": default_ratios(),
            "seeds": [1],
            "schedule": TrainingSchedule::default(),
            "mu": DEFAULT_MU,
            "basis": BasisKind::Fourier,
            "mask_layout": MaskLayout::Independent,
            "init_std": DEFAULT_INIT_STD,
            "output_dir": output_dir,
            "snapshot_epochs": [],
            "threads": null,
            "svg": false,
        },
        "reconstruct": { "ratios": [0.2] },
    })
}

/// Recursively merges `overlay` into `base`.
pub fn merge(base: &mut Value, overlay: &Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (key, value) in o {
                match b.get_mut(key) {
                    Some(slot) if key != "input" || same_variant(slot, value) => merge(slot, value),
                    _ => {
                        b.insert(key.clone(), value.clone());
                    }
                }
            }
        }
        (slot, value) => *slot = value.clone(),
    }
}

// a different input kind replaces the whole source
fn same_variant(a: &Value, b: &Value) -> bool {
    match (a.as_object(), b.as_object()) {
        (Some(a), Some(b)) => a.len() == 1 && b.len() == 1 && a.keys().eq(b.keys()),
        _ => false,
    }
}

/// Effective configuration for `command` from the built-in document, an
/// optional file and flag overrides (a JSON object of config fields).
pub fn resolve(command: &str, file: Option<&Value>, overrides: &Value) -> Result<ExperimentConfig> {
    let builtin = builtin_document();
    let mut cfg = builtin["defaults"].clone();
    overlay_section(&mut cfg, &builtin, command)?;
    if let Some(doc) = file {
        let obj = doc
            .as_object()
            .ok_or_else(|| Error::config("<document>", "configuration must be a JSON object"))?;
        if let Some(unknown) = obj.keys().find(|k| !is_section(k)) {
            return Err(Error::config(unknown.as_str(), "unknown top-level section"));
        }
        overlay_section(&mut cfg, doc, "defaults")?;
        overlay_section(&mut cfg, doc, command)?;
    }
    merge(&mut cfg, overrides);
    let cfg: ExperimentConfig = serde_json::from_value(cfg).map_err(|e| config_error(&e))?;
    cfg.validate()?;
    Ok(cfg)
}

fn overlay_section(cfg: &mut Value, doc: &Value, section: &str) -> Result<()> {
    match doc.get(section) {
        None | Some(Value::Null) => Ok(()),
        Some(v @ Value::Object(_)) => {
            merge(cfg, v);
            Ok(())
        }
        Some(_) => Err(Error::config(section, "section must be a JSON object")),
    }
}

fn is_section(key: &str) -> bool {
    matches!(key, "defaults" | "generate" | "mask" | "reconstruct" | "sweep" | "spectrum" | "verify")
}

fn config_error(e: &serde_json::Error) -> Error {
    let msg = e.to_string();
    let field = msg
        .split('`')
        .nth(1)
        .filter(|_| msg.contains("field"))
        .unwrap_or("<document>")
        .to_string();
    Error::config(field, msg)
}

pub fn load_document(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.slice_len < 2 {
            return Err(Error::config("slice_len", format!("must be >= 2, got {}", self.slice_len)));
        }
        if self.ratios.is_empty() {
            return Err(Error::config("ratios", "at least one sampling ratio is required"));
        }
        if let Some(r) = self.ratios.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return Err(Error::config("ratios", format!("{r} is outside (0, 1]")));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        self.schedule
            .validate(Some(self.slice_len))
            .map_err(|e| Error::config("schedule", e.to_string()))?;
        if !self.mu.is_finite() || self.mu < 0.0 {
            return Err(Error::config("mu", format!("must be finite and >= 0, got {}", self.mu)));
        }
        if !self.init_std.is_finite() || self.init_std < 0.0 {
            return Err(Error::config("init_std", format!("must be finite and >= 0, got {}", self.init_std)));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads", "must be positive"));
        }
        let total = self.schedule.total_epochs();
        if let Some(e) = self.snapshot_epochs.iter().find(|&&e| e == 0 || e > total) {
            return Err(Error::config("snapshot_epochs", format!("epoch {e} outside 1..={total}")));
        }
        match &self.input {
            InputSource::Synthetic(s) => {
                if s.tones.is_empty() {
                    return Err(Error::config("input.synthetic.tones", "at least one tone is required"));
                }
                if !s.noise.is_finite() || s.noise < 0.0 {
                    return Err(Error::config("input.synthetic.noise", format!("must be >= 0, got {}", s.noise)));
                }
            }
            InputSource::Csv { sample_rate, .. } => {
                if sample_rate.is_some_and(|r| !r.is_finite() || r <= 0.0) {
                    return Err(Error::config("input.csv.sample_rate", "must be positive"));
                }
            }
        }
        Ok(())
    }
}
