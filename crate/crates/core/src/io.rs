//! CSV and JSON file formats.
//!
//! Every CSV has a UTF-8 header row, `.` as decimal separator and one
//! newline-terminated record per row. Floats are written in shortest
//! round-trip form so reading a file back reproduces the values exactly.
//!
//! | file | columns |
//! |------|---------|
//! | signal | one column per channel name; side-car `<stem>.json` holds `{sample_rate, t0}` |
//! | mask | one 0/1 column per channel; side-car `<stem>.json` holds the mask parameters |
//! | matrix | generic real matrix, header `c0..cK-1` unless named |
//! | loss history | `epoch, data_loss_real, data_loss_imag, l1_penalty, total` |
//! | checkpoint | directory with `header.json`, `x_real.csv`, `x_imag.csv` and optional Adam moments |

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::basis::BasisKind;
use crate::error::{Error, Result};
use crate::numerics::{AdamState, RealMatrix};
use crate::reconstructor::{CoefficientState, LossRecord, TrainingSchedule};
use crate::sampling::{MaskMatrix, MaskMeta};
use crate::signals::SignalMatrix;

/// `<stem>.json` next to `path`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub(crate) fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::ingestion(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::ingestion(path, e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| Error::ingestion(path, e.to_string()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    create_parent(path)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file)))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::ingestion(path, e.to_string()))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::ingestion(path, format!("{other:?}")),
    }
}

/// Writes a matrix with the given column names.
pub fn write_matrix(path: &Path, m: &RealMatrix, header: &[String]) -> Result<()> {
    if header.len() != m.cols() {
        return Err(Error::shape("write_matrix", format!("{} column names", m.cols()), format!("{}", header.len())));
    }
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    let mut buf: Vec<String> = Vec::with_capacity(m.cols());
    for r in 0..m.rows() {
        buf.clear();
        buf.extend(m.row(r).iter().map(|v| v.to_string()));
        w.write_record(&buf).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Generic `c0..cK-1` column names.
pub fn index_header(cols: usize) -> Vec<String> {
    (0..cols).map(|c| format!("c{c}")).collect()
}

/// Reads a real matrix and its header. Errors name the offending row and
/// column (1-based data rows, header excluded).
pub fn read_matrix(path: &Path) -> Result<(RealMatrix, Vec<String>)> {
    let mut rdr = csv_reader(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::ingestion(path, "missing header row"));
    }
    let cols = header.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::ingestion(path, format!("row {}: {e}", i + 1)))?;
        if rec.len() != cols {
            return Err(Error::ingestion(
                path,
                format!("row {}: expected {cols} fields, found {}", i + 1, rec.len()),
            ));
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::ingestion(path, format!("row {}, column {} (`{}`): cannot parse `{field}`", i + 1, c + 1, header[c]))
            })?;
            if !v.is_finite() {
                return Err(Error::ingestion(
                    path,
                    format!("row {}, column {} (`{}`): non-finite value", i + 1, c + 1, header[c]),
                ));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::ingestion(path, "no data rows"));
    }
    let m = RealMatrix::new(rows, cols, data).map_err(|e| Error::ingestion(path, e.to_string()))?;
    Ok((m, header))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalMeta {
    pub sample_rate: f64,
    #[serde(default)]
    pub t0: f64,
}

/// Signal CSV plus its `{sample_rate, t0}` side-car.
pub fn write_signal(path: &Path, signal: &SignalMatrix) -> Result<()> {
    write_matrix(path, &signal.data, &signal.channel_names)?;
    write_json(
        &sidecar_path(path),
        &SignalMeta {
            sample_rate: signal.sample_rate,
            t0: signal.t0,
        },
    )
}

/// Reads a signal CSV. The side-car wins over `sample_rate` when present;
/// without either the file cannot be placed on a time axis.
pub fn read_signal(path: &Path, sample_rate: Option<f64>) -> Result<SignalMatrix> {
    let (data, names) = read_matrix(path)?;
    let side = sidecar_path(path);
    let meta = if side.exists() {
        read_json::<SignalMeta>(&side)?
    } else {
        match sample_rate {
            Some(sample_rate) => SignalMeta { sample_rate, t0: 0.0 },
            None => {
                return Err(Error::ingestion(
                    path,
                    format!("no side-car {} and no sample rate given", side.display()),
                ))
            }
        }
    };
    SignalMatrix::new(data, meta.sample_rate, names, meta.t0).map_err(|e| Error::ingestion(path, e.to_string()))
}

pub fn write_mask(path: &Path, mask: &MaskMatrix) -> Result<()> {
    let m = mask.to_matrix();
    let mut w = csv_writer(path)?;
    w.write_record(index_header(mask.k())).map_err(|e| csv_err(path, e))?;
    for r in 0..m.rows() {
        w.write_record(mask.row(r).iter().map(|b| b.to_string()))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    write_json(&sidecar_path(path), &mask.meta())
}

/// Reads a mask CSV and checks it against its side-car when one exists.
pub fn read_mask(path: &Path) -> Result<MaskMatrix> {
    let (m, _) = read_matrix(path)?;
    let mut bits = Vec::with_capacity(m.rows() * m.cols());
    for (i, &v) in m.as_slice().iter().enumerate() {
        if v != 0.0 && v != 1.0 {
            return Err(Error::ingestion(
                path,
                format!("row {}, column {}: mask value {v} is not 0 or 1", i / m.cols() + 1, i % m.cols() + 1),
            ));
        }
        bits.push(v as u8);
    }
    let side = sidecar_path(path);
    let (ratio, seed, meta) = if side.exists() {
        let meta: MaskMeta = read_json(&side)?;
        if (meta.n, meta.k) != m.shape() {
            return Err(Error::ingestion(
                path,
                format!("side-car says {}x{}, file holds {}x{}", meta.n, meta.k, m.rows(), m.cols()),
            ));
        }
        (meta.ratio, meta.seed, Some(meta))
    } else {
        let ones = bits.iter().filter(|&&b| b == 1).count();
        (ones as f64 / bits.len() as f64, 0, None)
    };
    let mask = MaskMatrix::from_bits(m.rows(), m.cols(), bits, ratio, seed).map_err(|e| Error::ingestion(path, e.to_string()))?;
    match meta {
        Some(meta) => {
            let regenerated = crate::sampling::regenerate(&meta).map_err(|e| Error::ingestion(&side, e.to_string()))?;
            if regenerated.bits() != mask.bits() {
                return Err(Error::ingestion(path, "mask bits disagree with the seed recorded in the side-car"));
            }
            Ok(regenerated)
        }
        None => Ok(mask),
    }
}

pub fn write_loss_history(path: &Path, history: &[LossRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    if history.is_empty() {
        w.write_record(["epoch", "data_loss_real", "data_loss_imag", "l1_penalty", "total"])
            .map_err(|e| csv_err(path, e))?;
    }
    for rec in history {
        w.serialize(rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_loss_history(path: &Path) -> Result<Vec<LossRecord>> {
    csv_reader(path)?
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::ingestion(path, format!("row {}: {e}", i + 1))))
        .collect()
}

/// Writes serializable rows with a header derived from the field names.
pub fn write_records<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    csv_reader(path)?
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::ingestion(path, format!("row {}: {e}", i + 1))))
        .collect()
}

/// Header of a training checkpoint directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub n: usize,
    pub k: usize,
    /// Completed epochs.
    pub epoch: usize,
    /// Schedule segment the next epoch belongs to (equals the segment count
    /// once the schedule is finished).
    pub segment: usize,
    /// Completed epochs within that segment.
    pub epoch_in_segment: usize,
    pub seed: u64,
    pub basis: BasisKind,
    pub sample_rate: Option<f64>,
    pub channel_names: Vec<String>,
    /// Adam step counter; `None` when moments were not saved.
    pub adam_step: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub state: CoefficientState,
}

impl Checkpoint {
    pub fn new(
        state: CoefficientState,
        schedule: &TrainingSchedule,
        epoch: usize,
        seed: u64,
        basis: BasisKind,
        sample_rate: Option<f64>,
        channel_names: Vec<String>,
    ) -> Self {
        let (n, k) = state.shape();
        let (segment, epoch_in_segment) = match schedule.segment_at(epoch) {
            Some((i, _)) => {
                let before: usize = schedule.segments()[..i].iter().map(|s| s.epochs).sum();
                (i, epoch - before)
            }
            None => (schedule.segments().len(), 0),
        };
        Self {
            header: CheckpointHeader {
                n,
                k,
                epoch,
                segment,
                epoch_in_segment,
                seed,
                basis,
                sample_rate,
                channel_names,
                adam_step: Some(state.adam_real.step),
            },
            state,
        }
    }
}

const MOMENT_FILES: [&str; 4] = ["adam_real_m.csv", "adam_real_v.csv", "adam_imag_m.csv", "adam_imag_v.csv"];

/// Writes a checkpoint directory; moments are skipped when
/// `include_moments` is false.
pub fn write_checkpoint(dir: &Path, ckpt: &Checkpoint, include_moments: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut header = ckpt.header.clone();
    header.adam_step = include_moments.then_some(ckpt.state.adam_real.step);
    write_json(&dir.join("header.json"), &header)?;
    let names = if header.channel_names.len() == header.k {
        header.channel_names.clone()
    } else {
        index_header(header.k)
    };
    let st = &ckpt.state;
    write_matrix(&dir.join("x_real.csv"), &st.x_real, &names)?;
    write_matrix(&dir.join("x_imag.csv"), &st.x_imag, &names)?;
    if include_moments {
        let mats = [&st.adam_real.m, &st.adam_real.v, &st.adam_imag.m, &st.adam_imag.v];
        for (file, m) in MOMENT_FILES.iter().zip(mats) {
            write_matrix(&dir.join(file), m, &names)?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let header: CheckpointHeader = read_json(&dir.join("header.json"))?;
    let load = |file: &str| -> Result<RealMatrix> {
        let path = dir.join(file);
        let (m, _) = read_matrix(&path)?;
        if m.shape() != (header.n, header.k) {
            return Err(Error::ingestion(
                &path,
                format!("expected {}x{}, found {}x{}", header.n, header.k, m.rows(), m.cols()),
            ));
        }
        Ok(m)
    };
    let x_real = load("x_real.csv")?;
    let x_imag = load("x_imag.csv")?;
    let mut state = CoefficientState::from_coefficients(x_real, x_imag)?;
    if let Some(step) = header.adam_step {
        let [rm, rv, im, iv] = MOMENT_FILES.map(load);
        state.adam_real = AdamState { m: rm?, v: rv?, step };
        state.adam_imag = AdamState { m: im?, v: iv?, step };
    }
    Ok(Checkpoint { header, state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconstructor::{train, ReconstructionProblem};
    use crate::sampling::generate_mask;
    use crate::basis::BasisSpec;
    use crate::signals::{generate_sinusoids, reference_tones};

    #[test]
    fn signal_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sig.csv");
        let mut sig = generate_sinusoids(&reference_tones(), 400.0, 0.16, true).unwrap();
        sig.t0 = 1.25;
        write_signal(&path, &sig).unwrap();
        assert_eq!(read_signal(&path, None).unwrap(), sig);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("s1,s2,s3,s4,s5,s6\n"));
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn signal_without_sidecar_needs_rate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.csv");
        fs::write(&path, "a,b\n1,2\n3,4.5\n").unwrap();
        assert!(matches!(read_signal(&path, None), Err(Error::Ingestion { .. })));
        let s = read_signal(&path, Some(100.0)).unwrap();
        assert_eq!(s.data.get(1, 1), 4.5);
        assert_eq!(s.channel_names, vec!["a", "b"]);
    }

    #[test]
    fn parse_errors_name_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "a,b\n1,2\n3,x\n").unwrap();
        let msg = read_matrix(&path).unwrap_err().to_string();
        assert!(msg.contains("row 2") && msg.contains("column 2"), "{msg}");
        fs::write(&path, "a,b\n1,2\n3\n").unwrap();
        let msg = read_matrix(&path).unwrap_err().to_string();
        assert!(msg.contains("row 2"), "{msg}");
        fs::write(&path, "a,b\n").unwrap();
        assert!(read_matrix(&path).is_err());
        assert!(matches!(
            read_matrix(&dir.path().join("missing.csv")),
            Err(Error::Ingestion { .. })
        ));
    }

    #[test]
    fn mask_round_trip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.csv");
        let mask = generate_mask(40, 3, 0.3, 5).unwrap();
        write_mask(&path, &mask).unwrap();
        assert_eq!(read_mask(&path).unwrap(), mask);

        let text = fs::read_to_string(&path).unwrap();
        let flipped = if text.contains("\n0,") {
            text.replacen("\n0,", "\n1,", 1)
        } else {
            text.replacen("\n1,", "\n0,", 1)
        };
        fs::write(&path, flipped).unwrap();
        assert!(read_mask(&path).is_err());
    }

    #[test]
    fn loss_history_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        let hist = vec![
            LossRecord {
                epoch: 1,
                data_loss_real: 0.1,
                data_loss_imag: 1e-17,
                l1_penalty: 3.0,
                total: 1.0 / 3.0,
            },
            LossRecord {
                epoch: 2,
                data_loss_real: 0.0,
                data_loss_imag: 2.5e-300,
                l1_penalty: 0.0,
                total: 12345.678,
            },
        ];
        write_loss_history(&path, &hist).unwrap();
        assert_eq!(read_loss_history(&path).unwrap(), hist);
        write_loss_history(&path, &[]).unwrap();
        assert!(read_loss_history(&path).unwrap().is_empty());
    }

    #[test]
    fn checkpoint_round_trip() {
        let n = 16;
        let sig = generate_sinusoids(&reference_tones()[..2], 64.0, 0.25, false).unwrap();
        let mask = generate_mask(n, 2, 0.5, 1).unwrap();
        let problem = ReconstructionProblem::from_signal(&sig.data, mask, BasisSpec::fourier(n).unwrap(), 0.01).unwrap();
        let schedule = TrainingSchedule::constant(5, 1e-3, 4).unwrap();
        let out = train(&problem, &schedule, 3).unwrap();
        let ckpt = Checkpoint::new(out.state, &schedule, 5, 3, BasisKind::Fourier, Some(64.0), sig.channel_names.clone());
        assert_eq!(ckpt.header.segment, 1);

        let dir = tempfile::tempdir().unwrap();
        write_checkpoint(dir.path(), &ckpt, true).unwrap();
        assert_eq!(read_checkpoint(dir.path()).unwrap(), ckpt);

        let lean = dir.path().join("lean");
        write_checkpoint(&lean, &ckpt, false).unwrap();
        let back = read_checkpoint(&lean).unwrap();
        assert_eq!(back.state.x_real, ckpt.state.x_real);
        assert_eq!(back.state.adam_real.step, 0);
        assert_eq!(back.header.adam_step, None);
    }

    #[test]
    fn checkpoint_position_mid_schedule() {
        let schedule = TrainingSchedule::default();
        let ckpt = Checkpoint::new(CoefficientState::zeros(4, 1), &schedule, 250, 0, BasisKind::Fourier, None, vec![]);
        assert_eq!((ckpt.header.segment, ckpt.header.epoch_in_segment), (2, 50));
    }
}
