//! Input parsing: numeric lists, grids, CSV datasets and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use pcml::accountant::Policy;
use pcml::pate::{LabeledDataset, Record};

use crate::output::{io_err, CliError, CliResult};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Comma-separated reals, e.g. `4,3,2,1`.
pub fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Input(format!("not a number: {x:?}")))
        })
        .collect()
}

/// A count given as an integer or in scientific notation (`1e6`).
pub fn parse_count(s: &str) -> Result<u64, String> {
    let x: f64 = s.trim().parse().map_err(|_| format!("not a number: {s:?}"))?;
    if x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64 {
        Ok(x as u64)
    } else {
        Err(format!("not a nonnegative integer: {s:?}"))
    }
}

/// A grid of values: `a,b,c`, the range `start:stop` or `start:stop:step`,
/// or the geometric range `start:stop:*factor`. Ranges include `stop` when
/// it is hit exactly.
pub fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Input(format!("bad grid {s:?}"));
    let s = s.trim();
    if !s.contains(':') {
        let v = parse_list(s)?;
        return if v.is_empty() { Err(bad()) } else { Ok(v) };
    }
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    if parts.len() > 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].parse().map_err(|_| bad())?;
    let stop: f64 = parts[1].parse().map_err(|_| bad())?;
    let (geometric, step) = match parts.get(2) {
        None => (false, 1.0),
        Some(p) => match p.strip_prefix('*') {
            Some(f) => (true, f.parse::<f64>().map_err(|_| bad())?),
            None => (false, p.parse::<f64>().map_err(|_| bad())?),
        },
    };
    let valid = start.is_finite() && stop >= start && if geometric { step > 1.0 && start > 0.0 } else { step > 0.0 };
    if !valid {
        return Err(bad());
    }
    let mut out = Vec::new();
    let mut i = 0u32;
    loop {
        let x = if geometric {
            start * step.powi(i as i32)
        } else {
            start + f64::from(i) * step
        };
        // Relative slack so that e.g. 0.1:0.5:0.1 includes 0.5.
        if x > stop * (1.0 + 1e-12) + 1e-12 {
            break;
        }
        out.push(x);
        i += 1;
        if out.len() > 1_000_000 {
            return Err(CliError::Input(format!("grid {s:?} has more than a million points")));
        }
    }
    Ok(out)
}

pub fn grid_to_counts(grid: &[f64]) -> CliResult<Vec<u64>> {
    grid.iter()
        .map(|&x| {
            if x >= 1.0 && x.fract() == 0.0 {
                Ok(x as u64)
            } else {
                Err(CliError::Input(format!("class counts must be positive integers, got {x}")))
            }
        })
        .collect()
}

fn parse_row(record: &csv::StringRecord) -> Option<Vec<f64>> {
    record.iter().map(|f| f.trim().parse::<f64>().ok()).collect()
}

/// Reads numeric CSV rows. A first row that does not parse is taken as a
/// header and skipped.
pub fn read_numeric_csv(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        match parse_row(&rec) {
            Some(row) => rows.push(row),
            None if i == 0 => continue,
            None => {
                return Err(CliError::Input(format!(
                    "{}: row {} is not numeric",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::Input(format!("{}: {other:?}", path.display())),
    }
}

/// Dataset CSV: feature columns followed by a label column holding `1..=classes`.
pub fn read_dataset(path: &Path, classes: usize) -> CliResult<LabeledDataset> {
    let rows = read_numeric_csv(path)?;
    let records = rows
        .into_iter()
        .enumerate()
        .map(|(i, mut row)| {
            let label = row
                .pop()
                .ok_or_else(|| CliError::Input(format!("{}: row {} is empty", path.display(), i + 1)))?;
            if !(label.fract() == 0.0 && label >= 1.0 && label <= classes as f64) {
                return Err(CliError::Input(format!(
                    "{}: row {} has label {label}, expected 1..={classes}",
                    path.display(),
                    i + 1
                )));
            }
            Ok(Record {
                features: row,
                label: label as usize - 1,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(LabeledDataset::new(records, classes)?)
}

/// Query points: a CSV path or inline feature vectors.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Queries {
    File(PathBuf),
    Inline(Vec<Vec<f64>>),
}

/// Run manifest for `simulate`. Paths are relative to the manifest.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub dataset: PathBuf,
    pub classes: usize,
    pub teachers: usize,
    pub gamma: f64,
    #[serde(default)]
    pub budget_nats: Option<f64>,
    #[serde(default)]
    pub policy: Option<Policy>,
    #[serde(default)]
    pub seed: u64,
    /// 1-based row of the dataset whose leakage is tracked.
    #[serde(default)]
    pub target: Option<usize>,
    pub queries: Queries,
}

impl Manifest {
    pub fn load(path: &Path) -> CliResult<(Self, PathBuf)> {
        let m: Manifest = read_json(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((m, base))
    }
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}
