//! CSV ingestion and the draws / summary artifacts.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chains::{ChainOutput, FailureRecord, RetryStats, RunMetadata};
use crate::diagnostics::stats::Summary;
use crate::error::{Error, Result};
use crate::model::ChainState;

fn csv_error(path: &Path, row: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.display().to_string(),
        row,
        column,
        message: message.into(),
    }
}

/// Reads a headerless numeric CSV into an `rows × cols` matrix. Rows and
/// columns in errors are 1-based.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    matrix_from_reader(file, path)
}

/// [`read_matrix`] over in-memory text; `source` names the text in errors.
pub fn parse_matrix(text: &str, source: &str) -> Result<DMatrix<f64>> {
    matrix_from_reader(text.as_bytes(), Path::new(source))
}

fn matrix_from_reader<R: std::io::Read>(input: R, path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, i + 1, 0, e.to_string()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(csv_error(
                    path,
                    i + 1,
                    record.len().min(c) + 1,
                    format!("expected {c} fields, found {}", record.len()),
                ))
            }
            Some(_) => {}
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| csv_error(path, i + 1, j + 1, format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(csv_error(path, i + 1, j + 1, format!("`{field}` is not finite")));
            }
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| csv_error(path, 0, 0, "file holds no data"))?;
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// SHA-256 over the shapes and bit patterns of `y` and `X`.
pub fn data_digest(y: &DMatrix<f64>, x: &DMatrix<f64>) -> String {
    let mut h = Sha256::new();
    for m in [y, x] {
        h.update((m.nrows() as u64).to_le_bytes());
        h.update((m.ncols() as u64).to_le_bytes());
        for v in m.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Column names: β row-major, then the lower triangle of Σ column-major.
pub fn draw_columns(p: usize, d: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(p * d + d * (d + 1) / 2);
    for i in 0..p {
        for j in 0..d {
            names.push(format!("beta_{}_{}", i + 1, j + 1));
        }
    }
    for j in 0..d {
        for i in j..d {
            names.push(format!("sigma_{}_{}", i + 1, j + 1));
        }
    }
    names
}

fn flatten(s: &ChainState) -> Vec<f64> {
    let (b, sig) = (s.beta(), s.sigma());
    let d = sig.nrows();
    let mut v = Vec::with_capacity(b.len() + d * (d + 1) / 2);
    for i in 0..b.nrows() {
        for j in 0..b.ncols() {
            v.push(b[(i, j)]);
        }
    }
    for j in 0..d {
        for i in j..d {
            v.push(sig[(i, j)]);
        }
    }
    v
}

/// Chain iteration (1-based) of each retained draw.
pub fn retained_iterations(meta: &RunMetadata, count: usize) -> Vec<usize> {
    (0..count).map(|k| meta.burn_in + (k + 1) * meta.thin).collect()
}

/// `{:.16e}` keeps 17 significant digits, enough to round-trip any `f64`.
pub fn format_draws(out: &ChainOutput) -> Result<String> {
    let first = out
        .draws
        .first()
        .ok_or_else(|| Error::InvalidInput("chain output has no draws".into()))?;
    let (p, d) = first.beta().shape();
    let mut s = String::from("iteration");
    for c in draw_columns(p, d) {
        s.push(',');
        s.push_str(&c);
    }
    s.push('\n');
    for (it, state) in retained_iterations(&out.metadata, out.draws.len()).into_iter().zip(&out.draws) {
        let _ = write!(s, "{it}");
        for v in flatten(state) {
            let _ = write!(s, ",{v:.16e}");
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn write_draws(path: &Path, out: &ChainOutput) -> Result<()> {
    std::fs::write(path, format_draws(out)?).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Reloads a draws file as `(iterations, states)` for a `p × d` model.
pub fn read_draws(path: &Path, p: usize, d: usize) -> Result<(Vec<usize>, Vec<ChainState>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let expected = draw_columns(p, d);
    let header = reader
        .headers()
        .map_err(|e| csv_error(path, 1, 0, e.to_string()))?
        .clone();
    if header.len() != expected.len() + 1 || header.iter().skip(1).zip(&expected).any(|(a, b)| a != b) {
        return Err(csv_error(path, 1, 0, format!("header does not match a p = {p}, d = {d} draws file")));
    }
    let (mut its, mut states) = (Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| csv_error(path, row, 0, e.to_string()))?;
        let it = record[0]
            .parse()
            .map_err(|_| csv_error(path, row, 1, "iteration is not an integer"))?;
        let vals = record
            .iter()
            .skip(1)
            .enumerate()
            .map(|(j, f)| f.parse::<f64>().map_err(|_| csv_error(path, row, j + 2, format!("`{f}` is not a number"))))
            .collect::<Result<Vec<_>>>()?;
        let beta = DMatrix::from_row_slice(p, d, &vals[..p * d]);
        let mut sigma = DMatrix::zeros(d, d);
        let mut k = p * d;
        for j in 0..d {
            for i in j..d {
                sigma[(i, j)] = vals[k];
                sigma[(j, i)] = vals[k];
                k += 1;
            }
        }
        its.push(it);
        states.push(ChainState::new(beta, sigma)?);
    }
    Ok((its, states))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSummary {
    pub name: String,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: String,
    pub seed: u64,
    pub config_hash: String,
    pub run_hash: String,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub retained: usize,
    pub retries: RetryStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureRecord>,
    pub functionals: Vec<NamedSummary>,
}

/// Per-column summaries of retained draws, in draws-file column order.
pub fn summarize_states(states: &[ChainState]) -> Result<Vec<NamedSummary>> {
    let first = states
        .first()
        .ok_or_else(|| Error::InvalidInput("no draws to summarize".into()))?;
    let (p, d) = first.beta().shape();
    let rows: Vec<Vec<f64>> = states.iter().map(flatten).collect();
    draw_columns(p, d)
        .into_iter()
        .enumerate()
        .map(|(k, name)| {
            let col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            Ok(NamedSummary {
                name,
                summary: Summary::of(&col)?,
            })
        })
        .collect()
}

impl RunSummary {
    pub fn new(out: &ChainOutput, config_hash: &str) -> Result<Self> {
        let m = &out.metadata;
        Ok(Self {
            algorithm: m.algorithm.to_string(),
            seed: m.seed,
            config_hash: config_hash.into(),
            run_hash: m.config_hash.clone(),
            iterations: m.iterations,
            burn_in: m.burn_in,
            thin: m.thin,
            retained: out.draws.len(),
            retries: out.retries,
            failure: out.failure.clone(),
            functionals: summarize_states(&out.draws)?,
        })
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "algorithm: {}", self.algorithm);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "config hash: {}", self.config_hash);
        let _ = writeln!(
            s,
            "iterations: {} (burn-in {}, thin {}, retained {})",
            self.iterations, self.burn_in, self.thin, self.retained
        );
        let _ = writeln!(
            s,
            "latent rejections: {} total, {} max per draw",
            self.retries.total_rejections, self.retries.max_rejections
        );
        if let Some(f) = &self.failure {
            let _ = writeln!(s, "FAILED at iteration {}: {}", f.iteration, f.message);
        }
        let _ = writeln!(s, "{:<14} {:>24} {:>24} {:>24} {:>24}", "column", "mean", "sd", "mean mcse", "sd mcse");
        for f in &self.functionals {
            let m = &f.summary;
            let _ = writeln!(
                s,
                "{:<14} {:>24.16e} {:>24.16e} {:>24.16e} {:>24.16e}",
                f.name, m.mean, m.sd, m.mean_mcse, m.sd_mcse
            );
        }
        s
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
