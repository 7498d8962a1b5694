//! Lag-by-lag autocorrelation of DA against Haar PX-DA output.

use serde::{Deserialize, Serialize};

use super::stats::{autocorrelation, batch_length, variance};
use crate::chains::ChainOutput;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_LAG: usize = 20;

/// Scalar functional of a retained draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Functional {
    Beta { row: usize, col: usize },
    Sigma { row: usize, col: usize },
}

impl Functional {
    pub fn trace(&self, out: &ChainOutput) -> Result<Vec<f64>> {
        let first = out
            .draws
            .first()
            .ok_or_else(|| Error::InvalidInput("chain output has no draws".into()))?;
        let (shape, (r, c)) = match *self {
            Functional::Beta { row, col } => (first.beta().shape(), (row, col)),
            Functional::Sigma { row, col } => (first.sigma().shape(), (row, col)),
        };
        if r >= shape.0 || c >= shape.1 {
            return Err(Error::InvalidInput(format!("{self} is out of range for shape {shape:?}")));
        }
        Ok(match *self {
            Functional::Beta { row, col } => out.beta_trace(row, col),
            Functional::Sigma { row, col } => out.sigma_trace(row, col),
        })
    }
}

impl std::fmt::Display for Functional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Functional::Beta { row, col } => write!(f, "beta[{},{}]", row + 1, col + 1),
            Functional::Sigma { row, col } => write!(f, "Sigma[{},{}]", row + 1, col + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagRow {
    pub lag: usize,
    pub da: f64,
    pub pxda: f64,
    pub da_se: f64,
    pub pxda_se: f64,
    /// `pxda − da`.
    pub difference: f64,
    pub combined_se: f64,
    /// `pxda <= da + 3 · combined_se`.
    pub pxda_not_worse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocorrReport {
    pub functional: Functional,
    pub retained: usize,
    pub lags: Vec<LagRow>,
}

impl AutocorrReport {
    pub fn all_not_worse(&self) -> bool {
        self.lags.iter().all(|r| r.pxda_not_worse)
    }

    pub fn lag(&self, k: usize) -> Option<&LagRow> {
        self.lags.iter().find(|r| r.lag == k)
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "functional {} over {} retained draws\n{:>4} {:>10} {:>10} {:>10} {:>10} {:>6}\n",
            self.functional, self.retained, "lag", "da", "pxda", "diff", "se", "ok"
        );
        for r in &self.lags {
            s.push_str(&format!(
                "{:>4} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>6}\n",
                r.lag, r.da, r.pxda, r.difference, r.combined_se, r.pxda_not_worse
            ));
        }
        s
    }
}

/// Full-chain lag-k autocorrelation, with its standard error from the spread
/// of the same estimator over non-overlapping batches of length `⌊√N⌋`.
pub fn autocorrelation_with_se(x: &[f64], lag: usize) -> (f64, f64) {
    let b = batch_length(x.len());
    let per_batch: Vec<f64> = x.chunks_exact(b).map(|c| autocorrelation(c, lag)).collect();
    let se = (variance(&per_batch) / per_batch.len() as f64).sqrt();
    (autocorrelation(x, lag), se)
}

pub fn autocorr_compare(da: &ChainOutput, pxda: &ChainOutput, functional: Functional, max_lag: usize) -> Result<AutocorrReport> {
    let (ma, mb) = (&da.metadata, &pxda.metadata);
    if (ma.iterations, ma.burn_in, ma.thin) != (mb.iterations, mb.burn_in, mb.thin) {
        return Err(Error::InvalidInput(format!(
            "chain configurations differ: (iterations, burn-in, thin) = {:?} vs {:?}",
            (ma.iterations, ma.burn_in, ma.thin),
            (mb.iterations, mb.burn_in, mb.thin)
        )));
    }
    if da.draws.len() != pxda.draws.len() {
        return Err(Error::InvalidInput(format!(
            "retained lengths differ: {} vs {}",
            da.draws.len(),
            pxda.draws.len()
        )));
    }
    let x = functional.trace(da)?;
    let y = functional.trace(pxda)?;
    let n = x.len();
    if max_lag == 0 || batch_length(n) <= 2 * max_lag {
        return Err(Error::InvalidInput(format!(
            "{n} draws are too few for lags up to {max_lag}: batch length ⌊√N⌋ must exceed twice the lag"
        )));
    }
    let lags = (1..=max_lag)
        .map(|lag| {
            let (a, sa) = autocorrelation_with_se(&x, lag);
            let (b, sb) = autocorrelation_with_se(&y, lag);
            let combined = (sa * sa + sb * sb).sqrt();
            LagRow {
                lag,
                da: a,
                pxda: b,
                da_se: sa,
                pxda_se: sb,
                difference: b - a,
                combined_se: combined,
                pxda_not_worse: b <= a + 3.0 * combined,
            }
        })
        .collect();
    Ok(AutocorrReport {
        functional,
        retained: n,
        lags,
    })
}
