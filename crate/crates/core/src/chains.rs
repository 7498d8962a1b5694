//! The DA and Haar PX-DA Gibbs samplers.

use std::fmt;

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mixing::MixingDensity;
use crate::model::{compute_residuals, compute_weighted_stats, ChainState, LatentVector, RegressionData};
use crate::samplers::{
    sample_e, sample_inverse_wishart_cholesky, sample_matrix_normal_cholesky, sample_psi_counted, HaarDensity, PsiDensity,
    RngStream,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "da")]
    Da,
    #[serde(rename = "pxda")]
    HaarPxda,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Da => "da",
            Algorithm::HaarPxda => "pxda",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// β = OLS, Σ = residual covariance + 1e-6 I.
    OlsDefault,
    Given(ChainState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub stream: u64,
    pub initial: InitialState,
    pub record_latent: bool,
}

impl ChainConfig {
    pub fn new(algorithm: Algorithm, iterations: usize, burn_in: usize, thin: usize, seed: u64) -> Self {
        Self {
            algorithm,
            iterations,
            burn_in,
            thin,
            seed,
            stream: 0,
            initial: InitialState::OlsDefault,
            record_latent: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    fn keeps(&self, i: usize) -> bool {
        i >= self.burn_in && (i - self.burn_in + 1).is_multiple_of(self.thin)
    }
}

/// Test hooks. Not part of the supported interface.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaOptions {
    /// Added to the inverse-Wishart degrees of freedom (mutation tests).
    pub iw_dof_offset: f64,
    /// Replaces the PX-DA rescaling draw without consuming randomness.
    pub force_v: Option<f64>,
}

impl Default for DaOptions {
    fn default() -> Self {
        Self {
            iw_dof_offset: 0.0,
            force_v: None,
        }
    }
}

/// Rejections spent by the generic samplers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryStats {
    pub latent_draws: u64,
    pub total_rejections: u64,
    pub max_rejections: u64,
}

impl RetryStats {
    fn record(&mut self, rejections: usize) {
        self.latent_draws += 1;
        self.total_rejections += rejections as u64;
        self.max_rejections = self.max_rejections.max(rejections as u64);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub stream: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub config_hash: String,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub iteration: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub draws: Vec<ChainState>,
    pub latent: Option<Vec<LatentVector>>,
    pub retries: RetryStats,
    pub metadata: RunMetadata,
    /// Set when a sampler failed mid-run; `draws` then holds what was
    /// retained before the failure.
    pub failure: Option<FailureRecord>,
}

impl ChainOutput {
    pub fn beta_trace(&self, row: usize, col: usize) -> Vec<f64> {
        self.draws.iter().map(|s| s.beta()[(row, col)]).collect()
    }

    pub fn sigma_trace(&self, row: usize, col: usize) -> Vec<f64> {
        self.draws.iter().map(|s| s.sigma()[(row, col)]).collect()
    }
}

fn lower_cholesky(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Cholesky::new(m.clone())
        .map(|c| c.l())
        .ok_or_else(|| Error::Degenerate(format!("{what} is not positive definite")))
}

/// Latent step: `z_i ~ ψ(·; r_i)`, then for PX-DA `z ← v z` with `v ~ e(·; z)`.
pub(crate) fn draw_latent(
    state: &ChainState,
    data: &RegressionData,
    h: &MixingDensity,
    haar: bool,
    opts: &DaOptions,
    retries: &mut RetryStats,
    rng: &mut RngStream,
) -> Result<LatentVector> {
    let d = data.d();
    let r = compute_residuals(state, data)?;
    let mut z = Vec::with_capacity(data.n());
    for &ri in r.iter() {
        let (u, rejected) = sample_psi_counted(&PsiDensity::new(h, d, ri.max(0.0))?, rng)?;
        retries.record(rejected);
        z.push(u);
    }
    let z = LatentVector::from_slice(&z)?;
    if !haar {
        return Ok(z);
    }
    let v = match opts.force_v {
        Some(v) => v,
        None => sample_e(&HaarDensity::new(h, &z, d, data.a())?, rng),
    };
    z.scaled(v)
}

/// Parameter step: `Σ | z ~ IW`, then `β | Σ, z ~ MN`.
pub(crate) fn draw_parameters(
    z: &LatentVector,
    data: &RegressionData,
    opts: &DaOptions,
    rng: &mut RngStream,
) -> Result<ChainState> {
    let stats = compute_weighted_stats(z, data)?;
    let scale_inv = Cholesky::new(stats.scale.clone())
        .ok_or_else(|| Error::Degenerate("inverse-Wishart scale matrix is not positive definite".into()))?
        .inverse();
    let l_theta = lower_cholesky(&((&scale_inv + scale_inv.transpose()) * 0.5), "S⁻¹")?;
    let sigma = sample_inverse_wishart_cholesky(data.iw_degrees() + opts.iw_dof_offset, &l_theta, rng)?;
    let l_omega = lower_cholesky(&stats.omega, "Ω")?;
    let l_sigma = lower_cholesky(&sigma, "Σ")?;
    let beta = sample_matrix_normal_cholesky(&stats.mu, &l_omega, &l_sigma, rng);
    ChainState::new(beta, sigma)
}

fn transition(
    state: &ChainState,
    data: &RegressionData,
    h: &MixingDensity,
    haar: bool,
    opts: &DaOptions,
    retries: &mut RetryStats,
    rng: &mut RngStream,
) -> Result<(ChainState, LatentVector)> {
    let z = draw_latent(state, data, h, haar, opts, retries, rng)?;
    let next = draw_parameters(&z, data, opts, rng)?;
    Ok((next, z))
}

/// One DA transition: latent scales, then Σ, then β.
pub fn da_iterate(
    state: &ChainState,
    data: &RegressionData,
    h: &MixingDensity,
    rng: &mut RngStream,
) -> Result<(ChainState, LatentVector)> {
    transition(state, data, h, false, &DaOptions::default(), &mut RetryStats::default(), rng)
}

/// One Haar PX-DA transition: as DA, with the latent vector rescaled by a
/// draw from `e(·; z)` before the Σ and β updates.
pub fn haar_pxda_iterate(
    state: &ChainState,
    data: &RegressionData,
    h: &MixingDensity,
    rng: &mut RngStream,
) -> Result<(ChainState, LatentVector)> {
    transition(state, data, h, true, &DaOptions::default(), &mut RetryStats::default(), rng)
}

#[doc(hidden)]
pub fn iterate_with_options(
    state: &ChainState,
    data: &RegressionData,
    h: &MixingDensity,
    algorithm: Algorithm,
    opts: &DaOptions,
    rng: &mut RngStream,
) -> Result<(ChainState, LatentVector)> {
    transition(
        state,
        data,
        h,
        algorithm == Algorithm::HaarPxda,
        opts,
        &mut RetryStats::default(),
        rng,
    )
}

/// Hash of everything that determines a run's draws.
pub fn run_hash(config: &ChainConfig, data: &RegressionData, h: &MixingDensity) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!(
        "{}|{}|{}|{}|{}|{}|{}|{:?}|",
        config.algorithm,
        config.iterations,
        config.burn_in,
        config.thin,
        config.seed,
        config.stream,
        h.describe(),
        data.a().to_bits()
    ));
    for v in data.y().iter().chain(data.x().iter()) {
        hasher.update(v.to_bits().to_le_bytes());
    }
    if let InitialState::Given(s) = &config.initial {
        for v in s.beta().iter().chain(s.sigma().iter()) {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

pub fn run_chain(config: &ChainConfig, data: &RegressionData, h: &MixingDensity) -> Result<ChainOutput> {
    run_chain_with_options(config, data, h, &DaOptions::default())
}

#[doc(hidden)]
pub fn run_chain_with_options(
    config: &ChainConfig,
    data: &RegressionData,
    h: &MixingDensity,
    opts: &DaOptions,
) -> Result<ChainOutput> {
    config.validate()?;
    let d = data.d();
    if !(data.iw_degrees() + opts.iw_dof_offset > d as f64 - 1.0) {
        return Err(Error::Config(format!(
            "inverse-Wishart degrees n − p + 2a − d − 1 = {} must exceed d − 1 = {}",
            data.iw_degrees(),
            d - 1
        )));
    }
    if config.algorithm == Algorithm::HaarPxda && opts.force_v.is_none() {
        let ha = crate::checker::check_haar_existence(h, data.n(), d, data.a(), None);
        if !ha.exists() {
            return Err(Error::HaarNonexistent(ha.summary()));
        }
    }
    let mut state = match &config.initial {
        InitialState::OlsDefault => ChainState::ols_default(data)?,
        InitialState::Given(s) => {
            if s.beta().shape() != (data.p(), d) {
                return Err(Error::InvalidInput(format!(
                    "initial β is {:?}, expected ({}, {d})",
                    s.beta().shape(),
                    data.p()
                )));
            }
            s.clone()
        }
    };

    let started = Stopwatch::start();
    let mut rng = RngStream::new(config.seed, config.stream);
    let mut draws = Vec::with_capacity(config.retained());
    let mut latent = config.record_latent.then(|| Vec::with_capacity(config.retained()));
    let mut retries = RetryStats::default();
    let mut failure = None;
    let haar = config.algorithm == Algorithm::HaarPxda;
    for i in 0..config.iterations {
        match transition(&state, data, h, haar, opts, &mut retries, &mut rng) {
            Ok((next, z)) => {
                state = next;
                if config.keeps(i) {
                    draws.push(state.clone());
                    if let Some(l) = latent.as_mut() {
                        l.push(z);
                    }
                }
            }
            Err(e) => {
                failure = Some(FailureRecord {
                    iteration: i,
                    message: e.at_iteration(i).to_string(),
                });
                break;
            }
        }
    }
    Ok(ChainOutput {
        draws,
        latent,
        retries,
        metadata: RunMetadata {
            algorithm: config.algorithm,
            seed: config.seed,
            stream: config.stream,
            iterations: config.iterations,
            burn_in: config.burn_in,
            thin: config.thin,
            config_hash: run_hash(config, data, h),
            wall_time_secs: started.secs(),
        },
        failure,
    })
}


/// Wall clock for run metadata; reads zero where no monotonic clock exists.
struct Stopwatch(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    fn start() -> Self {
        Stopwatch(std::time::Instant::now())
    }

    #[cfg(target_arch = "wasm32")]
    fn start() -> Self {
        Stopwatch()
    }

    #[cfg(not(target_arch = "wasm32"))]
    fn secs(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }

    #[cfg(target_arch = "wasm32")]
    fn secs(&self) -> f64 {
        0.0
    }
}
