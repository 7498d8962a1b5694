//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chains::{Algorithm, ChainConfig};
use crate::checker::{CheckOptions, SurrogateG, DEFAULT_ETA, DEFAULT_ZETA};
use crate::diagnostics::{GridSpec, DEFAULT_MAX_LAG};
use crate::error::{Error, Result};
use crate::mixing::MixingSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub data: DataBlock,
    #[serde(default)]
    pub chain: ChainBlock,
    #[serde(default)]
    pub check: CheckBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    /// Prior exponent in `|Σ|^{-a}`.
    pub a: f64,
    pub mixing: MixingSpec,
}

/// Headerless numeric CSV files; relative paths resolve against the config
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    pub y: PathBuf,
    pub x: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainBlock {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for ChainBlock {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Da,
            iterations: 20_000,
            burn_in: 1_000,
            thin: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateBlock {
    pub rho: f64,
    pub tau: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleGridBlock {
    pub beta_nodes: usize,
    pub log_sigma_nodes: usize,
    pub se_multiple: f64,
    pub log_sigma_below: f64,
    pub log_sigma_above: f64,
    pub knee: f64,
}

impl Default for OracleGridBlock {
    fn default() -> Self {
        let g = GridSpec::default();
        Self {
            beta_nodes: g.beta_nodes,
            log_sigma_nodes: g.log_sigma_nodes,
            se_multiple: g.se_multiple,
            log_sigma_below: g.log_sigma_below,
            log_sigma_above: g.log_sigma_above,
            knee: g.knee,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckBlock {
    pub zeta: f64,
    pub eta: f64,
    /// Fixes `(ρ, τ, η)` for the monotone-ratio check instead of searching.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surrogate: Option<SurrogateBlock>,
    pub oracle_grid: OracleGridBlock,
    pub max_lag: usize,
}

impl Default for CheckBlock {
    fn default() -> Self {
        Self {
            zeta: DEFAULT_ZETA,
            eta: DEFAULT_ETA,
            surrogate: None,
            oracle_grid: OracleGridBlock::default(),
            max_lag: DEFAULT_MAX_LAG,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            formats: vec![Format::Json, Format::Text],
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.mixing.build()?;
        if !self.model.a.is_finite() {
            return Err(Error::Config("model.a must be finite".into()));
        }
        self.chain_config(Algorithm::Da).validate()?;
        if self.check.max_lag == 0 {
            return Err(Error::Config("check.max_lag must be positive".into()));
        }
        if let Some(s) = &self.check.surrogate {
            SurrogateG::new(s.rho, s.tau)?;
            if !(s.eta > 0.0 && s.eta < 1.0) {
                return Err(Error::Config(format!("check.surrogate.eta must lie in (0, 1), got {}", s.eta)));
            }
        }
        Ok(())
    }

    pub fn chain_config(&self, algorithm: Algorithm) -> ChainConfig {
        let c = &self.chain;
        ChainConfig::new(algorithm, c.iterations, c.burn_in, c.thin, c.seed)
    }

    pub fn check_options(&self) -> Result<CheckOptions> {
        let surrogate = match &self.check.surrogate {
            Some(s) => Some((SurrogateG::new(s.rho, s.tau)?, s.eta)),
            None => None,
        };
        Ok(CheckOptions {
            zeta: self.check.zeta,
            eta: self.check.eta,
            surrogate,
        })
    }

    pub fn grid_spec(&self) -> GridSpec {
        let g = &self.check.oracle_grid;
        GridSpec {
            beta_nodes: g.beta_nodes,
            log_sigma_nodes: g.log_sigma_nodes,
            se_multiple: g.se_multiple,
            log_sigma_below: g.log_sigma_below,
            log_sigma_above: g.log_sigma_above,
            knee: g.knee,
            ..GridSpec::default()
        }
    }

    /// SHA-256 over canonical JSON of every block except `output`, with the
    /// data paths replaced by `data_digest` so that moving files does not
    /// change the hash but editing them does.
    pub fn hash(&self, data_digest: &str) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("config is a table");
        obj.remove("output");
        obj.insert("data".into(), serde_json::Value::String(data_digest.into()));
        // serde_json maps are ordered by key, so this text is canonical
        let text = serde_json::to_string(&v).expect("json serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
