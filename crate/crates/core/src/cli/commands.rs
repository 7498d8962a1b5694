//! The `check`, `sample` and `diagnose` commands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Format, RunConfig};
use super::io::{data_digest, read_matrix, write_draws, write_json, write_text, RunSummary};
use crate::certificate::{Certificate, Evidence, Outcome, Verdict};
use crate::chains::{run_chain, Algorithm, ChainOutput};
use crate::checker::{certify_with, check_haar_existence, Dims};
use crate::diagnostics::{
    autocorr_compare, grid_posterior_oracle, oracle_agreement, AgreementReport, AutocorrReport, Functional,
    OracleMoments,
};
use crate::error::{Error, Result};
use crate::mixing::MixingDensity;
use crate::model::{validate_data, ProprietyCertificate, RegressionData};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_NOT_CERTIFIED: i32 = 2;

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub algorithm: Option<Algorithm>,
    pub out: Option<PathBuf>,
    /// Sample despite an uncertified operator or undecided moment conditions.
    /// Failed propriety conditions are never overridden.
    pub force: bool,
}

/// What a command printed and how it exited.
#[derive(Debug, Clone)]
pub struct CommandResult {
    pub exit_code: i32,
    /// Human-readable report for stdout.
    pub report: String,
    /// Warnings and refusals for stderr.
    pub messages: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl CommandResult {
    fn new(exit_code: i32, report: String) -> Self {
        Self {
            exit_code,
            report,
            messages: Vec::new(),
            files: Vec::new(),
        }
    }
}

pub struct Loaded {
    pub config: RunConfig,
    pub data: RegressionData,
    pub mixing: MixingDensity,
    pub out_dir: PathBuf,
    pub config_hash: String,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Parses the config, applies overrides and loads the data files.
pub fn load(config_path: &Path, ov: &Overrides) -> Result<Loaded> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(seed) = ov.seed {
        config.chain.seed = seed;
    }
    if let Some(alg) = ov.algorithm {
        config.chain.algorithm = alg;
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    let y = read_matrix(&resolve(base, &config.data.y))?;
    let x = read_matrix(&resolve(base, &config.data.x))?;
    if y.nrows() != x.nrows() {
        return Err(Error::InvalidInput(format!(
            "y has {} rows but X has {}",
            y.nrows(),
            x.nrows()
        )));
    }
    let config_hash = config.hash(&data_digest(&y, &x));
    let data = RegressionData::new(y, x, config.model.a)?;
    let mixing = config.model.mixing.build()?;
    let out_dir = match &ov.out {
        Some(o) => o.clone(),
        None => resolve(base, &config.output.dir),
    };
    Ok(Loaded {
        config,
        data,
        mixing,
        out_dir,
        config_hash,
    })
}

/// S1 and S2 are structural; a failure of either is a hard stop. S3 and S4
/// are sufficient moment conditions, so their failure leaves propriety
/// undecided rather than refuted.
fn propriety_failed(p: &ProprietyCertificate) -> bool {
    p.conditions
        .iter()
        .any(|e| e.outcome == Outcome::Fail && matches!(e.name.as_str(), "S1" | "S2"))
}

fn certified(v: Verdict) -> bool {
    matches!(v, Verdict::TraceClass | Verdict::GeometricallyErgodic)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub config_hash: String,
    pub propriety: ProprietyCertificate,
    pub certificate: Certificate,
    pub haar: Evidence,
}

impl CheckReport {
    pub fn render(&self) -> String {
        let mut s = format!("config hash: {}\n", self.config_hash);
        s.push_str(&self.propriety.report());
        s.push_str(&self.certificate.report());
        let _ = writeln!(s, "Haar PX-DA: [{}] {}", self.haar.outcome, self.haar.detail);
        s
    }

    fn exit_code(&self) -> i32 {
        if propriety_failed(&self.propriety) {
            EXIT_FAILURE
        } else if self.propriety.proper() && certified(self.certificate.verdict) {
            EXIT_OK
        } else {
            EXIT_NOT_CERTIFIED
        }
    }
}

fn run_checks(l: &Loaded) -> Result<CheckReport> {
    let propriety = validate_data(&l.data, &l.mixing);
    let certificate = certify_with(&l.mixing, Dims::of(&l.data), &l.config.check_options()?);
    let haar = check_haar_existence(&l.mixing, l.data.n(), l.data.d(), l.data.a(), None).evidence();
    Ok(CheckReport {
        config_hash: l.config_hash.clone(),
        propriety,
        certificate,
        haar,
    })
}

fn emit(l: &Loaded, stem: &str, value: &impl Serialize, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::create_dir_all(&l.out_dir).map_err(|e| Error::Io(format!("{}: {e}", l.out_dir.display())))?;
    for f in &l.config.output.formats {
        let path = match f {
            Format::Json => {
                let p = l.out_dir.join(format!("{stem}.json"));
                write_json(&p, value)?;
                p
            }
            Format::Text => {
                let p = l.out_dir.join(format!("{stem}.txt"));
                write_text(&p, text)?;
                p
            }
        };
        files.push(path);
    }
    Ok(())
}

pub fn command_check(config_path: &Path, ov: &Overrides) -> Result<CommandResult> {
    let l = load(config_path, ov)?;
    let report = run_checks(&l)?;
    let text = report.render();
    let mut res = CommandResult::new(report.exit_code(), text.clone());
    emit(&l, "certificate", &report, &text, &mut res.files)?;
    Ok(res)
}

/// Propriety and certification gate shared by `sample` and `diagnose`.
fn gate(l: &Loaded, ov: &Overrides, res: &mut CommandResult) -> Result<bool> {
    let report = run_checks(l)?;
    if propriety_failed(&report.propriety) {
        res.exit_code = EXIT_FAILURE;
        res.report = report.propriety.report();
        res.messages.push("refusing to sample: the posterior is not shown to be proper".into());
        return Ok(false);
    }
    let mut doubts = Vec::new();
    if !report.propriety.proper() {
        doubts.push("the sufficient conditions S1-S4 do not establish propriety".to_string());
    }
    if !certified(report.certificate.verdict) {
        doubts.push(format!("the checker returned {}", report.certificate.verdict));
    }
    if doubts.is_empty() {
        return Ok(true);
    }
    if ov.force {
        for d in doubts {
            res.messages.push(format!("warning: {d}; continuing because of --force"));
        }
        return Ok(true);
    }
    res.exit_code = EXIT_NOT_CERTIFIED;
    res.report = report.render();
    res.messages.push(format!("refusing to sample: {}; rerun with --force to override", doubts.join(", ")));
    Ok(false)
}

fn haar_available(l: &Loaded) -> (bool, String) {
    let ha = check_haar_existence(&l.mixing, l.data.n(), l.data.d(), l.data.a(), None);
    (ha.exists(), ha.summary())
}

fn failure_message(out: &ChainOutput) -> Option<String> {
    out.failure
        .as_ref()
        .map(|f| format!("{} chain failed at iteration {}: {}", out.metadata.algorithm, f.iteration, f.message))
}

pub fn command_sample(config_path: &Path, ov: &Overrides) -> Result<CommandResult> {
    let l = load(config_path, ov)?;
    let mut res = CommandResult::new(EXIT_OK, String::new());
    if !gate(&l, ov, &mut res)? {
        return Ok(res);
    }
    let alg = l.config.chain.algorithm;
    if alg == Algorithm::HaarPxda {
        let (ok, why) = haar_available(&l);
        if !ok {
            res.exit_code = EXIT_FAILURE;
            res.messages.push(format!("Haar PX-DA is not available: {why}"));
            return Ok(res);
        }
    }
    let out = run_chain(&l.config.chain_config(alg), &l.data, &l.mixing)?;
    std::fs::create_dir_all(&l.out_dir).map_err(|e| Error::Io(format!("{}: {e}", l.out_dir.display())))?;
    if let Some(m) = failure_message(&out) {
        res.exit_code = EXIT_FAILURE;
        res.messages.push(m);
        if out.draws.len() < 4 {
            return Ok(res);
        }
    }
    let draws = l.out_dir.join("draws.csv");
    write_draws(&draws, &out)?;
    res.files.push(draws);
    let summary = RunSummary::new(&out, &l.config_hash)?;
    res.report = summary.render();
    emit(&l, "summary", &summary, &res.report, &mut res.files)?;
    Ok(res)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum OracleSection {
    Skipped {
        reason: String,
    },
    Computed {
        moments: OracleMoments,
        agreement: Vec<(String, AgreementReport)>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub config_hash: String,
    pub seed: u64,
    pub warnings: Vec<String>,
    pub summaries: Vec<RunSummary>,
    pub autocorrelation: Vec<AutocorrReport>,
    pub oracle: OracleSection,
}

impl DiagnoseReport {
    pub fn render(&self) -> String {
        let mut s = format!("config hash: {}\nseed: {}\n", self.config_hash, self.seed);
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        for sum in &self.summaries {
            s.push('\n');
            s.push_str(&sum.render());
        }
        if !self.autocorrelation.is_empty() {
            s.push_str("\nautocorrelation, DA against Haar PX-DA (paired seeds)\n");
            for a in &self.autocorrelation {
                s.push_str(&a.render());
            }
        }
        s.push_str("\noracle agreement\n");
        match &self.oracle {
            OracleSection::Skipped { reason } => {
                let _ = writeln!(s, "skipped: {reason}");
            }
            OracleSection::Computed { moments, agreement } => {
                let _ = writeln!(
                    s,
                    "oracle: E[beta] = {:.16e}, sd(beta) = {:.16e}, E[sigma^2] = {:.16e}, sd(sigma^2) = {:.16e}",
                    moments.beta_mean, moments.beta_sd, moments.sigma2_mean, moments.sigma2_sd
                );
                for (alg, r) in agreement {
                    let _ = writeln!(s, "{alg}:");
                    s.push_str(&r.render());
                }
            }
        }
        s
    }
}

fn functionals(p: usize, d: usize) -> Vec<Functional> {
    let mut f = Vec::new();
    for row in 0..p {
        for col in 0..d {
            f.push(Functional::Beta { row, col });
        }
    }
    for col in 0..d {
        for row in col..d {
            f.push(Functional::Sigma { row, col });
        }
    }
    f
}

pub fn command_diagnose(config_path: &Path, ov: &Overrides) -> Result<CommandResult> {
    let l = load(config_path, ov)?;
    let mut res = CommandResult::new(EXIT_OK, String::new());
    if !gate(&l, ov, &mut res)? {
        return Ok(res);
    }
    let mut warnings = Vec::new();
    let (haar_ok, why) = haar_available(&l);
    if !haar_ok {
        warnings.push(format!("Haar PX-DA is not available ({why}); running DA only"));
    }

    // Both chains use the same seed and stream: every uniform the samplers
    // share is paired, so differences reflect the rescaling step.
    let da_cfg = l.config.chain_config(Algorithm::Da);
    let px_cfg = l.config.chain_config(Algorithm::HaarPxda);
    let (da, px) = std::thread::scope(|s| {
        let px = haar_ok.then(|| s.spawn(|| run_chain(&px_cfg, &l.data, &l.mixing)));
        let da = run_chain(&da_cfg, &l.data, &l.mixing);
        (da, px.map(|h| h.join().expect("chain thread panicked")))
    });
    let da = da?;
    let px = px.transpose()?;
    let chains: Vec<&ChainOutput> = std::iter::once(&da).chain(px.as_ref()).collect();
    for c in &chains {
        if let Some(m) = failure_message(c) {
            res.exit_code = EXIT_FAILURE;
            res.messages.push(m);
            return Ok(res);
        }
    }

    let summaries = chains
        .iter()
        .map(|c| RunSummary::new(c, &l.config_hash))
        .collect::<Result<Vec<_>>>()?;
    let autocorrelation = match &px {
        Some(px) => functionals(l.data.p(), l.data.d())
            .into_iter()
            .map(|f| autocorr_compare(&da, px, f, l.config.check.max_lag))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let oracle = if l.data.p() != 1 || l.data.d() != 1 {
        OracleSection::Skipped {
            reason: "oracle requires p=d=1".into(),
        }
    } else {
        match grid_posterior_oracle(&l.data, &l.mixing, &l.config.grid_spec()) {
            Err(e) => OracleSection::Skipped { reason: e.to_string() },
            Ok(grid) => {
                let moments = grid.oracle_moments();
                let agreement = chains
                    .iter()
                    .map(|c| Ok((c.metadata.algorithm.to_string(), oracle_agreement(c, &moments)?)))
                    .collect::<Result<Vec<_>>>()?;
                OracleSection::Computed { moments, agreement }
            }
        }
    };
    for w in &warnings {
        res.messages.push(format!("warning: {w}"));
    }
    let report = DiagnoseReport {
        config_hash: l.config_hash.clone(),
        seed: l.config.chain.seed,
        warnings,
        summaries,
        autocorrelation,
        oracle,
    };
    res.report = report.render();
    emit(&l, "diagnose", &report, &res.report, &mut res.files)?;
    Ok(res)
}
