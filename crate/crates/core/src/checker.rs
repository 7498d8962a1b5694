//! Numerical certificates for the trace-class and Haar-existence conditions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::certificate::{Certificate, ConditionPath, Evidence, Outcome, Verdict};
use crate::error::{Error, Result};
use crate::mixing::{classify_origin, moment_integral, ClassMethod, Family, MixingDensity, MomentVerdict, OriginClass};
use crate::model::{LatentVector, RegressionData};
use crate::quadrature::{integrate_exp, integrate_exp_budget, integrate_log, log_add_exp, ShellRule, ShellTable, ShellVerdict, T_MIN};
use crate::samplers::HaarDensity;

pub const DEFAULT_ZETA: f64 = 1.5;
pub const DEFAULT_ETA: f64 = 0.1;
/// Lower end of the monotone-ratio grid.
pub const RATIO_GRID_MIN: f64 = 1e-12;
pub const RATIO_GRID_POINTS: usize = 200;
pub const RATIO_SLACK: f64 = 1e-10;
/// Deepest dyadic shell `(2^{-k-1} η, 2^{-k} η)` examined.
pub const MAX_SHELL: usize = 40;
/// Shells more than this far below the running total (in log) are not integrated.
const LOG_NEGLIGIBLE: f64 = 745.0;

pub const SEARCH_RHO: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
pub const SEARCH_TAU: [f64; 17] = [
    -8.0, -7.0, -6.0, -5.0, -4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0,
];
pub const SEARCH_ETA: [f64; 3] = [1e-1, 1e-2, 1e-3];

/// Problem dimensions and prior exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub a: f64,
}

impl Dims {
    pub fn new(n: usize, p: usize, d: usize, a: f64) -> Self {
        Self { n, p, d, a }
    }

    pub fn of(data: &RegressionData) -> Self {
        Self::new(data.n(), data.p(), data.d(), data.a())
    }

    /// `(n − p + 2a − d − 1) / 2`, the power threshold for polynomial densities.
    pub fn polynomial_threshold(&self) -> f64 {
        (self.n as f64 - self.p as f64 + 2.0 * self.a - self.d as f64 - 1.0) / 2.0
    }
}

/// `g_{ρ,τ}(u) = exp{-ρ (log u)² + τ log u}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateG {
    pub rho: f64,
    pub tau: f64,
}

impl SurrogateG {
    pub fn new(rho: f64, tau: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("g needs rho > 0 and finite tau, got ({rho}, {tau})")));
        }
        Ok(Self { rho, tau })
    }

    pub fn log_g(&self, u: f64) -> f64 {
        let l = u.ln();
        -self.rho * l * l + self.tau * l
    }

    pub fn g(&self, u: f64) -> f64 {
        self.log_g(u).exp()
    }

    pub fn g_prime(&self, u: f64) -> f64 {
        self.g(u) * (self.tau - 2.0 * self.rho * u.ln()) / u
    }
}

/// `κ ∈ K`: positive near the origin with `1/κ` integrable there. Stored as
/// `log κ` against `log u` so the origin can be approached without underflow.
#[derive(Clone)]
pub struct KappaFunction {
    name: String,
    log_kappa: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    derivative: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    eta: f64,
}

impl std::fmt::Debug for KappaFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KappaFunction({}, eta={})", self.name, self.eta)
    }
}

impl KappaFunction {
    /// `κ(u) = u (log u)²` on `(0, 0.1)`.
    pub fn standard() -> Self {
        Self {
            name: "u (log u)^2".into(),
            log_kappa: Arc::new(|t: f64| t + 2.0 * t.abs().ln()),
            derivative: Arc::new(|u: f64| {
                let l = u.ln();
                l * l + 2.0 * l
            }),
            eta: 0.1,
        }
    }

    /// `log_kappa` maps `log u` to `log κ(u)`; `derivative` is `κ'(u)`.
    pub fn custom<K, D>(name: impl Into<String>, log_kappa: K, derivative: D, eta: f64) -> Self
    where
        K: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            log_kappa: Arc::new(log_kappa),
            derivative: Arc::new(derivative),
            eta,
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.log_kappa)(u.ln()).exp()
    }

    pub fn derivative(&self, u: f64) -> f64 {
        (self.derivative)(u)
    }

    /// `∫_0^η 1/κ` computed in `s = log(−log u)`, with unit shells in `s`.
    pub fn membership(&self) -> Evidence {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Evidence::new("kappa membership", Outcome::Inconclusive, "needs 0 < eta < 1");
        }
        // du / κ(u) = exp(s + t − log κ(t)) ds with t = −e^s
        let g = |s: f64| {
            let t = -s.exp();
            s + t - (self.log_kappa)(t)
        };
        let s0 = (-self.eta.ln()).ln();
        // beyond s = 30, t − log κ(t) cancels catastrophically in f64
        let s_max = 30.0f64.max(s0 + 10.0);
        let shells = (0..(s_max - s0).floor() as usize)
            .map(|k| {
                let lo = s0 + k as f64;
                (lo, lo + 1.0, integrate_exp(g, lo, lo + 1.0, 1e-10).log_value)
            })
            .collect();
        let table = ShellTable::analyze(shells, ShellRule::DECADE);
        let q = integrate_exp(g, s0, s_max, 1e-10);
        let outcome = match table.verdict {
            ShellVerdict::Finite if q.converged => Outcome::Pass,
            ShellVerdict::Divergent => Outcome::Fail,
            _ => Outcome::Inconclusive,
        };
        shell_evidence(
            Evidence::new(
                "kappa membership",
                outcome,
                format!("∫_0^{} 1/κ(u) du for κ(u) = {}", self.eta, self.name),
            )
            .value("integral", q.value()),
            &table,
        )
    }
}

fn shell_evidence(e: Evidence, table: &ShellTable) -> Evidence {
    let rows = table.shells.iter().map(|&(lo, hi, lm)| vec![lo, hi, lm]).collect();
    e.value("log_total", table.log_total)
        .table(&["shell_lo", "shell_hi", "ln_mass"], rows)
}

/// Log-spaced points on `(e^{-700}, RATIO_GRID_MIN)` prepended to the main
/// grid; polynomial-vs-`g` crossovers can sit far below `1e-12`.
pub const RATIO_DEEP_POINTS: usize = 100;
const RATIO_DEEP_LOG_MIN: f64 = -700.0;

fn ratio_grid(eta: f64) -> Vec<f64> {
    let lin = |a: f64, b: f64, n: usize| (0..n).map(move |k| a + (b - a) * k as f64 / (n - 1) as f64);
    let m = RATIO_GRID_MIN.ln();
    lin(RATIO_DEEP_LOG_MIN, m, RATIO_DEEP_POINTS + 1)
        .take(RATIO_DEEP_POINTS)
        .chain(lin(m, eta.ln(), RATIO_GRID_POINTS))
        .map(f64::exp)
        .collect()
}

/// `d log h / d log u` for families where it has a closed form.
fn log_h_elasticity(h: &MixingDensity, u: f64) -> Option<f64> {
    let l = u.ln();
    Some(match h.family() {
        Family::Gamma { shape, rate } => shape - 1.0 - rate * u,
        Family::InvertedGamma { alpha, gamma } => -(alpha + 1.0) + gamma / u,
        Family::LogNormal { mu, gamma } => -1.0 - (l - mu) / gamma,
        Family::Gig { v, alpha, gamma } => v - 1.0 - 0.5 * (alpha * u - gamma / u),
        Family::Frechet { alpha, gamma } => -(alpha + 1.0) + alpha * (gamma / u).powf(*alpha),
        _ => return None,
    })
}

/// Monotone-ratio test: is `h / g_{ρ,τ}` non-decreasing on `(0, η)`?
pub fn check_monotone_ratio(h: &MixingDensity, g: SurrogateG, eta: f64) -> Evidence {
    let grid = ratio_grid(eta);
    let rows: Vec<(f64, f64, f64)> = grid.iter().map(|&u| (u, h.log_density(u), g.log_g(u))).collect();
    let finite = rows.iter().filter(|r| r.1 > f64::NEG_INFINITY).count();
    let name = format!("ratio h/g monotone (rho={}, tau={}, eta={eta:e})", g.rho, g.tau);
    let mut table: Vec<Vec<f64>> = rows.iter().map(|&(u, lh, lg)| vec![u, lh - lg]).collect();

    if finite == 0 {
        return Evidence::new(name, Outcome::Pass, "h vanishes on the whole grid: ratio constant at zero")
            .tolerance(RATIO_SLACK);
    }
    // a ratio stuck at zero below some point and positive above it is still
    // non-decreasing; only a finite-to-zero step counts against it
    let mut worst = 0.0f64;
    let mut numeric_ok = true;
    for w in rows.windows(2) {
        if w[0].1 == f64::NEG_INFINITY {
            continue;
        }
        let (l0, l1) = (w[0].1 - w[0].2, w[1].1 - w[1].2);
        let slack = RATIO_SLACK * 1f64.max(w[0].1.abs()).max(w[0].2.abs());
        let drop = l0 - l1;
        if drop > slack {
            numeric_ok = false;
        }
        worst = worst.max(drop / slack);
    }
    let mut analytic_ok = true;
    let mut has_analytic = false;
    for (row, &u) in table.iter_mut().zip(&grid) {
        if let Some(el) = log_h_elasticity(h, u) {
            has_analytic = true;
            // d/d log u of log(h/g)
            let deriv = el - g.tau + 2.0 * g.rho * u.ln();
            let slack = RATIO_SLACK * 1f64.max(el.abs()).max((2.0 * g.rho * u.ln()).abs());
            if deriv < -slack {
                analytic_ok = false;
            }
            row.push(deriv);
        }
    }
    let ok = numeric_ok && analytic_ok;
    let detail = if has_analytic {
        format!(
            "grid of {} points on (e^-700, {eta:e}); numeric {}, analytic derivative sign {}",
            grid.len(),
            if numeric_ok { "non-decreasing" } else { "decreasing somewhere" },
            if analytic_ok { "non-negative" } else { "negative somewhere" }
        )
    } else {
        format!(
            "grid of {} points on (e^-700, {eta:e}); {}",
            grid.len(),
            if numeric_ok { "non-decreasing" } else { "decreasing somewhere" }
        )
    };
    let columns: &[&str] = if has_analytic {
        &["u", "log(h/g)", "dlog(h/g)/dlog u"]
    } else {
        &["u", "log(h/g)"]
    };
    Evidence::new(name, Outcome::from_bool(ok), detail)
        .tolerance(RATIO_SLACK)
        .value("worst_drop_over_slack", worst)
        .table(columns, table)
}

/// The `(ρ, τ)` the standard families admit in closed form.
pub fn family_surrogate(h: &MixingDensity) -> Option<SurrogateG> {
    match h.family() {
        Family::InvertedGamma { alpha, .. } | Family::Frechet { alpha, .. } => Some(SurrogateG {
            rho: 1.0,
            tau: -(alpha + 1.0),
        }),
        Family::Gig { v, .. } => Some(SurrogateG { rho: 1.0, tau: v - 1.0 }),
        Family::LogNormal { mu, gamma } => Some(SurrogateG {
            rho: 1.0 / (2.0 * gamma),
            tau: mu / gamma - 1.0,
        }),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneRatioSearch {
    pub found: Option<(SurrogateG, f64)>,
    pub tried: usize,
    /// The passing check, or the family-specific attempt when nothing passed.
    pub evidence: Evidence,
}

/// Family-specific `(ρ, τ)` first (with each grid η), then the fixed grid.
pub fn search_monotone_ratio(h: &MixingDensity) -> MonotoneRatioSearch {
    let mut tried = 0;
    let mut first_failure = None;
    let mut candidates: Vec<(SurrogateG, f64)> = Vec::new();
    if let Some(g) = family_surrogate(h) {
        candidates.extend(SEARCH_ETA.iter().map(|&eta| (g, eta)));
    }
    for &rho in &SEARCH_RHO {
        for &tau in &SEARCH_TAU {
            for &eta in &SEARCH_ETA {
                candidates.push((SurrogateG { rho, tau }, eta));
            }
        }
    }
    for (g, eta) in candidates {
        tried += 1;
        let e = check_monotone_ratio(h, g, eta);
        if e.passed() {
            return MonotoneRatioSearch {
                found: Some((g, eta)),
                tried,
                evidence: e,
            };
        }
        first_failure.get_or_insert(e);
    }
    let mut evidence = first_failure.expect("grid is non-empty");
    evidence.name = "ratio h/g monotone: search".into();
    evidence.outcome = Outcome::Fail;
    evidence.detail = format!("no (rho, tau, eta) among {tried} candidates passed; first attempt: {}", evidence.detail);
    MonotoneRatioSearch {
        found: None,
        tried,
        evidence,
    }
}

/// `log ∫_0^x v^{d/2} h(v) dv` on demand, accumulated over a fixed log grid
/// so repeated evaluations share work.
struct LogCumulative<'a> {
    h: &'a MixingDensity,
    half_d: f64,
    t0: f64,
    step: f64,
    /// `log ∫_0^{exp(t0 + j step)}`
    nodes: Vec<f64>,
}

impl<'a> LogCumulative<'a> {
    fn new(h: &'a MixingDensity, d: usize, x_min: f64, x_max: f64) -> Self {
        let half_d = d as f64 / 2.0;
        let step = 0.25;
        let t0 = x_min.ln() - step;
        let cells = ((x_max.ln() - t0) / step).ceil() as usize + 1;
        let g = |t: f64| (half_d + 1.0) * t + h.log_density(t.exp());
        let mut nodes = Vec::with_capacity(cells + 1);
        let mut acc = integrate_exp(g, T_MIN, t0, 1e-10).log_value;
        nodes.push(acc);
        for j in 0..cells {
            let a = t0 + step * j as f64;
            acc = log_add_exp(acc, integrate_exp(g, a, a + step, 1e-10).log_value);
            nodes.push(acc);
        }
        Self {
            h,
            half_d,
            t0,
            step,
            nodes,
        }
    }

    fn log_at(&self, x: f64) -> f64 {
        let t = x.ln();
        let j = (((t - self.t0) / self.step).floor().max(0.0) as usize).min(self.nodes.len() - 1);
        let a = self.t0 + self.step * j as f64;
        if t <= a {
            return self.nodes[j];
        }
        let g = |s: f64| (self.half_d + 1.0) * s + self.h.log_density(s.exp());
        log_add_exp(self.nodes[j], integrate_exp(g, a, t, 1e-10).log_value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedIntegralReport {
    pub zeta: f64,
    pub eta: f64,
    pub verdict: ShellVerdict,
    pub shells: ShellTable,
}

impl NestedIntegralReport {
    pub fn evidence(&self) -> Evidence {
        let outcome = match self.verdict {
            ShellVerdict::Finite => Outcome::Pass,
            ShellVerdict::Divergent => Outcome::Fail,
            ShellVerdict::Inconclusive => Outcome::Inconclusive,
        };
        shell_evidence(
            Evidence::new(
                "nested integral (g = h)",
                outcome,
                format!(
                    "∫_0^{} u^(d/2) h(u) / ∫_0^(ζu) v^(d/2) h(v) dv du with ζ = {}: {:?}",
                    self.eta, self.zeta, self.verdict
                ),
            ),
            &self.shells,
        )
    }
}

/// Nested-integral condition with dyadic-shell divergence detection.
pub fn check_nested_integral(h: &MixingDensity, d: usize, zeta: f64, eta: f64) -> Result<NestedIntegralReport> {
    if !(zeta > 1.0 && zeta < 2.0) {
        return Err(Error::InvalidParameter(format!("zeta must lie in (1, 2), got {zeta}")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    if !h.positive_near_origin() {
        return Err(Error::InvalidInput(
            "h is not strictly positive near the origin; use the zero-near-origin condition".into(),
        ));
    }
    let x_min = eta * 0.5f64.powi(MAX_SHELL as i32 + 1);
    let cum = LogCumulative::new(h, d, x_min, zeta * eta);
    let half_d = d as f64 / 2.0;
    let outer = |t: f64| {
        let u = t.exp();
        let lh = h.log_density(u);
        if lh == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        (half_d + 1.0) * t + lh - cum.log_at(zeta * u)
    };
    let mut shells = Vec::with_capacity(MAX_SHELL + 1);
    let mut log_total = f64::NEG_INFINITY;
    for k in 0..=MAX_SHELL {
        let hi = eta * 0.5f64.powi(k as i32);
        let lo = hi / 2.0;
        // once shells sit this far below the running total they are zero in
        // f64, and their integrands are differences of huge logs
        let m = if log_total - shells.last().map_or(0.0, |s: &(f64, f64, f64)| s.2) > LOG_NEGLIGIBLE {
            f64::NEG_INFINITY
        } else {
            integrate_exp_budget(outer, lo.ln(), hi.ln(), 1e-8, 200).log_value
        };
        log_total = log_add_exp(log_total, m);
        shells.push((lo, hi, m));
    }
    let shells = ShellTable::analyze(shells, ShellRule::DYADIC);
    Ok(NestedIntegralReport {
        zeta,
        eta,
        verdict: shells.verdict.clone(),
        shells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailVerdict {
    FailHolds,
    FailRefuted,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqFailReport {
    pub verdict: FailVerdict,
    /// `(u, φ(u) ν_h(u))` for `u = 10^{-2}, …, 10^{-12}`.
    pub sequence: Vec<(f64, f64)>,
}

impl EqFailReport {
    pub fn evidence(&self) -> Evidence {
        let outcome = match self.verdict {
            FailVerdict::FailHolds => Outcome::Fail,
            FailVerdict::FailRefuted => Outcome::Pass,
            FailVerdict::Inconclusive => Outcome::Inconclusive,
        };
        Evidence::new(
            "doubling-ratio divergence",
            outcome,
            format!(
                "φ(u) ν_h(u) with φ(u) = −u log u, ν_h(u) = u^(d/2) h(u) / ∫_0^(2u) v^(d/2) h(v) dv: {:?}",
                self.verdict
            ),
        )
        .table(
            &["u", "phi*nu"],
            self.sequence.iter().map(|&(u, w)| vec![u, w]).collect(),
        )
    }
}

/// Estimates `lim φ(u) ν_h(u)` as `u → 0`. Growth without bound certifies
/// divergence of the doubling-ratio integral, since `∫ 1/φ` diverges.
pub fn check_eq_fail(h: &MixingDensity, d: usize) -> EqFailReport {
    let half_d = d as f64 / 2.0;
    let sequence: Vec<(f64, f64)> = (2..=12)
        .map(|k| {
            let u = 10f64.powi(-k);
            let inner = integrate_log(|v: f64| half_d * v.ln() + h.log_density(v), 0.0, 2.0 * u).log_value;
            let lw = (-u * u.ln()).ln() + half_d * u.ln() + h.log_density(u) - inner;
            (u, lw.exp())
        })
        .collect();
    let tail: Vec<f64> = sequence[4..].iter().map(|s| s.1).collect();
    let max = sequence.iter().map(|s| s.1).fold(0.0, f64::max);
    let verdict = if tail.iter().any(|w| !w.is_finite()) {
        FailVerdict::Inconclusive
    } else if tail.windows(2).all(|w| w[1] > w[0]) {
        FailVerdict::FailHolds
    } else if tail.windows(2).all(|w| w[1] <= w[0]) && *tail.last().unwrap() < 1e-3 * max {
        FailVerdict::FailRefuted
    } else {
        FailVerdict::Inconclusive
    };
    EqFailReport { verdict, sequence }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceBound {
    pub bound: f64,
    pub log_bound: f64,
    pub eta0: f64,
    /// `∫_0^∞ u^{d/2} h`.
    pub total: f64,
    /// `J = ∫_0^{3η₀/2} u^{d/2} h`.
    pub j: f64,
}

/// Upper bound on the trace of the DA operator when `h` vanishes on `(0, η₀)`:
/// `2^{(n+2a−d−1)d/2} (∫ u^{d/2} h / J)^n`.
pub fn trace_bound_zero_origin(h: &MixingDensity, dims: Dims) -> Result<TraceBound> {
    let eta0 = match classify_origin(h).class {
        OriginClass::ZeroNearOrigin(e) if e > 0.0 => e,
        _ => return Err(Error::InvalidInput("h is not zero near the origin".into())),
    };
    let half_d = dims.d as f64 / 2.0;
    let total = match moment_integral(h, half_d) {
        MomentVerdict::Finite(v) => v,
        _ => return Err(Error::Inconclusive("∫ u^{d/2} h(u) du is not finite".into())),
    };
    // h vanishes below η₀; clipping to the support keeps the jumps at the ends
    let (s_lo, s_hi) = h.support();
    let jq = integrate_log(|u: f64| half_d * u.ln() + h.log_density(u), s_lo.max(eta0), s_hi.min(1.5 * eta0));
    if !jq.is_clean() || jq.value() <= 0.0 {
        return Err(Error::Inconclusive("J = ∫_0^{3η₀/2} u^{d/2} h(u) du is zero or unresolved".into()));
    }
    let j = jq.value();
    let (n, d, a) = (dims.n as f64, dims.d as f64, dims.a);
    let log_bound = (n + 2.0 * a - d - 1.0) * d / 2.0 * 2f64.ln() + n * (total / j).ln();
    Ok(TraceBound {
        bound: log_bound.exp(),
        log_bound,
        eta0,
        total,
        j,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaarExistence {
    /// `(d + 1 − 2a) d / 2`.
    pub exponent: f64,
    pub automatic: bool,
    pub moment: MomentVerdict,
    /// Direct check of the normalizing integral for a supplied `z`.
    pub direct: Option<Outcome>,
}

impl HaarExistence {
    pub fn exists(&self) -> bool {
        self.automatic || self.moment.is_finite() || self.direct == Some(Outcome::Pass)
    }

    pub fn summary(&self) -> String {
        let mut s = if self.automatic {
            "moment exponent (d+1−2a)d/2 = 0: existence is automatic".to_string()
        } else {
            format!("∫ u^{} h(u) du: {:?}", self.exponent, self.moment)
        };
        if let Some(o) = self.direct {
            s.push_str(&format!("; direct check for the supplied z: {o}"));
        }
        s
    }

    pub fn evidence(&self) -> Evidence {
        let outcome = if self.exists() {
            Outcome::Pass
        } else if matches!(self.moment, MomentVerdict::Divergent) && self.direct != Some(Outcome::Inconclusive) {
            Outcome::Fail
        } else {
            Outcome::Inconclusive
        };
        Evidence::new("Haar PX-DA existence", outcome, self.summary()).value("exponent", self.exponent)
    }
}

/// Moment condition (sufficient) and, given `z`, the direct normalizability
/// of `e(·; z)`.
pub fn check_haar_existence(h: &MixingDensity, n: usize, d: usize, a: f64, z: Option<&LatentVector>) -> HaarExistence {
    let exponent = crate::samplers::haar_extra_power(d, a);
    let automatic = exponent == 0.0;
    let moment = moment_integral(h, exponent);
    let direct = z.map(|z| {
        if z.len() != n {
            return Outcome::Inconclusive;
        }
        match HaarDensity::new(h, z, d, a) {
            Ok(_) => Outcome::Pass,
            Err(Error::HaarNonexistent(_)) => Outcome::Fail,
            Err(_) => Outcome::Inconclusive,
        }
    });
    HaarExistence {
        exponent,
        automatic,
        moment,
        direct,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateLimitReport {
    pub rho: f64,
    pub tau: f64,
    pub d: usize,
    /// Grid `u = 10^{-2}, …, 10^{-14}`.
    pub u: Vec<f64>,
    /// `u^{d/2} g(u)`.
    pub bounded: Vec<f64>,
    /// `κ(u) u^{d/2} g(u)`.
    pub kappa_limit: Vec<f64>,
    /// `(κ'(u) + (d/2) κ(u)/u) g(u) / g(3u/2)`.
    pub l1_sequence: Vec<f64>,
    /// `κ(u) g'(u) / g(3u/2)`.
    pub l2_sequence: Vec<f64>,
    pub bounded_non_decreasing: bool,
    pub tails_decreasing: bool,
    /// All three limit sequences below `1e-6` in magnitude for `u <= 1e-10`.
    pub below_threshold: bool,
}

impl SurrogateLimitReport {
    pub fn passed(&self) -> bool {
        self.bounded_non_decreasing && self.tails_decreasing && self.below_threshold
    }

    pub fn evidence(&self) -> Evidence {
        let rows = (0..self.u.len())
            .map(|i| {
                vec![
                    self.u[i],
                    self.bounded[i],
                    self.kappa_limit[i],
                    self.l1_sequence[i],
                    self.l2_sequence[i],
                ]
            })
            .collect();
        Evidence::new(
            format!("surrogate class membership (rho={}, tau={}, d={})", self.rho, self.tau, self.d),
            Outcome::from_bool(self.passed()),
            format!(
                "u^(d/2) g non-decreasing: {}; limit sequences eventually decreasing: {}; below 1e-6 by u = 1e-10: {}",
                self.bounded_non_decreasing, self.tails_decreasing, self.below_threshold
            ),
        )
        .tolerance(1e-6)
        .table(&["u", "u^(d/2) g", "kappa u^(d/2) g", "l1 seq", "l2 seq"], rows)
    }
}

/// Index in the `10^{-2..-14}` grid from which tail monotonicity is required.
const PROP1_TAIL_FROM: usize = 4;

/// Grid check that `g_{ρ,τ}` belongs to `C(κ, 3/2)` with `κ(u) = u (log u)²`.
pub fn verify_surrogate_limits(g: SurrogateG, d: usize) -> SurrogateLimitReport {
    let half_d = d as f64 / 2.0;
    let c = 1.5f64.ln();
    let u: Vec<f64> = (2..=14).map(|k| 10f64.powi(-k)).collect();
    let mut bounded = Vec::new();
    let mut kappa_limit = Vec::new();
    let mut l1 = Vec::new();
    let mut l2 = Vec::new();
    for &x in &u {
        let l = x.ln();
        let log_g = g.log_g(x);
        // log g(u) − log g(1.5u)
        let log_ratio = 2.0 * g.rho * c * l + g.rho * c * c - g.tau * c;
        bounded.push((half_d * l + log_g).exp());
        kappa_limit.push((x.ln() + 2.0 * l.abs().ln() + half_d * l + log_g).exp());
        l1.push(((half_d + 1.0) * l * l + 2.0 * l) * log_ratio.exp());
        l2.push(l * l * (g.tau - 2.0 * g.rho * l) * log_ratio.exp());
    }
    let non_increasing_toward_origin = |s: &[f64]| s.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let bounded_non_decreasing = non_increasing_toward_origin(&bounded[PROP1_TAIL_FROM..]);
    // strict, except that a sequence which has underflowed to zero stays there
    let decreasing = |s: &[f64]| {
        s[PROP1_TAIL_FROM..]
            .windows(2)
            .all(|w| w[1].abs() < w[0].abs() || (w[0] == 0.0 && w[1] == 0.0))
    };
    let tails_decreasing = decreasing(&kappa_limit) && decreasing(&l1) && decreasing(&l2);
    let from = u.iter().position(|&x| x <= 1e-10 * (1.0 + 1e-12)).expect("grid reaches 1e-10");
    let below_threshold = [&kappa_limit, &l1, &l2]
        .iter()
        .all(|s| s[from..].iter().all(|v| v.abs() < 1e-6));
    SurrogateLimitReport {
        rho: g.rho,
        tau: g.tau,
        d,
        u,
        bounded,
        kappa_limit,
        l1_sequence: l1,
        l2_sequence: l2,
        bounded_non_decreasing,
        tails_decreasing,
        below_threshold,
    }
}

/// Tunables for [`certify_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub zeta: f64,
    pub eta: f64,
    /// A user-supplied `(g, η)` replaces the surrogate search.
    pub surrogate: Option<(SurrogateG, f64)>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            zeta: DEFAULT_ZETA,
            eta: DEFAULT_ETA,
            surrogate: None,
        }
    }
}

pub fn certify(h: &MixingDensity, dims: Dims) -> Certificate {
    certify_with(h, dims, &CheckOptions::default())
}

/// Decision cascade: zero near origin, monotone ratio, nested integral, then
/// the origin-class criterion for geometric ergodicity, then the divergence
/// diagnostic.
pub fn certify_with(h: &MixingDensity, dims: Dims, opts: &CheckOptions) -> Certificate {
    let mut evidence = Vec::new();
    let origin = classify_origin(h);
    let mut oe = Evidence::new(
        "origin class",
        if origin.class == OriginClass::Unknown {
            Outcome::Inconclusive
        } else {
            Outcome::Pass
        },
        format!(
            "{:?} ({})",
            origin.class,
            match origin.method {
                ClassMethod::Analytic => "analytic",
                ClassMethod::Heuristic => "heuristic grid fit, not a proof",
            }
        ),
    );
    if !origin.grid.is_empty() {
        let rows = origin
            .grid
            .iter()
            .enumerate()
            .map(|(i, &(u, lh))| vec![u, lh, origin.slopes.get(i).copied().unwrap_or(f64::NAN)])
            .collect();
        oe = oe.table(&["u", "log h", "slope to next"], rows);
    }
    evidence.push(oe);
    let done = |verdict, path, evidence, trace_bound| Certificate {
        verdict,
        path,
        mixing: h.describe(),
        evidence,
        trace_bound,
    };

    if let OriginClass::ZeroNearOrigin(eta0) = origin.class {
        let bound = match trace_bound_zero_origin(h, dims) {
            Ok(b) => {
                evidence.push(
                    Evidence::new("trace bound", Outcome::Pass, format!("h vanishes on (0, {eta0})"))
                        .value("eta0", b.eta0)
                        .value("J", b.j)
                        .value("moment_d_over_2", b.total)
                        .value("log_bound", b.log_bound),
                );
                Some(b.bound)
            }
            Err(e) => {
                evidence.push(Evidence::new("trace bound", Outcome::Inconclusive, e.to_string()));
                None
            }
        };
        return done(Verdict::TraceClass, ConditionPath::ZeroNearOrigin, evidence, bound);
    }

    match opts.surrogate {
        Some((g, eta)) => {
            let e = check_monotone_ratio(h, g, eta);
            let ok = e.passed();
            evidence.push(e);
            if ok {
                return done(Verdict::TraceClass, ConditionPath::MonotoneRatio, evidence, None);
            }
        }
        None => {
            let s = search_monotone_ratio(h);
            evidence.push(s.evidence);
            if s.found.is_some() {
                return done(Verdict::TraceClass, ConditionPath::MonotoneRatio, evidence, None);
            }
        }
    }

    if h.positive_near_origin() {
        match check_nested_integral(h, dims.d, opts.zeta, opts.eta) {
            Ok(r) => {
                let finite = r.verdict == ShellVerdict::Finite;
                evidence.push(r.evidence());
                if finite {
                    return done(Verdict::TraceClass, ConditionPath::NestedIntegral, evidence, None);
                }
            }
            Err(e) => evidence.push(Evidence::new("nested integral (g = h)", Outcome::Inconclusive, e.to_string())),
        }
    }

    let threshold = dims.polynomial_threshold();
    let origin_power = match (origin.method, origin.class) {
        (ClassMethod::Analytic, OriginClass::FasterThanPolynomial) => Some((true, "faster than polynomial".to_string())),
        (ClassMethod::Analytic, OriginClass::PolynomialPower(c)) => Some((
            c > threshold,
            format!("polynomial with power c = {c} vs (n − p + 2a − d − 1)/2 = {threshold}"),
        )),
        (ClassMethod::Heuristic, _) => None,
        _ => Some((false, format!("origin class {:?}", origin.class))),
    };
    match &origin_power {
        Some((true, why)) => {
            evidence.push(
                Evidence::new("geometric ergodicity (origin class)", Outcome::Pass, why.clone()).value("threshold", threshold),
            );
            return done(Verdict::GeometricallyErgodic, ConditionPath::OriginPower, evidence, None);
        }
        Some((false, why)) => evidence.push(
            Evidence::new("geometric ergodicity (origin class)", Outcome::Fail, format!("hypothesis unmet: {why}"))
                .value("threshold", threshold),
        ),
        None => evidence.push(Evidence::new(
            "geometric ergodicity (origin class)",
            Outcome::Inconclusive,
            "origin class is only a heuristic for this density; criterion not applied",
        )),
    }

    if h.positive_near_origin() {
        let f = check_eq_fail(h, dims.d);
        let holds = f.verdict == FailVerdict::FailHolds;
        evidence.push(f.evidence());
        if holds {
            return done(Verdict::NotApplicable, ConditionPath::EqFail, evidence, None);
        }
    }
    done(Verdict::Inconclusive, ConditionPath::None, evidence, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::CustomDensity;
    use approx::assert_relative_eq;

    #[test]
    fn inverted_gamma_passes_with_family_surrogate() {
        let h = MixingDensity::inverted_gamma(2.0, 1.0).unwrap();
        let e = check_monotone_ratio(&h, SurrogateG::new(1.0, -3.0).unwrap(), 1e-2);
        assert!(e.passed(), "{e:?}");
    }

    #[test]
    fn log_normal_ratio_is_constant() {
        let (mu, gamma) = (0.4, 0.7);
        let h = MixingDensity::log_normal(mu, gamma).unwrap();
        let g = SurrogateG::new(1.0 / (2.0 * gamma), mu / gamma - 1.0).unwrap();
        let e = check_monotone_ratio(&h, g, 0.1);
        assert!(e.passed());
        let first = e.table[0][1];
        assert!(e.table.iter().all(|r| (r[1] - first).abs() < 1e-9));
    }

    #[test]
    fn gamma_never_passes_the_search() {
        let h = MixingDensity::gamma(2.0, 2.0).unwrap();
        let s = search_monotone_ratio(&h);
        assert!(s.found.is_none());
        assert_eq!(s.tried, 5 * 17 * 3);
    }

    #[test]
    fn gig_and_frechet_found() {
        let h = MixingDensity::gig(0.5, 1.0, 2.0).unwrap();
        assert!(search_monotone_ratio(&h).found.is_some());
        let h = MixingDensity::frechet(1.5, 1.0).unwrap();
        assert!(search_monotone_ratio(&h).found.is_some());
    }

    #[test]
    fn nested_integral_examples() {
        let ig = MixingDensity::inverted_gamma(2.0, 1.0).unwrap();
        assert_eq!(check_nested_integral(&ig, 2, 1.5, 0.1).unwrap().verdict, ShellVerdict::Finite);
        let g = MixingDensity::gamma(2.0, 2.0).unwrap();
        assert_eq!(check_nested_integral(&g, 2, 1.5, 0.1).unwrap().verdict, ShellVerdict::Divergent);
        let c = MixingDensity::custom(CustomDensity::iterated_log(2)).unwrap();
        assert_eq!(check_nested_integral(&c, 2, 1.5, 0.1).unwrap().verdict, ShellVerdict::Divergent);
        let sh = MixingDensity::shifted(MixingDensity::gamma(1.0, 1.0).unwrap(), 1.0).unwrap();
        assert!(check_nested_integral(&sh, 1, 1.5, 0.1).is_err());
    }

    #[test]
    fn eq_fail_examples() {
        let c = MixingDensity::custom(CustomDensity::iterated_log(1)).unwrap();
        assert_eq!(check_eq_fail(&c, 1).verdict, FailVerdict::FailHolds);
        let g = MixingDensity::gamma(2.0, 2.0).unwrap();
        assert_eq!(check_eq_fail(&g, 2).verdict, FailVerdict::FailHolds);
        let ig = MixingDensity::inverted_gamma(2.0, 1.0).unwrap();
        assert_eq!(check_eq_fail(&ig, 2).verdict, FailVerdict::FailRefuted);
    }

    #[test]
    fn uniform_trace_bound() {
        let h = MixingDensity::custom(CustomDensity::uniform(1.0, 2.0)).unwrap();
        let dims = Dims::new(5, 1, 1, 1.0);
        let b = trace_bound_zero_origin(&h, dims).unwrap();
        let total = 2.0 / 3.0 * (2f64.powf(1.5) - 1.0);
        let j = 2.0 / 3.0 * (1.5f64.powf(1.5) - 1.0);
        assert_relative_eq!(b.total, total, max_relative = 1e-8);
        assert_relative_eq!(b.j, j, max_relative = 1e-8);
        let want = 2f64.powf((5.0 + 2.0 - 2.0) / 2.0) * (total / j).powi(5);
        assert_relative_eq!(b.bound, want, max_relative = 1e-7);
    }

    #[test]
    fn trace_bound_with_all_mass_inside_j() {
        // uniform on (1, 1.4): 3η₀/2 = 1.5 covers the support
        let h = MixingDensity::custom(CustomDensity::uniform(1.0, 1.4)).unwrap();
        let dims = Dims::new(7, 2, 1, 0.5);
        let b = trace_bound_zero_origin(&h, dims).unwrap();
        assert_relative_eq!(b.bound, 2f64.powf((7.0 + 1.0 - 1.0 - 1.0) / 2.0), max_relative = 1e-8);
    }

    #[test]
    fn doubling_n_squares_the_ratio_factor() {
        let h = MixingDensity::custom(CustomDensity::uniform(1.0, 2.0)).unwrap();
        let b1 = trace_bound_zero_origin(&h, Dims::new(4, 1, 1, 1.0)).unwrap();
        let b2 = trace_bound_zero_origin(&h, Dims::new(8, 1, 1, 1.0)).unwrap();
        let f1 = b1.log_bound - (4.0 + 2.0 - 2.0) / 2.0 * 2f64.ln();
        let f2 = b2.log_bound - (8.0 + 2.0 - 2.0) / 2.0 * 2f64.ln();
        assert_relative_eq!(f2, 2.0 * f1, max_relative = 1e-12);
    }

    #[test]
    fn haar_existence_examples() {
        let g = MixingDensity::gamma(2.0, 2.0).unwrap();
        assert!(check_haar_existence(&g, 5, 2, 1.5, None).automatic);
        let r = check_haar_existence(&g, 5, 2, 0.5, None);
        assert_eq!(r.exponent, 2.0);
        // E[u²] = k(k+1)/r² for Gamma(k, r)
        match r.moment {
            MomentVerdict::Finite(v) => assert_relative_eq!(v, 1.5, max_relative = 1e-8),
            other => panic!("{other:?}"),
        }
        let f = MixingDensity::frechet(1.0, 1.0).unwrap();
        let r = check_haar_existence(&f, 5, 2, 0.5, None);
        assert_eq!(r.moment, MomentVerdict::Divergent);
        assert!(!r.exists());
    }

    #[test]
    fn kappa_membership_value() {
        let e = KappaFunction::standard().membership();
        assert!(e.passed(), "{e:?}");
        assert_relative_eq!(e.values["integral"], 1.0 / 10f64.ln(), max_relative = 1e-6);
    }

    #[test]
    fn surrogate_limits_sequences_decrease() {
        for (rho, tau, d) in [(1.0, 0.0, 2), (0.5, -3.0, 1), (2.0, 3.0, 3)] {
            let r = verify_surrogate_limits(SurrogateG::new(rho, tau).unwrap(), d);
            assert!(r.bounded_non_decreasing && r.tails_decreasing, "{r:?}");
        }
    }

    #[test]
    fn surrogate_limits_reference_values() {
        // independent closed-form evaluation at u = 1e-10, rho = 1/2, tau = -3, d = 1
        let r = verify_surrogate_limits(SurrogateG::new(0.5, -3.0).unwrap(), 1);
        let i = r.u.iter().position(|&u| (u - 1e-10).abs() < 1e-22).unwrap();
        let l = 1e-10f64.ln();
        let c = 1.5f64.ln();
        let ratio = (c * l + 0.5 * c * c + 3.0 * c).exp();
        assert_relative_eq!(r.l1_sequence[i], (1.5 * l * l + 2.0 * l) * ratio, max_relative = 1e-12);
        assert_relative_eq!(r.l1_sequence[i], 0.2423, max_relative = 1e-3);
        assert!(!r.below_threshold);
    }

    #[test]
    fn certify_cascade() {
        let dims = Dims::new(20, 2, 2, 1.5);
        let ig = MixingDensity::inverted_gamma(2.0, 1.0).unwrap();
        let c = certify(&ig, dims);
        assert_eq!((c.verdict, c.path), (Verdict::TraceClass, ConditionPath::MonotoneRatio));

        // c = 9 > (20 − 2 + 3 − 2 − 1)/2 = 9? no: need strictly greater, use shape 11
        let g = MixingDensity::gamma(11.0, 11.0).unwrap();
        let c = certify(&g, dims);
        assert_eq!((c.verdict, c.path), (Verdict::GeometricallyErgodic, ConditionPath::OriginPower));

        let g = MixingDensity::gamma(2.0, 2.0).unwrap();
        let c = certify(&g, dims);
        assert_eq!((c.verdict, c.path), (Verdict::NotApplicable, ConditionPath::EqFail));

        let p = MixingDensity::custom(CustomDensity::iterated_log(2)).unwrap();
        let c = certify(&p, dims);
        assert_eq!(c.verdict, Verdict::NotApplicable);

        let sh = MixingDensity::shifted(MixingDensity::gamma(1.0, 1.0).unwrap(), 1.0).unwrap();
        let c = certify(&sh, dims);
        assert_eq!((c.verdict, c.path), (Verdict::TraceClass, ConditionPath::ZeroNearOrigin));
        assert!(c.trace_bound.is_some());
    }
}

