//! Mixing densities `h` on `(0, ∞)`, their origin behaviour, moment integrals
//! and the induced error density `f_h`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_log, LogQuad, ShellRule, ShellTable, ShellVerdict};

/// Tolerance on `∫ h = 1` enforced at construction.
pub const NORMALIZATION_TOL: f64 = 1e-4;

type LogFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Named custom densities that can round-trip through a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CustomPreset {
    /// Uniform on `(lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    /// `h(u) ∝ exp{(log u) log(-log u) - (d/2 + 1) log u}` on `(0, 1)`: faster
    /// than polynomial at the origin, yet the nested-integral condition fails.
    IteratedLog { d: usize },
}

/// A user supplied density given by an unnormalized log-density and declared
/// support. Normalized numerically at construction.
#[derive(Clone)]
pub struct CustomDensity {
    name: String,
    log_unnormalized: LogFn,
    support: (f64, f64),
    positive_near_origin: bool,
    preset: Option<CustomPreset>,
}

impl CustomDensity {
    /// `positive_near_origin` is the user's declaration that `h > 0` on some
    /// `(0, η)`; it cannot be verified numerically.
    pub fn new<F>(name: impl Into<String>, log_unnormalized: F, support: (f64, f64), positive_near_origin: bool) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            log_unnormalized: Arc::new(log_unnormalized),
            support,
            positive_near_origin,
            preset: None,
        }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        let mut c = Self::new(format!("uniform({lo}, {hi})"), |_| 0.0, (lo, hi), lo == 0.0);
        c.preset = Some(CustomPreset::Uniform { lo, hi });
        c
    }

    pub fn iterated_log(d: usize) -> Self {
        let half = d as f64 / 2.0;
        let mut c = Self::new(
            format!("iterated_log(d={d})"),
            move |u: f64| {
                let l = u.ln();
                l * (-l).ln() - (half + 1.0) * l
            },
            (0.0, 1.0),
            true,
        );
        c.preset = Some(CustomPreset::IteratedLog { d });
        c
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn positive_near_origin(&self) -> bool {
        self.positive_near_origin
    }

    pub fn preset(&self) -> Option<&CustomPreset> {
        self.preset.as_ref()
    }

    fn log_unnormalized(&self, u: f64) -> f64 {
        if u <= self.support.0 || u >= self.support.1 {
            f64::NEG_INFINITY
        } else {
            (self.log_unnormalized)(u)
        }
    }
}

impl fmt::Debug for CustomDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDensity")
            .field("name", &self.name)
            .field("support", &self.support)
            .field("positive_near_origin", &self.positive_near_origin)
            .finish()
    }
}

impl PartialEq for CustomDensity {
    fn eq(&self, other: &Self) -> bool {
        match (&self.preset, &other.preset) {
            (Some(a), Some(b)) => a == b,
            _ => Arc::ptr_eq(&self.log_unnormalized, &other.log_unnormalized) && self.support == other.support,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Gamma { shape: f64, rate: f64 },
    InvertedGamma { alpha: f64, gamma: f64 },
    /// `gamma` is the variance of `log u`.
    LogNormal { mu: f64, gamma: f64 },
    /// `h(u) ∝ u^{v-1} exp{-(α u + γ / u) / 2}`.
    Gig { v: f64, alpha: f64, gamma: f64 },
    /// `h(u) ∝ u^{-(α+1)} exp{-(γ/u)^α}`.
    Frechet { alpha: f64, gamma: f64 },
    /// `h(u) = inner(u - eta)` for `u > eta`, zero below.
    Shifted { inner: Box<MixingDensity>, eta: f64 },
    Custom(CustomDensity),
}

/// A normalized mixing density. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingDensity {
    family: Family,
    log_norm: f64,
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be a positive finite number, got {x}")))
    }
}

fn finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite, got {x}")))
    }
}

impl MixingDensity {
    /// `Gamma(shape, rate)`; `Gamma(ν/2, ν/2)` yields Student-t errors.
    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        positive("gamma shape", shape)?;
        positive("gamma rate", rate)?;
        let log_norm = shape * rate.ln() - ln_gamma(shape);
        Self::checked(Family::Gamma { shape, rate }, log_norm)
    }

    pub fn student_t(nu: f64) -> Result<Self> {
        Self::gamma(nu / 2.0, nu / 2.0)
    }

    pub fn inverted_gamma(alpha: f64, gamma: f64) -> Result<Self> {
        positive("inverted gamma alpha", alpha)?;
        positive("inverted gamma gamma", gamma)?;
        let log_norm = alpha * gamma.ln() - ln_gamma(alpha);
        Self::checked(Family::InvertedGamma { alpha, gamma }, log_norm)
    }

    pub fn log_normal(mu: f64, gamma: f64) -> Result<Self> {
        finite("log-normal mu", mu)?;
        positive("log-normal gamma", gamma)?;
        let log_norm = -0.5 * (2.0 * PI * gamma).ln();
        Self::checked(Family::LogNormal { mu, gamma }, log_norm)
    }

    pub fn gig(v: f64, alpha: f64, gamma: f64) -> Result<Self> {
        finite("GIG v", v)?;
        positive("GIG alpha", alpha)?;
        positive("GIG gamma", gamma)?;
        let q = integrate_log(|u: f64| (v - 1.0) * u.ln() - 0.5 * (alpha * u + gamma / u), 0.0, f64::INFINITY);
        if !q.is_clean() {
            return Err(Error::Inconclusive(format!("cannot normalize GIG({v}, {alpha}, {gamma})")));
        }
        Ok(Self {
            family: Family::Gig { v, alpha, gamma },
            log_norm: -q.log_value,
        })
    }

    pub fn frechet(alpha: f64, gamma: f64) -> Result<Self> {
        positive("Frechet alpha", alpha)?;
        positive("Frechet gamma", gamma)?;
        let log_norm = alpha.ln() + alpha * gamma.ln();
        Self::checked(Family::Frechet { alpha, gamma }, log_norm)
    }

    pub fn shifted(inner: MixingDensity, eta: f64) -> Result<Self> {
        positive("shift eta", eta)?;
        Self::checked(
            Family::Shifted {
                inner: Box::new(inner),
                eta,
            },
            0.0,
        )
    }

    pub fn custom(custom: CustomDensity) -> Result<Self> {
        let (lo, hi) = custom.support;
        if !(lo >= 0.0 && hi > lo) || lo.is_nan() {
            return Err(Error::InvalidParameter(format!("custom support ({lo}, {hi}) is not a subinterval of (0, ∞)")));
        }
        let q = integrate_log(|u| custom.log_unnormalized(u), lo, hi);
        if !q.is_clean() {
            return Err(Error::Inconclusive(format!("custom density {} is not normalizable numerically", custom.name)));
        }
        Ok(Self {
            family: Family::Custom(custom),
            log_norm: -q.log_value,
        })
    }

    fn checked(family: Family, log_norm: f64) -> Result<Self> {
        let h = Self { family, log_norm };
        let q = integrate_log(|u| h.log_density(u), 0.0, f64::INFINITY);
        let mass = q.value();
        if !q.is_clean() || (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidParameter(format!(
                "{} integrates to {mass} numerically, outside 1 ± {NORMALIZATION_TOL}",
                h.describe()
            )));
        }
        Ok(h)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Declared support `(lower, upper)`.
    pub fn support(&self) -> (f64, f64) {
        match &self.family {
            Family::Shifted { inner, eta } => {
                let (lo, hi) = inner.support();
                (lo + eta, hi + eta)
            }
            Family::Custom(c) => c.support,
            _ => (0.0, f64::INFINITY),
        }
    }

    /// Whether `h` is strictly positive on some `(0, η)`.
    pub fn positive_near_origin(&self) -> bool {
        match &self.family {
            Family::Shifted { .. } => false,
            Family::Custom(c) => c.positive_near_origin && c.support.0 == 0.0,
            _ => true,
        }
    }

    pub fn describe(&self) -> String {
        match &self.family {
            Family::Gamma { shape, rate } => format!("Gamma(shape={shape}, rate={rate})"),
            Family::InvertedGamma { alpha, gamma } => format!("InvertedGamma(alpha={alpha}, gamma={gamma})"),
            Family::LogNormal { mu, gamma } => format!("LogNormal(mu={mu}, gamma={gamma})"),
            Family::Gig { v, alpha, gamma } => format!("GIG(v={v}, alpha={alpha}, gamma={gamma})"),
            Family::Frechet { alpha, gamma } => format!("Frechet(alpha={alpha}, gamma={gamma})"),
            Family::Shifted { inner, eta } => format!("Shifted({}, eta={eta})", inner.describe()),
            Family::Custom(c) => format!("Custom({})", c.name),
        }
    }

    /// `log h(u)`; `-inf` off the support and for `u <= 0`.
    pub fn log_density(&self, u: f64) -> f64 {
        if !(u > 0.0) {
            return f64::NEG_INFINITY;
        }
        let l = u.ln();
        match &self.family {
            Family::Gamma { shape, rate } => self.log_norm + (shape - 1.0) * l - rate * u,
            Family::InvertedGamma { alpha, gamma } => self.log_norm - (alpha + 1.0) * l - gamma / u,
            Family::LogNormal { mu, gamma } => self.log_norm - l - (l - mu).powi(2) / (2.0 * gamma),
            Family::Gig { v, alpha, gamma } => self.log_norm + (v - 1.0) * l - 0.5 * (alpha * u + gamma / u),
            Family::Frechet { alpha, gamma } => self.log_norm - (alpha + 1.0) * l - (gamma / u).powf(*alpha),
            Family::Shifted { inner, eta } => {
                if u > *eta {
                    inner.log_density(u - eta)
                } else {
                    f64::NEG_INFINITY
                }
            }
            Family::Custom(c) => self.log_norm + c.log_unnormalized(u),
        }
    }

    /// Checked evaluation of `log h(u)`.
    pub fn eval_log_h(&self, u: f64) -> Result<f64> {
        if !(u > 0.0) || !u.is_finite() {
            return Err(Error::InvalidInput(format!("mixing density evaluated at u = {u}; need u > 0")));
        }
        Ok(self.log_density(u))
    }

    pub fn density(&self, u: f64) -> f64 {
        self.log_density(u).exp()
    }

    /// Key for normalizer caches built from exact parameter bits. `None` for
    /// custom densities without a preset: a closure has no stable identity.
    pub(crate) fn cache_key(&self) -> Option<Vec<u64>> {
        let mut key = Vec::new();
        self.push_key(&mut key).then_some(key)
    }

    fn push_key(&self, key: &mut Vec<u64>) -> bool {
        match &self.family {
            Family::Gamma { shape, rate } => key.extend([1, shape.to_bits(), rate.to_bits()]),
            Family::InvertedGamma { alpha, gamma } => key.extend([2, alpha.to_bits(), gamma.to_bits()]),
            Family::LogNormal { mu, gamma } => key.extend([3, mu.to_bits(), gamma.to_bits()]),
            Family::Gig { v, alpha, gamma } => key.extend([4, v.to_bits(), alpha.to_bits(), gamma.to_bits()]),
            Family::Frechet { alpha, gamma } => key.extend([5, alpha.to_bits(), gamma.to_bits()]),
            Family::Shifted { inner, eta } => {
                key.extend([6, eta.to_bits()]);
                return inner.push_key(key);
            }
            Family::Custom(c) => match &c.preset {
                Some(CustomPreset::Uniform { lo, hi }) => key.extend([7, lo.to_bits(), hi.to_bits()]),
                Some(CustomPreset::IteratedLog { d }) => key.extend([8, *d as u64]),
                None => return false,
            },
        }
        true
    }
}

/// Behaviour of `h` as `u → 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OriginClass {
    /// `h = 0` on `(0, eta0)`.
    ZeroNearOrigin(f64),
    /// `h(u) / u^c` has a positive finite limit.
    PolynomialPower(f64),
    FasterThanPolynomial,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassMethod {
    Analytic,
    /// Grid fit of `log h` against `log u`; not a proof.
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginClassification {
    pub class: OriginClass,
    pub method: ClassMethod,
    /// `(u, log h(u))` on the evidence grid (heuristic path only).
    pub grid: Vec<(f64, f64)>,
    /// Local slopes of `log h` against `log u` between grid points.
    pub slopes: Vec<f64>,
}

/// Classifies the origin behaviour of `h`.
pub fn classify_origin(h: &MixingDensity) -> OriginClassification {
    let analytic = |class| OriginClassification {
        class,
        method: ClassMethod::Analytic,
        grid: Vec::new(),
        slopes: Vec::new(),
    };
    match h.family() {
        Family::Gamma { shape, .. } => analytic(OriginClass::PolynomialPower(shape - 1.0)),
        Family::InvertedGamma { .. } | Family::LogNormal { .. } | Family::Gig { .. } | Family::Frechet { .. } => {
            analytic(OriginClass::FasterThanPolynomial)
        }
        Family::Shifted { inner, eta } => {
            let extra = match classify_origin(inner).class {
                OriginClass::ZeroNearOrigin(e) => e,
                _ => 0.0,
            };
            analytic(OriginClass::ZeroNearOrigin(eta + extra))
        }
        Family::Custom(c) if c.support.0 > 0.0 => analytic(OriginClass::ZeroNearOrigin(c.support.0)),
        Family::Custom(_) => classify_numerically(h),
    }
}

fn classify_numerically(h: &MixingDensity) -> OriginClassification {
    let grid: Vec<(f64, f64)> = (2..=10)
        .map(|k| {
            let u = 10f64.powi(-k);
            (u, h.log_density(u))
        })
        .collect();
    let finite = grid.iter().filter(|(_, l)| l.is_finite()).count();
    let mut out = OriginClassification {
        class: OriginClass::Unknown,
        method: ClassMethod::Heuristic,
        grid: grid.clone(),
        slopes: Vec::new(),
    };
    if finite == 0 {
        // no mass on the grid; locate the first positive point above it
        let (_, hi) = h.support();
        let top = hi.min(1e6);
        let mut prev = 1e-2;
        let steps = 400;
        for i in 1..=steps {
            let u = 1e-2 * (top / 1e-2).powf(i as f64 / steps as f64);
            if h.log_density(u).is_finite() {
                out.class = OriginClass::ZeroNearOrigin(prev);
                return out;
            }
            prev = u;
        }
        return out;
    }
    if finite < grid.len() {
        return out;
    }
    let slopes: Vec<f64> = grid
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0.ln() - w[0].0.ln()))
        .collect();
    let inc: Vec<f64> = slopes.windows(2).map(|w| w[1] - w[0]).collect();
    out.slopes = slopes.clone();
    let last = *slopes.last().expect("slopes");
    let n = inc.len();
    let recent = &inc[n - 4..];
    let scale = 1f64.max(last.abs());
    let ratios: Vec<f64> = recent.windows(2).map(|w| w[1] / w[0]).collect();
    if recent.iter().all(|d| d.abs() < 1e-6 * scale)
        || (recent.last().unwrap().abs() < 1e-3 * scale && ratios.iter().all(|r| r.abs() < 0.5))
    {
        let c = last;
        if c > -1.0 {
            out.class = OriginClass::PolynomialPower(c);
        }
    } else if recent.iter().all(|&d| d > 0.0) && ratios.iter().all(|&r| r >= 0.9) {
        out.class = OriginClass::FasterThanPolynomial;
    }
    out
}

/// Outcome of a moment integral `∫ u^k h(u) du`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MomentVerdict {
    Finite(f64),
    Divergent,
    Inconclusive,
}

impl MomentVerdict {
    pub fn is_finite(&self) -> bool {
        matches!(self, MomentVerdict::Finite(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub exponent: f64,
    pub verdict: MomentVerdict,
    /// `"analytic"` or `"quadrature"`.
    pub method: String,
    pub origin_shells: Option<ShellTable>,
    pub tail_shells: Option<ShellTable>,
}

/// `∫_0^∞ u^exponent h(u) du`: closed-form finiteness criteria for the
/// built-in families, quadrature with decade-shell divergence tests otherwise.
pub fn moment_integral(h: &MixingDensity, exponent: f64) -> MomentVerdict {
    moment_report(h, exponent).verdict
}

pub fn moment_report(h: &MixingDensity, exponent: f64) -> MomentReport {
    let e = exponent;
    let analytic = |verdict| MomentReport {
        exponent: e,
        verdict,
        method: "analytic".into(),
        origin_shells: None,
        tail_shells: None,
    };
    match h.family() {
        Family::Gamma { shape, rate } => analytic(if e > -shape {
            MomentVerdict::Finite((ln_gamma(shape + e) - ln_gamma(*shape) - e * rate.ln()).exp())
        } else {
            MomentVerdict::Divergent
        }),
        Family::InvertedGamma { alpha, gamma } => analytic(if e < *alpha {
            MomentVerdict::Finite((e * gamma.ln() + ln_gamma(alpha - e) - ln_gamma(*alpha)).exp())
        } else {
            MomentVerdict::Divergent
        }),
        Family::LogNormal { mu, gamma } => analytic(MomentVerdict::Finite((e * mu + 0.5 * e * e * gamma).exp())),
        Family::Frechet { alpha, gamma } => analytic(if e < *alpha {
            MomentVerdict::Finite((e * gamma.ln() + ln_gamma(1.0 - e / alpha)).exp())
        } else {
            MomentVerdict::Divergent
        }),
        Family::Gig { .. } => {
            // every moment exists; the value needs quadrature
            let q = integrate_log(|u: f64| e * u.ln() + h.log_density(u), 0.0, f64::INFINITY);
            let mut r = analytic(if q.is_clean() {
                MomentVerdict::Finite(q.value())
            } else {
                MomentVerdict::Inconclusive
            });
            r.method = "analytic finiteness, quadrature value".into();
            r
        }
        Family::Shifted { inner, eta } => {
            let tail_ok = e <= 0.0 || moment_integral(inner, e).is_finite();
            if !tail_ok {
                return analytic(MomentVerdict::Divergent);
            }
            let (lo, hi) = h.support();
            let q = integrate_log(|u: f64| e * u.ln() + h.log_density(u), lo.max(*eta), hi);
            let mut r = analytic(if q.is_clean() {
                MomentVerdict::Finite(q.value())
            } else {
                MomentVerdict::Inconclusive
            });
            r.method = "analytic finiteness, quadrature value".into();
            r
        }
        Family::Custom(_) => numeric_moment(h, e),
    }
}

/// Decade shells toward the origin: `(10^{-k-1} s, 10^{-k} s)`, `k = 0..=14`.
fn origin_decades<F: Fn(f64) -> f64>(log_f: &F, start: f64) -> ShellTable {
    let shells = (0..=14)
        .map(|k| {
            let hi = start * 10f64.powi(-k);
            let lo = hi / 10.0;
            (lo, hi, integrate_log(log_f, lo, hi).log_value)
        })
        .collect();
    ShellTable::analyze(shells, ShellRule::DECADE)
}

fn tail_decades<F: Fn(f64) -> f64>(log_f: &F, start: f64) -> ShellTable {
    let shells = (0..=14)
        .map(|k| {
            let lo = start * 10f64.powi(k);
            let hi = lo * 10.0;
            (lo, hi, integrate_log(log_f, lo, hi).log_value)
        })
        .collect();
    ShellTable::analyze(shells, ShellRule::DECADE)
}

fn numeric_moment(h: &MixingDensity, e: f64) -> MomentReport {
    let (lo, hi) = h.support();
    let log_f = |u: f64| e * u.ln() + h.log_density(u);
    let origin_shells = (lo == 0.0).then(|| origin_decades(&log_f, hi.min(1.0)));
    let tail_shells = hi.is_infinite().then(|| tail_decades(&log_f, lo.max(1.0)));
    let q: LogQuad = integrate_log(log_f, lo, hi);
    let verdicts = [&origin_shells, &tail_shells];
    let verdict = if verdicts
        .iter()
        .any(|s| s.as_ref().is_some_and(|t| t.verdict == ShellVerdict::Divergent))
    {
        MomentVerdict::Divergent
    } else if verdicts
        .iter()
        .all(|s| s.as_ref().is_none_or(|t| t.verdict == ShellVerdict::Finite))
        && q.is_clean()
    {
        MomentVerdict::Finite(q.value())
    } else {
        MomentVerdict::Inconclusive
    };
    MomentReport {
        exponent: e,
        verdict,
        method: "quadrature".into(),
        origin_shells,
        tail_shells,
    }
}

/// `log f_h` as a function of `q = εᵀε` in dimension `d`.
pub fn log_error_density_sq(h: &MixingDensity, d: usize, q: f64) -> Result<f64> {
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::InvalidInput(format!("squared norm must be finite and non-negative, got {q}")));
    }
    let half_d = d as f64 / 2.0;
    let c = -half_d * (2.0 * PI).ln();
    let (lo, hi) = h.support();
    let quad = integrate_log(|u: f64| c + half_d * u.ln() - 0.5 * u * q + h.log_density(u), lo, hi);
    if !quad.is_clean() || quad.rel_error > 1e-8 {
        return Err(Error::Inconclusive(format!(
            "error-density quadrature for {} at q = {q} did not converge (rel. error {:e})",
            h.describe(),
            quad.rel_error
        )));
    }
    Ok(quad.log_value)
}

/// `f_h(ε) = ∫ u^{d/2} (2π)^{-d/2} exp(-u εᵀε / 2) h(u) du`.
pub fn eval_error_density(h: &MixingDensity, eps: &[f64]) -> Result<f64> {
    if eps.is_empty() {
        return Err(Error::InvalidInput("error vector must have length d >= 1".into()));
    }
    let q: f64 = eps.iter().map(|e| e * e).sum();
    Ok(log_error_density_sq(h, eps.len(), q)?.exp())
}

/// Config-file representation of a mixing density: family name plus named
/// parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingSpec {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<Box<MixingSpec>>,
    #[serde(flatten)]
    pub params: BTreeMap<String, f64>,
}

impl MixingSpec {
    pub fn new(family: &str, params: &[(&str, f64)]) -> Self {
        Self {
            family: family.into(),
            inner: None,
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    fn take(&self, expected: &[&str]) -> Result<Vec<f64>> {
        for key in self.params.keys() {
            if !expected.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "unknown parameter `{key}` for family `{}` (expected {expected:?})",
                    self.family
                )));
            }
        }
        expected
            .iter()
            .map(|k| {
                self.params
                    .get(*k)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("family `{}` needs parameter `{k}`", self.family)))
            })
            .collect()
    }

    pub fn build(&self) -> Result<MixingDensity> {
        if self.inner.is_some() && self.family != "shifted" {
            return Err(Error::Config(format!("family `{}` takes no inner density", self.family)));
        }
        match self.family.as_str() {
            "gamma" => {
                let p = self.take(&["shape", "rate"])?;
                MixingDensity::gamma(p[0], p[1])
            }
            "student_t" => {
                let p = self.take(&["nu"])?;
                MixingDensity::student_t(p[0])
            }
            "inverted_gamma" => {
                let p = self.take(&["alpha", "gamma"])?;
                MixingDensity::inverted_gamma(p[0], p[1])
            }
            "lognormal" => {
                let p = self.take(&["mu", "gamma"])?;
                MixingDensity::log_normal(p[0], p[1])
            }
            "gig" => {
                let p = self.take(&["v", "alpha", "gamma"])?;
                MixingDensity::gig(p[0], p[1], p[2])
            }
            "frechet" => {
                let p = self.take(&["alpha", "gamma"])?;
                MixingDensity::frechet(p[0], p[1])
            }
            "shifted" => {
                let p = self.take(&["eta"])?;
                let inner = self
                    .inner
                    .as_ref()
                    .ok_or_else(|| Error::Config("family `shifted` needs an [inner] density".into()))?;
                MixingDensity::shifted(inner.build()?, p[0])
            }
            "uniform" => {
                let p = self.take(&["lo", "hi"])?;
                MixingDensity::custom(CustomDensity::uniform(p[0], p[1]))
            }
            "iterated_log" => {
                let p = self.take(&["d"])?;
                if p[0] < 1.0 || p[0].fract() != 0.0 {
                    return Err(Error::Config(format!("iterated_log needs integer d >= 1, got {}", p[0])));
                }
                MixingDensity::custom(CustomDensity::iterated_log(p[0] as usize))
            }
            other => Err(Error::Config(format!("unknown mixing family `{other}`"))),
        }
    }

    /// Inverse of [`MixingSpec::build`]. Fails for custom densities without a
    /// preset (their log-density is code, not data).
    pub fn from_density(h: &MixingDensity) -> Result<Self> {
        Ok(match h.family() {
            Family::Gamma { shape, rate } => Self::new("gamma", &[("shape", *shape), ("rate", *rate)]),
            Family::InvertedGamma { alpha, gamma } => Self::new("inverted_gamma", &[("alpha", *alpha), ("gamma", *gamma)]),
            Family::LogNormal { mu, gamma } => Self::new("lognormal", &[("mu", *mu), ("gamma", *gamma)]),
            Family::Gig { v, alpha, gamma } => Self::new("gig", &[("v", *v), ("alpha", *alpha), ("gamma", *gamma)]),
            Family::Frechet { alpha, gamma } => Self::new("frechet", &[("alpha", *alpha), ("gamma", *gamma)]),
            Family::Shifted { inner, eta } => {
                let mut s = Self::new("shifted", &[("eta", *eta)]);
                s.inner = Some(Box::new(Self::from_density(inner)?));
                s
            }
            Family::Custom(c) => match &c.preset {
                Some(CustomPreset::Uniform { lo, hi }) => Self::new("uniform", &[("lo", *lo), ("hi", *hi)]),
                Some(CustomPreset::IteratedLog { d }) => Self::new("iterated_log", &[("d", *d as f64)]),
                None => {
                    return Err(Error::Config(format!(
                        "custom density `{}` has no config representation",
                        c.name
                    )))
                }
            },
        })
    }
}
