use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::Rng;
use rand_distr::{Distribution, Gamma, Open01};

use super::{bracket_max, curvature_scale, sample_gig, RETRY_BUDGET};
use crate::error::{Error, Result};
use crate::mixing::{Family, MixingDensity};
use crate::quadrature::{integrate_log, T_MAX, T_MIN};

/// `ψ(u; s) = b(s) u^{d/2} e^{-su/2} h(u)`: the conditional of one latent
/// scale given its residual quadratic form `s`.
#[derive(Debug, Clone, Copy)]
pub struct PsiDensity<'a> {
    h: &'a MixingDensity,
    d: usize,
    s: f64,
}

impl<'a> PsiDensity<'a> {
    pub fn new(h: &'a MixingDensity, d: usize, s: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("dimension d must be at least 1".into()));
        }
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter(format!("ψ needs a finite s >= 0, got {s}")));
        }
        Ok(Self { h, d, s })
    }

    pub fn h(&self) -> &MixingDensity {
        self.h
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// `log(u^{d/2} e^{-su/2} h(u))`.
    pub fn log_unnormalized(&self, u: f64) -> f64 {
        0.5 * self.d as f64 * u.ln() - 0.5 * self.s * u + self.h.log_density(u)
    }

    /// Same, as a density of `t = log u` (includes the Jacobian `u`).
    fn log_in_t(&self, t: f64) -> f64 {
        let u = t.exp();
        (0.5 * self.d as f64 + 1.0) * t - 0.5 * self.s * u + self.h.log_density(u)
    }

    fn t_support(&self) -> (f64, f64) {
        let (lo, hi) = self.h.support();
        let t_lo = if lo > 0.0 { lo.ln() } else { T_MIN };
        let t_hi = if hi.is_finite() { hi.ln() } else { T_MAX };
        (t_lo.max(T_MIN), t_hi.min(T_MAX))
    }
}

type CacheKey = (Vec<u64>, usize, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

const CACHE_LIMIT: usize = 1 << 14;

/// `log ∫ u^{d/2} e^{-su/2} h(u) du`, i.e. `-log b(s)`. Cached on exact
/// parameter values.
pub fn psi_log_normalizer(psi: &PsiDensity) -> Result<f64> {
    let key = psi.h.cache_key().map(|k| (k, psi.d, psi.s.to_bits()));
    if let Some(k) = &key {
        if let Some(v) = cache().lock().expect("cache lock").get(k) {
            return Ok(*v);
        }
    }
    let (lo, hi) = psi.h.support();
    let q = integrate_log(|u| psi.log_unnormalized(u), lo, hi);
    if !q.is_clean() {
        return Err(Error::Inconclusive(format!(
            "normalizer of ψ(·; s={}) for {} did not converge",
            psi.s,
            psi.h.describe()
        )));
    }
    if let Some(k) = key {
        let mut c = cache().lock().expect("cache lock");
        if c.len() >= CACHE_LIMIT {
            c.clear();
        }
        c.insert(k, q.log_value);
    }
    Ok(q.log_value)
}

/// Normalized `log ψ(u; s)`.
pub fn logpdf_psi(psi: &PsiDensity, u: f64) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::InvalidInput(format!("ψ evaluated at u = {u}; need u > 0")));
    }
    Ok(psi.log_unnormalized(u) - psi_log_normalizer(psi)?)
}

/// One draw from `ψ(·; s)`.
pub fn sample_psi<R: Rng + ?Sized>(psi: &PsiDensity, rng: &mut R) -> Result<f64> {
    sample_psi_counted(psi, rng).map(|(u, _)| u)
}

/// Draw plus the number of rejected proposals (0 for closed forms).
pub fn sample_psi_counted<R: Rng + ?Sized>(psi: &PsiDensity, rng: &mut R) -> Result<(f64, usize)> {
    let half_d = 0.5 * psi.d as f64;
    let s = psi.s;
    match psi.h.family() {
        Family::Gamma { shape, rate } => {
            let g = Gamma::new(shape + half_d, 1.0 / (rate + 0.5 * s)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Ok((g.sample(rng), 0))
        }
        // u^{d/2-α-1} exp{-(s u + 2γ/u)/2}
        Family::InvertedGamma { alpha, gamma } => sample_gig(half_d - alpha, 2.0 * gamma, s, RETRY_BUDGET, rng),
        Family::Gig { v, alpha, gamma } => sample_gig(v + half_d, *gamma, alpha + s, RETRY_BUDGET, rng),
        _ => PsiEnvelope::new(psi)?.draw(rng),
    }
}

/// Ratio-of-uniforms envelope for `ψ` on `t = log u`, reusable for many
/// draws at the same `s`.
#[derive(Debug, Clone)]
pub struct PsiEnvelope<'a> {
    psi: PsiDensity<'a>,
    t_mode: f64,
    log_peak: f64,
    v_minus: f64,
    v_plus: f64,
}

impl<'a> PsiEnvelope<'a> {
    pub fn new(psi: &PsiDensity<'a>) -> Result<Self> {
        let f = |t: f64| psi.log_in_t(t);
        let (lo, hi) = psi.t_support();
        // the mode of u^{d/2+1} e^{-su/2} alone is at u = (d+2)/s
        let guess = if psi.s > 0.0 {
            ((psi.d as f64 + 2.0) / psi.s).ln()
        } else {
            0.0
        };
        let (t_mode, log_peak) = bracket_max(&f, guess, 0.5, lo, hi).ok_or_else(|| {
            Error::Inconclusive(format!("ψ(·; s={}) for {} has no finite mode", psi.s, psi.h.describe()))
        })?;
        let w = curvature_scale(&f, t_mode);
        let side = |dir: f64| -> f64 {
            let g = |t: f64| (dir * (t - t_mode)).ln() + 0.5 * (f(t) - log_peak);
            let (a, b) = if dir > 0.0 { (t_mode, hi) } else { (lo, t_mode) };
            if !(b > a) {
                return 0.0;
            }
            match bracket_max(&g, t_mode + dir * w, w, a, b) {
                Some((_, m)) if m.is_finite() => m.exp(),
                _ => 0.0,
            }
        };
        let v_plus = side(1.0);
        let v_minus = -side(-1.0);
        if !(v_plus - v_minus > 0.0) {
            return Err(Error::Inconclusive(format!(
                "degenerate ratio-of-uniforms envelope for ψ(·; s={})",
                psi.s
            )));
        }
        Ok(Self {
            psi: *psi,
            t_mode,
            log_peak,
            v_minus,
            v_plus,
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, usize)> {
        for k in 0..RETRY_BUDGET {
            let u: f64 = rng.sample(Open01);
            let v = self.v_minus + (self.v_plus - self.v_minus) * rng.random::<f64>();
            let t = self.t_mode + v / u;
            if 2.0 * u.ln() <= self.psi.log_in_t(t) - self.log_peak {
                return Ok((t.exp(), k));
            }
        }
        Err(Error::RetryBudget {
            budget: RETRY_BUDGET,
            context: format!("generic ψ sampler, s = {}, h = {}", self.psi.s, self.psi.h.describe()),
        })
    }
}
