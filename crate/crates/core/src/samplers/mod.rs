//! Exact and generic samplers for the conditionals of both Gibbs samplers.

mod gig;
mod haar;
mod matrix;
mod psi;
mod rng;

pub use gig::sample_gig;
pub use haar::{sample_e, HaarDensity, HAAR_LOG_SPAN};
pub(crate) use haar::extra_power as haar_extra_power;
pub use matrix::{sample_inverse_wishart, sample_inverse_wishart_cholesky, sample_matrix_normal, sample_matrix_normal_cholesky};
pub use psi::{logpdf_psi, psi_log_normalizer, sample_psi, sample_psi_counted, PsiDensity, PsiEnvelope};
pub use rng::RngStream;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::mixing::{Family, MixingDensity};
use crate::quadrature::{golden_max, T_MAX, T_MIN};

/// Per-draw retry budget for rejection samplers.
pub const RETRY_BUDGET: usize = 10_000;

/// One draw `u ~ h` for the built-in families. Custom densities are rejected.
pub fn sample_mixing<R: Rng + ?Sized>(h: &MixingDensity, rng: &mut R) -> Result<f64> {
    let gamma = |shape: f64, rng: &mut R| -> Result<f64> {
        Gamma::new(shape, 1.0)
            .map(|g| g.sample(rng))
            .map_err(|e| Error::InvalidParameter(e.to_string()))
    };
    match h.family() {
        Family::Gamma { shape, rate } => Ok(gamma(*shape, rng)? / rate),
        Family::InvertedGamma { alpha, gamma: g } => Ok(g / gamma(*alpha, rng)?),
        Family::LogNormal { mu, gamma: var } => Ok((mu + var.sqrt() * rng.sample::<f64, _>(StandardNormal)).exp()),
        Family::Gig { v, alpha, gamma: g } => sample_gig(*v, *g, *alpha, RETRY_BUDGET, rng).map(|(u, _)| u),
        Family::Frechet { alpha, gamma: g } => {
            let e: f64 = -(1.0 - rng.random::<f64>()).ln();
            Ok(g * e.powf(-1.0 / alpha))
        }
        Family::Shifted { inner, eta } => Ok(eta + sample_mixing(inner, rng)?),
        Family::Custom(c) => Err(Error::InvalidInput(format!(
            "no direct sampler for custom mixing density {}",
            c.name()
        ))),
    }
}

fn nan_to_neg_inf(x: f64) -> f64 {
    if x.is_nan() {
        f64::NEG_INFINITY
    } else {
        x
    }
}

/// Locates the maximum of a unimodal `f` on `[lo, hi]` by expanding a bracket
/// from `t0`, then golden-section search. Falls back to a coarse scan when
/// `f` is `-inf` near `t0`.
pub(crate) fn bracket_max<F: Fn(f64) -> f64>(f: &F, t0: f64, step: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    let f = |t: f64| nan_to_neg_inf(f(t));
    let lo = lo.max(T_MIN);
    let hi = hi.min(T_MAX);
    if !(hi > lo) {
        return None;
    }
    let mut t0 = t0.clamp(lo, hi);
    let mut f0 = f(t0);
    if !f0.is_finite() {
        let steps = 600;
        let (mut best, mut best_f) = (t0, f64::NEG_INFINITY);
        for i in 0..=steps {
            let t = lo + (hi - lo) * i as f64 / steps as f64;
            let ft = f(t);
            if ft > best_f {
                best = t;
                best_f = ft;
            }
        }
        if !best_f.is_finite() {
            return None;
        }
        t0 = best;
        f0 = best_f;
    }
    let step = step.max(1e-6);
    let right = (t0 + step).min(hi);
    let left = (t0 - step).max(lo);
    let (a, b) = if f(right) > f0 {
        expand(&f, t0, 1.0, step, lo, hi)
    } else if f(left) > f0 {
        expand(&f, t0, -1.0, step, lo, hi)
    } else {
        (left, right)
    };
    let (t, v, _) = golden_max(&f, a.min(b), a.max(b), 200);
    let (t, v) = if v >= f0 { (t, v) } else { (t0, f0) };
    // golden search cannot reach an endpoint maximum exactly
    for edge in [lo, hi] {
        let fe = f(edge);
        if fe > v {
            return Some((edge, fe));
        }
    }
    Some((t, v))
}

fn expand<F: Fn(f64) -> f64>(f: &F, t0: f64, dir: f64, step: f64, lo: f64, hi: f64) -> (f64, f64) {
    let mut prev = t0;
    let mut cur = (t0 + dir * step).clamp(lo, hi);
    let mut f_cur = f(cur);
    let mut h = step;
    for _ in 0..80 {
        h *= 2.0;
        let next = (cur + dir * h).clamp(lo, hi);
        let f_next = f(next);
        if f_next < f_cur || next == cur {
            return (prev, next);
        }
        prev = cur;
        cur = next;
        f_cur = f_next;
    }
    (prev, cur)
}

/// `1 / sqrt(-f'')` at `t`, or 1 when the curvature is not negative.
pub(crate) fn curvature_scale<F: Fn(f64) -> f64>(f: &F, t: f64) -> f64 {
    let h = 1e-3 * (1.0 + t.abs());
    let c = (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
    if c.is_finite() && c < 0.0 {
        (1.0 / (-c).sqrt()).clamp(1e-8, 1e3)
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bracket_finds_interior_and_edge_maxima() {
        let (t, _) = bracket_max(&|t: f64| -(t - 3.7).powi(2), 0.0, 0.5, -50.0, 50.0).unwrap();
        assert!((t - 3.7).abs() < 1e-6);
        let (t, _) = bracket_max(&|t: f64| t, 0.0, 0.5, -1.0, 2.0).unwrap();
        assert_eq!(t, 2.0);
        let g = |t: f64| if t > 10.0 { -(t - 12.0).powi(2) } else { f64::NEG_INFINITY };
        let (t, _) = bracket_max(&g, 0.0, 0.5, -20.0, 20.0).unwrap();
        assert!((t - 12.0).abs() < 1e-6);
    }
}
