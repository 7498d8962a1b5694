use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::{bracket_max, curvature_scale};
use crate::error::{Error, Result};
use crate::mixing::{Family, MixingDensity};
use crate::model::LatentVector;
use crate::quadrature::{integrate_exp, T_MAX, T_MIN};

/// Log-density drop from the mode at which the inversion grid is cut.
pub const HAAR_LOG_SPAN: f64 = 40.0;
const START_CELLS: usize = 512;
const MAX_CELLS: usize = 8192;
const GRID_TOL: f64 = 1e-4;

/// The rescaling density `e(v; z) ∝ v^{n-1+k} ∏ h(v z_i)` on `v > 0`, with
/// `k = (d + 1 - 2a) d / 2` (zero for `a = (d+1)/2`).
#[derive(Debug, Clone)]
pub struct HaarDensity {
    kind: Kind,
    /// `n - 1 + k`.
    power: f64,
    z: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Kind {
    Gamma { shape: f64, rate: f64 },
    Table(Table),
}

/// Piecewise log-linear density on a uniform grid in `t = log v`.
#[derive(Debug, Clone)]
struct Table {
    t0: f64,
    width: f64,
    /// log density (relative to the peak) at the cell edges
    log_f: Vec<f64>,
    /// cumulative mass at the right edge of each cell
    cum: Vec<f64>,
    /// grid mass relative to the quadrature mass, minus one
    normalizer_error: f64,
}

pub(crate) fn extra_power(d: usize, a: f64) -> f64 {
    let d = d as f64;
    (d + 1.0 - 2.0 * a) * d / 2.0
}

impl HaarDensity {
    pub fn new(h: &MixingDensity, z: &LatentVector, d: usize, a: f64) -> Result<Self> {
        let n = z.len();
        let power = n as f64 - 1.0 + extra_power(d, a);
        let zs = z.as_slice().to_vec();
        if let Family::Gamma { shape, rate } = h.family() {
            let shape = n as f64 * shape + extra_power(d, a);
            if !(shape > 0.0) {
                return Err(Error::HaarNonexistent(format!(
                    "e(v; z) would be Gamma with shape {shape} <= 0"
                )));
            }
            let rate = rate * zs.iter().sum::<f64>();
            return Ok(Self {
                kind: Kind::Gamma { shape, rate },
                power,
                z: zs,
            });
        }
        let mut e = Self {
            kind: Kind::Gamma { shape: 1.0, rate: 1.0 },
            power,
            z: zs,
        };
        e.kind = Kind::Table(e.build_table(h)?);
        Ok(e)
    }

    /// Unnormalized `log e(v; z)`.
    pub fn log_unnormalized(&self, h: &MixingDensity, v: f64) -> f64 {
        if !(v > 0.0) {
            return f64::NEG_INFINITY;
        }
        self.power * v.ln() + self.z.iter().map(|zi| h.log_density(v * zi)).sum::<f64>()
    }

    /// Relative mismatch between the inversion grid and quadrature (0 for
    /// the closed form).
    pub fn normalizer_error(&self) -> f64 {
        match &self.kind {
            Kind::Gamma { .. } => 0.0,
            Kind::Table(t) => t.normalizer_error,
        }
    }

    /// `Some((shape, rate))` when `e` is an exact gamma density.
    pub fn gamma_parameters(&self) -> Option<(f64, f64)> {
        match self.kind {
            Kind::Gamma { shape, rate } => Some((shape, rate)),
            Kind::Table(_) => None,
        }
    }

    fn build_table(&self, h: &MixingDensity) -> Result<Table> {
        // density of t = log v
        let f = |t: f64| self.log_unnormalized(h, t.exp()) + t;
        let (lo, hi) = h.support();
        let zmin = self.z.iter().cloned().fold(f64::INFINITY, f64::min);
        let zmax = self.z.iter().cloned().fold(0.0, f64::max);
        let t_lo = if lo > 0.0 { (lo / zmin).ln() } else { T_MIN };
        let t_hi = if hi.is_finite() { (hi / zmax).ln() } else { T_MAX };
        let (t_lo, t_hi) = (t_lo.max(T_MIN), t_hi.min(T_MAX));
        if !(t_hi > t_lo) {
            return Err(Error::HaarNonexistent("the rescaled latent vector cannot lie in the support of h".into()));
        }
        let guess = -(self.z.iter().sum::<f64>() / self.z.len() as f64).ln();
        let (t_mode, peak) = bracket_max(&f, guess, 0.5, t_lo, t_hi)
            .ok_or_else(|| Error::HaarNonexistent("e(v; z) vanishes everywhere".into()))?;
        if !peak.is_finite() {
            return Err(Error::HaarNonexistent("e(v; z) is unbounded".into()));
        }
        let w = curvature_scale(&f, t_mode);
        let cut = peak - HAAR_LOG_SPAN;
        let reach = |dir: f64, bound: f64| -> Result<f64> {
            let mut step = w;
            let mut t = t_mode;
            loop {
                let next = t + dir * step;
                if (dir > 0.0 && next >= bound) || (dir < 0.0 && next <= bound) {
                    if (bound == T_MAX && dir > 0.0) || (bound == T_MIN && dir < 0.0) {
                        if f(bound) > cut {
                            return Err(Error::HaarNonexistent(
                                "e(v; z) keeps significant mass at the edge of the representable range".into(),
                            ));
                        }
                    }
                    return Ok(bound);
                }
                if f(next) < cut {
                    return Ok(next);
                }
                t = next;
                step *= 1.5;
            }
        };
        // support endpoints are open: step just inside them
        let nudge = |t: f64| 1e-12 * (1.0 + t.abs());
        let mut right = reach(1.0, t_hi)?;
        if right == t_hi && !f(right).is_finite() {
            right -= nudge(right);
        }
        let mut left = reach(-1.0, t_lo)?;
        if left == t_lo && !f(left).is_finite() {
            left += nudge(left);
        }

        let quad = integrate_exp(&f, t_lo, t_hi, 1e-10);
        if quad.lower_open || quad.upper_open || !quad.log_value.is_finite() {
            return Err(Error::HaarNonexistent(
                "∫ t^{n-1+k} ∏ h(t z_i) dt does not converge for this z".into(),
            ));
        }
        let mut cells = START_CELLS;
        loop {
            let table = Table::build(&f, left, right, cells, peak, quad.log_value);
            if table.normalizer_error.abs() <= GRID_TOL {
                return Ok(table);
            }
            if cells >= MAX_CELLS {
                return Err(Error::Inconclusive(format!(
                    "inversion grid for e(v; z) misses the quadrature mass by {:e}",
                    table.normalizer_error
                )));
            }
            cells *= 2;
        }
    }
}

fn cell_mass(l0: f64, l1: f64, width: f64) -> f64 {
    let delta = l1 - l0;
    if delta.abs() < 1e-8 {
        width * l0.exp() * (1.0 + 0.5 * delta)
    } else {
        width * l0.exp() * delta.exp_m1() / delta
    }
}

impl Table {
    fn build<F: Fn(f64) -> f64>(f: &F, left: f64, right: f64, cells: usize, peak: f64, log_quad: f64) -> Self {
        let width = (right - left) / cells as f64;
        let log_f: Vec<f64> = (0..=cells).map(|j| f(left + width * j as f64) - peak).collect();
        let mut cum = Vec::with_capacity(cells);
        let mut acc = 0.0;
        for j in 0..cells {
            let (l0, l1) = (log_f[j], log_f[j + 1]);
            if l0.is_finite() && l1.is_finite() {
                acc += cell_mass(l0, l1, width);
            }
            cum.push(acc);
        }
        let normalizer_error = (acc.ln() + peak - log_quad).exp_m1();
        Self {
            t0: left,
            width,
            log_f,
            cum,
            normalizer_error,
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = *self.cum.last().expect("non-empty table");
        let target = rng.random::<f64>() * total;
        let j = self.cum.partition_point(|&c| c <= target).min(self.cum.len() - 1);
        let before = if j == 0 { 0.0 } else { self.cum[j - 1] };
        let r = target - before;
        let (l0, l1) = (self.log_f[j], self.log_f[j + 1]);
        let slope = (l1 - l0) / self.width;
        let base = l0.exp();
        let x = if (slope * self.width).abs() < 1e-8 {
            r / base
        } else {
            (slope * r / base).ln_1p() / slope
        };
        (self.t0 + self.width * j as f64 + x.clamp(0.0, self.width)).exp()
    }
}

/// One draw from `e(·; z)`.
pub fn sample_e<R: Rng + ?Sized>(e: &HaarDensity, rng: &mut R) -> f64 {
    match &e.kind {
        Kind::Gamma { shape, rate } => Gamma::new(*shape, 1.0 / rate)
            .expect("validated at construction")
            .sample(rng),
        Kind::Table(t) => t.draw(rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::RngStream;
    use approx::assert_relative_eq;

    #[test]
    fn gamma_closed_form_parameters() {
        let h = MixingDensity::student_t(4.0).unwrap();
        let z = LatentVector::from_slice(&[0.5, 1.0, 2.0]).unwrap();
        let e = HaarDensity::new(&h, &z, 1, 1.0).unwrap();
        let (shape, rate) = e.gamma_parameters().unwrap();
        assert_relative_eq!(shape, 3.0 * 2.0, epsilon = 1e-14);
        assert_relative_eq!(rate, 2.0 * 3.5, epsilon = 1e-14);
    }

    #[test]
    fn unnormalized_ratio_definition() {
        let h = MixingDensity::log_normal(0.1, 0.5).unwrap();
        let z = LatentVector::from_slice(&[0.4, 1.3, 0.9, 2.2]).unwrap();
        let e = HaarDensity::new(&h, &z, 2, 1.5).unwrap();
        let v = 0.8;
        let lhs = e.log_unnormalized(&h, 2.0 * v) - e.log_unnormalized(&h, v);
        let rhs = 3.0 * 2f64.ln()
            + z.as_slice()
                .iter()
                .map(|zi| h.log_density(2.0 * v * zi) - h.log_density(v * zi))
                .sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn generic_grid_matches_quadrature_and_moments() {
        let h = MixingDensity::frechet(3.0, 1.0).unwrap();
        let z = LatentVector::from_slice(&[0.7, 1.1, 0.4, 1.9, 1.0]).unwrap();
        let e = HaarDensity::new(&h, &z, 1, 1.0).unwrap();
        assert!(e.normalizer_error().abs() < 1e-4);
        let f = |t: f64| e.log_unnormalized(&h, t.exp()) + t;
        let lz = integrate_exp(f, T_MIN, T_MAX, 1e-10).log_value;
        let m1 = (integrate_exp(|t| f(t) + t, T_MIN, T_MAX, 1e-10).log_value - lz).exp();
        let m2 = (integrate_exp(|t| f(t) + 2.0 * t, T_MIN, T_MAX, 1e-10).log_value - lz).exp();
        let mut rng = RngStream::new(3, 0);
        let n = 50_000;
        let mean = (0..n).map(|_| sample_e(&e, &mut rng)).sum::<f64>() / n as f64;
        let se = ((m2 - m1 * m1) / n as f64).sqrt();
        assert!((mean - m1).abs() < 4.0 * se, "{mean} vs {m1}");
    }

    #[test]
    fn bounded_support_generic_path() {
        let h = MixingDensity::custom(crate::mixing::CustomDensity::uniform(1.0, 2.0)).unwrap();
        let z = LatentVector::from_slice(&[1.2, 1.5, 1.7]).unwrap();
        let e = HaarDensity::new(&h, &z, 1, 1.0).unwrap();
        let mut rng = RngStream::new(4, 0);
        for _ in 0..1000 {
            let v = sample_e(&e, &mut rng);
            assert!(v > 1.0 / 1.2 && v < 2.0 / 1.7, "{v}");
        }
    }

    #[test]
    fn nonpositive_gamma_shape_is_nonexistent() {
        // n shape + k = 2 * 0.5 + (2 + 1 - 2a) * 2 / 2 with a = 3 → 1 - 3 = -2
        let h = MixingDensity::gamma(0.5, 1.0).unwrap();
        let z = LatentVector::from_slice(&[1.0, 2.0]).unwrap();
        assert!(matches!(HaarDensity::new(&h, &z, 2, 3.0), Err(Error::HaarNonexistent(_))));
    }
}
