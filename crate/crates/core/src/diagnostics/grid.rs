//! Brute-force grid posterior for the scalar model (p = d = 1).

use serde::{Deserialize, Serialize};

use super::stats::{pairwise_sum, Summary};
use crate::chains::ChainOutput;
use crate::error::{Error, Result};
use crate::mixing::{log_error_density_sq, MixingDensity};
use crate::model::RegressionData;

/// Number of outer rows and columns audited for leaked mass.
pub const BOUNDARY_BAND: usize = 5;
pub const BOUNDARY_TOL: f64 = 1e-6;
/// Bound on the edge-band share of the second moments the oracle reports;
/// heavy tails can leave these unconverged while the mass audit passes.
pub const MOMENT_TAIL_TOL: f64 = 1e-5;
pub const MAX_ORACLE_N: usize = 12;

/// Grid layout. `log σ` nodes are uniform on `[log σ̂ − below, log σ̂ + above]`;
/// `β` nodes are `β̂ + c sinh(u)` with `u` uniform, knee `c = knee · SE`, and
/// half-width `se_multiple · SE · e^{above}`, because the posterior spread of
/// `β` grows in proportion to `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub beta_nodes: usize,
    pub log_sigma_nodes: usize,
    /// Overrides the default `β` window; nodes stay sinh-spaced about its
    /// midpoint.
    pub beta_range: Option<(f64, f64)>,
    /// Overrides the default `log σ` window.
    pub log_sigma_range: Option<(f64, f64)>,
    pub se_multiple: f64,
    pub log_sigma_below: f64,
    pub log_sigma_above: f64,
    pub knee: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            beta_nodes: 801,
            log_sigma_nodes: 601,
            beta_range: None,
            log_sigma_range: None,
            se_multiple: 20.0,
            log_sigma_below: 6.0,
            log_sigma_above: 14.0,
            knee: 0.1,
        }
    }
}

/// `log f(ε)` for scalar errors as a function of `q = ε²`, tabulated on a
/// uniform grid in `log q` and interpolated with four-point Lagrange cubics.
#[derive(Debug, Clone)]
pub struct ErrorDensityTable {
    t0: f64,
    step: f64,
    values: Vec<f64>,
    at_zero: f64,
}

impl ErrorDensityTable {
    const LOG_Q_MIN: f64 = -27.631021115928547; // ln 1e-12
    const LOG_Q_MAX: f64 = 27.631021115928547;
    const NODES: usize = 4097;

    pub fn new(h: &MixingDensity) -> Result<Self> {
        let step = (Self::LOG_Q_MAX - Self::LOG_Q_MIN) / (Self::NODES - 1) as f64;
        let values = (0..Self::NODES)
            .map(|k| log_error_density_sq(h, 1, (Self::LOG_Q_MIN + step * k as f64).exp()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            t0: Self::LOG_Q_MIN,
            step,
            values,
            at_zero: log_error_density_sq(h, 1, 0.0)?,
        })
    }

    pub fn log_f(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return self.at_zero;
        }
        let t = q.ln();
        let n = self.values.len();
        if t <= self.t0 {
            // log f is smooth in q at 0; below 1e-12 the difference is below rounding
            return self.values[0];
        }
        let x = (t - self.t0) / self.step;
        if x >= (n - 1) as f64 {
            let slope = (self.values[n - 1] - self.values[n - 2]) / self.step;
            return self.values[n - 1] + slope * (t - self.t0 - self.step * (n - 1) as f64);
        }
        let k = (x.floor() as usize).clamp(1, n - 3);
        let s = x - k as f64;
        let (y0, y1, y2, y3) = (self.values[k - 1], self.values[k], self.values[k + 1], self.values[k + 2]);
        // Lagrange basis on nodes −1, 0, 1, 2
        let l0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
        let l1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
        let l2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
        let l3 = (s + 1.0) * s * (s - 1.0) / 6.0;
        l0 * y0 + l1 * y1 + l2 * y2 + l3 * y3
    }
}

/// Normalized posterior mass on a `(β, log σ)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPosterior {
    pub beta: Vec<f64>,
    pub log_sigma: Vec<f64>,
    /// Row-major in `β`: `mass[i * log_sigma.len() + j]`.
    pub mass: Vec<f64>,
    pub boundary_mass: f64,
    /// Largest edge-band share of `E[β²]` or `E[σ⁴]`.
    pub moment_tail: f64,
}

/// Posterior moments used as the reference for chain output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleMoments {
    pub beta_mean: f64,
    pub beta_sd: f64,
    pub sigma2_mean: f64,
    pub sigma2_sd: f64,
}

fn uniform(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

struct Ranges {
    beta_centre: f64,
    beta_halfwidth: f64,
    knee: f64,
    log_sigma: (f64, f64),
}

/// Centred on OLS and `log σ̂`; SE is the larger of the classical and
/// heteroskedasticity-consistent (HC0) standard errors.
fn default_ranges(data: &RegressionData, spec: &GridSpec) -> Result<Ranges> {
    let x = data.x().column(0);
    let y = data.y().column(0);
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let b = data.ols()?[(0, 0)];
    let e: Vec<f64> = x.iter().zip(y.iter()).map(|(xi, yi)| yi - b * xi).collect();
    let rss: f64 = e.iter().map(|v| v * v).sum();
    let dof = (data.n() - 1).max(1) as f64;
    let sigma_hat = (rss / dof).sqrt();
    let se_classic = sigma_hat / sxx.sqrt();
    let se_hc0 = x.iter().zip(&e).map(|(xi, ei)| (xi * ei).powi(2)).sum::<f64>().sqrt() / sxx;
    let se = se_classic.max(se_hc0);
    if !(se > 0.0 && sigma_hat > 0.0) {
        return Err(Error::Degenerate("OLS fit is exact; the default grid ranges are undefined".into()));
    }
    let log_sigma = spec.log_sigma_range.unwrap_or((
        sigma_hat.ln() - spec.log_sigma_below,
        sigma_hat.ln() + spec.log_sigma_above,
    ));
    let (beta_centre, beta_halfwidth) = match spec.beta_range {
        Some((lo, hi)) => (0.5 * (lo + hi), 0.5 * (hi - lo)),
        None => (b, spec.se_multiple * se * (log_sigma.1 - sigma_hat.ln()).exp()),
    };
    Ok(Ranges {
        beta_centre,
        beta_halfwidth,
        knee: spec.knee * se,
        log_sigma,
    })
}

/// Share of the mass, and of `E[β²]` and `E[σ⁴]`, within `BOUNDARY_BAND`
/// nodes of each edge.
fn audit(beta: &[f64], log_sigma: &[f64], mass: &[f64]) -> ([f64; 4], f64, f64, f64) {
    let (nb, ns) = (beta.len(), log_sigma.len());
    let band = |i: usize, lim: usize| i < BOUNDARY_BAND || i >= lim - BOUNDARY_BAND;
    let mut edge = [0.0f64; 4];
    let mut boundary = Vec::new();
    let (mut b2, mut b2_edge, mut s4, mut s4_edge) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..nb {
        for j in 0..ns {
            let m = mass[i * ns + j];
            let (vb, vs) = (m * beta[i] * beta[i], m * (4.0 * log_sigma[j]).exp());
            b2.push(vb);
            s4.push(vs);
            if band(i, nb) {
                b2_edge.push(vb);
            }
            if band(j, ns) {
                s4_edge.push(vs);
            }
            if band(i, nb) || band(j, ns) {
                boundary.push(m);
                if i < BOUNDARY_BAND {
                    edge[0] += m;
                }
                if i >= nb - BOUNDARY_BAND {
                    edge[1] += m;
                }
                if j < BOUNDARY_BAND {
                    edge[2] += m;
                }
                if j >= ns - BOUNDARY_BAND {
                    edge[3] += m;
                }
            }
        }
    }
    (
        edge,
        pairwise_sum(&boundary),
        pairwise_sum(&b2_edge) / pairwise_sum(&b2),
        pairwise_sum(&s4_edge) / pairwise_sum(&s4),
    )
}

/// Evaluates `log f(y | β, σ²)` plus the prior on the grid (with the
/// `σ² → log σ` Jacobian), weights each node by its `β` spacing
/// `c cosh(u) Δu`, exponentiates after max-subtraction and normalizes.
pub fn grid_posterior_oracle(data: &RegressionData, h: &MixingDensity, spec: &GridSpec) -> Result<GridPosterior> {
    if data.p() != 1 || data.d() != 1 {
        return Err(Error::InvalidInput(format!(
            "the grid oracle requires p = d = 1, got p = {}, d = {}",
            data.p(),
            data.d()
        )));
    }
    if data.n() > MAX_ORACLE_N {
        return Err(Error::InvalidInput(format!("the grid oracle supports n <= {MAX_ORACLE_N}, got {}", data.n())));
    }
    if spec.beta_nodes < 4 * BOUNDARY_BAND || spec.log_sigma_nodes < 4 * BOUNDARY_BAND {
        return Err(Error::InvalidInput(format!("grid needs at least {} nodes per axis", 4 * BOUNDARY_BAND)));
    }
    let r = default_ranges(data, spec)?;
    let (s_lo, s_hi) = r.log_sigma;
    if !(r.beta_halfwidth > 0.0 && r.knee > 0.0 && s_hi > s_lo) {
        return Err(Error::InvalidInput("empty grid range".into()));
    }
    let table = ErrorDensityTable::new(h)?;
    let u_max = (r.beta_halfwidth / r.knee).asinh();
    let u = uniform(-u_max, u_max, spec.beta_nodes);
    let beta: Vec<f64> = u.iter().map(|v| r.beta_centre + r.knee * v.sinh()).collect();
    let log_jac: Vec<f64> = u.iter().map(|v| v.cosh().ln()).collect();
    let log_sigma = uniform(s_lo, s_hi, spec.log_sigma_nodes);
    let x: Vec<f64> = data.x().column(0).iter().copied().collect();
    let y: Vec<f64> = data.y().column(0).iter().copied().collect();
    let n = x.len() as f64;
    let a = data.a();

    let ns = log_sigma.len();
    let mut logp = Vec::with_capacity(beta.len() * ns);
    for (&b, &lj) in beta.iter().zip(&log_jac) {
        for &t in &log_sigma {
            let inv_var = (-2.0 * t).exp();
            let loglik: f64 = x
                .iter()
                .zip(&y)
                .map(|(xi, yi)| table.log_f((yi - b * xi).powi(2) * inv_var))
                .sum::<f64>()
                - n * t;
            logp.push(loglik + (2.0 - 2.0 * a) * t + lj);
        }
    }
    let peak = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(Error::Degenerate("posterior is zero or infinite everywhere on the grid".into()));
    }
    let w: Vec<f64> = logp.iter().map(|l| (l - peak).exp()).collect();
    let total = pairwise_sum(&w);
    let mass: Vec<f64> = w.iter().map(|v| v / total).collect();

    let (edge, boundary_mass, beta_tail, sigma_tail) = audit(&beta, &log_sigma, &mass);
    if boundary_mass > BOUNDARY_TOL {
        let names = ["lower β", "upper β", "lower log σ", "upper log σ"];
        let worst = (0..4).max_by(|&p, &q| edge[p].total_cmp(&edge[q])).unwrap();
        return Err(Error::GridTooSmall {
            boundary_mass,
            suggestion: format!(
                "most leaked mass ({:e}) is at the {} edge; widen that range",
                edge[worst], names[worst]
            ),
        });
    }
    if beta_tail > MOMENT_TAIL_TOL || sigma_tail > MOMENT_TAIL_TOL {
        return Err(Error::GridTooSmall {
            boundary_mass,
            suggestion: format!(
                "the outer bands hold {beta_tail:e} of E[β²] and {sigma_tail:e} of E[σ⁴] (limit {MOMENT_TAIL_TOL:e}); \
                 raise se_multiple or log_sigma_above"
            ),
        });
    }
    Ok(GridPosterior {
        beta,
        log_sigma,
        mass,
        boundary_mass,
        moment_tail: beta_tail.max(sigma_tail),
    })
}

impl GridPosterior {
    pub fn total_mass(&self) -> f64 {
        pairwise_sum(&self.mass)
    }

    /// Smallest gap between `β` nodes (at the centre of the sinh grid).
    pub fn beta_spacing(&self) -> f64 {
        self.beta.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    pub fn beta_marginal(&self) -> Vec<f64> {
        let ns = self.log_sigma.len();
        self.mass.chunks_exact(ns).map(pairwise_sum).collect()
    }

    pub fn log_sigma_marginal(&self) -> Vec<f64> {
        let ns = self.log_sigma.len();
        (0..ns)
            .map(|j| pairwise_sum(&self.mass.iter().skip(j).step_by(ns).copied().collect::<Vec<_>>()))
            .collect()
    }

    fn moments(values: &[f64], weights: &[f64]) -> (f64, f64) {
        let m = pairwise_sum(&values.iter().zip(weights).map(|(v, w)| v * w).collect::<Vec<_>>());
        let v = pairwise_sum(&values.iter().zip(weights).map(|(x, w)| (x - m).powi(2) * w).collect::<Vec<_>>());
        (m, v.sqrt())
    }

    pub fn oracle_moments(&self) -> OracleMoments {
        let (beta_mean, beta_sd) = Self::moments(&self.beta, &self.beta_marginal());
        let s2: Vec<f64> = self.log_sigma.iter().map(|t| (2.0 * t).exp()).collect();
        let (sigma2_mean, sigma2_sd) = Self::moments(&s2, &self.log_sigma_marginal());
        OracleMoments {
            beta_mean,
            beta_sd,
            sigma2_mean,
            sigma2_sd,
        }
    }

    /// Marginal quantile of `β`, linear between nodes of the cumulative mass.
    pub fn beta_quantile(&self, q: f64) -> f64 {
        let m = self.beta_marginal();
        let mut acc = 0.0;
        for (k, &w) in m.iter().enumerate() {
            if acc + w >= q {
                let frac = if w > 0.0 { (q - acc) / w } else { 0.0 };
                let lo = if k == 0 { self.beta[0] } else { self.beta[k - 1] };
                return lo + frac * (self.beta[k] - lo);
            }
            acc += w;
        }
        *self.beta.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub name: String,
    pub estimate: f64,
    pub mcse: f64,
    pub oracle: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub rows: Vec<AgreementRow>,
}

impl AgreementReport {
    pub fn max_abs_z(&self) -> f64 {
        self.rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max)
    }

    pub fn within(&self, k: f64) -> bool {
        self.rows.iter().all(|r| r.z.abs() <= k)
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:<12} {:>14} {:>12} {:>14} {:>8}\n", "quantity", "chain", "mcse", "oracle", "z");
        for r in &self.rows {
            s.push_str(&format!(
                "{:<12} {:>14.6} {:>12.3e} {:>14.6} {:>8.3}\n",
                r.name, r.estimate, r.mcse, r.oracle, r.z
            ));
        }
        s
    }
}

/// Chain means and SDs of `β` and `σ²` against the oracle, in MCSE units.
pub fn oracle_agreement(output: &ChainOutput, oracle: &OracleMoments) -> Result<AgreementReport> {
    let beta = Summary::of(&output.beta_trace(0, 0))?;
    let s2 = Summary::of(&output.sigma_trace(0, 0))?;
    let row = |name: &str, est: f64, se: f64, or: f64| AgreementRow {
        name: name.into(),
        estimate: est,
        mcse: se,
        oracle: or,
        z: (est - or) / se,
    };
    Ok(AgreementReport {
        rows: vec![
            row("beta_mean", beta.mean, beta.mean_mcse, oracle.beta_mean),
            row("beta_sd", beta.sd, beta.sd_mcse, oracle.beta_sd),
            row("sigma2_mean", s2.mean, s2.mean_mcse, oracle.sigma2_mean),
            row("sigma2_sd", s2.sd, s2.sd_mcse, oracle.sigma2_sd),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::distribution::{Continuous, StudentsT};

    #[test]
    fn gamma_mixing_factor_is_student_t() {
        let h = MixingDensity::student_t(4.0).unwrap();
        let t4 = StudentsT::new(0.0, 1.0, 4.0).unwrap();
        let table = ErrorDensityTable::new(&h).unwrap();
        for e in [0.0, 1e-4, 0.3, 1.0, 2.5, 7.0, 40.0, 900.0] {
            let exact = t4.ln_pdf(e);
            assert!((log_error_density_sq(&h, 1, e * e).unwrap() - exact).abs() < 1e-6, "quadrature at {e}");
            assert!((table.log_f(e * e) - exact).abs() < 1e-6, "table at {e}");
        }
    }

    fn toy() -> RegressionData {
        RegressionData::scalar(&[0.5, 1.0, 1.5, 2.0, 2.5, 3.0], &[0.8, 2.1, 2.6, 4.4, 4.9, 9.0], 1.0).unwrap()
    }

    #[test]
    fn mass_normalized_and_refinement_stable() {
        let h = MixingDensity::student_t(4.0).unwrap();
        let coarse = grid_posterior_oracle(&toy(), &h, &GridSpec::default()).unwrap();
        assert!((coarse.total_mass() - 1.0).abs() < 1e-10);
        let fine = grid_posterior_oracle(
            &toy(),
            &h,
            &GridSpec {
                beta_nodes: 1601,
                log_sigma_nodes: 1201,
                ..GridSpec::default()
            },
        )
        .unwrap();
        let (c, f) = (coarse.oracle_moments(), fine.oracle_moments());
        for (x, y) in [
            (c.beta_mean, f.beta_mean),
            (c.beta_sd, f.beta_sd),
            (c.sigma2_mean, f.sigma2_mean),
            (c.sigma2_sd, f.sigma2_sd),
        ] {
            assert_relative_eq!(x, y, max_relative = 1e-6);
        }
    }

    #[test]
    fn symmetric_data_centres_beta() {
        let data = RegressionData::scalar(&[1.0, 1.0, 1.0], &[-1.5, 0.0, 1.5], 3.0).unwrap();
        let h = MixingDensity::student_t(4.0).unwrap();
        let g = grid_posterior_oracle(&data, &h, &GridSpec::default()).unwrap();
        let m = g.oracle_moments();
        assert!(m.beta_mean.abs() < 1e-10, "{m:?}");
        assert_relative_eq!(g.beta_quantile(0.5), 0.0, epsilon = g.beta_spacing());
    }

    #[test]
    fn truncated_sigma_range_fails_the_moment_audit() {
        let h = MixingDensity::student_t(4.0).unwrap();
        let spec = GridSpec {
            log_sigma_above: 6.0,
            ..GridSpec::default()
        };
        match grid_posterior_oracle(&toy(), &h, &spec) {
            Err(Error::GridTooSmall { boundary_mass, suggestion }) => {
                assert!(boundary_mass < BOUNDARY_TOL);
                assert!(suggestion.contains("E[σ⁴]"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn narrow_grid_is_rejected() {
        let h = MixingDensity::student_t(4.0).unwrap();
        let spec = GridSpec {
            beta_range: Some((2.0, 2.5)),
            ..GridSpec::default()
        };
        match grid_posterior_oracle(&toy(), &h, &spec) {
            Err(Error::GridTooSmall { suggestion, .. }) => assert!(suggestion.contains("β")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn requires_scalar_model() {
        let data = RegressionData::new(
            nalgebra::DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 3.5, 4.0]),
            nalgebra::DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]),
            1.0,
        )
        .unwrap();
        let h = MixingDensity::student_t(4.0).unwrap();
        assert!(grid_posterior_oracle(&data, &h, &GridSpec::default()).is_err());
    }
}
