//! Regression data, chain state and the linear-algebra kernels shared by the
//! two Gibbs samplers.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::certificate::{render_evidence, Evidence, Outcome};
use crate::error::{Error, Result};
use crate::mixing::{moment_report, MixingDensity, MomentVerdict};

/// Relative singular-value cutoff for the rank of `[X : y]`.
pub const RANK_RTOL: f64 = 1e-12;

/// Observed responses `y` (n×d), design `X` (n×p) and the prior exponent `a`
/// of `|Σ|^{-a}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    y: DMatrix<f64>,
    x: DMatrix<f64>,
    a: f64,
    rank: usize,
}

impl RegressionData {
    pub fn new(y: DMatrix<f64>, x: DMatrix<f64>, a: f64) -> Result<Self> {
        let (n, d) = y.shape();
        let (nx, p) = x.shape();
        if n == 0 || d == 0 || p == 0 {
            return Err(Error::InvalidInput(format!("empty data: y is {n}×{d}, X is {nx}×{p}")));
        }
        if nx != n {
            return Err(Error::InvalidInput(format!("y has {n} rows but X has {nx}")));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "y[{}, {}] is not finite",
                i % n,
                i / n
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "X[{}, {}] is not finite",
                i % n,
                i / n
            )));
        }
        if !a.is_finite() {
            return Err(Error::InvalidInput(format!("prior exponent a = {a} is not finite")));
        }
        let lambda = DMatrix::from_fn(n, p + d, |i, j| if j < p { x[(i, j)] } else { y[(i, j - p)] });
        let rank = numerical_rank(&lambda);
        Ok(Self { y, x, a, rank })
    }

    /// Builds `p = d = 1` data from slices.
    pub fn scalar(x: &[f64], y: &[f64], a: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_column_slice(y.len(), 1, y),
            DMatrix::from_column_slice(x.len(), 1, x),
            a,
        )
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn d(&self) -> usize {
        self.y.ncols()
    }

    /// Cached numerical rank of `[X : y]`.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Inverse-Wishart degrees of freedom `n - p + 2a - d - 1`.
    pub fn iw_degrees(&self) -> f64 {
        self.n() as f64 - self.p() as f64 + 2.0 * self.a - self.d() as f64 - 1.0
    }

    /// Ordinary least-squares coefficients `(XᵀX)⁻¹Xᵀy`.
    pub fn ols(&self) -> Result<DMatrix<f64>> {
        let xtx = self.x.tr_mul(&self.x);
        let chol = Cholesky::new(xtx).ok_or_else(|| Error::Degenerate("XᵀX is singular".into()))?;
        Ok(chol.solve(&self.x.tr_mul(&self.y)))
    }
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let cut = m.nrows().max(m.ncols()) as f64 * smax * RANK_RTOL;
    sv.iter().filter(|&&s| s > cut).count()
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Current `(β, Σ)` with `Σ` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    beta: DMatrix<f64>,
    sigma: DMatrix<f64>,
}

impl ChainState {
    pub fn new(beta: DMatrix<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::InvalidInput(format!("Σ must be square, got {:?}", sigma.shape())));
        }
        if beta.ncols() != sigma.nrows() {
            return Err(Error::InvalidInput(format!(
                "β has {} columns but Σ is {}×{}",
                beta.ncols(),
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if beta.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("state contains non-finite entries".into()));
        }
        let sigma = symmetrize(&sigma);
        if Cholesky::new(sigma.clone()).is_none() {
            return Err(Error::NotPositiveDefinite("Σ".into()));
        }
        Ok(Self { beta, sigma })
    }

    /// β = OLS, Σ = residual cross-product / n plus a 1e-6 ridge.
    pub fn ols_default(data: &RegressionData) -> Result<Self> {
        let beta = data.ols()?;
        let r = data.y() - data.x() * &beta;
        let d = data.d();
        let sigma = r.tr_mul(&r) / data.n() as f64 + DMatrix::identity(d, d) * 1e-6;
        Self::new(beta, sigma)
    }

    pub fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
}

/// Latent mixing variables, all strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(DVector<f64>);

impl LatentVector {
    pub fn new(z: DVector<f64>) -> Result<Self> {
        if let Some((i, v)) = z.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidInput(format!("z[{i}] = {v} is not positive and finite")));
        }
        Ok(Self(z))
    }

    pub fn from_slice(z: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(z))
    }

    pub fn ones(n: usize) -> Self {
        Self(DVector::from_element(n, 1.0))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Multiplies every entry by `v > 0`.
    pub fn scaled(&self, v: f64) -> Result<Self> {
        Self::new(&self.0 * v)
    }
}

/// `Ω = (XᵀZX)⁻¹`, `μ = ΩXᵀZy` and `S = yᵀZy − μᵀΩ⁻¹μ` for `Z = diag(z)`.
#[derive(Debug, Clone)]
pub struct WeightedStats {
    pub omega: DMatrix<f64>,
    pub mu: DMatrix<f64>,
    pub scale: DMatrix<f64>,
}

/// Quadratic forms `r_i = (βᵀx_i − y_i)ᵀ Σ⁻¹ (βᵀx_i − y_i)`.
pub fn compute_residuals(state: &ChainState, data: &RegressionData) -> Result<DVector<f64>> {
    let chol = Cholesky::new(state.sigma.clone())
        .ok_or_else(|| Error::Degenerate("Σ is numerically singular".into()))?;
    let resid = data.y() - data.x() * &state.beta;
    let w = chol
        .l()
        .solve_lower_triangular(&resid.transpose())
        .ok_or_else(|| Error::Degenerate("Σ Cholesky factor is singular".into()))?;
    Ok(DVector::from_iterator(w.ncols(), w.column_iter().map(|c| c.norm_squared())))
}

pub fn compute_weighted_stats(z: &LatentVector, data: &RegressionData) -> Result<WeightedStats> {
    if z.len() != data.n() {
        return Err(Error::InvalidInput(format!("z has length {} but n = {}", z.len(), data.n())));
    }
    let mut xw = data.x().clone();
    let mut yw = data.y().clone();
    for (i, &zi) in z.as_slice().iter().enumerate() {
        xw.row_mut(i).scale_mut(zi);
        yw.row_mut(i).scale_mut(zi);
    }
    let precision = symmetrize(&data.x().tr_mul(&xw));
    let chol = Cholesky::new(precision).ok_or_else(|| Error::Degenerate("XᵀZX is numerically singular".into()))?;
    let mu = chol.solve(&data.x().tr_mul(&yw));
    let omega = symmetrize(&chol.inverse());
    // (y − Xμ)ᵀ Z (y − Xμ) equals yᵀZy − μᵀΩ⁻¹μ without the cancellation
    let r = data.y() - data.x() * &mu;
    let mut rw = r.clone();
    for (i, &zi) in z.as_slice().iter().enumerate() {
        rw.row_mut(i).scale_mut(zi);
    }
    let scale = symmetrize(&r.tr_mul(&rw));
    Ok(WeightedStats { omega, mu, scale })
}

/// Pass/fail record for the four propriety conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProprietyCertificate {
    pub conditions: Vec<Evidence>,
    /// `n − p + 2a − 2d − 1 < 0`, in which case S4 follows from S3.
    pub s4_implied_by_s3: bool,
}

impl ProprietyCertificate {
    pub fn proper(&self) -> bool {
        self.conditions.iter().all(Evidence::passed)
    }

    pub fn condition(&self, name: &str) -> Option<&Evidence> {
        self.conditions.iter().find(|e| e.name == name)
    }

    pub fn report(&self) -> String {
        let mut s = format!(
            "posterior propriety: {}\n",
            if self.proper() { "established" } else { "not established" }
        );
        s.push_str(&render_evidence(&self.conditions));
        s
    }
}

fn moment_evidence(name: &str, h: &MixingDensity, exponent: f64, what: &str) -> Evidence {
    let r = moment_report(h, exponent);
    let (outcome, detail) = match r.verdict {
        MomentVerdict::Finite(v) => (Outcome::Pass, format!("{what} = {v:.6e} ({})", r.method)),
        MomentVerdict::Divergent => (Outcome::Fail, format!("{what} diverges ({})", r.method)),
        MomentVerdict::Inconclusive => (Outcome::Inconclusive, format!("{what} could not be decided ({})", r.method)),
    };
    let mut e = Evidence::new(name, outcome, detail).value("exponent", exponent);
    if let MomentVerdict::Finite(v) = r.verdict {
        e = e.value("integral", v);
    }
    e
}

/// Checks the sufficient conditions S1–S4 for a proper posterior.
pub fn validate_data(data: &RegressionData, h: &MixingDensity) -> ProprietyCertificate {
    let (n, p, d, a) = (data.n() as f64, data.p() as f64, data.d() as f64, data.a());
    let mut conditions = Vec::with_capacity(4);

    conditions.push(
        Evidence::new(
            "S1",
            Outcome::from_bool(data.rank() == data.p() + data.d()),
            format!("rank([X : y]) = {} (need p + d = {})", data.rank(), data.p() + data.d()),
        )
        .value("rank", data.rank() as f64)
        .tolerance(RANK_RTOL),
    );

    let s2_rhs = p + 2.0 * d - 2.0 * a;
    conditions.push(
        Evidence::new(
            "S2",
            Outcome::from_bool(n > s2_rhs),
            format!("n = {n} > p + 2d − 2a = {s2_rhs}"),
        )
        .value("n", n)
        .value("bound", s2_rhs),
    );

    conditions.push(moment_evidence("S3", h, d / 2.0, "∫ u^{d/2} h(u) du"));

    let k = n - p + 2.0 * a - 2.0 * d - 1.0;
    let implied = k < 0.0;
    let mut s4 = moment_evidence("S4", h, -k / 2.0, "∫ u^{-(n−p+2a−2d−1)/2} h(u) du");
    if implied && s4.outcome != Outcome::Pass && conditions[2].passed() && conditions[1].passed() {
        // with S2, 0 < -k/2 < 1/2 <= d/2, so u^{-k/2} <= 1 + u^{d/2}
        s4.outcome = Outcome::Pass;
        s4.detail = format!("implied by S3 since n − p + 2a − 2d − 1 = {k} < 0");
    } else if implied {
        s4.detail.push_str(&format!("; n − p + 2a − 2d − 1 = {k} < 0 so S3 implies S4"));
    }
    conditions.push(s4);

    ProprietyCertificate {
        conditions,
        s4_implied_by_s3: implied,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gamma() -> MixingDensity {
        MixingDensity::gamma(2.0, 2.0).unwrap()
    }

    #[test]
    fn s2_examples() {
        let x = DMatrix::from_fn(5, 2, |i, j| ((i + 1) as f64).powi(j as i32 + 1));
        let y = DMatrix::from_fn(5, 2, |i, j| ((i * 7 + j * 3) % 5) as f64 + 0.1 * i as f64);
        let data = RegressionData::new(y, x, 1.5).unwrap();
        assert!(validate_data(&data, &gamma()).condition("S2").unwrap().passed());

        let x = DMatrix::from_fn(4, 1, |i, _| i as f64 + 1.0);
        let y = DMatrix::from_fn(4, 2, |i, j| ((i + 2 * j) % 3) as f64);
        let data = RegressionData::new(y, x, 0.5).unwrap();
        assert!(!validate_data(&data, &gamma()).condition("S2").unwrap().passed());
    }

    #[test]
    fn duplicate_columns_fail_s1() {
        let x = DMatrix::from_fn(6, 2, |i, _| i as f64);
        let y = DMatrix::from_fn(6, 1, |i, _| (i * i) as f64);
        let data = RegressionData::new(y, x, 1.0).unwrap();
        let cert = validate_data(&data, &gamma());
        assert_eq!(data.rank(), 2);
        assert!(!cert.condition("S1").unwrap().passed());
        assert!(!cert.proper());
    }

    #[test]
    fn non_finite_input_rejected() {
        let x = DMatrix::from_element(3, 1, 1.0);
        let mut y = DMatrix::from_element(3, 1, 1.0);
        y[(1, 0)] = f64::NAN;
        assert!(matches!(RegressionData::new(y, x, 1.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn residual_examples() {
        let data = RegressionData::new(DMatrix::from_row_slice(1, 2, &[3.0, 4.0]), DMatrix::from_element(1, 1, 1.0), 1.0)
            .unwrap();
        let st = ChainState::new(DMatrix::zeros(1, 2), DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(compute_residuals(&st, &data).unwrap()[0], 25.0, epsilon = 1e-12);

        let data = RegressionData::new(DMatrix::from_row_slice(1, 2, &[2.0, 3.0]), DMatrix::from_element(1, 1, 1.0), 1.0)
            .unwrap();
        let st = ChainState::new(DMatrix::zeros(1, 2), DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]))).unwrap();
        assert_relative_eq!(compute_residuals(&st, &data).unwrap()[0], 10.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_fit_has_zero_residuals() {
        let x = DMatrix::from_fn(5, 2, |i, j| (i + j * j) as f64);
        let beta = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let y = &x * &beta;
        let data = RegressionData::new(y, x, 1.0).unwrap();
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let r = compute_residuals(&ChainState::new(beta, sigma).unwrap(), &data).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-20));
    }

    #[test]
    fn weighted_stats_two_points() {
        let data = RegressionData::scalar(&[1.0, 1.0], &[1.0, 3.0], 1.0).unwrap();
        let w = compute_weighted_stats(&LatentVector::ones(2), &data).unwrap();
        assert_relative_eq!(w.omega[(0, 0)], 0.5, epsilon = 1e-14);
        assert_relative_eq!(w.mu[(0, 0)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(w.scale[(0, 0)], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_weights_scale_omega_only() {
        let data = RegressionData::scalar(&[0.5, 1.0, 2.0], &[1.0, 3.0, 2.5], 1.0).unwrap();
        let w1 = compute_weighted_stats(&LatentVector::ones(3), &data).unwrap();
        let w3 = compute_weighted_stats(&LatentVector::from_slice(&[3.0; 3]).unwrap(), &data).unwrap();
        assert_relative_eq!(w3.omega[(0, 0)], w1.omega[(0, 0)] / 3.0, max_relative = 1e-14);
        assert_relative_eq!(w3.mu[(0, 0)], w1.mu[(0, 0)], max_relative = 1e-14);
    }

    #[test]
    fn state_is_symmetrized_and_checked() {
        let s = ChainState::new(DMatrix::zeros(1, 2), DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2 + 1e-13, 1.0])).unwrap();
        assert_eq!(s.sigma()[(0, 1)], s.sigma()[(1, 0)]);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(ChainState::new(DMatrix::zeros(1, 2), bad), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn latent_vector_rejects_nonpositive() {
        assert!(LatentVector::from_slice(&[1.0, 0.0]).is_err());
        assert!(LatentVector::from_slice(&[1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn s4_shortcut_recorded() {
        // k = n − p + 2a − 2d − 1 = 4, so S4 needs E[u^{-2}], infinite for Gamma(2, 2)
        let x = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
        let y = [0.8, 2.1, 2.6, 4.4, 4.9, 9.0];
        let data = RegressionData::scalar(&x, &y, 1.0).unwrap();
        let cert = validate_data(&data, &MixingDensity::student_t(4.0).unwrap());
        assert!(!cert.s4_implied_by_s3);
        assert!(cert.condition("S3").unwrap().passed());
        assert_eq!(cert.condition("S4").unwrap().outcome, Outcome::Fail);
        // a = 0.5: E[u^{-1.5}] is finite
        let data = RegressionData::scalar(&x, &y, 0.5).unwrap();
        let cert = validate_data(&data, &MixingDensity::student_t(4.0).unwrap());
        assert!(cert.proper(), "{}", cert.report());
        // n=3, p=1, d=1, a=0: k = −1
        let data = RegressionData::scalar(&[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0], 0.0).unwrap();
        let cert = validate_data(&data, &MixingDensity::student_t(4.0).unwrap());
        assert!(cert.s4_implied_by_s3);
    }
}
