use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};

fn cholesky_lower(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::InvalidParameter(format!("{what} must be square, got {:?}", m.shape())));
    }
    Cholesky::new(m.clone())
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidParameter(format!("{what} is not positive definite")))
}

/// `W ~ IW_r(m, Θ)`: `W⁻¹ ~ Wishart(m, Θ)`, so `E[W] = Θ⁻¹ / (m − r − 1)`.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(m: f64, theta: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let l = cholesky_lower(theta, "inverse-Wishart Θ")?;
    sample_inverse_wishart_cholesky(m, &l, rng)
}

/// As [`sample_inverse_wishart`], given the lower Cholesky factor of `Θ`.
pub fn sample_inverse_wishart_cholesky<R: Rng + ?Sized>(m: f64, l_theta: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let r = l_theta.nrows();
    if !(m > r as f64 - 1.0) || !m.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "inverse-Wishart degrees of freedom {m} must exceed r − 1 = {}",
            r as f64 - 1.0
        )));
    }
    // Bartlett factor of the Wishart draw W⁻¹ = (L A)(L A)ᵀ
    let mut a = DMatrix::zeros(r, r);
    for i in 0..r {
        let chi = ChiSquared::new(m - i as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let b = l_theta * a;
    let b_inv = b
        .solve_lower_triangular(&DMatrix::identity(r, r))
        .ok_or_else(|| Error::Degenerate("singular Bartlett factor".into()))?;
    let w = b_inv.tr_mul(&b_inv);
    Ok((&w + w.transpose()) * 0.5)
}

/// `Z ~ N_{r,c}(θ, A, B)`: `vec(Z)` has covariance `B ⊗ A`.
pub fn sample_matrix_normal<R: Rng + ?Sized>(
    theta: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let la = cholesky_lower(a, "matrix-normal row covariance")?;
    let lb = cholesky_lower(b, "matrix-normal column covariance")?;
    if la.nrows() != theta.nrows() || lb.nrows() != theta.ncols() {
        return Err(Error::InvalidParameter(format!(
            "matrix-normal shapes disagree: θ {:?}, A {:?}, B {:?}",
            theta.shape(),
            a.shape(),
            b.shape()
        )));
    }
    Ok(sample_matrix_normal_cholesky(theta, &la, &lb, rng))
}

/// As [`sample_matrix_normal`], given lower Cholesky factors.
pub fn sample_matrix_normal_cholesky<R: Rng + ?Sized>(
    theta: &DMatrix<f64>,
    la: &DMatrix<f64>,
    lb: &DMatrix<f64>,
    rng: &mut R,
) -> DMatrix<f64> {
    let (r, c) = theta.shape();
    let e = DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    theta + la * e * lb.transpose()
}
