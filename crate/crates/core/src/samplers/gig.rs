//! Generalized inverse Gaussian variates, density `∝ x^{λ-1} exp{-(χ/x + ψx)/2}`.
//!
//! Hörmann & Leydold (2014): ratio-of-uniforms with or without mode shift,
//! and a three-piece hat for small `λ` and `ω = √(ψχ)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Open01};

use crate::error::{Error, Result};

const ZTOL: f64 = 10.0 * f64::EPSILON;

fn mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        (((lambda - 1.0).powi(2) + omega * omega).sqrt() + (lambda - 1.0)) / omega
    } else {
        omega / (((1.0 - lambda).powi(2) + omega * omega).sqrt() + (1.0 - lambda))
    }
}

fn unif<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Open01)
}

/// Draw plus the number of rejected proposals.
pub fn sample_gig<R: Rng + ?Sized>(lambda: f64, chi: f64, psi: f64, budget: usize, rng: &mut R) -> Result<(f64, usize)> {
    if !(lambda.is_finite() && chi.is_finite() && psi.is_finite())
        || chi < 0.0
        || psi < 0.0
        || (chi == 0.0 && lambda <= 0.0)
        || (psi == 0.0 && lambda >= 0.0)
    {
        return Err(Error::InvalidParameter(format!(
            "GIG(lambda={lambda}, chi={chi}, psi={psi}) is not a proper distribution"
        )));
    }
    if chi < ZTOL {
        if lambda > 0.0 {
            let g = Gamma::new(lambda, 2.0 / psi).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            return Ok((g.sample(rng), 0));
        }
        return Err(Error::InvalidParameter(format!("GIG with chi≈0 needs lambda > 0, got {lambda}")));
    }
    if psi < ZTOL {
        if lambda < 0.0 {
            let g = Gamma::new(-lambda, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            return Ok((0.5 * chi / g.sample(rng), 0));
        }
        return Err(Error::InvalidParameter(format!("GIG with psi≈0 needs lambda < 0, got {lambda}")));
    }
    let lam = lambda.abs();
    let alpha = (chi / psi).sqrt();
    let omega = (psi * chi).sqrt();
    let (x, rejected) = if lam > 2.0 || omega > 3.0 {
        rou_shift(lam, omega, budget, rng)?
    } else if lam >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
        rou_noshift(lam, omega, budget, rng)?
    } else {
        three_piece(lam, omega, budget, rng)?
    };
    Ok((if lambda < 0.0 { alpha / x } else { alpha * x }, rejected))
}

fn exhausted(budget: usize, lambda: f64, omega: f64) -> Error {
    Error::RetryBudget {
        budget,
        context: format!("GIG(lambda={lambda}, omega={omega})"),
    }
}

fn rou_noshift<R: Rng + ?Sized>(lambda: f64, omega: f64, budget: usize, rng: &mut R) -> Result<(f64, usize)> {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let ym = ((lambda + 1.0) + ((lambda + 1.0).powi(2) + omega * omega).sqrt()) / omega;
    let um = (0.5 * (lambda + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
    for k in 0..budget {
        let u = um * unif(rng);
        let v = unif(rng);
        let x = u / v;
        if v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return Ok((x, k));
        }
    }
    Err(exhausted(budget, lambda, omega))
}

fn rou_shift<R: Rng + ?Sized>(lambda: f64, omega: f64, budget: usize, rng: &mut R) -> Result<(f64, usize)> {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);

    // extremes of (x - xm) sqrt(f(x)) are roots of y^3 + a y^2 + b y + c
    let a = -(2.0 * (lambda + 1.0) / omega + xm);
    let b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    let c = xm;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let fi = (-q / (2.0 * (-(p * p * p) / 27.0).sqrt())).clamp(-1.0, 1.0).acos();
    let fak = 2.0 * (-p / 3.0).sqrt();
    let y1 = fak * (fi / 3.0).cos() - a / 3.0;
    let y2 = fak * (fi / 3.0 + 4.0 / 3.0 * std::f64::consts::PI).cos() - a / 3.0;
    let uplus = (y1 - xm) * (t * y1.ln() - s * (y1 + 1.0 / y1) - nc).exp();
    let uminus = (y2 - xm) * (t * y2.ln() - s * (y2 + 1.0 / y2) - nc).exp();

    for k in 0..budget {
        let u = uminus + unif(rng) * (uplus - uminus);
        let v = unif(rng);
        let x = u / v + xm;
        if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return Ok((x, k));
        }
    }
    Err(exhausted(budget, lambda, omega))
}

fn three_piece<R: Rng + ?Sized>(lambda: f64, omega: f64, budget: usize, rng: &mut R) -> Result<(f64, usize)> {
    let xm = mode(lambda, omega);
    let x0 = omega / (1.0 - lambda);
    let k0 = ((lambda - 1.0) * xm.ln() - 0.5 * omega * (xm + 1.0 / xm)).exp();
    let a0 = k0 * x0;
    let (k1, a1, k2, a2);
    if x0 >= 2.0 / omega {
        k1 = 0.0;
        a1 = 0.0;
        k2 = x0.powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega;
    } else {
        k1 = (-omega).exp();
        a1 = if lambda == 0.0 {
            k1 * (2.0 / (omega * omega)).ln()
        } else {
            k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
        };
        k2 = (2.0 / omega).powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-1f64).exp() / omega;
    }
    let total = a0 + a1 + a2;
    for k in 0..budget {
        let mut v = total * unif(rng);
        let (x, hx);
        if v <= a0 {
            x = x0 * v / a0;
            hx = k0;
        } else {
            v -= a0;
            if v <= a1 {
                if lambda == 0.0 {
                    x = omega * (omega.exp() * v).exp();
                    hx = k1 / x;
                } else {
                    x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                    hx = k1 * x.powf(lambda - 1.0);
                }
            } else {
                v -= a1;
                let a = x0.max(2.0 / omega);
                x = -2.0 / omega * ((-omega / 2.0 * a).exp() - omega / (2.0 * k2) * v).ln();
                hx = k2 * (-omega / 2.0 * x).exp();
            }
        }
        let u = unif(rng) * hx;
        if u.ln() <= (lambda - 1.0) * x.ln() - omega / 2.0 * (x + 1.0 / x) {
            return Ok((x, k));
        }
    }
    Err(exhausted(budget, lambda, omega))
}
