//! Browser bindings for scalemix. Each exported function takes plain
//! strings and numbers and returns a JSON document; the `*_json` functions
//! hold the logic and run natively as well.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use scalemix::certificate::{Certificate, Evidence};
use scalemix::chains::{run_chain, Algorithm, ChainConfig, ChainOutput};
use scalemix::checker::{certify, Dims};
use scalemix::cli::io::parse_matrix;
use scalemix::diagnostics::{autocorr_compare, AutocorrReport, Functional};
use scalemix::mixing::{log_error_density_sq, MixingDensity, MixingSpec};
use scalemix::model::{validate_data, RegressionData};

/// Longest trace shipped back to the page.
const TRACE_POINTS: usize = 2000;

#[derive(Debug, Serialize)]
pub struct Curves {
    pub mixing: String,
    pub u: Vec<f64>,
    pub h: Vec<f64>,
    /// Radius `‖ε‖` for `f`.
    pub r: Vec<f64>,
    /// Error density along a ray, with the standard normal for comparison.
    pub f: Vec<f64>,
    pub normal: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct CertifyResult {
    pub certificate: Certificate,
    pub report: String,
}

#[derive(Debug, Serialize)]
pub struct Trace {
    pub da: Vec<f64>,
    pub pxda: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct ChainsResult {
    pub propriety: Vec<Evidence>,
    pub retained: usize,
    pub beta: Trace,
    pub sigma: Trace,
    pub autocorr_beta: AutocorrReport,
    pub autocorr_sigma: AutocorrReport,
}

fn density(spec: &str) -> Result<MixingDensity, String> {
    let spec: MixingSpec = serde_json::from_str(spec).map_err(|e| format!("mixing spec: {e}"))?;
    spec.build().map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// `h` on a log grid over `[u_min, u_max]` and the `d`-variate error density
/// along one axis for radii in `[0, r_max]`.
pub fn mixing_curves_json(spec: &str, d: usize, u_min: f64, u_max: f64, r_max: f64, points: usize) -> Result<String, String> {
    if !(u_min > 0.0 && u_max > u_min && r_max > 0.0 && points >= 2 && d >= 1) {
        return Err("need 0 < u_min < u_max, r_max > 0, d >= 1 and at least 2 points".into());
    }
    let h = density(spec)?;
    let step = (u_max / u_min).ln() / (points - 1) as f64;
    let u: Vec<f64> = (0..points).map(|i| u_min * (step * i as f64).exp()).collect();
    let hv = u.iter().map(|&x| h.density(x)).collect();
    let r: Vec<f64> = (0..points).map(|i| r_max * i as f64 / (points - 1) as f64).collect();
    let f = r
        .iter()
        .map(|&x| log_error_density_sq(&h, d, x * x).map(f64::exp))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let norm = (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0);
    let normal = r.iter().map(|x| norm * (-0.5 * x * x).exp()).collect();
    to_json(&Curves {
        mixing: h.describe(),
        u,
        h: hv,
        r,
        f,
        normal,
    })
}

pub fn certify_density_json(spec: &str, n: usize, p: usize, d: usize, a: f64) -> Result<String, String> {
    if n == 0 || p == 0 || d == 0 || !a.is_finite() {
        return Err("need n, p, d >= 1 and finite a".into());
    }
    let h = density(spec)?;
    let certificate = certify(&h, Dims::new(n, p, d, a));
    let report = certificate.report();
    to_json(&CertifyResult { certificate, report })
}

fn thin_to(x: Vec<f64>) -> Vec<f64> {
    let step = x.len().div_ceil(TRACE_POINTS).max(1);
    x.into_iter().step_by(step).collect()
}

fn trace(f: Functional, da: &ChainOutput, px: &ChainOutput) -> Result<Trace, String> {
    Ok(Trace {
        da: thin_to(f.trace(da).map_err(|e| e.to_string())?),
        pxda: thin_to(f.trace(px).map_err(|e| e.to_string())?),
    })
}

/// Runs DA and Haar PX-DA from the same seed on `y` and `X` given as CSV text
/// and compares the first coefficient and first variance.
#[allow(clippy::too_many_arguments)]
pub fn run_chains_json(
    spec: &str,
    y_csv: &str,
    x_csv: &str,
    a: f64,
    iterations: usize,
    burn_in: usize,
    seed: u64,
    max_lag: usize,
) -> Result<String, String> {
    let h = density(spec)?;
    let y = parse_matrix(y_csv, "y").map_err(|e| e.to_string())?;
    let x = parse_matrix(x_csv, "X").map_err(|e| e.to_string())?;
    let data = RegressionData::new(y, x, a).map_err(|e| e.to_string())?;
    let propriety = validate_data(&data, &h).conditions;
    let run = |alg| {
        let out = run_chain(&ChainConfig::new(alg, iterations, burn_in, 1, seed), &data, &h).map_err(|e| e.to_string())?;
        match &out.failure {
            Some(f) => Err(f.message.clone()),
            None => Ok(out),
        }
    };
    let da = run(Algorithm::Da)?;
    let px = run(Algorithm::HaarPxda)?;
    let b = Functional::Beta { row: 0, col: 0 };
    let s = Functional::Sigma { row: 0, col: 0 };
    to_json(&ChainsResult {
        propriety,
        retained: da.draws.len(),
        beta: trace(b, &da, &px)?,
        sigma: trace(s, &da, &px)?,
        autocorr_beta: autocorr_compare(&da, &px, b, max_lag).map_err(|e| e.to_string())?,
        autocorr_sigma: autocorr_compare(&da, &px, s, max_lag).map_err(|e| e.to_string())?,
    })
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn mixing_curves(spec: &str, d: usize, u_min: f64, u_max: f64, r_max: f64, points: usize) -> Result<String, JsValue> {
    js(mixing_curves_json(spec, d, u_min, u_max, r_max, points))
}

#[wasm_bindgen]
pub fn certify_density(spec: &str, n: usize, p: usize, d: usize, a: f64) -> Result<String, JsValue> {
    js(certify_density_json(spec, n, p, d, a))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen]
pub fn run_chains(
    spec: &str,
    y_csv: &str,
    x_csv: &str,
    a: f64,
    iterations: usize,
    burn_in: usize,
    seed: u32,
    max_lag: usize,
) -> Result<String, JsValue> {
    js(run_chains_json(spec, y_csv, x_csv, a, iterations, burn_in, seed.into(), max_lag))
}
