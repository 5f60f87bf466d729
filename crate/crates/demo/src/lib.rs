//! WebAssembly bindings for the browser demo. Every export returns a JSON
//! string; the plain `*_json` functions carry the logic so they can be
//! tested natively.

use coefshape::bootstrap;
use coefshape::regress::rmse_function;
use coefshape::select::{PenaltyConfig, PenaltyKind};
use coefshape::simgen::{self, Method, Prepared, SimConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct FitView {
    t: Vec<f64>,
    truth: Vec<f64>,
    ols: Vec<f64>,
    transfer: Vec<f64>,
    pooled: Vec<f64>,
    oracle: Vec<usize>,
    identified: Vec<usize>,
    rmse: Rmse,
}

#[derive(Serialize)]
struct Rmse {
    ols: f64,
    transfer: f64,
    pooled: f64,
}

#[derive(Serialize)]
struct BandView {
    t: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    estimate: Vec<f64>,
    truth: Vec<f64>,
    width: f64,
    reps: usize,
    dropped: usize,
}

#[derive(Serialize)]
struct PenaltyView {
    t: Vec<f64>,
    scad: Vec<f64>,
    mcp: Vec<f64>,
}

fn config(setting: u8, n: usize, s: f64, alpha: f64, f1: f64, seed: u64) -> SimConfig {
    SimConfig {
        setting,
        n,
        s,
        alpha,
        f1,
        seed,
        reps: 1,
        ..SimConfig::default()
    }
}

fn prepared(cfg: &SimConfig) -> Result<Prepared, String> {
    cfg.validate().map_err(|e| e.to_string())?;
    simgen::prepare_rep(cfg, 0).map_err(|e| e.to_string())
}

/// Simulate one replication and fit target-only least squares, the shape
/// transfer estimator on a data-chosen source set and naive pooling.
pub fn simulate_fit_json(setting: u8, n: usize, s: f64, alpha: f64, f1: f64, seed: u64) -> Result<String, String> {
    let cfg = config(setting, n, s, alpha, f1, seed);
    let prep = prepared(&cfg)?;
    let err = |e: coefshape::Error| e.to_string();
    let truth = prep.truth.coefficient(0).map_err(err)?;
    let identified = prep.identify(seed).map_err(err)?;
    let id_set = Some(identified.clone());
    let y = &prep.problem.target.responses;
    let curve = |m: Method, set: &Option<_>| -> Result<coefshape::Curve, String> {
        let scores = prep.estimate_with(m, set, y).map_err(err)?;
        prep.basis.synthesize(&scores).map_err(err)
    };
    let ols = curve(Method::Ols, &None)?;
    let transfer = curve(Method::TsIdentified, &id_set)?;
    let pooled = curve(Method::Te, &Some(prep.truth.oracle_set.clone()))?;
    let rmse = |c: &coefshape::Curve| rmse_function(c, &truth).map_err(err);
    let view = FitView {
        t: truth.grid().points().to_vec(),
        rmse: Rmse {
            ols: rmse(&ols)?,
            transfer: rmse(&transfer)?,
            pooled: rmse(&pooled)?,
        },
        truth: truth.values().to_vec(),
        ols: ols.into_values(),
        transfer: transfer.into_values(),
        pooled: pooled.into_values(),
        oracle: prep.truth.oracle_set.iter().copied().collect(),
        identified: identified.into_iter().collect(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

/// Residual bootstrap band around one estimator on a simulated replication.
/// The source set is the true informative one.
pub fn bootstrap_band_json(
    setting: u8,
    n: usize,
    s: f64,
    method: &str,
    reps: usize,
    level: f64,
    seed: u64,
) -> Result<String, String> {
    let method: Method = method.parse().map_err(|e: coefshape::Error| e.to_string())?;
    let cfg = config(setting, n, s, 1.1, 1.0, seed);
    let prep = prepared(&cfg)?;
    let err = |e: coefshape::Error| e.to_string();
    let set = match method {
        Method::Ols => None,
        _ => Some(prep.truth.oracle_set.clone()),
    };
    let band = bootstrap::confidence_band(
        |y| prep.estimate_with(method, &set, y),
        &prep.problem.target.scores,
        &prep.problem.target.responses,
        &prep.basis,
        reps,
        level,
        seed,
    )
    .map_err(err)?;
    let truth = prep.truth.coefficient(0).map_err(err)?;
    let view = BandView {
        t: band.grid().points().to_vec(),
        lower: band.lower.values().to_vec(),
        upper: band.upper.values().to_vec(),
        estimate: band.estimate.values().to_vec(),
        truth: truth.into_values(),
        width: band.width,
        reps: band.reps,
        dropped: band.dropped,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

/// SCAD and MCP penalty values on `[0, t_max]`.
pub fn penalty_curves_json(lambda: f64, gamma_scad: f64, gamma_mcp: f64, t_max: f64, points: usize) -> Result<String, String> {
    if !(t_max > 0.0) || points < 2 {
        return Err("need t_max > 0 and at least two points".into());
    }
    let scad = PenaltyConfig::new(PenaltyKind::Scad, lambda, gamma_scad).map_err(|e| e.to_string())?;
    let mcp = PenaltyConfig::new(PenaltyKind::Mcp, lambda, gamma_mcp).map_err(|e| e.to_string())?;
    let t: Vec<f64> = (0..points).map(|i| t_max * i as f64 / (points - 1) as f64).collect();
    let view = PenaltyView {
        scad: t.iter().map(|&v| scad.value(v)).collect(),
        mcp: t.iter().map(|&v| mcp.value(v)).collect(),
        t,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn simulate_fit(setting: u8, n: usize, s: f64, alpha: f64, f1: f64, seed: u32) -> Result<String, JsValue> {
    simulate_fit_json(setting, n, s, alpha, f1, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn bootstrap_band(setting: u8, n: usize, s: f64, method: &str, reps: usize, level: f64, seed: u32) -> Result<String, JsValue> {
    bootstrap_band_json(setting, n, s, method, reps, level, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn penalty_curves(lambda: f64, gamma_scad: f64, gamma_mcp: f64, t_max: f64, points: usize) -> Result<String, JsValue> {
    penalty_curves_json(lambda, gamma_scad, gamma_mcp, t_max, points).map_err(|e| JsValue::from_str(&e))
}
