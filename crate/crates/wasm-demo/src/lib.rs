//! Browser bindings for three operations of `levy-rbdsde`: the orthonormal
//! basis of a discrete Lévy measure, sample paths of the Teugels
//! martingales, and the penalization curve of the deterministic-obstacle
//! problem. Inputs and outputs are JSON strings.

use levy_rbdsde::levy_basis::{orthonormal_basis, JumpAtom, LevyMeasureModel};
use levy_rbdsde::path_engine::{simulate_bundle, BrownianSource, TimeGrid};
use levy_rbdsde::regression::RegressionBasis;
use levy_rbdsde::scenarios;
use levy_rbdsde::solver::{penalization_sweep, FixedPointConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn parse_atoms(atoms_json: &str) -> Result<Vec<JumpAtom>, JsError> {
    let raw: Vec<[f64; 2]> = serde_json::from_str(atoms_json).map_err(js_err)?;
    Ok(raw.into_iter().map(|[size, rate]| JumpAtom::new(size, rate)).collect())
}

#[derive(Serialize)]
struct BasisView {
    coefficients: Vec<Vec<f64>>,
    effective_dim: usize,
    orthonormality_error: f64,
    x: Vec<f64>,
    /// `q_{i-1}(x)` sampled on `x`, one row per `i`.
    q: Vec<Vec<f64>>,
}

/// Basis coefficients for atoms given as `[[size, rate], ...]`, plus the
/// polynomials sampled on `[x_min, x_max]`.
#[wasm_bindgen]
pub fn basis(atoms_json: &str, sigma0: f64, m: usize, x_min: f64, x_max: f64) -> Result<String, JsError> {
    let model = LevyMeasureModel::new(parse_atoms(atoms_json)?, sigma0, 0.0).map_err(js_err)?;
    let b = orthonormal_basis(&model, m).map_err(js_err)?;
    let x: Vec<f64> = (0..=200).map(|k| x_min + (x_max - x_min) * k as f64 / 200.0).collect();
    let view = BasisView {
        coefficients: (1..=m).map(|i| b.row(i).map(<[f64]>::to_vec)).collect::<Result<_, _>>().map_err(js_err)?,
        effective_dim: b.effective_dim(),
        orthonormality_error: b.orthonormality_error(&model),
        q: (1..=m)
            .map(|i| x.iter().map(|&v| b.eval_q(i, v)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<_, _>>()
            .map_err(js_err)?,
        x,
    };
    serde_json::to_string(&view).map_err(js_err)
}

#[derive(Serialize)]
struct PathsView {
    t: Vec<f64>,
    /// `levy[path][node]`.
    levy: Vec<Vec<f64>>,
    /// `teugels[path][i-1][node]`.
    teugels: Vec<Vec<Vec<f64>>>,
}

/// A few paths of `L` and `H^(1..m)` on `[0, t_end]`.
#[wasm_bindgen]
pub fn teugels_paths(
    atoms_json: &str,
    drift: f64,
    m: usize,
    t_end: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<String, JsError> {
    let model = LevyMeasureModel::new(parse_atoms(atoms_json)?, 0.0, drift).map_err(js_err)?;
    let b = orthonormal_basis(&model, m).map_err(js_err)?;
    let grid = TimeGrid::new(0.0, t_end, n_steps).map_err(js_err)?;
    let bundle = simulate_bundle(&model, &b, &grid, n_paths.clamp(1, 50), seed, &BrownianSource::Common).map_err(js_err)?;
    let view = PathsView {
        t: grid.nodes(),
        levy: bundle.paths.iter().map(|p| p.levy.clone()).collect(),
        teugels: bundle.paths.iter().map(|p| p.teugels.clone()).collect(),
    };
    serde_json::to_string(&view).map_err(js_err)
}

#[derive(Serialize)]
struct CurveView {
    n: Vec<f64>,
    y0: Vec<f64>,
    gap_to_direct: Vec<f64>,
    direct_y0: f64,
    monotone: bool,
}

/// `Y_0^n` of the deterministic-obstacle scenario for each penalty in
/// `n_list_json`, against the direct reflection.
#[wasm_bindgen]
pub fn penalization_curve(n_list_json: &str, t_end: f64, n_steps: usize) -> Result<String, JsError> {
    let n_list: Vec<f64> = serde_json::from_str(n_list_json).map_err(js_err)?;
    let mut cfg = scenarios::default_config("deterministic-obstacle").map_err(js_err)?;
    cfg.grid.t_end = t_end;
    cfg.grid.n_steps = n_steps.clamp(10, 5000);
    cfg.monte_carlo.n_paths = 4;
    let input = cfg.solver_input().map_err(js_err)?;
    let problem = cfg.problem().map_err(js_err)?;
    let table = penalization_sweep(&problem, &input, &RegressionBasis::default(), &n_list, &FixedPointConfig::default())
        .map_err(js_err)?;
    let view = CurveView {
        n: table.rows.iter().map(|r| r.n).collect(),
        y0: table.rows.iter().map(|r| r.y0).collect(),
        gap_to_direct: table.rows.iter().map(|r| r.gap_to_direct).collect(),
        direct_y0: table.direct_y0,
        monotone: table.monotone_y0,
    };
    serde_json::to_string(&view).map_err(js_err)
}
