//! Browser bindings for the Earth-Moon-Mars scenario.
//!
//! Three operations, each returning a JSON string:
//! - [`solve_case_study`]: optimal schedule for a set of arc costs,
//!   compared with the reference schedule.
//! - [`anneal_histogram`]: annealer energies over a number of restarts.
//! - [`dynamic_range_sweep`]: coefficient dynamic range as alpha varies.

use std::collections::BTreeMap;

use hamflow::expansion::{evaluate_objective, expand_model, prune_model, reconstruct_solution, Model, ReferenceTables};
use hamflow::hamiltonian::{choose_alpha, compile_hamiltonian, dynamic_range_db};
use hamflow::instance::{build_case_study, parse_cost_map};
use hamflow::report::schedule_tables;
use hamflow::solvers::{anneal_sample, solve_exact, summarize_samples, AnnealParams};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const DEFAULT_COSTS: &str = include_str!("../../core/fixtures/case_study_costs.json");
const REFERENCE: &str = include_str!("../../core/fixtures/reference_tables.json");
const TIME_LIMIT_SECS: f64 = 30.0;

fn model_for(costs_json: &str) -> Result<Model, String> {
    let costs: BTreeMap<String, f64> = if costs_json.trim().is_empty() {
        parse_cost_map(DEFAULT_COSTS)
    } else {
        parse_cost_map(costs_json)
    }
    .map_err(|e| e.to_string())?;
    let inst = build_case_study(&costs).map_err(|e| e.to_string())?;
    let full = expand_model(&inst).map_err(|e| e.to_string())?;
    prune_model(&full).map_err(|e| e.to_string())
}

pub fn default_costs() -> String {
    DEFAULT_COSTS.to_string()
}

pub fn solve(costs_json: &str) -> Result<Value, String> {
    let model = model_for(costs_json)?;
    let best = solve_exact(&model, TIME_LIMIT_SECS).map_err(|e| e.to_string())?;
    let tables = schedule_tables(&model, &best.sample.assignment).map_err(|e| e.to_string())?;
    let reference = ReferenceTables::from_json(REFERENCE).map_err(|e| e.to_string())?;
    let reference = reconstruct_solution(&model, &reference).map_err(|e| e.to_string())?;
    let reference_cost = evaluate_objective(&model, &reference).map_err(|e| e.to_string())?;
    Ok(json!({
        "objective": best.sample.objective,
        "optimal": best.optimal,
        "reference_objective": reference_cost,
        "vehicles_total": tables.total_vehicles(),
        "steps": tables.steps,
        "vehicles": tables.vehicles,
        "cargo": tables.cargo,
    }))
}

pub fn histogram(costs_json: &str, restarts: usize, sweeps: usize, seed: u64) -> Result<Value, String> {
    let model = model_for(costs_json)?;
    let h = compile_hamiltonian(&model, None).map_err(|e| e.to_string())?;
    let params = AnnealParams {
        restarts: restarts.clamp(1, 200),
        sweeps: sweeps.clamp(1, 5000),
        ..AnnealParams::default()
    };
    let set = anneal_sample(&h, &model, &params, seed);
    let stats = summarize_samples(&set).map_err(|e| e.to_string())?;
    let bins: Vec<Value> = stats
        .histogram
        .iter()
        .map(|b| json!({ "lower": b.lower, "upper": b.upper, "count": b.count }))
        .collect();
    Ok(json!({
        "samples": set.samples.len(),
        "feasible_fraction": stats.feasible_fraction,
        "best": stats.best,
        "median": stats.median,
        "worst": stats.worst,
        "best_feasible": set.best_feasible().map(|s| s.objective),
        "bins": bins,
    }))
}

/// Dynamic range at `points` alphas spread geometrically over
/// `[alpha_min, alpha_max]`.
pub fn sweep(alpha_min: f64, alpha_max: f64, points: usize) -> Result<Value, String> {
    if !(alpha_min > 0.0) || !(alpha_max >= alpha_min) || !alpha_max.is_finite() {
        return Err(format!("bad alpha range [{alpha_min}, {alpha_max}]"));
    }
    let model = model_for("")?;
    let n = points.clamp(2, 200);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let alpha = alpha_min * (alpha_max / alpha_min).powf(i as f64 / (n - 1) as f64);
        let h = compile_hamiltonian(&model, Some(alpha)).map_err(|e| e.to_string())?;
        let db = dynamic_range_db(&h).map_err(|e| e.to_string())?;
        rows.push(json!({ "alpha": alpha, "db": db }));
    }
    Ok(json!({ "default_alpha": choose_alpha(&model), "rows": rows }))
}

fn to_js(v: Result<Value, String>) -> Result<String, JsValue> {
    v.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn fixture_costs() -> String {
    default_costs()
}

#[wasm_bindgen]
pub fn solve_case_study(costs_json: &str) -> Result<String, JsValue> {
    to_js(solve(costs_json))
}

#[wasm_bindgen]
pub fn anneal_histogram(costs_json: &str, restarts: u32, sweeps: u32, seed: u32) -> Result<String, JsValue> {
    to_js(histogram(costs_json, restarts as usize, sweeps as usize, seed as u64))
}

#[wasm_bindgen]
pub fn dynamic_range_sweep(alpha_min: f64, alpha_max: f64, points: u32) -> Result<String, JsValue> {
    to_js(sweep(alpha_min, alpha_max, points as usize))
}
