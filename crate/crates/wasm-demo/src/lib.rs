//! wasm-bindgen exports for `www/index.html`. Every export returns a JSON
//! string; the `*_json` functions are the same computations without the
//! JS boundary, so they can be tested natively.

use contactkit::classifier::{analyze_point, AnalyzeOptions};
use contactkit::geomflow::{
    continue_contact_curve, fiber_family, ContinuationConfig, IntegratorConfig,
};
use contactkit::{classify, load_model, Tolerances};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Fibers of the planar example through `seeds` (flat `x0, y0, x1, y1, …`),
/// integrated over `[-t_max, t_max]`, plus the parabola and its two contact points.
pub fn planar_fibers_json(seeds: &[f64], t_max: f64) -> Result<Value, String> {
    if !seeds.len().is_multiple_of(2) {
        return Err("seeds must be x,y pairs".into());
    }
    if !(t_max.is_finite() && t_max > 0.0) {
        return Err("t_max must be positive".into());
    }
    let model = load_model("planar_parabola", &[]).map_err(err)?;
    let seeds: Vec<Vec<f64>> = seeds.chunks(2).map(|c| c.to_vec()).collect();
    let cfg = IntegratorConfig {
        rtol: 1e-8,
        max_steps: 20_000,
        ..IntegratorConfig::default()
    };
    let fibers = fiber_family(&model, &seeds, (-t_max, t_max), &cfg).map_err(err)?;
    let fibers: Vec<Value> = fibers
        .iter()
        .map(|tr| {
            let pts: Vec<[f64; 2]> = tr.states.iter().map(|s| [s[0], s[1]]).collect();
            let touches: Vec<[f64; 2]> =
                tr.events.iter().map(|e| [e.state[0], e.state[1]]).collect();
            json!({"points": pts, "crossings": touches})
        })
        .collect();
    let (lo, hi) = (model.fiber_domain.lower[0], model.fiber_domain.upper[0]);
    let parabola: Vec<[f64; 2]> = (0..=200)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / 200.0;
            [x, 1.0 - x * x]
        })
        .collect();
    let contacts: Vec<Vec<f64>> = model
        .known
        .points
        .iter()
        .filter(|k| k.label.starts_with("contact"))
        .map(|k| k.point.clone())
        .collect();
    Ok(json!({
        "fibers": fibers,
        "parabola": parabola,
        "contacts": contacts,
        "box": {"lower": model.fiber_domain.lower, "upper": model.fiber_domain.upper},
    }))
}

/// Fold coefficient along the fold line of the three-component oscillator,
/// from the classifier and from the closed form, and the cusps found by
/// continuation.
pub fn three_component_fold_profile_json(
    alpha1: f64,
    alpha2: f64,
    alpha3: f64,
    samples: usize,
) -> Result<Value, String> {
    if !(2..=2000).contains(&samples) {
        return Err("samples must be in 2..=2000".into());
    }
    let overrides = vec![
        ("alpha1".to_string(), alpha1),
        ("alpha2".to_string(), alpha2),
        ("alpha3".to_string(), alpha3),
    ];
    let model = load_model("three_component", &overrides).map_err(err)?;
    let curve = model.known.curves.first().ok_or("no fold line")?;
    let (a, b) = curve.range;
    let tol = Tolerances::default();
    let p = model.provider();
    let mut z = Vec::with_capacity(samples);
    let mut numeric = Vec::with_capacity(samples);
    let mut formula = Vec::with_capacity(samples);
    let mut labels = Vec::with_capacity(samples);
    for i in 0..samples {
        // Stay off the ends of the range.
        let s = a + (b - a) * (i as f64 + 0.5) / samples as f64;
        let d = classify(&p, &(curve.point)(s), &tol).map_err(err)?;
        z.push(s);
        numeric.push(d.fold_coefficient);
        formula.push(curve.fold_coefficient.as_ref().map(|f| f(s)));
        labels.push(d.verdict.label());
    }
    let start = (curve.point)(a + 0.02 * (b - a));
    let cfg = ContinuationConfig {
        direction: Some(vec![0.0, 0.0, 1.0]),
        ..ContinuationConfig::default()
    };
    let cusps: Vec<Vec<f64>> = match continue_contact_curve(&model, &start, &cfg) {
        Ok(branch) => branch.cusps().map(|e| e.z.clone()).collect(),
        Err(_) => Vec::new(),
    };
    Ok(json!({
        "z": z,
        "numeric": numeric,
        "formula": formula,
        "labels": labels,
        "cusps": cusps,
    }))
}

/// Classification of `point` for a built-in model; off-manifold points close
/// to f = 0 are projected first (within `projection_radius`).
pub fn classify_point_json(
    model: &str,
    point: &[f64],
    projection_radius: f64,
) -> Result<Value, String> {
    let model = load_model(model, &[]).map_err(err)?;
    let opts = AnalyzeOptions {
        projection_radius,
        ..AnalyzeOptions::default()
    };
    let a = analyze_point(&model.provider(), point, &Tolerances::default(), &opts).map_err(err)?;
    let d = &a.diagnostics;
    Ok(json!({
        "model": model.name,
        "variables": model.variables,
        "point": d.point,
        "projected": a.projected_point.is_some(),
        "kind": d.verdict.kind(),
        "label": d.verdict.label(),
        "order": d.verdict.order(),
        "eigenvalues": d.eigenvalues,
        "fold_coefficient": d.fold_coefficient,
        "cusp_coefficient": d.cusp_coefficient,
        "flags": d.flags.names(),
    }))
}

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn planar_fibers(seeds: &[f64], t_max: f64) -> Result<String, JsError> {
    to_js(planar_fibers_json(seeds, t_max))
}

#[wasm_bindgen]
pub fn three_component_fold_profile(
    alpha1: f64,
    alpha2: f64,
    alpha3: f64,
    samples: u32,
) -> Result<String, JsError> {
    to_js(three_component_fold_profile_json(
        alpha1,
        alpha2,
        alpha3,
        samples as usize,
    ))
}

#[wasm_bindgen]
pub fn classify_point(
    model: &str,
    point: &[f64],
    projection_radius: f64,
) -> Result<String, JsError> {
    to_js(classify_point_json(model, point, projection_radius))
}
