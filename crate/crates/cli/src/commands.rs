use std::path::PathBuf;

use anyhow::{Context, Result};
use contactkit::classifier::{
    analyze_point, classify_with, AnalyzeOptions, ContactDiagnostics, Verdict,
};
use contactkit::geomflow::{
    continue_contact_curve, continue_contact_curve_both, fiber_family, find_contact_point,
    integrate_full, project_to_s, Branch, ContinuationConfig, IntegratorConfig, NewtonConfig,
    Trajectory,
};
use contactkit::models::{
    load_model_file, parse_overrides, verify_known_answers, Expectation, MODEL_NAMES,
};
use contactkit::{load_model, FactorizedModel, Tolerances};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::Settings;
use crate::output::{emit, json_text, num, opt_num, Table, SCHEMA};
use crate::{Cli, Command, Failed, Format, ModelArgs, OdeArgs, TolArgs, Usage};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

struct Ctx {
    settings: Settings,
    format: Option<Format>,
    output: Option<PathBuf>,
}

impl Ctx {
    fn format(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    fn write_json(&self, v: &Value) -> Result<()> {
        emit(&json_text(v)?, self.output.as_deref())
    }

    fn write_table(&self, t: &Table) -> Result<()> {
        emit(&t.to_csv()?, self.output.as_deref())
    }

    fn model(&self, a: &ModelArgs) -> Result<FactorizedModel> {
        let s = &self.settings;
        let params = parse_overrides(&s.pick_all(&a.params, "param"))?;
        let file: Option<PathBuf> = s.pick(a.model_file.clone(), "model-file")?;
        let name: Option<String> = s.pick(a.model.clone(), "model")?;
        let face: Option<String> = s.pick(a.face.clone(), "face")?;
        match (file, name) {
            (Some(_), Some(_)) => Err(usage("give either --model or --model-file, not both")),
            (Some(path), None) => {
                if face.is_some() {
                    return Err(usage("--face applies to built-in models only"));
                }
                Ok(load_model_file(&path, &params)?)
            }
            (None, Some(name)) => {
                let full = match face {
                    Some(f) => format!("{name}:{f}"),
                    None => name,
                };
                Ok(load_model(&full, &params)?)
            }
            (None, None) => Err(usage("a model is required (--model or --model-file)")),
        }
    }

    fn tolerances(&self, t: &TolArgs) -> Result<(Tolerances, AnalyzeOptions)> {
        let s = &self.settings;
        let mut tol = Tolerances::default();
        let mut opts = AnalyzeOptions::default();
        if let Some(v) = s.pick(t.zero_abs, "zero-abs")? {
            tol.zero_abs = v;
        }
        if let Some(v) = s.pick(t.zero_rel, "zero-rel")? {
            tol.zero_rel = v;
        }
        if let Some(v) = s.pick(t.rank_abs, "rank-abs")? {
            tol.rank.absolute = v;
        }
        if let Some(v) = s.pick(t.rank_rel, "rank-rel")? {
            tol.rank.relative = v;
        }
        if let Some(v) = s.pick(t.manifold_dist, "manifold-dist")? {
            tol.manifold_dist = v;
        }
        if let Some(v) = s.pick(t.max_order, "max-order")? {
            opts.max_order = v;
        }
        if let Some(v) = s.pick(t.projection_radius, "projection-radius")? {
            opts.projection_radius = v;
        }
        tol.validate().map_err(|e| usage(e.to_string()))?;
        if opts.max_order == 0 {
            return Err(usage("--max-order must be at least 1"));
        }
        if opts.projection_radius.is_nan() || opts.projection_radius < 0.0 {
            return Err(usage("--projection-radius must be non-negative"));
        }
        Ok((tol, opts))
    }

    fn integrator(&self, o: &OdeArgs) -> Result<IntegratorConfig> {
        let s = &self.settings;
        let mut cfg = IntegratorConfig::default();
        if let Some(v) = s.pick(o.atol, "atol")? {
            cfg.atol = v;
        }
        if let Some(v) = s.pick(o.rtol, "rtol")? {
            cfg.rtol = v;
        }
        cfg.max_step = s.pick(o.max_step, "max-step")?;
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }

    fn t_span(&self, o: &OdeArgs, default: (f64, f64)) -> Result<(f64, f64)> {
        match self.settings.pick(o.t_span.clone(), "t-span")? {
            None => Ok(default),
            Some(s) => {
                let v = parse_vector(&s)?;
                if v.len() != 2 {
                    return Err(usage(format!("--t-span needs two numbers, got `{s}`")));
                }
                Ok((v[0], v[1]))
            }
        }
    }

    fn point(&self, flag: &Option<String>, model: &FactorizedModel) -> Result<Vec<f64>> {
        let s: String = self
            .settings
            .pick(flag.clone(), "point")?
            .ok_or_else(|| usage("--point is required"))?;
        parse_point(&s, model)
    }
}

pub fn parse_vector(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .map_err(|_| usage(format!("`{t}` is not a number")))
        })
        .collect()
}

fn parse_point(s: &str, model: &FactorizedModel) -> Result<Vec<f64>> {
    let v = parse_vector(s)?;
    if v.len() != model.n() {
        return Err(usage(format!(
            "{} expects {} coordinates ({}), got {}",
            model.name,
            model.n(),
            model.variables.join(","),
            v.len()
        )));
    }
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(usage(format!("grid axis `{s}` is not MIN:MAX:COUNT")));
        }
        let min: f64 = parts[0]
            .trim()
            .parse()
            .map_err(|_| usage(format!("bad grid minimum in `{s}`")))?;
        let max: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| usage(format!("bad grid maximum in `{s}`")))?;
        let count: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| usage(format!("bad grid count in `{s}`")))?;
        if count == 0 {
            return Err(usage(format!("grid count must be at least 1 in `{s}`")));
        }
        if !(min.is_finite() && max.is_finite()) {
            return Err(usage(format!("grid bounds must be finite in `{s}`")));
        }
        Ok(Self { min, max, count })
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.count == 1 {
            self.min
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64
        }
    }
}

/// All grid points, last axis fastest.
pub fn grid_points(axes: &[Axis]) -> Vec<Vec<f64>> {
    let total: usize = axes.iter().map(|a| a.count).product();
    (0..total)
        .map(|mut idx| {
            let mut z = vec![0.0; axes.len()];
            for (k, a) in axes.iter().enumerate().rev() {
                z[k] = a.value(idx % a.count);
                idx /= a.count;
            }
            z
        })
        .collect()
}

fn parse_grid(specs: &[String], model: &FactorizedModel) -> Result<Vec<Vec<f64>>> {
    if specs.len() != model.n() {
        return Err(usage(format!(
            "need one --grid per variable ({}), got {}",
            model.variables.join(","),
            specs.len()
        )));
    }
    let axes = specs
        .iter()
        .map(|s| Axis::parse(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(grid_points(&axes))
}

fn parameters_json(model: &FactorizedModel) -> Value {
    let mut map = serde_json::Map::new();
    for p in &model.parameters {
        map.insert(p.name.clone(), json!(p.value));
    }
    map.insert("eps".into(), json!(model.eps));
    Value::Object(map)
}

fn verdict_json(d: &ContactDiagnostics) -> Value {
    let v = &d.verdict;
    let mut out = json!({
        "kind": v.kind(),
        "label": v.label(),
        "order": v.order(),
        "flags": d.flags.names(),
    });
    match v {
        Verdict::Contact {
            slow_generic,
            c0_rank,
            ..
        } => {
            out["slow_generic"] = json!(slow_generic);
            out["c0_rank"] = json!(c0_rank);
        }
        Verdict::Degenerate { rank_deficiency } => out["rank_deficiency"] = json!(rank_deficiency),
        Verdict::Inconclusive { reason } => out["reason"] = json!(reason),
        _ => {}
    }
    if out.get("slow_generic").is_none() {
        out["slow_generic"] = Value::Null;
    }
    out
}

fn tolerances_json(tol: &Tolerances, opts: &AnalyzeOptions) -> Value {
    json!({
        "zero_abs": tol.zero_abs,
        "zero_rel": tol.zero_rel,
        "rank_abs": tol.rank.absolute,
        "rank_rel": tol.rank.relative,
        "manifold_dist": tol.manifold_dist,
        "max_order": opts.max_order,
        "projection_radius": opts.projection_radius,
    })
}

fn slow_generic(v: &Verdict) -> Option<bool> {
    match v {
        Verdict::Contact { slow_generic, .. } => Some(*slow_generic),
        _ => None,
    }
}

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn run(cli: Cli) -> Result<()> {
    let settings = match &cli.config {
        Some(p) => Settings::load(p).map_err(|e| usage(format!("{e:#}")))?,
        None => Settings::default(),
    };
    let format = settings.pick(cli.format, "format")?;
    let output = settings.pick(cli.output.clone(), "output")?;
    let ctx = Ctx {
        settings,
        format,
        output,
    };
    match &cli.command {
        Command::Analyze { model, tol, point } => analyze(&ctx, model, tol, point),
        Command::Scan {
            model,
            tol,
            grid,
            project,
            branch,
            point,
            pin,
            both,
            max_points,
        } => {
            if *branch {
                scan_branch(&ctx, model, tol, point, pin, *both, *max_points)
            } else {
                scan_grid(&ctx, model, tol, grid, *project)
            }
        }
        Command::Fibers {
            model,
            ode,
            point,
            grid,
        } => fibers(&ctx, model, ode, point, grid),
        Command::Simulate {
            model,
            ode,
            point,
            eps,
            stride,
        } => simulate(&ctx, model, ode, point, *eps, *stride),
        Command::Models => models(&ctx),
        Command::Verify {
            model,
            tol,
            samples,
            seed,
        } => verify(&ctx, model, tol, *samples, *seed),
    }
}

fn analyze(ctx: &Ctx, m: &ModelArgs, t: &TolArgs, point: &Option<String>) -> Result<()> {
    let model = ctx.model(m)?;
    let (tol, opts) = ctx.tolerances(t)?;
    let z = ctx.point(point, &model)?;
    let a = analyze_point(&model.provider(), &z, &tol, &opts)?;
    let d = &a.diagnostics;
    match ctx.format(Format::Json) {
        Format::Json => {
            let chain: Vec<Value> = d
                .chain
                .iter()
                .map(|c| json!({"order": c.order, "l_projected": c.l_projected, "full_norm": c.full_norm, "threshold": c.threshold}))
                .collect();
            let v = json!({
                "schema": SCHEMA,
                "command": "analyze",
                "model": model.name,
                "variables": model.variables,
                "parameters": parameters_json(&model),
                "point": a.input_point,
                "projected_point": a.projected_point,
                "projection_displacement": a.projection_displacement,
                "f_value": d.f_value,
                "manifold_residual": d.manifold_residual,
                "verdict": verdict_json(d),
                "eigenvalues": d.eigenvalues,
                "l": d.l,
                "r": d.r,
                "nullvector_residual": d.nullvector_residual,
                "chain": chain,
                "fold_coefficient": d.fold_coefficient,
                "cusp_coefficient": d.cusp_coefficient,
                "C0": d.c0.as_ref().map(|c| json!({"rows": c.to_rows(), "rank": d.c0_rank})),
                "submersion_rank": d.submersion_rank,
                "tolerances": tolerances_json(&tol, &opts),
            });
            ctx.write_json(&v)
        }
        Format::Csv => {
            let mut header: Vec<String> = vec!["model".into()];
            header.extend(model.variables.iter().cloned());
            header.extend(
                [
                    "projected",
                    "kind",
                    "label",
                    "order",
                    "slow_generic",
                    "c0_rank",
                    "fold_coefficient",
                    "cusp_coefficient",
                ]
                .map(String::from),
            );
            for i in 0..model.m() {
                header.push(format!("eig{}_re", i + 1));
                header.push(format!("eig{}_im", i + 1));
            }
            let mut t = Table::new(header);
            let mut row = vec![model.name.clone()];
            row.extend(d.point.iter().map(|v| num(*v)));
            row.push(a.projected_point.is_some().to_string());
            row.extend(verdict_cells(d));
            for i in 0..model.m() {
                let e = d.eigenvalues.get(i);
                row.push(opt_num(e.map(|e| e[0])));
                row.push(opt_num(e.map(|e| e[1])));
            }
            t.push(row);
            ctx.write_table(&t)
        }
    }
}

fn verdict_cells(d: &ContactDiagnostics) -> Vec<String> {
    vec![
        d.verdict.kind().to_string(),
        d.verdict.label(),
        opt_str(d.verdict.order()),
        opt_str(slow_generic(&d.verdict)),
        opt_str(d.c0_rank),
        opt_num(d.fold_coefficient),
        opt_num(d.cusp_coefficient),
    ]
}

struct GridRow {
    point: Vec<f64>,
    residual: Option<f64>,
    outcome: std::result::Result<ContactDiagnostics, String>,
}

fn scan_grid(ctx: &Ctx, m: &ModelArgs, t: &TolArgs, grid: &[String], project: bool) -> Result<()> {
    let model = ctx.model(m)?;
    let (tol, opts) = ctx.tolerances(t)?;
    let specs = ctx.settings.pick_all(grid, "grid");
    if specs.is_empty() {
        return Err(usage(
            "scan needs --grid (one per variable) or --branch with --point",
        ));
    }
    let points = parse_grid(&specs, &model)?;
    let newton = NewtonConfig::default();
    // Each point is independent; collect keeps grid order.
    let rows: Vec<GridRow> = points
        .par_iter()
        .map(|z| {
            let p = model.provider();
            let z = if project {
                match project_to_s(&p, z, &newton) {
                    Ok(o) => o.point,
                    Err(e) => {
                        return GridRow {
                            point: z.clone(),
                            residual: None,
                            outcome: Err(e.to_string()),
                        }
                    }
                }
            } else {
                z.clone()
            };
            let outcome = classify_with(&p, &z, &tol, opts.max_order).map_err(|e| e.to_string());
            GridRow {
                residual: outcome.as_ref().ok().map(|d| d.manifold_residual),
                point: z,
                outcome,
            }
        })
        .collect();

    match ctx.format(Format::Csv) {
        Format::Csv => {
            let mut header: Vec<String> = vec!["index".into()];
            header.extend(model.variables.iter().cloned());
            header.extend(
                [
                    "manifold_residual",
                    "kind",
                    "label",
                    "order",
                    "slow_generic",
                    "c0_rank",
                    "fold_coefficient",
                    "cusp_coefficient",
                    "error",
                ]
                .map(String::from),
            );
            let mut table = Table::new(header);
            for (i, r) in rows.iter().enumerate() {
                let mut row = vec![i.to_string()];
                row.extend(r.point.iter().map(|v| num(*v)));
                row.push(opt_num(r.residual));
                match &r.outcome {
                    Ok(d) => {
                        row.extend(verdict_cells(d));
                        row.push(String::new());
                    }
                    Err(e) => {
                        row.extend(["error".to_string(), "error".into()]);
                        row.extend(std::iter::repeat_n(String::new(), 5));
                        row.push(e.clone());
                    }
                }
                table.push(row);
            }
            ctx.write_table(&table)
        }
        Format::Json => {
            let items: Vec<Value> = rows
                .iter()
                .enumerate()
                .map(|(i, r)| match &r.outcome {
                    Ok(d) => json!({
                        "index": i,
                        "point": r.point,
                        "manifold_residual": r.residual,
                        "verdict": verdict_json(d),
                        "fold_coefficient": d.fold_coefficient,
                        "cusp_coefficient": d.cusp_coefficient,
                    }),
                    Err(e) => json!({"index": i, "point": r.point, "error": e}),
                })
                .collect();
            ctx.write_json(&json!({
                "schema": SCHEMA,
                "command": "scan",
                "mode": "grid",
                "model": model.name,
                "variables": model.variables,
                "parameters": parameters_json(&model),
                "projected": project,
                "tolerances": tolerances_json(&tol, &opts),
                "rows": items,
            }))
        }
    }
}

fn parse_pin(s: &str, model: &FactorizedModel) -> Result<(usize, f64)> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| usage(format!("--pin expects VAR=VALUE, got `{s}`")))?;
    let name = name.trim();
    let idx = model
        .variables
        .iter()
        .position(|v| v == name)
        .or_else(|| name.parse::<usize>().ok().filter(|i| *i < model.n()))
        .ok_or_else(|| {
            usage(format!(
                "unknown variable `{name}` (have {})",
                model.variables.join(",")
            ))
        })?;
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| usage(format!("`{value}` is not a number")))?;
    Ok((idx, v))
}

// arclength, z, residual, verdict, label, fold, cusp, event
type BranchRow = (
    f64,
    Vec<f64>,
    Option<f64>,
    Verdict,
    String,
    Option<f64>,
    Option<f64>,
    String,
);

fn branch_rows(branch: &Branch) -> Vec<BranchRow> {
    let mut rows: Vec<_> = branch
        .points
        .iter()
        .map(|p| {
            (
                p.arclength,
                p.z.clone(),
                Some(p.residual),
                p.verdict.clone(),
                p.label.clone(),
                p.fold_coefficient,
                p.cusp_coefficient,
                String::new(),
            )
        })
        .collect();
    for e in &branch.events {
        let kind = serde_json::to_value(e.kind)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        rows.push((
            e.arclength,
            e.z.clone(),
            None,
            e.verdict.clone(),
            e.label.clone(),
            e.fold_coefficient,
            e.cusp_coefficient,
            format!("{kind}:{}->{}", e.before, e.after),
        ));
    }
    // Stable: an event sorts after the computed point at the same arclength.
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    rows
}

fn scan_branch(
    ctx: &Ctx,
    m: &ModelArgs,
    t: &TolArgs,
    point: &Option<String>,
    pin: &Option<String>,
    both: bool,
    max_points: Option<usize>,
) -> Result<()> {
    let model = ctx.model(m)?;
    let (tol, opts) = ctx.tolerances(t)?;
    let seed = ctx.point(point, &model)?;
    let pin = match ctx.settings.pick(pin.clone(), "pin")? {
        Some(s) => Some(parse_pin(&s, &model)?),
        None => None,
    };
    let mut cfg = ContinuationConfig {
        tolerances: tol,
        max_order: opts.max_order,
        ..ContinuationConfig::default()
    };
    if let Some(n) = ctx.settings.pick(max_points, "max-points")? {
        cfg.max_points = n;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let start = find_contact_point(&model.provider(), &seed, pin, &cfg.newton)?;
    let branch = if both {
        continue_contact_curve_both(&model, &start.point, &cfg)?
    } else {
        continue_contact_curve(&model, &start.point, &cfg)?
    };
    let rows = branch_rows(&branch);
    match ctx.format(Format::Csv) {
        Format::Csv => {
            let mut header: Vec<String> = vec!["index".into(), "arclength".into()];
            header.extend(model.variables.iter().cloned());
            header.extend(
                [
                    "residual",
                    "kind",
                    "label",
                    "order",
                    "slow_generic",
                    "fold_coefficient",
                    "cusp_coefficient",
                    "event",
                ]
                .map(String::from),
            );
            let mut table = Table::new(header);
            for (i, (s, z, res, v, label, fold, cusp, event)) in rows.iter().enumerate() {
                let mut row = vec![i.to_string(), num(*s)];
                row.extend(z.iter().map(|x| num(*x)));
                row.extend([
                    opt_num(*res),
                    v.kind().to_string(),
                    label.clone(),
                    opt_str(v.order()),
                    opt_str(slow_generic(v)),
                    opt_num(*fold),
                    opt_num(*cusp),
                    event.clone(),
                ]);
                table.push(row);
            }
            ctx.write_table(&table)
        }
        Format::Json => {
            let items: Vec<Value> = rows
                .iter()
                .enumerate()
                .map(|(i, (s, z, res, v, label, fold, cusp, event))| {
                    json!({
                        "index": i,
                        "arclength": s,
                        "point": z,
                        "residual": res,
                        "kind": v.kind(),
                        "label": label,
                        "order": v.order(),
                        "slow_generic": slow_generic(v),
                        "fold_coefficient": fold,
                        "cusp_coefficient": cusp,
                        "event": if event.is_empty() { Value::Null } else { json!(event) },
                    })
                })
                .collect();
            ctx.write_json(&json!({
                "schema": SCHEMA,
                "command": "scan",
                "mode": "branch",
                "model": model.name,
                "variables": model.variables,
                "parameters": parameters_json(&model),
                "start": start.point,
                "termination": branch.termination,
                "reverse_termination": branch.reverse_termination,
                "tolerances": tolerances_json(&tol, &opts),
                "rows": items,
            }))
        }
    }
}

fn trajectory_json(tr: &Trajectory) -> Value {
    json!({
        "status": tr.status,
        "times": tr.times,
        "states": tr.states,
        "events": tr.events,
        "stats": tr.stats,
    })
}

fn fibers(ctx: &Ctx, m: &ModelArgs, o: &OdeArgs, points: &[String], grid: &[String]) -> Result<()> {
    let model = ctx.model(m)?;
    let cfg = ctx.integrator(o)?;
    let span = ctx.t_span(o, (-2.0, 2.0))?;
    let mut seeds: Vec<Vec<f64>> = ctx
        .settings
        .pick_all(points, "point")
        .iter()
        .map(|s| parse_point(s, &model))
        .collect::<Result<_>>()?;
    let specs = ctx.settings.pick_all(grid, "grid");
    if !specs.is_empty() {
        seeds.extend(parse_grid(&specs, &model)?);
    }
    if seeds.is_empty() {
        return Err(usage("fibers needs seeds (--point, repeatable, or --grid)"));
    }
    let fams = fiber_family(&model, &seeds, span, &cfg)?;
    match ctx.format(Format::Csv) {
        Format::Csv => {
            let mut header: Vec<String> = vec!["fiber".into(), "t".into()];
            header.extend(model.variables.iter().cloned());
            let mut table = Table::new(header);
            for (id, tr) in fams.iter().enumerate() {
                for (t, z) in tr.times.iter().zip(&tr.states) {
                    let mut row = vec![id.to_string(), num(*t)];
                    row.extend(z.iter().map(|v| num(*v)));
                    table.push(row);
                }
            }
            ctx.write_table(&table)
        }
        Format::Json => {
            let items: Vec<Value> = fams
                .iter()
                .zip(&seeds)
                .enumerate()
                .map(|(id, (tr, seed))| {
                    let mut v = trajectory_json(tr);
                    v["id"] = json!(id);
                    v["seed"] = json!(seed);
                    v
                })
                .collect();
            ctx.write_json(&json!({
                "schema": SCHEMA,
                "command": "fibers",
                "model": model.name,
                "variables": model.variables,
                "parameters": parameters_json(&model),
                "t_span": [span.0, span.1],
                "fibers": items,
            }))
        }
    }
}

fn simulate(
    ctx: &Ctx,
    m: &ModelArgs,
    o: &OdeArgs,
    point: &Option<String>,
    eps: Option<f64>,
    stride: Option<usize>,
) -> Result<()> {
    let mut model = ctx.model(m)?;
    if let Some(e) = ctx.settings.pick(eps, "eps")? {
        model = model.with_eps(e)?;
    }
    let cfg = ctx.integrator(o)?;
    let span = ctx.t_span(o, (0.0, 100.0))?;
    let stride = ctx.settings.pick(stride, "stride")?.unwrap_or(1);
    if stride == 0 {
        return Err(usage("--stride must be at least 1"));
    }
    let z0 = ctx.point(point, &model)?;
    let tr = integrate_full(&model, &z0, span, &cfg).context("integrating the full system")?;
    let last = tr.len().saturating_sub(1);
    let keep: Vec<usize> = (0..tr.len())
        .filter(|i| i % stride == 0 || *i == last)
        .collect();
    match ctx.format(Format::Csv) {
        Format::Csv => {
            let mut header: Vec<String> = vec!["t".into()];
            header.extend(model.variables.iter().cloned());
            let mut table = Table::new(header);
            for &i in &keep {
                let mut row = vec![num(tr.times[i])];
                row.extend(tr.states[i].iter().map(|v| num(*v)));
                table.push(row);
            }
            ctx.write_table(&table)
        }
        Format::Json => {
            let times: Vec<f64> = keep.iter().map(|&i| tr.times[i]).collect();
            let states: Vec<&Vec<f64>> = keep.iter().map(|&i| &tr.states[i]).collect();
            ctx.write_json(&json!({
                "schema": SCHEMA,
                "command": "simulate",
                "model": model.name,
                "variables": model.variables,
                "parameters": parameters_json(&model),
                "eps": model.eps,
                "t_span": [span.0, span.1],
                "status": tr.status,
                "times": times,
                "states": states,
                "events": tr.events,
                "stats": tr.stats,
            }))
        }
    }
}

fn expectation_summary(e: &Expectation) -> String {
    match e {
        Expectation::Contact { order, .. } => format!("contact order {order}"),
        Expectation::NormallyHyperbolic { .. } => "normally hyperbolic".into(),
        Expectation::DesingularizedEquilibrium { saddle_focus } => {
            format!(
                "zero of N{}",
                if *saddle_focus { " (saddle-focus)" } else { "" }
            )
        }
    }
}

fn models(ctx: &Ctx) -> Result<()> {
    let mut names: Vec<String> = MODEL_NAMES.iter().map(|s| s.to_string()).collect();
    names.extend(["mitotic:X=1", "mitotic:M=0", "mitotic:M=1"].map(String::from));
    let loaded = names
        .iter()
        .map(|n| load_model(n, &[]))
        .collect::<contactkit::Result<Vec<_>>>()?;
    match ctx.format(Format::Json) {
        Format::Json => {
            let items: Vec<Value> = loaded
                .iter()
                .map(|m| {
                    let params: Vec<Value> = m
                        .parameters
                        .iter()
                        .map(|p| json!({"name": p.name, "default": p.value, "constraint": p.constraint()}))
                        .collect();
                    let curves: Vec<Value> = m
                        .known
                        .curves
                        .iter()
                        .map(|c| {
                            json!({"label": c.label, "description": c.description, "range": [c.range.0, c.range.1], "provenance": c.provenance})
                        })
                        .collect();
                    json!({
                        "name": m.name,
                        "variables": m.variables,
                        "n": m.n(),
                        "m": m.m(),
                        "k": m.k(),
                        "eps": m.eps,
                        "parameters": params,
                        "domain": {"lower": m.domain.lower, "upper": m.domain.upper},
                        "known_points": m.known.points,
                        "known_curves": curves,
                    })
                })
                .collect();
            ctx.write_json(&json!({"schema": SCHEMA, "command": "models", "models": items}))
        }
        Format::Csv => {
            let header = ["model", "entry", "name", "value", "detail", "provenance"]
                .map(String::from)
                .to_vec();
            let mut t = Table::new(header);
            for m in &loaded {
                for p in &m.parameters {
                    t.push(vec![
                        m.name.clone(),
                        "parameter".into(),
                        p.name.clone(),
                        num(p.value),
                        p.constraint(),
                        String::new(),
                    ]);
                }
                for kp in &m.known.points {
                    let pt = kp
                        .point
                        .iter()
                        .map(|v| num(*v))
                        .collect::<Vec<_>>()
                        .join(" ");
                    t.push(vec![
                        m.name.clone(),
                        "point".into(),
                        kp.label.clone(),
                        pt,
                        expectation_summary(&kp.expect),
                        kp.provenance.to_string(),
                    ]);
                }
                for c in &m.known.curves {
                    t.push(vec![
                        m.name.clone(),
                        "curve".into(),
                        c.label.clone(),
                        format!("{} {}", num(c.range.0), num(c.range.1)),
                        c.description.clone(),
                        c.provenance.to_string(),
                    ]);
                }
            }
            ctx.write_table(&t)
        }
    }
}

fn verify(
    ctx: &Ctx,
    m: &ModelArgs,
    t: &TolArgs,
    samples: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let model = ctx.model(m)?;
    let (tol, _) = ctx.tolerances(t)?;
    let samples = ctx.settings.pick(samples, "samples")?.unwrap_or(50);
    let seed = ctx.settings.pick(seed, "seed")?.unwrap_or(0);
    if samples == 0 {
        return Err(usage("--samples must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..samples)
        .map(|_| {
            let u: Vec<f64> = (0..model.n()).map(|_| rng.gen::<f64>()).collect();
            model.domain.lerp(&u)
        })
        .collect();
    let report = model.provider().validate(&points)?;
    let known = verify_known_answers(&model, &tol)?;
    let passed = report.passed() && known.iter().all(|k| k.passed);
    match ctx.format(Format::Json) {
        Format::Json => ctx.write_json(&json!({
            "schema": SCHEMA,
            "command": "verify",
            "model": model.name,
            "parameters": parameters_json(&model),
            "samples": samples,
            "seed": seed,
            "derivatives": report,
            "known_answers": known,
            "passed": passed,
        }))?,
        Format::Csv => {
            let header = ["check", "name", "passed", "value", "tolerance", "detail"]
                .map(String::from)
                .to_vec();
            let mut table = Table::new(header);
            for c in &report.checks {
                table.push(vec![
                    "derivative".into(),
                    c.tensor.clone(),
                    c.passed.to_string(),
                    num(c.max_relative_discrepancy),
                    num(c.tolerance),
                    if c.analytic {
                        "analytic".into()
                    } else {
                        "fd only".into()
                    },
                ]);
            }
            for k in &known {
                table.push(vec![
                    "known".into(),
                    k.label.clone(),
                    k.passed.to_string(),
                    String::new(),
                    String::new(),
                    k.problems.join("; "),
                ]);
            }
            ctx.write_table(&table)?
        }
    }
    if passed {
        Ok(())
    } else {
        Err(Failed(format!("{}: verification failed", model.name)).into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_row_major() {
        let axes = [
            Axis::parse("0:1:2").unwrap(),
            Axis::parse("-1:1:3").unwrap(),
        ];
        let pts = grid_points(&axes);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], vec![0.0, -1.0]);
        assert_eq!(pts[1], vec![0.0, 0.0]);
        assert_eq!(pts[5], vec![1.0, 1.0]);
        assert_eq!(Axis::parse("2:5:1").unwrap().value(0), 2.0);
    }

    #[test]
    fn bad_axes_are_usage_errors() {
        for s in ["0:1", "0:1:0", "a:1:2", "0:inf:2"] {
            let e = Axis::parse(s).unwrap_err();
            assert!(e.downcast_ref::<Usage>().is_some(), "{s}");
        }
    }

    #[test]
    fn vectors_parse() {
        assert_eq!(parse_vector("0, 0.7,-1e-3").unwrap(), vec![0.0, 0.7, -1e-3]);
        assert!(parse_vector("1,,2").is_err());
    }
}
