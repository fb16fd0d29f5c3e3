//! Integration of the full system and of the desingularized layer flow.

use super::ode::{integrate, EventFn, IntegratorConfig, StepStats, Trajectory, TrajectoryStatus};
use crate::error::{Error, Result};
use crate::models::FactorizedModel;
use crate::tensorkit::determinant;

/// Integrates `z' = N f + ε G`, logging crossings of each `f_i = 0` and of
/// `det(Df N) = 0`.
pub fn integrate_full(
    model: &FactorizedModel,
    z0: &[f64],
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    if z0.len() != model.n() {
        return Err(Error::dim(format!("expected {} coordinates", model.n())));
    }
    let p = model.provider();
    let rhs = |z: &[f64]| model.eval_full(z);
    let m = model.m();
    let mut events: Vec<EventFn<'_>> = (0..m)
        .map(|i| {
            let name = if m == 1 {
                "f".to_string()
            } else {
                format!("f{}", i + 1)
            };
            let p = &p;
            EventFn::new(name, move |z: &[f64]| p.f(z).map_or(f64::NAN, |f| f[i]))
        })
        .collect();
    let pd = &p;
    events.push(EventFn::new("det_dfn", move |z: &[f64]| {
        pd.dfn(z).and_then(|d| determinant(&d)).unwrap_or(f64::NAN)
    }));
    integrate(&rhs, z0, t_span, cfg, &events)
}

/// Fibers of the layer problem: `z' = N(z)` integrated backward to
/// `t_span.0` and forward to `t_span.1` from each seed, joined into one
/// trajectory per seed. Integration stops at `cfg.stop_box`, or at the
/// model's fiber domain when none is set.
pub fn fiber_family(
    model: &FactorizedModel,
    seeds: &[Vec<f64>],
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Vec<Trajectory>> {
    if model.m() != 1 {
        return Err(Error::Unsupported(
            "fibers need a single fast direction (m = 1)".into(),
        ));
    }
    let (t_back, t_fwd) = t_span;
    if !(t_back <= 0.0 && t_fwd >= 0.0) {
        return Err(Error::Numerical("fiber time span must contain 0".into()));
    }
    let cfg = IntegratorConfig {
        stop_box: cfg
            .stop_box
            .clone()
            .or_else(|| Some(model.fiber_domain.clone())),
        ..cfg.clone()
    };
    let p = model.provider();
    let rhs = |z: &[f64]| -> Result<Vec<f64>> { Ok(p.n_matrix(z)?.column(0)) };
    let events = [EventFn::new("f", |z: &[f64]| {
        p.f(z).map_or(f64::NAN, |f| f[0])
    })];
    let run = |seed: &[f64], t1: f64| -> Result<Trajectory> {
        match integrate(&rhs, seed, (0.0, t1), &cfg, &events) {
            Err(Error::Integration { partial, .. }) => Ok(*partial),
            other => other,
        }
    };
    seeds
        .iter()
        .map(|seed| {
            if seed.len() != model.n() {
                return Err(Error::dim(format!("expected {} coordinates", model.n())));
            }
            let back = run(seed, t_back)?;
            let fwd = run(seed, t_fwd)?;
            Ok(join(back, fwd))
        })
        .collect()
}

fn join(back: Trajectory, fwd: Trajectory) -> Trajectory {
    let n_back = back.times.len();
    let mut times: Vec<f64> = back.times.iter().rev().copied().collect();
    let mut states: Vec<Vec<f64>> = back.states.iter().rev().cloned().collect();
    // Step sizes belong to the step arriving at each state in increasing time.
    let mut step_sizes: Vec<f64> = Vec::with_capacity(n_back + fwd.times.len());
    step_sizes.push(0.0);
    step_sizes.extend(
        back.step_sizes
            .iter()
            .skip(1)
            .rev()
            .take(n_back.saturating_sub(1)),
    );
    step_sizes.truncate(n_back);
    times.extend(fwd.times.iter().skip(1));
    states.extend(fwd.states.iter().skip(1).cloned());
    step_sizes.extend(fwd.step_sizes.iter().skip(1));
    let mut events = back.events;
    events.extend(fwd.events);
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    let status = match (back.status, fwd.status) {
        (TrajectoryStatus::Failed, _) | (_, TrajectoryStatus::Failed) => TrajectoryStatus::Failed,
        (TrajectoryStatus::LeftDomain, _) | (_, TrajectoryStatus::LeftDomain) => {
            TrajectoryStatus::LeftDomain
        }
        _ => TrajectoryStatus::Completed,
    };
    Trajectory {
        times,
        states,
        step_sizes,
        stats: StepStats {
            accepted: back.stats.accepted + fwd.stats.accepted,
            rejected: back.stats.rejected + fwd.stats.rejected,
            evaluations: back.stats.evaluations + fwd.stats.evaluations,
        },
        events,
        status,
    }
}
