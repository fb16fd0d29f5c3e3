//! Dormand–Prince 5(4) with PI step control, cubic Hermite dense output and
//! sign-change event location.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Domain;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub atol: f64,
    pub rtol: f64,
    pub initial_step: Option<f64>,
    pub max_step: Option<f64>,
    /// Steps below `min_step · max(1, |t|)` count as underflow.
    pub min_step: f64,
    pub max_steps: usize,
    /// Stop (without error) when the state leaves this box.
    pub stop_box: Option<Domain>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            atol: 1e-10,
            rtol: 1e-8,
            initial_step: None,
            max_step: None,
            min_step: 1e-13,
            max_steps: 2_000_000,
            stop_box: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(pos(self.atol) && pos(self.rtol) && pos(self.min_step) && self.max_steps > 0) {
            return Err(Error::Numerical(
                "integrator tolerances must be positive".into(),
            ));
        }
        if self.initial_step.is_some_and(|h| !pos(h)) || self.max_step.is_some_and(|h| !pos(h)) {
            return Err(Error::Numerical("step bounds must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub state: Vec<f64>,
    /// Name of the event function that changed sign.
    pub kind: String,
    /// `+1` for a − → + crossing, `−1` otherwise.
    pub direction: i8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Completed,
    LeftDomain,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Size of the step that produced each state (0 for the initial state).
    pub step_sizes: Vec<f64>,
    pub stats: StepStats,
    pub events: Vec<Event>,
    pub status: TrajectoryStatus,
}

impl Trajectory {
    fn start(t0: f64, y0: &[f64]) -> Self {
        Self {
            times: vec![t0],
            states: vec![y0.to_vec()],
            step_sizes: vec![0.0],
            stats: StepStats::default(),
            events: Vec::new(),
            status: TrajectoryStatus::Completed,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Box containing every state.
    pub fn bounds(&self) -> Option<Domain> {
        let first = self.states.first()?;
        let mut lo = first.clone();
        let mut hi = first.clone();
        for s in &self.states {
            for (i, v) in s.iter().enumerate() {
                lo[i] = lo[i].min(*v);
                hi[i] = hi[i].max(*v);
            }
        }
        Some(Domain::new(lo, hi))
    }

    /// First pair of times `(t_j, t_i)` such that the state at `t_i` is
    /// within `tol` (max-norm) of the earlier state at `t_j` after having
    /// moved at least `excursion` away from it in between.
    pub fn recurrence(&self, tol: f64, excursion: f64) -> Option<(f64, f64)> {
        let dist = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        // Subsample to keep the quadratic search cheap.
        let stride = (self.len() / 4000).max(1);
        let idx: Vec<usize> = (0..self.len()).step_by(stride).collect();
        for (a, &j) in idx.iter().enumerate() {
            let mut left = false;
            for &i in &idx[a + 1..] {
                let d = dist(&self.states[i], &self.states[j]);
                if d >= excursion {
                    left = true;
                } else if left && d <= tol {
                    return Some((self.times[j], self.times[i]));
                }
            }
        }
        None
    }
}

type ScalarFn<'a> = Box<dyn Fn(&[f64]) -> f64 + 'a>;

/// A scalar function whose sign changes are logged as events.
pub struct EventFn<'a> {
    pub name: String,
    pub func: ScalarFn<'a>,
}

impl<'a> EventFn<'a> {
    pub fn new(name: impl Into<String>, func: impl Fn(&[f64]) -> f64 + 'a) -> Self {
        Self {
            name: name.into(),
            func: Box::new(func),
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

type Rhs<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a;

struct StepResult {
    y: Vec<f64>,
    f: Vec<f64>,
    err: Vec<f64>,
}

fn lin(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for (c, k) in terms {
        if *c != 0.0 {
            for (o, v) in out.iter_mut().zip(k.iter()) {
                *o += h * c * v;
            }
        }
    }
    out
}

/// One Dormand–Prince step from `(y, k1 = f(y))` of size `h`.
fn dopri_step(
    rhs: &Rhs<'_>,
    y: &[f64],
    k1: &[f64],
    h: f64,
    stats: &mut StepStats,
) -> Result<StepResult> {
    let k2 = rhs(&lin(y, h, &[(A21, k1)]))?;
    let k3 = rhs(&lin(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = rhs(&lin(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = rhs(&lin(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
    let k6 = rhs(&lin(
        y,
        h,
        &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
    ))?;
    let y_new = lin(
        y,
        h,
        &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
    );
    let k7 = rhs(&y_new)?;
    stats.evaluations += 6;
    let err = (0..y.len())
        .map(|i| h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]))
        .collect();
    let _ = (C2, C3, C4, C5);
    Ok(StepResult {
        y: y_new,
        f: k7,
        err,
    })
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], cfg: &IntegratorConfig) -> f64 {
    let n = err.len() as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = cfg.atol + cfg.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

fn initial_step(
    rhs: &Rhs<'_>,
    y0: &[f64],
    f0: &[f64],
    cfg: &IntegratorConfig,
    dir: f64,
    stats: &mut StepStats,
) -> Result<f64> {
    let sc: Vec<f64> = y0.iter().map(|y| cfg.atol + cfg.rtol * y.abs()).collect();
    let norm = |v: &[f64]| {
        (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let d0 = norm(y0);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1 = lin(y0, dir * h0, &[(1.0, f0)]);
    let f1 = rhs(&y1)?;
    stats.evaluations += 1;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1))
}

/// Cubic Hermite interpolant on `[t0, t0 + h]` at fraction `theta`.
fn hermite(y0: &[f64], f0: &[f64], y1: &[f64], f1: &[f64], h: f64, theta: f64) -> Vec<f64> {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    (0..y0.len())
        .map(|i| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i])
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn locate_event(
    rhs: &Rhs<'_>,
    ev: &EventFn<'_>,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    y1: &[f64],
    f1: &[f64],
    h: f64,
    g0: f64,
    stats: &mut StepStats,
) -> Result<(f64, Vec<f64>)> {
    // Bisection on the dense output.
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut ga = g0;
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        let gm = (ev.func)(&hermite(y0, f0, y1, f1, h, mid));
        if gm == 0.0 {
            a = mid;
            b = mid;
            break;
        }
        if (gm > 0.0) == (ga > 0.0) {
            a = mid;
            ga = gm;
        } else {
            b = mid;
        }
        if b - a < 1e-14 {
            break;
        }
    }
    // Polish with regula falsi (Illinois) on fresh Runge–Kutta substeps,
    // widening the bracket slightly around the dense-output estimate.
    let state_at = |theta: f64, stats: &mut StepStats| -> Result<Vec<f64>> {
        if theta <= 0.0 {
            return Ok(y0.to_vec());
        }
        Ok(dopri_step(rhs, y0, f0, theta * h, stats)?.y)
    };
    let width = (b - a).max(1e-9);
    let mut lo = (a - width).max(0.0);
    let mut hi = (b + width).min(1.0);
    let mut y_lo = state_at(lo, stats)?;
    let mut y_hi = state_at(hi, stats)?;
    let mut g_lo = (ev.func)(&y_lo);
    let mut g_hi = (ev.func)(&y_hi);
    if (g_lo > 0.0) == (g_hi > 0.0) && g_lo != 0.0 && g_hi != 0.0 {
        let theta = 0.5 * (a + b);
        return Ok((t0 + theta * h, hermite(y0, f0, y1, f1, h, theta)));
    }
    let mut side = 0i8;
    let mut best = (lo, y_lo.clone(), g_lo.abs());
    for _ in 0..40 {
        if g_lo == 0.0 {
            best = (lo, y_lo.clone(), 0.0);
            break;
        }
        if g_hi == 0.0 {
            best = (hi, y_hi.clone(), 0.0);
            break;
        }
        let theta = (lo * g_hi - hi * g_lo) / (g_hi - g_lo);
        let theta = if theta.is_finite() && theta > lo && theta < hi {
            theta
        } else {
            0.5 * (lo + hi)
        };
        let y = state_at(theta, stats)?;
        let g = (ev.func)(&y);
        if g.abs() < best.2 {
            best = (theta, y.clone(), g.abs());
        }
        if (g > 0.0) == (g_lo > 0.0) {
            lo = theta;
            y_lo = y;
            g_lo = g;
            if side == -1 {
                g_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = theta;
            y_hi = y;
            g_hi = g;
            if side == 1 {
                g_lo *= 0.5;
            }
            side = 1;
        }
        if (hi - lo) * h.abs() <= 1e-14 * (1.0 + t0.abs()) {
            break;
        }
    }
    Ok((t0 + best.0 * h, best.1))
}

/// Integrates the autonomous system `y' = rhs(y)` from `t_span.0` to
/// `t_span.1` (either direction), logging sign changes of `events`.
pub fn integrate(
    rhs: &Rhs<'_>,
    y0: &[f64],
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
    events: &[EventFn<'_>],
) -> Result<Trajectory> {
    cfg.validate()?;
    let (t0, t1) = t_span;
    if !(t0.is_finite() && t1.is_finite()) || y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite initial data".into()));
    }
    let mut traj = Trajectory::start(t0, y0);
    if t0 == t1 {
        return Ok(traj);
    }
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let fail = |traj: Trajectory, t: f64, reason: String| -> Error {
        let mut partial = traj;
        partial.status = TrajectoryStatus::Failed;
        Error::Integration {
            t,
            reason,
            partial: Box::new(partial),
        }
    };

    let mut y = y0.to_vec();
    let mut f = match rhs(&y) {
        Ok(f) => f,
        Err(e) => return Err(fail(traj, t0, e.to_string())),
    };
    traj.stats.evaluations += 1;
    let mut h = match cfg.initial_step {
        Some(h) => h,
        None => match initial_step(rhs, &y, &f, cfg, dir, &mut traj.stats) {
            Ok(h) => h,
            Err(e) => return Err(fail(traj, t0, e.to_string())),
        },
    };
    let max_step = cfg.max_step.unwrap_or(span).min(span);
    h = h.min(max_step);
    let mut t = t0;
    let mut g_prev: Vec<f64> = events.iter().map(|e| (e.func)(&y)).collect();
    let mut facold = 1e-4f64;
    let mut last_rejected = false;
    const BETA: f64 = 0.04;
    const EXPO1: f64 = 0.2 - BETA * 0.75;
    const SAFE: f64 = 0.9;

    let mut steps = 0;
    loop {
        let remaining = (t1 - t) * dir;
        if remaining <= 1e-14 * span.max(1.0) {
            break;
        }
        steps += 1;
        if steps > cfg.max_steps {
            let r = format!("exceeded {} steps", cfg.max_steps);
            return Err(fail(traj, t, r));
        }
        let final_step = h >= remaining;
        if final_step {
            h = remaining;
        }
        if h < cfg.min_step * t.abs().max(1.0) {
            return Err(fail(traj, t, format!("step size underflow (h = {h:.3e})")));
        }
        let step = match dopri_step(rhs, &y, &f, dir * h, &mut traj.stats) {
            Ok(s) => s,
            Err(_) => {
                // Treat evaluation failure as a rejected step.
                traj.stats.rejected += 1;
                h *= 0.25;
                last_rejected = true;
                continue;
            }
        };
        let err = error_norm(&step.err, &y, &step.y, cfg);
        if !err.is_finite() {
            traj.stats.rejected += 1;
            h *= 0.25;
            last_rejected = true;
            continue;
        }
        let fac11 = err.powf(EXPO1);
        if err <= 1.0 {
            let t_new = if final_step { t1 } else { t + dir * h };
            // Events on this step.
            let g_new: Vec<f64> = events.iter().map(|e| (e.func)(&step.y)).collect();
            let mut found: Vec<Event> = Vec::new();
            for (k, ev) in events.iter().enumerate() {
                let (ga, gb) = (g_prev[k], g_new[k]);
                let crossed = (ga < 0.0 && gb >= 0.0) || (ga > 0.0 && gb <= 0.0);
                if crossed && ga.is_finite() && gb.is_finite() {
                    match locate_event(
                        rhs,
                        ev,
                        t,
                        &y,
                        &f,
                        &step.y,
                        &step.f,
                        dir * h,
                        ga,
                        &mut traj.stats,
                    ) {
                        Ok((te, ye)) => found.push(Event {
                            t: te,
                            state: ye,
                            kind: ev.name.clone(),
                            direction: if gb > ga { 1 } else { -1 },
                        }),
                        Err(e) => return Err(fail(traj, t, e.to_string())),
                    }
                }
            }
            found.sort_by(|a, b| ((a.t - t) * dir).total_cmp(&((b.t - t) * dir)));
            traj.events.extend(found);
            g_prev = g_new;

            traj.stats.accepted += 1;
            t = t_new;
            y = step.y;
            f = step.f;
            traj.times.push(t);
            traj.states.push(y.clone());
            traj.step_sizes.push(h);

            if let Some(b) = &cfg.stop_box {
                if !b.contains(&y) {
                    traj.status = TrajectoryStatus::LeftDomain;
                    return Ok(traj);
                }
            }

            let mut fac = fac11 / facold.powf(BETA);
            fac = (fac / SAFE).clamp(0.1, 5.0);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            facold = err.max(1e-4);
            last_rejected = false;
            h = h_new.min(max_step);
        } else {
            traj.stats.rejected += 1;
            h /= (fac11 / SAFE).min(5.0);
            last_rejected = true;
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let rhs = |y: &[f64]| -> Result<Vec<f64>> { Ok(vec![-y[0]]) };
        let tr = integrate(&rhs, &[1.0], (0.0, 5.0), &IntegratorConfig::default(), &[]).unwrap();
        let y = tr.last_state()[0];
        assert!((y - (-5.0f64).exp()).abs() < 1e-9, "{y}");
        assert_eq!(*tr.times.last().unwrap(), 5.0);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn backward_harmonic_oscillator() {
        let rhs = |y: &[f64]| -> Result<Vec<f64>> { Ok(vec![y[1], -y[0]]) };
        let tr = integrate(
            &rhs,
            &[1.0, 0.0],
            (0.0, -3.0),
            &IntegratorConfig::default(),
            &[],
        )
        .unwrap();
        let y = tr.last_state();
        assert!((y[0] - 3f64.cos()).abs() < 1e-8);
        assert!((y[1] - 3f64.sin()).abs() < 1e-8);
        assert!(tr.times.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn event_location() {
        // x(t) = cos t crosses zero at π/2.
        let rhs = |y: &[f64]| -> Result<Vec<f64>> { Ok(vec![y[1], -y[0]]) };
        let ev = [EventFn::new("x", |y: &[f64]| y[0])];
        let tr = integrate(
            &rhs,
            &[1.0, 0.0],
            (0.0, 2.0),
            &IntegratorConfig::default(),
            &ev,
        )
        .unwrap();
        assert_eq!(tr.events.len(), 1);
        let e = &tr.events[0];
        assert!((e.t - std::f64::consts::FRAC_PI_2).abs() < 1e-9, "{}", e.t);
        assert!(e.state[0].abs() < 1e-10);
        assert_eq!(e.direction, -1);
    }

    #[test]
    fn failure_keeps_partial_trajectory() {
        // Blows up at t = 1.
        let rhs = |y: &[f64]| -> Result<Vec<f64>> { Ok(vec![y[0] * y[0]]) };
        let err =
            integrate(&rhs, &[1.0], (0.0, 2.0), &IntegratorConfig::default(), &[]).unwrap_err();
        match err {
            Error::Integration { t, partial, .. } => {
                assert!(t < 1.0 + 1e-6 && t > 0.9);
                assert!(partial.len() > 10);
                assert_eq!(partial.status, TrajectoryStatus::Failed);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn recurrence_on_circle() {
        let rhs = |y: &[f64]| -> Result<Vec<f64>> { Ok(vec![y[1], -y[0]]) };
        let tr = integrate(
            &rhs,
            &[1.0, 0.0],
            (0.0, 10.0),
            &IntegratorConfig::default(),
            &[],
        )
        .unwrap();
        let (tj, ti) = tr.recurrence(0.05, 0.5).unwrap();
        assert!(((ti - tj) - 2.0 * std::f64::consts::PI).abs() < 0.2);
    }
}
