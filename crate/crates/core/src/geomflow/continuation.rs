//! Pseudo-arclength continuation of the contact curve `{f = 0, det(Df N) = 0}`
//! for systems with two slow variables.

use serde::{Deserialize, Serialize};

use super::newton::{
    contact_jacobian, contact_residual, find_contact_point, gauss_newton, NewtonConfig,
};
use crate::classifier::{classify_with, Tolerances, Verdict, DEFAULT_MAX_ORDER};
use crate::derivatives::DerivativeProvider;
use crate::error::{Error, Result};
use crate::models::{Domain, FactorizedModel};
use crate::tensorkit::{dot, norm2, norm_inf, null_vector, DenseMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationConfig {
    /// Initial step as a fraction of the domain scale.
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub max_points: usize,
    pub newton: NewtonConfig,
    pub tolerances: Tolerances,
    pub max_order: usize,
    /// Preferred initial direction; otherwise the largest tangent component is made positive.
    pub direction: Option<Vec<f64>>,
    /// Arclength resolution of located events.
    pub event_tol: f64,
    /// Stop box; the model domain when unset.
    pub domain: Option<Domain>,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            initial_step: 0.01,
            min_step: 1e-6,
            max_step: 0.1,
            max_points: 5000,
            newton: NewtonConfig {
                residual_tol: 1e-11,
                ..NewtonConfig::default()
            },
            tolerances: Tolerances::default(),
            max_order: DEFAULT_MAX_ORDER,
            direction: None,
            event_tol: 1e-10,
            domain: None,
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        self.newton.validate()?;
        self.tolerances.validate()?;
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(pos(self.initial_step)
            && pos(self.min_step)
            && pos(self.max_step)
            && pos(self.event_tol))
        {
            return Err(Error::Numerical(
                "continuation step settings must be positive".into(),
            ));
        }
        if self.min_step > self.max_step || self.max_points < 2 {
            return Err(Error::Numerical(
                "min_step must not exceed max_step; max_points >= 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    DomainExit,
    StepFailure,
    ClosedLoop,
    MaxPoints,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchPoint {
    pub z: Vec<f64>,
    pub arclength: f64,
    pub tangent: Vec<f64>,
    /// `‖[f; det Df N]‖_∞`
    pub residual: f64,
    pub verdict: Verdict,
    pub label: String,
    pub fold_coefficient: Option<f64>,
    pub cusp_coefficient: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchEventKind {
    /// The fold coefficient changes sign.
    FoldCoefficientZero,
    /// The classifier label changes.
    VerdictChange,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchEvent {
    pub kind: BranchEventKind,
    pub arclength: f64,
    pub z: Vec<f64>,
    pub before: String,
    pub after: String,
    /// Classification of the located point itself.
    pub verdict: Verdict,
    pub label: String,
    pub fold_coefficient: Option<f64>,
    pub cusp_coefficient: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub step_sizes: Vec<f64>,
    pub events: Vec<BranchEvent>,
    pub termination: Termination,
    /// Set by [`continue_contact_curve_both`] for the negative-arclength half.
    pub reverse_termination: Option<Termination>,
}

impl Branch {
    pub fn cusps(&self) -> impl Iterator<Item = &BranchEvent> {
        self.events.iter().filter(|e| e.label == "cusp")
    }
}

struct Tracer<'a> {
    p: DerivativeProvider<'a>,
    cfg: &'a ContinuationConfig,
    domain: Domain,
}

impl<'a> Tracer<'a> {
    fn residual(&self, z: &[f64]) -> Result<f64> {
        Ok(norm_inf(&contact_residual(&self.p, z, None)?))
    }

    fn tangent(&self, z: &[f64], orient: Option<&[f64]>) -> Result<Vec<f64>> {
        let j = contact_jacobian(&self.p, z, None)?;
        let mut t = null_vector(&j)?;
        let nrm = norm2(&t);
        if nrm.is_nan() || nrm <= 0.0 {
            return Err(Error::Numerical("degenerate tangent".into()));
        }
        t.iter_mut().for_each(|v| *v /= nrm);
        let flip = match orient {
            Some(o) => dot(&t, o) < 0.0,
            None => {
                let big = t
                    .iter()
                    .copied()
                    .fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
                big < 0.0
            }
        };
        if flip {
            t.iter_mut().for_each(|v| *v = -*v);
        }
        Ok(t)
    }

    /// Newton on `[f; det Df N; normal·(z − pred)]`.
    fn correct(&self, pred: &[f64], normal: &[f64]) -> Option<Vec<f64>> {
        let res = |z: &[f64]| -> Result<Vec<f64>> {
            let mut r = contact_residual(&self.p, z, None)?;
            r.push(
                normal
                    .iter()
                    .zip(z.iter().zip(pred))
                    .map(|(c, (a, b))| c * (a - b))
                    .sum(),
            );
            Ok(r)
        };
        let jac = |z: &[f64]| -> Result<DenseMatrix> {
            contact_jacobian(&self.p, z, None)?.vstack(&DenseMatrix::row_vector(normal))
        };
        gauss_newton(&res, &jac, pred, &self.cfg.newton)
            .ok()
            .map(|o| o.point)
    }

    fn inside(&self, z: &[f64]) -> bool {
        z.iter()
            .zip(self.domain.lower.iter().zip(&self.domain.upper))
            .all(|(x, (lo, hi))| *x >= lo - 1e-9 && *x <= hi + 1e-9)
    }

    fn point(&self, z: Vec<f64>, arclength: f64, tangent: Vec<f64>) -> Result<BranchPoint> {
        let residual = self.residual(&z)?;
        let (verdict, fold, cusp) =
            match classify_with(&self.p, &z, &self.cfg.tolerances, self.cfg.max_order) {
                Ok(d) => (d.verdict, d.fold_coefficient, d.cusp_coefficient),
                Err(e) => (
                    Verdict::Inconclusive {
                        reason: e.to_string(),
                    },
                    None,
                    None,
                ),
            };
        Ok(BranchPoint {
            label: verdict.label(),
            z,
            arclength,
            tangent,
            residual,
            verdict,
            fold_coefficient: fold,
            cusp_coefficient: cusp,
        })
    }

    /// Point of the curve on the hyperplane through `a + θ(b − a)` normal to the chord.
    fn chord_point(&self, a: &BranchPoint, b: &BranchPoint, theta: f64) -> Option<BranchPoint> {
        let chord: Vec<f64> = b.z.iter().zip(&a.z).map(|(x, y)| x - y).collect();
        let len = norm2(&chord);
        if len == 0.0 {
            return None;
        }
        let normal: Vec<f64> = chord.iter().map(|c| c / len).collect();
        let pred: Vec<f64> = a.z.iter().zip(&chord).map(|(x, c)| x + theta * c).collect();
        let z = self.correct(&pred, &normal)?;
        let s = a.arclength + theta * (b.arclength - a.arclength);
        self.point(z, s, normal).ok()
    }

    fn locate(&self, a: &BranchPoint, b: &BranchPoint) -> Vec<BranchEvent> {
        let mut out = Vec::new();
        let span = (b.arclength - a.arclength).abs();
        let sign_change = match (a.fold_coefficient, b.fold_coefficient) {
            (Some(fa), Some(fb)) => fa * fb < 0.0,
            _ => false,
        };
        if sign_change {
            let fa = a.fold_coefficient.unwrap_or(0.0);
            let fb = b.fold_coefficient.unwrap_or(0.0);
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            let mut best: Option<BranchPoint> = None;
            while (hi - lo) * span > self.cfg.event_tol {
                let mid = 0.5 * (lo + hi);
                let Some(pm) = self.chord_point(a, b, mid) else {
                    break;
                };
                match pm.fold_coefficient {
                    Some(0.0) => {
                        lo = mid;
                        hi = mid;
                        best = Some(pm);
                        break;
                    }
                    Some(fm) if (fm > 0.0) == (fa > 0.0) => lo = mid,
                    Some(_) => hi = mid,
                    None => break,
                }
                best = Some(pm);
            }
            if let Some(pe) = best.or_else(|| self.chord_point(a, b, 0.5 * (lo + hi))) {
                // A genuine zero, not a normalization flip of the nullvectors.
                let scale = fa.abs().max(fb.abs()).max(1.0);
                if pe.fold_coefficient.is_some_and(|f| f.abs() <= 1e-6 * scale) {
                    out.push(event(BranchEventKind::FoldCoefficientZero, a, b, pe));
                }
            }
        } else if a.label != b.label {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            let mut far = b.clone();
            while (hi - lo) * span > self.cfg.event_tol {
                let mid = 0.5 * (lo + hi);
                let Some(pm) = self.chord_point(a, b, mid) else {
                    break;
                };
                if pm.label == a.label {
                    lo = mid;
                } else {
                    hi = mid;
                    far = pm;
                }
            }
            out.push(event(BranchEventKind::VerdictChange, a, b, far));
        }
        out
    }
}

fn event(kind: BranchEventKind, a: &BranchPoint, b: &BranchPoint, at: BranchPoint) -> BranchEvent {
    BranchEvent {
        kind,
        arclength: at.arclength,
        z: at.z,
        before: a.label.clone(),
        after: b.label.clone(),
        label: at.label,
        verdict: at.verdict,
        fold_coefficient: at.fold_coefficient,
        cusp_coefficient: at.cusp_coefficient,
    }
}

/// Traces the contact curve through `z0` in one direction.
pub fn continue_contact_curve(
    model: &FactorizedModel,
    z0: &[f64],
    cfg: &ContinuationConfig,
) -> Result<Branch> {
    cfg.validate()?;
    if model.k() != 2 {
        return Err(Error::Unsupported(format!(
            "contact-curve continuation needs two slow variables (k = {})",
            model.k()
        )));
    }
    if z0.len() != model.n() {
        return Err(Error::dim(format!("expected {} coordinates", model.n())));
    }
    let tracer = Tracer {
        p: model.provider(),
        cfg,
        domain: cfg.domain.clone().unwrap_or_else(|| model.domain.clone()),
    };
    let scale = tracer.domain.scale().max(f64::MIN_POSITIVE);
    let (h_min, h_max) = (cfg.min_step * scale, cfg.max_step * scale);

    let r0 = tracer.residual(z0)?;
    if r0 > 1e-6 {
        return Err(Error::Search(format!(
            "starting point is not on the contact curve (residual {r0:.3e})"
        )));
    }
    let start = find_contact_point(&tracer.p, z0, None, &cfg.newton)?.point;
    let t0 = tracer.tangent(&start, cfg.direction.as_deref())?;
    let mut points = vec![tracer.point(start.clone(), 0.0, t0)?];
    let mut step_sizes = Vec::new();
    let mut events = Vec::new();
    let mut h = (cfg.initial_step * scale).clamp(h_min, h_max);
    let mut successes = 0;

    let termination = loop {
        if points.len() >= cfg.max_points {
            break Termination::MaxPoints;
        }
        let cur = points.last().expect("nonempty");
        let dir: Vec<f64> = if points.len() >= 2 {
            let prev = &points[points.len() - 2];
            let sec: Vec<f64> = cur.z.iter().zip(&prev.z).map(|(a, b)| a - b).collect();
            let n = norm2(&sec);
            sec.iter().map(|v| v / n).collect()
        } else {
            cur.tangent.clone()
        };
        let pred: Vec<f64> = cur.z.iter().zip(&dir).map(|(z, d)| z + h * d).collect();
        let accepted = tracer.correct(&pred, &dir).filter(|z| {
            let d: Vec<f64> = z.iter().zip(&cur.z).map(|(a, b)| a - b).collect();
            norm2(&d) <= 2.0 * h && dot(&d, &dir) > 0.0
        });
        let Some(z) = accepted else {
            successes = 0;
            h *= 0.5;
            if h < h_min {
                break Termination::StepFailure;
            }
            continue;
        };
        if !tracer.inside(&z) {
            break Termination::DomainExit;
        }
        let Ok(t) = tracer.tangent(&z, Some(&cur.tangent)) else {
            h *= 0.5;
            if h < h_min {
                break Termination::StepFailure;
            }
            continue;
        };
        let ds = norm2(&z.iter().zip(&cur.z).map(|(a, b)| a - b).collect::<Vec<_>>());
        let s = cur.arclength + ds;
        let next = tracer.point(z, s, t)?;
        for e in tracer.locate(cur, &next) {
            if !events.iter().any(|o: &BranchEvent| {
                (o.arclength - e.arclength).abs() <= 1e-8 && o.kind == e.kind
            }) {
                events.push(e);
            }
        }
        let closed = s > 4.0 * h
            && norm2(
                &next
                    .z
                    .iter()
                    .zip(&start)
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            ) < 0.5 * h;
        step_sizes.push(h);
        points.push(next);
        if closed {
            break Termination::ClosedLoop;
        }
        successes += 1;
        if successes >= 3 {
            h = (h * 1.3).min(h_max);
            successes = 0;
        }
    };

    Ok(Branch {
        points,
        step_sizes,
        events,
        termination,
        reverse_termination: None,
    })
}

/// Traces the curve through `z0` in both directions and joins the halves,
/// with negative arclength on the reverse side.
pub fn continue_contact_curve_both(
    model: &FactorizedModel,
    z0: &[f64],
    cfg: &ContinuationConfig,
) -> Result<Branch> {
    let fwd = continue_contact_curve(model, z0, cfg)?;
    let t0 = fwd.points[0].tangent.clone();
    let back_cfg = ContinuationConfig {
        direction: Some(t0.iter().map(|v| -v).collect()),
        ..cfg.clone()
    };
    let back = continue_contact_curve(model, z0, &back_cfg)?;
    let mut points: Vec<BranchPoint> = back
        .points
        .into_iter()
        .skip(1)
        .rev()
        .map(|mut p| {
            p.arclength = -p.arclength;
            p.tangent.iter_mut().for_each(|v| *v = -*v);
            p
        })
        .collect();
    points.extend(fwd.points);
    let mut step_sizes: Vec<f64> = back.step_sizes.into_iter().rev().collect();
    step_sizes.extend(fwd.step_sizes);
    let mut events: Vec<BranchEvent> = back
        .events
        .into_iter()
        .map(|mut e| {
            e.arclength = -e.arclength;
            std::mem::swap(&mut e.before, &mut e.after);
            e
        })
        .collect();
    for e in fwd.events {
        if !events
            .iter()
            .any(|o| (o.arclength - e.arclength).abs() <= 1e-8 && o.kind == e.kind)
        {
            events.push(e);
        }
    }
    events.sort_by(|a, b| a.arclength.total_cmp(&b.arclength));
    Ok(Branch {
        points,
        step_sizes,
        events,
        termination: fwd.termination,
        reverse_termination: Some(back.termination),
    })
}
