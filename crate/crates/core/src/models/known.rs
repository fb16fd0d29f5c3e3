//! Checks a model's stored known answers against the classifier.

use serde::{Deserialize, Serialize};

use super::{Expectation, FactorizedModel, Provenance};
use crate::classifier::{classify, Tolerances};
use crate::error::Result;
use crate::geomflow::{desingularized_equilibria, NewtonConfig};
use crate::tensorkit::DenseMatrix;

/// Tolerance for coefficient comparisons, relative to `max(1, |expected|)`.
pub const COEFFICIENT_TOL: f64 = 1e-8;
/// Samples taken along each known curve. Even, so the midpoint (a cusp on
/// every built-in curve) is skipped.
pub const CURVE_SAMPLES: usize = 4;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KnownCheck {
    pub label: String,
    pub point: Vec<f64>,
    pub provenance: Provenance,
    pub passed: bool,
    /// Mismatches, empty when the check passed.
    pub problems: Vec<String>,
}

fn close(got: f64, want: f64) -> bool {
    (got - want).abs() <= COEFFICIENT_TOL * want.abs().max(1.0)
}

// Rows are compared up to a common positive scale and a sign per row.
fn rows_parallel(got: &DenseMatrix, want: &[Vec<f64>]) -> bool {
    if got.rows() != want.len() {
        return false;
    }
    want.iter().enumerate().all(|(i, w)| {
        let g = got.row(i);
        if g.len() != w.len() {
            return false;
        }
        let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if wn == 0.0 || gn == 0.0 {
            return wn == gn;
        }
        let dot: f64 = g.iter().zip(w).map(|(a, b)| a * b).sum();
        (dot.abs() / (gn * wn) - 1.0).abs() <= 1e-8
    })
}

fn check_point(
    model: &FactorizedModel,
    label: &str,
    z: &[f64],
    expect: &Expectation,
    provenance: Provenance,
    tol: &Tolerances,
) -> Result<KnownCheck> {
    let p = model.provider();
    let mut problems = Vec::new();
    match expect {
        Expectation::Contact {
            order,
            slow_generic,
            fold_coefficient,
            third_order_coefficient,
            c0,
        } => {
            let d = classify(&p, z, tol)?;
            if d.verdict.order() != Some(*order) {
                problems.push(format!(
                    "expected contact order {order}, got {}",
                    d.verdict.label()
                ));
            }
            if let (
                Some(want),
                crate::Verdict::Contact {
                    slow_generic: got, ..
                },
            ) = (slow_generic, &d.verdict)
            {
                if want != got {
                    problems.push(format!("slow_generic {got}, expected {want}"));
                }
            }
            for (name, want, got) in [
                ("fold coefficient", fold_coefficient, d.fold_coefficient),
                (
                    "third-order coefficient",
                    third_order_coefficient,
                    d.cusp_coefficient,
                ),
            ] {
                if let Some(w) = want {
                    match got {
                        Some(g) if close(g, *w) => {}
                        Some(g) => problems.push(format!("{name} {g:.12e}, expected {w:.12e}")),
                        None => problems.push(format!("{name} missing")),
                    }
                }
            }
            if let Some(want) = c0 {
                match &d.c0 {
                    Some(got) if rows_parallel(got, want) => {}
                    Some(got) => problems.push(format!(
                        "C0 rows {:?} not parallel to {want:?}",
                        got.to_rows()
                    )),
                    None => problems.push("C0 missing".into()),
                }
            }
        }
        Expectation::NormallyHyperbolic { eigenvalues } => {
            let d = classify(&p, z, tol)?;
            if d.verdict != crate::Verdict::NormallyHyperbolic {
                problems.push(format!(
                    "expected normally_hyperbolic, got {}",
                    d.verdict.label()
                ));
            }
            let mut got: Vec<f64> = d.eigenvalues.iter().map(|e| e[0]).collect();
            let mut want = eigenvalues.clone();
            got.sort_by(f64::total_cmp);
            want.sort_by(f64::total_cmp);
            if got.len() != want.len() || got.iter().zip(&want).any(|(g, w)| !close(*g, *w)) {
                problems.push(format!("eigenvalues {got:?}, expected {want:?}"));
            }
        }
        Expectation::DesingularizedEquilibrium { saddle_focus } => {
            match desingularized_equilibria(&p, z, &NewtonConfig::default()) {
                Ok(eq) => {
                    let moved = eq
                        .point
                        .iter()
                        .zip(z)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    if moved > 1e-8 {
                        problems.push(format!("zero of N found {moved:.3e} away"));
                    }
                    if eq.is_saddle_focus() != *saddle_focus {
                        problems.push(format!(
                            "saddle-focus {}, expected {saddle_focus}",
                            eq.is_saddle_focus()
                        ));
                    }
                }
                Err(e) => problems.push(e.to_string()),
            }
        }
    }
    Ok(KnownCheck {
        label: label.to_string(),
        point: z.to_vec(),
        provenance,
        passed: problems.is_empty(),
        problems,
    })
}

/// Classifies every known point, and samples along every known curve, of `model`.
pub fn verify_known_answers(model: &FactorizedModel, tol: &Tolerances) -> Result<Vec<KnownCheck>> {
    let mut out = Vec::new();
    for kp in &model.known.points {
        out.push(check_point(
            model,
            &kp.label,
            &kp.point,
            &kp.expect,
            kp.provenance,
            tol,
        )?);
    }
    for curve in &model.known.curves {
        let (a, b) = curve.range;
        for i in 0..CURVE_SAMPLES {
            let s = a + (b - a) * (i as f64 + 0.5) / CURVE_SAMPLES as f64;
            let z = (curve.point)(s);
            let expect = Expectation::Contact {
                order: 1,
                slow_generic: None,
                fold_coefficient: curve.fold_coefficient.as_ref().map(|f| f(s)),
                third_order_coefficient: None,
                c0: None,
            };
            let label = format!("{} @ {s:.4}", curve.label);
            out.push(check_point(
                model,
                &label,
                &z,
                &expect,
                curve.provenance,
                tol,
            )?);
        }
    }
    Ok(out)
}
