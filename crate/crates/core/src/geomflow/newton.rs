//! Gauss–Newton solves: projection onto `S`, contact-point search, and
//! equilibria of the desingularized and full fields.

use serde::{Deserialize, Serialize};

use crate::derivatives::DerivativeProvider;
use crate::error::{Error, Result};
use crate::models::FactorizedModel;
use crate::tensorkit::{
    determinant, eigenvalues, min_norm_solve, norm2, norm_inf, DenseMatrix, Slot,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub max_iters: usize,
    pub step_tol: f64,
    pub residual_tol: f64,
    /// Smallest backtracking factor tried before giving up.
    pub min_damping: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            step_tol: 1e-12,
            residual_tol: 1e-12,
            min_damping: 2f64.powi(-20),
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iters > 0
            && [self.step_tol, self.residual_tol, self.min_damping]
                .iter()
                .all(|t| t.is_finite() && *t > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Numerical(
                "Newton tolerances must be positive".into(),
            ))
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NewtonOutcome {
    pub point: Vec<f64>,
    pub iterations: usize,
    /// `‖R‖_∞` at the returned point.
    pub residual: f64,
    /// Euclidean distance from the starting point.
    pub displacement: f64,
}

/// Why a Gauss–Newton solve stopped without converging.
#[derive(Clone, Debug)]
pub struct NewtonFailure {
    pub iterations: usize,
    pub residual: f64,
    pub point: Vec<f64>,
}

/// Damped Gauss–Newton with minimum-norm (pseudo-inverse) steps.
pub fn gauss_newton(
    residual: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    jacobian: &dyn Fn(&[f64]) -> Result<DenseMatrix>,
    x0: &[f64],
    cfg: &NewtonConfig,
) -> std::result::Result<NewtonOutcome, NewtonFailure> {
    let mut x = x0.to_vec();
    let fail = |iterations, residual, point: &[f64]| NewtonFailure {
        iterations,
        residual,
        point: point.to_vec(),
    };
    let Ok(mut r) = residual(&x) else {
        return Err(fail(0, f64::INFINITY, &x));
    };
    let done = |x: &[f64], r: &[f64], iterations| NewtonOutcome {
        point: x.to_vec(),
        iterations,
        residual: norm_inf(r),
        displacement: norm2(&x.iter().zip(x0).map(|(a, b)| a - b).collect::<Vec<_>>()),
    };
    for it in 0..cfg.max_iters {
        let rn = norm_inf(&r);
        if rn <= cfg.residual_tol {
            return Ok(done(&x, &r, it));
        }
        let Ok(j) = jacobian(&x) else {
            return Err(fail(it, rn, &x));
        };
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let Ok(step) = min_norm_solve(&j, &neg, 1e-13) else {
            return Err(fail(it, rn, &x));
        };
        if step.iter().any(|s| !s.is_finite()) || norm_inf(&step) == 0.0 {
            return Err(fail(it, rn, &x));
        }
        let r2 = norm2(&r);
        let mut lambda = 1.0;
        let mut accepted = None;
        while lambda >= cfg.min_damping {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + lambda * s).collect();
            if let Ok(rt) = residual(&trial) {
                if rt.iter().all(|v| v.is_finite()) && norm2(&rt) < r2 {
                    accepted = Some((trial, rt));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((xn, rnew)) = accepted else {
            // No decrease possible: accept if we are already at rounding level.
            if rn <= 1e3 * cfg.residual_tol {
                return Ok(done(&x, &r, it));
            }
            return Err(fail(it, rn, &x));
        };
        let moved = lambda * norm_inf(&step);
        x = xn;
        r = rnew;
        if moved <= cfg.step_tol * (1.0 + norm_inf(&x)) && norm_inf(&r) <= 1e3 * cfg.residual_tol {
            return Ok(done(&x, &r, it + 1));
        }
    }
    let rn = norm_inf(&r);
    if rn <= cfg.residual_tol {
        return Ok(done(&x, &r, cfg.max_iters));
    }
    Err(fail(cfg.max_iters, rn, &x))
}

/// Projects `seed` onto `S = {f = 0}` with minimum-norm Gauss–Newton steps.
pub fn project_to_s(
    p: &DerivativeProvider,
    seed: &[f64],
    cfg: &NewtonConfig,
) -> Result<NewtonOutcome> {
    cfg.validate()?;
    let res = |z: &[f64]| p.f(z);
    let jac = |z: &[f64]| p.jacobian_f(z);
    gauss_newton(&res, &jac, seed, cfg).map_err(|e| Error::Projection {
        iterations: e.iterations,
        residual: e.residual,
    })
}

/// Residual `[f; det(Df N); z_i − v]` of the contact-set equations.
pub fn contact_residual(
    p: &DerivativeProvider,
    z: &[f64],
    pin: Option<(usize, f64)>,
) -> Result<Vec<f64>> {
    let mut r = p.f(z)?;
    r.push(determinant(&p.dfn(z)?)?);
    if let Some((i, v)) = pin {
        r.push(z[i] - v);
    }
    Ok(r)
}

/// Jacobian of [`contact_residual`].
pub fn contact_jacobian(
    p: &DerivativeProvider,
    z: &[f64],
    pin: Option<(usize, f64)>,
) -> Result<DenseMatrix> {
    let mut j = p.jacobian_f(z)?;
    j = j.vstack(&DenseMatrix::row_vector(&p.det_dfn_gradient(z)?))?;
    if let Some((i, _)) = pin {
        let mut e = vec![0.0; z.len()];
        e[i] = 1.0;
        j = j.vstack(&DenseMatrix::row_vector(&e))?;
    }
    Ok(j)
}

/// Locates a point of the contact set `F = {f = 0, det(Df N) = 0}` near `seed`,
/// optionally with coordinate `pin.0` held at `pin.1`.
pub fn find_contact_point(
    p: &DerivativeProvider,
    seed: &[f64],
    pin: Option<(usize, f64)>,
    cfg: &NewtonConfig,
) -> Result<NewtonOutcome> {
    cfg.validate()?;
    let n = p.n();
    let eqs = p.m() + 1 + usize::from(pin.is_some());
    if eqs > n {
        return Err(Error::Search(format!(
            "{eqs} equations exceed dimension {n}"
        )));
    }
    if let Some((i, _)) = pin {
        if i >= n {
            return Err(Error::dim(format!("pinned coordinate {i} out of range")));
        }
    }
    let res = |z: &[f64]| contact_residual(p, z, pin);
    let jac = |z: &[f64]| contact_jacobian(p, z, pin);
    gauss_newton(&res, &jac, seed, cfg).map_err(|e| {
        Error::Search(format!(
            "contact search stalled after {} iterations (residual {:.3e})",
            e.iterations, e.residual
        ))
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Equilibrium {
    pub point: Vec<f64>,
    pub residual: f64,
    pub eigenvalues: Vec<[f64; 2]>,
}

impl Equilibrium {
    /// One real eigenvalue of one sign and a complex pair with real part of the other.
    pub fn is_saddle_focus(&self) -> bool {
        if self.eigenvalues.len() != 3 {
            return false;
        }
        let complex: Vec<&[f64; 2]> = self
            .eigenvalues
            .iter()
            .filter(|e| e[1].abs() > 1e-12)
            .collect();
        let real: Vec<&[f64; 2]> = self
            .eigenvalues
            .iter()
            .filter(|e| e[1].abs() <= 1e-12)
            .collect();
        complex.len() == 2 && real.len() == 1 && real[0][0] * complex[0][0] < 0.0
    }
}

/// Zero of `N` (codimension one) and the spectrum of its Jacobian.
pub fn desingularized_equilibria(
    p: &DerivativeProvider,
    seed: &[f64],
    cfg: &NewtonConfig,
) -> Result<Equilibrium> {
    cfg.validate()?;
    if p.m() != 1 {
        return Err(Error::Unsupported(
            "desingularized field requires m = 1".into(),
        ));
    }
    let one = [1.0];
    let res = |z: &[f64]| -> Result<Vec<f64>> { Ok(p.n_matrix(z)?.column(0)) };
    let jac = |z: &[f64]| -> Result<DenseMatrix> {
        p.dn(z)?
            .contract(&[Slot::Vector(&one), Slot::Identity])?
            .into_matrix()
    };
    let out = gauss_newton(&res, &jac, seed, cfg).map_err(|e| {
        Error::Search(format!(
            "no zero of N found near the seed (residual {:.3e} after {} iterations)",
            e.residual, e.iterations
        ))
    })?;
    let spectrum = eigenvalues(&jac(&out.point)?)?;
    Ok(Equilibrium {
        point: out.point,
        residual: out.residual,
        eigenvalues: spectrum.as_pairs(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FullEquilibrium {
    pub point: Vec<f64>,
    pub residual: f64,
    pub distance_from_seed: f64,
    pub eigenvalues: Vec<[f64; 2]>,
}

fn fd_jacobian(fun: &dyn Fn(&[f64]) -> Result<Vec<f64>>, z: &[f64]) -> Result<DenseMatrix> {
    let n = z.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let h = 1e-7 * z[j].abs().max(1.0);
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[j] += h;
        zm[j] -= h;
        let (a, b) = (fun(&zp)?, fun(&zm)?);
        cols.push(
            a.iter()
                .zip(&b)
                .map(|(x, y)| (x - y) / (2.0 * h))
                .collect::<Vec<_>>(),
        );
    }
    let rows = cols.first().map_or(0, Vec::len);
    Ok(DenseMatrix::from_fn(rows, n, |i, j| cols[j][i]))
}

/// Equilibrium of the full field `N f + ε G` near `seed`.
pub fn full_equilibrium_near(
    model: &FactorizedModel,
    seed: &[f64],
    cfg: &NewtonConfig,
) -> Result<FullEquilibrium> {
    cfg.validate()?;
    let res = |z: &[f64]| model.eval_full(z);
    let jac = |z: &[f64]| fd_jacobian(&res, z);
    let out = gauss_newton(&res, &jac, seed, cfg).map_err(|e| {
        Error::Search(format!(
            "no equilibrium of the full field near the seed (residual {:.3e})",
            e.residual
        ))
    })?;
    let spectrum = eigenvalues(&jac(&out.point)?)?;
    Ok(FullEquilibrium {
        distance_from_seed: out.displacement,
        residual: out.residual,
        eigenvalues: spectrum.as_pairs(),
        point: out.point,
    })
}
