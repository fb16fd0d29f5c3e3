//! Derivative tensors of the factors `f` and `N`, and the directional
//! derivative chains `g_{j+1} = D g_j · N r` built from them.
//!
//! Tensor layouts (index 0 is always the output):
//!
//! | tensor | dims            | entry                       |
//! |--------|-----------------|-----------------------------|
//! | `Df`   | `m × n`         | `∂f_a/∂z_i`                 |
//! | `D²f`  | `m × n × n`     | `∂²f_a/∂z_i∂z_j`            |
//! | `D³f`  | `m × n × n × n` | `∂³f_a/∂z_i∂z_j∂z_k`        |
//! | `DN`   | `n × m × n`     | `∂N_{ib}/∂z_j`              |
//! | `D²N`  | `n × m × n × n` | `∂²N_{ib}/∂z_j∂z_k`         |
//!
//! With these layouts `DN(v, r)` (derivative of `N` along `v`, applied to
//! the column weights `r`) is [`dn_apply`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorkit::{
    adjugate, determinant, dot, norm2, norm_inf, DenseMatrix, MultilinearMap, Slot,
};

/// A factorized layer field `h(z) = N(z) f(z)` with optional analytic tensors.
///
/// Implementations must be free of shared mutable state; providers evaluate
/// them from several threads.
pub trait Factorization: Send + Sync {
    /// Phase-space dimension `n`.
    fn dim(&self) -> usize;
    /// Fast codimension `m = n − k`.
    fn codim(&self) -> usize;
    fn f(&self, z: &[f64]) -> Vec<f64>;
    /// The `n × m` matrix `N(z)`.
    fn n_matrix(&self, z: &[f64]) -> DenseMatrix;

    fn df(&self, _z: &[f64]) -> Option<DenseMatrix> {
        None
    }
    fn d2f(&self, _z: &[f64]) -> Option<MultilinearMap> {
        None
    }
    fn d3f(&self, _z: &[f64]) -> Option<MultilinearMap> {
        None
    }
    fn dn(&self, _z: &[f64]) -> Option<MultilinearMap> {
        None
    }
    fn d2n(&self, _z: &[f64]) -> Option<MultilinearMap> {
        None
    }
}

/// Finite-difference settings.
///
/// A nested central difference of depth `d` uses the displacement
/// `base_step · depth_scale[d] · max(1, |z_i|·characteristic_scale_i)` at
/// every level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    pub base_step: f64,
    pub depth_scale: Vec<f64>,
    pub characteristic_scale: Vec<f64>,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            base_step: f64::EPSILON.cbrt(),
            // ≈ ε^{1/(d+2)} / ε^{1/3} for d = 0..=7
            depth_scale: vec![1.0, 1.0, 20.0, 120.0, 400.0, 950.0, 1800.0, 3000.0],
            characteristic_scale: Vec::new(),
        }
    }
}

impl FdConfig {
    fn depth_factor(&self, depth: usize) -> f64 {
        let last = *self.depth_scale.last().unwrap_or(&1.0);
        self.base_step * self.depth_scale.get(depth).copied().unwrap_or(last)
    }

    fn coord_step(&self, z: &[f64], i: usize, depth: usize) -> f64 {
        let s = self.characteristic_scale.get(i).copied().unwrap_or(1.0);
        self.depth_factor(depth) * (z[i].abs() * s).max(1.0)
    }

    fn direction_step(&self, z: &[f64], depth: usize) -> f64 {
        self.depth_factor(depth) * norm_inf(z).max(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.base_step.is_finite()
            && self.base_step > 0.0
            && self
                .depth_scale
                .iter()
                .chain(&self.characteristic_scale)
                .all(|s| s.is_finite() && *s > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Numerical(
                "finite-difference steps must be positive and finite".into(),
            ))
        }
    }
}

/// Chain values `g_j(z₀)` for `j = 0..=j_max` with `r`, `l` frozen at `z₀`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainValues {
    pub basepoint: Vec<f64>,
    pub r: Vec<f64>,
    pub l: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// `l · g_j`
    pub projected: Vec<f64>,
    /// Richardson-style error estimate of each value; zero where a closed form was used.
    pub fd_error: Vec<f64>,
    /// Highest order evaluated from closed forms.
    pub closed_form_max: usize,
}

impl ChainValues {
    pub fn full_norms(&self) -> Vec<f64> {
        self.values.iter().map(|g| norm2(g)).collect()
    }
}

/// `DN(v, r)_i = Σ ∂N_{ib}/∂z_j v_j r_b`
pub fn dn_apply(dn: &MultilinearMap, v: &[f64], r: &[f64]) -> Result<Vec<f64>> {
    dn.apply(&[r, v])
}

/// `D²N(u, v, r)_i = Σ ∂²N_{ib}/∂z_j∂z_k u_j v_k r_b`
pub fn d2n_apply(d2n: &MultilinearMap, u: &[f64], v: &[f64], r: &[f64]) -> Result<Vec<f64>> {
    d2n.apply(&[r, u, v])
}

/// Per-tensor outcome of [`DerivativeProvider::validate`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorCheck {
    pub tensor: String,
    pub order: usize,
    pub analytic: bool,
    pub max_relative_discrepancy: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub checks: Vec<TensorCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

type VecFn<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a;

/// Evaluates derivative tensors and chains for one factorization.
#[derive(Clone)]
pub struct DerivativeProvider<'a> {
    model: &'a dyn Factorization,
    fd: FdConfig,
    use_analytic: bool,
}

impl<'a> DerivativeProvider<'a> {
    pub fn new(model: &'a dyn Factorization) -> Self {
        Self {
            model,
            fd: FdConfig::default(),
            use_analytic: true,
        }
    }

    pub fn with_fd_config(mut self, fd: FdConfig) -> Self {
        self.fd = fd;
        self
    }

    /// Ignore analytic callbacks; every tensor and chain comes from finite differences.
    pub fn fd_only(mut self) -> Self {
        self.use_analytic = false;
        self
    }

    pub fn model(&self) -> &'a dyn Factorization {
        self.model
    }

    pub fn fd_config(&self) -> &FdConfig {
        &self.fd
    }

    pub fn n(&self) -> usize {
        self.model.dim()
    }

    pub fn m(&self) -> usize {
        self.model.codim()
    }

    fn check_point(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.n() {
            return Err(Error::dim(format!(
                "point has {} coordinates, model expects {}",
                z.len(),
                self.n()
            )));
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::Evaluation {
                what: "point".into(),
                point: z.to_vec(),
            });
        }
        Ok(())
    }

    fn finite<T>(&self, what: &str, z: &[f64], value: T, ok: bool) -> Result<T> {
        if ok {
            Ok(value)
        } else {
            Err(Error::Evaluation {
                what: what.into(),
                point: z.to_vec(),
            })
        }
    }

    pub fn f(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_point(z)?;
        let v = self.model.f(z);
        let ok = v.len() == self.m() && v.iter().all(|x| x.is_finite());
        self.finite("f", z, v, ok)
    }

    pub fn n_matrix(&self, z: &[f64]) -> Result<DenseMatrix> {
        self.check_point(z)?;
        let nm = self.model.n_matrix(z);
        let ok = nm.rows() == self.n() && nm.cols() == self.m() && nm.is_finite();
        self.finite("N", z, nm, ok)
    }

    /// `N(z) r`
    pub fn fiber_direction(&self, z: &[f64], r: &[f64]) -> Result<Vec<f64>> {
        self.n_matrix(z)?.matvec(r)
    }

    /// Central differences of a flattened vector function; entry `(p, j)`
    /// of the result (row-major) is `∂v_p/∂z_j`.
    fn fd_gradient(&self, fun: &VecFn<'_>, z: &[f64], depth: usize) -> Result<Vec<f64>> {
        let n = z.len();
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let h = self.fd.coord_step(z, j, depth);
            let mut zp = z.to_vec();
            let mut zm = z.to_vec();
            zp[j] += h;
            zm[j] -= h;
            let vp = fun(&zp)?;
            let vm = fun(&zm)?;
            let col: Vec<f64> = vp
                .iter()
                .zip(&vm)
                .map(|(a, b)| (a - b) / (zp[j] - zm[j]))
                .collect();
            cols.push(col);
        }
        let len = cols.first().map_or(0, Vec::len);
        let mut out = vec![0.0; len * n];
        for (j, col) in cols.iter().enumerate() {
            for (p, v) in col.iter().enumerate() {
                out[p * n + j] = *v;
            }
        }
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::Evaluation {
                what: "finite difference".into(),
                point: z.to_vec(),
            });
        }
        Ok(out)
    }

    fn f_flat(&self) -> impl Fn(&[f64]) -> Result<Vec<f64>> + '_ {
        move |y: &[f64]| self.f(y)
    }

    fn n_flat(&self) -> impl Fn(&[f64]) -> Result<Vec<f64>> + '_ {
        move |y: &[f64]| Ok(self.n_matrix(y)?.as_slice().to_vec())
    }

    /// Nested FD of `base` `levels` times, all levels sharing the depth-`levels` step.
    fn fd_nested(
        &self,
        base: &VecFn<'_>,
        z: &[f64],
        levels: usize,
        depth: usize,
    ) -> Result<Vec<f64>> {
        if levels == 0 {
            return base(z);
        }
        let inner = |y: &[f64]| self.fd_nested(base, y, levels - 1, depth);
        self.fd_gradient(&inner, z, depth)
    }

    fn analytic<T>(&self, v: Option<T>) -> Option<T> {
        if self.use_analytic {
            v
        } else {
            None
        }
    }

    /// True when every analytic tensor is supplied at `z` and analytic use is enabled.
    pub fn has_analytic(&self, z: &[f64]) -> bool {
        self.use_analytic
            && self.model.df(z).is_some()
            && self.model.d2f(z).is_some()
            && self.model.d3f(z).is_some()
            && self.model.dn(z).is_some()
            && self.model.d2n(z).is_some()
    }

    pub fn jacobian_f(&self, z: &[f64]) -> Result<DenseMatrix> {
        self.check_point(z)?;
        if let Some(j) = self.analytic(self.model.df(z)) {
            let ok = j.is_finite() && j.rows() == self.m() && j.cols() == self.n();
            return self.finite("Df", z, j, ok);
        }
        let data = self.fd_nested(&self.f_flat(), z, 1, 1)?;
        DenseMatrix::from_row_slice(self.m(), self.n(), &data)
    }

    pub fn hessian_f(&self, z: &[f64]) -> Result<MultilinearMap> {
        self.check_point(z)?;
        let (n, m) = (self.n(), self.m());
        if let Some(h) = self.analytic(self.model.d2f(z)) {
            let ok = h.is_finite();
            return self.finite("D2f", z, h, ok);
        }
        let data = if self.analytic(self.model.df(z)).is_some() {
            let base =
                |y: &[f64]| -> Result<Vec<f64>> { Ok(self.jacobian_f(y)?.as_slice().to_vec()) };
            self.fd_nested(&base, z, 1, 1)?
        } else {
            self.fd_nested(&self.f_flat(), z, 2, 2)?
        };
        let mut h = MultilinearMap::from_data(m, &[n, n], data)?;
        h.symmetrize_pair(0, 1);
        Ok(h)
    }

    pub fn third_f(&self, z: &[f64]) -> Result<MultilinearMap> {
        self.check_point(z)?;
        let (n, m) = (self.n(), self.m());
        if let Some(t) = self.analytic(self.model.d3f(z)) {
            let ok = t.is_finite();
            return self.finite("D3f", z, t, ok);
        }
        let data = if self.analytic(self.model.d2f(z)).is_some() {
            let base =
                |y: &[f64]| -> Result<Vec<f64>> { Ok(self.hessian_f(y)?.as_slice().to_vec()) };
            self.fd_nested(&base, z, 1, 1)?
        } else if self.analytic(self.model.df(z)).is_some() {
            let base =
                |y: &[f64]| -> Result<Vec<f64>> { Ok(self.jacobian_f(y)?.as_slice().to_vec()) };
            self.fd_nested(&base, z, 2, 2)?
        } else {
            self.fd_nested(&self.f_flat(), z, 3, 3)?
        };
        MultilinearMap::from_data(m, &[n, n, n], data)
    }

    pub fn dn(&self, z: &[f64]) -> Result<MultilinearMap> {
        self.check_point(z)?;
        let (n, m) = (self.n(), self.m());
        if let Some(t) = self.analytic(self.model.dn(z)) {
            let ok = t.is_finite();
            return self.finite("DN", z, t, ok);
        }
        // N flattened row-major as (i, b), so the gradient layout is (i, b, j).
        let data = self.fd_nested(&self.n_flat(), z, 1, 1)?;
        MultilinearMap::from_data(n, &[m, n], data)
    }

    pub fn d2n(&self, z: &[f64]) -> Result<MultilinearMap> {
        self.check_point(z)?;
        let (n, m) = (self.n(), self.m());
        if let Some(t) = self.analytic(self.model.d2n(z)) {
            let ok = t.is_finite();
            return self.finite("D2N", z, t, ok);
        }
        let data = if self.analytic(self.model.dn(z)).is_some() {
            let base = |y: &[f64]| -> Result<Vec<f64>> { Ok(self.dn(y)?.as_slice().to_vec()) };
            self.fd_nested(&base, z, 1, 1)?
        } else {
            self.fd_nested(&self.n_flat(), z, 2, 2)?
        };
        let mut t = MultilinearMap::from_data(n, &[m, n, n], data)?;
        t.symmetrize_pair(1, 2);
        Ok(t)
    }

    /// The `m × m` matrix `Df(z) N(z)`.
    pub fn dfn(&self, z: &[f64]) -> Result<DenseMatrix> {
        self.jacobian_f(z)?.matmul(&self.n_matrix(z)?)
    }

    /// Gradient of `z ↦ det(Df N)(z)`.
    ///
    /// Uses `∂ det M = tr(adj(M) ∂M)` with analytic tensors, central
    /// differences of the determinant otherwise.
    pub fn det_dfn_gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (n, m) = (self.n(), self.m());
        if self.use_analytic && self.model.d2f(z).is_some() && self.model.dn(z).is_some() {
            let df = self.jacobian_f(z)?;
            let nm = self.n_matrix(z)?;
            let adj = adjugate(&df.matmul(&nm)?)?;
            let d2f = self.hessian_f(z)?;
            let dn = self.dn(z)?;
            let mut grad = vec![0.0; n];
            for (j, g) in grad.iter_mut().enumerate() {
                // ∂(Df N)/∂z_j = D²f(·, e_j) N + Df ∂N/∂z_j
                let mut dm = DenseMatrix::zeros(m, m);
                for a in 0..m {
                    for b in 0..m {
                        let mut s = 0.0;
                        for p in 0..n {
                            s += d2f.get(&[a, p, j]) * nm[(p, b)] + df[(a, p)] * dn.get(&[p, b, j]);
                        }
                        dm[(a, b)] = s;
                    }
                }
                *g = (0..m)
                    .map(|b| (0..m).map(|a| adj[(b, a)] * dm[(a, b)]).sum::<f64>())
                    .sum();
            }
            return Ok(grad);
        }
        let base = |y: &[f64]| -> Result<Vec<f64>> { Ok(vec![determinant(&self.dfn(y)?)?]) };
        self.fd_nested(&base, z, 1, 2)
    }

    /// Highest chain order evaluated by closed forms.
    fn closed_form_max(&self, z: &[f64]) -> usize {
        if self.has_analytic(z) {
            3
        } else {
            0
        }
    }

    /// `g_j(z)` from the expanded closed forms (requires `j ≤ 3`).
    fn chain_closed(&self, z: &[f64], r: &[f64], j: usize) -> Result<Vec<f64>> {
        if j == 0 {
            return self.f(z);
        }
        let w = self.fiber_direction(z, r)?;
        let df = self.jacobian_f(z)?;
        match j {
            1 => df.matvec(&w),
            2 => {
                let d2f = self.hessian_f(z)?;
                let dn = self.dn(z)?;
                let a = d2f.apply(&[&w, &w])?;
                let b = df.matvec(&dn_apply(&dn, &w, r)?)?;
                Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect())
            }
            3 => {
                let d2f = self.hessian_f(z)?;
                let d3f = self.third_f(z)?;
                let dn = self.dn(z)?;
                let d2n = self.d2n(z)?;
                let dnw = dn_apply(&dn, &w, r)?;
                let t1 = d3f.apply(&[&w, &w, &w])?;
                let t2 = d2f.apply(&[&dnw, &w])?;
                let inner: Vec<f64> = d2n_apply(&d2n, &w, &w, r)?
                    .iter()
                    .zip(dn_apply(&dn, &dnw, r)?)
                    .map(|(a, b)| a + b)
                    .collect();
                let t3 = df.matvec(&inner)?;
                Ok((0..self.m()).map(|a| t1[a] + 3.0 * t2[a] + t3[a]).collect())
            }
            _ => Err(Error::Unsupported(format!("closed-form chain order {j}"))),
        }
    }

    /// `g_j(z)`: closed form up to `closed_max`, nested directional central
    /// differences above it with displacement `delta` at every level.
    fn chain_nested(
        &self,
        z: &[f64],
        r: &[f64],
        j: usize,
        closed_max: usize,
        delta: f64,
    ) -> Result<Vec<f64>> {
        if j <= closed_max {
            return self.chain_closed(z, r, j);
        }
        let w = self.fiber_direction(z, r)?;
        let wn = norm_inf(&w);
        if wn == 0.0 {
            return Ok(vec![0.0; self.m()]);
        }
        let t = delta / wn;
        let zp: Vec<f64> = z.iter().zip(&w).map(|(a, b)| a + t * b).collect();
        let zm: Vec<f64> = z.iter().zip(&w).map(|(a, b)| a - t * b).collect();
        let gp = self.chain_nested(&zp, r, j - 1, closed_max, delta)?;
        let gm = self.chain_nested(&zm, r, j - 1, closed_max, delta)?;
        let out: Vec<f64> = gp
            .iter()
            .zip(&gm)
            .map(|(a, b)| (a - b) / (2.0 * t))
            .collect();
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::Evaluation {
                what: format!("chain order {j}"),
                point: z.to_vec(),
            });
        }
        Ok(out)
    }

    /// `g_j(z)` with the step chosen for the FD depth needed at the basepoint.
    pub fn chain_at(&self, z: &[f64], r: &[f64], j: usize) -> Result<Vec<f64>> {
        self.check_point(z)?;
        let closed = self.closed_form_max(z);
        let depth = j.saturating_sub(closed);
        let delta = self.fd.direction_step(z, depth);
        self.chain_nested(z, r, j, closed, delta)
    }

    /// Evaluates `g_0 … g_{j_max}` at `z₀` with `r` and `l` frozen.
    pub fn chain_values(
        &self,
        z0: &[f64],
        r: &[f64],
        l: &[f64],
        j_max: usize,
    ) -> Result<ChainValues> {
        self.check_point(z0)?;
        let m = self.m();
        if r.len() != m || l.len() != m {
            return Err(Error::dim("nullvectors must have length m"));
        }
        if norm_inf(r) == 0.0 || norm_inf(l) == 0.0 {
            return Err(Error::Numerical("chain nullvectors must be nonzero".into()));
        }
        if j_max > 6 {
            return Err(Error::Unsupported(format!("chain order {j_max} exceeds 6")));
        }
        let closed = self.closed_form_max(z0);
        let mut values = Vec::with_capacity(j_max + 1);
        let mut fd_error = Vec::with_capacity(j_max + 1);
        for j in 0..=j_max {
            if j <= closed {
                values.push(self.chain_closed(z0, r, j)?);
                fd_error.push(0.0);
                continue;
            }
            let depth = j - closed;
            let delta = self.fd.direction_step(z0, depth);
            let g = self.chain_nested(z0, r, j, closed, delta)?;
            let g2 = self.chain_nested(z0, r, j, closed, 2.0 * delta)?;
            let err = g
                .iter()
                .zip(&g2)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            values.push(g);
            fd_error.push(err);
        }
        let projected = values.iter().map(|g| dot(l, g)).collect();
        Ok(ChainValues {
            basepoint: z0.to_vec(),
            r: r.to_vec(),
            l: l.to_vec(),
            values,
            projected,
            fd_error,
            closed_form_max: closed.min(j_max),
        })
    }

    /// Magnitude scale of `g_j(z₀)` for zero tests: the closed form evaluated
    /// with absolute values of every factor (j ≤ 3), `|Df|·|Nr|^j` beyond.
    pub fn chain_magnitudes(
        &self,
        z0: &[f64],
        r: &[f64],
        l: &[f64],
        j_max: usize,
    ) -> Result<Vec<f64>> {
        let w = self.fiber_direction(z0, r)?;
        let wa: Vec<f64> = w.iter().map(|x| x.abs()).collect();
        let ra: Vec<f64> = r.iter().map(|x| x.abs()).collect();
        let la: Vec<f64> = l.iter().map(|x| x.abs()).collect();
        let df = self.jacobian_f(z0)?.abs();
        let mut out = Vec::with_capacity(j_max + 1);
        let f_scale = dot(
            &la,
            &self.f(z0)?.iter().map(|x| x.abs()).collect::<Vec<_>>(),
        );
        out.push(f_scale.max(df.norm_max() * norm_inf(z0).max(1.0) * f64::EPSILON));
        let base1 = dot(&la, &df.matvec(&wa)?);
        for j in 1..=j_max {
            let v = match j {
                1 => base1,
                2 => {
                    let d2f = self.hessian_f(z0)?.abs();
                    let dn = self.dn(z0)?.abs();
                    let a = d2f.apply(&[&wa, &wa])?;
                    let b = df.matvec(&dn_apply(&dn, &wa, &ra)?)?;
                    dot(&la, &a) + dot(&la, &b)
                }
                3 => {
                    let d2f = self.hessian_f(z0)?.abs();
                    let d3f = self.third_f(z0)?.abs();
                    let dn = self.dn(z0)?.abs();
                    let d2n = self.d2n(z0)?.abs();
                    let dnw = dn_apply(&dn, &wa, &ra)?;
                    let t1 = d3f.apply(&[&wa, &wa, &wa])?;
                    let t2 = d2f.apply(&[&dnw, &wa])?;
                    let inner: Vec<f64> = d2n_apply(&d2n, &wa, &wa, &ra)?
                        .iter()
                        .zip(dn_apply(&dn, &dnw, &ra)?)
                        .map(|(a, b)| a + b)
                        .collect();
                    let t3 = df.matvec(&inner)?;
                    dot(&la, &t1) + 3.0 * dot(&la, &t2) + dot(&la, &t3)
                }
                _ => dot(&la, &df.matvec(&wa)?) * norm_inf(&w).powi(j as i32 - 1),
            };
            out.push(v);
        }
        Ok(out)
    }

    /// The `c × n` matrix whose row `j` is the gradient of `z ↦ l·g_j(z)`.
    pub fn chain_gradients(
        &self,
        z0: &[f64],
        r: &[f64],
        l: &[f64],
        c: usize,
    ) -> Result<DenseMatrix> {
        self.check_point(z0)?;
        let m = self.m();
        if c == 0 {
            return Err(Error::Numerical(
                "chain gradient matrix needs at least one row".into(),
            ));
        }
        if r.len() != m || l.len() != m {
            return Err(Error::dim("nullvectors must have length m"));
        }
        let df = self.jacobian_f(z0)?;
        let mut rows = Vec::with_capacity(c);
        rows.push(df.vecmat(l)?);
        if c >= 2 {
            // l (D²f(Nr, I) + Df DN(I, r))
            let w = self.fiber_direction(z0, r)?;
            let a = self
                .hessian_f(z0)?
                .contract(&[Slot::Vector(&w), Slot::Identity])?
                .into_matrix()?;
            let dn_r = self
                .dn(z0)?
                .contract(&[Slot::Vector(r), Slot::Identity])?
                .into_matrix()?;
            let b = df.matmul(&dn_r)?;
            rows.push(a.add(&b)?.vecmat(l)?);
        }
        let closed = self.closed_form_max(z0);
        for j in 2..c {
            let depth = j.saturating_sub(closed) + 1;
            let delta = self.fd.direction_step(z0, depth);
            let scalar = |y: &[f64]| -> Result<Vec<f64>> {
                let g = self.chain_nested(y, r, j, closed, delta)?;
                Ok(vec![dot(l, &g)])
            };
            rows.push(self.fd_gradient(&scalar, z0, depth)?);
        }
        DenseMatrix::from_rows(&rows)
    }

    /// Compares every analytic tensor against one central-difference level
    /// of the tensor below it at each sample point.
    pub fn validate(&self, samples: &[Vec<f64>]) -> Result<ValidationReport> {
        let model = self.model;
        let mut checks = Vec::new();
        let fd = |base: &VecFn<'_>, z: &[f64]| self.fd_nested(base, z, 1, 1);

        type Getter<'g> = Box<dyn Fn(&[f64]) -> Option<Vec<f64>> + 'g>;
        let entries: Vec<(&str, usize, f64, Getter<'_>, Getter<'_>)> = vec![
            (
                "Df",
                1,
                1e-5,
                Box::new(|z| model.df(z).map(|m| m.as_slice().to_vec())),
                Box::new(|z| Some(model.f(z))),
            ),
            (
                "D2f",
                2,
                1e-5,
                Box::new(|z| model.d2f(z).map(|t| t.as_slice().to_vec())),
                Box::new(|z| model.df(z).map(|m| m.as_slice().to_vec())),
            ),
            (
                "D3f",
                3,
                1e-3,
                Box::new(|z| model.d3f(z).map(|t| t.as_slice().to_vec())),
                Box::new(|z| model.d2f(z).map(|t| t.as_slice().to_vec())),
            ),
            (
                "DN",
                1,
                1e-5,
                Box::new(|z| model.dn(z).map(|t| t.as_slice().to_vec())),
                Box::new(|z| Some(model.n_matrix(z).as_slice().to_vec())),
            ),
            (
                "D2N",
                2,
                1e-5,
                Box::new(|z| model.d2n(z).map(|t| t.as_slice().to_vec())),
                Box::new(|z| model.dn(z).map(|t| t.as_slice().to_vec())),
            ),
        ];

        for (name, order, tolerance, analytic, below) in &entries {
            let mut worst: f64 = 0.0;
            let mut present = true;
            for z in samples {
                self.check_point(z)?;
                let (Some(a), Some(_)) = (analytic(z), below(z)) else {
                    present = false;
                    break;
                };
                let base = |y: &[f64]| -> Result<Vec<f64>> {
                    below(y).ok_or_else(|| Error::Numerical("tensor vanished".into()))
                };
                let num = fd(&base, z)?;
                if num.len() != a.len() {
                    return Err(Error::dim(format!(
                        "{name}: analytic tensor has wrong size"
                    )));
                }
                let denom = a.iter().fold(1.0f64, |s, x| s.max(x.abs()));
                let diff = a
                    .iter()
                    .zip(&num)
                    .fold(0.0f64, |s, (x, y)| s.max((x - y).abs()));
                worst = worst.max(diff / denom);
            }
            checks.push(TensorCheck {
                tensor: (*name).to_string(),
                order: *order,
                analytic: present,
                max_relative_discrepancy: if present { worst } else { 0.0 },
                tolerance: *tolerance,
                passed: !present || worst <= *tolerance,
            });
        }
        Ok(ValidationReport {
            samples: samples.len(),
            checks,
        })
    }
}
