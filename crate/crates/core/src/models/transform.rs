//! Model wrappers that change coordinates or rescale the factorization
//! without changing the layer field.

use std::sync::Arc;

use super::SlowFastSystem;
use crate::derivatives::Factorization;
use crate::error::{Error, Result};
use crate::tensorkit::{inverse, DenseMatrix, MultilinearMap};

/// The pull-back under `z = A ζ + b`:
/// `f̃(ζ) = f(Aζ + b)`, `Ñ(ζ) = A⁻¹ N(Aζ + b)`, `G̃(ζ) = A⁻¹ G(Aζ + b)`.
pub struct AffineConjugate {
    inner: Arc<dyn SlowFastSystem>,
    a: DenseMatrix,
    a_inv: DenseMatrix,
    b: Vec<f64>,
}

impl AffineConjugate {
    pub fn new(inner: Arc<dyn SlowFastSystem>, a: DenseMatrix, b: Vec<f64>) -> Result<Self> {
        let n = inner.dim();
        if a.rows() != n || a.cols() != n || b.len() != n {
            return Err(Error::dim(
                "affine map must be n x n with an n-vector offset",
            ));
        }
        let a_inv = inverse(&a)?;
        Ok(Self { inner, a, a_inv, b })
    }

    /// `A ζ + b`
    pub fn forward(&self, zeta: &[f64]) -> Vec<f64> {
        let mut z = self
            .a
            .matvec(zeta)
            .expect("dimension checked at construction");
        for (zi, bi) in z.iter_mut().zip(&self.b) {
            *zi += bi;
        }
        z
    }

    /// `A⁻¹ (z − b)`
    pub fn backward(&self, z: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = z.iter().zip(&self.b).map(|(a, b)| a - b).collect();
        self.a_inv
            .matvec(&d)
            .expect("dimension checked at construction")
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.a
    }

    fn pull_all(&self, t: MultilinearMap, first_slot: usize) -> Option<MultilinearMap> {
        let mut t = t;
        for s in first_slot..t.arity() {
            t = t.pull_back_input(s, &self.a).ok()?;
        }
        Some(t)
    }
}

impl Factorization for AffineConjugate {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn codim(&self) -> usize {
        self.inner.codim()
    }
    fn f(&self, zeta: &[f64]) -> Vec<f64> {
        self.inner.f(&self.forward(zeta))
    }
    fn n_matrix(&self, zeta: &[f64]) -> DenseMatrix {
        let nm = self.inner.n_matrix(&self.forward(zeta));
        self.a_inv
            .matmul(&nm)
            .unwrap_or_else(|_| DenseMatrix::from_fn(self.dim(), self.codim(), |_, _| f64::NAN))
    }
    fn df(&self, zeta: &[f64]) -> Option<DenseMatrix> {
        self.inner.df(&self.forward(zeta))?.matmul(&self.a).ok()
    }
    fn d2f(&self, zeta: &[f64]) -> Option<MultilinearMap> {
        self.pull_all(self.inner.d2f(&self.forward(zeta))?, 0)
    }
    fn d3f(&self, zeta: &[f64]) -> Option<MultilinearMap> {
        self.pull_all(self.inner.d3f(&self.forward(zeta))?, 0)
    }
    fn dn(&self, zeta: &[f64]) -> Option<MultilinearMap> {
        let t = self
            .inner
            .dn(&self.forward(zeta))?
            .push_output(&self.a_inv)
            .ok()?;
        self.pull_all(t, 1)
    }
    fn d2n(&self, zeta: &[f64]) -> Option<MultilinearMap> {
        let t = self
            .inner
            .d2n(&self.forward(zeta))?
            .push_output(&self.a_inv)
            .ok()?;
        self.pull_all(t, 1)
    }
}

impl SlowFastSystem for AffineConjugate {
    fn perturbation(&self, zeta: &[f64], eps: f64) -> Vec<f64> {
        let g = self.inner.perturbation(&self.forward(zeta), eps);
        self.a_inv
            .matvec(&g)
            .unwrap_or_else(|_| vec![f64::NAN; self.dim()])
    }
    fn full_field(&self, zeta: &[f64], eps: f64) -> Vec<f64> {
        let h = self.inner.full_field(&self.forward(zeta), eps);
        self.a_inv
            .matvec(&h)
            .unwrap_or_else(|_| vec![f64::NAN; self.dim()])
    }
}

/// `f̃ = s f`, `Ñ = N / s`: the same layer field with a rescaled factorization.
pub struct Rescaled {
    inner: Arc<dyn SlowFastSystem>,
    s: f64,
}

impl Rescaled {
    pub fn new(inner: Arc<dyn SlowFastSystem>, s: f64) -> Result<Self> {
        if !(s.is_finite() && s != 0.0) {
            return Err(Error::Numerical(format!(
                "scale factor {s} must be finite and nonzero"
            )));
        }
        Ok(Self { inner, s })
    }
}

impl Factorization for Rescaled {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn codim(&self) -> usize {
        self.inner.codim()
    }
    fn f(&self, z: &[f64]) -> Vec<f64> {
        self.inner.f(z).iter().map(|v| v * self.s).collect()
    }
    fn n_matrix(&self, z: &[f64]) -> DenseMatrix {
        self.inner.n_matrix(z).scaled(1.0 / self.s)
    }
    fn df(&self, z: &[f64]) -> Option<DenseMatrix> {
        Some(self.inner.df(z)?.scaled(self.s))
    }
    fn d2f(&self, z: &[f64]) -> Option<MultilinearMap> {
        Some(self.inner.d2f(z)?.scaled(self.s))
    }
    fn d3f(&self, z: &[f64]) -> Option<MultilinearMap> {
        Some(self.inner.d3f(z)?.scaled(self.s))
    }
    fn dn(&self, z: &[f64]) -> Option<MultilinearMap> {
        Some(self.inner.dn(z)?.scaled(1.0 / self.s))
    }
    fn d2n(&self, z: &[f64]) -> Option<MultilinearMap> {
        Some(self.inner.d2n(z)?.scaled(1.0 / self.s))
    }
}

impl SlowFastSystem for Rescaled {
    fn perturbation(&self, z: &[f64], eps: f64) -> Vec<f64> {
        self.inner.perturbation(z, eps)
    }
    fn full_field(&self, z: &[f64], eps: f64) -> Vec<f64> {
        self.inner.full_field(z, eps)
    }
}

impl super::FactorizedModel {
    /// The model in coordinates `ζ` with `z = A ζ + b`. Known points are
    /// mapped to the new coordinates; expected C₀ rows and curves are dropped
    /// since they are coordinate dependent.
    pub fn affine_conjugate(&self, a: DenseMatrix, b: Vec<f64>) -> Result<Self> {
        let conj = Arc::new(AffineConjugate::new(self.system().clone(), a, b)?);
        let n = self.n();
        let mut lower = vec![f64::INFINITY; n];
        let mut upper = vec![f64::NEG_INFINITY; n];
        for corner in 0..(1usize << n) {
            let u: Vec<f64> = (0..n).map(|i| ((corner >> i) & 1) as f64).collect();
            let z = conj.backward(&self.domain.lerp(&u));
            for i in 0..n {
                lower[i] = lower[i].min(z[i]);
                upper[i] = upper[i].max(z[i]);
            }
        }
        let mut out = self.map_system(
            format!("{} (affine)", self.name),
            conj.clone(),
            super::Domain::new(lower, upper),
        )?;
        let mut known = super::KnownAnswers::default();
        for p in &self.known.points {
            let mut q = p.clone();
            q.point = conj.backward(&p.point);
            if let super::Expectation::Contact { c0, .. } = &mut q.expect {
                *c0 = None;
            }
            known.points.push(q);
        }
        out.known = known;
        Ok(out)
    }

    /// The model with `f` multiplied by `s` and `N` divided by `s`.
    pub fn rescaled(&self, s: f64) -> Result<Self> {
        let sys = Arc::new(Rescaled::new(self.system().clone(), s)?);
        let mut out =
            self.map_system(format!("{} (scaled)", self.name), sys, self.domain.clone())?;
        out.fiber_domain = self.fiber_domain.clone();
        out.known = self.known.clone();
        for p in &mut out.known.points {
            if let super::Expectation::Contact {
                fold_coefficient,
                third_order_coefficient,
                c0,
                ..
            } = &mut p.expect
            {
                *fold_coefficient = None;
                *third_order_coefficient = None;
                *c0 = None;
            }
        }
        out.known.curves.clear();
        Ok(out)
    }
}
