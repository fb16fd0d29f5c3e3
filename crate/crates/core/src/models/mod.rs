//! Factorized slow-fast models `z' = N(z) f(z) + ε G(z, ε)`.

mod custom;
mod expr;
pub mod known;
mod transform;
mod zoo;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::derivatives::{DerivativeProvider, Factorization};
use crate::error::{Error, Result};
use crate::tensorkit::{DenseMatrix, MultilinearMap};

pub use custom::{load_model_file, parse_model_definition, ModelDefinition};
pub use expr::Expr;
pub use known::{verify_known_answers, KnownCheck};
pub use transform::{AffineConjugate, Rescaled};
pub use zoo::{MitoticFace, MODEL_NAMES};

/// A factorization together with its perturbation term.
pub trait SlowFastSystem: Factorization {
    /// `G(z, ε)`
    fn perturbation(&self, z: &[f64], eps: f64) -> Vec<f64>;

    /// `N(z) f(z) + ε G(z, ε)`
    fn full_field(&self, z: &[f64], eps: f64) -> Vec<f64> {
        let mut h = layer_field(self, z);
        if eps != 0.0 {
            for (hi, gi) in h.iter_mut().zip(self.perturbation(z, eps)) {
                *hi += eps * gi;
            }
        }
        h
    }
}

/// `N(z) f(z)`; dimension errors are impossible for a consistent model so
/// inconsistencies surface as NaN.
pub fn layer_field<F: Factorization + ?Sized>(model: &F, z: &[f64]) -> Vec<f64> {
    let f = model.f(z);
    model
        .n_matrix(z)
        .matvec(&f)
        .unwrap_or_else(|_| vec![f64::NAN; model.dim()])
}

/// Axis-aligned box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper }
    }

    pub fn cube(n: usize, lo: f64, hi: f64) -> Self {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    /// Largest side length.
    pub fn scale(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .fold(0.0, f64::max)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    /// Maps `u ∈ [0,1]^n` into the box.
    pub fn lerp(&self, u: &[f64]) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(u)
            .map(|((lo, hi), t)| lo + t * (hi - lo))
            .collect()
    }
}

/// One side of an admissible range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub value: f64,
    pub inclusive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
    pub min: Option<Bound>,
    pub max: Option<Bound>,
    pub integer: bool,
}

impl Parameter {
    pub fn new(name: &str, value: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            min: None,
            max: None,
            integer: false,
        }
    }

    pub fn above(mut self, v: f64) -> Self {
        self.min = Some(Bound {
            value: v,
            inclusive: false,
        });
        self
    }

    pub fn at_least(mut self, v: f64) -> Self {
        self.min = Some(Bound {
            value: v,
            inclusive: true,
        });
        self
    }

    pub fn at_most(mut self, v: f64) -> Self {
        self.max = Some(Bound {
            value: v,
            inclusive: true,
        });
        self
    }

    pub fn integer(mut self) -> Self {
        self.integer = true;
        self
    }

    pub fn constraint(&self) -> String {
        let mut parts = Vec::new();
        if let Some(b) = self.min {
            parts.push(format!(
                "{} {} {}",
                self.name,
                if b.inclusive { ">=" } else { ">" },
                b.value
            ));
        }
        if let Some(b) = self.max {
            parts.push(format!(
                "{} {} {}",
                self.name,
                if b.inclusive { "<=" } else { "<" },
                b.value
            ));
        }
        if self.integer {
            parts.push(format!("{} integer", self.name));
        }
        if parts.is_empty() {
            format!("{} finite", self.name)
        } else {
            parts.join(", ")
        }
    }

    pub fn admits(&self, v: f64) -> bool {
        if !v.is_finite() {
            return false;
        }
        if self.integer && v.fract() != 0.0 {
            return false;
        }
        let lo = self.min.is_none_or(|b| {
            if b.inclusive {
                v >= b.value
            } else {
                v > b.value
            }
        });
        let hi = self.max.is_none_or(|b| {
            if b.inclusive {
                v <= b.value
            } else {
                v < b.value
            }
        });
        lo && hi
    }

    pub fn check(&self, v: f64) -> Result<()> {
        if self.admits(v) {
            Ok(())
        } else {
            Err(Error::Parameter {
                name: self.name.clone(),
                value: v,
                constraint: self.constraint(),
            })
        }
    }
}

/// Where a known answer comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Stated in closed form in the published analysis of the model.
    Published,
    /// Obtained by substituting parameter values into published formulas or by direct calculation.
    Derived,
    /// Follows immediately from the definitions.
    Trivial,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Provenance::Published => "published",
            Provenance::Derived => "derived",
            Provenance::Trivial => "trivial",
        };
        f.write_str(s)
    }
}

/// The expected classification at a known point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Expectation {
    Contact {
        order: usize,
        slow_generic: Option<bool>,
        fold_coefficient: Option<f64>,
        third_order_coefficient: Option<f64>,
        /// Expected C₀ rows, up to a sign per row.
        c0: Option<Vec<Vec<f64>>>,
    },
    NormallyHyperbolic {
        eigenvalues: Vec<f64>,
    },
    /// Zero of `N` (equilibrium of the desingularized layer flow).
    DesingularizedEquilibrium {
        saddle_focus: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnownPoint {
    pub label: String,
    pub point: Vec<f64>,
    pub expect: Expectation,
    pub provenance: Provenance,
}

pub type CurveFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A parametrized piece of the contact set with its fold coefficient.
#[derive(Clone)]
pub struct KnownCurve {
    pub label: String,
    pub description: String,
    pub range: (f64, f64),
    pub point: CurveFn,
    pub fold_coefficient: Option<ScalarFn>,
    pub provenance: Provenance,
}

impl fmt::Debug for KnownCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KnownCurve")
            .field("label", &self.label)
            .field("description", &self.description)
            .field("range", &self.range)
            .field("provenance", &self.provenance)
            .finish()
    }
}

#[derive(Clone, Debug, Default)]
pub struct KnownAnswers {
    pub points: Vec<KnownPoint>,
    pub curves: Vec<KnownCurve>,
}

/// A loaded model: factorization, perturbation, parameters, and metadata.
#[derive(Clone)]
pub struct FactorizedModel {
    pub name: String,
    pub variables: Vec<String>,
    pub parameters: Vec<Parameter>,
    pub eps: f64,
    pub domain: Domain,
    /// Box used for fiber plots; at least as large as `domain`.
    pub fiber_domain: Domain,
    pub known: KnownAnswers,
    system: Arc<dyn SlowFastSystem>,
}

impl fmt::Debug for FactorizedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FactorizedModel")
            .field("name", &self.name)
            .field("n", &self.n())
            .field("m", &self.m())
            .field("parameters", &self.parameters)
            .field("eps", &self.eps)
            .finish()
    }
}

impl FactorizedModel {
    pub fn new(
        name: impl Into<String>,
        variables: Vec<String>,
        parameters: Vec<Parameter>,
        eps: f64,
        domain: Domain,
        system: Arc<dyn SlowFastSystem>,
    ) -> Result<Self> {
        let n = system.dim();
        let m = system.codim();
        if m == 0 || m >= n {
            return Err(Error::ModelDefinition(format!(
                "need 1 <= m < n, got n = {n}, m = {m}"
            )));
        }
        if n > crate::tensorkit::MAX_DIM {
            return Err(Error::ModelDefinition(format!(
                "dimension {n} exceeds {}",
                crate::tensorkit::MAX_DIM
            )));
        }
        if variables.len() != n || domain.dim() != n {
            return Err(Error::ModelDefinition(
                "variables and domain must have n entries".into(),
            ));
        }
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::Parameter {
                name: "eps".into(),
                value: eps,
                constraint: "eps >= 0".into(),
            });
        }
        Ok(Self {
            name: name.into(),
            variables,
            parameters,
            eps,
            fiber_domain: domain.clone(),
            domain,
            known: KnownAnswers::default(),
            system,
        })
    }

    pub fn with_fiber_domain(mut self, d: Domain) -> Self {
        self.fiber_domain = d;
        self
    }

    pub fn with_known(mut self, known: KnownAnswers) -> Self {
        self.known = known;
        self
    }

    pub fn n(&self) -> usize {
        self.system.dim()
    }

    pub fn m(&self) -> usize {
        self.system.codim()
    }

    /// Slow dimension `k = n − m`.
    pub fn k(&self) -> usize {
        self.n() - self.m()
    }

    pub fn system(&self) -> &Arc<dyn SlowFastSystem> {
        &self.system
    }

    pub fn provider(&self) -> DerivativeProvider<'_> {
        DerivativeProvider::new(self)
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.parameters
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.value)
    }

    fn check_len(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.n() {
            return Err(Error::dim(format!(
                "expected {} coordinates, got {}",
                self.n(),
                z.len()
            )));
        }
        Ok(())
    }

    /// `N(z) f(z)`
    pub fn eval_layer(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z)?;
        let v = layer_field(self.system.as_ref(), z);
        finite_or(v, "layer field", z)
    }

    /// `N(z) f(z) + ε G(z, ε)` at the model's ε.
    pub fn eval_full(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.eval_full_eps(z, self.eps)
    }

    pub fn eval_full_eps(&self, z: &[f64], eps: f64) -> Result<Vec<f64>> {
        self.check_len(z)?;
        let v = self.system.full_field(z, eps);
        finite_or(v, "full field", z)
    }

    /// Same model with another ε.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::Parameter {
                name: "eps".into(),
                value: eps,
                constraint: "eps >= 0".into(),
            });
        }
        let mut out = self.clone();
        out.eps = eps;
        if let Some(p) = out.parameters.iter_mut().find(|p| p.name == "eps") {
            p.value = eps;
        }
        Ok(out)
    }

    /// Replaces the underlying system, keeping metadata (known answers are dropped).
    pub fn map_system(
        &self,
        name: String,
        system: Arc<dyn SlowFastSystem>,
        domain: Domain,
    ) -> Result<Self> {
        let mut out = Self::new(
            name,
            self.variables.clone(),
            self.parameters.clone(),
            self.eps,
            domain,
            system,
        )?;
        out.fiber_domain = out.domain.clone();
        Ok(out)
    }
}

fn finite_or(v: Vec<f64>, what: &str, z: &[f64]) -> Result<Vec<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(Error::Evaluation {
            what: what.into(),
            point: z.to_vec(),
        })
    }
}

impl Factorization for FactorizedModel {
    fn dim(&self) -> usize {
        self.system.dim()
    }
    fn codim(&self) -> usize {
        self.system.codim()
    }
    fn f(&self, z: &[f64]) -> Vec<f64> {
        self.system.f(z)
    }
    fn n_matrix(&self, z: &[f64]) -> DenseMatrix {
        self.system.n_matrix(z)
    }
    fn df(&self, z: &[f64]) -> Option<DenseMatrix> {
        self.system.df(z)
    }
    fn d2f(&self, z: &[f64]) -> Option<MultilinearMap> {
        self.system.d2f(z)
    }
    fn d3f(&self, z: &[f64]) -> Option<MultilinearMap> {
        self.system.d3f(z)
    }
    fn dn(&self, z: &[f64]) -> Option<MultilinearMap> {
        self.system.dn(z)
    }
    fn d2n(&self, z: &[f64]) -> Option<MultilinearMap> {
        self.system.d2n(z)
    }
}

impl SlowFastSystem for FactorizedModel {
    fn perturbation(&self, z: &[f64], eps: f64) -> Vec<f64> {
        self.system.perturbation(z, eps)
    }
    fn full_field(&self, z: &[f64], eps: f64) -> Vec<f64> {
        self.system.full_field(z, eps)
    }
}

/// The five built-in models with default parameters.
pub fn zoo() -> Vec<FactorizedModel> {
    MODEL_NAMES
        .iter()
        .map(|name| load_model(name, &[]).expect("built-in model loads with defaults"))
        .collect()
}

/// Loads a built-in model by name with parameter overrides.
///
/// Mitotic face variants are selected with `mitotic:X=0`, `mitotic:X=1`,
/// `mitotic:M=0` or `mitotic:M=1`; plain `mitotic` is the `X=0` face.
pub fn load_model(name: &str, overrides: &[(String, f64)]) -> Result<FactorizedModel> {
    let model = zoo::build(name, overrides)?;
    check_consistency(&model)?;
    Ok(model)
}

/// Load-time checks: `f = 0` has solutions in the domain and `N` has full
/// column rank at the solutions found.
pub fn check_consistency(model: &FactorizedModel) -> Result<()> {
    use crate::geomflow::{project_to_s, NewtonConfig};
    use crate::tensorkit::{numerical_rank, RankTolerance};

    let n = model.n();
    let cfg = NewtonConfig::default();
    let mut found = 0;
    let mut rank_ok = 0;
    let fractions = [0.5, 0.25, 0.75, 0.4, 0.6];
    for (s, frac) in fractions.iter().enumerate() {
        let u: Vec<f64> = (0..n)
            .map(|i| if i % 2 == s % 2 { *frac } else { 1.0 - frac })
            .collect();
        let seed = model.domain.lerp(&u);
        let Ok(p) = project_to_s(&model.provider(), &seed, &cfg) else {
            continue;
        };
        found += 1;
        let Ok(nm) = model.provider().n_matrix(&p.point) else {
            continue;
        };
        if numerical_rank(&nm, RankTolerance::default()) == model.m() {
            rank_ok += 1;
        }
    }
    if found == 0 {
        return Err(Error::ModelDefinition(format!(
            "{}: no solution of f = 0 found from seeds in the domain",
            model.name
        )));
    }
    if rank_ok == 0 {
        return Err(Error::ModelDefinition(format!(
            "{}: N is column-rank deficient at every sampled point of f = 0",
            model.name
        )));
    }
    Ok(())
}

/// Parses `name=value` overrides.
pub fn parse_overrides(items: &[String]) -> Result<Vec<(String, f64)>> {
    items
        .iter()
        .map(|s| {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::ModelDefinition(format!("expected name=value, got `{s}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::ModelDefinition(format!("`{v}` is not a number")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

pub(crate) fn apply_overrides(
    params: &mut [Parameter],
    eps: &mut f64,
    overrides: &[(String, f64)],
) -> Result<()> {
    for (name, value) in overrides {
        if name == "eps" || name == "epsilon" {
            if !(value.is_finite() && *value >= 0.0) {
                return Err(Error::Parameter {
                    name: "eps".into(),
                    value: *value,
                    constraint: "eps >= 0".into(),
                });
            }
            *eps = *value;
            if let Some(p) = params.iter_mut().find(|p| p.name == "eps") {
                p.value = *value;
            }
            continue;
        }
        let p = params
            .iter_mut()
            .find(|p| &p.name == name)
            .ok_or_else(|| Error::ModelDefinition(format!("unknown parameter `{name}`")))?;
        p.check(*value)?;
        p.value = *value;
    }
    Ok(())
}
