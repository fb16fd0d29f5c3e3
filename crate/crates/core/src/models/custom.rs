//! User-defined models read from TOML.
//!
//! ```toml
//! name = "parabola"
//! variables = ["x", "y"]
//! k = 1
//! eps = 0.01
//!
//! [domain]
//! lower = [-3.0, -3.0]
//! upper = [3.0, 3.0]
//!
//! [params.a]
//! value = 1.0
//! min = 0.0
//!
//! [expressions]
//! f = ["y + a*x^2 - 1"]
//! N = [["x - 2"], ["1"]]
//! G = ["0", "0"]
//! ```
//!
//! `N` lists the `n` rows of the `n × m` matrix. Analytic tensors through
//! third order come from symbolic differentiation.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use super::expr::Expr;
use super::{apply_overrides, Domain, FactorizedModel, Parameter, SlowFastSystem};
use crate::derivatives::Factorization;
use crate::error::{Error, Result};
use crate::tensorkit::{DenseMatrix, MultilinearMap};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDefinition {
    pub name: String,
    pub variables: Vec<String>,
    pub k: usize,
    pub n: Option<usize>,
    #[serde(default)]
    pub eps: f64,
    pub domain: Option<DomainDef>,
    #[serde(default)]
    pub params: BTreeMap<String, ParamDef>,
    pub expressions: ExpressionsDef,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainDef {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDef {
    pub value: f64,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpressionsDef {
    pub f: Vec<String>,
    #[serde(rename = "N")]
    pub n: Vec<Vec<String>>,
    #[serde(rename = "G")]
    pub g: Option<Vec<String>>,
}

pub fn parse_model_definition(text: &str) -> Result<ModelDefinition> {
    toml::from_str(text).map_err(|e| Error::ModelDefinition(e.to_string()))
}

pub fn load_model_file(path: &Path, overrides: &[(String, f64)]) -> Result<FactorizedModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::ModelDefinition(format!("{}: {e}", path.display())))?;
    let def = parse_model_definition(&text)?;
    let model = def.build(overrides)?;
    super::check_consistency(&model)?;
    Ok(model)
}

impl ModelDefinition {
    pub fn build(&self, overrides: &[(String, f64)]) -> Result<FactorizedModel> {
        let n = self.variables.len();
        if let Some(decl) = self.n {
            if decl != n {
                return Err(Error::ModelDefinition(format!(
                    "n = {decl} but {n} variables listed"
                )));
            }
        }
        if self.k == 0 || self.k >= n {
            return Err(Error::ModelDefinition(format!(
                "need 1 <= k < n, got k = {}",
                self.k
            )));
        }
        let m = n - self.k;
        let ex = &self.expressions;
        if ex.f.len() != m {
            return Err(Error::ModelDefinition(format!(
                "f needs {m} components, got {}",
                ex.f.len()
            )));
        }
        if ex.n.len() != n || ex.n.iter().any(|row| row.len() != m) {
            return Err(Error::ModelDefinition(format!(
                "N must be {n} rows of {m} entries"
            )));
        }
        if let Some(g) = &ex.g {
            if g.len() != n {
                return Err(Error::ModelDefinition(format!(
                    "G needs {n} components, got {}",
                    g.len()
                )));
            }
        }

        let mut params: Vec<Parameter> = self
            .params
            .iter()
            .map(|(name, d)| {
                let mut p = Parameter::new(name, d.value);
                if let Some(lo) = d.min {
                    p = p.at_least(lo);
                }
                if let Some(hi) = d.max {
                    p = p.at_most(hi);
                }
                p
            })
            .collect();
        for p in &params {
            p.check(p.value)?;
        }
        let mut eps = self.eps;
        params.push(Parameter::new("eps", eps).at_least(0.0));
        apply_overrides(&mut params, &mut eps, overrides)?;

        let constants: HashMap<String, f64> = params
            .iter()
            .filter(|p| p.name != "eps")
            .map(|p| (p.name.clone(), p.value))
            .collect();
        let parse = |s: &String| Expr::parse(s, &self.variables, &constants);
        let f = ex.f.iter().map(parse).collect::<Result<Vec<_>>>()?;
        let nm =
            ex.n.iter()
                .map(|row| row.iter().map(parse).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
        let g = match &ex.g {
            Some(g) => g.iter().map(parse).collect::<Result<Vec<_>>>()?,
            None => vec![Expr::Const(0.0); n],
        };

        let domain = match &self.domain {
            Some(d) => {
                if d.lower.len() != n
                    || d.upper.len() != n
                    || d.lower
                        .iter()
                        .zip(&d.upper)
                        .any(|(a, b)| a.partial_cmp(b) != Some(std::cmp::Ordering::Less))
                {
                    return Err(Error::ModelDefinition(
                        "domain needs n bounds with lower < upper".into(),
                    ));
                }
                Domain::new(d.lower.clone(), d.upper.clone())
            }
            None => Domain::cube(n, -1.0, 1.0),
        };
        let system = ExprSystem::new(n, m, f, nm, g);
        FactorizedModel::new(
            self.name.clone(),
            self.variables.clone(),
            params,
            eps,
            domain,
            Arc::new(system),
        )
    }
}

/// Expression trees for `f`, `N`, `G` and their derivatives.
struct ExprSystem {
    n: usize,
    m: usize,
    f: Vec<Expr>,
    /// `[a][i]`
    df: Vec<Vec<Expr>>,
    /// `[a][i][j]`
    d2f: Vec<Vec<Vec<Expr>>>,
    /// `[a][i][j][k]`
    d3f: Vec<Vec<Vec<Vec<Expr>>>>,
    /// `[i][b]`
    nm: Vec<Vec<Expr>>,
    /// `[i][b][j]`
    dn: Vec<Vec<Vec<Expr>>>,
    /// `[i][b][j][k]`
    d2n: Vec<Vec<Vec<Vec<Expr>>>>,
    g: Vec<Expr>,
}

fn grad(e: &Expr, n: usize) -> Vec<Expr> {
    (0..n).map(|j| e.diff(j)).collect()
}

impl ExprSystem {
    fn new(n: usize, m: usize, f: Vec<Expr>, nm: Vec<Vec<Expr>>, g: Vec<Expr>) -> Self {
        let df: Vec<Vec<Expr>> = f.iter().map(|e| grad(e, n)).collect();
        let d2f: Vec<Vec<Vec<Expr>>> = df
            .iter()
            .map(|row| row.iter().map(|e| grad(e, n)).collect())
            .collect();
        let d3f = d2f
            .iter()
            .map(|a| {
                a.iter()
                    .map(|row| row.iter().map(|e| grad(e, n)).collect())
                    .collect()
            })
            .collect();
        let dn: Vec<Vec<Vec<Expr>>> = nm
            .iter()
            .map(|row| row.iter().map(|e| grad(e, n)).collect())
            .collect();
        let d2n = dn
            .iter()
            .map(|a| {
                a.iter()
                    .map(|row| row.iter().map(|e| grad(e, n)).collect())
                    .collect()
            })
            .collect();
        Self {
            n,
            m,
            f,
            df,
            d2f,
            d3f,
            nm,
            dn,
            d2n,
            g,
        }
    }
}

fn flatten2(t: &[Vec<Expr>], z: &[f64]) -> Vec<f64> {
    t.iter().flat_map(|r| r.iter().map(|e| e.eval(z))).collect()
}

fn flatten3(t: &[Vec<Vec<Expr>>], z: &[f64]) -> Vec<f64> {
    t.iter().flat_map(|r| flatten2(r, z)).collect()
}

fn flatten4(t: &[Vec<Vec<Vec<Expr>>>], z: &[f64]) -> Vec<f64> {
    t.iter().flat_map(|r| flatten3(r, z)).collect()
}

impl Factorization for ExprSystem {
    fn dim(&self) -> usize {
        self.n
    }
    fn codim(&self) -> usize {
        self.m
    }
    fn f(&self, z: &[f64]) -> Vec<f64> {
        self.f.iter().map(|e| e.eval(z)).collect()
    }
    fn n_matrix(&self, z: &[f64]) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.m, |i, b| self.nm[i][b].eval(z))
    }
    fn df(&self, z: &[f64]) -> Option<DenseMatrix> {
        DenseMatrix::from_row_slice(self.m, self.n, &flatten2(&self.df, z)).ok()
    }
    fn d2f(&self, z: &[f64]) -> Option<MultilinearMap> {
        MultilinearMap::from_data(self.m, &[self.n, self.n], flatten3(&self.d2f, z)).ok()
    }
    fn d3f(&self, z: &[f64]) -> Option<MultilinearMap> {
        MultilinearMap::from_data(self.m, &[self.n, self.n, self.n], flatten4(&self.d3f, z)).ok()
    }
    fn dn(&self, z: &[f64]) -> Option<MultilinearMap> {
        MultilinearMap::from_data(self.n, &[self.m, self.n], flatten3(&self.dn, z)).ok()
    }
    fn d2n(&self, z: &[f64]) -> Option<MultilinearMap> {
        MultilinearMap::from_data(self.n, &[self.m, self.n, self.n], flatten4(&self.d2n, z)).ok()
    }
}

impl SlowFastSystem for ExprSystem {
    fn perturbation(&self, z: &[f64], _eps: f64) -> Vec<f64> {
        self.g.iter().map(|e| e.eval(z)).collect()
    }
}
