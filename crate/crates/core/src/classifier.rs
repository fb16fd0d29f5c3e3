//! Contact-point tests: membership in the critical manifold, loss of normal
//! hyperbolicity, nullvectors, contact order, fold / cusp / slow-generic
//! conditions, and the combined [`classify`] pipeline.

use serde::{Deserialize, Serialize};

use crate::derivatives::{ChainValues, DerivativeProvider};
use crate::error::{Error, Result};
use crate::geomflow::{project_to_s, NewtonConfig};
use crate::tensorkit::{adjugate, eigenvalues, norm2, norm_inf, numerical_rank, singular_values};
use crate::tensorkit::{DenseMatrix, RankTolerance, SpectrumResult};

pub const DEFAULT_MAX_ORDER: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub zero_abs: f64,
    pub zero_rel: f64,
    pub rank: RankTolerance,
    pub manifold_dist: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            zero_abs: 1e-8,
            zero_rel: 1e-6,
            rank: RankTolerance::default(),
            manifold_dist: 1e-9,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.zero_abs,
            self.zero_rel,
            self.rank.absolute,
            self.rank.relative,
            self.manifold_dist,
        ];
        if all.iter().all(|t| t.is_finite() && *t > 0.0) {
            Ok(())
        } else {
            Err(Error::Numerical(
                "tolerances must be positive and finite".into(),
            ))
        }
    }

    /// `|v| ≤ zero_abs + zero_rel·scale + extra`
    pub fn threshold(&self, scale: f64, extra: f64) -> f64 {
        self.zero_abs + self.zero_rel * scale.abs() + extra
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    NotOnCriticalManifold,
    NormallyHyperbolic,
    Contact {
        order: usize,
        slow_generic: bool,
        c0_rank: usize,
    },
    Degenerate {
        rank_deficiency: usize,
    },
    Inconclusive {
        reason: String,
    },
}

impl Verdict {
    pub fn kind(&self) -> &'static str {
        match self {
            Verdict::NotOnCriticalManifold => "not_on_critical_manifold",
            Verdict::NormallyHyperbolic => "normally_hyperbolic",
            Verdict::Contact { .. } => "contact",
            Verdict::Degenerate { .. } => "degenerate",
            Verdict::Inconclusive { .. } => "inconclusive",
        }
    }

    pub fn order(&self) -> Option<usize> {
        match self {
            Verdict::Contact { order, .. } => Some(*order),
            _ => None,
        }
    }

    /// Short human label: `fold`, `cusp`, `A3`, …
    pub fn label(&self) -> String {
        match self {
            Verdict::Contact {
                order,
                slow_generic: true,
                ..
            } => match order {
                1 => "fold".into(),
                2 => "cusp".into(),
                c => format!("A{}", c + 1),
            },
            Verdict::Contact { order, .. } => format!("contact{order}"),
            other => other.kind().into(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    /// `rank Df < m` at a contact point.
    pub submersion_failure: bool,
    /// The l-projected and full-vector chain criteria give different orders.
    pub projection_disagreement: bool,
    /// Fewer slow variables than the contact order (`k < c`).
    pub slow_variable_shortfall: bool,
}

impl Flags {
    pub fn names(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.submersion_failure {
            v.push("submersion_failure");
        }
        if self.projection_disagreement {
            v.push("projection_disagreement");
        }
        if self.slow_variable_shortfall {
            v.push("slow_variable_shortfall");
        }
        v
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifoldCheck {
    pub on_manifold: bool,
    pub residual: f64,
    pub threshold: f64,
}

/// `‖f(z)‖_∞ ≤ manifold_dist · max(1, ‖Df(z)‖_∞)`
pub fn on_critical_manifold(
    p: &DerivativeProvider,
    z: &[f64],
    tol: &Tolerances,
) -> Result<ManifoldCheck> {
    let f = p.f(z)?;
    let residual = norm_inf(&f);
    let scale = p.jacobian_f(z)?.norm_inf().max(1.0);
    let threshold = tol.manifold_dist * scale;
    Ok(ManifoldCheck {
        on_manifold: residual <= threshold,
        residual,
        threshold,
    })
}

/// Eigenvalues of the `m × m` matrix `Df N`.
pub fn nontrivial_spectrum(p: &DerivativeProvider, z: &[f64]) -> Result<SpectrumResult> {
    eigenvalues(&p.dfn(z)?)
}

/// Left and right nullvectors from the adjugate of `Df N`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Nullvectors {
    pub l: Vec<f64>,
    pub r: Vec<f64>,
    /// `max(‖Df N r‖, ‖lᵀ Df N‖)`
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub enum NullvectorOutcome {
    Found(Nullvectors),
    Degenerate { rank_deficiency: usize },
}

fn sign_normalize(v: &mut [f64]) {
    let big = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * big) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm2(v);
    if n == 0.0 || !n.is_finite() {
        return None;
    }
    let mut u: Vec<f64> = v.iter().map(|x| x / n).collect();
    sign_normalize(&mut u);
    Some(u)
}

/// Threshold below which a singular value or eigenvalue of `Df N` counts as zero.
fn dfn_zero_threshold(p: &DerivativeProvider, z: &[f64], tol: &Tolerances) -> Result<f64> {
    let scale = p.jacobian_f(z)?.norm_inf() * p.n_matrix(z)?.norm_inf();
    Ok(tol.threshold(scale, 0.0))
}

pub fn nullvectors(
    p: &DerivativeProvider,
    z: &[f64],
    tol: &Tolerances,
) -> Result<NullvectorOutcome> {
    let dfn = p.dfn(z)?;
    let thr = dfn_zero_threshold(p, z, tol)?;
    let sigma = singular_values(&dfn)?;
    let deficiency = sigma.iter().filter(|s| **s <= thr).count();
    if deficiency >= 2 {
        return Ok(NullvectorOutcome::Degenerate {
            rank_deficiency: deficiency,
        });
    }
    let adj = adjugate(&dfn)?;
    let m = dfn.rows();
    let best_col = (0..m)
        .max_by(|a, b| norm2(&adj.column(*a)).total_cmp(&norm2(&adj.column(*b))))
        .unwrap_or(0);
    let best_row = (0..m)
        .max_by(|a, b| norm2(adj.row(*a)).total_cmp(&norm2(adj.row(*b))))
        .unwrap_or(0);
    let (Some(r), Some(l)) = (unit(&adj.column(best_col)), unit(adj.row(best_row))) else {
        return Ok(NullvectorOutcome::Degenerate {
            rank_deficiency: deficiency.max(2),
        });
    };
    let residual = norm2(&dfn.matvec(&r)?).max(norm2(&dfn.vecmat(&l)?));
    Ok(NullvectorOutcome::Found(Nullvectors { l, r, residual }))
}

/// Contact order from the chain `l·g_j`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderReport {
    /// `None` when every computed value was zero.
    pub order: Option<usize>,
    /// Order from the full vectors `‖g_j‖`.
    pub full_vector_order: Option<usize>,
    pub chain: ChainValues,
    pub thresholds: Vec<f64>,
    pub full_norms: Vec<f64>,
}

impl OrderReport {
    pub fn is_zero(&self, j: usize) -> bool {
        self.chain.projected[j].abs() <= self.thresholds[j]
    }

    fn first_nonzero(values: &[f64], thresholds: &[f64]) -> Option<usize> {
        values
            .iter()
            .zip(thresholds)
            .enumerate()
            .skip(1)
            .find(|(_, (v, t))| v.abs() > **t)
            .map(|(j, _)| j)
    }
}

pub fn contact_order(
    p: &DerivativeProvider,
    z: &[f64],
    nv: &Nullvectors,
    tol: &Tolerances,
    max_order: usize,
) -> Result<OrderReport> {
    let j_max = max_order + 1;
    let chain = p.chain_values(z, &nv.r, &nv.l, j_max)?;
    let scales = p.chain_magnitudes(z, &nv.r, &nv.l, j_max)?;
    let thresholds: Vec<f64> = scales
        .iter()
        .zip(&chain.fd_error)
        .map(|(s, e)| tol.threshold(*s, 10.0 * e))
        .collect();
    let full_norms = chain.full_norms();
    let order = OrderReport::first_nonzero(&chain.projected, &thresholds).map(|j| j - 1);
    let full_vector_order = OrderReport::first_nonzero(&full_norms, &thresholds).map(|j| j - 1);
    Ok(OrderReport {
        order,
        full_vector_order,
        chain,
        thresholds,
        full_norms,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldReport {
    pub is_fold: bool,
    pub coefficient: f64,
    pub submersion_rank: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CuspReport {
    pub is_cusp: bool,
    pub third_order_coefficient: f64,
    pub c0: DenseMatrix,
    pub c0_rank: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenericityReport {
    pub is_slow_generic: bool,
    pub c0: DenseMatrix,
    pub c0_rank: usize,
    pub slow_variable_shortfall: bool,
}

pub fn submersion_rank(p: &DerivativeProvider, z: &[f64], tol: &Tolerances) -> Result<usize> {
    Ok(numerical_rank(&p.jacobian_f(z)?, tol.rank))
}

/// Everything the individual tests share at one contact point.
struct ContactData<'p, 'a> {
    p: &'p DerivativeProvider<'a>,
    z: Vec<f64>,
    nv: Nullvectors,
    order: OrderReport,
    df_rank: usize,
}

impl<'p, 'a> ContactData<'p, 'a> {
    fn new(
        p: &'p DerivativeProvider<'a>,
        z: &[f64],
        tol: &Tolerances,
        max_order: usize,
    ) -> Result<Self> {
        let nv = match nullvectors(p, z, tol)? {
            NullvectorOutcome::Found(nv) => nv,
            NullvectorOutcome::Degenerate { rank_deficiency } => {
                return Err(Error::Numerical(format!(
                    "Df N has rank deficiency {rank_deficiency}; no contact nullvectors"
                )))
            }
        };
        let order = contact_order(p, z, &nv, tol, max_order.max(2))?;
        let df_rank = submersion_rank(p, z, tol)?;
        Ok(Self {
            p,
            z: z.to_vec(),
            nv,
            order,
            df_rank,
        })
    }

    fn c0(&self, c: usize, tol: &Tolerances) -> Result<(DenseMatrix, usize)> {
        let c0 = self.p.chain_gradients(&self.z, &self.nv.r, &self.nv.l, c)?;
        let rank = numerical_rank(&c0, tol.rank);
        Ok((c0, rank))
    }

    fn fold(&self) -> FoldReport {
        let m = self.p.m();
        let coefficient = self.order.chain.projected[2];
        FoldReport {
            is_fold: self.df_rank == m && !self.order.is_zero(2) && self.order.is_zero(1),
            coefficient,
            submersion_rank: self.df_rank,
        }
    }

    fn cusp(&self, tol: &Tolerances) -> Result<CuspReport> {
        let m = self.p.m();
        let (c0, c0_rank) = self.c0(2, tol)?;
        let third = self.order.chain.projected[3];
        let is_cusp = self.df_rank == m
            && self.order.is_zero(1)
            && self.order.is_zero(2)
            && !self.order.is_zero(3)
            && c0_rank == 2;
        Ok(CuspReport {
            is_cusp,
            third_order_coefficient: third,
            c0,
            c0_rank,
        })
    }

    fn generic(&self, c: usize, tol: &Tolerances) -> Result<GenericityReport> {
        let m = self.p.m();
        let k = self.p.n() - m;
        let (c0, c0_rank) = self.c0(c, tol)?;
        let chain_ok =
            (1..=c).all(|j| j < self.order.chain.projected.len() && self.order.is_zero(j));
        let shortfall = k < c;
        Ok(GenericityReport {
            is_slow_generic: !shortfall && self.df_rank == m && chain_ok && c0_rank == c,
            c0,
            c0_rank,
            slow_variable_shortfall: shortfall,
        })
    }
}

/// Fold conditions at a contact point: `rank Df = m` and `l·g₂ ≠ 0`.
pub fn fold_test(p: &DerivativeProvider, z: &[f64], tol: &Tolerances) -> Result<FoldReport> {
    Ok(ContactData::new(p, z, tol, 2)?.fold())
}

/// Cusp conditions: `rank Df = m`, `l·g₂ = 0`, `l·g₃ ≠ 0`, `rank C₀ = 2`.
pub fn cusp_test(p: &DerivativeProvider, z: &[f64], tol: &Tolerances) -> Result<CuspReport> {
    ContactData::new(p, z, tol, 3)?.cusp(tol)
}

/// Order-`c` slow-generic conditions with the `c × n` matrix `C₀`.
pub fn slow_generic_test(
    p: &DerivativeProvider,
    z: &[f64],
    c: usize,
    tol: &Tolerances,
) -> Result<GenericityReport> {
    if c == 0 {
        return Err(Error::Numerical("contact order must be at least 1".into()));
    }
    ContactData::new(p, z, tol, c)?.generic(c, tol)
}

/// Per-order chain record for reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainEntry {
    pub order: usize,
    pub l_projected: f64,
    pub full_norm: f64,
    pub threshold: f64,
}

/// Everything computed while classifying one point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContactDiagnostics {
    pub point: Vec<f64>,
    pub f_value: Vec<f64>,
    pub manifold_residual: f64,
    pub dfn: Option<DenseMatrix>,
    pub eigenvalues: Vec<[f64; 2]>,
    pub l: Option<Vec<f64>>,
    pub r: Option<Vec<f64>>,
    pub nullvector_residual: Option<f64>,
    pub chain: Vec<ChainEntry>,
    pub c0: Option<DenseMatrix>,
    pub c0_rank: Option<usize>,
    pub fold_coefficient: Option<f64>,
    pub cusp_coefficient: Option<f64>,
    pub submersion_rank: usize,
    pub flags: Flags,
    pub verdict: Verdict,
}

impl ContactDiagnostics {
    pub fn is_fold(&self) -> bool {
        matches!(
            self.verdict,
            Verdict::Contact {
                order: 1,
                slow_generic: true,
                ..
            }
        )
    }

    pub fn is_cusp(&self) -> bool {
        matches!(
            self.verdict,
            Verdict::Contact {
                order: 2,
                slow_generic: true,
                ..
            }
        )
    }
}

/// Classifies `z` with the default maximal order.
pub fn classify(p: &DerivativeProvider, z: &[f64], tol: &Tolerances) -> Result<ContactDiagnostics> {
    classify_with(p, z, tol, DEFAULT_MAX_ORDER)
}

pub fn classify_with(
    p: &DerivativeProvider,
    z: &[f64],
    tol: &Tolerances,
    max_order: usize,
) -> Result<ContactDiagnostics> {
    tol.validate()?;
    if max_order == 0 || max_order > 5 {
        return Err(Error::Unsupported(format!(
            "max_order {max_order} (allowed 1..=5)"
        )));
    }
    let ms = on_critical_manifold(p, z, tol)?;
    let mut d = ContactDiagnostics {
        point: z.to_vec(),
        f_value: p.f(z)?,
        manifold_residual: ms.residual,
        dfn: None,
        eigenvalues: Vec::new(),
        l: None,
        r: None,
        nullvector_residual: None,
        chain: Vec::new(),
        c0: None,
        c0_rank: None,
        fold_coefficient: None,
        cusp_coefficient: None,
        submersion_rank: submersion_rank(p, z, tol)?,
        flags: Flags::default(),
        verdict: Verdict::NotOnCriticalManifold,
    };
    if !ms.on_manifold {
        return Ok(d);
    }

    let dfn = p.dfn(z)?;
    let spectrum = eigenvalues(&dfn)?;
    d.eigenvalues = spectrum.as_pairs();
    d.dfn = Some(dfn);
    let thr = dfn_zero_threshold(p, z, tol)?;
    if spectrum.min_modulus() > thr {
        d.verdict = Verdict::NormallyHyperbolic;
        return Ok(d);
    }

    let nv = match nullvectors(p, z, tol)? {
        NullvectorOutcome::Found(nv) => nv,
        NullvectorOutcome::Degenerate { rank_deficiency } => {
            d.verdict = Verdict::Degenerate { rank_deficiency };
            return Ok(d);
        }
    };
    d.l = Some(nv.l.clone());
    d.r = Some(nv.r.clone());
    d.nullvector_residual = Some(nv.residual);

    let order = contact_order(p, z, &nv, tol, max_order.max(2))?;
    d.chain = (0..order.chain.projected.len())
        .map(|j| ChainEntry {
            order: j,
            l_projected: order.chain.projected[j],
            full_norm: order.full_norms[j],
            threshold: order.thresholds[j],
        })
        .collect();
    d.fold_coefficient = order.chain.projected.get(2).copied();
    d.cusp_coefficient = order.chain.projected.get(3).copied();
    d.flags.projection_disagreement = order.order != order.full_vector_order;
    let m = p.m();
    d.flags.submersion_failure = d.submersion_rank < m;

    let c = match order.order {
        Some(c) if c >= 1 && c <= max_order => c,
        Some(0) => {
            d.verdict = Verdict::Inconclusive {
                reason: "Df N has a vanishing eigenvalue but l·Df N r is nonzero".into(),
            };
            return Ok(d);
        }
        _ => {
            d.verdict = Verdict::Inconclusive {
                reason: format!("chain vanishes through order {}", max_order + 1),
            };
            return Ok(d);
        }
    };

    let data = ContactData {
        p,
        z: z.to_vec(),
        nv,
        order,
        df_rank: d.submersion_rank,
    };
    let generic = data.generic(c, tol)?;
    d.flags.slow_variable_shortfall = generic.slow_variable_shortfall;
    d.c0_rank = Some(generic.c0_rank);
    d.c0 = Some(generic.c0);
    d.verdict = Verdict::Contact {
        order: c,
        slow_generic: generic.is_slow_generic,
        c0_rank: generic.c0_rank,
    };
    Ok(d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    pub max_order: usize,
    /// Off-manifold points are projected onto `f = 0` when the projection
    /// moves them at most this far (Euclidean).
    pub projection_radius: f64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            max_order: DEFAULT_MAX_ORDER,
            projection_radius: 1e-4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Analysis {
    pub input_point: Vec<f64>,
    /// Set when the input was projected onto the critical manifold first.
    pub projected_point: Option<Vec<f64>>,
    pub projection_displacement: Option<f64>,
    pub diagnostics: ContactDiagnostics,
}

/// [`classify_with`] preceded by a short Newton projection for points that
/// are near, but not on, the critical manifold.
pub fn analyze_point(
    p: &DerivativeProvider,
    z: &[f64],
    tol: &Tolerances,
    opts: &AnalyzeOptions,
) -> Result<Analysis> {
    let ms = on_critical_manifold(p, z, tol)?;
    if !ms.on_manifold {
        if let Ok(proj) = project_to_s(p, z, &NewtonConfig::default()) {
            if proj.displacement <= opts.projection_radius {
                let diagnostics = classify_with(p, &proj.point, tol, opts.max_order)?;
                return Ok(Analysis {
                    input_point: z.to_vec(),
                    projected_point: Some(proj.point),
                    projection_displacement: Some(proj.displacement),
                    diagnostics,
                });
            }
        }
    }
    Ok(Analysis {
        input_point: z.to_vec(),
        projected_point: None,
        projection_displacement: None,
        diagnostics: classify_with(p, z, tol, opts.max_order)?,
    })
}
