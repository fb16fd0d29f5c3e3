//! Built-in models.

use std::sync::Arc;

use super::{
    apply_overrides, Domain, Expectation, FactorizedModel, KnownAnswers, KnownCurve, KnownPoint,
    Parameter, Provenance, SlowFastSystem,
};
use crate::derivatives::Factorization;
use crate::error::{Error, Result};
use crate::tensorkit::{DenseMatrix, MultilinearMap};

pub const MODEL_NAMES: [&str; 5] = [
    "planar_parabola",
    "cusp_normal_form",
    "ac_family",
    "three_component",
    "mitotic",
];

pub(crate) fn build(name: &str, overrides: &[(String, f64)]) -> Result<FactorizedModel> {
    let (base, face) = match name.split_once(':') {
        Some((b, f)) => (b, Some(f)),
        None => (name, None),
    };
    match (base, face) {
        ("planar_parabola", None) => planar(overrides),
        ("cusp_normal_form", None) => cusp(overrides),
        ("ac_family", None) => ac_family(overrides),
        ("three_component", None) => three_component(overrides),
        ("mitotic", None) => mitotic(MitoticFace::X0, overrides),
        ("mitotic", Some(f)) => mitotic(f.parse()?, overrides),
        _ => Err(Error::UnknownModel(name.to_string())),
    }
}

fn vars(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn eps_param(v: f64) -> Parameter {
    Parameter::new("eps", v).at_least(0.0)
}

fn contact(order: usize) -> Expectation {
    Expectation::Contact {
        order,
        slow_generic: None,
        fold_coefficient: None,
        third_order_coefficient: None,
        c0: None,
    }
}

// ---------------------------------------------------------------- planar

/// f = y + x² − 1, N = (x − 2, 1); the perturbation is taken to be zero.
struct Planar;

impl Factorization for Planar {
    fn dim(&self) -> usize {
        2
    }
    fn codim(&self) -> usize {
        1
    }
    fn f(&self, z: &[f64]) -> Vec<f64> {
        vec![z[1] + z[0] * z[0] - 1.0]
    }
    fn n_matrix(&self, z: &[f64]) -> DenseMatrix {
        DenseMatrix::column_vector(&[z[0] - 2.0, 1.0])
    }
    fn df(&self, z: &[f64]) -> Option<DenseMatrix> {
        Some(DenseMatrix::row_vector(&[2.0 * z[0], 1.0]))
    }
    fn d2f(&self, _z: &[f64]) -> Option<MultilinearMap> {
        let mut t = MultilinearMap::zeros(1, &[2, 2]);
        t.set(&[0, 0, 0], 2.0);
        Some(t)
    }
    fn d3f(&self, _z: &[f64]) -> Option<MultilinearMap> {
        Some(MultilinearMap::zeros(1, &[2, 2, 2]))
    }
    fn dn(&self, _z: &[f64]) -> Option<MultilinearMap> {
        let mut t = MultilinearMap::zeros(2, &[1, 2]);
        t.set(&[0, 0, 0], 1.0);
        Some(t)
    }
    fn d2n(&self, _z: &[f64]) -> Option<MultilinearMap> {
        Some(MultilinearMap::zeros(2, &[1, 2, 2]))
    }
}

impl SlowFastSystem for Planar {
    fn perturbation(&self, _z: &[f64], _eps: f64) -> Vec<f64> {
        vec![0.0, 0.0]
    }
}

fn planar(overrides: &[(String, f64)]) -> Result<FactorizedModel> {
    let mut eps = 0.0;
    let mut params = vec![eps_param(eps)];
    apply_overrides(&mut params, &mut eps, overrides)?;
    let mut known = KnownAnswers::default();
    for (label, sign) in [("contact (2-sqrt2)/2", -1.0), ("contact (2+sqrt2)/2", 1.0)] {
        let x = (2.0 + sign * 2f64.sqrt()) / 2.0;
        known.points.push(KnownPoint {
            label: label.into(),
            point: vec![x, 1.0 - x * x],
            expect: Expectation::Contact {
                order: 1,
                slow_generic: Some(true),
                fold_coefficient: Some(4.0 * (x - 2.0) * (x - 1.0)),
                third_order_coefficient: None,
                c0: None,
            },
            provenance: Provenance::Published,
        });
    }
    known.points.push(KnownPoint {
        label: "geometric fold (0,1)".into(),
        point: vec![0.0, 1.0],
        expect: Expectation::NormallyHyperbolic {
            eigenvalues: vec![1.0],
        },
        provenance: Provenance::Derived,
    });
    let domain = Domain::cube(2, -3.0, 3.0);
    Ok(FactorizedModel::new(
        "planar_parabola",
        vars(&["x", "y"]),
        params,
        eps,
        domain,
        Arc::new(Planar),
    )?
    .with_known(known))
}

// ---------------------------------------------------------------- cusp

/// f = z³ + y z + x, N = e_z, G = e_x.
struct Cusp;

impl Factorization for Cusp {
    fn dim(&self) -> usize {
        3
    }
    fn codim(&self) -> usize {
        1
    }
    fn f(&self, z: &[f64]) -> Vec<f64> {
        let (x, y, w) = (z[0], z[1], z[2]);
        vec![w * w * w + y * w + x]
    }
    fn n_matrix(&self, _z: &[f64]) -> DenseMatrix {
        DenseMatrix::column_vector(&[0.0, 0.0, 1.0])
    }
    fn df(&self, z: &[f64]) -> Option<DenseMatrix> {
        Some(DenseMatrix::row_vector(&[
            1.0,
            z[2],
            z[1] + 3.0 * z[2] * z[2],
        ]))
    }
    fn d2f(&self, z: &[f64]) -> Option<MultilinearMap> {
        let mut t = MultilinearMap::zeros(1, &[3, 3]);
        t.set(&[0, 1, 2], 1.0);
        t.set(&[0, 2, 1], 1.0);
        t.set(&[0, 2, 2], 6.0 * z[2]);
        Some(t)
    }
    fn d3f(&self, _z: &[f64]) -> Option<MultilinearMap> {
        let mut t = MultilinearMap::zeros(1, &[3, 3, 3]);
        t.set(&[0, 2, 2, 2], 6.0);
        Some(t)
    }
    fn dn(&self, _z: &[f64]) -> Option<MultilinearMap> {
        Some(MultilinearMap::zeros(3, &[1, 3]))
    }
    fn d2n(&self, _z: &[f64]) -> Option<MultilinearMap> {
        Some(MultilinearMap::zeros(3, &[1, 3, 3]))
    }
}

impl SlowFastSystem for Cusp {
    fn perturbation(&self, _z: &[f64], _eps: f64) -> Vec<f64> {
        vec![1.0, 0.0, 0.0]
    }
}

fn cusp(overrides: &[(String, f64)]) -> Result<FactorizedModel> {
    let mut eps = 0.0;
    let mut params = vec![eps_param(eps)];
    apply_overrides(&mut params, &mut eps, overrides)?;
    let mut known = KnownAnswers::default();
    known.points.push(KnownPoint {
        label: "cusp at origin".into(),
        point: vec![0.0, 0.0, 0.0],
        expect: Expectation::Contact {
            order: 2,
            slow_generic: Some(true),
            fold_coefficient: Some(0.0),
            third_order_coefficient: Some(6.0),
            c0: Some(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]),
        },
        provenance: Provenance::Published,
    });
    known.curves.push(KnownCurve {
        label: "fold parabola".into(),
        description: "y = -3z^2, x = 2z^3; fold coefficient 6z".into(),
        range: (-0.5, 0.5),
        point: Arc::new(|t| vec![2.0 * t * t * t, -3.0 * t * t, t]),
        fold_coefficient: Some(Arc::new(|t| 6.0 * t)),
        provenance: Provenance::Published,
    });
    let domain = Domain::cube(3, -1.0, 1.0);
    Ok(FactorizedModel::new(
        "cusp_normal_form",
        vars(&["x", "y", "z"]),
        params,
        eps,
        domain,
        Arc::new(Cusp),
    )?
    .with_known(known))
}

// ---------------------------------------------------------------- A_c family

/// Variables `(z_1, …, z_c, x)`;
/// f = x^{c+1} + z_c x^{c−1} + … + z_2 x + z_1, N = e_x, G = e_{z_1}.
struct AcFamily {
    c: usize,
}

/// `d^k/dx^k x^p`
fn falling(p: usize, k: usize, x: f64) -> f64 {
    if k > p {
        return 0.0;
    }
    let coeff: f64 = (0..k).map(|i| (p - i) as f64).product();
    coeff * x.powi((p - k) as i32)
}

impl AcFamily {
    fn n(&self) -> usize {
        self.c + 1
    }

    /// `∂^k f/∂x^k` and the `z_i` coefficient functions.
    fn x_partial(&self, z: &[f64], k: usize) -> f64 {
        let x = z[self.c];
        let mut s = falling(self.c + 1, k, x);
        for i in 2..=self.c {
            s += z[i - 1] * falling(i - 1, k, x);
        }
        if k == 0 {
            s += z[0];
        }
        s
    }

    /// `∂^k/∂x^k ∂f/∂z_i` (`i` is 1-based).
    fn z_partial(&self, z: &[f64], i: usize, k: usize) -> f64 {
        falling(i - 1, k, z[self.c])
    }
}

impl Factorization for AcFamily {
    fn dim(&self) -> usize {
        self.n()
    }
    fn codim(&self) -> usize {
        1
    }
    fn f(&self, z: &[f64]) -> Vec<f64> {
        vec![self.x_partial(z, 0)]
    }
    fn n_matrix(&self, _z: &[f64]) -> DenseMatrix {
        let mut e = vec![0.0; self.n()];
        e[self.c] = 1.0;
        DenseMatrix::column_vector(&e)
    }
    fn df(&self, z: &[f64]) -> Option<DenseMatrix> {
        let mut row: Vec<f64> = (1..=self.c).map(|i| self.z_partial(z, i, 0)).collect();
        row.push(self.x_partial(z, 1));
        Some(DenseMatrix::row_vector(&row))
    }
    fn d2f(&self, z: &[f64]) -> Option<MultilinearMap> {
        let n = self.n();
        let x = self.c;
        let mut t = MultilinearMap::zeros(1, &[n, n]);
        for i in 1..=self.c {
            let v = self.z_partial(z, i, 1);
            t.set(&[0, i - 1, x], v);
            t.set(&[0, x, i - 1], v);
        }
        t.set(&[0, x, x], self.x_partial(z, 2));
        Some(t)
    }
    fn d3f(&self, z: &[f64]) -> Option<MultilinearMap> {
        let n = self.n();
        let x = self.c;
        let mut t = MultilinearMap::zeros(1, &[n, n, n]);
        for i in 1..=self.c {
            let v = self.z_partial(z, i, 2);
            t.set(&[0, i - 1, x, x], v);
            t.set(&[0, x, i - 1, x], v);
            t.set(&[0, x, x, i - 1], v);
        }
        t.set(&[0, x, x, x], self.x_partial(z, 3));
        Some(t)
    }
    fn dn(&self, _z: &[f64]) -> Option<MultilinearMap> {
        Some(MultilinearMap::zeros(self.n(), &[1, self.n()]))
    }
    fn d2n(&self, _z: &[f64]) -> Option<MultilinearMap> {
        Some(MultilinearMap::zeros(self.n(), &[1, self.n(), self.n()]))
    }
}

impl SlowFastSystem for AcFamily {
    fn perturbation(&self, _z: &[f64], _eps: f64) -> Vec<f64> {
        let mut g = vec![0.0; self.n()];
        g[0] = 1.0;
        g
    }
}

fn ac_family(overrides: &[(String, f64)]) -> Result<FactorizedModel> {
    let mut eps = 0.0;
    let mut params = vec![
        Parameter::new("c", 2.0)
            .at_least(1.0)
            .at_most(6.0)
            .integer(),
        eps_param(eps),
    ];
    apply_overrides(&mut params, &mut eps, overrides)?;
    let c = params[0].value as usize;
    let n = c + 1;
    let factorial = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();

    let c0: Vec<Vec<f64>> = (0..c)
        .map(|j| {
            let mut row = vec![0.0; n];
            row[j] = factorial(j);
            row
        })
        .collect();
    let mut known = KnownAnswers::default();
    known.points.push(KnownPoint {
        label: format!("A_{c} point at origin"),
        point: vec![0.0; n],
        expect: Expectation::Contact {
            order: c,
            slow_generic: Some(true),
            fold_coefficient: Some(if c == 1 { 2.0 } else { 0.0 }),
            third_order_coefficient: Some(match c {
                1 => 0.0,
                2 => 6.0,
                _ => 0.0,
            }),
            c0: Some(c0),
        },
        provenance: Provenance::Derived,
    });

    let mut names: Vec<String> = (1..=c).map(|i| format!("z{i}")).collect();
    names.push("x".into());
    let domain = Domain::cube(n, -1.0, 1.0);
    Ok(FactorizedModel::new(
        "ac_family",
        names,
        params,
        eps,
        domain,
        Arc::new(AcFamily { c }),
    )?
    .with_known(known))
}

// ---------------------------------------------------------------- three-component

/// f = y, N = (α₁(1/(1+z²) − x), α₂x − 1, α₃(y − z)),
/// G = (α₁(1/(1+z²) − x), α₂x, α₃(y − z)).
struct ThreeComponent {
    a1: f64,
    a2: f64,
    a3: f64,
}

impl Factorization for ThreeComponent {
    fn dim(&self) -> usize {
        3
    }
    fn codim(&self) -> usize {
        1
    }
    fn f(&self, z: &[f64]) -> Vec<f64> {
        vec![z[1]]
    }
    fn n_matrix(&self, z: &[f64]) -> DenseMatrix {
        let (x, y, w) = (z[0], z[1], z[2]);
        DenseMatrix::column_vector(&[
            self.a1 * (1.0 / (1.0 + w * w) - x),
            self.a2 * x - 1.0,
            self.a3 * (y - w),
        ])
    }
    fn df(&self, _z: &[f64]) -> Option<DenseMatrix> {
        Some(DenseMatrix::row_vector(&[0.0, 1.0, 0.0]))
    }
    fn d2f(&self, _z: &[f64]) -> Option<MultilinearMap> {
        Some(MultilinearMap::zeros(1, &[3, 3]))
    }
    fn d3f(&self, _z: &[f64]) -> Option<MultilinearMap> {
        Some(MultilinearMap::zeros(1, &[3, 3, 3]))
    }
    fn dn(&self, z: &[f64]) -> Option<MultilinearMap> {
        let w = z[2];
        let q = 1.0 + w * w;
        let mut t = MultilinearMap::zeros(3, &[1, 3]);
        t.set(&[0, 0, 0], -self.a1);
        t.set(&[0, 0, 2], -2.0 * self.a1 * w / (q * q));
        t.set(&[1, 0, 0], self.a2);
        t.set(&[2, 0, 1], self.a3);
        t.set(&[2, 0, 2], -self.a3);
        Some(t)
    }
    fn d2n(&self, z: &[f64]) -> Option<MultilinearMap> {
        let w = z[2];
        let q = 1.0 + w * w;
        let mut t = MultilinearMap::zeros(3, &[1, 3, 3]);
        t.set(&[0, 0, 2, 2], self.a1 * (6.0 * w * w - 2.0) / (q * q * q));
        Some(t)
    }
}

impl SlowFastSystem for ThreeComponent {
    fn perturbation(&self, z: &[f64], _eps: f64) -> Vec<f64> {
        let (x, y, w) = (z[0], z[1], z[2]);
        vec![
            self.a1 * (1.0 / (1.0 + w * w) - x),
            self.a2 * x,
            self.a3 * (y - w),
        ]
    }
}

fn three_component(overrides: &[(String, f64)]) -> Result<FactorizedModel> {
    let mut eps = 0.0005;
    let mut params = vec![
        Parameter::new("alpha1", 0.2).above(0.0),
        Parameter::new("alpha2", 2.0).above(1.0),
        Parameter::new("alpha3", 0.2).above(0.0),
        eps_param(eps),
    ];
    apply_overrides(&mut params, &mut eps, overrides)?;
    let (a1, a2, a3) = (params[0].value, params[1].value, params[2].value);
    let zk = (a2 - 1.0).sqrt();
    let third = 2.0 * a1 * a3 * (a2 - 1.0) / a2;

    let mut known = KnownAnswers::default();
    for (label, sign, prov) in [
        ("cusp K", 1.0, Provenance::Published),
        ("unphysical cusp K-", -1.0, Provenance::Derived),
    ] {
        known.points.push(KnownPoint {
            label: label.into(),
            point: vec![1.0 / a2, 0.0, sign * zk],
            expect: Expectation::Contact {
                order: 2,
                slow_generic: Some(true),
                fold_coefficient: Some(0.0),
                third_order_coefficient: Some(third),
                c0: if sign > 0.0 {
                    Some(vec![vec![0.0, 1.0, 0.0], vec![a2, 0.0, 0.0]])
                } else {
                    None
                },
            },
            provenance: prov,
        });
    }
    known.points.push(KnownPoint {
        label: "fold at z = 0".into(),
        point: vec![1.0 / a2, 0.0, 0.0],
        expect: Expectation::Contact {
            order: 1,
            slow_generic: Some(true),
            fold_coefficient: Some(a1 * (a2 - 1.0)),
            third_order_coefficient: None,
            c0: None,
        },
        provenance: Provenance::Derived,
    });
    known.points.push(KnownPoint {
        label: "saddle-focus q".into(),
        point: vec![1.0 / a2, zk, zk],
        expect: Expectation::DesingularizedEquilibrium { saddle_focus: true },
        provenance: Provenance::Published,
    });
    known.curves.push(KnownCurve {
        label: "fold line".into(),
        description:
            "x = 1/alpha2, y = 0; fold coefficient alpha1 (alpha2 - (1 + z^2)) / (1 + z^2)".into(),
        range: (0.0, 2.0),
        point: Arc::new(move |t| vec![1.0 / a2, 0.0, t]),
        fold_coefficient: Some(Arc::new(move |t| a1 * (a2 - (1.0 + t * t)) / (1.0 + t * t))),
        provenance: Provenance::Published,
    });

    let domain = Domain::new(vec![0.0, -0.5, 0.0], vec![2.0, 2.0, 2.0]);
    Ok(FactorizedModel::new(
        "three_component",
        vars(&["x", "y", "z"]),
        params,
        eps,
        domain,
        Arc::new(ThreeComponent { a1, a2, a3 }),
    )?
    .with_known(known))
}

// ---------------------------------------------------------------- mitotic

/// Which face of `{F₀ = 0}` the known answers refer to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MitoticFace {
    X0,
    X1,
    M0,
    M1,
}

impl MitoticFace {
    pub fn label(self) -> &'static str {
        match self {
            MitoticFace::X0 => "X=0",
            MitoticFace::X1 => "X=1",
            MitoticFace::M0 => "M=0",
            MitoticFace::M1 => "M=1",
        }
    }

    pub const ALL: [MitoticFace; 4] = [
        MitoticFace::X0,
        MitoticFace::X1,
        MitoticFace::M0,
        MitoticFace::M1,
    ];
}

impl std::str::FromStr for MitoticFace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace(' ', "").as_str() {
            "X=0" | "x=0" => Ok(MitoticFace::X0),
            "X=1" | "x=1" => Ok(MitoticFace::X1),
            "M=0" | "m=0" => Ok(MitoticFace::M0),
            "M=1" | "m=1" => Ok(MitoticFace::M1),
            other => Err(Error::UnknownModel(format!("mitotic:{other}"))),
        }
    }
}

/// `F_ε(u) = (ε + 1 − u)(ε + u)`
fn f_eps(u: f64, eps: f64) -> f64 {
    (eps + 1.0 - u) * (eps + u)
}

/// f = X M (1 − X)(1 − M), N = (M − 7/10, 6C/(1+2C) − 3/2, (1 − X − C)/4).
struct Mitotic;

impl Factorization for Mitotic {
    fn dim(&self) -> usize {
        3
    }
    fn codim(&self) -> usize {
        1
    }
    fn f(&self, z: &[f64]) -> Vec<f64> {
        let (x, m) = (z[0], z[1]);
        vec![x * (1.0 - x) * m * (1.0 - m)]
    }
    fn n_matrix(&self, z: &[f64]) -> DenseMatrix {
        let (x, m, c) = (z[0], z[1], z[2]);
        DenseMatrix::column_vector(&[
            m - 0.7,
            6.0 * c / (1.0 + 2.0 * c) - 1.5,
            0.25 * (1.0 - x - c),
        ])
    }
    fn df(&self, z: &[f64]) -> Option<DenseMatrix> {
        let (x, m) = (z[0], z[1]);
        Some(DenseMatrix::row_vector(&[
            m * (1.0 - m) * (1.0 - 2.0 * x),
            x * (1.0 - x) * (1.0 - 2.0 * m),
            0.0,
        ]))
    }
    fn d2f(&self, z: &[f64]) -> Option<MultilinearMap> {
        let (x, m) = (z[0], z[1]);
        let mut t = MultilinearMap::zeros(1, &[3, 3]);
        t.set(&[0, 0, 0], 2.0 * m * (m - 1.0));
        t.set(&[0, 1, 1], 2.0 * x * (x - 1.0));
        let cross = (1.0 - 2.0 * x) * (1.0 - 2.0 * m);
        t.set(&[0, 0, 1], cross);
        t.set(&[0, 1, 0], cross);
        Some(t)
    }
    fn d3f(&self, z: &[f64]) -> Option<MultilinearMap> {
        let (x, m) = (z[0], z[1]);
        let mut t = MultilinearMap::zeros(1, &[3, 3, 3]);
        let xxm = -2.0 * (1.0 - 2.0 * m);
        let xmm = -2.0 * (1.0 - 2.0 * x);
        for idx in [[0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]] {
            t.set(&idx, xxm);
        }
        for idx in [[0, 0, 1, 1], [0, 1, 0, 1], [0, 1, 1, 0]] {
            t.set(&idx, xmm);
        }
        Some(t)
    }
    fn dn(&self, z: &[f64]) -> Option<MultilinearMap> {
        let c = z[2];
        let q = 1.0 + 2.0 * c;
        let mut t = MultilinearMap::zeros(3, &[1, 3]);
        t.set(&[0, 0, 1], 1.0);
        t.set(&[1, 0, 2], 6.0 / (q * q));
        t.set(&[2, 0, 0], -0.25);
        t.set(&[2, 0, 2], -0.25);
        Some(t)
    }
    fn d2n(&self, z: &[f64]) -> Option<MultilinearMap> {
        let q = 1.0 + 2.0 * z[2];
        let mut t = MultilinearMap::zeros(3, &[1, 3, 3]);
        t.set(&[1, 0, 2, 2], -24.0 / (q * q * q));
        Some(t)
    }
}

impl Mitotic {
    /// The ε-dependent system as originally posed.
    fn original(z: &[f64], eps: f64) -> Vec<f64> {
        let (x, m, c) = (z[0], z[1], z[2]);
        vec![
            (m * (1.0 - x) * (eps + x) - 0.7 * x * (eps + 1.0 - x)) * f_eps(m, eps),
            (6.0 * c / (1.0 + 2.0 * c) * (1.0 - m) * (eps + m) - 1.5 * m * (eps + 1.0 - m))
                * f_eps(x, eps),
            0.25 * (1.0 - x - c) * f_eps(x, eps) * f_eps(m, eps),
        ]
    }
}

impl SlowFastSystem for Mitotic {
    /// `(H_ε − h)/ε`, or its ε → 0 limit by a central difference in ε.
    fn perturbation(&self, z: &[f64], eps: f64) -> Vec<f64> {
        if eps > 0.0 {
            let h = super::layer_field(self, z);
            Mitotic::original(z, eps)
                .iter()
                .zip(&h)
                .map(|(a, b)| (a - b) / eps)
                .collect()
        } else {
            let d = 1e-5;
            let p = Mitotic::original(z, d);
            let m = Mitotic::original(z, -d);
            p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * d)).collect()
        }
    }

    fn full_field(&self, z: &[f64], eps: f64) -> Vec<f64> {
        Mitotic::original(z, eps)
    }
}

fn mitotic(face: MitoticFace, overrides: &[(String, f64)]) -> Result<FactorizedModel> {
    let mut eps = 0.0021;
    let mut params = vec![eps_param(eps)];
    apply_overrides(&mut params, &mut eps, overrides)?;

    let mut known = KnownAnswers::default();
    let fold_x = |t: f64| 63.0 / 200.0 * (2.0 * t - 1.0) / (2.0 * t + 1.0);
    let fold_m = |t: f64| t * (1.0 - t) * 3.0 * (1.0 - 2.0 * t) / 16.0;
    let (cusp, curve): (KnownPoint, KnownCurve) = match face {
        MitoticFace::X0 => (
            KnownPoint {
                label: "cusp K (X=0)".into(),
                point: vec![0.0, 0.7, 0.5],
                expect: Expectation::Contact {
                    order: 2,
                    slow_generic: Some(true),
                    fold_coefficient: Some(0.0),
                    // Df·DN(DN(N)) = (21/100)(3/2)(1/8) at K.
                    third_order_coefficient: Some(63.0 / 1600.0),
                    c0: Some(vec![vec![0.21, 0.0, 0.0], vec![0.0, 0.21, 0.0]]),
                },
                provenance: Provenance::Derived,
            },
            KnownCurve {
                label: "fold line X=0, M=7/10".into(),
                description: "X = 0, M = 7/10; fold coefficient (63/200)(2C - 1)/(2C + 1)".into(),
                range: (0.0, 1.0),
                point: Arc::new(|t| vec![0.0, 0.7, t]),
                fold_coefficient: Some(Arc::new(fold_x)),
                provenance: Provenance::Published,
            },
        ),
        MitoticFace::X1 => (
            KnownPoint {
                label: "cusp K (X=1)".into(),
                point: vec![1.0, 0.7, 0.5],
                expect: contact(2),
                provenance: Provenance::Published,
            },
            KnownCurve {
                label: "fold line X=1, M=7/10".into(),
                description: "X = 1, M = 7/10; fold coefficient -(63/200)(2C - 1)/(2C + 1)".into(),
                range: (0.0, 1.0),
                point: Arc::new(|t| vec![1.0, 0.7, t]),
                fold_coefficient: Some(Arc::new(move |t| -fold_x(t))),
                provenance: Provenance::Derived,
            },
        ),
        MitoticFace::M0 => (
            KnownPoint {
                label: "cusp K (M=0)".into(),
                point: vec![0.5, 0.0, 0.5],
                expect: contact(2),
                provenance: Provenance::Published,
            },
            KnownCurve {
                label: "fold line M=0, C=1/2".into(),
                description: "M = 0, C = 1/2; fold coefficient 3X(1 - X)(1 - 2X)/16".into(),
                range: (0.0, 1.0),
                point: Arc::new(|t| vec![t, 0.0, 0.5]),
                fold_coefficient: Some(Arc::new(fold_m)),
                provenance: Provenance::Derived,
            },
        ),
        MitoticFace::M1 => (
            KnownPoint {
                label: "cusp K (M=1)".into(),
                point: vec![0.5, 1.0, 0.5],
                expect: contact(2),
                provenance: Provenance::Published,
            },
            KnownCurve {
                label: "fold line M=1, C=1/2".into(),
                description: "M = 1, C = 1/2; fold coefficient -3X(1 - X)(1 - 2X)/16".into(),
                range: (0.0, 1.0),
                point: Arc::new(|t| vec![t, 1.0, 0.5]),
                fold_coefficient: Some(Arc::new(move |t| -fold_m(t))),
                provenance: Provenance::Derived,
            },
        ),
    };
    known.points.push(cusp);
    known.curves.push(curve);

    let name = if face == MitoticFace::X0 {
        "mitotic".to_string()
    } else {
        format!("mitotic:{}", face.label())
    };
    Ok(FactorizedModel::new(
        name,
        vars(&["X", "M", "C"]),
        params,
        eps,
        Domain::cube(3, 0.0, 1.0),
        Arc::new(Mitotic),
    )?
    .with_fiber_domain(Domain::cube(3, -0.2, 1.2))
    .with_known(known))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn falling_powers() {
        assert_eq!(falling(4, 2, 2.0), 12.0 * 4.0);
        assert_eq!(falling(1, 2, 3.0), 0.0);
        assert_eq!(falling(3, 3, 7.0), 6.0);
    }

    #[test]
    fn planar_layer_matches_unfactored_polynomial() {
        for &(x, y) in &[(0.0, 0.0), (1.3, -2.1), (-2.5, 2.9)] {
            let h = super::super::layer_field(&Planar, &[x, y]);
            let p = x * x * x - 2.0 * x * x + x * y - x - 2.0 * y + 2.0;
            assert!((h[0] - p).abs() < 1e-12);
            assert!((h[1] - (y + x * x - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn mitotic_layer_is_eps_zero_limit() {
        let z = [0.3, 0.6, 0.2];
        let h = super::super::layer_field(&Mitotic, &z);
        let o = Mitotic::original(&z, 0.0);
        for (a, b) in h.iter().zip(&o) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn face_names_parse() {
        assert_eq!("X=1".parse::<MitoticFace>().unwrap(), MitoticFace::X1);
        assert!("Q=3".parse::<MitoticFace>().is_err());
    }
}
