#![allow(clippy::needless_range_loop)]

use approx::assert_abs_diff_eq;
use contactkit::derivatives::{d2n_apply, dn_apply, DerivativeProvider, Factorization};
use contactkit::models::{load_model, zoo, FactorizedModel};
use contactkit::tensorkit::DenseMatrix;
use contactkit::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(name: &str) -> FactorizedModel {
    load_model(name, &[]).unwrap()
}

fn random_points(m: &FactorizedModel, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let u: Vec<f64> = (0..m.n()).map(|_| rng.gen_range(0.05..0.95)).collect();
            m.domain.lerp(&u)
        })
        .collect()
}

/// f = (x² + y − z, xz + y²), N = [[1, z], [y, 1], [0, x]]; no analytic tensors.
struct TwoByThree;

impl Factorization for TwoByThree {
    fn dim(&self) -> usize {
        3
    }
    fn codim(&self) -> usize {
        2
    }
    fn f(&self, z: &[f64]) -> Vec<f64> {
        vec![z[0] * z[0] + z[1] - z[2], z[0] * z[2] + z[1] * z[1]]
    }
    fn n_matrix(&self, z: &[f64]) -> DenseMatrix {
        DenseMatrix::from_rows(&[vec![1.0, z[2]], vec![z[1], 1.0], vec![0.0, z[0]]]).unwrap()
    }
}

#[test]
fn jacobian_examples() {
    let tc = model("three_component");
    for z in random_points(&tc, 5, 1) {
        assert_eq!(
            tc.provider().jacobian_f(&z).unwrap().to_rows(),
            vec![vec![0.0, 1.0, 0.0]]
        );
    }
    let mi = model("mitotic");
    let z = [0.3, 0.6, 0.2];
    let (x, m) = (z[0], z[1]);
    let want = [
        m * (1.0 - m) * (1.0 - 2.0 * x),
        x * (1.0 - x) * (1.0 - 2.0 * m),
        0.0,
    ];
    let df = mi.provider().jacobian_f(&z).unwrap();
    for (a, b) in df.row(0).iter().zip(&want) {
        assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
    }
    // FD agrees with the analytic Jacobian.
    let fd = mi.provider().fd_only().jacobian_f(&z).unwrap();
    for (a, b) in fd.row(0).iter().zip(&want) {
        assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
    }
}

#[test]
fn identity_jacobian_by_fd() {
    struct Identity;
    impl Factorization for Identity {
        fn dim(&self) -> usize {
            2
        }
        fn codim(&self) -> usize {
            1
        }
        fn f(&self, z: &[f64]) -> Vec<f64> {
            vec![z[1]]
        }
        fn n_matrix(&self, _z: &[f64]) -> DenseMatrix {
            DenseMatrix::column_vector(&[0.0, 1.0])
        }
    }
    let p = DerivativeProvider::new(&Identity);
    let j = p.jacobian_f(&[0.4, -2.0]).unwrap();
    assert_abs_diff_eq!(j[(0, 1)], 1.0, epsilon = 1e-10);
    assert_abs_diff_eq!(j[(0, 0)], 0.0, epsilon = 1e-10);
    let h = p.hessian_f(&[0.4, -2.0]).unwrap();
    assert!(h.as_slice().iter().all(|v| v.abs() < 1e-6));
}

#[test]
fn cusp_hessian_matrix() {
    let m = model("cusp_normal_form");
    for zc in [0.0, 0.3, -0.7] {
        let z = [0.1, -0.2, zc];
        for p in [m.provider(), m.provider().fd_only()] {
            let h = p.hessian_f(&z).unwrap();
            let want = [[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 6.0 * zc]];
            for i in 0..3 {
                for j in 0..3 {
                    assert_abs_diff_eq!(h.get(&[0, i, j]), want[i][j], epsilon = 1e-6);
                }
            }
        }
    }
}

#[test]
fn mitotic_dn_matrix() {
    let m = model("mitotic");
    for z in [[0.0f64, 0.7, 0.5], [0.4, 0.1, 0.9]] {
        let c = z[2];
        let want = [
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 6.0 / (2.0 * c + 1.0).powi(2)],
            [-0.25, 0.0, -0.25],
        ];
        let dn = m.provider().dn(&z).unwrap();
        let fd = m.provider().fd_only().dn(&z).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(dn.get(&[i, 0, j]), want[i][j], epsilon = 1e-14);
                assert_abs_diff_eq!(fd.get(&[i, 0, j]), want[i][j], epsilon = 1e-8);
            }
        }
    }
}

#[test]
fn chain_examples() {
    let tc = model("three_component");
    let c = tc
        .provider()
        .chain_values(&[0.5, 0.0, 1.0], &[1.0], &[1.0], 3)
        .unwrap();
    assert_abs_diff_eq!(c.values[1][0], 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(c.values[2][0], 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(
        c.projected[3],
        2.0 * 0.2 * 0.2 * (2.0 - 1.0) / 2.0,
        epsilon = 1e-14
    );

    let cusp = model("cusp_normal_form");
    let c = cusp
        .provider()
        .chain_values(&[0.0; 3], &[1.0], &[1.0], 3)
        .unwrap();
    assert_eq!(c.projected, vec![0.0, 0.0, 0.0, 6.0]);
    assert_eq!(c.closed_form_max, 3);
    assert!(c.fd_error.iter().all(|e| *e == 0.0));

    // On S away from contact: g0 = 0, g1 != 0.
    let planar = model("planar_parabola");
    let c = planar
        .provider()
        .chain_values(&[0.0, 1.0], &[1.0], &[1.0], 1)
        .unwrap();
    assert_eq!(c.values[0], vec![0.0]);
    assert_abs_diff_eq!(c.values[1][0], 1.0, epsilon = 1e-15);
}

#[test]
fn chain_argument_errors() {
    let m = model("cusp_normal_form");
    let p = m.provider();
    assert!(matches!(
        p.chain_values(&[0.0; 3], &[0.0], &[1.0], 3),
        Err(Error::Numerical(_))
    ));
    assert!(matches!(
        p.chain_values(&[0.0; 3], &[1.0], &[1.0], 7),
        Err(Error::Unsupported(_))
    ));
    assert!(matches!(
        p.chain_values(&[0.0; 2], &[1.0], &[1.0], 2),
        Err(Error::Dimension(_))
    ));
    assert!(matches!(
        p.chain_values(&[f64::NAN, 0.0, 0.0], &[1.0], &[1.0], 2),
        Err(Error::Evaluation { .. })
    ));
}

fn assert_rows(got: &DenseMatrix, want: &[&[f64]], tol: f64) {
    assert_eq!(got.rows(), want.len());
    for (i, w) in want.iter().enumerate() {
        for (a, b) in got.row(i).iter().zip(w.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = tol);
        }
    }
}

#[test]
fn chain_gradient_examples() {
    let m = model("mitotic");
    let c0 = m
        .provider()
        .chain_gradients(&[0.0, 0.7, 0.5], &[1.0], &[1.0], 2)
        .unwrap();
    assert_rows(&c0, &[&[0.21, 0.0, 0.0], &[0.0, 0.21, 0.0]], 1e-14);

    let m = model("three_component");
    let c0 = m
        .provider()
        .chain_gradients(&[0.5, 0.0, 1.0], &[1.0], &[1.0], 2)
        .unwrap();
    assert_rows(&c0, &[&[0.0, 1.0, 0.0], &[2.0, 0.0, 0.0]], 1e-14);

    let m = model("cusp_normal_form");
    let c0 = m
        .provider()
        .chain_gradients(&[0.0; 3], &[1.0], &[1.0], 2)
        .unwrap();
    assert_rows(&c0, &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]], 1e-14);
    // Third row by FD: gradient of 6z + (x-independent terms) at the origin.
    let c0 = m
        .provider()
        .chain_gradients(&[0.0; 3], &[1.0], &[1.0], 3)
        .unwrap();
    assert_rows(
        &c0,
        &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 6.0]],
        1e-6,
    );
    assert!(m
        .provider()
        .chain_gradients(&[0.0; 3], &[1.0], &[1.0], 0)
        .is_err());
}

fn closed_form_chain(p: &DerivativeProvider, z: &[f64], j: usize) -> f64 {
    let r = [1.0];
    let w = p.fiber_direction(z, &r).unwrap();
    let df = p.jacobian_f(z).unwrap();
    let d2f = p.hessian_f(z).unwrap();
    let dn = p.dn(z).unwrap();
    let dnw = dn_apply(&dn, &w, &r).unwrap();
    match j {
        2 => d2f.apply(&[&w, &w]).unwrap()[0] + df.matvec(&dnw).unwrap()[0],
        3 => {
            let d3f = p.third_f(z).unwrap();
            let d2n = p.d2n(z).unwrap();
            let inner: Vec<f64> = d2n_apply(&d2n, &w, &w, &r)
                .unwrap()
                .iter()
                .zip(dn_apply(&dn, &dnw, &r).unwrap())
                .map(|(a, b)| a + b)
                .collect();
            d3f.apply(&[&w, &w, &w]).unwrap()[0]
                + 3.0 * d2f.apply(&[&dnw, &w]).unwrap()[0]
                + df.matvec(&inner).unwrap()[0]
        }
        _ => unreachable!(),
    }
}

#[test]
fn fd_chain_matches_closed_forms() {
    for m in zoo() {
        let analytic = m.provider();
        let fd = m.provider().fd_only();
        for (k, z) in random_points(&m, 100, 7).iter().enumerate() {
            let scale = analytic.chain_magnitudes(z, &[1.0], &[1.0], 3).unwrap();
            let got = fd.chain_values(z, &[1.0], &[1.0], 3).unwrap();
            for (j, rel) in [(2, 1e-5), (3, 1e-3)] {
                let want = closed_form_chain(&analytic, z, j);
                let s = want.abs().max(scale[j]).max(1e-12);
                assert!(
                    (got.projected[j] - want).abs() <= rel * s,
                    "{} point {k} j={j}: fd {} vs {}",
                    m.name,
                    got.projected[j],
                    want
                );
            }
        }
    }
}

#[test]
fn standard_form_reduces_to_pure_partials() {
    // f = x^{c+1} + z_c x^{c-1} + ... + z_2 x + z_1, N = e_x.
    fn partial(z: &[f64], j: usize) -> f64 {
        let c = z.len() - 1;
        let x = z[c];
        let mut coeffs = vec![0.0; c + 2];
        coeffs[c + 1] = 1.0;
        coeffs[0] = z[0];
        coeffs[1..c].copy_from_slice(&z[1..c]);
        for _ in 0..j {
            coeffs = (1..coeffs.len()).map(|p| p as f64 * coeffs[p]).collect();
        }
        coeffs
            .iter()
            .enumerate()
            .map(|(p, a)| a * x.powi(p as i32))
            .sum()
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for c in 1..=4 {
        let m = load_model("ac_family", &[("c".into(), c as f64)]).unwrap();
        for _ in 0..10 {
            let z: Vec<f64> = (0..m.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let chain = m.provider().chain_values(&z, &[1.0], &[1.0], 4).unwrap();
            for j in 0..=4 {
                let want = partial(&z, j);
                let tol = if j <= 3 {
                    1e-10
                } else {
                    1e-4 * want.abs().max(1.0)
                };
                assert!(
                    (chain.projected[j] - want).abs() <= tol,
                    "c={c} j={j}: {} vs {want}",
                    chain.projected[j]
                );
            }
        }
    }
}

#[test]
fn linear_in_l() {
    let p = DerivativeProvider::new(&TwoByThree);
    let z = [0.3, -0.4, 0.8];
    let r = [0.6, 0.8];
    let (l1, l2) = ([1.0, 0.0], [0.3, -0.7]);
    let (a, b) = (1.7, -0.4);
    let mix = [a * l1[0] + b * l2[0], a * l1[1] + b * l2[1]];
    let c1 = p.chain_values(&z, &r, &l1, 3).unwrap();
    let c2 = p.chain_values(&z, &r, &l2, 3).unwrap();
    let cm = p.chain_values(&z, &r, &mix, 3).unwrap();
    for j in 0..=3 {
        let want = a * c1.projected[j] + b * c2.projected[j];
        assert!(
            (cm.projected[j] - want).abs() <= 1e-12 * (1.0 + want.abs()),
            "j={j}"
        );
    }
    assert_eq!(cm.values.len(), 4);
    assert_eq!(cm.values[0].len(), 2);
}

#[test]
fn homogeneous_in_r() {
    let s = 2.5f64;
    let m = model("three_component");
    let z = [0.7, 0.3, 1.1];
    for (p, rel) in [(m.provider(), 1e-13), (m.provider().fd_only(), 1e-6)] {
        let c1 = p.chain_values(&z, &[1.0], &[1.0], 3).unwrap();
        let cs = p.chain_values(&z, &[s], &[1.0], 3).unwrap();
        for j in 0..=3 {
            let want = s.powi(j as i32) * c1.projected[j];
            assert!(
                (cs.projected[j] - want).abs() <= rel * want.abs().max(1e-8),
                "j={j}: {} vs {want}",
                cs.projected[j]
            );
        }
    }
    // FD path on an m = 2 model.
    let p = DerivativeProvider::new(&TwoByThree);
    let z = [0.3, -0.4, 0.8];
    let r = [0.6, 0.8];
    let rs = [s * r[0], s * r[1]];
    let c1 = p.chain_values(&z, &r, &[1.0, 0.0], 3).unwrap();
    let cs = p.chain_values(&z, &rs, &[1.0, 0.0], 3).unwrap();
    for j in 0..=3 {
        for a in 0..2 {
            let want = s.powi(j as i32) * c1.values[j][a];
            assert!(
                (cs.values[j][a] - want).abs() <= 1e-6 * want.abs().max(1e-3),
                "j={j} a={a}"
            );
        }
    }
}

#[test]
fn analytic_tensors_pass_validation() {
    for m in zoo() {
        let report = m.provider().validate(&random_points(&m, 50, 3)).unwrap();
        assert!(report.passed(), "{}: {:?}", m.name, report);
    }
}

#[test]
fn tensor_layouts() {
    let m = model("mitotic");
    let p = m.provider();
    let z = [0.2, 0.3, 0.4];
    let df = p.jacobian_f(&z).unwrap();
    assert_eq!((df.rows(), df.cols()), (1, 3));
    assert_eq!(p.hessian_f(&z).unwrap().dims(), &[1, 3, 3]);
    assert_eq!(p.third_f(&z).unwrap().dims(), &[1, 3, 3, 3]);
    assert_eq!(p.dn(&z).unwrap().dims(), &[3, 1, 3]);
    assert_eq!(p.d2n(&z).unwrap().dims(), &[3, 1, 3, 3]);
}

fn entries_symmetric(h: &contactkit::tensorkit::MultilinearMap) -> bool {
    let n = h.input_dims()[0];
    (0..h.output_dim())
        .all(|a| (0..n).all(|i| (0..n).all(|j| h.get(&[a, i, j]) == h.get(&[a, j, i]))))
}

proptest! {
    #[test]
    fn hessian_is_symmetric(x in -1.0f64..1.0, y in -1.0f64..1.0, w in -1.0f64..1.0,
                            u in prop::array::uniform3(-1.0f64..1.0), v in prop::array::uniform3(-1.0f64..1.0)) {
        let z = [x, y, w];
        let h = DerivativeProvider::new(&TwoByThree).hessian_f(&z).unwrap();
        prop_assert!(entries_symmetric(&h));
        let (a, b) = (h.apply(&[&u, &v]).unwrap(), h.apply(&[&v, &u]).unwrap());
        for k in 0..2 {
            prop_assert!((a[k] - b[k]).abs() <= 1e-14 * (1.0 + a[k].abs()));
        }
        let m = model("mitotic");
        let zm = [0.5 + 0.4 * x, 0.5 + 0.4 * y, 0.5 + 0.4 * w];
        prop_assert!(entries_symmetric(&m.provider().fd_only().hessian_f(&zm).unwrap()));
        prop_assert!(entries_symmetric(&m.provider().hessian_f(&zm).unwrap()));
    }
}
