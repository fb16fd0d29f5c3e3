use approx::assert_abs_diff_eq;
use contactkit::tensorkit::{
    adjugate, determinant, eigenvalues, inverse, numerical_rank, DenseMatrix, MultilinearMap,
    RankTolerance, Slot,
};
use contactkit::Error;
use proptest::prelude::*;

fn mat(rows: &[&[f64]]) -> DenseMatrix {
    DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn sorted_pairs(m: &DenseMatrix) -> Vec<[f64; 2]> {
    let mut e = eigenvalues(m).unwrap().as_pairs();
    e.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    e
}

#[test]
fn determinant_examples() {
    assert_eq!(determinant(&mat(&[&[7.5]])).unwrap(), 7.5);
    assert_eq!(
        determinant(&mat(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap(),
        -2.0
    );
    // Df N on the planar parabola at x = 0.2: 2x(x - 2) + 1.
    let x: f64 = 0.2;
    let dfn = mat(&[&[2.0 * x, 1.0]])
        .matmul(&mat(&[&[x - 2.0], &[1.0]]))
        .unwrap();
    assert_abs_diff_eq!(determinant(&dfn).unwrap(), 0.28, epsilon = 1e-15);
    assert!(matches!(
        determinant(&mat(&[&[1.0, 2.0]])),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn adjugate_examples() {
    let a = adjugate(&mat(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap();
    assert_eq!(a.to_rows(), vec![vec![4.0, -2.0], vec![-3.0, 1.0]]);
    assert_eq!(
        adjugate(&mat(&[&[5.0]])).unwrap().to_rows(),
        vec![vec![1.0]]
    );
    assert!(adjugate(&mat(&[&[1.0, 2.0, 3.0]])).is_err());
}

#[test]
fn adjugate_matches_brute_force_cofactors() {
    let m = mat(&[&[2.0, -1.0, 0.5], &[0.3, 4.0, 1.0], &[-2.0, 0.7, 3.0]]);
    let adj = adjugate(&m).unwrap();
    let minor = |r: usize, c: usize| {
        let idx = |skip: usize| (0..3).filter(move |&i| i != skip).collect::<Vec<_>>();
        let (rs, cs) = (idx(r), idx(c));
        m[(rs[0], cs[0])] * m[(rs[1], cs[1])] - m[(rs[0], cs[1])] * m[(rs[1], cs[0])]
    };
    for i in 0..3 {
        for j in 0..3 {
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            assert_abs_diff_eq!(adj[(i, j)], sign * minor(j, i), epsilon = 1e-13);
        }
    }
}

#[test]
fn rank_examples() {
    let tol = RankTolerance::default();
    assert_eq!(numerical_rank(&DenseMatrix::zeros(3, 2), tol), 0);
    let c0 = mat(&[&[0.21, 0.0, 0.0], &[0.0, 0.21, 0.0]]);
    assert_eq!(numerical_rank(&c0, tol), 2);
    assert_eq!(
        numerical_rank(&mat(&[&[1.0, 1.0], &[1.0, 1.0 + 1e-14]]), tol),
        1
    );
}

#[test]
fn eigenvalue_examples() {
    let rot = sorted_pairs(&mat(&[&[0.0, 1.0], &[-1.0, 0.0]]));
    assert_abs_diff_eq!(rot[0][0], 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(rot[0][1], -1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(rot[1][1], 1.0, epsilon = 1e-15);
    let d = sorted_pairs(&mat(&[&[3.0, 0.0], &[0.0, -1.0]]));
    assert_eq!(d, vec![[-1.0, 0.0], [3.0, 0.0]]);
}

#[test]
fn eigenvalues_of_larger_matrices() {
    // Companion matrix of (x-1)(x-2)(x-3)(x-4)(x-5).
    let c = [-120.0, 274.0, -225.0, 85.0, -15.0];
    let m = DenseMatrix::from_fn(5, 5, |i, j| {
        if i + 1 == j {
            1.0
        } else if i == 4 {
            -c[j]
        } else {
            0.0
        }
    });
    let e = sorted_pairs(&m);
    for (k, ev) in e.iter().enumerate() {
        assert_abs_diff_eq!(ev[0], (k + 1) as f64, epsilon = 1e-8);
        assert_abs_diff_eq!(ev[1], 0.0, epsilon = 1e-8);
    }
    let spectrum = eigenvalues(&m).unwrap();
    assert_eq!(spectrum.eigenvalues.len(), 5);
    assert!(spectrum.tolerance_used > 0.0);
}

#[test]
fn contraction_examples() {
    // Hessian of the cusp normal form at the origin, contracted twice with N = e_3.
    let mut h = MultilinearMap::zeros(1, &[3, 3]);
    h.set(&[0, 1, 2], 1.0);
    h.set(&[0, 2, 1], 1.0);
    let n = [0.0, 0.0, 1.0];
    let v = h
        .contract(&[Slot::Vector(&n), Slot::Vector(&n)])
        .unwrap()
        .into_vector()
        .unwrap();
    assert_eq!(v, vec![0.0]);
    // One identity slot gives the row N^T D²f = (0, 1, 0).
    let row = h
        .contract(&[Slot::Vector(&n), Slot::Identity])
        .unwrap()
        .into_matrix()
        .unwrap();
    assert_eq!(row.to_rows(), vec![vec![0.0, 1.0, 0.0]]);
    let bad = [1.0, 2.0];
    assert!(matches!(
        h.contract(&[Slot::Vector(&bad), Slot::Identity]),
        Err(Error::Dimension(_))
    ));
}

fn matrix_strategy(n: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-3.0f64..3.0, n * n)
        .prop_map(move |d| DenseMatrix::from_row_slice(n, n, &d).unwrap())
}

fn sized_matrix() -> impl Strategy<Value = DenseMatrix> {
    (1usize..=5).prop_flat_map(matrix_strategy)
}

proptest! {
    #[test]
    fn adjugate_identity(m in (1usize..=6).prop_flat_map(matrix_strategy)) {
        let n = m.rows();
        let prod = m.matmul(&adjugate(&m).unwrap()).unwrap();
        let det = determinant(&m).unwrap();
        let bound = 1e-12 * (1.0 + m.norm_inf().powi(2));
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { det } else { 0.0 };
                prop_assert!((prod[(i, j)] - want).abs() <= bound, "{} vs {}", prod[(i, j)], want);
            }
        }
    }

    #[test]
    fn rank_is_transpose_invariant(rows in 1usize..5, cols in 1usize..5, seed in prop::collection::vec(-2.0f64..2.0, 25), drop in 0usize..3) {
        let mut m = DenseMatrix::from_fn(rows, cols, |i, j| seed[i * 5 + j]);
        // Make some rows dependent.
        for i in 0..drop.min(rows.saturating_sub(1)) {
            for j in 0..cols {
                m[(i + 1, j)] = 2.0 * m[(0, j)];
            }
        }
        let tol = RankTolerance::default();
        prop_assert_eq!(numerical_rank(&m, tol), numerical_rank(&m.transpose(), tol));
    }

    #[test]
    fn contraction_is_multilinear(
        data in prop::collection::vec(-1.0f64..1.0, 2 * 3 * 4),
        u in prop::collection::vec(-1.0f64..1.0, 3),
        v in prop::collection::vec(-1.0f64..1.0, 3),
        w in prop::collection::vec(-1.0f64..1.0, 4),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let map = MultilinearMap::from_data(2, &[3, 4], data).unwrap();
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let lhs = map.apply(&[&mix, &w]).unwrap();
        let fu = map.apply(&[&u, &w]).unwrap();
        let fv = map.apply(&[&v, &w]).unwrap();
        for i in 0..2 {
            let rhs = a * fu[i] + b * fv[i];
            prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn similar_matrices_share_spectrum(m in sized_matrix(), p_seed in prop::collection::vec(-0.3f64..0.3, 25)) {
        let n = m.rows();
        let p = DenseMatrix::from_fn(n, n, |i, j| p_seed[i * 5 + j] + if i == j { 1.0 } else { 0.0 });
        prop_assume!(determinant(&p).unwrap().abs() > 0.2);
        let sim = inverse(&p).unwrap().matmul(&m).unwrap().matmul(&p).unwrap();
        let mut a = eigenvalues(&m).unwrap().as_pairs();
        let b = eigenvalues(&sim).unwrap().as_pairs();
        // Greedy multiset matching.
        for e in &b {
            let (k, d) = a.iter().enumerate()
                .map(|(k, f)| (k, (f[0] - e[0]).hypot(f[1] - e[1])))
                .min_by(|x, y| x.1.total_cmp(&y.1)).unwrap();
            // Defective eigenvalues are only determined to about sqrt(eps).
            prop_assert!(d <= 1e-8 * (1.0 + m.norm_inf()) || d <= 1e-6, "{e:?} unmatched ({d})");
            a.remove(k);
        }
    }

    #[test]
    fn determinant_is_product_of_eigenvalues(m in sized_matrix()) {
        let det = determinant(&m).unwrap();
        let (mut re, mut im) = (1.0f64, 0.0f64);
        for e in eigenvalues(&m).unwrap().as_pairs() {
            let nr = re * e[0] - im * e[1];
            im = re * e[1] + im * e[0];
            re = nr;
        }
        let scale = m.norm_inf().max(1.0).powi(m.rows() as i32);
        prop_assert!((re - det).abs() <= 1e-8 * scale, "{re} vs {det}");
        prop_assert!(im.abs() <= 1e-8 * scale);
    }
}
