use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

/// Largest matrix dimension the dense kernels accept.
pub const MAX_DIM: usize = 10;

/// Singular values at or below `absolute + relative·σ_max` count as zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTolerance {
    pub absolute: f64,
    pub relative: f64,
}

impl Default for RankTolerance {
    fn default() -> Self {
        Self {
            absolute: 1e-10,
            relative: 1e-8,
        }
    }
}

fn require_square(m: &DenseMatrix, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "{what} requires a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if m.rows() > MAX_DIM {
        return Err(Error::dim(format!(
            "{what}: dimension {} exceeds {MAX_DIM}",
            m.rows()
        )));
    }
    Ok(())
}

/// LU factorization with partial pivoting, `P A = L U` packed in one matrix.
struct Lu {
    lu: DenseMatrix,
    perm: Vec<usize>,
    sign: f64,
    singular: bool,
}

fn lu_decompose(a: &DenseMatrix) -> Lu {
    let n = a.rows();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    let mut singular = false;
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, lu[(i, k)].abs()))
            .fold(
                (k, -1.0),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            );
        if pmax == 0.0 {
            singular = true;
            continue;
        }
        if p != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = tmp;
            }
            perm.swap(k, p);
            sign = -sign;
        }
        let pivot = lu[(k, k)];
        for i in k + 1..n {
            let factor = lu[(i, k)] / pivot;
            lu[(i, k)] = factor;
            for j in k + 1..n {
                let v = lu[(k, j)];
                lu[(i, j)] -= factor * v;
            }
        }
    }
    Lu {
        lu,
        perm,
        sign,
        singular,
    }
}

impl Lu {
    fn det(&self) -> f64 {
        if self.singular {
            return 0.0;
        }
        (0..self.lu.rows())
            .map(|i| self.lu[(i, i)])
            .product::<f64>()
            * self.sign
    }

    fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        let n = self.lu.rows();
        if self.singular || (0..n).any(|i| self.lu[(i, i)] == 0.0) {
            return None;
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[(i, k)] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                x[i] -= self.lu[(i, k)] * x[k];
            }
            x[i] /= self.lu[(i, i)];
        }
        Some(x)
    }
}

/// Cofactor expansion for n ≤ 3, pivoted LU above.
pub fn determinant(m: &DenseMatrix) -> Result<f64> {
    require_square(m, "determinant")?;
    Ok(det_unchecked(m))
}

fn det_unchecked(m: &DenseMatrix) -> f64 {
    match m.rows() {
        0 => 1.0,
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        3 => {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        }
        _ => lu_decompose(m).det(),
    }
}

fn minor(m: &DenseMatrix, row: usize, col: usize) -> DenseMatrix {
    let n = m.rows();
    DenseMatrix::from_fn(n - 1, n - 1, |i, j| {
        let ii = if i < row { i } else { i + 1 };
        let jj = if j < col { j } else { j + 1 };
        m[(ii, jj)]
    })
}

fn adjugate_cofactors(m: &DenseMatrix) -> DenseMatrix {
    let n = m.rows();
    if n == 1 {
        return DenseMatrix::identity(1);
    }
    DenseMatrix::from_fn(n, n, |i, j| {
        // adj[i][j] = (-1)^{i+j} det(minor(j, i))
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        sign * det_unchecked(&minor(m, j, i))
    })
}

/// Transpose of the cofactor matrix; `adj([[a]]) = [[1]]`.
///
/// Explicit cofactors up to 4×4. Larger matrices use `det·A⁻¹` unless the
/// determinant is too small to trust, in which case cofactors are used.
pub fn adjugate(m: &DenseMatrix) -> Result<DenseMatrix> {
    require_square(m, "adjugate")?;
    let n = m.rows();
    if n <= 4 {
        return Ok(adjugate_cofactors(m));
    }
    let lu = lu_decompose(m);
    let det = lu.det();
    let scale = m.norm_inf().max(f64::MIN_POSITIVE).powi(n as i32);
    if det.abs() <= 1e-8 * scale {
        return Ok(adjugate_cofactors(m));
    }
    let mut adj = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = lu
            .solve(&e)
            .ok_or_else(|| Error::Numerical("singular LU".into()))?;
        for i in 0..n {
            adj[(i, j)] = det * col[i];
        }
    }
    Ok(adj)
}

/// Solves the square system `A x = b`.
pub fn solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    require_square(a, "solve")?;
    if b.len() != a.rows() {
        return Err(Error::dim("right-hand side length"));
    }
    lu_decompose(a)
        .solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Numerical("singular system".into()))
}

pub fn inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    require_square(a, "inverse")?;
    let n = a.rows();
    let lu = lu_decompose(a);
    let mut inv = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = lu
            .solve(&e)
            .ok_or_else(|| Error::Numerical("singular matrix".into()))?;
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    Ok(inv)
}

/// Thin SVD `A = U Σ Vᵀ` from one-sided Jacobi rotations.
///
/// Wide matrices are padded with zero rows, so `V` is always
/// `cols × cols` and `sigma` has `cols` entries in descending order.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

pub fn svd(a: &DenseMatrix) -> Result<Svd> {
    let (rows, cols) = (a.rows(), a.cols());
    if rows.max(cols) > MAX_DIM {
        return Err(Error::dim("svd dimension exceeds limit"));
    }
    let prow = rows.max(cols);
    let mut u = DenseMatrix::from_fn(prow, cols, |i, j| if i < rows { a[(i, j)] } else { 0.0 });
    let mut v = DenseMatrix::identity(cols);

    let frob2: f64 = a.as_slice().iter().map(|x| x * x).sum();
    let negligible = 1e-32 * frob2;
    let mut converged = false;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..prow {
                    alpha += u[(i, p)] * u[(i, p)];
                    beta += u[(i, q)] * u[(i, q)];
                    gamma += u[(i, p)] * u[(i, q)];
                }
                // Columns at rounding level carry no information.
                if gamma == 0.0
                    || alpha.min(beta) <= negligible
                    || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..prow {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    u[(i, p)] = c * up - s * uq;
                    u[(i, q)] = s * up + c * uq;
                }
                for i in 0..cols {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical("Jacobi SVD did not converge".into()));
    }

    let mut sigma: Vec<f64> = (0..cols)
        .map(|j| (0..prow).map(|i| u[(i, j)] * u[(i, j)]).sum::<f64>().sqrt())
        .collect();
    for (j, &s) in sigma.iter().enumerate() {
        if s > 0.0 {
            for i in 0..prow {
                u[(i, j)] /= s;
            }
        }
    }

    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let u_sorted = DenseMatrix::from_fn(prow, cols, |i, j| u[(i, order[j])]);
    let v_sorted = DenseMatrix::from_fn(cols, cols, |i, j| v[(i, order[j])]);
    sigma = order.iter().map(|&j| sigma[j]).collect();
    Ok(Svd {
        u: u_sorted,
        sigma,
        v: v_sorted,
    })
}

pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    let s = if a.rows() < a.cols() {
        svd(&a.transpose())?
    } else {
        svd(a)?
    };
    Ok(s.sigma)
}

/// Number of singular values above `tol.absolute + tol.relative·σ_max`.
pub fn numerical_rank(m: &DenseMatrix, tol: RankTolerance) -> usize {
    let sigma = match singular_values(m) {
        Ok(s) => s,
        Err(_) => return 0,
    };
    let smax = sigma.first().copied().unwrap_or(0.0);
    let cut = tol.absolute + tol.relative * smax;
    sigma.iter().filter(|&&s| s > cut).count()
}

/// Minimal-norm least-squares solution of `A x = b` via the pseudo-inverse,
/// truncating singular values below `rcond·σ_max`.
pub fn min_norm_solve(a: &DenseMatrix, b: &[f64], rcond: f64) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::dim("right-hand side length"));
    }
    let s = svd(a)?;
    let smax = s.sigma.first().copied().unwrap_or(0.0);
    let cut = rcond * smax;
    let cols = a.cols();
    let mut x = vec![0.0; cols];
    for (k, &sk) in s.sigma.iter().enumerate() {
        if sk <= cut || sk == 0.0 {
            continue;
        }
        let coeff: f64 = (0..a.rows()).map(|i| s.u[(i, k)] * b[i]).sum::<f64>() / sk;
        for (j, xj) in x.iter_mut().enumerate() {
            *xj += coeff * s.v[(j, k)];
        }
    }
    Ok(x)
}

/// Unit vector spanning the (numerical) kernel direction of least gain.
pub fn null_vector(a: &DenseMatrix) -> Result<Vec<f64>> {
    let s = svd(a)?;
    let k = a.cols() - 1;
    Ok(s.v.column(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn determinant_small_cases() {
        assert_eq!(determinant(&m(&[&[7.5]])).unwrap(), 7.5);
        assert_eq!(determinant(&m(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap(), -2.0);
        assert!(determinant(&m(&[&[1.0, 2.0]])).is_err());
    }

    #[test]
    fn determinant_lu_path_matches_cofactors() {
        let a = m(&[
            &[2.0, -1.0, 0.5, 3.0],
            &[1.0, 4.0, -2.0, 0.0],
            &[0.0, 1.5, 1.0, -1.0],
            &[3.0, 0.0, 2.0, 1.0],
        ]);
        let by_lu = lu_decompose(&a).det();
        // Laplace expansion along the first row.
        let by_cof: f64 = (0..4)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                s * a[(0, j)] * det_unchecked(&minor(&a, 0, j))
            })
            .sum();
        assert!((by_lu - by_cof).abs() < 1e-12 * by_cof.abs().max(1.0));
        assert_eq!(determinant(&a).unwrap(), by_lu);
    }

    #[test]
    fn adjugate_closed_forms() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(adjugate(&a).unwrap(), m(&[&[4.0, -2.0], &[-3.0, 1.0]]));
        assert_eq!(adjugate(&m(&[&[5.0]])).unwrap(), m(&[&[1.0]]));
        assert!(adjugate(&m(&[&[1.0, 2.0]])).is_err());
    }

    #[test]
    fn adjugate_of_large_singular_matrix_uses_cofactors() {
        let mut a = DenseMatrix::identity(6);
        a[(5, 5)] = 0.0;
        let adj = adjugate(&a).unwrap();
        // Only the (5,5) cofactor survives.
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == 5 && j == 5 { 1.0 } else { 0.0 };
                assert!((adj[(i, j)] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rank_examples() {
        assert_eq!(
            numerical_rank(&DenseMatrix::zeros(3, 2), RankTolerance::default()),
            0
        );
        let c0 = m(&[&[0.21, 0.0, 0.0], &[0.0, 0.21, 0.0]]);
        assert_eq!(numerical_rank(&c0, RankTolerance::default()), 2);
        let near = m(&[&[1.0, 1.0], &[1.0, 1.0 + 1e-14]]);
        assert_eq!(numerical_rank(&near, RankTolerance::default()), 1);
    }

    #[test]
    fn svd_reconstructs() {
        let a = m(&[&[1.0, 2.0, 0.0], &[0.0, 1.0, -1.0]]);
        let s = svd(&a).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                let r: f64 = (0..3).map(|k| s.u[(i, k)] * s.sigma[k] * s.v[(j, k)]).sum();
                assert!((r - a[(i, j)]).abs() < 1e-13);
            }
        }
        let nv = null_vector(&a).unwrap();
        let res = a.matvec(&nv).unwrap();
        assert!(res.iter().all(|x| x.abs() < 1e-13));
    }

    #[test]
    fn min_norm_solution_of_underdetermined_system() {
        // x + y = 2: minimal-norm solution is (1, 1)
        let a = m(&[&[1.0, 1.0]]);
        let x = min_norm_solve(&a, &[2.0], 1e-14).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn solve_and_inverse() {
        let a = m(&[&[4.0, 1.0], &[2.0, 3.0]]);
        let x = solve(&a, &[1.0, 2.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-14);
        let inv = inverse(&a).unwrap();
        let id = a.matmul(&inv).unwrap();
        assert!(id.sub(&DenseMatrix::identity(2)).unwrap().norm_max() < 1e-14);
        assert!(solve(&DenseMatrix::zeros(2, 2), &[1.0, 1.0]).is_err());
    }
}
