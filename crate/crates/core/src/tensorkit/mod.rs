//! Dense small-dimension multilinear algebra.
//!
//! Everything here operates on matrices of dimension at most
//! [`MAX_DIM`](linalg::MAX_DIM); all functions are pure.

mod eigen;
mod linalg;
mod matrix;
mod multilinear;

pub use eigen::{eigenvalues, SpectrumResult};
pub use linalg::{
    adjugate, determinant, inverse, min_norm_solve, null_vector, numerical_rank, singular_values,
    solve, svd, RankTolerance, Svd, MAX_DIM,
};
pub use matrix::{axpy, dot, norm2, norm_inf, scale, sub, DenseMatrix};
pub use multilinear::{MultilinearMap, Slot};
