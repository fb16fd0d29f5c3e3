//! Detection and classification of contact singularities of slow-fast
//! vector fields written as `z' = N(z) f(z) + ε G(z, ε)`.
//!
//! The critical manifold is `S = {f = 0}`. At a point of `S` the layer
//! problem has `n − m` zero eigenvalues and `m` nontrivial ones, the
//! eigenvalues of `Df N`. Where one of those vanishes the fibers touch `S`,
//! and the order of that contact is read off from the chain of directional
//! derivatives of `f` along `N r`.
//!
//! ```
//! use contactkit::{classifier, load_model};
//!
//! let model = load_model("planar_parabola", &[]).unwrap();
//! let x = 1.0 - std::f64::consts::SQRT_2 / 2.0;
//! let d = classifier::classify(&model.provider(), &[x, 1.0 - x * x], &Default::default()).unwrap();
//! assert!(d.is_fold());
//! ```

pub mod classifier;
pub mod derivatives;
mod error;
pub mod geomflow;
pub mod models;
pub mod tensorkit;

pub use classifier::{classify, ContactDiagnostics, Tolerances, Verdict};
pub use derivatives::{DerivativeProvider, Factorization, FdConfig};
pub use error::{Error, Result};
pub use models::{load_model, zoo, FactorizedModel};
