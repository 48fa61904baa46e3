//! Balanced truncation of prior-driven LTI systems for Bayesian smoothing,
//! with a priori certificates on the approximate posterior mean and covariance.
//!
//! The crate solves the linear Gaussian inverse problem of inferring the
//! initial condition of `ẋ = Ax`, `y = Cx` from noisy output measurements,
//! reduces the forward model by (time-limited) balanced truncation of the
//! associated prior-driven system, and certifies the resulting posterior
//! approximation through computable error bounds.
//!
//! Modules are layered bottom-up:
//!
//! * [`linalg`] — dense kernels: matrix exponential, Lyapunov/Sylvester
//!   solvers, rank-revealing PSD square roots, pseudoinverse.
//! * [`quad`] — adaptive composite Gauss–Legendre quadrature.
//! * [`lti`] — the smoothing model, forward map and impulse responses.
//! * [`gramians`] — infinite-horizon and time-limited system Gramians.
//! * [`balancing`] — square-root balancing, Hankel singular values, reduced
//!   models and the truncated-direction bundle.
//! * [`posterior`] — exact/approximate Gaussian posteriors and the
//!   prior-preconditioned Hessian square root.
//! * [`bounds`] — error certificates: trace terms, κ, Lipschitz constants,
//!   assembled mean/covariance bounds.
//! * [`bench`] — synthetic benchmark generation and rank/λ sweeps.
//! * [`mtx`] — Matrix Market import/export.

pub mod balancing;
pub mod bench;
pub mod bounds;
pub mod error;
pub mod gramians;
pub mod linalg;
pub mod lti;
pub mod mtx;
pub mod posterior;
pub mod quad;

pub use error::{Error, Result};
