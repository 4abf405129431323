//! Exact and inexact variable projection for separable nonlinear least
//! squares with general-form Tikhonov regularization,
//!
//! ```text
//! min_{x, y}  1/2 ||A(y) x - b||^2 + lambda^2 / 2 ||L x||^2,
//! ```
//!
//! where `x` enters linearly and `y` is a handful of nonlinear parameters.
//!
//! * [`linops`]: operator abstraction, Gaussian Toeplitz blur, differences,
//!   the stacked operator `[A; lambda L]`.
//! * [`inner`]: LSQR with a relative-gradient stopping rule and a direct
//!   normal-equations solver with pseudoinverse/projector applications.
//! * [`varpro`]: reduced residual, exact and inexact Jacobians,
//!   Gauss-Newton outer loops and tolerance schedules.
//! * [`bounds`]: a-posteriori bounds on solution, residual and Jacobian
//!   errors of an inexact inner solve.
//! * [`bench`]: the blind deconvolution benchmark.

pub mod bench;
pub mod bounds;
pub mod error;
pub mod inner;
pub mod linops;
pub mod varpro;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
