//! Gradient methods with nonlinear preconditioning.
//!
//! The update rule implemented throughout is
//!
//! ```text
//! x_{k+1} = x_k - gamma * grad_conj(lambda * grad_f(x_k))
//! ```
//!
//! where `grad_conj` is the gradient of the convex conjugate of a reference
//! function built from a one-dimensional kernel, either isotropically
//! (applied to the norm of the gradient) or anisotropically (applied to each
//! coordinate). Depending on the kernel this reproduces gradient clipping,
//! normalized-gradient steps, and sign-like per-coordinate updates, while a
//! matching smoothness model yields descent guarantees and convergence rates.
//!
//! Modules:
//! - [`kernels`]: the kernel catalog and its conjugate calculus
//! - [`preconditioner`]: reference functions and the preconditioned step
//! - [`problems`]: benchmark objectives
//! - [`smoothness`]: smoothness constants and second-order certification
//! - [`solver`]: the iteration loop, traces, and rate-bound checks
//! - [`experiments`]: reproducible multi-method experiment drivers

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub(crate) mod ioutil;
pub mod kernels;
pub mod preconditioner;
pub mod problems;
pub mod smoothness;
pub mod solver;
pub(crate) mod vecmath;

pub use error::{Error, Result};
