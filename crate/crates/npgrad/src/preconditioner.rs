//! Reference functions and the nonlinearly preconditioned gradient step.
//!
//! A reference function applies a kernel either to the norm of its argument
//! (isotropic) or to each coordinate (anisotropic). Its dual gradient is the
//! preconditioner: the map applied to the scaled gradient inside
//! `x - gamma * grad_conj(lambda * g)`. Isotropic preconditioning rescales
//! the gradient along its own direction; anisotropic preconditioning squashes
//! each coordinate independently.

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::vecmath::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefMode {
    Isotropic,
    Anisotropic,
}

impl RefMode {
    pub fn name(self) -> &'static str {
        match self {
            RefMode::Isotropic => "iso",
            RefMode::Anisotropic => "aniso",
        }
    }
}

impl std::str::FromStr for RefMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iso" => Ok(RefMode::Isotropic),
            "aniso" => Ok(RefMode::Anisotropic),
            other => Err(Error::InvalidParam(format!("unknown mode '{other}'"))),
        }
    }
}

/// Step sizes of the update `x - gamma * grad_conj(lambda * g)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub gamma: f64,
    pub lambda: f64,
}

impl StepParams {
    pub fn new(gamma: f64, lambda: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParam(format!("gamma = {gamma}, need > 0")));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParam(format!("lambda = {lambda}, need > 0")));
        }
        Ok(StepParams { gamma, lambda })
    }
}

/// A kernel lifted to `R^n`, either through the norm or coordinate-wise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceFunction {
    pub kernel: Kernel,
    pub mode: RefMode,
    pub dim: usize,
}

/// Below this norm the isotropic direction y/|y| is replaced by the exact
/// linearization grad_conj(y) ~ (h*)''(0) y, avoiding 0/0 and overflow of
/// the intermediate ratio for subnormal inputs.
const TINY_NORM: f64 = 1e-150;

impl ReferenceFunction {
    pub fn new(kernel: Kernel, mode: RefMode, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParam("dim = 0".into()));
        }
        Ok(ReferenceFunction { kernel, mode, dim })
    }

    /// Reference value `phi(x)`; may be `+inf` for bounded kernels.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match self.mode {
            RefMode::Isotropic => self.kernel.eval(norm(x)),
            RefMode::Anisotropic => x.iter().map(|&t| self.kernel.eval(t)).sum(),
        }
    }

    /// The preconditioner: gradient of the conjugate reference function.
    ///
    /// Isotropic: `(h*)'(|y|) y/|y|`; anisotropic: `(h*)'(y_i)` per
    /// coordinate. Both are sigmoid-shaped, odd, and 1-Lipschitz.
    pub fn grad_conj(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.dim);
        match self.mode {
            RefMode::Isotropic => {
                let r = norm(y);
                let ratio = if r < TINY_NORM {
                    // limit of (h*)'(r)/r as r -> 0
                    self.kernel.conj_second(0.0).expect("smooth at 0")
                } else {
                    self.kernel.conj_deriv(r) / r
                };
                y.iter().map(|&v| ratio * v).collect()
            }
            RefMode::Anisotropic => y.iter().map(|&v| self.kernel.conj_deriv(v)).collect(),
        }
    }

    /// One preconditioned step from `x` with gradient `g`.
    pub fn forward_step(&self, p: &StepParams, x: &[f64], g: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        let scaled: Vec<f64> = g.iter().map(|&v| p.lambda * v).collect();
        let d = self.grad_conj(&scaled);
        x.iter()
            .zip(&d)
            .map(|(&xi, &di)| xi - p.gamma * di)
            .collect()
    }

    /// Stationarity measure `phi(grad_conj(g / lbar))`.
    ///
    /// Evaluated through the conjugate identity
    /// `h((h*)'(s)) = s (h*)'(s) - h*(s)`, which stays finite even where the
    /// saturated dual derivative rounds onto the boundary of dom h.
    pub fn stationarity(&self, lbar: f64, g: &[f64]) -> f64 {
        debug_assert_eq!(g.len(), self.dim);
        match self.mode {
            RefMode::Isotropic => h_at_dual(self.kernel, norm(g) / lbar),
            RefMode::Anisotropic => g.iter().map(|&v| h_at_dual(self.kernel, v / lbar)).sum(),
        }
    }

    /// Apply the Hessian of the conjugate reference function at `y` to `v`.
    pub fn conj_hessian_apply(&self, y: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.conj_hessian_scaled(y, v, |w| w)
    }

    /// Apply the square root of the conjugate Hessian at `y` to `v`.
    /// Used to symmetrize curvature products for eigenvalue estimation.
    pub fn conj_hessian_sqrt_apply(&self, y: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.conj_hessian_scaled(y, v, f64::sqrt)
    }

    /// Apply the inverse of the conjugate Hessian at `y` to `v`.
    pub fn conj_inv_hessian_apply(&self, y: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.conj_hessian_scaled(y, v, |w| 1.0 / w)
    }

    /// Shared eigenstructure of the conjugate Hessian: anisotropic mode is
    /// diagonal with entries `(h*)''(y_i)`; isotropic mode has radial
    /// eigenvalue `(h*)''(|y|)` and tangential eigenvalue `(h*)'(|y|)/|y|`.
    /// `f` maps each eigenvalue (identity, sqrt, reciprocal).
    fn conj_hessian_scaled(
        &self,
        y: &[f64],
        v: &[f64],
        f: impl Fn(f64) -> f64,
    ) -> Result<Vec<f64>> {
        debug_assert_eq!(y.len(), self.dim);
        debug_assert_eq!(v.len(), self.dim);
        match self.mode {
            RefMode::Anisotropic => y
                .iter()
                .zip(v)
                .map(|(&yi, &vi)| Ok(f(self.kernel.conj_second(yi)?) * vi))
                .collect(),
            RefMode::Isotropic => {
                let r = norm(y);
                if r < TINY_NORM {
                    let c = f(self.kernel.conj_second(0.0)?);
                    return Ok(v.iter().map(|&vi| c * vi).collect());
                }
                let radial = f(self.kernel.conj_second(r)?);
                let tangential = f(self.kernel.conj_deriv(r) / r);
                let proj = dot(y, v) / (r * r);
                Ok(y
                    .iter()
                    .zip(v)
                    .map(|(&yi, &vi)| {
                        let along = proj * yi;
                        radial * along + tangential * (vi - along)
                    })
                    .collect())
            }
        }
    }
}

/// `h((h*)'(s))` via Fenchel-Young equality at the pair `(s, (h*)'(s))`.
fn h_at_dual(kernel: Kernel, s: f64) -> f64 {
    s * kernel.conj_deriv(s) - kernel.conj(s)
}
