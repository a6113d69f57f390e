//! Smoothness constants and certification of the second-order condition.
//!
//! Closed-form constants for the two analyzed example families, a sampling
//! certifier for the curvature condition lambda_max(H^(1/2) Q H^(1/2)) <
//! L·Lbar (H the conjugate-reference Hessian at the scaled gradient, Q the
//! objective Hessian), the clipping case analysis with its set-valued
//! boundary, and probes for forward-operator monotonicity and coercivity.
//!
//! The certifier is a falsifier, not a proof: it reports the worst sampled
//! margin over a ball plus the known critical rays of the example families.

use std::cmp::Ordering;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::preconditioner::{ReferenceFunction, StepParams};
use crate::problems::{standard_normal, Oracle, Problem};
use crate::vecmath;

/// Default power-iteration budget for eigenvalue estimates. Sized for
/// near-degenerate spectra: at points where the curvature eigenvalues
/// along and across the gradient nearly cross, the shifted iteration
/// needs tens of thousands of steps to settle the Rayleigh quotient to
/// the default tolerance, even though the estimate is already accurate.
pub const DEFAULT_POWER_ITERS: usize = 200_000;
/// Default relative Rayleigh-quotient tolerance.
pub const DEFAULT_POWER_TOL: f64 = 1e-10;

/// The constants of a smoothness certificate: the descent inequality uses
/// gamma = alpha/L and lambda = 1/Lbar. The optional (L0, L1) pair
/// parameterizes the curvature bound `|Hess f| <= L0 + L1 |grad f|` for the
/// normalized-step special case, with its step fraction delta.
#[derive(Clone, Copy, Debug)]
pub struct SmoothnessConstants {
    pub l: f64,
    pub lbar: f64,
    pub l0: Option<f64>,
    pub l1: Option<f64>,
    pub delta: f64,
}

impl SmoothnessConstants {
    pub fn new(l: f64, lbar: f64) -> Result<Self> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::InvalidParam(format!("L = {l}, need > 0")));
        }
        if !(lbar > 0.0) || !lbar.is_finite() {
            return Err(Error::InvalidParam(format!("Lbar = {lbar}, need > 0")));
        }
        Ok(SmoothnessConstants {
            l,
            lbar,
            l0: None,
            l1: None,
            delta: 1.0,
        })
    }

    pub fn with_l0l1(mut self, l0: f64, l1: f64) -> Result<Self> {
        if !(l0 > 0.0) || !(l1 > 0.0) || !l0.is_finite() || !l1.is_finite() {
            return Err(Error::InvalidParam(format!(
                "(L0, L1) = ({l0}, {l1}), need both > 0"
            )));
        }
        self.l0 = Some(l0);
        self.l1 = Some(l1);
        Ok(self)
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidParam(format!("delta = {delta}, need in (0, 1]")));
        }
        self.delta = delta;
        Ok(self)
    }
}

/// Result of a sampled certification run. `max_margin` is the largest
/// observed ratio of the curvature eigenvalue to its bound L·Lbar; the
/// condition held at every sample iff `max_margin < 1`.
#[derive(Clone, Debug)]
pub struct SocReport {
    pub samples: usize,
    pub max_margin: f64,
    pub worst_x: Vec<f64>,
    pub passed: bool,
}

/// Which branch of the clipping curvature analysis applies at a point,
/// decided by comparing the gradient norm with Lbar. On the boundary the
/// curvature is set-valued; its check merges into the interior one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClipSocCase {
    Interior,
    Boundary,
    Exterior,
}

impl ClipSocCase {
    /// The case whose matrix inequality is actually checked.
    pub fn effective(self) -> ClipSocCase {
        match self {
            ClipSocCase::Boundary => ClipSocCase::Interior,
            c => c,
        }
    }
}

/// Sampling plan for [`certify_soc`]: `count` points uniform in the ball of
/// `radius` around the origin, drawn from `seed`.
#[derive(Clone, Copy, Debug)]
pub struct BallSampler {
    pub count: usize,
    pub radius: f64,
    pub seed: u64,
}

/// Sharp smoothness constant of f = (1/4)·‖x‖⁴ for the three isotropic
/// reference functions with closed-form analysis. Certification holds for
/// any L strictly larger.
pub fn constant_power_norm(kernel: Kernel, lbar: f64) -> Result<f64> {
    if !(lbar > 0.0) || !lbar.is_finite() {
        return Err(Error::InvalidParam(format!("Lbar = {lbar}, need > 0")));
    }
    let c = match kernel {
        Kernel::Cosh => 2f64.powf(1.0 / 3.0) * 3f64.sqrt(),
        Kernel::ExpAbs => 2f64.powf(2.0 / 3.0),
        Kernel::NegLog => 2f64.powf(4.0 / 3.0) / 3.0,
        other => return Err(Error::UnsupportedKernel(other)),
    };
    Ok(c / lbar.powf(1.0 / 3.0))
}

/// Radius at which the quartic's curvature ratio peaks, where
/// [`constant_power_norm`] is attained.
pub fn power_norm_maximizer_radius(kernel: Kernel, lbar: f64) -> Result<f64> {
    if !(lbar > 0.0) || !lbar.is_finite() {
        return Err(Error::InvalidParam(format!("Lbar = {lbar}, need > 0")));
    }
    match kernel {
        Kernel::Cosh => Ok((2.0 * lbar * lbar).powf(1.0 / 6.0)),
        Kernel::ExpAbs => Ok((2.0 * lbar).powf(1.0 / 3.0)),
        Kernel::NegLog => Ok((lbar / 2.0).powf(1.0 / 3.0)),
        other => Err(Error::UnsupportedKernel(other)),
    }
}

/// Smoothness constant of the logistic loss with data norm `a_norm` for the
/// three analyzed isotropic reference functions.
///
/// The NegLog value is sharp (attained along the data direction); the Cosh
/// and ExpAbs values are valid upper bounds whose supremum over the data
/// line is strictly smaller, so only certification from above is meaningful
/// for those two.
pub fn constant_logistic(kernel: Kernel, lbar: f64, a_norm: f64) -> Result<f64> {
    if !(lbar > 0.0) || !lbar.is_finite() {
        return Err(Error::InvalidParam(format!("Lbar = {lbar}, need > 0")));
    }
    if !(a_norm > 0.0) || !a_norm.is_finite() {
        return Err(Error::InvalidParam(format!("a_norm = {a_norm}, need > 0")));
    }
    let a = a_norm;
    match kernel {
        Kernel::Cosh => Ok(a * a / (16.0 * lbar * lbar + a * a).sqrt()),
        Kernel::ExpAbs => Ok(a * a / (4.0 * lbar + a)),
        Kernel::NegLog => Ok((lbar * a * a + a * a * a) / (4.0 * (lbar + a) * (lbar + a))),
        other => Err(Error::UnsupportedKernel(other)),
    }
}

/// Data-direction coordinate u = aᵀx at which the NegLog logistic constant
/// is attained.
fn neglog_logistic_maximizer(lbar: f64, a_norm: f64) -> f64 {
    ((lbar + a_norm) / lbar).ln()
}

/// Tight companion constant L0 for the quartic f = (1/4)·‖x‖⁴ under a given
/// L1: its curvature 3‖x‖² never exceeds L0 + L1·‖∇f‖ with L0 = 4/L1², the
/// maximum of 3t² − L1·t³ over t ≥ 0 (at t = 2/L1).
pub fn power_norm_l0_surrogate(l1: f64) -> f64 {
    4.0 / (l1 * l1)
}

/// Largest eigenvalue of a symmetric operator given only its action on
/// vectors.
///
/// Power iteration with a spectral shift: a first pass on the squared
/// operator estimates the spectral radius rho, then the main iteration runs
/// on M + sigma·I with sigma = 1.25·rho. That matrix is positive
/// semidefinite with dominant eigenvalue lambda_max + sigma, so the
/// iteration cannot lock onto a large negative eigenvalue of an indefinite
/// M. Converged when successive Rayleigh quotients agree to `tol` relative;
/// errs with `NoConvergence` after `iters` main-loop steps. A vanishing
/// iterate short-circuits to 0 (the operator annihilates the probe).
pub fn lambda_max_symmetric<F>(n: usize, iters: usize, tol: f64, mut apply: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    assert!(n >= 1, "operator dimension must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(0x7031_77e5);
    let mut v: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
    let nv = vecmath::norm(&v);
    v.iter_mut().for_each(|vi| *vi /= nv);

    // Stage 1: spectral radius of M from power iteration on M^2, which is
    // PSD and therefore always converges. Loose tolerance; only feeds the
    // shift, with a 25% safety factor on top.
    let mut rho2 = 0.0f64;
    let mut prev = f64::NAN;
    for _ in 0..300.min(iters.max(30)) {
        let mv = apply(&v)?;
        let w = apply(&mv)?;
        rho2 = vecmath::dot(&v, &w).max(0.0);
        let wn = vecmath::norm(&w);
        if wn == 0.0 {
            // |M v|^2 = <M^2 v, v> = 0: the probe lies in the null space.
            return Ok(0.0);
        }
        if !prev.is_nan() && (rho2 - prev).abs() <= 1e-6 * rho2.max(1e-300) {
            v = w.iter().map(|&wi| wi / wn).collect();
            break;
        }
        prev = rho2;
        v = w.iter().map(|&wi| wi / wn).collect();
    }
    let rho = rho2.sqrt();
    if rho == 0.0 {
        return Ok(0.0);
    }
    let sigma = 1.25 * rho;

    // Stage 2: power iteration on the shifted operator. The Rayleigh
    // quotient increases monotonically toward lambda_max + sigma.
    let mut prev_est = f64::NAN;
    for it in 0..iters {
        let mv = apply(&v)?;
        let w: Vec<f64> = mv.iter().zip(&v).map(|(&mi, &vi)| mi + sigma * vi).collect();
        let est = vecmath::dot(&v, &w) - sigma;
        if it > 0 && (est - prev_est).abs() <= tol * est.abs().max(1.0) {
            return Ok(est);
        }
        prev_est = est;
        let wn = vecmath::norm(&w);
        if wn == 0.0 {
            return Ok(0.0);
        }
        v = w.iter().map(|&wi| wi / wn).collect();
    }
    Err(Error::NoConvergence(iters))
}

/// Largest eigenvalue of the symmetrized curvature product
/// H^(1/2)·(Hess f)·H^(1/2) at `x`, with H the conjugate-reference Hessian
/// at the scaled gradient ∇f(x)/lbar. This is the quantity the second-order
/// condition compares against L·Lbar.
pub fn soc_lambda_max(
    rf: &ReferenceFunction,
    prob: &Problem,
    x: &[f64],
    lbar: f64,
    iters: usize,
    tol: f64,
) -> Result<f64> {
    if rf.kernel == Kernel::Clip {
        // Set-valued curvature; handled by the clipping case analysis.
        return Err(Error::UnsupportedKernel(Kernel::Clip));
    }
    if !(lbar > 0.0) || !lbar.is_finite() {
        return Err(Error::InvalidParam(format!("Lbar = {lbar}, need > 0")));
    }
    let g = prob.grad(x);
    let y: Vec<f64> = g.iter().map(|&gi| gi / lbar).collect();
    lambda_max_symmetric(prob.dim(), iters, tol, |v| {
        let a = rf.conj_hessian_sqrt_apply(&y, v)?;
        let b = prob.hess_vec(x, &a)?;
        rf.conj_hessian_sqrt_apply(&y, &b)
    })
}

/// Critical points of the example families, added to every sample set so
/// the certifier cannot miss the analytically known worst case.
fn special_rays(rf: &ReferenceFunction, prob: &Problem, lbar: f64) -> Vec<Vec<f64>> {
    let n = prob.dim();
    let mut pts = Vec::new();
    match &prob.oracle {
        Oracle::PowerNorm { .. } => {
            if let Ok(r) = power_norm_maximizer_radius(rf.kernel, lbar) {
                let mut x = vec![0.0; n];
                x[0] = r;
                pts.push(x);
            }
        }
        Oracle::Logistic { a } => {
            // The curvature ratio depends on x only through u = a'x, so a
            // grid along the data direction covers the whole surface.
            let an2 = vecmath::dot(a, a);
            let an = an2.sqrt();
            let mut us: Vec<f64> = (-32..=32).map(|i| i as f64 * 0.25).collect();
            us.push(neglog_logistic_maximizer(lbar, an));
            for u in us {
                pts.push(a.iter().map(|&ai| ai * u / an2).collect());
            }
        }
        _ => {}
    }
    pts
}

/// Sampled check of the second-order condition over a ball plus the known
/// critical rays of the built-in example families. Evidence, not proof: the
/// report covers exactly the sampled points.
pub fn certify_soc(
    rf: &ReferenceFunction,
    prob: &Problem,
    consts: &SmoothnessConstants,
    sampler: &BallSampler,
) -> Result<SocReport> {
    let bound = consts.l * consts.lbar;
    let mut points = special_rays(rf, prob, consts.lbar);
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    for _ in 0..sampler.count {
        points.push(ball_point(&mut rng, prob.dim(), sampler.radius));
    }
    let mut max_margin = f64::NEG_INFINITY;
    let mut worst_x = vec![0.0; prob.dim()];
    for x in &points {
        let lam = soc_lambda_max(rf, prob, x, consts.lbar, DEFAULT_POWER_ITERS, DEFAULT_POWER_TOL)?;
        let margin = lam / bound;
        if margin > max_margin {
            max_margin = margin;
            worst_x = x.clone();
        }
    }
    Ok(SocReport {
        samples: points.len(),
        max_margin,
        worst_x,
        passed: max_margin < 1.0,
    })
}

/// Classify a point of a clipping run by comparing its gradient norm with
/// Lbar. Exact comparison; the boundary case is its own variant so callers
/// can see it, even though its check merges into the interior one.
pub fn clipping_soc_case(grad_norm: f64, lbar: f64) -> ClipSocCase {
    debug_assert!(grad_norm >= 0.0);
    debug_assert!(lbar > 0.0);
    match grad_norm.partial_cmp(&lbar).expect("norms must be comparable") {
        Ordering::Less => ClipSocCase::Interior,
        Ordering::Equal => ClipSocCase::Boundary,
        Ordering::Greater => ClipSocCase::Exterior,
    }
}

/// Evaluate the applicable clipping matrix inequality at `x`: interior
/// points compare lambda_max(Hess f) against L·Lbar, exterior points
/// compare the Hessian restricted to the gradient's orthogonal complement
/// against L·‖∇f‖. Returns the case and the ratio of observed eigenvalue to
/// bound; the condition holds iff the ratio is < 1.
pub fn clip_soc_margin(
    prob: &Problem,
    x: &[f64],
    consts: &SmoothnessConstants,
    iters: usize,
    tol: f64,
) -> Result<(ClipSocCase, f64)> {
    let g = prob.grad(x);
    let gn = vecmath::norm(&g);
    let case = clipping_soc_case(gn, consts.lbar);
    let n = prob.dim();
    let margin = if case.effective() == ClipSocCase::Interior {
        let lam = lambda_max_symmetric(n, iters, tol, |v| prob.hess_vec(x, v))?;
        lam / (consts.l * consts.lbar)
    } else {
        let ghat: Vec<f64> = g.iter().map(|&gi| gi / gn).collect();
        let project = |v: &[f64]| -> Vec<f64> {
            let c = vecmath::dot(&ghat, v);
            v.iter().zip(&ghat).map(|(&vi, &hi)| vi - c * hi).collect()
        };
        let lam = lambda_max_symmetric(n, iters, tol, |v| {
            let hv = prob.hess_vec(x, &project(v))?;
            Ok(project(&hv))
        })?;
        lam / (consts.l * gn)
    };
    Ok((case, margin))
}

/// Smallest observed monotonicity ratio `<F(x)−F(x̄), x−x̄>/‖x−x̄‖²` of the
/// forward operator over sampled pairs in a ball. For a certified run with
/// gamma = delta/L the guaranteed lower bound is 1 − delta; gamma = 0 gives
/// exactly 1.
pub fn monotonicity_probe(
    rf: &ReferenceFunction,
    prob: &Problem,
    gamma: f64,
    lambda: f64,
    pairs: usize,
    seed: u64,
    radius: f64,
) -> f64 {
    debug_assert!(pairs >= 1);
    let p = StepParams { gamma, lambda };
    let n = prob.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_ratio = f64::INFINITY;
    for _ in 0..pairs {
        let x = ball_point(&mut rng, n, radius);
        let xb = ball_point(&mut rng, n, radius);
        let d: Vec<f64> = x.iter().zip(&xb).map(|(&a, &b)| a - b).collect();
        let dd = vecmath::dot(&d, &d);
        if dd == 0.0 {
            continue;
        }
        let fx = rf.forward_step(&p, &x, &prob.grad(&x));
        let fxb = rf.forward_step(&p, &xb, &prob.grad(&xb));
        let fd: Vec<f64> = fx.iter().zip(&fxb).map(|(&a, &b)| a - b).collect();
        min_ratio = min_ratio.min(vecmath::dot(&fd, &d) / dd);
    }
    min_ratio
}

/// Sampled check of the gradient growth bound ‖∇f(x)‖ ≤ Lbar·|h′(L‖x‖)| on
/// spheres of the given radii. Holding at large radii is what makes the
/// forward operator norm-coercive for delta < 1. Only meaningful for the
/// full-domain kernels whose preconditioner is unbounded; bounded-domain
/// kernels are coercive unconditionally and are rejected.
pub fn coercivity_growth_check(
    kernel: Kernel,
    prob: &Problem,
    l: f64,
    lbar: f64,
    radii: &[f64],
    samples_per_radius: usize,
    seed: u64,
) -> Result<bool> {
    match kernel {
        Kernel::Cosh | Kernel::ExpAbs => {}
        other => return Err(Error::UnsupportedKernel(other)),
    }
    if !(l > 0.0) || !(lbar > 0.0) {
        return Err(Error::InvalidParam(format!(
            "(L, Lbar) = ({l}, {lbar}), need both > 0"
        )));
    }
    let n = prob.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &r in radii {
        let bound = lbar * kernel.deriv(l * r)?.abs();
        for _ in 0..samples_per_radius {
            let x: Vec<f64> = sphere_point(&mut rng, n).into_iter().map(|u| r * u).collect();
            if !(vecmath::norm(&prob.grad(&x)) <= bound) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn sphere_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
        let nv = vecmath::norm(&v);
        if nv > 0.0 {
            return v.into_iter().map(|vi| vi / nv).collect();
        }
    }
}

fn ball_point(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<f64> {
    let u = (((rng.next_u64() >> 11) + 1) as f64) * 2f64.powi(-53);
    let r = radius * u.powf(1.0 / n as f64);
    sphere_point(rng, n).into_iter().map(|vi| r * vi).collect()
}
