//! The preconditioned gradient iteration and its guarantee checks.
//!
//! `run` iterates x⁺ = x − γ·∇φ*(λ∇f(x)) with the theorem-prescribed
//! stepsizes γ = α/L, λ = 1/Lbar, recording a trace of objective value,
//! gradient norm, stationarity measure, step length, and distance to the
//! optimum when known. The companion functions evaluate every descent,
//! rate, and monotonicity guarantee against a recorded trace, so runs with
//! certified constants can be checked end to end and uncertified runs can
//! serve as negative controls.

use std::path::Path;

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::preconditioner::{RefMode, ReferenceFunction, StepParams};
use crate::problems::Problem;
use crate::smoothness::SmoothnessConstants;
use crate::vecmath;

/// Stopping and recording policy for a run.
#[derive(Clone, Copy, Debug)]
pub struct RunLimits {
    pub max_iters: usize,
    /// Stop once the gradient norm drops to this value.
    pub grad_tol: f64,
    /// Record every this-many iterations; first and last are always kept.
    pub record_every: usize,
    /// Full iterate states are kept when dim·(max_iters+1) fits this many
    /// scalars; distance-based checks fall back to the trace otherwise.
    pub state_budget: usize,
}

impl Default for RunLimits {
    fn default() -> Self {
        RunLimits {
            max_iters: 100_000,
            grad_tol: 1e-10,
            record_every: 1,
            state_budget: 10_000_000,
        }
    }
}

/// Stepsize multiple and smoothness certificate for a run.
#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    pub alpha: f64,
    pub consts: SmoothnessConstants,
    pub limits: RunLimits,
}

impl SolverConfig {
    pub fn new(alpha: f64, consts: SmoothnessConstants) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::InvalidParam(format!(
                "alpha = {alpha}, need in (0, 2)"
            )));
        }
        Ok(SolverConfig {
            alpha,
            consts,
            limits: RunLimits::default(),
        })
    }

    pub fn with_limits(mut self, limits: RunLimits) -> Self {
        self.limits = limits;
        self
    }

    /// The descent coefficient 1 − |1 − alpha|.
    pub fn beta(&self) -> f64 {
        1.0 - (1.0 - self.alpha).abs()
    }
}

#[derive(Clone, Debug)]
pub struct TraceRow {
    pub k: usize,
    pub f: f64,
    pub grad_norm: f64,
    /// The measure phi(grad_conj(g/lbar)) the nonconvex rate controls.
    pub stationarity: f64,
    /// Length of the step taken from this iterate; 0 on the terminal row.
    pub step_norm: f64,
    pub dist_to_opt: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    GradTol,
    MaxIters,
}

/// Recorded run: selected rows, the final iterate, optionally every iterate
/// (see [`RunLimits::state_budget`]), and why the run stopped.
#[derive(Clone, Debug)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub final_x: Vec<f64>,
    pub states: Option<Vec<Vec<f64>>>,
    pub reason: StopReason,
}

impl Trace {
    /// CSV dump: `k,f,grad_norm,stationarity,step_norm,dist_to_opt`, one
    /// row per recorded iteration, 17-significant-digit decimals, empty
    /// final field when no optimum is known. Temp-file write then rename.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("k,f,grad_norm,stationarity,step_norm,dist_to_opt\n");
        for r in &self.rows {
            let dist = match r.dist_to_opt {
                Some(d) => format!("{d:.16e}"),
                None => String::new(),
            };
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                r.k, r.f, r.grad_norm, r.stationarity, r.step_norm, dist
            ));
        }
        crate::ioutil::write_atomic(path, out.as_bytes())
    }

    /// Row recorded at iteration `k`, if any.
    pub fn row_at(&self, k: usize) -> Option<&TraceRow> {
        self.rows.iter().find(|r| r.k == k)
    }
}

/// One bound evaluation: the measured quantity at recorded iteration `k`
/// against the theorem's right-hand side.
#[derive(Clone, Copy, Debug)]
pub struct BoundPoint {
    pub k: usize,
    pub measured: f64,
    pub bound: f64,
    pub ok: bool,
}

#[derive(Clone, Debug)]
pub struct BoundSeries {
    pub points: Vec<BoundPoint>,
}

impl BoundSeries {
    pub fn all_ok(&self) -> bool {
        self.points.iter().all(|p| p.ok)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FejerReport {
    pub fejer_ok: bool,
    pub gradmono_ok: bool,
}

struct RunState {
    rows: Vec<TraceRow>,
    states: Option<Vec<Vec<f64>>>,
}

impl RunState {
    fn new(dim: usize, limits: &RunLimits) -> Self {
        let keep_states = dim.saturating_mul(limits.max_iters + 1) <= limits.state_budget;
        RunState {
            rows: Vec::new(),
            states: keep_states.then(Vec::new),
        }
    }
}

/// The preconditioned iteration with γ = α/L and λ = 1/Lbar.
pub fn run(
    rf: &ReferenceFunction,
    prob: &Problem,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<Trace> {
    if rf.dim != prob.dim() || x0.len() != prob.dim() {
        return Err(Error::InvalidParam(format!(
            "dimension mismatch: reference {}, problem {}, x0 {}",
            rf.dim,
            prob.dim(),
            x0.len()
        )));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 2.0) {
        return Err(Error::InvalidParam(format!(
            "alpha = {}, need in (0, 2)",
            cfg.alpha
        )));
    }
    let params = StepParams::new(cfg.alpha / cfg.consts.l, 1.0 / cfg.consts.lbar)?;
    let lbar = cfg.consts.lbar;
    drive(prob, x0, &cfg.limits, |x, g| {
        (
            rf.forward_step(&params, x, g),
            rf.stationarity(lbar, g),
        )
    })
}

/// The normalized-gradient iteration x⁺ = x − δ/(L0 + L1·‖∇f‖)·∇f.
///
/// Algebraically identical to `run` with the NegLog kernel, isotropic mode,
/// L = L1, Lbar = L0/L1, and α = δ; the recorded stationarity column uses
/// that equivalent reference so the two traces are directly comparable.
pub fn run_l0l1(
    prob: &Problem,
    l0: f64,
    l1: f64,
    delta: f64,
    x0: &[f64],
    limits: &RunLimits,
) -> Result<Trace> {
    if !(l0 > 0.0) || !(l1 > 0.0) || !l0.is_finite() || !l1.is_finite() {
        return Err(Error::InvalidParam(format!(
            "(L0, L1) = ({l0}, {l1}), need both > 0"
        )));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParam(format!("delta = {delta}, need in (0, 1]")));
    }
    if x0.len() != prob.dim() {
        return Err(Error::InvalidParam("x0 dimension mismatch".into()));
    }
    let rf = ReferenceFunction::new(Kernel::NegLog, RefMode::Isotropic, prob.dim())?;
    let lbar = l0 / l1;
    drive(prob, x0, limits, |x, g| {
        let gn = vecmath::norm(g);
        let coef = delta / (l0 + l1 * gn);
        let next = x
            .iter()
            .zip(g)
            .map(|(&xi, &gi)| xi - coef * gi)
            .collect();
        (next, rf.stationarity(lbar, g))
    })
}

/// Shared iteration driver: `step` maps (x, grad) to the next iterate and
/// the stationarity value to record.
pub(crate) fn drive<F>(prob: &Problem, x0: &[f64], limits: &RunLimits, mut step: F) -> Result<Trace>
where
    F: FnMut(&[f64], &[f64]) -> (Vec<f64>, f64),
{
    if limits.record_every == 0 {
        return Err(Error::InvalidParam("record_every must be >= 1".into()));
    }
    let mut st = RunState::new(prob.dim(), limits);
    let mut x = x0.to_vec();
    let mut k = 0usize;
    loop {
        let (f, g) = prob.eval_grad(&x);
        if !f.is_finite() || !vecmath::is_finite(&g) {
            return Err(Error::NonFiniteIterate(k));
        }
        if let Some(states) = &mut st.states {
            states.push(x.clone());
        }
        let grad_norm = vecmath::norm(&g);
        let dist_to_opt = prob.optimum().map(|o| vecmath::dist(&x, &o.x));
        let finished = grad_norm <= limits.grad_tol || k == limits.max_iters;
        if finished {
            let (_, stationarity) = step(&x, &g);
            st.rows.push(TraceRow {
                k,
                f,
                grad_norm,
                stationarity,
                step_norm: 0.0,
                dist_to_opt,
            });
            let reason = if grad_norm <= limits.grad_tol {
                StopReason::GradTol
            } else {
                StopReason::MaxIters
            };
            return Ok(Trace {
                rows: st.rows,
                final_x: x,
                states: st.states,
                reason,
            });
        }
        let (next, stationarity) = step(&x, &g);
        if k % limits.record_every == 0 {
            st.rows.push(TraceRow {
                k,
                f,
                grad_norm,
                stationarity,
                step_norm: vecmath::dist(&next, &x),
                dist_to_opt,
            });
        }
        x = next;
        k += 1;
    }
}

/// Nonconvex rate: at every recorded K, the best stationarity value so far
/// is at most L·(f(x⁰) − f⋆)/(Lbar·β·(K+1)).
pub fn nonconvex_rate_bound(
    trace: &Trace,
    consts: &SmoothnessConstants,
    alpha: f64,
    f_star: Option<f64>,
) -> Result<BoundSeries> {
    let f_star = f_star.ok_or(Error::MissingOptimum)?;
    let beta = 1.0 - (1.0 - alpha).abs();
    let p0 = trace.rows.first().map(|r| r.f - f_star).unwrap_or(0.0);
    let mut best = f64::INFINITY;
    let points = trace
        .rows
        .iter()
        .map(|r| {
            best = best.min(r.stationarity);
            let bound = consts.l * p0 / (consts.lbar * beta * (r.k + 1) as f64);
            BoundPoint {
                k: r.k,
                measured: best,
                bound,
                ok: best <= bound,
            }
        })
        .collect();
    Ok(BoundSeries { points })
}

/// Gradient-norm rate for isotropic Cosh runs: at every recorded K, the
/// best gradient norm is at most sqrt(2·L·Lbar·P0/(β(K+1))) + L·P0/(β(K+1)).
pub fn cosh_grad_rate_bound(
    trace: &Trace,
    rf: &ReferenceFunction,
    consts: &SmoothnessConstants,
    alpha: f64,
    f_star: Option<f64>,
) -> Result<BoundSeries> {
    if rf.kernel != Kernel::Cosh || rf.mode != RefMode::Isotropic {
        return Err(Error::WrongKernel);
    }
    let f_star = f_star.ok_or(Error::MissingOptimum)?;
    let beta = 1.0 - (1.0 - alpha).abs();
    let p0 = trace.rows.first().map(|r| r.f - f_star).unwrap_or(0.0);
    let mut best = f64::INFINITY;
    let points = trace
        .rows
        .iter()
        .map(|r| {
            best = best.min(r.grad_norm);
            let tail = consts.l * p0 / (beta * (r.k + 1) as f64);
            let bound = (2.0 * consts.lbar * tail).sqrt() + tail;
            BoundPoint {
                k: r.k,
                measured: best,
                bound,
                ok: best <= bound,
            }
        })
        .collect();
    Ok(BoundSeries { points })
}

/// Distance and gradient-norm monotonicity along a convex isotropic run
/// with α = 1. Distances use the stored iterate states when present, else
/// the recorded distance column; absent both, distance monotonicity is
/// reported false rather than erring, so diagnosis can proceed.
pub fn check_fejer(trace: &Trace, x_star: &[f64]) -> FejerReport {
    const SLACK: f64 = 1e-12;
    let gradmono_ok = trace
        .rows
        .windows(2)
        .all(|w| w[1].grad_norm <= w[0].grad_norm + SLACK);
    let fejer_ok = if let Some(states) = &trace.states {
        let mut prev = f64::INFINITY;
        let mut ok = true;
        for x in states {
            let d = vecmath::dist(x, x_star);
            if d > prev + SLACK {
                ok = false;
                break;
            }
            prev = d;
        }
        ok
    } else if trace.rows.iter().all(|r| r.dist_to_opt.is_some()) && !trace.rows.is_empty() {
        trace.rows.windows(2).all(|w| {
            w[1].dist_to_opt.unwrap() <= w[0].dist_to_opt.unwrap() + SLACK
        })
    } else {
        false
    };
    FejerReport {
        fejer_ok,
        gradmono_ok,
    }
}

/// Convex isotropic suboptimality bound for α = 1 runs: at every recorded
/// K, f(x_K) − f⋆ ≤ L·‖∇f(x⁰)‖·dist₀²/((h*)′(‖∇f(x⁰)‖/Lbar)·(K+1)).
/// A zero initial gradient means x⁰ is already optimal and the bound is 0.
pub fn convex_rate_bound_iso(
    trace: &Trace,
    rf: &ReferenceFunction,
    consts: &SmoothnessConstants,
    x0_dist: f64,
    f_star: Option<f64>,
) -> Result<BoundSeries> {
    if rf.mode != RefMode::Isotropic {
        return Err(Error::WrongKernel);
    }
    let f_star = f_star.ok_or(Error::MissingOptimum)?;
    let g0 = trace.rows.first().map(|r| r.grad_norm).unwrap_or(0.0);
    let numer = if g0 == 0.0 {
        0.0
    } else {
        consts.l * g0 * x0_dist * x0_dist / rf.kernel.conj_deriv(g0 / consts.lbar)
    };
    let points = trace
        .rows
        .iter()
        .map(|r| {
            let measured = r.f - f_star;
            let bound = numer / (r.k + 1) as f64;
            BoundPoint {
                k: r.k,
                measured,
                bound,
                ok: measured <= bound,
            }
        })
        .collect();
    Ok(BoundSeries { points })
}

/// Convex anisotropic O(1/K) bound for doubly subhomogeneous kernels with
/// full domain: f(x_K) − f⋆ ≤ 4·D0/K, with D0 the level-set supremum of
/// the scaled reference distance to the optimum, supplied by the caller.
pub fn convex_rate_bound_subhomo(
    trace: &Trace,
    rf: &ReferenceFunction,
    d0: f64,
    k: usize,
    f_star: f64,
) -> Result<(f64, bool)> {
    let info = rf.kernel.info();
    if !info.subhomogeneous2 || info.dom_radius.is_finite() {
        return Err(Error::UnsupportedKernel(rf.kernel));
    }
    if k == 0 {
        return Err(Error::InvalidParam("bound needs K >= 1".into()));
    }
    let row = trace
        .row_at(k)
        .ok_or_else(|| Error::InvalidParam(format!("iteration {k} not recorded")))?;
    let bound = 4.0 * d0 / k as f64;
    Ok((bound, row.f - f_star <= bound))
}

/// Per-step descent inequality f(x_{k+1}) ≤ f(x_k) − β·(Lbar/L)·
/// stationarity_k, within 1e−9 relative slack, over every recorded pair of
/// consecutive iterations.
pub fn descent_check(trace: &Trace, consts: &SmoothnessConstants, alpha: f64) -> bool {
    let beta = 1.0 - (1.0 - alpha).abs();
    let coef = beta * consts.lbar / consts.l;
    trace.rows.windows(2).all(|w| {
        if w[1].k != w[0].k + 1 {
            return true; // gap in the record: nothing to assert
        }
        let slack = 1e-9 * w[0].f.abs().max(1.0);
        w[1].f <= w[0].f - coef * w[0].stationarity + slack
    })
}

/// Residual of the convex bound ⟨∇f(x), x−x⋆⟩ ≥ L⁻¹⟨∇φ*(∇f(x)/Lbar),
/// ∇f(x)⟩ at a point; nonnegative (to rounding) whenever the constants
/// certify the problem.
pub fn prox_bound_ineq_check(
    rf: &ReferenceFunction,
    consts: &SmoothnessConstants,
    prob: &Problem,
    x: &[f64],
    x_star: &[f64],
) -> f64 {
    let g = prob.grad(x);
    let lhs: f64 = g
        .iter()
        .zip(x.iter().zip(x_star))
        .map(|(&gi, (&xi, &si))| gi * (xi - si))
        .sum();
    let y: Vec<f64> = g.iter().map(|&gi| gi / consts.lbar).collect();
    let rhs = vecmath::dot(&rf.grad_conj(&y), &g) / consts.l;
    lhs - rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_power_norm, Problem};
    use crate::smoothness::{constant_power_norm, SmoothnessConstants};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn iso(kernel: Kernel, n: usize) -> ReferenceFunction {
        ReferenceFunction::new(kernel, RefMode::Isotropic, n).unwrap()
    }

    fn scaled_ones(n: usize, target_norm: f64) -> Vec<f64> {
        let v = target_norm / (n as f64).sqrt();
        vec![v; n]
    }

    fn certified_quartic(
        n: usize,
        kernel: Kernel,
        lbar: f64,
        alpha: f64,
        max_iters: usize,
    ) -> (Problem, ReferenceFunction, SolverConfig) {
        let prob = make_power_norm(n, 4.0, 1.0).unwrap();
        let rf = iso(kernel, n);
        let l = 1.01 * constant_power_norm(kernel, lbar).unwrap();
        let consts = SmoothnessConstants::new(l, lbar).unwrap();
        let cfg = SolverConfig::new(alpha, consts).unwrap().with_limits(RunLimits {
            max_iters,
            ..RunLimits::default()
        });
        (prob, rf, cfg)
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let (prob, rf, cfg) = certified_quartic(4, Kernel::Cosh, 1.0, 1.0, 100);
        let trace = run(&rf, &prob, &[0.0; 4], &cfg).unwrap();
        assert_eq!(trace.reason, StopReason::GradTol);
        assert_eq!(trace.rows.len(), 1);
        let row = &trace.rows[0];
        assert_eq!((row.k, row.f, row.grad_norm, row.step_norm), (0, 0.0, 0.0, 0.0));
        assert_eq!(row.dist_to_opt, Some(0.0));
        assert_eq!(trace.final_x, vec![0.0; 4]);
    }

    #[test]
    fn certified_run_descends_and_meets_rate_bounds() {
        let (prob, rf, cfg) = certified_quartic(20, Kernel::Cosh, 1.0, 1.0, 400);
        let x0 = scaled_ones(20, 2.0);
        let trace = run(&rf, &prob, &x0, &cfg).unwrap();
        assert!(trace.rows.len() > 10);
        for w in trace.rows.windows(2) {
            assert!(w[1].f < w[0].f, "f not strictly decreasing");
        }
        assert!(descent_check(&trace, &cfg.consts, cfg.alpha));
        let bounds = nonconvex_rate_bound(&trace, &cfg.consts, cfg.alpha, Some(0.0)).unwrap();
        assert!(bounds.all_ok());
        let gb = cosh_grad_rate_bound(&trace, &rf, &cfg.consts, cfg.alpha, Some(0.0)).unwrap();
        assert!(gb.all_ok());
        let report = check_fejer(&trace, &vec![0.0; 20]);
        assert!(report.fejer_ok && report.gradmono_ok);
        let cb = convex_rate_bound_iso(&trace, &rf, &cfg.consts, 2.0, Some(0.0)).unwrap();
        assert!(cb.all_ok());
    }

    #[test]
    fn descent_holds_across_alpha_range() {
        for (kernel, alpha) in [
            (Kernel::Cosh, 0.5),
            (Kernel::ExpAbs, 1.9),
            (Kernel::NegLog, 1.5),
        ] {
            let (prob, rf, cfg) = certified_quartic(8, kernel, 1.0, alpha, 200);
            let x0 = scaled_ones(8, 2.0);
            let trace = run(&rf, &prob, &x0, &cfg).unwrap();
            assert!(
                descent_check(&trace, &cfg.consts, cfg.alpha),
                "{kernel} alpha={alpha}"
            );
            let bounds =
                nonconvex_rate_bound(&trace, &cfg.consts, cfg.alpha, Some(0.0)).unwrap();
            assert!(bounds.all_ok(), "{kernel} alpha={alpha}");
        }
    }

    #[test]
    fn uncertified_constants_break_the_guarantees() {
        // L at a tenth of the sharp constant: gamma is 10x too large, the
        // first step overshoots far past the optimum.
        let n = 6;
        let prob = make_power_norm(n, 4.0, 1.0).unwrap();
        let rf = iso(Kernel::Cosh, n);
        let l = 0.1 * constant_power_norm(Kernel::Cosh, 1.0).unwrap();
        let consts = SmoothnessConstants::new(l, 1.0).unwrap();
        let cfg = SolverConfig::new(1.0, consts).unwrap().with_limits(RunLimits {
            max_iters: 10,
            ..RunLimits::default()
        });
        let trace = run(&rf, &prob, &scaled_ones(n, 2.0), &cfg).unwrap();
        assert!(!descent_check(&trace, &consts, 1.0));
        assert!(!check_fejer(&trace, &vec![0.0; n]).fejer_ok);
    }

    #[test]
    fn clip_inside_the_ball_is_plain_gradient_descent() {
        let n = 5;
        let prob = make_power_norm(n, 4.0, 1.0).unwrap();
        let rf = iso(Kernel::Clip, n);
        let consts = SmoothnessConstants::new(2.0, 1.0).unwrap();
        let cfg = SolverConfig::new(1.0, consts).unwrap().with_limits(RunLimits {
            max_iters: 100,
            ..RunLimits::default()
        });
        let x0 = scaled_ones(n, 0.9);
        let trace = run(&rf, &prob, &x0, &cfg).unwrap();
        // Gradient norms start below lambda^-1 = 1 and shrink, so the dual
        // derivative never clips and the step is gamma*lambda*g throughout.
        let gamma_lambda = (cfg.alpha / consts.l) * (1.0 / consts.lbar);
        let mut x = x0.clone();
        for state in trace.states.as_ref().unwrap() {
            for (a, b) in state.iter().zip(&x) {
                assert_relative_eq!(*a, *b, max_relative = 1e-12);
            }
            let g = prob.grad(&x);
            assert!(vecmath::norm(&g) < 1.0);
            x = x.iter().zip(&g).map(|(&xi, &gi)| xi - gamma_lambda * gi).collect();
        }
    }

    #[test]
    fn l0l1_matches_the_equivalent_kernel_run() {
        let n = 5;
        let prob = make_power_norm(n, 4.0, 1.0).unwrap();
        let (l0, l1, delta) = (4.0, 1.0, 0.5);
        let x0 = scaled_ones(n, 2.0);
        let limits = RunLimits {
            max_iters: 200,
            ..RunLimits::default()
        };
        let direct = run_l0l1(&prob, l0, l1, delta, &x0, &limits).unwrap();

        let rf = iso(Kernel::NegLog, n);
        let consts = SmoothnessConstants::new(l1, l0 / l1).unwrap();
        let cfg = SolverConfig::new(delta, consts).unwrap().with_limits(limits);
        let kernel_run = run(&rf, &prob, &x0, &cfg).unwrap();

        assert_eq!(direct.rows.len(), kernel_run.rows.len());
        for (a, b) in direct.rows.iter().zip(&kernel_run.rows) {
            assert_eq!(a.k, b.k);
            assert_relative_eq!(a.f, b.f, max_relative = 1e-12);
            assert_relative_eq!(a.grad_norm, b.grad_norm, max_relative = 1e-12);
            assert_relative_eq!(a.stationarity, b.stationarity, max_relative = 1e-12);
            assert_relative_eq!(a.step_norm, b.step_norm, max_relative = 1e-12, epsilon = 1e-300);
        }
        for (a, b) in direct.final_x.iter().zip(&kernel_run.final_x) {
            assert_relative_eq!(*a, *b, max_relative = 1e-12, epsilon = 1e-300);
        }
    }

    #[test]
    fn l0l1_one_step_at_known_gradient_norm() {
        // Start where the gradient norm equals L0/L1, so the step factor is
        // delta/(2 L0).
        let n = 3;
        let prob = make_power_norm(n, 4.0, 1.0).unwrap();
        let (l0, l1, delta) = (4.0, 1.0, 0.5);
        let r = (l0 / l1) as f64;
        let x0 = scaled_ones(n, r.powf(1.0 / 3.0));
        let limits = RunLimits {
            max_iters: 1,
            ..RunLimits::default()
        };
        let trace = run_l0l1(&prob, l0, l1, delta, &x0, &limits).unwrap();
        let g = prob.grad(&x0);
        assert_relative_eq!(vecmath::norm(&g), l0 / l1, max_relative = 1e-12);
        let states = trace.states.as_ref().unwrap();
        for ((x1, x0i), gi) in states[1].iter().zip(&x0).zip(&g) {
            assert_relative_eq!(*x1, x0i - delta / (2.0 * l0) * gi, max_relative = 1e-12);
        }
    }

    #[test]
    fn subhomo_bound_on_separable_quartic() {
        // 2-D separable quartic under the coordinate-wise Cosh reference:
        // each coordinate behaves like the 1-D quartic, so the 1-D sharp
        // constant certifies and the O(1/K) bound applies.
        let prob = Problem::custom(
            2,
            |x: &[f64]| 0.25 * (x[0].powi(4) + x[1].powi(4)),
            |x: &[f64]| vec![x[0].powi(3), x[1].powi(3)],
        )
        .with_hess_vec(|x: &[f64], v: &[f64]| {
            vec![3.0 * x[0] * x[0] * v[0], 3.0 * x[1] * x[1] * v[1]]
        })
        .with_convexity(true)
        .with_optimum(vec![0.0, 0.0], 0.0);
        let rf = ReferenceFunction::new(Kernel::Cosh, RefMode::Anisotropic, 2).unwrap();
        let lbar = 1.0;
        let l = 1.01 * constant_power_norm(Kernel::Cosh, lbar).unwrap();
        let consts = SmoothnessConstants::new(l, lbar).unwrap();
        let cfg = SolverConfig::new(1.0, consts).unwrap().with_limits(RunLimits {
            max_iters: 300,
            ..RunLimits::default()
        });
        let x0 = vec![1.5, -1.0];
        let trace = run(&rf, &prob, &x0, &cfg).unwrap();

        // Brute-force D0 over a box covering the initial level set.
        let f0 = prob.eval(&x0);
        let b = (4.0 * f0).powf(0.25) * 1.001;
        let grid = 200;
        let mut d0 = 0.0f64;
        for i in 0..=grid {
            for j in 0..=grid {
                let x = [
                    -b + 2.0 * b * i as f64 / grid as f64,
                    -b + 2.0 * b * j as f64 / grid as f64,
                ];
                if prob.eval(&x) <= f0 {
                    let phi = (l * x[0]).cosh() - 1.0 + (l * x[1]).cosh() - 1.0;
                    d0 = d0.max(lbar / l * phi);
                }
            }
        }
        assert!(d0 > 0.0);
        let last = trace.rows.last().unwrap().k;
        for k in 1..=last {
            let (bound, ok) = convex_rate_bound_subhomo(&trace, &rf, d0, k, 0.0).unwrap();
            assert!(ok, "k={k}: f-f* > {bound}");
        }
        assert!(matches!(
            convex_rate_bound_subhomo(&trace, &rf, d0, 0, 0.0),
            Err(Error::InvalidParam(_))
        ));
        let neglog = ReferenceFunction::new(Kernel::NegLog, RefMode::Anisotropic, 2).unwrap();
        assert!(matches!(
            convex_rate_bound_subhomo(&trace, &neglog, d0, 1, 0.0),
            Err(Error::UnsupportedKernel(Kernel::NegLog))
        ));
    }

    #[test]
    fn prox_inequality_residual_is_nonnegative() {
        use rand::SeedableRng;
        let n = 5;
        let (prob, rf, cfg) = certified_quartic(n, Kernel::Cosh, 1.0, 1.0, 10);
        let x_star = vec![0.0; n];
        assert_eq!(
            prox_bound_ineq_check(&rf, &cfg.consts, &prob, &x_star, &x_star),
            0.0
        );
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let x: Vec<f64> = (0..n)
                .map(|_| 2.0 * crate::problems::standard_normal(&mut rng))
                .collect();
            let res = prox_bound_ineq_check(&rf, &cfg.consts, &prob, &x, &x_star);
            assert!(res >= -1e-9, "residual {res}");
        }
    }

    #[test]
    fn recording_cadence_keeps_first_and_last() {
        let (prob, rf, mut cfg) = certified_quartic(4, Kernel::Cosh, 1.0, 1.0, 23);
        cfg.limits.record_every = 5;
        let trace = run(&rf, &prob, &scaled_ones(4, 2.0), &cfg).unwrap();
        let ks: Vec<usize> = trace.rows.iter().map(|r| r.k).collect();
        assert_eq!(ks, vec![0, 5, 10, 15, 20, 23]);
        assert_eq!(trace.rows.last().unwrap().step_norm, 0.0);
        assert!(trace.rows.iter().take(5).all(|r| r.step_norm > 0.0));
    }

    #[test]
    fn grad_tol_stops_the_run() {
        let (prob, rf, mut cfg) = certified_quartic(4, Kernel::Cosh, 1.0, 1.0, 100_000);
        cfg.limits.grad_tol = 1e-6;
        cfg.limits.state_budget = 0;
        let trace = run(&rf, &prob, &scaled_ones(4, 2.0), &cfg).unwrap();
        assert_eq!(trace.reason, StopReason::GradTol);
        assert!(trace.rows.last().unwrap().grad_norm <= 1e-6);
        assert!(trace.states.is_none());
    }

    #[test]
    fn divergence_is_reported_not_propagated_as_nan() {
        let prob = make_power_norm(3, 4.0, 1.0).unwrap();
        let rf = iso(Kernel::Cosh, 3);
        let consts = SmoothnessConstants::new(1e-300, 1.0).unwrap();
        let cfg = SolverConfig::new(1.0, consts).unwrap();
        let err = run(&rf, &prob, &scaled_ones(3, 2.0), &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFiniteIterate(_)));
    }

    #[test]
    fn config_validation() {
        let consts = SmoothnessConstants::new(1.0, 1.0).unwrap();
        for alpha in [0.0, 2.0, -1.0, f64::NAN] {
            assert!(SolverConfig::new(alpha, consts).is_err());
        }
        let cfg = SolverConfig::new(1.5, consts).unwrap();
        assert_relative_eq!(cfg.beta(), 0.5, max_relative = 1e-15);
        let prob = make_power_norm(2, 4.0, 1.0).unwrap();
        let rf = iso(Kernel::Cosh, 3);
        assert!(matches!(
            run(&rf, &prob, &[1.0, 1.0], &cfg),
            Err(Error::InvalidParam(_))
        ));
    }

    #[test]
    fn csv_output_is_stable_and_parseable() {
        let (prob, rf, cfg) = certified_quartic(3, Kernel::Cosh, 1.0, 1.0, 5);
        let trace = run(&rf, &prob, &scaled_ones(3, 2.0), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        trace.write_csv(&p1).unwrap();
        trace.write_csv(&p2).unwrap();
        let t1 = std::fs::read(&p1).unwrap();
        let t2 = std::fs::read(&p2).unwrap();
        assert_eq!(t1, t2);
        let text = String::from_utf8(t1).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "k,f,grad_norm,stationarity,step_norm,dist_to_opt"
        );
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 6);
            let _: usize = fields[0].parse().unwrap();
            for v in &fields[1..] {
                if !v.is_empty() {
                    let parsed: f64 = v.parse().unwrap();
                    assert!(parsed.is_finite());
                }
            }
        }
        // A logistic trace has no optimum: the distance field is empty.
        let lprob = crate::problems::make_logistic(vec![1.0, -1.0, 0.5]).unwrap();
        let lrf = iso(Kernel::Cosh, 3);
        let lcfg = SolverConfig::new(1.0, SmoothnessConstants::new(0.5, 1.0).unwrap())
            .unwrap()
            .with_limits(RunLimits {
                max_iters: 3,
                ..RunLimits::default()
            });
        let ltrace = run(&lrf, &lprob, &[0.1, 0.2, 0.0], &lcfg).unwrap();
        let p3 = dir.path().join("c.csv");
        ltrace.write_csv(&p3).unwrap();
        let text = std::fs::read_to_string(&p3).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(','));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn descent_holds_for_any_valid_alpha(alpha in 0.05f64..1.95) {
            let (prob, rf, cfg) = certified_quartic(3, Kernel::Cosh, 1.0, alpha, 60);
            let trace = run(&rf, &prob, &scaled_ones(3, 2.0), &cfg).unwrap();
            prop_assert!(descent_check(&trace, &cfg.consts, alpha));
        }
    }
}
