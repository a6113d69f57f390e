//! Runtime check suites shared by the verification front end and the
//! acceptance harness.
//!
//! Each check recomputes one calculus invariant on a pinned grid and
//! reports the worst residual next to the pinned tolerance, so a report is
//! meaningful on its own: `worst <= tol` is the pass condition, and the
//! margin tells how much headroom the identity has in floating point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::kernels::Kernel;

/// One named residual check against its tolerance.
#[derive(Clone, Debug)]
pub struct CheckReport {
    pub name: String,
    pub worst: f64,
    pub tol: f64,
    pub passed: bool,
}

fn report(name: String, worst: f64, tol: f64) -> CheckReport {
    CheckReport {
        passed: worst <= tol,
        name,
        worst,
        tol,
    }
}

/// Evenly spaced grid of `count` points over [lo, hi].
fn linspace(lo: f64, hi: f64, count: usize) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (count - 1) as f64;
    (0..count).map(move |i| lo + step * i as f64)
}

/// Interior grid for a kernel's primal argument: 200 points spanning the
/// domain up to 97.5% of a finite radius, or ±10 on the full line.
fn primal_grid(kernel: Kernel) -> Vec<f64> {
    let r = kernel.info().dom_radius;
    let lim = if r.is_finite() { 0.975 * r } else { 10.0 };
    linspace(-lim, lim, 200).collect()
}

const CONJUGACY_TOL: f64 = 1e-8;
const FENCHEL_YOUNG_TOL: f64 = 1e-8;
const BRUTE_FORCE_TOL: f64 = 1e-5;
const LIPSCHITZ_TOL: f64 = 1e-12;
const SECOND_DERIV_TOL: f64 = 1e-6;

/// Full calculus suite over all six kernels: conjugate-derivative
/// round-trip on 200-point interior grids, the conjugacy identity
/// h((h*)') + h* = s·(h*)', closed-form conjugate against the brute-force
/// oracle, 1-Lipschitz continuity of (h*)' on 10^4 seeded pairs, and
/// (h*)'' against a central finite difference away from kink points.
pub fn kernel_calculus_suite() -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    for kernel in Kernel::ALL {
        let name = kernel.name();

        let mut worst = 0.0f64;
        for t in primal_grid(kernel) {
            let s = kernel.deriv(t)?;
            worst = worst.max((kernel.conj_deriv(s) - t).abs());
        }
        out.push(report(format!("{name} conjugacy round-trip"), worst, CONJUGACY_TOL));

        let mut worst = 0.0f64;
        for t in primal_grid(kernel) {
            let s = kernel.deriv(t)?;
            let residual = (kernel.eval(t) + kernel.conj(s) - t * s).abs();
            worst = worst.max(residual);
        }
        out.push(report(format!("{name} conjugacy identity"), worst, FENCHEL_YOUNG_TOL));

        let mut worst = 0.0f64;
        for s in linspace(-10.0, 10.0, 41) {
            let oracle = kernel.conj_brute_force(s, 100_000)?;
            worst = worst.max((kernel.conj(s) - oracle).abs());
        }
        out.push(report(format!("{name} conjugate vs brute force"), worst, BRUTE_FORCE_TOL));

        let mut rng = ChaCha8Rng::seed_from_u64(0x6b5f_0001);
        let mut worst = 0.0f64;
        for _ in 0..10_000 {
            let s = rng.gen_range(-20.0..20.0);
            let t = rng.gen_range(-20.0..20.0);
            let excess = (kernel.conj_deriv(s) - kernel.conj_deriv(t)).abs() - (s - t).abs();
            worst = worst.max(excess);
        }
        out.push(report(format!("{name} conjugate derivative 1-Lipschitz"), worst, LIPSCHITZ_TOL));

        // central difference; skip a band around |s| = 1 where one kernel's
        // second derivative is set-valued
        let eps = 1e-6;
        let mut worst = 0.0f64;
        for s in linspace(-10.0, 10.0, 200) {
            if (s.abs() - 1.0).abs() < 0.05 {
                continue;
            }
            let fd = (kernel.conj_deriv(s + eps) - kernel.conj_deriv(s - eps)) / (2.0 * eps);
            worst = worst.max((kernel.conj_second(s)? - fd).abs());
        }
        out.push(report(format!("{name} conjugate second derivative"), worst, SECOND_DERIV_TOL));
    }
    Ok(out)
}

const SUBHOMOGENEITY_TOL: f64 = 1e-12;

/// Quadratic-scaling inequality h(θx) ≤ θ²·h(x) for the kernels flagged
/// with that property, on the pinned grid θ ∈ {0, 0.01, …, 1} times 1981
/// evenly spaced x ∈ [−20, 20] (2·10^5 points per kernel).
pub fn subhomogeneity_grid() -> Vec<CheckReport> {
    Kernel::ALL
        .into_iter()
        .filter(|k| k.info().subhomogeneous2)
        .map(|kernel| {
            let mut worst = f64::NEG_INFINITY;
            for i in 0..=100u32 {
                let theta = f64::from(i) / 100.0;
                for x in linspace(-20.0, 20.0, 1981) {
                    let excess = kernel.eval(theta * x) - theta * theta * kernel.eval(x);
                    worst = worst.max(excess);
                }
            }
            report(
                format!("{} quadratic scaling", kernel.name()),
                worst,
                SUBHOMOGENEITY_TOL,
            )
        })
        .collect()
}
