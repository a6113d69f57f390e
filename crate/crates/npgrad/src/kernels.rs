//! One-dimensional kernel catalog and its conjugate calculus.
//!
//! A kernel `h` is an even, 1-strongly-convex scalar function with `h(0) = 0`.
//! Reference functions are built from kernels either isotropically,
//! `phi(x) = h(|x|)`, or coordinate-wise, `phi(x) = sum_i h(x_i)`. The
//! preconditioned step only ever evaluates the dual side: the convex
//! conjugate `h*`, its derivative (a sigmoid-shaped scalar map), and its
//! second derivative.
//!
//! Catalog:
//!
//! | kernel       | h(t)                          | dom h    | (h*)'(s)            |
//! |--------------|-------------------------------|----------|---------------------|
//! | `Cosh`       | cosh(t) - 1                   | R        | asinh(s)            |
//! | `ExpAbs`     | exp|t| - |t| - 1              | R        | ln(1+|s|) sgn(s)    |
//! | `NegLog`     | -|t| - ln(1-|t|)              | (-1, 1)  | s/(1+|s|)           |
//! | `Sqrt`       | 1 - sqrt(1-t^2)               | [-1, 1]  | s/sqrt(1+s^2)       |
//! | `ArctanhEnt` | t atanh(t) + ln sqrt(1-t^2)   | (-1, 1)  | tanh(s)             |
//! | `Clip`       | t^2/2 on [-1, 1]              | [-1, 1]  | clamp(s, -1, 1)     |
//!
//! All six dual derivatives are 1-Lipschitz, odd, and bounded by the domain
//! radius of `h`; only `Clip` has a nonsmooth dual derivative (kinks at
//! |s| = 1).

use crate::error::{Error, Result};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kernel {
    Cosh,
    ExpAbs,
    NegLog,
    Sqrt,
    ArctanhEnt,
    Clip,
}

/// Static facts about a kernel used by preconditions elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelInfo {
    /// Radius of dom h; infinite for the full-domain kernels.
    pub dom_radius: f64,
    /// Whether the endpoints of dom h belong to it.
    pub dom_closed: bool,
    /// Strong-convexity modulus of h; 1 for every catalog kernel.
    pub mu: f64,
    /// False only for `Clip`, whose dual derivative has kinks.
    pub conj_prime_smooth: bool,
    /// phi(theta x) <= theta^2 phi(x) for theta in [0,1]; holds for `Cosh`.
    pub subhomogeneous2: bool,
}

const INF: f64 = f64::INFINITY;

static COSH_INFO: KernelInfo = KernelInfo {
    dom_radius: INF,
    dom_closed: false,
    mu: 1.0,
    conj_prime_smooth: true,
    subhomogeneous2: true,
};
static EXPABS_INFO: KernelInfo = KernelInfo {
    dom_radius: INF,
    dom_closed: false,
    mu: 1.0,
    conj_prime_smooth: true,
    subhomogeneous2: false,
};
static NEGLOG_INFO: KernelInfo = KernelInfo {
    dom_radius: 1.0,
    dom_closed: false,
    mu: 1.0,
    conj_prime_smooth: true,
    subhomogeneous2: false,
};
static SQRT_INFO: KernelInfo = KernelInfo {
    dom_radius: 1.0,
    dom_closed: true,
    mu: 1.0,
    conj_prime_smooth: true,
    subhomogeneous2: false,
};
static ARCTANH_INFO: KernelInfo = KernelInfo {
    dom_radius: 1.0,
    dom_closed: false,
    mu: 1.0,
    conj_prime_smooth: true,
    subhomogeneous2: false,
};
static CLIP_INFO: KernelInfo = KernelInfo {
    dom_radius: 1.0,
    dom_closed: true,
    mu: 1.0,
    conj_prime_smooth: false,
    subhomogeneous2: false,
};

impl Kernel {
    pub const ALL: [Kernel; 6] = [
        Kernel::Cosh,
        Kernel::ExpAbs,
        Kernel::NegLog,
        Kernel::Sqrt,
        Kernel::ArctanhEnt,
        Kernel::Clip,
    ];

    pub fn info(self) -> &'static KernelInfo {
        match self {
            Kernel::Cosh => &COSH_INFO,
            Kernel::ExpAbs => &EXPABS_INFO,
            Kernel::NegLog => &NEGLOG_INFO,
            Kernel::Sqrt => &SQRT_INFO,
            Kernel::ArctanhEnt => &ARCTANH_INFO,
            Kernel::Clip => &CLIP_INFO,
        }
    }

    /// Kernel value `h(t)`, extended with `+inf` outside dom h.
    pub fn eval(self, t: f64) -> f64 {
        let a = t.abs();
        match self {
            // cosh t - 1 = 2 sinh^2(t/2), which does not cancel near 0
            Kernel::Cosh => {
                let s = (t / 2.0).sinh();
                2.0 * s * s
            }
            Kernel::ExpAbs => a.exp_m1() - a,
            Kernel::NegLog => {
                if a < 1.0 {
                    -a - (-a).ln_1p()
                } else {
                    INF
                }
            }
            // 1 - sqrt(1-t^2) rewritten without cancellation
            Kernel::Sqrt => {
                if a <= 1.0 {
                    t * t / (1.0 + (1.0 - t * t).sqrt())
                } else {
                    INF
                }
            }
            // ln cosh(atanh t) = -ln sqrt(1-t^2)
            Kernel::ArctanhEnt => {
                if a < 1.0 {
                    t * t.atanh() + 0.5 * (-t * t).ln_1p()
                } else {
                    INF
                }
            }
            Kernel::Clip => {
                if a <= 1.0 {
                    t * t / 2.0
                } else {
                    INF
                }
            }
        }
    }

    /// Derivative `h'(t)` on the interior of dom h.
    pub fn deriv(self, t: f64) -> Result<f64> {
        let a = t.abs();
        let interior = a < self.info().dom_radius;
        if !interior {
            return Err(Error::OutOfDomain { kernel: self, t });
        }
        Ok(match self {
            Kernel::Cosh => t.sinh(),
            Kernel::ExpAbs => a.exp_m1().copysign(t),
            Kernel::NegLog => t / (1.0 - a),
            Kernel::Sqrt => t / (1.0 - t * t).sqrt(),
            Kernel::ArctanhEnt => t.atanh(),
            Kernel::Clip => t,
        })
    }

    /// Convex conjugate `h*(s)`; finite for every real `s`.
    pub fn conj(self, s: f64) -> f64 {
        let a = s.abs();
        match self {
            Kernel::Cosh => s * s.asinh() - sqrt1ps2_minus_1(s),
            Kernel::ExpAbs => {
                // (1+|s|) ln(1+|s|) - |s|; the direct form cancels
                // catastrophically for small |s|
                if a < 1e-4 {
                    a * a * (0.5 - a * (1.0 / 6.0) + a * a * (1.0 / 12.0))
                } else {
                    (1.0 + a) * a.ln_1p() - a
                }
            }
            Kernel::NegLog => {
                // |s| - ln(1+|s|)
                if a < 1e-4 {
                    a * a * (0.5 - a * (1.0 / 3.0) + a * a * 0.25)
                } else {
                    a - a.ln_1p()
                }
            }
            Kernel::Sqrt => sqrt1ps2_minus_1(s),
            Kernel::ArctanhEnt => {
                // ln cosh s = |s| - ln 2 + ln(1 + exp(-2|s|))
                if a < 1e-4 {
                    a * a * (0.5 - a * a * (1.0 / 12.0))
                } else {
                    a - std::f64::consts::LN_2 + (-2.0 * a).exp().ln_1p()
                }
            }
            Kernel::Clip => {
                if a <= 1.0 {
                    s * s / 2.0
                } else {
                    a - 0.5
                }
            }
        }
    }

    /// Dual derivative `(h*)'(s)`: the sigmoid-shaped scalar map applied to
    /// the (scaled) gradient by the preconditioned step.
    pub fn conj_deriv(self, s: f64) -> f64 {
        match self {
            Kernel::Cosh => s.asinh(),
            Kernel::ExpAbs => s.abs().ln_1p().copysign(s),
            Kernel::NegLog => s / (1.0 + s.abs()),
            Kernel::Sqrt => s / s.hypot(1.0),
            Kernel::ArctanhEnt => s.tanh(),
            Kernel::Clip => s.clamp(-1.0, 1.0),
        }
    }

    /// Dual second derivative `(h*)''(s)`.
    ///
    /// For `Clip` this is set-valued at |s| = 1 and an error is returned;
    /// callers that certify curvature for `Clip` handle the two regimes
    /// explicitly instead.
    pub fn conj_second(self, s: f64) -> Result<f64> {
        let a = s.abs();
        Ok(match self {
            Kernel::Cosh => 1.0 / s.hypot(1.0),
            Kernel::ExpAbs => 1.0 / (1.0 + a),
            Kernel::NegLog => 1.0 / ((1.0 + a) * (1.0 + a)),
            Kernel::Sqrt => {
                let r = s.hypot(1.0);
                1.0 / (r * r * r)
            }
            Kernel::ArctanhEnt => {
                let c = 1.0 / s.cosh();
                c * c
            }
            Kernel::Clip => {
                if a < 1.0 {
                    1.0
                } else if a > 1.0 {
                    0.0
                } else {
                    return Err(Error::NondifferentiablePoint(self));
                }
            }
        })
    }

    /// Brute-force conjugate: sup of `s t - h(t)` by grid search.
    ///
    /// Serves as an independent oracle for the closed forms. The search
    /// interval `[-T, T]` is chosen so that `h'(T) > |s| + 1`, which
    /// brackets the maximizer: outward doubling for full-domain kernels,
    /// inward halving of the boundary gap for bounded ones (for `Clip`,
    /// whose derivative is bounded, the sup may sit on the domain endpoint
    /// and the full closed interval is kept). Because the objective is
    /// concave in `t`, a second scan of the bracket around the coarse
    /// argmax sharpens the result without trusting the closed forms.
    pub fn conj_brute_force(self, s: f64, grid_n: usize) -> Result<f64> {
        if grid_n < 1000 {
            return Err(Error::InvalidParam(format!(
                "grid_n = {grid_n}, need at least 1000 for a trustworthy sup"
            )));
        }
        if !s.is_finite() {
            return Err(Error::InvalidParam(format!("s = {s} is not finite")));
        }
        let radius = self.info().dom_radius;
        let t_max = if radius.is_finite() {
            let mut chosen = if self.info().dom_closed {
                radius
            } else {
                radius * (1.0 - 1e-15)
            };
            for k in 1..=50 {
                let t = radius * (1.0 - 2f64.powi(-k));
                if self.deriv(t)? > s.abs() + 1.0 {
                    chosen = t;
                    break;
                }
            }
            chosen
        } else {
            let mut t = 1.0;
            while self.deriv(t)? <= s.abs() + 1.0 {
                t *= 2.0;
            }
            t
        };

        let scan = |lo: f64, hi: f64| {
            let mut best = f64::NEG_INFINITY;
            let mut best_i = 0;
            for i in 0..grid_n {
                let t = lo + (hi - lo) * (i as f64) / ((grid_n - 1) as f64);
                let v = s * t - self.eval(t);
                if v > best {
                    best = v;
                    best_i = i;
                }
            }
            (best, best_i)
        };

        let (coarse, i) = scan(-t_max, t_max);
        // concavity puts the true sup inside the neighbor bracket
        let step = 2.0 * t_max / ((grid_n - 1) as f64);
        let lo = (-t_max + step * (i.saturating_sub(1)) as f64).max(-t_max);
        let hi = (-t_max + step * (i + 1) as f64).min(t_max);
        let (fine, _) = scan(lo, hi);
        Ok(coarse.max(fine))
    }

    /// CLI string name.
    pub fn name(self) -> &'static str {
        match self {
            Kernel::Cosh => "cosh",
            Kernel::ExpAbs => "expabs",
            Kernel::NegLog => "neglog",
            Kernel::Sqrt => "sqrt",
            Kernel::ArctanhEnt => "arctanh",
            Kernel::Clip => "clip",
        }
    }
}

/// `sqrt(1 + s^2) - 1` without cancellation for small `s` and without
/// squaring overflow for large `s`.
fn sqrt1ps2_minus_1(s: f64) -> f64 {
    let r = s.hypot(1.0);
    if r >= 2.0 {
        r - 1.0
    } else {
        s * s / (1.0 + r)
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosh" => Ok(Kernel::Cosh),
            "expabs" => Ok(Kernel::ExpAbs),
            "neglog" => Ok(Kernel::NegLog),
            "sqrt" => Ok(Kernel::Sqrt),
            "arctanh" => Ok(Kernel::ArctanhEnt),
            "clip" => Ok(Kernel::Clip),
            other => Err(Error::InvalidParam(format!("unknown kernel '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Grid over the interior of dom h, shrunk away from the endpoints for
    /// bounded kernels so that h' stays representable, and kept moderate for
    /// full-domain kernels so absolute tolerances are meaningful against
    /// double rounding of the exponentially growing terms.
    fn interior_grid(k: Kernel, n: usize) -> Vec<f64> {
        let r = k.info().dom_radius;
        let lim = if r.is_finite() { 0.975 * r } else { 10.0 };
        (0..n)
            .map(|i| -lim + 2.0 * lim * (i as f64) / ((n - 1) as f64))
            .collect()
    }

    #[test]
    fn catalog_has_six_unit_modulus_kernels() {
        assert_eq!(Kernel::ALL.len(), 6);
        for k in Kernel::ALL {
            assert_eq!(k.info().mu, 1.0);
        }
        let nonsmooth: Vec<_> = Kernel::ALL
            .iter()
            .filter(|k| !k.info().conj_prime_smooth)
            .collect();
        assert_eq!(nonsmooth, [&Kernel::Clip]);
        let subhomo: Vec<_> = Kernel::ALL
            .iter()
            .filter(|k| k.info().subhomogeneous2)
            .collect();
        assert_eq!(subhomo, [&Kernel::Cosh]);
    }

    #[test]
    fn kernel_is_even_nonnegative_and_zero_at_zero() {
        for k in Kernel::ALL {
            assert_eq!(k.eval(0.0), 0.0);
            for &t in &interior_grid(k, 201) {
                let v = k.eval(t);
                assert!(v >= 0.0, "{k}: h({t}) = {v} < 0");
                assert_abs_diff_eq!(v, k.eval(-t), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn kernel_curvature_at_least_one() {
        // central differences of h' against the strong-convexity modulus
        let eps = 1e-6;
        for k in Kernel::ALL {
            let r = k.info().dom_radius;
            let lim = if r.is_finite() { 0.9 * r } else { 5.0 };
            for i in 0..101 {
                let t = -lim + 2.0 * lim * (i as f64) / 100.0;
                let dd = (k.deriv(t + eps).unwrap() - k.deriv(t - eps).unwrap()) / (2.0 * eps);
                assert!(dd >= k.info().mu - 1e-5, "{k}: h''({t}) ~ {dd}");
            }
        }
    }

    #[test]
    fn eval_outside_domain_is_infinite() {
        for k in [Kernel::NegLog, Kernel::ArctanhEnt] {
            assert_eq!(k.eval(1.0), INF);
            assert_eq!(k.eval(-1.5), INF);
        }
        for k in [Kernel::Sqrt, Kernel::Clip] {
            assert!(k.eval(1.0).is_finite());
            assert_eq!(k.eval(1.0 + 1e-12), INF);
        }
        assert!(Kernel::Cosh.eval(100.0).is_finite());
    }

    #[test]
    fn deriv_errors_outside_interior() {
        for k in [Kernel::NegLog, Kernel::Sqrt, Kernel::ArctanhEnt, Kernel::Clip] {
            assert!(matches!(
                k.deriv(1.0),
                Err(Error::OutOfDomain { .. })
            ));
            assert!(k.deriv(0.999).is_ok());
        }
        assert!(Kernel::Cosh.deriv(1e6).is_ok());
    }

    #[test]
    fn conjugacy_round_trip() {
        for k in Kernel::ALL {
            for &t in &interior_grid(k, 200) {
                let s = k.deriv(t).unwrap();
                let back = k.conj_deriv(s);
                assert!(
                    (back - t).abs() <= 1e-8,
                    "{k}: (h*)'(h'({t})) = {back}"
                );
            }
        }
    }

    #[test]
    fn fenchel_young_equality_at_conjugate_pairs() {
        // h(t) + h*(h'(t)) = t h'(t) whenever t is in the interior
        for k in Kernel::ALL {
            for &t in &interior_grid(k, 200) {
                let s = k.deriv(t).unwrap();
                let residual = k.eval(t) + k.conj(s) - t * s;
                assert!(
                    residual.abs() <= 1e-8,
                    "{k}: Fenchel-Young residual {residual} at t = {t}"
                );
            }
        }
    }

    #[test]
    fn closed_form_conjugate_matches_brute_force() {
        for k in Kernel::ALL {
            for s_int in -10..=10 {
                let s = s_int as f64;
                let oracle = k.conj_brute_force(s, 100_000).unwrap();
                let closed = k.conj(s);
                assert!(
                    (oracle - closed).abs() <= 1e-5,
                    "{k}: h*({s}) closed {closed} vs grid {oracle}"
                );
            }
        }
    }

    #[test]
    fn brute_force_rejects_coarse_grids() {
        assert!(matches!(
            Kernel::Cosh.conj_brute_force(1.0, 10),
            Err(Error::InvalidParam(_))
        ));
    }

    #[test]
    fn dual_derivative_is_odd_monotone_and_bounded() {
        for k in Kernel::ALL {
            assert_eq!(k.conj_deriv(0.0), 0.0);
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=400 {
                let s = -20.0 + 40.0 * (i as f64) / 400.0;
                let d = k.conj_deriv(s);
                assert_abs_diff_eq!(d, -k.conj_deriv(-s), epsilon = 1e-15);
                assert!(d >= prev - 1e-15, "{k}: (h*)' not monotone at {s}");
                assert!(d.abs() <= k.info().dom_radius + 1e-12);
                prev = d;
            }
        }
    }

    #[test]
    fn dual_second_derivative_matches_finite_differences() {
        // small enough that the O(eps) truncation at the |s| kink of the
        // odd-symmetric duals stays below the tolerance
        let eps = 1e-6;
        for k in Kernel::ALL {
            for i in 0..=200 {
                let s = -8.0 + 16.0 * (i as f64) / 200.0;
                if k == Kernel::Clip && (s.abs() - 1.0).abs() < 0.1 {
                    continue; // kink
                }
                let fd = (k.conj_deriv(s + eps) - k.conj_deriv(s - eps)) / (2.0 * eps);
                let exact = k.conj_second(s).unwrap();
                assert!(
                    (fd - exact).abs() <= 1e-6,
                    "{k}: (h*)''({s}) = {exact} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn clip_dual_second_derivative_is_set_valued_on_the_kink() {
        assert!(matches!(
            Kernel::Clip.conj_second(1.0),
            Err(Error::NondifferentiablePoint(Kernel::Clip))
        ));
        assert!(matches!(
            Kernel::Clip.conj_second(-1.0),
            Err(Error::NondifferentiablePoint(Kernel::Clip))
        ));
        assert_eq!(Kernel::Clip.conj_second(0.5).unwrap(), 1.0);
        assert_eq!(Kernel::Clip.conj_second(1.5).unwrap(), 0.0);
    }

    #[test]
    fn catalog_spot_values() {
        assert_abs_diff_eq!(Kernel::NegLog.conj_deriv(1.0), 0.5);
        assert_abs_diff_eq!(Kernel::Clip.conj_deriv(2.0), 1.0);
        assert_abs_diff_eq!(Kernel::Cosh.conj_second(0.0).unwrap(), 1.0);
        // sup_t t - h(t) for NegLog sits at t = 1/2
        assert_abs_diff_eq!(
            Kernel::NegLog.conj_brute_force(1.0, 100_000).unwrap(),
            1.0 - std::f64::consts::LN_2,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(Kernel::Cosh.conj(0.0), 0.0);
    }

    #[test]
    fn dual_derivative_is_one_lipschitz_on_random_pairs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let a: f64 = rng.gen_range(-50.0..50.0);
            let b: f64 = rng.gen_range(-50.0..50.0);
            for k in Kernel::ALL {
                let lhs = (k.conj_deriv(a) - k.conj_deriv(b)).abs();
                assert!(lhs <= (a - b).abs() + 1e-12, "{k} at ({a}, {b})");
            }
        }
    }

    #[test]
    fn kernel_names_round_trip() {
        for k in Kernel::ALL {
            assert_eq!(k.name().parse::<Kernel>().unwrap(), k);
        }
        assert!("cos".parse::<Kernel>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        // h(t) + h*(s) >= s t for every pair (Fenchel-Young inequality)
        #[test]
        fn fenchel_young_inequality(t in -0.99f64..0.99, s in -100.0f64..100.0) {
            for k in Kernel::ALL {
                prop_assert!(k.eval(t) + k.conj(s) >= s * t - 1e-10);
            }
        }

        // conjugates are even
        #[test]
        fn conjugate_is_even(s in -100.0f64..100.0) {
            for k in Kernel::ALL {
                prop_assert!((k.conj(s) - k.conj(-s)).abs() <= 1e-12 * (1.0 + k.conj(s).abs()));
            }
        }
    }
}
