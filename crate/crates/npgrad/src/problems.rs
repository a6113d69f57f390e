//! Benchmark objectives with exact first- and second-order oracles.
//!
//! Three built-in families: norm powers f = (c/p)·‖x‖^p, the logistic loss
//! ln(1+exp(−aᵀx)), and randomly generated phase retrieval. A closure-backed
//! constructor covers bespoke test objectives. Oracles are pure, immutable
//! after construction, and callable concurrently.

use std::path::Path;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vecmath;

/// Known minimizer of an objective together with its value.
#[derive(Clone, Debug)]
pub struct Optimum {
    pub x: Vec<f64>,
    pub f: f64,
}

type EvalFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type HessVecFn = Box<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

pub(crate) enum Oracle {
    PowerNorm {
        p: f64,
        coeff: f64,
    },
    Logistic {
        a: Vec<f64>,
    },
    PhaseRetrieval {
        data: Arc<PhaseRetrievalData>,
    },
    Custom {
        eval: EvalFn,
        grad: GradFn,
        hess: Option<HessVecFn>,
    },
}

/// An objective with exact gradient and, where supported, Hessian-vector
/// oracles, plus the capability metadata consumed by the solver and the
/// smoothness certifier.
pub struct Problem {
    dim: usize,
    convex: bool,
    optimum: Option<Optimum>,
    pub(crate) oracle: Oracle,
}

impl Problem {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn convex(&self) -> bool {
        self.convex
    }

    pub fn optimum(&self) -> Option<&Optimum> {
        self.optimum.as_ref()
    }

    pub fn has_hessian(&self) -> bool {
        match &self.oracle {
            Oracle::Custom { hess, .. } => hess.is_some(),
            _ => true,
        }
    }

    /// CLI-facing family name.
    pub fn name(&self) -> &'static str {
        match &self.oracle {
            Oracle::PowerNorm { .. } => "power-norm",
            Oracle::Logistic { .. } => "logistic",
            Oracle::PhaseRetrieval { .. } => "phase-retrieval",
            Oracle::Custom { .. } => "custom",
        }
    }

    /// Objective built from user closures. Starts nonconvex, without a known
    /// optimum or a second-order oracle; use the `with_*` builders to add
    /// metadata. Intended for test objectives outside the built-in catalog.
    pub fn custom<E, G>(dim: usize, eval: E, grad: G) -> Self
    where
        E: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Problem {
            dim,
            convex: false,
            optimum: None,
            oracle: Oracle::Custom {
                eval: Box::new(eval),
                grad: Box::new(grad),
                hess: None,
            },
        }
    }

    /// Attach a Hessian-vector oracle to a custom problem.
    pub fn with_hess_vec<H>(mut self, hess: H) -> Self
    where
        H: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        match &mut self.oracle {
            Oracle::Custom { hess: slot, .. } => *slot = Some(Box::new(hess)),
            _ => unreachable!("builders only apply to custom problems"),
        }
        self
    }

    pub fn with_convexity(mut self, convex: bool) -> Self {
        self.convex = convex;
        self
    }

    pub fn with_optimum(mut self, x: Vec<f64>, f: f64) -> Self {
        self.optimum = Some(Optimum { x, f });
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.oracle {
            Oracle::PowerNorm { p, coeff } => {
                let r = vecmath::norm(x);
                coeff * r.powf(*p) / p
            }
            Oracle::Logistic { a } => logistic_value(vecmath::dot(a, x)),
            Oracle::PhaseRetrieval { data } => data.eval(x),
            Oracle::Custom { eval, .. } => eval(x),
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        match &self.oracle {
            Oracle::PowerNorm { p, coeff } => {
                let s = coeff * vecmath::norm(x).powf(p - 2.0);
                x.iter().map(|&xi| s * xi).collect()
            }
            Oracle::Logistic { a } => {
                let s = sigma_neg(vecmath::dot(a, x));
                a.iter().map(|&ai| -s * ai).collect()
            }
            Oracle::PhaseRetrieval { data } => data.eval_grad(x).1,
            Oracle::Custom { grad, .. } => grad(x),
        }
    }

    /// Value and gradient in one pass. Same arithmetic as the separate
    /// oracles; phase retrieval shares its measurement pass, which halves
    /// the per-iteration cost in the solver.
    pub fn eval_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        match &self.oracle {
            Oracle::Logistic { a } => {
                let u = vecmath::dot(a, x);
                let s = sigma_neg(u);
                (logistic_value(u), a.iter().map(|&ai| -s * ai).collect())
            }
            Oracle::PhaseRetrieval { data } => data.eval_grad(x),
            _ => (self.eval(x), self.grad(x)),
        }
    }

    pub fn hess_vec(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(v.len(), self.dim);
        match &self.oracle {
            Oracle::PowerNorm { p, coeff } => {
                let r = vecmath::norm(x);
                let radial = coeff * r.powf(p - 2.0);
                let cross = coeff * (p - 2.0) * r.powf(p - 4.0) * vecmath::dot(x, v);
                Ok(x.iter()
                    .zip(v)
                    .map(|(&xi, &vi)| radial * vi + cross * xi)
                    .collect())
            }
            Oracle::Logistic { a } => {
                let w = sigma_product(vecmath::dot(a, x)) * vecmath::dot(a, v);
                Ok(a.iter().map(|&ai| w * ai).collect())
            }
            Oracle::PhaseRetrieval { data } => Ok(data.hess_vec(x, v)),
            Oracle::Custom { hess, .. } => match hess {
                Some(h) => Ok(h(x, v)),
                None => Err(Error::CapabilityMissing(
                    "Hessian-vector oracle not provided for this problem",
                )),
            },
        }
    }
}

/// ln(1 + exp(−u)) without overflow on either tail.
fn logistic_value(u: f64) -> f64 {
    if u >= 0.0 {
        (-u).exp().ln_1p()
    } else {
        -u + u.exp().ln_1p()
    }
}

/// sigma(−u) = 1/(1+exp(u)), the gradient weight of the logistic loss.
fn sigma_neg(u: f64) -> f64 {
    if u >= 0.0 {
        let t = (-u).exp();
        t / (1.0 + t)
    } else {
        1.0 / (1.0 + u.exp())
    }
}

/// sigma(u)·sigma(−u), the curvature weight. Evaluated from exp(−|u|)/
/// (1+exp(−|u|))² so neither factor underflows to an exact zero before
/// the other is applied.
fn sigma_product(u: f64) -> f64 {
    let t = (-u.abs()).exp();
    let d = 1.0 + t;
    t / (d * d)
}

/// f(x) = coeff·‖x‖^p/p with the global minimum (0, 0); convex for p ≥ 4.
pub fn make_power_norm(n: usize, p: f64, coeff: f64) -> Result<Problem> {
    if n == 0 {
        return Err(Error::InvalidParam("power-norm dimension must be positive".into()));
    }
    if !p.is_finite() || p < 4.0 {
        return Err(Error::InvalidParam(format!(
            "power-norm exponent must satisfy p >= 4, got {p}"
        )));
    }
    if !coeff.is_finite() || coeff <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "power-norm coefficient must be positive, got {coeff}"
        )));
    }
    Ok(Problem {
        dim: n,
        convex: true,
        optimum: Some(Optimum {
            x: vec![0.0; n],
            f: 0.0,
        }),
        oracle: Oracle::PowerNorm { p, coeff },
    })
}

/// f(x) = ln(1+exp(−aᵀx)). Convex; the infimum 0 is not attained, so no
/// optimum is recorded.
pub fn make_logistic(a: Vec<f64>) -> Result<Problem> {
    if a.is_empty() || a.iter().all(|&ai| ai == 0.0) {
        return Err(Error::InvalidParam(
            "logistic data vector must be nonzero".into(),
        ));
    }
    Ok(Problem {
        dim: a.len(),
        convex: true,
        optimum: None,
        oracle: Oracle::Logistic { a },
    })
}

/// Random phase-retrieval instance f(x) = (1/2m)·Σ (yᵢ − (aᵢᵀx)²)².
///
/// Sensing rows aᵢ and the ground truth z have i.i.d. normal(0, sensing_var)
/// entries, the start point x0 has normal(init_mean, sensing_var) entries,
/// and yᵢ = (aᵢᵀz)² + normal(0, noise_var) noise. Everything is drawn from
/// one seeded stream (see [`PhaseRetrievalData`] for the exact procedure),
/// so a given seed reproduces the instance bit-for-bit.
pub fn make_phase_retrieval(
    n: usize,
    m: usize,
    seed: u64,
    sensing_var: f64,
    init_mean: f64,
    noise_var: f64,
) -> Result<(Problem, Arc<PhaseRetrievalData>, Vec<f64>)> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidParam(
            "phase retrieval needs n >= 1 and m >= 1".into(),
        ));
    }
    if !(sensing_var >= 0.0) || !(noise_var >= 0.0) || !init_mean.is_finite() {
        return Err(Error::InvalidParam(
            "phase-retrieval variances must be nonnegative and finite".into(),
        ));
    }
    let data = Arc::new(PhaseRetrievalData::generate(
        n,
        m,
        seed,
        sensing_var,
        init_mean,
        noise_var,
    ));
    let x0 = data.x0.clone();
    let prob = Problem {
        dim: n,
        convex: false,
        optimum: None,
        oracle: Oracle::PhaseRetrieval {
            data: Arc::clone(&data),
        },
    };
    Ok((prob, data, x0))
}

/// Generated phase-retrieval instance: sensing matrix (row-major), noisy
/// measurements, ground truth, start point, and the generation parameters.
///
/// Generation procedure, fixed so that traces reproduce across machines:
/// a ChaCha stream with 8 rounds is seeded from the 64-bit seed, and each
/// normal draw consumes exactly two 64-bit words via the Box-Muller cosine
/// branch (see [`standard_normal`] in this module). Draw order: the m·n
/// sensing entries row by row, then z, then x0, then the m noise terms in
/// measurement order.
pub struct PhaseRetrievalData {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub sensing_var: f64,
    pub init_mean: f64,
    pub noise_var: f64,
    /// m×n sensing matrix, row-major.
    pub a: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub x0: Vec<f64>,
}

/// One standard-normal draw. Consumes exactly two raw 64-bit words: the top
/// 53 bits of the first give u1 in (0,1], of the second u2 in [0,1); the
/// result is the Box-Muller cosine branch sqrt(−2 ln u1)·cos(2π u2). Using
/// a fixed word budget per draw (no rejection, no cached sine branch) keeps
/// generated instances bit-identical across platforms and versions.
pub(crate) fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = (((rng.next_u64() >> 11) + 1) as f64) * 2f64.powi(-53);
    let u2 = ((rng.next_u64() >> 11) as f64) * 2f64.powi(-53);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

impl PhaseRetrievalData {
    fn generate(
        n: usize,
        m: usize,
        seed: u64,
        sensing_var: f64,
        init_mean: f64,
        noise_var: f64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sensing_sd = sensing_var.sqrt();
        let noise_sd = noise_var.sqrt();
        let a: Vec<f64> = (0..m * n)
            .map(|_| sensing_sd * standard_normal(&mut rng))
            .collect();
        let z: Vec<f64> = (0..n)
            .map(|_| sensing_sd * standard_normal(&mut rng))
            .collect();
        let x0: Vec<f64> = (0..n)
            .map(|_| init_mean + sensing_sd * standard_normal(&mut rng))
            .collect();
        let y: Vec<f64> = a
            .chunks_exact(n)
            .map(|row| {
                let u = vecmath::dot(row, &z);
                u * u + noise_sd * standard_normal(&mut rng)
            })
            .collect();
        PhaseRetrievalData {
            n,
            m,
            seed,
            sensing_var,
            init_mean,
            noise_var,
            a,
            y,
            z,
            x0,
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (row, &yi) in self.a.chunks_exact(self.n).zip(&self.y) {
            let u = vecmath::dot(row, x);
            let d = u * u - yi;
            acc += d * d;
        }
        acc / (2.0 * self.m as f64)
    }

    fn eval_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let scale = 2.0 / self.m as f64;
        let mut acc = 0.0;
        let mut g = vec![0.0; self.n];
        for (row, &yi) in self.a.chunks_exact(self.n).zip(&self.y) {
            let u = vecmath::dot(row, x);
            let d = u * u - yi;
            acc += d * d;
            let w = scale * d * u;
            for (gj, &aj) in g.iter_mut().zip(row) {
                *gj += w * aj;
            }
        }
        (acc / (2.0 * self.m as f64), g)
    }

    fn hess_vec(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let scale = 2.0 / self.m as f64;
        let mut out = vec![0.0; self.n];
        for (row, &yi) in self.a.chunks_exact(self.n).zip(&self.y) {
            let u = vecmath::dot(row, x);
            let t = vecmath::dot(row, v);
            let w = scale * (3.0 * u * u - yi) * t;
            for (oj, &aj) in out.iter_mut().zip(row) {
                *oj += w * aj;
            }
        }
        out
    }

    /// Dump the instance as CSV: `name,value` parameter rows, then one `A`
    /// row per sensing vector, then one row per entry of y, z, and x0.
    /// Written to a sibling temp file and renamed into place.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("seed,{}\n", self.seed));
        out.push_str(&format!("n,{}\n", self.n));
        out.push_str(&format!("m,{}\n", self.m));
        out.push_str(&format!("sensing_var,{:.16e}\n", self.sensing_var));
        out.push_str(&format!("init_mean,{:.16e}\n", self.init_mean));
        out.push_str(&format!("noise_var,{:.16e}\n", self.noise_var));
        for row in self.a.chunks_exact(self.n) {
            out.push('A');
            for v in row {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push('\n');
        }
        for v in &self.y {
            out.push_str(&format!("y,{v:.16e}\n"));
        }
        for v in &self.z {
            out.push_str(&format!("z,{v:.16e}\n"));
        }
        for v in &self.x0 {
            out.push_str(&format!("x0,{v:.16e}\n"));
        }
        crate::ioutil::write_atomic(path, out.as_bytes())
    }
}
