//! Small dense-vector helpers used by the solver and certification code.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    let m = a.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if m.is_finite() && (1e-140..=1e140).contains(&m) {
        return dot(a, a).sqrt();
    }
    if m == 0.0 || m.is_infinite() {
        return m;
    }
    // rescale so squaring neither overflows nor flushes to zero
    let s: f64 = a
        .iter()
        .map(|&v| {
            let r = v / m;
            r * r
        })
        .sum();
    m * s.sqrt()
}

pub fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

pub fn is_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}
