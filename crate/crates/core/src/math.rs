//! Small dense-vector helpers on top of `libm`.

use alloc::vec::Vec;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

/// Logistic function, evaluated on the side that cannot overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Returns `v / |v|`, or `None` for a zero (or non-finite) vector.
pub fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    if n > 0.0 && n.is_finite() {
        Some(v.iter().map(|x| x / n).collect())
    } else {
        None
    }
}

/// Cosine similarity of two vectors; `None` when either is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = norm(a);
    let nb = norm(b);
    if na > 0.0 && nb > 0.0 {
        Some(dot(a, b) / (na * nb))
    } else {
        None
    }
}

/// Cosine of two unit vectors mapped to `[0, 1]`.
#[inline]
pub fn unit_similarity(a: &[f64], b: &[f64]) -> f64 {
    (0.5 * (1.0 + dot(a, b))).clamp(0.0, 1.0)
}

/// Binary cross-entropy of a probability against a 0/1 target.
#[inline]
pub fn bce(target: f64, p: f64) -> f64 {
    -(target * ln(p) + (1.0 - target) * ln(1.0 - p))
}

/// Derivative of [`bce`] with respect to `p`.
#[inline]
pub fn bce_grad(target: f64, p: f64) -> f64 {
    (1.0 - target) / (1.0 - p) - target / p
}
