//! Shared numeric kernels: matrices, histograms, labels, stable
//! exponentials, pairwise distances, and seeded randomness.
//!
//! All operations here are pure functions on immutable inputs and are safe
//! to call concurrently; `SeededRng` is the one mutable object and is never
//! shared.

mod histogram;
mod labels;
mod matrix;
mod rng;

pub use histogram::Histogram;
pub use labels::LabelVector;
pub use matrix::{BoolMatrix, DenseMatrix};
pub use rng::SeededRng;

pub(crate) use matrix::dot;

use crate::error::{Error, Result};

/// Pairwise squared Euclidean distances between the rows of `x`.
///
/// The output is symmetric with an exactly zero diagonal; cancellation that
/// would produce a small negative value is clamped to zero.
pub fn pairwise_sq_dist(x: &DenseMatrix) -> Result<DenseMatrix> {
    if x.is_empty() {
        return Err(Error::EmptyInput("pairwise_sq_dist"));
    }
    let n = x.rows();
    let sq_norms: Vec<f64> = (0..n).map(|i| dot(x.row(i), x.row(i))).collect();
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for k in (i + 1)..n {
            let d = (sq_norms[i] + sq_norms[k] - 2.0 * dot(x.row(i), x.row(k))).max(0.0);
            out[(i, k)] = d;
            out[(k, i)] = d;
        }
    }
    Ok(out)
}

/// `log(sum_i exp(v_i))` computed with a max shift, so entries anywhere in
/// the finite `f64` range do not overflow. An all `-inf` input yields `-inf`.
pub fn logsumexp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyInput("logsumexp"));
    }
    let max = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    if !max.is_finite() {
        // all -inf, or at least one +inf / NaN; the max is the answer
        return Ok(max);
    }
    let sum: f64 = v.iter().map(|&x| (x - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Uniform histogram over `n` bins.
pub fn uniform_histogram(n: usize) -> Result<Histogram> {
    Histogram::uniform(n)
}
