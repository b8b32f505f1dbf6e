//! Entropic linear optimal transport over the labeled polytope.
//!
//! The solver minimizes `<C, T> - eps * H(T)` over couplings `T` with row
//! sums `mu` and column sums `nu`, where `H(T) = -sum T_ij (log T_ij - 1)`.
//! A [`ClassMask`] restricts the polytope so mass only moves between
//! equally-labeled samples; masked entries are held at exactly zero by
//! skipping them in the log-domain kernel (never by writing infinities into
//! the cost).

mod oracle;
mod sinkhorn;

pub use oracle::brute_force_ot;
pub use sinkhorn::sinkhorn;

use crate::error::{Error, Result};
use crate::numkit::{BoolMatrix, DenseMatrix, Histogram, LabelVector};

/// Solver parameters for entropic OT.
///
/// `epsilon` is interpreted relative to the cost after normalization by its
/// largest absolute entry (see `normalize_cost`), which makes one epsilon
/// setting transferable across datasets.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SinkhornConfig {
    /// Entropy regularization strength.
    pub epsilon: f64,
    /// Iteration budget at the target epsilon.
    pub max_iters: usize,
    /// Convergence threshold on the L-infinity marginal residual.
    pub marginal_tol: f64,
    /// Divide the cost by its largest absolute entry before solving.
    /// Disable when comparing solves across sub-problems that must share a
    /// common epsilon scale.
    pub normalize_cost: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            max_iters: 1000,
            marginal_tol: 1e-9,
            normalize_cost: true,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        if !self.marginal_tol.is_finite() || self.marginal_tol <= 0.0 {
            return Err(Error::InvalidConfig("marginal_tol must be positive".into()));
        }
        Ok(())
    }
}

/// What the solver achieved: configured epsilon, iterations spent, final
/// L-infinity marginal residual, and whether it met the tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveInfo {
    pub epsilon: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// A nonnegative coupling with its marginals, the optional class-support
/// mask it was solved under, and the solve metadata.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    matrix: DenseMatrix,
    mu: Histogram,
    nu: Histogram,
    mask: Option<BoolMatrix>,
    info: SolveInfo,
}

impl TransportPlan {
    /// Wrap an existing coupling, validating nonnegativity, mask support,
    /// and recording the achieved marginal residual.
    pub fn from_parts(
        matrix: DenseMatrix,
        mu: Histogram,
        nu: Histogram,
        mask: Option<BoolMatrix>,
        epsilon: f64,
    ) -> Result<Self> {
        if matrix.rows() != mu.len() || matrix.cols() != nu.len() {
            return Err(Error::DimensionMismatch(format!(
                "plan {}x{} does not match marginals {} / {}",
                matrix.rows(),
                matrix.cols(),
                mu.len(),
                nu.len()
            )));
        }
        if matrix.data().iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidInput(
                "transport plan entries must be finite and nonnegative".into(),
            ));
        }
        if let Some(m) = &mask {
            if m.rows() != matrix.rows() || m.cols() != matrix.cols() {
                return Err(Error::DimensionMismatch("mask shape".into()));
            }
            for i in 0..matrix.rows() {
                for j in 0..matrix.cols() {
                    if !m[(i, j)] && matrix[(i, j)] != 0.0 {
                        return Err(Error::InvalidInput(format!(
                            "plan carries mass at masked entry ({i}, {j})"
                        )));
                    }
                }
            }
        }
        let residual = marginal_residual(&matrix, &mu, &nu);
        Ok(Self {
            matrix,
            mu,
            nu,
            mask,
            info: SolveInfo {
                epsilon,
                iterations: 0,
                residual,
                converged: true,
            },
        })
    }

    pub(crate) fn from_solver(
        matrix: DenseMatrix,
        mu: Histogram,
        nu: Histogram,
        mask: Option<BoolMatrix>,
        info: SolveInfo,
    ) -> Self {
        Self {
            matrix,
            mu,
            nu,
            mask,
            info,
        }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn mu(&self) -> &Histogram {
        &self.mu
    }

    pub fn nu(&self) -> &Histogram {
        &self.nu
    }

    pub fn mask(&self) -> Option<&BoolMatrix> {
        self.mask.as_ref()
    }

    pub fn info(&self) -> &SolveInfo {
        &self.info
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    /// Transport cost `<C, T>` for a cost matrix of matching shape.
    pub fn transport_cost(&self, cost: &DenseMatrix) -> f64 {
        self.matrix.frobenius_dot(cost)
    }

    /// The reverse-direction plan: transposed coupling with swapped marginals.
    pub fn transposed(&self) -> TransportPlan {
        let mask = self.mask.as_ref().map(|m| {
            let mut t = BoolMatrix::new(m.cols(), m.rows(), false);
            for i in 0..m.rows() {
                for j in 0..m.cols() {
                    t[(j, i)] = m[(i, j)];
                }
            }
            t
        });
        TransportPlan {
            matrix: self.matrix.transposed(),
            mu: self.nu.clone(),
            nu: self.mu.clone(),
            mask,
            info: self.info,
        }
    }
}

/// L-infinity distance between the plan's marginals and the targets.
pub fn marginal_residual(matrix: &DenseMatrix, mu: &Histogram, nu: &Histogram) -> f64 {
    let row_res = matrix
        .row_sums()
        .iter()
        .zip(mu.weights())
        .fold(0.0_f64, |m, (&s, &w)| m.max((s - w).abs()));
    let col_res = matrix
        .col_sums()
        .iter()
        .zip(nu.weights())
        .fold(0.0_f64, |m, (&s, &w)| m.max((s - w).abs()));
    row_res.max(col_res)
}

/// Support restriction of the labeled polytope: entry (i, j) is admissible
/// iff the two samples carry the same class.
#[derive(Debug, Clone)]
pub struct ClassMask {
    allowed: BoolMatrix,
}

impl ClassMask {
    pub fn allowed(&self) -> &BoolMatrix {
        &self.allowed
    }

    pub fn rows(&self) -> usize {
        self.allowed.rows()
    }

    pub fn cols(&self) -> usize {
        self.allowed.cols()
    }
}

/// Build the class-support mask for a pair of label vectors.
pub fn class_mask(labels_a: &LabelVector, labels_b: &LabelVector) -> Result<ClassMask> {
    if labels_a.num_classes() != labels_b.num_classes() {
        return Err(Error::DimensionMismatch(format!(
            "label vectors disagree on class count: {} vs {}",
            labels_a.num_classes(),
            labels_b.num_classes()
        )));
    }
    let mut allowed = BoolMatrix::new(labels_a.len(), labels_b.len(), false);
    for (i, &la) in labels_a.labels().iter().enumerate() {
        for (j, &lb) in labels_b.labels().iter().enumerate() {
            allowed[(i, j)] = la == lb;
        }
    }
    Ok(ClassMask { allowed })
}

/// Check that every class carries the same marginal mass on both sides.
///
/// The labeled polytope is empty when some class holds more mass under `mu`
/// than under `nu`; this rejects such instances up front instead of letting
/// the solver run to its iteration cap.
pub fn validate_class_balance(
    mu: &Histogram,
    nu: &Histogram,
    labels_a: &LabelVector,
    labels_b: &LabelVector,
    tol: f64,
) -> Result<()> {
    if mu.len() != labels_a.len() || nu.len() != labels_b.len() {
        return Err(Error::DimensionMismatch(
            "marginals and labels disagree on length".into(),
        ));
    }
    if labels_a.num_classes() != labels_b.num_classes() {
        return Err(Error::DimensionMismatch(
            "label vectors disagree on class count".into(),
        ));
    }
    for c in 0..labels_a.num_classes() {
        let mass_a: f64 = labels_a
            .labels()
            .iter()
            .zip(mu.weights())
            .filter(|(&l, _)| l == c)
            .map(|(_, &w)| w)
            .sum();
        let mass_b: f64 = labels_b
            .labels()
            .iter()
            .zip(nu.weights())
            .filter(|(&l, _)| l == c)
            .map(|(_, &w)| w)
            .sum();
        let gap = (mass_a - mass_b).abs();
        if gap > tol {
            return Err(Error::ClassImbalance {
                class: c,
                mass_a,
                mass_b,
                gap,
                tol,
            });
        }
    }
    Ok(())
}

/// Entropy `H(T) = -sum_ij T_ij (log T_ij - 1)` with the convention
/// `0 log 0 = 0`.
pub fn entropy(plan: &TransportPlan) -> Result<f64> {
    entropy_matrix(plan.matrix())
}

/// [`entropy`] on a raw matrix.
pub fn entropy_matrix(matrix: &DenseMatrix) -> Result<f64> {
    let mut h = 0.0;
    for &t in matrix.data() {
        if t < 0.0 {
            return Err(Error::InvalidInput(
                "entropy requires nonnegative entries".into(),
            ));
        }
        if t > 0.0 {
            h -= t * (t.ln() - 1.0);
        }
    }
    Ok(h)
}
