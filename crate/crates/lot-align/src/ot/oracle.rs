//! Exact small-instance oracle by permutation enumeration.
//!
//! With uniform marginals the linear OT problem admits an optimal plan that
//! is a permutation matrix scaled by `1/n`, so instances up to n = 8 can be
//! solved exactly and used to cross-check the entropic solver.

use super::{ClassMask, SolveInfo, TransportPlan};
use crate::error::{Error, Result};
use crate::numkit::{uniform_histogram, DenseMatrix};

const MAX_ORACLE_SIZE: usize = 8;

/// Exact OT plan for a square cost with uniform marginals, found by
/// enumerating permutations in lexicographic order. Ties are broken by the
/// lexicographically smallest permutation. A mask restricts admissible
/// assignments.
pub fn brute_force_ot(cost: &DenseMatrix, mask: Option<&ClassMask>) -> Result<TransportPlan> {
    let n = cost.rows();
    if n == 0 {
        return Err(Error::EmptyInput("brute_force_ot"));
    }
    if cost.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "oracle requires a square cost, got {}x{}",
            n,
            cost.cols()
        )));
    }
    if n > MAX_ORACLE_SIZE {
        return Err(Error::OracleSizeLimit(n));
    }
    if let Some(m) = mask {
        if m.rows() != n || m.cols() != n {
            return Err(Error::DimensionMismatch("mask shape".into()));
        }
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut assignment = vec![usize::MAX; n];
    let mut used = vec![false; n];
    search(cost, mask, 0, 0.0, &mut assignment, &mut used, &mut best);

    let (_, perm) = best.ok_or_else(|| {
        Error::InfeasibleMask("no permutation respects the class mask".into())
    })?;
    let mut matrix = DenseMatrix::zeros(n, n);
    for (i, &j) in perm.iter().enumerate() {
        matrix[(i, j)] = 1.0 / n as f64;
    }
    let marginal = uniform_histogram(n)?;
    Ok(TransportPlan::from_solver(
        matrix,
        marginal.clone(),
        marginal,
        mask.map(|m| m.allowed().clone()),
        SolveInfo {
            epsilon: 0.0,
            iterations: 0,
            residual: 0.0,
            converged: true,
        },
    ))
}

/// Depth-first over rows, trying columns in increasing order. The first
/// strict improvement wins, so among equal-cost permutations the
/// lexicographically smallest is kept.
fn search(
    cost: &DenseMatrix,
    mask: Option<&ClassMask>,
    row: usize,
    partial: f64,
    assignment: &mut [usize],
    used: &mut [bool],
    best: &mut Option<(f64, Vec<usize>)>,
) {
    let n = cost.rows();
    if row == n {
        if best.as_ref().is_none_or(|(c, _)| partial < *c) {
            *best = Some((partial, assignment.to_vec()));
        }
        return;
    }
    for j in 0..n {
        if used[j] {
            continue;
        }
        if let Some(m) = mask {
            if !m.allowed()[(row, j)] {
                continue;
            }
        }
        used[j] = true;
        assignment[row] = j;
        search(cost, mask, row + 1, partial + cost[(row, j)], assignment, used, best);
        used[j] = false;
    }
    assignment[row] = usize::MAX;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::LabelVector;
    use crate::ot::class_mask;

    #[test]
    fn identity_favoring_cost_picks_identity() {
        let mut cost = DenseMatrix::constant(3, 3, 1.0);
        for i in 0..3 {
            cost[(i, i)] = 0.0;
        }
        let plan = brute_force_ot(&cost, None).unwrap();
        for i in 0..3 {
            assert!((plan.matrix()[(i, i)] - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn swap_cost_keeps_diagonal() {
        let cost = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let plan = brute_force_ot(&cost, None).unwrap();
        assert_eq!(plan.matrix()[(0, 0)], 0.5);
        assert_eq!(plan.matrix()[(1, 1)], 0.5);
        assert_eq!(plan.matrix()[(0, 1)], 0.0);
    }

    #[test]
    fn equal_costs_break_ties_lexicographically() {
        let cost = DenseMatrix::constant(3, 3, 0.7);
        let plan = brute_force_ot(&cost, None).unwrap();
        for i in 0..3 {
            assert!(plan.matrix()[(i, i)] > 0.0, "expected identity permutation");
        }
    }

    #[test]
    fn size_limit_enforced() {
        let cost = DenseMatrix::zeros(9, 9);
        assert!(matches!(
            brute_force_ot(&cost, None),
            Err(Error::OracleSizeLimit(9))
        ));
    }

    #[test]
    fn mask_restricts_assignments() {
        let labels_a = LabelVector::new(vec![0, 1], 2).unwrap();
        let labels_b = LabelVector::new(vec![1, 0], 2).unwrap();
        let mask = class_mask(&labels_a, &labels_b).unwrap();
        // diagonal is cheap but masked out; the anti-diagonal must be chosen
        let cost = DenseMatrix::from_rows(&[vec![0.0, 5.0], vec![5.0, 0.0]]).unwrap();
        let plan = brute_force_ot(&cost, Some(&mask)).unwrap();
        assert_eq!(plan.matrix()[(0, 1)], 0.5);
        assert_eq!(plan.matrix()[(1, 0)], 0.5);
    }

    #[test]
    fn fully_masked_is_infeasible() {
        let labels_a = LabelVector::new(vec![0, 0], 2).unwrap();
        let labels_b = LabelVector::new(vec![1, 1], 2).unwrap();
        let mask = class_mask(&labels_a, &labels_b).unwrap();
        let cost = DenseMatrix::zeros(2, 2);
        assert!(matches!(
            brute_force_ot(&cost, Some(&mask)),
            Err(Error::InfeasibleMask(_))
        ));
    }
}
