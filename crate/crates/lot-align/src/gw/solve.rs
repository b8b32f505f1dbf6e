//! The GW outer loop and the two derived solvers: class-labeled sample
//! alignment and the feature-index coupling.

use super::{gw_objective_matrix, FeaturePlan, GwConfig, GwProblem};
use crate::error::{Error, Result};
use crate::numkit::{pairwise_sq_dist, uniform_histogram, DenseMatrix, Histogram, LabelVector};
use crate::ot::{class_mask, entropy_matrix, marginal_residual, sinkhorn, SolveInfo, TransportPlan};
use crate::proto::EmbeddingBatch;

/// Which modality supplies the rows of the class-wise plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Rows are fundus samples, columns are OCT samples.
    FundusToOct,
    /// Rows are OCT samples, columns are fundus samples; returned as the
    /// transpose of the fundus-to-OCT solve.
    OctToFundus,
}

/// Outcome of [`entropic_gw`]: the plan, the entropic objective of every
/// outer iterate (initial coupling first), and the objective of the
/// returned plan. The returned plan is the best iterate seen, so
/// `objective <= trace[0]` always holds.
#[derive(Debug, Clone)]
pub struct GwSolution {
    pub plan: TransportPlan,
    pub objective: f64,
    pub trace: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
}

/// Entropic GW: alternate between the linearized pseudo-cost at the current
/// plan and a masked entropic OT solve, starting from the independent
/// coupling `mu nu^T` (masked and renormalized per class block when labels
/// are present). Distances are jointly normalized by their largest entry,
/// so `config.epsilon` has the same meaning across problems; the trace is
/// reported on that normalized scale.
pub fn entropic_gw(problem: &GwProblem, config: &GwConfig) -> Result<GwSolution> {
    config.validate()?;
    let mask = problem
        .labels
        .as_ref()
        .map(|(la, lb)| class_mask(la, lb))
        .transpose()?;

    let scale = problem.dist_f.max_abs().max(problem.dist_o.max_abs());
    let (a, b) = if scale > 0.0 {
        (
            problem.dist_f.scale(1.0 / scale),
            problem.dist_o.scale(1.0 / scale),
        )
    } else {
        (problem.dist_f.clone(), problem.dist_o.clone())
    };

    let mut current = initial_coupling(&problem.mu, &problem.nu, problem.labels.as_ref())?;
    let inner_cfg = config.inner_solver();
    let eps = config.epsilon;

    let first = entropic_objective(&a, &b, &current, eps)?;
    let mut trace = vec![first];
    let mut best_value = first;
    let mut best = current.clone();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..config.outer_iters {
        let cost = linearized_cost(&a, &b, &current);
        let step = sinkhorn(&cost, &problem.mu, &problem.nu, &inner_cfg, mask.as_ref())?;
        let next = step.matrix().clone();
        let change = next.l1_distance(&current);
        current = next;
        iterations += 1;

        let value = entropic_objective(&a, &b, &current, eps)?;
        trace.push(value);
        if value < best_value {
            best_value = value;
            best = current.clone();
        }
        if change < config.convergence_tol {
            converged = true;
            break;
        }
    }

    let residual = marginal_residual(&best, &problem.mu, &problem.nu);
    let plan = TransportPlan::from_solver(
        best,
        problem.mu.clone(),
        problem.nu.clone(),
        mask.map(|m| m.allowed().clone()),
        SolveInfo {
            epsilon: eps,
            iterations,
            residual,
            converged,
        },
    );
    Ok(GwSolution {
        plan,
        objective: best_value,
        trace,
        outer_iterations: iterations,
        converged,
    })
}

/// Independent coupling `mu nu^T`; with labels, each class block is
/// renormalized by its class mass so the coupling stays feasible inside the
/// labeled polytope.
fn initial_coupling(
    mu: &Histogram,
    nu: &Histogram,
    labels: Option<&(LabelVector, LabelVector)>,
) -> Result<DenseMatrix> {
    let (n, m) = (mu.len(), nu.len());
    let mut t = DenseMatrix::zeros(n, m);
    match labels {
        None => {
            for i in 0..n {
                for j in 0..m {
                    t[(i, j)] = mu[i] * nu[j];
                }
            }
        }
        Some((la, lb)) => {
            let classes = la.num_classes();
            let mut mass = vec![0.0; classes];
            for (j, &l) in lb.labels().iter().enumerate() {
                mass[l] += nu[j];
            }
            for (i, &li) in la.labels().iter().enumerate() {
                if mass[li] <= 0.0 {
                    if mu[i] > 0.0 {
                        return Err(Error::InfeasibleMask(format!(
                            "row {i} (class {li}) has no admissible partner"
                        )));
                    }
                    continue;
                }
                for (j, &lj) in lb.labels().iter().enumerate() {
                    if li == lj {
                        t[(i, j)] = mu[i] * nu[j] / mass[li];
                    }
                }
            }
        }
    }
    Ok(t)
}

fn entropic_objective(a: &DenseMatrix, b: &DenseMatrix, t: &DenseMatrix, eps: f64) -> Result<f64> {
    Ok(gw_objective_matrix(a, b, t) - eps * entropy_matrix(t)?)
}

/// Pseudo-cost `L(A, B) (x) T`: `cost_ij = (A.A p)_i + (B.B q)_j - 2 (A T B)_ij`
/// with `p, q` the marginals of the current plan.
fn linearized_cost(a: &DenseMatrix, b: &DenseMatrix, t: &DenseMatrix) -> DenseMatrix {
    let p = t.row_sums();
    let q = t.col_sums();
    let n = a.rows();
    let m = b.rows();
    let ca: Vec<f64> = (0..n)
        .map(|i| a.row(i).iter().zip(&p).map(|(&v, &w)| v * v * w).sum())
        .collect();
    let cb: Vec<f64> = (0..m)
        .map(|j| b.row(j).iter().zip(&q).map(|(&v, &w)| v * v * w).sum())
        .collect();
    let cross = a.matmul(t).matmul(b);
    let mut cost = DenseMatrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            cost[(i, j)] = ca[i] + cb[j] - 2.0 * cross[(i, j)];
        }
    }
    cost
}

/// Class-wise plan for a paired batch. Embedding rows are L2-normalized
/// before the distance computation so the alignment geometry matches the
/// cosine training losses; marginals are uniform and the class mask comes
/// from the shared labels.
pub fn labeled_gw(
    embeds: &EmbeddingBatch,
    direction: Direction,
    config: &GwConfig,
) -> Result<TransportPlan> {
    if embeds.is_empty() {
        return Err(Error::EmptyInput("labeled_gw batch"));
    }
    let e_f = embeds.e_f().l2_normalized_rows();
    let e_o = embeds.e_o().l2_normalized_rows();
    let dist_f = pairwise_sq_dist(&e_f)?;
    let dist_o = pairwise_sq_dist(&e_o)?;
    let n = embeds.len();
    let problem = GwProblem::new(
        dist_f,
        dist_o,
        uniform_histogram(n)?,
        uniform_histogram(n)?,
        Some((embeds.labels().clone(), embeds.labels().clone())),
    )?;
    let solution = entropic_gw(&problem, config)?;
    Ok(match direction {
        Direction::FundusToOct => solution.plan,
        Direction::OctToFundus => solution.plan.transposed(),
    })
}

/// Feature-index coupling given a fixed OCT-to-fundus sample plan.
///
/// Raw embedding coordinates are compared directly: with samples coupled by
/// `t_c_of`, the cost between OCT feature `l` and fundus feature `k` is
/// `M[l][k] = sum_{j,i} t_c_of[j][i] (e_o[j][l] - e_f[i][k])^2`, and the
/// coupling is one entropic OT solve over uniform feature marginals.
/// Embedding rows are L2-normalized first, matching [`labeled_gw`].
pub fn feature_plan(
    embeds: &EmbeddingBatch,
    t_c_of: &TransportPlan,
    config: &GwConfig,
) -> Result<FeaturePlan> {
    let n = embeds.len();
    if t_c_of.rows() != n || t_c_of.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "sample plan {}x{} does not match batch of {n}",
            t_c_of.rows(),
            t_c_of.cols()
        )));
    }
    config.validate()?;
    let e_f = embeds.e_f().l2_normalized_rows();
    let e_o = embeds.e_o().l2_normalized_rows();
    let (d_f, d_o) = (e_f.cols(), e_o.cols());
    let w = t_c_of.matrix(); // rows: OCT samples, cols: fundus samples
    let r = w.row_sums();
    let c = w.col_sums();

    let mut cost = DenseMatrix::zeros(d_o, d_f);
    // sum_j r_j e_o[j][l]^2  and  sum_i c_i e_f[i][k]^2
    let mut co = vec![0.0; d_o];
    for (j, &weight) in r.iter().enumerate() {
        for (l, &v) in e_o.row(j).iter().enumerate() {
            co[l] += weight * v * v;
        }
    }
    let mut cf = vec![0.0; d_f];
    for (i, &weight) in c.iter().enumerate() {
        for (k, &v) in e_f.row(i).iter().enumerate() {
            cf[k] += weight * v * v;
        }
    }
    let cross = e_o.transposed().matmul(w).matmul(&e_f);
    for l in 0..d_o {
        for k in 0..d_f {
            cost[(l, k)] = co[l] + cf[k] - 2.0 * cross[(l, k)];
        }
    }

    let solver = crate::ot::SinkhornConfig {
        epsilon: config.epsilon,
        max_iters: config.inner.max_iters,
        marginal_tol: config.inner.marginal_tol,
        normalize_cost: true,
    };
    let plan = sinkhorn(
        &cost,
        &uniform_histogram(d_o)?,
        &uniform_histogram(d_f)?,
        &solver,
        None,
    )?;
    Ok(FeaturePlan::from_plan(plan))
}
