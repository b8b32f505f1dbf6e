//! Entropic Gromov-Wasserstein alignment over the labeled polytope, the
//! feature-level coupling, and barycentric projection.
//!
//! GW compares intra-domain squared-distance structures `A` and `B` through
//! the quadratic objective
//!
//! `sum_{i,j,k,l} |A_ik - B_jl|^2 T_ij T_kl - eps * H(T)`,
//!
//! solved by alternating between the linearized pseudo-cost at the current
//! plan and a masked entropic OT solve. The feature coupling reuses the
//! converged sample plan to compare raw embedding coordinates across
//! modalities, which reduces to a single linear OT problem over feature
//! indices.

mod solve;

pub use solve::{entropic_gw, feature_plan, labeled_gw, Direction, GwSolution};

use crate::error::{Error, Result};
use crate::numkit::{DenseMatrix, Histogram, LabelVector};
use crate::ot::{validate_class_balance, SinkhornConfig, TransportPlan};

/// A GW instance: two intra-domain squared-distance matrices, marginals,
/// and optionally the label pair that restricts transport to class blocks.
#[derive(Debug, Clone)]
pub struct GwProblem {
    pub(crate) dist_f: DenseMatrix,
    pub(crate) dist_o: DenseMatrix,
    pub(crate) mu: Histogram,
    pub(crate) nu: Histogram,
    pub(crate) labels: Option<(LabelVector, LabelVector)>,
}

impl GwProblem {
    pub fn new(
        dist_f: DenseMatrix,
        dist_o: DenseMatrix,
        mu: Histogram,
        nu: Histogram,
        labels: Option<(LabelVector, LabelVector)>,
    ) -> Result<Self> {
        check_distance_matrix(&dist_f, "dist_f")?;
        check_distance_matrix(&dist_o, "dist_o")?;
        if dist_f.rows() != mu.len() || dist_o.rows() != nu.len() {
            return Err(Error::DimensionMismatch(
                "distance matrices do not match marginals".into(),
            ));
        }
        if let Some((la, lb)) = &labels {
            if la.len() != mu.len() || lb.len() != nu.len() {
                return Err(Error::DimensionMismatch(
                    "labels do not match marginals".into(),
                ));
            }
            validate_class_balance(&mu, &nu, la, lb, 1e-9)?;
        }
        Ok(Self {
            dist_f,
            dist_o,
            mu,
            nu,
            labels,
        })
    }
}

fn check_distance_matrix(d: &DenseMatrix, name: &str) -> Result<()> {
    if d.is_empty() {
        return Err(Error::EmptyInput("distance matrix"));
    }
    if d.rows() != d.cols() {
        return Err(Error::DimensionMismatch(format!("{name} must be square")));
    }
    if !d.all_finite() {
        return Err(Error::InvalidInput(format!("{name} has non-finite entries")));
    }
    for i in 0..d.rows() {
        if d[(i, i)].abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "{name} diagonal entry {i} is not zero"
            )));
        }
        for j in (i + 1)..d.cols() {
            if (d[(i, j)] - d[(j, i)]).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "{name} is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Outer-loop schedule for the GW solver. `epsilon` drives both the entropy
/// term and the inner linear solves; the inner config contributes its
/// iteration budget and marginal tolerance.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GwConfig {
    pub epsilon: f64,
    pub outer_iters: usize,
    pub inner: SinkhornConfig,
    /// Outer convergence threshold on the L1 plan change.
    pub convergence_tol: f64,
}

impl Default for GwConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            outer_iters: 50,
            inner: SinkhornConfig::default(),
            convergence_tol: 1e-7,
        }
    }
}

impl GwConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::InvalidConfig("gw epsilon must be positive".into()));
        }
        if self.outer_iters == 0 {
            return Err(Error::InvalidConfig("outer_iters must be positive".into()));
        }
        if !self.convergence_tol.is_finite() || self.convergence_tol <= 0.0 {
            return Err(Error::InvalidConfig(
                "convergence_tol must be positive".into(),
            ));
        }
        self.inner.validate()
    }

    pub(crate) fn inner_solver(&self) -> SinkhornConfig {
        SinkhornConfig {
            epsilon: self.epsilon,
            normalize_cost: false,
            ..self.inner
        }
    }
}

/// Coupling between the two modalities' feature dimensions, with uniform
/// marginals over feature indices.
#[derive(Debug, Clone)]
pub struct FeaturePlan {
    plan: TransportPlan,
}

impl FeaturePlan {
    pub(crate) fn from_plan(plan: TransportPlan) -> Self {
        Self { plan }
    }

    /// Uniform coupling; the fallback when no paired data exists to solve on.
    pub fn uniform(d_o: usize, d_f: usize) -> Result<Self> {
        let matrix = DenseMatrix::constant(d_o, d_f, 1.0 / (d_o * d_f) as f64);
        let plan = TransportPlan::from_parts(
            matrix,
            Histogram::uniform(d_o)?,
            Histogram::uniform(d_f)?,
            None,
            0.0,
        )?;
        Ok(Self { plan })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        self.plan.matrix()
    }

    pub fn plan(&self) -> &TransportPlan {
        &self.plan
    }

    /// OCT-side feature count (rows).
    pub fn d_o(&self) -> usize {
        self.plan.rows()
    }

    /// Fundus-side feature count (columns).
    pub fn d_f(&self) -> usize {
        self.plan.cols()
    }

    /// Column-normalized barycentric weights `w[l][k] = T_v[l][k] / sum_l' T_v[l'][k]`.
    pub fn projection_weights(&self) -> Result<DenseMatrix> {
        let t = self.matrix();
        let col_sums = t.col_sums();
        if let Some(k) = col_sums.iter().position(|&s| s <= 0.0) {
            return Err(Error::DegenerateFeatureCoupling(k));
        }
        let mut w = t.clone();
        for l in 0..t.rows() {
            for (k, v) in w.row_mut(l).iter_mut().enumerate() {
                *v /= col_sums[k];
            }
        }
        Ok(w)
    }
}

/// GW objective `sum_{i,j,k,l} |A_ik - B_jl|^2 T_ij T_kl` (no entropy term),
/// computed through the squared-loss decomposition
/// `p'(A.A)p + q'(B.B)q - 2 <A T B, T>` with `p, q` the plan marginals.
pub fn gw_objective(
    dist_f: &DenseMatrix,
    dist_o: &DenseMatrix,
    plan: &TransportPlan,
) -> Result<f64> {
    if dist_f.rows() != dist_f.cols() || dist_o.rows() != dist_o.cols() {
        return Err(Error::DimensionMismatch(
            "distance matrices must be square".into(),
        ));
    }
    if plan.rows() != dist_f.rows() || plan.cols() != dist_o.rows() {
        return Err(Error::DimensionMismatch(format!(
            "plan {}x{} does not match distance matrices {} / {}",
            plan.rows(),
            plan.cols(),
            dist_f.rows(),
            dist_o.rows()
        )));
    }
    Ok(gw_objective_matrix(dist_f, dist_o, plan.matrix()))
}

pub(crate) fn gw_objective_matrix(a: &DenseMatrix, b: &DenseMatrix, t: &DenseMatrix) -> f64 {
    let p = t.row_sums();
    let q = t.col_sums();
    let mut term1 = 0.0;
    for i in 0..a.rows() {
        for k in 0..a.cols() {
            term1 += a[(i, k)] * a[(i, k)] * p[i] * p[k];
        }
    }
    let mut term2 = 0.0;
    for j in 0..b.rows() {
        for l in 0..b.cols() {
            term2 += b[(j, l)] * b[(j, l)] * q[j] * q[l];
        }
    }
    let cross = a.matmul(t).matmul(b);
    term1 + term2 - 2.0 * cross.frobenius_dot(t)
}

/// Map OCT-space rows into fundus feature space through the feature plan:
/// `out[n][k] = sum_l w[l][k] e_o[n][l]` with column-normalized weights.
///
/// The literal unnormalized product is available as
/// [`barycentric_project_literal`]; it rescales every output column by the
/// feature mass `1/D_f`, which only rescales downstream linear layers.
pub fn barycentric_project(t_v: &FeaturePlan, e_o: &DenseMatrix) -> Result<DenseMatrix> {
    if e_o.cols() != t_v.d_o() {
        return Err(Error::DimensionMismatch(format!(
            "embeddings have {} features, plan expects {}",
            e_o.cols(),
            t_v.d_o()
        )));
    }
    let w = t_v.projection_weights()?;
    Ok(e_o.matmul(&w))
}

/// The literal product `e_o * T_v` without column normalization.
pub fn barycentric_project_literal(t_v: &FeaturePlan, e_o: &DenseMatrix) -> Result<DenseMatrix> {
    if e_o.cols() != t_v.d_o() {
        return Err(Error::DimensionMismatch(format!(
            "embeddings have {} features, plan expects {}",
            e_o.cols(),
            t_v.d_o()
        )));
    }
    Ok(e_o.matmul(t_v.matrix()))
}
