//! Class-wise alignment machinery: match distributions over plan rows,
//! per-sample soft prototypes, stochastic match sampling, and the cosine
//! alignment loss.
//!
//! A converged class-wise plan row, normalized to sum to one, is the
//! distribution over opposite-modality matches for that sample. Its
//! expectation over the opposite embeddings is the sample's soft prototype:
//! a convex combination of same-class embeddings rather than a single
//! shared cluster center.

use crate::error::{Error, Result};
use crate::numkit::{DenseMatrix, LabelVector, SeededRng};
use crate::ot::TransportPlan;

/// Paired per-modality embeddings with shared labels.
#[derive(Debug, Clone)]
pub struct EmbeddingBatch {
    e_f: DenseMatrix,
    e_o: DenseMatrix,
    labels: LabelVector,
}

impl EmbeddingBatch {
    pub fn new(e_f: DenseMatrix, e_o: DenseMatrix, labels: LabelVector) -> Result<Self> {
        if e_f.rows() != e_o.rows() || e_f.rows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "batch rows disagree: fundus {}, oct {}, labels {}",
                e_f.rows(),
                e_o.rows(),
                labels.len()
            )));
        }
        Ok(Self { e_f, e_o, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn e_f(&self) -> &DenseMatrix {
        &self.e_f
    }

    pub fn e_o(&self) -> &DenseMatrix {
        &self.e_o
    }

    pub fn labels(&self) -> &LabelVector {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.labels.num_classes()
    }

    pub fn d_f(&self) -> usize {
        self.e_f.cols()
    }

    pub fn d_o(&self) -> usize {
        self.e_o.cols()
    }
}

/// Which modality's space a prototype lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Fundus,
    Oct,
}

/// Row-stochastic matrix of match probabilities `p(j|i)`.
#[derive(Debug, Clone)]
pub struct MatchDistribution {
    rows: DenseMatrix,
}

impl MatchDistribution {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.rows() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.rows.row(i)
    }
}

/// Normalize each plan row into a distribution over potential matches.
pub fn match_distribution(t_c: &TransportPlan) -> Result<MatchDistribution> {
    let m = t_c.matrix();
    let mut rows = m.clone();
    for i in 0..m.rows() {
        let total: f64 = m.row(i).iter().sum();
        if total <= 0.0 {
            return Err(Error::UnmatchedSample(i));
        }
        for v in rows.row_mut(i) {
            *v /= total;
        }
    }
    Ok(MatchDistribution { rows })
}

/// Per-sample soft prototypes, one per row of the batch.
#[derive(Debug, Clone)]
pub struct PrototypeSet {
    protos: DenseMatrix,
    modality: Modality,
}

impl PrototypeSet {
    pub fn new(protos: DenseMatrix, modality: Modality) -> Result<Self> {
        if !protos.all_finite() {
            return Err(Error::InvalidInput("prototypes must be finite".into()));
        }
        Ok(Self { protos, modality })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.protos
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn len(&self) -> usize {
        self.protos.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.protos.rows() == 0
    }
}

/// Expected opposite-modality embedding under the match distribution:
/// `protos[i] = sum_j p(j|i) e_other[j]`.
pub fn soft_prototypes(
    p: &MatchDistribution,
    e_other: &DenseMatrix,
    modality: Modality,
) -> Result<PrototypeSet> {
    if p.matrix().cols() != e_other.rows() {
        return Err(Error::DimensionMismatch(format!(
            "match distribution over {} samples, embeddings have {} rows",
            p.matrix().cols(),
            e_other.rows()
        )));
    }
    PrototypeSet::new(p.matrix().matmul(e_other), modality)
}

/// Draw one match index from row `i` of the distribution by inverse-CDF
/// sampling; deterministic given the generator state.
pub fn sample_match(p: &MatchDistribution, i: usize, rng: &mut SeededRng) -> Result<usize> {
    if i >= p.len() {
        return Err(Error::InvalidInput(format!(
            "sample index {i} out of range for {} rows",
            p.len()
        )));
    }
    let row = p.row(i);
    let u = rng.next_f64();
    let mut acc = 0.0;
    let mut last_positive = None;
    for (j, &w) in row.iter().enumerate() {
        if w > 0.0 {
            last_positive = Some(j);
        }
        acc += w;
        if u < acc {
            return Ok(j);
        }
    }
    // u landed in the float slack past the accumulated mass
    last_positive.ok_or(Error::UnmatchedSample(i))
}

/// Cosine and its gradient with respect to `p`, for one row pair. `None`
/// when either vector has zero norm.
pub(crate) fn cosine_row(p: &[f64], t: &[f64]) -> Option<(f64, Vec<f64>)> {
    let np = crate::numkit::dot(p, p).sqrt();
    let nt = crate::numkit::dot(t, t).sqrt();
    if np == 0.0 || nt == 0.0 {
        return None;
    }
    let cos = crate::numkit::dot(p, t) / (np * nt);
    // d cos / d p = t / (|p||t|) - cos * p / |p|^2
    let grad = p
        .iter()
        .zip(t)
        .map(|(&pi, &ti)| ti / (np * nt) - cos * pi / (np * np))
        .collect();
    Some((cos, grad))
}

/// Mean cosine alignment loss `1 - (1/N) sum_i cos(pred_i, target_i)` and
/// its gradient with respect to `pred`; the target is a constant.
///
/// The per-sample mean keeps the loss in `[0, 2]` regardless of batch size.
pub fn cosine_alignment_loss(
    pred: &DenseMatrix,
    target: &PrototypeSet,
) -> Result<(f64, DenseMatrix)> {
    let t = target.matrix();
    if pred.rows() != t.rows() || pred.cols() != t.cols() {
        return Err(Error::DimensionMismatch(format!(
            "pred {}x{} vs target {}x{}",
            pred.rows(),
            pred.cols(),
            t.rows(),
            t.cols()
        )));
    }
    if pred.rows() == 0 {
        return Err(Error::EmptyInput("cosine_alignment_loss"));
    }
    let n = pred.rows() as f64;
    let mut cos_sum = 0.0;
    let mut grad = DenseMatrix::zeros(pred.rows(), pred.cols());
    for i in 0..pred.rows() {
        let (cos, dcos) = cosine_row(pred.row(i), t.row(i)).ok_or_else(|| {
            let which = if crate::numkit::dot(pred.row(i), pred.row(i)) == 0.0 {
                "pred"
            } else {
                "target"
            };
            Error::DegenerateDirection { row: i, which }
        })?;
        cos_sum += cos;
        for (g, d) in grad.row_mut(i).iter_mut().zip(dcos) {
            *g = -d / n;
        }
    }
    Ok((1.0 - cos_sum / n, grad))
}
