//! One training step: recompute transport plans and prototypes on the
//! complete-pair subset (held constant through the backward pass), run the
//! forward graph, combine the classification and alignment losses, and
//! update parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gw::{labeled_gw, Direction, GwConfig};
use crate::numkit::{DenseMatrix, LabelVector, SeededRng};
use crate::proto::{
    cosine_alignment_loss, match_distribution, sample_match, soft_prototypes, EmbeddingBatch,
    Modality, PrototypeSet,
};

use super::layers::softmax_cross_entropy;
use super::model::{Availability, Batch, FusionModel, ProtoSource};
use super::ParamTensor;

/// Loss term weights; the default weights every term at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub ce: f64,
    pub p_oct: f64,
    pub p_fundus: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            ce: 1.0,
            p_oct: 1.0,
            p_fundus: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Plain gradient descent.
    Sgd,
    /// Adaptive-moment estimation with the usual (0.9, 0.999) decays.
    Adam,
}

/// Training schedule and loss configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub weights: LossWeights,
    /// Draw one stochastic match per sample instead of taking the
    /// expectation over the match distribution.
    pub stochastic_matching: bool,
    pub gw: GwConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            steps: 200,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            weights: LossWeights::default(),
            stochastic_matching: false,
            gw: GwConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidConfig(
                "learning_rate must be finite and nonnegative".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        self.gw.validate()
    }
}

/// Optimizer state; Adam keeps first/second moment accumulators per
/// parameter tensor.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    moments: Option<AdamState>,
}

#[derive(Debug, Clone)]
struct AdamState {
    m: Vec<DenseMatrix>,
    v: Vec<DenseMatrix>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            moments: None,
        }
    }

    /// Apply one update from the gradients currently stored in `params`.
    pub fn step(&mut self, params: &mut [ParamTensor], learning_rate: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    for (value, &g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                        *value -= learning_rate * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                let state = self.moments.get_or_insert_with(|| AdamState {
                    m: params
                        .iter()
                        .map(|p| DenseMatrix::zeros(p.value.rows(), p.value.cols()))
                        .collect(),
                    v: params
                        .iter()
                        .map(|p| DenseMatrix::zeros(p.value.rows(), p.value.cols()))
                        .collect(),
                    t: 0,
                });
                state.t += 1;
                let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
                for (pi, p) in params.iter_mut().enumerate() {
                    let m = state.m[pi].data_mut();
                    let v = state.v[pi].data_mut();
                    for ((value, &g), (m, v)) in p
                        .value
                        .data_mut()
                        .iter_mut()
                        .zip(p.grad.data())
                        .zip(m.iter_mut().zip(v.iter_mut()))
                    {
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        *value -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

/// Loss components of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossComponents {
    pub total: f64,
    pub ce: f64,
    pub p_oct: f64,
    pub p_fundus: f64,
    /// True when the batch had no complete pairs, so the alignment terms
    /// were skipped (reported as zero).
    pub alignment_skipped: bool,
}

/// Weighted total loss `w_ce * L_ce + w1 * L_p_oct + w2 * L_p_fundus` from
/// already-computed pieces. Alignment terms average over the samples
/// flagged `complete`; with none, they are zero and flagged skipped.
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    logits: &DenseMatrix,
    y: &LabelVector,
    pred_f2o: &DenseMatrix,
    proto_o: &PrototypeSet,
    pred_o2f: &DenseMatrix,
    proto_f: &PrototypeSet,
    complete: &[bool],
    weights: &LossWeights,
) -> Result<LossComponents> {
    let (ce, _) = softmax_cross_entropy(logits, y)?;
    let idx: Vec<usize> = complete
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| c.then_some(i))
        .collect();
    let (p_oct, p_fundus, skipped) = if idx.is_empty() {
        (0.0, 0.0, true)
    } else {
        let sub = |m: &DenseMatrix| m.select_rows(&idx);
        let oct_target = PrototypeSet::new(sub(proto_o.matrix()), Modality::Oct)?;
        let fundus_target = PrototypeSet::new(sub(proto_f.matrix()), Modality::Fundus)?;
        let (l_oct, _) = cosine_alignment_loss(&sub(pred_f2o), &oct_target)?;
        let (l_fun, _) = cosine_alignment_loss(&sub(pred_o2f), &fundus_target)?;
        (l_oct, l_fun, false)
    };
    Ok(LossComponents {
        total: weights.ce * ce + weights.p_oct * p_oct + weights.p_fundus * p_fundus,
        ce,
        p_oct,
        p_fundus,
        alignment_skipped: skipped,
    })
}

/// Loss record for one training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossRecord {
    pub step: usize,
    pub components: LossComponents,
}

/// Transport-derived constants for one batch: prototype matrices scattered
/// to full batch size, plus the complete mask.
struct BatchPlans {
    proto_f: DenseMatrix,
    proto_o: DenseMatrix,
    complete: Vec<bool>,
}

fn compute_batch_plans(
    model: &FusionModel,
    batch: &Batch,
    avail: &Availability,
    config: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<Option<BatchPlans>> {
    let complete = avail.complete_mask();
    let idx: Vec<usize> = complete
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| c.then_some(i))
        .collect();
    if idx.is_empty() {
        return Ok(None);
    }
    let e_f = model.encode_fundus(&batch.x_f.select_rows(&idx));
    let e_o = model.encode_oct(&batch.x_o.select_rows(&idx));
    let embeds = EmbeddingBatch::new(e_f.clone(), e_o.clone(), batch.y.select(&idx))?;

    let t_fo = labeled_gw(&embeds, Direction::FundusToOct, &config.gw)?;
    let p_fo = match_distribution(&t_fo)?;
    let proto_o_sub = if config.stochastic_matching {
        let mut m = DenseMatrix::zeros(idx.len(), e_o.cols());
        for i in 0..idx.len() {
            let j = sample_match(&p_fo, i, rng)?;
            m.set_row(i, e_o.row(j));
        }
        m
    } else {
        soft_prototypes(&p_fo, &e_o, Modality::Oct)?.matrix().clone()
    };

    let t_of = t_fo.transposed();
    let p_of = match_distribution(&t_of)?;
    let proto_f_sub = if config.stochastic_matching {
        let mut m = DenseMatrix::zeros(idx.len(), e_f.cols());
        for i in 0..idx.len() {
            let j = sample_match(&p_of, i, rng)?;
            m.set_row(i, e_f.row(j));
        }
        m
    } else {
        soft_prototypes(&p_of, &e_f, Modality::Fundus)?
            .matrix()
            .clone()
    };

    let d = e_f.cols();
    let mut proto_f = DenseMatrix::zeros(batch.len(), d);
    let mut proto_o = DenseMatrix::zeros(batch.len(), d);
    for (sub_row, &i) in idx.iter().enumerate() {
        proto_f.set_row(i, proto_f_sub.row(sub_row));
        proto_o.set_row(i, proto_o_sub.row(sub_row));
    }
    Ok(Some(BatchPlans {
        proto_f,
        proto_o,
        complete,
    }))
}

/// One optimization step. Plans and prototypes are recomputed from the
/// current encoders on the complete-pair subset and enter the graph as
/// constants; the backward pass never differentiates through a solver.
/// Deterministic given the generator state.
pub fn train_step(
    model: &mut FusionModel,
    optimizer: &mut Optimizer,
    batch: &Batch,
    avail: &Availability,
    config: &TrainConfig,
    rng: &mut SeededRng,
    step: usize,
) -> Result<LossRecord> {
    config.validate()?;
    let plans = if model.config().no_alignment {
        None
    } else {
        compute_batch_plans(model, batch, avail, config, rng)?
    };

    let proto_source = match &plans {
        Some(p) => ProtoSource::Plans {
            proto_f: p.proto_f.clone(),
            proto_o: p.proto_o.clone(),
            complete: p.complete.clone(),
        },
        None => ProtoSource::Heads,
    };
    let mut fwd = model.forward(batch, avail, &proto_source)?;

    let ce = fwd.tape.cross_entropy(fwd.logits, &batch.y)?;
    let (root, components) = match &plans {
        Some(p) => {
            let cos_oct = fwd
                .tape
                .cosine_loss(fwd.pred_f2o, &p.proto_o, &p.complete)?;
            let cos_fun = fwd
                .tape
                .cosine_loss(fwd.pred_o2f, &p.proto_f, &p.complete)?;
            let w = &config.weights;
            let root = fwd.tape.weighted_sum(&[
                (w.ce, ce),
                (w.p_oct, cos_oct),
                (w.p_fundus, cos_fun),
            ]);
            let components = LossComponents {
                total: fwd.tape.scalar(root),
                ce: fwd.tape.scalar(ce),
                p_oct: fwd.tape.scalar(cos_oct),
                p_fundus: fwd.tape.scalar(cos_fun),
                alignment_skipped: false,
            };
            (root, components)
        }
        None => {
            let root = fwd.tape.weighted_sum(&[(config.weights.ce, ce)]);
            let components = LossComponents {
                total: fwd.tape.scalar(root),
                ce: fwd.tape.scalar(ce),
                p_oct: 0.0,
                p_fundus: 0.0,
                alignment_skipped: true,
            };
            (root, components)
        }
    };

    let grads = fwd.tape.backward(root);
    for (pi, param) in model.params_mut().iter_mut().enumerate() {
        match grads.get(fwd.binding[pi]) {
            Some(g) => param.grad = g.clone(),
            None => param.grad = DenseMatrix::zeros(param.value.rows(), param.value.cols()),
        }
    }
    optimizer.step(model.params_mut(), config.learning_rate);

    Ok(LossRecord { step, components })
}
