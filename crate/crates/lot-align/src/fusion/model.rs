//! The asymmetric fusion classifier.
//!
//! Fundus branch: three tokens per sample (the OT-projected cross-modal
//! feature, the fundus prototype feature, and the backbone embedding) are
//! adapted to a common width and fused by single-head attention. OCT
//! branch: the OCT prototype feature concatenated with the backbone
//! embedding feeds a plain dense stack. The two fused vectors concatenate
//! into the classification head.
//!
//! Prototype-predictor heads double as missing-modality surrogates: a
//! sample lacking OCT substitutes `head_f2o(e_f)` for both its OCT
//! embedding and its OCT prototype feature (symmetrically for fundus), so
//! inference runs on any availability pattern with one parameter set.

use crate::error::{Error, Result};
use crate::gw::FeaturePlan;
use crate::numkit::{DenseMatrix, LabelVector, SeededRng};

use super::layers::{AttentionBlock, DenseLayer, DenseStack, ParamId};
use super::tape::{NodeId, Tape};
use super::ParamTensor;

/// Architecture widths and variant switches.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim_f: usize,
    pub input_dim_o: usize,
    /// Output width of both encoders; also the token width.
    pub embed_dim: usize,
    /// Hidden width of every two-layer stack.
    pub hidden_dim: usize,
    pub num_classes: usize,
    /// Ablation variant: alignment losses off, OT-derived tokens replaced
    /// by the backbone token.
    pub no_alignment: bool,
    /// Use the literal (unnormalized) feature-plan product for the
    /// OT-projected token.
    pub literal_projection: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_dim_f", self.input_dim_f),
            ("input_dim_o", self.input_dim_o),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("num_classes", self.num_classes),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Per-sample modality presence. Every sample keeps at least one modality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Availability {
    fundus: Vec<bool>,
    oct: Vec<bool>,
}

impl Availability {
    pub fn new(fundus: Vec<bool>, oct: Vec<bool>) -> Result<Self> {
        if fundus.len() != oct.len() {
            return Err(Error::DimensionMismatch(
                "availability flag lengths differ".into(),
            ));
        }
        if let Some(i) = fundus.iter().zip(&oct).position(|(&f, &o)| !f && !o) {
            return Err(Error::InvalidInput(format!(
                "sample {i} has no modality at all"
            )));
        }
        Ok(Self { fundus, oct })
    }

    pub fn complete(n: usize) -> Self {
        Self {
            fundus: vec![true; n],
            oct: vec![true; n],
        }
    }

    /// Fundus-only evaluation: every sample misses OCT.
    pub fn without_oct(n: usize) -> Self {
        Self {
            fundus: vec![true; n],
            oct: vec![false; n],
        }
    }

    /// OCT-only evaluation: every sample misses fundus.
    pub fn without_fundus(n: usize) -> Self {
        Self {
            fundus: vec![false; n],
            oct: vec![true; n],
        }
    }

    pub fn len(&self) -> usize {
        self.fundus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fundus.is_empty()
    }

    pub fn fundus(&self) -> &[bool] {
        &self.fundus
    }

    pub fn oct(&self) -> &[bool] {
        &self.oct
    }

    /// Samples with both modalities present.
    pub fn complete_mask(&self) -> Vec<bool> {
        self.fundus
            .iter()
            .zip(&self.oct)
            .map(|(&f, &o)| f && o)
            .collect()
    }
}

/// Raw input batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x_f: DenseMatrix,
    pub x_o: DenseMatrix,
    pub y: LabelVector,
}

impl Batch {
    pub fn new(x_f: DenseMatrix, x_o: DenseMatrix, y: LabelVector) -> Result<Self> {
        if x_f.rows() != x_o.rows() || x_f.rows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "batch rows disagree: {} / {} / {} labels",
                x_f.rows(),
                x_o.rows(),
                y.len()
            )));
        }
        Ok(Self { x_f, x_o, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Where prototype features come from.
///
/// Training on complete pairs uses the transport-derived soft prototypes as
/// constants; inference (and incomplete samples during training) uses the
/// predictor heads, which is exactly what the cosine losses train them for.
#[derive(Debug, Clone)]
pub enum ProtoSource {
    Heads,
    Plans {
        proto_f: DenseMatrix,
        proto_o: DenseMatrix,
        complete: Vec<bool>,
    },
}

/// A recorded forward pass: the tape plus handles to the nodes that losses
/// and the optimizer need.
pub struct Forward {
    pub tape: Tape,
    pub logits: NodeId,
    pub pred_f2o: NodeId,
    pub pred_o2f: NodeId,
    pub(crate) binding: Vec<NodeId>,
}

impl Forward {
    pub fn logits_value(&self) -> &DenseMatrix {
        self.tape.value(self.logits)
    }

    /// Tape node of parameter `index`, for reading its gradient after a
    /// backward sweep.
    pub fn param_node(&self, index: usize) -> NodeId {
        self.binding[index]
    }
}

/// Parameters of the full fusion network plus the frozen feature plan.
#[derive(Debug, Clone)]
pub struct FusionModel {
    config: ModelConfig,
    params: Vec<ParamTensor>,
    encoder_f: DenseStack,
    encoder_o: DenseStack,
    head_f2o: DenseStack,
    head_o2f: DenseStack,
    adapter_ot: DenseStack,
    adapter_proto: DenseStack,
    adapter_enc: DenseStack,
    attention: AttentionBlock,
    branch_o: DenseStack,
    classifier: DenseStack,
    t_v: FeaturePlan,
    epoch: usize,
}

impl FusionModel {
    /// Fresh model with seed-determined initialization and a uniform
    /// feature plan.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(seed);
        let mut params = Vec::new();
        let d = config.embed_dim;
        let h = config.hidden_dim;

        let encoder_f = stack(
            &mut params,
            &mut rng,
            "encoder_f",
            &[config.input_dim_f, h, d],
        );
        let encoder_o = stack(
            &mut params,
            &mut rng,
            "encoder_o",
            &[config.input_dim_o, h, d],
        );
        let head_f2o = stack(&mut params, &mut rng, "head_f2o", &[d, h, d]);
        let head_o2f = stack(&mut params, &mut rng, "head_o2f", &[d, h, d]);
        let adapter_ot = stack(&mut params, &mut rng, "adapter_ot", &[d, d]);
        let adapter_proto = stack(&mut params, &mut rng, "adapter_proto", &[d, d]);
        let adapter_enc = stack(&mut params, &mut rng, "adapter_enc", &[d, d]);
        let attention = AttentionBlock {
            wq: push_param(&mut params, &mut rng, "attention.wq", d, d),
            wk: push_param(&mut params, &mut rng, "attention.wk", d, d),
            wv: push_param(&mut params, &mut rng, "attention.wv", d, d),
            width: d,
        };
        let branch_o = stack(&mut params, &mut rng, "branch_o", &[2 * d, h, d]);
        let classifier = stack(
            &mut params,
            &mut rng,
            "classifier",
            &[2 * d, h, config.num_classes],
        );

        Ok(Self {
            config,
            params,
            encoder_f,
            encoder_o,
            head_f2o,
            head_o2f,
            adapter_ot,
            adapter_proto,
            adapter_enc,
            attention,
            branch_o,
            classifier,
            t_v: FeaturePlan::uniform(d, d)?,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[ParamTensor] {
        &self.params
    }

    /// Mutable parameter access for optimizers and gradient checks.
    pub fn params_mut(&mut self) -> &mut [ParamTensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }

    pub fn t_v(&self) -> &FeaturePlan {
        &self.t_v
    }

    /// Install a frozen feature plan; must couple embed_dim with embed_dim.
    pub fn set_feature_plan(&mut self, t_v: FeaturePlan) -> Result<()> {
        let d = self.config.embed_dim;
        if t_v.d_o() != d || t_v.d_f() != d {
            return Err(Error::DimensionMismatch(format!(
                "feature plan {}x{} does not couple embeddings of width {d}",
                t_v.d_o(),
                t_v.d_f()
            )));
        }
        self.t_v = t_v;
        Ok(())
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn set_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
    }

    /// Overwrite a parameter by name (checkpoint loading).
    pub fn set_param(&mut self, name: &str, value: DenseMatrix) -> Result<()> {
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown parameter {name}")))?;
        if (value.rows(), value.cols()) != (p.value.rows(), p.value.cols()) {
            return Err(Error::DimensionMismatch(format!(
                "parameter {name}: {}x{} vs stored {}x{}",
                value.rows(),
                value.cols(),
                p.value.rows(),
                p.value.cols()
            )));
        }
        p.value = value;
        Ok(())
    }

    // Value-level components, used for plan computation and by the
    // composition oracle. These run the same matrix routines as the tape.

    pub fn encode_fundus(&self, x: &DenseMatrix) -> DenseMatrix {
        self.encoder_f.apply_values(&self.params, x)
    }

    pub fn encode_oct(&self, x: &DenseMatrix) -> DenseMatrix {
        self.encoder_o.apply_values(&self.params, x)
    }

    /// `head_f2o`: OCT-space prototype predicted from a fundus embedding.
    pub fn predict_oct_prototype(&self, e_f: &DenseMatrix) -> DenseMatrix {
        self.head_f2o.apply_values(&self.params, e_f)
    }

    /// `head_o2f`: fundus-space prototype predicted from an OCT embedding.
    pub fn predict_fundus_prototype(&self, e_o: &DenseMatrix) -> DenseMatrix {
        self.head_o2f.apply_values(&self.params, e_o)
    }

    /// Record the full forward pass for a raw batch under an availability
    /// pattern. Missing rows are zeroed before encoding and their encoder
    /// outputs are replaced by head surrogates, so garbage in absent inputs
    /// cannot reach the logits.
    pub fn forward(
        &self,
        batch: &Batch,
        avail: &Availability,
        proto: &ProtoSource,
    ) -> Result<Forward> {
        if batch.x_f.cols() != self.config.input_dim_f
            || batch.x_o.cols() != self.config.input_dim_o
        {
            return Err(Error::DimensionMismatch(format!(
                "batch widths {}x{} vs model inputs {}x{}",
                batch.x_f.cols(),
                batch.x_o.cols(),
                self.config.input_dim_f,
                self.config.input_dim_o
            )));
        }
        if avail.len() != batch.len() {
            return Err(Error::DimensionMismatch(
                "availability length does not match batch".into(),
            ));
        }
        if batch.is_empty() {
            return Err(Error::EmptyInput("forward batch"));
        }

        let mut x_f = batch.x_f.clone();
        let mut x_o = batch.x_o.clone();
        for i in 0..batch.len() {
            if !avail.fundus()[i] {
                x_f.row_mut(i).fill(0.0);
            }
            if !avail.oct()[i] {
                x_o.row_mut(i).fill(0.0);
            }
        }

        let mut tape = Tape::new();
        let binding = self.bind(&mut tape);
        let xf = tape.leaf(x_f);
        let xo = tape.leaf(x_o);
        let ef_enc = self.encoder_f.apply(&mut tape, &binding, xf)?;
        let eo_enc = self.encoder_o.apply(&mut tape, &binding, xo)?;

        let surrogate_f = self.head_o2f.apply(&mut tape, &binding, eo_enc)?;
        let ef_eff = tape.select_rows(avail.fundus(), ef_enc, surrogate_f);
        let pred_f2o = self.head_f2o.apply(&mut tape, &binding, ef_eff)?;
        let eo_eff = tape.select_rows(avail.oct(), eo_enc, pred_f2o);
        let pred_o2f = self.head_o2f.apply(&mut tape, &binding, eo_eff)?;

        self.assemble(tape, binding, ef_eff, eo_eff, pred_f2o, pred_o2f, proto)
    }

    /// Forward from already-effective embeddings, bypassing encoders and
    /// surrogate selection. Composing `encode_*` / `predict_*` values by
    /// hand and feeding them here reproduces a missing-modality forward
    /// bit for bit.
    pub fn forward_from_embeddings(
        &self,
        e_f: &DenseMatrix,
        e_o: &DenseMatrix,
        proto: &ProtoSource,
    ) -> Result<Forward> {
        let d = self.config.embed_dim;
        if e_f.cols() != d || e_o.cols() != d || e_f.rows() != e_o.rows() {
            return Err(Error::DimensionMismatch(format!(
                "embeddings {}x{} / {}x{} vs width {d}",
                e_f.rows(),
                e_f.cols(),
                e_o.rows(),
                e_o.cols()
            )));
        }
        let mut tape = Tape::new();
        let binding = self.bind(&mut tape);
        let ef_eff = tape.leaf(e_f.clone());
        let eo_eff = tape.leaf(e_o.clone());
        let pred_f2o = self.head_f2o.apply(&mut tape, &binding, ef_eff)?;
        let pred_o2f = self.head_o2f.apply(&mut tape, &binding, eo_eff)?;
        self.assemble(tape, binding, ef_eff, eo_eff, pred_f2o, pred_o2f, proto)
    }

    fn bind(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.params
            .iter()
            .map(|p| tape.leaf(p.value.clone()))
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        &self,
        mut tape: Tape,
        binding: Vec<NodeId>,
        ef_eff: NodeId,
        eo_eff: NodeId,
        pred_f2o: NodeId,
        pred_o2f: NodeId,
        proto: &ProtoSource,
    ) -> Result<Forward> {
        let n = tape.value(ef_eff).rows();
        let (proto_f_feat, proto_o_feat) = match proto {
            ProtoSource::Heads => (pred_o2f, pred_f2o),
            ProtoSource::Plans {
                proto_f,
                proto_o,
                complete,
            } => {
                let d = self.config.embed_dim;
                if proto_f.rows() != n
                    || proto_o.rows() != n
                    || proto_f.cols() != d
                    || proto_o.cols() != d
                    || complete.len() != n
                {
                    return Err(Error::DimensionMismatch(
                        "prototype matrices do not match the batch".into(),
                    ));
                }
                let pf = tape.leaf(proto_f.clone());
                let po = tape.leaf(proto_o.clone());
                (
                    tape.select_rows(complete, pf, pred_o2f),
                    tape.select_rows(complete, po, pred_f2o),
                )
            }
        };

        let (token_ot_src, token_proto_src, oct_in) = if self.config.no_alignment {
            let oct_in = tape.concat_cols(eo_eff, eo_eff);
            (ef_eff, ef_eff, oct_in)
        } else {
            let weights = if self.config.literal_projection {
                self.t_v.matrix().clone()
            } else {
                self.t_v.projection_weights()?
            };
            let w = tape.leaf(weights);
            let ot_feat = tape.matmul(eo_eff, w);
            let oct_in = tape.concat_cols(proto_o_feat, eo_eff);
            (ot_feat, proto_f_feat, oct_in)
        };

        let t1 = self.adapter_ot.apply(&mut tape, &binding, token_ot_src)?;
        let t2 = self
            .adapter_proto
            .apply(&mut tape, &binding, token_proto_src)?;
        let t3 = self.adapter_enc.apply(&mut tape, &binding, ef_eff)?;
        let fused_f = self.attention.apply(&mut tape, &binding, &[t1, t2, t3])?;
        let fused_o = self.branch_o.apply(&mut tape, &binding, oct_in)?;
        let joint = tape.concat_cols(fused_f, fused_o);
        let logits = self.classifier.apply(&mut tape, &binding, joint)?;

        Ok(Forward {
            tape,
            logits,
            pred_f2o,
            pred_o2f,
            binding,
        })
    }
}

fn push_param(
    params: &mut Vec<ParamTensor>,
    rng: &mut SeededRng,
    name: &str,
    rows: usize,
    cols: usize,
) -> ParamId {
    let scale = 1.0 / (rows as f64).sqrt();
    let value = DenseMatrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.normal() * scale).collect(),
    )
    .unwrap();
    params.push(ParamTensor::new(name.to_string(), value));
    ParamId(params.len() - 1)
}

fn stack(
    params: &mut Vec<ParamTensor>,
    rng: &mut SeededRng,
    name: &str,
    widths: &[usize],
) -> DenseStack {
    let mut layers = Vec::new();
    for (li, pair) in widths.windows(2).enumerate() {
        let w = push_param(params, rng, &format!("{name}.w{li}"), pair[0], pair[1]);
        let b = ParamId({
            params.push(ParamTensor::new(
                format!("{name}.b{li}"),
                DenseMatrix::zeros(1, pair[1]),
            ));
            params.len() - 1
        });
        layers.push(DenseLayer { w, b });
    }
    DenseStack {
        layers,
        widths: widths.to_vec(),
    }
}
