//! Network building blocks: dense stacks, the single-head attention block,
//! and softmax cross-entropy. Parameters live in the model's registry; the
//! blocks hold parameter ids and apply themselves either on a tape (for
//! training) or on plain values (for plan computation and the composition
//! oracle). Both paths run the same matrix routines in the same order, so
//! their outputs agree bitwise.

use crate::error::{Error, Result};
use crate::numkit::{DenseMatrix, LabelVector};

use super::tape::{NodeId, Tape};
use super::ParamTensor;

/// Index into the model's parameter registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// One affine layer.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub(crate) w: ParamId,
    pub(crate) b: ParamId,
}

/// Affine layers with tanh between them (none after the last). A one-layer
/// stack is purely affine, which is what the token adapters use.
#[derive(Debug, Clone)]
pub struct DenseStack {
    pub(crate) layers: Vec<DenseLayer>,
    pub(crate) widths: Vec<usize>,
}

impl DenseStack {
    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Record the stack on the tape.
    pub fn apply(&self, tape: &mut Tape, binding: &[NodeId], x: NodeId) -> Result<NodeId> {
        if tape.value(x).cols() != self.input_width() {
            return Err(Error::DimensionMismatch(format!(
                "stack expects width {}, input has {}",
                self.input_width(),
                tape.value(x).cols()
            )));
        }
        let mut h = x;
        for (li, layer) in self.layers.iter().enumerate() {
            let prod = tape.matmul(h, binding[layer.w.0]);
            h = tape.add_bias_row(prod, binding[layer.b.0]);
            if li + 1 < self.layers.len() {
                h = tape.tanh(h);
            }
        }
        Ok(h)
    }

    /// Run the stack on plain values (no recording).
    pub fn apply_values(&self, params: &[ParamTensor], x: &DenseMatrix) -> DenseMatrix {
        let mut h = x.clone();
        for (li, layer) in self.layers.iter().enumerate() {
            let mut out = h.matmul(&params[layer.w.0].value);
            let bias = &params[layer.b.0].value;
            for i in 0..out.rows() {
                for (o, &b) in out.row_mut(i).iter_mut().zip(bias.row(0)) {
                    *o += b;
                }
            }
            h = if li + 1 < self.layers.len() {
                out.map(f64::tanh)
            } else {
                out
            };
        }
        h
    }
}

/// Single-head scaled dot-product attention over exactly three tokens, with
/// learned query/key/value projections, mean-pooled over the three output
/// positions.
#[derive(Debug, Clone)]
pub struct AttentionBlock {
    pub(crate) wq: ParamId,
    pub(crate) wk: ParamId,
    pub(crate) wv: ParamId,
    pub(crate) width: usize,
}

impl AttentionBlock {
    /// Record the block on the tape. `tokens` holds one N x d node per
    /// position.
    pub fn apply(&self, tape: &mut Tape, binding: &[NodeId], tokens: &[NodeId]) -> Result<NodeId> {
        if tokens.len() != 3 {
            return Err(Error::InvalidInput(format!(
                "attention block takes exactly 3 tokens, got {}",
                tokens.len()
            )));
        }
        for &t in tokens {
            if tape.value(t).cols() != self.width {
                return Err(Error::DimensionMismatch(format!(
                    "attention token width {} != {}",
                    tape.value(t).cols(),
                    self.width
                )));
            }
        }
        let scale = 1.0 / (self.width as f64).sqrt();
        let q: Vec<NodeId> = tokens
            .iter()
            .map(|&t| tape.matmul(t, binding[self.wq.0]))
            .collect();
        let k: Vec<NodeId> = tokens
            .iter()
            .map(|&t| tape.matmul(t, binding[self.wk.0]))
            .collect();
        let v: Vec<NodeId> = tokens
            .iter()
            .map(|&t| tape.matmul(t, binding[self.wv.0]))
            .collect();

        let mut outputs = Vec::with_capacity(3);
        for qa in q {
            let mut scores = Vec::with_capacity(3);
            for &kb in &k {
                let dot = tape.row_dot(qa, kb);
                scores.push(tape.scale(dot, scale));
            }
            let pair = tape.concat_cols(scores[0], scores[1]);
            let stacked = tape.concat_cols(pair, scores[2]);
            let weights = tape.softmax_rows(stacked);
            let mut out = None;
            for (b, &vb) in v.iter().enumerate() {
                let w_b = tape.slice_cols(weights, b, 1);
                let term = tape.mul_col_vec(vb, w_b);
                out = Some(match out {
                    None => term,
                    Some(acc) => tape.add(acc, term),
                });
            }
            outputs.push(out.unwrap());
        }
        let s01 = tape.add(outputs[0], outputs[1]);
        let total = tape.add(s01, outputs[2]);
        Ok(tape.scale(total, 1.0 / 3.0))
    }
}

/// Mean softmax cross-entropy and its gradient `(softmax - onehot) / N`.
pub fn softmax_cross_entropy(
    logits: &DenseMatrix,
    labels: &LabelVector,
) -> Result<(f64, DenseMatrix)> {
    if logits.rows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} logit rows vs {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if labels.num_classes() != logits.cols() {
        return Err(Error::InvalidInput(format!(
            "labels over {} classes, logits have {} columns",
            labels.num_classes(),
            logits.cols()
        )));
    }
    if logits.rows() == 0 {
        return Err(Error::EmptyInput("softmax_cross_entropy"));
    }
    let n = logits.rows();
    let mut loss = 0.0;
    let mut grad = DenseMatrix::zeros(n, logits.cols());
    for i in 0..n {
        let row = logits.row(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[labels[i]];
        for (j, (g, &v)) in grad.row_mut(i).iter_mut().zip(row).enumerate() {
            let p = (v - lse).exp();
            *g = (p - if j == labels[i] { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok((loss / n as f64, grad))
}
