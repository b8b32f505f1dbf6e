//! Reverse-mode differentiation tape over dense matrices.
//!
//! Ops are recorded in creation order, so every node's parents have smaller
//! indices and a single reverse sweep propagates gradients. Values are
//! computed eagerly at record time; `backward` seeds a scalar root with 1
//! and accumulates exact analytic gradients into every reachable node.

use crate::error::{Error, Result};
use crate::numkit::{DenseMatrix, LabelVector};
use crate::proto::cosine_row;

use super::layers::softmax_cross_entropy;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// `X + 1 b`: broadcast a 1 x d bias row over the rows of X.
    AddBiasRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    ConcatCols(NodeId, NodeId),
    SliceCols {
        src: NodeId,
        start: usize,
    },
    /// Row-wise choice between two equally-shaped nodes.
    SelectRows {
        mask: Vec<bool>,
        when_true: NodeId,
        when_false: NodeId,
    },
    /// Per-row dot product of two N x d nodes, giving N x 1.
    RowDot(NodeId, NodeId),
    SoftmaxRows(NodeId),
    /// `A * v`: scale each row of A (N x d) by the matching entry of v (N x 1).
    MulColVec(NodeId, NodeId),
    SumAll(NodeId),
    CrossEntropy {
        logits: NodeId,
        grad: DenseMatrix,
    },
    /// Mean cosine loss over the masked rows against a constant target.
    CosineLoss {
        pred: NodeId,
        grad: DenseMatrix,
    },
    WeightedSum(Vec<(f64, NodeId)>),
}

struct Node {
    value: DenseMatrix,
    op: Op,
}

/// Gradients keyed by node, produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&DenseMatrix> {
        self.grads[id.0].as_ref()
    }
}

/// The recording tape.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &DenseMatrix {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!((v.rows(), v.cols()), (1, 1), "node is not a scalar");
        v[(0, 0)]
    }

    fn push(&mut self, value: DenseMatrix, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Input or parameter node.
    pub fn leaf(&mut self, value: DenseMatrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add_bias_row(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let xv = self.value(x);
        let bv = self.value(bias);
        assert_eq!(bv.rows(), 1, "bias must be a row vector");
        assert_eq!(bv.cols(), xv.cols(), "bias width mismatch");
        let mut out = xv.clone();
        for i in 0..out.rows() {
            for (o, &b) in out.row_mut(i).iter_mut().zip(bv.row(0)) {
                *o += b;
            }
        }
        self.push(out, Op::AddBiasRow(x, bias))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).add(self.value(b));
        self.push(value, Op::Add(a, b))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let value = self.value(a).scale(s);
        self.push(value, Op::Scale(a, s))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = self.value(a);
        let bv = self.value(b);
        assert_eq!(av.rows(), bv.rows(), "concat_cols row mismatch");
        let mut out = DenseMatrix::zeros(av.rows(), av.cols() + bv.cols());
        for i in 0..av.rows() {
            out.row_mut(i)[..av.cols()].copy_from_slice(av.row(i));
            out.row_mut(i)[av.cols()..].copy_from_slice(bv.row(i));
        }
        self.push(out, Op::ConcatCols(a, b))
    }

    pub fn slice_cols(&mut self, src: NodeId, start: usize, len: usize) -> NodeId {
        let sv = self.value(src);
        assert!(start + len <= sv.cols(), "slice out of range");
        let mut out = DenseMatrix::zeros(sv.rows(), len);
        for i in 0..sv.rows() {
            out.row_mut(i).copy_from_slice(&sv.row(i)[start..start + len]);
        }
        self.push(out, Op::SliceCols { src, start })
    }

    pub fn select_rows(&mut self, mask: &[bool], when_true: NodeId, when_false: NodeId) -> NodeId {
        let tv = self.value(when_true);
        let fv = self.value(when_false);
        assert_eq!((tv.rows(), tv.cols()), (fv.rows(), fv.cols()), "select shape");
        assert_eq!(mask.len(), tv.rows(), "select mask length");
        let mut out = DenseMatrix::zeros(tv.rows(), tv.cols());
        for (i, &keep) in mask.iter().enumerate() {
            let src = if keep { tv.row(i) } else { fv.row(i) };
            out.row_mut(i).copy_from_slice(src);
        }
        self.push(
            out,
            Op::SelectRows {
                mask: mask.to_vec(),
                when_true,
                when_false,
            },
        )
    }

    pub fn row_dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = self.value(a);
        let bv = self.value(b);
        assert_eq!((av.rows(), av.cols()), (bv.rows(), bv.cols()), "row_dot shape");
        let mut out = DenseMatrix::zeros(av.rows(), 1);
        for i in 0..av.rows() {
            out[(i, 0)] = av.row(i).iter().zip(bv.row(i)).map(|(&x, &y)| x * y).sum();
        }
        self.push(out, Op::RowDot(a, b))
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let mut out = xv.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        self.push(out, Op::SoftmaxRows(x))
    }

    pub fn mul_col_vec(&mut self, a: NodeId, v: NodeId) -> NodeId {
        let av = self.value(a);
        let vv = self.value(v);
        assert_eq!(vv.cols(), 1, "column vector expected");
        assert_eq!(vv.rows(), av.rows(), "mul_col_vec rows");
        let mut out = av.clone();
        for i in 0..out.rows() {
            let s = vv[(i, 0)];
            for o in out.row_mut(i) {
                *o *= s;
            }
        }
        self.push(out, Op::MulColVec(a, v))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let total = self.value(a).sum();
        self.push(
            DenseMatrix::from_vec(1, 1, vec![total]).unwrap(),
            Op::SumAll(a),
        )
    }

    /// Mean softmax cross-entropy against integer labels; scalar node.
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &LabelVector) -> Result<NodeId> {
        let (loss, grad) = softmax_cross_entropy(self.value(logits), labels)?;
        Ok(self.push(
            DenseMatrix::from_vec(1, 1, vec![loss])?,
            Op::CrossEntropy { logits, grad },
        ))
    }

    /// Mean cosine alignment loss over the rows where `rows` is true, with a
    /// constant target. With no selected rows the node is 0 with no gradient.
    pub fn cosine_loss(
        &mut self,
        pred: NodeId,
        target: &DenseMatrix,
        rows: &[bool],
    ) -> Result<NodeId> {
        let pv = self.value(pred);
        if pv.rows() != target.rows() || pv.cols() != target.cols() {
            return Err(Error::DimensionMismatch(format!(
                "cosine pred {}x{} vs target {}x{}",
                pv.rows(),
                pv.cols(),
                target.rows(),
                target.cols()
            )));
        }
        if rows.len() != pv.rows() {
            return Err(Error::DimensionMismatch("cosine row mask length".into()));
        }
        let count = rows.iter().filter(|&&b| b).count();
        let mut grad = DenseMatrix::zeros(pv.rows(), pv.cols());
        let mut loss = 0.0;
        if count > 0 {
            let mut cos_sum = 0.0;
            for (i, &keep) in rows.iter().enumerate() {
                if !keep {
                    continue;
                }
                let (cos, dcos) = cosine_row(pv.row(i), target.row(i)).ok_or({
                    Error::DegenerateDirection {
                        row: i,
                        which: "pred",
                    }
                })?;
                cos_sum += cos;
                for (g, d) in grad.row_mut(i).iter_mut().zip(dcos) {
                    *g = -d / count as f64;
                }
            }
            loss = 1.0 - cos_sum / count as f64;
        }
        Ok(self.push(
            DenseMatrix::from_vec(1, 1, vec![loss])?,
            Op::CosineLoss { pred, grad },
        ))
    }

    /// Weighted sum of scalar nodes; the training objective root.
    pub fn weighted_sum(&mut self, terms: &[(f64, NodeId)]) -> NodeId {
        let total = terms.iter().map(|&(w, id)| w * self.scalar(id)).sum();
        self.push(
            DenseMatrix::from_vec(1, 1, vec![total]).unwrap(),
            Op::WeightedSum(terms.to_vec()),
        )
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: NodeId) -> Gradients {
        let rv = self.value(root);
        assert_eq!((rv.rows(), rv.cols()), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(DenseMatrix::from_vec(1, 1, vec![1.0]).unwrap());

        for idx in (0..self.nodes.len()).rev() {
            let Some(up) = grads[idx].take() else {
                continue;
            };
            match &self.nodes[idx].op {
                Op::Leaf => {
                    grads[idx] = Some(up); // keep for the caller
                    continue;
                }
                Op::MatMul(a, b) => {
                    let da = up.matmul_bt(self.value(*b));
                    let db = self.value(*a).transposed().matmul(&up);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::AddBiasRow(x, bias) => {
                    let db = DenseMatrix::from_vec(1, up.cols(), up.col_sums()).unwrap();
                    accumulate(&mut grads, *x, up.clone());
                    accumulate(&mut grads, *bias, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, up.clone());
                    accumulate(&mut grads, *b, up);
                }
                Op::Scale(a, s) => {
                    accumulate(&mut grads, *a, up.scale(*s));
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[idx].value;
                    let da = up.hadamard(&y.map(|v| 1.0 - v * v));
                    accumulate(&mut grads, *a, da);
                }
                Op::ConcatCols(a, b) => {
                    let a_cols = self.value(*a).cols();
                    let rows = up.rows();
                    let mut da = DenseMatrix::zeros(rows, a_cols);
                    let mut db = DenseMatrix::zeros(rows, up.cols() - a_cols);
                    for i in 0..rows {
                        da.row_mut(i).copy_from_slice(&up.row(i)[..a_cols]);
                        db.row_mut(i).copy_from_slice(&up.row(i)[a_cols..]);
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::SliceCols { src, start } => {
                    let sv = self.value(*src);
                    let mut ds = DenseMatrix::zeros(sv.rows(), sv.cols());
                    for i in 0..up.rows() {
                        ds.row_mut(i)[*start..*start + up.cols()].copy_from_slice(up.row(i));
                    }
                    accumulate(&mut grads, *src, ds);
                }
                Op::SelectRows {
                    mask,
                    when_true,
                    when_false,
                } => {
                    let mut dt = DenseMatrix::zeros(up.rows(), up.cols());
                    let mut df = DenseMatrix::zeros(up.rows(), up.cols());
                    for (i, &keep) in mask.iter().enumerate() {
                        if keep {
                            dt.row_mut(i).copy_from_slice(up.row(i));
                        } else {
                            df.row_mut(i).copy_from_slice(up.row(i));
                        }
                    }
                    accumulate(&mut grads, *when_true, dt);
                    accumulate(&mut grads, *when_false, df);
                }
                Op::RowDot(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let mut da = DenseMatrix::zeros(av.rows(), av.cols());
                    let mut db = DenseMatrix::zeros(av.rows(), av.cols());
                    for i in 0..av.rows() {
                        let s = up[(i, 0)];
                        for (d, &v) in da.row_mut(i).iter_mut().zip(bv.row(i)) {
                            *d = s * v;
                        }
                        for (d, &v) in db.row_mut(i).iter_mut().zip(av.row(i)) {
                            *d = s * v;
                        }
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::SoftmaxRows(x) => {
                    let y = &self.nodes[idx].value;
                    let mut dx = DenseMatrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let inner: f64 =
                            up.row(i).iter().zip(y.row(i)).map(|(&g, &p)| g * p).sum();
                        for ((d, &g), &p) in
                            dx.row_mut(i).iter_mut().zip(up.row(i)).zip(y.row(i))
                        {
                            *d = p * (g - inner);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::MulColVec(a, v) => {
                    let av = self.value(*a);
                    let vv = self.value(*v);
                    let mut da = DenseMatrix::zeros(av.rows(), av.cols());
                    let mut dv = DenseMatrix::zeros(av.rows(), 1);
                    for i in 0..av.rows() {
                        let s = vv[(i, 0)];
                        for (d, &g) in da.row_mut(i).iter_mut().zip(up.row(i)) {
                            *d = s * g;
                        }
                        dv[(i, 0)] = up.row(i).iter().zip(av.row(i)).map(|(&g, &x)| g * x).sum();
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *v, dv);
                }
                Op::SumAll(a) => {
                    let av = self.value(*a);
                    let s = up[(0, 0)];
                    accumulate(&mut grads, *a, DenseMatrix::constant(av.rows(), av.cols(), s));
                }
                Op::CrossEntropy { logits, grad } => {
                    accumulate(&mut grads, *logits, grad.scale(up[(0, 0)]));
                }
                Op::CosineLoss { pred, grad } => {
                    accumulate(&mut grads, *pred, grad.scale(up[(0, 0)]));
                }
                Op::WeightedSum(terms) => {
                    let s = up[(0, 0)];
                    for &(w, id) in terms.iter() {
                        accumulate(
                            &mut grads,
                            id,
                            DenseMatrix::from_vec(1, 1, vec![w * s]).unwrap(),
                        );
                    }
                }
            }
        }
        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<DenseMatrix>], id: NodeId, delta: DenseMatrix) {
    match &mut grads[id.0] {
        Some(g) => *g = g.add(&delta),
        slot @ None => *slot = Some(delta),
    }
}
