//! Define-by-run reverse-mode differentiation over [`Tensor`] values.
//!
//! A fresh [`Tape`] is built for every forward pass. Each op records its
//! inputs and caches its output; [`Tape::backward`] walks the node list in
//! exact reverse insertion order and scatters accumulated gradients back
//! into the owning [`ParamStore`].

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tensor};

/// Norm below which cosine refuses to operate rather than silently clamp.
pub const NORM_EPSILON: f64 = 1e-12;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    /// a * b^T without materializing the transpose.
    MatMulNT(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// scale * x + shift, elementwise; only the scale matters for backward.
    Affine {
        x: NodeId,
        scale: f64,
    },
    Relu(NodeId),
    Sigmoid(NodeId),
    AbsSum(NodeId),
    SoftmaxRows(NodeId),
    Cosine(NodeId, NodeId),
    /// matrix + row vector broadcast over rows.
    AddRowBroadcast(NodeId, NodeId),
    ConcatRows(Vec<NodeId>),
    /// 1x1 scalars gathered into a 1xN row.
    ConcatScalars(Vec<NodeId>),
    /// Mean over the listed rows, producing a 1xC row.
    MeanRows {
        x: NodeId,
        rows: Vec<usize>,
    },
    /// log(sum(exp(x))) over every element, max-stabilized.
    LogSumExp(NodeId),
    /// Scalar picked at a flat index.
    Pick {
        x: NodeId,
        index: usize,
    },
}

struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// A constant leaf; receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Const, value)
    }

    /// A leaf holding the current value of a stored parameter. Backward
    /// accumulates into the parameter's grad buffer.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(Op::Param(id), store.value(id).clone())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != br {
            return Err(Error::dimension(
                "matmul",
                self.value(a).shape_str(),
                self.value(b).shape_str(),
            ));
        }
        let mut out = Tensor::zeros(ar, bc);
        for i in 0..ar {
            for k in 0..ac {
                let aik = self.value(a).get(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..bc {
                    let v = out.get(i, j) + aik * self.value(b).get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        Ok(self.push(Op::MatMul(a, b), out))
    }

    /// a * b^T. Shapes: (m x d) * (n x d) -> m x n.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != bc {
            return Err(Error::dimension(
                "matmul_nt",
                self.value(a).shape_str(),
                self.value(b).shape_str(),
            ));
        }
        let mut out = Tensor::zeros(ar, br);
        for i in 0..ar {
            for j in 0..br {
                let mut acc = 0.0;
                for k in 0..ac {
                    acc += self.value(a).get(i, k) * self.value(b).get(j, k);
                }
                out.set(i, j, acc);
            }
        }
        Ok(self.push(Op::MatMulNT(a, b), out))
    }

    fn check_same_shape(&self, context: &str, a: NodeId, b: NodeId) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::dimension(
                context,
                self.value(a).shape_str(),
                self.value(b).shape_str(),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_shape("add", a, b)?;
        let (r, c) = self.value(a).shape();
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let out = Tensor::from_vec(r, c, data)?;
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_shape("mul", a, b)?;
        let (r, c) = self.value(a).shape();
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::from_vec(r, c, data)?;
        Ok(self.push(Op::Mul(a, b), out))
    }

    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        let (r, c) = self.value(x).shape();
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|v| scale * v + shift)
            .collect();
        let out = Tensor::from_vec(r, c, data).expect("shape preserved");
        self.push(Op::Affine { x, scale }, out)
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        self.affine(x, -1.0, 0.0)
    }

    pub fn scale(&mut self, x: NodeId, s: f64) -> NodeId {
        self.affine(x, s, 0.0)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.value(x).shape();
        let data = self.value(x).data().iter().map(|v| v.max(0.0)).collect();
        let out = Tensor::from_vec(r, c, data).expect("shape preserved");
        self.push(Op::Relu(x), out)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.value(x).shape();
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        let out = Tensor::from_vec(r, c, data).expect("shape preserved");
        self.push(Op::Sigmoid(x), out)
    }

    /// Sum of absolute values, as a 1x1 scalar node. Subgradient at 0 is 0.
    pub fn abs_sum(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.value(x).data().iter().map(|v| v.abs()).sum();
        self.push(Op::AbsSum(x), Tensor::scalar(s))
    }

    /// Row-wise softmax. `-inf` entries are mask sentinels and map to exactly
    /// zero weight; they also receive zero gradient. A row with no finite
    /// entry is an error.
    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(x).shape();
        let mut out = Tensor::zeros(r, c);
        for i in 0..r {
            let row = self.value(x).row(i);
            if row.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(Error::Degenerate(format!(
                    "softmax row {i} contains NaN or +inf"
                )));
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(Error::Degenerate(format!(
                    "softmax row {i} has no finite entry"
                )));
            }
            let mut sum = 0.0;
            let mut exps = vec![0.0; c];
            for (j, v) in row.iter().enumerate() {
                // exp(-inf - max) is exactly 0
                let e = (v - max).exp();
                exps[j] = e;
                sum += e;
            }
            for (j, e) in exps.iter().enumerate() {
                out.set(i, j, e / sum);
            }
        }
        Ok(self.push(Op::SoftmaxRows(x), out))
    }

    /// Cosine similarity between two equal-length vectors (any shape with the
    /// same element count), as a scalar node.
    pub fn cosine(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).len() != self.value(b).len() {
            return Err(Error::dimension(
                "cosine",
                self.value(a).shape_str(),
                self.value(b).shape_str(),
            ));
        }
        let na = self.value(a).norm();
        let nb = self.value(b).norm();
        if na < NORM_EPSILON || nb < NORM_EPSILON {
            return Err(Error::Degenerate(format!(
                "cosine on near-zero vector (norms {na:.3e}, {nb:.3e})"
            )));
        }
        let dot: f64 = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .sum();
        let c = (dot / (na * nb)).clamp(-1.0, 1.0);
        Ok(self.push(Op::Cosine(a, b), Tensor::scalar(c)))
    }

    /// matrix (r x c) + row (1 x c), broadcast over rows.
    pub fn add_row_broadcast(&mut self, x: NodeId, row: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(x).shape();
        let (rr, rc) = self.value(row).shape();
        if rr != 1 || rc != c {
            return Err(Error::dimension(
                "add_row_broadcast",
                self.value(x).shape_str(),
                self.value(row).shape_str(),
            ));
        }
        let mut out = Tensor::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                out.set(i, j, self.value(x).get(i, j) + self.value(row).get(0, j));
            }
        }
        Ok(self.push(Op::AddRowBroadcast(x, row), out))
    }

    /// Stack inputs vertically. All inputs must share a column count.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Contract("concat_rows with no inputs".into()));
        }
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            if self.value(p).cols() != cols {
                return Err(Error::dimension(
                    "concat_rows",
                    self.value(parts[0]).shape_str(),
                    self.value(p).shape_str(),
                ));
            }
            rows += self.value(p).rows();
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        Ok(self.push(Op::ConcatRows(parts.to_vec()), out))
    }

    /// Gather 1x1 scalar nodes into a 1xN row.
    pub fn concat_scalars(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let mut data = Vec::with_capacity(parts.len());
        for &p in parts {
            data.push(self.value(p).as_scalar()?);
        }
        let out = Tensor::row_vector(data);
        Ok(self.push(Op::ConcatScalars(parts.to_vec()), out))
    }

    /// Mean of the listed rows, as a 1xC row.
    pub fn mean_rows(&mut self, x: NodeId, rows: &[usize]) -> Result<NodeId> {
        let (r, c) = self.value(x).shape();
        if rows.is_empty() {
            return Err(Error::Contract("mean_rows over empty row set".into()));
        }
        if rows.iter().any(|&i| i >= r) {
            return Err(Error::Contract(format!(
                "mean_rows index out of range for {r} rows"
            )));
        }
        let mut out = vec![0.0; c];
        for &i in rows {
            for j in 0..c {
                out[j] += self.value(x).get(i, j);
            }
        }
        let n = rows.len() as f64;
        out.iter_mut().for_each(|v| *v /= n);
        Ok(self.push(
            Op::MeanRows {
                x,
                rows: rows.to_vec(),
            },
            Tensor::row_vector(out),
        ))
    }

    /// Mean over all rows.
    pub fn mean_all_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let rows: Vec<usize> = (0..self.value(x).rows()).collect();
        self.mean_rows(x, &rows)
    }

    /// log(sum(exp(x))) over every element, max-stabilized; scalar output.
    pub fn logsumexp(&mut self, x: NodeId) -> Result<NodeId> {
        let data = self.value(x).data();
        if data.is_empty() {
            return Err(Error::Contract("logsumexp of empty tensor".into()));
        }
        let max = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = data.iter().map(|v| (v - max).exp()).sum();
        let out = max + sum.ln();
        Ok(self.push(Op::LogSumExp(x), Tensor::scalar(out)))
    }

    /// Scalar at a flat index.
    pub fn pick(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        if index >= self.value(x).len() {
            return Err(Error::Contract(format!(
                "pick index {index} out of range for {} elements",
                self.value(x).len()
            )));
        }
        let v = self.value(x).data()[index];
        Ok(self.push(Op::Pick { x, index }, Tensor::scalar(v)))
    }

    /// Reverse pass from a scalar loss. Gradients for parameter leaves are
    /// accumulated additively into `store`; call [`ParamStore::zero_grads`]
    /// between steps.
    pub fn backward(&mut self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::dimension(
                "backward",
                self.value(loss).shape_str(),
                "1x1 scalar",
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            // Split borrows: read node, write earlier grads.
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Const => {}
                Op::Param(pid) => store.accumulate_grad(pid, &g),
                Op::MatMul(a, b) => {
                    let (ar, ac) = self.value(a).shape();
                    let (_, bc) = self.value(b).shape();
                    // dA = G * B^T
                    let mut da = vec![0.0; ar * ac];
                    for i in 0..ar {
                        for k in 0..ac {
                            let mut acc = 0.0;
                            for j in 0..bc {
                                acc += g[i * bc + j] * self.value(b).get(k, j);
                            }
                            da[i * ac + k] = acc;
                        }
                    }
                    // dB = A^T * G
                    let mut db = vec![0.0; ac * bc];
                    for k in 0..ac {
                        for j in 0..bc {
                            let mut acc = 0.0;
                            for i in 0..ar {
                                acc += self.value(a).get(i, k) * g[i * bc + j];
                            }
                            db[k * bc + j] = acc;
                        }
                    }
                    accumulate(&mut grads, a, &da);
                    accumulate(&mut grads, b, &db);
                }
                Op::MatMulNT(a, b) => {
                    // C = A * B^T, G is m x n; dA = G * B, dB = G^T * A
                    let (ar, ac) = self.value(a).shape();
                    let (br, _) = self.value(b).shape();
                    let mut da = vec![0.0; ar * ac];
                    for i in 0..ar {
                        for k in 0..ac {
                            let mut acc = 0.0;
                            for j in 0..br {
                                acc += g[i * br + j] * self.value(b).get(j, k);
                            }
                            da[i * ac + k] = acc;
                        }
                    }
                    let mut db = vec![0.0; br * ac];
                    for j in 0..br {
                        for k in 0..ac {
                            let mut acc = 0.0;
                            for i in 0..ar {
                                acc += g[i * br + j] * self.value(a).get(i, k);
                            }
                            db[j * ac + k] = acc;
                        }
                    }
                    accumulate(&mut grads, a, &da);
                    accumulate(&mut grads, b, &db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, a, &g);
                    accumulate(&mut grads, b, &g);
                }
                Op::Mul(a, b) => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(self.value(b).data())
                        .map(|(gi, bi)| gi * bi)
                        .collect();
                    let db: Vec<f64> = g
                        .iter()
                        .zip(self.value(a).data())
                        .map(|(gi, ai)| gi * ai)
                        .collect();
                    accumulate(&mut grads, a, &da);
                    accumulate(&mut grads, b, &db);
                }
                Op::Affine { x, scale } => {
                    let dx: Vec<f64> = g.iter().map(|gi| gi * scale).collect();
                    accumulate(&mut grads, x, &dx);
                }
                Op::Relu(x) => {
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(self.value(x).data())
                        .map(|(gi, xi)| if *xi > 0.0 { *gi } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, x, &dx);
                }
                Op::Sigmoid(x) => {
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(self.nodes[idx].value.data())
                        .map(|(gi, s)| gi * s * (1.0 - s))
                        .collect();
                    accumulate(&mut grads, x, &dx);
                }
                Op::AbsSum(x) => {
                    let gs = g[0];
                    let dx: Vec<f64> = self
                        .value(x)
                        .data()
                        .iter()
                        .map(|xi| {
                            if *xi > 0.0 {
                                gs
                            } else if *xi < 0.0 {
                                -gs
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    accumulate(&mut grads, x, &dx);
                }
                Op::SoftmaxRows(x) => {
                    let (r, c) = self.value(x).shape();
                    let y = &self.nodes[idx].value;
                    let mut dx = vec![0.0; r * c];
                    for i in 0..r {
                        let mut dot = 0.0;
                        for j in 0..c {
                            dot += g[i * c + j] * y.get(i, j);
                        }
                        for j in 0..c {
                            // y is exactly 0 at masked positions, so they get
                            // exactly zero gradient.
                            dx[i * c + j] = y.get(i, j) * (g[i * c + j] - dot);
                        }
                    }
                    accumulate(&mut grads, x, &dx);
                }
                Op::Cosine(a, b) => {
                    let gs = g[0];
                    let va = self.value(a).data().to_vec();
                    let vb = self.value(b).data().to_vec();
                    let na = self.value(a).norm();
                    let nb = self.value(b).norm();
                    let cosv = self.nodes[idx].value.data()[0];
                    let da: Vec<f64> = va
                        .iter()
                        .zip(&vb)
                        .map(|(ai, bi)| gs * (bi / (na * nb) - cosv * ai / (na * na)))
                        .collect();
                    let db: Vec<f64> = va
                        .iter()
                        .zip(&vb)
                        .map(|(ai, bi)| gs * (ai / (na * nb) - cosv * bi / (nb * nb)))
                        .collect();
                    accumulate(&mut grads, a, &da);
                    accumulate(&mut grads, b, &db);
                }
                Op::AddRowBroadcast(x, row) => {
                    let (r, c) = self.value(x).shape();
                    accumulate(&mut grads, x, &g);
                    let mut drow = vec![0.0; c];
                    for i in 0..r {
                        for j in 0..c {
                            drow[j] += g[i * c + j];
                        }
                    }
                    accumulate(&mut grads, row, &drow);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.value(p).len();
                        accumulate(&mut grads, p, &g[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::ConcatScalars(parts) => {
                    for (j, p) in parts.iter().enumerate() {
                        accumulate(&mut grads, *p, &g[j..j + 1]);
                    }
                }
                Op::MeanRows { x, rows } => {
                    let (r, c) = self.value(x).shape();
                    let n = rows.len() as f64;
                    let mut dx = vec![0.0; r * c];
                    for &i in &rows {
                        for j in 0..c {
                            dx[i * c + j] += g[j] / n;
                        }
                    }
                    accumulate(&mut grads, x, &dx);
                }
                Op::LogSumExp(x) => {
                    let gs = g[0];
                    let data = self.value(x).data();
                    let max = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = data.iter().map(|v| (v - max).exp()).sum();
                    let dx: Vec<f64> = data.iter().map(|v| gs * (v - max).exp() / sum).collect();
                    accumulate(&mut grads, x, &dx);
                }
                Op::Pick { x, index } => {
                    let mut dx = vec![0.0; self.value(x).len()];
                    dx[index] = g[0];
                    accumulate(&mut grads, x, &dx);
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], target: NodeId, g: &[f64]) {
    match &mut grads[target.0] {
        Some(existing) => {
            for (dst, src) in existing.iter_mut().zip(g) {
                *dst += src;
            }
        }
        None => grads[target.0] = Some(g.to_vec()),
    }
}
