//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records every operation in execution order, so node ids are a
//! topological order by construction. [`Tape::backward`] consumes the tape,
//! walks it once in reverse and returns the accumulated [`Gradients`].
//!
//! Besides the usual elementwise and matrix operations the tape provides the
//! edge-list primitives used for sparse attention: row gathers, per-segment
//! softmax and per-segment sums. Nothing here ever builds an `n × n` matrix.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::relation::RelationKind;
use crate::tensor::{self, Tensor};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddScalar(Var),
    MulScalar(Var, f64),
    Abs(Var),
    Concat(Vec<Var>),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Narrow {
        input: Var,
        start: usize,
    },
    LeakyRelu(Var, f64),
    Elu(Var),
    Dropout {
        input: Var,
        mask: Vec<f64>,
    },
    LogSoftmax(Var),
    Sum(Var),
    Mean(Var),
    GatherRows {
        input: Var,
        index: Arc<[usize]>,
    },
    PickColumns {
        input: Var,
        cols: Arc<[usize]>,
    },
    SegmentSoftmax {
        input: Var,
        segments: Arc<[usize]>,
        n: usize,
    },
    SegmentSum {
        input: Var,
        segments: Arc<[usize]>,
    },
    MulRows(Var, Var),
    RelationScore {
        h: Var,
        weights: Var,
        dst: Arc<[usize]>,
        src: Arc<[usize]>,
        kind: RelationKind,
    },
    PairNorm {
        input: Var,
        scale: f64,
        rms: f64,
        degenerate: bool,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Operation recorder for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a constant input.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    /// Records a trainable input whose gradient will be reported by [`Tape::backward`].
    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "input" });
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        self.push("sub", out, Op::Sub(a, b), &[a, b])
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x + c);
        self.push("add_scalar", out, Op::AddScalar(a), &[a])
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x * c);
        self.push("mul_scalar", out, Op::MulScalar(a, c), &[a])
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::abs);
        self.push("abs", out, Op::Abs(a), &[a])
    }

    /// Concatenates along the last axis. All inputs must agree on the leading axes.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Usage("concat of zero tensors".into()))?;
        let lead_shape = {
            let s = self.shape(first);
            s[..s.len().saturating_sub(1)].to_vec()
        };
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[..s.len() - 1] != lead_shape[..] {
                return Err(Error::Shape {
                    op: "concat",
                    lhs: self.shape(first).to_vec(),
                    rhs: s.to_vec(),
                });
            }
            widths.push(s[s.len() - 1]);
        }
        let lead: usize = lead_shape.iter().product();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(lead * total);
        for r in 0..lead {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead_shape;
        shape.push(total);
        let out = Tensor::new(shape, data)?;
        self.push("concat", out, Op::Concat(parts.to_vec()), parts)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        self.push("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = tensor::transpose(self.value(a))?;
        self.push("transpose", out, Op::Transpose(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape.to_vec())?;
        self.push("reshape", out, Op::Reshape(a), &[a])
    }

    /// Rows `start..start + len` along the first axis.
    pub fn narrow(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        if t.ndim() == 0 || start + len > t.rows() {
            return Err(Error::Shape {
                op: "narrow",
                lhs: t.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let w = t.row_len();
        let data = t.data()[start * w..(start + len) * w].to_vec();
        let mut shape = t.shape().to_vec();
        shape[0] = len;
        let out = Tensor::new(shape, data)?;
        self.push("narrow", out, Op::Narrow { input: a, start }, &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push("leaky_relu", out, Op::LeakyRelu(a, slope), &[a])
    }

    pub fn elu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { x.exp_m1() });
        self.push("elu", out, Op::Elu(a), &[a])
    }

    /// Inverted dropout: surviving entries are scaled by `1 / (1 - rate)`.
    ///
    /// Identity when `training` is false or `rate` is zero. When the input
    /// carries no gradient, zero entries stay zero whatever the mask says, so
    /// no random draw is spent on them.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let skip_zeros = !self.requires_grad(a);
        let input = self.value(a);
        let mut mask = Vec::with_capacity(input.numel());
        for &x in input.data() {
            // zeros of a constant input draw no random number
            if (skip_zeros && x == 0.0) || rng.random::<f64>() < rate {
                mask.push(0.0);
            } else {
                mask.push(keep_scale);
            }
        }
        let data = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::new(input.shape().to_vec(), data)?;
        self.push("dropout", out, Op::Dropout { input: a, mask }, &[a])
    }

    /// Row-wise log-softmax of a matrix.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (rows, cols) = t.expect_matrix("log_softmax")?;
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let row = t.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            data.extend(row.iter().map(|x| x - lse));
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        self.push("log_softmax", out, Op::LogSoftmax(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.numel() == 0 {
            return Err(Error::Usage("mean of an empty tensor".into()));
        }
        let m = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push("mean", Tensor::scalar(m), Op::Mean(a), &[a])
    }

    /// `out[e] = input[index[e]]` along the first axis.
    pub fn gather_rows(&mut self, a: Var, index: Arc<[usize]>) -> Result<Var> {
        let t = self.value(a);
        let rows = t.rows();
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(Error::Structural(format!(
                "gather index {bad} out of range for {rows} rows"
            )));
        }
        let out = t.select_rows(&index);
        self.push("gather_rows", out, Op::GatherRows { input: a, index }, &[a])
    }

    /// `out[i] = input[i, cols[i]]` for a matrix input.
    pub fn pick_columns(&mut self, a: Var, cols: Arc<[usize]>) -> Result<Var> {
        let t = self.value(a);
        let (rows, width) = t.expect_matrix("pick_columns")?;
        if cols.len() != rows {
            return Err(Error::Shape {
                op: "pick_columns",
                lhs: t.shape().to_vec(),
                rhs: vec![cols.len()],
            });
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= width) {
            return Err(Error::Structural(format!(
                "column {bad} out of range for width {width}"
            )));
        }
        let data = cols.iter().enumerate().map(|(i, &c)| t.get(i, c)).collect();
        self.push(
            "pick_columns",
            Tensor::vector(data),
            Op::PickColumns { input: a, cols },
            &[a],
        )
    }

    /// Softmax of a score vector within each segment (edges sharing a destination).
    ///
    /// The per-segment maximum is subtracted before exponentiation.
    pub fn segment_softmax(
        &mut self,
        scores: Var,
        segments: Arc<[usize]>,
        n: usize,
    ) -> Result<Var> {
        let t = self.value(scores);
        if t.ndim() != 1 || t.numel() != segments.len() {
            return Err(Error::Shape {
                op: "segment_softmax",
                lhs: t.shape().to_vec(),
                rhs: vec![segments.len()],
            });
        }
        check_segments(&segments, n)?;
        let out = Tensor::vector(segment_softmax_values(t.data(), &segments, n));
        self.push(
            "segment_softmax",
            out,
            Op::SegmentSoftmax {
                input: scores,
                segments,
                n,
            },
            &[scores],
        )
    }

    /// Sums rows that share a segment id into an `n`-row output; empty segments are zero.
    pub fn segment_sum(&mut self, values: Var, segments: Arc<[usize]>, n: usize) -> Result<Var> {
        let t = self.value(values);
        if t.ndim() == 0 || t.rows() != segments.len() {
            return Err(Error::Shape {
                op: "segment_sum",
                lhs: t.shape().to_vec(),
                rhs: vec![segments.len()],
            });
        }
        check_segments(&segments, n)?;
        let w = t.row_len();
        let mut shape = t.shape().to_vec();
        shape[0] = n;
        let mut out = Tensor::zeros(&shape);
        for (e, &s) in segments.iter().enumerate() {
            for (o, v) in out.row_mut(s).iter_mut().zip(t.row(e)) {
                *o += v;
            }
        }
        debug_assert_eq!(out.row_len(), w);
        self.push(
            "segment_sum",
            out,
            Op::SegmentSum {
                input: values,
                segments,
            },
            &[values],
        )
    }

    /// Scales row `e` of `values` by `weights[e]`.
    pub fn mul_rows(&mut self, values: Var, weights: Var) -> Result<Var> {
        let (v, w) = (self.value(values), self.value(weights));
        if v.ndim() == 0 || w.ndim() != 1 || v.rows() != w.numel() {
            return Err(Error::Shape {
                op: "mul_rows",
                lhs: v.shape().to_vec(),
                rhs: w.shape().to_vec(),
            });
        }
        let mut out = v.clone();
        for (e, &we) in w.data().iter().enumerate() {
            for x in out.row_mut(e) {
                *x *= we;
            }
        }
        self.push(
            "mul_rows",
            out,
            Op::MulRows(values, weights),
            &[values, weights],
        )
    }

    /// Per-edge `weights · relation(h[dst[e]], h[src[e]])`.
    ///
    /// Equivalent to gathering both endpoint rows, applying the relation and
    /// taking a dot product with `weights`, but never materialises the
    /// `edges × r·d` relation matrix.
    pub fn relation_score(
        &mut self,
        h: Var,
        weights: Var,
        dst: Arc<[usize]>,
        src: Arc<[usize]>,
        kind: RelationKind,
    ) -> Result<Var> {
        if kind.is_none() {
            return Err(Error::Usage("relation_score called with kind none".into()));
        }
        let (ht, wt) = (self.value(h), self.value(weights));
        let (n, d) = ht.expect_matrix("relation_score")?;
        if wt.numel() != kind.width_factor() * d || dst.len() != src.len() {
            return Err(Error::Shape {
                op: "relation_score",
                lhs: ht.shape().to_vec(),
                rhs: wt.shape().to_vec(),
            });
        }
        check_segments(&dst, n)?;
        check_segments(&src, n)?;
        let w = wt.data();
        let scores = dst
            .iter()
            .zip(src.iter())
            .map(|(&i, &j)| relation_dot(ht.row(i), ht.row(j), w, kind))
            .collect();
        self.push(
            "relation_score",
            Tensor::vector(scores),
            Op::RelationScore {
                h,
                weights,
                dst,
                src,
                kind,
            },
            &[h, weights],
        )
    }

    /// Centres columns, then rescales so the mean squared row norm equals `scale²`.
    ///
    /// Returns the output and whether the centred matrix was degenerate
    /// (numerically zero), in which case the output is all zeros.
    pub fn pairnorm(&mut self, a: Var, scale: f64) -> Result<(Var, bool)> {
        let t = self.value(a);
        t.expect_matrix("pairnorm")?;
        if t.rows() == 0 {
            return Err(Error::Usage("pairnorm on zero rows".into()));
        }
        let (out, rms, degenerate) = pairnorm_forward(t, scale);
        let v = self.push(
            "pairnorm",
            out,
            Op::PairNorm {
                input: a,
                scale,
                rms,
                degenerate,
            },
            &[a],
        )?;
        Ok((v, degenerate))
    }

    /// Runs reverse accumulation from a scalar `loss` and consumes the tape.
    ///
    /// Gradients add up across every use of a tensor. Parameters that do not
    /// influence the loss get an all-zero gradient.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(Error::Usage("backward on an empty tape".into()));
        }
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.nodes[loss.0].value.shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if matches!(self.nodes[idx].op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            self.backward_node(idx, &g, &mut grads)?;
        }
        let mut leaf_grads = Vec::with_capacity(self.nodes.len());
        for (node, g) in self.nodes.iter().zip(grads) {
            let g = match (&node.op, node.requires_grad) {
                (Op::Leaf, true) => {
                    let g = g.unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                    if !g.is_finite() {
                        return Err(Error::NonFinite { op: "backward" });
                    }
                    Some(g)
                }
                _ => None,
            };
            leaf_grads.push(g);
        }
        Ok(Gradients { grads: leaf_grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn backward_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let out = &self.nodes[idx].value;
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.requires_grad(*a) {
                    let ga = zip_map(g, self.value(*b), |x, y| x * y);
                    self.accumulate(grads, *a, ga);
                }
                if self.requires_grad(*b) {
                    let gb = zip_map(g, self.value(*a), |x, y| x * y);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone()),
            Op::MulScalar(a, c) => {
                let c = *c;
                self.accumulate(grads, *a, g.map(|x| x * c));
            }
            Op::Abs(a) => {
                let ga = zip_map(g, self.value(*a), |gx, x| {
                    if x > 0.0 {
                        gx
                    } else if x < 0.0 {
                        -gx
                    } else {
                        0.0
                    }
                });
                self.accumulate(grads, *a, ga);
            }
            Op::Concat(parts) => {
                let total = g.shape()[g.ndim() - 1];
                let lead = g.numel() / total.max(1);
                let mut offset = 0;
                for &p in parts {
                    let shape = self.shape(p).to_vec();
                    let w = shape[shape.len() - 1];
                    if self.requires_grad(p) {
                        let mut data = Vec::with_capacity(lead * w);
                        for r in 0..lead {
                            data.extend_from_slice(
                                &g.data()[r * total + offset..r * total + offset + w],
                            );
                        }
                        self.accumulate(grads, p, Tensor::new(shape, data)?);
                    }
                    offset += w;
                }
            }
            Op::MatMul(a, b) => {
                if self.requires_grad(*a) {
                    let ga = tensor::matmul_nt(g, self.value(*b))?;
                    self.accumulate(grads, *a, ga);
                }
                if self.requires_grad(*b) {
                    let gb = tensor::matmul_tn(self.value(*a), g)?;
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Transpose(a) => self.accumulate(grads, *a, tensor::transpose(g)?),
            Op::Reshape(a) => {
                let ga = g.clone().reshape(self.shape(*a).to_vec())?;
                self.accumulate(grads, *a, ga);
            }
            Op::Narrow { input, start } => {
                let mut ga = Tensor::zeros(self.shape(*input));
                let w = ga.row_len();
                ga.data_mut()[start * w..start * w + g.numel()].copy_from_slice(g.data());
                self.accumulate(grads, *input, ga);
            }
            Op::LeakyRelu(a, slope) => {
                let slope = *slope;
                let ga = zip_map(
                    g,
                    self.value(*a),
                    |gx, x| if x > 0.0 { gx } else { slope * gx },
                );
                self.accumulate(grads, *a, ga);
            }
            Op::Elu(a) => {
                let ga = zip_map(g, out, |gx, y| if y > 0.0 { gx } else { gx * (y + 1.0) });
                self.accumulate(grads, *a, ga);
            }
            Op::Dropout { input, mask } => {
                let data = g.data().iter().zip(mask).map(|(x, m)| x * m).collect();
                self.accumulate(grads, *input, Tensor::new(g.shape().to_vec(), data)?);
            }
            Op::LogSoftmax(a) => {
                let (rows, cols) = out.expect_matrix("log_softmax")?;
                let mut data = Vec::with_capacity(rows * cols);
                for i in 0..rows {
                    let gs: f64 = g.row(i).iter().sum();
                    data.extend(
                        g.row(i)
                            .iter()
                            .zip(out.row(i))
                            .map(|(gx, y)| gx - y.exp() * gs),
                    );
                }
                self.accumulate(grads, *a, Tensor::new(vec![rows, cols], data)?);
            }
            Op::Sum(a) => {
                let s = g.data()[0];
                self.accumulate(grads, *a, Tensor::full(self.shape(*a), s));
            }
            Op::Mean(a) => {
                let shape = self.shape(*a).to_vec();
                let n: usize = shape.iter().product();
                self.accumulate(grads, *a, Tensor::full(&shape, g.data()[0] / n as f64));
            }
            Op::GatherRows { input, index } => {
                let mut ga = Tensor::zeros(self.shape(*input));
                for (e, &i) in index.iter().enumerate() {
                    for (o, x) in ga.row_mut(i).iter_mut().zip(g.row(e)) {
                        *o += x;
                    }
                }
                self.accumulate(grads, *input, ga);
            }
            Op::PickColumns { input, cols } => {
                let mut ga = Tensor::zeros(self.shape(*input));
                let w = ga.row_len();
                for (i, &c) in cols.iter().enumerate() {
                    ga.data_mut()[i * w + c] += g.data()[i];
                }
                self.accumulate(grads, *input, ga);
            }
            Op::SegmentSoftmax { input, segments, n } => {
                let mut dot = vec![0.0; *n];
                for ((&s, gx), y) in segments.iter().zip(g.data()).zip(out.data()) {
                    dot[s] += gx * y;
                }
                let data = segments
                    .iter()
                    .zip(g.data())
                    .zip(out.data())
                    .map(|((&s, gx), y)| y * (gx - dot[s]))
                    .collect();
                self.accumulate(grads, *input, Tensor::vector(data));
            }
            Op::SegmentSum { input, segments } => {
                let ga = g.select_rows(segments);
                let ga = ga.reshape(self.shape(*input).to_vec())?;
                self.accumulate(grads, *input, ga);
            }
            Op::MulRows(values, weights) => {
                let (v, w) = (self.value(*values), self.value(*weights));
                if self.requires_grad(*values) {
                    let mut gv = g.clone();
                    for (e, &we) in w.data().iter().enumerate() {
                        for x in gv.row_mut(e) {
                            *x *= we;
                        }
                    }
                    self.accumulate(grads, *values, gv);
                }
                if self.requires_grad(*weights) {
                    let gw = (0..w.numel())
                        .map(|e| g.row(e).iter().zip(v.row(e)).map(|(a, b)| a * b).sum())
                        .collect();
                    self.accumulate(grads, *weights, Tensor::vector(gw));
                }
            }
            Op::RelationScore {
                h,
                weights,
                dst,
                src,
                kind,
            } => {
                let (ht, wt) = (self.value(*h), self.value(*weights));
                let w = wt.data();
                let need_h = self.requires_grad(*h);
                let need_w = self.requires_grad(*weights);
                let mut gh = need_h.then(|| Tensor::zeros(ht.shape()));
                let mut gw = vec![0.0; w.len()];
                for (e, (&i, &j)) in dst.iter().zip(src.iter()).enumerate() {
                    let ge = g.data()[e];
                    if ge == 0.0 {
                        continue;
                    }
                    let (hi, hj) = (ht.row(i), ht.row(j));
                    if need_w {
                        relation_weight_grad(hi, hj, ge, *kind, &mut gw);
                    }
                    if let Some(gh) = gh.as_mut() {
                        relation_input_grad(gh, (i, j), (hi, hj), w, ge, *kind);
                    }
                }
                if let Some(gh) = gh {
                    self.accumulate(grads, *h, gh);
                }
                if need_w {
                    let gw = Tensor::new(wt.shape().to_vec(), gw)?;
                    self.accumulate(grads, *weights, gw);
                }
            }
            Op::PairNorm {
                input,
                scale,
                rms,
                degenerate,
            } => {
                let x = self.value(*input);
                let ga = if *degenerate {
                    Tensor::zeros(x.shape())
                } else {
                    pairnorm_backward(x, g, *scale, *rms)
                };
                self.accumulate(grads, *input, ga);
            }
        }
        Ok(())
    }
}

/// Gradients of every trainable leaf, produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a parameter leaf; `None` for constants and intermediate results.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn check_segments(segments: &[usize], n: usize) -> Result<()> {
    match segments.iter().find(|&&s| s >= n) {
        Some(&bad) => Err(Error::Structural(format!(
            "segment index {bad} out of range for {n} nodes"
        ))),
        None => Ok(()),
    }
}

pub(crate) fn segment_softmax_values(scores: &[f64], segments: &[usize], n: usize) -> Vec<f64> {
    let mut max = vec![f64::NEG_INFINITY; n];
    for (&s, &x) in segments.iter().zip(scores) {
        max[s] = max[s].max(x);
    }
    let mut out: Vec<f64> = segments
        .iter()
        .zip(scores)
        .map(|(&s, &x)| (x - max[s]).exp())
        .collect();
    let mut denom = vec![0.0; n];
    for (&s, &e) in segments.iter().zip(&out) {
        denom[s] += e;
    }
    for (o, &s) in out.iter_mut().zip(segments) {
        *o /= denom[s];
    }
    out
}

fn relation_dot(hi: &[f64], hj: &[f64], w: &[f64], kind: RelationKind) -> f64 {
    let d = hi.len();
    let pairs = hi.iter().zip(hj);
    match kind {
        RelationKind::None => 0.0,
        RelationKind::Difference => pairs.zip(w).map(|((a, b), w)| w * (a - b)).sum(),
        RelationKind::AbsDifference => pairs.zip(w).map(|((a, b), w)| w * (a - b).abs()).sum(),
        RelationKind::ElemProduct => pairs.zip(w).map(|((a, b), w)| w * a * b).sum(),
        RelationKind::AbsDiffAndProduct => {
            let (w_abs, w_prod) = w.split_at(d);
            pairs
                .zip(w_abs.iter().zip(w_prod))
                .map(|((a, b), (wa, wp))| wa * (a - b).abs() + wp * a * b)
                .sum()
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn relation_weight_grad(hi: &[f64], hj: &[f64], ge: f64, kind: RelationKind, gw: &mut [f64]) {
    let d = hi.len();
    for k in 0..d {
        let (a, b) = (hi[k], hj[k]);
        match kind {
            RelationKind::None => {}
            RelationKind::Difference => gw[k] += ge * (a - b),
            RelationKind::AbsDifference => gw[k] += ge * (a - b).abs(),
            RelationKind::ElemProduct => gw[k] += ge * a * b,
            RelationKind::AbsDiffAndProduct => {
                gw[k] += ge * (a - b).abs();
                gw[d + k] += ge * a * b;
            }
        }
    }
}

fn relation_input_grad(
    gh: &mut Tensor,
    (i, j): (usize, usize),
    (hi, hj): (&[f64], &[f64]),
    w: &[f64],
    ge: f64,
    kind: RelationKind,
) {
    let d = hi.len();
    let w_row = gh.row_len();
    let data = gh.data_mut();
    for k in 0..d {
        let (a, b) = (hi[k], hj[k]);
        // d/dh_i and d/dh_j of the k-th term(s)
        let (di, dj) = match kind {
            RelationKind::None => (0.0, 0.0),
            RelationKind::Difference => (w[k], -w[k]),
            RelationKind::AbsDifference => {
                let s = w[k] * sign(a - b);
                (s, -s)
            }
            RelationKind::ElemProduct => (w[k] * b, w[k] * a),
            RelationKind::AbsDiffAndProduct => {
                let s = w[k] * sign(a - b);
                (s + w[d + k] * b, -s + w[d + k] * a)
            }
        };
        data[i * w_row + k] += ge * di;
        data[j * w_row + k] += ge * dj;
    }
}

fn pairnorm_forward(x: &Tensor, scale: f64) -> (Tensor, f64, bool) {
    let (n, d) = (x.rows(), x.row_len());
    let centred = centre_columns(x);
    let ms_centred = centred.data().iter().map(|v| v * v).sum::<f64>() / n as f64;
    let ms_input = x.data().iter().map(|v| v * v).sum::<f64>() / n as f64;
    let rms = ms_centred.sqrt();
    if rms <= 1e-12 * ms_input.sqrt() {
        return (Tensor::zeros(&[n, d]), rms, true);
    }
    (centred.map(|v| scale * v / rms), rms, false)
}

fn centre_columns(x: &Tensor) -> Tensor {
    let (n, d) = (x.rows(), x.row_len());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut out = x.clone();
    for i in 0..n {
        for (o, m) in out.row_mut(i).iter_mut().zip(&mean) {
            *o -= m;
        }
    }
    out
}

fn pairnorm_backward(x: &Tensor, g: &Tensor, scale: f64, rms: f64) -> Tensor {
    // y = s·c/r with r² = Σc²/n, so dL/dc = (s/r)·g − s·⟨g, c⟩/(n·r³)·c,
    // followed by the centring Jacobian (subtract column means).
    let n = x.rows() as f64;
    let c = centre_columns(x);
    let gc_dot: f64 = g.data().iter().zip(c.data()).map(|(a, b)| a * b).sum();
    let coef = scale * gc_dot / (n * rms.powi(3));
    let gc = zip_map(g, &c, |gx, cx| scale / rms * gx - coef * cx);
    centre_columns(&gc)
}
