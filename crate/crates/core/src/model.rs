//! Relational graph attention.
//!
//! Each layer scores a directed edge `j → i` with
//!
//! ```text
//! e_ij = leaky_relu(aᵀ [W′h_i ‖ W′h_j ‖ W″ relation(h_i, h_j)])
//! ```
//!
//! normalises the scores over the incoming edges of `i` with a softmax, and
//! aggregates `Σ_j α_ij W′h_j`. With [`RelationKind::None`] the third block
//! disappears and the layer is a plain single-head graph attention layer.
//!
//! The attention vector is stored as one tensor `a = [a_dst ‖ a_src ‖ a_rel]`.
//! The relation block is evaluated as `(W″ᵀ a_rel) · relation(h_i, h_j)`,
//! which is the same number as `a_relᵀ W″ relation(h_i, h_j)` but needs no
//! per-edge projection.

pub mod checkpoint;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::dataset::EdgeIndex;
use crate::error::{Error, Result};
pub use crate::relation::{relation, RelationKind};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    None,
    PairNorm,
}

impl Normalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::None => "none",
            Normalization::PairNorm => "pairnorm",
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "pairnorm" => Ok(Normalization::PairNorm),
            _ => Err(Error::Config(format!("unknown normalization {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub relation: RelationKind,
    pub normalization: Normalization,
    pub pairnorm_scale: f64,
    pub dropout: f64,
    pub leaky_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_layers: 2,
            hidden_dim: 64,
            relation: RelationKind::None,
            normalization: Normalization::None,
            pairnorm_scale: 1.0,
            dropout: 0.6,
            leaky_slope: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=64).contains(&self.num_layers) {
            return Err(Error::Config(format!(
                "num_layers {} outside [1, 64]",
                self.num_layers
            )));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if !(self.pairnorm_scale > 0.0 && self.pairnorm_scale.is_finite()) {
            return Err(Error::Config("pairnorm_scale must be positive".into()));
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::Config("leaky_slope must be finite".into()));
        }
        Ok(())
    }

    /// `(d_in, d_out)` of every layer: `in_dim → hidden → … → hidden → num_classes`.
    pub fn layer_dims(&self, in_dim: usize, num_classes: usize) -> Vec<(usize, usize)> {
        (0..self.num_layers)
            .map(|l| {
                let d_in = if l == 0 { in_dim } else { self.hidden_dim };
                let d_out = if l + 1 == self.num_layers {
                    num_classes
                } else {
                    self.hidden_dim
                };
                (d_in, d_out)
            })
            .collect()
    }
}

/// Parameters of one attention layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    /// `W′`, shape `d_out × d_in`.
    pub w_self: Tensor,
    /// `W″`, shape `d_out × r·d_in`; absent without a relation term.
    pub w_rel: Option<Tensor>,
    /// `[a_dst ‖ a_src ‖ a_rel]`, length `3·d_out` (or `2·d_out` without a relation term).
    pub attn: Tensor,
}

impl LayerParams {
    /// Glorot-uniform initialisation of every matrix; the attention vector
    /// uses a fan-out of one.
    pub fn glorot<R: Rng + ?Sized>(
        d_in: usize,
        d_out: usize,
        kind: RelationKind,
        rng: &mut R,
    ) -> Self {
        let w_self = glorot(&[d_out, d_in], d_in, d_out, rng);
        let r = kind.width_factor();
        let w_rel = (r > 0).then(|| glorot(&[d_out, r * d_in], r * d_in, d_out, rng));
        let blocks = if r > 0 { 3 } else { 2 };
        let attn = glorot(&[blocks * d_out], blocks * d_out, 1, rng);
        Self {
            w_self,
            w_rel,
            attn,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.w_self.row_len(), self.w_self.rows())
    }

    pub fn validate(&self, kind: RelationKind) -> Result<()> {
        let (d_in, d_out) = self.dims();
        let r = kind.width_factor();
        let rel_ok = match &self.w_rel {
            None => r == 0,
            Some(w) => r > 0 && w.shape() == [d_out, r * d_in],
        };
        let blocks = if r > 0 { 3 } else { 2 };
        if !rel_ok || self.attn.shape() != [blocks * d_out] || self.w_self.ndim() != 2 {
            return Err(Error::Config(format!(
                "layer parameters do not fit d_in={d_in}, d_out={d_out}, relation={kind}"
            )));
        }
        let all_finite = self.w_self.is_finite()
            && self.attn.is_finite()
            && self.w_rel.as_ref().is_none_or(Tensor::is_finite);
        if !all_finite {
            return Err(Error::NonFinite { op: "parameters" });
        }
        Ok(())
    }

    pub fn register(&self, tape: &mut Tape) -> Result<LayerVars> {
        Ok(LayerVars {
            w_self: tape.param(self.w_self.clone())?,
            w_rel: self.w_rel.clone().map(|w| tape.param(w)).transpose()?,
            attn: tape.param(self.attn.clone())?,
        })
    }
}

fn glorot<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// Tape handles of one layer's parameters.
#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub w_self: Var,
    pub w_rel: Option<Var>,
    pub attn: Var,
}

/// Pre-softmax edge scores and the projected node features `W′h`.
#[derive(Clone, Copy, Debug)]
pub struct EdgeScores {
    pub scores: Var,
    pub projected: Var,
}

/// Scores every edge `j → i` of `edges` from layer input `h`.
pub fn edge_scores(
    tape: &mut Tape,
    h: Var,
    edges: &EdgeIndex,
    vars: &LayerVars,
    kind: RelationKind,
    slope: f64,
) -> Result<EdgeScores> {
    let h_shape = tape.value(h).shape().to_vec();
    let w_shape = tape.value(vars.w_self).shape().to_vec();
    let (d_in, d_out) = (w_shape[1], w_shape[0]);
    if h_shape.len() != 2 || h_shape[1] != d_in || h_shape[0] != edges.num_nodes() {
        return Err(Error::Shape {
            op: "edge_scores",
            lhs: h_shape,
            rhs: w_shape,
        });
    }
    if kind.is_none() != vars.w_rel.is_none() {
        return Err(Error::Config(format!(
            "relation {kind} does not match the layer parameters"
        )));
    }

    let w_t = tape.transpose(vars.w_self)?;
    let projected = tape.matmul(h, w_t)?;

    let a_dst = tape.narrow(vars.attn, 0, d_out)?;
    let a_dst = tape.reshape(a_dst, &[d_out, 1])?;
    let a_src = tape.narrow(vars.attn, d_out, d_out)?;
    let a_src = tape.reshape(a_src, &[d_out, 1])?;
    let n = edges.num_nodes();
    let s_dst = tape.matmul(projected, a_dst)?;
    let s_dst = tape.reshape(s_dst, &[n])?;
    let s_src = tape.matmul(projected, a_src)?;
    let s_src = tape.reshape(s_src, &[n])?;
    let e_dst = tape.gather_rows(s_dst, edges.dst().clone())?;
    let e_src = tape.gather_rows(s_src, edges.src().clone())?;
    let mut raw = tape.add(e_dst, e_src)?;

    if let Some(w_rel) = vars.w_rel {
        let r_width = kind.width_factor() * d_in;
        let a_rel = tape.narrow(vars.attn, 2 * d_out, d_out)?;
        let a_rel = tape.reshape(a_rel, &[d_out, 1])?;
        let w_rel_t = tape.transpose(w_rel)?;
        let folded = tape.matmul(w_rel_t, a_rel)?;
        let folded = tape.reshape(folded, &[r_width])?;
        let rel = tape.relation_score(h, folded, edges.dst().clone(), edges.src().clone(), kind)?;
        raw = tape.add(raw, rel)?;
    }

    let scores = tape.leaky_relu(raw, slope)?;
    Ok(EdgeScores { scores, projected })
}

#[derive(Clone, Copy, Debug)]
pub struct LayerOutput {
    pub out: Var,
    /// Attention coefficients per edge, before attention dropout.
    pub alpha: Var,
    /// Set when PairNorm met a numerically zero centred matrix.
    pub pairnorm_degenerate: bool,
}

/// One attention layer. Hidden layers apply ELU and then, if configured,
/// PairNorm; the final layer returns raw logits.
#[allow(clippy::too_many_arguments)]
pub fn gat_layer_forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    h: Var,
    edges: &EdgeIndex,
    vars: &LayerVars,
    config: &ModelConfig,
    is_final: bool,
    training: bool,
    rng: &mut R,
) -> Result<LayerOutput> {
    let h = tape.dropout(h, config.dropout, training, rng)?;
    let EdgeScores { scores, projected } =
        edge_scores(tape, h, edges, vars, config.relation, config.leaky_slope)?;
    let n = edges.num_nodes();
    let alpha = tape.segment_softmax(scores, edges.dst().clone(), n)?;
    let alpha_d = tape.dropout(alpha, config.dropout, training, rng)?;
    let messages = tape.gather_rows(projected, edges.src().clone())?;
    let messages = tape.mul_rows(messages, alpha_d)?;
    let mut out = tape.segment_sum(messages, edges.dst().clone(), n)?;
    let mut pairnorm_degenerate = false;
    if !is_final {
        out = tape.elu(out)?;
        if config.normalization == Normalization::PairNorm {
            let (normed, degenerate) = tape.pairnorm(out, config.pairnorm_scale)?;
            out = normed;
            pairnorm_degenerate = degenerate;
        }
    }
    Ok(LayerOutput {
        out,
        alpha,
        pairnorm_degenerate,
    })
}

/// Column-centre `h` and rescale it to mean squared row norm `scale²`.
/// The flag reports a degenerate (all-zero) centred matrix.
pub fn pairnorm(h: &Tensor, scale: f64) -> Result<(Tensor, bool)> {
    let mut tape = Tape::new();
    let v = tape.constant(h.clone())?;
    let (out, degenerate) = tape.pairnorm(v, scale)?;
    Ok((tape.value(out).clone(), degenerate))
}

/// Tape handles produced by [`GatModel::forward`].
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub logits: Var,
    /// Output of every hidden layer, in order.
    pub hidden: Vec<Var>,
    /// Attention coefficients of every layer.
    pub alpha: Vec<Var>,
    pub pairnorm_degenerate: bool,
}

impl ForwardOutput {
    /// The representation handed to the output layer, or the logits for a
    /// single-layer model.
    pub fn representation(&self) -> Var {
        self.hidden.last().copied().unwrap_or(self.logits)
    }
}

/// Plain-value results of an evaluation pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub logits: Tensor,
    pub hidden: Vec<Tensor>,
    pub alpha: Vec<Tensor>,
}

impl Prediction {
    pub fn representation(&self) -> &Tensor {
        self.hidden.last().unwrap_or(&self.logits)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatModel {
    pub config: ModelConfig,
    pub layers: Vec<LayerParams>,
}

impl GatModel {
    pub fn new<R: Rng + ?Sized>(
        config: ModelConfig,
        in_dim: usize,
        num_classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_dims(in_dim, num_classes)
            .into_iter()
            .map(|(d_in, d_out)| LayerParams::glorot(d_in, d_out, config.relation, rng))
            .collect();
        Ok(Self { config, layers })
    }

    pub fn from_layers(config: ModelConfig, layers: Vec<LayerParams>) -> Result<Self> {
        config.validate()?;
        if layers.len() != config.num_layers {
            return Err(Error::Config(format!(
                "{} layers given for num_layers={}",
                layers.len(),
                config.num_layers
            )));
        }
        for pair in layers.windows(2) {
            if pair[0].dims().1 != pair[1].dims().0 {
                return Err(Error::Config("layer dimensions do not chain".into()));
            }
        }
        for layer in &layers {
            layer.validate(config.relation)?;
        }
        Ok(Self { config, layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].dims().0
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].dims().1
    }

    /// Parameter tensors in declaration order: per layer `w_self`, `w_rel`
    /// (when present), `attn`.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.w_self"), &layer.w_self));
            if let Some(w) = &layer.w_rel {
                out.push((format!("layer{l}.w_rel"), w));
            }
            out.push((format!("layer{l}.attn"), &layer.attn));
        }
        out
    }

    /// Mutable parameter tensors, same order as [`named_params`](Self::named_params).
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(&mut layer.w_self);
            if let Some(w) = &mut layer.w_rel {
                out.push(w);
            }
            out.push(&mut layer.attn);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn register(&self, tape: &mut Tape) -> Result<Vec<LayerVars>> {
        self.layers.iter().map(|l| l.register(tape)).collect()
    }

    /// Tape variables in the same order as [`named_params`](Self::named_params).
    pub fn flat_vars(vars: &[LayerVars]) -> Vec<Var> {
        let mut out = Vec::new();
        for v in vars {
            out.push(v.w_self);
            if let Some(w) = v.w_rel {
                out.push(w);
            }
            out.push(v.attn);
        }
        out
    }

    /// Stacked forward pass. Numeric failures are tagged with the 1-based layer index.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        x: Var,
        edges: &EdgeIndex,
        vars: &[LayerVars],
        training: bool,
        rng: &mut R,
    ) -> Result<ForwardOutput> {
        let mut h = x;
        let mut hidden = Vec::with_capacity(vars.len().saturating_sub(1));
        let mut alpha = Vec::with_capacity(vars.len());
        let mut degenerate = false;
        for (l, lv) in vars.iter().enumerate() {
            let is_final = l + 1 == vars.len();
            let out = gat_layer_forward(tape, h, edges, lv, &self.config, is_final, training, rng)
                .map_err(|e| match e {
                    Error::NonFinite { op } => Error::NonFiniteInLayer { layer: l + 1, op },
                    other => other,
                })?;
            alpha.push(out.alpha);
            degenerate |= out.pairnorm_degenerate;
            h = out.out;
            if !is_final {
                hidden.push(h);
            }
        }
        Ok(ForwardOutput {
            logits: h,
            hidden,
            alpha,
            pairnorm_degenerate: degenerate,
        })
    }

    /// Deterministic evaluation pass (no dropout).
    pub fn predict(&self, features: &Tensor, edges: &EdgeIndex) -> Result<Prediction> {
        let mut tape = Tape::new();
        let x = tape.constant(features.clone())?;
        let vars = self.register(&mut tape)?;
        // dropout is the identity outside training, so the generator is never drawn from
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut tape, x, edges, &vars, false, &mut rng)?;
        Ok(Prediction {
            logits: tape.value(out.logits).clone(),
            hidden: out.hidden.iter().map(|&v| tape.value(v).clone()).collect(),
            alpha: out.alpha.iter().map(|&v| tape.value(v).clone()).collect(),
        })
    }
}
