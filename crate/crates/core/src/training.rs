//! Semi-supervised training: masked cross-entropy, Adam with L2 weight decay,
//! and a fixed-length run with best-validation model selection.
//!
//! A run trains for exactly `epochs` optimizer steps (no early stopping) and
//! evaluates the parameters after every step. The reported test accuracy and
//! representations come from the epoch with the highest validation accuracy,
//! the earliest one on ties. Epochs are numbered from 0.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::dataset::{GraphDataset, MissingSpec};
use crate::error::{Error, Result};
use crate::metrics::accuracy;
use crate::model::{GatModel, ModelConfig, Prediction};
use crate::tensor::Tensor;

// generator streams split off a run seed
const INIT_STREAM: u64 = 0;
const DROPOUT_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Scale every non-zero feature row to unit L1 norm before training.
    pub row_normalize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            weight_decay: 5e-4,
            epochs: 1000,
            seeds: vec![0, 1, 2, 3],
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            row_normalize: true,
        }
    }
}

impl TrainConfig {
    /// Checks the configuration. A zero learning rate is accepted so that a
    /// run can be frozen for inspection; negative or non-finite values are not.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            ));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        Ok(())
    }
}

/// Mean over `mask` of `−log softmax(logits_i)[y_i]`.
pub fn masked_cross_entropy(
    tape: &mut Tape,
    logits: Var,
    labels: &[usize],
    mask: &Arc<[usize]>,
) -> Result<Var> {
    if mask.is_empty() {
        return Err(Error::Usage("cross-entropy over an empty node set".into()));
    }
    let picked_labels: Arc<[usize]> = mask.iter().map(|&i| labels[i]).collect();
    let rows = tape.gather_rows(logits, mask.clone())?;
    let logp = tape.log_softmax(rows)?;
    let picked = tape.pick_columns(logp, picked_labels)?;
    let mean = tape.mean(picked)?;
    tape.mul_scalar(mean, -1.0)
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    /// Steps taken so far.
    pub t: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params
            .into_iter()
            .map(|p| Tensor::zeros(p.shape()))
            .collect();
        Self {
            v: m.clone(),
            m,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Weight decay is an L2 term added to the
/// gradient (`g + wd·θ`) before the moment updates.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Usage(format!(
            "adam: {} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Shape {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (k, p) in params.iter_mut().enumerate() {
        let (m, v) = (state.m[k].data_mut(), state.v[k].data_mut());
        for (i, theta) in p.data_mut().iter_mut().enumerate() {
            let g = grads[k].data()[i] + config.weight_decay * *theta;
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *theta -= config.learning_rate * m_hat / (v_hat.sqrt() + config.eps);
        }
        if !p.is_finite() {
            return Err(Error::NonFinite { op: "adam_step" });
        }
    }
    Ok(())
}

/// The dataset a run actually trains on: features erased per `missing`, then
/// optionally row-normalised.
pub fn prepare_inputs(
    ds: &GraphDataset,
    missing: &MissingSpec,
    row_normalize: bool,
) -> Result<GraphDataset> {
    let erased = ds.apply_missing(missing)?;
    Ok(if row_normalize {
        erased.row_normalize()
    } else {
        erased
    })
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub seed: u64,
    pub train_loss: Vec<f64>,
    pub val_acc: Vec<f64>,
    pub test_acc: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    /// Test accuracy at `best_epoch`.
    pub test_accuracy: f64,
    pub optimizer_steps: u64,
    /// Parameters from `best_epoch`.
    pub model: GatModel,
    /// Evaluation pass of `model`; its representation feeds the metrics.
    pub prediction: Prediction,
    /// Features the model was trained on, after erasure and normalisation.
    pub features: Tensor,
    pub elapsed_s: f64,
}

impl RunResult {
    /// Everything except wall-clock time, which is the only field allowed to
    /// differ between two runs with the same inputs.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.train_loss == other.train_loss
            && self.val_acc == other.val_acc
            && self.test_acc == other.test_acc
            && self.best_epoch == other.best_epoch
            && self.best_val_acc == other.best_val_acc
            && self.test_accuracy == other.test_accuracy
            && self.optimizer_steps == other.optimizer_steps
            && self.model == other.model
            && self.prediction == other.prediction
            && self.features == other.features
    }
}

/// Trains one model from `seed` and returns its trajectories and the
/// best-validation parameters.
pub fn train_run(
    ds: &GraphDataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    missing: &MissingSpec,
    seed: u64,
) -> Result<RunResult> {
    model_config.validate()?;
    train_config.validate()?;
    let started = Instant::now();
    let data = prepare_inputs(ds, missing, train_config.row_normalize)?;
    if data.train_idx.is_empty() || data.val_idx.is_empty() || data.test_idx.is_empty() {
        return Err(Error::Structural(
            "train, val and test splits must be non-empty".into(),
        ));
    }
    let train_mask: Arc<[usize]> = data.train_idx.iter().copied().collect();

    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    init_rng.set_stream(INIT_STREAM);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed);
    dropout_rng.set_stream(DROPOUT_STREAM);

    let mut model = GatModel::new(
        model_config.clone(),
        data.num_features(),
        data.num_classes,
        &mut init_rng,
    )?;
    let mut adam = AdamState::new(model.named_params().into_iter().map(|(_, t)| t));

    let epochs = train_config.epochs;
    let mut train_loss = Vec::with_capacity(epochs);
    let mut val_acc = Vec::with_capacity(epochs);
    let mut test_acc = Vec::with_capacity(epochs);
    let mut best: Option<(usize, f64, GatModel, Prediction)> = None;

    for epoch in 0..epochs {
        let diverged = |e: Error| match e {
            Error::NonFinite { .. } | Error::NonFiniteInLayer { .. } => Error::Diverged {
                epoch,
                source: Box::new(e),
            },
            other => other,
        };
        let grads = {
            let mut tape = Tape::new();
            let x = tape.constant(data.features.clone())?;
            let vars = model.register(&mut tape)?;
            let out = model
                .forward(&mut tape, x, &data.edges, &vars, true, &mut dropout_rng)
                .map_err(diverged)?;
            let loss = masked_cross_entropy(&mut tape, out.logits, &data.labels, &train_mask)
                .map_err(diverged)?;
            train_loss.push(tape.value(loss).data()[0]);
            let flat = GatModel::flat_vars(&vars);
            let mut g = tape.backward(loss).map_err(diverged)?;
            flat.into_iter()
                .map(|v| {
                    g.take(v)
                        .ok_or_else(|| Error::Usage("parameter without gradient".into()))
                })
                .collect::<Result<Vec<_>>>()?
        };
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(diverged(Error::NonFinite { op: "backward" }));
        }
        adam_step(&mut model.params_mut(), &grads, &mut adam, train_config).map_err(diverged)?;

        let pred = model
            .predict(&data.features, &data.edges)
            .map_err(diverged)?;
        let va = accuracy(&pred.logits, &data.labels, &data.val_idx)?;
        let te = accuracy(&pred.logits, &data.labels, &data.test_idx)?;
        val_acc.push(va);
        test_acc.push(te);
        if best.as_ref().is_none_or(|b| va > b.1) {
            best = Some((epoch, va, model.clone(), pred));
        }
    }

    let (best_epoch, best_val_acc, best_model, prediction) = best.expect("epochs ≥ 1");
    Ok(RunResult {
        seed,
        test_accuracy: test_acc[best_epoch],
        train_loss,
        val_acc,
        test_acc,
        best_epoch,
        best_val_acc,
        optimizer_steps: adam.t,
        model: best_model,
        prediction,
        features: data.features,
        elapsed_s: started.elapsed().as_secs_f64(),
    })
}
