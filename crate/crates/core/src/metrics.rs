//! Accuracy and over-smoothing measures.
//!
//! All pairwise measures are brute-force `O(n²)`; callers cap `n` with
//! [`sample_nodes`] on large graphs.
//!
//! - **row-diff**: mean pairwise distance between representation rows.
//! - **col-diff**: columns are scaled to unit L1 norm, then the mean pairwise
//!   L1 distance between columns is taken.
//! - **group distance ratio**: mean inter-class distance over mean
//!   intra-class distance, both regularised by `1e-12`.
//! - **instance information gain**: mutual information between inputs and
//!   representations, estimated with the Kraskov–Stögbauer–Grassberger
//!   k-nearest-neighbour estimator (first variant, `k = 3`, max-norm over the
//!   two Euclidean spaces). Values are in nats.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_SAMPLE_CAP: usize = 1000;
pub const GROUP_EPS: f64 = 1e-12;
pub const KSG_NEIGHBOURS: usize = 3;
const MIN_INFO_SAMPLE: usize = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    #[default]
    Euclidean,
    L1,
}

impl Distance {
    pub fn between(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Distance::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

/// Fraction of `mask` nodes whose arg-max logit is the label. Ties go to the
/// lowest class index.
pub fn accuracy(logits: &Tensor, labels: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::Usage("accuracy over an empty node set".into()));
    }
    let mut correct = 0usize;
    for &i in mask {
        if argmax(logits.row(i)) == labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / mask.len() as f64)
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

pub fn row_diff(h: &Tensor) -> Result<f64> {
    row_diff_with(h, Distance::Euclidean)
}

pub fn row_diff_with(h: &Tensor, distance: Distance) -> Result<f64> {
    let n = h.rows();
    if n < 2 {
        return Err(Error::UndefinedMetric(format!(
            "row-diff needs 2 rows, got {n}"
        )));
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += distance.between(h.row(i), h.row(j));
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

pub fn col_diff(h: &Tensor) -> Result<f64> {
    let (n, d) = (h.rows(), h.row_len());
    if d < 2 {
        return Err(Error::UndefinedMetric(format!(
            "col-diff needs 2 columns, got {d}"
        )));
    }
    // column-major copy, each column scaled to unit L1 norm
    let mut cols = vec![vec![0.0; n]; d];
    for (i, row) in (0..n).map(|i| (i, h.row(i))) {
        for (k, &v) in row.iter().enumerate() {
            cols[k][i] = v;
        }
    }
    for col in &mut cols {
        let norm: f64 = col.iter().map(|v| v.abs()).sum();
        if norm > 0.0 {
            col.iter_mut().for_each(|v| *v /= norm);
        }
    }
    let mut total = 0.0;
    for a in 0..d {
        for b in a + 1..d {
            total += Distance::L1.between(&cols[a], &cols[b]);
        }
    }
    Ok(total / (d * (d - 1) / 2) as f64)
}

/// Mean inter-class and intra-class Euclidean distances, in that order.
///
/// Intra averages the per-class mean over classes with at least two members;
/// inter averages the per-pair mean over unordered pairs of present classes.
pub fn group_distances(h: &Tensor, labels: &[usize]) -> Result<(f64, f64)> {
    let n = h.rows();
    if labels.len() != n {
        return Err(Error::Shape {
            op: "group_distances",
            lhs: h.shape().to_vec(),
            rhs: vec![labels.len()],
        });
    }
    let c = labels.iter().max().map_or(0, |&m| m + 1);
    let mut sums = vec![vec![0.0; c]; c];
    let mut counts = vec![vec![0usize; c]; c];
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (labels[i].min(labels[j]), labels[i].max(labels[j]));
            sums[a][b] += Distance::Euclidean.between(h.row(i), h.row(j));
            counts[a][b] += 1;
        }
    }
    let mut present = vec![0usize; c];
    for &y in labels {
        present[y] += 1;
    }
    let classes: Vec<usize> = (0..c).filter(|&k| present[k] > 0).collect();
    if classes.len() < 2 {
        return Err(Error::UndefinedMetric(
            "group distance ratio needs at least two classes".into(),
        ));
    }
    let mean_of = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let intra: Vec<f64> = classes
        .iter()
        .filter(|&&k| counts[k][k] > 0)
        .map(|&k| sums[k][k] / counts[k][k] as f64)
        .collect();
    let mut inter = Vec::new();
    for (x, &a) in classes.iter().enumerate() {
        for &b in &classes[x + 1..] {
            inter.push(sums[a][b] / counts[a][b] as f64);
        }
    }
    Ok((mean_of(&inter), mean_of(&intra)))
}

/// `(inter + ε) / (intra + ε)`; all-identical embeddings give exactly 1.
pub fn group_distance_ratio(h: &Tensor, labels: &[usize]) -> Result<f64> {
    let (inter, intra) = group_distances(h, labels)?;
    Ok((inter + GROUP_EPS) / (intra + GROUP_EPS))
}

/// Nodes to measure: all of them when `n ≤ cap`, else `cap` distinct nodes
/// drawn from `seed`, returned in ascending order.
pub fn sample_nodes(n: usize, cap: usize, seed: u64) -> Result<Vec<usize>> {
    if cap < 2 {
        return Err(Error::Usage(format!(
            "sample cap must be at least 2, got {cap}"
        )));
    }
    if n <= cap {
        return Ok((0..n).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, cap).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoGain {
    pub nats: f64,
    /// One of the two spaces collapsed to a single point; `nats` is 0.
    pub degenerate: bool,
}

fn pairwise_euclidean(t: &Tensor, nodes: &[usize]) -> Vec<f64> {
    let m = nodes.len();
    let mut out = vec![0.0; m * m];
    for a in 0..m {
        for b in a + 1..m {
            let d = Distance::Euclidean.between(t.row(nodes[a]), t.row(nodes[b]));
            out[a * m + b] = d;
            out[b * m + a] = d;
        }
    }
    out
}

/// Mutual information between rows of `x` and rows of `h` over at most
/// `sample_cap` nodes drawn from `seed`.
pub fn instance_info_gain(
    x: &Tensor,
    h: &Tensor,
    sample_cap: usize,
    seed: u64,
) -> Result<InfoGain> {
    if x.rows() != h.rows() {
        return Err(Error::Shape {
            op: "instance_info_gain",
            lhs: x.shape().to_vec(),
            rhs: h.shape().to_vec(),
        });
    }
    let nodes = sample_nodes(x.rows(), sample_cap, seed)?;
    let m = nodes.len();
    if m < MIN_INFO_SAMPLE {
        return Err(Error::UndefinedMetric(format!(
            "information gain needs {MIN_INFO_SAMPLE} nodes, got {m}"
        )));
    }
    let dx = pairwise_euclidean(x, &nodes);
    let dh = pairwise_euclidean(h, &nodes);
    if dx.iter().all(|&d| d == 0.0) || dh.iter().all(|&d| d == 0.0) {
        return Ok(InfoGain {
            nats: 0.0,
            degenerate: true,
        });
    }
    let k = KSG_NEIGHBOURS.min(m - 1);
    let mut joint: Vec<(f64, usize)> = Vec::with_capacity(m - 1);
    let mut acc = 0.0;
    for i in 0..m {
        joint.clear();
        for j in (0..m).filter(|&j| j != i) {
            joint.push((dx[i * m + j].max(dh[i * m + j]), j));
        }
        // k-th neighbour in the joint max-norm, ties broken by node position
        let (_, &mut (eps, _), _) =
            joint.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let n_x = (0..m).filter(|&j| j != i && dx[i * m + j] < eps).count();
        let n_h = (0..m).filter(|&j| j != i && dh[i * m + j] < eps).count();
        acc += digamma((n_x + 1) as f64) + digamma((n_h + 1) as f64);
    }
    let nats = digamma(k as f64) + digamma(m as f64) - acc / m as f64;
    Ok(InfoGain {
        nats,
        degenerate: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub sample_cap: usize,
    pub sample_seed: u64,
    pub row_distance: Distance,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            sample_cap: DEFAULT_SAMPLE_CAP,
            sample_seed: 0,
            row_distance: Distance::Euclidean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub row_diff: f64,
    pub col_diff: f64,
    pub group_distance_ratio: f64,
    pub instance_info_gain: f64,
    pub info_gain_degenerate: bool,
    pub sample_size: usize,
    pub sample_seed: u64,
}

/// Inputs to [`evaluate`]: the features the model saw, its measured
/// representation and logits, and the labelled test set.
pub struct Evaluation<'a> {
    pub features: &'a Tensor,
    pub representation: &'a Tensor,
    pub logits: &'a Tensor,
    pub labels: &'a [usize],
    pub test_idx: &'a [usize],
}

/// Test accuracy plus every over-smoothing measure on one shared node sample.
pub fn evaluate(e: &Evaluation<'_>, config: &MetricsConfig) -> Result<MetricsReport> {
    let accuracy = accuracy(e.logits, e.labels, e.test_idx)?;
    let nodes = sample_nodes(
        e.representation.rows(),
        config.sample_cap,
        config.sample_seed,
    )?;
    let h = e.representation.select_rows(&nodes);
    let labels: Vec<usize> = nodes.iter().map(|&i| e.labels[i]).collect();
    let info = instance_info_gain(
        e.features,
        e.representation,
        config.sample_cap,
        config.sample_seed,
    )?;
    let report = MetricsReport {
        accuracy,
        row_diff: row_diff_with(&h, config.row_distance)?,
        col_diff: col_diff(&h)?,
        group_distance_ratio: group_distance_ratio(&h, &labels)?,
        instance_info_gain: info.nats,
        info_gain_degenerate: info.degenerate,
        sample_size: nodes.len(),
        sample_seed: config.sample_seed,
    };
    let values = [
        report.row_diff,
        report.col_diff,
        report.group_distance_ratio,
        report.instance_info_gain,
    ];
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "metrics" });
    }
    Ok(report)
}
