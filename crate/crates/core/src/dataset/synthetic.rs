//! Planted-partition graphs with class-dependent bag-of-words features.
//!
//! Used for fixtures and for exercising the full pipeline without the
//! citation benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EdgeIndex, GraphDataset};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct PlantedPartition {
    pub nodes: usize,
    pub classes: usize,
    pub features: usize,
    /// Expected number of same-class neighbours per node.
    pub intra_degree: f64,
    /// Expected number of other-class neighbours per node.
    pub inter_degree: f64,
    /// Probability that a word from a node's own class block is present.
    pub topic_prob: f64,
    /// Probability that any other word is present.
    pub noise_prob: f64,
    pub train_per_class: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for PlantedPartition {
    fn default() -> Self {
        Self {
            nodes: 120,
            classes: 3,
            features: 24,
            intra_degree: 3.0,
            inter_degree: 0.5,
            topic_prob: 0.3,
            noise_prob: 0.05,
            train_per_class: 5,
            val: 30,
            test: 60,
        }
    }
}

impl PlantedPartition {
    pub fn generate(&self, seed: u64) -> Result<GraphDataset> {
        let (n, c) = (self.nodes, self.classes);
        if c < 2 || n < c * self.train_per_class + self.val + self.test {
            return Err(Error::Config(format!(
                "planted partition with {n} nodes cannot hold the requested splits"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<usize> = (0..n).map(|i| i % c).collect();
        labels.shuffle(&mut rng);

        let class_size = n as f64 / c as f64;
        let p_in = (self.intra_degree / (class_size - 1.0).max(1.0)).min(1.0);
        let p_out = (self.inter_degree / (n as f64 - class_size).max(1.0)).min(1.0);
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let p = if labels[i] == labels[j] { p_in } else { p_out };
                if rng.random::<f64>() < p {
                    pairs.push((i, j));
                }
            }
        }
        let edges = EdgeIndex::undirected(n, pairs)?;

        let block = (self.features / c).max(1);
        let mut data = Vec::with_capacity(n * self.features);
        for &y in &labels {
            for k in 0..self.features {
                let p = if k / block == y {
                    self.topic_prob
                } else {
                    self.noise_prob
                };
                data.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
            }
        }
        let features = Tensor::new(vec![n, self.features], data)?;

        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
        for (i, &y) in labels.iter().enumerate() {
            by_class[y].push(i);
        }
        let mut train = Vec::new();
        let mut rest = Vec::new();
        for members in &mut by_class {
            members.shuffle(&mut rng);
            let k = self.train_per_class.min(members.len());
            train.extend_from_slice(&members[..k]);
            rest.extend_from_slice(&members[k..]);
        }
        rest.shuffle(&mut rng);
        let mut val = rest[..self.val].to_vec();
        let mut test = rest[self.val..self.val + self.test].to_vec();
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();

        let ds = GraphDataset {
            name: format!("planted-{n}-{c}-{seed}"),
            features,
            labels,
            num_classes: c,
            edges,
            train_idx: train,
            val_idx: val,
            test_idx: test,
        };
        ds.validate()?;
        Ok(ds)
    }
}
