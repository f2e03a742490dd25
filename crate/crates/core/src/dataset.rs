//! Citation-graph datasets in a neutral directory format.
//!
//! A dataset directory holds five UTF-8 files:
//!
//! | file           | content                                                     |
//! |----------------|-------------------------------------------------------------|
//! | `features.csv` | `n` lines of `d` comma-separated decimals, no header          |
//! | `labels.csv`   | `n` lines, one class index each                               |
//! | `edges.csv`    | one `src,dst` pair per line, directed as given                |
//! | `splits.json`  | `{"train": [...], "val": [...], "test": [...]}`               |
//! | `meta.json`    | `{"name", "num_nodes", "num_features", "num_classes"}`        |
//!
//! The loader symmetrises the edge list, adds one self-loop per node and drops
//! duplicates, so every node has at least one incoming edge.

pub mod synthetic;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Directed edge list sorted by `(dst, src)`.
///
/// Built from undirected input, so `(i, j)` is present exactly when `(j, i)` is,
/// and every node carries a self-loop.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeIndex {
    n: usize,
    src: Arc<[usize]>,
    dst: Arc<[usize]>,
}

impl EdgeIndex {
    /// Symmetrises `pairs`, adds self-loops and removes duplicates.
    pub fn undirected(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            if a >= n || b >= n {
                return Err(Error::Structural(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            set.insert((b, a));
            set.insert((a, b));
        }
        for i in 0..n {
            set.insert((i, i));
        }
        // set holds (dst, src) pairs in sorted order
        let (dst, src): (Vec<usize>, Vec<usize>) = set.into_iter().unzip();
        Ok(Self {
            n,
            src: src.into(),
            dst: dst.into(),
        })
    }

    /// Uses `(src, dst)` pairs exactly as given, without symmetrising or adding
    /// self-loops. Intended for tests that need a specific directed structure.
    pub fn directed(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a >= n || b >= n) {
            return Err(Error::Structural(format!(
                "edge ({a}, {b}) out of range for {n} nodes"
            )));
        }
        let mut sorted: Vec<(usize, usize)> = pairs.iter().map(|&(s, d)| (d, s)).collect();
        sorted.sort_unstable();
        let (dst, src): (Vec<usize>, Vec<usize>) = sorted.into_iter().unzip();
        Ok(Self {
            n,
            src: src.into(),
            dst: dst.into(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    /// Source node of every edge (the neighbour `j` that sends a message).
    pub fn src(&self) -> &Arc<[usize]> {
        &self.src
    }

    /// Destination node of every edge (the node `i` that aggregates).
    pub fn dst(&self) -> &Arc<[usize]> {
        &self.dst
    }

    /// `(src, dst)` pairs in storage order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.src.iter().copied().zip(self.dst.iter().copied())
    }

    pub fn contains(&self, src: usize, dst: usize) -> bool {
        let lo = self.dst.partition_point(|&d| d < dst);
        let hi = self.dst.partition_point(|&d| d <= dst);
        self.src[lo..hi].binary_search(&src).is_ok()
    }

    /// Number of incoming edges per node, self-loop included.
    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &d in self.dst.iter() {
            deg[d] += 1;
        }
        deg
    }

    /// Relabels nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let pairs: Vec<(usize, usize)> = self.pairs().map(|(s, d)| (perm[s], perm[d])).collect();
        Self::directed(self.n, &pairs)
    }
}

/// Erasure of node feature vectors: `rate` percent of the eligible
/// (non-training) nodes get an all-zero feature row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissingSpec {
    pub rate: f64,
    pub seed: u64,
}

impl MissingSpec {
    pub fn none() -> Self {
        Self { rate: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.rate) {
            return Err(Error::Config(format!(
                "missing rate {} outside [0, 100]",
                self.rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub name: String,
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Splits {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphDataset {
    pub name: String,
    /// `n × d` feature matrix.
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub edges: EdgeIndex,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

impl GraphDataset {
    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn num_features(&self) -> usize {
        self.features.row_len()
    }

    /// Checks every structural invariant: shapes, label range, split
    /// disjointness, edge symmetry and self-loops, and class coverage of the
    /// training set.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        if self.features.ndim() != 2 {
            return Err(Error::Structural("features must be a matrix".into()));
        }
        if self.labels.len() != n {
            return Err(Error::Structural(format!(
                "{} labels for {n} nodes",
                self.labels.len()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= self.num_classes) {
            return Err(Error::Structural(format!(
                "label {bad} outside [0, {})",
                self.num_classes
            )));
        }
        if self.edges.num_nodes() != n {
            return Err(Error::Structural("edge index node count mismatch".into()));
        }
        let mut seen = vec![false; n];
        for (name, split) in [
            ("train", &self.train_idx),
            ("val", &self.val_idx),
            ("test", &self.test_idx),
        ] {
            for &i in split.iter() {
                if i >= n {
                    return Err(Error::Structural(format!(
                        "{name} index {i} out of range for {n} nodes"
                    )));
                }
                if seen[i] {
                    return Err(Error::Structural(format!(
                        "node {i} appears twice across splits"
                    )));
                }
                seen[i] = true;
            }
        }
        for (s, d) in self.edges.pairs() {
            if !self.edges.contains(d, s) {
                return Err(Error::Structural(format!("edge ({s}, {d}) has no reverse")));
            }
        }
        if let Some(i) = (0..n).find(|&i| !self.edges.contains(i, i)) {
            return Err(Error::Structural(format!("node {i} has no self-loop")));
        }
        let mut covered = vec![false; self.num_classes];
        for &i in &self.train_idx {
            covered[self.labels[i]] = true;
        }
        if let Some(c) = covered.iter().position(|&c| !c) {
            return Err(Error::Structural(format!("class {c} has no training node")));
        }
        Ok(())
    }

    pub fn meta(&self) -> Meta {
        Meta {
            name: self.name.clone(),
            num_nodes: self.num_nodes(),
            num_features: self.num_features(),
            num_classes: self.num_classes,
        }
    }

    /// Loads a dataset directory. Errors name the offending file and line.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: Meta = read_json(&dir.join("meta.json"))?;

        let features_path = dir.join("features.csv");
        let text = read_text(&features_path)?;
        let mut data = Vec::with_capacity(meta.num_nodes * meta.num_features);
        let mut rows = 0;
        for (lineno, line) in text.lines().enumerate() {
            let mut width = 0;
            for cell in line.split(',') {
                let value: f64 = cell.trim().parse().map_err(|_| {
                    Error::load(&features_path, lineno + 1, format!("bad number {cell:?}"))
                })?;
                if !value.is_finite() {
                    return Err(Error::load(&features_path, lineno + 1, "non-finite value"));
                }
                data.push(value);
                width += 1;
            }
            if width != meta.num_features {
                return Err(Error::load(
                    &features_path,
                    lineno + 1,
                    format!("expected {} columns, found {width}", meta.num_features),
                ));
            }
            rows += 1;
        }
        if rows != meta.num_nodes {
            return Err(Error::load(
                &features_path,
                rows,
                format!("expected {} rows, found {rows}", meta.num_nodes),
            ));
        }
        let features = Tensor::new(vec![rows, meta.num_features], data)?;

        let labels_path = dir.join("labels.csv");
        let text = read_text(&labels_path)?;
        let mut labels = Vec::with_capacity(rows);
        for (lineno, line) in text.lines().enumerate() {
            let y: usize = line.trim().parse().map_err(|_| {
                Error::load(&labels_path, lineno + 1, format!("bad label {line:?}"))
            })?;
            if y >= meta.num_classes {
                return Err(Error::load(
                    &labels_path,
                    lineno + 1,
                    format!("label {y} outside [0, {})", meta.num_classes),
                ));
            }
            labels.push(y);
        }
        if labels.len() != rows {
            return Err(Error::load(
                &labels_path,
                labels.len(),
                format!("{} labels but {rows} feature rows", labels.len()),
            ));
        }

        let edges_path = dir.join("edges.csv");
        let text = read_text(&edges_path)?;
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed = line
                .split_once(',')
                .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
            let Some((a, b)): Option<(usize, usize)> = parsed else {
                return Err(Error::load(
                    &edges_path,
                    lineno + 1,
                    format!("bad edge {line:?}"),
                ));
            };
            if a >= rows || b >= rows {
                return Err(Error::load(
                    &edges_path,
                    lineno + 1,
                    format!("edge ({a}, {b}) out of range for {rows} nodes"),
                ));
            }
            pairs.push((a, b));
        }
        let edges = EdgeIndex::undirected(rows, pairs)?;

        let splits_path = dir.join("splits.json");
        let splits: Splits = read_json(&splits_path)?;
        for (name, split) in [
            ("train", &splits.train),
            ("val", &splits.val),
            ("test", &splits.test),
        ] {
            if let Some(&bad) = split.iter().find(|&&i| i >= rows) {
                return Err(Error::load(
                    &splits_path,
                    1,
                    format!("{name} index {bad} out of range for {rows} nodes"),
                ));
            }
        }

        let ds = GraphDataset {
            name: meta.name,
            features,
            labels,
            num_classes: meta.num_classes,
            edges,
            train_idx: splits.train,
            val_idx: splits.val,
            test_idx: splits.test,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Writes the dataset in the directory format. Floats use the shortest
    /// decimal form that parses back to the same bits. Only one direction of
    /// each undirected edge is written; self-loops are left to the loader.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let mut out = String::new();
        for i in 0..self.num_nodes() {
            for (k, v) in self.features.row(i).iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write!(out, "{v}").expect("write to string");
            }
            out.push('\n');
        }
        write_text(&dir.join("features.csv"), &out)?;

        let mut out = String::new();
        for y in &self.labels {
            writeln!(out, "{y}").expect("write to string");
        }
        write_text(&dir.join("labels.csv"), &out)?;

        let mut out = String::new();
        for (s, d) in self.edges.pairs().filter(|(s, d)| s < d) {
            writeln!(out, "{s},{d}").expect("write to string");
        }
        write_text(&dir.join("edges.csv"), &out)?;

        let splits = Splits {
            train: self.train_idx.clone(),
            val: self.val_idx.clone(),
            test: self.test_idx.clone(),
        };
        write_json(&dir.join("splits.json"), &splits)?;
        write_json(&dir.join("meta.json"), &self.meta())
    }

    /// Nodes whose features [`apply_missing`](Self::apply_missing) erases, ascending.
    ///
    /// Eligible nodes (everything outside `train_idx`) are shuffled with a
    /// generator seeded by `spec.seed` and the first `⌊rate/100 · |eligible|⌋`
    /// are taken, so the erased sets are nested as the rate grows.
    pub fn missing_nodes(&self, spec: &MissingSpec) -> Result<Vec<usize>> {
        spec.validate()?;
        let mut is_train = vec![false; self.num_nodes()];
        for &i in &self.train_idx {
            is_train[i] = true;
        }
        let mut eligible: Vec<usize> = (0..self.num_nodes()).filter(|&i| !is_train[i]).collect();
        let count = ((spec.rate * eligible.len() as f64) / 100.0).floor() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        eligible.shuffle(&mut rng);
        let mut chosen = eligible[..count.min(eligible.len())].to_vec();
        chosen.sort_unstable();
        Ok(chosen)
    }

    /// Returns a copy with the feature rows of [`missing_nodes`](Self::missing_nodes) zeroed.
    pub fn apply_missing(&self, spec: &MissingSpec) -> Result<Self> {
        let erased = self.missing_nodes(spec)?;
        let mut out = self.clone();
        for i in erased {
            out.features.row_mut(i).fill(0.0);
        }
        Ok(out)
    }

    /// Scales every non-zero feature row to unit L1 norm.
    pub fn row_normalize(&self) -> Self {
        let mut out = self.clone();
        for i in 0..out.num_nodes() {
            let row = out.features.row_mut(i);
            let norm: f64 = row.iter().map(|v| v.abs()).sum();
            if norm > 0.0 {
                for v in row.iter_mut() {
                    *v /= norm;
                }
            }
        }
        out
    }

    /// Relabels nodes so that node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        let mut inverse = vec![0; n];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let features = self.features.select_rows(&inverse);
        let labels = inverse.iter().map(|&i| self.labels[i]).collect();
        let map = |idx: &[usize]| idx.iter().map(|&i| perm[i]).collect::<Vec<_>>();
        Ok(Self {
            name: self.name.clone(),
            features,
            labels,
            num_classes: self.num_classes,
            edges: self.edges.permuted(perm)?,
            train_idx: map(&self.train_idx),
            val_idx: map(&self.val_idx),
            test_idx: map(&self.test_idx),
        })
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_text(path, &text)
}
