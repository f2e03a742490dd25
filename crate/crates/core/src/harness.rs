//! Experiment driver: single runs, resumable sweeps and summaries.
//!
//! A sweep directory holds
//!
//! - `manifest.json`: library version, dataset metadata and the full sweep spec;
//! - `records.jsonl`: one [`Record`] per finished run, written in canonical
//!   job order so the file is identical for any worker count;
//! - `timings.jsonl`: wall-clock seconds per run, kept apart so records stay
//!   byte-for-byte reproducible;
//! - `failures.jsonl`: runs that aborted, with the error. They are retried on
//!   the next invocation.
//!
//! Every record carries the SHA-256 of its canonical [`RunConfig`] JSON; a
//! rerun skips configurations whose hash is already present.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{write_json, GraphDataset, Meta, MissingSpec};
use crate::error::{Error, Result};
use crate::metrics::{self, Evaluation, MetricsConfig, MetricsReport};
use crate::model::checkpoint::{self, Provenance};
use crate::model::{ModelConfig, Normalization};
use crate::relation::RelationKind;
use crate::training::{train_run, RunResult, TrainConfig};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const CURVE_HEADER: &str =
    "dataset,relation,norm,missing,layers,mean_test_acc,sd_test_acc,mean_row_diff,mean_col_diff,mean_r_group,mean_g_ins";
pub const SUMMARY_HEADER: &str =
    "dataset,relation,norm,missing,best_mean_test_acc,sd_test_acc,optimal_layers,seeds";

/// Everything that determines a single run. Serialised field order is the
/// canonical form hashed into [`Record::config_hash`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: String,
    pub layers: usize,
    pub hidden_dim: usize,
    pub relation: RelationKind,
    pub norm: Normalization,
    pub pairnorm_scale: f64,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub missing: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub row_normalize: bool,
    pub sample_cap: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(
        dataset: &str,
        model: &ModelConfig,
        train: &TrainConfig,
        missing: f64,
        sample_cap: usize,
        seed: u64,
    ) -> Self {
        Self {
            dataset: dataset.to_string(),
            layers: model.num_layers,
            hidden_dim: model.hidden_dim,
            relation: model.relation,
            norm: model.normalization,
            pairnorm_scale: model.pairnorm_scale,
            dropout: model.dropout,
            leaky_slope: model.leaky_slope,
            missing,
            learning_rate: train.learning_rate,
            weight_decay: train.weight_decay,
            epochs: train.epochs,
            beta1: train.beta1,
            beta2: train.beta2,
            eps: train.eps,
            row_normalize: train.row_normalize,
            sample_cap,
            seed,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            num_layers: self.layers,
            hidden_dim: self.hidden_dim,
            relation: self.relation,
            normalization: self.norm,
            pairnorm_scale: self.pairnorm_scale,
            dropout: self.dropout,
            leaky_slope: self.leaky_slope,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            seeds: vec![self.seed],
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            row_normalize: self.row_normalize,
        }
    }

    /// Erased nodes are drawn from the run seed.
    pub fn missing_spec(&self) -> MissingSpec {
        MissingSpec {
            rate: self.missing,
            seed: self.seed,
        }
    }

    pub fn metrics_config(&self) -> MetricsConfig {
        MetricsConfig {
            sample_cap: self.sample_cap,
            sample_seed: self.seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.train_config().validate()?;
        self.missing_spec().validate()?;
        if self.sample_cap < 20 {
            return Err(Error::Config(format!(
                "sample cap must be at least 20, got {}",
                self.sample_cap
            )));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("run config serialises");
        hex::encode(Sha256::digest(&canonical))
    }

    /// Identity of the summary cell this run belongs to: the hash with the
    /// layer count and seed blanked.
    fn cell_key(&self) -> String {
        Self {
            layers: 0,
            seed: 0,
            ..self.clone()
        }
        .hash()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub config_hash: String,
    #[serde(flatten)]
    pub config: RunConfig,
    pub best_epoch: usize,
    pub val_acc: f64,
    pub test_acc: f64,
    pub row_diff: f64,
    pub col_diff: f64,
    pub r_group: f64,
    pub g_ins: f64,
    pub g_ins_degenerate: bool,
    pub sample_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub config_hash: String,
    pub runtime_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Failure {
    pub config_hash: String,
    pub config: RunConfig,
    pub error: String,
}

/// Training result, its metrics and the record built from both.
pub struct RunOutput {
    pub record: Record,
    pub result: RunResult,
    pub metrics: MetricsReport,
}

/// Trains one configuration and measures its best-validation representation.
pub fn execute_run(ds: &GraphDataset, config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let result = train_run(
        ds,
        &config.model_config(),
        &config.train_config(),
        &config.missing_spec(),
        config.seed,
    )?;
    let eval = Evaluation {
        features: &result.features,
        representation: result.prediction.representation(),
        logits: &result.prediction.logits,
        labels: &ds.labels,
        test_idx: &ds.test_idx,
    };
    let m = metrics::evaluate(&eval, &config.metrics_config())?;
    let record = Record {
        config_hash: config.hash(),
        config: config.clone(),
        best_epoch: result.best_epoch,
        val_acc: result.best_val_acc,
        test_acc: result.test_accuracy,
        row_diff: m.row_diff,
        col_diff: m.col_diff,
        r_group: m.group_distance_ratio,
        g_ins: m.instance_info_gain,
        g_ins_degenerate: m.info_gain_degenerate,
        sample_size: m.sample_size,
    };
    Ok(RunOutput {
        record,
        result,
        metrics: m,
    })
}

/// Writes a single run's outputs: `record.jsonl`, `metrics.json`,
/// `trajectory.csv` and the best-validation checkpoint `model.json`/`model.bin`.
pub fn write_run(out: &Path, output: &RunOutput) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut line = serde_json::to_string(&output.record).expect("record serialises");
    line.push('\n');
    let path = out.join("record.jsonl");
    fs::write(&path, line).map_err(|e| Error::io(&path, e))?;
    write_json(&out.join("metrics.json"), &output.metrics)?;

    let r = &output.result;
    let mut csv = String::from("epoch,train_loss,val_acc,test_acc\n");
    for e in 0..r.train_loss.len() {
        csv.push_str(&format!(
            "{e},{},{},{}\n",
            r.train_loss[e], r.val_acc[e], r.test_acc[e]
        ));
    }
    let path = out.join("trajectory.csv");
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;

    let c = &output.record.config;
    let provenance = Provenance {
        dataset: c.dataset.clone(),
        missing: c.missing_spec(),
        row_normalize: c.row_normalize,
        seed: c.seed,
        best_epoch: r.best_epoch,
    };
    checkpoint::save(&r.model, Some(provenance), &out.join("model.json"))
}

/// Grid of runs. Lists are crossed; everything else is shared.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub data: PathBuf,
    pub out: PathBuf,
    pub layers: Vec<usize>,
    pub relations: Vec<RelationKind>,
    pub norms: Vec<Normalization>,
    pub missing: Vec<f64>,
    pub seeds: Vec<u64>,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub pairnorm_scale: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub row_normalize: bool,
    pub sample_cap: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let model = ModelConfig::default();
        let train = TrainConfig::default();
        Self {
            data: PathBuf::new(),
            out: PathBuf::new(),
            layers: vec![1, 2, 3, 4, 5, 6, 7, 8, 10, 12, 16],
            relations: vec![
                RelationKind::None,
                RelationKind::AbsDifference,
                RelationKind::AbsDiffAndProduct,
            ],
            norms: vec![Normalization::None],
            missing: vec![0.0, 20.0, 40.0, 60.0, 80.0, 100.0],
            seeds: train.seeds,
            hidden_dim: model.hidden_dim,
            dropout: model.dropout,
            pairnorm_scale: model.pairnorm_scale,
            learning_rate: train.learning_rate,
            weight_decay: train.weight_decay,
            epochs: train.epochs,
            row_normalize: train.row_normalize,
            sample_cap: metrics::DEFAULT_SAMPLE_CAP,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("layers", self.layers.is_empty()),
            ("relations", self.relations.is_empty()),
            ("norms", self.norms.is_empty()),
            ("missing", self.missing.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Config(format!("sweep list `{name}` is empty")));
        }
        for config in self.jobs("validation") {
            config.validate()?;
        }
        Ok(())
    }

    /// Every run, in canonical order: relation, norm, missing rate, layers, seed.
    pub fn jobs(&self, dataset: &str) -> Vec<RunConfig> {
        let mut jobs = Vec::new();
        for &relation in &self.relations {
            for &norm in &self.norms {
                for &missing in &self.missing {
                    for &layers in &self.layers {
                        for &seed in &self.seeds {
                            let model = ModelConfig {
                                num_layers: layers,
                                hidden_dim: self.hidden_dim,
                                relation,
                                normalization: norm,
                                pairnorm_scale: self.pairnorm_scale,
                                dropout: self.dropout,
                                ..Default::default()
                            };
                            let train = TrainConfig {
                                learning_rate: self.learning_rate,
                                weight_decay: self.weight_decay,
                                epochs: self.epochs,
                                row_normalize: self.row_normalize,
                                ..Default::default()
                            };
                            jobs.push(RunConfig::new(
                                dataset,
                                &model,
                                &train,
                                missing,
                                self.sample_cap,
                                seed,
                            ));
                        }
                    }
                }
            }
        }
        jobs
    }
}

#[derive(Serialize)]
struct SweepManifest<'a> {
    library: &'static str,
    version: &'static str,
    dataset: Meta,
    total_runs: usize,
    spec: &'a SweepSpec,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SweepReport {
    pub total: usize,
    pub skipped: usize,
    pub completed: usize,
    pub failed: usize,
}

/// Progress notification for a finished run, delivered in canonical order.
pub enum Progress<'a> {
    Done {
        index: usize,
        of: usize,
        record: &'a Record,
        runtime_s: f64,
    },
    Failed {
        index: usize,
        of: usize,
        config: &'a RunConfig,
        error: &'a Error,
    },
}

/// Reads a JSONL file, dropping a trailing partial line left by an
/// interrupted write.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let complete = match text.rfind('\n') {
        Some(end) => &text[..=end],
        None => "",
    };
    complete
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::load(path, i + 1, e.to_string())))
        .collect()
}

/// Opens a JSONL file for appending, cutting off any partial trailing line.
fn open_append(path: &Path) -> Result<BufWriter<File>> {
    if let Ok(text) = fs::read(path) {
        let keep = text.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
        if keep != text.len() {
            let f = OpenOptions::new()
                .write(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            f.set_len(keep as u64).map_err(|e| Error::io(path, e))?;
        }
    }
    let f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(f))
}

fn append_line<T: Serialize>(w: &mut BufWriter<File>, path: &Path, value: &T) -> Result<()> {
    let line = serde_json::to_string(value).expect("serialisable");
    writeln!(w, "{line}")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs every configuration of `spec` that has no record yet in `spec.out`.
///
/// The sweep configuration and output directory are checked before any training starts.
/// Runs that fail are logged to `failures.jsonl` and do not stop the sweep.
pub fn run_sweep(
    ds: &GraphDataset,
    spec: &SweepSpec,
    workers: usize,
    mut progress: impl FnMut(Progress<'_>),
) -> Result<SweepReport> {
    spec.validate()?;
    if workers == 0 {
        return Err(Error::Config("worker count must be at least 1".into()));
    }
    let out = &spec.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let records_path = out.join(RECORDS_FILE);
    let timings_path = out.join(TIMINGS_FILE);
    let failures_path = out.join(FAILURES_FILE);
    let mut records = open_append(&records_path)?;
    let mut timings = open_append(&timings_path)?;
    let mut failures = open_append(&failures_path)?;

    let all_jobs = spec.jobs(&ds.name);
    write_json(
        &out.join(MANIFEST_FILE),
        &SweepManifest {
            library: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            dataset: ds.meta(),
            total_runs: all_jobs.len(),
            spec,
        },
    )?;

    let done: HashSet<String> = read_jsonl::<Record>(&records_path)?
        .into_iter()
        .map(|r| r.config_hash)
        .collect();
    let pending: Vec<RunConfig> = all_jobs
        .iter()
        .filter(|c| !done.contains(&c.hash()))
        .cloned()
        .collect();
    let mut report = SweepReport {
        total: all_jobs.len(),
        skipped: all_jobs.len() - pending.len(),
        ..Default::default()
    };

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<Record>, f64)>();
    let mut write_error = None;
    std::thread::scope(|scope| {
        for _ in 0..workers.min(pending.len()) {
            let tx = tx.clone();
            let (next, pending) = (&next, &pending);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(config) = pending.get(i) else { break };
                let started = Instant::now();
                let result = execute_run(ds, config).map(|o| o.record);
                if tx
                    .send((i, result, started.elapsed().as_secs_f64()))
                    .is_err()
                {
                    break;
                }
            });
        }
        drop(tx);

        // single writer: buffer out-of-order completions, emit in job order
        let mut buffer = BTreeMap::new();
        let mut emit = 0usize;
        for (i, result, runtime_s) in rx {
            buffer.insert(i, (result, runtime_s));
            while let Some((result, runtime_s)) = buffer.remove(&emit) {
                let config = &pending[emit];
                let written = match &result {
                    Ok(record) => {
                        report.completed += 1;
                        progress(Progress::Done {
                            index: emit,
                            of: pending.len(),
                            record,
                            runtime_s,
                        });
                        append_line(&mut records, &records_path, record).and_then(|_| {
                            let timing = Timing {
                                config_hash: record.config_hash.clone(),
                                runtime_s,
                            };
                            append_line(&mut timings, &timings_path, &timing)
                        })
                    }
                    Err(error) => {
                        report.failed += 1;
                        progress(Progress::Failed {
                            index: emit,
                            of: pending.len(),
                            config,
                            error,
                        });
                        let failure = Failure {
                            config_hash: config.hash(),
                            config: config.clone(),
                            error: error.to_string(),
                        };
                        append_line(&mut failures, &failures_path, &failure)
                    }
                };
                if let Err(e) = written {
                    // stop handing out work; running jobs finish and are dropped
                    next.store(pending.len(), Ordering::Relaxed);
                    write_error.get_or_insert(e);
                }
                emit += 1;
            }
        }
    });
    match write_error {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// Seed statistics for one configuration at one depth.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    pub dataset: String,
    pub relation: RelationKind,
    pub norm: Normalization,
    pub missing: f64,
    pub layers: usize,
    pub seeds: usize,
    pub mean_test_acc: f64,
    /// Sample standard deviation over seeds; 0 for a single seed.
    pub sd_test_acc: f64,
    pub mean_row_diff: f64,
    pub mean_col_diff: f64,
    pub mean_r_group: f64,
    pub mean_g_ins: f64,
}

/// Best depth for one configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub relation: RelationKind,
    pub norm: Normalization,
    pub missing: f64,
    pub best_mean_test_acc: f64,
    pub sd_test_acc: f64,
    /// Depth with the highest seed-mean accuracy; the smallest on ties.
    pub optimal_layers: usize,
    pub seeds: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub curve: Vec<CurveRow>,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (`n − 1` denominator); 0 when `n < 2`.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// dataset, relation rank, norm, missing bits, relation name
type CellKey = (String, usize, &'static str, u64, String);

/// Aggregates seed-level records. The output does not depend on record order.
pub fn summarize(records: &[Record]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::Usage("no records to summarise".into()));
    }
    let mut unique: HashMap<&str, &Record> = HashMap::new();
    for r in records {
        match unique.get(r.config_hash.as_str()) {
            Some(prev) if *prev != r => {
                return Err(Error::Usage(format!(
                    "conflicting records for configuration {}",
                    r.config_hash
                )))
            }
            _ => {
                unique.insert(&r.config_hash, r);
            }
        }
    }
    // cell → layers → records sorted by seed
    let mut cells: BTreeMap<CellKey, BTreeMap<usize, Vec<&Record>>> = BTreeMap::new();
    for r in unique.into_values() {
        let c = &r.config;
        let relation_rank = RelationKind::ALL
            .iter()
            .position(|&k| k == c.relation)
            .unwrap_or(usize::MAX);
        let key = (
            c.dataset.clone(),
            relation_rank,
            c.norm.as_str(),
            c.missing.to_bits(),
            c.cell_key(),
        );
        cells
            .entry(key)
            .or_default()
            .entry(c.layers)
            .or_default()
            .push(r);
    }

    let mut rows = Vec::new();
    let mut curve = Vec::new();
    for by_layer in cells.into_values() {
        let mut best: Option<&CurveRow> = None;
        let start = curve.len();
        for (layers, mut recs) in by_layer {
            recs.sort_by_key(|r| r.config.seed);
            let pick = |f: fn(&Record) -> f64| recs.iter().map(|&r| f(r)).collect::<Vec<f64>>();
            let acc = pick(|r| r.test_acc);
            let c = &recs[0].config;
            curve.push(CurveRow {
                dataset: c.dataset.clone(),
                relation: c.relation,
                norm: c.norm,
                missing: c.missing,
                layers,
                seeds: recs.len(),
                mean_test_acc: mean(&acc),
                sd_test_acc: sample_sd(&acc),
                mean_row_diff: mean(&pick(|r| r.row_diff)),
                mean_col_diff: mean(&pick(|r| r.col_diff)),
                mean_r_group: mean(&pick(|r| r.r_group)),
                mean_g_ins: mean(&pick(|r| r.g_ins)),
            });
        }
        // layers ascend, so a strict comparison keeps the smallest depth on ties
        for row in &curve[start..] {
            if best.is_none_or(|b| row.mean_test_acc > b.mean_test_acc) {
                best = Some(row);
            }
        }
        let b = best.expect("cell has at least one depth");
        rows.push(SummaryRow {
            dataset: b.dataset.clone(),
            relation: b.relation,
            norm: b.norm,
            missing: b.missing,
            best_mean_test_acc: b.mean_test_acc,
            sd_test_acc: b.sd_test_acc,
            optimal_layers: b.layers,
            seeds: b.seeds,
        });
    }
    Ok(Summary { rows, curve })
}

pub fn curve_csv(curve: &[CurveRow]) -> String {
    let mut s = format!("{CURVE_HEADER}\n");
    for r in curve {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.dataset,
            r.relation,
            r.norm,
            r.missing,
            r.layers,
            r.mean_test_acc,
            r.sd_test_acc,
            r.mean_row_diff,
            r.mean_col_diff,
            r.mean_r_group,
            r.mean_g_ins
        ));
    }
    s
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.dataset,
            r.relation,
            r.norm,
            r.missing,
            r.best_mean_test_acc,
            r.sd_test_acc,
            r.optimal_layers,
            r.seeds
        ));
    }
    s
}

/// Markdown table with accuracies in percent.
pub fn summary_markdown(rows: &[SummaryRow]) -> String {
    let mut s = String::from(
        "| dataset | relation | norm | missing % | test acc % | sd | #L | seeds |\n|---|---|---|---:|---:|---:|---:|---:|\n",
    );
    for r in rows {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {:.3} | {:.3} | {} | {} |\n",
            r.dataset,
            r.relation,
            r.norm,
            r.missing,
            100.0 * r.best_mean_test_acc,
            100.0 * r.sd_test_acc,
            r.optimal_layers,
            r.seeds
        ));
    }
    s
}

pub fn load_records(dir: &Path) -> Result<Vec<Record>> {
    read_jsonl(&dir.join(RECORDS_FILE))
}
