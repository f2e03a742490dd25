//! `relgat`: train relational graph attention networks and measure
//! over-smoothing from the command line.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 data or I/O
//! error, 4 numeric failure (a run diverged).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use relgat::dataset::synthetic::PlantedPartition;
use relgat::error::ErrorKind;
use relgat::harness::{self, Progress, RunConfig, SweepSpec};
use relgat::metrics::{self, Evaluation, MetricsConfig};
use relgat::model::checkpoint;
use relgat::training::prepare_inputs;
use relgat::{
    Error, GraphDataset, MissingSpec, ModelConfig, Normalization, RelationKind, TrainConfig,
};

#[derive(Parser)]
#[command(name = "relgat", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration for one seed and write its record, metrics,
    /// trajectory and best-validation checkpoint.
    Run(RunArgs),
    /// Run every configuration of a sweep file, skipping finished ones.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        /// JSON sweep specification; omitted keys take their defaults.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Aggregate sweep records over seeds and pick the best depth per cell.
    /// Prints the table and writes `curve.csv` next to the records.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Recompute over-smoothing metrics from a saved checkpoint.
    Metrics {
        /// Checkpoint manifest (`model.json`).
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = metrics::DEFAULT_SAMPLE_CAP)]
        sample_cap: usize,
    },
    /// Write a planted-partition graph in the dataset directory format.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 120)]
        nodes: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 24)]
        features: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Md,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    layers: usize,
    #[arg(long, default_value = "none")]
    relation: RelationKind,
    #[arg(long, default_value = "none")]
    norm: Normalization,
    /// Percentage of non-training nodes whose features are erased.
    #[arg(long, default_value_t = 0.0)]
    missing: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    #[arg(long, default_value_t = 0.005)]
    lr: f64,
    #[arg(long, default_value_t = 0.6)]
    dropout: f64,
    #[arg(long, default_value_t = 5e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 1.0)]
    pairnorm_scale: f64,
    #[arg(long)]
    no_row_normalize: bool,
    #[arg(long, default_value_t = metrics::DEFAULT_SAMPLE_CAP)]
    sample_cap: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
    }
}

fn dispatch(command: Command) -> relgat::Result<ExitCode> {
    match command {
        Command::Run(args) => run(args),
        Command::Sweep {
            data,
            config,
            out,
            workers,
        } => sweep(&data, &config, out, workers),
        Command::Summarize { input, format } => summarize(&input, format),
        Command::Metrics {
            input,
            data,
            out,
            sample_cap,
        } => recompute_metrics(&input, &data, &out, sample_cap),
        Command::Synth {
            out,
            seed,
            nodes,
            classes,
            features,
        } => {
            let generator = PlantedPartition {
                nodes,
                classes,
                features,
                ..Default::default()
            };
            generator.generate(seed)?.save(&out)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run(a: RunArgs) -> relgat::Result<ExitCode> {
    let model = ModelConfig {
        num_layers: a.layers,
        hidden_dim: a.hidden,
        relation: a.relation,
        normalization: a.norm,
        pairnorm_scale: a.pairnorm_scale,
        dropout: a.dropout,
        ..Default::default()
    };
    let train = TrainConfig {
        learning_rate: a.lr,
        weight_decay: a.weight_decay,
        epochs: a.epochs,
        seeds: vec![a.seed],
        row_normalize: !a.no_row_normalize,
        ..Default::default()
    };
    // reject bad flags before touching the data
    let mut config = RunConfig::new("", &model, &train, a.missing, a.sample_cap, a.seed);
    config.validate()?;
    let ds = GraphDataset::load(&a.data)?;
    config.dataset = ds.name.clone();
    let output = harness::execute_run(&ds, &config)?;
    harness::write_run(&a.out, &output)?;
    println!(
        "{}",
        serde_json::to_string(&output.record).expect("record serialises")
    );
    Ok(ExitCode::SUCCESS)
}

fn sweep(
    data: &Path,
    config: &Path,
    out: PathBuf,
    workers: Option<usize>,
) -> relgat::Result<ExitCode> {
    let text = fs::read_to_string(config)
        .map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
    let mut spec: SweepSpec = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
    spec.data = data.to_path_buf();
    spec.out = out;
    spec.validate()?;
    let workers = workers.unwrap_or_else(harness::default_workers);
    let ds = GraphDataset::load(data)?;
    let report = harness::run_sweep(&ds, &spec, workers, |p| match p {
        Progress::Done {
            index,
            of,
            record,
            runtime_s,
        } => {
            let c = &record.config;
            eprintln!(
                "[{}/{of}] {} L={} norm={} missing={} seed={}: test {:.4} ({runtime_s:.1}s)",
                index + 1,
                c.relation,
                c.layers,
                c.norm,
                c.missing,
                c.seed,
                record.test_acc
            );
        }
        Progress::Failed {
            index,
            of,
            config,
            error,
        } => {
            eprintln!(
                "[{}/{of}] {} L={} missing={} seed={}: FAILED: {error}",
                index + 1,
                config.relation,
                config.layers,
                config.missing,
                config.seed
            );
        }
    })?;
    eprintln!(
        "{} runs: {} skipped, {} completed, {} failed",
        report.total, report.skipped, report.completed, report.failed
    );
    Ok(if report.failed > 0 {
        ExitCode::from(exit_code(ErrorKind::Numeric))
    } else {
        ExitCode::SUCCESS
    })
}

fn summarize(dir: &Path, format: Format) -> relgat::Result<ExitCode> {
    let records = harness::load_records(dir)?;
    let summary = harness::summarize(&records)?;
    let curve_path = dir.join(harness::CURVE_FILE);
    fs::write(&curve_path, harness::curve_csv(&summary.curve)).map_err(|e| Error::Io {
        path: curve_path.clone(),
        source: e,
    })?;
    let table = match format {
        Format::Csv => harness::summary_csv(&summary.rows),
        Format::Md => harness::summary_markdown(&summary.rows),
    };
    let mut stdout = std::io::stdout().lock();
    // a closed pipe is not an error worth reporting
    let _ = stdout.write_all(table.as_bytes());
    Ok(ExitCode::SUCCESS)
}

fn recompute_metrics(
    manifest: &Path,
    data: &Path,
    out: &Path,
    sample_cap: usize,
) -> relgat::Result<ExitCode> {
    let (model, m) = checkpoint::load(manifest)?;
    let ds = GraphDataset::load(data)?;
    let (missing, row_normalize, seed) = match &m.provenance {
        Some(p) => (p.missing, p.row_normalize, p.seed),
        None => (MissingSpec::none(), true, 0),
    };
    let inputs = prepare_inputs(&ds, &missing, row_normalize)?;
    let pred = model.predict(&inputs.features, &inputs.edges)?;
    let eval = Evaluation {
        features: &inputs.features,
        representation: pred.representation(),
        logits: &pred.logits,
        labels: &inputs.labels,
        test_idx: &inputs.test_idx,
    };
    let config = MetricsConfig {
        sample_cap,
        sample_seed: seed,
        ..Default::default()
    };
    let report = metrics::evaluate(&eval, &config)?;
    let mut text = serde_json::to_string_pretty(&report).expect("report serialises");
    text.push('\n');
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(out, text).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    Ok(ExitCode::SUCCESS)
}
