use std::path::PathBuf;
use std::process::ExitCode;

use cfx_bench::{
    csv_text, render_table, run_benchmark, write_details, BenchConfig, BenchError, DataSource, ModelSpec, OutputFormat,
};
use cfx_core::data::PreprocessMode;
use cfx_core::evaluators::Metric;
use cfx_core::generators::Method;
use cfx_core::model::TrainConfig;
use clap::{ArgGroup, Parser};

/// Benchmark counterfactual explanation methods on a binary classifier.
#[derive(Debug, Parser)]
#[command(name = "bench", version)]
#[command(group(ArgGroup::new("source").required(true).args(["data", "synthetic"])))]
struct Cli {
    /// CSV file with a header row and a 0/1 label column.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Synthetic Gaussian blobs as `blobs:<n per class>,<dim>,<separation>`.
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long, default_value = "target")]
    label: String,
    /// none, standardize or minmax.
    #[arg(long, default_value = "minmax")]
    preprocess: String,
    /// Comma-separated layer widths, e.g. 34,8,1. Defaults to <features>,8,1.
    #[arg(long)]
    layers: Option<String>,
    /// Load a saved model instead of training one.
    #[arg(long, conflicts_with = "layers")]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value = "kdtree-nnce,mce,mcer,rnce,stce,proplace")]
    methods: String,
    #[arg(long, default_value = "validity,proximity,delta-robustness")]
    evaluations: String,
    /// Label of the undesirable class.
    #[arg(long, default_value_t = 0)]
    neg_value: u8,
    #[arg(long, default_value_t = 0.005)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// table or csv.
    #[arg(long, default_value = "table")]
    out: String,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out_path: Option<PathBuf>,
    /// Also write one row per (method, instance) to this file.
    #[arg(long)]
    details: Option<PathBuf>,
}

fn list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, BenchError>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().map_err(|e| BenchError::Config(e.to_string())))
        .collect()
}

fn config(cli: &Cli) -> Result<BenchConfig, BenchError> {
    let data = match (&cli.data, &cli.synthetic) {
        (Some(p), _) => DataSource::Csv(p.clone()),
        (None, Some(s)) => s.parse().map_err(BenchError::Config)?,
        (None, None) => return Err(BenchError::Config("one of --data or --synthetic is required".into())),
    };
    let mut cfg = BenchConfig::new(data);
    cfg.label = cli.label.clone();
    cfg.preprocess = cli.preprocess.parse::<PreprocessMode>().map_err(BenchError::Config)?;
    cfg.model = match &cli.model {
        Some(p) => ModelSpec::File(p.clone()),
        None => ModelSpec::Train {
            layers: cli.layers.as_deref().map(list::<usize>).transpose()?,
            train: TrainConfig {
                learning_rate: cli.lr,
                epochs: cli.epochs,
                batch_size: cli.batch_size,
                seed: cli.seed,
            },
        },
    };
    cfg.methods = list::<Method>(&cli.methods)?;
    cfg.evaluations = list::<Metric>(&cli.evaluations)?;
    cfg.neg_value = cli.neg_value;
    cfg.delta = cli.delta;
    cfg.seed = cli.seed;
    cfg.workers = cli.workers;
    cfg.output = cli.out.parse::<OutputFormat>().map_err(BenchError::Config)?;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), BenchError> {
    let cfg = config(cli)?;
    let report = run_benchmark(&cfg)?;
    let text = match cfg.output {
        OutputFormat::Table => render_table(&report),
        OutputFormat::Csv => csv_text(&report),
    };
    match &cli.out_path {
        Some(p) => std::fs::write(p, text).map_err(|source| BenchError::Io {
            path: p.clone(),
            source,
        })?,
        None => print!("{text}"),
    }
    if let Some(p) = &cli.details {
        write_details(&report, p)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
