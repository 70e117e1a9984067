//! Runs a set of counterfactual generators over every negative instance of a
//! task, evaluates the results and reports one row per method.

mod report;

pub use report::{csv_text, details_text, parse_csv, render_table, write_csv, write_details, ParsedReport};

use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use cfx_core::data::{default_preprocess, load_csv, synth_gaussian_blobs, DataError, Dataset, PreprocessMode};
use cfx_core::evaluators::{EvalError, EvaluationConfig, EvaluationOutcome, Evaluator, Metric, Norm};
use cfx_core::generators::{build_generator, CounterfactualResult, Diagnostics, GenerateError, GeneratorConfig, Method};
use cfx_core::model::{load_model, train, ModelError, TrainConfig};
use cfx_core::task::{ClassificationTask, TaskError};
use cfx_core::Model;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("cannot load model: {0}")]
    ModelFile(ModelError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl BenchError {
    /// Process exit status: 2 for configuration problems, 3 for unreadable
    /// or unusable inputs, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_)
            | BenchError::Generate(GenerateError::InvalidConfig(_))
            | BenchError::Eval(EvalError::InvalidConfig(_) | EvalError::Probability { .. })
            | BenchError::Task(TaskError::InvalidClass(_)) => 2,
            BenchError::Data(_) | BenchError::ModelFile(_) | BenchError::Task(TaskError::FeatureMismatch { .. }) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv(PathBuf),
    Blobs { n_per_class: usize, dim: usize, separation: f64 },
}

impl FromStr for DataSource {
    type Err = String;

    /// Parses `blobs:<n>,<dim>,<sep>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let spec = s
            .strip_prefix("blobs:")
            .ok_or_else(|| format!("synthetic spec `{s}` must look like blobs:<n>,<dim>,<sep>"))?;
        let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
        let bad = || format!("synthetic spec `{s}` must look like blobs:<n>,<dim>,<sep>");
        if parts.len() != 3 {
            return Err(bad());
        }
        let n_per_class = parts[0].parse().map_err(|_| bad())?;
        let dim = parts[1].parse().map_err(|_| bad())?;
        let separation: f64 = parts[2].parse().map_err(|_| bad())?;
        if n_per_class == 0 || dim == 0 || !separation.is_finite() {
            return Err(bad());
        }
        Ok(DataSource::Blobs {
            n_per_class,
            dim,
            separation,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    /// Train a fresh network; `None` layers means `[features, 8, 1]`.
    Train { layers: Option<Vec<usize>>, train: TrainConfig },
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Table,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "table" => Ok(OutputFormat::Table),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(format!("unknown output format `{other}` (expected table or csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub data: DataSource,
    pub label: String,
    pub preprocess: PreprocessMode,
    pub model: ModelSpec,
    pub methods: Vec<Method>,
    pub evaluations: Vec<Metric>,
    pub neg_value: u8,
    pub delta: f64,
    pub seed: u64,
    pub workers: usize,
    pub output: OutputFormat,
    /// Method hyperparameters; `seed` and `delta` are overwritten from above.
    pub generator: GeneratorConfig,
    /// Metric settings; `seed` and `delta` are overwritten from above.
    pub evaluation: EvaluationConfig,
}

impl BenchConfig {
    /// The six-method comparison on validity, proximity and robustness.
    pub fn new(data: DataSource) -> Self {
        Self {
            data,
            label: "target".into(),
            preprocess: PreprocessMode::MinMax,
            model: ModelSpec::Train {
                layers: None,
                train: TrainConfig::default(),
            },
            methods: vec![
                Method::KdTreeNnce,
                Method::Mce,
                Method::Mcer,
                Method::Rnce,
                Method::Stce,
                Method::Proplace,
            ],
            evaluations: vec![Metric::Validity, Metric::Proximity, Metric::DeltaRobustness],
            neg_value: 0,
            delta: 0.005,
            seed: 0,
            workers: 1,
            output: OutputFormat::Table,
            generator: GeneratorConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.methods.is_empty() {
            return Err(BenchError::Config("at least one method is required".into()));
        }
        if self.evaluations.is_empty() {
            return Err(BenchError::Config("at least one evaluation is required".into()));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(BenchError::Config(format!("delta must be a finite non-negative number, got {}", self.delta)));
        }
        if self.workers == 0 {
            return Err(BenchError::Config("workers must be at least 1".into()));
        }
        if self.neg_value > 1 {
            return Err(BenchError::Config(format!("neg-value must be 0 or 1, got {}", self.neg_value)));
        }
        Ok(())
    }

    fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            seed: self.seed,
            delta: self.delta,
            ..self.generator.clone()
        }
    }

    fn evaluation_config(&self) -> EvaluationConfig {
        let mut e = self.evaluation.clone().with_delta(self.delta);
        e.seed = self.seed;
        e.delta.seed = self.seed;
        e
    }
}

/// Everything recorded about one (method, instance) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    pub result: CounterfactualResult,
    /// One entry per evaluation, `None` when excluded from the mean.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRow {
    pub method: Method,
    /// Total generation wall time over all instances.
    pub time_seconds: f64,
    pub outcomes: Vec<EvaluationOutcome>,
    pub instances: Vec<InstanceRecord>,
}

impl MethodRow {
    pub fn outcome(&self, metric: Metric) -> Option<&EvaluationOutcome> {
        self.outcomes.iter().find(|o| o.metric == metric.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportMetadata {
    pub seed: u64,
    pub delta: f64,
    pub neg_value: u8,
    pub instance_count: usize,
    /// SHA-256 of the raw dataset values and labels.
    pub fingerprint: String,
    pub layer_dims: Vec<usize>,
    /// Norm used by the proximity column.
    pub norm: Norm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub evaluations: Vec<Metric>,
    pub rows: Vec<MethodRow>,
    pub metadata: ReportMetadata,
}

impl BenchmarkReport {
    pub fn row(&self, method: Method) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

/// SHA-256 over column names, label name, values and labels.
pub fn dataset_fingerprint(ds: &Dataset) -> String {
    let mut h = Sha256::new();
    for name in ds.schema().names() {
        h.update(name.as_bytes());
        h.update([0]);
    }
    h.update(ds.schema().label_column().as_bytes());
    h.update([0]);
    for (row, &y) in ds.rows().iter().zip(ds.labels()) {
        for v in row {
            h.update(v.to_le_bytes());
        }
        h.update([y]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn load_data(cfg: &BenchConfig) -> Result<Dataset, BenchError> {
    Ok(match &cfg.data {
        DataSource::Csv(path) => load_csv(path, &cfg.label)?,
        DataSource::Blobs {
            n_per_class,
            dim,
            separation,
        } => synth_gaussian_blobs(*n_per_class, *dim, *separation, cfg.seed),
    })
}

fn build_model(cfg: &BenchConfig, ds: &Dataset) -> Result<Model, BenchError> {
    match &cfg.model {
        ModelSpec::File(path) => load_model(path).map_err(BenchError::ModelFile),
        ModelSpec::Train { layers, train: tc } => {
            let dims = layers.clone().unwrap_or_else(|| vec![ds.feature_count(), 8, 1]);
            if dims.first() != Some(&ds.feature_count()) {
                return Err(BenchError::Config(format!(
                    "first layer width {:?} does not match the {} data features",
                    dims.first(),
                    ds.feature_count()
                )));
            }
            let init = Model::init(&dims, cfg.seed).map_err(|e| BenchError::Config(e.to_string()))?;
            Ok(train(&init, ds, &TrainConfig { seed: cfg.seed, ..*tc })?)
        }
    }
}

/// Loads the data and trains or loads the model, as `run_benchmark` does.
pub fn prepare_task(cfg: &BenchConfig) -> Result<(ClassificationTask, String), BenchError> {
    cfg.validate()?;
    let raw = load_data(cfg)?;
    let fingerprint = dataset_fingerprint(&raw);
    let ds = default_preprocess(&raw, cfg.preprocess)?;
    let model = build_model(cfg, &ds)?;
    Ok((ClassificationTask::new(model, ds, cfg.neg_value)?, fingerprint))
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchmarkReport, BenchError> {
    let (task, fingerprint) = prepare_task(cfg)?;
    run_on_task(cfg, &task, fingerprint)
}

/// Runs every method on an already prepared task.
pub fn run_on_task(cfg: &BenchConfig, task: &ClassificationTask, fingerprint: String) -> Result<BenchmarkReport, BenchError> {
    cfg.validate()?;
    let gen_cfg = cfg.generator_config();
    gen_cfg.validate()?;
    let evaluator = Evaluator::new(task, &cfg.evaluations, cfg.evaluation_config())?;
    let negatives = task.negative_instances();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| BenchError::Config(format!("cannot start {} workers: {e}", cfg.workers)))?;

    let mut rows = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let generator = build_generator(method, task, &gen_cfg)?;
        let generator = generator.as_ref();
        let start = Instant::now();
        let results: Vec<CounterfactualResult> = pool.install(|| {
            negatives
                .par_iter()
                .map(|&(i, x)| {
                    generator.generate(i, x).unwrap_or_else(|e| {
                        let mut r = CounterfactualResult::external(task, i, x.to_vec(), None);
                        r.method = Some(method);
                        r.diagnostics = Diagnostics {
                            note: Some(e.to_string()),
                            ..Default::default()
                        };
                        r
                    })
                })
                .collect()
        });
        let time_seconds = start.elapsed().as_secs_f64();
        let values: Vec<Vec<Option<f64>>> =
            pool.install(|| results.par_iter().map(|r| evaluator.evaluate_instance(generator, r)).collect());
        let outcomes = evaluator.outcomes(&results, &values);
        let instances = results
            .into_iter()
            .zip(values)
            .map(|(result, values)| InstanceRecord { result, values })
            .collect();
        rows.push(MethodRow {
            method,
            time_seconds,
            outcomes,
            instances,
        });
    }

    Ok(BenchmarkReport {
        evaluations: cfg.evaluations.clone(),
        rows,
        metadata: ReportMetadata {
            seed: cfg.seed,
            delta: cfg.delta,
            neg_value: cfg.neg_value,
            instance_count: negatives.len(),
            fingerprint,
            layer_dims: task.model().layer_dims().to_vec(),
            norm: cfg.evaluation.norm,
        },
    })
}
