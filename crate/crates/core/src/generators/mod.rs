//! Counterfactual generation methods behind one interface.
//!
//! Each method implements [`CounterfactualGenerator::search`]; the provided
//! [`CounterfactualGenerator::generate`] checks the precondition (the instance
//! must be predicted as the undesirable class), seeds the per-instance RNG,
//! keeps the result inside the data box and fills in validity, distance and
//! timing. A search that finds nothing is an outcome, not an error.

pub mod kdtree;

mod bls;
mod mce;
mod nnce;
mod proplace;
mod roar;
mod stce;
mod wachter;

pub use bls::Bls;
pub use mce::{Mce, Mcer};
pub use nnce::{KdTreeNnce, Rnce};
pub use proplace::Proplace;
pub use roar::Roar;
pub use stce::{counterfactual_stability, Stce};
pub use wachter::Wachter;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::ModelError;
use crate::optim::MilpOptions;
use crate::seed;
use crate::task::ClassificationTask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Wachter,
    Bls,
    KdTreeNnce,
    Mce,
    Mcer,
    Rnce,
    Stce,
    Proplace,
    Roar,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Wachter,
        Method::Bls,
        Method::KdTreeNnce,
        Method::Mce,
        Method::Mcer,
        Method::Rnce,
        Method::Stce,
        Method::Proplace,
        Method::Roar,
    ];

    /// Name accepted on the command line.
    pub fn cli_name(self) -> &'static str {
        match self {
            Method::Wachter => "wachter",
            Method::Bls => "bls",
            Method::KdTreeNnce => "kdtree-nnce",
            Method::Mce => "mce",
            Method::Mcer => "mcer",
            Method::Rnce => "rnce",
            Method::Stce => "stce",
            Method::Proplace => "proplace",
            Method::Roar => "roar",
        }
    }

    /// Display name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Method::Wachter => "Wachter",
            Method::Bls => "BLS",
            Method::KdTreeNnce => "KDTreeNNCE",
            Method::Mce => "MCE",
            Method::Mcer => "MCER",
            Method::Rnce => "RNCE",
            Method::Stce => "STCE",
            Method::Proplace => "PROPLACE",
            Method::Roar => "ROAR",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown method `{name}`; valid methods: {valid}")]
pub struct UnknownMethod {
    pub name: String,
    pub valid: String,
}

impl FromStr for Method {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.cli_name() == wanted || m.label().to_ascii_lowercase() == wanted)
            .ok_or_else(|| UnknownMethod {
                name: s.to_string(),
                valid: Method::ALL.map(Method::cli_name).join(", "),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WachterConfig {
    pub kappa: f64,
    pub lambda: f64,
    pub lambda_every: usize,
    pub step_size: f64,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StceConfig {
    pub samples: usize,
    pub sigma: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProplaceConfig {
    pub anchors: usize,
    pub bisection_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoarConfig {
    /// Surrogate weight-shift radius; `None` uses the global `delta`.
    pub delta_w: Option<f64>,
    pub kappa: f64,
    pub lambda: f64,
    pub lambda_every: usize,
    pub step_size: f64,
    pub max_steps: usize,
    pub refresh_every: usize,
}

/// Hyperparameters for every method. The defaults are the ones the
/// benchmark uses.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    /// Radius of the parameter ball for the robust methods.
    pub delta: f64,
    /// Whether the ball also perturbs biases.
    pub include_biases: bool,
    pub wachter: WachterConfig,
    pub bls_steps: usize,
    pub mce_kappa: f64,
    /// Number of MCER margins tried, doubling from `mce_kappa`.
    pub mcer_rungs: usize,
    pub milp: MilpOptions,
    pub stce: StceConfig,
    pub proplace: ProplaceConfig,
    pub roar: RoarConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            delta: 0.005,
            include_biases: true,
            wachter: WachterConfig {
                kappa: 0.1,
                lambda: 0.1,
                lambda_every: 100,
                step_size: 0.05,
                max_steps: 2000,
            },
            bls_steps: 20,
            mce_kappa: 0.01,
            mcer_rungs: 11,
            milp: MilpOptions::default(),
            stce: StceConfig {
                samples: 500,
                sigma: 0.1,
                tau: 0.9,
            },
            proplace: ProplaceConfig {
                anchors: 10,
                bisection_steps: 20,
            },
            roar: RoarConfig {
                delta_w: None,
                kappa: 0.1,
                lambda: 1.0,
                lambda_every: 100,
                step_size: 0.05,
                max_steps: 2000,
                refresh_every: 200,
            },
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GenerateError> {
        let positive = [
            ("delta", self.delta >= 0.0),
            ("wachter.step_size", self.wachter.step_size > 0.0),
            ("wachter.lambda", self.wachter.lambda > 0.0),
            ("wachter.lambda_every", self.wachter.lambda_every > 0),
            ("mce_kappa", self.mce_kappa > 0.0),
            ("mcer_rungs", self.mcer_rungs > 0),
            ("stce.samples", self.stce.samples > 0),
            ("stce.sigma", self.stce.sigma > 0.0),
            ("proplace.anchors", self.proplace.anchors > 0),
            ("roar.step_size", self.roar.step_size > 0.0),
            ("roar.lambda", self.roar.lambda > 0.0),
            ("roar.lambda_every", self.roar.lambda_every > 0),
            ("roar.refresh_every", self.roar.refresh_every > 0),
            ("roar.delta_w", self.roar.delta_w.is_none_or(|d| d >= 0.0)),
        ];
        match positive.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(GenerateError::InvalidConfig(name.to_string())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("instance {index} is not predicted as the undesirable class")]
    NotNegative { index: usize },
    #[error("invalid generator setting `{0}`")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub iterations: Option<usize>,
    /// Margin reached (MCE/MCER) or the CE's stability (STCE).
    pub margin: Option<f64>,
    /// Set by methods that aim for parameter robustness.
    pub robust: Option<bool>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualResult {
    pub instance_index: usize,
    pub instance: Vec<f64>,
    pub ce: Option<Vec<f64>>,
    pub valid: bool,
    /// Euclidean distance to the instance; 0 when no CE was found.
    pub l2_distance: f64,
    pub wall_time: f64,
    pub method: Option<Method>,
    pub diagnostics: Diagnostics,
}

impl CounterfactualResult {
    /// Wraps a CE produced elsewhere so it can go through the evaluators.
    pub fn external(task: &ClassificationTask, instance_index: usize, instance: Vec<f64>, ce: Option<Vec<f64>>) -> Self {
        let valid = ce.as_deref().is_some_and(|c| task.predict(c) == task.target_class());
        let l2_distance = ce.as_deref().map_or(0.0, |c| euclidean(c, &instance));
        Self {
            instance_index,
            instance,
            ce,
            valid,
            l2_distance,
            wall_time: 0.0,
            method: None,
            diagnostics: Diagnostics::default(),
        }
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    kdtree::squared_distance(a, b).sqrt()
}

/// Raw output of a method's search.
#[derive(Debug, Clone, Default)]
pub struct Search {
    pub ce: Option<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

impl Search {
    pub fn found(ce: Vec<f64>) -> Self {
        Self {
            ce: Some(ce),
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn none(note: impl Into<String>) -> Self {
        Self {
            ce: None,
            diagnostics: Diagnostics {
                note: Some(note.into()),
                ..Default::default()
            },
        }
    }

    fn robust(mut self, robust: bool) -> Self {
        self.diagnostics.robust = Some(robust);
        self
    }
}

pub trait CounterfactualGenerator: Send + Sync {
    fn method(&self) -> Method;

    fn task(&self) -> &ClassificationTask;

    /// Searches for a counterfactual of `x`, which is predicted as the
    /// undesirable class.
    fn search(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Search;

    /// Seed for the per-instance RNG streams.
    fn seed(&self) -> u64;

    fn generate(&self, index: usize, x: &[f64]) -> Result<CounterfactualResult, GenerateError> {
        let task = self.task();
        if task.model().predict_label(x)? != task.neg_value() {
            return Err(GenerateError::NotNegative { index });
        }
        let start = Instant::now();
        let mut rng = seed::instance_rng(self.seed(), index);
        let Search { mut ce, diagnostics } = self.search(x, &mut rng);
        let wall_time = start.elapsed().as_secs_f64();
        if let Some(c) = ce.as_mut() {
            task.data().preprocessing().clamp(c);
        }
        let mut out = CounterfactualResult::external(task, index, x.to_vec(), ce);
        out.wall_time = wall_time;
        out.method = Some(self.method());
        out.diagnostics = diagnostics;
        Ok(out)
    }
}

/// Builds the generator for `method` over `task`.
pub fn build_generator<'a>(
    method: Method,
    task: &'a ClassificationTask,
    cfg: &GeneratorConfig,
) -> Result<Box<dyn CounterfactualGenerator + 'a>, GenerateError> {
    cfg.validate()?;
    let cfg = cfg.clone();
    Ok(match method {
        Method::Wachter => Box::new(Wachter::new(task, cfg)),
        Method::Bls => Box::new(Bls::new(task, cfg)),
        Method::KdTreeNnce => Box::new(KdTreeNnce::new(task, cfg)),
        Method::Mce => Box::new(Mce::new(task, cfg)),
        Method::Mcer => Box::new(Mcer::new(task, cfg)),
        Method::Rnce => Box::new(Rnce::new(task, cfg)),
        Method::Stce => Box::new(Stce::new(task, cfg)),
        Method::Proplace => Box::new(Proplace::new(task, cfg)),
        Method::Roar => Box::new(Roar::new(task, cfg)),
    })
}

/// k-d tree over the rows the model predicts as the target class.
pub(crate) fn target_pool(task: &ClassificationTask) -> kdtree::KdTree {
    kdtree::KdTree::new(
        task.target_rows()
            .into_iter()
            .map(|i| (i, task.data().row(i).to_vec()))
            .collect(),
    )
}

/// `(1 − t)·a + t·b`, exact at both ends.
pub(crate) fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&u, &v)| (1.0 - t) * u + t * v).collect()
}

#[cfg(test)]
pub(crate) mod test_support {
    use crate::data::{default_preprocess, synth_gaussian_blobs, Dataset, FeatureSchema, PreprocessMode};
    use crate::model::{train, TrainConfig};
    use crate::task::ClassificationTask;
    use crate::Model;

    /// logit = x1 + x2 − 1 over rows (0,0) and (1,1).
    pub fn l1_task() -> ClassificationTask {
        l1_task_with_rows(vec![vec![0.0, 0.0], vec![1.0, 1.0]])
    }

    pub fn l1_task_with_rows(rows: Vec<Vec<f64>>) -> ClassificationTask {
        let m = Model::new(vec![2, 1], vec![vec![1.0, 1.0]], vec![vec![-1.0]]).unwrap();
        let n = rows.len();
        let schema = FeatureSchema::new(vec!["a".into(), "b".into()], "target").unwrap();
        let ds = Dataset::new(rows, vec![0; n], schema).unwrap();
        ClassificationTask::new(m, ds, 0).unwrap()
    }

    /// NET-A (logit = relu(x1) − relu(x2) − 0.5) over a dataset spanning [−1, 1]².
    pub fn net_a_task() -> ClassificationTask {
        let m = crate::model::fixtures::net_a();
        let rows = vec![vec![-1.0, -1.0], vec![1.0, 1.0], vec![0.0, 0.0], vec![1.0, -1.0], vec![0.9, 0.0]];
        let n = rows.len();
        let schema = FeatureSchema::new(vec!["a".into(), "b".into()], "target").unwrap();
        let ds = Dataset::new(rows, vec![0; n], schema).unwrap();
        ClassificationTask::new(m, ds, 0).unwrap()
    }

    /// Trained [2, 4, 1] model on min-max scaled blobs.
    pub fn blobs_task() -> ClassificationTask {
        let ds = default_preprocess(&synth_gaussian_blobs(60, 2, 6.0, 1), PreprocessMode::MinMax).unwrap();
        let m = train(&Model::init(&[2, 4, 1], 0).unwrap(), &ds, &TrainConfig::default()).unwrap();
        ClassificationTask::new(m, ds, 0).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn method_names_parse_case_insensitively() {
        for m in Method::ALL {
            assert_eq!(m.cli_name().parse::<Method>().unwrap(), m);
            assert_eq!(m.cli_name().to_uppercase().parse::<Method>().unwrap(), m);
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
        let err = "nnce".parse::<Method>().unwrap_err();
        assert!(err.valid.contains("kdtree-nnce"));
    }

    #[test]
    fn valid_instance_is_rejected() {
        let t = l1_task();
        for m in Method::ALL {
            let g = build_generator(m, &t, &GeneratorConfig::default()).unwrap();
            assert!(matches!(g.generate(1, &[1.0, 1.0]), Err(GenerateError::NotNegative { index: 1 })));
        }
    }

    #[test]
    fn bad_config_is_rejected() {
        let t = l1_task();
        let mut cfg = GeneratorConfig::default();
        cfg.wachter.step_size = 0.0;
        assert!(matches!(build_generator(Method::Wachter, &t, &cfg), Err(GenerateError::InvalidConfig(_))));
    }

    #[test]
    fn every_method_returns_in_box_valid_ces_on_blobs() {
        let t = blobs_task();
        let negatives = t.negative_instances();
        assert!(!negatives.is_empty());
        let cfg = GeneratorConfig::default();
        for m in Method::ALL {
            let g = build_generator(m, &t, &cfg).unwrap();
            for &(i, x) in negatives.iter().take(8) {
                let r = g.generate(i, x).unwrap();
                let ce = r.ce.as_ref().unwrap_or_else(|| panic!("{m} found nothing for {i}"));
                assert!(r.valid, "{m} invalid CE for {i}");
                assert!(t.data().preprocessing().contains(ce));
                assert!((r.l2_distance - euclidean(ce, x)).abs() < 1e-12);
                assert_eq!(r.method, Some(m));
            }
        }
    }

    #[test]
    fn fixed_seed_gives_identical_results() {
        let t = blobs_task();
        let (i, x) = t.negative_instances()[0];
        for m in Method::ALL {
            let g = build_generator(m, &t, &GeneratorConfig::default()).unwrap();
            let mut a = g.generate(i, x).unwrap();
            let mut b = g.generate(i, x).unwrap();
            a.wall_time = 0.0;
            b.wall_time = 0.0;
            assert_eq!(a, b, "{m}");
        }
    }
}
