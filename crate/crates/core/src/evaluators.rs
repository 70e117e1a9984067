//! Metrics over counterfactuals, whether produced here or elsewhere.
//!
//! Per-instance functions return `None` when an instance is excluded from a
//! mean (a distance with no CE); boolean metrics score absent CEs as 0.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::generators::{euclidean, CounterfactualGenerator, CounterfactualResult, GenerateError};
use crate::model::{interval_logit, label_of, retrain_variant, ModelError, ParamBall, ParamKind, TrainConfig};
use crate::seed;
use crate::task::{ClassificationTask, TaskError};
use crate::Model;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{name} must lie strictly between 0 and 1, got {value}")]
    Probability { name: &'static str, value: f64 },
    #[error("invalid evaluation setting `{0}`")]
    InvalidConfig(String),
    #[error("no counterfactual was found for the instance or any perturbed copy")]
    NoCounterfactual,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Validity,
    Proximity,
    DeltaRobustness,
    ApproxDelta,
    Retraining,
    SetDistance,
    Multiplicity,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Validity,
        Metric::Proximity,
        Metric::DeltaRobustness,
        Metric::ApproxDelta,
        Metric::Retraining,
        Metric::SetDistance,
        Metric::Multiplicity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Validity => "validity",
            Metric::Proximity => "proximity",
            Metric::DeltaRobustness => "delta-robustness",
            Metric::ApproxDelta => "approx-delta",
            Metric::Retraining => "retraining",
            Metric::SetDistance => "set-distance",
            Metric::Multiplicity => "multiplicity",
        }
    }

    pub fn aggregate_kind(self) -> Aggregate {
        match self {
            Metric::Proximity | Metric::SetDistance => Aggregate::Mean,
            _ => Aggregate::Percentage,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown evaluation `{name}`; valid evaluations: {valid}")]
pub struct UnknownMetric {
    pub name: String,
    pub valid: String,
}

impl FromStr for Metric {
    type Err = UnknownMetric;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_lowercase();
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == wanted)
            .ok_or_else(|| UnknownMetric {
                name: s.to_string(),
                valid: Metric::ALL.map(Metric::name).join(", "),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    /// 100 × mean of per-instance values in [0, 1].
    Percentage,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationOutcome {
    pub metric: String,
    pub kind: Aggregate,
    pub per_instance: Vec<(usize, f64)>,
    pub aggregate: f64,
    /// Instances left out of the mean because they had no CE.
    pub excluded: usize,
    /// Set when there was nothing to aggregate; the aggregate is then 0.
    pub empty: bool,
}

impl EvaluationOutcome {
    /// Builds an outcome from per-instance values; `None` entries are
    /// counted as excluded.
    pub fn from_values(metric: impl Into<String>, kind: Aggregate, values: Vec<(usize, Option<f64>)>) -> Self {
        let excluded = values.iter().filter(|(_, v)| v.is_none()).count();
        let per_instance: Vec<(usize, f64)> = values.into_iter().filter_map(|(i, v)| v.map(|v| (i, v))).collect();
        let mut out = Self {
            metric: metric.into(),
            kind,
            empty: per_instance.is_empty(),
            per_instance,
            aggregate: 0.0,
            excluded,
        };
        out.aggregate = out.recompute();
        out
    }

    /// The aggregate implied by `per_instance`.
    pub fn recompute(&self) -> f64 {
        aggregate(self.kind, self.per_instance.iter().map(|&(_, v)| v))
    }
}

/// Mean of `values`, scaled to a percentage for [`Aggregate::Percentage`];
/// 0 for no values.
pub fn aggregate(kind: Aggregate, values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    let mean = sum / n as f64;
    match kind {
        Aggregate::Percentage => 100.0 * mean,
        Aggregate::Mean => mean,
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn eval_validity(t: &ClassificationTask, ces: &[CounterfactualResult]) -> EvaluationOutcome {
    let values = ces
        .iter()
        .map(|r| (r.instance_index, Some(indicator(validity_of(t, r)))))
        .collect();
    EvaluationOutcome::from_values(Metric::Validity.name(), Aggregate::Percentage, values)
}

fn validity_of(t: &ClassificationTask, r: &CounterfactualResult) -> bool {
    r.ce.as_deref().is_some_and(|c| t.predict(c) == t.target_class())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Norm {
    L1,
    #[default]
    L2,
}

pub fn distance(a: &[f64], b: &[f64], norm: Norm) -> f64 {
    match norm {
        Norm::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        Norm::L2 => euclidean(a, b),
    }
}

pub fn eval_proximity(ces: &[CounterfactualResult], norm: Norm) -> EvaluationOutcome {
    let values = ces
        .iter()
        .map(|r| (r.instance_index, r.ce.as_deref().map(|c| distance(&r.instance, c, norm))))
        .collect();
    EvaluationOutcome::from_values(Metric::Proximity.name(), Aggregate::Mean, values)
}

/// Whether interval propagation proves `ce` stays in the target class for
/// every parameter setting within `delta` of the model's.
pub fn certified(t: &ClassificationTask, ce: &[f64], delta: f64, include_biases: bool) -> bool {
    let mut ball = ParamBall::new(t.model(), delta);
    if !include_biases {
        ball = ball.weights_only();
    }
    match interval_logit(&ball, ce) {
        Ok((lo, _)) if t.target_class() == 1 => lo > 0.0,
        Ok((_, hi)) => hi <= 0.0,
        Err(_) => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RobustnessVerdict {
    CertifiedRobust,
    /// A model inside the ball that classifies the CE as the undesirable class.
    Falsified { witness: Model },
    Unknown,
}

impl RobustnessVerdict {
    pub fn is_certified(&self) -> bool {
        matches!(self, RobustnessVerdict::CertifiedRobust)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRobustnessConfig {
    pub delta: f64,
    pub include_biases: bool,
    /// Ball members tried by the falsifier when certification fails.
    pub falsifier_samples: usize,
    pub seed: u64,
}

impl Default for DeltaRobustnessConfig {
    fn default() -> Self {
        Self {
            delta: 0.005,
            include_biases: true,
            falsifier_samples: 1000,
            seed: 0,
        }
    }
}

/// Shifts each parameter by `delta · step(kind, layer, index)`, leaving
/// biases alone when `include_biases` is false.
fn shifted(model: &Model, delta: f64, include_biases: bool, mut step: impl FnMut(ParamKind, usize, usize) -> f64) -> Model {
    model.map_params(|kind, l, i, v| {
        if kind == ParamKind::Bias && !include_biases {
            v
        } else {
            v + delta * step(kind, l, i)
        }
    })
}

fn target_kept(t: &ClassificationTask, m: &Model, ce: &[f64]) -> bool {
    label_of(m.logit(ce)) == t.target_class()
}

pub fn eval_delta_robustness(t: &ClassificationTask, ce: &[f64], cfg: &DeltaRobustnessConfig) -> RobustnessVerdict {
    if certified(t, ce, cfg.delta, cfg.include_biases) {
        return RobustnessVerdict::CertifiedRobust;
    }
    falsify(t, ce, cfg).map_or(RobustnessVerdict::Unknown, |witness| RobustnessVerdict::Falsified { witness })
}

/// Searches the ball for a model that flips `ce`. The first try moves every
/// parameter against the gradient of the oriented logit; the rest alternate
/// random corners and uniform interior points.
pub fn falsify(t: &ClassificationTask, ce: &[f64], cfg: &DeltaRobustnessConfig) -> Option<Model> {
    let m = t.model();
    let grad = m.param_gradient(ce).ok()?;
    let o = t.orientation();
    let mut g = Vec::with_capacity(m.param_count());
    grad.map_params(|_, _, _, v| {
        g.push(v);
        v
    });
    let mut k = 0;
    let first = shifted(m, cfg.delta, cfg.include_biases, |_, _, _| {
        k += 1;
        -o * g[k - 1].signum()
    });
    if cfg.falsifier_samples > 0 && !target_kept(t, &first, ce) {
        return Some(first);
    }
    let mut rng = seed::rng(seed::derive_seed(cfg.seed, 0x6661_6c73));
    for s in 1..cfg.falsifier_samples {
        let corner = s % 2 == 1;
        let cand = shifted(m, cfg.delta, cfg.include_biases, |_, _, _| {
            if corner {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            } else {
                rng.gen_range(-1.0..=1.0)
            }
        });
        if !target_kept(t, &cand, ce) {
            return Some(cand);
        }
    }
    None
}

/// Per-instance certified-robust indicator; absent CEs are not robust.
pub fn eval_delta_robustness_all(
    t: &ClassificationTask,
    ces: &[CounterfactualResult],
    cfg: &DeltaRobustnessConfig,
) -> EvaluationOutcome {
    let values = ces
        .iter()
        .map(|r| {
            let ok = r.ce.as_deref().is_some_and(|c| certified(t, c, cfg.delta, cfg.include_biases));
            (r.instance_index, Some(indicator(ok)))
        })
        .collect();
    EvaluationOutcome::from_values(Metric::DeltaRobustness.name(), Aggregate::Percentage, values)
}

fn check_probability(name: &'static str, value: f64) -> Result<(), EvalError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(EvalError::Probability { name, value })
    }
}

/// Number of independent samples that must all succeed for success
/// probability at least `r` to hold with confidence `1 − alpha`.
pub fn scenario_sample_count(r: f64, alpha: f64) -> Result<usize, EvalError> {
    check_probability("R", r)?;
    check_probability("alpha", alpha)?;
    Ok((alpha.ln() / r.ln()).ceil() as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxDeltaConfig {
    pub delta: f64,
    pub include_biases: bool,
    pub r: f64,
    pub alpha: f64,
}

impl Default for ApproxDeltaConfig {
    fn default() -> Self {
        Self {
            delta: 0.005,
            include_biases: true,
            r: 0.99,
            alpha: 0.05,
        }
    }
}

/// True iff `ce` stays in the target class for every one of the scenario
/// samples drawn uniformly from the ball.
pub fn eval_approx_delta_robustness(
    t: &ClassificationTask,
    ce: &[f64],
    cfg: &ApproxDeltaConfig,
    seed: u64,
) -> Result<bool, EvalError> {
    let n = scenario_sample_count(cfg.r, cfg.alpha)?;
    if t.model().input_dim() != ce.len() {
        return Err(ModelError::DimensionMismatch {
            expected: t.model().input_dim(),
            found: ce.len(),
        }
        .into());
    }
    if certified(t, ce, cfg.delta, cfg.include_biases) {
        return Ok(true);
    }
    let mut rng = seed::rng(seed);
    for _ in 0..n {
        let m = shifted(t.model(), cfg.delta, cfg.include_biases, |_, _, _| rng.gen_range(-1.0..=1.0));
        if !target_kept(t, &m, ce) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `m_count` fine-tuned variants of the task model, each on its own
/// bootstrap resample.
pub fn retrained_variants(
    t: &ClassificationTask,
    m_count: usize,
    cfg: &TrainConfig,
    base_seed: u64,
) -> Result<Vec<Model>, ModelError> {
    (0..m_count as u64)
        .map(|k| retrain_variant(t.model(), t.data(), cfg, seed::derive_seed(base_seed, k)))
        .collect()
}

/// Whether `ce` is classified as `target_class` by every model in `models`.
pub fn valid_under_all(models: &[Model], ce: &[f64], target_class: u8) -> bool {
    models.iter().all(|m| label_of(m.logit(ce)) == target_class)
}

pub fn eval_validity_after_retraining(
    t: &ClassificationTask,
    ces: &[CounterfactualResult],
    m_count: usize,
    cfg: &TrainConfig,
    base_seed: u64,
) -> Result<EvaluationOutcome, EvalError> {
    let variants = retrained_variants(t, m_count, cfg, base_seed)?;
    let values = ces
        .iter()
        .map(|r| {
            let ok = r.ce.as_deref().is_some_and(|c| valid_under_all(&variants, c, t.target_class()));
            (r.instance_index, Some(indicator(ok)))
        })
        .collect();
    Ok(EvaluationOutcome::from_values(Metric::Retraining.name(), Aggregate::Percentage, values))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SetDistance {
    /// Half the sum of both directed average nearest distances.
    #[default]
    AverageMin,
    Hausdorff,
}

/// Distance between two non-empty point sets under `kind`.
pub fn set_distance(a: &[Vec<f64>], b: &[Vec<f64>], kind: SetDistance) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "set distance needs non-empty sets");
    let directed = |from: &[Vec<f64>], to: &[Vec<f64>]| -> Vec<f64> {
        from.iter()
            .map(|p| to.iter().map(|q| euclidean(p, q)).fold(f64::INFINITY, f64::min))
            .collect()
    };
    let (ab, ba) = (directed(a, b), directed(b, a));
    match kind {
        SetDistance::AverageMin => {
            0.5 * (ab.iter().sum::<f64>() / ab.len() as f64 + ba.iter().sum::<f64>() / ba.len() as f64)
        }
        SetDistance::Hausdorff => ab.into_iter().chain(ba).fold(0.0, f64::max),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetDistanceConfig {
    pub sigma_x: f64,
    pub n_perturb: usize,
    pub kind: SetDistance,
}

impl Default for SetDistanceConfig {
    fn default() -> Self {
        Self {
            sigma_x: 0.01,
            n_perturb: 5,
            kind: SetDistance::AverageMin,
        }
    }
}

/// CE set of `x` under `generator`. A point already in the target class is
/// its own counterfactual.
fn ce_set(generator: &dyn CounterfactualGenerator, index: usize, x: &[f64]) -> Result<Vec<Vec<f64>>, EvalError> {
    match generator.generate(index, x) {
        Ok(r) => Ok(r.ce.into_iter().collect()),
        Err(GenerateError::NotNegative { .. }) => Ok(vec![x.to_vec()]),
        Err(e) => Err(e.into()),
    }
}

/// Mean set distance between the CEs of `x` and those of `n_perturb`
/// Gaussian-perturbed copies. Copies whose CE set is empty are skipped.
pub fn eval_set_distance_robustness(
    generator: &dyn CounterfactualGenerator,
    index: usize,
    x: &[f64],
    cfg: &SetDistanceConfig,
    seed: u64,
) -> Result<f64, EvalError> {
    if !(cfg.sigma_x >= 0.0) || cfg.n_perturb == 0 {
        return Err(EvalError::InvalidConfig("set-distance needs sigma_x ≥ 0 and n_perturb ≥ 1".into()));
    }
    let base = ce_set(generator, index, x)?;
    if base.is_empty() {
        return Err(EvalError::NoCounterfactual);
    }
    let mut rng: ChaCha8Rng = seed::instance_rng(seed, index);
    let mut total = 0.0;
    let mut used = 0;
    for _ in 0..cfg.n_perturb {
        let xi: Vec<f64> = x
            .iter()
            .map(|&v| {
                let z: f64 = rng.sample(StandardNormal);
                v + cfg.sigma_x * z
            })
            .collect();
        let si = ce_set(generator, index, &xi)?;
        if !si.is_empty() {
            total += set_distance(&base, &si, cfg.kind);
            used += 1;
        }
    }
    if used == 0 {
        return Err(EvalError::NoCounterfactual);
    }
    Ok(total / used as f64)
}

/// Fraction of `ensemble` that classifies `ce` as `target_class`.
pub fn eval_multiplicity_validity(ensemble: &[Model], ce: &[f64], target_class: u8) -> f64 {
    if ensemble.is_empty() {
        return 0.0;
    }
    let hits = ensemble.iter().filter(|m| label_of(m.logit(ce)) == target_class).count();
    hits as f64 / ensemble.len() as f64
}

/// Settings for evaluating whole result lists, as the benchmark does.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationConfig {
    pub seed: u64,
    pub norm: Norm,
    pub delta: DeltaRobustnessConfig,
    pub approx: ApproxDeltaConfig,
    pub retrain_count: usize,
    pub retrain: TrainConfig,
    pub set_distance: SetDistanceConfig,
    pub ensemble_size: usize,
    pub ensemble: TrainConfig,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            norm: Norm::L2,
            delta: DeltaRobustnessConfig::default(),
            approx: ApproxDeltaConfig::default(),
            retrain_count: 10,
            retrain: TrainConfig {
                epochs: 5,
                ..Default::default()
            },
            set_distance: SetDistanceConfig::default(),
            ensemble_size: 5,
            ensemble: TrainConfig::default(),
        }
    }
}

impl EvaluationConfig {
    /// Uses `delta` for both the certified and the sampled robustness checks.
    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta.delta = delta;
        self.approx.delta = delta;
        self
    }
}

/// Evaluates results one instance at a time. Models needed by the
/// retraining and multiplicity metrics are built once up front.
pub struct Evaluator<'a> {
    task: &'a ClassificationTask,
    metrics: Vec<Metric>,
    cfg: EvaluationConfig,
    variants: Vec<Model>,
    ensemble: Vec<Model>,
}

impl<'a> Evaluator<'a> {
    pub fn new(task: &'a ClassificationTask, metrics: &[Metric], cfg: EvaluationConfig) -> Result<Self, EvalError> {
        check_probability("R", cfg.approx.r)?;
        check_probability("alpha", cfg.approx.alpha)?;
        if !(cfg.delta.delta >= 0.0) {
            return Err(EvalError::InvalidConfig("delta must be non-negative".into()));
        }
        let variants = if metrics.contains(&Metric::Retraining) {
            retrained_variants(task, cfg.retrain_count, &cfg.retrain, seed::derive_seed(cfg.seed, 0x0076_6172))?
        } else {
            Vec::new()
        };
        let ensemble = if metrics.contains(&Metric::Multiplicity) {
            task.model_ensemble(cfg.ensemble_size, &cfg.ensemble, seed::derive_seed(cfg.seed, 0x0065_6e73))?
        } else {
            Vec::new()
        };
        Ok(Self {
            task,
            metrics: metrics.to_vec(),
            cfg,
            variants,
            ensemble,
        })
    }

    pub fn metrics(&self) -> &[Metric] {
        &self.metrics
    }

    /// Value of `metric` for one result; `None` means excluded from the mean.
    pub fn instance_value(
        &self,
        metric: Metric,
        generator: &dyn CounterfactualGenerator,
        r: &CounterfactualResult,
    ) -> Option<f64> {
        let t = self.task;
        let ce = r.ce.as_deref();
        let seed = seed::derive_seed(self.cfg.seed, r.instance_index as u64);
        match metric {
            Metric::Validity => Some(indicator(validity_of(t, r))),
            Metric::Proximity => ce.map(|c| distance(&r.instance, c, self.cfg.norm)),
            Metric::DeltaRobustness => {
                let d = &self.cfg.delta;
                Some(indicator(ce.is_some_and(|c| certified(t, c, d.delta, d.include_biases))))
            }
            Metric::ApproxDelta => Some(indicator(
                ce.is_some_and(|c| eval_approx_delta_robustness(t, c, &self.cfg.approx, seed).unwrap_or(false)),
            )),
            Metric::Retraining => Some(indicator(
                ce.is_some_and(|c| valid_under_all(&self.variants, c, t.target_class())),
            )),
            Metric::SetDistance => {
                eval_set_distance_robustness(generator, r.instance_index, &r.instance, &self.cfg.set_distance, self.cfg.seed).ok()
            }
            Metric::Multiplicity => Some(ce.map_or(0.0, |c| eval_multiplicity_validity(&self.ensemble, c, t.target_class()))),
        }
    }

    /// Values of every configured metric for one result, in metric order.
    pub fn evaluate_instance(&self, generator: &dyn CounterfactualGenerator, r: &CounterfactualResult) -> Vec<Option<f64>> {
        self.metrics.iter().map(|&m| self.instance_value(m, generator, r)).collect()
    }

    /// One outcome per metric over all `results`.
    pub fn evaluate(&self, generator: &dyn CounterfactualGenerator, results: &[CounterfactualResult]) -> Vec<EvaluationOutcome> {
        let rows: Vec<Vec<Option<f64>>> = results.iter().map(|r| self.evaluate_instance(generator, r)).collect();
        self.outcomes(results, &rows)
    }

    /// Assembles outcomes from per-instance rows as produced by
    /// [`Evaluator::evaluate_instance`].
    pub fn outcomes(&self, results: &[CounterfactualResult], rows: &[Vec<Option<f64>>]) -> Vec<EvaluationOutcome> {
        self.metrics
            .iter()
            .enumerate()
            .map(|(k, &m)| {
                let values = results.iter().zip(rows).map(|(r, row)| (r.instance_index, row[k])).collect();
                EvaluationOutcome::from_values(m.name(), m.aggregate_kind(), values)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::test_support::*;
    use crate::generators::{build_generator, GeneratorConfig, Method};

    fn ext(t: &ClassificationTask, i: usize, x: &[f64], ce: Option<&[f64]>) -> CounterfactualResult {
        CounterfactualResult::external(t, i, x.to_vec(), ce.map(<[f64]>::to_vec))
    }

    fn delta(d: f64) -> DeltaRobustnessConfig {
        DeltaRobustnessConfig {
            delta: d,
            ..Default::default()
        }
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        let e = "accuracy".parse::<Metric>().unwrap_err();
        assert!(e.valid.contains("set-distance"));
    }

    #[test]
    fn validity_counts_absent_as_invalid() {
        let t = l1_task();
        let x = [0.0, 0.0];
        let ces = [ext(&t, 0, &x, Some(&[1.0, 1.0])), ext(&t, 1, &x, Some(&[0.0, 0.0]))];
        let v = eval_validity(&t, &ces);
        assert_eq!(v.aggregate, 50.0);
        assert_eq!(v.aggregate, v.recompute());
        let v = eval_validity(&t, &[ext(&t, 0, &x, None)]);
        assert_eq!(v.aggregate, 0.0);
        let v = eval_validity(&t, &[]);
        assert!(v.empty && v.aggregate == 0.0 && v.per_instance.is_empty());
    }

    #[test]
    fn proximity_norms() {
        let t = l1_task();
        let ces = [ext(&t, 0, &[0.0, 0.0], Some(&[3.0, 4.0])), ext(&t, 1, &[0.0, 0.0], None)];
        let p = eval_proximity(&ces, Norm::L2);
        assert_eq!(p.aggregate, 5.0);
        assert_eq!(p.excluded, 1);
        assert_eq!(eval_proximity(&ces, Norm::L1).aggregate, 7.0);
        assert_eq!(eval_proximity(&[ext(&t, 0, &[0.3, 0.1], Some(&[0.3, 0.1]))], Norm::L2).aggregate, 0.0);
    }

    #[test]
    fn delta_robustness_on_the_linear_model() {
        let t = l1_task();
        assert_eq!(eval_delta_robustness(&t, &[1.0, 1.0], &delta(0.1)), RobustnessVerdict::CertifiedRobust);
        match eval_delta_robustness(&t, &[0.6, 0.6], &delta(0.1)) {
            RobustnessVerdict::Falsified { witness } => {
                assert_eq!(label_of(witness.logit(&[0.6, 0.6])), 0);
                assert!(witness.max_param_diff(t.model()).unwrap() <= 0.1 + 1e-15);
            }
            v => panic!("expected falsified, got {v:?}"),
        }
        assert!(eval_delta_robustness(&t, &[0.6, 0.6], &delta(0.0)).is_certified());
    }

    #[test]
    fn weights_only_ball_is_smaller() {
        let t = l1_task();
        // 0.9·1.2 − 1 = 0.08 > 0 when the bias stays put
        let cfg = DeltaRobustnessConfig {
            include_biases: false,
            ..delta(0.1)
        };
        assert!(eval_delta_robustness(&t, &[0.6, 0.6], &cfg).is_certified());
    }

    #[test]
    fn unknown_when_the_falsifier_has_no_budget() {
        let t = l1_task();
        let cfg = DeltaRobustnessConfig {
            falsifier_samples: 0,
            ..delta(0.1)
        };
        assert_eq!(eval_delta_robustness(&t, &[0.6, 0.6], &cfg), RobustnessVerdict::Unknown);
    }

    #[test]
    fn certification_is_sound_and_monotone_on_a_trained_model() {
        let t = blobs_task();
        let mut rng = seed::rng(5);
        for trial in 0..20 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(0.0..1.0)).collect();
            if t.predict(&x) != t.target_class() {
                continue;
            }
            let d = 0.05 * (trial as f64 + 1.0) / 20.0;
            let cert = certified(&t, &x, d, true);
            if cert {
                assert!(certified(&t, &x, d / 2.0, true));
                for _ in 0..10_000 {
                    let m = shifted(t.model(), d, true, |_, _, _| rng.gen_range(-1.0..=1.0));
                    assert!(target_kept(&t, &m, &x));
                }
            } else if let RobustnessVerdict::Falsified { witness } = eval_delta_robustness(&t, &x, &delta(d)) {
                assert!(!target_kept(&t, &witness, &x));
            }
        }
    }

    #[test]
    fn scenario_sample_counts() {
        assert_eq!(scenario_sample_count(0.99, 0.05).unwrap(), 299);
        assert_eq!(scenario_sample_count(0.9, 0.5).unwrap(), 7);
        assert!(matches!(scenario_sample_count(1.0, 0.5), Err(EvalError::Probability { name: "R", .. })));
        assert!(scenario_sample_count(0.9, 0.0).is_err());
    }

    #[test]
    fn approx_delta_follows_the_certificate() {
        let t = l1_task();
        let cfg = ApproxDeltaConfig {
            delta: 0.1,
            ..Default::default()
        };
        for s in 0..20 {
            assert!(eval_approx_delta_robustness(&t, &[1.0, 1.0], &cfg, s).unwrap());
        }
        // at (0.5, 0.52) half the ball flips the class
        assert!(!eval_approx_delta_robustness(&t, &[0.5, 0.52], &cfg, 0).unwrap());
    }

    #[test]
    fn retraining_without_epochs_equals_validity() {
        let t = blobs_task();
        let g = build_generator(Method::Bls, &t, &GeneratorConfig::default()).unwrap();
        let ces: Vec<_> = t.negative_instances().iter().map(|&(i, x)| g.generate(i, x).unwrap()).collect();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let r = eval_validity_after_retraining(&t, &ces, 3, &cfg, 1).unwrap();
        assert_eq!(r.per_instance, eval_validity(&t, &ces).per_instance);
    }

    #[test]
    fn set_distance_cases() {
        let a = vec![vec![0.0, 0.0]];
        let b = vec![vec![3.0, 4.0]];
        assert_eq!(set_distance(&a, &b, SetDistance::AverageMin), 5.0);
        assert_eq!(set_distance(&a, &b, SetDistance::Hausdorff), 5.0);
        let s = vec![vec![0.0, 1.0], vec![2.0, 0.5], vec![-1.0, 3.0]];
        assert_eq!(set_distance(&s, &s, SetDistance::AverageMin), 0.0);
        assert_eq!(set_distance(&s, &s, SetDistance::Hausdorff), 0.0);
        // {0} vs {0, 10}: directed averages 0 and 5
        let one = vec![vec![0.0]];
        let two = vec![vec![0.0], vec![10.0]];
        assert_eq!(set_distance(&one, &two, SetDistance::AverageMin), 2.5);
        assert_eq!(set_distance(&one, &two, SetDistance::Hausdorff), 10.0);
    }

    #[test]
    fn zero_noise_set_distance_is_zero() {
        let t = blobs_task();
        let (i, x) = t.negative_instances()[0];
        let cfg = SetDistanceConfig {
            sigma_x: 0.0,
            ..Default::default()
        };
        for m in [Method::KdTreeNnce, Method::Mce, Method::Stce] {
            let g = build_generator(m, &t, &GeneratorConfig::default()).unwrap();
            assert_eq!(eval_set_distance_robustness(g.as_ref(), i, x, &cfg, 3).unwrap(), 0.0);
        }
        let g = build_generator(Method::KdTreeNnce, &t, &GeneratorConfig::default()).unwrap();
        let noisy = SetDistanceConfig {
            sigma_x: 0.05,
            ..Default::default()
        };
        assert!(eval_set_distance_robustness(g.as_ref(), i, x, &noisy, 3).unwrap() >= 0.0);
    }

    #[test]
    fn multiplicity_fractions() {
        let t = blobs_task();
        let m = t.model().clone();
        let (_, x) = t.negative_instances()[0];
        let target = t.target_rows()[0];
        let c = t.data().row(target);
        assert_eq!(eval_multiplicity_validity(std::slice::from_ref(&m), c, 1), 1.0);
        assert_eq!(eval_multiplicity_validity(std::slice::from_ref(&m), x, 1), 0.0);
        assert_eq!(eval_multiplicity_validity(&[m.clone(), m.clone(), m], x, 1), 0.0);
    }

    #[test]
    fn ensemble_agrees_at_the_centroid() {
        let t = blobs_task();
        let ens = t.model_ensemble(5, &TrainConfig::default(), 40).unwrap();
        let rows: Vec<&Vec<f64>> = t.data().rows().iter().zip(t.data().labels()).filter(|(_, &y)| y == 1).map(|(r, _)| r).collect();
        let centroid: Vec<f64> = (0..2).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64).collect();
        assert_eq!(eval_multiplicity_validity(&ens, &centroid, 1), 1.0);
    }

    #[test]
    fn evaluator_aggregates_match_per_instance() {
        let t = blobs_task();
        let g = build_generator(Method::KdTreeNnce, &t, &GeneratorConfig::default()).unwrap();
        let ces: Vec<_> = t.negative_instances().iter().map(|&(i, x)| g.generate(i, x).unwrap()).collect();
        let ev = Evaluator::new(&t, &Metric::ALL, EvaluationConfig::default()).unwrap();
        let out = ev.evaluate(g.as_ref(), &ces);
        assert_eq!(out.len(), 7);
        for o in &out {
            assert_eq!(o.aggregate, o.recompute(), "{}", o.metric);
            if o.kind == Aggregate::Percentage {
                assert!((0.0..=100.0).contains(&o.aggregate));
            }
        }
        assert_eq!(out[0].aggregate, 100.0);
        assert_eq!(out[1].aggregate, eval_proximity(&ces, Norm::L2).aggregate);
    }
}
