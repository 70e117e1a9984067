//! Counterfactual explanations for small dense ReLU classifiers, with
//! robustness evaluation under parameter changes, retraining, input noise
//! and model multiplicity.

pub mod data;
pub mod evaluators;
pub mod generators;
pub mod model;
pub mod optim;
pub mod scalar;
pub mod seed;
pub mod task;

pub use scalar::Scalar;

/// Double-precision network used throughout the pipeline.
pub type Model = model::DenseModel<f64>;
pub type Interval = model::IntervalVector<f64>;
