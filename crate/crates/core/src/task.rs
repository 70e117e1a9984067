//! A model bound to its dataset, plus the undesirable-class convention.

use thiserror::Error;

use crate::data::Dataset;
use crate::model::{train, ModelError, TrainConfig};
use crate::Model;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("model expects {model} features but the dataset has {data}")]
    FeatureMismatch { model: usize, data: usize },
    #[error("neg_value must be 0 or 1, got {0}")]
    InvalidClass(u8),
    #[error("ensemble size must be at least 1")]
    EmptyEnsemble,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub struct ClassificationTask {
    model: Model,
    data: Dataset,
    neg_value: u8,
}

impl ClassificationTask {
    pub fn new(model: Model, data: Dataset, neg_value: u8) -> Result<Self, TaskError> {
        if neg_value > 1 {
            return Err(TaskError::InvalidClass(neg_value));
        }
        if model.input_dim() != data.feature_count() {
            return Err(TaskError::FeatureMismatch {
                model: model.input_dim(),
                data: data.feature_count(),
            });
        }
        Ok(Self {
            model,
            data,
            neg_value,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn neg_value(&self) -> u8 {
        self.neg_value
    }

    pub fn target_class(&self) -> u8 {
        1 - self.neg_value
    }

    /// +1 when the target is class 1, −1 otherwise. Multiplying a logit by
    /// this makes "more target-like" mean "larger".
    pub fn orientation(&self) -> f64 {
        if self.target_class() == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// Predicted label of `x`, panicking on a dimension mismatch.
    pub fn predict(&self, x: &[f64]) -> u8 {
        crate::model::label_of(self.model.logit(x))
    }

    pub fn is_valid_ce(&self, ce: &[f64]) -> Result<bool, ModelError> {
        Ok(self.model.predict_label(ce)? == self.target_class())
    }

    /// Rows whose predicted label is the undesirable class, in row order.
    pub fn negative_instances(&self) -> Vec<(usize, &[f64])> {
        self.data
            .rows()
            .iter()
            .enumerate()
            .filter(|(_, x)| self.predict(x) == self.neg_value)
            .map(|(i, x)| (i, x.as_slice()))
            .collect()
    }

    /// Row indices predicted as the target class.
    pub fn target_rows(&self) -> Vec<usize> {
        let target = self.target_class();
        (0..self.data.len())
            .filter(|&i| self.predict(self.data.row(i)) == target)
            .collect()
    }

    /// `m_count` models of the task's architecture trained from seeds
    /// `base_seed..base_seed + m_count` on the task data.
    pub fn model_ensemble(&self, m_count: usize, cfg: &TrainConfig, base_seed: u64) -> Result<Vec<Model>, TaskError> {
        if m_count == 0 {
            return Err(TaskError::EmptyEnsemble);
        }
        (0..m_count as u64)
            .map(|k| {
                let seed = base_seed + k;
                let init = Model::init(self.model.layer_dims(), seed)?;
                Ok(train(&init, &self.data, &TrainConfig { seed, ..*cfg })?)
            })
            .collect()
    }
}
