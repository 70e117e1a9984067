//! Minibatch gradient descent on binary cross-entropy.

use rand::seq::SliceRandom;

use super::{DenseModel, ModelError};
use crate::data::{bootstrap_resample, Dataset};
use crate::scalar::{relu, sigmoid, Scalar};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 200,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidConfig(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// log(1 + e^z) - y z, computed without overflow.
fn bce_from_logit<T: Scalar>(z: T, y: T) -> T {
    relu(z) - z * y + (T::one() + (-z.abs()).exp()).ln()
}

/// Returns a trained copy of `model`; the input is left untouched.
pub fn train<T: Scalar>(model: &DenseModel<T>, ds: &Dataset, cfg: &TrainConfig) -> Result<DenseModel<T>, ModelError> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(ModelError::EmptyData);
    }
    if ds.feature_count() != model.input_dim() {
        return Err(ModelError::DimensionMismatch {
            expected: model.input_dim(),
            found: ds.feature_count(),
        });
    }
    let xs: Vec<Vec<T>> = ds
        .rows()
        .iter()
        .map(|r| r.iter().map(|&v| T::lit(v)).collect())
        .collect();
    let ys: Vec<T> = ds.labels().iter().map(|&l| T::lit(f64::from(l))).collect();

    let mut m = model.clone();
    let layers = m.layer_count();
    let dims = m.layer_dims().to_vec();
    let lr = T::lit(cfg.learning_rate);
    let mut rng = seed::rng(cfg.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut gw: Vec<Vec<T>> = (0..layers).map(|l| vec![T::zero(); dims[l] * dims[l + 1]]).collect();
    let mut gb: Vec<Vec<T>> = (0..layers).map(|l| vec![T::zero(); dims[l + 1]]).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            gw.iter_mut().flatten().for_each(|g| *g = T::zero());
            gb.iter_mut().flatten().for_each(|g| *g = T::zero());
            let mut loss = T::zero();
            for &i in chunk {
                let x = &xs[i];
                let pre = m.pre_activations(x);
                let z = pre[layers - 1][0];
                loss = loss + bce_from_logit(z, ys[i]);
                // dL/dz for the output logit
                let mut delta = vec![sigmoid(z) - ys[i]];
                for l in (0..layers).rev() {
                    let fan_in = dims[l];
                    let input: Vec<T> = if l == 0 {
                        x.clone()
                    } else {
                        pre[l - 1].iter().map(|&v| relu(v)).collect()
                    };
                    for (j, &d) in delta.iter().enumerate() {
                        gb[l][j] = gb[l][j] + d;
                        let row = &mut gw[l][j * fan_in..(j + 1) * fan_in];
                        for (g, &a) in row.iter_mut().zip(&input) {
                            *g = *g + d * a;
                        }
                    }
                    if l > 0 {
                        let w = m.weights(l);
                        let mut prev = vec![T::zero(); fan_in];
                        for (j, &d) in delta.iter().enumerate() {
                            for (k, p) in prev.iter_mut().enumerate() {
                                *p = *p + d * w[j * fan_in + k];
                            }
                        }
                        for (p, &zp) in prev.iter_mut().zip(&pre[l - 1]) {
                            if zp <= T::zero() {
                                *p = T::zero();
                            }
                        }
                        delta = prev;
                    }
                }
            }
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch });
            }
            let scale = lr / T::lit(chunk.len() as f64);
            let (weights, biases) = m.params_mut();
            for (w, g) in weights.iter_mut().flatten().zip(gw.iter().flatten()) {
                *w = *w - scale * *g;
            }
            for (b, g) in biases.iter_mut().flatten().zip(gb.iter().flatten()) {
                *b = *b - scale * *g;
            }
            if weights.iter().chain(biases.iter()).flatten().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFiniteLoss { epoch, batch });
            }
        }
    }
    Ok(m)
}

/// Fine-tunes a copy of `model` on a bootstrap resample of `ds`. The resample
/// and the shuffle order are both keyed on `variant_seed`.
pub fn retrain_variant<T: Scalar>(
    model: &DenseModel<T>,
    ds: &Dataset,
    cfg: &TrainConfig,
    variant_seed: u64,
) -> Result<DenseModel<T>, ModelError> {
    let resampled = bootstrap_resample(ds, variant_seed);
    let cfg = TrainConfig {
        seed: seed::derive_seed(variant_seed, 0x7265_7472),
        ..*cfg
    };
    train(model, &resampled, &cfg)
}
