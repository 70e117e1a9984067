//! Dense ReLU network with a single sigmoid output.
//!
//! Weights are stored row-major per layer (`out × in`). Hidden layers apply
//! ReLU; the last layer produces one logit. A logit of exactly zero is
//! classified as 0.

mod interval;
mod io;
mod train;

pub use interval::{interval_logit, propagate_bounds, IntervalVector, ParamBall};
pub use io::{load_model, save_model};
pub use train::{retrain_variant, train, TrainConfig};

use rand::Rng;
use thiserror::Error;

use crate::scalar::{relu, sigmoid, Scalar};
use crate::seed;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid layer dimensions {dims:?}: {reason}")]
    InvalidDims { dims: Vec<usize>, reason: String },
    #[error("input has {found} features, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("empty training set")]
    EmptyData,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("model file does not validate: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseModel<T> {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<T>>,
    biases: Vec<Vec<T>>,
}

/// Which tensor a parameter lives in, for parameter-wise maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

fn check_dims(dims: &[usize]) -> Result<(), ModelError> {
    let bad = |reason: &str| ModelError::InvalidDims {
        dims: dims.to_vec(),
        reason: reason.to_string(),
    };
    if dims.len() < 2 {
        return Err(bad("need at least an input and an output layer"));
    }
    if dims.contains(&0) {
        return Err(bad("layer widths must be positive"));
    }
    if *dims.last().unwrap() != 1 {
        return Err(bad("output layer must have exactly one unit"));
    }
    Ok(())
}

impl<T: Scalar> DenseModel<T> {
    pub fn new(layer_dims: Vec<usize>, weights: Vec<Vec<T>>, biases: Vec<Vec<T>>) -> Result<Self, ModelError> {
        check_dims(&layer_dims)?;
        let layers = layer_dims.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(ModelError::Validation(format!(
                "{layers} layers declared but {} weight and {} bias tensors given",
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..layers {
            let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
            if weights[l].len() != fan_in * fan_out || biases[l].len() != fan_out {
                return Err(ModelError::Validation(format!(
                    "layer {l}: expected {fan_out}x{fan_in} weights and {fan_out} biases, found {} and {}",
                    weights[l].len(),
                    biases[l].len()
                )));
            }
        }
        if weights.iter().chain(&biases).flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::Validation("non-finite parameter".into()));
        }
        Ok(Self {
            layer_dims,
            weights,
            biases,
        })
    }

    /// Uniform `±1/sqrt(fan_in)` weights and biases.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self, ModelError> {
        check_dims(layer_dims)?;
        let mut rng = seed::rng(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_dims.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let mut draw = || T::lit(rng.gen_range(-bound..bound));
            weights.push((0..w[0] * w[1]).map(|_| draw()).collect());
            biases.push((0..w[1]).map(|_| draw()).collect());
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    /// Row-major `out × in` weights of layer `l`.
    pub fn weights(&self, l: usize) -> &[T] {
        &self.weights[l]
    }

    pub fn biases(&self, l: usize) -> &[T] {
        &self.biases[l]
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    /// Returns a copy with every parameter replaced by `f(kind, layer, index, value)`.
    pub fn map_params(&self, mut f: impl FnMut(ParamKind, usize, usize, T) -> T) -> Self {
        let weights = self
            .weights
            .iter()
            .enumerate()
            .map(|(l, w)| w.iter().enumerate().map(|(i, &v)| f(ParamKind::Weight, l, i, v)).collect())
            .collect();
        let biases = self
            .biases
            .iter()
            .enumerate()
            .map(|(l, b)| b.iter().enumerate().map(|(i, &v)| f(ParamKind::Bias, l, i, v)).collect())
            .collect();
        Self {
            layer_dims: self.layer_dims.clone(),
            weights,
            biases,
        }
    }

    /// Largest absolute parameter difference; `None` if architectures differ.
    pub fn max_param_diff(&self, other: &Self) -> Option<T> {
        if self.layer_dims != other.layer_dims {
            return None;
        }
        let diff = self
            .weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .zip(other.weights.iter().chain(&other.biases).flatten())
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        Some(diff)
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [Vec<T>], &mut [Vec<T>]) {
        (&mut self.weights, &mut self.biases)
    }

    fn check_input(&self, x: &[T]) -> Result<(), ModelError> {
        if x.len() != self.input_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Pre-activations of every layer for input `x`.
    pub(crate) fn pre_activations(&self, x: &[T]) -> Vec<Vec<T>> {
        let mut out = Vec::with_capacity(self.layer_count());
        let mut act: Vec<T> = x.to_vec();
        for l in 0..self.layer_count() {
            let fan_in = self.layer_dims[l];
            let z: Vec<T> = self.biases[l]
                .iter()
                .enumerate()
                .map(|(j, &b)| {
                    let row = &self.weights[l][j * fan_in..(j + 1) * fan_in];
                    row.iter().zip(&act).fold(b, |s, (&w, &a)| s + w * a)
                })
                .collect();
            act = z.iter().map(|&v| relu(v)).collect();
            out.push(z);
        }
        out
    }

    /// Logit without the dimension check; panics on a short input.
    pub fn logit(&self, x: &[T]) -> T {
        assert_eq!(x.len(), self.input_dim(), "input dimension");
        self.pre_activations(x).pop().unwrap()[0]
    }

    pub fn forward_logit(&self, x: &[T]) -> Result<T, ModelError> {
        self.check_input(x)?;
        Ok(self.logit(x))
    }

    pub fn predict_proba(&self, x: &[T]) -> Result<T, ModelError> {
        self.forward_logit(x).map(sigmoid)
    }

    pub fn predict_label(&self, x: &[T]) -> Result<u8, ModelError> {
        self.forward_logit(x).map(label_of)
    }

    /// Gradient of the logit with respect to the input. ReLU has slope 0 at 0.
    pub fn input_gradient(&self, x: &[T]) -> Result<Vec<T>, ModelError> {
        self.check_input(x)?;
        let pre = self.pre_activations(x);
        let mut grad = vec![T::one()];
        for l in (0..self.layer_count()).rev() {
            let fan_in = self.layer_dims[l];
            let mut next = vec![T::zero(); fan_in];
            for (j, &g) in grad.iter().enumerate() {
                let row = &self.weights[l][j * fan_in..(j + 1) * fan_in];
                for (n, &w) in next.iter_mut().zip(row) {
                    *n = *n + g * w;
                }
            }
            if l > 0 {
                for (n, &z) in next.iter_mut().zip(&pre[l - 1]) {
                    if z <= T::zero() {
                        *n = T::zero();
                    }
                }
            }
            grad = next;
        }
        Ok(grad)
    }

    /// Gradient of the logit with respect to every parameter, laid out as a
    /// model of the same shape.
    pub fn param_gradient(&self, x: &[T]) -> Result<Self, ModelError> {
        self.check_input(x)?;
        let pre = self.pre_activations(x);
        let layers = self.layer_count();
        let mut weights: Vec<Vec<T>> = self.weights.iter().map(|w| vec![T::zero(); w.len()]).collect();
        let mut biases: Vec<Vec<T>> = self.biases.iter().map(|b| vec![T::zero(); b.len()]).collect();
        let mut delta = vec![T::one()];
        for l in (0..layers).rev() {
            let fan_in = self.layer_dims[l];
            let input: Vec<T> = if l == 0 {
                x.to_vec()
            } else {
                pre[l - 1].iter().map(|&v| relu(v)).collect()
            };
            for (j, &d) in delta.iter().enumerate() {
                biases[l][j] = d;
                for (k, &a) in input.iter().enumerate() {
                    weights[l][j * fan_in + k] = d * a;
                }
            }
            if l > 0 {
                let mut prev = vec![T::zero(); fan_in];
                for (j, &d) in delta.iter().enumerate() {
                    for (k, p) in prev.iter_mut().enumerate() {
                        *p = *p + d * self.weights[l][j * fan_in + k];
                    }
                }
                for (p, &z) in prev.iter_mut().zip(&pre[l - 1]) {
                    if z <= T::zero() {
                        *p = T::zero();
                    }
                }
                delta = prev;
            }
        }
        Ok(Self {
            layer_dims: self.layer_dims.clone(),
            weights,
            biases,
        })
    }

    /// Minimum |pre-activation| over hidden neurons; small values mean `x`
    /// sits near a ReLU kink.
    pub fn kink_distance(&self, x: &[T]) -> T {
        let pre = self.pre_activations(x);
        pre[..pre.len() - 1]
            .iter()
            .flatten()
            .fold(T::infinity(), |m, &z| m.min(z.abs()))
    }

    pub fn cast<U: Scalar>(&self) -> DenseModel<U> {
        let conv = |v: &Vec<Vec<T>>| -> Vec<Vec<U>> {
            v.iter().map(|l| l.iter().map(|&p| U::lit(p.as_f64())).collect()).collect()
        };
        DenseModel {
            layer_dims: self.layer_dims.clone(),
            weights: conv(&self.weights),
            biases: conv(&self.biases),
        }
    }
}

/// Class of a logit under the tie rule (zero is class 0).
pub fn label_of<T: Scalar>(logit: T) -> u8 {
    u8::from(logit > T::zero())
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn init_is_deterministic_and_counts_params() {
        let a = DenseModel::<f64>::init(&[2, 2, 1], 0).unwrap();
        let b = DenseModel::<f64>::init(&[2, 2, 1], 0).unwrap();
        assert_eq!(a, b);
        let m = DenseModel::<f64>::init(&[34, 8, 1], 11).unwrap();
        assert_eq!(m.param_count(), 34 * 8 + 8 + 8 + 1);
        assert!(matches!(
            DenseModel::<f64>::init(&[2], 0),
            Err(ModelError::InvalidDims { .. })
        ));
        assert!(DenseModel::<f64>::init(&[2, 3], 0).is_err());
    }

    #[test]
    fn net_a_hand_values() {
        let m = net_a();
        assert_eq!(m.forward_logit(&[1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(m.predict_label(&[1.0, 0.0]).unwrap(), 1);
        assert_eq!(m.forward_logit(&[0.0, 0.0]).unwrap(), -0.5);
        assert_eq!(m.predict_label(&[0.0, 0.0]).unwrap(), 0);
        assert_eq!(m.forward_logit(&[-3.0, -3.0]).unwrap(), -0.5);
        assert!(matches!(
            m.forward_logit(&[1.0]),
            Err(ModelError::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn tie_goes_to_class_zero() {
        let m = linear_l1();
        assert_eq!(m.forward_logit(&[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(m.predict_label(&[0.5, 0.5]).unwrap(), 0);
    }

    #[test]
    fn net_a_gradients() {
        let m = net_a();
        assert_eq!(m.input_gradient(&[1.0, 1.0]).unwrap(), vec![1.0, -1.0]);
        assert_eq!(m.input_gradient(&[-1.0, -1.0]).unwrap(), vec![0.0, 0.0]);
        // exactly on a kink the slope is zero
        assert_eq!(m.input_gradient(&[0.0, 1.0]).unwrap(), vec![0.0, -1.0]);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let m = DenseModel::<f64>::init(&[5, 6, 4, 1], 3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let h = 1e-5;
        let mut checked = 0;
        while checked < 100 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            if m.kink_distance(&x) < 1e-3 {
                continue;
            }
            let g = m.input_gradient(&x).unwrap();
            for i in 0..5 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (m.logit(&xp) - m.logit(&xm)) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-4, "component {i}: {fd} vs {}", g[i]);
            }
            checked += 1;
        }
    }

    #[test]
    fn param_gradient_matches_central_differences() {
        let m = DenseModel::<f64>::init(&[3, 4, 1], 8).unwrap();
        let x = [0.3, -0.7, 1.1];
        assert!(m.kink_distance(&x) > 1e-3);
        let g = m.param_gradient(&x).unwrap();
        let h = 1e-6;
        let mut flat = Vec::new();
        g.map_params(|_, _, _, v| {
            flat.push(v);
            v
        });
        let mut n = 0;
        for target in 0..m.param_count() {
            let shift = |d: f64| {
                let mut k = 0;
                m.map_params(|_, _, _, v| {
                    k += 1;
                    if k - 1 == target {
                        v + d
                    } else {
                        v
                    }
                })
            };
            let fd = (shift(h).logit(&x) - shift(-h).logit(&x)) / (2.0 * h);
            assert!((fd - flat[target]).abs() < 1e-6, "param {target}");
            n += 1;
        }
        assert_eq!(n, 21);
    }

    #[test]
    fn works_in_single_precision() {
        let m: DenseModel<f32> = net_a().cast();
        assert_eq!(m.forward_logit(&[1.0, 0.0]).unwrap(), 0.5f32);
        assert_eq!(m.input_gradient(&[1.0, 1.0]).unwrap(), vec![1.0f32, -1.0]);
    }

    #[test]
    fn max_param_diff_detects_changes() {
        let a = net_a();
        let b = a.map_params(|k, l, i, v| if k == ParamKind::Bias && l == 1 && i == 0 { v + 0.25 } else { v });
        assert_eq!(a.max_param_diff(&b), Some(0.25));
        assert_eq!(a.max_param_diff(&linear_l1()), None);
    }
}
