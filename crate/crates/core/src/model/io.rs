//! JSON model files.
//!
//! ```text
//! { "layer_dims": [2, 2, 1],
//!   "weights": [[[1.0, 0.0], [0.0, 1.0]], [[1.0, -1.0]]],
//!   "biases": [[0.0, 0.0], [-0.5]],
//!   "activation": "relu", "head": "sigmoid" }
//! ```
//!
//! Each weight matrix is a list of rows, one per output unit. Numbers are
//! written in shortest round-trip form, so save/load is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DenseModel, ModelError};
use crate::scalar::Scalar;

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
    activation: String,
    head: String,
}

impl<T: Scalar> DenseModel<T> {
    pub fn to_json(&self) -> String {
        let weights = (0..self.layer_count())
            .map(|l| {
                let fan_in = self.layer_dims[l];
                self.weights[l]
                    .chunks(fan_in)
                    .map(|row| row.iter().map(|v| v.as_f64()).collect())
                    .collect()
            })
            .collect();
        let file = ModelFile {
            layer_dims: self.layer_dims.clone(),
            weights,
            biases: self
                .biases
                .iter()
                .map(|b| b.iter().map(|v| v.as_f64()).collect())
                .collect(),
            activation: "relu".into(),
            head: "sigmoid".into(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if file.activation != "relu" || file.head != "sigmoid" {
            return Err(ModelError::Validation(format!(
                "unsupported activation/head `{}`/`{}`",
                file.activation, file.head
            )));
        }
        let layers = file.layer_dims.len().saturating_sub(1);
        if file.weights.len() != layers {
            return Err(ModelError::Validation(format!(
                "{layers} layers declared but {} weight matrices given",
                file.weights.len()
            )));
        }
        let mut weights = Vec::with_capacity(layers);
        for (l, mat) in file.weights.into_iter().enumerate() {
            let fan_in = file.layer_dims[l];
            if mat.len() != file.layer_dims[l + 1] || mat.iter().any(|r| r.len() != fan_in) {
                return Err(ModelError::Validation(format!(
                    "layer {l} weight matrix does not match declared dims {}x{}",
                    file.layer_dims[l + 1],
                    fan_in
                )));
            }
            weights.push(mat.into_iter().flatten().map(T::lit).collect());
        }
        let biases = file
            .biases
            .into_iter()
            .map(|b| b.into_iter().map(T::lit).collect())
            .collect();
        DenseModel::new(file.layer_dims, weights, biases)
    }
}

pub fn save_model<T: Scalar>(model: &DenseModel<T>, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    std::fs::write(path, model.to_json()).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DenseModel<f64>, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    DenseModel::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = DenseModel::<f64>::init(&[5, 7, 3, 1], 42).unwrap();
        let dir = std::env::temp_dir().join(format!("cfx-model-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("m.json");
        save_model(&m, &p).unwrap();
        let back = load_model(&p).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let text = DenseModel::<f64>::init(&[2, 2, 1], 1).unwrap().to_json();
        let cut = &text[..text.len() / 2];
        assert!(matches!(DenseModel::<f64>::from_json(cut), Err(ModelError::Parse { .. })));
    }

    #[test]
    fn mismatched_dims_fail_validation() {
        let text = r#"{"layer_dims":[3,1],"weights":[[[1.0,2.0]]],"biases":[[0.0]],
                       "activation":"relu","head":"sigmoid"}"#;
        assert!(matches!(DenseModel::<f64>::from_json(text), Err(ModelError::Validation(_))));
        let text = r#"{"layer_dims":[2,1],"weights":[[[1.0,2.0]]],"biases":[[0.0, 1.0]],
                       "activation":"relu","head":"sigmoid"}"#;
        assert!(matches!(DenseModel::<f64>::from_json(text), Err(ModelError::Validation(_))));
    }
}
