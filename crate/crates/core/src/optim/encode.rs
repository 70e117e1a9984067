//! Big-M mixed-integer encoding of a dense ReLU network over an input box.
//!
//! For every hidden neuron with pre-activation `z ∈ [L, U]` and output `a`:
//!
//! ```text
//! a ≥ 0,  a ≥ z,  a ≤ z − L(1 − s),  a ≤ U s,  s ∈ {0, 1}
//! ```
//!
//! `L` and `U` come from interval propagation of the box. Neurons whose sign
//! is fixed over the box skip the binary: `U ≤ 0` pins `a = 0`, `L ≥ 0`
//! gives `a = z`.

use super::{LpProblem, MilpProblem, OptimError, Relation};
use crate::model::{propagate_bounds, DenseModel, IntervalVector, ParamBall};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeuronPhase {
    Unstable,
    Active,
    Inactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeuronVars {
    pub pre: usize,
    pub post: usize,
    pub indicator: usize,
    pub phase: NeuronPhase,
}

#[derive(Debug, Clone)]
pub struct NetworkEncoding<T> {
    pub problem: MilpProblem<T>,
    /// Indices of the counterfactual input variables `x'`.
    pub input: Vec<usize>,
    /// Per hidden layer, per neuron.
    pub neurons: Vec<Vec<NeuronVars>>,
    /// Pre-activation bounds used for the big-M constants, one per layer
    /// (the last entry bounds the logit).
    pub pre_bounds: Vec<IntervalVector<T>>,
    pub output_row: usize,
}

impl<T: Scalar> NetworkEncoding<T> {
    pub fn decode_input(&self, x: &[T]) -> Vec<T> {
        self.input.iter().map(|&j| x[j]).collect()
    }

    /// The logit implied by the encoded activation variables.
    pub fn encoded_logit(&self, model: &DenseModel<T>, x: &[T]) -> T {
        let last = model.layer_count() - 1;
        let prev: Vec<T> = match self.neurons.last() {
            Some(layer) => layer.iter().map(|n| x[n.post]).collect(),
            None => self.decode_input(x),
        };
        model
            .weights(last)
            .iter()
            .zip(&prev)
            .fold(model.biases(last)[0], |s, (&w, &a)| s + w * a)
    }

    /// Adds L1 slack pairs `x' − center = e⁺ − e⁻` and sets the objective to
    /// `Σ e⁺ + e⁻`. Returns the slack indices.
    pub fn add_l1_objective(&mut self, center: &[T]) -> Vec<(usize, usize)> {
        assert_eq!(center.len(), self.input.len(), "center dimension");
        let lp = &mut self.problem.base;
        for c in lp.objective.iter_mut() {
            *c = T::zero();
        }
        let mut pairs = Vec::with_capacity(center.len());
        for (k, &c) in center.iter().enumerate() {
            let xi = self.input[k];
            let (lo, hi) = lp.bounds[xi];
            let up = lp.add_var(T::zero(), (hi - c).max(T::zero()), T::one());
            let down = lp.add_var(T::zero(), (c - lo).max(T::zero()), T::one());
            lp.add_sparse(&[(xi, T::one()), (up, -T::one()), (down, T::one())], Relation::Eq, c);
            pairs.push((up, down));
        }
        pairs
    }
}

/// Encodes `logit(x') ≥ kappa` for `x'` in `bounds`.
pub fn encode_network<T: Scalar>(
    model: &DenseModel<T>,
    bounds: &[(T, T)],
    kappa: T,
) -> Result<NetworkEncoding<T>, OptimError> {
    encode_network_for_class(model, bounds, 1, kappa)
}

/// Encodes membership of `target_class` with margin `kappa`: `logit ≥ kappa`
/// for class 1, `logit ≤ −kappa` for class 0.
pub fn encode_network_for_class<T: Scalar>(
    model: &DenseModel<T>,
    bounds: &[(T, T)],
    target_class: u8,
    kappa: T,
) -> Result<NetworkEncoding<T>, OptimError> {
    if bounds.len() != model.input_dim() {
        return Err(OptimError::Malformed(format!(
            "box has {} features, model expects {}",
            bounds.len(),
            model.input_dim()
        )));
    }
    let pre_bounds = propagate_bounds(&ParamBall::new(model, T::zero()), &IntervalVector::from_bounds(bounds));
    for (l, iv) in pre_bounds.iter().enumerate() {
        if let Some(j) = (0..iv.len()).find(|&j| !iv.lo[j].is_finite() || !iv.hi[j].is_finite()) {
            return Err(OptimError::NonFiniteBound { layer: l, neuron: j });
        }
    }

    let mut milp = MilpProblem::new(LpProblem::new());
    let input: Vec<usize> = bounds
        .iter()
        .map(|&(lo, hi)| milp.base.add_var(lo, hi, T::zero()))
        .collect();
    let mut prev = input.clone();
    let mut neurons = Vec::new();
    let hidden = model.layer_count() - 1;
    for l in 0..hidden {
        let fan_in = model.layer_dims()[l];
        let w = model.weights(l);
        let mut layer = Vec::new();
        for (j, &b) in model.biases(l).iter().enumerate() {
            let (lo, hi) = (pre_bounds[l].lo[j], pre_bounds[l].hi[j]);
            let pre = milp.base.add_var(lo, hi, T::zero());
            let phase = if hi <= T::zero() {
                NeuronPhase::Inactive
            } else if lo >= T::zero() {
                NeuronPhase::Active
            } else {
                NeuronPhase::Unstable
            };
            let post_hi = if phase == NeuronPhase::Inactive { T::zero() } else { hi };
            let post = milp.base.add_var(T::zero(), post_hi, T::zero());
            let indicator = match phase {
                NeuronPhase::Unstable => milp.add_binary(T::zero()),
                NeuronPhase::Active => milp.base.add_var(T::one(), T::one(), T::zero()),
                NeuronPhase::Inactive => milp.base.add_var(T::zero(), T::zero(), T::zero()),
            };

            // z = W a_prev + b
            let mut terms: Vec<(usize, T)> = vec![(pre, T::one())];
            terms.extend((0..fan_in).map(|k| (prev[k], -w[j * fan_in + k])));
            milp.base.add_sparse(&terms, Relation::Eq, b);

            match phase {
                NeuronPhase::Unstable => {
                    milp.base.add_sparse(&[(post, T::one()), (pre, -T::one())], Relation::Ge, T::zero());
                    milp.base.add_sparse(
                        &[(post, T::one()), (pre, -T::one()), (indicator, -lo)],
                        Relation::Le,
                        -lo,
                    );
                    milp.base.add_sparse(&[(post, T::one()), (indicator, -hi)], Relation::Le, T::zero());
                }
                NeuronPhase::Active => {
                    milp.base.add_sparse(&[(post, T::one()), (pre, -T::one())], Relation::Eq, T::zero());
                }
                NeuronPhase::Inactive => {}
            }
            layer.push(NeuronVars {
                pre,
                post,
                indicator,
                phase,
            });
        }
        prev = layer.iter().map(|n| n.post).collect();
        neurons.push(layer);
    }

    let w = model.weights(hidden);
    let b = model.biases(hidden)[0];
    let terms: Vec<(usize, T)> = prev.iter().zip(w).map(|(&v, &c)| (v, c)).collect();
    let output_row = if target_class == 1 {
        milp.base.add_sparse(&terms, Relation::Ge, kappa - b)
    } else {
        milp.base.add_sparse(&terms, Relation::Le, -kappa - b)
    };

    Ok(NetworkEncoding {
        problem: milp,
        input,
        neurons,
        pre_bounds,
        output_row,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{solve_milp, SolveStatus};
    use super::*;
    use crate::model::fixtures::net_a;

    fn l1(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    }

    #[test]
    fn net_a_closest_counterfactual() {
        let m = net_a();
        let mut enc = encode_network(&m, &[(-1.0, 1.0), (-1.0, 1.0)], 0.0).unwrap();
        enc.add_l1_objective(&[0.0, 0.0]);
        let s = solve_milp(&enc.problem).unwrap();
        assert!(s.is_optimal());
        let x = enc.decode_input(&s.x);
        assert!((x[0] - 0.5).abs() < 1e-9 && x[1].abs() < 1e-9, "{x:?}");
        assert!((s.objective_value - 0.5).abs() < 1e-9);
        assert!((enc.encoded_logit(&m, &s.x) - m.logit(&x)).abs() < 1e-5);

        // brute-force grid over the box at resolution 1e-3
        let steps = 2000;
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            for j in 0..=steps {
                let p = [-1.0 + 2.0 * i as f64 / steps as f64, -1.0 + 2.0 * j as f64 / steps as f64];
                if m.logit(&p) >= 0.0 {
                    best = best.min(l1(&p, &[0.0, 0.0]));
                }
            }
        }
        assert!((best - s.objective_value).abs() < 2e-3);
    }

    #[test]
    fn unreachable_margin_is_infeasible() {
        let m = net_a();
        let enc = encode_network(&m, &[(-1.0, 1.0), (-1.0, 1.0)], 1.0).unwrap();
        assert_eq!(solve_milp(&enc.problem).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn stable_neurons_skip_binaries() {
        let m = net_a();
        // x1 in [-2, -1] keeps neuron 0 off; x2 in [1, 2] keeps neuron 1 on.
        let enc = encode_network(&m, &[(-2.0, -1.0), (1.0, 2.0)], -10.0).unwrap();
        let phases: Vec<_> = enc.neurons[0].iter().map(|n| n.phase).collect();
        assert_eq!(phases, vec![NeuronPhase::Inactive, NeuronPhase::Active]);
        assert!(enc.problem.binary_vars.is_empty());
        let post = enc.neurons[0][0].post;
        assert_eq!(enc.problem.base.bounds[post], (0.0, 0.0));
    }

    #[test]
    fn class_zero_flips_the_output_row() {
        let m = net_a();
        let mut enc = encode_network_for_class(&m, &[(-1.0, 1.0), (-1.0, 1.0)], 0, 0.1).unwrap();
        enc.add_l1_objective(&[1.0, 0.0]);
        let s = solve_milp(&enc.problem).unwrap();
        let x = enc.decode_input(&s.x);
        assert!(m.logit(&x) <= -0.1 + 1e-7);
        assert!((s.objective_value - 0.6).abs() < 1e-9, "{}", s.objective_value);
    }

    #[test]
    fn rejects_wrong_box() {
        let m = net_a();
        assert!(matches!(encode_network(&m, &[(0.0, 1.0)], 0.0), Err(OptimError::Malformed(_))));
    }
}
