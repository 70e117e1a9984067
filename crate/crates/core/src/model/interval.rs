//! Interval bound propagation over inputs and over parameter balls.

use super::{DenseModel, ModelError};
use crate::scalar::{relu, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalVector<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Scalar> IntervalVector<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Self {
        assert_eq!(lo.len(), hi.len(), "interval bounds length");
        debug_assert!(lo.iter().zip(&hi).all(|(l, h)| l <= h));
        Self { lo, hi }
    }

    pub fn point(x: &[T]) -> Self {
        Self {
            lo: x.to_vec(),
            hi: x.to_vec(),
        }
    }

    pub fn from_bounds(bounds: &[(T, T)]) -> Self {
        let (lo, hi) = bounds.iter().copied().unzip();
        Self::new(lo, hi)
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    fn relu(&self) -> Self {
        Self {
            lo: self.lo.iter().map(|&v| relu(v)).collect(),
            hi: self.hi.iter().map(|&v| relu(v)).collect(),
        }
    }
}

/// Every model whose weights (and, by default, biases) lie within `delta`
/// of `center` in the elementwise infinity norm.
#[derive(Debug, Clone, Copy)]
pub struct ParamBall<'a, T> {
    pub center: &'a DenseModel<T>,
    pub delta: T,
    pub include_biases: bool,
}

impl<'a, T: Scalar> ParamBall<'a, T> {
    pub fn new(center: &'a DenseModel<T>, delta: T) -> Self {
        assert!(delta >= T::zero(), "ball radius must be non-negative");
        Self {
            center,
            delta,
            include_biases: true,
        }
    }

    pub fn weights_only(mut self) -> Self {
        self.include_biases = false;
        self
    }

    fn bias_delta(&self) -> T {
        if self.include_biases {
            self.delta
        } else {
            T::zero()
        }
    }
}

#[inline]
fn mul_bounds<T: Scalar>(a_lo: T, a_hi: T, b_lo: T, b_hi: T) -> (T, T) {
    let p = [a_lo * b_lo, a_lo * b_hi, a_hi * b_lo, a_hi * b_hi];
    let lo = p.iter().fold(T::infinity(), |m, &v| m.min(v));
    let hi = p.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    (lo, hi)
}

/// Pre-activation intervals of every layer when the input ranges over
/// `input` and each parameter over `[p - delta, p + delta]`.
pub fn propagate_bounds<T: Scalar>(ball: &ParamBall<'_, T>, input: &IntervalVector<T>) -> Vec<IntervalVector<T>> {
    let m = ball.center;
    let dw = ball.delta;
    let db = ball.bias_delta();
    let mut act = input.clone();
    let mut out = Vec::with_capacity(m.layer_count());
    for l in 0..m.layer_count() {
        let fan_in = m.layer_dims()[l];
        let w = m.weights(l);
        let b = m.biases(l);
        let mut lo = Vec::with_capacity(b.len());
        let mut hi = Vec::with_capacity(b.len());
        for (j, &bj) in b.iter().enumerate() {
            let mut s_lo = bj - db;
            let mut s_hi = bj + db;
            for k in 0..fan_in {
                let wjk = w[j * fan_in + k];
                let (p_lo, p_hi) = mul_bounds(wjk - dw, wjk + dw, act.lo[k], act.hi[k]);
                s_lo = s_lo + p_lo;
                s_hi = s_hi + p_hi;
            }
            lo.push(s_lo);
            hi.push(s_hi);
        }
        let z = IntervalVector { lo, hi };
        act = z.relu();
        out.push(z);
    }
    out
}

/// Sound bounds `(lo, hi)` on the logit at `x` over every model in the ball.
pub fn interval_logit<T: Scalar>(ball: &ParamBall<'_, T>, x: &[T]) -> Result<(T, T), ModelError> {
    if x.len() != ball.center.input_dim() {
        return Err(ModelError::DimensionMismatch {
            expected: ball.center.input_dim(),
            found: x.len(),
        });
    }
    let last = propagate_bounds(ball, &IntervalVector::point(x)).pop().unwrap();
    Ok((last.lo[0], last.hi[0]))
}
