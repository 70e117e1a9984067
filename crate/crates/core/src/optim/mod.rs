//! Dense LP/MILP solving and the big-M encoding of ReLU networks.
//!
//! Problems are minimizations with finite variable bounds, so the LP
//! relaxation is never unbounded. MILP variables listed as binary are
//! restricted to `{0, 1}` and solved by best-first branch and bound.

mod encode;
mod lp;
mod lp_text;
mod milp;

pub use encode::{encode_network, encode_network_for_class, NetworkEncoding, NeuronPhase, NeuronVars};
pub use lp::solve_lp;
pub use lp_text::to_lp_text;
pub use milp::{solve_milp, solve_milp_with, MilpOptions};

use std::collections::BTreeSet;

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("variable {var} has a non-finite bound")]
    InfiniteBound { var: usize },
    #[error("variable {var} has lower bound above upper bound")]
    InvertedBound { var: usize },
    #[error("binary index {0} out of range")]
    BinaryOutOfRange(usize),
    #[error("branch and bound exceeded its budget of {budget} nodes")]
    NodeBudgetExceeded { budget: usize },
    #[error("simplex did not terminate within {0} iterations")]
    IterationLimit(usize),
    #[error("simplex found an unbounded direction")]
    Unbounded,
    #[error("interval propagation gave non-finite bounds at layer {layer}, neuron {neuron}")]
    NonFiniteBound { layer: usize, neuron: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint<T> {
    pub coeffs: Vec<T>,
    pub relation: Relation,
    pub rhs: T,
}

/// `min objective·x` subject to the constraints and `lo ≤ x ≤ hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem<T> {
    pub objective: Vec<T>,
    pub constraints: Vec<Constraint<T>>,
    pub bounds: Vec<(T, T)>,
}

impl<T: Scalar> Default for LpProblem<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> LpProblem<T> {
    pub fn new() -> Self {
        Self {
            objective: Vec::new(),
            constraints: Vec::new(),
            bounds: Vec::new(),
        }
    }

    pub fn var_count(&self) -> usize {
        self.objective.len()
    }

    /// Appends a variable and returns its index. Existing constraints get a
    /// zero coefficient for it.
    pub fn add_var(&mut self, lo: T, hi: T, cost: T) -> usize {
        self.objective.push(cost);
        self.bounds.push((lo, hi));
        for c in &mut self.constraints {
            c.coeffs.push(T::zero());
        }
        self.objective.len() - 1
    }

    pub fn add_constraint(&mut self, coeffs: Vec<T>, relation: Relation, rhs: T) -> usize {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    /// Adds a constraint given as `(variable, coefficient)` pairs.
    pub fn add_sparse(&mut self, terms: &[(usize, T)], relation: Relation, rhs: T) -> usize {
        let mut coeffs = vec![T::zero(); self.var_count()];
        for &(j, v) in terms {
            coeffs[j] = coeffs[j] + v;
        }
        self.add_constraint(coeffs, relation, rhs)
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        let n = self.var_count();
        if self.bounds.len() != n {
            return Err(OptimError::Malformed(format!(
                "{} objective coefficients but {} bounds",
                n,
                self.bounds.len()
            )));
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(OptimError::InfiniteBound { var: j });
            }
            if lo > hi {
                return Err(OptimError::InvertedBound { var: j });
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(OptimError::Malformed(format!(
                    "constraint {i} has {} coefficients, expected {n}",
                    c.coeffs.len()
                )));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(OptimError::Malformed(format!("constraint {i} is not finite")));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(OptimError::Malformed("objective is not finite".into()));
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        self.objective.iter().zip(x).fold(T::zero(), |s, (&c, &v)| s + c * v)
    }

    /// Largest bound or constraint violation of `x`.
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for (&v, &(lo, hi)) in x.iter().zip(&self.bounds) {
            worst = worst.max(lo - v).max(v - hi);
        }
        for c in &self.constraints {
            let lhs = c.coeffs.iter().zip(x).fold(T::zero(), |s, (&a, &v)| s + a * v);
            let viol = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpProblem<T> {
    pub base: LpProblem<T>,
    pub binary_vars: BTreeSet<usize>,
}

impl<T: Scalar> MilpProblem<T> {
    pub fn new(base: LpProblem<T>) -> Self {
        Self {
            base,
            binary_vars: BTreeSet::new(),
        }
    }

    /// Adds a `{0, 1}` variable.
    pub fn add_binary(&mut self, cost: T) -> usize {
        let j = self.base.add_var(T::zero(), T::one(), cost);
        self.binary_vars.insert(j);
        j
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        self.base.validate()?;
        if let Some(&j) = self.binary_vars.iter().find(|&&j| j >= self.base.var_count()) {
            return Err(OptimError::BinaryOutOfRange(j));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution<T> {
    pub status: SolveStatus,
    pub x: Vec<T>,
    pub objective_value: T,
    /// LP relaxations solved (1 for a plain LP).
    pub nodes: usize,
}

impl<T: Scalar> MilpSolution<T> {
    pub(crate) fn infeasible(nodes: usize) -> Self {
        Self {
            status: SolveStatus::Infeasible,
            x: Vec::new(),
            objective_value: T::infinity(),
            nodes,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}
