//! Best-first branch and bound over binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{solve_lp, MilpProblem, MilpSolution, OptimError, SolveStatus};
use crate::scalar::Scalar;

const INTEGRALITY_TOL: f64 = 1e-6;
const PRUNE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MilpOptions {
    /// Maximum number of LP relaxations solved.
    pub node_budget: usize,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            node_budget: 100_000,
        }
    }
}

struct Node<T> {
    bound: T,
    id: usize,
    fixings: Vec<(usize, bool)>,
}

// Min-heap on (bound, id).
impl<T: Scalar> Ord for Node<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .partial_cmp(&self.bound)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl<T: Scalar> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Node<T> {}

pub fn solve_milp<T: Scalar>(p: &MilpProblem<T>) -> Result<MilpSolution<T>, OptimError> {
    solve_milp_with(p, &MilpOptions::default())
}

pub fn solve_milp_with<T: Scalar>(p: &MilpProblem<T>, opts: &MilpOptions) -> Result<MilpSolution<T>, OptimError> {
    p.validate()?;
    let mut relaxed = p.base.clone();
    for &j in &p.binary_vars {
        let (lo, hi) = relaxed.bounds[j];
        relaxed.bounds[j] = (lo.max(T::zero()), hi.min(T::one()));
        if relaxed.bounds[j].0 > relaxed.bounds[j].1 {
            return Ok(MilpSolution::infeasible(0));
        }
    }
    let int_tol = T::tol(INTEGRALITY_TOL);
    let prune_tol = T::tol(PRUNE_TOL);

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: T::neg_infinity(),
        id: 0,
        fixings: Vec::new(),
    });
    let mut next_id = 1;
    let mut nodes = 0;
    let mut incumbent: Option<MilpSolution<T>> = None;

    while let Some(node) = heap.pop() {
        if let Some(inc) = &incumbent {
            if node.bound >= inc.objective_value - prune_tol {
                continue;
            }
        }
        if nodes == opts.node_budget {
            return Err(OptimError::NodeBudgetExceeded {
                budget: opts.node_budget,
            });
        }
        nodes += 1;

        let mut lp = relaxed.clone();
        for &(j, one) in &node.fixings {
            let v = if one { T::one() } else { T::zero() };
            lp.bounds[j] = (v, v);
        }
        let sol = solve_lp(&lp)?;
        if sol.status == SolveStatus::Infeasible {
            continue;
        }
        if let Some(inc) = &incumbent {
            if sol.objective_value >= inc.objective_value - prune_tol {
                continue;
            }
        }

        // most fractional binary, lowest index on ties
        let mut branch: Option<(usize, T)> = None;
        for &j in &p.binary_vars {
            let v = sol.x[j];
            let frac = v.min(T::one() - v);
            if frac > int_tol && branch.is_none_or(|(_, f)| frac > f) {
                branch = Some((j, frac));
            }
        }
        match branch {
            None => {
                let mut x = sol.x;
                for &j in &p.binary_vars {
                    x[j] = x[j].round();
                }
                incumbent = Some(MilpSolution {
                    status: SolveStatus::Optimal,
                    objective_value: p.base.objective_value(&x),
                    x,
                    nodes,
                });
            }
            Some((j, _)) => {
                for one in [false, true] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((j, one));
                    heap.push(Node {
                        bound: sol.objective_value,
                        id: next_id,
                        fixings,
                    });
                    next_id += 1;
                }
            }
        }
    }

    Ok(match incumbent {
        Some(mut s) => {
            s.nodes = nodes;
            s
        }
        None => MilpSolution::infeasible(nodes),
    })
}
