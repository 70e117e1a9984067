//! Two-phase dense tableau simplex with bounded variables.
//!
//! Variables are shifted to `0 ≤ y ≤ u`; a nonbasic variable sits at either
//! bound, so upper bounds never become rows. Entering and leaving choices
//! follow Bland's smallest-index rule, which rules out cycling.

use super::{LpProblem, MilpSolution, OptimError, Relation, SolveStatus};
use crate::scalar::Scalar;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const RATIO_TIE: f64 = 1e-12;

struct Tableau<T> {
    rows: usize,
    cols: usize,
    /// `rows × (cols + 1)`; the last column holds `B⁻¹ b`.
    a: Vec<T>,
    upper: Vec<T>,
    value: Vec<T>,
    at_upper: Vec<bool>,
    basis: Vec<usize>,
    basic_row: Vec<Option<usize>>,
    blocked: Vec<bool>,
    reduced: Vec<T>,
}

enum Step {
    Optimal,
    Moved,
}

impl<T: Scalar> Tableau<T> {
    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.a[i * (self.cols + 1) + j]
    }

    fn set_costs(&mut self, cost: &[T]) {
        let mut d = cost.to_vec();
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != T::zero() {
                for (j, dj) in d.iter_mut().enumerate() {
                    *dj = *dj - cb * self.at(i, j);
                }
            }
        }
        self.reduced = d;
    }

    /// Recomputes basic values from the rhs column and the nonbasic values.
    fn refresh_basics(&mut self) {
        for i in 0..self.rows {
            let mut v = self.at(i, self.cols);
            for j in 0..self.cols {
                if self.basic_row[j].is_none() && self.value[j] != T::zero() {
                    v = v - self.at(i, j) * self.value[j];
                }
            }
            self.value[self.basis[i]] = v;
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.cols + 1;
        let p = self.at(r, q);
        for j in 0..w {
            self.a[r * w + j] = self.a[r * w + j] / p;
        }
        let (before, rest) = self.a.split_at_mut(r * w);
        let (pivot_row, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[q];
            if f != T::zero() {
                for (x, &pr) in row.iter_mut().zip(pivot_row.iter()) {
                    *x = *x - f * pr;
                }
                row[q] = T::zero();
            }
        }
        let f = self.reduced[q];
        if f != T::zero() {
            for (d, &pr) in self.reduced.iter_mut().zip(pivot_row.iter()) {
                *d = *d - f * pr;
            }
            self.reduced[q] = T::zero();
        }
        let leaving = self.basis[r];
        self.basic_row[leaving] = None;
        self.basic_row[q] = Some(r);
        self.basis[r] = q;
    }

    fn step(&mut self) -> Result<Step, OptimError> {
        let cost_tol = T::tol(COST_TOL);
        let piv_tol = T::tol(PIVOT_TOL);
        let tie = T::tol(RATIO_TIE);

        let entering = (0..self.cols).find(|&j| {
            if self.basic_row[j].is_some() || self.blocked[j] {
                return false;
            }
            let d = self.reduced[j];
            if self.at_upper[j] {
                d > cost_tol
            } else {
                d < -cost_tol && self.upper[j] > T::zero()
            }
        });
        let Some(q) = entering else {
            return Ok(Step::Optimal);
        };
        let dir = if self.at_upper[q] { -T::one() } else { T::one() };

        // (ratio, row, leaves_at_upper)
        let mut best: Option<(T, usize, bool)> = None;
        for i in 0..self.rows {
            let alpha = self.at(i, q) * dir;
            let b = self.basis[i];
            let candidate = if alpha > piv_tol {
                Some(((self.value[b] / alpha).max(T::zero()), false))
            } else if alpha < -piv_tol && self.upper[b].is_finite() {
                Some((((self.upper[b] - self.value[b]) / -alpha).max(T::zero()), true))
            } else {
                None
            };
            if let Some((ratio, up)) = candidate {
                let better = match best {
                    None => true,
                    Some((r0, i0, _)) => {
                        ratio < r0 - tie || (ratio <= r0 + tie && b < self.basis[i0])
                    }
                };
                if better {
                    best = Some((ratio, i, up));
                }
            }
        }

        let flip = self.upper[q];
        let take_flip = match best {
            None => flip.is_finite(),
            Some((r0, _, _)) => flip.is_finite() && flip <= r0 + tie,
        };
        if best.is_none() && !take_flip {
            return Err(OptimError::Unbounded);
        }
        let theta = if take_flip { flip } else { best.unwrap().0 };

        if theta != T::zero() {
            for i in 0..self.rows {
                let b = self.basis[i];
                self.value[b] = self.value[b] - theta * dir * self.at(i, q);
            }
        }
        if take_flip {
            self.at_upper[q] = !self.at_upper[q];
            self.value[q] = if self.at_upper[q] { self.upper[q] } else { T::zero() };
            return Ok(Step::Moved);
        }

        let (_, r, leaves_up) = best.unwrap();
        let leaving = self.basis[r];
        let entering_value = self.value[q] + theta * dir;
        self.at_upper[leaving] = leaves_up;
        self.value[leaving] = if leaves_up { self.upper[leaving] } else { T::zero() };
        self.at_upper[q] = false;
        self.pivot(r, q);
        self.value[q] = entering_value;
        Ok(Step::Moved)
    }

    fn run(&mut self, limit: usize) -> Result<(), OptimError> {
        for _ in 0..limit {
            if let Step::Optimal = self.step()? {
                self.refresh_basics();
                return Ok(());
            }
        }
        Err(OptimError::IterationLimit(limit))
    }
}

/// Solves the LP relaxation; binary markers are irrelevant here.
pub fn solve_lp<T: Scalar>(p: &LpProblem<T>) -> Result<MilpSolution<T>, OptimError> {
    p.validate()?;
    let n = p.var_count();
    let m = p.constraints.len();

    // Column layout: structurals, then slacks, then artificials.
    let mut slack_of_row = vec![None; m];
    let mut cols = n;
    for (i, c) in p.constraints.iter().enumerate() {
        if c.relation != Relation::Eq {
            slack_of_row[i] = Some(cols);
            cols += 1;
        }
    }
    let shifted_rhs: Vec<T> = p
        .constraints
        .iter()
        .map(|c| {
            c.coeffs
                .iter()
                .zip(&p.bounds)
                .fold(c.rhs, |s, (&a, &(lo, _))| s - a * lo)
        })
        .collect();
    let flip: Vec<bool> = shifted_rhs.iter().map(|&b| b < T::zero()).collect();
    // A row whose slack has coefficient +1 after normalization starts with
    // the slack basic; every other row gets an artificial.
    let mut art_of_row = vec![None; m];
    for i in 0..m {
        let slack_plus = match p.constraints[i].relation {
            Relation::Le => !flip[i],
            Relation::Ge => flip[i],
            Relation::Eq => false,
        };
        if !slack_plus {
            art_of_row[i] = Some(cols);
            cols += 1;
        }
    }

    let w = cols + 1;
    let mut a = vec![T::zero(); m * w];
    let mut basis = vec![0; m];
    for (i, c) in p.constraints.iter().enumerate() {
        let sign = if flip[i] { -T::one() } else { T::one() };
        let row = &mut a[i * w..(i + 1) * w];
        for (dst, &v) in row.iter_mut().zip(&c.coeffs) {
            *dst = sign * v;
        }
        if let Some(s) = slack_of_row[i] {
            let coeff = if c.relation == Relation::Le { T::one() } else { -T::one() };
            row[s] = sign * coeff;
        }
        if let Some(r) = art_of_row[i] {
            row[r] = T::one();
            basis[i] = r;
        } else {
            basis[i] = slack_of_row[i].unwrap();
        }
        row[cols] = sign * shifted_rhs[i];
    }

    let mut upper = vec![T::infinity(); cols];
    for (u, &(lo, hi)) in upper.iter_mut().zip(&p.bounds) {
        *u = hi - lo;
    }
    let mut basic_row = vec![None; cols];
    let mut value = vec![T::zero(); cols];
    for (i, &b) in basis.iter().enumerate() {
        basic_row[b] = Some(i);
        value[b] = a[i * w + cols];
    }
    let mut t = Tableau {
        rows: m,
        cols,
        a,
        upper,
        value,
        at_upper: vec![false; cols],
        basis,
        basic_row,
        blocked: vec![false; cols],
        reduced: Vec::new(),
    };
    let limit = 50_000 + 200 * (m + cols);

    let artificials: Vec<usize> = art_of_row.iter().flatten().copied().collect();
    if !artificials.is_empty() {
        let mut phase1 = vec![T::zero(); cols];
        for &r in &artificials {
            phase1[r] = T::one();
        }
        t.set_costs(&phase1);
        t.run(limit)?;
        let infeasibility = artificials.iter().fold(T::zero(), |s, &r| s + t.value[r]);
        if infeasibility > T::tol(FEAS_TOL) {
            return Ok(MilpSolution::infeasible(1));
        }
        for &r in &artificials {
            t.upper[r] = T::zero();
            t.blocked[r] = true;
            if t.basic_row[r].is_none() {
                t.value[r] = T::zero();
                t.at_upper[r] = false;
            }
        }
        t.refresh_basics();
    }

    let mut phase2 = vec![T::zero(); cols];
    phase2[..n].copy_from_slice(&p.objective);
    t.set_costs(&phase2);
    t.run(limit)?;

    let x: Vec<T> = (0..n)
        .map(|j| {
            let (lo, hi) = p.bounds[j];
            (lo + t.value[j]).max(lo).min(hi)
        })
        .collect();
    Ok(MilpSolution {
        status: SolveStatus::Optimal,
        objective_value: p.objective_value(&x),
        x,
        nodes: 1,
    })
}
