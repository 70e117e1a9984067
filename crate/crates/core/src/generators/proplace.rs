//! Closest point of the convex hull of nearby certified data points, pulled
//! back towards the nearest of them if the hull point is not itself
//! certified.

use rand_chacha::ChaCha8Rng;

use super::bls::bisect;
use super::kdtree::KdTree;
use super::{target_pool, CounterfactualGenerator, GeneratorConfig, Method, Search};
use crate::evaluators::certified;
use crate::optim::{solve_lp, LpProblem, Relation, SolveStatus};
use crate::task::ClassificationTask;

pub struct Proplace<'a> {
    task: &'a ClassificationTask,
    cfg: GeneratorConfig,
    pool: KdTree,
}

impl<'a> Proplace<'a> {
    pub fn new(task: &'a ClassificationTask, cfg: GeneratorConfig) -> Self {
        Self {
            pool: target_pool(task),
            task,
            cfg,
        }
    }

    fn is_certified(&self, p: &[f64]) -> bool {
        certified(self.task, p, self.cfg.delta, self.cfg.include_biases)
    }
}

/// Minimises `‖c − x‖₁` over convex combinations `c` of `anchors`.
pub(crate) fn closest_in_hull(x: &[f64], anchors: &[&[f64]], bounds: &[(f64, f64)]) -> Option<Vec<f64>> {
    let mut lp = LpProblem::new();
    let c: Vec<usize> = bounds.iter().map(|&(lo, hi)| lp.add_var(lo, hi, 0.0)).collect();
    let weights: Vec<usize> = anchors.iter().map(|_| lp.add_var(0.0, 1.0, 0.0)).collect();
    let ones: Vec<(usize, f64)> = weights.iter().map(|&w| (w, 1.0)).collect();
    lp.add_sparse(&ones, Relation::Eq, 1.0);
    for (i, &ci) in c.iter().enumerate() {
        let mut terms = vec![(ci, 1.0)];
        terms.extend(weights.iter().zip(anchors).map(|(&w, a)| (w, -a[i])));
        lp.add_sparse(&terms, Relation::Eq, 0.0);
        let (lo, hi) = bounds[i];
        let up = lp.add_var(0.0, (hi - x[i]).max(0.0), 1.0);
        let down = lp.add_var(0.0, (x[i] - lo).max(0.0), 1.0);
        lp.add_sparse(&[(ci, 1.0), (up, -1.0), (down, 1.0)], Relation::Eq, x[i]);
    }
    let sol = solve_lp(&lp).ok()?;
    if sol.status != SolveStatus::Optimal {
        return None;
    }
    Some(c.iter().map(|&j| sol.x[j]).collect())
}

impl CounterfactualGenerator for Proplace<'_> {
    fn method(&self) -> Method {
        Method::Proplace
    }

    fn task(&self) -> &ClassificationTask {
        self.task
    }

    fn seed(&self) -> u64 {
        self.cfg.seed
    }

    fn search(&self, x: &[f64], _rng: &mut ChaCha8Rng) -> Search {
        let k = self.cfg.proplace.anchors;
        let anchors: Vec<&[f64]> = self
            .pool
            .nearest_iter(x)
            .map(|(id, _)| self.task.data().row(id))
            .filter(|row| self.is_certified(row))
            .take(k)
            .collect();
        let Some(&nearest) = anchors.first() else {
            return Search::none("no certified target-class data point").robust(false);
        };
        let prep = self.task.data().preprocessing();
        let mut hull = match closest_in_hull(x, &anchors, &prep.bounds()) {
            Some(c) => c,
            None => nearest.to_vec(),
        };
        prep.clamp(&mut hull);
        let mut s = if self.is_certified(&hull) {
            Search::found(hull)
        } else {
            let ce = bisect(&hull, nearest, self.cfg.proplace.bisection_steps, |p| self.is_certified(p));
            let mut s = Search::found(ce);
            s.diagnostics.note = Some("hull point not certified; bisected to nearest anchor".into());
            s
        };
        s.diagnostics.iterations = Some(anchors.len());
        s.robust(true)
    }
}
