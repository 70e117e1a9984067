//! Binary line search between the instance and its nearest target-class
//! data point.

use rand_chacha::ChaCha8Rng;

use super::kdtree::KdTree;
use super::{lerp, target_pool, CounterfactualGenerator, GeneratorConfig, Method, Search};
use crate::task::ClassificationTask;

pub struct Bls<'a> {
    task: &'a ClassificationTask,
    cfg: GeneratorConfig,
    pool: KdTree,
}

impl<'a> Bls<'a> {
    pub fn new(task: &'a ClassificationTask, cfg: GeneratorConfig) -> Self {
        Self {
            pool: target_pool(task),
            task,
            cfg,
        }
    }
}

/// Bisects the segment from `from` (not target) to `to` (target) and returns
/// the target-side end of the final bracket.
pub(crate) fn bisect(from: &[f64], to: &[f64], steps: usize, is_target: impl Fn(&[f64]) -> bool) -> Vec<f64> {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        if is_target(&lerp(from, to, mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lerp(from, to, hi)
}

impl CounterfactualGenerator for Bls<'_> {
    fn method(&self) -> Method {
        Method::Bls
    }

    fn task(&self) -> &ClassificationTask {
        self.task
    }

    fn seed(&self) -> u64 {
        self.cfg.seed
    }

    fn search(&self, x: &[f64], _rng: &mut ChaCha8Rng) -> Search {
        let Some((id, _)) = self.pool.nearest(x) else {
            return Search::none("no target-class data point");
        };
        let anchor = self.task.data().row(id);
        let target = self.task.target_class();
        let ce = bisect(x, anchor, self.cfg.bls_steps, |p| self.task.predict(p) == target);
        let mut s = Search::found(ce);
        s.diagnostics.iterations = Some(self.cfg.bls_steps);
        s
    }
}
