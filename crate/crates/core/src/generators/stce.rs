//! Nearest target-class data point whose predicted probability stays high
//! under Gaussian input noise.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::kdtree::KdTree;
use super::{target_pool, CounterfactualGenerator, GeneratorConfig, Method, Search};
use crate::task::ClassificationTask;
use crate::Model;

/// Mean minus sample standard deviation of the target-class probability
/// over `samples` Gaussian perturbations of `c`. One sample gives its
/// probability with no spread.
pub fn counterfactual_stability(
    model: &Model,
    c: &[f64],
    target_class: u8,
    samples: usize,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    assert!(samples > 0, "need at least one sample");
    let mut probs = Vec::with_capacity(samples);
    let mut xk = vec![0.0; c.len()];
    for _ in 0..samples {
        for (v, &ci) in xk.iter_mut().zip(c) {
            let z: f64 = rng.sample(StandardNormal);
            *v = ci + sigma * z;
        }
        let p = crate::scalar::sigmoid(model.logit(&xk));
        probs.push(if target_class == 1 { p } else { 1.0 - p });
    }
    let n = samples as f64;
    let mean = probs.iter().sum::<f64>() / n;
    let sd = if samples > 1 {
        (probs.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    mean - sd
}

pub struct Stce<'a> {
    task: &'a ClassificationTask,
    cfg: GeneratorConfig,
    pool: KdTree,
}

impl<'a> Stce<'a> {
    pub fn new(task: &'a ClassificationTask, cfg: GeneratorConfig) -> Self {
        Self {
            pool: target_pool(task),
            task,
            cfg,
        }
    }
}

impl CounterfactualGenerator for Stce<'_> {
    fn method(&self) -> Method {
        Method::Stce
    }

    fn task(&self) -> &ClassificationTask {
        self.task
    }

    fn seed(&self) -> u64 {
        self.cfg.seed
    }

    fn search(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Search {
        let s = &self.cfg.stce;
        let target = self.task.target_class();
        let mut best: Option<(usize, f64)> = None;
        for (visited, (id, _)) in self.pool.nearest_iter(x).enumerate() {
            let row = self.task.data().row(id);
            let stab = counterfactual_stability(self.task.model(), row, target, s.samples, s.sigma, rng);
            if stab >= s.tau {
                let mut out = Search::found(row.to_vec()).robust(true);
                out.diagnostics.iterations = Some(visited + 1);
                out.diagnostics.margin = Some(stab);
                return out;
            }
            if best.is_none_or(|(_, b)| stab > b) {
                best = Some((id, stab));
            }
        }
        match best {
            Some((id, stab)) => {
                let mut out = Search::found(self.task.data().row(id).to_vec()).robust(false);
                out.diagnostics.margin = Some(stab);
                out.diagnostics.note = Some(format!("no candidate reached stability {}", s.tau));
                out
            }
            None => Search::none("no target-class data point"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::super::*;
    use crate::seed::rng;

    #[test]
    fn single_sample_is_its_probability() {
        let t = l1_task();
        let c = [1.0, 1.0];
        let mut r1 = rng(3);
        let s = counterfactual_stability(t.model(), &c, 1, 1, 0.1, &mut r1);
        // replay the same draw by hand
        let mut r2 = rng(3);
        let z0: f64 = rand::Rng::sample(&mut r2, rand_distr::StandardNormal);
        let z1: f64 = rand::Rng::sample(&mut r2, rand_distr::StandardNormal);
        let p = crate::scalar::sigmoid(1.0 + 0.1 * z0 + 1.0 + 0.1 * z1 - 1.0);
        assert!((s - p).abs() < 1e-15);
    }

    #[test]
    fn stability_matches_direct_estimate() {
        let t = l1_task();
        let c = [0.8, 0.9];
        let mut r1 = rng(9);
        let s = counterfactual_stability(t.model(), &c, 1, 500, 0.1, &mut r1);
        let mut r2 = rng(9);
        let probs: Vec<f64> = (0..500)
            .map(|_| {
                let a: f64 = rand::Rng::sample(&mut r2, rand_distr::StandardNormal);
                let b: f64 = rand::Rng::sample(&mut r2, rand_distr::StandardNormal);
                crate::scalar::sigmoid(0.8 + 0.1 * a + 0.9 + 0.1 * b - 1.0)
            })
            .collect();
        let mean = probs.iter().sum::<f64>() / 500.0;
        let var = probs.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / 499.0;
        assert!((s - (mean - var.sqrt())).abs() < 1e-12);
        // class 0 uses the complementary probability
        let mut r3 = rng(9);
        let s0 = counterfactual_stability(t.model(), &c, 0, 500, 0.1, &mut r3);
        assert!((s0 - (1.0 - mean - var.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn picks_the_first_stable_candidate() {
        // sigmoid(0.05) is about 0.51 and sigmoid(5) about 0.993
        let t = l1_task_with_rows(vec![vec![0.0, 0.0], vec![0.55, 0.5], vec![3.0, 3.0]]);
        let r = Stce::new(&t, GeneratorConfig::default()).generate(0, &[0.0, 0.0]).unwrap();
        assert_eq!(r.ce.unwrap(), vec![3.0, 3.0]);
        assert_eq!(r.diagnostics.robust, Some(true));
        assert!(r.diagnostics.margin.unwrap() >= 0.9);
    }

    #[test]
    fn falls_back_to_the_most_stable() {
        let t = l1_task_with_rows(vec![vec![0.0, 0.0], vec![0.55, 0.5], vec![0.6, 0.7]]);
        let r = Stce::new(&t, GeneratorConfig::default()).generate(0, &[0.0, 0.0]).unwrap();
        assert_eq!(r.ce.unwrap(), vec![0.6, 0.7]);
        assert_eq!(r.diagnostics.robust, Some(false));
    }

    #[test]
    fn deep_candidates_are_stable() {
        let t = blobs_task();
        let m = t.model();
        let deep = t
            .target_rows()
            .into_iter()
            .map(|i| t.data().row(i))
            .max_by(|a, b| m.logit(a).total_cmp(&m.logit(b)))
            .unwrap();
        let s = counterfactual_stability(m, deep, 1, 500, 0.1, &mut rng(1));
        assert!(s > 0.9, "{s}");
    }

    #[test]
    fn boundary_candidates_are_not() {
        let t = l1_task();
        let s = counterfactual_stability(t.model(), &[0.5, 0.5], 1, 500, 0.1, &mut rng(2));
        assert!(s < 0.5, "{s}");
        assert!(s < GeneratorConfig::default().stce.tau);
    }
}
