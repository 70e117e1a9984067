//! Gradient search on `λ·(logit − κ)² + ‖x' − x‖²`, with λ doubling until the
//! iterate crosses the boundary.

use rand_chacha::ChaCha8Rng;

use super::{CounterfactualGenerator, GeneratorConfig, Method, Search};
use crate::task::ClassificationTask;

pub struct Wachter<'a> {
    task: &'a ClassificationTask,
    cfg: GeneratorConfig,
}

impl<'a> Wachter<'a> {
    pub fn new(task: &'a ClassificationTask, cfg: GeneratorConfig) -> Self {
        Self { task, cfg }
    }
}

impl CounterfactualGenerator for Wachter<'_> {
    fn method(&self) -> Method {
        Method::Wachter
    }

    fn task(&self) -> &ClassificationTask {
        self.task
    }

    fn seed(&self) -> u64 {
        self.cfg.seed
    }

    fn search(&self, x: &[f64], _rng: &mut ChaCha8Rng) -> Search {
        let w = &self.cfg.wachter;
        let model = self.task.model();
        let target = self.task.target_class();
        let goal = self.task.orientation() * w.kappa;
        let prep = self.task.data().preprocessing();
        let mut xp = x.to_vec();
        let mut lambda = w.lambda;
        for step in 0..w.max_steps {
            if step > 0 && step % w.lambda_every == 0 {
                lambda *= 2.0;
            }
            let f = model.logit(&xp);
            let g = model.input_gradient(&xp).expect("dimension checked");
            for i in 0..xp.len() {
                let grad = 2.0 * lambda * (f - goal) * g[i] + 2.0 * (xp[i] - x[i]);
                xp[i] -= w.step_size * grad;
            }
            prep.clamp(&mut xp);
            if self.task.predict(&xp) == target {
                let mut s = Search::found(xp);
                s.diagnostics.iterations = Some(step + 1);
                return s;
            }
        }
        Search::none(format!("no valid point after {} steps", w.max_steps))
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::super::*;

    #[test]
    fn crosses_the_linear_boundary_near_the_projection() {
        let t = l1_task();
        let g = Wachter::new(&t, GeneratorConfig::default());
        let r = g.generate(0, &[0.0, 0.0]).unwrap();
        let c = r.ce.unwrap();
        assert!(r.valid);
        // nearest boundary point is (0.5, 0.5); the gradient keeps both
        // coordinates equal and the margin pushes a little past it
        assert!((c[0] - c[1]).abs() < 1e-12);
        assert!(c[0] > 0.5 && c[0] < 0.6, "{c:?}");
    }

    #[test]
    fn gives_up_when_the_target_is_out_of_reach() {
        // the box is [0, 0.4]², where the logit never exceeds −0.2
        let t = l1_task_with_rows(vec![vec![0.0, 0.0], vec![0.4, 0.4]]);
        let mut cfg = GeneratorConfig::default();
        cfg.wachter.max_steps = 300;
        let r = Wachter::new(&t, cfg).generate(0, &[0.0, 0.0]).unwrap();
        assert!(r.ce.is_none() && !r.valid);
        assert!(r.diagnostics.note.is_some());
    }

    #[test]
    fn every_blobs_negative_gets_a_valid_ce() {
        let t = blobs_task();
        let g = Wachter::new(&t, GeneratorConfig::default());
        for (i, x) in t.negative_instances() {
            let r = g.generate(i, x).unwrap();
            assert!(r.valid, "instance {i}");
        }
    }

    #[test]
    fn stays_close_on_the_linear_model() {
        let t = l1_task();
        let r = Wachter::new(&t, GeneratorConfig::default()).generate(0, &[0.0, 0.0]).unwrap();
        let c = r.ce.unwrap();
        assert!(c[0] + c[1] >= 1.0);
        assert!(r.l2_distance <= 0.9);
    }
}
