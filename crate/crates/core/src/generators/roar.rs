//! Gradient search against a local linear surrogate whose weights and bias
//! may each shift by up to `δ_w`. The surrogate is refitted at the current
//! iterate periodically.

use rand_chacha::ChaCha8Rng;

use super::{CounterfactualGenerator, GeneratorConfig, Method, Search};
use crate::task::ClassificationTask;

/// Oriented first-order model `w·x + b` of the logit around a point.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Surrogate {
    pub w: Vec<f64>,
    pub b: f64,
}

impl Surrogate {
    pub fn fit(task: &ClassificationTask, at: &[f64]) -> Self {
        let o = task.orientation();
        let w: Vec<f64> = task.model().input_gradient(at).expect("dimension checked").iter().map(|g| o * g).collect();
        let b = o * task.model().logit(at) - w.iter().zip(at).map(|(wi, xi)| wi * xi).sum::<f64>();
        Self { w, b }
    }

    /// Smallest value of the surrogate over weight and bias shifts of at most
    /// `delta_w` each.
    pub fn worst_case(&self, x: &[f64], delta_w: f64) -> f64 {
        let lin: f64 = self.w.iter().zip(x).map(|(w, v)| w * v).sum();
        let l1: f64 = x.iter().map(|v| v.abs()).sum();
        lin + self.b - delta_w * (l1 + 1.0)
    }
}

pub struct Roar<'a> {
    task: &'a ClassificationTask,
    cfg: GeneratorConfig,
}

impl<'a> Roar<'a> {
    pub fn new(task: &'a ClassificationTask, cfg: GeneratorConfig) -> Self {
        Self { task, cfg }
    }
}

impl CounterfactualGenerator for Roar<'_> {
    fn method(&self) -> Method {
        Method::Roar
    }

    fn task(&self) -> &ClassificationTask {
        self.task
    }

    fn seed(&self) -> u64 {
        self.cfg.seed
    }

    fn search(&self, x: &[f64], _rng: &mut ChaCha8Rng) -> Search {
        let r = &self.cfg.roar;
        let delta_w = r.delta_w.unwrap_or(self.cfg.delta);
        let target = self.task.target_class();
        let prep = self.task.data().preprocessing();
        let mut xp = x.to_vec();
        let mut sur = Surrogate::fit(self.task, &xp);
        let mut lambda = r.lambda;
        for step in 0..=r.max_steps {
            if step > 0 && step % r.refresh_every == 0 {
                sur = Surrogate::fit(self.task, &xp);
            }
            if step > 0 && step % r.lambda_every == 0 {
                lambda *= 2.0;
            }
            let worst = sur.worst_case(&xp, delta_w);
            if worst >= r.kappa && self.task.predict(&xp) == target {
                let mut s = Search::found(xp);
                s.diagnostics.iterations = Some(step);
                s.diagnostics.margin = Some(worst);
                return s;
            }
            if step == r.max_steps {
                break;
            }
            // descend ‖x' − x‖² + λ·max(0, κ − worst)²
            let short = (r.kappa - worst).max(0.0);
            for i in 0..xp.len() {
                let d_worst = sur.w[i] - delta_w * sign(xp[i]);
                let grad = 2.0 * (xp[i] - x[i]) - 2.0 * lambda * short * d_worst;
                xp[i] -= r.step_size * grad;
            }
            prep.clamp(&mut xp);
        }
        Search::none(format!("worst-case margin not reached after {} steps", r.max_steps))
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
