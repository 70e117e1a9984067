//! L1-closest counterfactuals from the mixed-integer network encoding, and
//! the robust variant that raises the margin until the result is certified.

use rand_chacha::ChaCha8Rng;

use super::{CounterfactualGenerator, GeneratorConfig, Method, Search};
use crate::evaluators::certified;
use crate::optim::{encode_network_for_class, solve_milp_with, MilpOptions, OptimError, SolveStatus};
use crate::task::ClassificationTask;

pub(crate) enum Closest {
    Found { ce: Vec<f64>, nodes: usize },
    Infeasible,
    Failed(OptimError),
}

/// The point of the data box closest to `x` in L1 whose logit clears the
/// target side by `kappa`.
pub(crate) fn closest_with_margin(task: &ClassificationTask, x: &[f64], kappa: f64, opts: &MilpOptions) -> Closest {
    let bounds = task.data().preprocessing().bounds();
    let mut enc = match encode_network_for_class(task.model(), &bounds, task.target_class(), kappa) {
        Ok(e) => e,
        Err(e) => return Closest::Failed(e),
    };
    enc.add_l1_objective(x);
    match solve_milp_with(&enc.problem, opts) {
        Ok(s) if s.status == SolveStatus::Optimal => {
            let mut ce = enc.decode_input(&s.x);
            task.data().preprocessing().clamp(&mut ce);
            Closest::Found { ce, nodes: s.nodes }
        }
        Ok(_) => Closest::Infeasible,
        Err(e) => Closest::Failed(e),
    }
}

pub struct Mce<'a> {
    task: &'a ClassificationTask,
    cfg: GeneratorConfig,
}

impl<'a> Mce<'a> {
    pub fn new(task: &'a ClassificationTask, cfg: GeneratorConfig) -> Self {
        Self { task, cfg }
    }
}

impl CounterfactualGenerator for Mce<'_> {
    fn method(&self) -> Method {
        Method::Mce
    }

    fn task(&self) -> &ClassificationTask {
        self.task
    }

    fn seed(&self) -> u64 {
        self.cfg.seed
    }

    fn search(&self, x: &[f64], _rng: &mut ChaCha8Rng) -> Search {
        match closest_with_margin(self.task, x, self.cfg.mce_kappa, &self.cfg.milp) {
            Closest::Found { ce, nodes } => {
                let mut s = Search::found(ce);
                s.diagnostics.iterations = Some(nodes);
                s.diagnostics.margin = Some(self.cfg.mce_kappa);
                s
            }
            Closest::Infeasible => Search::none("no point in the box reaches the margin"),
            Closest::Failed(e) => Search::none(e.to_string()),
        }
    }
}

pub struct Mcer<'a> {
    task: &'a ClassificationTask,
    cfg: GeneratorConfig,
}

impl<'a> Mcer<'a> {
    pub fn new(task: &'a ClassificationTask, cfg: GeneratorConfig) -> Self {
        Self { task, cfg }
    }
}

impl CounterfactualGenerator for Mcer<'_> {
    fn method(&self) -> Method {
        Method::Mcer
    }

    fn task(&self) -> &ClassificationTask {
        self.task
    }

    fn seed(&self) -> u64 {
        self.cfg.seed
    }

    fn search(&self, x: &[f64], _rng: &mut ChaCha8Rng) -> Search {
        let mut last: Option<(Vec<f64>, f64)> = None;
        let mut stop = None;
        let mut kappa = self.cfg.mce_kappa;
        for rung in 0..self.cfg.mcer_rungs {
            match closest_with_margin(self.task, x, kappa, &self.cfg.milp) {
                Closest::Found { ce, .. } => {
                    if certified(self.task, &ce, self.cfg.delta, self.cfg.include_biases) {
                        let mut s = Search::found(ce).robust(true);
                        s.diagnostics.iterations = Some(rung + 1);
                        s.diagnostics.margin = Some(kappa);
                        return s;
                    }
                    last = Some((ce, kappa));
                }
                Closest::Infeasible => {
                    stop = Some(format!("margin {kappa} unreachable"));
                    break;
                }
                Closest::Failed(e) => {
                    stop = Some(e.to_string());
                    break;
                }
            }
            kappa *= 2.0;
        }
        match last {
            Some((ce, margin)) => {
                let mut s = Search::found(ce).robust(false);
                s.diagnostics.margin = Some(margin);
                s.diagnostics.note = stop.or(Some("margin ladder exhausted".into()));
                s
            }
            None => Search::none(stop.unwrap_or_default()).robust(false),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::super::*;
    use crate::evaluators::certified;

    fn l1(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    }

    #[test]
    fn net_a_minimal_change() {
        let t = net_a_task();
        let mut cfg = GeneratorConfig::default();
        cfg.mce_kappa = 1e-6;
        let r = Mce::new(&t, cfg).generate(2, &[0.0, 0.0]).unwrap();
        let c = r.ce.unwrap();
        assert!(r.valid);
        assert!((c[0] - 0.5).abs() < 1e-5 && c[1].abs() < 1e-9, "{c:?}");
    }

    #[test]
    fn mce_is_l1_closer_than_every_valid_data_point() {
        let t = blobs_task();
        let g = Mce::new(&t, GeneratorConfig::default());
        for (i, x) in t.negative_instances() {
            let r = g.generate(i, x).unwrap();
            let c = r.ce.unwrap();
            assert!(r.valid);
            let d = l1(&c, x);
            for j in t.target_rows() {
                assert!(d <= l1(t.data().row(j), x) + 1e-7);
            }
        }
    }

    #[test]
    fn mcer_certifies_when_it_can() {
        let t = blobs_task();
        let cfg = GeneratorConfig {
            delta: 0.02,
            ..Default::default()
        };
        let g = Mcer::new(&t, cfg.clone());
        let mce = Mce::new(&t, cfg.clone());
        for (i, x) in t.negative_instances().into_iter().take(10) {
            let r = g.generate(i, x).unwrap();
            let c = r.ce.unwrap();
            assert_eq!(r.diagnostics.robust, Some(true));
            assert!(certified(&t, &c, cfg.delta, true));
            let base = mce.generate(i, x).unwrap();
            assert!(l1(&c, x) >= l1(base.ce.as_ref().unwrap(), x) - 1e-7);
        }
    }

    #[test]
    fn mcer_at_zero_delta_is_mce() {
        let t = blobs_task();
        let cfg = GeneratorConfig {
            delta: 0.0,
            ..Default::default()
        };
        for (i, x) in t.negative_instances().into_iter().take(5) {
            let a = Mce::new(&t, cfg.clone()).generate(i, x).unwrap();
            let b = Mcer::new(&t, cfg.clone()).generate(i, x).unwrap();
            assert_eq!(a.ce, b.ce);
            assert_eq!(b.diagnostics.iterations, Some(1));
        }
    }

    #[test]
    fn unreachable_target_reports_absence() {
        let t = l1_task_with_rows(vec![vec![0.0, 0.0], vec![0.4, 0.4]]);
        let r = Mce::new(&t, GeneratorConfig::default()).generate(0, &[0.0, 0.0]).unwrap();
        assert!(r.ce.is_none());
        let r = Mcer::new(&t, GeneratorConfig::default()).generate(0, &[0.0, 0.0]).unwrap();
        assert!(r.ce.is_none());
    }

    #[test]
    fn mcer_on_the_linear_model_clears_the_interval_bound() {
        let t = l1_task();
        let cfg = GeneratorConfig {
            delta: 0.1,
            ..Default::default()
        };
        let r = Mcer::new(&t, cfg).generate(0, &[0.0, 0.0]).unwrap();
        let c = r.ce.unwrap();
        assert!(0.9 * (c[0] + c[1]) - 1.1 > 0.0, "{c:?}");
        assert_eq!(r.diagnostics.robust, Some(true));
    }

    #[test]
    fn mcer_returns_the_last_feasible_rung() {
        // certification would need x1 + x2 > 3, beyond the box, and the
        // margin 1.28 is unreachable since the logit tops out at 1
        let t = l1_task();
        let cfg = GeneratorConfig {
            delta: 0.5,
            ..Default::default()
        };
        let r = Mcer::new(&t, cfg).generate(0, &[0.0, 0.0]).unwrap();
        let c = r.ce.unwrap();
        assert_eq!(r.diagnostics.robust, Some(false));
        assert_eq!(r.diagnostics.margin, Some(0.64));
        assert!((c[0] + c[1] - 1.64).abs() < 1e-7, "{c:?}");
    }
}
