//! Bayesian hyperparameter tuning of finished graphs.
//!
//! The incumbent's own assignment is always scored first as trial 0, so a
//! tuned graph is never worse than the one it started from. Further trials
//! come from a Gaussian-process surrogate over the unit-cube encoding of
//! every tunable parameter in the graph.

mod gp;
mod space;

use std::time::Duration;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use gp::{expected_improvement, normal_cdf, propose_next, random_point, GaussianProcess, LENGTH_SCALE, NOISE};
pub use space::{Assignment, Dimension, SearchSpace};

use crate::graph::Graph;
use crate::ops::rank_order;
use crate::pipeline::{cross_validate, Dataset, PipelineError};
use crate::rng::{Purpose, RngStream};
use crate::search::{thread_pool, Individual, SearchConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HpoError {
    #[error("surrogate cannot be fitted to the observations")]
    DegenerateSurrogate,
}

/// One point of a minimization run. Failed evaluations keep `loss = +∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub index: usize,
    pub point: Vec<f64>,
    pub loss: f64,
    pub failed: bool,
}

/// Minimizes `objective` over the unit cube with at most `budget` proposals
/// after the optional `initial` point (trial 0). The objective returns
/// `None` for a failed evaluation; the surrogate then sees the worst
/// observed loss plus one.
pub fn minimize<R, F>(
    dims: usize,
    initial: Option<Vec<f64>>,
    budget: usize,
    n_candidates: usize,
    rng: &mut R,
    mut objective: F,
) -> Vec<Trial>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &[f64]) -> Option<f64>,
{
    let mut trials: Vec<Trial> = Vec::new();
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut run = |index: usize, point: Vec<f64>, xs: &mut Vec<Vec<f64>>, ys: &mut Vec<f64>| {
        let finite = objective(index, &point).filter(|v| v.is_finite());
        let worst = if ys.is_empty() { 0.0 } else { ys.iter().copied().fold(f64::NEG_INFINITY, f64::max) };
        xs.push(point.clone());
        ys.push(finite.unwrap_or(worst + 1.0));
        Trial { index, point, loss: finite.unwrap_or(f64::INFINITY), failed: finite.is_none() }
    };
    if let Some(p) = initial {
        trials.push(run(0, p, &mut xs, &mut ys));
    }
    for t in 1..=budget {
        let p = propose_next(&xs, &ys, dims, n_candidates, rng);
        trials.push(run(t, p, &mut xs, &mut ys));
    }
    trials
}

/// Decoded record of one tuning trial.
#[derive(Debug, Clone, PartialEq)]
pub struct HpoTrial {
    pub index: usize,
    pub point: Vec<f64>,
    pub assignment: Vec<Assignment>,
    pub loss: f64,
    pub failed: bool,
}

impl HpoTrial {
    /// `v<vertex>.<name>=<value>` pairs joined by `;`.
    pub fn describe(&self) -> String {
        self.assignment
            .iter()
            .map(|a| format!("v{}.{}={}", a.vertex + 1, a.name, a.value))
            .collect::<Vec<_>>()
            .join(";")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunedIndividual {
    pub individual: Individual,
    /// Loss of the untouched incumbent (trial 0).
    pub default_loss: f64,
    pub tuned_loss: f64,
    pub trials: Vec<HpoTrial>,
}

/// Tunes one evaluated individual with at most `config.hpo_trials`
/// proposals beyond trial 0. Every trial, trial 0 included, is scored on
/// the folds drawn from `cv_seed`.
pub fn bho_optimize<R: Rng + ?Sized>(
    individual: &Individual,
    dataset: &Dataset,
    config: &SearchConfig,
    cv_seed: u64,
    rng: &mut R,
) -> TunedIndividual {
    let space = SearchSpace::of(&individual.graph);
    let graph = &individual.graph;
    let budget = Some(Duration::from_secs_f64(config.limits.max_train_seconds));
    let score = |g: &Graph| -> Option<(f64, f64)> {
        match cross_validate(g, dataset, config.folds, budget, cv_seed) {
            Ok(s) => Some((s.loss, s.balanced_accuracy)),
            Err(PipelineError::TimeoutExceeded) => None,
            Err(e) => {
                log::debug!("tuning trial failed: {e}");
                None
            }
        }
    };

    let mut accuracies = Vec::new();
    let n_trials = if space.is_empty() { 0 } else { config.hpo_trials };
    let initial = space.encode(graph);
    let trials = minimize(space.dims(), Some(initial), n_trials, config.hpo_candidates, rng, |index, u| {
        let g = if index == 0 { graph.clone() } else { space.apply(graph, u) };
        let r = score(&g);
        accuracies.push(r.map_or(f64::NAN, |(_, ba)| ba));
        r.map(|(loss, _)| loss)
    });

    let mut best = 0;
    for (i, t) in trials.iter().enumerate() {
        if t.loss < trials[best].loss {
            best = i;
        }
    }
    let log: Vec<HpoTrial> = trials
        .iter()
        .map(|t| HpoTrial {
            index: t.index,
            point: t.point.clone(),
            assignment: if t.index == 0 { current_assignment(&space, graph) } else { space.decode(&t.point) },
            loss: t.loss,
            failed: t.failed,
        })
        .collect();

    let default_loss = trials[0].loss;
    let mut tuned = individual.clone();
    if best != 0 {
        tuned.graph = space.apply(graph, &trials[best].point);
    }
    if trials[best].loss.is_finite() {
        tuned.loss = trials[best].loss;
        tuned.balanced_accuracy = accuracies[best];
        tuned.fitness = tuned.loss + config.alpha * tuned.graph.complexity() as f64;
    }
    TunedIndividual { individual: tuned, default_loss, tuned_loss: trials[best].loss, trials: log }
}

/// Fold seed shared by every finalist's tuning run.
pub fn tuning_cv_seed(seed: u64) -> u64 {
    RngStream::new(seed, Purpose::Tuning, 1, 0).derive_seed()
}

fn current_assignment(space: &SearchSpace, graph: &Graph) -> Vec<Assignment> {
    space
        .params
        .iter()
        .map(|d| Assignment { vertex: d.vertex, name: d.name, value: graph.vertex(d.vertex).params[d.name].clone() })
        .collect()
}

/// Tunes the `config.hpo_top` best distinct graphs of `population` and
/// returns them ranked by tuned fitness. The finalists share one fresh set
/// of folds, independent of the folds they were selected on.
pub fn finalize_top5(population: &[&Individual], dataset: &Dataset, config: &SearchConfig) -> Vec<TunedIndividual> {
    let mut ranked: Vec<&Individual> = population.iter().copied().filter(|i| i.is_evaluated()).collect();
    ranked.sort_by(|a, b| rank_order(a, b));
    let mut top: Vec<&Individual> = Vec::new();
    for i in ranked {
        if top.len() == config.hpo_top {
            break;
        }
        if !top.iter().any(|t| t.graph == i.graph) {
            top.push(i);
        }
    }
    let cv_seed = tuning_cv_seed(config.seed);
    let pool = thread_pool(config.workers);
    let mut tuned: Vec<TunedIndividual> = pool.install(|| {
        top.par_iter()
            .enumerate()
            .map(|(rank, ind)| {
                let mut rng = RngStream::new(config.seed, Purpose::Tuning, 0, rank as u32).rng();
                bho_optimize(ind, dataset, config, cv_seed, &mut rng)
            })
            .collect()
    });
    tuned.sort_by(|a, b| rank_order(&a.individual, &b.individual));
    tuned
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn minimize_counts_trials() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = minimize(2, Some(vec![0.5, 0.5]), 10, 64, &mut rng, |_, u| Some(u[0] + u[1]));
        assert_eq!(t.len(), 11);
        assert_eq!(t.iter().map(|t| t.index).collect::<Vec<_>>(), (0..=10).collect::<Vec<_>>());
        let t = minimize(2, None, 5, 64, &mut rng, |_, u| Some(u[0]));
        assert_eq!(t.iter().map(|t| t.index).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn failures_are_recorded_as_infinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = minimize(1, None, 6, 64, &mut rng, |i, u| (i % 2 == 0).then_some(u[0]));
        assert!(t.iter().filter(|t| t.failed).all(|t| t.loss == f64::INFINITY));
        assert_eq!(t.iter().filter(|t| t.failed).count(), 3);
    }

    #[test]
    fn quadratic_1d_converges() {
        let mut hits = 0;
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = minimize(1, None, 15, 1024, &mut rng, |_, u| Some((u[0] - 0.37).powi(2)));
            let best = t.iter().min_by(|a, b| a.loss.total_cmp(&b.loss)).unwrap();
            if (best.point[0] - 0.37).abs() < 0.2 {
                hits += 1;
            }
        }
        assert!(hits >= 40, "{hits}/50");
    }
}
