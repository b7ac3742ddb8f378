//! Generation loop: proposals from the operators, fitness evaluation and
//! keep-best carry-over.
//!
//! Generation 1 is built entirely by the random operator. Generation `i ≥ 2`
//! draws parents by tournament from generation `i−1` together with the
//! keep-best set of generation `i−2`, fills its slots with random, heredity
//! and mutation proposals, and receives the keep-best set of generation
//! `i−1` unchanged. Proposal randomness comes from a per-slot stream, and
//! evaluation results are gathered in slot order, so the outcome does not
//! depend on how many evaluators run.

use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{Graph, GraphLimits};
use crate::ops::{
    edge_mutation, heredity, keep_best, layer_mutation, random_graph, rank_order, vertex_mutation, with_retrials,
    EdgeSampling, OpError, OperatorKind, RetrialOutcome,
};
use crate::pipeline::{cross_validate, Dataset, PipelineError};
use crate::rng::{Purpose, RngStream};
use crate::zoo::{default_model_set, ModelRole, ModelSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid dataset: {0}")]
    Dataset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Evaluated,
    DroppedInvalid,
    DroppedTimeout,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Evaluated => "evaluated",
            Status::DroppedInvalid => "dropped_invalid",
            Status::DroppedTimeout => "dropped_timeout",
        }
    }
}

/// Share of generation slots given to each operator family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorMix {
    pub random: f64,
    pub heredity: f64,
    pub mutation: f64,
}

impl Default for OperatorMix {
    fn default() -> Self {
        OperatorMix { random: 0.3, heredity: 0.4, mutation: 0.3 }
    }
}

impl OperatorMix {
    pub fn check(&self) -> Result<(), String> {
        let parts = [self.random, self.heredity, self.mutation];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err("operator fractions must be non-negative".into());
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(format!("operator fractions sum to {}, not 1", parts.iter().sum::<f64>()));
        }
        Ok(())
    }
}

/// Slot counts `[random, heredity, mutation]` for a generation of `size`,
/// by largest remainder; equal remainders favour the earlier family.
pub fn slot_counts(mix: &OperatorMix, size: usize) -> [usize; 3] {
    let quotas = [mix.random, mix.heredity, mix.mutation].map(|f| f * size as f64);
    let mut counts = quotas.map(|q| q.floor() as usize);
    let mut rest: Vec<usize> = (0..3).collect();
    rest.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    let mut missing = size.saturating_sub(counts.iter().sum());
    for i in rest.into_iter().cycle() {
        if missing == 0 {
            break;
        }
        counts[i] += 1;
        missing -= 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub population_budget: usize,
    pub generations: usize,
    pub mix: OperatorMix,
    pub keep_best_fraction: f64,
    /// `None` means `max(2, ceil(0.2 · generation size))`.
    pub subgroup_size: Option<usize>,
    pub sampling: EdgeSampling,
    pub alpha: f64,
    pub limits: GraphLimits,
    pub folds: usize,
    pub seed: u64,
    pub hpo_trials: usize,
    pub hpo_top: usize,
    pub hpo_candidates: usize,
    /// Concurrent evaluators; 0 uses every available core.
    pub workers: usize,
    pub max_wall_seconds: Option<f64>,
    pub split_ratio: f64,
    pub model_set: Vec<ModelSpec>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            population_budget: 120,
            generations: 10,
            mix: OperatorMix::default(),
            keep_best_fraction: 0.15,
            subgroup_size: None,
            sampling: EdgeSampling::default(),
            alpha: 0.001,
            limits: GraphLimits::default(),
            folds: 5,
            seed: 0,
            hpo_trials: 40,
            hpo_top: 5,
            hpo_candidates: 1024,
            workers: 0,
            max_wall_seconds: None,
            split_ratio: 0.8,
            model_set: default_model_set(),
        }
    }
}

impl SearchConfig {
    pub fn generation_size(&self) -> usize {
        self.population_budget / self.generations.max(1)
    }

    pub fn effective_subgroup(&self) -> usize {
        let g = self.generation_size();
        self.subgroup_size.unwrap_or_else(|| 2.max((0.2 * g as f64).ceil() as usize)).clamp(1, g.max(1))
    }

    pub fn check(&self) -> Result<(), SearchError> {
        let bad = |m: String| Err(SearchError::Config(m));
        if self.generations == 0 {
            return bad("generations must be positive".into());
        }
        if self.generation_size() < 2 {
            return bad(format!(
                "budget {} over {} generations leaves fewer than 2 individuals per generation",
                self.population_budget, self.generations
            ));
        }
        if let Some(s) = self.subgroup_size {
            if s == 0 || s > self.generation_size() {
                return bad(format!("subgroup size {s} outside 1..={}", self.generation_size()));
            }
        }
        self.mix.check().map_err(SearchError::Config)?;
        if !(self.keep_best_fraction > 0.0 && self.keep_best_fraction <= 1.0) {
            return bad("keep-best fraction must lie in (0, 1]".into());
        }
        let s = &self.sampling;
        if !(s.p0 > 0.0 && s.p0 <= 1.0) || !(s.gamma >= 0.0) || !(0.0..1.0).contains(&s.rho) {
            return bad("edge sampling needs p0 in (0, 1], gamma >= 0, rho in [0, 1)".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be finite and non-negative".into());
        }
        self.limits.check().map_err(SearchError::Config)?;
        if self.folds < 2 {
            return bad("at least two folds are required".into());
        }
        if self.hpo_candidates == 0 {
            return bad("acquisition needs at least one candidate".into());
        }
        if let Some(w) = self.max_wall_seconds {
            if !(w > 0.0) {
                return bad("wall-clock limit must be positive".into());
            }
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad("split ratio must lie in (0, 1)".into());
        }
        if self.model_set.iter().any(|m| m.role() == ModelRole::Input) {
            return bad("the model set may not contain the input model".into());
        }
        if !self.model_set.iter().any(|m| m.role() == ModelRole::Classifier) {
            return bad("the model set needs at least one classifier".into());
        }
        for m in &self.model_set {
            m.check().map_err(|e| SearchError::Config(format!("{}: {e}", m.kind.id())))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub id: usize,
    pub graph: Graph,
    pub fitness: f64,
    pub loss: f64,
    pub balanced_accuracy: f64,
    pub provenance: OperatorKind,
    pub parents: Vec<usize>,
    pub generation: usize,
    pub wall_time: f64,
    pub status: Status,
    /// Seed of the cross-validation shuffle; reused when tuning.
    pub eval_seed: u64,
    /// Copied forward by keep-best and not retrained.
    pub carried: bool,
    /// Proposal attempts spent before the graph validated.
    pub attempts: usize,
}

impl Individual {
    pub fn is_evaluated(&self) -> bool {
        self.status == Status::Evaluated
    }
}

/// A slot whose operator never produced a valid graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DroppedSlot {
    pub id: usize,
    pub generation: usize,
    pub provenance: OperatorKind,
    pub parents: Vec<usize>,
    pub attempts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluation {
    Scored { fitness: f64, loss: f64, balanced_accuracy: f64 },
    Timeout,
    Invalid,
}

/// Cross-validated loss plus `alpha` times the graph complexity.
pub fn fitness(
    graph: &Graph,
    dataset: &Dataset,
    alpha: f64,
    folds: usize,
    budget: Option<Duration>,
    seed: u64,
) -> Evaluation {
    let start = Instant::now();
    match cross_validate(graph, dataset, folds, budget, seed) {
        Ok(_) if budget.is_some_and(|b| start.elapsed() > b) => Evaluation::Timeout,
        Ok(score) => Evaluation::Scored {
            fitness: score.loss + alpha * graph.complexity() as f64,
            loss: score.loss,
            balanced_accuracy: score.balanced_accuracy,
        },
        Err(PipelineError::TimeoutExceeded) => Evaluation::Timeout,
        Err(e) => {
            log::debug!("evaluation failed: {e}");
            Evaluation::Invalid
        }
    }
}

/// Best of `size` distinct candidates drawn uniformly (all of them if fewer).
pub fn tournament_select<'a, R: Rng + ?Sized>(
    candidates: &[&'a Individual],
    size: usize,
    rng: &mut R,
) -> Result<&'a Individual, OpError> {
    if candidates.is_empty() {
        return Err(OpError::EmptyPopulation);
    }
    let k = size.clamp(1, candidates.len());
    sample(rng, candidates.len(), k)
        .into_iter()
        .map(|i| candidates[i])
        .min_by(|a, b| rank_order(a, b))
        .ok_or(OpError::EmptyPopulation)
}

/// A graph waiting for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub graph: Graph,
    pub provenance: OperatorKind,
    pub parents: Vec<usize>,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SlotOutcome {
    Proposed(Proposal),
    Dropped { provenance: OperatorKind, parents: Vec<usize>, attempts: usize },
}

/// Everything a generation starts from: proposals for its slots (in slot
/// order) and the individuals carried over unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationPlan {
    pub slots: Vec<SlotOutcome>,
    pub carried: Vec<Individual>,
}

fn propose_random<R: Rng>(config: &SearchConfig, rng: &mut R) -> SlotOutcome {
    match with_retrials(config.limits.retrial_limit, &config.limits, |_| {
        random_graph(&config.limits, &config.model_set, &config.sampling, rng)
    }) {
        RetrialOutcome::Accepted { graph, attempts } => {
            SlotOutcome::Proposed(Proposal { graph, provenance: OperatorKind::Random, parents: vec![], attempts })
        }
        RetrialOutcome::Dropped { attempts } => {
            SlotOutcome::Dropped { provenance: OperatorKind::Random, parents: vec![], attempts }
        }
    }
}

fn propose_heredity<R: Rng>(pool: &[&Individual], config: &SearchConfig, rng: &mut R) -> SlotOutcome {
    let size = config.effective_subgroup();
    let mut parents = vec![];
    let outcome = with_retrials(config.limits.retrial_limit, &config.limits, |_| {
        let a = tournament_select(pool, size, rng)?;
        let b = tournament_select(pool, size, rng)?;
        parents = vec![a.id, b.id];
        heredity(&a.graph, &b.graph, &config.sampling, rng)
    });
    match outcome {
        RetrialOutcome::Accepted { graph, attempts } => {
            SlotOutcome::Proposed(Proposal { graph, provenance: OperatorKind::Heredity, parents, attempts })
        }
        RetrialOutcome::Dropped { attempts } => {
            SlotOutcome::Dropped { provenance: OperatorKind::Heredity, parents, attempts }
        }
    }
}

fn propose_mutation<R: Rng>(pool: &[&Individual], config: &SearchConfig, rng: &mut R) -> SlotOutcome {
    let size = config.effective_subgroup();
    let mut parents = vec![];
    let mut kind = OperatorKind::VertexMutation;
    let kinds = [OperatorKind::VertexMutation, OperatorKind::EdgeMutation, OperatorKind::LayerMutation];
    let outcome = with_retrials(config.limits.retrial_limit, &config.limits, |_| {
        let parent = tournament_select(pool, size, rng)?;
        parents = vec![parent.id];
        kind = kinds[rng.gen_range(0..kinds.len())];
        match kind {
            OperatorKind::VertexMutation => vertex_mutation(&parent.graph, &config.model_set, rng),
            OperatorKind::EdgeMutation => edge_mutation(&parent.graph, rng),
            _ => layer_mutation(&parent.graph, &config.model_set, &config.sampling, rng),
        }
    });
    match outcome {
        RetrialOutcome::Accepted { graph, attempts } => {
            SlotOutcome::Proposed(Proposal { graph, provenance: kind, parents, attempts })
        }
        RetrialOutcome::Dropped { attempts } => SlotOutcome::Dropped { provenance: kind, parents, attempts },
    }
}

/// Builds the slots of generation `gen_index` (1-based). The selection pool
/// is the evaluated part of `prev_gen` plus `keep_best_prev2`; the keep-best
/// set of `prev_gen` is carried unchanged. Slot `s` draws from its own
/// stream, and `slots` may be smaller than the generation size when the
/// budget is nearly spent.
pub fn next_generation(
    gen_index: usize,
    prev_gen: &[Individual],
    keep_best_prev2: &[Individual],
    slots: usize,
    config: &SearchConfig,
) -> GenerationPlan {
    let pool: Vec<&Individual> = prev_gen.iter().chain(keep_best_prev2).filter(|i| i.is_evaluated()).collect();
    let counts = if gen_index <= 1 || pool.is_empty() {
        [slots, 0, 0]
    } else {
        let full = slot_counts(&config.mix, config.generation_size());
        trim_counts(full, slots)
    };
    let mut out = Vec::with_capacity(slots);
    let mut slot = 0u32;
    for (family, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            let mut rng = RngStream::new(config.seed, Purpose::Proposal, gen_index as u32, slot).rng();
            out.push(match family {
                0 => propose_random(config, &mut rng),
                1 => propose_heredity(&pool, config, &mut rng),
                _ => propose_mutation(&pool, config, &mut rng),
            });
            slot += 1;
        }
    }
    let carried = if gen_index <= 1 || prev_gen.iter().all(|i| !i.is_evaluated()) {
        vec![]
    } else {
        keep_best(prev_gen, config.keep_best_fraction).unwrap_or_default()
    };
    GenerationPlan { slots: out, carried }
}

/// Shrinks the counts to `slots`, taking from the last family first.
fn trim_counts(mut counts: [usize; 3], slots: usize) -> [usize; 3] {
    let mut excess = counts.iter().sum::<usize>().saturating_sub(slots);
    for c in counts.iter_mut().rev() {
        let t = excess.min(*c);
        *c -= t;
        excess -= t;
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationSummary {
    pub generation: usize,
    pub best_fitness: f64,
    pub best_so_far: f64,
    pub evaluated: usize,
    pub dropped: usize,
    pub carried: usize,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: Individual,
    /// Every individual in id order, carried copies included.
    pub individuals: Vec<Individual>,
    pub dropped_slots: Vec<DroppedSlot>,
    /// Ids of each generation's keep-best set.
    pub keep_best_history: Vec<Vec<usize>>,
    pub generations: Vec<GenerationSummary>,
    /// Fitness evaluations performed (carried copies excluded).
    pub evaluations: usize,
}

impl SearchResult {
    pub fn final_population(&self) -> Vec<&Individual> {
        let last = self.generations.last().map_or(0, |g| g.generation);
        self.individuals.iter().filter(|i| i.generation == last).collect()
    }

    pub fn generation(&self, g: usize) -> impl Iterator<Item = &Individual> {
        self.individuals.iter().filter(move |i| i.generation == g)
    }
}

fn evaluate(p: &Proposal, dataset: &Dataset, config: &SearchConfig, seed: u64) -> (Evaluation, f64) {
    let start = Instant::now();
    let budget = Duration::from_secs_f64(config.limits.max_train_seconds);
    let e = fitness(&p.graph, dataset, config.alpha, config.folds, Some(budget), seed);
    (e, start.elapsed().as_secs_f64())
}

pub(crate) fn thread_pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool")
}

/// Runs the generation loop until the generation count, the evaluation
/// budget or the optional wall-clock limit is reached.
pub fn run_search(dataset: &Dataset, config: &SearchConfig) -> Result<SearchResult, SearchError> {
    config.check()?;
    if dataset.len() < 2 * dataset.n_classes() {
        return Err(SearchError::Dataset(format!(
            "{} rows cannot be cross-validated over {} classes",
            dataset.len(),
            dataset.n_classes()
        )));
    }
    if let Some(c) = dataset.class_counts().iter().position(|&c| c < 2) {
        return Err(SearchError::Dataset(format!("class {:?} has fewer than two rows", dataset.class_names[c])));
    }
    let pool = thread_pool(config.workers);
    let started = Instant::now();
    let size = config.generation_size();

    let mut individuals: Vec<Individual> = Vec::new();
    let mut dropped_slots = Vec::new();
    let mut keep_best_history: Vec<Vec<usize>> = Vec::new();
    let mut summaries: Vec<GenerationSummary> = Vec::new();
    let mut prev: Vec<Individual> = Vec::new();
    let mut kb_prev2: Vec<Individual> = Vec::new();
    let mut kb_prev: Vec<Individual> = Vec::new();
    let mut next_id = 0usize;
    let mut evaluations = 0usize;
    let mut best_so_far = f64::INFINITY;

    for gen in 1..=config.generations {
        let remaining = config.population_budget - evaluations;
        if remaining == 0 {
            break;
        }
        if config.max_wall_seconds.is_some_and(|w| started.elapsed().as_secs_f64() > w) {
            log::info!("wall-clock limit reached before generation {gen}");
            break;
        }
        let plan = next_generation(gen, &prev, &kb_prev2, size.min(remaining), config);

        let seeds: Vec<u64> = (0..plan.slots.len())
            .map(|s| RngStream::new(config.seed, Purpose::Evaluation, gen as u32, s as u32).derive_seed())
            .collect();
        let work: Vec<(usize, &Proposal)> = plan
            .slots
            .iter()
            .enumerate()
            .filter_map(|(s, o)| match o {
                SlotOutcome::Proposed(p) => Some((s, p)),
                SlotOutcome::Dropped { .. } => None,
            })
            .collect();
        let results: Vec<(Evaluation, f64)> =
            pool.install(|| work.par_iter().map(|(s, p)| evaluate(p, dataset, config, seeds[*s])).collect());
        let mut results = results.into_iter();

        let mut current = Vec::with_capacity(plan.slots.len() + plan.carried.len());
        let mut dropped = 0;
        for (s, outcome) in plan.slots.into_iter().enumerate() {
            let id = next_id;
            next_id += 1;
            match outcome {
                SlotOutcome::Dropped { provenance, parents, attempts } => {
                    dropped += 1;
                    dropped_slots.push(DroppedSlot { id, generation: gen, provenance, parents, attempts });
                }
                SlotOutcome::Proposed(p) => {
                    let (eval, wall_time) = results.next().expect("one result per proposal");
                    evaluations += 1;
                    let (status, fitness, loss, ba) = match eval {
                        Evaluation::Scored { fitness, loss, balanced_accuracy } => {
                            (Status::Evaluated, fitness, loss, balanced_accuracy)
                        }
                        Evaluation::Timeout => (Status::DroppedTimeout, f64::INFINITY, f64::INFINITY, f64::NAN),
                        Evaluation::Invalid => (Status::DroppedInvalid, f64::INFINITY, f64::INFINITY, f64::NAN),
                    };
                    if status != Status::Evaluated {
                        dropped += 1;
                    }
                    current.push(Individual {
                        id,
                        graph: p.graph,
                        fitness,
                        loss,
                        balanced_accuracy: ba,
                        provenance: p.provenance,
                        parents: p.parents,
                        generation: gen,
                        wall_time,
                        status,
                        eval_seed: seeds[s],
                        carried: false,
                        attempts: p.attempts,
                    });
                }
            }
        }
        let carried_count = plan.carried.len();
        for kept in plan.carried {
            let id = next_id;
            next_id += 1;
            current.push(Individual {
                id,
                provenance: OperatorKind::KeepBest,
                parents: vec![kept.id],
                generation: gen,
                wall_time: 0.0,
                attempts: 0,
                carried: true,
                ..kept
            });
        }

        let best = current.iter().filter(|i| i.is_evaluated()).map(|i| i.fitness).fold(f64::INFINITY, f64::min);
        best_so_far = best_so_far.min(best);
        let summary = GenerationSummary {
            generation: gen,
            best_fitness: best,
            best_so_far,
            evaluated: current.iter().filter(|i| i.is_evaluated() && !i.carried).count(),
            dropped,
            carried: carried_count,
        };
        log::info!(
            "generation {gen}: {} evaluated, {} dropped, {} carried, best fitness {:.4}",
            summary.evaluated,
            summary.dropped,
            summary.carried,
            summary.best_fitness
        );
        summaries.push(summary);

        let kb = keep_best(&current, config.keep_best_fraction).unwrap_or_default();
        keep_best_history.push(kb.iter().map(|i| i.id).collect());
        kb_prev2 = std::mem::replace(&mut kb_prev, kb);
        individuals.extend(current.iter().cloned());
        prev = current;
    }

    let best = individuals
        .iter()
        .filter(|i| i.is_evaluated())
        .min_by(|a, b| rank_order(a, b))
        .cloned()
        .ok_or_else(|| SearchError::Dataset("no individual could be evaluated".into()))?;
    Ok(SearchResult { best, individuals, dropped_slots, keep_best_history, generations: summaries, evaluations })
}
