//! Architecture-generating operators: random construction, vertex / edge /
//! layer mutation, layer heredity, keep-best, and the retry wrapper that
//! turns raw operator output into validated graphs.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{connection_probability, validate, Adjacency, Graph, GraphError, GraphLimits};
use crate::search::{Individual, Status};
use crate::zoo::{ModelKind, ModelRole, ModelSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpError {
    #[error("no valid graph after {attempts} attempts")]
    RetrialExhausted { attempts: usize },
    #[error("no eligible replacement model")]
    NoEligibleReplacement,
    #[error("graph has no interior layer")]
    NoInteriorLayer,
    #[error("population is empty")]
    EmptyPopulation,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Random,
    VertexMutation,
    EdgeMutation,
    LayerMutation,
    Heredity,
    KeepBest,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 6] = [
        OperatorKind::Random,
        OperatorKind::VertexMutation,
        OperatorKind::EdgeMutation,
        OperatorKind::LayerMutation,
        OperatorKind::Heredity,
        OperatorKind::KeepBest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OperatorKind::Random => "random",
            OperatorKind::VertexMutation => "vertex_mutation",
            OperatorKind::EdgeMutation => "edge_mutation",
            OperatorKind::LayerMutation => "layer_mutation",
            OperatorKind::Heredity => "heredity",
            OperatorKind::KeepBest => "keep_best",
        }
    }

    pub fn is_mutation(self) -> bool {
        matches!(self, OperatorKind::VertexMutation | OperatorKind::EdgeMutation | OperatorKind::LayerMutation)
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Block edge-sampling constants: initial probability `p0`, decay `gamma`
/// and density threshold `rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSampling {
    pub p0: f64,
    pub gamma: f64,
    pub rho: f64,
}

impl Default for EdgeSampling {
    fn default() -> Self {
        EdgeSampling { p0: 0.3, gamma: 1.0, rho: 0.0 }
    }
}

impl EdgeSampling {
    /// Draws the edge between planned depths `d_src < d_dst`: included iff
    /// `u < p` and `p > rho`. The uniform is always drawn so stream
    /// consumption does not depend on `rho`.
    pub fn sample<R: Rng + ?Sized>(&self, d_src: usize, d_dst: usize, rng: &mut R) -> Result<bool, GraphError> {
        let p = connection_probability(d_src, d_dst, self.p0, self.gamma)?;
        let u: f64 = rng.gen();
        Ok(p > self.rho && u < p)
    }
}

/// Insertion layer size bound for layer mutation.
pub const MAX_INSERTED_LAYER: usize = 3;

/// Vertices with planned depths, assembled before the final sort.
struct Draft {
    specs: Vec<ModelSpec>,
    depth: Vec<usize>,
    adj: Adjacency,
}

impl Draft {
    fn from_graph(graph: &Graph, keep: impl Fn(usize) -> bool, remap: impl Fn(usize) -> usize) -> Draft {
        let kept: Vec<usize> = (0..graph.len()).filter(|&v| keep(v)).collect();
        let mut adj = Adjacency::new(kept.len());
        for (ni, &oi) in kept.iter().enumerate() {
            for (nj, &oj) in kept.iter().enumerate() {
                if graph.adjacency().get(oi, oj) {
                    adj.set(ni, nj, true);
                }
            }
        }
        Draft {
            specs: kept.iter().map(|&v| graph.vertex(v).clone()).collect(),
            depth: kept.iter().map(|&v| remap(graph.depths()[v])).collect(),
            adj,
        }
    }

    /// Adds `models` as a new layer at planned depth `depth` and samples
    /// every block edge between it and the existing vertices.
    fn splice_layer<R: Rng + ?Sized>(
        &mut self,
        models: Vec<ModelSpec>,
        depth: usize,
        sampling: &EdgeSampling,
        rng: &mut R,
    ) -> Result<(), GraphError> {
        let existing = self.specs.len();
        let mut grown = Adjacency::new(existing + models.len());
        for (i, j) in self.adj.edges() {
            grown.set(i, j, true);
        }
        self.adj = grown;
        for m in models {
            let n = self.specs.len();
            self.specs.push(m);
            self.depth.push(depth);
            for v in 0..existing {
                let dv = self.depth[v];
                if dv < depth {
                    if sampling.sample(dv, depth, rng)? {
                        self.adj.set(v, n, true);
                    }
                } else if dv > depth && sampling.sample(depth, dv, rng)? {
                    self.adj.set(n, v, true);
                }
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<Graph, GraphError> {
        // edges joining equal planned depths are dropped before sorting
        let mut adj = self.adj;
        for (i, j) in adj.edges() {
            if self.depth[i] >= self.depth[j] {
                adj.set(i, j, false);
            }
        }
        Graph::new(self.specs, adj)
    }
}

fn non_input(model_set: &[ModelSpec]) -> Vec<&ModelSpec> {
    model_set.iter().filter(|m| m.kind != ModelKind::Input).collect()
}

fn pick_models<R: Rng + ?Sized>(pool: &[&ModelSpec], count: usize, rng: &mut R) -> Vec<ModelSpec> {
    (0..count).map(|_| (*pool.choose(rng).expect("non-empty model pool")).clone()).collect()
}

/// Splits `total` vertices over `layers` interior layers, each of size at
/// least one, proportionally to uniform weights (largest remainder).
fn interior_sizes<R: Rng + ?Sized>(total: usize, layers: usize, rng: &mut R) -> Vec<usize> {
    if layers == 0 {
        return Vec::new();
    }
    let weights: Vec<f64> = (0..layers).map(|_| rng.gen::<f64>() + f64::EPSILON).collect();
    let spare = total - layers;
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * spare as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| 1 + e.floor() as usize).collect();
    let mut left = total - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..layers).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for i in order {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    sizes
}

/// One unvalidated draw of the random operator.
pub fn random_graph<R: Rng + ?Sized>(
    limits: &GraphLimits,
    model_set: &[ModelSpec],
    sampling: &EdgeSampling,
    rng: &mut R,
) -> Result<Graph, OpError> {
    let pool = non_input(model_set);
    if pool.is_empty() {
        return Err(OpError::NoEligibleReplacement);
    }
    let k_lo = limits.min_vertices.max(2);
    let k_hi = limits.random_vertex_cap.max(k_lo);
    let mut k = rng.gen_range(k_lo..=k_hi);
    let d_hi = limits.max_layers.min(k);
    if k > 2 && d_hi < 3 {
        k = 2;
    }
    // two layers only fit two vertices, so larger graphs need three or more
    let layers = if k == 2 { 2 } else { rng.gen_range(limits.min_layers.max(3).min(d_hi)..=d_hi) };
    let sizes = interior_sizes(k - 2, layers - 2, rng);

    let classifiers: Vec<&ModelSpec> = pool.iter().copied().filter(|m| m.role() == ModelRole::Classifier).collect();
    let mut specs = vec![ModelSpec::new(ModelKind::Input)];
    let mut depth = vec![1];
    for (i, &size) in sizes.iter().enumerate() {
        specs.extend(pick_models(&pool, size, rng));
        depth.extend(std::iter::repeat_n(i + 2, size));
    }
    let output_pool = if classifiers.is_empty() { &pool } else { &classifiers };
    specs.extend(pick_models(output_pool, 1, rng));
    depth.push(layers);

    let mut adj = Adjacency::new(k);
    for i in 0..k {
        for j in 0..k {
            if depth[i] < depth[j] && sampling.sample(depth[i], depth[j], rng)? {
                adj.set(i, j, true);
            }
        }
    }
    Ok(Draft { specs, depth, adj }.finish()?)
}

/// Random operator with validation and retries.
pub fn random_op<R: Rng + ?Sized>(
    limits: &GraphLimits,
    model_set: &[ModelSpec],
    sampling: &EdgeSampling,
    rng: &mut R,
) -> Result<Graph, OpError> {
    match with_retrials(limits.retrial_limit, limits, |_| random_graph(limits, model_set, sampling, rng)) {
        RetrialOutcome::Accepted { graph, .. } => Ok(graph),
        RetrialOutcome::Dropped { attempts } => Err(OpError::RetrialExhausted { attempts }),
    }
}

/// Models that may replace the one on vertex `k` without breaking the
/// output-role rule or creating a lone supervised→supervised feed.
pub fn replacement_candidates<'m>(graph: &Graph, k: usize, model_set: &'m [ModelSpec]) -> Vec<&'m ModelSpec> {
    let last = graph.len() - 1;
    let current = graph.vertex(k).kind;
    let parents = graph.parents(k);
    let lone_children: Vec<usize> =
        graph.adjacency().children(k).into_iter().filter(|&c| graph.parents(c).len() == 1).collect();
    model_set
        .iter()
        .filter(|m| m.kind != ModelKind::Input && m.kind != current)
        .filter(|m| k != last || m.role() == ModelRole::Classifier)
        .filter(|m| {
            if !m.role().is_supervised() {
                return true;
            }
            let lone_parent = parents.len() == 1 && graph.vertex(parents[0]).role().is_supervised();
            let feeds_lone = lone_children.iter().any(|&c| graph.vertex(c).role().is_supervised());
            !lone_parent && !feeds_lone
        })
        .collect()
}

/// Replaces the model on one uniformly chosen non-input vertex.
pub fn vertex_mutation<R: Rng + ?Sized>(graph: &Graph, model_set: &[ModelSpec], rng: &mut R) -> Result<Graph, OpError> {
    if graph.len() < 2 {
        return Err(OpError::NoEligibleReplacement);
    }
    let k = rng.gen_range(1..graph.len());
    let candidates = replacement_candidates(graph, k, model_set);
    let choice = candidates.choose(rng).ok_or(OpError::NoEligibleReplacement)?;
    Ok(graph.with_vertex_model(k, (*choice).clone()))
}

/// Flips `A[i][j]` (`i < j`) and re-sorts.
pub fn flip_edge(graph: &Graph, i: usize, j: usize) -> Result<Graph, OpError> {
    if i >= j || j >= graph.len() {
        return Err(
            GraphError::Domain(format!("pair ({i}, {j}) is not forward in a {}-vertex graph", graph.len())).into()
        );
    }
    let (specs, mut adj) = graph.clone().into_parts();
    adj.flip(i, j);
    Ok(Graph::new(specs, adj)?)
}

/// Flips one uniformly chosen forward pair.
pub fn edge_mutation<R: Rng + ?Sized>(graph: &Graph, rng: &mut R) -> Result<Graph, OpError> {
    let k = graph.len();
    if k < 2 {
        return Err(GraphError::InvalidGraph("edge mutation needs two vertices".into()).into());
    }
    let pairs = k * (k - 1) / 2;
    let mut idx = rng.gen_range(0..pairs);
    for i in 0..k {
        let row = k - 1 - i;
        if idx < row {
            return flip_edge(graph, i, i + 1 + idx);
        }
        idx -= row;
    }
    unreachable!("pair index within range")
}

fn remove_layer(graph: &Graph, depth: usize) -> Result<Graph, OpError> {
    let draft = Draft::from_graph(graph, |v| graph.depths()[v] != depth, |d| d);
    Ok(draft.finish()?)
}

/// With probability one half removes a random interior layer, otherwise
/// inserts a new layer of 1..=3 random models after a random layer.
pub fn layer_mutation<R: Rng + ?Sized>(
    graph: &Graph,
    model_set: &[ModelSpec],
    sampling: &EdgeSampling,
    rng: &mut R,
) -> Result<Graph, OpError> {
    let layers = graph.layer_count();
    let remove = rng.gen::<f64>() > 0.5;
    if remove && layers >= 3 {
        let d = rng.gen_range(2..layers);
        return remove_layer(graph, d);
    }
    let pool = non_input(model_set);
    if pool.is_empty() || layers < 2 {
        return Err(OpError::NoEligibleReplacement);
    }
    let after = rng.gen_range(1..layers);
    let size = rng.gen_range(1..=MAX_INSERTED_LAYER);
    let models = pick_models(&pool, size, rng);
    let mut draft = Draft::from_graph(graph, |_| true, |d| if d > after { d + 1 } else { d });
    draft.splice_layer(models, after + 1, sampling, rng)?;
    Ok(draft.finish()?)
}

/// Replaces a random interior layer of `graph_a` with a random interior
/// layer of `graph_b` (models and hyperparameters copied), sampling fresh
/// edges for the transplanted vertices.
pub fn heredity<R: Rng + ?Sized>(
    graph_a: &Graph,
    graph_b: &Graph,
    sampling: &EdgeSampling,
    rng: &mut R,
) -> Result<Graph, OpError> {
    let da = graph_a.layer_count();
    let db = graph_b.layer_count();
    if da < 3 || db < 3 {
        return Err(OpError::NoInteriorLayer);
    }
    let d = rng.gen_range(2..da);
    let d_donor = rng.gen_range(2..db);
    let donor: Vec<ModelSpec> =
        (0..graph_b.len()).filter(|&v| graph_b.depths()[v] == d_donor).map(|v| graph_b.vertex(v).clone()).collect();
    let mut draft = Draft::from_graph(graph_a, |v| graph_a.depths()[v] != d, |x| x);
    draft.splice_layer(donor, d, sampling, rng)?;
    Ok(draft.finish()?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum RetrialOutcome {
    Accepted { graph: Graph, attempts: usize },
    Dropped { attempts: usize },
}

impl RetrialOutcome {
    pub fn graph(self) -> Option<Graph> {
        match self {
            RetrialOutcome::Accepted { graph, .. } => Some(graph),
            RetrialOutcome::Dropped { .. } => None,
        }
    }

    pub fn attempts(&self) -> usize {
        match self {
            RetrialOutcome::Accepted { attempts, .. } | RetrialOutcome::Dropped { attempts } => *attempts,
        }
    }
}

/// Re-runs `op` (given the 1-based attempt number) until it yields a graph
/// that passes validation, at most `limit` times. Operator errors count as
/// failed attempts.
pub fn with_retrials<F>(limit: usize, limits: &GraphLimits, mut op: F) -> RetrialOutcome
where
    F: FnMut(usize) -> Result<Graph, OpError>,
{
    for attempt in 1..=limit {
        if let Ok(graph) = op(attempt) {
            if validate(&graph, limits).is_empty() {
                return RetrialOutcome::Accepted { graph, attempts: attempt };
            }
        }
    }
    RetrialOutcome::Dropped { attempts: limit }
}

/// Orders by fitness, then complexity, then id.
pub fn rank_order(a: &Individual, b: &Individual) -> std::cmp::Ordering {
    a.fitness.total_cmp(&b.fitness).then(a.graph.complexity().cmp(&b.graph.complexity())).then(a.id.cmp(&b.id))
}

/// The `ceil(fraction · N)` best evaluated individuals, flagged as carried
/// so they are not trained again.
pub fn keep_best(population: &[Individual], fraction: f64) -> Result<Vec<Individual>, OpError> {
    let mut evaluated: Vec<&Individual> = population.iter().filter(|i| i.status == Status::Evaluated).collect();
    if evaluated.is_empty() {
        return Err(OpError::EmptyPopulation);
    }
    evaluated.sort_by(|a, b| rank_order(a, b));
    let count = ((fraction * evaluated.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(evaluated
        .into_iter()
        .take(count)
        .map(|i| {
            let mut kept = i.clone();
            kept.carried = true;
            kept
        })
        .collect())
}
