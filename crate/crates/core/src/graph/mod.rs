//! DAG architectures over the model zoo.
//!
//! A [`Graph`] always holds its vertices in canonical topological order:
//! sorted by depth (longest path from the input vertex, 1-based) and then by
//! original index. The adjacency matrix is therefore strictly upper
//! triangular and every layer occupies a contiguous index range, so the
//! diagonal layer blocks are zero.

mod io;
mod validate;

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::zoo::{ModelRole, ModelSpec};

pub use io::{from_json, to_dot, to_json, GraphDocument, VertexDocument};
pub use validate::{validate, GraphLimits, Rule, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge relation contains a directed cycle")]
    Cycle,
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("malformed graph document: {0}")]
    Document(String),
}

/// Square binary matrix; `get(i, j)` is an edge from `i` to `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Adjacency {
    n: usize,
    cells: Vec<bool>,
}

impl Adjacency {
    pub fn new(n: usize) -> Self {
        Adjacency { n, cells: vec![false; n * n] }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut a = Adjacency::new(n);
        for &(i, j) in edges {
            a.set(i, j, true);
        }
        a
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.cells[i * self.n + j] = value;
    }

    pub fn flip(&mut self, i: usize, j: usize) {
        let c = &mut self.cells[i * self.n + j];
        *c = !*c;
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if self.get(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn parents(&self, j: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.get(i, j)).collect()
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.get(i, j)).collect()
    }

    pub fn has_zero_diagonal(&self) -> bool {
        (0..self.n).all(|i| !self.get(i, i))
    }

    pub fn is_strictly_upper(&self) -> bool {
        self.edges().iter().all(|(i, j)| i < j)
    }

    /// Relabels vertices: new index `k` takes old vertex `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Adjacency {
        let mut out = Adjacency::new(self.n);
        for (ni, &oi) in order.iter().enumerate() {
            for (nj, &oj) in order.iter().enumerate() {
                out.set(ni, nj, self.get(oi, oj));
            }
        }
        out
    }

    /// Drops the listed vertices and every incident edge.
    pub fn without(&self, removed: &[usize]) -> Adjacency {
        let keep: Vec<usize> = (0..self.n).filter(|v| !removed.contains(v)).collect();
        let mut out = Adjacency::new(keep.len());
        for (ni, &oi) in keep.iter().enumerate() {
            for (nj, &oj) in keep.iter().enumerate() {
                out.set(ni, nj, self.get(oi, oj));
            }
        }
        out
    }
}

/// Longest-path depth of every vertex (sources have depth 1).
pub fn compute_depths(adjacency: &Adjacency) -> Result<Vec<usize>, GraphError> {
    let n = adjacency.len();
    let mut indegree: Vec<usize> = (0..n).map(|j| adjacency.parents(j).len()).collect();
    let mut depth = vec![1usize; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = queue.pop_front() {
        seen += 1;
        for c in adjacency.children(v) {
            depth[c] = depth[c].max(depth[v] + 1);
            indegree[c] -= 1;
            if indegree[c] == 0 {
                queue.push_back(c);
            }
        }
    }
    if seen != n {
        return Err(GraphError::Cycle);
    }
    Ok(depth)
}

/// Canonical order of an arbitrary zero-diagonal adjacency: ascending depth,
/// ties by original index. Returns the permutation (new → old).
pub fn topological_order(adjacency: &Adjacency) -> Result<Vec<usize>, GraphError> {
    if !adjacency.has_zero_diagonal() {
        return Err(GraphError::Cycle);
    }
    let depth = compute_depths(adjacency)?;
    let mut order: Vec<usize> = (0..adjacency.len()).collect();
    order.sort_by_key(|&v| (depth[v], v));
    Ok(order)
}

/// Probability that an edge joins a vertex at depth `d_src` to one at depth
/// `d_dst`: `p0 · exp(γ · (d_src − d_dst + 1))`.
pub fn connection_probability(d_src: usize, d_dst: usize, p0: f64, gamma: f64) -> Result<f64, GraphError> {
    if d_src >= d_dst {
        return Err(GraphError::Domain(format!("edge from depth {d_src} to depth {d_dst} does not go deeper")));
    }
    if !(p0 > 0.0 && p0 <= 1.0) || !(gamma >= 0.0) {
        return Err(GraphError::Domain(format!("p0 = {p0}, gamma = {gamma} out of range")));
    }
    Ok(p0 * (gamma * (d_src as f64 - d_dst as f64 + 1.0)).exp())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerPartition {
    /// `layers[d - 1]` holds the vertex indices at depth `d`.
    pub layers: Vec<Vec<usize>>,
}

impl LayerPartition {
    pub fn sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Depths (1-based) of the interior layers.
    pub fn interior(&self) -> std::ops::Range<usize> {
        2..self.layers.len().max(2)
    }
}

#[derive(Clone, PartialEq)]
pub struct Graph {
    vertices: Vec<ModelSpec>,
    adjacency: Adjacency,
    depths: Vec<usize>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("vertices", &self.vertices.iter().map(|v| v.kind.id()).collect::<Vec<_>>())
            .field("edges", &self.adjacency.edges())
            .field("depths", &self.depths)
            .finish()
    }
}

impl Graph {
    /// Builds a graph from vertices and an arbitrary zero-diagonal adjacency,
    /// reordering into canonical topological order.
    pub fn new(vertices: Vec<ModelSpec>, adjacency: Adjacency) -> Result<Graph, GraphError> {
        Ok(Graph::with_order(vertices, adjacency)?.0)
    }

    /// Like [`Graph::new`] but also returns the permutation (new → old).
    pub fn with_order(vertices: Vec<ModelSpec>, adjacency: Adjacency) -> Result<(Graph, Vec<usize>), GraphError> {
        if vertices.len() != adjacency.len() {
            return Err(GraphError::InvalidGraph(format!(
                "{} vertices but a {}×{} adjacency",
                vertices.len(),
                adjacency.len(),
                adjacency.len()
            )));
        }
        let order = topological_order(&adjacency)?;
        let adjacency = adjacency.permuted(&order);
        let vertices: Vec<ModelSpec> = order.iter().map(|&o| vertices[o].clone()).collect();
        let depths = compute_depths(&adjacency)?;
        Ok((Graph { vertices, adjacency, depths }, order))
    }

    pub fn from_edges(vertices: Vec<ModelSpec>, edges: &[(usize, usize)]) -> Result<Graph, GraphError> {
        let n = vertices.len();
        if let Some(&(i, j)) = edges.iter().find(|(i, j)| *i >= n || *j >= n) {
            return Err(GraphError::InvalidGraph(format!("edge ({i}, {j}) out of range for {n} vertices")));
        }
        Graph::new(vertices, Adjacency::from_edges(n, edges))
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[ModelSpec] {
        &self.vertices
    }

    pub fn vertex(&self, k: usize) -> &ModelSpec {
        &self.vertices[k]
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn depths(&self) -> &[usize] {
        &self.depths
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency.edges()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.edge_count()
    }

    pub fn parents(&self, k: usize) -> Vec<usize> {
        self.adjacency.parents(k)
    }

    pub fn roles(&self) -> Vec<ModelRole> {
        self.vertices.iter().map(ModelSpec::role).collect()
    }

    /// Number of layers (maximum depth).
    pub fn layer_count(&self) -> usize {
        self.depths.iter().copied().max().unwrap_or(0)
    }

    /// `|V| + |E|`.
    pub fn complexity(&self) -> usize {
        self.len() + self.edge_count()
    }

    /// Groups vertices by depth; fails unless the first and last layers are
    /// singletons.
    pub fn layer_partition(&self) -> Result<LayerPartition, GraphError> {
        let layers = self.layers_unchecked();
        let sizes: Vec<usize> = layers.iter().map(Vec::len).collect();
        if sizes.first() != Some(&1) || sizes.last() != Some(&1) {
            return Err(GraphError::InvalidGraph(format!(
                "input and output layers must be singletons, sizes {sizes:?}"
            )));
        }
        Ok(LayerPartition { layers })
    }

    pub(crate) fn layers_unchecked(&self) -> Vec<Vec<usize>> {
        let mut layers = vec![Vec::new(); self.layer_count()];
        for (v, &d) in self.depths.iter().enumerate() {
            layers[d - 1].push(v);
        }
        layers
    }

    /// Replaces the model on one vertex; the topology is untouched.
    pub fn with_vertex_model(&self, k: usize, spec: ModelSpec) -> Graph {
        let mut g = self.clone();
        g.vertices[k] = spec;
        g
    }

    /// Replaces every vertex model at once (used by hyperparameter tuning).
    pub fn with_models(&self, models: Vec<ModelSpec>) -> Result<Graph, GraphError> {
        if models.len() != self.len() {
            return Err(GraphError::InvalidGraph("model count does not match vertex count".into()));
        }
        let mut g = self.clone();
        g.vertices = models;
        Ok(g)
    }

    pub fn into_parts(self) -> (Vec<ModelSpec>, Adjacency) {
        (self.vertices, self.adjacency)
    }
}

/// Free-function form of [`Graph::complexity`].
pub fn complexity(graph: &Graph) -> usize {
    graph.complexity()
}
