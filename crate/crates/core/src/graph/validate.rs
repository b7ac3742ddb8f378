use std::fmt;

use serde::{Deserialize, Serialize};

use super::Graph;
use crate::zoo::ModelRole;

/// Structural bounds on generated graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphLimits {
    pub min_vertices: usize,
    pub max_vertices: usize,
    pub min_layers: usize,
    pub max_layers: usize,
    /// Upper bound on the vertex count drawn by the random operator.
    pub random_vertex_cap: usize,
    pub retrial_limit: usize,
    pub max_train_seconds: f64,
}

impl Default for GraphLimits {
    fn default() -> Self {
        GraphLimits {
            min_vertices: 2,
            max_vertices: 12,
            min_layers: 2,
            max_layers: 6,
            random_vertex_cap: 10,
            retrial_limit: 100,
            max_train_seconds: 3600.0,
        }
    }
}

impl GraphLimits {
    pub fn check(&self) -> Result<(), String> {
        if self.min_vertices < 2 || self.min_vertices > self.max_vertices {
            return Err(format!("vertex bounds {}..{} invalid", self.min_vertices, self.max_vertices));
        }
        if self.min_layers < 2 || self.min_layers > self.max_layers {
            return Err(format!("layer bounds {}..{} invalid", self.min_layers, self.max_layers));
        }
        if self.random_vertex_cap < 2 || self.random_vertex_cap > self.max_vertices {
            return Err(format!("random vertex cap {} must lie in 2..={}", self.random_vertex_cap, self.max_vertices));
        }
        if self.retrial_limit == 0 {
            return Err("retrial limit must be positive".into());
        }
        if !(self.max_train_seconds > 0.0) {
            return Err("max training time must be positive".into());
        }
        Ok(())
    }
}

/// Validation rules; `code()` gives the short R1..R7 label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    /// Interior vertices need an incoming and an outgoing edge; the input
    /// needs an outgoing edge and the output an incoming one.
    Degree,
    /// A classifier/regressor may not be the only parent of another
    /// classifier/regressor.
    LoneSupervisedFeed,
    VertexCount,
    LayerCount,
    /// Adjacency strictly upper triangular (acyclic, sorted).
    Ordering,
    /// Input role on vertex 1 only; output vertex is a classifier.
    TerminalRoles,
    /// No edge inside a layer.
    IntraLayerEdge,
}

impl Rule {
    pub fn code(self) -> &'static str {
        match self {
            Rule::Degree => "R1",
            Rule::LoneSupervisedFeed => "R2",
            Rule::VertexCount => "R3",
            Rule::LayerCount => "R4",
            Rule::Ordering => "R5",
            Rule::TerminalRoles => "R6",
            Rule::IntraLayerEdge => "R7",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.rule.code(), self.detail)
    }
}

/// Every rule the graph breaks; an empty list means the graph is valid.
pub fn validate(graph: &Graph, limits: &GraphLimits) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |rule, detail: String| out.push(Violation { rule, detail });
    let k = graph.len();
    let adj = graph.adjacency();
    let roles = graph.roles();

    if k < limits.min_vertices || k > limits.max_vertices {
        push(Rule::VertexCount, format!("{k} vertices outside {}..={}", limits.min_vertices, limits.max_vertices));
    }
    let layers = graph.layer_count();
    if layers < limits.min_layers || layers > limits.max_layers {
        push(Rule::LayerCount, format!("{layers} layers outside {}..={}", limits.min_layers, limits.max_layers));
    }
    if k == 0 {
        return out;
    }

    for v in 0..k {
        let indeg = adj.parents(v).len();
        let outdeg = adj.children(v).len();
        let first = v == 0;
        let last = v == k - 1;
        if first && last {
            continue;
        }
        if first && (outdeg == 0 || indeg > 0) {
            push(Rule::Degree, format!("input vertex {} needs outgoing and no incoming edges", v + 1));
        } else if last && (indeg == 0 || outdeg > 0) {
            push(Rule::Degree, format!("output vertex {} needs incoming and no outgoing edges", v + 1));
        } else if !first && !last && (indeg == 0 || outdeg == 0) {
            push(Rule::Degree, format!("vertex {} has in-degree {indeg}, out-degree {outdeg}", v + 1));
        }
    }

    for v in 0..k {
        let parents = adj.parents(v);
        if roles[v].is_supervised() && parents.len() == 1 && roles[parents[0]].is_supervised() {
            push(
                Rule::LoneSupervisedFeed,
                format!("supervised vertex {} fed only by supervised vertex {}", v + 1, parents[0] + 1),
            );
        }
    }

    if !adj.has_zero_diagonal() || !adj.is_strictly_upper() {
        push(Rule::Ordering, "adjacency is not strictly upper triangular".into());
    }

    if roles[0] != ModelRole::Input {
        push(Rule::TerminalRoles, format!("vertex 1 has role {}, expected input", roles[0]));
    }
    if let Some(v) = roles.iter().skip(1).position(|r| *r == ModelRole::Input) {
        push(Rule::TerminalRoles, format!("vertex {} is a second input", v + 2));
    }
    if roles[k - 1] != ModelRole::Classifier {
        push(Rule::TerminalRoles, format!("output vertex has role {}, expected classifier", roles[k - 1]));
    }

    let depths = graph.depths();
    for (i, j) in adj.edges() {
        if depths[i] == depths[j] {
            push(Rule::IntraLayerEdge, format!("edge {} → {} inside layer {}", i + 1, j + 1, depths[i]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{ModelKind, ModelSpec};

    fn rules(g: &Graph) -> Vec<Rule> {
        validate(g, &GraphLimits::default()).into_iter().map(|v| v.rule).collect()
    }

    fn spec(k: ModelKind) -> ModelSpec {
        ModelSpec::new(k)
    }

    #[test]
    fn stacked_classifier_with_two_inputs_is_valid() {
        // input → scaler → logistic → ridge, with scaler also feeding ridge
        let g = Graph::from_edges(
            vec![
                spec(ModelKind::Input),
                spec(ModelKind::StandardScaler),
                spec(ModelKind::LogisticRegression),
                spec(ModelKind::RidgeClassifier),
            ],
            &[(0, 1), (1, 2), (2, 3), (1, 3)],
        )
        .unwrap();
        assert!(rules(&g).is_empty(), "{:?}", validate(&g, &GraphLimits::default()));
    }

    #[test]
    fn lone_classifier_chain_breaks_r2() {
        let g = Graph::from_edges(
            vec![spec(ModelKind::Input), spec(ModelKind::LogisticRegression), spec(ModelKind::RidgeClassifier)],
            &[(0, 1), (1, 2)],
        )
        .unwrap();
        assert_eq!(rules(&g), vec![Rule::LoneSupervisedFeed]);
    }

    #[test]
    fn dangling_middle_vertex_breaks_r1() {
        let g = Graph::from_edges(
            vec![spec(ModelKind::Input), spec(ModelKind::StandardScaler), spec(ModelKind::GaussianNb)],
            &[(0, 1), (0, 2)],
        )
        .unwrap();
        // the scaler is now a sink in the last layer, after the classifier
        assert!(rules(&g).contains(&Rule::Degree));
    }

    #[test]
    fn thirteen_vertices_break_r3() {
        let mut vs = vec![spec(ModelKind::Input)];
        vs.extend((0..11).map(|_| spec(ModelKind::StandardScaler)));
        vs.push(spec(ModelKind::GaussianNb));
        let edges: Vec<(usize, usize)> = (1..12).flat_map(|m| [(0, m), (m, 12)]).collect();
        let g = Graph::from_edges(vs, &edges).unwrap();
        assert_eq!(rules(&g), vec![Rule::VertexCount]);
    }

    #[test]
    fn non_classifier_output_breaks_r6() {
        let g = Graph::from_edges(vec![spec(ModelKind::Input), spec(ModelKind::RidgeRegressor)], &[(0, 1)]).unwrap();
        assert_eq!(rules(&g), vec![Rule::TerminalRoles]);
    }

    #[test]
    fn limits_check() {
        assert!(GraphLimits::default().check().is_ok());
        let bad = GraphLimits { random_vertex_cap: 13, ..GraphLimits::default() };
        assert!(bad.check().is_err());
        let bad = GraphLimits { retrial_limit: 0, ..GraphLimits::default() };
        assert!(bad.check().is_err());
    }
}
