use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Adjacency, Graph, GraphError};
use crate::zoo::{ModelKind, ModelRole, ModelSpec, ParamValue};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexDocument {
    pub model_id: String,
    pub role: ModelRole,
    pub hyperparams: BTreeMap<String, ParamValue>,
}

/// On-disk form of a graph. Edges are 1-based `[src, dst]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub vertices: Vec<VertexDocument>,
    pub edges: Vec<[usize; 2]>,
    pub depths: Vec<usize>,
}

impl GraphDocument {
    pub fn from_graph(graph: &Graph) -> Self {
        GraphDocument {
            vertices: graph
                .vertices()
                .iter()
                .map(|s| VertexDocument {
                    model_id: s.kind.id().to_string(),
                    role: s.role(),
                    hyperparams: s.params.clone(),
                })
                .collect(),
            edges: graph.edges().into_iter().map(|(i, j)| [i + 1, j + 1]).collect(),
            depths: graph.depths().to_vec(),
        }
    }

    /// Rebuilds the graph. The document must already be in canonical order
    /// (edges point forward, depths match), so import never relabels.
    pub fn to_graph(&self) -> Result<Graph, GraphError> {
        let bad = |m: String| Err(GraphError::Document(m));
        let n = self.vertices.len();
        if n == 0 {
            return bad("document has no vertices".into());
        }
        let mut specs = Vec::with_capacity(n);
        for (k, v) in self.vertices.iter().enumerate() {
            let Some(kind) = ModelKind::from_id(&v.model_id) else {
                return bad(format!("vertex {}: unknown model id {:?}", k + 1, v.model_id));
            };
            if kind.role() != v.role {
                return bad(format!("vertex {}: {} has role {}, not {}", k + 1, v.model_id, kind.role(), v.role));
            }
            let spec = ModelSpec { kind, params: v.hyperparams.clone() };
            if let Err(e) = spec.check() {
                return bad(format!("vertex {}: {e}", k + 1));
            }
            specs.push(spec);
        }
        let mut adj = Adjacency::new(n);
        for &[s, d] in &self.edges {
            if s == 0 || d == 0 || s > n || d > n {
                return bad(format!("edge [{s}, {d}] out of range 1..={n}"));
            }
            if s >= d {
                return bad(format!("edge [{s}, {d}] does not point forward"));
            }
            if adj.get(s - 1, d - 1) {
                return bad(format!("duplicate edge [{s}, {d}]"));
            }
            adj.set(s - 1, d - 1, true);
        }
        let (graph, order) = Graph::with_order(specs, adj)?;
        if order.iter().enumerate().any(|(i, &o)| i != o) {
            return bad("vertices are not in canonical depth order".into());
        }
        if graph.depths() != self.depths.as_slice() {
            return bad(format!("depths {:?} do not match computed {:?}", self.depths, graph.depths()));
        }
        Ok(graph)
    }
}

pub fn to_json(graph: &Graph) -> String {
    serde_json::to_string_pretty(&GraphDocument::from_graph(graph)).expect("graph document serializes")
}

pub fn from_json(text: &str) -> Result<Graph, GraphError> {
    let doc: GraphDocument = serde_json::from_str(text).map_err(|e| GraphError::Document(e.to_string()))?;
    doc.to_graph()
}

/// Graphviz rendering; vertices are labelled with their model names.
pub fn to_dot(graph: &Graph) -> String {
    let mut out = String::from("digraph architecture {\n  rankdir=LR;\n  node [shape=box];\n");
    for (k, spec) in graph.vertices().iter().enumerate() {
        let _ = writeln!(out, "  v{} [label=\"{}\"];", k + 1, spec.kind.display_name());
    }
    for (i, j) in graph.edges() {
        let _ = writeln!(out, "  v{} -> v{};", i + 1, j + 1);
    }
    out.push_str("}\n");
    out
}
