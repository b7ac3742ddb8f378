//! Unit-cube encoding of a graph's joint hyperparameter space.

use crate::graph::Graph;
use crate::zoo::{ParamDomain, ParamValue, Scale};

#[derive(Debug, Clone, PartialEq)]
pub struct Dimension {
    pub vertex: usize,
    pub name: &'static str,
    pub domain: ParamDomain,
    /// First unit-cube coordinate used by this parameter.
    pub offset: usize,
}

/// Every tunable parameter of a graph, in vertex order and then in the
/// order the model declares them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchSpace {
    pub params: Vec<Dimension>,
    dims: usize,
}

/// One decoded parameter value, addressed by vertex index and name.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub vertex: usize,
    pub name: &'static str,
    pub value: ParamValue,
}

impl SearchSpace {
    pub fn of(graph: &Graph) -> SearchSpace {
        let mut params = Vec::new();
        let mut offset = 0;
        for (v, spec) in graph.vertices().iter().enumerate() {
            for def in spec.kind.param_space().params {
                params.push(Dimension { vertex: v, name: def.name, domain: def.domain, offset });
                offset += def.domain.dimensions();
            }
        }
        SearchSpace { params, dims: offset }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.dims == 0
    }

    /// Unit-cube coordinates of the graph's current assignment.
    pub fn encode(&self, graph: &Graph) -> Vec<f64> {
        let mut u = vec![0.0; self.dims];
        for d in &self.params {
            let value = &graph.vertex(d.vertex).params[d.name];
            encode_value(&d.domain, value, &mut u[d.offset..d.offset + d.domain.dimensions()]);
        }
        u
    }

    pub fn decode(&self, u: &[f64]) -> Vec<Assignment> {
        assert_eq!(u.len(), self.dims, "unit vector has the wrong dimension");
        self.params
            .iter()
            .map(|d| Assignment {
                vertex: d.vertex,
                name: d.name,
                value: decode_value(&d.domain, &u[d.offset..d.offset + d.domain.dimensions()]),
            })
            .collect()
    }

    /// A copy of `graph` carrying the decoded assignment.
    pub fn apply(&self, graph: &Graph, u: &[f64]) -> Graph {
        let mut models = graph.vertices().to_vec();
        for a in self.decode(u) {
            models[a.vertex].params.insert(a.name.to_string(), a.value);
        }
        graph.with_models(models).expect("same vertex count")
    }
}

fn encode_value(domain: &ParamDomain, value: &ParamValue, out: &mut [f64]) {
    match (*domain, value) {
        (ParamDomain::Continuous { lo, hi, scale: Scale::Linear }, ParamValue::Real(v)) => {
            out[0] = ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
        }
        (ParamDomain::Continuous { lo, hi, scale: Scale::Log }, ParamValue::Real(v)) => {
            out[0] = ((v.ln() - lo.ln()) / (hi.ln() - lo.ln())).clamp(0.0, 1.0)
        }
        (ParamDomain::Integer { lo, hi }, ParamValue::Int(v)) => {
            out[0] = if hi > lo { ((v - lo) as f64 / (hi - lo) as f64).clamp(0.0, 1.0) } else { 0.5 }
        }
        (ParamDomain::Categorical { options }, ParamValue::Cat(v)) => {
            out.fill(0.0);
            if let Some(i) = options.iter().position(|o| o == v) {
                out[i] = 1.0;
            }
        }
        _ => out.fill(0.5),
    }
}

fn decode_value(domain: &ParamDomain, u: &[f64]) -> ParamValue {
    match *domain {
        ParamDomain::Continuous { lo, hi, scale: Scale::Linear } => {
            ParamValue::Real((lo + u[0] * (hi - lo)).clamp(lo, hi))
        }
        ParamDomain::Continuous { lo, hi, scale: Scale::Log } => {
            ParamValue::Real((lo.ln() + u[0] * (hi.ln() - lo.ln())).exp().clamp(lo, hi))
        }
        ParamDomain::Integer { lo, hi } => {
            ParamValue::Int(((lo as f64 + u[0] * (hi - lo) as f64).round() as i64).clamp(lo, hi))
        }
        ParamDomain::Categorical { options } => {
            let mut best = 0;
            for (i, &x) in u.iter().enumerate() {
                if x > u[best] {
                    best = i;
                }
            }
            ParamValue::Cat(options[best].to_string())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{ModelKind, ModelSpec};

    fn graph(models: Vec<ModelSpec>) -> Graph {
        let n = models.len();
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Graph::from_edges(models, &edges).unwrap()
    }

    #[test]
    fn ridge_and_knn_give_two_dimensions() {
        let g = graph(vec![
            ModelSpec::new(ModelKind::Input),
            ModelSpec::new(ModelKind::RidgeRegressor),
            ModelSpec::new(ModelKind::KnnClassifier),
        ]);
        let s = SearchSpace::of(&g);
        assert_eq!(s.dims(), 2);
        let lambda = s.decode(&[0.5, 0.0])[0].value.clone();
        let ParamValue::Real(v) = lambda else { panic!("expected a real") };
        assert!((v - 0.1).abs() < 1e-12);
    }

    #[test]
    fn parameterless_graph_has_empty_space() {
        let g = graph(vec![
            ModelSpec::new(ModelKind::Input),
            ModelSpec::new(ModelKind::StandardScaler),
            ModelSpec::new(ModelKind::GaussianNb),
        ]);
        assert!(SearchSpace::of(&g).is_empty());
    }

    #[test]
    fn categorical_one_hot() {
        let g = graph(vec![
            ModelSpec::new(ModelKind::Input),
            ModelSpec::new(ModelKind::DecisionTree).with_param("criterion", ParamValue::Cat("entropy".into())),
        ]);
        let s = SearchSpace::of(&g);
        assert_eq!(s.dims(), 4);
        let u = s.encode(&g);
        assert_eq!(&u[2..], &[0.0, 1.0]);
        assert_eq!(s.apply(&g, &u), g);
        let flipped = s.apply(&g, &[u[0], u[1], 0.7, 0.2]);
        assert_eq!(flipped.vertex(1).params["criterion"], ParamValue::Cat("gini".into()));
    }
}
