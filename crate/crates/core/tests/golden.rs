use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dagsearch::graph::{from_json, to_dot, to_json, validate, Graph, GraphLimits};
use dagsearch::ops::{layer_mutation, random_op, with_retrials, EdgeSampling};
use dagsearch::zoo::{default_model_set, ModelKind, ModelSpec};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Set `BLESS=1` to rewrite the expected files after an intended change.
fn check(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} drifted; rerun with BLESS=1 if intended");
}

#[test]
fn random_graph_for_seed_42() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let g = random_op(&GraphLimits::default(), &default_model_set(), &EdgeSampling::default(), &mut rng).unwrap();
    let json = to_json(&g);
    check("random_seed42.json", &json);
    check("random_seed42.dot", &to_dot(&g));
    assert_eq!(from_json(&json).unwrap(), g);
}

#[test]
fn layer_inserted_into_two_vertex_graph() {
    let g = Graph::from_edges(vec![ModelSpec::new(ModelKind::Input), ModelSpec::new(ModelKind::GaussianNb)], &[(0, 1)])
        .unwrap();
    let limits = GraphLimits::default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let out = with_retrials(limits.retrial_limit, &limits, |_| {
        layer_mutation(&g, &default_model_set(), &EdgeSampling::default(), &mut rng)
    });
    let attempts = out.attempts();
    let child = out.graph().expect("insertion validates within the retry limit");
    assert_eq!(child.layer_count(), 3);
    assert!(validate(&child, &limits).is_empty());
    check("insert_seed42.json", &format!("{{\"attempts\": {attempts}, \"graph\": {}}}\n", to_json(&child)));
}
