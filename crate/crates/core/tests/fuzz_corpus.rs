//! Replays the checked-in fuzz seeds through the same checks the fuzz
//! targets make, so the corpus stays meaningful on a stable toolchain.

use std::path::PathBuf;

use dagsearch::config::{parse_config, render_config};
use dagsearch::data::{parse_dataset, LabelColumn};
use dagsearch::graph::{from_json, to_json};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

#[test]
fn graph_document_seeds() {
    let mut accepted = Vec::new();
    for (name, bytes) in seeds("graph_document") {
        if let Ok(g) = from_json(std::str::from_utf8(&bytes).unwrap()) {
            assert_eq!(from_json(&to_json(&g)).unwrap(), g, "{name}");
            accepted.push(name);
        }
    }
    assert_eq!(accepted, ["diamond.json", "two_vertex.json"]);
}

#[test]
fn config_seeds() {
    let mut accepted = Vec::new();
    for (name, bytes) in seeds("config") {
        if let Ok(c) = parse_config(std::str::from_utf8(&bytes).unwrap()) {
            assert_eq!(parse_config(&render_config(&c)).unwrap(), c, "{name}");
            accepted.push(name);
        }
    }
    assert_eq!(accepted, ["auto.conf", "full.conf"]);
}

#[test]
fn csv_dataset_seeds() {
    let mut accepted = Vec::new();
    for (name, bytes) in seeds("csv_dataset") {
        if let Ok(loaded) = parse_dataset(bytes.as_slice(), LabelColumn::Last) {
            accepted.push((name, loaded.dataset.len(), loaded.rejected.len()));
        }
    }
    assert_eq!(accepted, [("mixed.csv".to_string(), 3, 1), ("xor.csv".to_string(), 16, 0)]);
}
