//! Run artifacts: telemetry tables, the exported winner and the manifest.
//!
//! `telemetry.csv` and `hpo_trials.csv` depend only on the configuration
//! and the data, so they are byte-identical across repeated runs and across
//! evaluator counts. Wall-clock measurements go to `timings.csv`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::render_config;
use crate::graph::{to_dot, to_json};
use crate::hyperopt::TunedIndividual;
use crate::pipeline::Dataset;
use crate::run::RunOutcome;
use crate::search::{SearchConfig, SearchResult, Status};

/// One telemetry line; dropped slots have no graph and leave the size
/// columns empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub generation: usize,
    pub id: usize,
    pub provenance: String,
    pub status: String,
    pub loss: f64,
    pub balanced_accuracy: Option<f64>,
    pub fitness: f64,
    pub n_vertices: Option<usize>,
    pub n_edges: Option<usize>,
    pub parents: String,
    pub attempts: usize,
    pub carried: bool,
}

fn join_ids(ids: &[usize]) -> String {
    ids.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

pub fn telemetry_rows(result: &SearchResult) -> Vec<TelemetryRow> {
    let mut rows: Vec<TelemetryRow> = result
        .individuals
        .iter()
        .map(|i| TelemetryRow {
            generation: i.generation,
            id: i.id,
            provenance: i.provenance.as_str().into(),
            status: i.status.as_str().into(),
            loss: i.loss,
            balanced_accuracy: i.balanced_accuracy.is_finite().then_some(i.balanced_accuracy),
            fitness: i.fitness,
            n_vertices: Some(i.graph.len()),
            n_edges: Some(i.graph.edge_count()),
            parents: join_ids(&i.parents),
            attempts: i.attempts,
            carried: i.carried,
        })
        .collect();
    rows.extend(result.dropped_slots.iter().map(|d| TelemetryRow {
        generation: d.generation,
        id: d.id,
        provenance: d.provenance.as_str().into(),
        status: Status::DroppedInvalid.as_str().into(),
        loss: f64::INFINITY,
        balanced_accuracy: None,
        fitness: f64::INFINITY,
        n_vertices: None,
        n_edges: None,
        parents: join_ids(&d.parents),
        attempts: d.attempts,
        carried: false,
    }));
    rows.sort_by_key(|r| r.id);
    rows
}

fn to_csv<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
}

pub fn telemetry_csv(result: &SearchResult) -> String {
    to_csv(&telemetry_rows(result))
}

pub fn parse_telemetry(text: &str) -> Result<Vec<TelemetryRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub id: usize,
    pub wall_time_s: f64,
}

pub fn timings_csv(result: &SearchResult) -> String {
    let rows: Vec<TimingRow> = result
        .individuals
        .iter()
        .filter(|i| !i.carried)
        .map(|i| TimingRow { id: i.id, wall_time_s: i.wall_time })
        .collect();
    to_csv(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoRow {
    pub rank: usize,
    pub individual: usize,
    pub trial: usize,
    pub params: String,
    pub loss: f64,
    pub failed: bool,
}

pub fn hpo_csv(tuned: &[TunedIndividual]) -> String {
    let rows: Vec<HpoRow> = tuned
        .iter()
        .enumerate()
        .flat_map(|(rank, t)| {
            t.trials.iter().map(move |tr| HpoRow {
                rank: rank + 1,
                individual: t.individual.id,
                trial: tr.index,
                params: tr.describe(),
                loss: tr.loss,
                failed: tr.failed,
            })
        })
        .collect();
    to_csv(&rows)
}

pub fn report_text(outcome: &RunOutcome) -> String {
    let w = &outcome.winner;
    let g = &w.graph;
    let mut out = String::new();
    let _ = writeln!(out, "Best architecture");
    let _ = writeln!(out, "=================");
    let _ = writeln!(out, "test balanced accuracy: {:.6}", outcome.test_balanced_accuracy);
    let _ = writeln!(out, "fitness: {:.6}", w.fitness);
    let _ = writeln!(out, "cross-validated loss: {:.6}", w.loss);
    let _ = writeln!(
        out,
        "complexity: {} ({} vertices, {} edges, {} layers)",
        g.complexity(),
        g.len(),
        g.edge_count(),
        g.layer_count()
    );
    let _ = writeln!(out, "origin: individual {} ({}, generation {})", w.id, w.provenance, w.generation);
    let _ = writeln!(out, "train rows: {}, test rows: {}", outcome.train.len(), outcome.test.len());
    let _ = writeln!(out);
    let _ = writeln!(out, "Vertices");
    for (k, spec) in g.vertices().iter().enumerate() {
        let parents: Vec<String> = g.parents(k).iter().map(|p| (p + 1).to_string()).collect();
        let _ = writeln!(
            out,
            "  {:>2}. {:<22} depth {}  inputs [{}]  {}",
            k + 1,
            spec.kind.display_name(),
            g.depths()[k],
            parents.join(", "),
            spec.describe()
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Tuning");
    for (rank, t) in outcome.tuned.iter().enumerate() {
        let _ = writeln!(
            out,
            "  #{} individual {}: default loss {:.6} -> tuned loss {:.6} over {} trials",
            rank + 1,
            t.individual.id,
            t.default_loss,
            t.tuned_loss,
            t.trials.len().saturating_sub(1)
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Search");
    let _ = writeln!(out, "  fitness evaluations: {}", outcome.search.evaluations);
    for s in &outcome.search.generations {
        let _ = writeln!(
            out,
            "  generation {:>2}: best {:.6}  evaluated {}  dropped {}  carried {}",
            s.generation, s.best_fitness, s.evaluated, s.dropped, s.carried
        );
    }
    out
}

/// Row/column counts, class histogram and a SHA-256 of the raw file bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub rows: usize,
    pub columns: usize,
    pub class_histogram: BTreeMap<String, usize>,
    pub sha256: String,
}

impl DatasetFingerprint {
    pub fn new(dataset: &Dataset, raw: &[u8]) -> Self {
        DatasetFingerprint {
            rows: dataset.len(),
            columns: dataset.n_features(),
            class_histogram: dataset.class_names.iter().cloned().zip(dataset.class_counts()).collect(),
            sha256: hex::encode(Sha256::digest(raw)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: BTreeMap<String, String>,
    pub dataset: DatasetFingerprint,
    pub dataset_path: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub test_balanced_accuracy: f64,
    pub best_fitness: f64,
    pub artifacts: Vec<String>,
}

pub const TELEMETRY: &str = "telemetry.csv";
pub const TIMINGS: &str = "timings.csv";
pub const HPO_TRIALS: &str = "hpo_trials.csv";
pub const BEST_GRAPH: &str = "best_graph.json";
pub const BEST_DOT: &str = "best_graph.dot";
pub const REPORT: &str = "report.txt";
pub const CONFIG: &str = "config.txt";
pub const MANIFEST: &str = "manifest.json";

pub fn config_snapshot(config: &SearchConfig) -> BTreeMap<String, String> {
    render_config(config)
        .lines()
        .filter_map(|l| l.split_once(" = ").map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}

/// Writes every artifact of a finished run into `dir` and returns the
/// manifest that was written last.
pub fn write_run(
    dir: &Path,
    config: &SearchConfig,
    outcome: &RunOutcome,
    dataset: DatasetFingerprint,
    dataset_path: &str,
    started_unix: f64,
    finished_unix: f64,
) -> io::Result<RunManifest> {
    std::fs::create_dir_all(dir)?;
    let files: Vec<(&str, String)> = vec![
        (TELEMETRY, telemetry_csv(&outcome.search)),
        (TIMINGS, timings_csv(&outcome.search)),
        (HPO_TRIALS, hpo_csv(&outcome.tuned)),
        (BEST_GRAPH, to_json(&outcome.winner.graph)),
        (BEST_DOT, to_dot(&outcome.winner.graph)),
        (REPORT, report_text(outcome)),
        (CONFIG, render_config(config)),
    ];
    let mut artifacts = Vec::new();
    for (name, body) in files {
        std::fs::write(dir.join(name), body)?;
        artifacts.push(name.to_string());
    }
    let manifest = RunManifest {
        config: config_snapshot(config),
        dataset,
        dataset_path: dataset_path.to_string(),
        started_unix,
        finished_unix,
        test_balanced_accuracy: outcome.test_balanced_accuracy,
        best_fitness: outcome.winner.fitness,
        artifacts,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
    std::fs::write(dir.join(MANIFEST), text)?;
    Ok(manifest)
}

pub fn artifact_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
