//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional and falls back to the [`SearchConfig`] default; unknown or
//! repeated keys are errors.
//!
//! ```text
//! population_budget = 120
//! generations = 10
//! mix_random = 0.3
//! mix_heredity = 0.4
//! mix_mutation = 0.3
//! models = standard_scaler, pca, logistic_regression, decision_tree
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::search::SearchConfig;
use crate::zoo::{ModelKind, ModelSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Every recognised key, in the order `render_config` writes them.
pub const KEYS: &[&str] = &[
    "population_budget",
    "generations",
    "mix_random",
    "mix_heredity",
    "mix_mutation",
    "keep_best_fraction",
    "subgroup_size",
    "p0",
    "gamma",
    "rho",
    "alpha",
    "min_vertices",
    "max_vertices",
    "min_layers",
    "max_layers",
    "random_vertex_cap",
    "retrial_limit",
    "max_train_seconds",
    "folds",
    "seed",
    "hpo_trials",
    "hpo_top",
    "hpo_candidates",
    "workers",
    "max_wall_seconds",
    "split_ratio",
    "models",
];

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| ConfigError::Syntax { line, message: format!("{key}: {e}") })
}

fn optional<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    if raw == "auto" || raw == "none" {
        Ok(None)
    } else {
        value(line, key, raw).map(Some)
    }
}

fn models(line: usize, raw: &str) -> Result<Vec<ModelSpec>, ConfigError> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|id| {
            ModelKind::from_id(id)
                .map(ModelKind::default_spec)
                .ok_or_else(|| ConfigError::Syntax { line, message: format!("models: unknown model id {id:?}") })
        })
        .collect()
}

/// Parses the text into a checked configuration.
pub fn parse_config(text: &str) -> Result<SearchConfig, ConfigError> {
    let mut c = SearchConfig::default();
    let mut seen = BTreeSet::new();
    for (n, raw_line) in text.lines().enumerate() {
        let line = n + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, raw)) = trimmed.split_once('=') else {
            return Err(ConfigError::Syntax { line, message: format!("expected key = value, got {trimmed:?}") });
        };
        let (key, raw) = (key.trim(), raw.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigError::Syntax { line, message: format!("unknown key {key:?}") });
        }
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::Syntax { line, message: format!("key {key:?} given twice") });
        }
        match key {
            "population_budget" => c.population_budget = value(line, key, raw)?,
            "generations" => c.generations = value(line, key, raw)?,
            "mix_random" => c.mix.random = value(line, key, raw)?,
            "mix_heredity" => c.mix.heredity = value(line, key, raw)?,
            "mix_mutation" => c.mix.mutation = value(line, key, raw)?,
            "keep_best_fraction" => c.keep_best_fraction = value(line, key, raw)?,
            "subgroup_size" => c.subgroup_size = optional(line, key, raw)?,
            "p0" => c.sampling.p0 = value(line, key, raw)?,
            "gamma" => c.sampling.gamma = value(line, key, raw)?,
            "rho" => c.sampling.rho = value(line, key, raw)?,
            "alpha" => c.alpha = value(line, key, raw)?,
            "min_vertices" => c.limits.min_vertices = value(line, key, raw)?,
            "max_vertices" => c.limits.max_vertices = value(line, key, raw)?,
            "min_layers" => c.limits.min_layers = value(line, key, raw)?,
            "max_layers" => c.limits.max_layers = value(line, key, raw)?,
            "random_vertex_cap" => c.limits.random_vertex_cap = value(line, key, raw)?,
            "retrial_limit" => c.limits.retrial_limit = value(line, key, raw)?,
            "max_train_seconds" => c.limits.max_train_seconds = value(line, key, raw)?,
            "folds" => c.folds = value(line, key, raw)?,
            "seed" => c.seed = value(line, key, raw)?,
            "hpo_trials" => c.hpo_trials = value(line, key, raw)?,
            "hpo_top" => c.hpo_top = value(line, key, raw)?,
            "hpo_candidates" => c.hpo_candidates = value(line, key, raw)?,
            "workers" => c.workers = optional(line, key, raw)?.unwrap_or(0),
            "max_wall_seconds" => c.max_wall_seconds = optional(line, key, raw)?,
            "split_ratio" => c.split_ratio = value(line, key, raw)?,
            "models" => c.model_set = models(line, raw)?,
            _ => unreachable!("key list and match arms agree"),
        }
    }
    c.check().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(c)
}

pub fn load_config(path: &Path) -> Result<SearchConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_config(&text)
}

/// Writes the configuration back in the same format; `parse_config` of the
/// result reproduces it.
pub fn render_config(c: &SearchConfig) -> String {
    let opt = |v: Option<String>| v.unwrap_or_else(|| "auto".into());
    let pairs: Vec<(&str, String)> = vec![
        ("population_budget", c.population_budget.to_string()),
        ("generations", c.generations.to_string()),
        ("mix_random", c.mix.random.to_string()),
        ("mix_heredity", c.mix.heredity.to_string()),
        ("mix_mutation", c.mix.mutation.to_string()),
        ("keep_best_fraction", c.keep_best_fraction.to_string()),
        ("subgroup_size", opt(c.subgroup_size.map(|v| v.to_string()))),
        ("p0", c.sampling.p0.to_string()),
        ("gamma", c.sampling.gamma.to_string()),
        ("rho", c.sampling.rho.to_string()),
        ("alpha", c.alpha.to_string()),
        ("min_vertices", c.limits.min_vertices.to_string()),
        ("max_vertices", c.limits.max_vertices.to_string()),
        ("min_layers", c.limits.min_layers.to_string()),
        ("max_layers", c.limits.max_layers.to_string()),
        ("random_vertex_cap", c.limits.random_vertex_cap.to_string()),
        ("retrial_limit", c.limits.retrial_limit.to_string()),
        ("max_train_seconds", c.limits.max_train_seconds.to_string()),
        ("folds", c.folds.to_string()),
        ("seed", c.seed.to_string()),
        ("hpo_trials", c.hpo_trials.to_string()),
        ("hpo_top", c.hpo_top.to_string()),
        ("hpo_candidates", c.hpo_candidates.to_string()),
        ("workers", if c.workers == 0 { "auto".into() } else { c.workers.to_string() }),
        ("max_wall_seconds", opt(c.max_wall_seconds.map(|v| v.to_string()))),
        ("split_ratio", c.split_ratio.to_string()),
        ("models", c.model_set.iter().map(|m| m.kind.id()).collect::<Vec<_>>().join(", ")),
    ];
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}
