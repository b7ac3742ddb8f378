//! Evolutionary search for directed-acyclic compositions of small
//! machine-learning models.
//!
//! A candidate is a [`graph::Graph`] whose first vertex passes the raw
//! features through and whose last vertex is a classifier. Every other
//! vertex applies a model from the [`zoo`] to the column-wise union of its
//! parents' outputs. [`search::run_search`] evolves a population of such
//! graphs with the operators in [`ops`], scoring each by cross-validated
//! balanced accuracy plus a complexity penalty, and [`hyperopt`] tunes the
//! finalists with a Gaussian-process surrogate.
//!
//! ```no_run
//! use dagsearch::data::{generate, SyntheticKind};
//! use dagsearch::run::run_pipeline;
//! use dagsearch::search::SearchConfig;
//!
//! let data = generate(SyntheticKind::Xor, 400, 1);
//! let config = SearchConfig { population_budget: 60, generations: 5, ..SearchConfig::default() };
//! let outcome = run_pipeline(&data, &config).unwrap();
//! println!("{}", outcome.test_balanced_accuracy);
//! ```

pub mod config;
pub mod data;
pub mod graph;
pub mod hyperopt;
pub mod ops;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod run;
pub mod search;
pub mod zoo;
