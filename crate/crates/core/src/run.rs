//! End-to-end run: stratified split, search on the training part, tuning
//! of the finalists, retraining of the winner and a single held-out score.

use thiserror::Error;

use crate::hyperopt::{finalize_top5, TunedIndividual};
use crate::pipeline::{
    balanced_accuracy, split_train_test, train_composite, Dataset, EvalContext, PipelineError, TrainedComposite,
};
use crate::rng::{Purpose, RngStream};
use crate::search::{run_search, Individual, SearchConfig, SearchError, SearchResult};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot split dataset: {0}")]
    Split(PipelineError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("final model failed: {0}")]
    Final(PipelineError),
}

#[derive(Debug)]
pub struct RunOutcome {
    pub train: Dataset,
    pub test: Dataset,
    pub search: SearchResult,
    /// Tuned finalists, best first.
    pub tuned: Vec<TunedIndividual>,
    pub winner: Individual,
    pub composite: TrainedComposite,
    pub test_predictions: Vec<usize>,
    pub test_balanced_accuracy: f64,
}

pub fn run_pipeline(dataset: &Dataset, config: &SearchConfig) -> Result<RunOutcome, RunError> {
    config.check()?;
    let mut split_rng = RngStream::new(config.seed, Purpose::Split, 0, 0).rng();
    let (train, test) = split_train_test(dataset, config.split_ratio, &mut split_rng).map_err(RunError::Split)?;
    log::info!("split {} rows into {} train / {} test", dataset.len(), train.len(), test.len());

    let search = run_search(&train, config)?;
    let finalists = search.final_population();
    let tuned = finalize_top5(&finalists, &train, config);
    let winner = tuned.first().map_or_else(|| search.best.clone(), |t| t.individual.clone());
    log::info!("winner: fitness {:.4}, complexity {}", winner.fitness, winner.graph.complexity());

    let ctx =
        EvalContext { seed: RngStream::new(config.seed, Purpose::Evaluation, 0, 0).derive_seed(), deadline: None };
    let composite = train_composite(&winner.graph, &train.features, &train.labels, train.n_classes(), &ctx)
        .map_err(RunError::Final)?;
    let test_predictions = composite.predict(&test.features).map_err(RunError::Final)?;
    let test_balanced_accuracy = balanced_accuracy(&test.labels, &test_predictions).map_err(RunError::Final)?;
    log::info!("held-out balanced accuracy {test_balanced_accuracy:.4}");
    Ok(RunOutcome { train, test, search, tuned, winner, composite, test_predictions, test_balanced_accuracy })
}
