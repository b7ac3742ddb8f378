//! Compiles a graph into a composite model, trains it vertex by vertex in
//! topological order and scores it.
//!
//! Vertex 1 emits the raw features. Every other vertex consumes the
//! column-wise union of its parents' outputs (ascending parent index) and
//! is fitted on the in-sample outputs of its parents:
//!
//! * classifiers fit the class labels and emit one probability column per class,
//! * regressors fit the class index as a real number (squared error),
//! * unsupervised models and preprocessors ignore the labels.
//!
//! The composite's prediction is the arg-max of the output classifier's
//! probabilities, ties going to the lowest class index.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::Graph;
use crate::zoo::{feature_union, fit_estimator, Estimator, FitContext, ModelError, ModelRole, Supervision};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("training failure: {0}")]
    TrainingFailure(String),
    #[error("time budget exceeded")]
    TimeoutExceeded,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty input")]
    EmptyInput,
    #[error("class {0:?} has fewer than two members")]
    ClassTooSmall(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid dataset: {0}")]
    Dataset(String),
}

impl From<ModelError> for PipelineError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Timeout => PipelineError::TimeoutExceeded,
            ModelError::ShapeMismatch(m) => PipelineError::ShapeMismatch(m),
            other => PipelineError::TrainingFailure(other.to_string()),
        }
    }
}

/// Feature matrix with integer class labels in `0..class_names.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Dataset, PipelineError> {
        if features.nrows() != labels.len() {
            return Err(PipelineError::Dataset(format!("{} rows but {} labels", features.nrows(), labels.len())));
        }
        if feature_names.len() != features.ncols() {
            return Err(PipelineError::Dataset("feature name count does not match columns".into()));
        }
        if class_names.len() < 2 {
            return Err(PipelineError::Dataset("at least two classes are required".into()));
        }
        if labels.iter().any(|&c| c >= class_names.len()) {
            return Err(PipelineError::Dataset("label outside class range".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(PipelineError::Dataset("features must be finite".into()));
        }
        Ok(Dataset { features, labels, class_names, feature_names })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes()];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Rows at `idx`, in that order; class names are kept.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalContext {
    pub seed: u64,
    pub deadline: Option<Instant>,
}

impl EvalContext {
    pub fn new(seed: u64, budget: Option<Duration>) -> Self {
        EvalContext { seed, deadline: budget.map(|b| Instant::now() + b) }
    }

    fn vertex(&self, k: usize) -> FitContext {
        FitContext { seed: self.seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15), deadline: self.deadline }
    }

    fn check(&self) -> Result<(), PipelineError> {
        match self.deadline {
            Some(d) if Instant::now() > d => Err(PipelineError::TimeoutExceeded),
            _ => Ok(()),
        }
    }
}

/// A graph whose vertices hold fitted estimators.
#[derive(Debug)]
pub struct TrainedComposite {
    graph: Graph,
    estimators: Vec<Box<dyn Estimator>>,
    /// Parent indices of each vertex, ascending.
    layouts: Vec<Vec<usize>>,
    /// Observed input width of each vertex at training time.
    input_widths: Vec<usize>,
    n_classes: usize,
}

fn check_finite(m: &DMatrix<f64>, k: usize) -> Result<(), PipelineError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(PipelineError::TrainingFailure(format!("vertex {} emitted non-finite values", k + 1)))
    }
}

fn union_of(outputs: &[Option<DMatrix<f64>>], parents: &[usize]) -> Result<DMatrix<f64>, PipelineError> {
    let inputs: Vec<&DMatrix<f64>> =
        parents.iter().map(|&p| outputs[p].as_ref().expect("parents precede children")).collect();
    Ok(feature_union(&inputs)?)
}

/// Fits every vertex of `graph` on `(x, y)` in topological order.
pub fn train_composite(
    graph: &Graph,
    x: &DMatrix<f64>,
    y: &[usize],
    n_classes: usize,
    ctx: &EvalContext,
) -> Result<TrainedComposite, PipelineError> {
    let k = graph.len();
    if k == 0 || graph.vertex(0).role() != ModelRole::Input {
        return Err(PipelineError::InvalidGraph("first vertex must be the input".into()));
    }
    if graph.vertex(k - 1).role() != ModelRole::Classifier {
        return Err(PipelineError::InvalidGraph("output vertex must be a classifier".into()));
    }
    if x.nrows() == 0 {
        return Err(PipelineError::EmptyInput);
    }
    let sup = Supervision { labels: y, n_classes };
    let mut outputs: Vec<Option<DMatrix<f64>>> = vec![None; k];
    let mut estimators = Vec::with_capacity(k);
    let mut layouts = Vec::with_capacity(k);
    let mut input_widths = Vec::with_capacity(k);
    for v in 0..k {
        ctx.check()?;
        let parents = graph.parents(v);
        let input = if v == 0 {
            x.clone()
        } else if parents.is_empty() {
            return Err(PipelineError::InvalidGraph(format!("vertex {} has no inputs", v + 1)));
        } else {
            union_of(&outputs, &parents)?
        };
        let spec = graph.vertex(v);
        let target = spec.role().is_supervised().then_some(&sup);
        let est = fit_estimator(spec, &input, target, &ctx.vertex(v))?;
        let out = est.apply(&input)?;
        check_finite(&out, v)?;
        input_widths.push(input.ncols());
        outputs[v] = Some(out);
        estimators.push(est);
        layouts.push(parents);
        // outputs no longer needed by any later vertex could be dropped here
    }
    Ok(TrainedComposite { graph: graph.clone(), estimators, layouts, input_widths, n_classes })
}

impl TrainedComposite {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn input_widths(&self) -> &[usize] {
        &self.input_widths
    }

    pub fn layout(&self, v: usize) -> &[usize] {
        &self.layouts[v]
    }

    /// Forward pass returning every vertex's output.
    pub fn vertex_outputs(&self, x: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>, PipelineError> {
        if x.ncols() != self.input_widths[0] {
            return Err(PipelineError::ShapeMismatch(format!(
                "expected {} feature columns, got {}",
                self.input_widths[0],
                x.ncols()
            )));
        }
        let mut outputs: Vec<Option<DMatrix<f64>>> = vec![None; self.estimators.len()];
        for (v, est) in self.estimators.iter().enumerate() {
            let input = if v == 0 { x.clone() } else { union_of(&outputs, &self.layouts[v])? };
            if input.ncols() != self.input_widths[v] {
                return Err(PipelineError::ShapeMismatch(format!(
                    "vertex {} expected width {}, got {}",
                    v + 1,
                    self.input_widths[v],
                    input.ncols()
                )));
            }
            outputs[v] = Some(est.apply(&input)?);
        }
        Ok(outputs.into_iter().map(|o| o.expect("every vertex evaluated")).collect())
    }

    /// Class probabilities from the output vertex.
    pub fn predict_proba(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, PipelineError> {
        if x.nrows() == 0 {
            return Ok(DMatrix::zeros(0, self.n_classes));
        }
        Ok(self.vertex_outputs(x)?.pop().expect("non-empty graph"))
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<usize>, PipelineError> {
        let p = self.predict_proba(x)?;
        Ok(p.row_iter().map(|r| argmax(r.iter().copied())).collect())
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Mean per-class recall over the classes present in `y_true`.
pub fn balanced_accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64, PipelineError> {
    if y_true.len() != y_pred.len() {
        return Err(PipelineError::ShapeMismatch(format!("{} truths vs {} predictions", y_true.len(), y_pred.len())));
    }
    if y_true.is_empty() {
        return Err(PipelineError::EmptyInput);
    }
    let mut per_class: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        let e = per_class.entry(t).or_default();
        e.1 += 1;
        if t == p {
            e.0 += 1;
        }
    }
    let sum: f64 = per_class.values().map(|&(hit, total)| hit as f64 / total as f64).sum();
    Ok(sum / per_class.len() as f64)
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin,
/// continuing the deal across classes so fold sizes stay balanced.
pub fn stratified_folds<R: Rng + ?Sized>(
    labels: &[usize],
    n_classes: usize,
    folds: usize,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(rng);
        for i in members {
            out[next % folds].push(i);
            next += 1;
        }
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

/// Fold count actually used: reduced to the smallest class size when a
/// class is smaller than `folds`, never below two.
pub fn effective_folds(dataset: &Dataset, folds: usize) -> usize {
    let smallest = dataset.class_counts().into_iter().filter(|&c| c > 0).min().unwrap_or(0);
    folds.min(smallest).max(2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvScore {
    /// `1 − mean balanced accuracy`.
    pub loss: f64,
    pub balanced_accuracy: f64,
    pub folds: usize,
}

/// Stratified k-fold cross-validation of the composite built from `graph`.
pub fn cross_validate(
    graph: &Graph,
    dataset: &Dataset,
    folds: usize,
    budget: Option<Duration>,
    seed: u64,
) -> Result<CvScore, PipelineError> {
    if folds < 2 {
        return Err(PipelineError::Dataset("cross-validation needs at least two folds".into()));
    }
    let k = effective_folds(dataset, folds);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let assignment = stratified_folds(&dataset.labels, dataset.n_classes(), k, &mut rng);
    let ctx = EvalContext::new(seed, budget);
    let mut scores = Vec::with_capacity(k);
    for (f, held) in assignment.iter().enumerate() {
        if held.is_empty() {
            continue;
        }
        let train: Vec<usize> =
            assignment.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, v)| v.iter().copied()).collect();
        let train_set = dataset.subset(&train);
        let test_set = dataset.subset(held);
        let fold_ctx = EvalContext { seed: ctx.seed.wrapping_add(f as u64), deadline: ctx.deadline };
        let model = train_composite(graph, &train_set.features, &train_set.labels, dataset.n_classes(), &fold_ctx)?;
        let pred = model.predict(&test_set.features)?;
        scores.push(balanced_accuracy(&test_set.labels, &pred)?);
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(CvScore { loss: 1.0 - mean, balanced_accuracy: mean, folds: k })
}

/// Shuffled stratified split; each class contributes `round(ratio · n_c)`
/// training rows, clamped so both sides get at least one.
pub fn split_train_test<R: Rng + ?Sized>(
    dataset: &Dataset,
    ratio: f64,
    rng: &mut R,
) -> Result<(Dataset, Dataset), PipelineError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(PipelineError::Dataset(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, &count) in dataset.class_counts().iter().enumerate() {
        if count == 0 {
            continue;
        }
        if count < 2 {
            return Err(PipelineError::ClassTooSmall(dataset.class_names[c].clone()));
        }
        let mut members: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.labels[i] == c).collect();
        members.shuffle(rng);
        let n_train = ((ratio * count as f64).round() as usize).clamp(1, count - 1);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.shuffle(rng);
    test.shuffle(rng);
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{ModelKind, ModelSpec, ParamValue};

    fn spec(k: ModelKind) -> ModelSpec {
        ModelSpec::new(k)
    }

    fn two_clouds(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let x = DMatrix::from_fn(n, 3, |i, _| labels[i] as f64 * 6.0 + rng.gen_range(-1.0..1.0));
        Dataset::new(x, labels, vec!["a".into(), "b".into()], vec!["f0".into(), "f1".into(), "f2".into()]).unwrap()
    }

    #[test]
    fn hand_computed_balanced_accuracy() {
        let y_true = [0, 0, 0, 0, 1, 1, 1, 1];
        let y_pred = [0, 0, 0, 1, 1, 1, 0, 0];
        assert_eq!(balanced_accuracy(&y_true, &y_pred).unwrap(), 0.625);
        assert_eq!(balanced_accuracy(&y_true, &y_true).unwrap(), 1.0);
        assert_eq!(balanced_accuracy(&y_true, &[0; 8]).unwrap(), 0.5);
        assert_eq!(balanced_accuracy(&[], &[]), Err(PipelineError::EmptyInput));
    }

    #[test]
    fn chain_matches_manual_composition() {
        let d = two_clouds(40, 1);
        let g = Graph::from_edges(
            vec![spec(ModelKind::Input), spec(ModelKind::StandardScaler), spec(ModelKind::LogisticRegression)],
            &[(0, 1), (1, 2)],
        )
        .unwrap();
        let model = train_composite(&g, &d.features, &d.labels, 2, &EvalContext::default()).unwrap();

        let ctx = FitContext::default();
        let scaler = fit_estimator(&spec(ModelKind::StandardScaler), &d.features, None, &ctx).unwrap();
        let z = scaler.apply(&d.features).unwrap();
        let sup = Supervision { labels: &d.labels, n_classes: 2 };
        let lr = fit_estimator(&spec(ModelKind::LogisticRegression), &z, Some(&sup), &EvalContext::default().vertex(2))
            .unwrap();
        let manual = lr.apply(&z).unwrap();
        assert_eq!(model.predict_proba(&d.features).unwrap(), manual);
    }

    #[test]
    fn kmeans_feeds_k_columns() {
        let d = two_clouds(30, 2);
        let g = Graph::from_edges(
            vec![
                spec(ModelKind::Input),
                spec(ModelKind::KMeans).with_param("k", ParamValue::Int(4)),
                spec(ModelKind::GaussianNb),
            ],
            &[(0, 1), (1, 2)],
        )
        .unwrap();
        let model = train_composite(&g, &d.features, &d.labels, 2, &EvalContext::default()).unwrap();
        assert_eq!(model.input_widths()[2], 4);
    }

    #[test]
    fn diamond_union_width() {
        let d = two_clouds(30, 3);
        let g = Graph::from_edges(
            vec![
                spec(ModelKind::Input),
                spec(ModelKind::StandardScaler),
                spec(ModelKind::Pca).with_param("n_components", ParamValue::Int(2)),
                spec(ModelKind::GaussianNb),
            ],
            &[(0, 1), (0, 2), (1, 3), (2, 3)],
        )
        .unwrap();
        let model = train_composite(&g, &d.features, &d.labels, 2, &EvalContext::default()).unwrap();
        assert_eq!(model.input_widths()[3], 3 + 2);
        assert_eq!(model.layout(3), &[1, 2]);
    }

    #[test]
    fn predict_edge_cases() {
        let d = two_clouds(20, 4);
        let g = Graph::from_edges(
            vec![spec(ModelKind::Input), spec(ModelKind::DecisionTree).with_param("min_leaf", ParamValue::Int(1))],
            &[(0, 1)],
        )
        .unwrap();
        let model = train_composite(&g, &d.features, &d.labels, 2, &EvalContext::default()).unwrap();
        assert_eq!(model.predict(&d.features).unwrap(), d.labels);
        assert!(model.predict(&DMatrix::zeros(0, 3)).unwrap().is_empty());
        assert!(matches!(model.predict(&DMatrix::zeros(2, 4)), Err(PipelineError::ShapeMismatch(_))));
        assert_eq!(argmax([0.5, 0.5]), 0);
        assert_eq!(argmax([0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn timeout_is_reported() {
        let d = two_clouds(20, 5);
        let g = Graph::from_edges(vec![spec(ModelKind::Input), spec(ModelKind::GaussianNb)], &[(0, 1)]).unwrap();
        let ctx = EvalContext { seed: 0, deadline: Some(Instant::now() - Duration::from_secs(1)) };
        assert_eq!(train_composite(&g, &d.features, &d.labels, 2, &ctx).unwrap_err(), PipelineError::TimeoutExceeded);
    }

    #[test]
    fn separable_data_cv_loss_near_zero() {
        let d = two_clouds(60, 6);
        let g = Graph::from_edges(vec![spec(ModelKind::Input), spec(ModelKind::KnnClassifier)], &[(0, 1)]).unwrap();
        let score = cross_validate(&g, &d, 5, None, 1).unwrap();
        assert!(score.loss <= 0.05);
    }

    #[test]
    fn tiny_data_with_many_folds_runs() {
        let d = two_clouds(4, 7);
        let g = Graph::from_edges(vec![spec(ModelKind::Input), spec(ModelKind::GaussianNb)], &[(0, 1)]).unwrap();
        let score = cross_validate(&g, &d, 4, None, 1).unwrap();
        assert_eq!(score.folds, 2);
        assert!((0.0..=1.0).contains(&score.loss));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = two_clouds(100, 8);
        let (tr, te) = split_train_test(&d, 0.8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!((tr.len(), te.len()), (80, 20));
        let (tr2, _) = split_train_test(&d, 0.8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(tr, tr2);
        let tiny = d.subset(&[0, 1, 3]);
        assert!(matches!(
            split_train_test(&tiny, 0.8, &mut ChaCha8Rng::seed_from_u64(1)),
            Err(PipelineError::ClassTooSmall(_))
        ));
    }

    #[test]
    fn sorted_input_split_keeps_every_class() {
        let mut idx: Vec<usize> = (0..30).collect();
        let d = two_clouds(30, 9);
        idx.sort_by_key(|&i| d.labels[i]);
        let sorted = d.subset(&idx);
        let (tr, te) = split_train_test(&sorted, 0.8, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(tr.class_counts().iter().all(|&c| c > 0));
        assert!(te.class_counts().iter().all(|&c| c > 0));
    }
}
