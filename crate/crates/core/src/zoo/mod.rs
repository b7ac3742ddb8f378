//! Primitive model set.
//!
//! Every vertex of an architecture graph carries a [`ModelSpec`]: a model
//! kind plus a hyperparameter assignment drawn from that kind's
//! [`ParamSpace`]. Specs are turned into boxed [`Estimator`]s which share a
//! uniform fit/apply contract: `fit` consumes a feature matrix (and labels for
//! supervised roles), `apply` maps an `m × p` matrix to an `m × q` output.

mod bayes;
mod cluster;
mod linalg;
mod linear;
mod neighbors;
mod preprocess;
mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bayes::GaussianNb;
pub use cluster::KMeans;
pub use linear::{LinearSvm, LogisticRegression, RidgeClassifier, RidgeRegressor};
pub use neighbors::{KnnClassifier, KnnRegressor};
pub use preprocess::{InputPassThrough, MinMaxScaler, Normalizer, Pca, RobustScaler, StandardScaler};
pub use tree::{DecisionTree, SplitCriterion};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("estimator applied before fit")]
    NotFitted,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("supervised model fitted without labels")]
    MissingTarget,
    #[error("training failure: {0}")]
    TrainingFailure(String),
    #[error("training time budget exceeded")]
    Timeout,
    #[error("invalid hyperparameter: {0}")]
    InvalidParam(String),
}

/// Role a model plays inside a classification graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Input,
    Preprocessor,
    Classifier,
    Regressor,
    Unsupervised,
}

impl ModelRole {
    pub fn is_supervised(self) -> bool {
        matches!(self, ModelRole::Classifier | ModelRole::Regressor)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelRole::Input => "input",
            ModelRole::Preprocessor => "preprocessor",
            ModelRole::Classifier => "classifier",
            ModelRole::Regressor => "regressor",
            ModelRole::Unsupervised => "unsupervised",
        }
    }
}

impl fmt::Display for ModelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Input,
    StandardScaler,
    MinMaxScaler,
    RobustScaler,
    Normalizer,
    Pca,
    KMeans,
    LogisticRegression,
    RidgeClassifier,
    GaussianNb,
    KnnClassifier,
    DecisionTree,
    LinearSvm,
    RidgeRegressor,
    KnnRegressor,
}

/// How many columns a fitted model emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputArity {
    /// Same width as the input.
    SameAsInput,
    /// One probability column per class.
    Classes,
    /// A single prediction column.
    Single,
    /// Width set by an integer hyperparameter, capped at the input width.
    Param(&'static str),
    /// Width set by an integer hyperparameter, independent of the input.
    Clusters(&'static str),
}

impl ModelKind {
    pub const ALL: [ModelKind; 15] = [
        ModelKind::Input,
        ModelKind::StandardScaler,
        ModelKind::MinMaxScaler,
        ModelKind::RobustScaler,
        ModelKind::Normalizer,
        ModelKind::Pca,
        ModelKind::KMeans,
        ModelKind::LogisticRegression,
        ModelKind::RidgeClassifier,
        ModelKind::GaussianNb,
        ModelKind::KnnClassifier,
        ModelKind::DecisionTree,
        ModelKind::LinearSvm,
        ModelKind::RidgeRegressor,
        ModelKind::KnnRegressor,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ModelKind::Input => "input",
            ModelKind::StandardScaler => "standard_scaler",
            ModelKind::MinMaxScaler => "min_max_scaler",
            ModelKind::RobustScaler => "robust_scaler",
            ModelKind::Normalizer => "normalizer",
            ModelKind::Pca => "pca",
            ModelKind::KMeans => "kmeans",
            ModelKind::LogisticRegression => "logistic_regression",
            ModelKind::RidgeClassifier => "ridge_classifier",
            ModelKind::GaussianNb => "gaussian_nb",
            ModelKind::KnnClassifier => "knn_classifier",
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::LinearSvm => "linear_svm",
            ModelKind::RidgeRegressor => "ridge_regressor",
            ModelKind::KnnRegressor => "knn_regressor",
        }
    }

    pub fn from_id(id: &str) -> Option<ModelKind> {
        ModelKind::ALL.into_iter().find(|k| k.id() == id)
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Input => "Input",
            ModelKind::StandardScaler => "StandardScaler",
            ModelKind::MinMaxScaler => "MinMaxScaler",
            ModelKind::RobustScaler => "RobustScaler",
            ModelKind::Normalizer => "Normalizer",
            ModelKind::Pca => "PCA",
            ModelKind::KMeans => "KMeans",
            ModelKind::LogisticRegression => "LogisticRegression",
            ModelKind::RidgeClassifier => "RidgeClassifier",
            ModelKind::GaussianNb => "GaussianNB",
            ModelKind::KnnClassifier => "KNeighborsClassifier",
            ModelKind::DecisionTree => "DecisionTree",
            ModelKind::LinearSvm => "LinearSVM",
            ModelKind::RidgeRegressor => "RidgeRegressor",
            ModelKind::KnnRegressor => "KNeighborsRegressor",
        }
    }

    pub fn role(self) -> ModelRole {
        match self {
            ModelKind::Input => ModelRole::Input,
            ModelKind::StandardScaler
            | ModelKind::MinMaxScaler
            | ModelKind::RobustScaler
            | ModelKind::Normalizer
            | ModelKind::Pca => ModelRole::Preprocessor,
            ModelKind::KMeans => ModelRole::Unsupervised,
            ModelKind::LogisticRegression
            | ModelKind::RidgeClassifier
            | ModelKind::GaussianNb
            | ModelKind::KnnClassifier
            | ModelKind::DecisionTree
            | ModelKind::LinearSvm => ModelRole::Classifier,
            ModelKind::RidgeRegressor | ModelKind::KnnRegressor => ModelRole::Regressor,
        }
    }

    pub fn output_arity(self) -> OutputArity {
        match self.role() {
            ModelRole::Input | ModelRole::Preprocessor if self == ModelKind::Pca => OutputArity::Param("n_components"),
            ModelRole::Input | ModelRole::Preprocessor => OutputArity::SameAsInput,
            ModelRole::Unsupervised => OutputArity::Clusters("k"),
            ModelRole::Classifier => OutputArity::Classes,
            ModelRole::Regressor => OutputArity::Single,
        }
    }

    pub fn param_space(self) -> ParamSpace {
        use ParamDomain::*;
        let defs: Vec<ParamDef> = match self {
            ModelKind::Pca => vec![ParamDef::new("n_components", Integer { lo: 1, hi: 8 })],
            ModelKind::KMeans => vec![ParamDef::new("k", Integer { lo: 2, hi: 10 })],
            ModelKind::LogisticRegression => vec![
                ParamDef::new("lambda", Continuous { lo: 1e-4, hi: 10.0, scale: Scale::Log }),
                ParamDef::new("epochs", Integer { lo: 50, hi: 500 }),
                ParamDef::new("step", Continuous { lo: 1e-3, hi: 1.0, scale: Scale::Log }),
            ],
            ModelKind::RidgeClassifier | ModelKind::RidgeRegressor => {
                vec![ParamDef::new("lambda", Continuous { lo: 1e-4, hi: 100.0, scale: Scale::Log })]
            }
            ModelKind::KnnClassifier | ModelKind::KnnRegressor => {
                vec![ParamDef::new("k", Integer { lo: 1, hi: 25 })]
            }
            ModelKind::DecisionTree => vec![
                ParamDef::new("max_depth", Integer { lo: 1, hi: 32 }),
                ParamDef::new("min_leaf", Integer { lo: 1, hi: 20 }),
                ParamDef::new("criterion", Categorical { options: &["gini", "entropy"] }),
            ],
            ModelKind::LinearSvm => vec![
                ParamDef::new("lambda", Continuous { lo: 1e-4, hi: 1.0, scale: Scale::Log }),
                ParamDef::new("epochs", Integer { lo: 20, hi: 200 }),
            ],
            ModelKind::Input
            | ModelKind::StandardScaler
            | ModelKind::MinMaxScaler
            | ModelKind::RobustScaler
            | ModelKind::Normalizer
            | ModelKind::GaussianNb => Vec::new(),
        };
        ParamSpace { params: defs }
    }

    pub fn default_spec(self) -> ModelSpec {
        ModelSpec { kind: self, params: self.param_space().defaults() }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamDomain {
    Continuous { lo: f64, hi: f64, scale: Scale },
    Integer { lo: i64, hi: i64 },
    Categorical { options: &'static [&'static str] },
}

impl ParamDomain {
    /// Mid-point of the domain; geometric for log scale, first option for
    /// categoricals.
    pub fn midpoint(&self) -> ParamValue {
        match *self {
            ParamDomain::Continuous { lo, hi, scale: Scale::Linear } => ParamValue::Real(0.5 * (lo + hi)),
            ParamDomain::Continuous { lo, hi, scale: Scale::Log } => ParamValue::Real((lo * hi).sqrt()),
            ParamDomain::Integer { lo, hi } => ParamValue::Int(((lo + hi) as f64 / 2.0).round() as i64),
            ParamDomain::Categorical { options } => ParamValue::Cat(options[0].to_string()),
        }
    }

    pub fn contains(&self, value: &ParamValue) -> bool {
        match (self, value) {
            (ParamDomain::Continuous { lo, hi, .. }, ParamValue::Real(v)) => v.is_finite() && *v >= *lo && *v <= *hi,
            (ParamDomain::Integer { lo, hi }, ParamValue::Int(v)) => v >= lo && v <= hi,
            (ParamDomain::Categorical { options }, ParamValue::Cat(v)) => options.contains(&v.as_str()),
            _ => false,
        }
    }

    /// Number of unit-cube dimensions this parameter occupies.
    pub fn dimensions(&self) -> usize {
        match self {
            ParamDomain::Categorical { options } => options.len(),
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDef {
    pub name: &'static str,
    pub domain: ParamDomain,
}

impl ParamDef {
    fn new(name: &'static str, domain: ParamDomain) -> Self {
        ParamDef { name, domain }
    }
}

/// Ordered list of tunable parameters of one model kind.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSpace {
    pub params: Vec<ParamDef>,
}

impl ParamSpace {
    pub fn defaults(&self) -> BTreeMap<String, ParamValue> {
        self.params.iter().map(|p| (p.name.to_string(), p.domain.midpoint())).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&ParamDef> {
        self.params.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Cat(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Cat(v) => f.write_str(v),
        }
    }
}

/// A model kind together with a concrete hyperparameter assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub params: BTreeMap<String, ParamValue>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        kind.default_spec()
    }

    pub fn role(&self) -> ModelRole {
        self.kind.role()
    }

    pub fn with_param(mut self, name: &str, value: ParamValue) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    /// Checks that the assignment names exactly the kind's parameters and
    /// that every value lies inside its domain.
    pub fn check(&self) -> Result<(), ModelError> {
        let space = self.kind.param_space();
        for def in &space.params {
            match self.params.get(def.name) {
                Some(v) if def.domain.contains(v) => {}
                Some(v) => {
                    return Err(ModelError::InvalidParam(format!(
                        "{}.{} = {v} outside its domain",
                        self.kind.id(),
                        def.name
                    )))
                }
                None => return Err(ModelError::InvalidParam(format!("{}.{} missing", self.kind.id(), def.name))),
            }
        }
        if let Some(extra) = self.params.keys().find(|k| space.get(k).is_none()) {
            return Err(ModelError::InvalidParam(format!("{} has no parameter {extra}", self.kind.id())));
        }
        Ok(())
    }

    fn real(&self, name: &str) -> Result<f64, ModelError> {
        match self.params.get(name) {
            Some(ParamValue::Real(v)) => Ok(*v),
            Some(ParamValue::Int(v)) => Ok(*v as f64),
            _ => Err(ModelError::InvalidParam(format!("{}.{name} must be real", self.kind.id()))),
        }
    }

    fn int(&self, name: &str) -> Result<usize, ModelError> {
        match self.params.get(name) {
            Some(ParamValue::Int(v)) if *v >= 0 => Ok(*v as usize),
            _ => Err(ModelError::InvalidParam(format!("{}.{name} must be a non-negative integer", self.kind.id()))),
        }
    }

    fn cat(&self, name: &str) -> Result<&str, ModelError> {
        match self.params.get(name) {
            Some(ParamValue::Cat(v)) => Ok(v),
            _ => Err(ModelError::InvalidParam(format!("{}.{name} must be categorical", self.kind.id()))),
        }
    }

    /// Builds an unfitted estimator for this spec.
    pub fn build(&self) -> Result<Box<dyn Estimator>, ModelError> {
        Ok(match self.kind {
            ModelKind::Input => Box::new(InputPassThrough::default()),
            ModelKind::StandardScaler => Box::new(StandardScaler::default()),
            ModelKind::MinMaxScaler => Box::new(MinMaxScaler::default()),
            ModelKind::RobustScaler => Box::new(RobustScaler::default()),
            ModelKind::Normalizer => Box::new(Normalizer::default()),
            ModelKind::Pca => Box::new(Pca::new(self.int("n_components")?)),
            ModelKind::KMeans => Box::new(KMeans::new(self.int("k")?)),
            ModelKind::LogisticRegression => {
                Box::new(LogisticRegression::new(self.real("lambda")?, self.int("epochs")?, self.real("step")?))
            }
            ModelKind::RidgeClassifier => Box::new(RidgeClassifier::new(self.real("lambda")?)),
            ModelKind::GaussianNb => Box::new(GaussianNb::default()),
            ModelKind::KnnClassifier => Box::new(KnnClassifier::new(self.int("k")?)),
            ModelKind::DecisionTree => {
                let criterion = match self.cat("criterion")? {
                    "gini" => SplitCriterion::Gini,
                    "entropy" => SplitCriterion::Entropy,
                    other => return Err(ModelError::InvalidParam(format!("unknown criterion {other}"))),
                };
                Box::new(DecisionTree::new(Some(self.int("max_depth")?), self.int("min_leaf")?, criterion))
            }
            ModelKind::LinearSvm => Box::new(LinearSvm::new(self.real("lambda")?, self.int("epochs")?)),
            ModelKind::RidgeRegressor => Box::new(RidgeRegressor::new(self.real("lambda")?)),
            ModelKind::KnnRegressor => Box::new(KnnRegressor::new(self.int("k")?)),
        })
    }

    /// Short human-readable description, e.g. `KNeighborsClassifier(k=13)`.
    pub fn describe(&self) -> String {
        if self.params.is_empty() {
            return self.kind.display_name().to_string();
        }
        let args: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}({})", self.kind.display_name(), args.join(", "))
    }
}

/// Class labels handed to supervised estimators.
#[derive(Debug, Clone, Copy)]
pub struct Supervision<'a> {
    pub labels: &'a [usize],
    pub n_classes: usize,
}

impl Supervision<'_> {
    /// Labels encoded as reals (class index), the regression target used for
    /// regressors embedded in a classification graph.
    pub fn numeric(&self) -> Vec<f64> {
        self.labels.iter().map(|&c| c as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FitContext {
    pub seed: u64,
    pub deadline: Option<Instant>,
}

impl FitContext {
    pub fn new(seed: u64) -> Self {
        FitContext { seed, deadline: None }
    }

    pub fn check_deadline(&self) -> Result<(), ModelError> {
        match self.deadline {
            Some(d) if Instant::now() > d => Err(ModelError::Timeout),
            _ => Ok(()),
        }
    }
}

pub trait Estimator: Send + Sync + fmt::Debug {
    fn fit(&mut self, x: &DMatrix<f64>, target: Option<&Supervision<'_>>, ctx: &FitContext) -> Result<(), ModelError>;

    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError>;

    /// Output width once fitted.
    fn output_width(&self) -> Option<usize>;
}

/// Fits the estimator described by `spec`.
pub fn fit_estimator(
    spec: &ModelSpec,
    x: &DMatrix<f64>,
    target: Option<&Supervision<'_>>,
    ctx: &FitContext,
) -> Result<Box<dyn Estimator>, ModelError> {
    if x.nrows() == 0 {
        return Err(ModelError::ShapeMismatch("cannot fit on an empty matrix".into()));
    }
    if spec.role().is_supervised() && target.is_none() {
        return Err(ModelError::MissingTarget);
    }
    let mut est = spec.build()?;
    est.fit(x, target, ctx)?;
    Ok(est)
}

/// Column-wise concatenation of equally tall matrices, in the given order.
pub fn feature_union(inputs: &[&DMatrix<f64>]) -> Result<DMatrix<f64>, ModelError> {
    let first = inputs.first().ok_or_else(|| ModelError::ShapeMismatch("feature union of zero inputs".into()))?;
    let rows = first.nrows();
    if let Some(bad) = inputs.iter().find(|m| m.nrows() != rows) {
        return Err(ModelError::ShapeMismatch(format!("row mismatch {rows} vs {}", bad.nrows())));
    }
    if inputs.len() == 1 {
        return Ok((*first).clone());
    }
    let cols: usize = inputs.iter().map(|m| m.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut offset = 0;
    for m in inputs {
        out.view_mut((0, offset), (rows, m.ncols())).copy_from(*m);
        offset += m.ncols();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub kind: ModelKind,
    pub role: ModelRole,
    pub space: ParamSpace,
    pub arity: OutputArity,
}

/// Every model kind the zoo provides, input pass-through included.
pub fn zoo_catalog() -> Vec<CatalogEntry> {
    ModelKind::ALL
        .into_iter()
        .map(|kind| CatalogEntry { kind, role: kind.role(), space: kind.param_space(), arity: kind.output_arity() })
        .collect()
}

/// Default-parameter templates for every model that may sit on a non-input
/// vertex.
pub fn default_model_set() -> Vec<ModelSpec> {
    ModelKind::ALL.into_iter().filter(|k| *k != ModelKind::Input).map(ModelKind::default_spec).collect()
}

fn check_width(expected: usize, x: &DMatrix<f64>) -> Result<(), ModelError> {
    if x.ncols() != expected {
        return Err(ModelError::ShapeMismatch(format!("expected {expected} columns, got {}", x.ncols())));
    }
    Ok(())
}

fn supervision<'a>(target: Option<&'a Supervision<'a>>, x: &DMatrix<f64>) -> Result<&'a Supervision<'a>, ModelError> {
    let sup = target.ok_or(ModelError::MissingTarget)?;
    if sup.labels.len() != x.nrows() {
        return Err(ModelError::ShapeMismatch(format!("{} labels for {} rows", sup.labels.len(), x.nrows())));
    }
    if sup.n_classes == 0 || sup.labels.iter().any(|&c| c >= sup.n_classes) {
        return Err(ModelError::ShapeMismatch("label outside class range".into()));
    }
    Ok(sup)
}

fn ensure_finite(m: &DMatrix<f64>, what: &str) -> Result<(), ModelError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::TrainingFailure(format!("{what} produced non-finite values")))
    }
}

/// Row-wise softmax; used to turn decision scores into probabilities.
fn softmax_rows(scores: &mut DMatrix<f64>) {
    for mut row in scores.row_iter_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}
