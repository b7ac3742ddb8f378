use nalgebra::DMatrix;

use super::linalg::{rows_of, squared_distance};
use super::{check_width, supervision, Estimator, FitContext, ModelError, Supervision};

#[derive(Debug, Clone)]
struct Memory {
    rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
    n_classes: usize,
    width: usize,
}

impl Memory {
    fn new(x: &DMatrix<f64>, sup: &Supervision<'_>) -> Self {
        Memory { rows: rows_of(x), labels: sup.labels.to_vec(), n_classes: sup.n_classes, width: x.ncols() }
    }

    /// Indices of the `k` nearest stored rows; distance ties go to the lower
    /// index.
    fn nearest(&self, query: &[f64], k: usize) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> =
            self.rows.iter().enumerate().map(|(i, r)| (squared_distance(r, query), i)).collect();
        let k = k.min(d.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
            d.truncate(k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }
}

/// k-nearest-neighbour classifier; probabilities are neighbour vote shares.
#[derive(Debug, Clone)]
pub struct KnnClassifier {
    k: usize,
    memory: Option<Memory>,
}

impl KnnClassifier {
    pub fn new(k: usize) -> Self {
        KnnClassifier { k: k.max(1), memory: None }
    }
}

impl Estimator for KnnClassifier {
    fn fit(&mut self, x: &DMatrix<f64>, target: Option<&Supervision<'_>>, _: &FitContext) -> Result<(), ModelError> {
        let sup = supervision(target, x)?;
        self.memory = Some(Memory::new(x, sup));
        Ok(())
    }

    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        let mem = self.memory.as_ref().ok_or(ModelError::NotFitted)?;
        check_width(mem.width, x)?;
        let mut out = DMatrix::zeros(x.nrows(), mem.n_classes);
        for (i, q) in rows_of(x).iter().enumerate() {
            let nn = mem.nearest(q, self.k);
            let share = 1.0 / nn.len() as f64;
            for j in nn {
                out[(i, mem.labels[j])] += share;
            }
        }
        Ok(out)
    }

    fn output_width(&self) -> Option<usize> {
        self.memory.as_ref().map(|m| m.n_classes)
    }
}

/// k-nearest-neighbour regressor onto the numeric class index.
#[derive(Debug, Clone)]
pub struct KnnRegressor {
    k: usize,
    memory: Option<Memory>,
}

impl KnnRegressor {
    pub fn new(k: usize) -> Self {
        KnnRegressor { k: k.max(1), memory: None }
    }
}

impl Estimator for KnnRegressor {
    fn fit(&mut self, x: &DMatrix<f64>, target: Option<&Supervision<'_>>, _: &FitContext) -> Result<(), ModelError> {
        let sup = supervision(target, x)?;
        self.memory = Some(Memory::new(x, sup));
        Ok(())
    }

    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        let mem = self.memory.as_ref().ok_or(ModelError::NotFitted)?;
        check_width(mem.width, x)?;
        let mut out = DMatrix::zeros(x.nrows(), 1);
        for (i, q) in rows_of(x).iter().enumerate() {
            let nn = mem.nearest(q, self.k);
            out[(i, 0)] = nn.iter().map(|&j| mem.labels[j] as f64).sum::<f64>() / nn.len() as f64;
        }
        Ok(out)
    }

    fn output_width(&self) -> Option<usize> {
        self.memory.as_ref().map(|_| 1)
    }
}
