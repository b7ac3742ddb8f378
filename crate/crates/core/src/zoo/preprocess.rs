use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::linalg::{column_means, column_scales};
use super::{check_width, Estimator, FitContext, ModelError, Supervision};

/// Emits the raw feature matrix; occupies the first vertex of every graph.
#[derive(Debug, Clone, Default)]
pub struct InputPassThrough {
    width: Option<usize>,
}

impl Estimator for InputPassThrough {
    fn fit(&mut self, x: &DMatrix<f64>, _: Option<&Supervision<'_>>, _: &FitContext) -> Result<(), ModelError> {
        self.width = Some(x.ncols());
        Ok(())
    }

    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        check_width(self.width.ok_or(ModelError::NotFitted)?, x)?;
        Ok(x.clone())
    }

    fn output_width(&self) -> Option<usize> {
        self.width
    }
}

#[derive(Debug, Clone, Default)]
pub struct StandardScaler {
    state: Option<(DVector<f64>, DVector<f64>)>,
}

impl Estimator for StandardScaler {
    fn fit(&mut self, x: &DMatrix<f64>, _: Option<&Supervision<'_>>, _: &FitContext) -> Result<(), ModelError> {
        let means = column_means(x);
        let scales = column_scales(x, &means);
        self.state = Some((means, scales));
        Ok(())
    }

    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        let (means, scales) = self.state.as_ref().ok_or(ModelError::NotFitted)?;
        check_width(means.len(), x)?;
        Ok(super::linalg::standardize(x, means, scales))
    }

    fn output_width(&self) -> Option<usize> {
        self.state.as_ref().map(|(m, _)| m.len())
    }
}

#[derive(Debug, Clone, Default)]
pub struct MinMaxScaler {
    state: Option<(Vec<f64>, Vec<f64>)>,
}

impl MinMaxScaler {
    /// Maps scaled values back to the original units.
    pub fn inverse(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        let (mins, ranges) = self.state.as_ref().ok_or(ModelError::NotFitted)?;
        check_width(mins.len(), z)?;
        Ok(DMatrix::from_fn(z.nrows(), z.ncols(), |i, j| z[(i, j)] * ranges[j] + mins[j]))
    }
}

impl Estimator for MinMaxScaler {
    fn fit(&mut self, x: &DMatrix<f64>, _: Option<&Supervision<'_>>, _: &FitContext) -> Result<(), ModelError> {
        let mut mins = Vec::with_capacity(x.ncols());
        let mut ranges = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let lo = col.min();
            let hi = col.max();
            mins.push(lo);
            ranges.push(if hi - lo > 1e-12 { hi - lo } else { 1.0 });
        }
        self.state = Some((mins, ranges));
        Ok(())
    }

    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        let (mins, ranges) = self.state.as_ref().ok_or(ModelError::NotFitted)?;
        check_width(mins.len(), x)?;
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - mins[j]) / ranges[j]))
    }

    fn output_width(&self) -> Option<usize> {
        self.state.as_ref().map(|(m, _)| m.len())
    }
}

/// Centres on the median and scales by the inter-quartile range.
#[derive(Debug, Clone, Default)]
pub struct RobustScaler {
    state: Option<(Vec<f64>, Vec<f64>)>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

impl Estimator for RobustScaler {
    fn fit(&mut self, x: &DMatrix<f64>, _: Option<&Supervision<'_>>, _: &FitContext) -> Result<(), ModelError> {
        let mut medians = Vec::with_capacity(x.ncols());
        let mut iqrs = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let mut v: Vec<f64> = col.iter().cloned().collect();
            v.sort_by(f64::total_cmp);
            medians.push(quantile(&v, 0.5));
            let iqr = quantile(&v, 0.75) - quantile(&v, 0.25);
            iqrs.push(if iqr > 1e-12 { iqr } else { 1.0 });
        }
        self.state = Some((medians, iqrs));
        Ok(())
    }

    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        let (med, iqr) = self.state.as_ref().ok_or(ModelError::NotFitted)?;
        check_width(med.len(), x)?;
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - med[j]) / iqr[j]))
    }

    fn output_width(&self) -> Option<usize> {
        self.state.as_ref().map(|(m, _)| m.len())
    }
}

/// Scales every row to unit L2 norm; all-zero rows pass through.
#[derive(Debug, Clone, Default)]
pub struct Normalizer {
    width: Option<usize>,
}

impl Estimator for Normalizer {
    fn fit(&mut self, x: &DMatrix<f64>, _: Option<&Supervision<'_>>, _: &FitContext) -> Result<(), ModelError> {
        self.width = Some(x.ncols());
        Ok(())
    }

    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        check_width(self.width.ok_or(ModelError::NotFitted)?, x)?;
        let mut out = x.clone();
        for mut row in out.row_iter_mut() {
            let norm = row.norm();
            if norm > 0.0 {
                row /= norm;
            }
        }
        Ok(out)
    }

    fn output_width(&self) -> Option<usize> {
        self.width
    }
}

/// Principal component projection onto the top `k` eigenvectors of the
/// training covariance (capped at the input width).
#[derive(Debug, Clone)]
pub struct Pca {
    components: usize,
    state: Option<(DVector<f64>, DMatrix<f64>)>,
}

impl Pca {
    pub fn new(components: usize) -> Self {
        Pca { components: components.max(1), state: None }
    }
}

impl Estimator for Pca {
    fn fit(&mut self, x: &DMatrix<f64>, _: Option<&Supervision<'_>>, _: &FitContext) -> Result<(), ModelError> {
        let means = column_means(x);
        let centered = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - means[j]);
        let cov = centered.transpose() * &centered / (x.nrows().max(2) - 1) as f64;
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::TrainingFailure("PCA covariance is not finite".into()));
        }
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let k = self.components.min(x.ncols());
        let mut basis = DMatrix::zeros(x.ncols(), k);
        for (out, &src) in order.iter().take(k).enumerate() {
            let mut v = eig.eigenvectors.column(src).clone_owned();
            // sign convention: largest-magnitude loading is positive
            let pivot = v.iter().cloned().fold(0.0_f64, |acc, e| if e.abs() > acc.abs() { e } else { acc });
            if pivot < 0.0 {
                v.neg_mut();
            }
            basis.set_column(out, &v);
        }
        self.state = Some((means, basis));
        Ok(())
    }

    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        let (means, basis) = self.state.as_ref().ok_or(ModelError::NotFitted)?;
        check_width(means.len(), x)?;
        let centered = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - means[j]);
        Ok(centered * basis)
    }

    fn output_width(&self) -> Option<usize> {
        self.state.as_ref().map(|(_, b)| b.ncols())
    }
}
