use nalgebra::{DMatrix, DVector};

use super::linalg::{column_means, column_scales, solve_psd, standardize};
use super::{check_width, ensure_finite, softmax_rows, supervision, Estimator, FitContext, ModelError, Supervision};

/// Appends a constant column of ones.
fn with_bias(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(x.ncols(), 1.0)
}

/// Centred ridge regression: returns (weights p×t, intercepts t).
fn ridge_fit(
    x: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    lambda: f64,
) -> Result<(DMatrix<f64>, DVector<f64>), ModelError> {
    let xm = column_means(x);
    let tm = column_means(targets);
    let xc = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - xm[j]);
    let tc = DMatrix::from_fn(targets.nrows(), targets.ncols(), |i, j| targets[(i, j)] - tm[j]);
    let mut gram = xc.transpose() * &xc;
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let w = solve_psd(gram, &(xc.transpose() * &tc))
        .ok_or_else(|| ModelError::TrainingFailure("ridge system is not finite".into()))?;
    let b = tm - w.transpose() * xm;
    ensure_finite(&w, "ridge")?;
    Ok((w, b))
}

fn affine(x: &DMatrix<f64>, w: &DMatrix<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x * w;
    for mut row in out.row_iter_mut() {
        for (v, bias) in row.iter_mut().zip(b.iter()) {
            *v += bias;
        }
    }
    out
}

/// Multinomial logistic regression trained by full-batch gradient descent on
/// internally standardized features.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    lambda: f64,
    epochs: usize,
    step: f64,
    state: Option<LinearState>,
}

#[derive(Debug, Clone)]
struct LinearState {
    means: DVector<f64>,
    scales: DVector<f64>,
    // (p+1) × classes, last row is the bias
    weights: DMatrix<f64>,
}

impl LinearState {
    fn scores(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        check_width(self.means.len(), x)?;
        Ok(with_bias(&standardize(x, &self.means, &self.scales)) * &self.weights)
    }
}

impl LogisticRegression {
    pub fn new(lambda: f64, epochs: usize, step: f64) -> Self {
        LogisticRegression { lambda, epochs, step, state: None }
    }
}

impl Estimator for LogisticRegression {
    fn fit(&mut self, x: &DMatrix<f64>, target: Option<&Supervision<'_>>, ctx: &FitContext) -> Result<(), ModelError> {
        let sup = supervision(target, x)?;
        let means = column_means(x);
        let scales = column_scales(x, &means);
        let xa = with_bias(&standardize(x, &means, &scales));
        let n = x.nrows() as f64;
        let onehot = DMatrix::from_fn(x.nrows(), sup.n_classes, |i, c| if sup.labels[i] == c { 1.0 } else { 0.0 });
        let mut w = DMatrix::zeros(xa.ncols(), sup.n_classes);
        let xt = xa.transpose();
        for _ in 0..self.epochs {
            ctx.check_deadline()?;
            let mut p = &xa * &w;
            softmax_rows(&mut p);
            let mut grad = &xt * (p - &onehot) / n;
            let bias_row = grad.nrows() - 1;
            for r in 0..bias_row {
                for c in 0..grad.ncols() {
                    grad[(r, c)] += self.lambda * w[(r, c)];
                }
            }
            w -= grad * self.step;
        }
        ensure_finite(&w, "logistic regression")?;
        self.state = Some(LinearState { means, scales, weights: w });
        Ok(())
    }

    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        let mut s = self.state.as_ref().ok_or(ModelError::NotFitted)?.scores(x)?;
        softmax_rows(&mut s);
        Ok(s)
    }

    fn output_width(&self) -> Option<usize> {
        self.state.as_ref().map(|s| s.weights.ncols())
    }
}

/// One-vs-rest ridge regression on ±1 targets; scores are mapped to
/// probabilities with a softmax.
#[derive(Debug, Clone)]
pub struct RidgeClassifier {
    lambda: f64,
    state: Option<(DMatrix<f64>, DVector<f64>)>,
}

impl RidgeClassifier {
    pub fn new(lambda: f64) -> Self {
        RidgeClassifier { lambda, state: None }
    }
}

impl Estimator for RidgeClassifier {
    fn fit(&mut self, x: &DMatrix<f64>, target: Option<&Supervision<'_>>, _: &FitContext) -> Result<(), ModelError> {
        let sup = supervision(target, x)?;
        let t = DMatrix::from_fn(x.nrows(), sup.n_classes, |i, c| if sup.labels[i] == c { 1.0 } else { -1.0 });
        self.state = Some(ridge_fit(x, &t, self.lambda)?);
        Ok(())
    }

    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        let (w, b) = self.state.as_ref().ok_or(ModelError::NotFitted)?;
        check_width(w.nrows(), x)?;
        let mut s = affine(x, w, b);
        softmax_rows(&mut s);
        Ok(s)
    }

    fn output_width(&self) -> Option<usize> {
        self.state.as_ref().map(|(w, _)| w.ncols())
    }
}

/// Ridge regression onto the numeric class index.
#[derive(Debug, Clone)]
pub struct RidgeRegressor {
    lambda: f64,
    state: Option<(DMatrix<f64>, DVector<f64>)>,
}

impl RidgeRegressor {
    pub fn new(lambda: f64) -> Self {
        RidgeRegressor { lambda, state: None }
    }

    /// Fits against an arbitrary real-valued target.
    pub fn fit_real(&mut self, x: &DMatrix<f64>, y: &[f64]) -> Result<(), ModelError> {
        if y.len() != x.nrows() {
            return Err(ModelError::ShapeMismatch(format!("{} targets for {} rows", y.len(), x.nrows())));
        }
        let t = DMatrix::from_column_slice(y.len(), 1, y);
        self.state = Some(ridge_fit(x, &t, self.lambda)?);
        Ok(())
    }
}

impl Estimator for RidgeRegressor {
    fn fit(&mut self, x: &DMatrix<f64>, target: Option<&Supervision<'_>>, _: &FitContext) -> Result<(), ModelError> {
        let sup = supervision(target, x)?;
        self.fit_real(x, &sup.numeric())
    }

    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        let (w, b) = self.state.as_ref().ok_or(ModelError::NotFitted)?;
        check_width(w.nrows(), x)?;
        Ok(affine(x, w, b))
    }

    fn output_width(&self) -> Option<usize> {
        self.state.as_ref().map(|_| 1)
    }
}

/// One-vs-rest linear SVM (hinge loss, L2 penalty) trained by full-batch
/// subgradient descent with a `1/sqrt(t)` step schedule.
#[derive(Debug, Clone)]
pub struct LinearSvm {
    lambda: f64,
    epochs: usize,
    state: Option<LinearState>,
}

impl LinearSvm {
    pub fn new(lambda: f64, epochs: usize) -> Self {
        LinearSvm { lambda, epochs, state: None }
    }
}

impl Estimator for LinearSvm {
    fn fit(&mut self, x: &DMatrix<f64>, target: Option<&Supervision<'_>>, ctx: &FitContext) -> Result<(), ModelError> {
        let sup = supervision(target, x)?;
        let means = column_means(x);
        let scales = column_scales(x, &means);
        let xa = with_bias(&standardize(x, &means, &scales));
        let n = x.nrows() as f64;
        let signs = DMatrix::from_fn(x.nrows(), sup.n_classes, |i, c| if sup.labels[i] == c { 1.0 } else { -1.0 });
        let mut w: DMatrix<f64> = DMatrix::zeros(xa.ncols(), sup.n_classes);
        let bias_row = xa.ncols() - 1;
        for t in 1..=self.epochs {
            ctx.check_deadline()?;
            let margins = (&xa * &w).component_mul(&signs);
            // subgradient of the mean hinge loss
            let active =
                DMatrix::from_fn(
                    x.nrows(),
                    sup.n_classes,
                    |i, c| {
                        if margins[(i, c)] < 1.0 {
                            -signs[(i, c)]
                        } else {
                            0.0
                        }
                    },
                );
            let mut grad = xa.transpose() * active / n;
            for r in 0..bias_row {
                for c in 0..grad.ncols() {
                    grad[(r, c)] += self.lambda * w[(r, c)];
                }
            }
            w -= grad * (0.5 / (t as f64).sqrt());
        }
        ensure_finite(&w, "linear SVM")?;
        self.state = Some(LinearState { means, scales, weights: w });
        Ok(())
    }

    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        let mut s = self.state.as_ref().ok_or(ModelError::NotFitted)?.scores(x)?;
        softmax_rows(&mut s);
        Ok(s)
    }

    fn output_width(&self) -> Option<usize> {
        self.state.as_ref().map(|s| s.weights.ncols())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn argmax_rows(p: &DMatrix<f64>) -> Vec<usize> {
        p.row_iter()
            .map(|r| {
                let mut best = 0;
                for (j, v) in r.iter().enumerate() {
                    if *v > r[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    fn separable(n: usize, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let x = DMatrix::from_fn(n, 2, |i, _| {
            let c = if labels[i] == 0 { -3.0 } else { 3.0 };
            c + rng.gen_range(-1.0..1.0)
        });
        (x, labels)
    }

    #[test]
    fn ridge_lambda_zero_recovers_exact_linear_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = [1.5, -2.0, 0.25];
        let x = DMatrix::from_fn(40, 3, |_, _| rng.gen_range(-3.0..3.0));
        let y: Vec<f64> = (0..40).map(|i| (0..3).map(|j| x[(i, j)] * w[j]).sum()).collect();
        let mut r = RidgeRegressor::new(0.0);
        r.fit_real(&x, &y).unwrap();
        let pred = r.apply(&x).unwrap();
        for (i, yi) in y.iter().enumerate() {
            assert!((pred[(i, 0)] - yi).abs() <= 1e-8);
        }
    }

    #[test]
    fn ridge_lambda_zero_survives_duplicate_columns() {
        let x = DMatrix::from_fn(10, 2, |i, _| i as f64);
        let y: Vec<f64> = (0..10).map(|i| 2.0 * i as f64).collect();
        let mut r = RidgeRegressor::new(0.0);
        r.fit_real(&x, &y).unwrap();
        let pred = r.apply(&x).unwrap();
        assert!((pred[(9, 0)] - 18.0).abs() < 1e-8);
    }

    #[test]
    fn logistic_constant_label() {
        let x = DMatrix::from_fn(12, 2, |i, j| (i * 3 + j) as f64);
        let labels = vec![1usize; 12];
        let sup = Supervision { labels: &labels, n_classes: 3 };
        let mut m = LogisticRegression::new(0.01, 100, 0.1);
        m.fit(&x, Some(&sup), &FitContext::default()).unwrap();
        assert!(argmax_rows(&m.apply(&x).unwrap()).iter().all(|&c| c == 1));
    }

    #[test]
    fn linear_models_separate_clouds() {
        let (x, labels) = separable(60, 3);
        let sup = Supervision { labels: &labels, n_classes: 2 };
        let models: Vec<Box<dyn Estimator>> = vec![
            Box::new(LogisticRegression::new(0.01, 200, 0.1)),
            Box::new(RidgeClassifier::new(0.1)),
            Box::new(LinearSvm::new(0.01, 100)),
        ];
        for mut m in models {
            m.fit(&x, Some(&sup), &FitContext::default()).unwrap();
            let p = m.apply(&x).unwrap();
            assert_eq!(argmax_rows(&p), labels, "{m:?}");
            for row in p.row_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|v| *v >= 0.0));
            }
        }
    }
}
