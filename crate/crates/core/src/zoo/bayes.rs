use nalgebra::DMatrix;

use super::{check_width, supervision, Estimator, FitContext, ModelError, Supervision};

/// Gaussian naive Bayes with per-class diagonal variances.
#[derive(Debug, Clone, Default)]
pub struct GaussianNb {
    state: Option<NbState>,
}

#[derive(Debug, Clone)]
struct NbState {
    // None for classes absent from the training labels
    classes: Vec<Option<ClassStats>>,
    width: usize,
}

#[derive(Debug, Clone)]
struct ClassStats {
    log_prior: f64,
    means: Vec<f64>,
    vars: Vec<f64>,
}

impl Estimator for GaussianNb {
    fn fit(&mut self, x: &DMatrix<f64>, target: Option<&Supervision<'_>>, _: &FitContext) -> Result<(), ModelError> {
        let sup = supervision(target, x)?;
        let n = x.nrows() as f64;
        let p = x.ncols();
        // variance floor relative to the largest feature variance
        let max_var = (0..p)
            .map(|j| {
                let col = x.column(j);
                let m = col.mean();
                col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
            })
            .fold(0.0_f64, f64::max);
        let smoothing = 1e-9 * max_var.max(1.0);
        let classes = (0..sup.n_classes)
            .map(|c| {
                let rows: Vec<usize> = (0..x.nrows()).filter(|&i| sup.labels[i] == c).collect();
                if rows.is_empty() {
                    return None;
                }
                let cnt = rows.len() as f64;
                let means: Vec<f64> = (0..p).map(|j| rows.iter().map(|&i| x[(i, j)]).sum::<f64>() / cnt).collect();
                let vars: Vec<f64> = (0..p)
                    .map(|j| rows.iter().map(|&i| (x[(i, j)] - means[j]).powi(2)).sum::<f64>() / cnt + smoothing)
                    .collect();
                Some(ClassStats { log_prior: (cnt / n).ln(), means, vars })
            })
            .collect();
        self.state = Some(NbState { classes, width: p });
        Ok(())
    }

    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        let st = self.state.as_ref().ok_or(ModelError::NotFitted)?;
        check_width(st.width, x)?;
        let k = st.classes.len();
        let mut out = DMatrix::zeros(x.nrows(), k);
        for i in 0..x.nrows() {
            let logs: Vec<f64> = st
                .classes
                .iter()
                .map(|c| match c {
                    None => f64::NEG_INFINITY,
                    Some(cs) => {
                        cs.log_prior
                            + (0..st.width)
                                .map(|j| {
                                    let d = x[(i, j)] - cs.means[j];
                                    -0.5 * (2.0 * std::f64::consts::PI * cs.vars[j]).ln() - d * d / (2.0 * cs.vars[j])
                                })
                                .sum::<f64>()
                    }
                })
                .collect();
            let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = logs.iter().map(|l| (l - max).exp()).sum();
            for (c, l) in logs.iter().enumerate() {
                out[(i, c)] = (l - max).exp() / total;
            }
        }
        Ok(out)
    }

    fn output_width(&self) -> Option<usize> {
        self.state.as_ref().map(|s| s.classes.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separated_clouds_are_perfectly_classified() {
        // gap between centres (20) is far larger than the within-class spread (±0.5)
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let x = DMatrix::from_fn(40, 2, |i, _| labels[i] as f64 * 20.0 + rng.gen_range(-0.5..0.5));
        let sup = Supervision { labels: &labels, n_classes: 2 };
        let mut nb = GaussianNb::default();
        nb.fit(&x, Some(&sup), &FitContext::default()).unwrap();
        let p = nb.apply(&x).unwrap();
        for (i, &c) in labels.iter().enumerate() {
            assert!(p[(i, c)] > 0.5);
            assert!((p.row(i).sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn absent_class_gets_zero_probability() {
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 5.0, 6.0]);
        let labels = [0, 0, 2, 2];
        let sup = Supervision { labels: &labels, n_classes: 3 };
        let mut nb = GaussianNb::default();
        nb.fit(&x, Some(&sup), &FitContext::default()).unwrap();
        let p = nb.apply(&x).unwrap();
        assert!(p.column(1).iter().all(|v| *v == 0.0));
    }
}
