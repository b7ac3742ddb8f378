use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linalg::{rows_of, squared_distance};
use super::{check_width, Estimator, FitContext, ModelError, Supervision};

const MAX_ITERATIONS: usize = 50;
const SHIFT_TOLERANCE: f64 = 1e-6;

/// Lloyd's k-means emitting one-of-k cluster indicators.
#[derive(Debug, Clone)]
pub struct KMeans {
    k: usize,
    centroids: Option<Vec<Vec<f64>>>,
}

impl KMeans {
    pub fn new(k: usize) -> Self {
        KMeans { k: k.max(1), centroids: None }
    }

    pub fn centroids(&self) -> Option<&[Vec<f64>]> {
        self.centroids.as_deref()
    }

    fn assign(centroids: &[Vec<f64>], row: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (c, centre) in centroids.iter().enumerate() {
            let d = squared_distance(centre, row);
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    }

    /// Row farthest from its nearest centroid (lowest index on ties).
    fn farthest(centroids: &[Vec<f64>], rows: &[Vec<f64>]) -> usize {
        let mut best = (0, -1.0);
        for (i, r) in rows.iter().enumerate() {
            let d = Self::assign(centroids, r).1;
            if d > best.1 {
                best = (i, d);
            }
        }
        best.0
    }
}

impl Estimator for KMeans {
    fn fit(&mut self, x: &DMatrix<f64>, _: Option<&Supervision<'_>>, ctx: &FitContext) -> Result<(), ModelError> {
        let rows = rows_of(x);
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        let mut centroids = vec![rows[rng.gen_range(0..rows.len())].clone()];
        while centroids.len() < self.k {
            let next = Self::farthest(&centroids, &rows);
            centroids.push(rows[next].clone());
        }
        let p = x.ncols();
        for _ in 0..MAX_ITERATIONS {
            ctx.check_deadline()?;
            let mut sums = vec![vec![0.0; p]; self.k];
            let mut counts = vec![0usize; self.k];
            for r in &rows {
                let c = Self::assign(&centroids, r).0;
                counts[c] += 1;
                for (s, v) in sums[c].iter_mut().zip(r) {
                    *s += v;
                }
            }
            let mut updated: Vec<Vec<f64>> = sums
                .into_iter()
                .zip(&counts)
                .zip(&centroids)
                .map(|((s, &n), old)| if n == 0 { old.clone() } else { s.into_iter().map(|v| v / n as f64).collect() })
                .collect();
            for c in 0..self.k {
                if counts[c] == 0 {
                    let others: Vec<Vec<f64>> =
                        updated.iter().enumerate().filter(|(j, _)| *j != c).map(|(_, v)| v.clone()).collect();
                    let idx = if others.is_empty() { 0 } else { Self::farthest(&others, &rows) };
                    updated[c] = rows[idx].clone();
                }
            }
            let shift =
                updated.iter().zip(&centroids).map(|(a, b)| squared_distance(a, b).sqrt()).fold(0.0_f64, f64::max);
            centroids = updated;
            if shift < SHIFT_TOLERANCE {
                break;
            }
        }
        if centroids.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::TrainingFailure("k-means centroids are not finite".into()));
        }
        self.centroids = Some(centroids);
        Ok(())
    }

    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        let centroids = self.centroids.as_ref().ok_or(ModelError::NotFitted)?;
        check_width(centroids[0].len(), x)?;
        let mut out = DMatrix::zeros(x.nrows(), self.k);
        for (i, r) in rows_of(x).iter().enumerate() {
            out[(i, Self::assign(centroids, r).0)] = 1.0;
        }
        Ok(out)
    }

    fn output_width(&self) -> Option<usize> {
        self.centroids.as_ref().map(|_| self.k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(40, 2, |_, _| rng.gen_range(-1.0..1.0));
        let mut km = KMeans::new(3);
        km.fit(&x, None, &FitContext::new(1)).unwrap();
        let z = km.apply(&x).unwrap();
        assert_eq!(z.ncols(), 3);
        for row in z.row_iter() {
            assert_eq!(row.iter().filter(|v| **v == 1.0).count(), 1);
            assert_eq!(row.sum(), 1.0);
        }
    }

    #[test]
    fn recovers_separated_blobs() {
        let x = DMatrix::from_row_slice(6, 1, &[0.0, 0.1, 0.2, 10.0, 10.1, 10.2]);
        let mut km = KMeans::new(2);
        km.fit(&x, None, &FitContext::new(3)).unwrap();
        let z = km.apply(&x).unwrap();
        assert_eq!(z.row(0), z.row(2));
        assert_eq!(z.row(3), z.row(5));
        assert_ne!(z.row(0), z.row(3));
    }

    #[test]
    fn more_clusters_than_rows() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let mut km = KMeans::new(4);
        km.fit(&x, None, &FitContext::new(0)).unwrap();
        assert_eq!(km.apply(&x).unwrap().ncols(), 4);
    }
}
