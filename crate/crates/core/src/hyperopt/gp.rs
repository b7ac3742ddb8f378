//! Zero-mean Gaussian-process surrogate with a fixed RBF kernel and
//! expected-improvement acquisition.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use statrs::function::erf::erf;

use super::HpoError;

pub const LENGTH_SCALE: f64 = 0.3;
pub const NOISE: f64 = 1e-4;

fn rbf(a: &[f64], b: &[f64], length_scale: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-0.5 * d2 / (length_scale * length_scale)).exp()
}

/// Posterior over standardized outputs; `predict` maps back to the
/// original scale.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    x: Vec<Vec<f64>>,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
    y_mean: f64,
    y_sd: f64,
    length_scale: f64,
}

impl GaussianProcess {
    pub fn fit(x: &[Vec<f64>], y: &[f64], length_scale: f64, noise: f64) -> Result<GaussianProcess, HpoError> {
        let n = y.len();
        if n == 0 || x.len() != n {
            return Err(HpoError::DegenerateSurrogate);
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let y_sd = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if !(y_sd > 1e-12) || !y_sd.is_finite() {
            return Err(HpoError::DegenerateSurrogate);
        }
        let k = DMatrix::from_fn(n, n, |i, j| rbf(&x[i], &x[j], length_scale) + if i == j { noise } else { 0.0 });
        let chol = k.cholesky().ok_or(HpoError::DegenerateSurrogate)?;
        let ys = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_sd));
        let weights = chol.solve(&ys);
        Ok(GaussianProcess { x: x.to_vec(), chol, weights, y_mean, y_sd, length_scale })
    }

    /// Standardized posterior mean and standard deviation.
    pub fn predict_standardized(&self, q: &[f64]) -> (f64, f64) {
        let ks = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| rbf(xi, q, self.length_scale)));
        let mean = ks.dot(&self.weights);
        let var = 1.0 - ks.dot(&self.chol.solve(&ks));
        (mean, var.max(0.0).sqrt())
    }

    pub fn predict(&self, q: &[f64]) -> (f64, f64) {
        let (m, s) = self.predict_standardized(q);
        (self.y_mean + self.y_sd * m, self.y_sd * s)
    }

    /// Dual weights `(K + σ²I)⁻¹ y` over standardized outputs.
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn output_scale(&self) -> f64 {
        self.y_sd
    }

    pub fn standardize(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_sd
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected improvement below `best` for a minimization problem.
pub fn expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    let gain = best - mean;
    if sd < 1e-12 {
        return gain.max(0.0);
    }
    let z = gain / sd;
    gain * normal_cdf(z) + sd * normal_pdf(z)
}

pub fn random_point<R: Rng + ?Sized>(dims: usize, rng: &mut R) -> Vec<f64> {
    (0..dims).map(|_| rng.gen::<f64>()).collect()
}

/// Next point to evaluate: a random probe until two observations exist or
/// when the observations carry no spread, otherwise the best of
/// `n_candidates` random probes under expected improvement.
pub fn propose_next<R: Rng + ?Sized>(
    x: &[Vec<f64>],
    y: &[f64],
    dims: usize,
    n_candidates: usize,
    rng: &mut R,
) -> Vec<f64> {
    if y.len() < 2 {
        return random_point(dims, rng);
    }
    let gp = match GaussianProcess::fit(x, y, LENGTH_SCALE, NOISE) {
        Ok(gp) => gp,
        Err(_) => return random_point(dims, rng),
    };
    let best = gp.standardize(y.iter().copied().fold(f64::INFINITY, f64::min));
    let mut choice = random_point(dims, rng);
    let (m, s) = gp.predict_standardized(&choice);
    let mut choice_ei = expected_improvement(m, s, best);
    for _ in 1..n_candidates.max(1) {
        let probe = random_point(dims, rng);
        let (m, s) = gp.predict_standardized(&probe);
        let ei = expected_improvement(m, s, best);
        if ei > choice_ei {
            choice = probe;
            choice_ei = ei;
        }
    }
    choice
}
