use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative eigenvalue cut-off for the pseudo-inverse fallback.
const PINV_THRESHOLD: f64 = 1e-10;

pub(crate) fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows().max(1) as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Population standard deviation per column; zero-variance columns map to 1.
pub(crate) fn column_scales(x: &DMatrix<f64>, means: &DVector<f64>) -> DVector<f64> {
    let n = x.nrows().max(1) as f64;
    DVector::from_iterator(
        x.ncols(),
        x.column_iter().zip(means.iter()).map(|(c, m)| {
            let var = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd > 1e-12 && sd.is_finite() {
                sd
            } else {
                1.0
            }
        }),
    )
}

pub(crate) fn standardize(x: &DMatrix<f64>, means: &DVector<f64>, scales: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - means[j]) / scales[j])
}

/// Solves `gram · w = rhs` for a symmetric positive semi-definite `gram`
/// through its eigen-decomposition, dropping eigenvalues below
/// `1e-10 · λ_max` (pseudo-inverse on singular systems).
pub(crate) fn solve_psd(gram: DMatrix<f64>, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if gram.iter().any(|v| !v.is_finite()) || rhs.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let eig = SymmetricEigen::new(gram);
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = PINV_THRESHOLD * max;
    let q = &eig.eigenvectors;
    let mut proj = q.transpose() * rhs;
    for (i, lambda) in eig.eigenvalues.iter().enumerate() {
        let inv = if *lambda > cutoff && *lambda > 0.0 { 1.0 / lambda } else { 0.0 };
        proj.row_mut(i).scale_mut(inv);
    }
    Some(q * proj)
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row-major copy, convenient for distance loops.
pub(crate) fn rows_of(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|i| x.row(i).iter().cloned().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_solves_rank_deficient_system() {
        // two identical columns: the minimum-norm solution splits the weight
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let y = DMatrix::from_row_slice(3, 1, &[2.0, 4.0, 6.0]);
        let w = solve_psd(x.transpose() * &x, &(x.transpose() * &y)).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-9 && (w[1] - 1.0).abs() < 1e-9);
    }
}
