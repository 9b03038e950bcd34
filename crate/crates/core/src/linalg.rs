//! Small dense linear-algebra helpers shared by the model, inference and EM code.

use nalgebra::{DMatrix, DVector};

use crate::error::{LdsError, Result};

/// Tolerance used when checking symmetry and positive semidefiniteness.
pub const PSD_TOL: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric to `PSD_TOL` with every eigenvalue at least `-PSD_TOL`.
pub fn is_psd(m: &DMatrix<f64>) -> bool {
    m.is_square()
        && all_finite(m)
        && max_asymmetry(m) <= PSD_TOL
        && min_symmetric_eigenvalue(m) >= -PSD_TOL
}

/// Symmetrizes `m` and raises every eigenvalue below `floor` to `floor`.
///
/// Returns the repaired matrix and whether any eigenvalue was raised.
pub fn floor_eigenvalues(m: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, bool) {
    let sym = symmetrize(m);
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return (sym, false);
    }
    let clipped = eig.eigenvalues.map(|l| l.max(floor));
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    (symmetrize(&out), true)
}

/// A factor `L` with `L Lᵀ = m` for a symmetric PSD `m`, tolerating exact zeros.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = symmetrize(m);
    if let Some(chol) = sym.clone().cholesky() {
        return chol.l();
    }
    let eig = sym.symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// log det of a symmetric positive definite matrix via Cholesky.
pub fn log_det_pd(m: &DMatrix<f64>) -> Option<f64> {
    let chol = symmetrize(m).cholesky()?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        let d = l[(i, i)];
        if !d.is_finite() || d <= 0.0 {
            return None;
        }
        acc += 2.0 * d.ln();
    }
    Some(acc)
}

/// Ratio of smallest to largest eigenvalue of a symmetric matrix (0 when not PD).
pub fn reciprocal_condition(m: &DMatrix<f64>) -> f64 {
    let eig = symmetrize(m).symmetric_eigenvalues();
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_nan() || lo <= 0.0 || !hi.is_finite() {
        0.0
    } else {
        lo / hi
    }
}

/// Inverse of a symmetric PD matrix, or `None` when it is numerically singular.
pub fn spd_inverse(m: &DMatrix<f64>, min_rcond: f64) -> Option<DMatrix<f64>> {
    if reciprocal_condition(m) < min_rcond {
        return None;
    }
    let chol = symmetrize(m).cholesky()?;
    Some(symmetrize(&chol.inverse()))
}

/// Sum of log-eigenvalues above `rel_tol * max_eigenvalue` of a symmetric PSD matrix.
///
/// Returns the pseudo log-determinant and the numerical rank.
pub fn pseudo_log_det(m: &DMatrix<f64>, rel_tol: f64) -> (f64, usize) {
    let eig = symmetrize(m).symmetric_eigenvalues();
    let hi = eig.iter().copied().fold(0.0f64, f64::max);
    if hi <= 0.0 {
        return (0.0, 0);
    }
    let cut = hi * rel_tol;
    eig.iter()
        .filter(|&&l| l > cut)
        .fold((0.0, 0), |(acc, rank), &l| (acc + l.ln(), rank + 1))
}

/// log N(x; mean, cov) for a PD covariance.
pub fn gaussian_log_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let chol = symmetrize(cov)
        .cholesky()
        .ok_or_else(|| LdsError::Degenerate("covariance is not positive definite".into()))?;
    let r = x - mean;
    let sol = chol.solve(&r);
    let quad = r.dot(&sol);
    let l = chol.l_dirty();
    let log_det: f64 = (0..cov.nrows()).map(|i| 2.0 * l[(i, i)].ln()).sum();
    let k = x.len() as f64;
    Ok(-0.5 * (k * (2.0 * std::f64::consts::PI).ln() + log_det + quad))
}

/// Moore-Penrose pseudo-inverse via SVD.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    svd.pseudo_inverse(1e-12)
        .unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()))
}

/// Nested row-major representation used by the JSON documents.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(LdsError::Dimension(format!("{name}: ragged rows")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_reports_activation() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let (out, floored) = floor_eigenvalues(&m, 1e-10);
        assert!(floored);
        assert!(min_symmetric_eigenvalue(&out) >= 1e-10 - 1e-16);
        let (same, floored) = floor_eigenvalues(&DMatrix::identity(2, 2), 1e-10);
        assert!(!floored);
        assert_eq!(same, DMatrix::identity(2, 2));
    }

    #[test]
    fn psd_factor_handles_zero_matrix() {
        let z = DMatrix::<f64>::zeros(3, 3);
        let l = psd_factor(&z);
        assert!((&l * l.transpose()).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn pseudo_log_det_drops_null_space() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 0.0]));
        let (ld, rank) = pseudo_log_det(&m, 1e-10);
        assert_eq!(rank, 2);
        assert!((ld - 6.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_density_scalar() {
        let x = DVector::from_vec(vec![1.0]);
        let mu = DVector::from_vec(vec![0.0]);
        let cov = DMatrix::from_element(1, 1, 2.0);
        let expect = -0.5 * (2.0 * std::f64::consts::PI * 2.0).ln() - 0.25;
        assert!((gaussian_log_density(&x, &mu, &cov).unwrap() - expect).abs() < 1e-14);
    }
}
