use nalgebra::linalg::Schur;
use nalgebra::DMatrix;

use crate::error::{LdsError, Result};

/// Radii at or above `1 - STABILITY_MARGIN` count as unstable.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// An unstable transition matrix is divided by this multiple of its spectral radius.
pub const RESCALE_FACTOR: f64 = 1.1;

fn check_square_finite(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(LdsError::Dimension(format!(
            "expected a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(LdsError::Invalid("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Largest eigenvalue magnitude of a square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    check_square_finite(a)?;
    if a.nrows() == 1 {
        return Ok(a[(0, 0)].abs());
    }
    let max_niter = SCHUR_ITERS_PER_DIM * a.nrows();
    match Schur::try_new(a.clone(), f64::EPSILON, max_niter) {
        Some(schur) => Ok(schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)),
        None => Ok(gelfand_radius(a)),
    }
}

/// Francis iterations allowed per dimension before falling back to [`gelfand_radius`];
/// an unbounded Schur loop can spin forever on some matrices.
pub const SCHUR_ITERS_PER_DIM: usize = 200;

const GELFAND_SQUARINGS: i32 = 40;

/// `ρ(A) = lim ‖A^n‖^{1/n}` evaluated at `n = 2^40` by repeated squaring with rescaling.
pub fn gelfand_radius(a: &DMatrix<f64>) -> f64 {
    let mut m = a.clone();
    // log of the scale carried outside `m`, so that A^(2^k) = exp(log_scale) * m
    let mut log_scale = 0.0;
    for _ in 0..GELFAND_SQUARINGS {
        let s = m.amax();
        if s == 0.0 {
            return 0.0;
        }
        m /= s;
        log_scale += s.ln();
        m = &m * &m;
        log_scale *= 2.0;
    }
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    ((log_scale + norm.ln()) / 2f64.powi(GELFAND_SQUARINGS)).exp()
}

pub fn is_stable_radius(rho: f64) -> bool {
    rho < 1.0 - STABILITY_MARGIN
}

/// Result of [`stabilize`]: the (possibly rescaled) matrix and the radius that triggered rescaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Stabilized {
    pub matrix: DMatrix<f64>,
    pub rescaled_from: Option<f64>,
}

/// Like [`enforce_stability`], also reporting whether a rescale happened.
pub fn stabilize(a: &DMatrix<f64>) -> Result<Stabilized> {
    let rho = spectral_radius(a)?;
    if is_stable_radius(rho) {
        return Ok(Stabilized {
            matrix: a.clone(),
            rescaled_from: None,
        });
    }
    Ok(Stabilized {
        matrix: a / (RESCALE_FACTOR * rho),
        rescaled_from: Some(rho),
    })
}

/// Returns `A` when it is stable, otherwise `A / (1.1 ρ(A))` whose radius is `1/1.1`.
pub fn enforce_stability(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(stabilize(a)?.matrix)
}
