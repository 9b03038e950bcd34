use nalgebra::{DMatrix, DVector};

use super::params::LdsParams;
use super::stability::{is_stable_radius, spectral_radius};
use crate::error::{LdsError, Result};
use crate::linalg;

/// Above this dimension the d²-sized linear system is replaced by doubling iteration.
pub const VECTORIZED_MAX_DIM: usize = 32;

const DOUBLING_TOL: f64 = 1e-12;
const DOUBLING_MAX_STEPS: usize = 64;

/// Solves `Q = A Q Aᵀ + W` for stable `A`, i.e. `Q = Σ_m A^m W (Aᵀ)^m`.
///
/// `Q` is the stationary covariance of `x_{t+1} = A x_t + w_t` with `w_t ~ N(0, W)`.
pub fn solve_discrete_lyapunov(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    if w.nrows() != d || w.ncols() != d {
        return Err(LdsError::Dimension(format!(
            "W must be {d}x{d}, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    if !linalg::all_finite(w) {
        return Err(LdsError::Invalid("W has non-finite entries".into()));
    }
    let rho = spectral_radius(a)?;
    if !is_stable_radius(rho) {
        return Err(LdsError::Unstable(rho));
    }
    let w = linalg::symmetrize(w);
    let q = if d <= VECTORIZED_MAX_DIM {
        solve_vectorized(a, &w)?
    } else {
        solve_doubling(a, &w)
    };
    Ok(linalg::symmetrize(&q))
}

fn solve_vectorized(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    let n = d * d;
    // column-major vec: vec(A Q Aᵀ) = (A ⊗ A) vec(Q)
    let system = DMatrix::<f64>::identity(n, n) - a.kronecker(a);
    let lu = system.lu();
    let solve = |rhs: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let b = DVector::from_column_slice(rhs.as_slice());
        let x = lu
            .solve(&b)
            .ok_or_else(|| LdsError::Degenerate("Lyapunov system is singular".into()))?;
        Ok(DMatrix::from_column_slice(d, d, x.as_slice()))
    };
    let mut q = solve(w)?;
    // one step of iterative refinement on the fixed-point residual
    let residual = w + a * &q * a.transpose() - &q;
    q += solve(&residual)?;
    Ok(q)
}

fn solve_doubling(a: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = w.clone();
    let mut ak = a.clone();
    for _ in 0..DOUBLING_MAX_STEPS {
        let step = &ak * &q * ak.transpose();
        let done = step.norm() <= DOUBLING_TOL * q.norm().max(1.0);
        q += step;
        if done {
            break;
        }
        ak = &ak * &ak;
    }
    q
}

/// log det(C Q Cᵀ + R2), the observation-space stationary covariance.
pub fn stationary_obs_log_det(params: &LdsParams, q: &DMatrix<f64>) -> Result<f64> {
    let d = params.d();
    if q.nrows() != d || q.ncols() != d {
        return Err(LdsError::Dimension(format!("Q must be {d}x{d}")));
    }
    let cov = &params.c * q * params.c.transpose() + &params.r2;
    linalg::log_det_pd(&cov).ok_or_else(|| {
        LdsError::Degenerate("stationary observation covariance is not positive definite".into())
    })
}
