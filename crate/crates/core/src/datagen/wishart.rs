use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{LdsError, Result};
use crate::linalg::symmetrize;

/// Draws `W⁻¹` with `W ~ Wishart(I, dof)` using the Bartlett decomposition.
pub fn sample_inverse_wishart(dim: usize, dof: usize, seed: u64) -> Result<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_inverse_wishart_with(dim, dof, &mut rng)
}

/// As [`sample_inverse_wishart`], drawing from a caller-supplied generator.
pub fn sample_inverse_wishart_with<R: Rng + ?Sized>(dim: usize, dof: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if dim == 0 {
        return Err(LdsError::Invalid("inverse-Wishart dimension must be positive".into()));
    }
    if dof < dim {
        return Err(LdsError::Invalid(format!(
            "inverse-Wishart needs dof > dim - 1, got dof={dof}, dim={dim}"
        )));
    }
    // W = L Lᵀ with L lower triangular, L_ii = sqrt(χ²_{dof-i}), L_ij ~ N(0,1) below.
    let mut l = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        let chi = ChiSquared::new((dof - i) as f64)
            .map_err(|e| LdsError::Invalid(format!("chi-squared: {e}")))?;
        l[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            l[(i, j)] = rng.sample(StandardNormal);
        }
    }
    // (L Lᵀ)⁻¹ = L⁻ᵀ L⁻¹
    let l_inv = l
        .solve_lower_triangular(&DMatrix::identity(dim, dim))
        .ok_or_else(|| LdsError::Degenerate("singular Bartlett factor".into()))?;
    Ok(symmetrize(&(l_inv.transpose() * l_inv)))
}
