use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use super::params::LdsParams;
use super::sequence::SequenceData;
use super::stability::{is_stable_radius, spectral_radius};
use crate::error::{LdsError, Result};
use crate::linalg::psd_factor;

fn standard_normal(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Draws `T` observations after discarding `burn_in` leading ones.
///
/// Every step consumes the same number of normal draws regardless of whether a
/// covariance is zero, so the output is a pure function of `(params, T, burn_in, seed)`.
pub fn simulate(params: &LdsParams, t_len: usize, burn_in: usize, seed: u64) -> Result<SequenceData> {
    params.validate()?;
    if t_len == 0 {
        return Err(LdsError::Invalid("simulation length must be at least 1".into()));
    }
    let rho = spectral_radius(&params.a)?;
    if !is_stable_radius(rho) {
        return Err(LdsError::Unstable(rho));
    }
    let d = params.d();
    let m = params.d_out();
    let l0 = psd_factor(&params.r0);
    let l1 = psd_factor(&params.r1);
    let l2 = psd_factor(&params.r2);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = &params.mu0 + &l0 * standard_normal(&mut rng, d);
    let total = burn_in + t_len;
    let mut y = DMatrix::zeros(t_len, m);
    for t in 0..total {
        let obs = &params.c * &x + &l2 * standard_normal(&mut rng, m);
        if t >= burn_in {
            y.row_mut(t - burn_in).copy_from(&obs.transpose());
        }
        x = &params.a * &x + &l1 * standard_normal(&mut rng, d);
    }
    Ok(SequenceData::new(y)?.with_seed(seed))
}
