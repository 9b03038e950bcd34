use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LdsError, Result};
use crate::model::{enforce_stability, LdsParams};

use super::wishart::sample_inverse_wishart_with;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomLdsConfig {
    pub d: usize,
    pub d_out: usize,
    /// Uniform support of the raw `A` and `C` entries.
    #[serde(default = "default_range")]
    pub entry_range: (f64, f64),
    /// Inverse-Wishart degrees of freedom; `None` uses `dim + 2` for each covariance.
    #[serde(default)]
    pub iw_dof: Option<usize>,
    pub seed: u64,
}

fn default_range() -> (f64, f64) {
    (-1.0, 1.0)
}

impl RandomLdsConfig {
    pub fn new(d: usize, d_out: usize, seed: u64) -> Self {
        Self {
            d,
            d_out,
            entry_range: default_range(),
            iw_dof: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 1 || self.d_out < 1 {
            return Err(LdsError::Invalid("d and d_out must be at least 1".into()));
        }
        let (lo, hi) = self.entry_range;
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(LdsError::Invalid(format!("bad entry range [{lo}, {hi}]")));
        }
        if let Some(dof) = self.iw_dof {
            let dim = self.d.max(self.d_out);
            if dof <= dim + 1 {
                return Err(LdsError::Invalid(format!(
                    "iw_dof must exceed dim + 1 = {} for a finite mean",
                    dim + 1
                )));
            }
        }
        Ok(())
    }
}

/// Raw uniform draws for `A` and `C` before any stability rescaling.
fn raw_blocks(config: &RandomLdsConfig, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    let (lo, hi) = config.entry_range;
    let a = DMatrix::from_fn(config.d, config.d, |_, _| rng.random_range(lo..hi));
    let c = DMatrix::from_fn(config.d_out, config.d, |_, _| rng.random_range(lo..hi));
    (a, c)
}

/// A random system with uniform `A`, `C`, stabilised `A` and inverse-Wishart covariances.
pub fn random_stable_lds(config: &RandomLdsConfig) -> Result<LdsParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (a_raw, c) = raw_blocks(config, &mut rng);
    let a = enforce_stability(&a_raw)?;
    let dof = |dim: usize| config.iw_dof.unwrap_or(dim + 2);
    let r1 = sample_inverse_wishart_with(config.d, dof(config.d), &mut rng)?;
    let r2 = sample_inverse_wishart_with(config.d_out, dof(config.d_out), &mut rng)?;
    let r0 = sample_inverse_wishart_with(config.d, dof(config.d), &mut rng)?;
    LdsParams::new(a, c, r1, r2, DVector::zeros(config.d), r0)
}
