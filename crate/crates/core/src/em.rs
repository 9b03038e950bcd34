//! M-step updates, the EM loop with stability enforcement, and multi-restart fitting.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LdsError, Result};
use crate::inference::{e_step, SmoothedPosterior};
use crate::linalg::{self, floor_eigenvalues};
use crate::model::{stabilize, LdsParams, SequenceData};

/// Eigenvalue floor applied to every fitted covariance.
pub const COVARIANCE_FLOOR: f64 = 1e-10;

/// Observation-noise level held fixed in observable-state mode.
pub const OBSERVABLE_NOISE: f64 = 1e-6;

/// Accumulators with reciprocal condition number below this cannot be inverted.
pub const MIN_ACCUMULATOR_RCOND: f64 = 1e-12;

/// How the observation equation is treated during fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// `C` and `R2` are learned.
    #[default]
    Latent,
    /// The state is observed directly: `C = I` and `R2 = 1e-6 I` stay fixed.
    ObservableState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    /// Stop once `|L(θ_k) - L(θ_{k-1})| < eps`.
    pub eps: f64,
    pub max_iters: usize,
    pub n_restarts: usize,
    pub seed: u64,
    #[serde(default)]
    pub mode: FitMode,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            max_iters: 200,
            n_restarts: 10,
            seed: 0,
            mode: FitMode::Latent,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.eps.is_finite() || self.eps <= 0.0 {
            return Err(LdsError::Invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if self.max_iters < 1 {
            return Err(LdsError::Invalid("max_iters must be at least 1".into()));
        }
        if self.n_restarts < 1 {
            return Err(LdsError::Invalid("n_restarts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: LdsParams,
    /// Filter log-likelihood of `params`.
    pub loglik: f64,
    /// Log-likelihood of the initial parameters followed by one entry per iteration.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Trace indices whose parameters came from a stability rescale of `A`.
    pub rescaled_at: Vec<usize>,
    /// Trace indices whose parameters needed covariance flooring.
    pub floored_at: Vec<usize>,
    /// Which restart produced this fit, when it came from [`multi_restart_fit`].
    pub restart: Option<usize>,
}

/// Output of one M-step together with the flooring flag.
#[derive(Debug, Clone)]
pub struct MStepOutcome {
    pub params: LdsParams,
    pub floored: bool,
}

fn sum_matrices<'a>(items: impl Iterator<Item = &'a DMatrix<f64>>, d: usize) -> DMatrix<f64> {
    items.fold(DMatrix::zeros(d, d), |acc, z| acc + z)
}

/// Solves `X S = B` for symmetric PD `S`, i.e. `X = B S⁻¹`.
fn right_divide(b: &DMatrix<f64>, s: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if linalg::reciprocal_condition(s) < MIN_ACCUMULATOR_RCOND {
        return Err(LdsError::RankDeficient(format!("{what} is singular")));
    }
    let chol = linalg::symmetrize(s)
        .cholesky()
        .ok_or_else(|| LdsError::RankDeficient(format!("{what} is not positive definite")))?;
    Ok(chol.solve(&b.transpose()).transpose())
}

/// Closed-form maximisation of the expected complete-data log-likelihood.
pub fn m_step(posterior: &SmoothedPosterior, data: &SequenceData, d: usize) -> Result<LdsParams> {
    Ok(m_step_mode(posterior, data, d, FitMode::Latent)?.params)
}

pub fn m_step_mode(
    posterior: &SmoothedPosterior,
    data: &SequenceData,
    d: usize,
    mode: FitMode,
) -> Result<MStepOutcome> {
    let t_len = data.len();
    data.require_fittable()?;
    if posterior.len() != t_len || posterior.z_cross.len() + 1 != t_len {
        return Err(LdsError::Dimension(format!(
            "posterior covers {} steps, data has {t_len}",
            posterior.len()
        )));
    }
    if posterior.means[0].len() != d {
        return Err(LdsError::Dimension(format!(
            "posterior state dimension {} does not match d={d}",
            posterior.means[0].len()
        )));
    }
    let m = data.d_out();
    if mode == FitMode::ObservableState && m != d {
        return Err(LdsError::Dimension(format!(
            "observable-state mode needs d_out == d, got d_out={m}, d={d}"
        )));
    }
    let tf = t_len as f64;

    // Σ_{t=2}^T Z_{t,t-1},  Σ_{t=1}^{T-1} Z_t,  Σ_{t=2}^T Z_t,  Σ_t Z_t
    let s_cross = sum_matrices(posterior.z_cross.iter(), d);
    let s_prev = sum_matrices(posterior.z[..t_len - 1].iter(), d);
    let s_next = sum_matrices(posterior.z[1..].iter(), d);
    let s_all = &s_prev + &posterior.z[t_len - 1];

    let a = right_divide(&s_cross, &s_prev, "Σ Z_{t-1}")?;
    let r1_raw = (&s_next - &a * s_cross.transpose()) / (tf - 1.0);

    let (c, r2_raw) = match mode {
        FitMode::Latent => {
            let mut s_yx = DMatrix::zeros(m, d);
            for (t, mean) in posterior.means.iter().enumerate() {
                s_yx += data.obs(t) * mean.transpose();
            }
            let c = right_divide(&s_yx, &s_all, "Σ Z_t")?;
            let mut r2 = DMatrix::zeros(m, m);
            for (t, mean) in posterior.means.iter().enumerate() {
                let y = data.obs(t);
                r2 += &y * y.transpose() - &c * mean * y.transpose();
            }
            (c, r2 / tf)
        }
        FitMode::ObservableState => (
            DMatrix::identity(d, d),
            DMatrix::identity(d, d) * OBSERVABLE_NOISE,
        ),
    };

    let mu0 = posterior.means[0].clone();
    let r0_raw = &posterior.z[0] - &mu0 * mu0.transpose();

    let (r1, f1) = floor_eigenvalues(&r1_raw, COVARIANCE_FLOOR);
    let (r2, f2) = match mode {
        FitMode::Latent => floor_eigenvalues(&r2_raw, COVARIANCE_FLOOR),
        FitMode::ObservableState => (r2_raw, false),
    };
    let (r0, f0) = floor_eigenvalues(&r0_raw, COVARIANCE_FLOOR);

    let params = LdsParams { a, c, r1, r2, mu0, r0 };
    if !params.a.iter().chain(params.c.iter()).all(|v| v.is_finite()) {
        return Err(LdsError::Degenerate("M-step produced non-finite parameters".into()));
    }
    Ok(MStepOutcome {
        params,
        floored: f1 || f2 || f0,
    })
}

/// Runs EM from `init` until the absolute log-likelihood change drops below `eps`.
///
/// After every M-step the transition matrix passes through [`stabilize`]; iterations
/// where that rescale fired are listed in [`FitResult::rescaled_at`].
pub fn em_fit(data: &SequenceData, d: usize, init: &LdsParams, config: &EmConfig) -> Result<FitResult> {
    config.validate()?;
    data.require_fittable()?;
    init.validate()?;
    if init.d() != d {
        return Err(LdsError::Dimension(format!(
            "initial parameters have d={}, expected {d}",
            init.d()
        )));
    }
    let start = stabilize(&init.a)?;
    if let Some(rho) = start.rescaled_from {
        return Err(LdsError::Unstable(rho));
    }

    let mut params = init.clone();
    let (filter, mut posterior) = e_step(&params, data)?;
    let mut trace = vec![filter.loglik];
    let mut rescaled_at = Vec::new();
    let mut floored_at = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iters {
        iterations += 1;
        let outcome = m_step_mode(&posterior, data, d, config.mode)?;
        let mut next = outcome.params;
        let stab = stabilize(&next.a)?;
        next.a = stab.matrix;
        if stab.rescaled_from.is_some() {
            rescaled_at.push(iterations);
        }
        if outcome.floored {
            floored_at.push(iterations);
        }
        let (filter, post) = e_step(&next, data)?;
        let prev = *trace.last().expect("trace is non-empty");
        trace.push(filter.loglik);
        params = next;
        posterior = post;
        if (filter.loglik - prev).abs() < config.eps {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        params,
        loglik: *trace.last().expect("trace is non-empty"),
        loglik_trace: trace,
        converged,
        iterations,
        rescaled_at,
        floored_at,
        restart: None,
    })
}

/// SplitMix64 finaliser; maps `(base, stream)` to a well-mixed seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed used by restart `index` of a multi-restart fit with base seed `seed`.
pub fn restart_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, index as u64)
}

fn haar_orthogonal(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Random starting point: `A = 0.5 U` for a random orthogonal `U`, standard normal `C`,
/// unit covariances, and `mu0` mapping the sample mean back through `C⁺`.
pub fn random_init(data: &SequenceData, d: usize, seed: u64, mode: FitMode) -> Result<LdsParams> {
    if d == 0 {
        return Err(LdsError::Invalid("latent dimension must be at least 1".into()));
    }
    let m = data.d_out();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = haar_orthogonal(&mut rng, d) * 0.5;
    let (c, r2) = match mode {
        FitMode::Latent => (
            DMatrix::from_fn(m, d, |_, _| rng.sample::<f64, _>(StandardNormal)),
            DMatrix::identity(m, m),
        ),
        FitMode::ObservableState => {
            if m != d {
                return Err(LdsError::Dimension(format!(
                    "observable-state mode needs d_out == d, got d_out={m}, d={d}"
                )));
            }
            (DMatrix::identity(d, d), DMatrix::identity(d, d) * OBSERVABLE_NOISE)
        }
    };
    let mean: DVector<f64> = data.y.row_mean().transpose();
    let mu0 = linalg::pseudo_inverse(&c) * mean;
    LdsParams::new(a, c, DMatrix::identity(d, d), r2, mu0, DMatrix::identity(d, d))
}

/// EM from `n_restarts` seeded random starts; keeps the highest final log-likelihood.
///
/// Restart `r` always uses [`restart_seed`]`(config.seed, r)`, so a larger restart budget
/// evaluates a superset of the starts of a smaller one.
pub fn multi_restart_fit(data: &SequenceData, d: usize, config: &EmConfig) -> Result<FitResult> {
    config.validate()?;
    let results: Vec<Result<FitResult>> = (0..config.n_restarts)
        .into_par_iter()
        .map(|r| {
            let init = random_init(data, d, restart_seed(config.seed, r), config.mode)?;
            let mut fit = em_fit(data, d, &init, config)?;
            fit.restart = Some(r);
            Ok(fit)
        })
        .collect();

    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    for res in results {
        match res {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.loglik > b.loglik) {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.expect("at least one restart ran"))
}
