//! Brute-force reference computations built from the explicit joint Gaussian of
//! states and observations. Cubic in `T·d`, so only for short sequences.
#![allow(dead_code)]

use ldsmdl::{LdsParams, SequenceData};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub struct JointGaussian {
    pub mean_x: DVector<f64>,
    pub cov_xx: DMatrix<f64>,
    pub mean_y: DVector<f64>,
    pub cov_yy: DMatrix<f64>,
    pub cov_xy: DMatrix<f64>,
}

fn mat_pow(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    (0..k).fold(DMatrix::identity(a.nrows(), a.ncols()), |acc, _| acc * a)
}

/// Stacked `x_{1:T}` and `y_{1:T}` written as a linear map of independent noise blocks.
pub fn joint(params: &LdsParams, t_len: usize) -> JointGaussian {
    let d = params.d();
    let m = params.d_out();
    let n = d * t_len;
    // x_t = A^{t-1} x_1 + Σ_{s<t} A^{t-1-s} w_s
    let mut map = DMatrix::zeros(n, n);
    let mut noise = DMatrix::zeros(n, n);
    for t in 0..t_len {
        for s in 0..=t {
            map.view_mut((t * d, s * d), (d, d)).copy_from(&mat_pow(&params.a, t - s));
        }
        let cov = if t == 0 { &params.r0 } else { &params.r1 };
        noise.view_mut((t * d, t * d), (d, d)).copy_from(cov);
    }
    let mut mean_x = DVector::zeros(n);
    for t in 0..t_len {
        mean_x.rows_mut(t * d, d).copy_from(&(mat_pow(&params.a, t) * &params.mu0));
    }
    let cov_xx = &map * noise * map.transpose();
    let mut big_c = DMatrix::zeros(m * t_len, n);
    let mut big_r2 = DMatrix::zeros(m * t_len, m * t_len);
    for t in 0..t_len {
        big_c.view_mut((t * m, t * d), (m, d)).copy_from(&params.c);
        big_r2.view_mut((t * m, t * m), (m, m)).copy_from(&params.r2);
    }
    let mean_y = &big_c * &mean_x;
    let cov_xy = &cov_xx * big_c.transpose();
    let cov_yy = &big_c * &cov_xy + big_r2;
    JointGaussian {
        mean_x,
        cov_xx,
        mean_y,
        cov_yy,
        cov_xy,
    }
}

fn stacked(data: &SequenceData) -> DVector<f64> {
    let m = data.d_out();
    DVector::from_fn(data.len() * m, |i, _| data.y[(i / m, i % m)])
}

pub fn log_normal(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let k = x.len() as f64;
    let lu = cov.clone().lu();
    let r = x - mean;
    let sol = lu.solve(&r).expect("oracle covariance is invertible");
    -0.5 * (k * (2.0 * std::f64::consts::PI).ln() + lu.determinant().ln() + r.dot(&sol))
}

/// `log p(y_{1:T})` from the joint marginal of the observations.
pub fn loglik(params: &LdsParams, data: &SequenceData) -> f64 {
    let j = joint(params, data.len());
    log_normal(&stacked(data), &j.mean_y, &j.cov_yy)
}

/// `log p(y_t | y_{1:t-1})` as differences of prefix marginals.
pub fn step_logliks(params: &LdsParams, data: &SequenceData) -> Vec<f64> {
    let m = data.d_out();
    let j = joint(params, data.len());
    let y = stacked(data);
    let prefix = |t: usize| -> f64 {
        if t == 0 {
            return 0.0;
        }
        let k = t * m;
        log_normal(
            &y.rows(0, k).into_owned(),
            &j.mean_y.rows(0, k).into_owned(),
            &j.cov_yy.view((0, 0), (k, k)).into_owned(),
        )
    };
    (1..=data.len()).map(|t| prefix(t) - prefix(t - 1)).collect()
}

pub struct Posterior {
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    /// `Cov(x_{t+1}, x_t | Y)` for `t = 1..T-1`.
    pub cross: Vec<DMatrix<f64>>,
}

/// Exact conditioning of the stacked states on all observations.
pub fn posterior(params: &LdsParams, data: &SequenceData) -> Posterior {
    let d = params.d();
    let t_len = data.len();
    let j = joint(params, t_len);
    let lu = j.cov_yy.clone().lu();
    let gain = lu
        .solve(&j.cov_xy.transpose())
        .expect("oracle covariance is invertible")
        .transpose();
    let mean = &j.mean_x + &gain * (stacked(data) - &j.mean_y);
    let cov = &j.cov_xx - &gain * j.cov_xy.transpose();
    Posterior {
        means: (0..t_len).map(|t| mean.rows(t * d, d).into_owned()).collect(),
        covs: (0..t_len).map(|t| cov.view((t * d, t * d), (d, d)).into_owned()).collect(),
        cross: (0..t_len.saturating_sub(1))
            .map(|t| cov.view(((t + 1) * d, t * d), (d, d)).into_owned())
            .collect(),
    }
}

/// Truncated series `Σ_{k<terms} A^k W (Aᵀ)^k`.
pub fn lyapunov_series(a: &DMatrix<f64>, w: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(w.nrows(), w.ncols());
    let mut pk = DMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..terms {
        acc += &pk * w * pk.transpose();
        pk = a * pk;
    }
    acc
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, ridge: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    &g * g.transpose() / n as f64 + DMatrix::identity(n, n) * ridge
}

/// A matrix with spectral radius at most `radius`, built by scaling a Gaussian draw.
pub fn random_stable(rng: &mut ChaCha8Rng, d: usize, radius: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let rho = g
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    g * (radius * rng.random_range(0.2..1.0) / rho)
}

/// Random valid model with a stable transition and well-conditioned noise.
pub fn random_model(seed: u64, d: usize, d_out: usize) -> LdsParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_stable(&mut rng, d, 0.95);
    let c = DMatrix::from_fn(d_out, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let r1 = random_spd(&mut rng, d, 0.1);
    let r2 = random_spd(&mut rng, d_out, 0.1);
    let mu0 = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let r0 = random_spd(&mut rng, d, 0.1);
    LdsParams::new(a, c, r1, r2, mu0, r0).expect("random model is valid")
}

pub fn random_data(seed: u64, t_len: usize, d_out: usize) -> SequenceData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xDA7A);
    SequenceData::new(DMatrix::from_fn(t_len, d_out, |_, _| rng.sample::<f64, _>(StandardNormal)))
        .expect("finite data")
}
