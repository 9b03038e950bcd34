//! Exact E-step machinery: Kalman filter, Rauch-Tung-Striebel smoother with lag-one
//! cross-covariances, and the observation likelihood at smoothed state means.

use nalgebra::{DMatrix, DVector};

use crate::error::{LdsError, Result};
use crate::linalg::{self, symmetrize};
use crate::model::{LdsParams, SequenceData};

/// Innovation covariances with reciprocal condition number below this are treated as singular.
pub const MIN_INNOVATION_RCOND: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FilterResult {
    /// `E[x_t | y_1..y_{t-1}]`
    pub pred_means: Vec<DVector<f64>>,
    pub pred_covs: Vec<DMatrix<f64>>,
    /// `E[x_t | y_1..y_t]`
    pub filt_means: Vec<DVector<f64>>,
    pub filt_covs: Vec<DMatrix<f64>>,
    /// `log p(y_t | y_1..y_{t-1})` for every t.
    pub step_logliks: Vec<f64>,
    /// Innovation-form `log p(Y | θ)`.
    pub loglik: f64,
    /// First step from which the predicted and filtered covariances are constant.
    pub steady_from: Option<usize>,
}

impl FilterResult {
    pub fn len(&self) -> usize {
        self.filt_means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filt_means.is_empty()
    }
}

/// State posteriors given the whole sequence plus the second moments used by the M-step.
#[derive(Debug, Clone)]
pub struct SmoothedPosterior {
    /// `x̂_t = E[x_t | Y]`
    pub means: Vec<DVector<f64>>,
    /// `V_t = Cov[x_t | Y]`
    pub covs: Vec<DMatrix<f64>>,
    /// `V_{t,t-1} = Cov[x_t, x_{t-1} | Y]` for t = 2..T (length T - 1).
    pub cross_covs: Vec<DMatrix<f64>>,
    /// `Z_t = V_t + x̂_t x̂_tᵀ`
    pub z: Vec<DMatrix<f64>>,
    /// `Z_{t,t-1} = V_{t,t-1} + x̂_t x̂_{t-1}ᵀ` (length T - 1).
    pub z_cross: Vec<DMatrix<f64>>,
}

impl SmoothedPosterior {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    fn assemble(means: Vec<DVector<f64>>, covs: Vec<DMatrix<f64>>, cross_covs: Vec<DMatrix<f64>>) -> Self {
        let z = means
            .iter()
            .zip(&covs)
            .map(|(m, v)| v + m * m.transpose())
            .collect();
        let z_cross = cross_covs
            .iter()
            .enumerate()
            .map(|(k, v)| v + &means[k + 1] * means[k].transpose())
            .collect();
        Self {
            means,
            covs,
            cross_covs,
            z,
            z_cross,
        }
    }
}

fn check_data(params: &LdsParams, data: &SequenceData) -> Result<()> {
    if data.d_out() != params.d_out() {
        return Err(LdsError::Dimension(format!(
            "data has {} columns but the model observes {}",
            data.d_out(),
            params.d_out()
        )));
    }
    if data.is_empty() {
        return Err(LdsError::InsufficientData("empty sequence".into()));
    }
    Ok(())
}

/// Relative change below which a covariance recursion is treated as having reached its
/// fixed point; from then on the converged matrices are reused and each step costs O(d²).
pub const STEADY_STATE_RTOL: f64 = 1e-13;

fn settled(next: &DMatrix<f64>, prev: &DMatrix<f64>) -> bool {
    (next - prev).amax() <= STEADY_STATE_RTOL * prev.amax()
}

/// Covariance-side quantities of one filter step.
struct CovStep {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    log_det: f64,
    gain: DMatrix<f64>,
    p_pred: DMatrix<f64>,
    p_filt: DMatrix<f64>,
    p_next: DMatrix<f64>,
}

fn cov_step(params: &LdsParams, p_pred: DMatrix<f64>, t: usize) -> Result<CovStep> {
    let d = params.d();
    let m = params.d_out();
    let pc_t = &p_pred * params.c.transpose();
    let s = symmetrize(&(&params.c * &pc_t + &params.r2));
    if m > 1 && linalg::reciprocal_condition(&s) < MIN_INNOVATION_RCOND {
        return Err(LdsError::Degenerate(format!(
            "innovation covariance is singular at t={}",
            t + 1
        )));
    }
    let chol = s.cholesky().ok_or_else(|| {
        LdsError::Degenerate(format!("innovation covariance is not positive definite at t={}", t + 1))
    })?;
    let l = chol.l_dirty();
    let log_det = (0..m).map(|i| 2.0 * l[(i, i)].ln()).sum();
    // K = P Cᵀ S⁻¹
    let gain = chol.solve(&pc_t.transpose()).transpose();
    let i_kc = DMatrix::<f64>::identity(d, d) - &gain * &params.c;
    let p_filt = symmetrize(&(&i_kc * &p_pred * i_kc.transpose() + &gain * &params.r2 * gain.transpose()));
    let p_next = symmetrize(&(&params.a * &p_filt * params.a.transpose() + &params.r1));
    Ok(CovStep {
        chol,
        log_det,
        gain,
        p_pred,
        p_filt,
        p_next,
    })
}

/// Forward pass with Joseph-form covariance updates.
pub fn kalman_filter(params: &LdsParams, data: &SequenceData) -> Result<FilterResult> {
    check_data(params, data)?;
    let m = params.d_out();
    let t_len = data.len();
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();

    let mut out = FilterResult {
        pred_means: Vec::with_capacity(t_len),
        pred_covs: Vec::with_capacity(t_len),
        filt_means: Vec::with_capacity(t_len),
        filt_covs: Vec::with_capacity(t_len),
        step_logliks: Vec::with_capacity(t_len),
        loglik: 0.0,
        steady_from: None,
    };

    let mut x_pred = params.mu0.clone();
    let mut cov = cov_step(params, symmetrize(&params.r0), 0)?;
    for t in 0..t_len {
        if t > 0 && out.steady_from.is_none() {
            let p_pred = std::mem::replace(&mut cov.p_next, DMatrix::zeros(0, 0));
            cov = cov_step(params, p_pred, t)?;
        }
        if out.steady_from.is_none() && settled(&cov.p_next, &cov.p_pred) {
            out.steady_from = Some(t);
        }

        let innov = data.obs(t) - &params.c * &x_pred;
        let quad = innov.dot(&cov.chol.solve(&innov));
        let step = -0.5 * (m as f64 * ln_2pi + cov.log_det + quad);
        if !step.is_finite() {
            return Err(LdsError::Degenerate(format!("non-finite likelihood at t={}", t + 1)));
        }
        let x_filt = &x_pred + &cov.gain * &innov;
        let x_next = &params.a * &x_filt;

        out.loglik += step;
        out.step_logliks.push(step);
        out.pred_means.push(x_pred);
        out.pred_covs.push(cov.p_pred.clone());
        out.filt_means.push(x_filt);
        out.filt_covs.push(cov.p_filt.clone());
        x_pred = x_next;
    }
    Ok(out)
}

/// Backward RTS pass; lag-one cross-covariances use `V_{t+1,t} = V_{t+1} J_tᵀ`.
pub fn rts_smooth(params: &LdsParams, filter: &FilterResult) -> Result<SmoothedPosterior> {
    let t_len = filter.len();
    if t_len == 0 {
        return Err(LdsError::InsufficientData("empty filter result".into()));
    }
    if filter.filt_means[0].len() != params.d() {
        return Err(LdsError::Dimension("filter result does not match the model".into()));
    }
    let steady_from = filter.steady_from.unwrap_or(t_len);
    let mut means = filter.filt_means.clone();
    let mut covs = filter.filt_covs.clone();
    let mut cross = vec![DMatrix::zeros(params.d(), params.d()); t_len - 1];
    let mut steady_gain: Option<DMatrix<f64>> = None;
    let mut steady_cov: Option<(DMatrix<f64>, DMatrix<f64>)> = None;

    for t in (0..t_len - 1).rev() {
        let in_steady = t >= steady_from;
        let p_pred = &filter.pred_covs[t + 1];
        let gain = match &steady_gain {
            Some(g) if in_steady => g.clone(),
            _ => {
                let chol = p_pred.clone().cholesky().ok_or_else(|| {
                    LdsError::Degenerate(format!("predicted covariance is singular at t={}", t + 2))
                })?;
                // J_t = P_t|t Aᵀ P_{t+1|t}⁻¹
                let g = chol.solve(&(&params.a * &filter.filt_covs[t])).transpose();
                if in_steady {
                    steady_gain = Some(g.clone());
                }
                g
            }
        };
        means[t] = &filter.filt_means[t] + &gain * (&means[t + 1] - &filter.pred_means[t + 1]);
        match &steady_cov {
            Some((v, c)) if in_steady => {
                covs[t] = v.clone();
                cross[t] = c.clone();
            }
            _ => {
                let cov = symmetrize(&(&filter.filt_covs[t] + &gain * (&covs[t + 1] - p_pred) * gain.transpose()));
                cross[t] = &covs[t + 1] * gain.transpose();
                if in_steady && settled(&cov, &covs[t + 1]) {
                    steady_cov = Some((cov.clone(), cross[t].clone()));
                }
                covs[t] = cov;
            }
        }
    }
    Ok(SmoothedPosterior::assemble(means, covs, cross))
}

/// Filter followed by smoother.
pub fn e_step(params: &LdsParams, data: &SequenceData) -> Result<(FilterResult, SmoothedPosterior)> {
    let filter = kalman_filter(params, data)?;
    let post = rts_smooth(params, &filter)?;
    Ok((filter, post))
}

/// `Σ_t log N(y_t; C x̂_t, R2)`: the observation likelihood at the smoothed state means.
pub fn complete_data_loglik(params: &LdsParams, posterior: &SmoothedPosterior, data: &SequenceData) -> Result<f64> {
    check_data(params, data)?;
    if posterior.len() != data.len() {
        return Err(LdsError::Dimension(format!(
            "posterior has {} steps but data has {}",
            posterior.len(),
            data.len()
        )));
    }
    let m = params.d_out();
    let chol = symmetrize(&params.r2)
        .cholesky()
        .ok_or_else(|| LdsError::Degenerate("observation noise covariance R2 is singular".into()))?;
    let l = chol.l_dirty();
    let log_det: f64 = (0..m).map(|i| 2.0 * l[(i, i)].ln()).sum();
    let norm = -0.5 * (m as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
    let mut total = 0.0;
    for (t, mean) in posterior.means.iter().enumerate() {
        let r = data.obs(t) - &params.c * mean;
        total += norm - 0.5 * r.dot(&chol.solve(&r));
    }
    Ok(total)
}
