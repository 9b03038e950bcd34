//! Penalised-likelihood model-selection criteria and the stability-coupled description length.

mod fisher;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::em::{FitMode, FitResult};
use crate::error::{LdsError, Result};
use crate::inference::{complete_data_loglik, SmoothedPosterior};
use crate::model::{solve_discrete_lyapunov, stationary_obs_log_det, LdsParams, SequenceData};

pub use fisher::{
    empirical_fisher_log_det, flatten_params, leading_coordinate_step_logliks, unflatten_params,
    FisherEstimate, FISHER_REL_TOL, FISHER_STEP,
};

/// Asymptotic lattice quantisation constant `1/(2πe)`.
pub const KAPPA_ASYMPTOTIC: f64 = 1.0 / (2.0 * std::f64::consts::PI * std::f64::consts::E);

/// Uniform-quantiser constant `1/12`, the alternative used by the MME adaptation.
pub const KAPPA_UNIFORM: f64 = 1.0 / 12.0;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CriterionName {
    #[serde(rename = "AIC")]
    Aic,
    #[serde(rename = "BIC")]
    Bic,
    #[serde(rename = "FIA")]
    Fia,
    #[serde(rename = "MME")]
    Mme,
    #[serde(rename = "MDL")]
    Mdl,
}

impl CriterionName {
    pub const ALL: [CriterionName; 5] = [
        CriterionName::Aic,
        CriterionName::Bic,
        CriterionName::Fia,
        CriterionName::Mme,
        CriterionName::Mdl,
    ];

    /// Lower-case column name used in sweep tables.
    pub fn key(self) -> &'static str {
        match self {
            CriterionName::Aic => "aic",
            CriterionName::Bic => "bic",
            CriterionName::Fia => "fia",
            CriterionName::Mme => "mme",
            CriterionName::Mdl => "mdl",
        }
    }
}

impl fmt::Display for CriterionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key().to_ascii_uppercase())
    }
}

impl FromStr for CriterionName {
    type Err = LdsError;

    fn from_str(s: &str) -> Result<Self> {
        CriterionName::ALL
            .into_iter()
            .find(|c| c.key().eq_ignore_ascii_case(s))
            .ok_or_else(|| LdsError::Parse(format!("unknown criterion {s:?}")))
    }
}

/// A criterion score whose value is the sum of its named components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionValue {
    pub name: CriterionName,
    pub order: usize,
    pub value: f64,
    pub components: BTreeMap<String, f64>,
}

impl CriterionValue {
    fn from_components(name: CriterionName, order: usize, parts: &[(&str, f64)]) -> Self {
        let components: BTreeMap<String, f64> =
            parts.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let value = components.values().sum();
        Self {
            name,
            order,
            value,
            components,
        }
    }

    /// Same score attributed to latent order `order`.
    pub fn at_order(mut self, order: usize) -> Self {
        self.order = order;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub n_theta: usize,
    pub breakdown: BTreeMap<String, usize>,
}

impl ParamCount {
    fn from_blocks(blocks: &[(&str, usize)]) -> Self {
        let breakdown: BTreeMap<String, usize> =
            blocks.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        Self {
            n_theta: breakdown.values().sum(),
            breakdown,
        }
    }
}

fn tri(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Raw entry count of every parameter block, similarity redundancy included.
pub fn count_params(d: usize, d_out: usize) -> ParamCount {
    ParamCount::from_blocks(&[
        ("A", d * d),
        ("C", d * d_out),
        ("R1", tri(d)),
        ("R2", tri(d_out)),
        ("mu0", d),
        ("R0", tri(d)),
    ])
}

/// Count for observable-state fits, where `C` and `R2` are fixed.
pub fn count_params_observable(d: usize) -> ParamCount {
    ParamCount::from_blocks(&[("A", d * d), ("R1", tri(d)), ("mu0", d), ("R0", tri(d))])
}

pub fn count_params_for(mode: FitMode, d: usize, d_out: usize) -> ParamCount {
    match mode {
        FitMode::Latent => count_params(d, d_out),
        FitMode::ObservableState => count_params_observable(d),
    }
}

/// Lattice quantisation constant; the asymptotic value is used for every dimension.
pub fn kappa_d(_d: usize) -> f64 {
    KAPPA_ASYMPTOTIC
}

pub fn aic(loglik: f64, n_theta: usize) -> CriterionValue {
    CriterionValue::from_components(
        CriterionName::Aic,
        0,
        &[("fit", -2.0 * loglik), ("penalty", 2.0 * n_theta as f64)],
    )
}

pub fn bic(loglik: f64, n_theta: usize, n: usize) -> CriterionValue {
    CriterionValue::from_components(
        CriterionName::Bic,
        0,
        &[("fit", -2.0 * loglik), ("penalty", n_theta as f64 * (n as f64).ln())],
    )
}

/// `fisher_log_det` stands in for `log ∫ √det I(θ) dθ`; see [`empirical_fisher_log_det`].
pub fn fia(loglik: f64, n_theta: usize, n: usize, fisher_log_det: f64) -> CriterionValue {
    let k = n_theta as f64;
    CriterionValue::from_components(
        CriterionName::Fia,
        0,
        &[
            ("fit", -loglik),
            ("parameter_penalty", 0.5 * k * ((n as f64).ln() - LN_2PI)),
            ("geometric_complexity", fisher_log_det),
        ],
    )
}

/// Minimum-message-length score with the `1/12` quantisation constant.
pub fn mme(loglik: f64, n_theta: usize, n: usize) -> CriterionValue {
    let k = n_theta as f64;
    CriterionValue::from_components(
        CriterionName::Mme,
        0,
        &[
            ("fit", -loglik),
            ("parameter_penalty", 0.5 * k * (n as f64 * KAPPA_UNIFORM).ln()),
            ("lattice", 0.5 * k),
        ],
    )
}

/// Order-dependent part of the description length, `(d/2) ln(2N²/(2π)²)`.
///
/// Assembled as `(d/2)(1 + ln κ_d - ln 2π) + (d/2) ln(2N²)`: the lattice term plus the
/// large-sample Fisher terms.
pub fn mdl_order_penalty(d: usize, n: usize) -> f64 {
    let half_d = 0.5 * d as f64;
    let nf = n as f64;
    half_d * (1.0 + kappa_d(d).ln() - LN_2PI) + half_d * (2.0 * nf * nf).ln()
}

/// Description length from an already evaluated goodness-of-fit term.
///
/// `fit_loglik` plays the role of `log p(Y | X̂, θ)`; the stability term is
/// `½ log det(C Q Cᵀ + R2)` with `Q = A Q Aᵀ + R1`.
pub fn mdl_from_parts(fit_loglik: f64, params: &LdsParams, n: usize) -> Result<CriterionValue> {
    if n < 1 {
        return Err(LdsError::Invalid("sample size must be at least 1".into()));
    }
    let q = solve_discrete_lyapunov(&params.a, &params.r1)?;
    let log_det = stationary_obs_log_det(params, &q)?;
    let d = params.d();
    Ok(CriterionValue::from_components(
        CriterionName::Mdl,
        d,
        &[
            ("fit", -fit_loglik),
            ("stability", 0.5 * log_det),
            ("order_penalty", mdl_order_penalty(d, n)),
        ],
    ))
}

/// Description length of a fitted model with the prior term dropped (ML estimates).
pub fn mdl_description_length(
    fit: &FitResult,
    posterior: &SmoothedPosterior,
    data: &SequenceData,
    n: usize,
) -> Result<CriterionValue> {
    let fit_term = complete_data_loglik(&fit.params, posterior, data)?;
    mdl_from_parts(fit_term, &fit.params, n)
}

/// Min-max rescaling of scores of one criterion to `[0, 1]`; a constant list maps to zeros.
pub fn normalize_values(values: &[CriterionValue]) -> Result<Vec<f64>> {
    if let Some(first) = values.first() {
        if values.iter().any(|v| v.name != first.name) {
            return Err(LdsError::Invalid("cannot normalise values of different criteria".into()));
        }
    }
    let raw: Vec<f64> = values.iter().map(|v| v.value).collect();
    Ok(min_max_normalize(&raw))
}

pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    values
        .iter()
        .map(|&v| if range > 0.0 { (v - lo) / range } else { 0.0 })
        .collect()
}
