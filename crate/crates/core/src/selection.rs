//! Order selection: top-down annihilation with the description length, and a grid sweep
//! scoring every order under all five criteria.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{
    self, aic, bic, count_params_for, empirical_fisher_log_det, fia, leading_coordinate_step_logliks,
    mdl_description_length, mdl_from_parts, mme, CriterionName, CriterionValue,
};
use crate::datagen::delay_embed;
use crate::em::{derive_seed, multi_restart_fit, EmConfig, FitMode, FitResult};
use crate::error::{LdsError, Result};
use crate::inference::{e_step, kalman_filter};
use crate::model::{LdsParams, ModelOrderBounds, SequenceData};

/// Goodness-of-fit term of the description length for latent fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdlFit {
    /// Marginal log-likelihood `log p(Y | θ̂)` from the filter.
    #[default]
    Marginal,
    /// Observation likelihood at the smoothed state means, `Σ_t log N(y_t; C x̂_t, R2)`.
    ///
    /// Grows without bound as `R2` shrinks, so its value mostly tracks where EM left
    /// the observation noise.
    SmoothedObservation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub em: EmConfig,
    /// Stop the annihilation loop once the description length rises as the order drops.
    pub early_stop: bool,
    /// Evaluate the Fisher-information term of FIA (one filter pass per parameter and side).
    pub fisher: bool,
    #[serde(default)]
    pub mdl_fit: MdlFit,
}

impl SelectionConfig {
    pub fn new(em: EmConfig) -> Self {
        Self {
            em,
            early_stop: true,
            fisher: true,
            mdl_fit: MdlFit::Marginal,
        }
    }
}

impl From<EmConfig> for SelectionConfig {
    fn from(em: EmConfig) -> Self {
        Self::new(em)
    }
}

/// Outcome of fitting and scoring one candidate order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRecord {
    pub order: usize,
    pub fit: Option<FitResult>,
    /// Description length; `+∞` (serialised as `null`) when the order failed.
    #[serde(with = "finite_or_null")]
    pub dl: f64,
    /// Log-likelihood entering AIC, BIC, FIA and MME.
    pub loglik: Option<f64>,
    /// Goodness-of-fit term of the description length.
    pub fit_term: Option<f64>,
    /// Sample size used by the penalties.
    pub n: usize,
    pub n_theta: usize,
    pub fisher_log_det: Option<f64>,
    pub criteria: Vec<CriterionValue>,
    pub error: Option<String>,
}

impl OrderRecord {
    pub fn criterion(&self, name: CriterionName) -> Option<&CriterionValue> {
        self.criteria.iter().find(|c| c.name == name)
    }

    /// Score under `name`, `+∞` when unavailable.
    pub fn score(&self, name: CriterionName) -> f64 {
        if name == CriterionName::Mdl {
            return self.dl;
        }
        self.criterion(name).map_or(f64::INFINITY, |c| c.value)
    }

    fn failed(order: usize, n: usize, n_theta: usize, err: &LdsError) -> Self {
        Self {
            order,
            fit: None,
            dl: f64::INFINITY,
            loglik: None,
            fit_term: None,
            n,
            n_theta,
            fisher_log_det: None,
            criteria: Vec::new(),
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchKind {
    Annihilation,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub search: SearchKind,
    /// Criterion minimised to pick the order.
    pub criterion: CriterionName,
    pub per_order: Vec<OrderRecord>,
    pub chosen_order: usize,
    pub chosen_params: LdsParams,
    pub stopped_early: bool,
}

impl SelectionTrace {
    pub fn record(&self, order: usize) -> Option<&OrderRecord> {
        self.per_order.iter().find(|r| r.order == order)
    }

    /// Minimiser of `name` over the evaluated orders (lowest order on ties).
    pub fn argmin(&self, name: CriterionName) -> Option<usize> {
        argmin_by(&self.per_order, |r| r.score(name))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn argmin_by(records: &[OrderRecord], score: impl Fn(&OrderRecord) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for r in records {
        let s = score(r);
        if !s.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some((o, b)) => s < b || (s == b && r.order < o),
        };
        if better {
            best = Some((r.order, s));
        }
    }
    best.map(|(o, _)| o)
}

/// Where the data for order `d` comes from and which window is scored.
struct Problem<'a> {
    data: &'a SequenceData,
    d_max: usize,
    mode: FitMode,
}

impl Problem<'_> {
    fn new<'a>(data: &'a SequenceData, bounds: &ModelOrderBounds, mode: FitMode) -> Result<Problem<'a>> {
        data.require_fittable()?;
        if mode == FitMode::ObservableState {
            if data.d_out() != 1 {
                return Err(LdsError::Dimension(
                    "observable-state selection expects a scalar sequence".into(),
                ));
            }
            if data.len() < bounds.d_max() + 2 {
                return Err(LdsError::InsufficientData(format!(
                    "observable-state selection up to order {} needs T >= {}",
                    bounds.d_max(),
                    bounds.d_max() + 2
                )));
            }
        }
        Ok(Problem {
            data,
            d_max: bounds.d_max(),
            mode,
        })
    }

    /// Sample size: `T`, or the number of commonly scored targets in observable mode.
    fn n(&self) -> usize {
        match self.mode {
            FitMode::Latent => self.data.len(),
            FitMode::ObservableState => self.data.len() - self.d_max,
        }
    }

    fn evaluate(&self, order: usize, config: &SelectionConfig) -> OrderRecord {
        let n = self.n();
        let n_theta = count_params_for(self.mode, order, self.data.d_out()).n_theta;
        self.try_evaluate(order, n, n_theta, config)
            .unwrap_or_else(|e| OrderRecord::failed(order, n, n_theta, &e))
    }

    fn try_evaluate(&self, order: usize, n: usize, n_theta: usize, config: &SelectionConfig) -> Result<OrderRecord> {
        let em = EmConfig {
            seed: derive_seed(config.em.seed, order as u64),
            mode: self.mode,
            ..config.em.clone()
        };
        let (fit, loglik, mdl, fisher) = match self.mode {
            FitMode::Latent => {
                let fit = multi_restart_fit(self.data, order, &em)?;
                let mdl = match config.mdl_fit {
                    MdlFit::Marginal => mdl_from_parts(fit.loglik, &fit.params, n)?,
                    MdlFit::SmoothedObservation => {
                        let (_, post) = e_step(&fit.params, self.data)?;
                        mdl_description_length(&fit, &post, self.data, n)?
                    }
                };
                let fisher = config.fisher.then(|| {
                    empirical_fisher_log_det(&fit.params, self.mode, |p| {
                        Ok(kalman_filter(p, self.data)?.step_logliks)
                    })
                });
                (fit.clone(), fit.loglik, mdl, fisher)
            }
            FitMode::ObservableState => {
                let embedded = delay_embed(self.data, order)?;
                let fit = multi_restart_fit(&embedded, order, &em)?;
                // target y_s for s in [d_max, T-1] sits in row s - order + 1
                let first_row = self.d_max - order + 1;
                let steps = leading_coordinate_step_logliks(&fit.params, &embedded, first_row)?;
                let fit_term: f64 = steps.iter().sum();
                let mdl = mdl_from_parts(fit_term, &fit.params, n)?;
                let fisher = config.fisher.then(|| {
                    empirical_fisher_log_det(&fit.params, self.mode, |p| {
                        leading_coordinate_step_logliks(p, &embedded, first_row)
                    })
                });
                (fit, fit_term, mdl, fisher)
            }
        };

        let fisher_log_det = fisher.and_then(|f| f.ok()).map(|f| f.half_log_det);
        let mut values = vec![aic(loglik, n_theta), bic(loglik, n_theta, n)];
        if let Some(g) = fisher_log_det {
            values.push(fia(loglik, n_theta, n, g));
        }
        values.push(mme(loglik, n_theta, n));
        let fit_term = -mdl.components["fit"];
        let dl = mdl.value;
        values.push(mdl);
        Ok(OrderRecord {
            order,
            fit: Some(fit),
            dl,
            loglik: Some(loglik),
            fit_term: Some(fit_term),
            n,
            n_theta,
            fisher_log_det,
            criteria: values.into_iter().map(|v| v.at_order(order)).collect(),
            error: None,
        })
    }
}

fn chosen(records: &[OrderRecord], order: usize) -> LdsParams {
    records
        .iter()
        .find(|r| r.order == order)
        .and_then(|r| r.fit.as_ref())
        .map(|f| f.params.clone())
        .expect("chosen order has a fit")
}

fn all_failed(records: &[OrderRecord]) -> LdsError {
    let detail = records
        .iter()
        .map(|r| format!("d={}: {}", r.order, r.error.as_deref().unwrap_or("no finite score")))
        .collect::<Vec<_>>()
        .join("; ");
    LdsError::AllOrdersFailed(detail)
}

/// Whether the loop stops after appending `dl` to a sequence whose last entry is `prev`.
///
/// Stops when the description length rises relative to the previously evaluated,
/// one-higher order.
pub fn should_stop(prev: f64, current: f64) -> bool {
    prev.is_finite() && current.is_finite() && current > prev
}

/// Top-down search from `d_max`: every order is refitted from fresh random starts and the
/// description-length minimiser is returned.
pub fn annihilation_search(
    data: &SequenceData,
    bounds: &ModelOrderBounds,
    config: &SelectionConfig,
) -> Result<SelectionTrace> {
    config.em.validate()?;
    let problem = Problem::new(data, bounds, config.em.mode)?;
    let mut records: Vec<OrderRecord> = Vec::new();
    let mut stopped_early = false;
    for order in bounds.orders().rev() {
        let rec = problem.evaluate(order, config);
        let prev = records.last().map_or(f64::NAN, |r| r.dl);
        let stop = config.early_stop && should_stop(prev, rec.dl);
        records.push(rec);
        if stop {
            stopped_early = order > bounds.d_min();
            break;
        }
    }
    let order = argmin_by(&records, |r| r.dl).ok_or_else(|| all_failed(&records))?;
    Ok(SelectionTrace {
        search: SearchKind::Annihilation,
        criterion: CriterionName::Mdl,
        chosen_params: chosen(&records, order),
        chosen_order: order,
        per_order: records,
        stopped_early,
    })
}

/// Fits every order in the bounds (concurrently) and picks the minimiser of `criterion`.
pub fn grid_search(
    data: &SequenceData,
    bounds: &ModelOrderBounds,
    config: &SelectionConfig,
    criterion: CriterionName,
) -> Result<SelectionTrace> {
    config.em.validate()?;
    let problem = Problem::new(data, bounds, config.em.mode)?;
    let orders: Vec<usize> = bounds.orders().collect();
    let records: Vec<OrderRecord> = orders
        .par_iter()
        .map(|&order| problem.evaluate(order, config))
        .collect();
    let order = argmin_by(&records, |r| r.score(criterion)).ok_or_else(|| all_failed(&records))?;
    Ok(SelectionTrace {
        search: SearchKind::Grid,
        criterion,
        chosen_params: chosen(&records, order),
        chosen_order: order,
        per_order: records,
        stopped_early: false,
    })
}

/// One row of the criterion sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub order: usize,
    pub loglik: Option<f64>,
    /// Raw scores in [`CriterionName::ALL`] order.
    pub raw: Vec<Option<f64>>,
    /// Min-max normalised scores over the orders where the criterion is available.
    pub normalized: Vec<Option<f64>>,
}

/// Sweep rows sorted by increasing order.
pub fn sweep_rows(trace: &SelectionTrace) -> Vec<SweepRow> {
    let mut records: Vec<&OrderRecord> = trace.per_order.iter().collect();
    records.sort_by_key(|r| r.order);
    let raw: Vec<Vec<Option<f64>>> = records
        .iter()
        .map(|r| {
            CriterionName::ALL
                .iter()
                .map(|&c| Some(r.score(c)).filter(|v| v.is_finite()))
                .collect()
        })
        .collect();
    let mut normalized = vec![vec![None; CriterionName::ALL.len()]; records.len()];
    for k in 0..CriterionName::ALL.len() {
        let idx: Vec<usize> = (0..records.len()).filter(|&i| raw[i][k].is_some()).collect();
        let vals: Vec<f64> = idx.iter().map(|&i| raw[i][k].unwrap()).collect();
        for (&i, v) in idx.iter().zip(criteria::min_max_normalize(&vals)) {
            normalized[i][k] = Some(v);
        }
    }
    records
        .iter()
        .zip(raw.into_iter().zip(normalized))
        .map(|(r, (raw, normalized))| SweepRow {
            order: r.order,
            loglik: r.loglik,
            raw,
            normalized,
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.16e}"))
}

/// Header-bearing CSV: `order, loglik`, the five raw scores, then their normalised values.
pub fn write_sweep_csv<W: Write>(trace: &SelectionTrace, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["order".to_string(), "loglik".to_string()];
    header.extend(CriterionName::ALL.iter().map(|c| c.key().to_string()));
    header.extend(CriterionName::ALL.iter().map(|c| format!("{}_norm", c.key())));
    w.write_record(&header)?;
    for row in sweep_rows(trace) {
        let mut rec = vec![row.order.to_string(), cell(row.loglik)];
        rec.extend(row.raw.iter().map(|v| cell(*v)));
        rec.extend(row.normalized.iter().map(|v| cell(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
