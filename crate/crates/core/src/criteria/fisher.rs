//! Empirical Fisher information from finite-difference per-step scores.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::FitMode;
use crate::error::{LdsError, Result};
use crate::linalg::pseudo_log_det;
use crate::model::{LdsParams, SequenceData};

/// Relative finite-difference step: `h = FISHER_STEP * max(|θ_i|, 1)`.
pub const FISHER_STEP: f64 = 1e-5;

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const FISHER_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherEstimate {
    /// `½` pseudo log-determinant of the average score outer product.
    pub half_log_det: f64,
    pub rank: usize,
    pub n_params: usize,
    /// Parameters whose central difference failed and fell back to a one-sided one.
    pub one_sided: usize,
}

fn push_upper(m: &DMatrix<f64>, out: &mut Vec<f64>) {
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
}

fn push_row_major(m: &DMatrix<f64>, out: &mut Vec<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
}

/// Free parameters in block order `A, C, R1, R2, μ0, R0`; symmetric blocks contribute
/// their upper triangle. Observable-state mode omits the fixed `C` and `R2`.
pub fn flatten_params(params: &LdsParams, mode: FitMode) -> Vec<f64> {
    let mut out = Vec::new();
    push_row_major(&params.a, &mut out);
    if mode == FitMode::Latent {
        push_row_major(&params.c, &mut out);
    }
    push_upper(&params.r1, &mut out);
    if mode == FitMode::Latent {
        push_upper(&params.r2, &mut out);
    }
    out.extend(params.mu0.iter());
    push_upper(&params.r0, &mut out);
    out
}

struct Cursor<'a> {
    values: &'a [f64],
    pos: usize,
}

impl Cursor<'_> {
    fn next(&mut self) -> Result<f64> {
        let v = self
            .values
            .get(self.pos)
            .copied()
            .ok_or_else(|| LdsError::Dimension("parameter vector too short".into()))?;
        self.pos += 1;
        Ok(v)
    }

    fn fill_row_major(&mut self, m: &mut DMatrix<f64>) -> Result<()> {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                m[(i, j)] = self.next()?;
            }
        }
        Ok(())
    }

    fn fill_upper(&mut self, m: &mut DMatrix<f64>) -> Result<()> {
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                let v = self.next()?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(())
    }
}

/// Inverse of [`flatten_params`]; blocks not in the vector are copied from `template`.
///
/// The result is not validated, so perturbed covariances may be indefinite.
pub fn unflatten_params(template: &LdsParams, values: &[f64], mode: FitMode) -> Result<LdsParams> {
    let mut p = template.clone();
    let mut cur = Cursor { values, pos: 0 };
    cur.fill_row_major(&mut p.a)?;
    if mode == FitMode::Latent {
        cur.fill_row_major(&mut p.c)?;
    }
    cur.fill_upper(&mut p.r1)?;
    if mode == FitMode::Latent {
        cur.fill_upper(&mut p.r2)?;
    }
    for i in 0..p.mu0.len() {
        p.mu0[i] = cur.next()?;
    }
    cur.fill_upper(&mut p.r0)?;
    if cur.pos != values.len() {
        return Err(LdsError::Dimension(format!(
            "parameter vector has {} entries, layout uses {}",
            values.len(),
            cur.pos
        )));
    }
    Ok(p)
}

/// One-step predictive log-densities of the leading coordinate of a delay embedding.
///
/// Entry `k` is `log N(e_{r,0}; (A e_{r-1})_0, R1_00)` for row `r = first_row + k`,
/// treating the embedded vectors as the observed state.
pub fn leading_coordinate_step_logliks(
    params: &LdsParams,
    embedded: &SequenceData,
    first_row: usize,
) -> Result<Vec<f64>> {
    let d = params.d();
    if embedded.d_out() != d {
        return Err(LdsError::Dimension(format!(
            "embedding width {} does not match d={d}",
            embedded.d_out()
        )));
    }
    if first_row < 1 || first_row >= embedded.len() {
        return Err(LdsError::InsufficientData(format!(
            "first scored row {first_row} outside 1..{}",
            embedded.len()
        )));
    }
    let var = params.r1[(0, 0)];
    if !var.is_finite() || var <= 0.0 {
        return Err(LdsError::Degenerate("leading innovation variance is not positive".into()));
    }
    let norm = -0.5 * ((2.0 * std::f64::consts::PI).ln() + var.ln());
    let a0 = params.a.row(0);
    Ok((first_row..embedded.len())
        .map(|r| {
            let prev = embedded.y.row(r - 1);
            let pred = a0.dot(&prev);
            let e = embedded.y[(r, 0)] - pred;
            norm - 0.5 * e * e / var
        })
        .collect())
}

/// `½` pseudo log-det of the empirical Fisher information `(1/N) Σ_t s_t s_tᵀ` at `params`.
///
/// `step_logliks` maps parameters to per-step log-likelihoods; scores `s_t` are central
/// differences in each free parameter, falling back to a one-sided difference when one
/// of the perturbed models cannot be evaluated.
pub fn empirical_fisher_log_det<F>(params: &LdsParams, mode: FitMode, step_logliks: F) -> Result<FisherEstimate>
where
    F: Fn(&LdsParams) -> Result<Vec<f64>> + Sync,
{
    let theta = flatten_params(params, mode);
    let base = step_logliks(params)?;
    let n_steps = base.len();
    if n_steps == 0 {
        return Err(LdsError::InsufficientData("no scored steps".into()));
    }
    let eval = |i: usize, delta: f64| -> Option<Vec<f64>> {
        let mut t = theta.clone();
        t[i] += delta;
        let p = unflatten_params(params, &t, mode).ok()?;
        let l = step_logliks(&p).ok()?;
        (l.len() == n_steps && l.iter().all(|v| v.is_finite())).then_some(l)
    };

    let columns: Vec<Result<(DVector<f64>, bool)>> = (0..theta.len())
        .into_par_iter()
        .map(|i| {
            let h = FISHER_STEP * theta[i].abs().max(1.0);
            let col = match (eval(i, h), eval(i, -h)) {
                (Some(p), Some(m)) => (DVector::from_fn(n_steps, |t, _| (p[t] - m[t]) / (2.0 * h)), false),
                (Some(p), None) => (DVector::from_fn(n_steps, |t, _| (p[t] - base[t]) / h), true),
                (None, Some(m)) => (DVector::from_fn(n_steps, |t, _| (base[t] - m[t]) / h), true),
                (None, None) => {
                    return Err(LdsError::Degenerate(format!(
                        "likelihood undefined on both sides of parameter {i}"
                    )))
                }
            };
            Ok(col)
        })
        .collect();

    let mut scores = DMatrix::zeros(n_steps, theta.len());
    let mut one_sided = 0;
    for (i, col) in columns.into_iter().enumerate() {
        let (col, fallback) = col?;
        one_sided += usize::from(fallback);
        scores.set_column(i, &col);
    }

    // Nonzero spectra of SᵀS and SSᵀ coincide; use the smaller Gram matrix.
    let gram = if n_steps < theta.len() {
        &scores * scores.transpose()
    } else {
        scores.transpose() * &scores
    } / n_steps as f64;
    let (log_det, rank) = pseudo_log_det(&gram, FISHER_REL_TOL);
    Ok(FisherEstimate {
        half_log_det: 0.5 * log_det,
        rank,
        n_params: theta.len(),
        one_sided,
    })
}
