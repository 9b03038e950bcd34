use nalgebra::DMatrix;

use crate::error::{LdsError, Result};
use crate::model::SequenceData;

fn require_scalar(data: &SequenceData) -> Result<()> {
    if data.d_out() != 1 {
        return Err(LdsError::Dimension(format!(
            "expected a scalar sequence, got d_out={}",
            data.d_out()
        )));
    }
    Ok(())
}

/// Subtracts the sample mean, then drops samples outside `[lo, hi]`.
pub fn preprocess_center_trim(data: &SequenceData, bounds: (f64, f64)) -> Result<SequenceData> {
    require_scalar(data)?;
    let (lo, hi) = bounds;
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(LdsError::Invalid(format!("bad trimming bounds [{lo}, {hi}]")));
    }
    let mean = data.y.mean();
    let kept: Vec<f64> = data
        .y
        .iter()
        .map(|v| v - mean)
        .filter(|v| (lo..=hi).contains(v))
        .collect();
    if kept.is_empty() {
        return Err(LdsError::InsufficientData("no samples left after trimming".into()));
    }
    let mut out = SequenceData::from_scalars(&kept)?;
    out.seed = data.seed;
    Ok(out)
}

/// Delay embedding: row `t` is `(y_{t+d-1}, …, y_t)`, giving `T - d + 1` rows.
pub fn delay_embed(data: &SequenceData, d: usize) -> Result<SequenceData> {
    require_scalar(data)?;
    if d < 1 {
        return Err(LdsError::Invalid("embedding dimension must be at least 1".into()));
    }
    let t_len = data.len();
    if t_len <= d {
        return Err(LdsError::InsufficientData(format!(
            "delay embedding of order {d} needs T > {d}, got {t_len}"
        )));
    }
    let rows = t_len - d + 1;
    let y = DMatrix::from_fn(rows, d, |t, j| data.y[(t + d - 1 - j, 0)]);
    let mut out = SequenceData::new(y)?;
    out.seed = data.seed;
    Ok(out)
}
