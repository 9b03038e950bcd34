use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LdsError, Result};
use crate::model::SequenceData;

/// Magnitude beyond which a NARMA trajectory is declared divergent.
pub const NARMA_DIVERGENCE: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum NarmaOrder {
    Ten,
    Twenty,
    Thirty,
}

impl NarmaOrder {
    pub fn value(self) -> usize {
        match self {
            NarmaOrder::Ten => 10,
            NarmaOrder::Twenty => 20,
            NarmaOrder::Thirty => 30,
        }
    }

    fn step(self, x_now: f64, x_sum: f64, u_now: f64, u_lag: f64) -> f64 {
        match self {
            NarmaOrder::Ten => 0.3 * x_now + 0.05 * x_now * x_sum + 1.5 * u_lag * u_now + 0.1,
            NarmaOrder::Twenty => {
                (0.3 * x_now + 0.05 * x_now * x_sum + 1.5 * u_lag * u_now + 0.01).tanh() + 0.2
            }
            NarmaOrder::Thirty => 0.2 * x_now + 0.004 * x_now * x_sum + 1.5 * u_lag * u_now + 0.201,
        }
    }
}

impl TryFrom<usize> for NarmaOrder {
    type Error = String;

    fn try_from(v: usize) -> std::result::Result<Self, String> {
        match v {
            10 => Ok(NarmaOrder::Ten),
            20 => Ok(NarmaOrder::Twenty),
            30 => Ok(NarmaOrder::Thirty),
            _ => Err(format!("NARMA order must be 10, 20 or 30, got {v}")),
        }
    }
}

impl From<NarmaOrder> for usize {
    fn from(o: NarmaOrder) -> usize {
        o.value()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarmaSpec {
    pub order: NarmaOrder,
    pub length: usize,
    #[serde(default = "default_input_range")]
    pub input_range: (f64, f64),
    pub seed: u64,
}

fn default_input_range() -> (f64, f64) {
    (0.0, 0.5)
}

impl NarmaSpec {
    pub fn new(order: NarmaOrder, length: usize, seed: u64) -> Self {
        Self {
            order,
            length,
            input_range: default_input_range(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < self.order.value() + 1 {
            return Err(LdsError::Invalid(format!(
                "NARMA length must be at least {}, got {}",
                self.order.value() + 1,
                self.length
            )));
        }
        let (lo, hi) = self.input_range;
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(LdsError::Invalid(format!("bad input range [{lo}, {hi}]")));
        }
        Ok(())
    }
}

/// Runs the recursion on explicit inputs `u(0), u(1), …` from zero histories.
///
/// Returns `x(1), …, x(n)` where `n = inputs.len()`; `x(t)` and `u(t)` are zero for `t ≤ 0`
/// and `t < 0` respectively.
pub fn narma_recursion(order: NarmaOrder, inputs: &[f64]) -> Result<Vec<f64>> {
    let n = order.value();
    // x[k] holds x(k); x(0) = 0
    let mut x = vec![0.0; inputs.len() + 1];
    let mut window_sum = 0.0;
    for t in 0..inputs.len() {
        // Σ_{i=0}^{n-1} x(t-i), maintained incrementally over the zero-padded history
        window_sum += x[t];
        if t >= n {
            window_sum -= x[t - n];
        }
        let u_lag = if t + 1 >= n { inputs[t + 1 - n] } else { 0.0 };
        let next = order.step(x[t], window_sum, inputs[t], u_lag);
        if !next.is_finite() || next.abs() > NARMA_DIVERGENCE {
            return Err(LdsError::Diverged {
                step: t + 1,
                value: next.abs(),
            });
        }
        x[t + 1] = next;
    }
    x.remove(0);
    Ok(x)
}

/// A NARMA sequence of `spec.length` values after discarding `order` warm-up outputs.
pub fn narma_generate(spec: &NarmaSpec) -> Result<SequenceData> {
    spec.validate()?;
    let warm = spec.order.value();
    let (lo, hi) = spec.input_range;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let inputs: Vec<f64> = (0..warm + spec.length).map(|_| rng.random_range(lo..hi)).collect();
    let x = narma_recursion(spec.order, &inputs)?;
    Ok(SequenceData::from_scalars(&x[warm..])?.with_seed(spec.seed))
}
