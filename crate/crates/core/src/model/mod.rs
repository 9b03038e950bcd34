//! Model parameters, observation sequences, stability tools and forward simulation.

mod lyapunov;
mod params;
mod sequence;
mod simulate;
mod stability;

pub use lyapunov::{solve_discrete_lyapunov, stationary_obs_log_det, VECTORIZED_MAX_DIM};
pub use params::LdsParams;
pub use sequence::{ModelOrderBounds, SequenceData};
pub use simulate::simulate;
pub use stability::{
    enforce_stability, is_stable_radius, spectral_radius, stabilize, Stabilized, RESCALE_FACTOR,
    STABILITY_MARGIN,
};
