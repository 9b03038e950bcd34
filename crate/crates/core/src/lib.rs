//! Fitting time-invariant linear dynamical systems by EM and choosing their latent
//! dimension with a description-length criterion tied to system stability.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: parameters, sequences, spectral radius, discrete Lyapunov solver, simulation.
//! * [`inference`]: Kalman filter, RTS smoother with lag-one cross-covariances.
//! * [`em`]: M-step, EM loop with stability enforcement, multi-restart fitting.
//! * [`criteria`]: AIC, BIC, FIA, MME and the description length (MDL).
//! * [`selection`]: top-down annihilation search and a full grid sweep over orders.
//! * [`datagen`]: random stable systems, inverse-Wishart draws, NARMA benchmarks.

pub mod criteria;
pub mod datagen;
pub mod em;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod selection;

pub use error::{LdsError, Result};
pub use model::{LdsParams, ModelOrderBounds, SequenceData};
