//! Synthetic data: random stable systems, inverse-Wishart covariances, NARMA benchmarks,
//! preprocessing and delay embedding.

mod lds;
mod narma;
mod preprocess;
mod wishart;

pub use lds::{random_stable_lds, RandomLdsConfig};
pub use narma::{narma_generate, narma_recursion, NarmaOrder, NarmaSpec, NARMA_DIVERGENCE};
pub use preprocess::{delay_embed, preprocess_center_trim};
pub use wishart::{sample_inverse_wishart, sample_inverse_wishart_with};
