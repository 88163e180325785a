//! Variational Bayesian mixture clustering of categorical data with merge and
//! delete moves (MerDel), and one-shot federated merging of batch-level fits
//! through sufficient statistics (FedMerDel).
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases at the crate root fix the scalar to `f64`, which is what the
//! federation wire format and the CLI use.

pub mod data;
pub mod datagen;
pub mod elbo;
pub mod error;
pub mod federation;
pub mod merdel;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod special;
pub mod varsel;

pub use data::{CategoricalDataset, Layout};
pub use error::{Error, Result};
pub use merdel::{Criterion, Laps, MerDelConfig};
pub use scalar::Scalar;

pub type Priors = model::Priors<f64>;
pub type Responsibilities = model::Responsibilities<f64>;
pub type VariationalParams = model::VariationalParams<f64>;
pub type VariationalState = model::VariationalState<f64>;
pub type SufficientStats = elbo::SufficientStats<f64>;
pub type FittedModel = merdel::FittedModel<f64>;
pub type SelectionState = varsel::SelectionState<f64>;
pub type BatchSummary = federation::BatchSummary<f64>;
pub type GlobalModel = federation::GlobalModel<f64>;
