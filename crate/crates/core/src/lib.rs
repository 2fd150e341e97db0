//! Federated short-term load forecasting with personalization layers.
//!
//! The crate simulates a server and a set of smart-meter clients that jointly
//! train an LSTM forecaster. Every parameter group of the model is tagged either
//! shared (aggregated by the server) or personalized (kept on the client), and
//! every transfer between server and clients is counted in a ledger.
//!
//! Modules, bottom-up:
//!
//! - [`numerics`]: dense tensors, elementwise kernels, seeded randomness.
//! - [`model`]: LSTM cell rollout plus MLP head with analytic gradients,
//!   the flat [`model::ParamVector`] and [`model::PartitionScheme`].
//! - [`client_opt`]: Adam, AdamAMS, Prox and ProxAdam local training.
//! - [`server_opt`]: FedAvg, FedAdagrad, FedYogi, FedAdam, FedAvgAdaptive.
//! - [`federation`]: classical and personalized training loops with the
//!   communication ledger.
//! - [`data`]: CSV ingestion, windowing, splits, normalization and a synthetic
//!   heterogeneous client generator.
//! - [`metrics`]: MASE and MSE.
//! - [`cli`]: config-driven experiment runner behind the `plfl` binary.

pub mod cli;
pub mod client_opt;
pub mod data;
pub mod error;
pub mod federation;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod server_opt;

pub use error::{Error, Result};
