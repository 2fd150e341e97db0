//! LSTM load forecaster: an LSTM cell rolled over the look-back window,
//! followed by an MLP head on the concatenated hidden states.
//!
//! Parameter groups, in flat order:
//!
//! | group | shape |
//! |---|---|
//! | `lstm.w_i{i,f,g,o}` | hidden × input |
//! | `lstm.w_h{i,f,g,o}` | hidden × hidden |
//! | `lstm.b_{i,f,g,o}` | hidden × 1 |
//! | `mlp.{k}.weight` | out_k × in_k |
//! | `mlp.{k}.bias` | out_k × 1 |
//! | `mlp.{k}.prelu` | 1 × 1, hidden layers only |
//!
//! The LSTM triplets are interleaved per gate (`w_ii, w_hi, b_i, w_if, ...`).

mod lstm;
mod params;

pub use lstm::{
    lstm_cell_forward, ForecastInput, GateCache, LstmCellParams, LstmForecaster, ModelDims, Tape,
};
pub use params::{GroupSpec, ParamVector, PartitionScheme, Schema, Tag};

/// Prefix shared by every LSTM cell group name.
pub const LSTM_PREFIX: &str = "lstm.";
/// Prefix shared by every MLP head group name.
pub const MLP_PREFIX: &str = "mlp.";
/// Initial PReLU slope.
pub const PRELU_INIT: f64 = 0.25;
