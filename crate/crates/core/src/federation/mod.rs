//! The federated round engine.
//!
//! Each round the server broadcasts the global encoder, every client trains its
//! own copy together with its private head, reports an uncertainty threshold and
//! its updated encoder, and the server averages the encoders with weights chosen
//! by the aggregation mode. Heads never leave the clients.

mod client;
mod config;
mod experiment;

pub use client::{ClientState, LocalOutcome};
pub use config::{AggregationMode, RunConfig};
pub use experiment::{
    evaluate_models, run_experiment, ClientRoundRecord, ExperimentResult, Federation, RoundRecord,
    ServerState, ROUND_LOG_HEADER,
};
