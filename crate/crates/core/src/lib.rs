//! Federated learning with evidential uncertainty heads and uncertainty-aware
//! aggregation.
//!
//! Clients share an MLP encoder and keep private classification heads sized to
//! their own label sets. Heads produce Dirichlet evidence; each client reports
//! the uncertainty threshold that best separates its wrong predictions from its
//! right ones, and the server weights encoder updates by those thresholds.

pub mod data;
pub mod error;
pub mod evidential;
pub mod federation;
pub mod gradcheck;
pub mod metrics;
pub mod numerics;
pub mod rng;
pub mod uaw;

pub use data::{ClientPartition, FederatedDataset, GenSpec, NoiseSpec};
pub use error::{Error, Result};
pub use evidential::{EvidentialOutput, HeadVariant, LossBreakdown, LossConfig};
pub use federation::{run_experiment, AggregationMode, ExperimentResult, Federation, RunConfig};
pub use metrics::{ClientEval, EvalReport};
pub use numerics::{Checkpoint, ModelParams, Tensor2};
pub use uaw::{ClientReport, UncertaintyRecord};
