//! Deterministic discrete-event simulator of a YARN-like cluster.
//!
//! The crate models a cluster of slave nodes offering `<vCores, memory>`
//! containers, a hierarchical queue tree, and four scheduling-policy
//! combinations (Cap-FIFO, Fair-FIFO, Fair-Fair, Fair-DRF). A mixed workload
//! of two-stage, DAG, DCG and streaming applications is replayed against the
//! cluster and the run is summarised by six metrics.
//!
//! Module map:
//!
//! * [`resource`] - two-dimensional resource arithmetic and dominant shares.
//! * [`workload`] - application types, container demands, workload generation.
//! * [`queue`] - the root/parent/leaf queue tree and capacity accounting.
//! * [`scheduler`] - inter-queue selection, intra-queue policies, placement.
//! * [`engine`] - the event loop and application lifecycle.
//! * [`event_log`] - the line-oriented record of a run.
//! * [`metrics`] - metrics computed from an event log.
//! * [`config`] - run configuration parsing and validation.
//! * [`report`] - CSV emission, single runs and sweeps.

pub mod config;
pub mod engine;
pub mod error;
pub mod event_log;
pub mod metrics;
pub mod queue;
pub mod report;
pub mod resource;
pub mod scheduler;
pub mod time;
pub mod workload;

pub use error::{Error, Result};
pub use resource::Resources;
pub use time::SimTime;
