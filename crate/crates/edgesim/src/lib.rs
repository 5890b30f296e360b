//! Deterministic discrete-event simulator of an SLA-constrained cloud+edge
//! microservice cluster with pluggable autoscalers.
//!
//! The crate models a two-tier cluster (resource-rich cloud, constrained
//! edge) serving an open-loop diurnal request workload, and compares three
//! scaling strategies under a latency SLA:
//!
//! - **reactive**: a utilization-target controller in the style of a
//!   horizontal pod autoscaler;
//! - **proactive**: sizing from a request-rate forecast (a from-scratch
//!   LSTM or a Holt-Winters baseline);
//! - **hybrid**: the maximum of both, falling back to the reactive side
//!   while the forecaster has no training data yet.
//!
//! Everything is seeded and single-threaded: a `(config, seed)` pair always
//! reproduces the same event trace bit for bit.
//!
//! Module map: [`workload`] generates arrivals, [`sim`] runs the event loop,
//! [`autoscaler`] holds the decision rules, [`controller`] wires them to the
//! [`forecaster`] at control ticks, [`sla`] does the accounting, and
//! [`harness`] runs whole experiments from TOML configs (the `edgesim`
//! binary is a thin wrapper over it). The `examples/` directory has one
//! runnable example per capability.

pub mod autoscaler;
pub mod controller;
pub mod forecaster;
pub mod harness;
pub mod sim;
pub mod sla;
pub mod workload;

pub use autoscaler::{AutoscalerPolicy, PolicyKind, ScalingDecision};
pub use controller::{ForecasterConfig, ForecasterKind, PolicyController, ScalingPolicy, TickContext};
pub use harness::{ExperimentConfig, RunArtifacts};
pub use sim::{run_simulation, SimConfig, SimError};
pub use sla::{MetricsLedger, SlaPolicy, SummaryReport};
pub use workload::{generate_arrivals, Arrival, RateBucket, WorkloadProfile};
