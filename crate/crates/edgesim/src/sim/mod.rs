//! Deterministic discrete-event simulation of the cloud+edge cluster.

pub mod cluster;
pub mod engine;
pub mod event;
pub mod trace;

pub use cluster::{ActiveRequest, ClusterState, Node, NodeSpec, Pod, PodState, RouteOutcome, Tier};
pub use engine::{run_simulation, SimConfig, SimError};
pub use event::{EventKind, EventQueue, SimEvent};
pub use trace::{NullSink, TraceEventKind, TraceRecord, TraceSink, VecSink};
