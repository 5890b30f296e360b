//! In-process trace sink interface. The simulation core emits one record per
//! processed event; sinks decide what to do with them (collect, write CSV,
//! discard). The core itself never touches the filesystem.

/// Event label carried by a trace record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEventKind {
    Arrival,
    ServiceComplete,
    PodReady,
    ControlTick,
    ScaleCommand,
    /// Request dropped: queue overflow at routing or timeout at dequeue/completion.
    Drop,
}

impl TraceEventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TraceEventKind::Arrival => "arrival",
            TraceEventKind::ServiceComplete => "service_complete",
            TraceEventKind::PodReady => "pod_ready",
            TraceEventKind::ControlTick => "control_tick",
            TraceEventKind::ScaleCommand => "scale_command",
            TraceEventKind::Drop => "drop",
        }
    }
}

/// One trace row; mirrors the trace CSV schema.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub time_s: f64,
    pub kind: TraceEventKind,
    pub pod_id: Option<u32>,
    pub replicas_ready: u32,
    pub replicas_total: u32,
    pub latency_ms: Option<f64>,
    pub violated: Option<bool>,
}

/// Receives every trace record as the simulation produces it.
pub trait TraceSink {
    fn record(&mut self, record: &TraceRecord);
}

/// Discards everything.
#[derive(Debug, Default)]
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _record: &TraceRecord) {}
}

/// Collects records in memory; handy in tests.
#[derive(Debug, Default)]
pub struct VecSink {
    pub records: Vec<TraceRecord>,
}

impl TraceSink for VecSink {
    fn record(&mut self, record: &TraceRecord) {
        self.records.push(*record);
    }
}
