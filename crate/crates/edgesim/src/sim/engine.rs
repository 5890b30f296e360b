//! The deterministic event loop: arrivals route to pods, completions record
//! latencies against the SLA policy, control ticks run the autoscaler, and
//! scale commands actuate pod lifecycle changes.
//!
//! Per-request latency is queue wait plus deterministic service time
//! (1/service_rate), plus one cloud-edge round trip for the persistent-store
//! hop every served request takes. The tier latency is added to the recorded
//! latency only; it does not occupy the pod.

use thiserror::Error;

use super::cluster::{ActiveRequest, ClusterState, NodeSpec, RouteOutcome};
use super::event::{EventKind, EventQueue};
use super::trace::{TraceEventKind, TraceRecord, TraceSink};
use crate::controller::{PolicyError, ScalingPolicy, TickContext};
use crate::sla::{MetricsLedger, ReplicaSample, SlaPolicy};
use crate::workload::Arrival;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Static simulation parameters (cluster topology and timing constants).
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub horizon_s: f64,
    pub control_period_s: f64,
    pub cold_start_delay_s: f64,
    /// One-way cloud-edge latency; requests pay a full round trip (ms).
    pub tier_latency_ms: f64,
    /// Deterministic per-pod service rate (req/s).
    pub service_rate: f64,
    pub pod_cpu_request: f64,
    /// FIFO queue capacity per pod (and for the parked queue).
    pub queue_cap: usize,
    pub nodes: Vec<NodeSpec>,
    /// Width of the arrival-count buckets fed to the forecaster (s).
    pub bucket_width_s: f64,
    /// Pods provisioned Ready at t = 0 (normally min_replicas).
    pub initial_replicas: u32,
}

/// Arrival counts per elapsed bucket, maintained online.
struct RateTracker {
    width_s: f64,
    counts: Vec<u64>,
}

impl RateTracker {
    fn new(width_s: f64) -> Self {
        Self { width_s, counts: Vec::new() }
    }

    fn record(&mut self, t: f64) {
        let idx = (t / self.width_s) as usize;
        if idx >= self.counts.len() {
            self.counts.resize(idx + 1, 0);
        }
        self.counts[idx] += 1;
    }

    /// All buckets fully elapsed by `now`.
    fn completed(&mut self, now: f64) -> &[u64] {
        let n = (now / self.width_s).floor() as usize;
        if self.counts.len() < n {
            self.counts.resize(n, 0);
        }
        &self.counts[..n]
    }
}

/// Runs one simulation to the horizon and returns the complete ledger.
///
/// `arrivals` must be sorted by time (the workload generator guarantees
/// this). The run is strictly single-threaded and deterministic: identical
/// inputs produce an identical event trace.
pub fn run_simulation(
    config: &SimConfig,
    sla: &SlaPolicy,
    arrivals: &[Arrival],
    policy: &mut dyn ScalingPolicy,
    sink: &mut dyn TraceSink,
) -> Result<MetricsLedger, SimError> {
    debug_assert!(arrivals.windows(2).all(|w| w[0].time_s <= w[1].time_s));
    let mut cluster = ClusterState::new(
        &config.nodes,
        config.pod_cpu_request,
        config.service_rate,
        config.queue_cap,
    );
    let mut ledger = MetricsLedger::new();
    let mut events = EventQueue::new();
    let mut tracker = RateTracker::new(config.bucket_width_s);
    let timeout_s = sla.request_timeout_ms / 1000.0;
    let rtt_ms = 2.0 * config.tier_latency_ms;

    for _ in 0..config.initial_replicas {
        cluster.spawn_ready(0.0);
    }
    ledger.replica_samples.push(ReplicaSample {
        time_s: 0.0,
        ready: cluster.ready_count(),
        total: cluster.ordered_count(),
    });

    for arrival in arrivals {
        events.push(arrival.time_s, EventKind::Arrival { request_id: arrival.id });
    }
    if config.control_period_s <= config.horizon_s {
        events.push(config.control_period_s, EventKind::ControlTick);
    }

    let mut last_event_t = 0.0_f64;
    while let Some(event) = events.pop() {
        if event.time_s > config.horizon_s {
            break;
        }
        let now = event.time_s;
        ledger.pod_seconds += cluster.alive_count() as f64 * (now - last_event_t);
        last_event_t = now;

        match event.kind {
            EventKind::Arrival { request_id } => {
                tracker.record(now);
                ledger.generated += 1;
                let request = ActiveRequest { id: request_id, arrival_s: now };
                match cluster.route(request, now) {
                    RouteOutcome::Started { pod_id, completion_s } => {
                        events.push(completion_s, EventKind::ServiceComplete { pod_id });
                        emit(sink, now, TraceEventKind::Arrival, Some(pod_id), &cluster, None, None);
                    }
                    RouteOutcome::Queued { pod_id } => {
                        emit(sink, now, TraceEventKind::Arrival, Some(pod_id), &cluster, None, None);
                    }
                    RouteOutcome::Parked => {
                        emit(sink, now, TraceEventKind::Arrival, None, &cluster, None, None);
                    }
                    RouteOutcome::Dropped { pod_id } => {
                        ledger.record_drop(request_id, now, pod_id);
                        emit(sink, now, TraceEventKind::Drop, pod_id, &cluster, None, None);
                    }
                }
            }
            EventKind::ServiceComplete { pod_id } => {
                let result = cluster.complete(pod_id, now, timeout_s);
                let latency_ms = (now - result.finished.arrival_s) * 1000.0 + rtt_ms;
                if latency_ms > sla.request_timeout_ms {
                    ledger.record_drop(result.finished.id, result.finished.arrival_s, Some(pod_id));
                    emit(sink, now, TraceEventKind::Drop, Some(pod_id), &cluster, Some(latency_ms), None);
                } else {
                    let violated = ledger.record_request(
                        result.finished.id,
                        result.finished.arrival_s,
                        result.start_s,
                        pod_id,
                        latency_ms,
                        sla,
                    );
                    emit(
                        sink,
                        now,
                        TraceEventKind::ServiceComplete,
                        Some(pod_id),
                        &cluster,
                        Some(latency_ms),
                        Some(violated),
                    );
                }
                for shed in result.shed {
                    ledger.record_drop(shed.id, shed.arrival_s, Some(pod_id));
                    emit(sink, now, TraceEventKind::Drop, Some(pod_id), &cluster, None, None);
                }
                if let Some((_, completion_s)) = result.started_next {
                    events.push(completion_s, EventKind::ServiceComplete { pod_id });
                }
            }
            EventKind::PodReady { pod_id } => {
                if cluster.mark_ready(pod_id, now) {
                    ledger.replica_samples.push(ReplicaSample {
                        time_s: now,
                        ready: cluster.ready_count(),
                        total: cluster.ordered_count(),
                    });
                    emit(sink, now, TraceEventKind::PodReady, Some(pod_id), &cluster, None, None);
                    for (request, outcome) in cluster.drain_parked(now, timeout_s) {
                        match outcome {
                            RouteOutcome::Started { pod_id, completion_s } => {
                                let _ = pod_id;
                                events.push(completion_s, EventKind::ServiceComplete { pod_id });
                            }
                            RouteOutcome::Queued { .. } | RouteOutcome::Parked => {}
                            RouteOutcome::Dropped { pod_id } => {
                                ledger.record_drop(request.id, request.arrival_s, pod_id);
                                emit(sink, now, TraceEventKind::Drop, pod_id, &cluster, None, None);
                            }
                        }
                    }
                }
            }
            EventKind::ControlTick => {
                let utilization = cluster.observe_utilization(now);
                let violation_rate = ledger.recent_violation_rate(now, sla.feedback_window_s);
                let decision = {
                    let ctx = TickContext {
                        now,
                        observed_utilization: utilization,
                        ready_replicas: cluster.ready_count(),
                        total_replicas: cluster.ordered_count(),
                        bucket_width_s: config.bucket_width_s,
                        completed_counts: tracker.completed(now),
                        recent_violation_rate: violation_rate,
                    };
                    policy.decide(&ctx)?
                };
                ledger.utilization_samples.push((now, utilization));
                ledger.decisions.push(decision);
                emit(sink, now, TraceEventKind::ControlTick, None, &cluster, None, None);
                if decision.applied != cluster.ordered_count() {
                    events.push(now, EventKind::ScaleCommand { desired: decision.applied });
                }
                let next = now + config.control_period_s;
                if next <= config.horizon_s {
                    events.push(next, EventKind::ControlTick);
                }
            }
            EventKind::ScaleCommand { desired } => {
                let outcome = cluster.scale_to(desired, now, config.cold_start_delay_s);
                ledger.placement_failures += outcome.placement_failures as u64;
                for (pod_id, ready_at) in &outcome.created {
                    let _ = pod_id;
                    events.push(*ready_at, EventKind::PodReady { pod_id: *pod_id });
                }
                ledger.replica_samples.push(ReplicaSample {
                    time_s: now,
                    ready: cluster.ready_count(),
                    total: cluster.ordered_count(),
                });
                emit(sink, now, TraceEventKind::ScaleCommand, None, &cluster, None, None);
            }
        }
    }

    ledger.pod_seconds += cluster.alive_count() as f64 * (config.horizon_s - last_event_t);
    ledger.placement_failures += cluster.placement_failures;
    ledger.in_flight_at_end = cluster.in_flight();
    ledger.replica_samples.push(ReplicaSample {
        time_s: config.horizon_s,
        ready: cluster.ready_count(),
        total: cluster.ordered_count(),
    });
    Ok(ledger)
}

fn emit(
    sink: &mut dyn TraceSink,
    time_s: f64,
    kind: TraceEventKind,
    pod_id: Option<u32>,
    cluster: &ClusterState,
    latency_ms: Option<f64>,
    violated: Option<bool>,
) {
    sink.record(&TraceRecord {
        time_s,
        kind,
        pod_id,
        replicas_ready: cluster.ready_count(),
        replicas_total: cluster.ordered_count(),
        latency_ms,
        violated,
    });
}
