//! Cluster state: two-tier nodes, pods with a cold-start lifecycle, FIFO
//! per-pod queues, round-robin routing over Ready pods, and scaling
//! actuation.
//!
//! Service pods are placed on edge nodes only; the cloud tier stands in for
//! the persistent store, whose access cost is the per-request tier latency
//! applied by the engine. Routing walks Ready pods in fixed id order with a
//! cursor, so a stable Ready set receives perfectly fair assignment.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// Which layer a node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Cloud,
    Edge,
}

/// Static description of one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub tier: Tier,
    pub cpu_capacity: f64,
}

/// A node hosting pods, with CPU bookkeeping.
#[derive(Debug, Clone)]
pub struct Node {
    pub id: u32,
    pub tier: Tier,
    pub cpu_capacity: f64,
    pub cpu_allocated: f64,
    pub pods: BTreeSet<u32>,
}

impl Node {
    pub fn spare_cpu(&self) -> f64 {
        self.cpu_capacity - self.cpu_allocated
    }
}

/// Pod lifecycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PodState {
    Pending,
    Ready,
    Terminating,
}

/// A request moving through the cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveRequest {
    pub id: u64,
    pub arrival_s: f64,
}

#[derive(Debug, Clone, Copy)]
struct Serving {
    request: ActiveRequest,
    start_s: f64,
}

/// A service replica with its FIFO queue and busy-time accounting.
#[derive(Debug, Clone)]
pub struct Pod {
    pub id: u32,
    pub node_id: u32,
    pub state: PodState,
    pub created_s: f64,
    pub ready_at_s: f64,
    pub cpu_request: f64,
    pub service_rate: f64,
    queue: VecDeque<ActiveRequest>,
    serving: Option<Serving>,
    /// Busy time already banked inside the current utilization window.
    window_busy_s: f64,
}

impl Pod {
    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_busy(&self) -> bool {
        self.serving.is_some()
    }

    fn service_time(&self) -> f64 {
        1.0 / self.service_rate
    }
}

/// Where a routed request ended up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RouteOutcome {
    /// Pod was idle; service starts immediately and completes at `completion_s`.
    Started { pod_id: u32, completion_s: f64 },
    /// Pod busy; request joined its FIFO queue.
    Queued { pod_id: u32 },
    /// No Ready pod; request parked until the next PodReady.
    Parked,
    /// Queue at capacity; request dropped.
    Dropped { pod_id: Option<u32> },
}

/// Result of a pod finishing a request.
#[derive(Debug)]
pub struct CompletionResult {
    pub finished: ActiveRequest,
    pub start_s: f64,
    /// Next request started from the queue, with its completion time.
    pub started_next: Option<(ActiveRequest, f64)>,
    /// Requests shed at dequeue because they outwaited the timeout.
    pub shed: Vec<ActiveRequest>,
    /// True when a Terminating pod drained and was removed.
    pub pod_removed: bool,
}

/// Result of applying a scaling decision.
#[derive(Debug, Default, PartialEq)]
pub struct ScaleOutcome {
    /// (pod id, ready time) for each Pending pod created.
    pub created: Vec<(u32, f64)>,
    /// Pods marked Terminating that still have work to drain.
    pub terminating: Vec<u32>,
    /// Idle pods removed immediately.
    pub removed: Vec<u32>,
    pub placement_failures: u32,
}

/// Mutable cluster: nodes, pods, rotation cursor, parked requests.
#[derive(Debug, Clone)]
pub struct ClusterState {
    pub nodes: Vec<Node>,
    pods: BTreeMap<u32, Pod>,
    ready: BTreeSet<u32>,
    rr_cursor: Option<u32>,
    parked: VecDeque<ActiveRequest>,
    next_pod_id: u32,
    pod_cpu_request: f64,
    service_rate: f64,
    queue_cap: usize,
    /// Start of the current utilization window (last control tick).
    window_start_s: f64,
    pub placement_failures: u64,
}

impl ClusterState {
    pub fn new(specs: &[NodeSpec], pod_cpu_request: f64, service_rate: f64, queue_cap: usize) -> Self {
        let nodes = specs
            .iter()
            .enumerate()
            .map(|(i, s)| Node {
                id: i as u32,
                tier: s.tier,
                cpu_capacity: s.cpu_capacity,
                cpu_allocated: 0.0,
                pods: BTreeSet::new(),
            })
            .collect();
        Self {
            nodes,
            pods: BTreeMap::new(),
            ready: BTreeSet::new(),
            rr_cursor: None,
            parked: VecDeque::new(),
            next_pod_id: 0,
            pod_cpu_request,
            service_rate,
            queue_cap,
            window_start_s: 0.0,
            placement_failures: 0,
        }
    }

    pub fn pod(&self, id: u32) -> Option<&Pod> {
        self.pods.get(&id)
    }

    pub fn pods(&self) -> impl Iterator<Item = &Pod> {
        self.pods.values()
    }

    pub fn ready_count(&self) -> u32 {
        self.ready.len() as u32
    }

    /// Ready + Pending replicas: the ordered capacity scaling reasons about.
    pub fn ordered_count(&self) -> u32 {
        self.pods
            .values()
            .filter(|p| p.state != PodState::Terminating)
            .count() as u32
    }

    /// Every pod still holding node resources, including draining ones.
    pub fn alive_count(&self) -> u32 {
        self.pods.len() as u32
    }

    pub fn parked_len(&self) -> usize {
        self.parked.len()
    }

    /// Requests currently queued, in service, or parked.
    pub fn in_flight(&self) -> u64 {
        let in_pods: usize = self
            .pods
            .values()
            .map(|p| p.queue.len() + usize::from(p.serving.is_some()))
            .sum();
        (in_pods + self.parked.len()) as u64
    }

    /// Picks the edge node with the most spare CPU (ties: lowest id).
    /// Cloud nodes never host service pods.
    fn place_pod(&self) -> Option<u32> {
        self.nodes
            .iter()
            .filter(|n| n.tier == Tier::Edge && n.spare_cpu() >= self.pod_cpu_request - 1e-12)
            .max_by(|a, b| {
                a.spare_cpu()
                    .partial_cmp(&b.spare_cpu())
                    .unwrap()
                    .then(b.id.cmp(&a.id))
            })
            .map(|n| n.id)
    }

    fn create_pod(&mut self, now: f64, state: PodState, ready_at_s: f64) -> Option<u32> {
        let node_id = match self.place_pod() {
            Some(id) => id,
            None => {
                self.placement_failures += 1;
                return None;
            }
        };
        let id = self.next_pod_id;
        self.next_pod_id += 1;
        let pod = Pod {
            id,
            node_id,
            state,
            created_s: now,
            ready_at_s,
            cpu_request: self.pod_cpu_request,
            service_rate: self.service_rate,
            queue: VecDeque::new(),
            serving: None,
            window_busy_s: 0.0,
        };
        let node = &mut self.nodes[node_id as usize];
        node.cpu_allocated += self.pod_cpu_request;
        node.pods.insert(id);
        if state == PodState::Ready {
            self.ready.insert(id);
        }
        self.pods.insert(id, pod);
        Some(id)
    }

    /// Creates one Ready pod immediately (initial provisioning at t = 0).
    pub fn spawn_ready(&mut self, now: f64) -> Option<u32> {
        self.create_pod(now, PodState::Ready, now)
    }

    /// Advances the rotation: smallest Ready id greater than the cursor,
    /// wrapping to the smallest Ready id.
    fn next_ready_pod(&mut self) -> Option<u32> {
        let next = match self.rr_cursor {
            Some(cursor) => self
                .ready
                .range((cursor + 1)..)
                .next()
                .copied()
                .or_else(|| self.ready.iter().next().copied()),
            None => self.ready.iter().next().copied(),
        }?;
        self.rr_cursor = Some(next);
        Some(next)
    }

    /// Routes one request: next Ready pod in rotation, FIFO queue when busy,
    /// parked when no pod is Ready, dropped when the target queue is full.
    pub fn route(&mut self, request: ActiveRequest, now: f64) -> RouteOutcome {
        let pod_id = match self.next_ready_pod() {
            Some(id) => id,
            None => {
                if self.parked.len() >= self.queue_cap {
                    return RouteOutcome::Dropped { pod_id: None };
                }
                self.parked.push_back(request);
                return RouteOutcome::Parked;
            }
        };
        let pod = self.pods.get_mut(&pod_id).expect("ready pod exists");
        if pod.serving.is_none() {
            pod.serving = Some(Serving { request, start_s: now });
            RouteOutcome::Started {
                pod_id,
                completion_s: now + pod.service_time(),
            }
        } else if pod.queue.len() < self.queue_cap {
            pod.queue.push_back(request);
            RouteOutcome::Queued { pod_id }
        } else {
            RouteOutcome::Dropped { pod_id: Some(pod_id) }
        }
    }

    /// Transitions a Pending pod to Ready. Returns false if the pod no
    /// longer exists (terminated while pending).
    pub fn mark_ready(&mut self, pod_id: u32, now: f64) -> bool {
        match self.pods.get_mut(&pod_id) {
            Some(pod) if pod.state == PodState::Pending => {
                pod.state = PodState::Ready;
                pod.ready_at_s = now;
                self.ready.insert(pod_id);
                true
            }
            _ => false,
        }
    }

    /// Drains the parked queue through normal routing. Requests that
    /// outwaited the timeout are shed.
    pub fn drain_parked(&mut self, now: f64, timeout_s: f64) -> Vec<(ActiveRequest, RouteOutcome)> {
        let mut out = Vec::new();
        if self.ready.is_empty() {
            return out;
        }
        while let Some(request) = self.parked.pop_front() {
            if now - request.arrival_s > timeout_s {
                out.push((request, RouteOutcome::Dropped { pod_id: None }));
                continue;
            }
            let outcome = self.route(request, now);
            out.push((request, outcome));
            if matches!(outcome, RouteOutcome::Parked) {
                // Routing parked it again; the ready set emptied mid-drain.
                break;
            }
        }
        out
    }

    /// Finishes the current request on a pod and pulls the next one from its
    /// queue, shedding entries whose wait exceeds the timeout.
    pub fn complete(&mut self, pod_id: u32, now: f64, timeout_s: f64) -> CompletionResult {
        let window_start = self.window_start_s;
        let pod = self.pods.get_mut(&pod_id).expect("completing pod exists");
        let serving = pod.serving.take().expect("pod was serving");
        pod.window_busy_s += now - serving.start_s.max(window_start);

        let mut shed = Vec::new();
        let mut started_next = None;
        while let Some(next) = pod.queue.pop_front() {
            if now - next.arrival_s > timeout_s {
                shed.push(next);
                continue;
            }
            pod.serving = Some(Serving { request: next, start_s: now });
            started_next = Some((next, now + pod.service_time()));
            break;
        }

        let pod_removed = pod.state == PodState::Terminating && pod.serving.is_none();
        if pod_removed {
            self.remove_pod(pod_id);
        }
        CompletionResult {
            finished: serving.request,
            start_s: serving.start_s,
            started_next,
            shed,
            pod_removed,
        }
    }

    fn remove_pod(&mut self, pod_id: u32) {
        if let Some(pod) = self.pods.remove(&pod_id) {
            self.ready.remove(&pod_id);
            let node = &mut self.nodes[pod.node_id as usize];
            node.cpu_allocated -= pod.cpu_request;
            node.pods.remove(&pod_id);
        }
    }

    /// Applies a clamped scaling target: tops up with Pending pods (cold
    /// start applies) or marks the highest-id pods Terminating.
    pub fn scale_to(&mut self, desired: u32, now: f64, cold_start_delay_s: f64) -> ScaleOutcome {
        let mut outcome = ScaleOutcome::default();
        let current = self.ordered_count();
        if desired > current {
            for _ in 0..(desired - current) {
                let ready_at = now + cold_start_delay_s;
                match self.create_pod(now, PodState::Pending, ready_at) {
                    Some(id) => outcome.created.push((id, ready_at)),
                    None => outcome.placement_failures += 1,
                }
            }
        } else if desired < current {
            let victims: Vec<u32> = self
                .pods
                .values()
                .filter(|p| p.state != PodState::Terminating)
                .map(|p| p.id)
                .rev()
                .take((current - desired) as usize)
                .collect();
            for id in victims {
                let pod = self.pods.get_mut(&id).expect("victim exists");
                let idle = pod.serving.is_none() && pod.queue.is_empty();
                pod.state = PodState::Terminating;
                self.ready.remove(&id);
                if idle {
                    self.remove_pod(id);
                    outcome.removed.push(id);
                } else {
                    outcome.terminating.push(id);
                }
            }
        }
        outcome
    }

    /// Mean busy-time fraction across Ready pods since the previous call
    /// (the control window). Pods Ready for only part of the window are
    /// measured over their Ready overlap. Resets the per-window accumulators
    /// and advances the window start to `now`. Returns 1.0 when no pod is
    /// Ready (saturation pressure).
    pub fn observe_utilization(&mut self, now: f64) -> f64 {
        let window_start = self.window_start_s;
        let mut total = 0.0;
        let mut counted = 0u32;
        for pod in self.pods.values_mut() {
            if pod.state != PodState::Ready {
                pod.window_busy_s = 0.0;
                continue;
            }
            let denom = now - window_start.max(pod.ready_at_s);
            let mut busy = pod.window_busy_s;
            if let Some(s) = &pod.serving {
                busy += now - s.start_s.max(window_start);
            }
            pod.window_busy_s = 0.0;
            if denom > 1e-9 {
                total += (busy / denom).clamp(0.0, 1.0);
                counted += 1;
            }
        }
        self.window_start_s = now;
        if counted == 0 {
            1.0
        } else {
            total / counted as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge_cluster(nodes: usize) -> ClusterState {
        let specs: Vec<NodeSpec> = (0..nodes)
            .map(|_| NodeSpec { tier: Tier::Edge, cpu_capacity: 4.0 })
            .collect();
        ClusterState::new(&specs, 1.0, 10.0, 100)
    }

    fn request(id: u64, t: f64) -> ActiveRequest {
        ActiveRequest { id, arrival_s: t }
    }

    #[test]
    fn round_robin_is_fair_over_ready_set() {
        let mut cluster = edge_cluster(2);
        for _ in 0..3 {
            cluster.spawn_ready(0.0);
        }
        let mut per_pod = std::collections::BTreeMap::new();
        for i in 0..6 {
            match cluster.route(request(i, 0.0), 0.0) {
                RouteOutcome::Started { pod_id, .. } | RouteOutcome::Queued { pod_id } => {
                    *per_pod.entry(pod_id).or_insert(0u32) += 1;
                }
                other => panic!("unexpected {other:?}"),
            }
        }
        assert_eq!(per_pod.values().copied().collect::<Vec<_>>(), vec![2, 2, 2]);
    }

    #[test]
    fn pending_pods_are_skipped_by_routing() {
        let mut cluster = edge_cluster(2);
        let a = cluster.spawn_ready(0.0).unwrap();
        cluster.scale_to(3, 0.0, 10.0); // pod 1, 2 pending
        let c = cluster.spawn_ready(0.0).unwrap();
        assert_eq!(c, 3);
        let mut per_pod = std::collections::BTreeMap::new();
        for i in 0..4 {
            match cluster.route(request(i, 1.0), 1.0) {
                RouteOutcome::Started { pod_id, .. } | RouteOutcome::Queued { pod_id } => {
                    *per_pod.entry(pod_id).or_insert(0u32) += 1;
                }
                other => panic!("unexpected {other:?}"),
            }
        }
        assert_eq!(per_pod.get(&a), Some(&2));
        assert_eq!(per_pod.get(&c), Some(&2));
        assert_eq!(per_pod.get(&1), None);
        assert_eq!(per_pod.get(&2), None);
    }

    #[test]
    fn no_ready_pods_parks_requests() {
        let mut cluster = edge_cluster(1);
        cluster.scale_to(1, 0.0, 10.0); // pending only
        assert_eq!(cluster.route(request(0, 2.0), 2.0), RouteOutcome::Parked);
        assert_eq!(cluster.parked_len(), 1);
        assert!(cluster.mark_ready(0, 10.0));
        let drained = cluster.drain_parked(10.0, 5000.0);
        assert_eq!(drained.len(), 1);
        match drained[0].1 {
            RouteOutcome::Started { pod_id: 0, completion_s } => {
                assert!((completion_s - 10.1).abs() < 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scale_up_creates_pending_pods_with_cold_start() {
        let mut cluster = edge_cluster(2);
        cluster.spawn_ready(0.0);
        cluster.spawn_ready(0.0);
        let outcome = cluster.scale_to(4, 100.0, 10.0);
        assert_eq!(outcome.created.len(), 2);
        for (_, ready_at) in &outcome.created {
            assert!((ready_at - 110.0).abs() < 1e-12);
        }
        assert_eq!(cluster.ordered_count(), 4);
        assert_eq!(cluster.ready_count(), 2);
    }

    #[test]
    fn scale_to_same_count_is_a_no_op() {
        let mut cluster = edge_cluster(2);
        for _ in 0..4 {
            cluster.spawn_ready(0.0);
        }
        let outcome = cluster.scale_to(4, 50.0, 10.0);
        assert_eq!(outcome, ScaleOutcome::default());
    }

    #[test]
    fn scale_down_terminates_highest_ids_first_and_excludes_from_routing() {
        let mut cluster = edge_cluster(2);
        for _ in 0..4 {
            cluster.spawn_ready(0.0);
        }
        // Busy all four pods, then let 0..2 finish so only pod 3 drains.
        for i in 0..4 {
            assert!(matches!(cluster.route(request(i, 0.0), 0.0), RouteOutcome::Started { .. }));
        }
        for pod in 0..3 {
            cluster.complete(pod, 0.1, 5000.0);
        }
        let outcome = cluster.scale_to(2, 10.0, 10.0);
        assert_eq!(outcome.removed, vec![2]);
        assert_eq!(outcome.terminating, vec![3]);
        assert_eq!(cluster.ordered_count(), 2);
        // Routing only touches pods 0 and 1 now.
        for i in 0..6 {
            match cluster.route(request(i, 11.0), 11.0) {
                RouteOutcome::Started { pod_id, .. } | RouteOutcome::Queued { pod_id } => {
                    assert!(pod_id < 2, "routed to {pod_id}");
                }
                other => panic!("unexpected {other:?}"),
            }
        }
        // Draining pod disappears once its work finishes.
        let result = cluster.complete(3, 12.0, 5000.0);
        assert!(result.pod_removed);
        assert_eq!(cluster.alive_count(), 2);
    }

    #[test]
    fn placement_prefers_most_spare_cpu_lowest_id_ties() {
        let specs = [
            NodeSpec { tier: Tier::Cloud, cpu_capacity: 64.0 },
            NodeSpec { tier: Tier::Edge, cpu_capacity: 4.0 },
            NodeSpec { tier: Tier::Edge, cpu_capacity: 4.0 },
        ];
        let mut cluster = ClusterState::new(&specs, 1.0, 10.0, 100);
        // Seed node 2 with one pod so node 1 has more spare.
        cluster.nodes[2].cpu_allocated = 1.0;
        let first = cluster.spawn_ready(0.0).unwrap();
        assert_eq!(cluster.pod(first).unwrap().node_id, 1);
        // Now both have 3.0 spare; the tie goes to node 1 (lowest edge id).
        let second = cluster.spawn_ready(0.0).unwrap();
        assert_eq!(cluster.pod(second).unwrap().node_id, 1);
        // Cloud node never hosts pods regardless of spare capacity.
        for _ in 0..6 {
            cluster.spawn_ready(0.0);
        }
        assert!(cluster.nodes[0].pods.is_empty());
    }

    #[test]
    fn placement_failure_when_edge_is_full() {
        let specs = [NodeSpec { tier: Tier::Edge, cpu_capacity: 0.5 }];
        let mut cluster = ClusterState::new(&specs, 1.0, 10.0, 100);
        assert_eq!(cluster.spawn_ready(0.0), None);
        assert_eq!(cluster.placement_failures, 1);
        let outcome = cluster.scale_to(1, 0.0, 10.0);
        assert_eq!(outcome.placement_failures, 1);
    }

    #[test]
    fn queue_cap_drops_overflow() {
        let specs = [NodeSpec { tier: Tier::Edge, cpu_capacity: 4.0 }];
        let mut cluster = ClusterState::new(&specs, 1.0, 10.0, 2);
        cluster.spawn_ready(0.0);
        assert!(matches!(cluster.route(request(0, 0.0), 0.0), RouteOutcome::Started { .. }));
        assert!(matches!(cluster.route(request(1, 0.0), 0.0), RouteOutcome::Queued { .. }));
        assert!(matches!(cluster.route(request(2, 0.0), 0.0), RouteOutcome::Queued { .. }));
        assert!(matches!(
            cluster.route(request(3, 0.0), 0.0),
            RouteOutcome::Dropped { pod_id: Some(0) }
        ));
    }

    #[test]
    fn stale_queue_entries_are_shed_at_dequeue() {
        let mut cluster = edge_cluster(1);
        cluster.spawn_ready(0.0);
        assert!(matches!(cluster.route(request(0, 0.0), 0.0), RouteOutcome::Started { .. }));
        cluster.route(request(1, 0.0), 0.0);
        cluster.route(request(2, 9.0), 9.0);
        // Completion happens far past request 1's timeout.
        let result = cluster.complete(0, 10.0, 5.0);
        assert_eq!(result.finished.id, 0);
        assert_eq!(result.shed.iter().map(|r| r.id).collect::<Vec<_>>(), vec![1]);
        assert_eq!(result.started_next.unwrap().0.id, 2);
    }

    #[test]
    fn utilization_measures_busy_fraction() {
        let mut cluster = edge_cluster(1);
        cluster.spawn_ready(0.0);
        cluster.spawn_ready(0.0);
        // Pod 0 serves one 0.1 s request inside a 1 s window; pod 1 idles.
        assert!(matches!(cluster.route(request(0, 0.2), 0.2), RouteOutcome::Started { pod_id: 0, .. }));
        cluster.complete(0, 0.3, 5000.0);
        let util = cluster.observe_utilization(1.0);
        assert!((util - 0.05).abs() < 1e-9, "util {util}");
        // Accumulators reset per window.
        let util = cluster.observe_utilization(2.0);
        assert!((util - 0.0).abs() < 1e-12);
    }

    #[test]
    fn utilization_spans_tick_boundaries_exactly() {
        let mut cluster = edge_cluster(1);
        cluster.spawn_ready(0.0);
        // A service from 0.95 to 1.05 straddles the window edge at 1.0.
        assert!(matches!(cluster.route(request(0, 0.95), 0.95), RouteOutcome::Started { .. }));
        let first = cluster.observe_utilization(1.0);
        assert!((first - 0.05).abs() < 1e-9, "first window {first}");
        cluster.complete(0, 1.05, 5000.0);
        let second = cluster.observe_utilization(2.0);
        assert!((second - 0.05).abs() < 1e-9, "second window {second}");
    }
}
