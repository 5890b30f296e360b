//! Scaling policies: a reactive utilization-target controller, a proactive
//! forecast-driven controller, and the hybrid combination that takes the
//! maximum of the two and falls back to the reactive side while the
//! forecaster has no model yet.
//!
//! All decision functions are pure; the stateful pieces (scale-down
//! stabilization, headroom feedback cooldown) live in small dedicated
//! structs driven by the simulation at every control tick.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Which scaling strategy a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Reactive,
    Proactive,
    Hybrid,
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicyKind::Reactive => write!(f, "reactive"),
            PolicyKind::Proactive => write!(f, "proactive"),
            PolicyKind::Hybrid => write!(f, "hybrid"),
        }
    }
}

/// Autoscaler configuration shared by all policy kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AutoscalerPolicy {
    pub kind: PolicyKind,
    /// Utilization the reactive controller steers toward.
    pub target_utilization: f64,
    /// Dead-band half-width on observed/target around 1.
    pub tolerance: f64,
    pub min_replicas: u32,
    pub max_replicas: u32,
    /// Request rate one pod is provisioned for when sizing from a forecast (req/s).
    pub per_pod_capacity: f64,
    /// Safety factor applied to the forecast peak; adjusted by SLA feedback.
    pub headroom: f64,
    /// How far ahead the proactive controller looks (s). When absent it
    /// defaults to cold_start_delay + control_period.
    pub lead_time_s: Option<f64>,
    /// Scale-downs apply only if every recommendation in this window allowed them (s).
    pub stabilization_window_s: f64,
}

impl Default for AutoscalerPolicy {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Hybrid,
            target_utilization: 0.5,
            tolerance: 0.1,
            min_replicas: 1,
            max_replicas: 16,
            per_pod_capacity: 25.0,
            headroom: 1.2,
            lead_time_s: None,
            stabilization_window_s: 300.0,
        }
    }
}

impl AutoscalerPolicy {
    pub fn clamp_replicas(&self, n: u32) -> u32 {
        n.clamp(self.min_replicas, self.max_replicas)
    }
}

/// Why a decision landed on its applied value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionReason {
    /// Reactive-only recommendation applied.
    Reactive,
    /// Proactive-only recommendation applied.
    Proactive,
    /// Forecaster unavailable; fell back to the reactive recommendation.
    Bootstrap,
    /// Hybrid max(reactive, proactive) applied.
    Max,
    /// Scale-down held back by the stabilization window.
    Stabilized,
}

impl std::fmt::Display for DecisionReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DecisionReason::Reactive => "reactive",
            DecisionReason::Proactive => "proactive",
            DecisionReason::Bootstrap => "bootstrap",
            DecisionReason::Max => "max",
            DecisionReason::Stabilized => "stabilized",
        };
        write!(f, "{s}")
    }
}

/// Audit record for one control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingDecision {
    pub tick_time_s: f64,
    pub reactive_rec: u32,
    pub proactive_rec: Option<u32>,
    pub applied: u32,
    pub reason: DecisionReason,
    pub headroom: f64,
}

/// Ceiling that forgives float dust just below an integer, so that e.g.
/// 100 * 1.2 / 20 sizes to 6 replicas, not 7.
fn ceil_replicas(x: f64) -> u32 {
    (x - 1e-9).ceil().max(0.0) as u32
}

/// Reactive recommendation: hold inside the tolerance band, otherwise
/// `ceil(current * observed / target)`, clamped to the replica bounds.
pub fn reactive_decide(current: u32, observed_utilization: f64, policy: &AutoscalerPolicy) -> u32 {
    let ratio = observed_utilization / policy.target_utilization;
    if (ratio - 1.0).abs() <= policy.tolerance {
        return policy.clamp_replicas(current);
    }
    policy.clamp_replicas(ceil_replicas(current as f64 * ratio))
}

/// Proactive recommendation from a forecast over the lead window:
/// `ceil(max(forecast) * headroom / per_pod_capacity)`, clamped.
pub fn proactive_decide(forecast: &[f64], policy: &AutoscalerPolicy) -> u32 {
    let peak = forecast.iter().copied().fold(0.0_f64, f64::max);
    policy.clamp_replicas(ceil_replicas(peak * policy.headroom / policy.per_pod_capacity))
}

/// Hybrid combination: reactive fallback while the forecaster is
/// unavailable, otherwise the maximum of the two recommendations.
pub fn hybrid_decide(
    tick_time_s: f64,
    reactive_rec: u32,
    proactive_rec: Option<u32>,
    headroom: f64,
) -> ScalingDecision {
    let (applied, reason) = match proactive_rec {
        None => (reactive_rec, DecisionReason::Bootstrap),
        Some(p) => (reactive_rec.max(p), DecisionReason::Max),
    };
    ScalingDecision {
        tick_time_s,
        reactive_rec,
        proactive_rec,
        applied,
        reason,
        headroom,
    }
}

/// Trailing history of recommendations gating scale-downs.
#[derive(Debug, Clone, Default)]
pub struct StabilizationWindow {
    history: VecDeque<(f64, u32)>,
}

impl StabilizationWindow {
    /// Records this tick's recommendation and gates the desired value:
    /// scale-ups pass through, scale-downs are floored at the highest
    /// recommendation still in the trailing window (never exceeding
    /// current), so one quiet tick cannot tear down capacity the window
    /// recently asked for.
    pub fn gate(&mut self, now: f64, window_s: f64, current: u32, desired: u32) -> u32 {
        self.history.push_back((now, desired));
        while let Some(&(t, _)) = self.history.front() {
            if t < now - window_s {
                self.history.pop_front();
            } else {
                break;
            }
        }
        if desired >= current {
            return desired;
        }
        let window_max = self.history.iter().map(|&(_, rec)| rec).max().unwrap_or(desired);
        desired.max(window_max).min(current)
    }
}

/// Headroom feedback driven by the trailing SLA violation rate, with a
/// cooldown on consecutive adjustments and a retrain request flag.
#[derive(Debug, Clone)]
pub struct HeadroomFeedback {
    pub violation_trigger: f64,
    pub cooldown_s: f64,
    last_adjustment_s: Option<f64>,
    retrain_requested: bool,
}

pub const HEADROOM_MIN: f64 = 1.0;
pub const HEADROOM_MAX: f64 = 2.0;

impl HeadroomFeedback {
    pub fn new(violation_trigger: f64, cooldown_s: f64) -> Self {
        Self {
            violation_trigger,
            cooldown_s,
            last_adjustment_s: None,
            retrain_requested: false,
        }
    }

    /// Applies one feedback step at `now` given the violation rate over the
    /// trailing `window_s`. Returns true if the headroom changed.
    pub fn apply(
        &mut self,
        now: f64,
        violation_rate: f64,
        window_s: f64,
        policy: &mut AutoscalerPolicy,
    ) -> bool {
        if let Some(last) = self.last_adjustment_s {
            if now - last < self.cooldown_s {
                return false;
            }
        }
        if violation_rate > self.violation_trigger {
            let new = (policy.headroom + 0.1).min(HEADROOM_MAX);
            self.last_adjustment_s = Some(now);
            self.retrain_requested = true;
            if new != policy.headroom {
                policy.headroom = new;
                return true;
            }
            return false;
        }
        // Relax only once a full quiet window has been observed.
        if violation_rate == 0.0 && now >= window_s {
            let new = (policy.headroom - 0.05).max(HEADROOM_MIN);
            if new != policy.headroom {
                policy.headroom = new;
                self.last_adjustment_s = Some(now);
                return true;
            }
        }
        false
    }

    /// Consumes the pending retrain request, if any.
    pub fn take_retrain_request(&mut self) -> bool {
        std::mem::take(&mut self.retrain_requested)
    }
}
