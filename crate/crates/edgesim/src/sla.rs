//! SLA accounting: availability/downtime conversion, per-request latency
//! classification against the latency threshold, and run summaries.
//!
//! Downtime follows the standard 30×24-hour month and 365-day year
//! conversions. Request availability is request-based: a request counts as
//! available when it was served within the timeout and met the latency
//! threshold.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

use crate::autoscaler::ScalingDecision;

/// Errors from SLA formula inputs.
#[derive(Debug, Error, PartialEq)]
pub enum SlaError {
    #[error("availability {0}% outside [0, 100]")]
    AvailabilityOutOfRange(f64),
}

/// Monthly downtime in hours for a given availability percentage,
/// using a 30-day (720-hour) month.
pub fn downtime_monthly_hours(availability_percent: f64) -> Result<f64, SlaError> {
    check_availability(availability_percent)?;
    Ok((100.0 - availability_percent) / 100.0 * 30.0 * 24.0)
}

/// Yearly downtime in days for a given availability percentage.
pub fn downtime_yearly_days(availability_percent: f64) -> Result<f64, SlaError> {
    check_availability(availability_percent)?;
    Ok((100.0 - availability_percent) / 100.0 * 365.0)
}

fn check_availability(a: f64) -> Result<(), SlaError> {
    if !(0.0..=100.0).contains(&a) || a.is_nan() {
        return Err(SlaError::AvailabilityOutOfRange(a));
    }
    Ok(())
}

/// SLA policy: the latency threshold requests are judged against, the client
/// timeout past which a request is considered lost, and the violation-rate
/// feedback parameters consumed by the hybrid autoscaler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlaPolicy {
    /// Latency at or below this value is compliant (ms).
    pub latency_threshold_ms: f64,
    /// Requests waiting longer than this are dropped (ms).
    pub request_timeout_ms: f64,
    /// Violation rate above which the feedback loop reacts.
    pub violation_trigger: f64,
    /// Trailing window over which the violation rate is computed (s).
    pub feedback_window_s: f64,
    /// Minimum spacing between consecutive feedback adjustments (s).
    pub feedback_cooldown_s: f64,
}

impl Default for SlaPolicy {
    fn default() -> Self {
        Self {
            latency_threshold_ms: 150.0,
            request_timeout_ms: 5000.0,
            violation_trigger: 0.01,
            feedback_window_s: 300.0,
            feedback_cooldown_s: 3600.0,
        }
    }
}

impl SlaPolicy {
    /// Strict-inequality violation rule: latency exactly at the threshold is compliant.
    pub fn is_violation(&self, latency_ms: f64) -> bool {
        latency_ms > self.latency_threshold_ms
    }
}

/// Outcome of one request, as recorded in the ledger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequestRecord {
    pub id: u64,
    pub arrival_s: f64,
    /// When service began; `None` for requests dropped before service.
    pub start_service_s: Option<f64>,
    /// Pod that served (or would have served) the request.
    pub pod_id: Option<u32>,
    /// End-to-end latency; `None` for requests dropped before service.
    pub latency_ms: Option<f64>,
    pub violated: bool,
    pub dropped: bool,
}

/// Replica counts sampled whenever they change and at every control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicaSample {
    pub time_s: f64,
    pub ready: u32,
    pub total: u32,
}

/// Everything a simulation run accumulates: per-request outcomes, replica
/// and utilization time series, the scaling decision log, and counters.
#[derive(Debug, Clone, Default)]
pub struct MetricsLedger {
    pub requests: Vec<RequestRecord>,
    pub replica_samples: Vec<ReplicaSample>,
    pub utilization_samples: Vec<(f64, f64)>,
    pub decisions: Vec<ScalingDecision>,
    pub generated: u64,
    pub completed: u64,
    pub dropped: u64,
    pub in_flight_at_end: u64,
    pub placement_failures: u64,
    /// Integral of live pod count (including draining pods) over time.
    pub pod_seconds: f64,
    recent: std::collections::VecDeque<(f64, bool)>,
}

impl MetricsLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a served request and returns whether it violated the policy.
    pub fn record_request(
        &mut self,
        id: u64,
        arrival_s: f64,
        start_service_s: f64,
        pod_id: u32,
        latency_ms: f64,
        policy: &SlaPolicy,
    ) -> bool {
        let violated = policy.is_violation(latency_ms);
        self.requests.push(RequestRecord {
            id,
            arrival_s,
            start_service_s: Some(start_service_s),
            pod_id: Some(pod_id),
            latency_ms: Some(latency_ms),
            violated,
            dropped: false,
        });
        self.completed += 1;
        self.recent.push_back((arrival_s.max(0.0) + latency_ms / 1000.0, violated));
        violated
    }

    /// Records a request dropped before completing service (queue overflow
    /// or timeout shed). Dropped requests carry no latency.
    pub fn record_drop(&mut self, id: u64, arrival_s: f64, pod_id: Option<u32>) {
        self.requests.push(RequestRecord {
            id,
            arrival_s,
            start_service_s: None,
            pod_id,
            latency_ms: None,
            violated: false,
            dropped: true,
        });
        self.dropped += 1;
    }

    /// Violation rate among requests completed in `(now - window_s, now]`.
    /// Returns 0 when nothing completed in the window.
    pub fn recent_violation_rate(&mut self, now: f64, window_s: f64) -> f64 {
        while let Some(&(t, _)) = self.recent.front() {
            if t <= now - window_s {
                self.recent.pop_front();
            } else {
                break;
            }
        }
        let total = self.recent.iter().filter(|(t, _)| *t <= now).count();
        if total == 0 {
            return 0.0;
        }
        let violated = self.recent.iter().filter(|(t, v)| *t <= now && *v).count();
        violated as f64 / total as f64
    }

    /// Recomputes the aggregate report from the raw records.
    pub fn summarize(&self) -> SummaryReport {
        let mut latencies: Vec<f64> = self
            .requests
            .iter()
            .filter(|r| !r.dropped)
            .filter_map(|r| r.latency_ms)
            .collect();
        latencies.sort_by(|a, b| a.total_cmp(b));

        let served = latencies.len() as u64;
        let violations = self.requests.iter().filter(|r| !r.dropped && r.violated).count() as u64;
        let compliant = served - violations;

        let latency = if latencies.is_empty() {
            None
        } else {
            let sum: f64 = latencies.iter().sum();
            Some(LatencyStats {
                mean_ms: sum / served as f64,
                median_ms: nearest_rank(&latencies, 50.0),
                p95_ms: nearest_rank(&latencies, 95.0),
                p99_ms: nearest_rank(&latencies, 99.0),
                max_ms: *latencies.last().unwrap(),
            })
        };

        let mean_replicas = if self.replica_samples.is_empty() {
            None
        } else {
            Some(time_weighted_mean(&self.replica_samples))
        };

        SummaryReport {
            generated: self.generated,
            served,
            dropped: self.dropped,
            in_flight_at_end: self.in_flight_at_end,
            violations,
            violation_rate: ratio(violations, served),
            drop_rate: ratio(self.dropped, self.generated),
            availability_percent: ratio(compliant, self.generated).map(|r| r * 100.0),
            latency,
            mean_replicas,
            pod_seconds: self.pod_seconds,
            placement_failures: self.placement_failures,
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

/// Nearest-rank percentile on a sorted slice: the ceil(p/100 · N)-th smallest value.
pub fn nearest_rank(sorted: &[f64], percentile: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((percentile / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

fn time_weighted_mean(samples: &[ReplicaSample]) -> f64 {
    if samples.len() < 2 {
        return samples.first().map(|s| s.total as f64).unwrap_or(0.0);
    }
    let mut area = 0.0;
    for pair in samples.windows(2) {
        area += pair[0].total as f64 * (pair[1].time_s - pair[0].time_s);
    }
    let span = samples.last().unwrap().time_s - samples.first().unwrap().time_s;
    if span <= 0.0 {
        samples.last().unwrap().total as f64
    } else {
        area / span
    }
}

/// Latency aggregates over served requests (nearest-rank percentiles).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

/// Aggregate report for one run. Fields that are undefined on an empty
/// ledger are `None` and render as `absent`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryReport {
    pub generated: u64,
    pub served: u64,
    pub dropped: u64,
    pub in_flight_at_end: u64,
    pub violations: u64,
    pub violation_rate: Option<f64>,
    pub drop_rate: Option<f64>,
    pub availability_percent: Option<f64>,
    pub latency: Option<LatencyStats>,
    pub mean_replicas: Option<f64>,
    pub pod_seconds: f64,
    pub placement_failures: u64,
}

impl fmt::Display for SummaryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "absent".into())
        }
        writeln!(f, "generated = {}", self.generated)?;
        writeln!(f, "served = {}", self.served)?;
        writeln!(f, "dropped = {}", self.dropped)?;
        writeln!(f, "in_flight_at_end = {}", self.in_flight_at_end)?;
        writeln!(f, "violations = {}", self.violations)?;
        writeln!(f, "violation_rate = {}", opt(self.violation_rate))?;
        writeln!(f, "drop_rate = {}", opt(self.drop_rate))?;
        writeln!(f, "availability_percent = {}", opt(self.availability_percent))?;
        writeln!(f, "mean_latency_ms = {}", opt(self.latency.map(|l| l.mean_ms)))?;
        writeln!(f, "median_latency_ms = {}", opt(self.latency.map(|l| l.median_ms)))?;
        writeln!(f, "p95_latency_ms = {}", opt(self.latency.map(|l| l.p95_ms)))?;
        writeln!(f, "p99_latency_ms = {}", opt(self.latency.map(|l| l.p99_ms)))?;
        writeln!(f, "max_latency_ms = {}", opt(self.latency.map(|l| l.max_ms)))?;
        writeln!(f, "mean_replicas = {}", opt(self.mean_replicas))?;
        writeln!(f, "pod_seconds = {:.3}", self.pod_seconds)?;
        writeln!(f, "placement_failures = {}", self.placement_failures)
    }
}

/// One row of the availability table: expected downtime per availability level.
#[derive(Debug, Clone, Copy)]
pub struct AvailabilityRow {
    pub availability_percent: f64,
    pub monthly_downtime_hours: f64,
    pub yearly_downtime_days: f64,
}

/// The five standard availability levels with downtime from the formulas above.
pub fn availability_table() -> Vec<AvailabilityRow> {
    [90.0, 99.0, 99.9, 99.99, 99.999]
        .iter()
        .map(|&a| AvailabilityRow {
            availability_percent: a,
            monthly_downtime_hours: downtime_monthly_hours(a).unwrap(),
            yearly_downtime_days: downtime_yearly_days(a).unwrap(),
        })
        .collect()
}

/// Units downtime is conventionally quoted in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeUnit {
    Seconds,
    Minutes,
    Hours,
    Days,
}

impl TimeUnit {
    pub fn label(&self) -> &'static str {
        match self {
            TimeUnit::Seconds => "s",
            TimeUnit::Minutes => "min",
            TimeUnit::Hours => "h",
            TimeUnit::Days => "d",
        }
    }

    pub fn from_hours(&self, hours: f64) -> f64 {
        match self {
            TimeUnit::Seconds => hours * 3600.0,
            TimeUnit::Minutes => hours * 60.0,
            TimeUnit::Hours => hours,
            TimeUnit::Days => hours / 24.0,
        }
    }

    pub fn from_days(&self, days: f64) -> f64 {
        self.from_hours(days * 24.0)
    }
}

/// One row comparing the formula outputs against the downtime values as
/// conventionally published, in the units and precision they are quoted in.
#[derive(Debug, Clone, Copy)]
pub struct DowntimeComparisonRow {
    pub availability_percent: f64,
    pub monthly_unit: TimeUnit,
    /// Formula value converted to `monthly_unit`.
    pub monthly_formula: f64,
    pub monthly_published: f64,
    /// Formula value rounded to published precision matches within 0.01.
    pub monthly_matches: bool,
    pub monthly_deviation_percent: f64,
    pub yearly_unit: TimeUnit,
    pub yearly_formula: f64,
    pub yearly_published: f64,
    pub yearly_matches: bool,
}

fn round_to(value: f64, decimals: u32) -> f64 {
    let f = 10f64.powi(decimals as i32);
    (value * f).round() / f
}

/// Compares the 720-hour-month / 365-day-year formulas against the commonly
/// published availability table. The 99.9% and 99.99% monthly cells are
/// quoted from a 730-hour month and do not match the formula (by about
/// 1.4%); every other cell agrees at published precision.
pub fn downtime_comparison_table() -> Vec<DowntimeComparisonRow> {
    struct Published {
        availability: f64,
        monthly: (f64, TimeUnit, u32),
        yearly: (f64, TimeUnit, u32),
    }
    let published = [
        Published {
            availability: 90.0,
            monthly: (72.0, TimeUnit::Hours, 0),
            yearly: (36.5, TimeUnit::Days, 1),
        },
        Published {
            availability: 99.0,
            monthly: (7.2, TimeUnit::Hours, 1),
            yearly: (3.65, TimeUnit::Days, 2),
        },
        Published {
            availability: 99.9,
            monthly: (43.8, TimeUnit::Minutes, 1),
            yearly: (8.76, TimeUnit::Hours, 2),
        },
        Published {
            availability: 99.99,
            monthly: (4.38, TimeUnit::Minutes, 2),
            yearly: (52.56, TimeUnit::Minutes, 2),
        },
        Published {
            availability: 99.999,
            monthly: (25.9, TimeUnit::Seconds, 1),
            yearly: (5.26, TimeUnit::Minutes, 2),
        },
    ];
    published
        .iter()
        .map(|p| {
            let monthly_hours = downtime_monthly_hours(p.availability).unwrap();
            let yearly_days = downtime_yearly_days(p.availability).unwrap();
            let (m_pub, m_unit, m_dec) = p.monthly;
            let (y_pub, y_unit, y_dec) = p.yearly;
            let monthly_formula = m_unit.from_hours(monthly_hours);
            let yearly_formula = y_unit.from_days(yearly_days);
            DowntimeComparisonRow {
                availability_percent: p.availability,
                monthly_unit: m_unit,
                monthly_formula,
                monthly_published: m_pub,
                monthly_matches: (round_to(monthly_formula, m_dec) - m_pub).abs() <= 0.01,
                monthly_deviation_percent: (monthly_formula - m_pub) / m_pub * 100.0,
                yearly_unit: y_unit,
                yearly_formula,
                yearly_published: y_pub,
                yearly_matches: (round_to(yearly_formula, y_dec) - y_pub).abs() <= 0.01,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn monthly_downtime_reference_points() {
        assert!(close(downtime_monthly_hours(99.0).unwrap(), 7.2, 1e-12));
        assert!(close(downtime_monthly_hours(90.0).unwrap(), 72.0, 1e-12));
        assert!(close(downtime_monthly_hours(100.0).unwrap(), 0.0, 1e-12));
    }

    #[test]
    fn yearly_downtime_reference_points() {
        assert!(close(downtime_yearly_days(99.0).unwrap(), 3.65, 1e-12));
        // 0.365 days = 8.76 hours
        assert!(close(downtime_yearly_days(99.9).unwrap() * 24.0, 8.76, 1e-9));
        assert!(close(downtime_yearly_days(100.0).unwrap(), 0.0, 1e-12));
    }

    #[test]
    fn downtime_rejects_out_of_range() {
        assert!(downtime_monthly_hours(-0.1).is_err());
        assert!(downtime_monthly_hours(100.1).is_err());
        assert!(downtime_yearly_days(f64::NAN).is_err());
    }

    #[test]
    fn downtime_linear_in_unavailability() {
        for a in [10.0, 50.0, 95.0, 99.5] {
            let m = downtime_monthly_hours(a).unwrap();
            assert!(close(m, (100.0 - a) * 7.2, 1e-9));
            let y = downtime_yearly_days(a).unwrap();
            assert!(close(y, (100.0 - a) * 3.65, 1e-9));
        }
    }

    #[test]
    fn violation_boundary_is_compliant() {
        let policy = SlaPolicy::default();
        assert!(policy.is_violation(160.0));
        assert!(!policy.is_violation(30.0));
        assert!(!policy.is_violation(150.0));
    }

    #[test]
    fn summarize_small_ledger() {
        let policy = SlaPolicy::default();
        let mut ledger = MetricsLedger::new();
        ledger.generated = 4;
        for (i, lat) in [10.0, 20.0, 30.0, 40.0].iter().enumerate() {
            ledger.record_request(i as u64, i as f64, i as f64, 0, *lat, &policy);
        }
        let report = ledger.summarize();
        let stats = report.latency.unwrap();
        assert!(close(stats.mean_ms, 25.0, 1e-12));
        assert!(close(stats.p99_ms, 40.0, 1e-12));
        assert!(close(stats.median_ms, 20.0, 1e-12));
        assert_eq!(report.violations, 0);
        assert!(close(report.availability_percent.unwrap(), 100.0, 1e-12));
    }

    #[test]
    fn summarize_empty_ledger_reports_absent() {
        let report = MetricsLedger::new().summarize();
        assert!(report.latency.is_none());
        assert!(report.violation_rate.is_none());
        assert!(report.availability_percent.is_none());
        let text = report.to_string();
        assert!(text.contains("mean_latency_ms = absent"));
    }

    #[test]
    fn dropped_requests_excluded_from_latency_but_counted_against_availability() {
        let policy = SlaPolicy::default();
        let mut ledger = MetricsLedger::new();
        ledger.generated = 3;
        ledger.record_request(0, 0.0, 0.0, 0, 100.0, &policy);
        ledger.record_request(1, 0.0, 0.0, 0, 200.0, &policy);
        ledger.record_drop(2, 0.5, None);
        let report = ledger.summarize();
        assert_eq!(report.served, 2);
        assert_eq!(report.dropped, 1);
        assert!(close(report.latency.unwrap().mean_ms, 150.0, 1e-12));
        // 1 compliant out of 3 generated
        assert!(close(report.availability_percent.unwrap(), 100.0 / 3.0, 1e-9));
    }

    #[test]
    fn recent_violation_rate_windows() {
        let policy = SlaPolicy::default();
        let mut ledger = MetricsLedger::new();
        ledger.record_request(0, 10.0, 10.0, 0, 500.0, &policy); // completes ~10.5, violated
        ledger.record_request(1, 12.0, 12.0, 0, 50.0, &policy); // compliant
        assert!(close(ledger.recent_violation_rate(13.0, 300.0), 0.5, 1e-12));
        // Outside the window everything ages out.
        assert!(close(ledger.recent_violation_rate(1000.0, 300.0), 0.0, 1e-12));
    }

    #[test]
    fn percentiles_are_ordered() {
        let mut latencies: Vec<f64> = (0..137).map(|i| ((i * 7919) % 997) as f64).collect();
        latencies.sort_by(|a, b| a.total_cmp(b));
        let p50 = nearest_rank(&latencies, 50.0);
        let p95 = nearest_rank(&latencies, 95.0);
        let p99 = nearest_rank(&latencies, 99.0);
        let max = *latencies.last().unwrap();
        assert!(p50 <= p95 && p95 <= p99 && p99 <= max);
    }

    #[test]
    fn table_matches_yearly_column() {
        // Published yearly downtimes: 36.5 d, 3.65 d, 8.76 h, 52.56 min, 5.26 min.
        let rows = availability_table();
        assert!(close(rows[0].yearly_downtime_days, 36.5, 0.01));
        assert!(close(rows[1].yearly_downtime_days, 3.65, 0.01));
        assert!(close(rows[2].yearly_downtime_days * 24.0, 8.76, 0.01));
        assert!(close(rows[3].yearly_downtime_days * 24.0 * 60.0, 52.56, 0.01));
        assert!(close(rows[4].yearly_downtime_days * 24.0 * 60.0, 5.26, 0.01));
    }
}
