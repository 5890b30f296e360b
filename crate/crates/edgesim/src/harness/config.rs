//! Experiment configuration: TOML parsing with fail-closed unknown-key
//! handling, documented defaults for every field, and validation that
//! rejects inconsistent setups before anything runs.
//!
//! The default calibration is the desk-scale case study: a five-day diurnal
//! workload with morning and evening peaks over a four-node edge tier, with
//! `scale = 0.1` yielding roughly 255k requests.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

use crate::autoscaler::AutoscalerPolicy;
use crate::controller::ForecasterConfig;
use crate::sim::{NodeSpec, SimConfig, Tier};
use crate::sla::SlaPolicy;
use crate::workload::{Peak, WorkloadProfile};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

/// Workload shape, before scaling. The horizon and seed come from the top
/// level so one config drives reproducible multi-policy comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSpec {
    /// Background rate at scale 1.0 (req/s).
    pub base_rate: f64,
    pub peaks: Vec<Peak>,
    pub noise_fraction: f64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        // Calibrated so five days at scale 0.1 integrate to ~255k requests.
        Self {
            base_rate: 2.2,
            peaks: vec![
                Peak { center_hour: 8.5, amplitude: 950.0, width_hours: 1.0 / 60.0 },
                Peak { center_hour: 19.5, amplitude: 1177.0, width_hours: 1.0 / 60.0 },
            ],
            noise_fraction: 0.2,
        }
    }
}

impl WorkloadSpec {
    pub fn to_profile(&self, scale: f64, horizon_s: f64, seed: u64) -> WorkloadProfile {
        WorkloadProfile {
            base_rate: self.base_rate,
            peaks: self.peaks.clone(),
            noise_fraction: self.noise_fraction,
            horizon_s,
            seed,
        }
        .scaled(scale)
    }
}

/// Cluster topology and service constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub edge_nodes: u32,
    pub edge_cpu_capacity: f64,
    pub cloud_nodes: u32,
    pub cloud_cpu_capacity: f64,
    pub pod_cpu_request: f64,
    /// Deterministic service rate per pod (req/s).
    pub service_rate: f64,
    pub cold_start_delay_s: f64,
    /// One-way cloud-edge latency (ms); each request pays the round trip.
    pub tier_latency_ms: f64,
    pub queue_cap: usize,
    pub control_period_s: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            edge_nodes: 4,
            edge_cpu_capacity: 4.0,
            cloud_nodes: 2,
            cloud_cpu_capacity: 16.0,
            pod_cpu_request: 1.0,
            service_rate: 50.0,
            cold_start_delay_s: 10.0,
            tier_latency_ms: 25.0,
            queue_cap: 10_000,
            control_period_s: 15.0,
        }
    }
}

/// Everything one run needs; serializes verbatim into every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub horizon_s: f64,
    /// Workload scaling factor (1.0 is the full case-study volume).
    pub scale: f64,
    pub out_dir: PathBuf,
    pub write_trace: bool,
    pub write_arrivals: bool,
    pub workload: WorkloadSpec,
    pub cluster: ClusterConfig,
    pub policy: AutoscalerPolicy,
    pub sla: SlaPolicy,
    pub forecaster: ForecasterConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        // The case-study calibration looks ahead over the whole forecast
        // horizon (5 buckets x 60 s) when sizing from predictions.
        let policy = AutoscalerPolicy {
            lead_time_s: Some(300.0),
            ..AutoscalerPolicy::default()
        };
        Self {
            seed: 42,
            horizon_s: 5.0 * 86_400.0,
            scale: 0.1,
            out_dir: PathBuf::from("runs"),
            write_trace: true,
            write_arrivals: false,
            workload: WorkloadSpec::default(),
            cluster: ClusterConfig::default(),
            policy,
            sla: SlaPolicy::default(),
            forecaster: ForecasterConfig::default(),
        }
    }
}

/// Parses and validates a TOML config. Unknown keys are rejected with the
/// offending key named; omitted keys take the documented defaults.
pub fn parse_config(source: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = toml::from_str(source)?;
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                issues.push(msg.to_string());
            }
        };

        check(self.horizon_s > 0.0, "horizon_s must be > 0");
        check(self.scale > 0.0, "scale must be > 0");
        check(
            self.policy.min_replicas <= self.policy.max_replicas,
            &format!(
                "policy.min_replicas ({}) must be <= policy.max_replicas ({})",
                self.policy.min_replicas, self.policy.max_replicas
            ),
        );
        check(self.policy.min_replicas >= 1, "policy.min_replicas must be >= 1");
        check(
            self.policy.target_utilization > 0.0 && self.policy.target_utilization <= 1.0,
            "policy.target_utilization must lie in (0, 1]",
        );
        check(self.policy.tolerance >= 0.0, "policy.tolerance must be >= 0");
        check(
            self.policy.per_pod_capacity > 0.0,
            "policy.per_pod_capacity must be > 0",
        );
        check(
            (1.0..=2.0).contains(&self.policy.headroom),
            "policy.headroom must lie in [1.0, 2.0]",
        );
        check(
            self.policy.stabilization_window_s >= 0.0,
            "policy.stabilization_window_s must be >= 0",
        );
        check(self.cluster.edge_nodes >= 1, "cluster.edge_nodes must be >= 1");
        check(
            self.cluster.edge_cpu_capacity > 0.0,
            "cluster.edge_cpu_capacity must be > 0",
        );
        check(
            self.cluster.pod_cpu_request > 0.0,
            "cluster.pod_cpu_request must be > 0",
        );
        check(self.cluster.service_rate > 0.0, "cluster.service_rate must be > 0");
        check(
            self.cluster.cold_start_delay_s >= 0.0,
            "cluster.cold_start_delay_s must be >= 0",
        );
        check(self.cluster.tier_latency_ms >= 0.0, "cluster.tier_latency_ms must be >= 0");
        check(self.cluster.queue_cap >= 1, "cluster.queue_cap must be >= 1");
        check(
            self.cluster.control_period_s > 0.0,
            "cluster.control_period_s must be > 0",
        );
        check(self.workload.base_rate >= 0.0, "workload.base_rate must be >= 0");
        for (i, peak) in self.workload.peaks.iter().enumerate() {
            check(
                peak.amplitude >= 0.0,
                &format!("workload.peaks[{i}].amplitude must be >= 0"),
            );
            check(
                peak.width_hours > 0.0,
                &format!("workload.peaks[{i}].width_hours must be > 0"),
            );
            check(
                (0.0..24.0).contains(&peak.center_hour),
                &format!("workload.peaks[{i}].center_hour must lie in [0, 24)"),
            );
        }
        check(
            (0.0..1.0).contains(&self.workload.noise_fraction),
            "workload.noise_fraction must lie in [0, 1)",
        );
        check(
            self.sla.latency_threshold_ms > 0.0
                && self.sla.latency_threshold_ms < self.sla.request_timeout_ms,
            "sla.latency_threshold_ms must lie in (0, sla.request_timeout_ms)",
        );
        check(
            self.sla.violation_trigger >= 0.0,
            "sla.violation_trigger must be >= 0",
        );
        check(self.forecaster.bucket_width_s > 0.0, "forecaster.bucket_width_s must be > 0");
        check(
            self.forecaster.train_fraction > 0.0 && self.forecaster.train_fraction < 1.0,
            "forecaster.train_fraction must lie in (0, 1)",
        );
        check(
            self.forecaster.lstm.smoothing_window % 2 == 1,
            "forecaster.lstm.smoothing_window must be odd",
        );
        check(self.forecaster.lstm.hidden_size >= 1, "forecaster.lstm.hidden_size must be >= 1");
        check(self.forecaster.lstm.window >= 1, "forecaster.lstm.window must be >= 1");
        check(self.forecaster.lstm.horizon >= 1, "forecaster.lstm.horizon must be >= 1");
        check(self.forecaster.lstm.epochs >= 1, "forecaster.lstm.epochs must be >= 1");

        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(issues))
        }
    }

    /// The static simulation parameters implied by this config.
    pub fn sim_config(&self) -> SimConfig {
        let mut nodes = Vec::new();
        for _ in 0..self.cluster.edge_nodes {
            nodes.push(NodeSpec { tier: Tier::Edge, cpu_capacity: self.cluster.edge_cpu_capacity });
        }
        for _ in 0..self.cluster.cloud_nodes {
            nodes.push(NodeSpec { tier: Tier::Cloud, cpu_capacity: self.cluster.cloud_cpu_capacity });
        }
        SimConfig {
            horizon_s: self.horizon_s,
            control_period_s: self.cluster.control_period_s,
            cold_start_delay_s: self.cluster.cold_start_delay_s,
            tier_latency_ms: self.cluster.tier_latency_ms,
            service_rate: self.cluster.service_rate,
            pod_cpu_request: self.cluster.pod_cpu_request,
            queue_cap: self.cluster.queue_cap,
            nodes,
            bucket_width_s: self.forecaster.bucket_width_s,
            initial_replicas: self.policy.min_replicas,
        }
    }

    pub fn profile(&self) -> WorkloadProfile {
        self.workload.to_profile(self.scale, self.horizon_s, self.seed)
    }

    /// Proactive lead time when the policy leaves it unset.
    pub fn default_lead_time_s(&self) -> f64 {
        self.cluster.cold_start_delay_s + self.cluster.control_period_s
    }

    pub fn run_id(&self) -> String {
        format!("{}_seed{}", self.policy.kind, self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoscaler::PolicyKind;

    #[test]
    fn empty_document_resolves_all_defaults() {
        let config = parse_config("").unwrap();
        assert_eq!(config, ExperimentConfig::default());
        assert_eq!(config.seed, 42);
        assert_eq!(config.policy.kind, PolicyKind::Hybrid);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = parse_config("definitely_not_a_key = 5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("definitely_not_a_key"), "{msg}");
        let err = parse_config("[cluster]\nwarp_factor = 9\n").unwrap_err();
        assert!(err.to_string().contains("warp_factor"));
    }

    #[test]
    fn replica_bound_violation_names_both_keys() {
        let err = parse_config("[policy]\nmin_replicas = 5\nmax_replicas = 2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("min_replicas (5)"), "{msg}");
        assert!(msg.contains("max_replicas (2)"), "{msg}");
    }

    #[test]
    fn zero_capacity_and_bad_horizon_rejected() {
        let err = parse_config("horizon_s = 0.0\n[cluster]\nedge_cpu_capacity = 0.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("horizon_s"));
        assert!(msg.contains("edge_cpu_capacity"));
    }

    #[test]
    fn round_trip_parse_serialize_parse_is_identity() {
        let original = parse_config(
            "seed = 7\nscale = 0.25\n[policy]\nkind = \"reactive\"\nmax_replicas = 12\n\
             [workload]\nbase_rate = 3.5\nnoise_fraction = 0.1\n",
        )
        .unwrap();
        let text = original.to_toml();
        let reparsed = parse_config(&text).unwrap();
        assert_eq!(original, reparsed);
    }

    #[test]
    fn default_workload_integrates_to_case_study_volume() {
        // 1 s midpoint quadrature over five days at scale 0.1.
        let config = ExperimentConfig::default();
        let profile = config.profile();
        let mut total = 0.0;
        let mut t = 0.5;
        while t < profile.horizon_s {
            total += profile.rate_at(t);
            t += 1.0;
        }
        let target = 255_000.0;
        assert!(
            (total - target).abs() / target < 0.01,
            "integrated {total:.0} requests vs target {target}"
        );
    }

    #[test]
    fn sim_config_places_edge_nodes_first() {
        let config = ExperimentConfig::default();
        let sim = config.sim_config();
        assert_eq!(sim.nodes.len(), 6);
        assert!(sim.nodes[..4].iter().all(|n| n.tier == Tier::Edge));
        assert!(sim.nodes[4..].iter().all(|n| n.tier == Tier::Cloud));
        assert_eq!(sim.initial_replicas, 1);
    }
}
