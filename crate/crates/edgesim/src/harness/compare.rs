//! Side-by-side comparison of two runs: latency and violation aggregates
//! with ratios, aligned time-bucketed latency series for plotting, and the
//! relative acceptance bounds a reactive-vs-hybrid pair is expected to meet.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::run::{write_preamble, RunArtifacts};
use super::HarnessError;
use crate::autoscaler::PolicyKind;
use crate::sla::{nearest_rank, RequestRecord};

/// Aggregates for the requests whose arrivals fall inside one peak window.
#[derive(Debug, Clone, Copy)]
pub struct PeakWindowStats {
    pub center_s: f64,
    pub served: u64,
    pub violations: u64,
    pub p99_ms: Option<f64>,
}

/// Nearest-rank p99 and violation counts over `[center - half, center + half]`
/// per peak center, keyed by request arrival time.
pub fn peak_window_stats(
    records: &[RequestRecord],
    centers: &[f64],
    half_width_s: f64,
) -> Vec<PeakWindowStats> {
    centers
        .iter()
        .map(|&center_s| {
            let mut latencies: Vec<f64> = records
                .iter()
                .filter(|r| !r.dropped && (r.arrival_s - center_s).abs() <= half_width_s)
                .filter_map(|r| r.latency_ms)
                .collect();
            latencies.sort_by(|a, b| a.total_cmp(b));
            let violations = records
                .iter()
                .filter(|r| {
                    !r.dropped && r.violated && (r.arrival_s - center_s).abs() <= half_width_s
                })
                .count() as u64;
            PeakWindowStats {
                center_s,
                served: latencies.len() as u64,
                violations,
                p99_ms: if latencies.is_empty() {
                    None
                } else {
                    Some(nearest_rank(&latencies, 99.0))
                },
            }
        })
        .collect()
}

/// One run's column in the comparison.
#[derive(Debug, Clone)]
pub struct RunColumn {
    pub label: String,
    pub policy: PolicyKind,
    pub mean_latency_ms: Option<f64>,
    pub p95_latency_ms: Option<f64>,
    pub p99_latency_ms: Option<f64>,
    pub violation_rate: Option<f64>,
    pub drop_rate: Option<f64>,
    pub pod_seconds: f64,
    pub mean_replicas: Option<f64>,
}

impl RunColumn {
    fn from_artifacts(a: &RunArtifacts) -> Self {
        Self {
            label: a
                .dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".into()),
            policy: a.config.policy.kind,
            mean_latency_ms: a.report.latency.map(|l| l.mean_ms),
            p95_latency_ms: a.report.latency.map(|l| l.p95_ms),
            p99_latency_ms: a.report.latency.map(|l| l.p99_ms),
            violation_rate: a.report.violation_rate,
            drop_rate: a.report.drop_rate,
            pod_seconds: a.report.pod_seconds,
            mean_replicas: a.report.mean_replicas,
        }
    }
}

/// Output of [`compare_runs`]: the two columns, b-over-a ratios, and any
/// warnings (e.g. mismatched workload seeds).
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub a: RunColumn,
    pub b: RunColumn,
    pub mean_ratio: Option<f64>,
    pub p95_ratio: Option<f64>,
    pub p99_ratio: Option<f64>,
    pub violation_rate_ratio: Option<f64>,
    pub pod_seconds_ratio: f64,
    pub warnings: Vec<String>,
    pub plot_paths: Vec<PathBuf>,
}

fn ratio(b: Option<f64>, a: Option<f64>) -> Option<f64> {
    match (b, a) {
        (Some(b), Some(a)) if a != 0.0 => Some(b / a),
        _ => None,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "absent".into())
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "metric,{},{},ratio_b_over_a", self.a.label, self.b.label)?;
        writeln!(
            f,
            "mean_latency_ms,{},{},{}",
            fmt_opt(self.a.mean_latency_ms),
            fmt_opt(self.b.mean_latency_ms),
            fmt_opt(self.mean_ratio)
        )?;
        writeln!(
            f,
            "p95_latency_ms,{},{},{}",
            fmt_opt(self.a.p95_latency_ms),
            fmt_opt(self.b.p95_latency_ms),
            fmt_opt(self.p95_ratio)
        )?;
        writeln!(
            f,
            "p99_latency_ms,{},{},{}",
            fmt_opt(self.a.p99_latency_ms),
            fmt_opt(self.b.p99_latency_ms),
            fmt_opt(self.p99_ratio)
        )?;
        writeln!(
            f,
            "violation_rate,{},{},{}",
            fmt_opt(self.a.violation_rate),
            fmt_opt(self.b.violation_rate),
            fmt_opt(self.violation_rate_ratio)
        )?;
        writeln!(
            f,
            "pod_seconds,{:.3},{:.3},{:.6}",
            self.a.pod_seconds, self.b.pod_seconds, self.pod_seconds_ratio
        )?;
        writeln!(
            f,
            "mean_replicas,{},{}",
            fmt_opt(self.a.mean_replicas),
            fmt_opt(self.b.mean_replicas)
        )?;
        for w in &self.warnings {
            writeln!(f, "# warning: {w}")?;
        }
        Ok(())
    }
}

/// Compares two completed runs. Horizons must match; differing workload
/// seeds only warn. Writes `comparison.csv` plus one aligned plot-data file
/// per run (`plot_<label>.csv`, shared time axis of `plot_bucket_s` rows)
/// into `out_dir`.
pub fn compare_runs(
    a: &RunArtifacts,
    b: &RunArtifacts,
    out_dir: &Path,
    plot_bucket_s: f64,
) -> Result<ComparisonReport, HarnessError> {
    if (a.config.horizon_s - b.config.horizon_s).abs() > 1e-9 {
        return Err(HarnessError::HorizonMismatch {
            a: a.config.horizon_s,
            b: b.config.horizon_s,
        });
    }
    let mut warnings = Vec::new();
    if a.seed != b.seed {
        warnings.push(format!(
            "workload seeds differ ({} vs {}); latency columns are not paired",
            a.seed, b.seed
        ));
    }

    fs::create_dir_all(out_dir)?;
    let mut plot_paths = Vec::new();
    for run in [a, b] {
        let label = run
            .dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        let path = out_dir.join(format!("plot_{label}.csv"));
        write_plot_data(&path, run, plot_bucket_s)?;
        plot_paths.push(path);
    }

    let col_a = RunColumn::from_artifacts(a);
    let col_b = RunColumn::from_artifacts(b);
    let report = ComparisonReport {
        mean_ratio: ratio(col_b.mean_latency_ms, col_a.mean_latency_ms),
        p95_ratio: ratio(col_b.p95_latency_ms, col_a.p95_latency_ms),
        p99_ratio: ratio(col_b.p99_latency_ms, col_a.p99_latency_ms),
        violation_rate_ratio: ratio(col_b.violation_rate, col_a.violation_rate),
        pod_seconds_ratio: if col_a.pod_seconds != 0.0 {
            col_b.pod_seconds / col_a.pod_seconds
        } else {
            f64::NAN
        },
        a: col_a,
        b: col_b,
        warnings,
        plot_paths,
    };
    fs::write(out_dir.join("comparison.csv"), report.to_string())?;
    Ok(report)
}

/// Time-bucketed latency series keyed by arrival time: one row per plot
/// bucket across the whole horizon, empty stats for empty buckets.
fn write_plot_data(path: &Path, run: &RunArtifacts, bucket_s: f64) -> Result<(), HarnessError> {
    let horizon = run.config.horizon_s;
    let n = (horizon / bucket_s).ceil() as usize;
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut violations = vec![0u64; n];
    let mut counts = vec![0u64; n];
    for r in &run.ledger.requests {
        let idx = ((r.arrival_s / bucket_s) as usize).min(n.saturating_sub(1));
        counts[idx] += 1;
        if r.violated {
            violations[idx] += 1;
        }
        if let Some(l) = r.latency_ms {
            if !r.dropped {
                buckets[idx].push(l);
            }
        }
    }

    let snapshot = run.config.to_toml();
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_preamble(&mut w, run.seed, &snapshot)?;
    writeln!(w, "bucket_start_s,requests,mean_latency_ms,p99_latency_ms,violations")?;
    for i in 0..n {
        let start = i as f64 * bucket_s;
        if buckets[i].is_empty() {
            writeln!(w, "{:.6},{},,,{}", start, counts[i], violations[i])?;
        } else {
            buckets[i].sort_by(|x, y| x.total_cmp(y));
            let mean: f64 = buckets[i].iter().sum::<f64>() / buckets[i].len() as f64;
            let p99 = nearest_rank(&buckets[i], 99.0);
            writeln!(
                w,
                "{:.6},{},{:.3},{:.3},{}",
                start, counts[i], mean, p99, violations[i]
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One acceptance bound check result.
#[derive(Debug, Clone)]
pub struct BoundCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// The relative bounds a same-seed reactive/hybrid pair must meet:
/// hybrid mean latency within the SLA threshold, hybrid violation rate at
/// most half the reactive one, and reactive p99 at least twice the hybrid
/// p99 inside every post-bootstrap peak window (±1 h around each peak after
/// the first simulated day).
pub fn acceptance_bounds(a: &RunArtifacts, b: &RunArtifacts) -> Result<Vec<BoundCheck>, HarnessError> {
    let (reactive, hybrid) = match (a.config.policy.kind, b.config.policy.kind) {
        (PolicyKind::Reactive, PolicyKind::Hybrid) => (a, b),
        (PolicyKind::Hybrid, PolicyKind::Reactive) => (b, a),
        (ka, kb) => {
            return Err(HarnessError::Artifact(format!(
                "acceptance bounds need one reactive and one hybrid run, got {ka} and {kb}"
            )))
        }
    };
    let mut checks = Vec::new();

    let threshold = hybrid.config.sla.latency_threshold_ms;
    let hybrid_mean = hybrid.report.latency.map(|l| l.mean_ms);
    checks.push(BoundCheck {
        name: "hybrid_mean_latency_within_sla".into(),
        passed: hybrid_mean.is_some_and(|m| m <= threshold),
        detail: format!(
            "hybrid mean latency {} ms vs threshold {threshold} ms",
            fmt_opt(hybrid_mean)
        ),
    });

    let vr_reactive = reactive.report.violation_rate.unwrap_or(0.0);
    let vr_hybrid = hybrid.report.violation_rate.unwrap_or(0.0);
    checks.push(BoundCheck {
        name: "hybrid_violations_at_most_half_of_reactive".into(),
        passed: vr_hybrid <= 0.5 * vr_reactive,
        detail: format!("hybrid {vr_hybrid:.6} vs reactive {vr_reactive:.6} (bound 50%)"),
    });

    let profile = hybrid.config.profile();
    let centers: Vec<f64> = profile.peak_times().into_iter().filter(|&c| c > 86_400.0).collect();
    let stats_r = peak_window_stats(&reactive.ledger.requests, &centers, 3600.0);
    let stats_h = peak_window_stats(&hybrid.ledger.requests, &centers, 3600.0);
    for (r, h) in stats_r.iter().zip(&stats_h) {
        let passed = match (r.p99_ms, h.p99_ms) {
            (Some(rp), Some(hp)) => rp >= 2.0 * hp,
            _ => false,
        };
        checks.push(BoundCheck {
            name: format!("peak_window_p99_ratio_at_{}s", r.center_s as u64),
            passed,
            detail: format!(
                "reactive p99 {} ms vs hybrid p99 {} ms (bound 2x)",
                fmt_opt(r.p99_ms),
                fmt_opt(h.p99_ms)
            ),
        });
    }
    Ok(checks)
}
