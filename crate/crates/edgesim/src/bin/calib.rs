// Scratch calibration sweep; not part of the deliverable.
use edgesim::harness::{peak_window_stats, ExperimentConfig};
use edgesim::workload::Peak;
use edgesim::{generate_arrivals, PolicyController, PolicyKind};
use std::time::Instant;

fn run_one(config: &ExperimentConfig) -> (edgesim::SummaryReport, edgesim::MetricsLedger, bool, f64) {
    let profile = config.profile();
    let arrivals = generate_arrivals(&profile);
    let sim = config.sim_config();
    let mut controller = PolicyController::new(
        config.policy.clone(),
        &config.sla,
        config.forecaster.clone(),
        config.default_lead_time_s(),
        config.seed,
    );
    let mut sink = edgesim::sim::NullSink;
    let t0 = Instant::now();
    let ledger = edgesim::run_simulation(&sim, &config.sla, &arrivals, &mut controller, &mut sink).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    (ledger.summarize(), ledger, controller.is_trained(), dt)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let sigma_s: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(60.0);
    let a_morning: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(950.0);
    let a_evening: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1177.0);
    let capacity: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(25.0);
    let headroom: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(1.2);
    let days: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(5.0);
    let noise: f64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(0.2);

    let mut base = ExperimentConfig::default();
    base.horizon_s = days * 86_400.0;
    base.workload.noise_fraction = noise;
    base.workload.peaks = vec![
        Peak { center_hour: 9.0, amplitude: a_morning, width_hours: sigma_s / 3600.0 },
        Peak { center_hour: 20.0, amplitude: a_evening, width_hours: sigma_s / 3600.0 },
    ];
    // Rescale base_rate so the 5-day total stays ~255k at scale 0.1.
    let peak_total = 5.0 * (a_morning + a_evening) * 0.1 * sigma_s * (2.0 * std::f64::consts::PI).sqrt();
    let target = 255_000.0 * days / 5.0;
    let base_rate_scaled = (target - peak_total * days / 5.0) / (days * 86_400.0);
    base.workload.base_rate = (base_rate_scaled / 0.1).max(0.0);
    base.policy.per_pod_capacity = capacity;
    base.policy.headroom = headroom;
    base.write_trace = false;

    println!(
        "sigma={sigma_s}s A=({a_morning},{a_evening})x0.1 cap={capacity} headroom={headroom} base={:.3} days={days} noise={noise}",
        base.workload.base_rate * 0.1
    );

    let mut reactive_cfg = base.clone();
    reactive_cfg.policy.kind = PolicyKind::Reactive;
    let mut hybrid_cfg = base.clone();
    hybrid_cfg.policy.kind = PolicyKind::Hybrid;

    let t0 = Instant::now();
    let (r_sum, r_ledger, _, r_dt) = run_one(&reactive_cfg);
    let (h_sum, h_ledger, h_trained, h_dt) = run_one(&hybrid_cfg);
    let wall = t0.elapsed().as_secs_f64();

    let profile = base.profile();
    let centers: Vec<f64> = profile.peak_times();
    let post: Vec<f64> = centers.iter().copied().filter(|&c| c > 86_400.0).collect();
    let r_windows = peak_window_stats(&r_ledger.requests, &post, 3600.0);
    let h_windows = peak_window_stats(&h_ledger.requests, &post, 3600.0);

    println!("reactive: gen={} served={} drop={} viol_rate={:?} mean={:?} p99={:?} pods={:.0} [{r_dt:.1}s]",
        r_sum.generated, r_sum.served, r_sum.dropped, r_sum.violation_rate,
        r_sum.latency.map(|l| l.mean_ms), r_sum.latency.map(|l| l.p99_ms), r_sum.pod_seconds);
    println!("hybrid:   gen={} served={} drop={} viol_rate={:?} mean={:?} p99={:?} pods={:.0} trained={h_trained} [{h_dt:.1}s]",
        h_sum.generated, h_sum.served, h_sum.dropped, h_sum.violation_rate,
        h_sum.latency.map(|l| l.mean_ms), h_sum.latency.map(|l| l.p99_ms), h_sum.pod_seconds);

    let mut may = true;
    for (r, h) in r_windows.iter().zip(&h_windows) {
        let ratio = match (r.p99_ms, h.p99_ms) {
            (Some(a), Some(b)) if b > 0.0 => a / b,
            _ => f64::NAN,
        };
        let ok = ratio >= 2.0;
        may &= ok;
        println!(
            "  window@{:>7.0}s: reactive p99={:>9.1} viol={:>6}  hybrid p99={:>9.1} viol={:>6}  ratio={:>6.2} {}",
            r.center_s,
            r.p99_ms.unwrap_or(f64::NAN),
            r.violations,
            h.p99_ms.unwrap_or(f64::NAN),
            h.violations,
            ratio,
            if ok { "OK" } else { "FAIL" }
        );
    }

    // Pre-scaling: forecast-driven upscale in [center-1800, center-10].
    let mut prescaled = 0;
    for &c in &post {
        let hit = h_ledger.decisions.iter().any(|d| {
            d.tick_time_s >= c - 1800.0
                && d.tick_time_s <= c - 10.0
                && d.proactive_rec.map(|p| p > d.reactive_rec).unwrap_or(false)
                && d.applied > d.reactive_rec
        });
        if hit {
            prescaled += 1;
        }
    }
    println!(
        "prescaled {}/{} post-day-1 peaks | 2a mean<=150: {} | 2b ratio: {:.3} | 2c all>=2x: {may} | wall {wall:.1}s",
        prescaled,
        post.len(),
        h_sum.latency.map(|l| l.mean_ms <= 150.0).unwrap_or(false),
        h_sum.violation_rate.unwrap_or(0.0) / r_sum.violation_rate.unwrap_or(f64::NAN),
    );

    let upsells = h_ledger
        .decisions
        .iter()
        .filter(|d| d.proactive_rec.map(|p| p > d.reactive_rec).unwrap_or(false))
        .count();
    println!("decisions with proactive>reactive: {upsells}/{}", h_ledger.decisions.len());

    // Forecast anticipation diagnostic around the last evening peak.
    if let Some(&center) = post.last() {
        let width = base.forecaster.bucket_width_s;
        let buckets = edgesim::workload::bucketize(&generate_arrivals(&profile), width, base.horizon_s);
        let rates: Vec<f64> = buckets.iter().map(|b| b.rate()).collect();
        // Re-train quickly outside the sim? No: reuse decisions log instead.
        for d in h_ledger.decisions.iter().filter(|d| (d.tick_time_s - center).abs() <= 240.0) {
            let idx = (d.tick_time_s / width) as usize;
            println!(
                "  tick {:>9.0} (peak{:+5.0}s): rate[bucket-1]={:>7.1} reactive={} proactive={:?} applied={} reason={}",
                d.tick_time_s,
                d.tick_time_s - center,
                if idx >= 1 { rates[idx - 1] } else { 0.0 },
                d.reactive_rec,
                d.proactive_rec,
                d.applied,
                d.reason
            );
        }
    }
}
