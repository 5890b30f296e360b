// Scratch probe of LSTM spike-learning dynamics; not part of the deliverable.
use edgesim::forecaster::lstm::{train_warm, LstmConfig, LstmModel};
use edgesim::forecaster::{preprocess, smooth_centered};
use edgesim::harness::ExperimentConfig;
use edgesim::workload::{bucketize, generate_arrivals, Peak};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let sigma_s: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(60.0);
    let days: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(200);
    let patience: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(200);

    let mut cfg = ExperimentConfig::default();
    cfg.workload.peaks = vec![
        Peak { center_hour: 8.5, amplitude: 950.0, width_hours: sigma_s / 3600.0 },
        Peak { center_hour: 19.5, amplitude: 1177.0, width_hours: sigma_s / 3600.0 },
    ];
    cfg.horizon_s = days * 86_400.0;
    let profile = cfg.profile();
    let arrivals = generate_arrivals(&profile);
    let buckets = bucketize(&arrivals, 60.0, cfg.horizon_s);
    let raw: Vec<f64> = buckets.iter().map(|b| b.rate()).collect();
    println!("{} buckets, total arrivals {}", raw.len(), arrivals.len());

    let series = preprocess(&raw, 60.0, 5, 5.0 / 6.0).unwrap();
    println!("norm: min={:.3} max={:.3}", series.normalization.min, series.normalization.max);

    let lstm_cfg = LstmConfig { epochs, patience, ..LstmConfig::default() };
    let t0 = Instant::now();
    let model0 = LstmModel::init(lstm_cfg, 42).unwrap();
    let out = train_warm(model0, &series, 5.0 / 6.0, 42, epochs).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    let hist = &out.history;
    println!(
        "trained {} epochs in {:.1}s (best epoch {}): first train {:.3e} val {:?}, last train {:.3e} val {:?}",
        hist.len(), dt, out.best_epoch,
        hist[0].train_loss, hist[0].val_loss,
        hist.last().unwrap().train_loss, hist.last().unwrap().val_loss
    );

    // Probe predictions around the first evening spike (19.5 h = bucket 1170).
    let smoothed = smooth_centered(&raw, 5);
    let center_bucket = (19.5 * 60.0) as usize;
    let model = &out.model;
    for end in (center_bucket - 6)..(center_bucket + 4) {
        let lo = end - 65;
        let pred = model.forecast_from_raw(&raw[lo..end]).unwrap();
        println!(
            "series ends bucket {} (peak{:+}): last smoothed={:8.2} actual next 5 = {:?} predicted = {:?}",
            end,
            end as i64 - center_bucket as i64,
            smoothed[end - 1],
            &smoothed[end..(end + 5).min(smoothed.len())]
                .iter()
                .map(|v| format!("{v:.1}"))
                .collect::<Vec<_>>(),
            pred.iter().map(|v| format!("{v:.1}")).collect::<Vec<_>>()
        );
    }
}
