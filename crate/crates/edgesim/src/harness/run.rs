//! Experiment execution: workload generation, simulation, and artifact
//! emission. Every artifact starts with a `#`-prefixed preamble embedding
//! the seed and the full config snapshot, so any file is self-describing
//! and any run reproducible from any of its outputs.

use sha2::{Digest, Sha256};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::HarnessError;
use crate::controller::PolicyController;
use crate::forecaster::lstm;
use crate::sim::{run_simulation, NullSink, TraceRecord, TraceSink};
use crate::sla::{MetricsLedger, RequestRecord, SummaryReport};
use crate::workload::{generate_arrivals, Arrival};

/// Bit-exact header of the trace CSV.
pub const TRACE_HEADER: &str = "time_s,event,pod_id,replicas_ready,replicas_total,latency_ms,violated";
/// Header of the per-request CSV.
pub const REQUESTS_HEADER: &str = "id,arrival_s,latency_ms,violated,dropped";
/// Header of the scaling decision log CSV.
pub const DECISIONS_HEADER: &str = "tick_time_s,reactive_rec,proactive_rec,applied,reason,headroom";

/// Paths and in-memory results of one completed run.
#[derive(Debug)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub trace_path: Option<PathBuf>,
    pub decisions_path: PathBuf,
    pub requests_path: PathBuf,
    pub summary_path: PathBuf,
    pub summary_csv_path: PathBuf,
    pub config_snapshot_path: PathBuf,
    pub model_path: Option<PathBuf>,
    pub training_curve_path: Option<PathBuf>,
    pub arrivals_path: Option<PathBuf>,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub report: SummaryReport,
    pub ledger: MetricsLedger,
    pub arrivals_sha256: String,
    pub trace_sha256: Option<String>,
    pub forecaster_trained: bool,
    pub retrain_count: u32,
}

/// Runs one experiment end to end and writes all artifacts under
/// `<out_dir>/<policy>_seed<seed>/`. On failure the partial run directory is
/// removed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts, HarnessError> {
    config.validate()?;
    let dir = config.out_dir.join(config.run_id());
    fs::create_dir_all(&dir)?;
    match execute(config, &dir) {
        Ok(artifacts) => Ok(artifacts),
        Err(e) => {
            let _ = fs::remove_dir_all(&dir);
            Err(e)
        }
    }
}

fn execute(config: &ExperimentConfig, dir: &Path) -> Result<RunArtifacts, HarnessError> {
    let snapshot = config.to_toml();
    let profile = config.profile();
    let arrivals = generate_arrivals(&profile);
    let arrivals_sha256 = hash_arrivals(&arrivals);

    let config_snapshot_path = dir.join("config_snapshot.toml");
    fs::write(&config_snapshot_path, &snapshot)?;

    let arrivals_path = if config.write_arrivals {
        let path = dir.join("arrivals.csv");
        let mut w = BufWriter::new(fs::File::create(&path)?);
        write_preamble(&mut w, config.seed, &snapshot)?;
        crate::workload::write_arrivals_csv(&mut w, &arrivals)?;
        w.flush()?;
        Some(path)
    } else {
        None
    };

    let sim_config = config.sim_config();
    let mut controller = PolicyController::new(
        config.policy.clone(),
        &config.sla,
        config.forecaster.clone(),
        config.default_lead_time_s(),
        config.seed,
    );

    let trace_path = config.write_trace.then(|| dir.join("trace.csv"));
    let ledger = match &trace_path {
        Some(path) => {
            let mut sink = CsvTraceSink::create(path, config.seed, &snapshot)?;
            let ledger = run_simulation(&sim_config, &config.sla, &arrivals, &mut controller, &mut sink)?;
            sink.finish()?;
            ledger
        }
        None => {
            let mut sink = NullSink;
            run_simulation(&sim_config, &config.sla, &arrivals, &mut controller, &mut sink)?
        }
    };
    let trace_sha256 = trace_path.as_deref().map(sha256_file).transpose()?;

    let requests_path = dir.join("requests.csv");
    write_requests_csv(&requests_path, config.seed, &snapshot, &ledger.requests)?;

    let decisions_path = dir.join("decisions.csv");
    {
        let mut w = BufWriter::new(fs::File::create(&decisions_path)?);
        write_preamble(&mut w, config.seed, &snapshot)?;
        writeln!(w, "{DECISIONS_HEADER}")?;
        for d in &ledger.decisions {
            let proactive = d.proactive_rec.map(|p| p.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{:.6},{},{},{},{},{:.6}",
                d.tick_time_s, d.reactive_rec, proactive, d.applied, d.reason, d.headroom
            )?;
        }
        w.flush()?;
    }

    let (model_path, training_curve_path) = match controller.trained_lstm() {
        Some(model) => {
            let model_path = dir.join("model.bin");
            let mut w = BufWriter::new(fs::File::create(&model_path)?);
            model.save(&mut w).map_err(|e| HarnessError::Artifact(e.to_string()))?;
            w.flush()?;
            let curve_path = dir.join("training_curve.csv");
            let mut w = BufWriter::new(fs::File::create(&curve_path)?);
            write_preamble(&mut w, config.seed, &snapshot)?;
            lstm::write_history_csv(&mut w, &controller.training_history)?;
            w.flush()?;
            (Some(model_path), Some(curve_path))
        }
        None => (None, None),
    };

    let report = ledger.summarize();
    let summary_path = dir.join("summary.txt");
    let summary_csv_path = dir.join("summary.csv");
    let meta = RunMeta {
        policy: config.policy.kind.to_string(),
        seed: config.seed,
        horizon_s: config.horizon_s,
        scale: config.scale,
        arrivals_sha256: arrivals_sha256.clone(),
        trace_sha256: trace_sha256.clone(),
        forecaster_trained: controller.is_trained(),
        retrain_count: controller.retrain_count,
    };
    write_summary(&summary_path, &summary_csv_path, &meta, &report, &snapshot)?;

    Ok(RunArtifacts {
        dir: dir.to_path_buf(),
        trace_path,
        decisions_path,
        requests_path,
        summary_path,
        summary_csv_path,
        config_snapshot_path,
        model_path,
        training_curve_path,
        arrivals_path,
        seed: config.seed,
        config: config.clone(),
        report,
        ledger,
        arrivals_sha256,
        trace_sha256,
        forecaster_trained: meta.forecaster_trained,
        retrain_count: meta.retrain_count,
    })
}

struct RunMeta {
    policy: String,
    seed: u64,
    horizon_s: f64,
    scale: f64,
    arrivals_sha256: String,
    trace_sha256: Option<String>,
    forecaster_trained: bool,
    retrain_count: u32,
}

fn write_summary(
    path: &Path,
    csv_path: &Path,
    meta: &RunMeta,
    report: &SummaryReport,
    snapshot: &str,
) -> Result<(), HarnessError> {
    let mut body = String::new();
    body.push_str(&format!("policy = {}\n", meta.policy));
    body.push_str(&format!("seed = {}\n", meta.seed));
    body.push_str(&format!("horizon_s = {:.6}\n", meta.horizon_s));
    body.push_str(&format!("scale = {:.6}\n", meta.scale));
    body.push_str(&format!("arrivals_sha256 = {}\n", meta.arrivals_sha256));
    body.push_str(&format!(
        "trace_sha256 = {}\n",
        meta.trace_sha256.as_deref().unwrap_or("absent")
    ));
    body.push_str(&format!("forecaster_trained = {}\n", meta.forecaster_trained));
    body.push_str(&format!("retrain_count = {}\n", meta.retrain_count));
    body.push_str(&report.to_string());

    let mut text = String::from("# edgesim run summary\n");
    text.push_str(&body);
    text.push_str("\n[config_snapshot]\n");
    text.push_str(snapshot);
    fs::write(path, &text)?;

    let mut csv = String::from("key,value\n");
    for line in body.lines() {
        if let Some((k, v)) = line.split_once(" = ") {
            csv.push_str(&format!("{k},{v}\n"));
        }
    }
    fs::write(csv_path, csv)?;
    Ok(())
}

fn write_requests_csv(
    path: &Path,
    seed: u64,
    snapshot: &str,
    requests: &[RequestRecord],
) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_preamble(&mut w, seed, snapshot)?;
    writeln!(w, "{REQUESTS_HEADER}")?;
    for r in requests {
        let latency = r.latency_ms.map(|l| format!("{l:.3}")).unwrap_or_default();
        writeln!(
            w,
            "{},{:.6},{},{},{}",
            r.id,
            r.arrival_s,
            latency,
            u8::from(r.violated),
            u8::from(r.dropped)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the seed and the verbatim config snapshot as `#` comment lines.
pub fn write_preamble<W: Write>(w: &mut W, seed: u64, snapshot: &str) -> std::io::Result<()> {
    writeln!(w, "# edgesim artifact")?;
    writeln!(w, "# seed = {seed}")?;
    writeln!(w, "# config_snapshot:")?;
    for line in snapshot.lines() {
        writeln!(w, "#   {line}")?;
    }
    Ok(())
}

fn hash_arrivals(arrivals: &[Arrival]) -> String {
    let mut hasher = Sha256::new();
    for a in arrivals {
        hasher.update(a.id.to_le_bytes());
        hasher.update(a.time_s.to_le_bytes());
    }
    hex(&hasher.finalize())
}

/// SHA-256 of a file's bytes, hex-encoded.
pub fn sha256_file(path: &Path) -> Result<String, HarnessError> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex(&hasher.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Streams trace records to a CSV file.
pub struct CsvTraceSink {
    writer: BufWriter<fs::File>,
    error: Option<std::io::Error>,
}

impl CsvTraceSink {
    pub fn create(path: &Path, seed: u64, snapshot: &str) -> Result<Self, HarnessError> {
        let mut writer = BufWriter::new(fs::File::create(path)?);
        write_preamble(&mut writer, seed, snapshot)?;
        writeln!(writer, "{TRACE_HEADER}")?;
        Ok(Self { writer, error: None })
    }

    pub fn finish(mut self) -> Result<(), HarnessError> {
        if let Some(e) = self.error.take() {
            return Err(e.into());
        }
        self.writer.flush()?;
        Ok(())
    }
}

impl TraceSink for CsvTraceSink {
    fn record(&mut self, r: &TraceRecord) {
        if self.error.is_some() {
            return;
        }
        let pod = r.pod_id.map(|p| p.to_string()).unwrap_or_default();
        let latency = r.latency_ms.map(|l| format!("{l:.3}")).unwrap_or_default();
        let violated = r.violated.map(|v| u8::from(v).to_string()).unwrap_or_default();
        if let Err(e) = writeln!(
            self.writer,
            "{:.6},{},{},{},{},{},{}",
            r.time_s,
            r.kind.as_str(),
            pod,
            r.replicas_ready,
            r.replicas_total,
            latency,
            violated
        ) {
            self.error = Some(e);
        }
    }
}

/// Reloads enough of a run directory to compare it with another run:
/// the config snapshot, the summary, and the per-request records.
pub fn load_run_artifacts(dir: &Path) -> Result<RunArtifacts, HarnessError> {
    let config_snapshot_path = dir.join("config_snapshot.toml");
    let snapshot = fs::read_to_string(&config_snapshot_path)
        .map_err(|e| HarnessError::Artifact(format!("{}: {e}", config_snapshot_path.display())))?;
    let config = super::config::parse_config(&snapshot)?;

    let summary_path = dir.join("summary.txt");
    let summary_text = fs::read_to_string(&summary_path)
        .map_err(|e| HarnessError::Artifact(format!("{}: {e}", summary_path.display())))?;
    let summary = parse_summary(&summary_text)?;

    let requests_path = dir.join("requests.csv");
    let requests = read_requests_csv(&requests_path)?;

    let mut ledger = MetricsLedger::new();
    ledger.generated = summary.generated;
    ledger.completed = summary.served;
    ledger.dropped = summary.dropped;
    ledger.in_flight_at_end = summary.in_flight;
    ledger.requests = requests;

    Ok(RunArtifacts {
        dir: dir.to_path_buf(),
        trace_path: Some(dir.join("trace.csv")).filter(|p| p.exists()),
        decisions_path: dir.join("decisions.csv"),
        requests_path,
        summary_path,
        summary_csv_path: dir.join("summary.csv"),
        config_snapshot_path,
        model_path: Some(dir.join("model.bin")).filter(|p| p.exists()),
        training_curve_path: Some(dir.join("training_curve.csv")).filter(|p| p.exists()),
        arrivals_path: Some(dir.join("arrivals.csv")).filter(|p| p.exists()),
        seed: config.seed,
        report: summary.report,
        arrivals_sha256: summary.arrivals_sha256,
        trace_sha256: summary.trace_sha256,
        forecaster_trained: summary.forecaster_trained,
        retrain_count: summary.retrain_count,
        config,
        ledger,
    })
}

struct ParsedSummary {
    report: SummaryReport,
    generated: u64,
    served: u64,
    dropped: u64,
    in_flight: u64,
    arrivals_sha256: String,
    trace_sha256: Option<String>,
    forecaster_trained: bool,
    retrain_count: u32,
}

fn parse_summary(text: &str) -> Result<ParsedSummary, HarnessError> {
    use std::collections::HashMap;
    let mut kv = HashMap::new();
    for line in text.lines() {
        if line.starts_with('[') {
            break;
        }
        if let Some((k, v)) = line.split_once(" = ") {
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let get = |k: &str| -> Result<String, HarnessError> {
        kv.get(k)
            .cloned()
            .ok_or_else(|| HarnessError::Artifact(format!("summary missing key {k}")))
    };
    let num = |k: &str| -> Result<f64, HarnessError> {
        get(k)?
            .parse()
            .map_err(|_| HarnessError::Artifact(format!("summary key {k} not numeric")))
    };
    let opt_num = |k: &str| -> Result<Option<f64>, HarnessError> {
        let v = get(k)?;
        if v == "absent" {
            Ok(None)
        } else {
            v.parse()
                .map(Some)
                .map_err(|_| HarnessError::Artifact(format!("summary key {k} not numeric")))
        }
    };

    let latency = match opt_num("mean_latency_ms")? {
        None => None,
        Some(mean_ms) => Some(crate::sla::LatencyStats {
            mean_ms,
            median_ms: num("median_latency_ms")?,
            p95_ms: num("p95_latency_ms")?,
            p99_ms: num("p99_latency_ms")?,
            max_ms: num("max_latency_ms")?,
        }),
    };
    let report = SummaryReport {
        generated: num("generated")? as u64,
        served: num("served")? as u64,
        dropped: num("dropped")? as u64,
        in_flight_at_end: num("in_flight_at_end")? as u64,
        violations: num("violations")? as u64,
        violation_rate: opt_num("violation_rate")?,
        drop_rate: opt_num("drop_rate")?,
        availability_percent: opt_num("availability_percent")?,
        latency,
        mean_replicas: opt_num("mean_replicas")?,
        pod_seconds: num("pod_seconds")?,
        placement_failures: num("placement_failures")? as u64,
    };
    Ok(ParsedSummary {
        generated: report.generated,
        served: report.served,
        dropped: report.dropped,
        in_flight: report.in_flight_at_end,
        arrivals_sha256: get("arrivals_sha256")?,
        trace_sha256: match get("trace_sha256")?.as_str() {
            "absent" => None,
            h => Some(h.to_string()),
        },
        forecaster_trained: get("forecaster_trained")? == "true",
        retrain_count: num("retrain_count")? as u32,
        report,
    })
}

fn read_requests_csv(path: &Path) -> Result<Vec<RequestRecord>, HarnessError> {
    let text = fs::read_to_string(path)
        .map_err(|e| HarnessError::Artifact(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    let mut saw_header = false;
    for line in text.lines() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !saw_header {
            if line != REQUESTS_HEADER {
                return Err(HarnessError::Artifact(format!(
                    "unexpected requests header: {line}"
                )));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(HarnessError::Artifact(format!("bad requests row: {line}")));
        }
        let parse_f = |s: &str| -> Result<f64, HarnessError> {
            s.parse()
                .map_err(|_| HarnessError::Artifact(format!("bad number in row: {line}")))
        };
        out.push(RequestRecord {
            id: fields[0]
                .parse()
                .map_err(|_| HarnessError::Artifact(format!("bad id in row: {line}")))?,
            arrival_s: parse_f(fields[1])?,
            start_service_s: None,
            pod_id: None,
            latency_ms: if fields[2].is_empty() {
                None
            } else {
                Some(parse_f(fields[2])?)
            },
            violated: fields[3] == "1",
            dropped: fields[4] == "1",
        });
    }
    Ok(out)
}
