//! Thin command-line wrapper over the edgesim library.
//!
//! Exit codes: 0 success, 1 config validation failure, 2 runtime failure,
//! 3 acceptance-bound failure in `compare --assert`.

use clap::{Args, Parser, Subcommand};
use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use edgesim::forecaster::{lstm, preprocess};
use edgesim::harness::{
    acceptance_bounds, compare_runs, load_run_artifacts, parse_config, run_experiment,
    ConfigError, ExperimentConfig, HarnessError,
};
use edgesim::sla::downtime_comparison_table;
use edgesim::workload::{bucketize, Arrival};
use edgesim::PolicyKind;

#[derive(Parser)]
#[command(name = "edgesim", about = "SLA-constrained cloud+edge autoscaling simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigOverrides {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Workload and model seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Scaling policy for this run.
    #[arg(long, value_parser = parse_policy)]
    policy: Option<PolicyKind>,
    /// Output directory for run artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Workload scaling factor (1.0 = full case-study volume).
    #[arg(long)]
    scale: Option<f64>,
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    match s {
        "reactive" => Ok(PolicyKind::Reactive),
        "proactive" => Ok(PolicyKind::Proactive),
        "hybrid" => Ok(PolicyKind::Hybrid),
        other => Err(format!("unknown policy '{other}' (expected reactive|proactive|hybrid)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a config, printing the fully resolved form.
    Validate(ConfigOverrides),
    /// Run one experiment and write its artifacts.
    Run(ConfigOverrides),
    /// Compare two completed run directories.
    Compare {
        dir_a: PathBuf,
        dir_b: PathBuf,
        /// Where comparison.csv and plot data go.
        #[arg(long, default_value = "runs/comparison")]
        out: PathBuf,
        /// Plot series bucket width (s).
        #[arg(long, default_value_t = 60.0)]
        plot_bucket: f64,
        /// Check the reactive-vs-hybrid acceptance bounds; exit 3 on failure.
        #[arg(long = "assert")]
        assert_bounds: bool,
    },
    /// Train the LSTM forecaster offline on an arrival or bucket trace.
    Train {
        /// Arrival CSV (id,time_s) to bucketize and train on.
        #[arg(long, conflicts_with = "buckets")]
        arrivals: Option<PathBuf>,
        /// Bucket CSV (start_s,count) to train on directly.
        #[arg(long)]
        buckets: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Print the availability/downtime table beside the published values.
    SlaTable,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                HarnessError::Config(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn load_config(overrides: &ConfigOverrides) -> Result<ExperimentConfig, HarnessError> {
    let mut config = match &overrides.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            parse_config(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(kind) = overrides.policy {
        config.policy.kind = kind;
    }
    if let Some(out) = &overrides.out {
        config.out_dir = out.clone();
    }
    if let Some(scale) = overrides.scale {
        config.scale = scale;
    }
    config.validate().map_err(ConfigError::from)?;
    Ok(config)
}

fn dispatch(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Validate(overrides) => {
            let config = load_config(&overrides)?;
            print!("{}", config.to_toml());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run(overrides) => {
            let config = load_config(&overrides)?;
            let artifacts = run_experiment(&config)?;
            println!("run complete: {}", artifacts.dir.display());
            print!("{}", artifacts.report);
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { dir_a, dir_b, out, plot_bucket, assert_bounds } => {
            let a = load_run_artifacts(&dir_a)?;
            let b = load_run_artifacts(&dir_b)?;
            let report = compare_runs(&a, &b, &out, plot_bucket)?;
            print!("{report}");
            if assert_bounds {
                let checks = acceptance_bounds(&a, &b)?;
                let mut failed = false;
                for c in &checks {
                    println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                    failed |= !c.passed;
                }
                if failed {
                    return Ok(ExitCode::from(3));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Train { arrivals, buckets, overrides } => {
            let config = load_config(&overrides)?;
            let raw = match (&arrivals, &buckets) {
                (Some(path), None) => {
                    let stream = read_arrivals_csv(path)?;
                    let horizon = stream.last().map(|a| a.time_s + 1.0).unwrap_or(0.0);
                    bucketize(&stream, config.forecaster.bucket_width_s, horizon)
                        .iter()
                        .map(|b| b.rate())
                        .collect::<Vec<f64>>()
                }
                (None, Some(path)) => read_bucket_csv(path, config.forecaster.bucket_width_s)?,
                _ => {
                    return Err(HarnessError::Artifact(
                        "train needs exactly one of --arrivals or --buckets".into(),
                    ))
                }
            };
            let series = preprocess(
                &raw,
                config.forecaster.bucket_width_s,
                config.forecaster.lstm.smoothing_window,
                config.forecaster.train_fraction,
            )
            .map_err(|e| HarnessError::Artifact(e.to_string()))?;
            let outcome = lstm::train(
                config.forecaster.lstm,
                &series,
                config.forecaster.train_fraction,
                config.seed,
            )
            .map_err(|e| HarnessError::Artifact(e.to_string()))?;

            let out_dir = config.out_dir.join("offline_train");
            fs::create_dir_all(&out_dir)?;
            let model_path = out_dir.join("model.bin");
            let mut w = BufWriter::new(fs::File::create(&model_path)?);
            outcome
                .model
                .save(&mut w)
                .map_err(|e| HarnessError::Artifact(e.to_string()))?;
            drop(w);
            let curve_path = out_dir.join("training_curve.csv");
            let mut w = BufWriter::new(fs::File::create(&curve_path)?);
            lstm::write_history_csv(&mut w, &outcome.history)?;
            drop(w);

            let last = outcome.history.last().expect("training ran");
            println!("trained on {} buckets ({} epochs, best epoch {})", raw.len(), outcome.history.len(), outcome.best_epoch);
            println!("final train loss = {:.6e}", last.train_loss);
            match last.val_loss {
                Some(v) => println!("final validation loss = {v:.6e}"),
                None => println!("final validation loss = absent (series too short to hold out)"),
            }
            println!("model: {}", model_path.display());
            println!("training curve: {}", curve_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::SlaTable => {
            println!(
                "{:<14} {:>16} {:>16} {:>10}   {:>16} {:>16}",
                "availability%", "monthly(formula)", "monthly(published)", "dev%", "yearly(formula)", "yearly(published)"
            );
            for row in downtime_comparison_table() {
                let flag = if row.monthly_matches { "" } else { "  <- published uses a 730 h month" };
                println!(
                    "{:<14} {:>13.3} {} {:>13.3} {} {:>9.2}%   {:>13.3} {} {:>13.3} {}{}",
                    row.availability_percent,
                    row.monthly_formula,
                    row.monthly_unit.label(),
                    row.monthly_published,
                    row.monthly_unit.label(),
                    row.monthly_deviation_percent,
                    row.yearly_formula,
                    row.yearly_unit.label(),
                    row.yearly_published,
                    row.yearly_unit.label(),
                    flag
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn read_arrivals_csv(path: &PathBuf) -> Result<Vec<Arrival>, HarnessError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.is_empty() || line == "id,time_s" {
            continue;
        }
        let (id, time) = line
            .split_once(',')
            .ok_or_else(|| HarnessError::Artifact(format!("bad arrivals row: {line}")))?;
        out.push(Arrival {
            id: id
                .parse()
                .map_err(|_| HarnessError::Artifact(format!("bad arrival id: {line}")))?,
            time_s: time
                .parse()
                .map_err(|_| HarnessError::Artifact(format!("bad arrival time: {line}")))?,
        });
    }
    Ok(out)
}

fn read_bucket_csv(path: &PathBuf, width_s: f64) -> Result<Vec<f64>, HarnessError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.is_empty() || line == "start_s,count" {
            continue;
        }
        let (_, count) = line
            .split_once(',')
            .ok_or_else(|| HarnessError::Artifact(format!("bad bucket row: {line}")))?;
        let count: f64 = count
            .parse()
            .map_err(|_| HarnessError::Artifact(format!("bad bucket count: {line}")))?;
        out.push(count / width_s);
    }
    Ok(out)
}
