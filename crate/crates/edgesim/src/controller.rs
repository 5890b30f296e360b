//! Control-loop runtime: evaluates the configured scaling policy at every
//! control tick, manages forecaster training on the live bucket series
//! (bootstrap threshold, flag-driven retrains), gates scale-downs through
//! the stabilization window, and runs the SLA-violation headroom feedback.
//!
//! The simulation engine only sees the [`ScalingPolicy`] trait; everything
//! forecaster-related stays behind it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autoscaler::{
    hybrid_decide, proactive_decide, reactive_decide, AutoscalerPolicy, DecisionReason,
    HeadroomFeedback, PolicyKind, ScalingDecision, StabilizationWindow,
};
use crate::forecaster::holt_winters::{self, HoltWintersConfig, HoltWintersError};
use crate::forecaster::lstm::{self, EpochLoss, LstmConfig, LstmError, LstmModel};
use crate::forecaster::preprocess;
use crate::sla::SlaPolicy;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("lstm training failed: {0}")]
    Lstm(#[from] LstmError),
    #[error("holt-winters fit failed: {0}")]
    HoltWinters(#[from] HoltWintersError),
}

/// Snapshot handed to the policy at each control tick.
#[derive(Debug, Clone, Copy)]
pub struct TickContext<'a> {
    pub now: f64,
    /// Busy-time fraction over the last control window, averaged across Ready pods.
    pub observed_utilization: f64,
    pub ready_replicas: u32,
    /// Ready + Pending replicas (the ordered capacity).
    pub total_replicas: u32,
    pub bucket_width_s: f64,
    /// Arrival counts of all fully elapsed buckets.
    pub completed_counts: &'a [u64],
    /// Violation rate over the trailing feedback window.
    pub recent_violation_rate: f64,
}

/// Policy evaluation invoked by the engine at every control tick.
pub trait ScalingPolicy {
    fn decide(&mut self, ctx: &TickContext) -> Result<ScalingDecision, PolicyError>;
}

/// Which forecasting model backs the proactive side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecasterKind {
    Lstm,
    HoltWinters,
}

/// When retrains happen once the model is bootstrapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrainMode {
    /// Retrain every `retrain_interval_s` as new data accrues.
    Periodic,
    /// Retrain only when the SLA feedback loop flags it, rate-limited by
    /// `retrain_interval_s`.
    OnFlag,
    /// Train once at bootstrap, never again.
    Off,
}

/// Forecaster wiring: bucket feed, bootstrap threshold, retrain schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecasterConfig {
    pub kind: ForecasterKind,
    /// Width of the rate buckets fed to the model (s).
    pub bucket_width_s: f64,
    /// The model counts as untrained until this much history exists (s).
    pub bootstrap_s: f64,
    pub retrain_mode: RetrainMode,
    /// Spacing between retrains (s).
    pub retrain_interval_s: f64,
    /// Warm-start epochs used for retrains.
    pub retrain_epochs: usize,
    /// Retrains fit on at most this many trailing buckets.
    pub retrain_window_buckets: usize,
    /// Leading fraction of the series used for training (rest validates).
    pub train_fraction: f64,
    pub lstm: LstmConfig,
    pub holt_winters: HoltWintersConfig,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        Self {
            kind: ForecasterKind::Lstm,
            bucket_width_s: 60.0,
            bootstrap_s: 86_400.0,
            retrain_mode: RetrainMode::Periodic,
            retrain_interval_s: 21_600.0,
            retrain_epochs: 15,
            retrain_window_buckets: 1440,
            train_fraction: 5.0 / 6.0,
            lstm: LstmConfig::default(),
            holt_winters: HoltWintersConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
enum TrainedForecaster {
    Lstm(LstmModel),
    /// Holt-Winters refits on the full series per forecast, so only the
    /// configuration is retained once bootstrapped.
    HoltWinters,
}

#[derive(Debug, Clone)]
struct CachedForecast {
    buckets_len: usize,
    generation: u32,
    /// Forecast rates for buckets starting at `series_end_s`.
    values: Vec<f64>,
    series_end_s: f64,
}

/// Stateful policy runtime for one simulation run.
pub struct PolicyController {
    pub policy: AutoscalerPolicy,
    forecaster: ForecasterConfig,
    lead_time_s: f64,
    sla_feedback_window_s: f64,
    stabilization: StabilizationWindow,
    feedback: HeadroomFeedback,
    model: Option<TrainedForecaster>,
    generation: u32,
    cache: Option<CachedForecast>,
    last_train_s: Option<f64>,
    retrain_flagged: bool,
    seed: u64,
    /// Concatenated loss curves from the initial train and all retrains.
    pub training_history: Vec<EpochLoss>,
    pub retrain_count: u32,
}

impl PolicyController {
    /// `lead_default_s` is cold_start_delay + control_period, used when the
    /// policy does not pin its own lead time.
    pub fn new(
        policy: AutoscalerPolicy,
        sla: &SlaPolicy,
        forecaster: ForecasterConfig,
        lead_default_s: f64,
        seed: u64,
    ) -> Self {
        let lead_time_s = policy.lead_time_s.unwrap_or(lead_default_s);
        Self {
            feedback: HeadroomFeedback::new(sla.violation_trigger, sla.feedback_cooldown_s),
            sla_feedback_window_s: sla.feedback_window_s,
            stabilization: StabilizationWindow::default(),
            model: None,
            generation: 0,
            cache: None,
            last_train_s: None,
            retrain_flagged: false,
            seed,
            training_history: Vec::new(),
            retrain_count: 0,
            policy,
            forecaster,
            lead_time_s,
        }
    }

    pub fn is_trained(&self) -> bool {
        self.model.is_some()
    }

    pub fn trained_lstm(&self) -> Option<&LstmModel> {
        match &self.model {
            Some(TrainedForecaster::Lstm(m)) => Some(m),
            _ => None,
        }
    }

    /// Installs an externally trained model (offline training path).
    pub fn preload_lstm(&mut self, model: LstmModel) {
        self.model = Some(TrainedForecaster::Lstm(model));
        self.generation += 1;
        self.last_train_s = Some(0.0);
    }

    fn rates(counts: &[u64], width: f64) -> Vec<f64> {
        counts.iter().map(|&c| c as f64 / width).collect()
    }

    fn maybe_train(&mut self, ctx: &TickContext) -> Result<(), PolicyError> {
        let n = ctx.completed_counts.len();
        let history_s = n as f64 * ctx.bucket_width_s;
        if self.model.is_none() {
            if history_s + 1e-9 >= self.forecaster.bootstrap_s {
                self.train_initial(ctx)?;
            }
            return Ok(());
        }
        let wants_retrain = match self.forecaster.retrain_mode {
            RetrainMode::Periodic => true,
            RetrainMode::OnFlag => self.retrain_flagged,
            RetrainMode::Off => false,
        };
        if wants_retrain {
            let due = match self.last_train_s {
                Some(last) => ctx.now - last >= self.forecaster.retrain_interval_s,
                None => true,
            };
            if due {
                self.retrain(ctx)?;
            }
        }
        Ok(())
    }

    fn train_initial(&mut self, ctx: &TickContext) -> Result<(), PolicyError> {
        match self.forecaster.kind {
            ForecasterKind::Lstm => {
                let raw = Self::rates(ctx.completed_counts, ctx.bucket_width_s);
                let series = match preprocess(
                    &raw,
                    ctx.bucket_width_s,
                    self.forecaster.lstm.smoothing_window,
                    self.forecaster.train_fraction,
                ) {
                    Ok(s) => s,
                    Err(_) => return Ok(()), // not enough signal yet
                };
                match lstm::train(
                    self.forecaster.lstm,
                    &series,
                    self.forecaster.train_fraction,
                    self.seed,
                ) {
                    Ok(outcome) => {
                        self.training_history.extend(renumber(
                            &outcome.history,
                            self.training_history.len(),
                        ));
                        self.model = Some(TrainedForecaster::Lstm(outcome.model));
                        self.generation += 1;
                        self.last_train_s = Some(ctx.now);
                    }
                    Err(LstmError::SeriesTooShort { .. }) => {} // wait for more buckets
                    Err(e) => return Err(e.into()),
                }
            }
            ForecasterKind::HoltWinters => {
                let raw = Self::rates(ctx.completed_counts, ctx.bucket_width_s);
                match holt_winters::fit(self.forecaster.holt_winters, &raw) {
                    Ok(_) => {
                        self.model = Some(TrainedForecaster::HoltWinters);
                        self.generation += 1;
                        self.last_train_s = Some(ctx.now);
                    }
                    Err(HoltWintersError::SeriesTooShort { .. }) => {}
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Ok(())
    }

    fn retrain(&mut self, ctx: &TickContext) -> Result<(), PolicyError> {
        self.retrain_flagged = false;
        self.last_train_s = Some(ctx.now);
        self.retrain_count += 1;
        if let Some(TrainedForecaster::Lstm(model)) = &self.model {
            let counts = ctx.completed_counts;
            let window = self.forecaster.retrain_window_buckets.min(counts.len());
            let raw = Self::rates(&counts[counts.len() - window..], ctx.bucket_width_s);
            let series = match preprocess(
                &raw,
                ctx.bucket_width_s,
                self.forecaster.lstm.smoothing_window,
                self.forecaster.train_fraction,
            ) {
                Ok(s) => s,
                Err(_) => return Ok(()),
            };
            match lstm::train_warm(
                model.clone(),
                &series,
                self.forecaster.train_fraction,
                self.seed.wrapping_add(self.retrain_count as u64),
                self.forecaster.retrain_epochs,
            ) {
                Ok(outcome) => {
                    self.training_history.extend(renumber(
                        &outcome.history,
                        self.training_history.len(),
                    ));
                    self.model = Some(TrainedForecaster::Lstm(outcome.model));
                    self.generation += 1;
                }
                Err(LstmError::SeriesTooShort { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
        // Holt-Winters refits per forecast; nothing further to do.
        Ok(())
    }

    /// Forecast rates for the buckets following the completed series, from
    /// the cached prediction when the series has not advanced.
    fn forecast(&mut self, ctx: &TickContext) -> Option<(Vec<f64>, f64)> {
        let n = ctx.completed_counts.len();
        if let Some(c) = &self.cache {
            if c.buckets_len == n && c.generation == self.generation {
                return Some((c.values.clone(), c.series_end_s));
            }
        }
        let width = ctx.bucket_width_s;
        let series_end_s = n as f64 * width;
        let values = match self.model.as_ref()? {
            TrainedForecaster::Lstm(model) => {
                let need = model.config.window + model.config.smoothing_window;
                if n < model.config.window {
                    return None;
                }
                let take = need.min(n);
                let raw = Self::rates(&ctx.completed_counts[n - take..], width);
                model.forecast_from_raw(&raw).ok()?
            }
            TrainedForecaster::HoltWinters => {
                let raw = Self::rates(ctx.completed_counts, width);
                let state = holt_winters::fit(self.forecaster.holt_winters, &raw).ok()?;
                let steps = ((self.lead_time_s / width).ceil() as usize + 2).max(1);
                state.forecast_horizon(steps)
            }
        };
        self.cache = Some(CachedForecast {
            buckets_len: n,
            generation: self.generation,
            values: values.clone(),
            series_end_s,
        });
        Some((values, series_end_s))
    }

    /// Proactive recommendation over `[now, now + lead_time]`, or None while
    /// the forecaster is unavailable.
    fn proactive_recommendation(&mut self, ctx: &TickContext) -> Option<u32> {
        let (forecast, series_end_s) = self.forecast(ctx)?;
        let width = ctx.bucket_width_s;
        let lead_end = ctx.now + self.lead_time_s;
        let mut window: Vec<f64> = forecast
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let b0 = series_end_s + *k as f64 * width;
                let b1 = b0 + width;
                b1 > ctx.now && b0 < lead_end
            })
            .map(|(_, &v)| v.max(0.0))
            .collect();
        if window.is_empty() {
            window.push(forecast.first().copied()?.max(0.0));
        }
        Some(proactive_decide(&window, &self.policy))
    }
}

fn renumber(history: &[EpochLoss], offset: usize) -> Vec<EpochLoss> {
    history
        .iter()
        .enumerate()
        .map(|(i, e)| EpochLoss {
            epoch: offset + i,
            ..*e
        })
        .collect()
}

impl ScalingPolicy for PolicyController {
    fn decide(&mut self, ctx: &TickContext) -> Result<ScalingDecision, PolicyError> {
        let current = ctx.total_replicas;
        let reactive_rec = reactive_decide(current, ctx.observed_utilization, &self.policy);

        if self.policy.kind != PolicyKind::Reactive {
            self.maybe_train(ctx)?;
        }
        let proactive_rec = if self.policy.kind == PolicyKind::Reactive {
            None
        } else {
            self.proactive_recommendation(ctx)
        };

        let mut decision = match self.policy.kind {
            PolicyKind::Reactive => ScalingDecision {
                tick_time_s: ctx.now,
                reactive_rec,
                proactive_rec: None,
                applied: reactive_rec,
                reason: DecisionReason::Reactive,
                headroom: self.policy.headroom,
            },
            PolicyKind::Proactive => match proactive_rec {
                Some(p) => ScalingDecision {
                    tick_time_s: ctx.now,
                    reactive_rec,
                    proactive_rec,
                    applied: p,
                    reason: DecisionReason::Proactive,
                    headroom: self.policy.headroom,
                },
                // A forecast-only policy holds position until trained.
                None => ScalingDecision {
                    tick_time_s: ctx.now,
                    reactive_rec,
                    proactive_rec: None,
                    applied: self.policy.clamp_replicas(current),
                    reason: DecisionReason::Bootstrap,
                    headroom: self.policy.headroom,
                },
            },
            PolicyKind::Hybrid => hybrid_decide(ctx.now, reactive_rec, proactive_rec, self.policy.headroom),
        };

        let gated = self.stabilization.gate(
            ctx.now,
            self.policy.stabilization_window_s,
            current,
            decision.applied,
        );
        if gated != decision.applied {
            decision.applied = gated;
            decision.reason = DecisionReason::Stabilized;
        }

        if self.policy.kind != PolicyKind::Reactive {
            self.feedback.apply(
                ctx.now,
                ctx.recent_violation_rate,
                self.sla_feedback_window_s,
                &mut self.policy,
            );
            if self.feedback.take_retrain_request() {
                self.retrain_flagged = true;
            }
            decision.headroom = self.policy.headroom;
        }
        Ok(decision)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(now: f64, util: f64, total: u32, counts: &[u64]) -> TickContext<'_> {
        TickContext {
            now,
            observed_utilization: util,
            ready_replicas: total,
            total_replicas: total,
            bucket_width_s: 60.0,
            completed_counts: counts,
            recent_violation_rate: 0.0,
        }
    }

    fn controller(kind: PolicyKind, forecaster: ForecasterConfig) -> PolicyController {
        let policy = AutoscalerPolicy { kind, ..AutoscalerPolicy::default() };
        PolicyController::new(policy, &SlaPolicy::default(), forecaster, 25.0, 7)
    }

    #[test]
    fn reactive_controller_never_consults_forecaster() {
        let mut c = controller(PolicyKind::Reactive, ForecasterConfig::default());
        let counts = vec![100u64; 3000];
        let d = c.decide(&ctx(200_000.0, 0.9, 4, &counts)).unwrap();
        assert_eq!(d.proactive_rec, None);
        assert_eq!(d.applied, 8);
        assert!(!c.is_trained());
    }

    #[test]
    fn hybrid_bootstraps_until_enough_history() {
        let fc = ForecasterConfig {
            bootstrap_s: 600.0,
            lstm: LstmConfig { hidden_size: 4, window: 4, horizon: 2, epochs: 3, smoothing_window: 1, ..LstmConfig::default() },
            ..ForecasterConfig::default()
        };
        let mut c = controller(PolicyKind::Hybrid, fc);
        // 5 buckets = 300 s of history: below the 600 s bootstrap threshold.
        let counts = vec![60u64; 5];
        let d = c.decide(&ctx(315.0, 0.5, 1, &counts)).unwrap();
        assert_eq!(d.reason, DecisionReason::Bootstrap);
        assert!(!c.is_trained());
        // 12 buckets = 720 s: trains and flips to the max rule.
        let counts = vec![60u64; 12];
        let d = c.decide(&ctx(735.0, 0.5, 1, &counts)).unwrap();
        assert!(c.is_trained());
        assert_eq!(d.reason, DecisionReason::Max);
        assert!(d.proactive_rec.is_some());
        assert!(d.applied >= d.reactive_rec);
    }

    #[test]
    fn stabilization_reports_held_scale_downs() {
        let mut c = controller(PolicyKind::Reactive, ForecasterConfig::default());
        let counts: Vec<u64> = Vec::new();
        // Scale up first; then an immediate scale-down attempt is held.
        let d = c.decide(&ctx(15.0, 1.0, 2, &counts)).unwrap();
        assert_eq!(d.applied, 4);
        let d = c.decide(&ctx(30.0, 0.1, 4, &counts)).unwrap();
        assert_eq!(d.applied, 4);
        assert_eq!(d.reason, DecisionReason::Stabilized);
    }

    #[test]
    fn holt_winters_backend_bootstraps_and_forecasts() {
        let fc = ForecasterConfig {
            kind: ForecasterKind::HoltWinters,
            bootstrap_s: 1200.0,
            holt_winters: HoltWintersConfig { period: 5, ..HoltWintersConfig::default() },
            ..ForecasterConfig::default()
        };
        let mut c = controller(PolicyKind::Hybrid, fc);
        let counts: Vec<u64> = (0..25).map(|i| 60 * (1 + (i % 5))).collect();
        let d = c.decide(&ctx(1515.0, 0.5, 1, &counts)).unwrap();
        assert!(c.is_trained());
        assert_eq!(d.reason, DecisionReason::Max);
    }
}
