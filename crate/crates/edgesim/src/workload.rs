//! Open-loop request workload: a diurnal rate function (Gaussian bumps on
//! hour-of-day over a base rate), a non-homogeneous Poisson arrival sampler,
//! and bucketization of arrival streams into per-interval rates for the
//! forecaster.
//!
//! Arrivals are sampled by thinning against a piecewise upper bound of the
//! rate function, so generation cost stays proportional to the number of
//! accepted arrivals even for very spiky profiles. Randomness enters in two
//! places only: the Poisson proposals and a per-minute multiplicative rate
//! jitter drawn from `[1 - noise_fraction, 1 + noise_fraction]`. Both draw
//! from seeded ChaCha streams, so a (profile, seed) pair always produces the
//! same stream bit for bit.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const SECONDS_PER_HOUR: f64 = 3600.0;
const HOURS_PER_DAY: f64 = 24.0;

/// One diurnal peak: a Gaussian bump centered at an hour of day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Peak {
    /// Hour of day of the peak center, in [0, 24).
    pub center_hour: f64,
    /// Added request rate at the center (req/s).
    pub amplitude: f64,
    /// Gaussian sigma, in hours.
    pub width_hours: f64,
}

/// Parametric diurnal workload profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadProfile {
    /// Always-on background rate (req/s).
    pub base_rate: f64,
    pub peaks: Vec<Peak>,
    /// Per-minute multiplicative rate jitter amplitude, in [0, 1).
    pub noise_fraction: f64,
    /// Stream length (simulated seconds).
    pub horizon_s: f64,
    pub seed: u64,
}

impl Default for WorkloadProfile {
    fn default() -> Self {
        Self {
            base_rate: 1.0,
            peaks: Vec::new(),
            noise_fraction: 0.0,
            horizon_s: 86_400.0,
            seed: 0,
        }
    }
}

/// A single arrival. Streams are sorted by time with sequential ids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub id: u64,
    pub time_s: f64,
}

/// Arrival count aggregated over one tiling interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBucket {
    pub start_s: f64,
    pub width_s: f64,
    pub count: u64,
}

impl RateBucket {
    pub fn rate(&self) -> f64 {
        self.count as f64 / self.width_s
    }
}

impl WorkloadProfile {
    /// Noise-free instantaneous rate at simulated time `t` (req/s).
    ///
    /// Each peak contributes `amplitude * exp(-d^2 / (2 width^2))` where `d`
    /// is the wraparound hour-of-day distance to the peak center.
    pub fn rate_at(&self, t: f64) -> f64 {
        let hod = (t / SECONDS_PER_HOUR).rem_euclid(HOURS_PER_DAY);
        let mut rate = self.base_rate;
        for peak in &self.peaks {
            let d = circular_hour_distance(hod, peak.center_hour);
            rate += peak.amplitude * (-d * d / (2.0 * peak.width_hours * peak.width_hours)).exp();
        }
        rate
    }

    /// Scales base rate and peak amplitudes by `factor`, leaving shape intact.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.base_rate *= factor;
        for peak in &mut out.peaks {
            peak.amplitude *= factor;
        }
        out
    }

    /// Upper bound of `rate_at` on the window `[start, end]`.
    ///
    /// Per-peak maxima are summed, which over-bounds slightly but is exact
    /// whenever at most one peak is active, the common case.
    fn rate_bound(&self, start: f64, end: f64) -> f64 {
        let h0 = start / SECONDS_PER_HOUR;
        let h1 = end / SECONDS_PER_HOUR;
        let mut bound = self.base_rate;
        for peak in &self.peaks {
            let d = min_circular_distance_on_interval(h0, h1, peak.center_hour);
            bound += peak.amplitude * (-d * d / (2.0 * peak.width_hours * peak.width_hours)).exp();
        }
        bound
    }

    /// Simulated times of all local rate maxima (peak centers) in
    /// `[0, horizon_s)`, sorted. Useful for peak-window analyses.
    pub fn peak_times(&self) -> Vec<f64> {
        let mut times = Vec::new();
        let days = (self.horizon_s / 86_400.0).ceil() as i64;
        for day in 0..days {
            for peak in &self.peaks {
                let t = day as f64 * 86_400.0 + peak.center_hour * SECONDS_PER_HOUR;
                if t < self.horizon_s {
                    times.push(t);
                }
            }
        }
        times.sort_by(|a, b| a.total_cmp(b));
        times
    }
}

fn circular_hour_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(HOURS_PER_DAY);
    d.min(HOURS_PER_DAY - d)
}

/// Minimum wraparound distance from the hour-of-day sweep `[h0, h1]`
/// (in absolute hours, h1 - h0 < 24) to the center hour `c`.
fn min_circular_distance_on_interval(h0: f64, h1: f64, c: f64) -> f64 {
    // The sweep covers hods h0..h1 modulo 24. The center is crossed iff some
    // integer k puts c + 24k inside [h0, h1].
    let k = ((h0 - c) / HOURS_PER_DAY).ceil();
    let crossing = c + k * HOURS_PER_DAY;
    if crossing <= h1 {
        0.0
    } else {
        circular_hour_distance(h0.rem_euclid(HOURS_PER_DAY), c)
            .min(circular_hour_distance(h1.rem_euclid(HOURS_PER_DAY), c))
    }
}

/// Samples the arrival stream for a profile by thinning.
///
/// The horizon is split into 60 s segments; within each, homogeneous
/// proposals at the local rate bound are accepted with probability
/// `rate_eff / bound`, where `rate_eff` applies the per-minute noise factor.
pub fn generate_arrivals(profile: &WorkloadProfile) -> Vec<Arrival> {
    const SEGMENT_S: f64 = 60.0;
    let noise = minute_noise_factors(profile);
    let noise_ceiling = 1.0 + profile.noise_fraction;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed.wrapping_add(0x7468696e));

    let mut arrivals = Vec::new();
    let mut seg_start = 0.0_f64;
    while seg_start < profile.horizon_s {
        let seg_end = (seg_start + SEGMENT_S).min(profile.horizon_s);
        let bound = profile.rate_bound(seg_start, seg_end) * noise_ceiling;
        if bound > 0.0 {
            let mut t = seg_start;
            loop {
                // Exponential gap via inverse CDF on (0, 1].
                let u: f64 = 1.0 - rng.gen::<f64>();
                t += -u.ln() / bound;
                if t >= seg_end {
                    break;
                }
                let minute = (t / 60.0) as usize;
                let eff = profile.rate_at(t) * noise.get(minute).copied().unwrap_or(1.0);
                if rng.gen::<f64>() < eff / bound {
                    arrivals.push(Arrival { id: 0, time_s: t });
                }
            }
        }
        seg_start = seg_end;
    }

    for (i, a) in arrivals.iter_mut().enumerate() {
        a.id = i as u64;
    }
    arrivals
}

fn minute_noise_factors(profile: &WorkloadProfile) -> Vec<f64> {
    let minutes = (profile.horizon_s / 60.0).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed.wrapping_add(0x6e6f6973));
    let dist = Uniform::new_inclusive(1.0 - profile.noise_fraction, 1.0 + profile.noise_fraction);
    (0..minutes).map(|_| dist.sample(&mut rng)).collect()
}

/// Counts arrivals per tiling bucket of `width_s` over `[0, horizon_s)`.
pub fn bucketize(arrivals: &[Arrival], width_s: f64, horizon_s: f64) -> Vec<RateBucket> {
    assert!(width_s > 0.0, "bucket width must be positive");
    let n = (horizon_s / width_s).ceil() as usize;
    let mut buckets: Vec<RateBucket> = (0..n)
        .map(|i| RateBucket {
            start_s: i as f64 * width_s,
            width_s,
            count: 0,
        })
        .collect();
    for a in arrivals {
        let idx = ((a.time_s / width_s) as usize).min(n.saturating_sub(1));
        if !buckets.is_empty() {
            buckets[idx].count += 1;
        }
    }
    buckets
}

/// Writes an arrival stream as CSV (`id,time_s`).
pub fn write_arrivals_csv<W: std::io::Write>(w: &mut W, arrivals: &[Arrival]) -> std::io::Result<()> {
    writeln!(w, "id,time_s")?;
    for a in arrivals {
        writeln!(w, "{},{:.6}", a.id, a.time_s)?;
    }
    Ok(())
}

/// Writes a bucket series as CSV (`start_s,count`).
pub fn write_buckets_csv<W: std::io::Write>(w: &mut W, buckets: &[RateBucket]) -> std::io::Result<()> {
    writeln!(w, "start_s,count")?;
    for b in buckets {
        writeln!(w, "{:.6},{}", b.start_s, b.count)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example_profile() -> WorkloadProfile {
        WorkloadProfile {
            base_rate: 2.0,
            peaks: vec![
                Peak { center_hour: 9.0, amplitude: 8.0, width_hours: 1.5 },
                Peak { center_hour: 20.0, amplitude: 10.0, width_hours: 1.5 },
            ],
            noise_fraction: 0.0,
            horizon_s: 86_400.0,
            seed: 7,
        }
    }

    #[test]
    fn rate_at_peak_center() {
        let profile = example_profile();
        let rate = profile.rate_at(9.0 * 3600.0);
        // Evening term at 11 h distance is far below 1e-6.
        assert!((rate - 10.0).abs() < 1e-6, "rate {rate}");
    }

    #[test]
    fn rate_without_peaks_is_base() {
        let profile = WorkloadProfile { base_rate: 3.5, ..Default::default() };
        for t in [0.0, 1234.5, 86_000.0] {
            assert_eq!(profile.rate_at(t), 3.5);
        }
    }

    #[test]
    fn rate_wraps_around_midnight() {
        let profile = WorkloadProfile {
            base_rate: 0.0,
            peaks: vec![Peak { center_hour: 23.5, amplitude: 4.0, width_hours: 1.0 }],
            ..Default::default()
        };
        // 00:30 is one hour from 23:30 across midnight.
        let r = profile.rate_at(0.5 * 3600.0);
        assert!((r - 4.0 * (-0.5_f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn constant_rate_count_within_poisson_bounds() {
        let profile = WorkloadProfile {
            base_rate: 5.0,
            horizon_s: 1000.0,
            seed: 42,
            ..Default::default()
        };
        let arrivals = generate_arrivals(&profile);
        let expected = 5000.0_f64;
        let slack = 3.0 * expected.sqrt();
        assert!(
            (arrivals.len() as f64 - expected).abs() < slack,
            "count {} outside {expected} +/- {slack}",
            arrivals.len()
        );
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let profile = WorkloadProfile { noise_fraction: 0.2, ..example_profile() };
        let a = generate_arrivals(&profile);
        let b = generate_arrivals(&profile);
        assert_eq!(a, b);
        let c = generate_arrivals(&WorkloadProfile { seed: 8, ..profile });
        assert_ne!(a, c);
    }

    #[test]
    fn zero_rate_yields_empty_stream() {
        let profile = WorkloadProfile {
            base_rate: 0.0,
            horizon_s: 5000.0,
            ..Default::default()
        };
        assert!(generate_arrivals(&profile).is_empty());
    }

    #[test]
    fn stream_is_strictly_sorted_with_sequential_ids() {
        let profile = WorkloadProfile { noise_fraction: 0.3, horizon_s: 7200.0, ..example_profile() };
        let arrivals = generate_arrivals(&profile);
        assert!(!arrivals.is_empty());
        for (i, pair) in arrivals.windows(2).enumerate() {
            assert!(pair[0].time_s < pair[1].time_s, "not sorted at {i}");
        }
        for (i, a) in arrivals.iter().enumerate() {
            assert_eq!(a.id, i as u64);
        }
    }

    #[test]
    fn bucketize_counts_and_tiles() {
        let arrivals: Vec<Arrival> = [1.0, 2.0, 61.0]
            .iter()
            .enumerate()
            .map(|(i, &t)| Arrival { id: i as u64, time_s: t })
            .collect();
        let buckets = bucketize(&arrivals, 60.0, 120.0);
        assert_eq!(buckets.len(), 2);
        assert_eq!(buckets[0].count, 2);
        assert_eq!(buckets[1].count, 1);
        assert_eq!(buckets[0].start_s, 0.0);
        assert_eq!(buckets[1].start_s, 60.0);
    }

    #[test]
    fn bucketize_empty_stream_gives_zero_buckets() {
        let buckets = bucketize(&[], 10.0, 100.0);
        assert_eq!(buckets.len(), 10);
        assert!(buckets.iter().all(|b| b.count == 0));
    }

    #[test]
    fn thinning_tracks_rate_within_poisson_bounds() {
        // With noise 0, per-bucket counts should match the integrated rate to 3 sigma.
        let profile = WorkloadProfile {
            base_rate: 4.0,
            peaks: vec![Peak { center_hour: 2.0, amplitude: 20.0, width_hours: 0.5 }],
            noise_fraction: 0.0,
            horizon_s: 4.0 * 3600.0,
            seed: 11,
        };
        let arrivals = generate_arrivals(&profile);
        let width = 600.0;
        let buckets = bucketize(&arrivals, width, profile.horizon_s);
        for b in &buckets {
            // 1 s midpoint quadrature of the expected count.
            let expected: f64 = (0..width as usize)
                .map(|i| profile.rate_at(b.start_s + i as f64 + 0.5))
                .sum();
            let slack = 3.0 * expected.sqrt().max(1.0);
            assert!(
                (b.count as f64 - expected).abs() <= slack,
                "bucket at {}: count {} vs expected {expected:.1} +/- {slack:.1}",
                b.start_s,
                b.count
            );
        }
    }

    proptest! {
        #[test]
        fn bucket_counts_conserve_stream_length(
            times in proptest::collection::vec(0.0_f64..999.0, 0..200),
            width in 1.0_f64..300.0,
        ) {
            let mut sorted = times.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            let arrivals: Vec<Arrival> = sorted
                .iter()
                .enumerate()
                .map(|(i, &t)| Arrival { id: i as u64, time_s: t })
                .collect();
            let buckets = bucketize(&arrivals, width, 1000.0);
            let total: u64 = buckets.iter().map(|b| b.count).sum();
            prop_assert_eq!(total, arrivals.len() as u64);
            // Tiling without gaps.
            for pair in buckets.windows(2) {
                prop_assert!((pair[0].start_s + pair[0].width_s - pair[1].start_s).abs() < 1e-9);
            }
        }
    }
}
