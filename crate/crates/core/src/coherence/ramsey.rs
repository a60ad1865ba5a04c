//! Ramsey-fringe Monte Carlo with quasi-static field noise and transport.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StandardUniform};
use rayon::prelude::*;

use crate::coherence::qubit::ClockQubit;
use crate::coherence::schedule::{
    accumulated_phase, path_moments, LinkSchedule, ScheduleError, SchedulePlacement,
    SpatialProfile,
};
use crate::real::Real;

/// Magnetic-field noise: a quasi-static Gaussian offset redrawn per shot,
/// an optional slow linear drift, and an optional spatial profile.
#[derive(Clone, Debug)]
pub struct FieldNoiseModel<T> {
    pub sigma_b_g: T,
    pub drift_g_per_s: T,
    /// Absolute field vs position; `None` means uniform at the ambient
    /// field.
    pub spatial: Option<SpatialProfile<T>>,
}

impl<T: Real> FieldNoiseModel<T> {
    pub fn quiet() -> Self {
        Self { sigma_b_g: T::zero(), drift_g_per_s: T::zero(), spatial: None }
    }

    /// Quasi-static field spread that produces a Gaussian contrast decay
    /// with the requested coherence time: sigma_f = sqrt(2)/(2 pi T2),
    /// converted through the local frequency slope.
    pub fn calibrated_for_t2(qubit: &ClockQubit<T>, t2_ms: T) -> Self {
        let t2_s = t2_ms * T::of(1e-3);
        let sigma_f = T::SQRT_2() / (T::of(2.0) * T::PI() * t2_s);
        Self {
            sigma_b_g: sigma_f / qubit.slope_hz_per_g(qubit.ambient_b_g),
            drift_g_per_s: T::zero(),
            spatial: None,
        }
    }
}

/// Ramsey sequence timing and scan description.
#[derive(Clone, Debug)]
pub struct RamseySequence<T> {
    pub cool_us: T,
    pub pump_us: T,
    pub phi1_rad: T,
    /// Second-pulse phases to scan.
    pub phi2_grid: Vec<T>,
    /// Free-precession delay (ms).
    pub tau_ms: T,
    /// Transport links interleaved in the delay.
    pub links: u32,
    pub link_time_us: T,
    pub placement: SchedulePlacement,
    /// Local-oscillator detuning from the qubit frequency at the ambient
    /// field (the default oscillator sits on resonance there).
    pub lo_detuning_hz: T,
    /// Symmetric state-detection error probability.
    pub detection_error: T,
}

impl<T: Real> RamseySequence<T> {
    /// Stationary scan with `points` phases covering one full period.
    pub fn stationary(tau_ms: T, points: usize) -> Self {
        let phi2_grid = (0..points)
            .map(|k| T::of(2.0) * T::PI() * T::of_usize(k) / T::of_usize(points))
            .collect();
        Self {
            cool_us: T::of(50_000.0),
            pump_us: T::of(10.0),
            phi1_rad: T::zero(),
            phi2_grid,
            tau_ms,
            links: 0,
            link_time_us: T::of(800.0),
            placement: SchedulePlacement::Start,
            lo_detuning_hz: T::zero(),
            detection_error: T::zero(),
        }
    }

    pub fn with_links(mut self, links: u32) -> Self {
        self.links = links;
        self
    }

    pub fn tau_us(&self) -> T {
        self.tau_ms * T::of(1e3)
    }

    /// Wall-clock length of one repetition (cool, pump, delay).
    pub fn shot_period_us(&self) -> T {
        self.cool_us + self.pump_us + self.tau_us()
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        let total = T::of(self.links as f64) * self.link_time_us;
        if total >= self.tau_us() {
            return Err(ScheduleError::LinksExceedDelay {
                links: self.links,
                link_us: self.link_time_us.to_f64().unwrap_or(f64::NAN),
                tau_us: self.tau_us().to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }
}

/// Ideal two-level Ramsey probability for an accumulated phase.
#[inline]
pub fn fringe_probability<T: Real>(phi2: T, delta_phi: T) -> T {
    T::of(0.5) * (T::one() - (phi2 - delta_phi).cos())
}

/// One scanned phase point.
#[derive(Clone, Copy, Debug)]
pub struct FringePoint<T> {
    pub phi2_rad: T,
    pub p1: T,
    /// Binomial standard error sqrt(p(1-p)/n).
    pub stderr: T,
    /// Sample standard deviation of the shot outcomes over sqrt(n).
    pub stderr_sample: T,
}

/// A full fringe scan.
#[derive(Clone, Debug)]
pub struct FringeData<T> {
    pub points: Vec<FringePoint<T>>,
    pub shots: usize,
    pub seed: u64,
}

/// Simulate a Ramsey fringe: per shot, draw the quasi-static field offset,
/// integrate the accumulated phase over the delay (transport included) and
/// Bernoulli-sample the projection.
pub fn simulate_ramsey<T: Real>(
    qubit: &ClockQubit<T>,
    noise: &FieldNoiseModel<T>,
    seq: &RamseySequence<T>,
    zones: (T, T),
    shots: usize,
    seed: u64,
) -> Result<FringeData<T>, ScheduleError>
where
    StandardNormal: Distribution<T>,
    StandardUniform: Distribution<T>,
{
    assert!(shots >= 1, "need at least one shot");
    assert!(!seq.phi2_grid.is_empty(), "phase grid is empty");
    seq.validate()?;
    let schedule = LinkSchedule::new(
        seq.tau_us(),
        seq.links,
        seq.link_time_us,
        seq.placement,
        zones.0,
        zones.1,
    )?;
    let profile = noise
        .spatial
        .clone()
        .unwrap_or_else(|| SpatialProfile::uniform(qubit.ambient_b_g));
    if !profile.covers(zones.0.min(zones.1), zones.0.max(zones.1)) && seq.links > 0 {
        return Err(ScheduleError::ProfileTooNarrow {
            lo: zones.0.to_f64().unwrap_or(f64::NAN),
            hi: zones.1.to_f64().unwrap_or(f64::NAN),
        });
    }
    let moments = path_moments(&schedule, &profile);
    let det0 = -(qubit.quad_hz_per_g2 * qubit.ambient_b_g * qubit.ambient_b_g
        + seq.lo_detuning_hz);
    let drift_per_us = noise.drift_g_per_s * T::of(1e-6);
    let shot_period = seq.shot_period_us();
    let eps = seq.detection_error;

    let points: Vec<FringePoint<T>> = seq
        .phi2_grid
        .par_iter()
        .enumerate()
        .map(|(idx, &phi2)| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed ^ (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1),
            );
            let mut ones = 0usize;
            for shot in 0..shots {
                let db: T = {
                    let g: T = rng.sample(StandardNormal);
                    g * noise.sigma_b_g
                };
                // Wall-clock time of this repetition, for the slow drift;
                // points scan in order, shots repeat within a point.
                let t_abs = shot_period * T::of_usize(idx * shots + shot)
                    + seq.cool_us
                    + seq.pump_us;
                let c = db + drift_per_us * t_abs;
                let dphi = accumulated_phase(qubit, &moments, c, drift_per_us, det0)
                    - seq.phi1_rad;
                let p = fringe_probability(phi2, dphi);
                let p_obs = p * (T::one() - T::of(2.0) * eps) + eps;
                let u: T = rng.random();
                if u < p_obs {
                    ones += 1;
                }
            }
            let n = T::of_usize(shots);
            let p_hat = T::of_usize(ones) / n;
            let stderr = (p_hat * (T::one() - p_hat) / n).sqrt();
            let stderr_sample = if shots > 1 {
                (p_hat * (T::one() - p_hat) * n / (n - T::one())).sqrt() / n.sqrt()
            } else {
                T::zero()
            };
            FringePoint { phi2_rad: phi2, p1: p_hat, stderr, stderr_sample }
        })
        .collect();

    Ok(FringeData { points, shots, seed })
}

/// Infinite-shot fringe: the analytic probability at each scanned phase for
/// a noise-free sequence.
pub fn ideal_fringe<T: Real>(
    qubit: &ClockQubit<T>,
    noise: &FieldNoiseModel<T>,
    seq: &RamseySequence<T>,
    zones: (T, T),
) -> Result<Vec<(T, T)>, ScheduleError> {
    seq.validate()?;
    let schedule = LinkSchedule::new(
        seq.tau_us(),
        seq.links,
        seq.link_time_us,
        seq.placement,
        zones.0,
        zones.1,
    )?;
    let profile = noise
        .spatial
        .clone()
        .unwrap_or_else(|| SpatialProfile::uniform(qubit.ambient_b_g));
    let moments = path_moments(&schedule, &profile);
    let det0 = -(qubit.quad_hz_per_g2 * qubit.ambient_b_g * qubit.ambient_b_g
        + seq.lo_detuning_hz);
    let dphi =
        accumulated_phase(qubit, &moments, T::zero(), T::zero(), det0) - seq.phi1_rad;
    Ok(seq
        .phi2_grid
        .iter()
        .map(|&phi2| (phi2, fringe_probability(phi2, dphi)))
        .collect())
}
