//! Velocity-Verlet integration of single-ion motion.

use thiserror::Error;

use crate::geom::Vec3;
use crate::real::Real;
use crate::trap::field::RfDrive;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("full-RF integration needs step <= RF period / 100 ({max_us:.4e} us), got {step_us:.4e} us")]
    StepTooCoarse { step_us: f64, max_us: f64 },
    #[error("integrator step must be positive")]
    BadStep,
    #[error("final well is not harmonic enough for an energy fit (relative residual {resid:.2e})")]
    NonHarmonicWell { resid: f64 },
    #[error("no bounded final well near x = {x_um} um")]
    NoFinalWell { x_um: f64 },
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("success count must be at least 1")]
    NoCounts,
    #[error(transparent)]
    Analysis(#[from] crate::trap::analysis::AnalysisError),
    #[error(transparent)]
    Signal(#[from] crate::signal::SignalError),
    #[error(transparent)]
    Waveform(#[from] crate::waveform::WaveformError),
}

/// RF treatment during integration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RfMode {
    /// Cycle-averaged pseudopotential force; the default for link runs.
    Secular,
    /// Instantaneous oscillating field, resolving micromotion.
    FullRf,
}

/// Ideal-waveform voltage interpolation between updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InterpMode {
    /// Zero-order hold, matching the DAC staircase.
    Staircase,
    /// Linear ramp between updates (a time-symmetric idealization).
    Linear,
}

#[derive(Clone, Copy, Debug)]
pub struct IntegratorConfig<T> {
    pub mode: RfMode,
    pub step_us: T,
    /// Record every n-th step in the trajectory.
    pub record_stride: usize,
    pub ideal_interp: InterpMode,
}

impl<T: Real> Default for IntegratorConfig<T> {
    fn default() -> Self {
        Self {
            mode: RfMode::Secular,
            step_us: T::of(0.02),
            record_stride: 8,
            ideal_interp: InterpMode::Staircase,
        }
    }
}

impl<T: Real> IntegratorConfig<T> {
    pub fn validate(&self, drive: &RfDrive<T>) -> Result<(), DynamicsError> {
        if !(self.step_us > T::zero()) {
            return Err(DynamicsError::BadStep);
        }
        if self.mode == RfMode::FullRf {
            let max = drive.period_us() / T::of(100.0);
            if self.step_us > max {
                return Err(DynamicsError::StepTooCoarse {
                    step_us: self.step_us.to_f64().unwrap_or(f64::NAN),
                    max_us: max.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(())
    }
}

/// The force/energy view the integrator drives against.
pub trait System<T: Real> {
    /// Acceleration in um/us^2.
    fn accel(&mut self, r: Vec3<T>, t_us: T) -> Vec3<T>;
    /// Potential energy in eV (for the trajectory ledger).
    fn potential_ev(&mut self, r: Vec3<T>, t_us: T) -> T;
    /// Kinetic energy in eV for a velocity in um/us.
    fn kinetic_ev(&self, v: Vec3<T>) -> T;
    /// Escape test; a `true` truncates the run.
    fn escaped(&mut self, _r: Vec3<T>, _t_us: T) -> bool {
        false
    }
}

/// Recorded motion samples plus an energy ledger.
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub t_us: Vec<T>,
    pub pos_um: Vec<Vec3<T>>,
    pub vel: Vec<Vec3<T>>,
    pub kinetic_ev: Vec<T>,
    pub potential_ev: Vec<T>,
    pub escaped_at_us: Option<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn last_state(&self) -> (Vec3<T>, Vec3<T>) {
        (*self.pos_um.last().unwrap(), *self.vel.last().unwrap())
    }
}

/// Integrate from `(r0, v0)` over `[0, t_end]` with velocity Verlet.
pub fn integrate<T: Real, S: System<T>>(
    sys: &mut S,
    r0: Vec3<T>,
    v0: Vec3<T>,
    t_end_us: T,
    cfg: &IntegratorConfig<T>,
) -> Trajectory<T> {
    let dt = cfg.step_us;
    let steps = (t_end_us / dt).round().to_f64().unwrap_or(0.0).max(0.0) as usize;
    let stride = cfg.record_stride.max(1);
    let mut traj = Trajectory {
        t_us: Vec::with_capacity(steps / stride + 2),
        pos_um: Vec::with_capacity(steps / stride + 2),
        vel: Vec::with_capacity(steps / stride + 2),
        kinetic_ev: Vec::with_capacity(steps / stride + 2),
        potential_ev: Vec::with_capacity(steps / stride + 2),
        escaped_at_us: None,
    };
    let mut r = r0;
    let mut v = v0;
    let mut t = T::zero();
    let mut a = sys.accel(r, t);
    let half = T::of(0.5);

    let mut record = |sys: &mut S, t: T, r: Vec3<T>, v: Vec3<T>| {
        traj.t_us.push(t);
        traj.pos_um.push(r);
        traj.vel.push(v);
        traj.kinetic_ev.push(sys.kinetic_ev(v));
        traj.potential_ev.push(sys.potential_ev(r, t));
    };
    record(sys, t, r, v);

    for n in 1..=steps {
        let v_half = v + a.scale(half * dt);
        r += v_half.scale(dt);
        t = dt * T::of_usize(n);
        a = sys.accel(r, t);
        v = v_half + a.scale(half * dt);
        if sys.escaped(r, t) {
            traj.escaped_at_us = Some(t);
            record(sys, t, r, v);
            return traj;
        }
        if n % stride == 0 || n == steps {
            record(sys, t, r, v);
        }
    }
    traj
}

/// Strongest spectral line of a scalar record in `[f_lo, f_hi]` (Hz),
/// via a Goertzel-style scan with parabolic peak refinement.
pub fn dominant_frequency_hz<T: Real>(
    samples: &[T],
    dt_us: T,
    f_lo_hz: T,
    f_hi_hz: T,
    grid: usize,
) -> T {
    assert!(grid >= 3 && samples.len() > 4);
    let mean = samples.iter().copied().sum::<T>() / T::of_usize(samples.len());
    let power = |f_hz: T| -> T {
        let omega = T::of(2.0) * T::PI() * f_hz * T::of(1e-6) * dt_us;
        let mut re = T::zero();
        let mut im = T::zero();
        for (k, &s) in samples.iter().enumerate() {
            let ph = omega * T::of_usize(k);
            let x = s - mean;
            re += x * ph.cos();
            im += x * ph.sin();
        }
        re * re + im * im
    };
    let mut best = (f_lo_hz, T::zero());
    let mut powers = Vec::with_capacity(grid);
    for k in 0..grid {
        let f = f_lo_hz + (f_hi_hz - f_lo_hz) * T::of_usize(k) / T::of_usize(grid - 1);
        let p = power(f);
        powers.push(p);
        if p > best.1 {
            best = (f, p);
        }
    }
    // Parabolic refinement on the log-power around the peak.
    let idx = powers.iter().position(|&p| p == best.1).unwrap_or(0);
    if idx == 0 || idx + 1 >= grid {
        return best.0;
    }
    let df = (f_hi_hz - f_lo_hz) / T::of_usize(grid - 1);
    let (pm, p0, pp) = (powers[idx - 1].ln(), powers[idx].ln(), powers[idx + 1].ln());
    let denom = pm - T::of(2.0) * p0 + pp;
    if denom == T::zero() {
        return best.0;
    }
    let shift = T::of(0.5) * (pm - pp) / denom;
    best.0 + shift * df
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::constants::e_over_u;

    /// Isotropic harmonic well, analytic reference for integrator checks.
    pub(crate) struct Harmonic {
        pub omega: f64, // rad/us
        pub mass: f64,
    }

    impl System<f64> for Harmonic {
        fn accel(&mut self, r: Vec3<f64>, _t: f64) -> Vec3<f64> {
            r.scale(-self.omega * self.omega)
        }
        fn potential_ev(&mut self, r: Vec3<f64>, _t: f64) -> f64 {
            0.5 * self.mass * self.omega * self.omega * r.norm2() / e_over_u::<f64>()
        }
        fn kinetic_ev(&self, v: Vec3<f64>) -> f64 {
            0.5 * self.mass * v.norm2() / e_over_u::<f64>()
        }
    }

    #[test]
    fn harmonic_oscillation_period_is_exact_to_second_order() {
        let omega = 2.0 * std::f64::consts::PI * 0.141; // 141 kHz in rad/us
        let mut sys = Harmonic { omega, mass: 174.0 };
        let cfg = IntegratorConfig { step_us: 0.002, record_stride: 10, ..Default::default() };
        let traj = integrate(&mut sys, Vec3::new(1.0, 0.0, 0.0), Vec3::zero(), 2000.0, &cfg);
        let xs: Vec<f64> = traj.pos_um.iter().map(|p| p.x).collect();
        let f = dominant_frequency_hz(&xs, 0.002 * 10.0, 100e3, 200e3, 400);
        assert_relative_eq!(f, 141e3, max_relative = 1e-4);
    }

    #[test]
    fn energy_stays_bounded_over_ten_thousand_periods() {
        let omega = 2.0 * std::f64::consts::PI * 0.141;
        let mut sys = Harmonic { omega, mass: 174.0 };
        let period = 2.0 * std::f64::consts::PI / omega;
        let dt = 1.0e-3; // omega dt ~ 9e-4
        let cfg = IntegratorConfig { step_us: dt, record_stride: 20000, ..Default::default() };
        let traj = integrate(&mut sys, Vec3::new(1.0, 0.0, 0.0), Vec3::zero(), 1.0e4 * period, &cfg);
        let e0 = traj.kinetic_ev[0] + traj.potential_ev[0];
        let mut worst = 0.0f64;
        for k in 0..traj.t_us.len() {
            let e = traj.kinetic_ev[k] + traj.potential_ev[k];
            worst = worst.max(((e - e0) / e0).abs());
        }
        assert!(worst < 1e-6, "relative energy drift {worst}");
    }

    #[test]
    fn halving_the_step_quarters_the_error() {
        let omega = 2.0 * std::f64::consts::PI * 0.141;
        let run = |dt: f64| {
            let mut sys = Harmonic { omega, mass: 174.0 };
            let cfg = IntegratorConfig { step_us: dt, record_stride: usize::MAX, ..Default::default() };
            let traj = integrate(&mut sys, Vec3::new(1.0, 0.0, 0.0), Vec3::zero(), 100.0, &cfg);
            traj.last_state().0.x
        };
        let reference = run(0.0025);
        let e1 = (run(0.04) - reference).abs();
        let e2 = (run(0.02) - reference).abs();
        let ratio = e1 / e2;
        assert!(
            (3.2..4.8).contains(&ratio),
            "convergence ratio {ratio} not close to 4"
        );
    }

    #[test]
    fn full_rf_step_bound_is_enforced() {
        let drive = RfDrive::<f64>::default();
        let cfg = IntegratorConfig {
            mode: RfMode::FullRf,
            step_us: 0.01, // > period/100 = 5.17e-4
            ..Default::default()
        };
        assert!(matches!(cfg.validate(&drive), Err(DynamicsError::StepTooCoarse { .. })));
        let fine = IntegratorConfig { mode: RfMode::FullRf, step_us: 4e-4, ..Default::default() };
        assert!(fine.validate(&drive).is_ok());
    }

    #[test]
    fn spectral_estimator_resolves_a_clean_tone() {
        let dt = 0.05;
        let f0 = 1.1632e6;
        let xs: Vec<f64> = (0..20000)
            .map(|k| (2.0 * std::f64::consts::PI * f0 * 1e-6 * dt * k as f64).cos())
            .collect();
        let f = dominant_frequency_hz(&xs, dt, 0.8e6, 1.6e6, 600);
        assert_relative_eq!(f, f0, max_relative = 1e-4);
    }
}
