//! DAC and filter-chain model of the electrode voltage path.
//!
//! Transport waveforms leave the DACs as zero-order-hold staircases and
//! pass through three low-pass stages before reaching the electrodes: a
//! third-order Butterworth on the DAC card, a second-order RC ahead of the
//! vacuum feedthrough and a first-order RC inside the chamber. The chain
//! distorts fast waveforms; [`predistort`] solves for DAC samples whose
//! filtered output tracks the ideal staircase.

pub mod filter;
pub mod predistort;

use num_complex::Complex;
use rayon::prelude::*;
use thiserror::Error;

use crate::real::Real;
use crate::waveform::TransportWaveform;

pub use predistort::{predistort, PredistortOutcome};

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("dwell of {dwell_us} us is shorter than the DAC update period {min_us} us")]
    DwellTooShort { dwell_us: f64, min_us: f64 },
    #[error("sample rate {rate_hz:.3e} Hz is below 50x the highest cutoff {cutoff_hz:.3e} Hz")]
    Undersampled { rate_hz: f64, cutoff_hz: f64 },
    #[error("waveform must contain at least {need} solutions, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("oversample factor must be at least 1")]
    BadOversample,
}

/// Digital-to-analog converter model: zero-order hold at a fixed update
/// rate, optional range clamp and quantization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DacModel<T> {
    pub update_rate_hz: T,
    /// Symmetric output range (+-volts).
    pub voltage_range_v: T,
    /// Quantization depth; `None` models an ideal DAC.
    pub quantization_bits: Option<u8>,
}

impl<T: Real> Default for DacModel<T> {
    fn default() -> Self {
        Self {
            update_rate_hz: T::of(139e3),
            voltage_range_v: T::of(10.0),
            quantization_bits: None,
        }
    }
}

impl<T: Real> DacModel<T> {
    /// Shortest realizable hold time (us).
    pub fn min_dwell_us(&self) -> T {
        T::of(1e6) / self.update_rate_hz
    }

    /// Apply range clamp and optional quantization to one value.
    pub fn shape(&self, v: T) -> T {
        let r = self.voltage_range_v;
        let clamped = v.max(-r).min(r);
        match self.quantization_bits {
            None => clamped,
            Some(bits) => {
                let levels = T::of((1u64 << bits.min(52)) as f64 - 1.0);
                let idx = ((clamped + r) / (T::of(2.0) * r) * levels).round();
                idx / levels * T::of(2.0) * r - r
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageKind {
    Butterworth3,
    Rc2,
    Rc1,
}

/// One low-pass stage; `cutoff_hz` is the stage's overall -3 dB frequency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterStage<T> {
    pub kind: StageKind,
    pub cutoff_hz: T,
}

/// DAC plus ordered filter stages (physical order, DAC side first).
#[derive(Clone, Debug, PartialEq)]
pub struct SignalChain<T> {
    pub dac: DacModel<T>,
    pub stages: Vec<FilterStage<T>>,
}

impl<T: Real> Default for SignalChain<T> {
    fn default() -> Self {
        Self {
            dac: DacModel::default(),
            stages: vec![
                FilterStage { kind: StageKind::Butterworth3, cutoff_hz: T::of(75e3) },
                FilterStage { kind: StageKind::Rc2, cutoff_hz: T::of(47e3) },
                FilterStage { kind: StageKind::Rc1, cutoff_hz: T::of(257e3) },
            ],
        }
    }
}

impl<T: Real> SignalChain<T> {
    pub fn max_cutoff_hz(&self) -> T {
        self.stages.iter().map(|s| s.cutoff_hz).fold(T::zero(), |a, b| a.max(b))
    }

    /// Longest section time constant (us); settling tails use 5x this.
    pub fn max_time_constant_us(&self) -> T {
        self.stages
            .iter()
            .flat_map(filter::stage_sections)
            .map(|s| s.time_constant_us())
            .fold(T::zero(), |a, b| a.max(b))
    }

    pub fn settle_tail_us(&self) -> T {
        T::of(5.0) * self.max_time_constant_us()
    }

    /// Complex transfer function of the whole cascade at `f_hz`.
    pub fn response(&self, f_hz: T) -> Complex<T> {
        self.stages
            .iter()
            .fold(Complex::new(T::one(), T::zero()), |acc, s| acc * filter::stage_response(s, f_hz))
    }
}

/// Frequency-response table entry.
#[derive(Clone, Copy, Debug)]
pub struct ResponsePoint<T> {
    pub freq_hz: T,
    pub magnitude: T,
    pub phase_rad: T,
}

/// Analytic transfer function of the chain over a frequency list.
pub fn chain_response<T: Real>(chain: &SignalChain<T>, freqs_hz: &[T]) -> Vec<ResponsePoint<T>> {
    freqs_hz
        .iter()
        .map(|&f| {
            let h = chain.response(f);
            ResponsePoint { freq_hz: f, magnitude: h.norm(), phase_rad: h.im.atan2(h.re) }
        })
        .collect()
}

/// Densely sampled per-electrode voltage record.
#[derive(Clone, Debug)]
pub struct AnalogWaveform<T> {
    pub channel_ids: Vec<String>,
    /// One sample vector per channel.
    pub channels: Vec<Vec<T>>,
    pub dt_us: T,
}

impl<T: Real> AnalogWaveform<T> {
    pub fn sample_rate_hz(&self) -> T {
        T::of(1e6) / self.dt_us
    }

    pub fn duration_us(&self) -> T {
        let n = self.channels.first().map(|c| c.len()).unwrap_or(0);
        if n == 0 {
            T::zero()
        } else {
            self.dt_us * T::of_usize(n - 1)
        }
    }

    /// Linear interpolation of one channel at `t_us` (clamped at the ends).
    pub fn value_at(&self, channel: usize, t_us: T) -> T {
        let data = &self.channels[channel];
        if data.is_empty() {
            return T::zero();
        }
        let s = (t_us / self.dt_us).max(T::zero());
        let idx = s.floor().to_f64().unwrap_or(0.0) as usize;
        if idx + 1 >= data.len() {
            return *data.last().unwrap();
        }
        let frac = s - T::of_usize(idx);
        data[idx] * (T::one() - frac) + data[idx + 1] * frac
    }
}

/// Render a transport waveform as the DAC staircase, sampled `oversample`
/// times per update, with `tail_us` of hold appended after the last update.
pub fn render_dac<T: Real>(
    w: &TransportWaveform<T>,
    dac: &DacModel<T>,
    oversample: usize,
    tail_us: T,
) -> Result<AnalogWaveform<T>, SignalError> {
    if oversample == 0 {
        return Err(SignalError::BadOversample);
    }
    let min_dwell = dac.min_dwell_us();
    if w.dwell_us < min_dwell * (T::one() - T::of(1e-12)) {
        return Err(SignalError::DwellTooShort {
            dwell_us: w.dwell_us.to_f64().unwrap_or(f64::NAN),
            min_us: min_dwell.to_f64().unwrap_or(f64::NAN),
        });
    }
    let n_updates = w.solutions.len();
    let dt = w.dwell_us / T::of_usize(oversample);
    let tail_samples = (tail_us / dt).ceil().to_f64().unwrap_or(0.0).max(0.0) as usize;
    let total = (n_updates.saturating_sub(1)) * oversample + 1 + tail_samples;

    let channels: Vec<Vec<T>> = (0..w.electrode_ids.len())
        .map(|e| {
            (0..total)
                .map(|s| {
                    let k = (s / oversample).min(n_updates - 1);
                    dac.shape(w.solutions[k].voltages[e])
                })
                .collect()
        })
        .collect();

    Ok(AnalogWaveform { channel_ids: w.electrode_ids.clone(), channels, dt_us: dt })
}

/// Pass an analog record through every stage of the chain, per channel.
pub fn apply_chain<T: Real>(
    sig: &AnalogWaveform<T>,
    chain: &SignalChain<T>,
) -> Result<AnalogWaveform<T>, SignalError> {
    let rate = sig.sample_rate_hz();
    let need = T::of(50.0) * chain.max_cutoff_hz();
    if rate < need {
        return Err(SignalError::Undersampled {
            rate_hz: rate.to_f64().unwrap_or(f64::NAN),
            cutoff_hz: chain.max_cutoff_hz().to_f64().unwrap_or(f64::NAN),
        });
    }
    let mut out = sig.clone();
    out.channels.par_iter_mut().for_each(|data| {
        for stage in &chain.stages {
            filter::run_stage(stage, sig.dt_us, data);
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::solve::{SolveResiduals, VoltageSolution};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn staircase(values: &[f64], dwell: f64) -> TransportWaveform<f64> {
        TransportWaveform {
            electrode_ids: vec!["e".into()],
            solutions: values
                .iter()
                .enumerate()
                .map(|(k, &v)| VoltageSolution {
                    position_um: k as f64,
                    voltages: vec![v],
                    residuals: SolveResiduals {
                        field_v_per_m: 0.0,
                        curvature_v_per_m2: 0.0,
                        min_offset_um: 0.0,
                    },
                    converged: true,
                    clamped: false,
                })
                .collect(),
            dwell_us: dwell,
            nominal_pitch_um: 1.0,
            basis_fingerprint: String::new(),
            config_fingerprint: String::new(),
        }
    }

    #[test]
    fn staircase_duration_matches_update_count() {
        // 58 updates at the native DAC rate: 57 intervals of 1/139 kHz.
        let w = staircase(&vec![1.0; 58], 1e6 / 139e3);
        let dac = DacModel::default();
        let sig = render_dac(&w, &dac, 8, 0.0).unwrap();
        assert_relative_eq!(sig.duration_us(), 57.0 / 139e3 * 1e6, max_relative = 1e-12);
        assert_abs_diff_eq!(sig.duration_us(), 410.07, epsilon = 0.01);
    }

    #[test]
    fn dwell_below_update_period_is_rejected() {
        let w = staircase(&[0.0, 1.0], 5.0);
        let dac = DacModel::default(); // 139 kHz -> 7.19 us minimum
        assert!(matches!(
            render_dac(&w, &dac, 8, 0.0),
            Err(SignalError::DwellTooShort { .. })
        ));
    }

    #[test]
    fn constant_waveform_renders_constant() {
        let w = staircase(&vec![0.7; 10], 8.0);
        let sig = render_dac(&w, &DacModel::default(), 16, 20.0).unwrap();
        assert!(sig.channels[0].iter().all(|&v| v == 0.7));
    }

    #[test]
    fn one_bit_quantization_makes_a_two_level_staircase() {
        let values: Vec<f64> = (0..20).map(|k| -10.0 + k as f64).collect();
        let w = staircase(&values, 8.0);
        let dac = DacModel { quantization_bits: Some(1), ..DacModel::default() };
        let sig = render_dac(&w, &dac, 4, 0.0).unwrap();
        for &v in &sig.channels[0] {
            assert!(v == -10.0 || v == 10.0, "level {v}");
        }
    }

    #[test]
    fn step_response_settles_to_unit_gain() {
        let w = staircase(&[0.0, 1.0, 1.0], 8.0);
        let chain = SignalChain::default();
        let sig = render_dac(&w, &chain.dac, 128, 60.0).unwrap();
        let out = apply_chain(&sig, &chain).unwrap();
        let last = *out.channels[0].last().unwrap();
        assert_abs_diff_eq!(last, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let w = staircase(&vec![0.0; 10], 8.0);
        let chain = SignalChain::default();
        let sig = render_dac(&w, &chain.dac, 128, 10.0).unwrap();
        let out = apply_chain(&sig, &chain).unwrap();
        assert!(out.channels[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn undersampled_input_is_rejected() {
        let sig = AnalogWaveform {
            channel_ids: vec!["e".into()],
            channels: vec![vec![0.0; 100]],
            dt_us: 1.0, // 1 MHz < 50 x 257 kHz
        };
        assert!(matches!(
            apply_chain(&sig, &SignalChain::default()),
            Err(SignalError::Undersampled { .. })
        ));
    }

    #[test]
    fn chain_is_linear_and_time_invariant() {
        let chain = SignalChain::default();
        let dt = 0.05; // 20 MHz
        let n = 4000;
        let mk = |f: &dyn Fn(usize) -> f64| AnalogWaveform {
            channel_ids: vec!["e".into()],
            channels: vec![(0..n).map(f).collect()],
            dt_us: dt,
        };
        // Deterministic pseudo-random-ish signals.
        let x = mk(&|k| ((k * 2654435761) % 1000) as f64 / 1000.0 - 0.5);
        let y = mk(&|k| ((k * 40503 + 17) % 997) as f64 / 997.0 - 0.5);
        let (a, b) = (1.7, -0.6);
        let combo = mk(&|k| a * x.channels[0][k] + b * y.channels[0][k]);

        let fx = apply_chain(&x, &chain).unwrap();
        let fy = apply_chain(&y, &chain).unwrap();
        let fc = apply_chain(&combo, &chain).unwrap();
        let mut scale = 0.0f64;
        for k in 0..n {
            scale = scale.max(fc.channels[0][k].abs());
        }
        for k in 0..n {
            let lhs = fc.channels[0][k];
            let rhs = a * fx.channels[0][k] + b * fy.channels[0][k];
            assert!((lhs - rhs).abs() <= 1e-9 * scale.max(1.0), "linearity at {k}");
        }

        // Shifted input gives shifted output.
        let shift = 250usize;
        let xs = mk(&|k| if k >= shift { x.channels[0][k - shift] } else { 0.0 });
        let fxs = apply_chain(&xs, &chain).unwrap();
        for k in shift..n {
            assert!(
                (fxs.channels[0][k] - fx.channels[0][k - shift]).abs() <= 1e-9 * scale.max(1.0),
                "time invariance at {k}"
            );
        }
    }

    #[test]
    fn single_tone_matches_transfer_function() {
        let chain = SignalChain::default();
        let dt = 0.05;
        for f_hz in [20e3, 75e3, 139e3] {
            let omega = 2.0 * std::f64::consts::PI * f_hz * 1e-6;
            let n = 40000;
            let sig = AnalogWaveform {
                channel_ids: vec!["e".into()],
                channels: vec![(0..n).map(|k| (omega * dt * k as f64).sin()).collect()],
                dt_us: dt,
            };
            let out = apply_chain(&sig, &chain).unwrap();
            // Amplitude after transients from peak detection over whole cycles.
            let start = 3 * n / 4;
            let amp = out.channels[0][start..].iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            let expect = chain.response(f_hz).norm();
            assert_relative_eq!(amp, expect, max_relative = 1e-3);
        }
    }

    #[test]
    fn butterworth_alone_drops_3db_at_cutoff() {
        let chain = SignalChain {
            dac: DacModel::default(),
            stages: vec![FilterStage { kind: StageKind::Butterworth3, cutoff_hz: 75e3 }],
        };
        let dt = 0.05;
        let omega = 2.0 * std::f64::consts::PI * 75e3 * 1e-6;
        let n = 60000;
        let sig = AnalogWaveform {
            channel_ids: vec!["e".into()],
            channels: vec![(0..n).map(|k| (omega * dt * k as f64).sin()).collect()],
            dt_us: dt,
        };
        let out = apply_chain(&sig, &chain).unwrap();
        let amp = out.channels[0][3 * n / 4..].iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        assert_relative_eq!(amp, 1.0 / 2.0f64.sqrt(), max_relative = 1e-2);
    }

    #[test]
    fn response_table_behaves_at_dc_and_composes() {
        let chain = SignalChain::default();
        let pts = chain_response(&chain, &[1e-3, 139e3]);
        assert_relative_eq!(pts[0].magnitude, 1.0, max_relative = 1e-9);
        assert_abs_diff_eq!(pts[0].phase_rad, 0.0, epsilon = 1e-6);
        // Product of per-stage analytic magnitudes.
        let x: f64 = 139e3 / 75e3;
        let b3 = 1.0 / (1.0 + x.powi(6)).sqrt();
        let f1 = 47e3 / (2.0f64.sqrt() - 1.0).sqrt();
        let rc2 = 1.0 / (1.0 + (139e3f64 / f1).powi(2));
        let rc1 = 1.0 / (1.0 + (139e3f64 / 257e3).powi(2)).sqrt();
        assert_relative_eq!(pts[1].magnitude, b3 * rc2 * rc1, max_relative = 1e-9);
    }

    #[test]
    fn f32_chain_keeps_unit_dc_gain() {
        let chain = SignalChain::<f32>::default();
        let sig = AnalogWaveform {
            channel_ids: vec!["e".into()],
            channels: vec![vec![1.0f32; 20000]],
            dt_us: 0.05,
        };
        let out = apply_chain(&sig, &chain).unwrap();
        assert!((out.channels[0].last().unwrap() - 1.0).abs() < 1e-3);
    }
}
