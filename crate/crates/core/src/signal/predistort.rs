//! Waveform pre-distortion: regularized deconvolution of the filter chain.
//!
//! Solves for DAC samples whose filtered output tracks the ideal staircase,
//! trading tracking error against sample-to-sample jerk of the deviation
//! from the original waveform. Penalizing the deviation (rather than the
//! samples themselves) makes `reg -> inf` reproduce the input exactly.

use rayon::prelude::*;

use crate::linalg::{Mat, QrLstsq};
use crate::real::Real;
use crate::signal::{render_dac, AnalogWaveform, SignalChain, SignalError};
use crate::waveform::TransportWaveform;

/// Result of a pre-distortion solve.
#[derive(Clone, Debug)]
pub struct PredistortOutcome<T> {
    pub waveform: TransportWaveform<T>,
    /// Some solved samples exceeded the DAC range and were clamped; the
    /// returned waveform is best-effort.
    pub clipped: bool,
}

/// Samples per DAC update used in the deconvolution, chosen to keep the
/// internal integration above 50x the chain's highest cutoff (with margin).
fn track_oversample<T: Real>(dwell_us: T, chain: &SignalChain<T>) -> usize {
    let need = T::of(60.0) * chain.max_cutoff_hz() * dwell_us * T::of(1e-6);
    (need.ceil().to_f64().unwrap_or(32.0) as usize).max(32)
}

pub fn predistort<T: Real>(
    w: &TransportWaveform<T>,
    chain: &SignalChain<T>,
    reg: T,
) -> Result<PredistortOutcome<T>, SignalError> {
    assert!(reg > T::zero(), "regularization must be positive");
    let n = w.solutions.len();
    if n < 2 {
        return Err(SignalError::TooShort { need: 2, got: n });
    }
    let os = track_oversample(w.dwell_us, chain);
    let dt = w.dwell_us / T::of_usize(os);
    let tail = chain.settle_tail_us();
    let tail_samples = (tail / dt).ceil().to_f64().unwrap_or(0.0) as usize;
    let n_t = (n - 1) * os + 1 + tail_samples;

    // The staircase is a superposition of one-dwell boxcars, except the
    // final update which the DAC holds indefinitely: its column is a step
    // response.
    let mut boxcar = vec![T::zero(); n_t];
    for v in boxcar.iter_mut().take(os) {
        *v = T::one();
    }
    let sig = AnalogWaveform {
        channel_ids: vec!["box".into(), "step".into()],
        channels: vec![boxcar, vec![T::one(); n_t]],
        dt_us: dt,
    };
    let mut responses = crate::signal::apply_chain(&sig, chain)?.channels;
    let psi_step = responses.remove(1);
    let psi_box = responses.remove(0);

    // Stacked system: tracking rows (normalized so the data term is the
    // mean squared error, independent of the internal resolution), then
    // second-difference rows and a weak value anchor on the deviation,
    // both scaled by sqrt(reg).
    let track_w = T::one() / T::of_usize(n_t).sqrt();
    let sqrt_reg = reg.sqrt();
    let anchor = sqrt_reg * T::of(0.1);
    let rows = n_t + (n - 2) + n;
    let mut a = Mat::zeros(rows, n);
    for t in 0..n_t {
        for j in 0..n {
            let start = j * os;
            if t >= start {
                let delayed = t - start;
                let kernel = if j == n - 1 { &psi_step } else { &psi_box };
                a.set(t, j, kernel[delayed] * track_w);
            }
        }
    }
    for r in 0..(n - 2) {
        a.set(n_t + r, r, sqrt_reg);
        a.set(n_t + r, r + 1, T::of(-2.0) * sqrt_reg);
        a.set(n_t + r, r + 2, sqrt_reg);
    }
    for j in 0..n {
        a.set(n_t + (n - 2) + j, j, anchor);
    }
    let qr = QrLstsq::new(a);

    // Boxcar decomposition: a staircase with values v_k equals
    // sum_k d_k * boxcar_k with d in "per-update pulse" space only if each
    // update is a one-dwell pulse. The unknowns here are those pulse
    // heights; the staircase the DAC actually plays holds d_k for one dwell
    // each, which is exactly the pulse superposition.
    let ids = w.electrode_ids.clone();
    let results: Vec<(Vec<T>, bool)> = (0..ids.len())
        .into_par_iter()
        .map(|e| {
            let values: Vec<T> = w.solutions.iter().map(|s| s.voltages[e]).collect();
            let mut b = vec![T::zero(); rows];
            for (t, slot) in b.iter_mut().enumerate().take(n_t) {
                let k = (t / os).min(n - 1);
                *slot = values[k] * track_w;
            }
            for r in 0..(n - 2) {
                b[n_t + r] = sqrt_reg * (values[r] - T::of(2.0) * values[r + 1] + values[r + 2]);
            }
            for j in 0..n {
                b[n_t + (n - 2) + j] = anchor * values[j];
            }
            let d = qr.solve(&b);
            let range = chain.dac.voltage_range_v;
            let mut clipped = false;
            let d: Vec<T> = d
                .into_iter()
                .map(|v| {
                    if v.abs() > range {
                        clipped = true;
                        range * v.signum()
                    } else {
                        v
                    }
                })
                .collect();
            (d, clipped)
        })
        .collect();

    let mut out = w.clone();
    let mut clipped_any = false;
    for (e, (d, clipped)) in results.into_iter().enumerate() {
        clipped_any |= clipped;
        for (k, v) in d.into_iter().enumerate() {
            out.solutions[k].voltages[e] = v;
        }
    }
    Ok(PredistortOutcome { waveform: out, clipped: clipped_any })
}

/// RMS error between the filtered output of `w` and its ideal staircase,
/// evaluated at the tracking resolution. Used to compare pre-distortion
/// settings.
pub fn tracking_rms<T: Real>(
    reference: &TransportWaveform<T>,
    played: &TransportWaveform<T>,
    chain: &SignalChain<T>,
) -> Result<T, SignalError> {
    let os = track_oversample(played.dwell_us, chain);
    let rendered = render_dac(played, &chain.dac, os, chain.settle_tail_us())?;
    let filtered = crate::signal::apply_chain(&rendered, chain)?;
    let n = reference.solutions.len();
    let mut acc = T::zero();
    let mut count = 0usize;
    let samples = filtered.channels[0].len();
    for e in 0..reference.electrode_ids.len() {
        for t in 0..samples {
            let k = (t / os).min(n - 1);
            let ideal = reference.solutions[k].voltages[e];
            let d = filtered.channels[e][t] - ideal;
            acc += d * d;
            count += 1;
        }
    }
    Ok((acc / T::of_usize(count)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{DacModel, FilterStage, StageKind};
    use crate::waveform::solve::{SolveResiduals, VoltageSolution};

    fn ramp_waveform(n: usize) -> TransportWaveform<f64> {
        TransportWaveform {
            electrode_ids: vec!["e".into()],
            solutions: (0..n)
                .map(|k| {
                    let t = k as f64 / (n - 1) as f64;
                    VoltageSolution {
                        position_um: k as f64,
                        voltages: vec![2.0 * (std::f64::consts::PI * t).sin() - 0.5 * t],
                        residuals: SolveResiduals {
                            field_v_per_m: 0.0,
                            curvature_v_per_m2: 0.0,
                            min_offset_um: 0.0,
                        },
                        converged: true,
                        clamped: false,
                    }
                })
                .collect(),
            dwell_us: 412.5 / 57.0,
            nominal_pitch_um: 12.0,
            basis_fingerprint: String::new(),
            config_fingerprint: String::new(),
        }
    }

    #[test]
    fn wideband_chain_needs_no_compensation() {
        let w = ramp_waveform(58);
        // Cutoff far above the 138 kHz update rate: the chain is close to
        // an identity on staircase timescales.
        let chain = SignalChain {
            dac: DacModel::default(),
            stages: vec![FilterStage { kind: StageKind::Rc1, cutoff_hz: 2e6 }],
        };
        let out = predistort(&w, &chain, 1.0).unwrap();
        assert!(!out.clipped);
        for (a, b) in out.waveform.solutions.iter().zip(&w.solutions) {
            assert!(
                (a.voltages[0] - b.voltages[0]).abs() < 1e-3,
                "deviation {}",
                (a.voltages[0] - b.voltages[0]).abs()
            );
        }
    }

    #[test]
    fn infinite_regularization_returns_the_input() {
        let w = ramp_waveform(58);
        let chain = SignalChain::default();
        let out = predistort(&w, &chain, 1e12).unwrap();
        for (a, b) in out.waveform.solutions.iter().zip(&w.solutions) {
            assert!((a.voltages[0] - b.voltages[0]).abs() < 1e-4);
        }
    }

    #[test]
    fn tracking_error_decreases_along_a_reg_ladder() {
        let w = ramp_waveform(58);
        let chain = SignalChain::default();
        let baseline = tracking_rms(&w, &w, &chain).unwrap();
        let mut last = baseline;
        for reg in [1e2, 1.0, 1e-2, 1e-4] {
            let out = predistort(&w, &chain, reg).unwrap();
            let rms = tracking_rms(&w, &out.waveform, &chain).unwrap();
            assert!(
                rms <= last * (1.0 + 1e-9),
                "tracking error grew at reg {reg}: {rms} vs {last}"
            );
            last = rms;
        }
        assert!(last < baseline / 2.0, "compensation did not help: {last} vs {baseline}");
    }

    #[test]
    fn range_violations_clip_and_flag() {
        // A hard step pushed through the 47/75 kHz chain needs a large
        // leading kick; a tight DAC range forces clipping.
        let mut w = ramp_waveform(58);
        for (k, s) in w.solutions.iter_mut().enumerate() {
            s.voltages[0] = if k < 29 { 0.0 } else { 2.0 };
        }
        let chain = SignalChain {
            dac: DacModel { voltage_range_v: 2.2, ..DacModel::default() },
            ..SignalChain::default()
        };
        let out = predistort(&w, &chain, 1e-6).unwrap();
        assert!(out.clipped);
        for s in &out.waveform.solutions {
            assert!(s.voltages[0].abs() <= 2.2 + 1e-12);
        }
    }
}
