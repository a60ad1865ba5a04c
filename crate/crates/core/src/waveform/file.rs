//! Waveform file format: the contract between synthesis, signal modeling
//! and dynamics.
//!
//! Delimited text with a metadata block, a header row naming the
//! electrodes, and one row per solution:
//!
//! ```text
//! # format = matterlink-waveform-v1
//! # basis = <layout fingerprint>
//! # config = <synthesis fingerprint>
//! # dwell_us = ...
//! # pitch_um = ...
//! position_um  dwell_us  <electrode id>...
//! ```

use thiserror::Error;

use crate::io::{Table, TableError};
use crate::real::Real;
use crate::waveform::pipeline::TransportWaveform;
use crate::waveform::solve::{SolveResiduals, VoltageSolution};

#[derive(Debug, Error)]
pub enum WaveformFileError {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("missing metadata key {0:?}")]
    MissingMeta(&'static str),
    #[error("waveform table needs position_um and dwell_us leading columns")]
    BadColumns,
    #[error("waveform table has no rows")]
    Empty,
}

pub const WAVEFORM_FORMAT: &str = "matterlink-waveform-v1";

pub fn waveform_to_text<T: Real>(w: &TransportWaveform<T>) -> String {
    let mut columns = vec!["position_um".to_string(), "dwell_us".to_string()];
    columns.extend(w.electrode_ids.iter().cloned());
    let mut t = Table::new(columns);
    t.meta("format", WAVEFORM_FORMAT);
    t.meta("basis", &w.basis_fingerprint);
    t.meta("config", &w.config_fingerprint);
    t.meta("dwell_us", w.dwell_us);
    t.meta("pitch_um", w.nominal_pitch_um);
    for s in &w.solutions {
        let mut row = Vec::with_capacity(2 + s.voltages.len());
        row.push(s.position_um.to_f64().unwrap_or(f64::NAN));
        row.push(w.dwell_us.to_f64().unwrap_or(f64::NAN));
        row.extend(s.voltages.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)));
        t.push_row(row);
    }
    t.to_text()
}

pub fn waveform_from_text<T: Real>(
    text: &str,
) -> Result<TransportWaveform<T>, WaveformFileError> {
    let t = Table::from_text(text)?;
    if t.columns.len() < 3 || t.columns[0] != "position_um" || t.columns[1] != "dwell_us" {
        return Err(WaveformFileError::BadColumns);
    }
    if t.rows.is_empty() {
        return Err(WaveformFileError::Empty);
    }
    let basis = t.get_meta("basis").ok_or(WaveformFileError::MissingMeta("basis"))?.to_string();
    let config =
        t.get_meta("config").ok_or(WaveformFileError::MissingMeta("config"))?.to_string();
    let dwell = t
        .get_meta("dwell_us")
        .and_then(|s| s.parse::<f64>().ok())
        .ok_or(WaveformFileError::MissingMeta("dwell_us"))?;
    let pitch = t
        .get_meta("pitch_um")
        .and_then(|s| s.parse::<f64>().ok())
        .ok_or(WaveformFileError::MissingMeta("pitch_um"))?;
    let electrode_ids: Vec<String> = t.columns[2..].to_vec();
    let solutions = t
        .rows
        .iter()
        .map(|row| VoltageSolution {
            position_um: T::of(row[0]),
            voltages: row[2..].iter().map(|&v| T::of(v)).collect(),
            residuals: SolveResiduals {
                field_v_per_m: T::zero(),
                curvature_v_per_m2: T::zero(),
                min_offset_um: T::zero(),
            },
            converged: true,
            clamped: false,
        })
        .collect();
    Ok(TransportWaveform {
        electrode_ids,
        solutions,
        dwell_us: T::of(dwell),
        nominal_pitch_um: T::of(pitch),
        basis_fingerprint: basis,
        config_fingerprint: config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn waveform_text_round_trips() {
        let w = TransportWaveform {
            electrode_ids: vec!["A_DC_N01".into(), "A_DC_S01".into()],
            solutions: (0..5)
                .map(|k| VoltageSolution {
                    position_um: -337.0 + 12.0 * k as f64,
                    voltages: vec![0.1 * k as f64, -0.05 * k as f64],
                    residuals: SolveResiduals {
                        field_v_per_m: 0.0,
                        curvature_v_per_m2: 0.0,
                        min_offset_um: 0.0,
                    },
                    converged: true,
                    clamped: false,
                })
                .collect(),
            dwell_us: 412.5 / 57.0,
            nominal_pitch_um: 12.0,
            basis_fingerprint: "abc".into(),
            config_fingerprint: "def".into(),
        };
        let text = waveform_to_text(&w);
        let back: TransportWaveform<f64> = waveform_from_text(&text).unwrap();
        assert_eq!(back.electrode_ids, w.electrode_ids);
        assert_eq!(back.len(), w.len());
        assert_abs_diff_eq!(back.dwell_us, w.dwell_us);
        for (a, b) in back.solutions.iter().zip(&w.solutions) {
            assert_eq!(a.position_um, b.position_um);
            assert_eq!(a.voltages, b.voltages);
        }
        assert_eq!(back.basis_fingerprint, "abc");
    }

    #[test]
    fn missing_metadata_is_an_error() {
        let text = "position_um\tdwell_us\te1\n0\t7.2\t0.5\n";
        assert!(matches!(
            waveform_from_text::<f64>(text),
            Err(WaveformFileError::MissingMeta(_))
        ));
    }
}
