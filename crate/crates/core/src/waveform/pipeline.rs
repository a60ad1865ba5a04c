//! Transport-waveform assembly: raw synthesis on a fine position grid,
//! smoothing, down-sampling to the transport pitch, and verification
//! against the trap model.

use rayon::prelude::*;

use crate::real::Real;
use crate::trap::analysis::{find_total_minimum, modes_from_hessian, null_at, two_rail_null_height};
use crate::trap::field::TrapField;
use crate::waveform::sg::sg_smooth;
use crate::waveform::solve::{
    solve_well, SynthesisConfig, TrapBasis, VoltageSolution, WaveformError, WellBasis, WellShape,
    WellTarget,
};
use crate::geom::Vec3;

/// An ordered set of voltage solutions at (nominally) uniform position
/// pitch, applied at a uniform update interval.
#[derive(Clone, Debug)]
pub struct TransportWaveform<T> {
    pub electrode_ids: Vec<String>,
    pub solutions: Vec<VoltageSolution<T>>,
    /// Hold time per update (us).
    pub dwell_us: T,
    /// Position pitch between consecutive solutions (um); the final step
    /// may be shorter when the span does not divide evenly.
    pub nominal_pitch_um: T,
    pub basis_fingerprint: String,
    pub config_fingerprint: String,
}

impl<T: Real> TransportWaveform<T> {
    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn positions(&self) -> Vec<T> {
        self.solutions.iter().map(|s| s.position_um).collect()
    }

    /// Nominal playback duration: (n-1) updates after the first.
    pub fn duration_us(&self) -> T {
        if self.solutions.len() < 2 {
            T::zero()
        } else {
            self.dwell_us * T::of_usize(self.solutions.len() - 1)
        }
    }

    /// Implied transport speed in m/s (um/us).
    pub fn implied_speed(&self) -> T {
        if self.solutions.len() < 2 {
            return T::zero();
        }
        let span =
            self.solutions.last().unwrap().position_um - self.solutions[0].position_um;
        span.abs() / self.duration_us()
    }

    /// True when positions form an arithmetic progression (constant
    /// velocity contract), up to a final partial step.
    pub fn pitch_is_uniform(&self) -> bool {
        if self.solutions.len() < 3 {
            return true;
        }
        let tol = T::of(1e-9);
        let n = self.solutions.len();
        let step = self.solutions[1].position_um - self.solutions[0].position_um;
        for k in 1..(n - 1) {
            let d = self.solutions[k].position_um - self.solutions[k - 1].position_um;
            if (d - step).abs() > tol {
                return false;
            }
        }
        true
    }

    /// Reverse the path (swap travel direction).
    pub fn reversed(&self) -> Self {
        let mut solutions = self.solutions.clone();
        solutions.reverse();
        Self { solutions, ..self.clone() }
    }

    /// Voltages of solution `k` expanded over all DC electrodes of `field`.
    pub fn full_voltages(&self, field: &TrapField<T>, k: usize) -> Vec<T> {
        let mut full = vec![T::zero(); field.dc_count()];
        for (id, &v) in self.electrode_ids.iter().zip(&self.solutions[k].voltages) {
            if let Some(idx) = field.dc_index(id) {
                full[idx] = v;
            }
        }
        full
    }
}

/// Solve one well per `step_raw_um` from `from_um` to `to_um` inclusive.
pub fn synthesize_raw<T: Real>(
    basis: &TrapBasis<'_, T>,
    from_um: T,
    to_um: T,
    shape: WellShape<T>,
    cfg: &SynthesisConfig<T>,
) -> Result<TransportWaveform<T>, WaveformError> {
    let span = to_um - from_um;
    let step = if span < T::zero() { -cfg.step_raw_um } else { cfg.step_raw_um };
    let steps = if span == T::zero() {
        0usize
    } else {
        let ratio = span / step;
        if (ratio - ratio.round()).abs() > T::of(1e-6) {
            return Err(WaveformError::BadStep {
                span_um: span.abs().to_f64().unwrap_or(f64::NAN),
                step_um: cfg.step_raw_um.to_f64().unwrap_or(f64::NAN),
            });
        }
        ratio.round().to_f64().unwrap_or(0.0) as usize
    };

    let position = |k: usize| from_um + step * T::of_usize(k);
    let solve_at = |k: usize| -> Result<VoltageSolution<T>, WaveformError> {
        let x = position(k);
        let target = WellTarget { position_um: x, shape };
        solve_well(basis, &target, cfg).map_err(|e| WaveformError::SolveFailedAt {
            x_um: x.to_f64().unwrap_or(f64::NAN),
            source: Box::new(e),
        })
    };

    // The penalty problem is solved directly, so warm starting changes
    // scheduling only: sequential sweep vs parallel-by-position.
    let solutions: Vec<VoltageSolution<T>> = if cfg.warm_start {
        let mut out = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            out.push(solve_at(k)?);
        }
        out
    } else {
        (0..=steps).into_par_iter().map(solve_at).collect::<Result<Vec<_>, _>>()?
    };

    Ok(TransportWaveform {
        electrode_ids: basis.electrode_ids().to_vec(),
        solutions,
        dwell_us: cfg.dwell_us,
        nominal_pitch_um: cfg.step_raw_um,
        basis_fingerprint: basis.fingerprint(),
        config_fingerprint: cfg.fingerprint(),
    })
}

/// Savitzky-Golay smoothing of each electrode's voltage-vs-position record.
pub fn smooth<T: Real>(
    w: &TransportWaveform<T>,
    cfg: &SynthesisConfig<T>,
) -> Result<TransportWaveform<T>, WaveformError> {
    let n = w.solutions.len();
    let mut columns: Vec<Vec<T>> = Vec::with_capacity(w.electrode_ids.len());
    for e in 0..w.electrode_ids.len() {
        let series: Vec<T> = w.solutions.iter().map(|s| s.voltages[e]).collect();
        columns.push(sg_smooth(&series, cfg.sg_window, cfg.sg_order)?);
    }
    let mut out = w.clone();
    for k in 0..n {
        for (e, col) in columns.iter().enumerate() {
            out.solutions[k].voltages[e] = col[k];
        }
    }
    Ok(out)
}

/// Keep every (step_transport / step_raw)-th solution; endpoints are always
/// retained, recording a shorter final step when the span does not divide.
pub fn downsample<T: Real>(
    w: &TransportWaveform<T>,
    cfg: &SynthesisConfig<T>,
) -> Result<TransportWaveform<T>, WaveformError> {
    let ratio = cfg.step_transport_um / w.nominal_pitch_um;
    if (ratio - ratio.round()).abs() > T::of(1e-9) || ratio < T::one() {
        return Err(WaveformError::PitchMismatch {
            pitch_um: w.nominal_pitch_um.to_f64().unwrap_or(f64::NAN),
            target_um: cfg.step_transport_um.to_f64().unwrap_or(f64::NAN),
        });
    }
    let every = ratio.round().to_f64().unwrap_or(1.0) as usize;
    let n = w.solutions.len();
    let mut solutions = Vec::new();
    let mut k = 0;
    while k < n {
        solutions.push(w.solutions[k].clone());
        k += every;
    }
    if let Some(last) = solutions.last() {
        if last.position_um != w.solutions[n - 1].position_um {
            solutions.push(w.solutions[n - 1].clone());
        }
    }
    Ok(TransportWaveform {
        solutions,
        nominal_pitch_um: cfg.step_transport_um,
        ..w.clone()
    })
}

/// Per-solution check of a waveform against the trap model.
#[derive(Clone, Debug)]
pub struct VerifyRow<T> {
    pub intended_um: T,
    /// Position of the nearest total-potential minimum, when bounded.
    pub actual_um: Option<T>,
    pub offset_um: Option<T>,
    pub axial_hz: Option<T>,
    /// Total field magnitude at the intended point, V/m.
    pub field_v_per_m: T,
    /// A bounded minimum exists within the capture radius of the intended
    /// position. A minimum hundreds of um away (e.g. the bare RF null at
    /// the gap center for all-zero voltages) does not count as a well at
    /// this step.
    pub captured: bool,
}

#[derive(Clone, Debug)]
pub struct VerifyReport<T> {
    pub rows: Vec<VerifyRow<T>>,
    /// Offset statistics over captured rows.
    pub max_offset_um: T,
    pub mean_offset_um: T,
    pub max_axial_dev_hz: T,
    /// Rows with no bounded minimum near the intended position.
    pub uncaptured_rows: usize,
}

/// How far a found minimum may sit from the intended position and still
/// count as the step's well (um).
pub const CAPTURE_RADIUS_UM: f64 = 25.0;

/// Locate each solution's true potential minimum and axial frequency.
pub fn verify_waveform<T: Real>(
    field: &TrapField<T>,
    w: &TransportWaveform<T>,
) -> VerifyReport<T> {
    let height = two_rail_null_height(field);
    let rows: Vec<VerifyRow<T>> = (0..w.solutions.len())
        .into_par_iter()
        .map(|k| {
            let intended = w.solutions[k].position_um;
            let voltages = w.full_voltages(field, k);
            let seed = null_at(field, intended, Vec3::new(intended, T::zero(), height))
                .map(|np| Vec3::new(np.x, np.y, np.z))
                .unwrap_or_else(|_| Vec3::new(intended, T::zero(), height));
            let grad = field.total_grad_ev_um(&voltages, seed);
            let field_v_per_m = grad.norm() / field.ion.charge_e * T::of(1e6);
            match find_total_minimum(field, &voltages, seed) {
                Ok(p) => {
                    let hess = field.total_hessian_ev_um2(&voltages, p);
                    let modes = modes_from_hessian(hess, field.ion.mass_amu);
                    let offset = (p.x - intended).abs();
                    VerifyRow {
                        intended_um: intended,
                        actual_um: Some(p.x),
                        offset_um: Some(offset),
                        axial_hz: Some(modes.axial_hz()),
                        field_v_per_m,
                        captured: offset <= T::of(CAPTURE_RADIUS_UM),
                    }
                }
                Err(_) => VerifyRow {
                    intended_um: intended,
                    actual_um: None,
                    offset_um: None,
                    axial_hz: None,
                    field_v_per_m,
                    captured: false,
                },
            }
        })
        .collect();

    let mut max_offset = T::zero();
    let mut sum_offset = T::zero();
    let mut counted = 0usize;
    let mut uncaptured = 0usize;
    let mut freqs = Vec::new();
    for r in &rows {
        if !r.captured {
            uncaptured += 1;
            continue;
        }
        if let Some(o) = r.offset_um {
            max_offset = max_offset.max(o);
            sum_offset += o;
            counted += 1;
        }
        if let Some(f) = r.axial_hz {
            freqs.push(f);
        }
    }
    let mean_axial = if freqs.is_empty() {
        T::zero()
    } else {
        freqs.iter().copied().sum::<T>() / T::of_usize(freqs.len())
    };
    let max_axial_dev = freqs
        .iter()
        .map(|&f| (f - mean_axial).abs())
        .fold(T::zero(), |a, b| a.max(b));

    VerifyReport {
        rows,
        max_offset_um: max_offset,
        mean_offset_um: if counted == 0 { T::zero() } else { sum_offset / T::of_usize(counted) },
        max_axial_dev_hz: max_axial_dev,
        uncaptured_rows: uncaptured,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trap::field::{IonSpecies, RfDrive};
    use crate::trap::layout::{build_two_module_layout, LayoutParams};
    use approx::assert_abs_diff_eq;

    fn field() -> TrapField<f64> {
        let layout = build_two_module_layout(&LayoutParams::default()).unwrap();
        TrapField::new(layout, RfDrive::default(), IonSpecies::yb174())
    }

    fn shape() -> WellShape<f64> {
        WellShape::for_axial_frequency(141e3, IonSpecies::yb174())
    }

    #[test]
    fn raw_synthesis_produces_one_solution_per_step() {
        let f = field();
        let cfg = SynthesisConfig::default();
        let basis = TrapBasis::new(&f, &cfg).unwrap();
        let (z1, z2) = (f.layout.zones.zone1, f.layout.zones.zone2);
        let w = synthesize_raw(&basis, z1, z2, shape(), &cfg).unwrap();
        assert_eq!(w.len(), 343);
        assert!(w.pitch_is_uniform());
        assert!(w.solutions.iter().all(|s| s.converged));
        let down = downsample(&w, &cfg).unwrap();
        assert_eq!(down.len(), 58);
        assert!(down.pitch_is_uniform());
        assert_abs_diff_eq!(down.duration_us(), 412.5, epsilon = 1e-9);
        assert_abs_diff_eq!(down.implied_speed(), 684.0 / 412.5, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_path_reduces_to_a_single_solve() {
        let f = field();
        let cfg = SynthesisConfig::default();
        let basis = TrapBasis::new(&f, &cfg).unwrap();
        let z1 = f.layout.zones.zone1;
        let w = synthesize_raw(&basis, z1, z1, shape(), &cfg).unwrap();
        assert_eq!(w.len(), 1);
        let target = WellTarget { position_um: z1, shape: shape() };
        let single = solve_well(&basis, &target, &cfg).unwrap();
        for (a, b) in w.solutions[0].voltages.iter().zip(&single.voltages) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn reversed_span_yields_reversed_solutions() {
        let f = field();
        let cfg = SynthesisConfig::default();
        let basis = TrapBasis::new(&f, &cfg).unwrap();
        let a = synthesize_raw(&basis, -350.0, -310.0, shape(), &cfg).unwrap();
        let b = synthesize_raw(&basis, -310.0, -350.0, shape(), &cfg).unwrap();
        assert_eq!(a.len(), b.len());
        for (sa, sb) in a.solutions.iter().zip(b.solutions.iter().rev()) {
            assert_abs_diff_eq!(sa.position_um, sb.position_um, epsilon = 1e-12);
            for (va, vb) in sa.voltages.iter().zip(&sb.voltages) {
                assert_abs_diff_eq!(va, vb, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn warm_and_cold_scheduling_agree() {
        let f = field();
        let cfg_warm = SynthesisConfig::default();
        let cfg_cold = SynthesisConfig { warm_start: false, ..SynthesisConfig::default() };
        let basis = TrapBasis::new(&f, &cfg_warm).unwrap();
        let a = synthesize_raw(&basis, -350.0, -310.0, shape(), &cfg_warm).unwrap();
        let b = synthesize_raw(&basis, -350.0, -310.0, shape(), &cfg_cold).unwrap();
        for (sa, sb) in a.solutions.iter().zip(&b.solutions) {
            for (va, vb) in sa.voltages.iter().zip(&sb.voltages) {
                assert_abs_diff_eq!(va, vb, epsilon = 1e-4);
            }
        }
    }

    #[test]
    fn symmetric_pairs_get_equal_voltages() {
        let f = field();
        let cfg = SynthesisConfig::default();
        let basis = TrapBasis::new(&f, &cfg).unwrap();
        // Gap center: mirror-symmetric in both x (module swap) and y.
        let x = f.layout.gap_x / 2.0;
        let target = WellTarget { position_um: x, shape: shape() };
        let sol = solve_well(&basis, &target, &cfg).unwrap();
        let ids = basis.electrode_ids();
        let v = |id: &str| sol.voltages[ids.iter().position(|i| i == id).unwrap()];
        for k in 1..=4 {
            let n = format!("A_DC_N{k:02}");
            let s = format!("A_DC_S{k:02}");
            assert_abs_diff_eq!(v(&n), v(&s), epsilon = 1e-6);
            let bn = format!("B_DC_N{k:02}");
            assert_abs_diff_eq!(v(&n), v(&bn), epsilon = 1e-6);
        }
    }

    #[test]
    fn non_divisible_span_keeps_a_partial_final_step() {
        let f = field();
        let cfg = SynthesisConfig::default();
        let basis = TrapBasis::new(&f, &cfg).unwrap();
        // 40 um span at 2 um pitch, downsampled by 6: 0,12,24,36 then 40.
        let w = synthesize_raw(&basis, -350.0, -310.0, shape(), &cfg).unwrap();
        let down = downsample(&w, &cfg).unwrap();
        let pos = down.positions();
        assert_eq!(pos.len(), 5);
        assert_abs_diff_eq!(pos[3] - pos[0], 36.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pos[4], -310.0, epsilon = 1e-12);
        // Interior pitch stays at 12 um; the recorded final step is 4 um.
        assert!(down.pitch_is_uniform());
        assert_abs_diff_eq!(pos[4] - pos[3], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn pitch_mismatch_is_rejected() {
        let f = field();
        let cfg = SynthesisConfig::default();
        let basis = TrapBasis::new(&f, &cfg).unwrap();
        let w = synthesize_raw(&basis, -350.0, -310.0, shape(), &cfg).unwrap();
        let bad = SynthesisConfig { step_transport_um: 5.0, ..SynthesisConfig::default() };
        assert!(matches!(downsample(&w, &bad), Err(WaveformError::PitchMismatch { .. })));
    }

    #[test]
    fn verify_reports_no_axial_minimum_for_zero_voltages() {
        let f = field();
        let cfg = SynthesisConfig::default();
        let basis = TrapBasis::new(&f, &cfg).unwrap();
        let mut w = synthesize_raw(&basis, -340.0, -330.0, shape(), &cfg).unwrap();
        for s in &mut w.solutions {
            for v in &mut s.voltages {
                *v = 0.0;
            }
        }
        let report = verify_waveform(&f, &w);
        assert_eq!(report.uncaptured_rows, w.len());
    }
}
