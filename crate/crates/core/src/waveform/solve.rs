//! Per-position voltage solves.
//!
//! For each target well position the electrode voltages minimize
//!
//! ```text
//! sum_i V_i^2  +  p1 ||E_total(x0)||^2  +  p2 (d2 phi_total/dx2 - k_target)^2
//! ```
//!
//! with the field in V/m and the curvature in V/m^2. Both constraint terms
//! are linear in the voltages (the pseudopotential enters as a fixed bias),
//! so the penalty problem is an exactly solvable regularized least-squares
//! system; it is solved by Householder QR with an active-set loop for the
//! voltage bounds. Penalty weights stay constant across a synthesis run.

use thiserror::Error;

use crate::constants::curvature_from_frequency;
use crate::geom::Vec3;
use crate::linalg::Mat;
use crate::real::Real;
use crate::trap::analysis::{null_at, two_rail_null_height, AnalysisError};
use crate::trap::field::{IonSpecies, TrapField};
use crate::waveform::sg::SgError;

#[derive(Debug, Error)]
pub enum WaveformError {
    #[error("voltage bounds of {bound_v} V leave no feasible solution")]
    InfeasibleBounds { bound_v: f64 },
    #[error("target position {x_um} um is outside the sampled basis span")]
    OutOfSpan { x_um: f64 },
    #[error("solve failed at x = {x_um} um: {source}")]
    SolveFailedAt {
        x_um: f64,
        #[source]
        source: Box<WaveformError>,
    },
    #[error("path length {span_um} um is not a multiple of the {step_um} um step")]
    BadStep { span_um: f64, step_um: f64 },
    #[error("waveform pitch {pitch_um} um does not divide the {target_um} um transport step")]
    PitchMismatch { pitch_um: f64, target_um: f64 },
    #[error(transparent)]
    Null(#[from] AnalysisError),
    #[error(transparent)]
    Smoothing(#[from] SgError),
    #[error("{0}")]
    Config(String),
}

/// Shape of the target well, independent of its position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WellShape<T> {
    /// Target axial curvature of the total potential, V/m^2.
    pub axial_curvature_v_per_m2: T,
    /// Require the total field to vanish at the well center.
    pub field_zero: bool,
}

impl<T: Real> WellShape<T> {
    /// Shape that yields the given axial secular frequency for `ion`.
    pub fn for_axial_frequency(freq_hz: T, ion: IonSpecies<T>) -> Self {
        // curvature of the potential (V/um^2) = energy curvature / charge
        let k_ev = curvature_from_frequency(freq_hz, ion.mass_amu);
        Self {
            axial_curvature_v_per_m2: k_ev / ion.charge_e * T::of(1e12),
            field_zero: true,
        }
    }
}

/// A well shape pinned to an axial position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WellTarget<T> {
    pub position_um: T,
    pub shape: WellShape<T>,
}

/// Synthesis parameters. Defaults reproduce the transport protocol:
/// solutions every 2 um, down-sampled to 12 um, quadratic Savitzky-Golay
/// over 25 samples, voltages within +-10 V.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisConfig<T> {
    /// Penalty weight on the squared total field (V/m)^2.
    pub p1: T,
    /// Penalty weight on the squared curvature error (V/m^2)^2.
    pub p2: T,
    pub voltage_bound_v: T,
    /// Electrode ids to drive; `None` selects the layout's transport set.
    pub active_electrodes: Option<Vec<String>>,
    pub step_raw_um: T,
    pub step_transport_um: T,
    pub sg_window: usize,
    pub sg_order: usize,
    /// Hold time per voltage update (us).
    pub dwell_us: T,
    /// Sequential warm-started sweep; turning this off permits solving
    /// positions in parallel (the direct solver makes both paths agree).
    pub warm_start: bool,
}

impl<T: Real> Default for SynthesisConfig<T> {
    fn default() -> Self {
        Self {
            p1: T::of(1e6),
            p2: T::of(1e4),
            voltage_bound_v: T::of(10.0),
            active_electrodes: None,
            step_raw_um: T::of(2.0),
            step_transport_um: T::of(12.0),
            sg_window: 25,
            sg_order: 2,
            // 58 updates over 412.5 us of link time.
            dwell_us: T::of(412.5 / 57.0),
            warm_start: true,
        }
    }
}

impl<T: Real> SynthesisConfig<T> {
    /// Field-level diagnostics; empty means valid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.p1 > T::zero()) {
            out.push("synthesis.p1 must be positive".into());
        }
        if !(self.p2 > T::zero()) {
            out.push("synthesis.p2 must be positive".into());
        }
        if !(self.voltage_bound_v > T::zero()) {
            out.push("synthesis.voltage_bound_v must be positive".into());
        }
        if self.sg_window % 2 == 0 || self.sg_window <= self.sg_order {
            out.push("synthesis.sg_window must be odd and exceed sg_order".into());
        }
        if !(self.step_raw_um > T::zero()) {
            out.push("synthesis.step_raw_um must be positive".into());
        } else {
            let ratio = self.step_transport_um / self.step_raw_um;
            if (ratio - ratio.round()).abs() > T::of(1e-9) || ratio < T::one() {
                out.push(
                    "synthesis.step_transport_um must be an integer multiple of step_raw_um"
                        .into(),
                );
            }
        }
        if !(self.dwell_us > T::zero()) {
            out.push("synthesis.dwell_us must be positive".into());
        }
        out
    }

    pub fn fingerprint(&self) -> String {
        crate::io::fnv1a_hex(&format!("{self:?}"))
    }
}

/// Linearized constraint data at one candidate well position.
#[derive(Clone, Debug)]
pub struct ConstraintSample<T> {
    /// Well center (on the RF null).
    pub point: Vec3<T>,
    /// Per-electrode potential gradient at the point, V/m per volt.
    pub grad_rows: Vec<Vec3<T>>,
    /// Per-electrode axial curvature, V/m^2 per volt.
    pub curv_row: Vec<T>,
    /// Pseudopotential gradient expressed as a potential gradient, V/m.
    pub grad_bias: Vec3<T>,
    /// Pseudopotential axial curvature as potential curvature, V/m^2.
    pub curv_bias: T,
}

/// Source of constraint samples: the trap itself, or a synthetic basis in
/// tests.
pub trait WellBasis<T: Real>: Sync {
    fn electrode_ids(&self) -> &[String];
    fn sample(&self, x_um: T) -> Result<ConstraintSample<T>, WaveformError>;
    /// Fingerprint of the underlying geometry, recorded in waveform files.
    fn fingerprint(&self) -> String {
        "unspecified".into()
    }
}

/// Constraint basis backed by a [`TrapField`]: wells ride the RF null and
/// the constraints act on the total (DC plus pseudopotential) potential.
pub struct TrapBasis<'a, T: Real> {
    pub field: &'a TrapField<T>,
    active: Vec<usize>,
    ids: Vec<String>,
}

impl<'a, T: Real> TrapBasis<'a, T> {
    pub fn new(field: &'a TrapField<T>, cfg: &SynthesisConfig<T>) -> Result<Self, WaveformError> {
        let ids: Vec<String> = match &cfg.active_electrodes {
            Some(list) => list.clone(),
            None => field.layout.transport_electrodes.clone(),
        };
        if ids.is_empty() {
            return Err(WaveformError::Config("no active electrodes selected".into()));
        }
        let mut active = Vec::with_capacity(ids.len());
        for id in &ids {
            let idx = field
                .dc_index(id)
                .ok_or_else(|| WaveformError::Config(format!("unknown DC electrode {id:?}")))?;
            active.push(idx);
        }
        Ok(Self { field, active, ids })
    }

    /// Expand active-electrode voltages into a full DC voltage vector.
    pub fn expand(&self, voltages: &[T]) -> Vec<T> {
        let mut full = vec![T::zero(); self.field.dc_count()];
        for (slot, &v) in self.active.iter().zip(voltages) {
            full[*slot] = v;
        }
        full
    }

    /// Axial span covered by the active electrodes.
    pub fn span_um(&self) -> (T, T) {
        let mut lo = T::max_value();
        let mut hi = T::min_value();
        for &idx in &self.active {
            let e = self.field.dc_electrode(idx);
            lo = lo.min(e.extent.x_min);
            hi = hi.max(e.extent.x_max);
        }
        (lo, hi)
    }
}

impl<'a, T: Real> WellBasis<T> for TrapBasis<'a, T> {
    fn electrode_ids(&self) -> &[String] {
        &self.ids
    }

    fn sample(&self, x_um: T) -> Result<ConstraintSample<T>, WaveformError> {
        let (lo, hi) = self.span_um();
        if x_um < lo || x_um > hi {
            return Err(WaveformError::OutOfSpan { x_um: x_um.to_f64().unwrap_or(f64::NAN) });
        }
        let seed = Vec3::new(x_um, T::zero(), two_rail_null_height(self.field));
        let null = null_at(self.field, x_um, seed)?;
        let p = Vec3::new(null.x, null.y, null.z);

        let to_m = T::of(1e6);
        let to_m2 = T::of(1e12);
        let q = self.field.ion.charge_e;
        let mut grad_rows = Vec::with_capacity(self.active.len());
        let mut curv_row = Vec::with_capacity(self.active.len());
        for &idx in &self.active {
            let f = self.field.dc_electrode(idx).patch_field_unchecked(p);
            grad_rows.push(f.grad.scale(to_m));
            curv_row.push(f.hess.xx * to_m2);
        }

        // Pseudopotential bias as an equivalent potential: grad(U)/q.
        let g_ps = self.field.pseudo_grad_ev_um(p).scale(to_m / q);
        let h = T::of(0.5);
        let gx_plus = self.field.pseudo_grad_ev_um(Vec3::new(p.x + h, p.y, p.z)).x;
        let gx_minus = self.field.pseudo_grad_ev_um(Vec3::new(p.x - h, p.y, p.z)).x;
        let curv_ps = (gx_plus - gx_minus) / (T::of(2.0) * h) / q * to_m2;

        Ok(ConstraintSample {
            point: p,
            grad_rows,
            curv_row,
            grad_bias: g_ps,
            curv_bias: curv_ps,
        })
    }

    fn fingerprint(&self) -> String {
        self.field.layout.fingerprint()
    }
}

/// Residual diagnostics of a solved well.
#[derive(Clone, Copy, Debug)]
pub struct SolveResiduals<T> {
    /// Total field magnitude at the well center, V/m.
    pub field_v_per_m: T,
    /// Curvature error against the target, V/m^2.
    pub curvature_v_per_m2: T,
    /// First-order estimate of the well-minimum offset, um.
    pub min_offset_um: T,
}

/// Voltages for one well position.
#[derive(Clone, Debug)]
pub struct VoltageSolution<T> {
    pub position_um: T,
    /// One entry per active electrode, in basis order.
    pub voltages: Vec<T>,
    pub residuals: SolveResiduals<T>,
    pub converged: bool,
    /// Some voltages ended pinned at the bound.
    pub clamped: bool,
}

/// Solve one well. See the module docs for the objective.
pub fn solve_well<T: Real, B: WellBasis<T> + ?Sized>(
    basis: &B,
    target: &WellTarget<T>,
    cfg: &SynthesisConfig<T>,
) -> Result<VoltageSolution<T>, WaveformError> {
    let bound = cfg.voltage_bound_v;
    if !(bound > T::zero()) {
        return Err(WaveformError::InfeasibleBounds { bound_v: bound.to_f64().unwrap_or(0.0) });
    }
    let sample = basis.sample(target.position_um)?;
    let n = sample.grad_rows.len();
    let sqrt_p1 = cfg.p1.sqrt();
    let sqrt_p2 = cfg.p2.sqrt();
    let k_target = target.shape.axial_curvature_v_per_m2;

    // Active-set loop: clamped electrodes are pinned at +-bound and their
    // contribution moves into the right-hand side.
    let mut pinned: Vec<Option<T>> = vec![None; n];
    let mut voltages = vec![T::zero(); n];
    for _pass in 0..=n {
        let free: Vec<usize> = (0..n).filter(|&j| pinned[j].is_none()).collect();
        if free.is_empty() {
            // Every electrode sits at a bound: best effort, flagged below.
            for j in 0..n {
                voltages[j] = pinned[j].unwrap();
            }
            break;
        }
        let field_rows = if target.shape.field_zero { 3 } else { 0 };
        let rows = free.len() + field_rows + 1;
        let mut a = Mat::zeros(rows, free.len());
        let mut b = vec![T::zero(); rows];
        for (r, _) in free.iter().enumerate() {
            a.set(r, r, T::one());
        }
        let mut bias_e = sample.grad_bias;
        let mut bias_k = sample.curv_bias;
        for j in 0..n {
            if let Some(v) = pinned[j] {
                bias_e += sample.grad_rows[j].scale(v);
                bias_k += sample.curv_row[j] * v;
            }
        }
        if target.shape.field_zero {
            for (c, &j) in free.iter().enumerate() {
                let g = sample.grad_rows[j];
                a.set(free.len(), c, sqrt_p1 * g.x);
                a.set(free.len() + 1, c, sqrt_p1 * g.y);
                a.set(free.len() + 2, c, sqrt_p1 * g.z);
            }
            b[free.len()] = -sqrt_p1 * bias_e.x;
            b[free.len() + 1] = -sqrt_p1 * bias_e.y;
            b[free.len() + 2] = -sqrt_p1 * bias_e.z;
        }
        let last = rows - 1;
        for (c, &j) in free.iter().enumerate() {
            a.set(last, c, sqrt_p2 * sample.curv_row[j]);
        }
        b[last] = sqrt_p2 * (k_target - bias_k);

        let x = crate::linalg::lstsq(a, &b);
        for (c, &j) in free.iter().enumerate() {
            voltages[j] = x[c];
        }
        for j in 0..n {
            if let Some(v) = pinned[j] {
                voltages[j] = v;
            }
        }
        let mut newly_pinned = false;
        for &j in &free {
            if voltages[j].abs() > bound {
                pinned[j] = Some(bound * voltages[j].signum());
                newly_pinned = true;
            }
        }
        if !newly_pinned {
            break;
        }
    }

    // Residuals of the returned voltages.
    let mut field = sample.grad_bias;
    let mut curv = sample.curv_bias;
    for j in 0..n {
        field += sample.grad_rows[j].scale(voltages[j]);
        curv += sample.curv_row[j] * voltages[j];
    }
    let field_mag = field.norm();
    let curv_err = (curv - k_target).abs();
    let min_offset_um = (field.x / k_target).abs() * T::of(1e6);
    let clamped = pinned.iter().any(|p| p.is_some());
    let converged =
        field_mag < T::one() && curv_err < T::of(1e-3) * k_target.abs() && !clamped;

    Ok(VoltageSolution {
        position_um: target.position_um,
        voltages,
        residuals: SolveResiduals {
            field_v_per_m: field_mag,
            curvature_v_per_m2: curv_err,
            min_offset_um,
        },
        converged,
        clamped,
    })
}
