//! Link simulation: ion motion under a played transport waveform, with
//! transport metrics and parameter sweeps.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::constants::{boltzmann_ev_per_k, e_over_u, hbar_ev_us};
use crate::geom::Vec3;
use crate::linalg::polyfit;
use crate::real::Real;
use crate::signal::{apply_chain, render_dac, AnalogWaveform, SignalChain};
use crate::trap::analysis::{find_total_minimum, null_at, trap_depth_and_barrier, two_rail_null_height};
use crate::trap::field::TrapField;
use crate::trap::layout::{build_two_module_layout, LayoutParams};
use crate::waveform::{
    downsample, smooth, synthesize_raw, SynthesisConfig, TransportWaveform, TrapBasis, WellShape,
};
use crate::dynamics::integrate::{
    integrate, DynamicsError, IntegratorConfig, InterpMode, RfMode, System, Trajectory,
};

/// Voltage source for the integrator.
enum Drive<'a, T> {
    Ideal { w: &'a TransportWaveform<T>, interp: InterpMode },
    Filtered { sig: &'a AnalogWaveform<T> },
    Static { voltages: Vec<T> },
}

/// Trap + drive bundle implementing [`System`].
pub struct TrapSystem<'a, T: Real> {
    field: &'a TrapField<T>,
    drive: Drive<'a, T>,
    mode: RfMode,
    /// Waveform/analog channel -> DC electrode slot.
    map: Vec<usize>,
    buf: Vec<T>,
    /// Escape reference: transverse null position and RF depth.
    null_y: T,
    null_z: T,
    depth_ev: T,
}

impl<'a, T: Real> TrapSystem<'a, T> {
    fn build(
        field: &'a TrapField<T>,
        ids: &[String],
        drive: Drive<'a, T>,
        mode: RfMode,
    ) -> Result<Self, DynamicsError> {
        let map = ids
            .iter()
            .map(|id| field.dc_index(id).expect("waveform electrode missing from layout"))
            .collect();
        let np = null_at(
            field,
            field.layout.zones.zone1,
            Vec3::new(field.layout.zones.zone1, T::zero(), two_rail_null_height(field)),
        )?;
        let db = trap_depth_and_barrier(
            field,
            (field.layout.gap_x, field.layout.misalign_y, field.layout.misalign_z),
        )?;
        Ok(Self {
            field,
            drive,
            mode,
            map,
            buf: vec![T::zero(); field.dc_count()],
            null_y: np.y,
            null_z: np.z,
            depth_ev: db.depth_mev * T::of(1e-3),
        })
    }

    /// Static-well system (fixed voltages over all DC electrodes).
    pub fn still(
        field: &'a TrapField<T>,
        voltages: Vec<T>,
        mode: RfMode,
    ) -> Result<Self, DynamicsError> {
        assert_eq!(voltages.len(), field.dc_count());
        Self::build(field, &[], Drive::Static { voltages }, mode)
    }

    /// Ideal playback of a waveform (no filter chain).
    pub fn ideal(
        field: &'a TrapField<T>,
        w: &'a TransportWaveform<T>,
        interp: InterpMode,
        mode: RfMode,
    ) -> Result<Self, DynamicsError> {
        let ids = w.electrode_ids.clone();
        Self::build(field, &ids, Drive::Ideal { w, interp }, mode)
    }

    /// Playback of a filtered analog record.
    pub fn filtered(
        field: &'a TrapField<T>,
        sig: &'a AnalogWaveform<T>,
        mode: RfMode,
    ) -> Result<Self, DynamicsError> {
        let ids = sig.channel_ids.clone();
        Self::build(field, &ids, Drive::Filtered { sig }, mode)
    }

    fn fill_voltages(&mut self, t_us: T) {
        match &self.drive {
            Drive::Static { voltages } => {
                self.buf.copy_from_slice(voltages);
            }
            Drive::Ideal { w, interp } => {
                for v in self.buf.iter_mut() {
                    *v = T::zero();
                }
                let n = w.solutions.len();
                let s = (t_us / w.dwell_us).max(T::zero());
                let k = (s.floor().to_f64().unwrap_or(0.0) as usize).min(n - 1);
                match interp {
                    InterpMode::Staircase => {
                        for (c, &slot) in self.map.iter().enumerate() {
                            self.buf[slot] = w.solutions[k].voltages[c];
                        }
                    }
                    InterpMode::Linear => {
                        let k1 = (k + 1).min(n - 1);
                        let frac = (s - T::of_usize(k)).min(T::one());
                        for (c, &slot) in self.map.iter().enumerate() {
                            let a = w.solutions[k].voltages[c];
                            let b = w.solutions[k1].voltages[c];
                            self.buf[slot] = a + (b - a) * frac;
                        }
                    }
                }
            }
            Drive::Filtered { sig } => {
                for v in self.buf.iter_mut() {
                    *v = T::zero();
                }
                for (c, &slot) in self.map.iter().enumerate() {
                    self.buf[slot] = sig.value_at(c, t_us);
                }
            }
        }
    }

    /// Total secular potential with the voltages frozen at `t_us`.
    pub fn frozen_potential_ev(&mut self, r: Vec3<T>, t_us: T) -> T {
        self.fill_voltages(t_us);
        self.field.total_energy_ev(&self.buf, r)
    }
}

impl<'a, T: Real> System<T> for TrapSystem<'a, T> {
    fn accel(&mut self, r: Vec3<T>, t_us: T) -> Vec3<T> {
        self.fill_voltages(t_us);
        let g = match self.mode {
            RfMode::Secular => self.field.total_grad_ev_um(&self.buf, r),
            RfMode::FullRf => self.field.instantaneous_grad_ev_um(&self.buf, r, t_us),
        };
        g.scale(-e_over_u::<T>() / self.field.ion.mass_amu)
    }

    fn potential_ev(&mut self, r: Vec3<T>, t_us: T) -> T {
        self.fill_voltages(t_us);
        match self.mode {
            RfMode::Secular => self.field.total_energy_ev(&self.buf, r),
            RfMode::FullRf => self.field.instantaneous_energy_ev(&self.buf, r, t_us),
        }
    }

    fn kinetic_ev(&self, v: Vec3<T>) -> T {
        T::of(0.5) * self.field.ion.mass_amu * v.norm2() / e_over_u::<T>()
    }

    fn escaped(&mut self, r: Vec3<T>, _t_us: T) -> bool {
        let dy = r.y - self.null_y;
        let dz = r.z - self.null_z;
        let transverse = (dy * dy + dz * dz).sqrt();
        if transverse > T::of(3.0) * self.null_z {
            return true;
        }
        self.field.pseudopotential_ev(r) > self.depth_ev
    }
}

/// Outcome metrics of one transport run.
#[derive(Clone, Debug)]
pub struct TransportReport<T> {
    /// Ion stayed bounded with final secular energy below the trap depth.
    pub success: bool,
    /// Final well sits at the intended target position and holds the ion.
    pub reached_target: bool,
    pub duration_us: T,
    pub distance_um: T,
    pub mean_speed_mps: T,
    pub final_axial_energy_mev: T,
    /// Mean axial quantum number at the final well frequency.
    pub final_quanta: T,
    pub final_axial_hz: T,
    pub max_excursion_um: T,
    pub escaped_at_us: Option<T>,
}

/// Axial energy of a state in the well formed by `voltages`, from a local
/// quadratic fit of the total potential over +-5 um around the minimum.
pub fn axial_energy_ev<T: Real>(
    field: &TrapField<T>,
    voltages: &[T],
    r: Vec3<T>,
    v: Vec3<T>,
    near_x: T,
) -> Result<(T, T), DynamicsError> {
    let seed = null_at(field, near_x, Vec3::new(near_x, T::zero(), two_rail_null_height(field)))
        .map(|np| Vec3::new(np.x, np.y, np.z))
        .unwrap_or_else(|_| Vec3::new(near_x, T::zero(), two_rail_null_height(field)));
    let min = find_total_minimum(field, voltages, seed).map_err(|_| DynamicsError::NoFinalWell {
        x_um: near_x.to_f64().unwrap_or(f64::NAN),
    })?;
    // Quadratic fit of U(x) along the axial line through the minimum.
    let mut xs = Vec::with_capacity(11);
    let mut us = Vec::with_capacity(11);
    for k in 0..11 {
        let dx = T::of(k as f64 - 5.0);
        xs.push(dx);
        us.push(field.total_energy_ev(voltages, Vec3::new(min.x + dx, min.y, min.z)));
    }
    let c = polyfit(&xs, &us, 2);
    let k2 = c[2];
    if !(k2 > T::zero()) {
        return Err(DynamicsError::NoFinalWell { x_um: near_x.to_f64().unwrap_or(f64::NAN) });
    }
    // Anharmonicity check: rms fit residual against the well depth scale.
    let mut resid = T::zero();
    let mut scale = T::zero();
    for (x, u) in xs.iter().zip(&us) {
        let model = c[0] + c[1] * *x + c[2] * *x * *x;
        resid += (model - *u) * (model - *u);
        scale = scale.max((*u - c[0]).abs());
    }
    let resid = (resid / T::of_usize(xs.len())).sqrt();
    if resid > T::of(0.05) * scale.max(T::min_positive_value()) {
        return Err(DynamicsError::NonHarmonicWell {
            resid: (resid / scale).to_f64().unwrap_or(f64::NAN),
        });
    }
    let x_min = min.x - c[1] / (T::of(2.0) * k2);
    let dx = r.x - x_min;
    let ke = T::of(0.5) * field.ion.mass_amu * v.x * v.x / e_over_u::<T>();
    let energy = ke + k2 * dx * dx;
    let omega = (e_over_u::<T>() * T::of(2.0) * k2 / field.ion.mass_amu).sqrt(); // rad/us
    Ok((energy, omega))
}

/// Mean axial quantum number for a state in the final well.
pub fn motional_quanta<T: Real>(
    field: &TrapField<T>,
    voltages: &[T],
    r: Vec3<T>,
    v: Vec3<T>,
    near_x: T,
) -> Result<T, DynamicsError> {
    let (energy, omega) = axial_energy_ev(field, voltages, r, v, near_x)?;
    let hbar_omega = hbar_ev_us::<T>() * omega;
    Ok((energy / hbar_omega - T::of(0.5)).max(T::zero()))
}

/// Initial motional state for link runs.
#[derive(Clone, Copy, Debug)]
pub enum InitialState<T> {
    /// At the starting well minimum, at rest.
    Cold,
    /// Thermal velocity spread at the given temperature, seeded.
    Thermal { temperature_k: T, seed: u64 },
}

/// Simulate a full link: play the waveform (ideal or through the chain),
/// integrate the ion and report transport metrics.
pub fn simulate_link<T: Real>(
    field: &TrapField<T>,
    w: &TransportWaveform<T>,
    chain: Option<&SignalChain<T>>,
    cfg: &IntegratorConfig<T>,
    init: InitialState<T>,
) -> Result<(TransportReport<T>, Trajectory<T>), DynamicsError>
where
    StandardNormal: Distribution<T>,
{
    cfg.validate(&field.drive)?;
    let start = w.solutions[0].position_um;
    let target = w.solutions.last().unwrap().position_um;
    // The link destination is a zone marker: whichever of the two link
    // endpoints lies farther from the starting well. A truncated waveform
    // ends short of it and is flagged below.
    let zones = &field.layout.zones;
    let dest = if (start - zones.zone1).abs() < (start - zones.zone2).abs() {
        zones.zone2
    } else {
        zones.zone1
    };

    // Rendered drive, if a chain applies.
    let rendered = match chain {
        Some(chain) => {
            let os = ((T::of(55.0) * chain.max_cutoff_hz() * w.dwell_us * T::of(1e-6))
                .ceil()
                .to_f64()
                .unwrap_or(64.0) as usize)
                .max(16);
            let sig = render_dac(w, &chain.dac, os, chain.settle_tail_us())?;
            Some(apply_chain(&sig, chain)?)
        }
        None => None,
    };

    let mut sys = match &rendered {
        Some(sig) => TrapSystem::filtered(field, sig, cfg.mode)?,
        None => TrapSystem::ideal(field, w, cfg.ideal_interp, cfg.mode)?,
    };

    // Initial condition: the true potential minimum of the first solution.
    let v0_full = w.full_voltages(field, 0);
    let seed = null_at(field, start, Vec3::new(start, T::zero(), two_rail_null_height(field)))?;
    let r0 = find_total_minimum(field, &v0_full, Vec3::new(seed.x, seed.y, seed.z))
        .map_err(|_| DynamicsError::NoFinalWell { x_um: start.to_f64().unwrap_or(f64::NAN) })?;
    let v0 = match init {
        InitialState::Cold => Vec3::zero(),
        InitialState::Thermal { temperature_k, seed } => {
            let sigma =
                (e_over_u::<T>() * boltzmann_ev_per_k::<T>() * temperature_k / field.ion.mass_amu)
                    .sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = || -> T {
                let g: T = rng.sample(StandardNormal);
                g * sigma
            };
            Vec3::new(draw(), draw(), draw())
        }
    };

    let duration = w.duration_us();
    let settle = match chain {
        Some(chain) => chain.settle_tail_us(),
        None => w.dwell_us * T::of(2.0),
    };
    let traj = integrate(&mut sys, r0, v0, duration + settle, cfg);

    // Metrics against the final well.
    let vn_full = w.full_voltages(field, w.solutions.len() - 1);
    let (r_end, v_end) = traj.last_state();
    let escaped = traj.escaped_at_us;

    let final_min = find_total_minimum(
        field,
        &vn_full,
        Vec3::new(target, sys.null_y, sys.null_z),
    );
    let (final_axial_energy, final_quanta, final_axial_hz, reached_target) = match (&final_min, escaped) {
        (Ok(min), None) => {
            let (e, omega) = axial_energy_ev(field, &vn_full, r_end, v_end, target)?;
            let hbar_omega = hbar_ev_us::<T>() * omega;
            let quanta = (e / hbar_omega - T::of(0.5)).max(T::zero());
            let hz = omega / (T::of(2.0) * T::PI()) * T::of(1e6);
            // The well must sit at the target; the ion counts as delivered
            // if its axial swing keeps it inside the driven-electrode span
            // (a hot but bound ion still arrives).
            let k2 = field.ion.mass_amu * omega * omega
                / (T::of(2.0) * e_over_u::<T>());
            let amplitude = (e / k2).sqrt();
            let captured = (min.x - dest).abs() < T::one() && amplitude < T::of(300.0);
            (e, quanta, hz, captured)
        }
        _ => (T::zero(), T::zero(), T::zero(), false),
    };

    // Total secular energy in the final well frame, for the success flag.
    let well_floor = final_min
        .as_ref()
        .map(|m| field.total_energy_ev(&vn_full, *m))
        .unwrap_or(T::zero());
    let final_total_energy = sys.kinetic_ev(v_end)
        + field.total_energy_ev(&vn_full, r_end)
        - well_floor;
    let success = escaped.is_none() && final_total_energy < sys.depth_ev;

    let mut max_excursion = T::zero();
    for p in &traj.pos_um {
        let dy = p.y - sys.null_y;
        let dz = p.z - sys.null_z;
        max_excursion = max_excursion.max((dy * dy + dz * dz).sqrt());
    }

    let distance = (target - start).abs();
    let report = TransportReport {
        success,
        reached_target,
        duration_us: duration,
        distance_um: distance,
        mean_speed_mps: distance / duration,
        final_axial_energy_mev: final_axial_energy * T::of(1e3),
        final_quanta,
        final_axial_hz,
        max_excursion_um: max_excursion,
        escaped_at_us: escaped,
    };
    Ok((report, traj))
}

/// Everything needed to rebuild and run a link from scratch; the sweep
/// driver clones and perturbs this.
#[derive(Clone, Debug)]
pub struct LinkScenario<T> {
    pub layout_params: LayoutParams<T>,
    pub drive: crate::trap::field::RfDrive<T>,
    pub ion: crate::trap::field::IonSpecies<T>,
    pub synthesis: SynthesisConfig<T>,
    pub shape: WellShape<T>,
    pub chain: Option<SignalChain<T>>,
    pub integrator: IntegratorConfig<T>,
    pub init: InitialState<T>,
    /// Pre-distortion regularization; `None` plays the waveform as-is.
    pub predistort_reg: Option<T>,
}

impl<T: Real> LinkScenario<T>
where
    StandardNormal: Distribution<T>,
{
    /// Build the layout, synthesize the waveform and run one link.
    pub fn run(&self) -> Result<TransportReport<T>, DynamicsError> {
        execute_scenario(self, None)
    }
}

/// Swept parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParameter {
    /// Total link duration (us), realized by scaling the dwell.
    DurationUs,
    /// Inter-module gap (um); the waveform is re-synthesized.
    GapXUm,
    /// Transverse module-B misalignment (um); re-synthesized.
    MisalignYUm,
    /// Pre-distortion regularization; non-positive values disable it.
    PredistortReg,
}

/// One sweep row: the parameter value and the outcome (or error text).
#[derive(Clone, Debug)]
pub struct SweepRow<T> {
    pub value: T,
    pub report: Result<TransportReport<T>, String>,
}

/// Run one report per grid value; row failures are recorded and the sweep
/// continues.
pub fn sweep<T: Real>(
    scenario: &LinkScenario<T>,
    param: SweepParameter,
    grid: &[T],
) -> Result<Vec<SweepRow<T>>, DynamicsError>
where
    StandardNormal: Distribution<T>,
{
    if grid.is_empty() {
        return Err(DynamicsError::EmptyGrid);
    }
    let rows: Vec<SweepRow<T>> = grid
        .par_iter()
        .map(|&value| SweepRow {
            value,
            report: run_scenario(scenario, param, value).map_err(|e| e.to_string()),
        })
        .collect();
    Ok(rows)
}

fn run_scenario<T: Real>(
    base: &LinkScenario<T>,
    param: SweepParameter,
    value: T,
) -> Result<TransportReport<T>, DynamicsError>
where
    StandardNormal: Distribution<T>,
{
    let mut sc = base.clone();
    let mut duration = None;
    match param {
        SweepParameter::GapXUm => sc.layout_params.gap_x = value,
        SweepParameter::MisalignYUm => sc.layout_params.misalign_y = value,
        SweepParameter::PredistortReg => {
            sc.predistort_reg = if value > T::zero() { Some(value) } else { None }
        }
        SweepParameter::DurationUs => duration = Some(value),
    }
    execute_scenario(&sc, duration)
}

fn execute_scenario<T: Real>(
    sc: &LinkScenario<T>,
    duration_us: Option<T>,
) -> Result<TransportReport<T>, DynamicsError>
where
    StandardNormal: Distribution<T>,
{
    let layout = build_two_module_layout(&sc.layout_params).map_err(|e| {
        DynamicsError::Waveform(crate::waveform::WaveformError::Config(e.to_string()))
    })?;
    let field = TrapField::new(layout, sc.drive, sc.ion);
    let basis = TrapBasis::new(&field, &sc.synthesis)?;
    let raw = synthesize_raw(
        &basis,
        field.layout.zones.zone1,
        field.layout.zones.zone2,
        sc.shape,
        &sc.synthesis,
    )?;
    let smoothed = smooth(&raw, &sc.synthesis)?;
    let mut w = downsample(&smoothed, &sc.synthesis)?;
    if let Some(d) = duration_us {
        w.dwell_us = d / T::of_usize(w.len() - 1);
    }
    let w = match (sc.predistort_reg, &sc.chain) {
        (Some(reg), Some(chain)) => crate::signal::predistort(&w, chain, reg)?.waveform,
        _ => w,
    };
    let (report, _) = simulate_link(&field, &w, sc.chain.as_ref(), &sc.integrator, sc.init)?;
    Ok(report)
}
