//! Run configuration: one TOML document with explicit unit suffixes on
//! every physical quantity and strict unknown-key rejection.

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use matterlink_core::coherence::{ClockQubit, FieldNoiseModel, RamseySequence, SchedulePlacement};
use matterlink_core::dynamics::{IntegratorConfig, InterpMode, RfMode};
use matterlink_core::linkrate::{MatterLinkParams, PhotonicParams};
use matterlink_core::signal::{DacModel, FilterStage, SignalChain, StageKind};
use matterlink_core::trap::{IonSpecies, LayoutParams, RfDrive};
use matterlink_core::waveform::SynthesisConfig;

fn default_seed() -> u64 {
    20260810
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub layout: LayoutSection,
    #[serde(default)]
    pub drive: DriveSection,
    #[serde(default)]
    pub ion: IonSection,
    #[serde(default)]
    pub synthesis: SynthesisSection,
    #[serde(default)]
    pub signal: SignalSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub qubit: QubitSection,
    #[serde(default)]
    pub ramsey: RamseySection,
    #[serde(default)]
    pub photonic: PhotonicSection,
    #[serde(default)]
    pub matterlink: MatterLinkSection,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutSection {
    pub dc_pairs_per_module: usize,
    pub dc_width_um: f64,
    pub dc_pitch_um: f64,
    pub dc_breadth_um: f64,
    pub rf_width_um: f64,
    pub rf_separation_um: f64,
    pub rf_dc_clearance_um: f64,
    pub gap_x_um: f64,
    pub misalign_y_um: f64,
    pub misalign_z_um: f64,
    pub transport_pairs: usize,
}

impl Default for LayoutSection {
    fn default() -> Self {
        let p = LayoutParams::<f64>::default();
        Self {
            dc_pairs_per_module: p.dc_pairs_per_module,
            dc_width_um: p.dc_width,
            dc_pitch_um: p.dc_pitch,
            dc_breadth_um: p.dc_breadth,
            rf_width_um: p.rf_width,
            rf_separation_um: p.rf_separation,
            rf_dc_clearance_um: p.rf_dc_clearance,
            gap_x_um: p.gap_x,
            misalign_y_um: p.misalign_y,
            misalign_z_um: p.misalign_z,
            transport_pairs: p.transport_pairs,
        }
    }
}

impl LayoutSection {
    pub fn to_params(&self) -> LayoutParams<f64> {
        LayoutParams {
            dc_pairs_per_module: self.dc_pairs_per_module,
            dc_width: self.dc_width_um,
            dc_pitch: self.dc_pitch_um,
            dc_breadth: self.dc_breadth_um,
            rf_width: self.rf_width_um,
            rf_separation: self.rf_separation_um,
            rf_dc_clearance: self.rf_dc_clearance_um,
            gap_x: self.gap_x_um,
            misalign_y: self.misalign_y_um,
            misalign_z: self.misalign_z_um,
            transport_pairs: self.transport_pairs,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveSection {
    pub amplitude_v: f64,
    pub frequency_mhz: f64,
    pub phase_mismatch_urad: f64,
    pub amplitude_mismatch_mv: f64,
}

impl Default for DriveSection {
    fn default() -> Self {
        Self {
            amplitude_v: 101.75,
            frequency_mhz: 19.32,
            phase_mismatch_urad: 0.0,
            amplitude_mismatch_mv: 0.0,
        }
    }
}

impl DriveSection {
    pub fn to_drive(&self) -> RfDrive<f64> {
        let mut d = RfDrive::new(self.amplitude_v, self.frequency_mhz * 1e6);
        d.phase_mismatch_rad = self.phase_mismatch_urad * 1e-6;
        d.amplitude_mismatch_v = self.amplitude_mismatch_mv * 1e-3;
        d
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IonSection {
    pub species: String,
}

impl Default for IonSection {
    fn default() -> Self {
        Self { species: "yb174".into() }
    }
}

impl IonSection {
    pub fn to_ion(&self) -> Result<IonSpecies<f64>> {
        match self.species.as_str() {
            "yb171" => Ok(IonSpecies::yb171()),
            "yb174" => Ok(IonSpecies::yb174()),
            other => bail!("ion.species: unknown species {other:?} (yb171 or yb174)"),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSection {
    pub p1: f64,
    pub p2: f64,
    pub voltage_bound_v: f64,
    pub step_raw_um: f64,
    pub step_transport_um: f64,
    pub sg_window: usize,
    pub sg_order: usize,
    pub dwell_us: f64,
    pub axial_frequency_khz: f64,
    pub warm_start: bool,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        let c = SynthesisConfig::<f64>::default();
        Self {
            p1: c.p1,
            p2: c.p2,
            voltage_bound_v: c.voltage_bound_v,
            step_raw_um: c.step_raw_um,
            step_transport_um: c.step_transport_um,
            sg_window: c.sg_window,
            sg_order: c.sg_order,
            dwell_us: c.dwell_us,
            axial_frequency_khz: 141.0,
            warm_start: c.warm_start,
        }
    }
}

impl SynthesisSection {
    pub fn to_config(&self) -> SynthesisConfig<f64> {
        SynthesisConfig {
            p1: self.p1,
            p2: self.p2,
            voltage_bound_v: self.voltage_bound_v,
            active_electrodes: None,
            step_raw_um: self.step_raw_um,
            step_transport_um: self.step_transport_um,
            sg_window: self.sg_window,
            sg_order: self.sg_order,
            dwell_us: self.dwell_us,
            warm_start: self.warm_start,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    pub kind: String,
    pub cutoff_khz: f64,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalSection {
    pub dac_update_rate_khz: f64,
    pub dac_range_v: f64,
    pub quantization_bits: Option<u8>,
    pub oversample: usize,
    pub stages: Vec<StageSection>,
}

impl Default for SignalSection {
    fn default() -> Self {
        Self {
            dac_update_rate_khz: 139.0,
            dac_range_v: 10.0,
            quantization_bits: None,
            oversample: 128,
            stages: vec![
                StageSection { kind: "butterworth3".into(), cutoff_khz: 75.0 },
                StageSection { kind: "rc2".into(), cutoff_khz: 47.0 },
                StageSection { kind: "rc1".into(), cutoff_khz: 257.0 },
            ],
        }
    }
}

impl SignalSection {
    pub fn to_chain(&self) -> Result<SignalChain<f64>> {
        let mut stages = Vec::new();
        for s in &self.stages {
            let kind = match s.kind.as_str() {
                "butterworth3" => StageKind::Butterworth3,
                "rc2" => StageKind::Rc2,
                "rc1" => StageKind::Rc1,
                other => bail!("signal.stages.kind: unknown stage {other:?}"),
            };
            stages.push(FilterStage { kind, cutoff_hz: s.cutoff_khz * 1e3 });
        }
        Ok(SignalChain {
            dac: DacModel {
                update_rate_hz: self.dac_update_rate_khz * 1e3,
                voltage_range_v: self.dac_range_v,
                quantization_bits: self.quantization_bits,
            },
            stages,
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub mode: String,
    pub step_us: f64,
    pub record_stride: usize,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self { mode: "secular".into(), step_us: 0.02, record_stride: 8 }
    }
}

impl IntegratorSection {
    pub fn to_config(&self) -> Result<IntegratorConfig<f64>> {
        let mode = match self.mode.as_str() {
            "secular" => RfMode::Secular,
            "full-rf" => RfMode::FullRf,
            other => bail!("integrator.mode: unknown mode {other:?} (secular or full-rf)"),
        };
        Ok(IntegratorConfig {
            mode,
            step_us: self.step_us,
            record_stride: self.record_stride,
            ideal_interp: InterpMode::Staircase,
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QubitSection {
    pub f0_hz: f64,
    pub quadratic_hz_per_g2: f64,
    pub ambient_field_gauss: f64,
}

impl Default for QubitSection {
    fn default() -> Self {
        let q = ClockQubit::<f64>::default();
        Self {
            f0_hz: q.f0_hz,
            quadratic_hz_per_g2: q.quad_hz_per_g2,
            ambient_field_gauss: q.ambient_b_g,
        }
    }
}

impl QubitSection {
    pub fn to_qubit(&self) -> ClockQubit<f64> {
        ClockQubit {
            f0_hz: self.f0_hz,
            quad_hz_per_g2: self.quadratic_hz_per_g2,
            ambient_b_g: self.ambient_field_gauss,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RamseySection {
    pub cool_us: f64,
    pub pump_us: f64,
    pub tau_ms: Vec<f64>,
    pub links: u32,
    pub link_time_us: f64,
    pub phase_points: usize,
    pub shots: usize,
    /// Quasi-static field spread; omitted means calibrated so the
    /// stationary coherence time is `t2_target_ms`.
    pub sigma_b_gauss: Option<f64>,
    pub t2_target_ms: f64,
    pub drift_gauss_per_s: f64,
    pub detection_error: f64,
    pub placement: String,
    pub lo_detuning_hz: f64,
}

impl Default for RamseySection {
    fn default() -> Self {
        Self {
            cool_us: 50_000.0,
            pump_us: 10.0,
            tau_ms: vec![5.0, 100.0, 200.0, 300.0, 400.0, 500.0],
            links: 0,
            link_time_us: 800.0,
            phase_points: 16,
            shots: 100,
            sigma_b_gauss: None,
            t2_target_ms: 560.0,
            drift_gauss_per_s: 0.0,
            detection_error: 0.0,
            placement: "start".into(),
            lo_detuning_hz: 0.0,
        }
    }
}

impl RamseySection {
    pub fn placement(&self) -> Result<SchedulePlacement> {
        match self.placement.as_str() {
            "start" => Ok(SchedulePlacement::Start),
            "even" => Ok(SchedulePlacement::Even),
            other => bail!("ramsey.placement: unknown placement {other:?} (start or even)"),
        }
    }

    pub fn to_noise(&self, qubit: &ClockQubit<f64>) -> FieldNoiseModel<f64> {
        let mut noise = match self.sigma_b_gauss {
            Some(sigma) => FieldNoiseModel { sigma_b_g: sigma, drift_g_per_s: 0.0, spatial: None },
            None => FieldNoiseModel::calibrated_for_t2(qubit, self.t2_target_ms),
        };
        noise.drift_g_per_s = self.drift_gauss_per_s;
        noise
    }

    pub fn to_sequence(&self, tau_ms: f64) -> Result<RamseySequence<f64>> {
        let mut seq = RamseySequence::stationary(tau_ms, self.phase_points);
        seq.cool_us = self.cool_us;
        seq.pump_us = self.pump_us;
        seq.links = self.links;
        seq.link_time_us = self.link_time_us;
        seq.placement = self.placement()?;
        seq.lo_detuning_hz = self.lo_detuning_hz;
        seq.detection_error = self.detection_error;
        Ok(seq)
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhotonicSection {
    pub raw_rate_hz: f64,
    pub conversion_efficiency: f64,
    pub switch_loss_db: f64,
    pub raw_fidelity: f64,
    pub target_fidelity: f64,
    pub distillation_factor: f64,
}

impl Default for PhotonicSection {
    fn default() -> Self {
        let p = PhotonicParams::<f64>::default();
        Self {
            raw_rate_hz: p.raw_rate_hz,
            conversion_efficiency: p.conversion_efficiency,
            switch_loss_db: p.switch_loss_db,
            raw_fidelity: p.raw_fidelity,
            target_fidelity: p.target_fidelity,
            distillation_factor: p.distillation_factor,
        }
    }
}

impl PhotonicSection {
    pub fn to_params(&self) -> PhotonicParams<f64> {
        PhotonicParams {
            raw_rate_hz: self.raw_rate_hz,
            conversion_efficiency: self.conversion_efficiency,
            switch_loss_db: self.switch_loss_db,
            raw_fidelity: self.raw_fidelity,
            target_fidelity: self.target_fidelity,
            distillation_factor: self.distillation_factor,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatterLinkSection {
    pub link_duration_us: f64,
    pub loss_bound: f64,
    pub coherence_bound: f64,
}

impl Default for MatterLinkSection {
    fn default() -> Self {
        let m = MatterLinkParams::<f64>::default();
        Self {
            link_duration_us: m.link_duration_us,
            loss_bound: m.loss_infidelity_bound,
            coherence_bound: m.coherence_infidelity_bound,
        }
    }
}

impl MatterLinkSection {
    pub fn to_params(&self) -> MatterLinkParams<f64> {
        MatterLinkParams {
            link_duration_us: self.link_duration_us,
            loss_infidelity_bound: self.loss_bound,
            coherence_infidelity_bound: self.coherence_bound,
        }
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        Ok((cfg, text))
    }

    pub fn defaults() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }

    /// Aggregate every module's invariant checks; empty means valid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut synth = self.synthesis.to_config();
        synth.dwell_us = self.synthesis.dwell_us;
        for d in synth.validate() {
            out.push(d);
        }
        if self.synthesis.axial_frequency_khz <= 0.0 {
            out.push("synthesis.axial_frequency_khz must be positive".into());
        }
        if let Err(e) = self.ion.to_ion() {
            out.push(e.to_string());
        }
        let drive = self.drive.to_drive();
        if let Err(e) = drive.validate() {
            out.push(format!("drive: {e}"));
        }
        match self.signal.to_chain() {
            Ok(chain) => {
                let rate = self.signal.oversample as f64 / self.synthesis.dwell_us * 1e6;
                if rate < 50.0 * chain.max_cutoff_hz() {
                    out.push(format!(
                        "signal.oversample: sampling {rate:.3e} Hz is below 50x the highest cutoff"
                    ));
                }
            }
            Err(e) => out.push(e.to_string()),
        }
        if let Err(e) = self.integrator.to_config() {
            out.push(e.to_string());
        } else if let Ok(ic) = self.integrator.to_config() {
            if let Err(e) = ic.validate(&drive) {
                out.push(format!("integrator: {e}"));
            }
        }
        for &tau in &self.ramsey.tau_ms {
            if self.ramsey.links as f64 * self.ramsey.link_time_us >= tau * 1e3 {
                out.push(format!(
                    "ramsey: links x link_time_us must stay below tau ({} x {} us >= {} ms)",
                    self.ramsey.links, self.ramsey.link_time_us, tau
                ));
            }
        }
        if self.ramsey.phase_points < 5 {
            out.push("ramsey.phase_points must be at least 5".into());
        }
        if self.ramsey.shots == 0 {
            out.push("ramsey.shots must be at least 1".into());
        }
        if let Err(e) = self.ramsey.placement() {
            out.push(e.to_string());
        }
        for d in self.photonic.to_params().validate() {
            out.push(d);
        }
        if self.matterlink.link_duration_us <= 0.0 {
            out.push("matterlink.link_duration_us must be positive".into());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_valid_defaults() {
        let cfg = RunConfig::defaults();
        assert!(cfg.validate().is_empty(), "{:?}", cfg.validate());
        assert_eq!(cfg.seed, 20260810);
        assert_eq!(cfg.layout.dc_pairs_per_module, 12);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let r: Result<RunConfig, _> = toml::from_str("[layout]\nnonsense_um = 3.0\n");
        assert!(r.is_err());
    }

    #[test]
    fn even_sg_window_is_diagnosed_with_its_field() {
        let cfg: RunConfig = toml::from_str("[synthesis]\nsg_window = 24\n").unwrap();
        let diags = cfg.validate();
        assert!(diags.iter().any(|d| d.contains("sg_window")), "{diags:?}");
    }

    #[test]
    fn ramsey_link_budget_is_diagnosed() {
        let cfg: RunConfig =
            toml::from_str("[ramsey]\nlinks = 100\ntau_ms = [50.0]\n").unwrap();
        let diags = cfg.validate();
        assert!(diags.iter().any(|d| d.contains("links x link_time_us")), "{diags:?}");
    }
}
