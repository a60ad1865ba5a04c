//! Effective-rate model for photonic interconnects against the transport
//! link rate.

use crate::real::Real;

/// Photonic-interconnect parameters: raw heralded-entanglement rate and the
/// per-stage penalties toward a fault-tolerant-grade link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhotonicParams<T> {
    pub raw_rate_hz: T,
    pub conversion_efficiency: T,
    pub switch_loss_db: T,
    pub raw_fidelity: T,
    pub target_fidelity: T,
    pub distillation_factor: T,
}

impl<T: Real> Default for PhotonicParams<T> {
    fn default() -> Self {
        Self {
            raw_rate_hz: T::of(182.0),
            conversion_efficiency: T::of(0.09),
            switch_loss_db: T::of(2.1),
            raw_fidelity: T::of(0.94),
            target_fidelity: T::of(0.997),
            distillation_factor: T::of(6.0),
        }
    }
}

impl<T: Real> PhotonicParams<T> {
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("photonic.conversion_efficiency", self.conversion_efficiency),
            ("photonic.raw_fidelity", self.raw_fidelity),
            ("photonic.target_fidelity", self.target_fidelity),
        ] {
            if !(v > T::zero() && v <= T::one()) {
                out.push(format!("{name} must be in (0, 1]"));
            }
        }
        if self.switch_loss_db < T::zero() {
            out.push("photonic.switch_loss_db must be non-negative".into());
        }
        if self.distillation_factor < T::one() {
            out.push("photonic.distillation_factor must be at least 1".into());
        }
        if !(self.raw_rate_hz > T::zero()) {
            out.push("photonic.raw_rate_hz must be positive".into());
        }
        out
    }
}

/// Transport-link figures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatterLinkParams<T> {
    pub link_duration_us: T,
    pub loss_infidelity_bound: T,
    pub coherence_infidelity_bound: T,
}

impl<T: Real> Default for MatterLinkParams<T> {
    fn default() -> Self {
        Self {
            link_duration_us: T::of(412.5),
            loss_infidelity_bound: T::of(7e-8),
            coherence_infidelity_bound: T::of(5e-4),
        }
    }
}

/// Photonic rate after each stage of the chain.
#[derive(Clone, Copy, Debug)]
pub struct StagedRates<T> {
    pub raw_hz: T,
    /// After wavelength conversion.
    pub converted_hz: T,
    /// After switch losses.
    pub switched_hz: T,
    /// After entanglement distillation.
    pub distilled_hz: T,
}

/// Staged effective rate: conversion efficiency, dB switch loss, then the
/// distillation factor.
pub fn effective_photonic_rate<T: Real>(p: &PhotonicParams<T>) -> StagedRates<T> {
    let raw = p.raw_rate_hz;
    let converted = p.conversion_efficiency * raw;
    let ten = T::of(10.0);
    let switched = converted * ten.powf(-p.switch_loss_db / ten);
    let distilled = switched / p.distillation_factor;
    StagedRates { raw_hz: raw, converted_hz: converted, switched_hz: switched, distilled_hz: distilled }
}

/// Link repetition rate from the duration.
pub fn matter_link_rate_hz<T: Real>(m: &MatterLinkParams<T>) -> T {
    T::of(1e6) / m.link_duration_us
}

/// Side-by-side comparison of the two interconnects.
#[derive(Clone, Copy, Debug)]
pub struct RateComparison<T> {
    pub staged: StagedRates<T>,
    pub matter_rate_hz: T,
    /// Matter-link rate over distilled photonic rate.
    pub matter_over_distilled: T,
    /// Distilled photonic rate over the raw rate.
    pub distilled_over_raw: T,
    /// Distilled rate has fallen below 1/s, the practicality threshold.
    pub distilled_below_1hz: bool,
}

pub fn compare<T: Real>(p: &PhotonicParams<T>, m: &MatterLinkParams<T>) -> RateComparison<T> {
    let staged = effective_photonic_rate(p);
    let matter = matter_link_rate_hz(m);
    RateComparison {
        staged,
        matter_rate_hz: matter,
        matter_over_distilled: matter / staged.distilled_hz,
        distilled_over_raw: staged.distilled_hz / staged.raw_hz,
        distilled_below_1hz: staged.distilled_hz < T::one(),
    }
}
