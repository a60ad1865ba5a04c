//! Desk-scale model of an ion-qubit link between two surface-trap modules.
//!
//! The crate covers the full chain from electrode geometry to qubit
//! figures of merit:
//!
//! * [`trap`] — two-module electrode layout, analytic gapless-plane
//!   electrostatics, RF pseudopotential, trap depth and secular modes.
//! * [`waveform`] — constrained least-squares synthesis of inter-module
//!   transport waveforms, smoothing and down-sampling.
//! * [`signal`] — DAC zero-order-hold model and the low-pass filter chain
//!   between the DACs and the electrodes, plus pre-distortion.
//! * [`dynamics`] — classical ion motion under the time-varying potentials,
//!   transport metrics and loss bounds.
//! * [`coherence`] — Ramsey simulation of the hyperfine clock qubit with
//!   magnetic-field noise, fringe/contrast/T2* fitting.
//! * [`linkrate`] — staged effective-rate model for photonic interconnects
//!   compared against the transport link rate.
//!
//! All numerics are generic over the scalar type via [`real::Real`];
//! the `*64` aliases below pin the common `f64` instantiations.

pub mod coherence;
pub mod constants;
pub mod dynamics;
pub mod geom;
pub mod io;
pub mod linalg;
pub mod linkrate;
pub mod real;
pub mod signal;
pub mod trap;
pub mod waveform;

pub use real::Real;

/// f64 instantiations of the core types.
pub type Vec3_64 = geom::Vec3<f64>;
pub type TrapLayout64 = trap::TrapLayout<f64>;
pub type LayoutParams64 = trap::LayoutParams<f64>;
pub type RfDrive64 = trap::RfDrive<f64>;
pub type IonSpecies64 = trap::IonSpecies<f64>;
pub type TrapField64 = trap::TrapField<f64>;
pub type SynthesisConfig64 = waveform::SynthesisConfig<f64>;
pub type SignalChain64 = signal::SignalChain<f64>;
pub type IntegratorConfig64 = dynamics::IntegratorConfig<f64>;
pub type ClockQubit64 = coherence::ClockQubit<f64>;
pub type RamseySequence64 = coherence::RamseySequence<f64>;
pub type FieldNoiseModel64 = coherence::FieldNoiseModel<f64>;
pub type PhotonicParams64 = linkrate::PhotonicParams<f64>;
pub type MatterLinkParams64 = linkrate::MatterLinkParams<f64>;
pub type TransportWaveform64 = waveform::TransportWaveform<f64>;
