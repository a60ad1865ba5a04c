//! Physical constants in the internal unit system.
//!
//! Internal units are micrometres, microseconds, volts, atomic mass units
//! and elementary charges. Handy coincidences of this system:
//!
//! * 1 um/us = 1 m/s, so velocities read directly in m/s.
//! * potential energy `U` in eV is `charge_e * potential_volts`.
//! * acceleration in um/us^2 is `-(E_OVER_U / mass_amu) * dU/dx` with
//!   `dU/dx` in eV/um.
//! * a curvature `k` of `U` in eV/um^2 gives an angular frequency
//!   `omega = sqrt(E_OVER_U * k / mass_amu)` in rad/us.
//!
//! Interfaces report energies in meV and frequencies in Hz.

use crate::real::Real;

/// Elementary charge over atomic mass unit, C/kg.
pub const E_OVER_U_F64: f64 = 9.648533212331003e7;

/// (Planck constant / 2 pi) in eV us.
pub const HBAR_EV_US_F64: f64 = 6.582119569e-10;

/// Boltzmann constant in eV/K.
pub const BOLTZMANN_EV_PER_K_F64: f64 = 8.617333262e-5;

#[inline]
pub fn e_over_u<T: Real>() -> T {
    T::of(E_OVER_U_F64)
}

#[inline]
pub fn hbar_ev_us<T: Real>() -> T {
    T::of(HBAR_EV_US_F64)
}

#[inline]
pub fn boltzmann_ev_per_k<T: Real>() -> T {
    T::of(BOLTZMANN_EV_PER_K_F64)
}

/// Angular frequency (rad/us) of a harmonic energy curvature `k` (eV/um^2)
/// for a mass in amu.
#[inline]
pub fn omega_from_curvature<T: Real>(k_ev_per_um2: T, mass_amu: T) -> T {
    (e_over_u::<T>() * k_ev_per_um2 / mass_amu).max(T::zero()).sqrt()
}

/// Energy curvature (eV/um^2) that produces a given secular frequency (Hz).
#[inline]
pub fn curvature_from_frequency<T: Real>(freq_hz: T, mass_amu: T) -> T {
    let omega = T::of(2.0) * T::PI() * freq_hz * T::of(1e-6); // rad/us
    mass_amu * omega * omega / e_over_u::<T>()
}
