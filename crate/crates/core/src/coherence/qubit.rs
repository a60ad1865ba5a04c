//! The hyperfine clock qubit and its magnetic-field dependence.

use crate::real::Real;

/// S1/2 clock transition: first-order field-insensitive, with a quadratic
/// Zeeman shift.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClockQubit<T> {
    /// Zero-field splitting (Hz).
    pub f0_hz: T,
    /// Quadratic coefficient (Hz/G^2).
    pub quad_hz_per_g2: T,
    /// Ambient field at the ion (G).
    pub ambient_b_g: T,
}

impl<T: Real> Default for ClockQubit<T> {
    fn default() -> Self {
        Self {
            f0_hz: T::of(12_642_812_118.0),
            quad_hz_per_g2: T::of(311.0),
            ambient_b_g: T::of(10.177),
        }
    }
}

impl<T: Real> ClockQubit<T> {
    /// Transition frequency at field `b_g` (Hz).
    pub fn frequency_hz(&self, b_g: T) -> T {
        self.f0_hz + self.quad_hz_per_g2 * b_g * b_g
    }

    /// Local slope df/dB (Hz/G).
    pub fn slope_hz_per_g(&self, b_g: T) -> T {
        T::of(2.0) * self.quad_hz_per_g2 * b_g
    }

    /// Default local-oscillator frequency: on resonance at the ambient field.
    pub fn reference_hz(&self) -> T {
        self.frequency_hz(self.ambient_b_g)
    }
}
