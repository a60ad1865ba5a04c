//! Exact zero-order-hold integration of the filter stages.
//!
//! Each stage decomposes into first-order sections and (for the
//! Butterworth) one underdamped second-order section. Every section is
//! discretized with the exact matrix exponential of its state space, so a
//! staircase input is propagated without integration error; cascading
//! introduces only the sample-and-hold error between sections, far below
//! the test tolerances at the default oversampling.
//!
//! Sample convention: output sample `n` is the section state at `t = n dt`
//! (the sample emitted before consuming input `n`), so transients compare
//! directly against continuous-time formulas.

use num_complex::Complex;

use crate::real::Real;
use crate::signal::{FilterStage, StageKind};

#[derive(Clone, Copy, Debug)]
pub(crate) struct FirstOrder<T> {
    /// Pole magnitude (rad/us).
    a: T,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct SecondOrder<T> {
    wn: T,
    zeta: T,
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Section<T> {
    First(FirstOrder<T>),
    Second(SecondOrder<T>),
}

impl<T: Real> Section<T> {
    /// Longest time constant (us), used for settling-tail sizing.
    pub(crate) fn time_constant_us(&self) -> T {
        match self {
            Section::First(s) => T::one() / s.a,
            Section::Second(s) => T::one() / (s.zeta * s.wn),
        }
    }

    /// Frequency response at `f_hz`.
    pub(crate) fn response(&self, f_hz: T) -> Complex<T> {
        let omega = T::of(2.0) * T::PI() * f_hz * T::of(1e-6); // rad/us
        match self {
            Section::First(s) => {
                let den = Complex::new(s.a, omega);
                Complex::new(s.a, T::zero()) / den
            }
            Section::Second(s) => {
                let wn2 = s.wn * s.wn;
                let den = Complex::new(wn2 - omega * omega, T::of(2.0) * s.zeta * s.wn * omega);
                Complex::new(wn2, T::zero()) / den
            }
        }
    }
}

/// Discretized section with state, stepping one sample per call.
#[derive(Clone, Copy, Debug)]
pub(crate) enum SectionState<T> {
    First { e: T, x: T },
    Second { a00: T, a01: T, a10: T, a11: T, b0: T, b1: T, x0: T, x1: T },
}

impl<T: Real> SectionState<T> {
    pub(crate) fn new(section: Section<T>, dt_us: T) -> Self {
        match section {
            Section::First(s) => SectionState::First { e: (-s.a * dt_us).exp(), x: T::zero() },
            Section::Second(s) => {
                let sigma = s.zeta * s.wn;
                let wd = s.wn * (T::one() - s.zeta * s.zeta).sqrt();
                let (swd, cwd) = (wd * dt_us).sin_cos();
                let es = (-sigma * dt_us).exp();
                let a00 = es * (cwd + sigma / wd * swd);
                let a01 = es * (swd / wd);
                let a10 = es * (-(s.wn * s.wn) / wd * swd);
                let a11 = es * (cwd - sigma / wd * swd);
                // B_d = A^-1 (A_d - I) B for B = [0, wn^2]^T.
                let b0 = -(T::of(2.0) * s.zeta * s.wn) * a01 - a11 + T::one();
                let b1 = s.wn * s.wn * a01;
                SectionState::Second {
                    a00,
                    a01,
                    a10,
                    a11,
                    b0,
                    b1,
                    x0: T::zero(),
                    x1: T::zero(),
                }
            }
        }
    }

    /// Emit the current output, then advance by one held input sample.
    #[inline]
    pub(crate) fn step(&mut self, u: T) -> T {
        match self {
            SectionState::First { e, x } => {
                let out = *x;
                *x = *e * *x + (T::one() - *e) * u;
                out
            }
            SectionState::Second { a00, a01, a10, a11, b0, b1, x0, x1 } => {
                let out = *x0;
                let nx0 = *a00 * *x0 + *a01 * *x1 + *b0 * u;
                let nx1 = *a10 * *x0 + *a11 * *x1 + *b1 * u;
                *x0 = nx0;
                *x1 = nx1;
                out
            }
        }
    }
}

/// Sections realizing a stage.
pub(crate) fn stage_sections<T: Real>(stage: &FilterStage<T>) -> Vec<Section<T>> {
    let wc = T::of(2.0) * T::PI() * stage.cutoff_hz * T::of(1e-6);
    match stage.kind {
        StageKind::Butterworth3 => vec![
            Section::First(FirstOrder { a: wc }),
            Section::Second(SecondOrder { wn: wc, zeta: T::of(0.5) }),
        ],
        StageKind::Rc2 => {
            // Two identical buffered RC sections; the quoted cutoff is the
            // stage's overall -3 dB point, so each section corner sits at
            // wc / sqrt(sqrt(2) - 1).
            let a = wc / (T::SQRT_2() - T::one()).sqrt();
            vec![
                Section::First(FirstOrder { a }),
                Section::First(FirstOrder { a }),
            ]
        }
        StageKind::Rc1 => vec![Section::First(FirstOrder { a: wc })],
    }
}

/// Filter one uniformly sampled channel through one stage.
pub(crate) fn run_stage<T: Real>(stage: &FilterStage<T>, dt_us: T, data: &mut [T]) {
    for section in stage_sections(stage) {
        let mut state = SectionState::new(section, dt_us);
        for v in data.iter_mut() {
            *v = state.step(*v);
        }
    }
}

/// Complex response of one stage at `f_hz`.
pub fn stage_response<T: Real>(stage: &FilterStage<T>, f_hz: T) -> Complex<T> {
    stage_sections(stage)
        .into_iter()
        .fold(Complex::new(T::one(), T::zero()), |acc, s| acc * s.response(f_hz))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn first_order_step_matches_closed_form() {
        let stage = FilterStage { kind: StageKind::Rc1, cutoff_hz: 257e3 };
        let a = 2.0 * std::f64::consts::PI * 257e3 * 1e-6;
        let dt = 0.01;
        let mut data = vec![1.0; 200];
        run_stage(&stage, dt, &mut data);
        for (n, &y) in data.iter().enumerate() {
            let expect = 1.0 - (-a * dt * n as f64).exp();
            assert_abs_diff_eq!(y, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn butterworth_magnitude_is_maximally_flat() {
        let stage = FilterStage { kind: StageKind::Butterworth3, cutoff_hz: 75e3 };
        for x in [0.1f64, 0.5, 1.0, 2.0, 4.0] {
            let f = 75e3 * x;
            let h = stage_response(&stage, f);
            let mag2 = h.norm_sqr();
            assert_relative_eq!(mag2, 1.0 / (1.0 + x.powi(6)), max_relative = 1e-9);
        }
    }

    #[test]
    fn rc2_has_its_three_db_point_at_the_quoted_cutoff() {
        let stage = FilterStage { kind: StageKind::Rc2, cutoff_hz: 47e3 };
        let h = stage_response(&stage, 47e3);
        assert_relative_eq!(h.norm(), 1.0 / 2.0f64.sqrt(), max_relative = 1e-9);
    }
}
