//! Ion position schedules during the Ramsey delay and the resulting phase
//! integrals.
//!
//! The accumulated phase is `2 pi * integral of (f(B(x(t), t)) - f_ref) dt`.
//! With a piecewise-linear spatial field and linear drift, B is piecewise
//! linear in time, f is quadratic in B, and every segment integrates in
//! closed form. Shot-independent path moments are precomputed so the
//! Monte Carlo costs O(1) per shot.

use thiserror::Error;

use crate::coherence::qubit::ClockQubit;
use crate::real::Real;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("links do not fit the delay: {links} x {link_us} us >= {tau_us} us")]
    LinksExceedDelay { links: u32, link_us: f64, tau_us: f64 },
    #[error("spatial profile must cover the transport span [{lo} um, {hi} um]")]
    ProfileTooNarrow { lo: f64, hi: f64 },
}

/// Absolute magnetic field vs axial position, piecewise linear between
/// knots and clamped outside.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialProfile<T> {
    /// (x_um, B_gauss), sorted by position.
    pub knots: Vec<(T, T)>,
}

impl<T: Real> SpatialProfile<T> {
    pub fn uniform(b_g: T) -> Self {
        Self { knots: vec![(T::zero(), b_g)] }
    }

    pub fn field_at(&self, x: T) -> T {
        let k = &self.knots;
        if k.is_empty() {
            return T::zero();
        }
        if x <= k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            if x <= w[1].0 {
                let f = (x - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1 + (w[1].1 - w[0].1) * f;
            }
        }
        k.last().unwrap().1
    }

    pub fn covers(&self, lo: T, hi: T) -> bool {
        if self.knots.len() < 2 {
            return true; // constant field covers everything
        }
        self.knots[0].0 <= lo && self.knots.last().unwrap().0 >= hi
    }
}

/// Where the transport links sit inside the delay.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchedulePlacement {
    /// Back-to-back from the start of the delay.
    Start,
    /// Spread evenly across the delay.
    Even,
}

/// One hold-or-move segment of the delay.
#[derive(Clone, Copy, Debug)]
struct Segment<T> {
    t0: T,
    t1: T,
    x0: T,
    x1: T,
}

/// Piecewise-linear ion position over a Ramsey delay with `links`
/// back-and-forth transports between two zones.
#[derive(Clone, Debug)]
pub struct LinkSchedule<T> {
    segments: Vec<Segment<T>>,
    pub tau_us: T,
    pub x_start: T,
}

impl<T: Real> LinkSchedule<T> {
    pub fn new(
        tau_us: T,
        links: u32,
        link_time_us: T,
        placement: SchedulePlacement,
        zone1_um: T,
        zone2_um: T,
    ) -> Result<Self, ScheduleError> {
        let total_links = T::of(links as f64) * link_time_us;
        if total_links >= tau_us {
            return Err(ScheduleError::LinksExceedDelay {
                links,
                link_us: link_time_us.to_f64().unwrap_or(f64::NAN),
                tau_us: tau_us.to_f64().unwrap_or(f64::NAN),
            });
        }
        let mut segments = Vec::new();
        let mut t = T::zero();
        let mut x = zone1_um;
        let idle = tau_us - total_links;
        let n_gaps = links + 1;
        let even_gap = idle / T::of(n_gaps as f64);
        for k in 0..links {
            let hold = match placement {
                SchedulePlacement::Start => T::zero(),
                SchedulePlacement::Even => even_gap,
            };
            if hold > T::zero() {
                segments.push(Segment { t0: t, t1: t + hold, x0: x, x1: x });
                t += hold;
            }
            let dest = if k % 2 == 0 { zone2_um } else { zone1_um };
            segments.push(Segment { t0: t, t1: t + link_time_us, x0: x, x1: dest });
            t += link_time_us;
            x = dest;
        }
        if t < tau_us {
            segments.push(Segment { t0: t, t1: tau_us, x0: x, x1: x });
        }
        Ok(Self { segments, tau_us, x_start: zone1_um })
    }

    /// Ion position at `t_us` within the delay.
    pub fn position_at(&self, t_us: T) -> T {
        for s in &self.segments {
            if t_us <= s.t1 {
                if s.t1 == s.t0 {
                    return s.x1;
                }
                let f = (t_us - s.t0) / (s.t1 - s.t0);
                return s.x0 + (s.x1 - s.x0) * f.max(T::zero());
            }
        }
        self.segments.last().map(|s| s.x1).unwrap_or(self.x_start)
    }
}

/// Shot-independent integrals of the field along the schedule:
/// `int u dt`, `int t u dt`, `int u^2 dt` for `u(t) = B(x(t))`, plus the
/// elementary time moments.
#[derive(Clone, Copy, Debug)]
pub struct PathMoments<T> {
    pub tau: T,
    pub i_t: T,
    pub i_t2: T,
    pub i_u: T,
    pub i_tu: T,
    pub i_u2: T,
}

/// Integrate the (piecewise-linear) field along the schedule, splitting
/// move segments at profile knots so every piece is exactly linear.
pub fn path_moments<T: Real>(
    schedule: &LinkSchedule<T>,
    profile: &SpatialProfile<T>,
) -> PathMoments<T> {
    let tau = schedule.tau_us;
    let mut m = PathMoments {
        tau,
        i_t: tau * tau * T::of(0.5),
        i_t2: tau * tau * tau / T::of(3.0),
        i_u: T::zero(),
        i_tu: T::zero(),
        i_u2: T::zero(),
    };
    for s in &schedule.segments {
        // Split at knot crossings for exactness.
        let mut cuts: Vec<T> = vec![s.t0, s.t1];
        if s.x1 != s.x0 {
            for &(kx, _) in &profile.knots {
                let f = (kx - s.x0) / (s.x1 - s.x0);
                if f > T::zero() && f < T::one() {
                    cuts.push(s.t0 + (s.t1 - s.t0) * f);
                }
            }
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in cuts.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            if t1 <= t0 {
                continue;
            }
            let xa = schedule.position_at(t0);
            let xb = schedule.position_at(t1);
            let u0 = profile.field_at(xa);
            let u1 = profile.field_at(xb);
            let dt = t1 - t0;
            let slope = (u1 - u0) / dt;
            let inter = u0 - slope * t0;
            let half = T::of(0.5);
            let third = T::one() / T::of(3.0);
            m.i_u += (u0 + u1) * half * dt;
            m.i_tu += inter * (t1 * t1 - t0 * t0) * half
                + slope * (t1 * t1 * t1 - t0 * t0 * t0) * third;
            m.i_u2 += dt * (u0 * u0 + u0 * u1 + u1 * u1) * third;
        }
    }
    m
}

/// Accumulated phase (rad) over the delay for a shot with constant field
/// offset `c_g` (quasi-static draw plus drift at the shot start) and drift
/// slope `d_g_per_us`. The local oscillator enters as `detuning0_hz =
/// f0 - f_ref`, kept in small numbers so the 12.6 GHz carrier never costs
/// precision.
pub fn accumulated_phase<T: Real>(
    qubit: &ClockQubit<T>,
    moments: &PathMoments<T>,
    c_g: T,
    d_g_per_us: T,
    detuning0_hz: T,
) -> T {
    // B(t) = c + d t + u(t); f - f_ref = detuning0 + quad B^2, all in Hz
    // with t in us, so scale by 1e-6 into the phase.
    let q = qubit.quad_hz_per_g2;
    let integral_hz_us = detuning0_hz * moments.tau
        + q * (c_g * c_g * moments.tau
            + T::of(2.0) * c_g * d_g_per_us * moments.i_t
            + T::of(2.0) * c_g * moments.i_u
            + d_g_per_us * d_g_per_us * moments.i_t2
            + T::of(2.0) * d_g_per_us * moments.i_tu
            + moments.i_u2);
    T::of(2.0) * T::PI() * integral_hz_us * T::of(1e-6)
}

/// Deterministic transport-induced phase (rad): the phase of a shot that
/// follows the schedule minus one parked at the start position, with no
/// noise or drift. Suitable as a compensation value.
pub fn transport_phase<T: Real>(
    qubit: &ClockQubit<T>,
    profile: &SpatialProfile<T>,
    schedule: &LinkSchedule<T>,
) -> T {
    let moved = path_moments(schedule, profile);
    let parked = PathMoments {
        i_u: profile.field_at(schedule.x_start) * schedule.tau_us,
        i_u2: profile.field_at(schedule.x_start).powi(2) * schedule.tau_us,
        ..moved
    };
    let det0 = -qubit.quad_hz_per_g2 * qubit.ambient_b_g * qubit.ambient_b_g;
    accumulated_phase(qubit, &moved, T::zero(), T::zero(), det0)
        - accumulated_phase(qubit, &parked, T::zero(), T::zero(), det0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn schedule(links: u32, tau_ms: f64) -> LinkSchedule<f64> {
        LinkSchedule::new(tau_ms * 1e3, links, 800.0, SchedulePlacement::Start, -337.0, 347.0)
            .unwrap()
    }

    #[test]
    fn links_must_fit_the_delay() {
        let r = LinkSchedule::<f64>::new(
            50e3,
            100,
            800.0,
            SchedulePlacement::Start,
            -337.0,
            347.0,
        );
        assert!(matches!(r, Err(ScheduleError::LinksExceedDelay { .. })));
    }

    #[test]
    fn positions_alternate_between_zones() {
        let s = schedule(2, 100.0);
        assert_abs_diff_eq!(s.position_at(0.0), -337.0);
        assert_abs_diff_eq!(s.position_at(400.0), 5.0); // mid first link
        assert_abs_diff_eq!(s.position_at(800.0), 347.0);
        assert_abs_diff_eq!(s.position_at(1600.0), -337.0);
        assert_abs_diff_eq!(s.position_at(50e3), -337.0);
    }

    #[test]
    fn uniform_field_gives_no_transport_phase() {
        let q = ClockQubit::default();
        let profile = SpatialProfile::uniform(q.ambient_b_g);
        let s = schedule(2, 100.0);
        let phi = transport_phase(&q, &profile, &s);
        assert_abs_diff_eq!(phi, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn linear_gradient_matches_the_closed_form() {
        let q = ClockQubit::<f64>::default();
        let b0 = q.ambient_b_g;
        // B(x) = B0 + g (x - x1) across the span.
        let g = 2.0e-6; // G/um
        let (x1, x2) = (-337.0, 347.0);
        let profile =
            SpatialProfile { knots: vec![(x1, b0), (x2, b0 + g * (x2 - x1))] };
        let s = schedule(2, 100.0);
        let phi = transport_phase(&q, &profile, &s);

        // Hand integral: during each link x moves linearly over span L in
        // T_L, so dB = g L t/T_L; two links give twice one link; the park
        // at zone 2 between links contributes dB = g L for T_L... links
        // are back-to-back so only the two transits plus zero park time at
        // zone 2. Contribution per transit:
        //   int (2 B0 dB + dB^2) dt
        //     = 2 B0 g L T_L / 2 + g^2 L^2 T_L / 3.
        let l = x2 - x1;
        let t_l = 800.0;
        let per_transit = 2.0 * b0 * g * l * t_l / 2.0 + g * g * l * l * t_l / 3.0;
        let expect = 2.0 * std::f64::consts::PI * 311.0 * (2.0 * per_transit) * 1e-6;
        assert_relative_eq!(phi, expect, max_relative = 1e-9);
    }

    #[test]
    fn transport_phase_is_additive_in_link_count() {
        let q = ClockQubit::<f64>::default();
        let profile = SpatialProfile {
            knots: vec![(-337.0, q.ambient_b_g), (347.0, q.ambient_b_g + 1.2e-3)],
        };
        let p2 = transport_phase(&q, &profile, &schedule(2, 100.0));
        let p4 = transport_phase(&q, &profile, &schedule(4, 100.0));
        assert_relative_eq!(p4, 2.0 * p2, max_relative = 1e-9);
    }

    #[test]
    fn even_placement_spreads_the_links() {
        let s = LinkSchedule::<f64>::new(
            10_000.0,
            2,
            800.0,
            SchedulePlacement::Even,
            -337.0,
            347.0,
        )
        .unwrap();
        // gaps of (10000 - 1600)/3 = 2800 us.
        assert_abs_diff_eq!(s.position_at(2800.0), -337.0);
        assert_abs_diff_eq!(s.position_at(3600.0), 347.0);
        assert_abs_diff_eq!(s.position_at(6400.0), 347.0);
        assert_abs_diff_eq!(s.position_at(7200.0), -337.0);
    }
}
