//! Rectangular electrodes and their analytic free-space potentials.
//!
//! Each electrode is an axis-aligned rectangle in a grounded plane. With
//! the inter-electrode gaps treated as grounded (gapless-plane model), the
//! potential of a patch held at 1 V is the solid angle it subtends divided
//! by 2 pi:
//!
//! ```text
//! phi(r) = (1/2pi) sum_corners s_ij atan( u_i v_j / (h R_ij) )
//! ```
//!
//! with `u = x_edge - x`, `v = y_edge - y`, `h` the height above the
//! electrode plane, `R = sqrt(u^2 + v^2 + h^2)` and corner signs
//! `s_22 = s_11 = +1`, `s_12 = s_21 = -1`. Gradient and Hessian come from
//! differentiating the corner terms in closed form, so derivatives are
//! exact to rounding.

use thiserror::Error;

use crate::geom::{SymMat3, Vec3};
use crate::real::Real;

/// Which chip a given electrode belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModuleId {
    A,
    B,
}

impl ModuleId {
    pub fn label(self) -> &'static str {
        match self {
            ModuleId::A => "A",
            ModuleId::B => "B",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "A" => Some(ModuleId::A),
            "B" => Some(ModuleId::B),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElectrodeRole {
    Rf,
    Dc,
    Ground,
}

impl ElectrodeRole {
    pub fn label(self) -> &'static str {
        match self {
            ElectrodeRole::Rf => "RF",
            ElectrodeRole::Dc => "DC",
            ElectrodeRole::Ground => "GND",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "RF" => Some(ElectrodeRole::Rf),
            "DC" => Some(ElectrodeRole::Dc),
            "GND" => Some(ElectrodeRole::Ground),
            _ => None,
        }
    }
}

/// Axis-aligned rectangle in an electrode plane (um).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect<T> {
    pub x_min: T,
    pub x_max: T,
    pub y_min: T,
    pub y_max: T,
}

impl<T: Real> Rect<T> {
    pub fn width_x(&self) -> T {
        self.x_max - self.x_min
    }

    pub fn width_y(&self) -> T {
        self.y_max - self.y_min
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.width_x() > T::zero() && self.width_y() > T::zero())
    }

    pub fn overlaps(&self, o: &Rect<T>) -> bool {
        self.x_min < o.x_max && o.x_min < self.x_max && self.y_min < o.y_max && o.y_min < self.y_max
    }

    /// Gap between two non-overlapping rectangles (0 if they touch or overlap).
    pub fn separation(&self, o: &Rect<T>) -> T {
        let dx = (self.x_min - o.x_max).max(o.x_min - self.x_max).max(T::zero());
        let dy = (self.y_min - o.y_max).max(o.y_min - self.y_max).max(T::zero());
        (dx * dx + dy * dy).sqrt()
    }
}

/// One rectangular electrode.
#[derive(Clone, Debug, PartialEq)]
pub struct Electrode<T> {
    pub id: String,
    pub module: ModuleId,
    pub role: ElectrodeRole,
    pub extent: Rect<T>,
    /// Height of the plane this electrode lies in (um). Module misalignment
    /// in z shows up here.
    pub plane_z: T,
}

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("query point at z = {z} is not above the electrode plane at z = {plane}")]
    BelowPlane { z: f64, plane: f64 },
}

/// Potential, gradient and Hessian of a unit-voltage patch at one point.
#[derive(Clone, Copy, Debug)]
pub struct PatchField<T> {
    pub phi: T,
    pub grad: Vec3<T>,
    pub hess: SymMat3<T>,
}

#[derive(Clone, Copy)]
struct CornerTerms<T> {
    f: T,
    f_u: T,
    f_v: T,
    f_h: T,
    f_uu: T,
    f_vv: T,
    f_uv: T,
    f_uh: T,
    f_vh: T,
    f_hh: T,
}

/// Closed-form corner function F = atan(u v / (h R)) and its derivatives.
fn corner<T: Real>(u: T, v: T, h: T) -> CornerTerms<T> {
    let two = T::of(2.0);
    let u2 = u * u;
    let v2 = v * v;
    let h2 = h * h;
    let r2 = u2 + v2 + h2;
    let r = r2.sqrt();
    let r3 = r2 * r;
    let uh = u2 + h2;
    let vh = v2 + h2;

    let f = (u * v / (h * r)).atan();
    let f_u = h * v / (r * uh);
    let f_v = h * u / (r * vh);
    let f_h = -(u * v) * (r2 + h2) / (r * uh * vh);
    let f_uu = -(h * v * u) * (uh + two * r2) / (r3 * uh * uh);
    let f_vv = -(h * u * v) * (vh + two * r2) / (r3 * vh * vh);
    let f_uv = h / r3;
    let f_uh = v * ((u2 + v2) * uh - two * h2 * r2) / (r3 * uh * uh);
    let f_vh = u * ((u2 + v2) * vh - two * h2 * r2) / (r3 * vh * vh);

    // d/dh of f_h, written out so the Laplace identity stays a genuine
    // cross-check rather than a construction.
    let n = r2 + h2;
    let d = r * uh * vh;
    let n_h = T::of(4.0) * h;
    let d_h = h * (uh * vh / r + two * r * vh + two * r * uh);
    let f_hh = -(u * v) * (n_h * d - n * d_h) / (d * d);

    CornerTerms { f, f_u, f_v, f_h, f_uu, f_vv, f_uv, f_uh, f_vh, f_hh }
}

impl<T: Real> Electrode<T> {
    /// Unit potential, gradient and Hessian at `p`. The point must be
    /// strictly above this electrode's plane.
    pub fn patch_field(&self, p: Vec3<T>) -> Result<PatchField<T>, FieldError> {
        let h = p.z - self.plane_z;
        if h <= T::zero() {
            return Err(FieldError::BelowPlane {
                z: p.z.to_f64().unwrap_or(f64::NAN),
                plane: self.plane_z.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(self.patch_field_unchecked(p))
    }

    /// As [`Self::patch_field`] without the domain check; used on hot paths
    /// after the caller has validated the region once.
    #[inline]
    pub fn patch_field_unchecked(&self, p: Vec3<T>) -> PatchField<T> {
        let h = p.z - self.plane_z;
        let us = [self.extent.x_min - p.x, self.extent.x_max - p.x];
        let vs = [self.extent.y_min - p.y, self.extent.y_max - p.y];

        let mut phi = T::zero();
        let mut gx = T::zero();
        let mut gy = T::zero();
        let mut gz = T::zero();
        let mut hxx = T::zero();
        let mut hyy = T::zero();
        let mut hzz = T::zero();
        let mut hxy = T::zero();
        let mut hxz = T::zero();
        let mut hyz = T::zero();

        for (i, &u) in us.iter().enumerate() {
            for (j, &v) in vs.iter().enumerate() {
                let s = if i == j { T::one() } else { -T::one() };
                let c = corner(u, v, h);
                phi += s * c.f;
                // u, v are offsets of fixed edges, so d/dx = -d/du etc.
                gx -= s * c.f_u;
                gy -= s * c.f_v;
                gz += s * c.f_h;
                hxx += s * c.f_uu;
                hyy += s * c.f_vv;
                hzz += s * c.f_hh;
                hxy += s * c.f_uv;
                hxz -= s * c.f_uh;
                hyz -= s * c.f_vh;
            }
        }

        let half_inv_pi = T::of(0.5) * T::FRAC_1_PI();
        PatchField {
            phi: phi * half_inv_pi,
            grad: Vec3::new(gx, gy, gz).scale(half_inv_pi),
            hess: SymMat3 { xx: hxx, yy: hyy, zz: hzz, xy: hxy, xz: hxz, yz: hyz }
                .scale(half_inv_pi),
        }
    }

    /// Unit potential only (dimensionless, in [0, 1]).
    pub fn unit_potential(&self, p: Vec3<T>) -> Result<T, FieldError> {
        Ok(self.patch_field(p)?.phi)
    }

    pub fn translated(&self, dx: T, dy: T, dz: T) -> Self {
        Electrode {
            id: self.id.clone(),
            module: self.module,
            role: self.role,
            extent: Rect {
                x_min: self.extent.x_min + dx,
                x_max: self.extent.x_max + dx,
                y_min: self.extent.y_min + dy,
                y_max: self.extent.y_max + dy,
            },
            plane_z: self.plane_z + dz,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn patch(x0: f64, x1: f64, y0: f64, y1: f64) -> Electrode<f64> {
        Electrode {
            id: "t".into(),
            module: ModuleId::A,
            role: ElectrodeRole::Dc,
            extent: Rect { x_min: x0, x_max: x1, y_min: y0, y_max: y1 },
            plane_z: 0.0,
        }
    }

    #[test]
    fn centered_wide_patch_approaches_unity() {
        let e = patch(-5e4, 5e4, -5e4, 5e4);
        let phi = e.unit_potential(Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert!(phi > 0.9999, "phi = {phi}");
    }

    #[test]
    fn far_field_decays_to_zero() {
        let e = patch(-100.0, 100.0, -100.0, 100.0);
        let phi = e.unit_potential(Vec3::new(0.0, 0.0, 1e6)).unwrap();
        assert!(phi < 1e-7, "phi = {phi}");
    }

    #[test]
    fn bounded_and_monotone_in_height_above_center() {
        let e = patch(-135.0, 135.0, -1000.0, 1000.0);
        let mut last = 1.0;
        for k in 1..200 {
            let z = 0.5 * k as f64;
            let phi = e.unit_potential(Vec3::new(0.0, 0.0, z)).unwrap();
            assert!((0.0..=1.0).contains(&phi));
            assert!(phi < last, "phi must decrease with z");
            last = phi;
        }
    }

    #[test]
    fn rejects_points_at_or_below_plane() {
        let e = patch(-1.0, 1.0, -1.0, 1.0);
        assert!(e.unit_potential(Vec3::new(0.0, 0.0, 0.0)).is_err());
        assert!(e.unit_potential(Vec3::new(0.0, 0.0, -1.0)).is_err());
    }

    /// Richardson-extrapolated central differences of phi vs the analytic
    /// gradient and Hessian at off-axis points.
    #[test]
    fn derivatives_match_richardson_finite_differences() {
        let e = patch(-30.0, 220.0, 15.0, 400.0);
        let pts = [
            Vec3::new(12.0, 40.0, 55.0),
            Vec3::new(-80.0, 190.0, 23.0),
            Vec3::new(300.0, -35.0, 140.0),
        ];
        let phi = |p: Vec3<f64>| e.patch_field(p).unwrap().phi;
        for p in pts {
            let f = e.patch_field(p).unwrap();
            let h = 1e-2;
            for (axis, grad_c) in [(0, f.grad.x), (1, f.grad.y), (2, f.grad.z)] {
                let d = |s: f64| {
                    let mut q = p;
                    match axis {
                        0 => q.x += s,
                        1 => q.y += s,
                        _ => q.z += s,
                    }
                    q
                };
                let fd = |h: f64| (phi(d(h)) - phi(d(-h))) / (2.0 * h);
                let rich = (4.0 * fd(h / 2.0) - fd(h)) / 3.0;
                assert_relative_eq!(grad_c, rich, max_relative = 1e-8, epsilon = 1e-12);
            }
            // Hessian diagonal via second differences of phi. Cancellation
            // in the second difference limits the oracle to ~1e-5.
            let fdd = |axis: usize, h: f64| {
                let d = |s: f64| {
                    let mut q = p;
                    match axis {
                        0 => q.x += s,
                        1 => q.y += s,
                        _ => q.z += s,
                    }
                    q
                };
                (phi(d(h)) - 2.0 * phi(p) + phi(d(-h))) / (h * h)
            };
            for (axis, hc) in [(0, f.hess.xx), (1, f.hess.yy), (2, f.hess.zz)] {
                let rich = (4.0 * fdd(axis, h / 2.0) - fdd(axis, h)) / 3.0;
                assert_relative_eq!(hc, rich, max_relative = 1e-5, epsilon = 1e-12);
            }
            // Full Hessian against central differences of the analytic
            // gradient, which has no cancellation problem.
            let grad = |p: Vec3<f64>| e.patch_field(p).unwrap().grad;
            let gfd = |axis: usize, h: f64| {
                let d = |s: f64| {
                    let mut q = p;
                    match axis {
                        0 => q.x += s,
                        1 => q.y += s,
                        _ => q.z += s,
                    }
                    q
                };
                (grad(d(h)) - grad(d(-h))).scale(1.0 / (2.0 * h))
            };
            let cols = [gfd(0, h), gfd(1, h), gfd(2, h)];
            let pairs = [
                (f.hess.xx, cols[0].x),
                (f.hess.yy, cols[1].y),
                (f.hess.zz, cols[2].z),
                (f.hess.xy, cols[0].y),
                (f.hess.xz, cols[0].z),
                (f.hess.yz, cols[1].z),
            ];
            for (analytic, fd) in pairs {
                assert_relative_eq!(analytic, fd, max_relative = 1e-6, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn hessian_is_traceless() {
        let e = patch(-135.0, 135.0, -1000.0, 1000.0);
        for p in [
            Vec3::new(4.0, 7.0, 100.0),
            Vec3::new(-300.0, 55.0, 18.0),
            Vec3::new(90.0, 950.0, 250.0),
        ] {
            let f = e.patch_field(p).unwrap();
            let tr = f.hess.trace().abs();
            assert!(tr <= 1e-9 * f.hess.norm().max(1e-30), "trace {tr}");
        }
    }

    #[test]
    fn mirror_symmetry_about_patch_center() {
        let e = patch(-50.0, 50.0, -200.0, 200.0);
        let a = e.unit_potential(Vec3::new(10.0, 30.0, 60.0)).unwrap();
        let b = e.unit_potential(Vec3::new(-10.0, -30.0, 60.0)).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);
    }

    #[test]
    fn f32_evaluation_stays_in_bounds() {
        let e = Electrode::<f32> {
            id: "t".into(),
            module: ModuleId::A,
            role: ElectrodeRole::Dc,
            extent: Rect { x_min: -100.0, x_max: 100.0, y_min: -100.0, y_max: 100.0 },
            plane_z: 0.0,
        };
        let phi = e.unit_potential(Vec3::new(5.0f32, -3.0, 40.0)).unwrap();
        assert!((0.0..=1.0).contains(&phi));
    }
}
