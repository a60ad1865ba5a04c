//! Derived trap quantities: RF null line, ion height, trap depth, RF
//! barrier across the inter-module gap, and secular frequencies.

use thiserror::Error;

use crate::constants::e_over_u;
use crate::geom::{SymMat3, Vec3};
use crate::real::Real;
use crate::trap::field::TrapField;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no bounded pseudopotential minimum found at x = {x_um} um")]
    NullSearchFailed { x_um: f64 },
    #[error("point is not a potential minimum (Newton offset {offset_um:.3} um exceeds tolerance)")]
    NotAMinimum { offset_um: f64 },
    #[error("total potential has no bounded minimum near x = {x_um} um")]
    NoBoundedMinimum { x_um: f64 },
    #[error("misalignment component {value_um} um exceeds the 50 um model range")]
    MisalignmentOutOfRange { value_um: f64 },
    #[error("escape search box never confines the ion; depth is unresolved")]
    DepthUnresolved,
}

/// One point on the RF null line.
#[derive(Clone, Copy, Debug)]
pub struct NullPoint<T> {
    pub x: T,
    pub y: T,
    pub z: T,
    /// Residual pseudopotential at the transverse minimum (meV); nonzero
    /// near the inter-module gap.
    pub pseudo_mev: T,
}

/// Transverse pseudopotential minimum at fixed x by Gauss-Newton on the
/// cycle-averaged field residuals.
pub fn null_at<T: Real>(
    field: &TrapField<T>,
    x: T,
    guess: Vec3<T>,
) -> Result<NullPoint<T>, AnalysisError> {
    let mut y = guess.y;
    let mut z = guess.z;
    let tol = T::of(1e-10);
    let mut converged = false;
    for _ in 0..60 {
        let p = Vec3::new(x, y, z);
        let (w, j) = field.pseudo_residuals(p);
        // Normal equations of the 6x2 Jacobian restricted to (y, z).
        let cols = |m: &SymMat3<T>| ([m.xy, m.yy, m.yz], [m.xz, m.yz, m.zz]);
        let (a1y, a1z) = cols(&j[0]);
        let (a2y, a2z) = cols(&j[1]);
        let r1 = w[0].as_array();
        let r2 = w[1].as_array();
        let mut jtj = [[T::zero(); 2]; 2];
        let mut jtr = [T::zero(); 2];
        for k in 0..3 {
            jtj[0][0] += a1y[k] * a1y[k] + a2y[k] * a2y[k];
            jtj[0][1] += a1y[k] * a1z[k] + a2y[k] * a2z[k];
            jtj[1][1] += a1z[k] * a1z[k] + a2z[k] * a2z[k];
            jtr[0] += a1y[k] * r1[k] + a2y[k] * r2[k];
            jtr[1] += a1z[k] * r1[k] + a2z[k] * r2[k];
        }
        jtj[1][0] = jtj[0][1];
        let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
        if det.abs() <= T::min_positive_value() {
            return Err(AnalysisError::NullSearchFailed { x_um: x.to_f64().unwrap_or(f64::NAN) });
        }
        let dy = -(jtj[1][1] * jtr[0] - jtj[0][1] * jtr[1]) / det;
        let dz = -(jtj[0][0] * jtr[1] - jtj[1][0] * jtr[0]) / det;
        // Cap the step so a bad seed cannot jump below the chip.
        let cap = T::of(30.0);
        let norm = (dy * dy + dz * dz).sqrt();
        let scale = if norm > cap { cap / norm } else { T::one() };
        y += dy * scale;
        z += dz * scale;
        if z <= T::of(1.0) {
            z = T::of(1.0);
        }
        if norm <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(AnalysisError::NullSearchFailed { x_um: x.to_f64().unwrap_or(f64::NAN) });
    }
    let p = Vec3::new(x, y, z);
    Ok(NullPoint { x, y, z, pseudo_mev: field.pseudopotential_ev(p) * T::of(1e3) })
}

/// Closed-form null height of two infinite rails spanning |y| in [a, b]:
/// sqrt(a b). Used to seed searches and as an oracle far from the gap.
pub fn two_rail_null_height<T: Real>(field: &TrapField<T>) -> T {
    let mut a = T::max_value();
    let mut b = T::zero();
    for e in field.layout.rf_electrodes() {
        let lo = e.extent.y_min.abs().min(e.extent.y_max.abs());
        let hi = e.extent.y_min.abs().max(e.extent.y_max.abs());
        a = a.min(lo);
        b = b.max(hi);
    }
    (a * b).sqrt()
}

/// RF null line over an x range, warm-starting each point from the last.
pub fn null_profile<T: Real>(
    field: &TrapField<T>,
    x_lo: T,
    x_hi: T,
    samples: usize,
) -> Result<Vec<NullPoint<T>>, AnalysisError> {
    assert!(samples >= 2);
    let mut out = Vec::with_capacity(samples);
    let mut guess = Vec3::new(x_lo, T::zero(), two_rail_null_height(field));
    for k in 0..samples {
        let t = T::of_usize(k) / T::of_usize(samples - 1);
        let x = x_lo + (x_hi - x_lo) * t;
        let np = null_at(field, x, guess)?;
        guess = Vec3::new(x, np.y, np.z);
        out.push(np);
    }
    Ok(out)
}

/// Height variation (um) of a null profile.
pub fn height_variation<T: Real>(profile: &[NullPoint<T>]) -> T {
    let mut lo = T::max_value();
    let mut hi = T::min_value();
    for p in profile {
        lo = lo.min(p.z);
        hi = hi.max(p.z);
    }
    hi - lo
}

/// Pseudopotential minimum along the vertical line above the rail
/// centerline at a given x: golden-section search over height.
pub fn vertical_null_height<T: Real>(field: &TrapField<T>, x: T) -> T {
    let f = |z: T| field.pseudopotential_ev(Vec3::new(x, T::zero(), z));
    let (mut lo, mut hi) = (T::of(20.0), T::of(400.0));
    let inv_phi = T::of(0.618_033_988_749_894_9);
    let mut c = hi - (hi - lo) * inv_phi;
    let mut d = lo + (hi - lo) * inv_phi;
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - (hi - lo) * inv_phi;
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + (hi - lo) * inv_phi;
            fd = f(d);
        }
        if hi - lo < T::of(1e-9) {
            break;
        }
    }
    (lo + hi) * T::of(0.5)
}

/// Trap depth and gap RF barrier (both meV).
#[derive(Clone, Copy, Debug)]
pub struct DepthBarrier<T> {
    pub depth_mev: T,
    pub rf_barrier_mev: T,
}

/// Escape-threshold search on a transverse (y, z) grid.
///
/// The depth is the lowest pseudopotential threshold at which the flooded
/// region around the null reaches the escape boundary (the top of the box
/// or its sides above half the ion height). Paths hugging the grounded
/// plane are excluded: an ion heading there lands on the chip rather than
/// escaping over a barrier.
fn escape_threshold_mev<T: Real>(field: &TrapField<T>, x: T) -> Result<T, AnalysisError> {
    let null = null_at(field, x, Vec3::new(x, T::zero(), two_rail_null_height(field)))?;
    let step = T::of(2.0);
    let y_half = 450.0_f64;
    let z_lo = 4.0_f64;
    let z_hi = 700.0_f64;
    let ny = (2.0 * y_half / 2.0) as usize + 1;
    let nz = ((z_hi - z_lo) / 2.0) as usize + 1;
    let y0 = null.y - T::of(y_half);
    let z0 = T::of(z_lo);

    let mut phi = vec![0.0f64; ny * nz];
    for iy in 0..ny {
        let y = y0 + step * T::of_usize(iy);
        for iz in 0..nz {
            let z = z0 + step * T::of_usize(iz);
            let v = field.pseudopotential_ev(Vec3::new(x, y, z));
            phi[iy * nz + iz] = v.to_f64().unwrap_or(f64::INFINITY);
        }
    }

    let start_iy = (ny - 1) / 2;
    let start_iz = ((null.z - z0) / step).round().to_f64().unwrap_or(0.0) as usize;
    let start_iz = start_iz.min(nz - 1);
    let floor = phi[start_iy * nz + start_iz];

    let z_escape_min = (null.z * T::of(0.5)).to_f64().unwrap_or(60.0).max(60.0);
    let iz_escape = ((z_escape_min - z_lo) / 2.0).ceil() as usize;

    let escapes = |threshold: f64, visited: &mut [bool], queue: &mut Vec<usize>| -> bool {
        visited.iter_mut().for_each(|v| *v = false);
        queue.clear();
        let s = start_iy * nz + start_iz;
        if phi[s] >= threshold {
            return false;
        }
        visited[s] = true;
        queue.push(s);
        while let Some(idx) = queue.pop() {
            let iy = idx / nz;
            let iz = idx % nz;
            if iz == nz - 1 || ((iy == 0 || iy == ny - 1) && iz >= iz_escape) {
                return true;
            }
            let mut push = |n: usize| {
                if !visited[n] && phi[n] < threshold {
                    visited[n] = true;
                    queue.push(n);
                }
            };
            if iy > 0 {
                push(idx - nz);
            }
            if iy + 1 < ny {
                push(idx + nz);
            }
            if iz > 0 {
                push(idx - 1);
            }
            if iz + 1 < nz {
                push(idx + 1);
            }
        }
        false
    };

    let mut visited = vec![false; ny * nz];
    let mut queue = Vec::with_capacity(ny * nz / 4);
    let mut lo = floor;
    let mut hi = 1.0f64; // 1 eV cap, far above any realistic depth here
    if escapes(lo + 1e-12, &mut visited, &mut queue) {
        return Err(AnalysisError::NoBoundedMinimum { x_um: x.to_f64().unwrap_or(f64::NAN) });
    }
    if !escapes(hi, &mut visited, &mut queue) {
        return Err(AnalysisError::DepthUnresolved);
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if escapes(mid, &mut visited, &mut queue) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(T::of((0.5 * (lo + hi) - floor) * 1e3))
}

/// Depth of the RF pseudopotential well and the residual barrier along the
/// null across the inter-module gap, for a given module-B placement
/// `(gap_x, misalign_y, misalign_z)` in um.
pub fn trap_depth_and_barrier<T: Real>(
    field: &TrapField<T>,
    misalignment: (T, T, T),
) -> Result<DepthBarrier<T>, AnalysisError> {
    let (gx, my, mz) = misalignment;
    for v in [gx, my, mz] {
        if v.abs() > T::of(50.0) {
            return Err(AnalysisError::MisalignmentOutOfRange {
                value_um: v.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    let layout = field.layout.with_module_b_offset(gx, my, mz);
    let shifted = TrapField::new(layout, field.drive, field.ion);

    let depth_mev = escape_threshold_mev(&shifted, shifted.layout.zones.zone1)?;

    let h = two_rail_null_height(&shifted);
    let margin = h * T::of(3.0);
    let profile = null_profile(&shifted, -margin, gx + margin, 121)?;
    let mut lo = T::max_value();
    let mut hi = T::zero();
    for p in &profile {
        lo = lo.min(p.pseudo_mev);
        hi = hi.max(p.pseudo_mev);
    }
    Ok(DepthBarrier { depth_mev, rf_barrier_mev: hi - lo })
}

/// Secular mode set at a potential minimum.
#[derive(Clone, Debug)]
pub struct SecularModes<T> {
    /// Mode frequencies in Hz, ascending by Hessian eigenvalue; unstable
    /// directions come out negative.
    pub freqs_hz: [T; 3],
    pub axes: [Vec3<T>; 3],
}

impl<T: Real> SecularModes<T> {
    /// Frequency of the mode best aligned with the transport (x) axis.
    pub fn axial_hz(&self) -> T {
        let mut best = 0;
        for k in 1..3 {
            if self.axes[k].x.abs() > self.axes[best].x.abs() {
                best = k;
            }
        }
        self.freqs_hz[best]
    }

    /// The two frequencies orthogonal to the axial mode.
    pub fn radial_hz(&self) -> [T; 2] {
        let mut ax = 0;
        for k in 1..3 {
            if self.axes[k].x.abs() > self.axes[ax].x.abs() {
                ax = k;
            }
        }
        let others: Vec<T> =
            (0..3).filter(|&k| k != ax).map(|k| self.freqs_hz[k]).collect();
        [others[0], others[1]]
    }
}

/// Convert a total-energy Hessian (eV/um^2) into mode frequencies.
pub fn modes_from_hessian<T: Real>(hess: SymMat3<T>, mass_amu: T) -> SecularModes<T> {
    let (vals, vecs) = hess.eigen();
    let to_hz = |lambda: T| -> T {
        let w2 = e_over_u::<T>() * lambda / mass_amu; // (rad/us)^2
        let f = w2.abs().sqrt() / (T::of(2.0) * T::PI()) * T::of(1e6);
        if lambda < T::zero() {
            -f
        } else {
            f
        }
    };
    SecularModes { freqs_hz: [to_hz(vals[0]), to_hz(vals[1]), to_hz(vals[2])], axes: vecs }
}

/// Secular frequencies of the combined DC + pseudopotential well at `point`,
/// which must be a stationary point of the total potential.
pub fn secular_frequencies<T: Real>(
    field: &TrapField<T>,
    voltages: &[T],
    point: Vec3<T>,
) -> Result<SecularModes<T>, AnalysisError> {
    let grad = field.total_grad_ev_um(voltages, point);
    let hess = field.total_hessian_ev_um2(voltages, point);
    // Reject points whose Newton correction is macroscopic.
    let step = solve3(hess, grad);
    let offset = step.norm();
    if !(offset < T::of(0.5)) {
        return Err(AnalysisError::NotAMinimum { offset_um: offset.to_f64().unwrap_or(f64::NAN) });
    }
    Ok(modes_from_hessian(hess, field.ion.mass_amu))
}

fn solve3<T: Real>(h: SymMat3<T>, g: Vec3<T>) -> Vec3<T> {
    // Cramer's rule on the symmetric 3x3 system H s = g.
    let a = [[h.xx, h.xy, h.xz], [h.xy, h.yy, h.yz], [h.xz, h.yz, h.zz]];
    let det = |m: &[[T; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    if d.abs() <= T::min_positive_value() {
        return Vec3::new(T::max_value(), T::max_value(), T::max_value());
    }
    let gv = g.as_array();
    let mut cols = [a, a, a];
    for k in 0..3 {
        for r in 0..3 {
            cols[k][r][k] = gv[r];
        }
    }
    Vec3::new(det(&cols[0]) / d, det(&cols[1]) / d, det(&cols[2]) / d)
}

/// Newton descent to the nearest total-potential minimum.
pub fn find_total_minimum<T: Real>(
    field: &TrapField<T>,
    voltages: &[T],
    start: Vec3<T>,
) -> Result<Vec3<T>, AnalysisError> {
    let mut p = start;
    for _ in 0..80 {
        let g = field.total_grad_ev_um(voltages, p);
        let h = field.total_hessian_ev_um2(voltages, p);
        let step = solve3(h, g);
        let norm = step.norm();
        if !norm.is_finite() || norm > T::of(1e4) {
            return Err(AnalysisError::NoBoundedMinimum {
                x_um: start.x.to_f64().unwrap_or(f64::NAN),
            });
        }
        let cap = T::of(10.0);
        let scale = if norm > cap { cap / norm } else { T::one() };
        p = p - step.scale(scale);
        if p.z < T::of(2.0) {
            return Err(AnalysisError::NoBoundedMinimum {
                x_um: start.x.to_f64().unwrap_or(f64::NAN),
            });
        }
        if norm < T::of(1e-9) {
            // Require positive curvature in every direction.
            let (vals, _) = field.total_hessian_ev_um2(voltages, p).eigen();
            if vals[0] <= T::zero() {
                return Err(AnalysisError::NoBoundedMinimum {
                    x_um: start.x.to_f64().unwrap_or(f64::NAN),
                });
            }
            return Ok(p);
        }
    }
    Err(AnalysisError::NoBoundedMinimum { x_um: start.x.to_f64().unwrap_or(f64::NAN) })
}
