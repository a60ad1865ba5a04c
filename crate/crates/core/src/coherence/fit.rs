//! Fringe and coherence-time fits.

use thiserror::Error;

use crate::coherence::ramsey::FringePoint;
use crate::linalg::{lstsq, Mat};
use crate::real::Real;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("fringe fit needs at least 5 points spanning a full period (got {points} over {span_rad:.2} rad)")]
    FringeUnderdetermined { points: usize, span_rad: f64 },
    #[error("coherence fit needs at least 3 delay points, got {0}")]
    TooFewDelays(usize),
    #[error("coherence fit did not converge")]
    NoConvergence,
}

/// Sinusoidal fringe fit: `P(phi2) = A - (C/2) cos(phi2 - phase)`.
#[derive(Clone, Copy, Debug)]
pub struct FringeFit<T> {
    pub offset: T,
    pub contrast: T,
    pub contrast_err: T,
    /// Phase in [0, 2 pi).
    pub phase_rad: T,
    pub phase_err: T,
    /// Contrast indistinguishable from zero: the phase is meaningless.
    pub undefined_phase: bool,
}

/// Least-squares fringe fit; linear in (offset, cos, sin) amplitudes.
pub fn fringe_fit<T: Real>(points: &[FringePoint<T>]) -> Result<FringeFit<T>, FitError> {
    let n = points.len();
    let span = points
        .iter()
        .map(|p| p.phi2_rad)
        .fold((T::max_value(), T::min_value()), |(lo, hi), x| (lo.min(x), hi.max(x)));
    let span_rad = span.1 - span.0;
    let two_pi = T::of(2.0) * T::PI();
    // A uniform grid over [0, 2 pi) spans 2 pi (1 - 1/n); accept that.
    let needed = two_pi * (T::one() - T::of(1.5) / T::of_usize(n.max(2)));
    if n < 5 || span_rad < needed {
        return Err(FitError::FringeUnderdetermined {
            points: n,
            span_rad: span_rad.to_f64().unwrap_or(0.0),
        });
    }

    let mut x = Mat::zeros(n, 3);
    let mut y = Vec::with_capacity(n);
    for (i, p) in points.iter().enumerate() {
        x.set(i, 0, T::one());
        x.set(i, 1, p.phi2_rad.cos());
        x.set(i, 2, p.phi2_rad.sin());
        y.push(p.p1);
    }
    let beta = lstsq(x.clone(), &y);
    let (a, b, c) = (beta[0], beta[1], beta[2]);
    // P = A + b cos + c sin = A - (C/2) cos(phi2 - phase)
    //   with b = -(C/2) cos(phase), c = -(C/2) sin(phase).
    let amp = (b * b + c * c).sqrt();
    let contrast = T::of(2.0) * amp;
    let mut phase = (-c).atan2(-b);
    if phase < T::zero() {
        phase += two_pi;
    }

    // Parameter covariance from the fit residuals.
    let fitted = x.mul_vec(&beta);
    let mut ssr = T::zero();
    for (f, yi) in fitted.iter().zip(&y) {
        ssr += (*f - *yi) * (*f - *yi);
    }
    let dof = T::of_usize(n.saturating_sub(3).max(1));
    let sigma2 = ssr / dof;
    // (X^T X)^-1 via the 3x3 normal matrix.
    let mut g = [[T::zero(); 3]; 3];
    for i in 0..n {
        for r in 0..3 {
            for s in 0..3 {
                g[r][s] += x.at(i, r) * x.at(i, s);
            }
        }
    }
    let inv = invert3(&g);
    let var_b = sigma2 * inv[1][1];
    let var_c = sigma2 * inv[2][2];
    let cov_bc = sigma2 * inv[1][2];
    let (contrast_err, phase_err, undefined) = if amp > T::zero() {
        // Delta method on C = 2 sqrt(b^2+c^2), phase = atan2(-c, -b).
        let db = b / amp;
        let dc = c / amp;
        let var_amp = db * db * var_b + dc * dc * var_c + T::of(2.0) * db * dc * cov_bc;
        let c_err = T::of(2.0) * var_amp.max(T::zero()).sqrt();
        let pb = c / (amp * amp);
        let pc = -b / (amp * amp);
        let var_ph = pb * pb * var_b + pc * pc * var_c + T::of(2.0) * pb * pc * cov_bc;
        let p_err = var_ph.max(T::zero()).sqrt();
        (c_err, p_err, contrast < T::of(2.0) * c_err || contrast < T::of(1e-9))
    } else {
        (T::zero(), T::zero(), true)
    };

    Ok(FringeFit {
        offset: a,
        contrast,
        contrast_err,
        phase_rad: phase,
        phase_err,
        undefined_phase: undefined,
    })
}

fn invert3<T: Real>(m: &[[T; 3]; 3]) -> [[T; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut out = [[T::zero(); 3]; 3];
    let cof = |r1: usize, c1: usize, r2: usize, c2: usize| m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1];
    out[0][0] = cof(1, 1, 2, 2) / det;
    out[0][1] = -cof(0, 1, 2, 2) / det;
    out[0][2] = cof(0, 1, 1, 2) / det;
    out[1][0] = -cof(1, 0, 2, 2) / det;
    out[1][1] = cof(0, 0, 2, 2) / det;
    out[1][2] = -cof(0, 0, 1, 2) / det;
    out[2][0] = cof(1, 0, 2, 1) / det;
    out[2][1] = -cof(0, 0, 2, 1) / det;
    out[2][2] = cof(0, 0, 1, 1) / det;
    out
}

/// Gaussian coherence fit: `C(tau) = C0 exp(-(tau/T2)^2)`.
#[derive(Clone, Copy, Debug)]
pub struct CoherenceFit<T> {
    pub c0: T,
    pub c0_err: T,
    /// `None` when the data do not decay.
    pub t2_ms: Option<T>,
    pub t2_err_ms: T,
    pub non_decaying: bool,
}

/// Nonlinear least squares of the Gaussian decay, seeded by a log-linear
/// regression and refined by Gauss-Newton.
pub fn t2_fit<T: Real>(data: &[(T, T)]) -> Result<CoherenceFit<T>, FitError> {
    if data.len() < 3 {
        return Err(FitError::TooFewDelays(data.len()));
    }
    // Log-linear seed: ln C = ln C0 - (tau/T2)^2 on points with C > 0.
    let mut sx = T::zero();
    let mut sy = T::zero();
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    let mut m = 0usize;
    for &(tau, c) in data {
        if c > T::of(1e-6) {
            let x = tau * tau;
            let y = c.ln();
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            m += 1;
        }
    }
    if m < 3 {
        return Err(FitError::TooFewDelays(m));
    }
    let mf = T::of_usize(m);
    let denom = mf * sxx - sx * sx;
    let slope = (mf * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / mf;
    if slope >= -T::min_positive_value() * T::of(1e3) {
        // Flat or growing contrast: T2 is unbounded.
        return Ok(CoherenceFit {
            c0: intercept.exp(),
            c0_err: T::zero(),
            t2_ms: None,
            t2_err_ms: T::zero(),
            non_decaying: true,
        });
    }
    let mut c0 = intercept.exp();
    let mut t2 = (-T::one() / slope).sqrt();

    // Gauss-Newton refinement on (c0, t2).
    for _ in 0..80 {
        let mut jtj = [[T::zero(); 2]; 2];
        let mut jtr = [T::zero(); 2];
        for &(tau, c) in data {
            let u = tau / t2;
            let e = (-u * u).exp();
            let model = c0 * e;
            let r = model - c;
            let d_c0 = e;
            let d_t2 = c0 * e * T::of(2.0) * u * u / t2;
            jtj[0][0] += d_c0 * d_c0;
            jtj[0][1] += d_c0 * d_t2;
            jtj[1][1] += d_t2 * d_t2;
            jtr[0] += d_c0 * r;
            jtr[1] += d_t2 * r;
        }
        jtj[1][0] = jtj[0][1];
        let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
        if det.abs() <= T::min_positive_value() {
            return Err(FitError::NoConvergence);
        }
        let dc0 = -(jtj[1][1] * jtr[0] - jtj[0][1] * jtr[1]) / det;
        let dt2 = -(jtj[0][0] * jtr[1] - jtj[1][0] * jtr[0]) / det;
        c0 += dc0;
        t2 += dt2;
        if !(t2 > T::zero()) || !t2.is_finite() {
            return Err(FitError::NoConvergence);
        }
        if dc0.abs() < T::of(1e-14) * c0.abs().max(T::one())
            && dt2.abs() < T::of(1e-14) * t2.abs()
        {
            break;
        }
    }

    // 1-sigma errors from the residual variance.
    let mut ssr = T::zero();
    let mut jtj = [[T::zero(); 2]; 2];
    for &(tau, c) in data {
        let u = tau / t2;
        let e = (-u * u).exp();
        let r = c0 * e - c;
        ssr += r * r;
        let d_c0 = e;
        let d_t2 = c0 * e * T::of(2.0) * u * u / t2;
        jtj[0][0] += d_c0 * d_c0;
        jtj[0][1] += d_c0 * d_t2;
        jtj[1][1] += d_t2 * d_t2;
    }
    jtj[1][0] = jtj[0][1];
    let dof = T::of_usize(data.len().saturating_sub(2).max(1));
    let sigma2 = ssr / dof;
    let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
    let (c0_err, t2_err) = if det > T::zero() {
        ((sigma2 * jtj[1][1] / det).sqrt(), (sigma2 * jtj[0][0] / det).sqrt())
    } else {
        (T::zero(), T::zero())
    };

    Ok(CoherenceFit {
        c0,
        c0_err,
        t2_ms: Some(t2),
        t2_err_ms: t2_err,
        non_decaying: false,
    })
}
