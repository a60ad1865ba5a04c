//! Savitzky-Golay smoothing.
//!
//! The smoother fits a low-order polynomial over a moving window by least
//! squares and replaces the center sample with the fit value. Near the
//! sequence ends the window is truncated one-sided and the polynomial is
//! refit, which keeps polynomial inputs exactly invariant all the way to
//! the endpoints.

use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Error)]
pub enum SgError {
    #[error("window must be odd and larger than the polynomial order (window {window}, order {order})")]
    BadWindow { window: usize, order: usize },
    #[error("sequence of {len} samples is shorter than the {window}-sample window")]
    TooShort { len: usize, window: usize },
}

/// Least-squares weights for estimating the value at offset 0 from samples
/// at integer `offsets`, fitting a polynomial of degree `order`.
pub fn sg_weights<T: Real>(offsets: &[isize], order: usize) -> Vec<T> {
    let npar = order + 1;
    assert!(offsets.len() >= npar);
    // Normal equations G u = e0 with G_kl = sum_j j^(k+l).
    let mut g = vec![T::zero(); npar * npar];
    for &j in offsets {
        let x = T::of(j as f64);
        let mut pk = T::one();
        for k in 0..npar {
            let mut pl = pk * pk; // x^(2k)
            for l in k..npar {
                g[k * npar + l] += pl;
                pl *= x;
            }
            pk *= x;
        }
    }
    for k in 0..npar {
        for l in 0..k {
            g[k * npar + l] = g[l * npar + k];
        }
    }
    let mut rhs = vec![T::zero(); npar];
    rhs[0] = T::one();
    let u = solve_small(&mut g, &mut rhs, npar);
    offsets
        .iter()
        .map(|&j| {
            let x = T::of(j as f64);
            let mut acc = T::zero();
            let mut p = T::one();
            for uk in &u {
                acc += *uk * p;
                p *= x;
            }
            acc
        })
        .collect()
}

fn solve_small<T: Real>(a: &mut [T], b: &mut [T], n: usize) -> Vec<T> {
    // Gaussian elimination with partial pivoting; n <= 5 here.
    for k in 0..n {
        let mut piv = k;
        for r in (k + 1)..n {
            if a[r * n + k].abs() > a[piv * n + k].abs() {
                piv = r;
            }
        }
        if piv != k {
            for c in 0..n {
                a.swap(k * n + c, piv * n + c);
            }
            b.swap(k, piv);
        }
        let d = a[k * n + k];
        for r in (k + 1)..n {
            let f = a[r * n + k] / d;
            for c in k..n {
                a[r * n + c] = a[r * n + c] - f * a[k * n + c];
            }
            b[r] = b[r] - f * b[k];
        }
    }
    let mut x = vec![T::zero(); n];
    for k in (0..n).rev() {
        let mut acc = b[k];
        for c in (k + 1)..n {
            acc -= a[k * n + c] * x[c];
        }
        x[k] = acc / a[k * n + k];
    }
    x
}

/// Smooth one sequence. Interior samples use the symmetric window,
/// endpoint samples a truncated one-sided refit.
pub fn sg_smooth<T: Real>(data: &[T], window: usize, order: usize) -> Result<Vec<T>, SgError> {
    if window % 2 == 0 || window <= order {
        return Err(SgError::BadWindow { window, order });
    }
    if data.len() < window {
        return Err(SgError::TooShort { len: data.len(), window });
    }
    let m = window / 2;
    let interior: Vec<isize> = (-(m as isize)..=(m as isize)).collect();
    let w_interior = sg_weights::<T>(&interior, order);
    let n = data.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(m);
        let hi = (i + m).min(n - 1);
        if hi - lo + 1 == window {
            let mut acc = T::zero();
            for (w, &v) in w_interior.iter().zip(&data[lo..=hi]) {
                acc += *w * v;
            }
            out.push(acc);
        } else {
            let offsets: Vec<isize> = (lo..=hi).map(|j| j as isize - i as isize).collect();
            let w = sg_weights::<T>(&offsets, order);
            let mut acc = T::zero();
            for (wj, &v) in w.iter().zip(&data[lo..=hi]) {
                acc += *wj * v;
            }
            out.push(acc);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};

    /// Textbook closed form for the symmetric quadratic smoothing weights:
    /// w_j = (3 (3 m^2 + 3 m - 1) - 15 j^2) / ((2m-1)(2m+1)(2m+3)).
    fn closed_form_weight(m: i64, j: i64) -> f64 {
        let num = 3.0 * (3 * m * m + 3 * m - 1) as f64 - 15.0 * (j * j) as f64;
        let den = ((2 * m - 1) * (2 * m + 1) * (2 * m + 3)) as f64;
        num / den
    }

    #[test]
    fn interior_weights_match_closed_form() {
        let m = 12isize;
        let offsets: Vec<isize> = (-m..=m).collect();
        let w = sg_weights::<f64>(&offsets, 2);
        for (idx, &j) in offsets.iter().enumerate() {
            assert_relative_eq!(
                w[idx],
                closed_form_weight(m as i64, j as i64),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn weights_sum_to_one_and_are_symmetric() {
        let offsets: Vec<isize> = (-12..=12).collect();
        let w = sg_weights::<f64>(&offsets, 2);
        let sum: f64 = w.iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        for k in 0..w.len() {
            assert_abs_diff_eq!(w[k], w[w.len() - 1 - k], epsilon = 1e-12);
        }
    }

    #[test]
    fn quadratics_pass_through_unchanged() {
        let data: Vec<f64> =
            (0..343).map(|i| 0.3 - 0.002 * i as f64 + 1.7e-5 * (i * i) as f64).collect();
        let smoothed = sg_smooth(&data, 25, 2).unwrap();
        for (a, b) in data.iter().zip(&smoothed) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn constants_are_preserved() {
        let data = vec![0.75f64; 60];
        let smoothed = sg_smooth(&data, 25, 2).unwrap();
        for v in smoothed {
            assert_abs_diff_eq!(v, 0.75, epsilon = 1e-13);
        }
    }

    #[test]
    fn white_noise_is_attenuated_by_the_weight_norm() {
        // Noise gain of a projection smoother is ||w||^2; for m = 12,
        // order 2 that is about 0.090, so sigma drops to ~0.30 sigma.
        let offsets: Vec<isize> = (-12..=12).collect();
        let w = sg_weights::<f64>(&offsets, 2);
        let gain: f64 = w.iter().map(|x| x * x).sum();
        assert_relative_eq!(gain, 0.0902, max_relative = 1e-2);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let sigma = 0.1;
        let quad = |i: usize| 0.5 + 0.01 * i as f64 - 2e-5 * (i * i) as f64;
        let data: Vec<f64> =
            (0..343).map(|i| quad(i) + sigma * (rng.random::<f64>() - 0.5) * 12f64.sqrt()).collect();
        let smoothed = sg_smooth(&data, 25, 2).unwrap();
        let resid: Vec<f64> =
            (12..331).map(|i| smoothed[i] - quad(i)).collect();
        let var: f64 = resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64;
        let sigma_out = var.sqrt();
        assert!(
            sigma_out < sigma / 2.0,
            "smoothed sigma {sigma_out} not below half of input sigma {sigma}"
        );
        // And close to the predicted attenuation.
        assert_relative_eq!(sigma_out, sigma * gain.sqrt(), max_relative = 0.15);
    }

    #[test]
    fn rejects_bad_windows_and_short_input() {
        assert!(matches!(sg_smooth(&vec![0.0f64; 30], 24, 2), Err(SgError::BadWindow { .. })));
        assert!(matches!(sg_smooth(&vec![0.0f64; 30], 3, 4), Err(SgError::BadWindow { .. })));
        assert!(matches!(sg_smooth(&vec![0.0f64; 10], 25, 2), Err(SgError::TooShort { .. })));
    }
}
