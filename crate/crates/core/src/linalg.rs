//! Dense least squares for the small systems in this crate.
//!
//! Problems here are at most a few thousand rows by a few dozen columns
//! (voltage solves, filter deconvolution, polynomial fits), so a plain
//! Householder QR is plenty.

use crate::real::Real;

/// Row-major dense matrix.
#[derive(Clone, Debug)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.at(r, c) * x[c]).sum())
            .collect()
    }
}

/// Householder QR factorization of an overdetermined matrix, reusable
/// across right-hand sides.
///
/// Reflectors are stored LAPACK-style: the head of each Householder vector
/// is an implicit 1, the tail lives below the diagonal.
pub struct QrLstsq<T> {
    a: Mat<T>,
    tau: Vec<T>,
}

impl<T: Real> QrLstsq<T> {
    /// Factor `a` (rows >= cols).
    pub fn new(mut a: Mat<T>) -> Self {
        let (m, n) = (a.rows, a.cols);
        assert!(m >= n, "least squares needs rows >= cols");
        let mut tau = vec![T::zero(); n];
        for k in 0..n {
            let mut norm2 = T::zero();
            for i in k..m {
                let v = a.at(i, k);
                norm2 += v * v;
            }
            let norm = norm2.sqrt();
            if norm == T::zero() {
                continue;
            }
            let x0 = a.at(k, k);
            let alpha = if x0 >= T::zero() { -norm } else { norm };
            let v0 = x0 - alpha;
            for i in (k + 1)..m {
                a.set(i, k, a.at(i, k) / v0);
            }
            tau[k] = -v0 / alpha;
            a.set(k, k, alpha);
            for j in (k + 1)..n {
                let mut dot = a.at(k, j);
                for i in (k + 1)..m {
                    dot += a.at(i, k) * a.at(i, j);
                }
                let s = tau[k] * dot;
                a.set(k, j, a.at(k, j) - s);
                for i in (k + 1)..m {
                    a.set(i, j, a.at(i, j) - s * a.at(i, k));
                }
            }
        }
        Self { a, tau }
    }

    /// Minimize `||A x - b||` for one right-hand side.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let (m, n) = (self.a.rows, self.a.cols);
        assert_eq!(b.len(), m);
        let mut y = b.to_vec();
        for k in 0..n {
            if self.tau[k] == T::zero() {
                continue;
            }
            let mut dot = y[k];
            for i in (k + 1)..m {
                dot += self.a.at(i, k) * y[i];
            }
            let s = self.tau[k] * dot;
            y[k] -= s;
            for i in (k + 1)..m {
                y[i] = y[i] - s * self.a.at(i, k);
            }
        }
        let mut x = vec![T::zero(); n];
        for k in (0..n).rev() {
            let mut acc = y[k];
            for j in (k + 1)..n {
                acc -= self.a.at(k, j) * x[j];
            }
            let r = self.a.at(k, k);
            x[k] = if r == T::zero() { T::zero() } else { acc / r };
        }
        x
    }
}

/// One-shot least squares.
pub fn lstsq<T: Real>(a: Mat<T>, b: &[T]) -> Vec<T> {
    QrLstsq::new(a).solve(b)
}

/// Fit a polynomial of degree `deg` to `(x, y)` samples, returning
/// coefficients in ascending order.
pub fn polyfit<T: Real>(x: &[T], y: &[T], deg: usize) -> Vec<T> {
    assert!(x.len() == y.len() && x.len() > deg);
    let mut a = Mat::zeros(x.len(), deg + 1);
    for (i, &xi) in x.iter().enumerate() {
        let mut p = T::one();
        for j in 0..=deg {
            a.set(i, j, p);
            p *= xi;
        }
    }
    lstsq(a, y)
}
