//! Angular Fourier transforms ring by ring.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{GridRef, ScalarField};

#[derive(Clone)]
pub(crate) struct RingFft {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RingFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RingFft({})", self.n)
    }
}

impl RingFft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    /// Signed wavenumber of coefficient slot `i`; the Nyquist slot maps to `n/2`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i <= self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Forward transform of every ring of `values` (nr x n), in place into `out`.
    pub fn forward_all(&self, values: &[f64], out: &mut Vec<Complex64>) {
        out.clear();
        out.extend(values.iter().map(|&v| Complex64::new(v, 0.0)));
        self.fwd.process(out);
    }

    /// Inverse of [`forward_all`], keeping the real part.
    pub fn inverse_all(&self, coeffs: &mut [Complex64], out: &mut [f64]) {
        self.inv.process(coeffs);
        let s = 1.0 / self.n as f64;
        for (o, c) in out.iter_mut().zip(coeffs.iter()) {
            *o = c.re * s;
        }
    }

    /// Multiplies each coefficient by `factor(m)` for its signed wavenumber.
    /// The Nyquist slot only keeps the real part of its factor.
    pub fn apply_multiplier(&self, values: &[f64], factor: impl Fn(i64) -> Complex64) -> Vec<f64> {
        let mut buf = Vec::with_capacity(values.len());
        self.forward_all(values, &mut buf);
        let n = self.n;
        let factors: Vec<Complex64> = (0..n)
            .map(|i| {
                let f = factor(self.wavenumber(i));
                if i == n / 2 {
                    Complex64::new(f.re, 0.0)
                } else {
                    f
                }
            })
            .collect();
        for ring in buf.chunks_mut(n) {
            for (c, f) in ring.iter_mut().zip(&factors) {
                *c *= f;
            }
        }
        let mut out = vec![0.0; values.len()];
        self.inverse_all(&mut buf, &mut out);
        out
    }
}

/// Rigid rotation `f(r, theta + alpha)` applied as Fourier phase shifts.
pub fn rotate(field: &ScalarField, alpha: f64) -> ScalarField {
    let fft = RingFft::new(field.grid().ntheta());
    rotate_with(&fft, field, alpha)
}

pub(crate) fn rotate_with(fft: &RingFft, field: &ScalarField, alpha: f64) -> ScalarField {
    let out = fft.apply_multiplier(field.values(), |m| {
        Complex64::from_polar(1.0, m as f64 * alpha)
    });
    ScalarField::from_parts(field.grid().clone(), out)
}

/// Spectral angular derivative.
pub fn d_theta(field: &ScalarField) -> ScalarField {
    let fft = RingFft::new(field.grid().ntheta());
    let n2 = (field.grid().ntheta() / 2) as i64;
    let out = fft.apply_multiplier(field.values(), |m| {
        if m == n2 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, m as f64)
        }
    });
    ScalarField::from_parts(field.grid().clone(), out)
}

/// Ring means (the `m = 0` Fourier component of each ring).
pub fn ring_means(field: &ScalarField) -> Vec<f64> {
    let n = field.grid().ntheta();
    field
        .values()
        .chunks(n)
        .map(|ring| ring.iter().sum::<f64>() / n as f64)
        .collect()
}

/// Field that repeats a radial profile on every ring.
pub fn radial_field(grid: &GridRef, profile: &[f64]) -> ScalarField {
    let n = grid.ntheta();
    let mut values = Vec::with_capacity(grid.len());
    for &p in profile {
        values.extend(std::iter::repeat_n(p, n));
    }
    ScalarField::from_parts(grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn rotation_is_exact_for_band_limited_fields() {
        let g = make_grid(0.0, 8, 32).unwrap();
        let f = ScalarField::from_fn(&g, |r, t| r * (t.cos() + 0.3 * (3.0 * t).sin()));
        let rotated = rotate(&f, 0.7);
        let expect = ScalarField::from_fn(&g, |r, t| {
            r * ((t + 0.7).cos() + 0.3 * (3.0 * (t + 0.7)).sin())
        });
        assert!((&rotated - &expect).max_abs() < 1e-13);
    }

    #[test]
    fn derivative_of_cosine() {
        let g = make_grid(0.0, 4, 16).unwrap();
        let f = ScalarField::from_fn(&g, |_, t| (2.0 * t).cos());
        let d = d_theta(&f);
        let expect = ScalarField::from_fn(&g, |_, t| -2.0 * (2.0 * t).sin());
        assert!((&d - &expect).max_abs() < 1e-13);
    }
}
