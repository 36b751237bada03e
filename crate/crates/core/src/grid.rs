//! Polar cell-centred grids on the unit disk and on concentric annuli, and
//! the scalar fields that live on them.
//!
//! Cell `(j, k)` has its centre at `r_j = a + (j + 1/2) dr`,
//! `theta_k = (k + 1/2) dtheta` and measure `w_j = r_j dr dtheta`. Every
//! integral, norm and rearrangement measure in the crate uses this midpoint
//! quadrature.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Structured polar discretization of `{a < r < 1}` (`a = 0` is the disk).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    a: f64,
    nr: usize,
    ntheta: usize,
    dr: f64,
    dtheta: f64,
    r_centers: Vec<f64>,
    theta_centers: Vec<f64>,
    ring_measures: Vec<f64>,
}

pub type GridRef = Arc<Grid>;

/// Builds a shared grid, rejecting empty domains and undersized counts.
pub fn make_grid(a: f64, nr: usize, ntheta: usize) -> Result<GridRef> {
    Grid::new(a, nr, ntheta).map(Arc::new)
}

impl Grid {
    pub fn new(a: f64, nr: usize, ntheta: usize) -> Result<Self> {
        if !a.is_finite() || !(0.0..1.0).contains(&a) {
            return Err(Error::InvalidGrid(format!(
                "inner radius must satisfy 0 <= a < 1, got {a}"
            )));
        }
        if nr < 4 {
            return Err(Error::InvalidGrid(format!("nr must be >= 4, got {nr}")));
        }
        if ntheta < 8 || !ntheta.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "ntheta must be even and >= 8, got {ntheta}"
            )));
        }
        let dr = (1.0 - a) / nr as f64;
        let dtheta = 2.0 * PI / ntheta as f64;
        let r_centers: Vec<f64> = (0..nr).map(|j| a + (j as f64 + 0.5) * dr).collect();
        let theta_centers = (0..ntheta).map(|k| (k as f64 + 0.5) * dtheta).collect();
        let ring_measures = r_centers.iter().map(|r| r * dr * dtheta).collect();
        Ok(Self {
            a,
            nr,
            ntheta,
            dr,
            dtheta,
            r_centers,
            theta_centers,
            ring_measures,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn nr(&self) -> usize {
        self.nr
    }
    pub fn ntheta(&self) -> usize {
        self.ntheta
    }
    pub fn dr(&self) -> f64 {
        self.dr
    }
    pub fn dtheta(&self) -> f64 {
        self.dtheta
    }
    pub fn len(&self) -> usize {
        self.nr * self.ntheta
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn is_disk(&self) -> bool {
        self.a == 0.0
    }

    /// Number of inner boundary components (0 for the disk, 1 for an annulus).
    pub fn inner_boundaries(&self) -> usize {
        usize::from(!self.is_disk())
    }

    pub fn r(&self, j: usize) -> f64 {
        self.r_centers[j]
    }
    pub fn theta(&self, k: usize) -> f64 {
        self.theta_centers[k]
    }
    pub fn r_centers(&self) -> &[f64] {
        &self.r_centers
    }
    pub fn theta_centers(&self) -> &[f64] {
        &self.theta_centers
    }

    /// Radius of the face between rings `j - 1` and `j` (`j = 0` is the inner edge).
    pub fn r_face(&self, j: usize) -> f64 {
        self.a + j as f64 * self.dr
    }

    /// Measure of every cell in ring `j`.
    pub fn ring_measure(&self, j: usize) -> f64 {
        self.ring_measures[j]
    }

    pub fn measure(&self, idx: usize) -> f64 {
        self.ring_measures[idx / self.ntheta]
    }

    pub fn index(&self, j: usize, k: usize) -> usize {
        j * self.ntheta + k
    }

    /// Sum of all cell measures.
    pub fn total_measure(&self) -> f64 {
        self.ring_measures.iter().sum::<f64>() * self.ntheta as f64
    }

    /// Exact area `pi (1 - a^2)` of the continuous domain.
    pub fn exact_area(&self) -> f64 {
        PI * (1.0 - self.a * self.a)
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.a == other.a && self.nr == other.nr && self.ntheta == other.ntheta
    }
}

/// Cell-centred real values on a grid, stored ring by ring.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: GridRef,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &GridRef) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &GridRef, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: &GridRef, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at cell {i}")));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    /// Samples `f(r, theta)` at cell centres.
    pub fn from_fn(grid: &GridRef, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for &r in grid.r_centers() {
            for &t in grid.theta_centers() {
                values.push(f(r, t));
            }
        }
        Self {
            grid: grid.clone(),
            values,
        }
    }

    /// Samples a radial profile `f(r)`.
    pub fn radial(grid: &GridRef, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |r, _| f(r))
    }

    pub(crate) fn from_parts(grid: GridRef, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[j * self.grid.ntheta() + k]
    }
    pub fn ring(&self, j: usize) -> &[f64] {
        let n = self.grid.ntheta();
        &self.values[j * n..(j + 1) * n]
    }

    pub fn check_grid(&self, other: &ScalarField) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_shape(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch("fields live on different grids".into()))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &ScalarField) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn add_constant(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sum f_jk w_jk`.
    pub fn integrate(&self) -> f64 {
        let n = self.grid.ntheta();
        self.values
            .chunks(n)
            .enumerate()
            .map(|(j, ring)| ring.iter().sum::<f64>() * self.grid.ring_measure(j))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.integrate() / self.grid.total_measure()
    }

    pub fn inner(&self, other: &ScalarField) -> f64 {
        let n = self.grid.ntheta();
        self.values
            .chunks(n)
            .zip(other.values.chunks(n))
            .enumerate()
            .map(|(j, (a, b))| {
                a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * self.grid.ring_measure(j)
            })
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Measure-weighted `(sum |f|^p w)^(1/p)`; `p` must be at least 1.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::InvalidArgument(format!("L^p norm needs 1 <= p < inf, got {p}")));
        }
        Ok(self.lp_norm_unchecked(p))
    }

    pub(crate) fn lp_norm_unchecked(&self, p: f64) -> f64 {
        let n = self.grid.ntheta();
        let s: f64 = self
            .values
            .chunks(n)
            .enumerate()
            .map(|(j, ring)| {
                let ring_sum: f64 = if p == 2.0 {
                    ring.iter().map(|v| v * v).sum()
                } else {
                    ring.iter().map(|v| v.abs().powf(p)).sum()
                };
                ring_sum * self.grid.ring_measure(j)
            })
            .sum();
        s.powf(1.0 / p)
    }

    /// `||self - other||_p`.
    pub fn lp_distance(&self, other: &ScalarField, p: f64) -> Result<f64> {
        self.check_grid(other)?;
        (self - other).lp_norm(p)
    }

    /// `integral of r^2 f`, the moment of inertia of a vorticity field.
    pub fn moment_of_inertia(&self) -> f64 {
        let n = self.grid.ntheta();
        self.values
            .chunks(n)
            .enumerate()
            .map(|(j, ring)| {
                let r = self.grid.r(j);
                ring.iter().sum::<f64>() * r * r * self.grid.ring_measure(j)
            })
            .sum()
    }
}

impl<'a> Add<&'a ScalarField> for &'a ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &'a ScalarField) -> ScalarField {
        self.axpy(1.0, rhs)
    }
}

impl<'a> Sub<&'a ScalarField> for &'a ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &'a ScalarField) -> ScalarField {
        self.axpy(-1.0, rhs)
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, s: f64) -> ScalarField {
        self.scale(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn disk_and_annulus_areas() {
        let disk = make_grid(0.0, 64, 128).unwrap();
        assert_relative_eq!(disk.total_measure(), PI, max_relative = 1e-3);
        let ann = make_grid(0.5, 64, 128).unwrap();
        assert_relative_eq!(ann.total_measure(), 0.75 * PI, max_relative = 1e-3);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_grid(1.0, 64, 128).is_err());
        assert!(make_grid(-0.1, 64, 128).is_err());
        assert!(make_grid(0.0, 64, 127).is_err());
        assert!(make_grid(0.0, 3, 128).is_err());
        assert!(make_grid(0.0, 8, 6).is_err());
    }

    #[test]
    fn centres_and_measures() {
        let g = make_grid(0.0, 16, 32).unwrap();
        assert!(g.r_centers().windows(2).all(|w| w[1] > w[0]));
        assert!(g.r(0) > 0.0);
        assert!((0..g.nr()).all(|j| g.ring_measure(j) > 0.0));
    }

    #[test]
    fn integrals() {
        let g = make_grid(0.0, 64, 128).unwrap();
        let one = ScalarField::constant(&g, 1.0);
        assert_relative_eq!(one.integrate(), PI, max_relative = 1e-3);
        assert_eq!(ScalarField::zeros(&g).integrate(), 0.0);
        let r2 = ScalarField::radial(&g, |r| r * r);
        assert_relative_eq!(r2.integrate(), PI / 2.0, max_relative = 1e-3);
        assert_relative_eq!(one.lp_norm(2.0).unwrap(), PI.sqrt(), max_relative = 1e-3);
        assert_relative_eq!(ScalarField::constant(&g, 3.5).mean(), 3.5, max_relative = 1e-14);
        assert!(one.lp_norm(0.5).is_err());
    }

    #[test]
    fn midpoint_area_converges_at_second_order() {
        for &a in &[0.0, 0.5] {
            let e1 = (make_grid(a, 16, 32).unwrap().total_measure() - PI * (1.0 - a * a)).abs();
            let e2 = (make_grid(a, 32, 64).unwrap().total_measure() - PI * (1.0 - a * a)).abs();
            // the midpoint rule integrates r exactly, so both errors sit at roundoff
            assert!(e2 <= e1.max(1e-13) * 0.25 + 1e-13);
        }
    }
}
