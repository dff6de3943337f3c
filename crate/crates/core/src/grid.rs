//! Uniform periodic grids on a square torus.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A uniform periodic grid with the same extent and point count on each axis.
///
/// Nodes sit at `x_i = i * h`; in two dimensions the flat index is `i * n + j`
/// with `i` the first (slow) axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub d: usize,
    pub extent: f64,
    pub points: usize,
}

/// Validate and build a grid.
pub fn build_grid(d: usize, extent: f64, points: usize) -> Result<Grid> {
    if d != 1 && d != 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    if points < 8 || !points.is_power_of_two() {
        return Err(Error::BadPoints(points));
    }
    if !(extent.is_finite() && extent > 0.0) {
        return Err(Error::InvalidParameter(format!("extent must be positive, got {extent}")));
    }
    Ok(Grid { d, extent, points })
}

impl Grid {
    pub fn h(&self) -> f64 {
        self.extent / self.points as f64
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.points.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume element of one node.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    /// Total volume of the torus.
    pub fn volume(&self) -> f64 {
        self.extent.powi(self.d as i32)
    }

    /// Multi-index of a flat index.
    pub fn multi(&self, idx: usize) -> [usize; 2] {
        if self.d == 1 {
            [idx, 0]
        } else {
            [idx / self.points, idx % self.points]
        }
    }

    /// Flat index of a multi-index, wrapping each component.
    pub fn flat(&self, i: isize, j: isize) -> usize {
        let n = self.points as isize;
        let i = i.rem_euclid(n) as usize;
        if self.d == 1 {
            i
        } else {
            i * self.points + j.rem_euclid(n) as usize
        }
    }

    /// Coordinates of a node.
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let m = self.multi(idx);
        let h = self.h();
        [m[0] as f64 * h, m[1] as f64 * h]
    }

    /// Signed periodic displacement of a coordinate from the origin, in `[-extent/2, extent/2)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let e = self.extent;
        let y = x.rem_euclid(e);
        if y >= 0.5 * e {
            y - e
        } else {
            y
        }
    }

    /// Periodic displacement vector of a node from a center point.
    pub fn displacement(&self, idx: usize, center: [f64; 2]) -> [f64; 2] {
        let x = self.coords(idx);
        if self.d == 1 {
            [self.wrap(x[0] - center[0]), 0.0]
        } else {
            [self.wrap(x[0] - center[0]), self.wrap(x[1] - center[1])]
        }
    }

    /// Torus distance of a node to a center point.
    pub fn distance(&self, idx: usize, center: [f64; 2]) -> f64 {
        let r = self.displacement(idx, center);
        (r[0] * r[0] + r[1] * r[1]).sqrt()
    }

    /// Largest radius of a ball that does not wrap around the torus.
    pub fn half_width(&self) -> f64 {
        0.5 * self.extent
    }

    /// Integer wavenumber of a one-dimensional mode index in `[-n/2, n/2)`.
    pub fn mode(&self, k: usize) -> isize {
        let n = self.points;
        if k < n / 2 {
            k as isize
        } else {
            k as isize - n as isize
        }
    }

    /// Angular wavevector of a flat spectral index.
    pub fn wavevector(&self, idx: usize) -> [f64; 2] {
        let m = self.multi(idx);
        let s = 2.0 * std::f64::consts::PI / self.extent;
        if self.d == 1 {
            [s * self.mode(m[0]) as f64, 0.0]
        } else {
            [s * self.mode(m[0]) as f64, s * self.mode(m[1]) as f64]
        }
    }

    /// Wavevector used for spectral derivatives: Nyquist components are zeroed.
    pub fn derivative_wavevector(&self, idx: usize) -> [f64; 2] {
        let m = self.multi(idx);
        let mut k = self.wavevector(idx);
        let nyq = self.points / 2;
        if m[0] == nyq {
            k[0] = 0.0;
        }
        if self.d == 2 && m[1] == nyq {
            k[1] = 0.0;
        }
        k
    }

    /// Whether any axis of the flat spectral index sits on the Nyquist mode.
    pub fn touches_nyquist(&self, idx: usize) -> bool {
        let m = self.multi(idx);
        let nyq = self.points / 2;
        m[0] == nyq || (self.d == 2 && m[1] == nyq)
    }

    /// Nyquist angular frequency along one axis.
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI / self.h()
    }

    /// Discrete L2 norm of a field.
    pub fn norm(&self, u: &[f64]) -> f64 {
        (u.iter().map(|v| v * v).sum::<f64>() * self.cell_volume()).sqrt()
    }

    /// Root-mean-square value (L2 norm normalized by volume).
    pub fn rms(&self, u: &[f64]) -> f64 {
        (u.iter().map(|v| v * v).sum::<f64>() / u.len() as f64).sqrt()
    }

    /// Discrete integral of a field.
    pub fn integral(&self, u: &[f64]) -> f64 {
        u.iter().sum::<f64>() * self.cell_volume()
    }

    /// Grid average of a field.
    pub fn mean(&self, u: &[f64]) -> f64 {
        u.iter().sum::<f64>() / u.len() as f64
    }

    /// Sample a function of the node coordinates.
    pub fn sample(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(self.coords(i))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing() {
        assert_eq!(build_grid(1, 1.0, 256).unwrap().h(), 1.0 / 256.0);
        assert_eq!(build_grid(2, 64.0, 512).unwrap().h(), 0.125);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(build_grid(3, 1.0, 256), Err(Error::UnsupportedDimension(3))));
        assert!(matches!(build_grid(1, 1.0, 100), Err(Error::BadPoints(100))));
        assert!(matches!(build_grid(1, 1.0, 4), Err(Error::BadPoints(4))));
    }

    #[test]
    fn wrapping() {
        let g = build_grid(2, 8.0, 8).unwrap();
        assert_eq!(g.flat(-1, 0), 7 * 8);
        assert_eq!(g.flat(8, 9), 1);
        assert!((g.distance(g.flat(7, 0), [0.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nyquist_derivative_is_zero() {
        let g = build_grid(1, 1.0, 8).unwrap();
        assert_eq!(g.derivative_wavevector(4)[0], 0.0);
        assert!(g.touches_nyquist(4));
        assert!(g.wavevector(5)[0] < 0.0);
    }
}
