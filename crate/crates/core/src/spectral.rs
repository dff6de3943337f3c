//! FFT plumbing on periodic grids.

use crate::grid::Grid;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Forward and inverse transforms for one grid.
///
/// The forward transform is unnormalized; the inverse divides by the node count,
/// so `inverse(forward(u)) == u` up to roundoff.
#[derive(Clone)]
pub struct Spectral {
    pub grid: Grid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

impl Spectral {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid.points);
        let inv = planner.plan_fft_inverse(grid.points);
        Spectral { grid, fwd, inv }
    }

    fn run(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.points;
        plan.process(data);
        if self.grid.d == 2 {
            transpose(data, n);
            plan.process(data);
            transpose(data, n);
        }
    }

    pub fn forward_complex(&self, data: &mut [Complex64]) {
        self.run(data, &self.fwd);
    }

    pub fn inverse_complex(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv);
        let s = 1.0 / data.len() as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    pub fn forward(&self, u: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_complex(&mut data);
        data
    }

    /// Inverse transform keeping the real part.
    pub fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inverse_complex(&mut spec);
        spec.into_iter().map(|c| c.re).collect()
    }

    /// Apply a real-space-preserving Fourier multiplier given per spectral index.
    pub fn multiply(&self, u: &[f64], m: impl Fn(usize) -> Complex64) -> Vec<f64> {
        let mut s = self.forward(u);
        for (i, v) in s.iter_mut().enumerate() {
            *v *= m(i);
        }
        self.inverse(s)
    }

    /// Spectral partial derivative along `axis` (Nyquist mode dropped).
    pub fn derivative(&self, u: &[f64], axis: usize) -> Vec<f64> {
        let g = self.grid;
        self.multiply(u, |i| Complex64::new(0.0, g.derivative_wavevector(i)[axis]))
    }

    /// Spectral gradient, one field per axis.
    pub fn gradient(&self, u: &[f64]) -> Vec<Vec<f64>> {
        let g = self.grid;
        let s = self.forward(u);
        (0..g.d)
            .map(|a| {
                let t: Vec<Complex64> = s
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * Complex64::new(0.0, g.derivative_wavevector(i)[a]))
                    .collect();
                self.inverse(t)
            })
            .collect()
    }

    /// Spectral divergence of a vector field.
    pub fn divergence(&self, f: &[Vec<f64>]) -> Vec<f64> {
        let g = self.grid;
        let mut acc = vec![Complex64::new(0.0, 0.0); g.len()];
        for (a, fa) in f.iter().enumerate().take(g.d) {
            let s = self.forward(fa);
            for (i, v) in s.iter().enumerate() {
                acc[i] += v * Complex64::new(0.0, g.derivative_wavevector(i)[a]);
            }
        }
        self.inverse(acc)
    }

    /// Mixed partial derivative for a list of axes (a multi-index), Nyquist dropped.
    pub fn mixed_derivative(&self, spec: &[Complex64], axes: &[usize]) -> Vec<f64> {
        let g = self.grid;
        let t: Vec<Complex64> = spec
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let k = g.derivative_wavevector(i);
                let mut f = Complex64::new(1.0, 0.0);
                for &a in axes {
                    f *= Complex64::new(0.0, k[a]);
                }
                v * f
            })
            .collect();
        self.inverse(t)
    }

    /// Solve `-Δφ = r` in the span of modes with nonzero derivative wavevector.
    ///
    /// Modes where the derivative wavevector vanishes (the mean and pure Nyquist
    /// combinations) form the discrete nullspace and are set to zero.
    pub fn inverse_laplacian(&self, r: &[f64]) -> Vec<f64> {
        let g = self.grid;
        let mut s = self.forward(r);
        for (i, v) in s.iter_mut().enumerate() {
            let k = g.derivative_wavevector(i);
            let k2 = k[0] * k[0] + k[1] * k[1];
            if k2 == 0.0 {
                *v = Complex64::new(0.0, 0.0);
            } else {
                *v /= k2;
            }
        }
        self.inverse(s)
    }

    /// Project a field onto the resolved (derivative-visible) modes plus the mean.
    pub fn project_resolved(&self, u: &[f64]) -> Vec<f64> {
        let g = self.grid;
        let mut s = self.forward(u);
        for (i, v) in s.iter_mut().enumerate() {
            if i != 0 && g.touches_nyquist(i) {
                let k = g.derivative_wavevector(i);
                if k[0] == 0.0 && k[1] == 0.0 {
                    *v = Complex64::new(0.0, 0.0);
                }
            }
        }
        self.inverse(s)
    }
}
