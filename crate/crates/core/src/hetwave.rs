//! Finite-difference reference solver for `∂ₜ²u = ∇·A∇u` on the torus.
//!
//! Flux-form second-order stencil: diagonal fluxes use harmonic averages of the
//! node coefficients at half nodes, off-diagonal fluxes use centered differences
//! of node values. Time stepping is kick-drift-kick leapfrog.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::media::CoefficientField;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Fraction of the stability bound used by default.
pub const CFL_FRACTION: f64 = 0.5;

/// Discretized `∇·A∇` on the torus.
#[derive(Debug, Clone)]
pub struct Operator {
    pub grid: Grid,
    /// Half-node coefficient between node `i` and its `+1` neighbor, per axis.
    half: Vec<Vec<f64>>,
    /// Off-diagonal node values (2D only).
    off: Option<Vec<f64>>,
    pub ceiling: f64,
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

impl Operator {
    pub fn new(field: &CoefficientField) -> Self {
        let g = field.grid;
        let n = g.points as isize;
        let half = (0..g.d)
            .map(|axis| {
                (0..g.len())
                    .map(|i| {
                        let m = g.multi(i);
                        let (a, b) = (m[0] as isize, m[1] as isize);
                        let j = if axis == 0 { g.flat((a + 1) % n, b) } else { g.flat(a, (b + 1) % n) };
                        harmonic(field.a(i, axis, axis), field.a(j, axis, axis))
                    })
                    .collect()
            })
            .collect();
        let off = if g.d == 2 && field.values[1].iter().any(|&v| v != 0.0) { Some(field.values[1].clone()) } else { None };
        Operator { grid: g, half, off, ceiling: field.ceiling }
    }

    /// Largest stable leapfrog step `h/(√ceiling·√d)`.
    pub fn cfl_bound(&self) -> f64 {
        self.grid.h() / (self.ceiling.sqrt() * (self.grid.d as f64).sqrt())
    }

    /// Default step, half the stability bound.
    pub fn default_dt(&self) -> f64 {
        CFL_FRACTION * self.cfl_bound()
    }

    /// `(Lu)_i` at one node.
    #[inline]
    fn at(&self, u: &[f64], i: usize) -> f64 {
        let g = &self.grid;
        let h2 = g.h() * g.h();
        if g.d == 1 {
            let n = g.points;
            let l = if i == 0 { n - 1 } else { i - 1 };
            let r = if i + 1 == n { 0 } else { i + 1 };
            let c = &self.half[0];
            return (c[i] * (u[r] - u[i]) - c[l] * (u[i] - u[l])) / h2;
        }
        let m = g.multi(i);
        let (a, b) = (m[0] as isize, m[1] as isize);
        let xp = g.flat(a + 1, b);
        let xm = g.flat(a - 1, b);
        let yp = g.flat(a, b + 1);
        let ym = g.flat(a, b - 1);
        let cx = &self.half[0];
        let cy = &self.half[1];
        let mut v = (cx[i] * (u[xp] - u[i]) - cx[xm] * (u[i] - u[xm])) / h2
            + (cy[i] * (u[yp] - u[i]) - cy[ym] * (u[i] - u[ym])) / h2;
        if let Some(o) = &self.off {
            // D_x(a₁₂ D_y u) + D_y(a₁₂ D_x u) with centered differences.
            let dx = o[xp] * (u[g.flat(a + 1, b + 1)] - u[g.flat(a + 1, b - 1)])
                - o[xm] * (u[g.flat(a - 1, b + 1)] - u[g.flat(a - 1, b - 1)]);
            let dy = o[yp] * (u[g.flat(a + 1, b + 1)] - u[g.flat(a - 1, b + 1)])
                - o[ym] * (u[g.flat(a + 1, b - 1)] - u[g.flat(a - 1, b - 1)]);
            v += (dx + dy) / (4.0 * h2);
        }
        v
    }

    /// `out = L u`.
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        if self.grid.d == 1 {
            self.apply_1d(u, out);
        } else if u.len() >= 1 << 14 {
            out.par_iter_mut().enumerate().for_each(|(i, o)| *o = self.at(u, i));
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o = self.at(u, i);
            }
        }
    }

    fn apply_1d(&self, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        let s = 1.0 / (self.grid.h() * self.grid.h());
        let c = &self.half[0];
        if n < 3 {
            for (i, o) in out.iter_mut().enumerate() {
                *o = self.at(u, i);
            }
            return;
        }
        for i in 1..n - 1 {
            out[i] = (c[i] * (u[i + 1] - u[i]) - c[i - 1] * (u[i] - u[i - 1])) * s;
        }
        out[0] = self.at(u, 0);
        out[n - 1] = self.at(u, n - 1);
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.apply_into(u, &mut out);
        out
    }

    /// Node-based energy density whose sum is `-Σ u·Lu`.
    ///
    /// Each edge term `c(Δu/h)²` is split evenly between its two nodes; the
    /// off-diagonal part contributes `2a₁₂ D⁰ₓu D⁰ᵧu` with centered differences.
    pub fn energy_density(&self, u: &[f64]) -> Vec<f64> {
        let g = self.grid;
        let h = g.h();
        let mut e = vec![0.0; g.len()];
        for axis in 0..g.d {
            let c = &self.half[axis];
            for i in 0..g.len() {
                let m = g.multi(i);
                let (a, b) = (m[0] as isize, m[1] as isize);
                let j = if axis == 0 { g.flat(a + 1, b) } else { g.flat(a, b + 1) };
                let w = 0.5 * c[i] * ((u[j] - u[i]) / h).powi(2);
                e[i] += w;
                e[j] += w;
            }
        }
        if let Some(o) = &self.off {
            for (i, ei) in e.iter_mut().enumerate() {
                let m = g.multi(i);
                let (a, b) = (m[0] as isize, m[1] as isize);
                let dx = (u[g.flat(a + 1, b)] - u[g.flat(a - 1, b)]) / (2.0 * h);
                let dy = (u[g.flat(a, b + 1)] - u[g.flat(a, b - 1)]) / (2.0 * h);
                *ei += 2.0 * o[i] * dx * dy;
            }
        }
        e
    }

    /// Discrete divergence matching the stencil: backward differences.
    pub fn divergence(&self, f: &[Vec<f64>]) -> Vec<f64> {
        let g = self.grid;
        let h = g.h();
        (0..g.len())
            .map(|i| {
                let m = g.multi(i);
                let (a, b) = (m[0] as isize, m[1] as isize);
                let mut v = (f[0][i] - f[0][g.flat(a - 1, b)]) / h;
                if g.d == 2 {
                    v += (f[1][i] - f[1][g.flat(a, b - 1)]) / h;
                }
                v
            })
            .collect()
    }

    /// Dense matrix of `-L`, built column by column from the stencil.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.grid.len();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply_into(&e, &mut col);
            for i in 0..n {
                m[(i, j)] = -col[i];
            }
            e[j] = 0.0;
        }
        m
    }
}

/// Displacement and velocity at a time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveState {
    pub grid: Grid,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl WaveState {
    /// State at rest with displacement `u`.
    pub fn at_rest(grid: Grid, u: Vec<f64>) -> Self {
        let v = vec![0.0; u.len()];
        WaveState { grid, u, v, t: 0.0 }
    }
}

/// Leapfrog step for which one period of an eigenmode with eigenvalue `λ` is an integer number of steps.
///
/// The scheme advances `ψ` by the angle `arccos(1 - λdt²/2)` per step, so `M` steps
/// per period need `dt = 2 sin(π/M)/√λ`. Returns `(dt, M)` with the smallest `M`
/// whose step does not exceed `dt_max`.
pub fn period_step(lambda: f64, dt_max: f64) -> Result<(f64, usize)> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("eigenvalue must be positive, got {lambda}")));
    }
    let mut m = ((2.0 * std::f64::consts::PI / (lambda.sqrt() * dt_max)).ceil() as usize).max(3);
    loop {
        let dt = 2.0 * (std::f64::consts::PI / m as f64).sin() / lambda.sqrt();
        if dt <= dt_max {
            return Ok((dt, m));
        }
        m += 1;
    }
}

/// Time of one period in the discrete scheme: `M·dt` from [`period_step`].
pub fn discrete_period(lambda: f64, dt_max: f64) -> Result<f64> {
    let (dt, m) = period_step(lambda, dt_max)?;
    Ok(dt * m as f64)
}

/// Largest relative deviation `‖u_k - cos(kϑ)ψ‖/‖ψ‖` over one discrete period of an
/// eigenmode started at rest, with `cos ϑ = 1 - λdt²/2` and the step from [`period_step`].
pub fn standing_wave_defect(op: &Operator, psi: &[f64], lambda: f64, dt_max: f64) -> Result<f64> {
    let (dt, m) = period_step(lambda, dt_max.min(op.cfl_bound()))?;
    let angle = (1.0 - 0.5 * lambda * dt * dt).acos();
    let g = op.grid;
    let scale = g.norm(psi);
    let mut worst = 0.0f64;
    evolve_with(op, &WaveState::at_rest(g, psi.to_vec()), dt * m as f64, dt, |k, s| {
        let c = (k as f64 * angle).cos();
        let diff: Vec<f64> = s.u.iter().zip(psi).map(|(u, p)| u - c * p).collect();
        worst = worst.max(g.norm(&diff) / scale);
    })?;
    Ok(worst)
}

/// Step with `dt` (reduced so an integer number of steps lands on `t_end`).
pub fn evolve_heterogeneous(op: &Operator, state: &WaveState, t_end: f64, dt: f64) -> Result<WaveState> {
    evolve_with(op, state, t_end, dt, |_, _| {})
}

/// As [`evolve_heterogeneous`], calling `observe(step, state)` after every step.
pub fn evolve_with(
    op: &Operator,
    state: &WaveState,
    t_end: f64,
    dt: f64,
    mut observe: impl FnMut(usize, &WaveState),
) -> Result<WaveState> {
    let bound = op.cfl_bound();
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, bound });
    }
    if t_end < state.t {
        return Err(Error::InvalidParameter(format!("t_end {t_end} is before the state time {}", state.t)));
    }
    let span = t_end - state.t;
    let steps = (span / dt - 1e-9).ceil().max(0.0) as usize;
    let mut s = state.clone();
    if steps == 0 {
        return Ok(s);
    }
    let dt = span / steps as f64;
    let n = s.u.len();
    let mut acc = vec![0.0; n];
    op.apply_into(&s.u, &mut acc);
    for step in 1..=steps {
        for i in 0..n {
            s.v[i] += 0.5 * dt * acc[i];
            s.u[i] += dt * s.v[i];
        }
        op.apply_into(&s.u, &mut acc);
        for i in 0..n {
            s.v[i] += 0.5 * dt * acc[i];
        }
        s.t = state.t + step as f64 * dt;
        if step % 64 == 0 || step == steps {
            if s.u.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(step));
            }
        }
        observe(step, &s);
    }
    s.t = t_end;
    Ok(s)
}

/// `½∫v² + ½∫u·(-L)u`, the energy conserved by the semi-discrete flow.
pub fn energy(op: &Operator, state: &WaveState) -> f64 {
    let lu = op.apply(&state.u);
    let w = op.grid.cell_volume();
    0.5 * w * state.v.iter().map(|v| v * v).sum::<f64>() - 0.5 * w * state.u.iter().zip(&lu).map(|(a, b)| a * b).sum::<f64>()
}

/// Discrete energy conserved exactly by the leapfrog step of size `dt`.
///
/// With the half-step velocity `p = v + (dt/2)Lu` and `u' = u + dt·p` it reads
/// `½∫p² − ½∫u·Lu'`, which differs from [`energy`] by `O(dt²)`.
pub fn leapfrog_energy(op: &Operator, state: &WaveState, dt: f64) -> f64 {
    let lu = op.apply(&state.u);
    let p: Vec<f64> = state.v.iter().zip(&lu).map(|(v, l)| v + 0.5 * dt * l).collect();
    let next: Vec<f64> = state.u.iter().zip(&p).map(|(u, p)| u + dt * p).collect();
    let lnext = op.apply(&next);
    let w = op.grid.cell_volume();
    0.5 * w * p.iter().map(|v| v * v).sum::<f64>() - 0.5 * w * state.u.iter().zip(&lnext).map(|(a, b)| a * b).sum::<f64>()
}

/// Relative L² mass outside the ball `B_{r + c t}` after evolving `u°` from rest.
///
/// `c = √ceiling`. The cone must stay inside half the torus width.
pub fn finite_speed_check(op: &Operator, u0: &[f64], center: [f64; 2], r: f64, t: f64) -> Result<f64> {
    let g = op.grid;
    let reach = r + op.ceiling.sqrt() * t;
    if reach >= g.half_width() {
        return Err(Error::Horizon { needed: reach, available: g.half_width() });
    }
    let s = evolve_heterogeneous(op, &WaveState::at_rest(g, u0.to_vec()), t, op.default_dt())?;
    let total = g.norm(&s.u);
    if total == 0.0 {
        return Ok(0.0);
    }
    let outside: Vec<f64> = s.u.iter().enumerate().map(|(i, &v)| if g.distance(i, center) > reach { v } else { 0.0 }).collect();
    Ok(g.norm(&outside) / total)
}

/// Source terms of `(∂ₜ² - ∇·A∇)v = ∇·f + ∂ₜg + h`.
#[allow(clippy::type_complexity)]
pub struct Forcing<'a> {
    pub f: Option<Box<dyn Fn(f64) -> Vec<Vec<f64>> + Sync + 'a>>,
    pub g: Option<Box<dyn Fn(f64) -> Vec<f64> + Sync + 'a>>,
    pub h: Option<Box<dyn Fn(f64) -> Vec<f64> + Sync + 'a>>,
}

impl Forcing<'_> {
    pub fn none() -> Self {
        Forcing { f: None, g: None, h: None }
    }
}

/// Both sides of the forced-wave estimate at the final time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyEstimate {
    /// `‖vᵗ‖`.
    pub lhs: f64,
    /// `‖v°‖ + t·sup‖(f, g)‖ + t·sup‖∫₀ˢ h‖`.
    pub rhs: f64,
    pub ratio: f64,
}

/// Evolve the forced equation from `v°` at rest and compare against the estimate.
///
/// With `p = ∂ₜv - g` the system is `∂ₜv = p + g`, `∂ₜp = ∇·A∇v + ∇·f + h`,
/// stepped with the same kick-drift-kick scheme.
pub fn energy_estimate_check(op: &Operator, forcing: &Forcing, v0: &[f64], t: f64) -> Result<EnergyEstimate> {
    let g = op.grid;
    let n = g.len();
    if let Some(gf) = &forcing.g {
        let g0 = gf(0.0);
        if g.norm(&g0) > 1e-12 {
            return Err(Error::InvalidParameter("g must vanish at t = 0".into()));
        }
    }
    let dt0 = op.default_dt();
    let steps = (t / dt0).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    let src = |s: f64, v: &[f64]| -> Vec<f64> {
        let mut a = op.apply(v);
        if let Some(f) = &forcing.f {
            let d = op.divergence(&f(s));
            a.iter_mut().zip(&d).for_each(|(x, y)| *x += y);
        }
        if let Some(h) = &forcing.h {
            a.iter_mut().zip(h(s)).for_each(|(x, y)| *x += y);
        }
        a
    };
    let gval = |s: f64| forcing.g.as_ref().map_or_else(|| vec![0.0; n], |f| f(s));
    let fg_norm = |s: f64| {
        let mut acc = 0.0;
        if let Some(f) = &forcing.f {
            acc += f(s).iter().map(|c| g.norm(c).powi(2)).sum::<f64>();
        }
        if let Some(gf) = &forcing.g {
            acc += g.norm(&gf(s)).powi(2);
        }
        acc.sqrt()
    };
    let mut v = v0.to_vec();
    let mut p = vec![0.0; n];
    let mut hint = vec![0.0; n];
    let mut h_prev = forcing.h.as_ref().map(|h| h(0.0));
    let mut sup_fg = fg_norm(0.0);
    let mut sup_h = 0.0f64;
    let mut a = src(0.0, &v);
    for k in 0..steps {
        let s = k as f64 * dt;
        for i in 0..n {
            p[i] += 0.5 * dt * a[i];
        }
        let gm = gval(s + 0.5 * dt);
        for i in 0..n {
            v[i] += dt * (p[i] + gm[i]);
        }
        let s1 = s + dt;
        a = src(s1, &v);
        for i in 0..n {
            p[i] += 0.5 * dt * a[i];
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite(k + 1));
        }
        sup_fg = sup_fg.max(fg_norm(s1));
        if let (Some(h), Some(prev)) = (&forcing.h, h_prev.as_mut()) {
            let cur = h(s1);
            for i in 0..n {
                hint[i] += 0.5 * dt * (prev[i] + cur[i]);
            }
            *prev = cur;
            sup_h = sup_h.max(g.norm(&hint));
        }
    }
    let lhs = g.norm(&v);
    let rhs = g.norm(v0) + t * sup_fg + t * sup_h;
    Ok(EnergyEstimate { lhs, rhs, ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 } })
}

/// Boundary condition for eigenpair extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    Periodic,
    /// Zero value at node 0, i.e. on the box `[0, extent]` with its ends identified.
    Dirichlet,
}

/// Discrete eigenpair of `-∇·A∇`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Eigenpair {
    pub lambda: f64,
    /// Eigenstate on the full grid, normalized so that `h^d Σψ² = 1`.
    pub psi: Vec<f64>,
    /// `‖-Lψ - λψ‖`.
    pub residual: f64,
    pub boundary: Boundary,
    /// `(∫ψ²)² / ∫ψ⁴`, a length (area in 2D) measuring the extent of `ψ`.
    pub participation: f64,
}

fn finish_pair(op: &Operator, lambda: f64, mut psi: Vec<f64>, boundary: Boundary) -> Eigenpair {
    let g = op.grid;
    let nrm = g.norm(&psi);
    psi.iter_mut().for_each(|v| *v /= nrm);
    // Fix the sign so that the largest entry is positive.
    let big = psi.iter().fold(0.0f64, |a, &v| if v.abs() > a.abs() { v } else { a });
    if big < 0.0 {
        psi.iter_mut().for_each(|v| *v = -*v);
    }
    let lpsi = op.apply(&psi);
    let mut r: Vec<f64> = lpsi.iter().zip(&psi).map(|(l, p)| -l - lambda * p).collect();
    if boundary == Boundary::Dirichlet {
        r[0] = 0.0;
    }
    let residual = g.norm(&r);
    let w = g.cell_volume();
    let m2: f64 = psi.iter().map(|v| v * v).sum::<f64>() * w;
    let m4: f64 = psi.iter().map(|v| v.powi(4)).sum::<f64>() * w;
    Eigenpair { lambda, psi, residual, boundary, participation: m2 * m2 / m4 }
}

/// The `count` eigenpairs with eigenvalues closest to `target`, sorted by eigenvalue.
///
/// Dense symmetric solve in 1D; shift-invert subspace iteration in 2D.
pub fn discrete_eigenpairs(op: &Operator, count: usize, target: f64, boundary: Boundary) -> Result<Vec<Eigenpair>> {
    let g = op.grid;
    let full = op.dense();
    let keep: Vec<usize> = match boundary {
        Boundary::Periodic => (0..g.len()).collect(),
        Boundary::Dirichlet => {
            if g.d != 1 {
                return Err(Error::UnsupportedDimension(g.d));
            }
            (1..g.len()).collect()
        }
    };
    let m = full.select_rows(&keep).select_columns(&keep);
    let pairs = if g.d == 1 { dense_pairs(&m, count, target) } else { shift_invert(&m, count, target)? };
    let mut out: Vec<Eigenpair> = pairs
        .into_iter()
        .map(|(lambda, v)| {
            let mut psi = vec![0.0; g.len()];
            for (k, &i) in keep.iter().enumerate() {
                psi[i] = v[k];
            }
            finish_pair(op, lambda, psi, boundary)
        })
        .collect();
    out.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(out)
}

fn dense_pairs(m: &DMatrix<f64>, count: usize, target: f64) -> Vec<(f64, Vec<f64>)> {
    let eig = SymmetricEigen::new(m.clone());
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| (eig.eigenvalues[a] - target).abs().total_cmp(&(eig.eigenvalues[b] - target).abs()));
    idx.into_iter().take(count).map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().copied().collect())).collect()
}

fn shift_invert(m: &DMatrix<f64>, count: usize, target: f64) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = m.nrows();
    let block = (2 * count + 4).min(n);
    let shifted = m - DMatrix::identity(n, n) * target;
    let lu = shifted.lu();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = DMatrix::from_fn(n, block, |_, _| rng.random::<f64>() - 0.5);
    let mut best: Vec<(f64, Vec<f64>)> = Vec::new();
    for _ in 0..500 {
        let y = lu.solve(&x).ok_or_else(|| Error::InvalidParameter("shift hits an eigenvalue exactly".into()))?;
        let q = y.qr().q();
        let small = q.transpose() * m * &q;
        let eig = SymmetricEigen::new(0.5 * (&small + small.transpose()));
        let vecs = &q * &eig.eigenvectors;
        let mut idx: Vec<usize> = (0..block).collect();
        idx.sort_by(|&a, &b| (eig.eigenvalues[a] - target).abs().total_cmp(&(eig.eigenvalues[b] - target).abs()));
        best = idx
            .iter()
            .take(count)
            .map(|&i| (eig.eigenvalues[i], vecs.column(i).iter().copied().collect()))
            .collect();
        let worst = best
            .iter()
            .map(|(l, v)| {
                let vv = nalgebra::DVector::from_column_slice(v);
                (m * &vv - &vv * *l).norm() / vv.norm()
            })
            .fold(0.0f64, f64::max);
        x = vecs;
        if worst < 1e-11 * (1.0 + target.abs()) {
            break;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::media::{sample_periodic, PeriodicProfile};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn identity(d: usize, extent: f64, points: usize) -> Operator {
        let g = build_grid(d, extent, points).unwrap();
        Operator::new(&sample_periodic(&PeriodicProfile::identity(), extent / (extent.round().max(1.0)), &g).unwrap())
    }

    #[test]
    fn energy_density_sums_to_quadratic_form() {
        let g = build_grid(2, 4.0, 16).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let values = vec![
            (0..g.len()).map(|_| rng.random_range(2.0..3.0)).collect(),
            (0..g.len()).map(|_| rng.random_range(-0.5..0.5)).collect(),
            (0..g.len()).map(|_| rng.random_range(2.0..3.0)).collect(),
        ];
        let f = CoefficientField::from_components(g, values, crate::media::MediumKind::Random { seed: 3, range: 1.0, contrast: 2.0 }).unwrap();
        let op = Operator::new(&f);
        let u: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lu = op.apply(&u);
        let q: f64 = -u.iter().zip(&lu).map(|(a, b)| a * b).sum::<f64>();
        let e: f64 = op.energy_density(&u).iter().sum();
        assert!((q - e).abs() < 1e-10 * q.abs());
    }

    #[test]
    fn eigenmodes_stand() {
        let g = build_grid(1, 32.0, 128).unwrap();
        let profile = PeriodicProfile::Laminate { low: 1.0, high: 4.0 };
        let op = Operator::new(&sample_periodic(&profile, 4.0, &g).unwrap());
        for pair in discrete_eigenpairs(&op, 3, 0.5, Boundary::Periodic).unwrap() {
            assert!(standing_wave_defect(&op, &pair.psi, pair.lambda, op.default_dt()).unwrap() < 1e-9);
        }
    }

    #[test]
    fn period_step_closes_the_orbit() {
        let (dt, m) = period_step(0.3, 0.05).unwrap();
        assert!(dt <= 0.05);
        let angle = (1.0 - 0.3 * dt * dt / 2.0).acos();
        assert!((angle * m as f64 - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!(period_step(0.0, 0.1).is_err());
    }

    #[test]
    fn constants_stay_constant() {
        let op = identity(1, 16.0, 128);
        let s = WaveState::at_rest(op.grid, vec![2.5; 128]);
        let e = evolve_heterogeneous(&op, &s, 3.0, op.default_dt()).unwrap();
        assert!(e.u.iter().all(|&v| (v - 2.5).abs() < 1e-14));
        assert_eq!(energy(&op, &e), 0.0);
    }

    #[test]
    fn rejects_cfl_violation() {
        let op = identity(2, 16.0, 64);
        let s = WaveState::at_rest(op.grid, vec![0.0; 64 * 64]);
        assert!(matches!(evolve_heterogeneous(&op, &s, 1.0, 2.0 * op.cfl_bound()), Err(Error::Cfl { .. })));
    }

    #[test]
    fn leapfrog_invariant_and_energy_oscillation() {
        let op = identity(1, 32.0, 256);
        let g = op.grid;
        let s0 = WaveState::at_rest(g, g.sample(|x| (-(x[0] - 16.0).powi(2) / 4.0).exp()));
        let mut oscillation = Vec::new();
        for dt in [op.default_dt(), 0.5 * op.default_dt()] {
            let (e0, l0) = (energy(&op, &s0), leapfrog_energy(&op, &s0, dt));
            let (mut naive, mut exact) = (0.0f64, 0.0f64);
            evolve_with(&op, &s0, 8.0, dt, |_, s| {
                naive = naive.max((energy(&op, s) - e0).abs() / e0);
                exact = exact.max((leapfrog_energy(&op, s, dt) - l0).abs() / l0);
            })
            .unwrap();
            assert!(exact < 1e-12, "{exact}");
            oscillation.push(naive);
        }
        let rate = oscillation[0] / oscillation[1];
        assert!((3.5..4.5).contains(&rate), "{rate}");
    }

    #[test]
    fn time_reversal() {
        let op = identity(1, 32.0, 512);
        let g = op.grid;
        let u0 = g.sample(|x| (-(x[0] - 16.0).powi(2)).exp());
        let s = evolve_heterogeneous(&op, &WaveState::at_rest(g, u0.clone()), 5.0, op.default_dt()).unwrap();
        let mut back = s.clone();
        back.v.iter_mut().for_each(|v| *v = -*v);
        back.t = 0.0;
        let r = evolve_heterogeneous(&op, &back, 5.0, op.default_dt()).unwrap();
        let err = r.u.iter().zip(&u0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn stencil_matches_dense_matrix() {
        let g = build_grid(2, 1.0, 8).unwrap();
        let f = sample_periodic(
            &PeriodicProfile::CosineSeries { mean: 2.0, terms: vec![(0.5, [1, 0]), (0.3, [1, 1])] },
            1.0,
            &g,
        )
        .unwrap();
        let mut f = f;
        f.values[1] = f.values[0].iter().map(|v| 0.1 * (v - 2.0)).collect();
        let op = Operator::new(&f);
        let m = op.dense();
        assert!((&m - m.transpose()).abs().max() < 1e-12);
        let u: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
        let lu = op.apply(&u);
        let mu = &m * nalgebra::DVector::from_column_slice(&u);
        for i in 0..64 {
            assert!((lu[i] + mu[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_box_spectrum() {
        let op = identity(1, 1.0, 128);
        let pairs = discrete_eigenpairs(&op, 3, 0.0, Boundary::Dirichlet).unwrap();
        for (k, p) in pairs.iter().enumerate() {
            let exact = (PI * (k + 1) as f64).powi(2);
            assert!((p.lambda - exact).abs() / exact < 1e-3);
            assert!(p.residual < 1e-8);
            assert!((op.grid.norm(&p.psi) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn shift_invert_matches_dense() {
        let g = build_grid(2, 1.0, 8).unwrap();
        let f = sample_periodic(&PeriodicProfile::Cosine { mean: 2.0, amplitude: 1.0 }, 1.0, &g).unwrap();
        let op = Operator::new(&f);
        let eig = SymmetricEigen::new(op.dense());
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let target = 0.5 * (ev[5] + ev[6]) + 0.1;
        let pairs = discrete_eigenpairs(&op, 2, target, Boundary::Periodic).unwrap();
        for p in &pairs {
            assert!(ev.iter().any(|&l| (l - p.lambda).abs() < 1e-8 * l.max(1.0)));
            assert!(p.residual < 1e-8, "{}", p.residual);
        }
    }

    #[test]
    fn forced_estimate_zero_forcing() {
        let op = identity(1, 16.0, 256);
        let g = op.grid;
        let v0 = g.sample(|x| (-(x[0] - 8.0).powi(2)).exp());
        let e = energy_estimate_check(&op, &Forcing::none(), &v0, 2.0).unwrap();
        assert_eq!(e.rhs, g.norm(&v0));
        assert!(e.ratio <= 1.0 + 1e-12);
    }
}
