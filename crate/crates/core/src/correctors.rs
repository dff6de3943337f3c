//! Higher-order correctors, flux correctors and homogenized tensors.
//!
//! Correctors are stored symmetrized: the block of a multiset `J` holds the
//! average of `φⁿ_{j₁…jₙ}` over all orderings of `J`. Every downstream use
//! contracts against symmetric derivative stacks, so nothing is lost.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::media::CoefficientField;
use crate::spectral::Spectral;
use crate::tensor::{multiset_index, multisets, permutations, SymTensor};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Stopping rule of the fixed-point cell solver.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative change of `∇φ` (energy norm) between iterates.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tolerance: 1e-12, max_iterations: 10_000 }
    }
}

/// Result of one cell solve.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub phi: Vec<f64>,
    pub iterations: usize,
    /// Discrete H⁻¹ norm (per unit volume) of `-∇·(A∇φ + F) - s`.
    pub residual: f64,
}

/// Fourier–Galerkin solver for `-∇·A∇φ = ∇·F + s` on the torus.
///
/// Uses the fixed point `φ ← (-a₀Δ)⁻¹[∇·F + s + ∇·((A - a₀)∇φ)]` with the
/// reference `a₀ = (floor + ceiling)/2`, which contracts at rate `(C0-1)/(C0+1)`.
#[derive(Debug, Clone)]
pub struct CellSolver<'a> {
    pub field: &'a CoefficientField,
    pub spectral: Spectral,
    pub a0: f64,
    pub options: SolverOptions,
}

impl<'a> CellSolver<'a> {
    pub fn new(field: &'a CoefficientField, options: SolverOptions) -> Self {
        CellSolver {
            field,
            spectral: Spectral::new(field.grid),
            a0: 0.5 * (field.floor + field.ceiling),
            options,
        }
    }

    fn grad_from_spectrum(&self, s: &[Complex64]) -> Vec<Vec<f64>> {
        let g = self.field.grid;
        (0..g.d)
            .map(|a| {
                let t: Vec<Complex64> = s
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * Complex64::new(0.0, g.derivative_wavevector(i)[a]))
                    .collect();
                self.spectral.inverse(t)
            })
            .collect()
    }

    /// Spectrum of `∇·q`.
    fn div_spectrum(&self, q: &[Vec<f64>]) -> Vec<Complex64> {
        let g = self.field.grid;
        let mut acc = vec![Complex64::new(0.0, 0.0); g.len()];
        for (a, qa) in q.iter().enumerate() {
            let s = self.spectral.forward(qa);
            for (i, v) in s.iter().enumerate() {
                acc[i] += v * Complex64::new(0.0, g.derivative_wavevector(i)[a]);
            }
        }
        acc
    }

    /// Solve with optional divergence data `F` and scalar source `s` (zero mean).
    pub fn solve(&self, flux: Option<&[Vec<f64>]>, source: &[f64]) -> Result<CellSolution> {
        let g = self.field.grid;
        let n = g.len();
        let d = g.d;
        let k2: Vec<f64> = (0..n)
            .map(|i| {
                let k = g.derivative_wavevector(i);
                k[0] * k[0] + k[1] * k[1]
            })
            .collect();
        let s_hat = self.spectral.forward(source);
        let mut phi_hat = vec![Complex64::new(0.0, 0.0); n];
        let mut iterations = 0;
        loop {
            let grad = self.grad_from_spectrum(&phi_hat);
            let q: Vec<Vec<f64>> = (0..d)
                .map(|a| {
                    (0..n)
                        .map(|i| {
                            let mut v = flux.map_or(0.0, |f| f[a][i]);
                            for b in 0..d {
                                let ab = self.field.a(i, a, b) - if a == b { self.a0 } else { 0.0 };
                                v += ab * grad[b][i];
                            }
                            v
                        })
                        .collect()
                })
                .collect();
            let div = self.div_spectrum(&q);
            let mut change = 0.0;
            let mut size = 0.0;
            for i in 0..n {
                let new = if k2[i] == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    (div[i] + s_hat[i]) / (self.a0 * k2[i])
                };
                change += k2[i] * (new - phi_hat[i]).norm_sqr();
                size += k2[i] * new.norm_sqr();
                phi_hat[i] = new;
            }
            iterations += 1;
            let rel = if size > 0.0 { (change / size).sqrt() } else { 0.0 };
            if rel <= self.options.tolerance || size == 0.0 || change.sqrt() < 1e-300 {
                break;
            }
            if iterations >= self.options.max_iterations {
                let phi = self.spectral.inverse(phi_hat.clone());
                let residual = self.residual(&phi, flux, source);
                return Err(Error::NoConvergence { iterations, residual, contrast: self.field.contrast() });
            }
        }
        let phi = self.spectral.inverse(phi_hat);
        let residual = self.residual(&phi, flux, source);
        Ok(CellSolution { phi, iterations, residual })
    }

    /// Discrete H⁻¹ norm of `-∇·(A∇φ + F) - s`, restricted to resolved modes.
    pub fn residual(&self, phi: &[f64], flux: Option<&[Vec<f64>]>, source: &[f64]) -> f64 {
        let g = self.field.grid;
        let n = g.len();
        let grad = self.spectral.gradient(phi);
        let q: Vec<Vec<f64>> = (0..g.d)
            .map(|a| {
                (0..n)
                    .map(|i| {
                        let mut v = flux.map_or(0.0, |f| f[a][i]);
                        for (b, gb) in grad.iter().enumerate() {
                            v += self.field.a(i, a, b) * gb[i];
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        let div = self.div_spectrum(&q);
        let s_hat = self.spectral.forward(source);
        let mut acc = 0.0;
        for i in 0..n {
            let k = g.derivative_wavevector(i);
            let k2 = k[0] * k[0] + k[1] * k[1];
            if k2 > 0.0 {
                acc += (-div[i] - s_hat[i]).norm_sqr() / k2;
            }
        }
        (acc / (n as f64 * n as f64)).sqrt()
    }
}

/// Data of one corrector order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderData {
    pub n: usize,
    /// `φⁿ_J` per multiset `J` of size `n`.
    pub phi: Vec<Vec<f64>>,
    /// Flux potential `Φⁿ_J`, `d` components per block.
    pub potential: Vec<Vec<Vec<f64>>>,
    /// Flux corrector `σⁿ_J = ∇Φⁿ_J`, component `(i, l)` stored at `i*d + l`.
    pub sigma: Vec<Vec<Vec<f64>>>,
    /// Blocks `Āⁿ_K` (d×d, row-major) per multiset `K` of size `n-1`.
    pub blocks: Vec<Vec<f64>>,
    /// Full symmetrization of `ξ ↦ ξ·Āⁿ(ξ^{⊗(n-1)})ξ` as an order-(n+1) tensor.
    pub tensor: SymTensor,
    /// Worst weak residual of the corrector equation over blocks.
    pub residual: f64,
    /// Worst L² residual of the divergence identity over blocks.
    pub flux_residual: f64,
    pub iterations: usize,
}

/// Correctors through order `N`, with tensors and growth constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectorSet {
    pub grid: Grid,
    pub order: usize,
    /// Entry `n` holds order `n`; entry 0 is `φ⁰ ≡ 1`.
    pub orders: Vec<OrderData>,
    pub growth: Vec<f64>,
    /// Ellipticity floor and ceiling of the medium the set was built on.
    pub floor: f64,
    pub ceiling: f64,
}

impl CorrectorSet {
    pub fn d(&self) -> usize {
        self.grid.d
    }

    pub fn contrast(&self) -> f64 {
        self.ceiling / self.floor
    }

    /// `φⁿ` for a multiset (any ordering); `φ⁻¹ ≡ 0` is handled by callers.
    pub fn phi(&self, n: usize, idx: &[usize]) -> &[f64] {
        &self.orders[n].phi[multiset_index(self.d(), idx)]
    }

    /// Homogenized tensor of order `m` as an order-(m+1) symmetric tensor.
    pub fn tensor(&self, m: usize) -> &SymTensor {
        &self.orders[m].tensor
    }

    /// Block `Āᵐ_K[r][c]`.
    pub fn block(&self, m: usize, k: &[usize], r: usize, c: usize) -> f64 {
        let d = self.d();
        self.orders[m].blocks[multiset_index(d, k)][r * d + c]
    }

    /// The classical homogenized matrix `Ā¹` (row-major d×d).
    pub fn abar(&self) -> Vec<f64> {
        self.orders[1].blocks[0].clone()
    }

    /// Norm of the symmetrized tensor `Āᵐ`.
    pub fn tensor_norm(&self, m: usize) -> f64 {
        self.orders[m].tensor.norm()
    }

    /// Worst corrector and flux residuals over orders `1..=N`.
    pub fn worst_residuals(&self) -> (f64, f64) {
        self.orders[1..]
            .iter()
            .fold((0.0f64, 0.0f64), |acc, o| (acc.0.max(o.residual), acc.1.max(o.flux_residual)))
    }
}

fn order_zero(grid: Grid) -> OrderData {
    let d = grid.d;
    OrderData {
        n: 0,
        phi: vec![vec![1.0; grid.len()]],
        potential: vec![vec![vec![0.0; grid.len()]; d]],
        sigma: vec![vec![vec![0.0; grid.len()]; d * d]],
        blocks: Vec::new(),
        tensor: SymTensor::zeros(1, d),
        residual: 0.0,
        flux_residual: 0.0,
        iterations: 0,
    }
}

fn zeros(n: usize) -> Vec<f64> {
    vec![0.0; n]
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Full symmetrization of the blocks of order `m` into an order-(m+1) tensor.
///
/// The orderings `(k₁…k_{m-1}, c, r)` of each multiset are averaged over `Āᵐ_k[r][c]`.
pub fn symmetrize_blocks(d: usize, m: usize, blocks: &[Vec<f64>]) -> SymTensor {
    let mut t = SymTensor::zeros(m + 1, d);
    let perms = permutations(m + 1);
    for s in multisets(d, m + 1) {
        let mut acc = 0.0;
        for p in &perms {
            let seq: Vec<usize> = p.iter().map(|&i| s[i]).collect();
            let k = &seq[..m - 1];
            let c = seq[m - 1];
            let r = seq[m];
            acc += blocks[multiset_index(d, k)][r * d + c];
        }
        t.set(&s, acc / perms.len() as f64);
    }
    t
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum RhsTerm {
    /// `A e_{jn} φⁿ⁻¹_K` inside the divergence.
    Flux(usize, Vec<usize>),
    /// `e_{jn}·A∇φⁿ⁻¹_K`.
    Grad(usize, Vec<usize>),
    /// `A_{jn,jn-1} φⁿ⁻²_K`.
    Coef(usize, usize, Vec<usize>),
    /// `Tᵐ(S) φ^{n-m-1}_K` with `S` the symmetrized tensor slot.
    Tensor(usize, Vec<usize>, Vec<usize>),
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut s = v.to_vec();
    s.sort_unstable();
    s
}

/// Weights of the symmetrized right-hand side of the order-`n` corrector equation.
fn rhs_terms(j: &[usize]) -> BTreeMap<RhsTerm, f64> {
    let n = j.len();
    let perms = permutations(n);
    let w = 1.0 / perms.len() as f64;
    let mut terms = BTreeMap::new();
    for p in &perms {
        let seq: Vec<usize> = p.iter().map(|&i| j[i]).collect();
        let jn = seq[n - 1];
        *terms.entry(RhsTerm::Flux(jn, sorted(&seq[..n - 1]))).or_insert(0.0) += w;
        *terms.entry(RhsTerm::Grad(jn, sorted(&seq[..n - 1]))).or_insert(0.0) += w;
        if n >= 2 {
            let jn1 = seq[n - 2];
            *terms.entry(RhsTerm::Coef(jn, jn1, sorted(&seq[..n - 2]))).or_insert(0.0) += w;
            for m in 1..n {
                let mut slot = seq[..m - 1].to_vec();
                slot.push(jn1);
                slot.push(jn);
                let rest = sorted(&seq[m - 1..n - 2]);
                *terms.entry(RhsTerm::Tensor(m, sorted(&slot), rest)).or_insert(0.0) += w;
            }
        }
    }
    terms
}

/// Assemble `(F, s)` for block `J` at order `n`.
fn assemble_rhs(
    field: &CoefficientField,
    set: &CorrectorSet,
    grads: &[Vec<Vec<f64>>],
    j: &[usize],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let g = field.grid;
    let len = g.len();
    let d = g.d;
    let n = j.len();
    let mut flux = vec![zeros(len); d];
    let mut source = zeros(len);
    for (term, w) in rhs_terms(j) {
        match term {
            RhsTerm::Flux(jn, k) => {
                let phi = set.phi(n - 1, &k);
                for (a, fa) in flux.iter_mut().enumerate() {
                    for i in 0..len {
                        fa[i] += w * field.a(i, a, jn) * phi[i];
                    }
                }
            }
            RhsTerm::Grad(jn, k) => {
                let gr = &grads[multiset_index(d, &k)];
                for (b, gb) in gr.iter().enumerate() {
                    for i in 0..len {
                        source[i] += w * field.a(i, jn, b) * gb[i];
                    }
                }
            }
            RhsTerm::Coef(jn, jn1, k) => {
                let phi = set.phi(n - 2, &k);
                for i in 0..len {
                    source[i] += w * field.a(i, jn, jn1) * phi[i];
                }
            }
            RhsTerm::Tensor(m, slot, k) => {
                let t = set.tensor(m).get(&slot);
                if t != 0.0 {
                    let phi = set.phi(n - m - 1, &k);
                    for i in 0..len {
                        source[i] -= w * t * phi[i];
                    }
                }
            }
        }
    }
    (flux, source)
}

/// Solve all blocks of order `n` given a set complete through `n - 1`.
///
/// Returns the corrector fields and the worst weak residual.
pub fn solve_corrector(
    field: &CoefficientField,
    n: usize,
    lower: &CorrectorSet,
    options: SolverOptions,
) -> Result<(Vec<Vec<f64>>, f64, usize)> {
    if n == 0 || lower.orders.len() < n {
        return Err(Error::MissingOrder(n.saturating_sub(1)));
    }
    let g = field.grid;
    let d = g.d;
    let solver = CellSolver::new(field, options);
    let sp = &solver.spectral;
    let grads: Vec<Vec<Vec<f64>>> = lower.orders[n - 1].phi.iter().map(|p| sp.gradient(p)).collect();
    let blocks = multisets(d, n);
    let out: Vec<Result<CellSolution>> = blocks
        .par_iter()
        .map(|j| {
            let (flux, mut source) = assemble_rhs(field, lower, &grads, j);
            let m = mean(&source);
            let scale = source.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            if m.abs() > 1e-8 * scale {
                return Err(Error::NonzeroMean(m));
            }
            source.iter_mut().for_each(|v| *v -= m);
            let mut sol = solver.solve(Some(&flux), &source)?;
            let pm = mean(&sol.phi);
            sol.phi.iter_mut().for_each(|v| *v -= pm);
            Ok(sol)
        })
        .collect();
    let mut phis = Vec::with_capacity(out.len());
    let mut worst = 0.0f64;
    let mut iters = 0;
    for r in out {
        let s = r?;
        worst = worst.max(s.residual);
        iters = iters.max(s.iterations);
        phis.push(s.phi);
    }
    Ok((phis, worst, iters))
}

/// Blocks `Āᵐ_K[r][c] = ⟨e_r·A(∇φᵐ_{K∪c} + φ^{m-1}_K e_c)⟩` for all `K` of size `m-1`.
pub fn homogenized_tensor(field: &CoefficientField, m: usize, phi_m: &[Vec<f64>], lower: &CorrectorSet) -> Vec<Vec<f64>> {
    let g = field.grid;
    let d = g.d;
    let len = g.len();
    let sp = Spectral::new(g);
    let grads: Vec<Vec<Vec<f64>>> = phi_m.iter().map(|p| sp.gradient(p)).collect();
    multisets(d, m - 1)
        .iter()
        .map(|k| {
            let phi_lower = lower.phi(m - 1, k);
            let mut block = vec![0.0; d * d];
            for c in 0..d {
                let mut kc = k.clone();
                kc.push(c);
                let gr = &grads[multiset_index(d, &kc)];
                for r in 0..d {
                    let mut acc = 0.0;
                    for i in 0..len {
                        let mut v = field.a(i, r, c) * phi_lower[i];
                        for (b, gb) in gr.iter().enumerate() {
                            v += field.a(i, r, b) * gb[i];
                        }
                        acc += v;
                    }
                    block[r * d + c] = acc / len as f64;
                }
            }
            block
        })
        .collect()
}

/// Vector field `G_J` whose Laplacian potential defines the flux corrector.
fn flux_source(field: &CoefficientField, set: &CorrectorSet, n: usize, j: &[usize], grad_phi: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let g = field.grid;
    let d = g.d;
    let len = g.len();
    let mut out = vec![zeros(len); d];
    for (r, o) in out.iter_mut().enumerate() {
        for i in 0..len {
            o[i] = (0..d).map(|b| field.a(i, r, b) * grad_phi[b][i]).sum();
        }
    }
    let perms = permutations(n);
    let w = 1.0 / perms.len() as f64;
    let mut lower_terms: BTreeMap<(usize, Vec<usize>), f64> = BTreeMap::new();
    let mut tensor_terms: BTreeMap<(usize, Vec<usize>, usize, Vec<usize>), f64> = BTreeMap::new();
    for p in &perms {
        let seq: Vec<usize> = p.iter().map(|&i| j[i]).collect();
        let jn = seq[n - 1];
        *lower_terms.entry((jn, sorted(&seq[..n - 1]))).or_insert(0.0) += w;
        for m in 1..=n {
            let k = sorted(&seq[..m - 1]);
            let rest = sorted(&seq[m - 1..n - 1]);
            *tensor_terms.entry((m, k, jn, rest)).or_insert(0.0) += w;
        }
    }
    for ((jn, k), w) in lower_terms {
        let phi = set.phi(n - 1, &k);
        for (r, o) in out.iter_mut().enumerate() {
            for i in 0..len {
                o[i] += w * field.a(i, r, jn) * phi[i];
            }
        }
    }
    for ((m, k, jn, rest), w) in tensor_terms {
        let phi = set.phi(n - m, &rest);
        for (r, o) in out.iter_mut().enumerate() {
            let t = set.block(m, &k, r, jn);
            if t != 0.0 {
                for i in 0..len {
                    o[i] -= w * t * phi[i];
                }
            }
        }
    }
    out
}

/// Flux potentials `ΔΦⁿ_J = G_J` and flux correctors `σⁿ_J = ∇Φⁿ_J` for order `n`.
///
/// Returns `(Φ, σ, worst divergence-identity residual)`.
#[allow(clippy::type_complexity)]
pub fn solve_flux_potential(
    field: &CoefficientField,
    n: usize,
    set: &CorrectorSet,
) -> Result<(Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<f64>>>, f64)> {
    if set.orders.len() <= n {
        return Err(Error::MissingOrder(n));
    }
    let g = field.grid;
    let d = g.d;
    let sp = Spectral::new(g);
    let blocks = multisets(d, n);
    let out: Vec<Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, f64)>> = blocks
        .par_iter()
        .map(|j| {
            let grad_phi = sp.gradient(set.phi(n, j));
            let src = flux_source(field, set, n, j, &grad_phi);
            let scale = src.iter().flatten().fold(1.0f64, |a, v| a.max(v.abs()));
            for s in &src {
                let m = mean(s);
                if m.abs() > 1e-8 * scale {
                    return Err(Error::NonzeroMean(m));
                }
            }
            let potential: Vec<Vec<f64>> = src.iter().map(|s| sp.inverse_laplacian(s).into_iter().map(|v| -v).collect()).collect();
            let mut sigma = vec![Vec::new(); d * d];
            for (i, p) in potential.iter().enumerate() {
                for (l, gl) in sp.gradient(p).into_iter().enumerate() {
                    sigma[i * d + l] = gl;
                }
            }
            // Divergence identity (∇·σ)_i = Σ_l ∂_l σ_il against the resolved part of G_i.
            let mut acc = 0.0;
            for (i, s) in src.iter().enumerate() {
                let rows: Vec<Vec<f64>> = (0..d).map(|l| sigma[i * d + l].clone()).collect();
                let div = sp.divergence(&rows);
                let target = sp.project_resolved(s);
                let tm = mean(&target);
                acc += div.iter().zip(&target).map(|(a, b)| (a - (b - tm)).powi(2)).sum::<f64>();
            }
            let res = (acc / g.len() as f64).sqrt();
            Ok((potential, sigma, res))
        })
        .collect();
    let mut pots = Vec::new();
    let mut sigmas = Vec::new();
    let mut worst = 0.0f64;
    for r in out {
        let (p, s, e) = r?;
        pots.push(p);
        sigmas.push(s);
        worst = worst.max(e);
    }
    Ok((pots, sigmas, worst))
}

/// Build the full corrector hierarchy through order `order`.
pub fn build_correctors(field: &CoefficientField, order: usize, options: SolverOptions) -> Result<CorrectorSet> {
    let g = field.grid;
    let d = g.d;
    let mut set = CorrectorSet {
        grid: g,
        order: 0,
        orders: vec![order_zero(g)],
        growth: vec![1.0],
        floor: field.floor, ceiling: field.ceiling,
    };
    for n in 1..=order {
        let (phi, residual, iterations) = solve_corrector(field, n, &set, options)?;
        let blocks = homogenized_tensor(field, n, &phi, &set);
        let tensor = symmetrize_blocks(d, n, &blocks);
        set.orders.push(OrderData {
            n,
            phi,
            potential: Vec::new(),
            sigma: Vec::new(),
            blocks,
            tensor,
            residual,
            flux_residual: 0.0,
            iterations,
        });
        set.order = n;
        let (pot, sigma, fres) = solve_flux_potential(field, n, &set)?;
        let o = &mut set.orders[n];
        o.potential = pot;
        o.sigma = sigma;
        o.flux_residual = fres;
    }
    set.growth = corrector_growth(&set).constants;
    Ok(set)
}

/// Growth constants and their fitted geometric rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Growth {
    /// `K_0..K_N`; `K_0 = 1` from `φ⁰ ≡ 1`.
    pub constants: Vec<f64>,
    /// Least-squares slope of `ln K_n` against `n` over positive entries with `n ≥ 1`.
    pub log_rate: Option<f64>,
}

/// `K_n = max_J (‖φⁿ_J‖ + ‖σⁿ_J‖ + ‖∇φⁿ_J‖ + ‖∇σⁿ_J‖)` with RMS norms on the cell.
pub fn corrector_growth(set: &CorrectorSet) -> Growth {
    let g = set.grid;
    let sp = Spectral::new(g);
    let rms_many = |fields: &[Vec<f64>]| -> f64 {
        (fields.iter().map(|f| f.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / g.len() as f64).sqrt()
    };
    let mut constants = vec![1.0];
    for o in &set.orders[1..] {
        let mut worst = 0.0f64;
        for (b, phi) in o.phi.iter().enumerate() {
            let gphi = sp.gradient(phi);
            let sig = &o.sigma[b];
            let gsig: Vec<Vec<f64>> = sig.iter().flat_map(|s| sp.gradient(s)).collect();
            let k = rms_many(std::slice::from_ref(phi)) + rms_many(sig) + rms_many(&gphi) + rms_many(&gsig);
            worst = worst.max(k);
        }
        constants.push(worst);
    }
    let pts: Vec<(f64, f64)> = constants
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &k)| k > 0.0)
        .map(|(n, &k)| (n as f64, k.ln()))
        .collect();
    let log_rate = crate::fit::linear_fit(&pts).map(|f| f.slope);
    Growth { constants, log_rate }
}

/// Zero-mean antiderivative of the trigonometric interpolant (Nyquist mode dropped),
/// by direct summation against the periodic sine kernel.
pub struct TrigAntiderivative {
    kernel: Vec<f64>,
}

impl TrigAntiderivative {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.points;
        let l = grid.extent;
        let kernel = (0..n)
            .map(|off| {
                let theta = 2.0 * std::f64::consts::PI * off as f64 / n as f64;
                let s: f64 = (1..n / 2).map(|k| (k as f64 * theta).sin() / k as f64).sum();
                2.0 / n as f64 * l / (2.0 * std::f64::consts::PI) * s
            })
            .collect();
        TrigAntiderivative { kernel }
    }

    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let n = g.len();
        (0..n)
            .map(|i| (0..n).map(|j| g[j] * self.kernel[(i + n - j) % n]).sum())
            .collect()
    }
}

/// Independent 1D corrector hierarchy from quadrature of the ODE form of the cell problems.
///
/// Each order reduces to `a(φⁿ' + φⁿ⁻¹) = Āⁿ - Gₙ` with `Gₙ` a zero-mean
/// antiderivative; periodicity fixes `Āⁿ` and a second antiderivative gives `φⁿ`.
pub fn oracle_1d(field: &CoefficientField, order: usize) -> Result<CorrectorSet> {
    let g = field.grid;
    if g.d != 1 {
        return Err(Error::UnsupportedDimension(g.d));
    }
    let len = g.len();
    let a = &field.values[0];
    let inv_mean = mean(&a.iter().map(|v| 1.0 / v).collect::<Vec<_>>());
    let anti = TrigAntiderivative::new(&g);
    let mut phis: Vec<Vec<f64>> = vec![vec![1.0; len]];
    let mut dphis: Vec<Vec<f64>> = vec![zeros(len)];
    let mut abar: Vec<f64> = vec![0.0];
    let mut set = CorrectorSet { grid: g, order, orders: vec![order_zero(g)], growth: vec![1.0], floor: field.floor, ceiling: field.ceiling };
    let phi_at = |phis: &Vec<Vec<f64>>, k: isize| -> Vec<f64> {
        if k < 0 {
            zeros(len)
        } else {
            phis[k as usize].clone()
        }
    };
    for n in 1..=order {
        let p1 = phi_at(&phis, n as isize - 1);
        let p2 = phi_at(&phis, n as isize - 2);
        let dp1 = &dphis[n - 1];
        let mut gn: Vec<f64> = (0..len).map(|i| a[i] * (dp1[i] + p2[i])).collect();
        for (m, am) in abar.iter().enumerate().take(n).skip(1) {
            let p = phi_at(&phis, n as isize - m as isize - 1);
            for i in 0..len {
                gn[i] -= am * p[i];
            }
        }
        let big_g = anti.apply(&gn);
        let c = (mean(&big_g.iter().zip(a).map(|(x, y)| x / y).collect::<Vec<_>>()) + mean(&p1)) / inv_mean;
        let dphi: Vec<f64> = (0..len).map(|i| (c - big_g[i]) / a[i] - p1[i]).collect();
        let phi = anti.apply(&dphi);
        // Flux corrector: σ' = a(φⁿ' + φⁿ⁻¹) - Σ_{m≤n} Āᵐ φ^{n-m}.
        let mut gsig: Vec<f64> = (0..len).map(|i| -big_g[i]).collect();
        for (m, am) in abar.iter().enumerate().take(n).skip(1) {
            for i in 0..len {
                gsig[i] -= am * phis[n - m][i];
            }
        }
        let sigma = anti.apply(&gsig);
        let potential = anti.apply(&sigma);
        abar.push(c);
        phis.push(phi.clone());
        dphis.push(dphi);
        let blocks = vec![vec![c]];
        let tensor = symmetrize_blocks(1, n, &blocks);
        set.orders.push(OrderData {
            n,
            phi: vec![phi],
            potential: vec![vec![potential]],
            sigma: vec![vec![sigma]],
            blocks,
            tensor,
            residual: 0.0,
            flux_residual: 0.0,
            iterations: 0,
        });
    }
    set.growth = corrector_growth(&set).constants;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::media::{sample_periodic, PeriodicProfile};

    fn laminate(points: usize) -> CoefficientField {
        let g = build_grid(1, 1.0, points).unwrap();
        sample_periodic(&PeriodicProfile::Laminate { low: 1.0, high: 4.0 }, 1.0, &g).unwrap()
    }

    fn cosine(points: usize) -> CoefficientField {
        let g = build_grid(1, 1.0, points).unwrap();
        sample_periodic(&PeriodicProfile::Cosine { mean: 2.0, amplitude: 1.0 }, 1.0, &g).unwrap()
    }

    #[test]
    fn identity_has_trivial_correctors() {
        let g = build_grid(2, 1.0, 16).unwrap();
        let f = sample_periodic(&PeriodicProfile::identity(), 1.0, &g).unwrap();
        let set = build_correctors(&f, 3, SolverOptions::default()).unwrap();
        assert_eq!(set.abar(), vec![1.0, 0.0, 0.0, 1.0]);
        for n in 1..=3 {
            assert!(set.orders[n].phi.iter().flatten().all(|&v| v == 0.0));
            assert!(set.orders[n].sigma.iter().flatten().flatten().all(|&v| v == 0.0));
            assert_eq!(set.growth[n], 0.0);
        }
        assert_eq!(set.tensor_norm(2), 0.0);
        assert_eq!(set.tensor_norm(3), 0.0);
    }

    #[test]
    fn harmonic_means() {
        let l = build_correctors(&laminate(256), 1, SolverOptions::default()).unwrap();
        assert!((l.abar()[0] - 1.6).abs() < 1e-10);
        let c = build_correctors(&cosine(256), 1, SolverOptions::default()).unwrap();
        assert!((c.abar()[0] - 3f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn spectral_matches_oracle() {
        for f in [laminate(512), cosine(512)] {
            let s = build_correctors(&f, 4, SolverOptions::default()).unwrap();
            let o = oracle_1d(&f, 4).unwrap();
            for n in 1..=3 {
                let diff = s.grid.norm(&s.orders[n].phi[0].iter().zip(&o.orders[n].phi[0]).map(|(a, b)| a - b).collect::<Vec<_>>());
                assert!(diff < 1e-6, "order {n}: {diff}");
            }
            for n in 1..=4 {
                let ds = s.orders[n].blocks[0][0];
                let dor = o.orders[n].blocks[0][0];
                assert!((ds - dor).abs() < 1e-8 * (1.0 + dor.abs()), "tensor {n}: {ds} vs {dor}");
            }
        }
    }

    #[test]
    fn laminate_first_flux_corrector_vanishes() {
        let s = build_correctors(&laminate(256), 2, SolverOptions::default()).unwrap();
        let sig = &s.orders[1].sigma[0][0];
        assert!(sig.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn cosine_second_order_residuals() {
        let s = build_correctors(&cosine(512), 2, SolverOptions::default()).unwrap();
        assert!(s.orders[2].residual < 1e-8);
        assert!(s.orders[2].flux_residual < 1e-8);
    }

    #[test]
    fn zero_means() {
        let s = build_correctors(&laminate(256), 4, SolverOptions::default()).unwrap();
        for n in 1..=4 {
            assert!(mean(&s.orders[n].phi[0]).abs() < 1e-12);
        }
    }
}
