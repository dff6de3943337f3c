//! Homogenized dispersive symbol, its admissibility, and the Fourier flow it generates.

use crate::correctors::CorrectorSet;
use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::grid::Grid;
use crate::spectral::Spectral;
use crate::tensor::{factorial, multiplicity, multisets, SymTensor};
use crate::twoscale::Mollifier;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Even-order tensors larger than this are treated as a corrupted hierarchy.
pub const EVEN_ORDER_TOLERANCE: f64 = 1e-8;

/// Relative spectral mass below which a mode is considered empty.
pub const MASS_FLOOR: f64 = 1e-12;

/// `μ_N(iξ) = Σ_{n odd} i^{n-1} Āⁿ : ξ^{⊗(n+1)}`, stored as a polynomial in `ξ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomogenizedSymbol {
    pub d: usize,
    pub order: usize,
    /// Entry `m - 1` is the symmetrized order-(m+1) tensor of `Āᵐ`; even orders are zero.
    pub tensors: Vec<SymTensor>,
    /// Growth constants `K_0..K_N`.
    pub growth: Vec<f64>,
    pub floor: f64,
    pub ceiling: f64,
    /// Monomials `(p, q, c)` meaning `c·ξ₁ᵖ ξ₂^q`.
    terms: Vec<(u32, u32, f64)>,
}

impl HomogenizedSymbol {
    /// Build from explicit tensors (entry `m - 1` is order `m`).
    pub fn from_tensors(d: usize, tensors: Vec<SymTensor>, growth: Vec<f64>, floor: f64, ceiling: f64) -> Result<Self> {
        let order = tensors.len();
        if order == 0 {
            return Err(Error::MissingOrder(1));
        }
        let mut tensors = tensors;
        for (i, t) in tensors.iter_mut().enumerate() {
            let m = i + 1;
            if t.order != m + 1 || t.d != d {
                return Err(Error::InvalidParameter(format!("tensor of order {m} has wrong shape")));
            }
            if m % 2 == 0 {
                let n = t.norm();
                if n > EVEN_ORDER_TOLERANCE {
                    return Err(Error::NotAdmissible(format!("even-order tensor {m} has norm {n:e}")));
                }
                *t = SymTensor::zeros(m + 1, d);
            }
        }
        let mut terms: Vec<(u32, u32, f64)> = Vec::new();
        for (i, t) in tensors.iter().enumerate() {
            let m = i + 1;
            if m % 2 == 0 {
                continue;
            }
            let sign = if (m - 1) / 2 % 2 == 0 { 1.0 } else { -1.0 };
            for s in multisets(d, m + 1) {
                let q = s.iter().filter(|&&j| j == 1).count() as u32;
                let p = (m + 1) as u32 - q;
                let c = sign * multiplicity(d, &s) * t.get(&s);
                if c != 0.0 {
                    match terms.iter_mut().find(|(a, b, _)| *a == p && *b == q) {
                        Some(e) => e.2 += c,
                        None => terms.push((p, q, c)),
                    }
                }
            }
        }
        let mut growth = growth;
        growth.resize(order + 1, 0.0);
        Ok(HomogenizedSymbol { d, order, tensors, growth, floor, ceiling, terms })
    }

    /// Truncate a corrector set at order `order`.
    pub fn from_correctors(set: &CorrectorSet, order: usize) -> Result<Self> {
        if order == 0 || order > set.order {
            return Err(Error::MissingOrder(order));
        }
        let tensors = (1..=order).map(|m| set.tensor(m).clone()).collect();
        let growth = set.growth[..=order].to_vec();
        Self::from_tensors(set.d(), tensors, growth, set.floor, set.ceiling)
    }

    pub fn contrast(&self) -> f64 {
        self.ceiling / self.floor
    }

    /// `μ_N(iξ)`.
    pub fn mu(&self, xi: [f64; 2]) -> f64 {
        self.terms.iter().map(|&(p, q, c)| c * xi[0].powi(p as i32) * xi[1].powi(q as i32)).sum()
    }

    /// `∇_ξ μ_N(iξ)`.
    pub fn gradient(&self, xi: [f64; 2]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for &(p, q, c) in &self.terms {
            if p > 0 {
                g[0] += c * p as f64 * xi[0].powi(p as i32 - 1) * xi[1].powi(q as i32);
            }
            if q > 0 {
                g[1] += c * q as f64 * xi[0].powi(p as i32) * xi[1].powi(q as i32 - 1);
            }
        }
        g
    }

    /// `∇²_ξ μ_N(iξ)`.
    pub fn hessian(&self, xi: [f64; 2]) -> [[f64; 2]; 2] {
        let mut h = [[0.0; 2]; 2];
        let pw = |x: f64, e: i64| if e < 0 { 0.0 } else { x.powi(e as i32) };
        for &(p, q, c) in &self.terms {
            let (p, q) = (p as i64, q as i64);
            h[0][0] += c * (p * (p - 1)) as f64 * pw(xi[0], p - 2) * pw(xi[1], q);
            h[1][1] += c * (q * (q - 1)) as f64 * pw(xi[0], p) * pw(xi[1], q - 2);
            let m = c * (p * q) as f64 * pw(xi[0], p - 1) * pw(xi[1], q - 1);
            h[0][1] += m;
            h[1][0] += m;
        }
        h
    }

    /// `μ_{κ,N}(iξ) = κ⁻² μ_N(iκξ)`.
    pub fn mu_kappa(&self, kappa: f64, xi: [f64; 2]) -> f64 {
        self.mu([kappa * xi[0], kappa * xi[1]]) / (kappa * kappa)
    }

    pub fn gradient_kappa(&self, kappa: f64, xi: [f64; 2]) -> [f64; 2] {
        let g = self.gradient([kappa * xi[0], kappa * xi[1]]);
        [g[0] / kappa, g[1] / kappa]
    }

    pub fn hessian_kappa(&self, kappa: f64, xi: [f64; 2]) -> [[f64; 2]; 2] {
        self.hessian([kappa * xi[0], kappa * xi[1]])
    }

    /// Brute-force unsymmetrized evaluation over all ordered index tuples.
    pub fn mu_unsymmetrized(&self, xi: [f64; 2]) -> f64 {
        let mut acc = 0.0;
        for (i, t) in self.tensors.iter().enumerate() {
            let m = i + 1;
            if m % 2 == 0 {
                continue;
            }
            let sign = if (m - 1) / 2 % 2 == 0 { 1.0 } else { -1.0 };
            for tup in crate::tensor::tuples(self.d, m + 1) {
                acc += sign * t.get(&tup) * tup.iter().map(|&j| xi[j]).product::<f64>();
            }
        }
        acc
    }
}

/// Result of the smallness test on `κ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibilityCertificate {
    pub kappa: f64,
    pub order: usize,
    /// Derivative order `k` of the strengthened test.
    pub k: usize,
    /// `Σ_{n=2}^N K_n κ^{n-1}`.
    pub margin: f64,
    /// `max_{0≤j≤k+1} Σ_{n≥max(2, j-1)} (n+1)!/(n+1-j)! K_n κ^{n-1}`.
    pub strengthened: f64,
    /// `1/(2C0)`.
    pub threshold: f64,
    pub pass: bool,
}

/// Smallness margins of `κ` for a symbol and derivative order `k`.
pub fn certify_kappa(symbol: &HomogenizedSymbol, kappa: f64, k: usize) -> AdmissibilityCertificate {
    let n_max = symbol.order;
    let kn = |n: usize| symbol.growth.get(n).copied().unwrap_or(0.0);
    let margin: f64 = (2..=n_max).map(|n| kn(n) * kappa.powi(n as i32 - 1)).sum();
    let mut strengthened = 0.0f64;
    for j in 0..=k + 1 {
        let start = 2.max(j.saturating_sub(1));
        let s: f64 = (start..=n_max)
            .filter(|&n| n + 1 >= j)
            .map(|n| factorial(n + 1) / factorial(n + 1 - j) * kn(n) * kappa.powi(n as i32 - 1))
            .sum();
        strengthened = strengthened.max(s);
    }
    let threshold = 0.5 / symbol.contrast();
    AdmissibilityCertificate {
        kappa,
        order: n_max,
        k,
        margin,
        strengthened,
        threshold,
        pass: margin <= threshold && strengthened <= threshold,
    }
}

/// Largest certified `κ` in `(0, upper]` by bisection; `upper` if the margin never binds.
pub fn largest_certified_kappa(symbol: &HomogenizedSymbol, k: usize, upper: f64) -> f64 {
    if certify_kappa(symbol, upper, k).pass {
        return upper;
    }
    let (mut lo, mut hi) = (0.0, upper);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if certify_kappa(symbol, mid, k).pass {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Worst ratios of `μ_N(iξ)/|ξ|²` over grid frequencies with `|ξ| ≤ κ`.
///
/// Returns `(min ratio, max ratio)`; the two-sided bound holds when
/// `min ≥ floor/2` and `max ≤ 3·ceiling/2`.
pub fn symbol_bounds_scan(symbol: &HomogenizedSymbol, kappa: f64, grid: &Grid) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 1..grid.len() {
        let xi = grid.wavevector(i);
        let r2 = xi[0] * xi[0] + xi[1] * xi[1];
        if r2 > 0.0 && r2.sqrt() <= kappa {
            let q = symbol.mu(xi) / r2;
            lo = lo.min(q);
            hi = hi.max(q);
        }
    }
    (lo, hi)
}

/// Fourier flow `cos(t√μ)` of fixed initial data, with its velocity and time integral.
#[derive(Debug, Clone)]
pub struct FourierFlow {
    pub grid: Grid,
    pub spectral: Spectral,
    pub initial: Vec<Complex64>,
    /// Frequencies `ω = √max(μ, 0)` per mode.
    pub omega: Vec<f64>,
}

impl FourierFlow {
    /// Set up the flow; modes with `μ ≤ 0` must carry negligible mass.
    pub fn new(symbol: &HomogenizedSymbol, u0: &[f64], grid: Grid) -> Result<Self> {
        let spectral = Spectral::new(grid);
        let initial = spectral.forward(u0);
        let total: f64 = initial.iter().map(|c| c.norm_sqr()).sum();
        let mut omega = vec![0.0; grid.len()];
        for (i, w) in omega.iter_mut().enumerate() {
            if i == 0 {
                continue;
            }
            let xi = grid.wavevector(i);
            let mu = symbol.mu(xi);
            if mu > 0.0 {
                *w = mu.sqrt();
            } else if initial[i].norm_sqr() > MASS_FLOOR * total {
                return Err(Error::IllPosed { mu, xi: (xi[0] * xi[0] + xi[1] * xi[1]).sqrt() });
            }
        }
        Ok(FourierFlow { grid, spectral, initial, omega })
    }

    fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Vec<Complex64> {
        self.initial.iter().zip(&self.omega).map(|(c, &w)| c * f(w)).collect()
    }

    pub fn displacement_spectrum(&self, t: f64) -> Vec<Complex64> {
        self.map(|w| (t * w).cos())
    }

    pub fn velocity_spectrum(&self, t: f64) -> Vec<Complex64> {
        self.map(|w| -w * (t * w).sin())
    }

    /// Spectrum of `∫₀ᵗ u(s) ds`.
    pub fn integral_spectrum(&self, t: f64) -> Vec<Complex64> {
        self.map(|w| if w == 0.0 { t } else { (t * w).sin() / w })
    }

    pub fn displacement(&self, t: f64) -> Vec<f64> {
        if t == 0.0 {
            return self.spectral.inverse(self.initial.clone());
        }
        self.spectral.inverse(self.displacement_spectrum(t))
    }

    pub fn velocity(&self, t: f64) -> Vec<f64> {
        self.spectral.inverse(self.velocity_spectrum(t))
    }

    /// `‖√μ û(t)‖² + ‖∂ₜû(t)‖²` (Parseval, per node count).
    pub fn energy(&self, t: f64) -> f64 {
        let u = self.displacement_spectrum(t);
        let v = self.velocity_spectrum(t);
        let n = self.grid.len() as f64;
        u.iter().zip(&v).zip(&self.omega).map(|((a, b), w)| w * w * a.norm_sqr() + b.norm_sqr()).sum::<f64>() / n
            * self.grid.cell_volume()
    }
}

/// Fraction of the discrete spectral mass of `u` outside `|ξ| ≤ κ`.
pub fn mass_outside_band(u: &[f64], kappa: f64, grid: &Grid) -> f64 {
    let s = Spectral::new(*grid).forward(u);
    let mut out = 0.0;
    let mut total = 0.0;
    for (i, c) in s.iter().enumerate() {
        let xi = grid.wavevector(i);
        let m = c.norm_sqr();
        total += m;
        if (xi[0] * xi[0] + xi[1] * xi[1]).sqrt() > kappa * (1.0 + 1e-12) {
            out += m;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        out / total
    }
}

/// Homogenized flow `F⁻¹[cos(t√μ_N) û°]` for band-limited data under a passing certificate.
pub fn evolve_homogenized(
    u0: &[f64],
    symbol: &HomogenizedSymbol,
    cert: &AdmissibilityCertificate,
    t: f64,
    grid: &Grid,
) -> Result<Vec<f64>> {
    if !cert.pass {
        return Err(Error::NotAdmissible(format!("κ = {} fails the smallness test", cert.kappa)));
    }
    let outside = mass_outside_band(u0, cert.kappa, grid);
    if outside > MASS_FLOOR {
        return Err(Error::InvalidParameter(format!("initial data not band-limited: {outside:e} of mass outside |ξ| ≤ κ")));
    }
    Ok(FourierFlow::new(symbol, u0, *grid)?.displacement(t))
}

/// Smoothened Green function `G_{κ,N}(t) = F⁻¹[cos(t√μ_N) ρ̂_κ]`.
pub fn green_function(symbol: &HomogenizedSymbol, mollifier: &Mollifier, t: f64) -> Result<Vec<f64>> {
    let cert = certify_kappa(symbol, mollifier.kappa, 0);
    evolve_homogenized(&mollifier.rho, symbol, &cert, t, &mollifier.grid)
}

/// Rescaled Green function `G̃(τ) = F⁻¹[cos(τ√μ_{κ,N}) ρ̂₁]` on the `κ`-stretched grid.
///
/// `unit` must be a band-1 mollifier; then `G_{κ,N}(t, x) = κ^d G̃(κt, κx)`.
pub fn green_rescaled(symbol: &HomogenizedSymbol, kappa: f64, unit: &Mollifier, tau: f64) -> Result<Vec<f64>> {
    if (unit.kappa - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter("rescaled Green function needs a band-1 mollifier".into()));
    }
    let cert = certify_kappa(symbol, kappa, 0);
    if !cert.pass {
        return Err(Error::NotAdmissible(format!("κ = {kappa} fails the smallness test")));
    }
    let scaled = ScaledSymbol { symbol, kappa };
    let grid = unit.grid;
    let sp = Spectral::new(grid);
    let s = sp.forward(&unit.rho);
    let total: f64 = s.iter().map(|c| c.norm_sqr()).sum();
    let mut out = Vec::with_capacity(s.len());
    for (i, c) in s.iter().enumerate() {
        let xi = grid.wavevector(i);
        let mu = scaled.mu(xi);
        if mu <= 0.0 && i != 0 && c.norm_sqr() > MASS_FLOOR * total {
            return Err(Error::IllPosed { mu, xi: (xi[0] * xi[0] + xi[1] * xi[1]).sqrt() });
        }
        out.push(c * (tau * mu.max(0.0).sqrt()).cos());
    }
    Ok(sp.inverse(out))
}

struct ScaledSymbol<'a> {
    symbol: &'a HomogenizedSymbol,
    kappa: f64,
}

impl ScaledSymbol<'_> {
    fn mu(&self, xi: [f64; 2]) -> f64 {
        self.symbol.mu_kappa(self.kappa, xi)
    }
}

/// Group velocity `ν_{κ,N} = ∇μ_{κ,N}/(2√μ_{κ,N})`.
pub fn group_velocity(symbol: &HomogenizedSymbol, kappa: f64, xi: [f64; 2]) -> Result<[f64; 2]> {
    if xi[0] == 0.0 && xi[1] == 0.0 {
        return Err(Error::InvalidParameter("group velocity is singular at ξ = 0".into()));
    }
    let mu = symbol.mu_kappa(kappa, xi);
    if mu <= 0.0 {
        return Err(Error::IllPosed { mu, xi: (xi[0] * xi[0] + xi[1] * xi[1]).sqrt() });
    }
    let g = symbol.gradient_kappa(kappa, xi);
    let s = 2.0 * mu.sqrt();
    Ok([g[0] / s, g[1] / s])
}

/// Solve `∇μ_{κ,N}(iξ) = y` by damped Newton iteration on the Hessian.
pub fn invert_group_map(symbol: &HomogenizedSymbol, kappa: f64, y: [f64; 2]) -> Result<[f64; 2]> {
    let d = symbol.d;
    if y[0] == 0.0 && y[1] == 0.0 {
        return Ok([0.0, 0.0]);
    }
    let resid = |xi: [f64; 2]| {
        let g = symbol.gradient_kappa(kappa, xi);
        [g[0] - y[0], if d == 2 { g[1] - y[1] } else { 0.0 }]
    };
    let norm = |r: [f64; 2]| (r[0] * r[0] + r[1] * r[1]).sqrt();
    // Start from the inverse of the quadratic part.
    let h0 = symbol.hessian([0.0, 0.0]);
    let mut xi = solve2(h0, y, d).ok_or_else(|| Error::Newton("singular leading tensor".into()))?;
    let mut r = resid(xi);
    let scale = 1.0f64.max(norm(y));
    for _ in 0..100 {
        if norm(r) <= 1e-13 * scale {
            break;
        }
        let h = symbol.hessian_kappa(kappa, xi);
        let step = solve2(h, r, d).ok_or_else(|| Error::Newton(format!("singular Hessian at ξ = {xi:?}")))?;
        let mut damp = 1.0;
        loop {
            let trial = [xi[0] - damp * step[0], xi[1] - damp * step[1]];
            let rt = resid(trial);
            if norm(rt) < norm(r) || damp < 1e-6 {
                xi = trial;
                r = rt;
                break;
            }
            damp *= 0.5;
        }
    }
    if norm(r) > 1e-10 * scale || !xi[0].is_finite() {
        return Err(Error::Newton(format!("residual {:e} at ξ = {xi:?}", norm(r))));
    }
    Ok(xi)
}

fn solve2(h: [[f64; 2]; 2], r: [f64; 2], d: usize) -> Option<[f64; 2]> {
    if d == 1 {
        return if h[0][0] == 0.0 { None } else { Some([r[0] / h[0][0], 0.0]) };
    }
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    if det.abs() < 1e-300 {
        return None;
    }
    Some([(h[1][1] * r[0] - h[0][1] * r[1]) / det, (h[0][0] * r[1] - h[1][0] * r[0]) / det])
}

/// Largest `|ν_{κ,N}|` over the nonzero grid modes in the unit band.
pub fn max_group_speed(symbol: &HomogenizedSymbol, kappa: f64, grid: &Grid) -> Result<f64> {
    let mut best = 0.0f64;
    for i in 1..grid.len() {
        let xi = grid.wavevector(i);
        if xi[0] * xi[0] + xi[1] * xi[1] <= 1.0 {
            let v = group_velocity(symbol, kappa, xi)?;
            best = best.max((v[0] * v[0] + v[1] * v[1]).sqrt());
        }
    }
    Ok(best)
}

/// Region over which the sup-norm of a Green function is taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DecayRegion {
    Global,
    /// `|x| ≤ fraction · t` around the source.
    Interior { fraction: f64 },
}

/// Fitted power law `sup ≈ prefactor · (1 + κt)^exponent`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// Unexplained fraction of the log-variance, floored at unit variance per sample.
    pub residual: f64,
    pub points: usize,
}

/// Fit threshold above which a series is reported as "no clean power law".
pub const DECAY_RESIDUAL_LIMIT: f64 = 0.2;

/// Least-squares slope of `ln sup` against `ln(1 + κt)`.
///
/// `series` holds `(κt, sup)` pairs. Samples below `10⁻¹²` of the largest are
/// at the roundoff floor and dropped.
pub fn measure_decay(series: &[(f64, f64)]) -> Result<DecayFit> {
    if series.len() < 8 {
        return Err(Error::Fit(format!("need at least 8 samples, got {}", series.len())));
    }
    let lo = series.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = series.iter().map(|p| p.0).fold(0.0, f64::max);
    if lo <= 0.0 || hi / lo < 100.0 * (1.0 - 1e-9) {
        return Err(Error::Fit("sample times must span two decades".into()));
    }
    let top = series.iter().map(|p| p.1).fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> =
        series.iter().filter(|p| p.1 > 1e-12 * top).map(|p| ((1.0 + p.0).ln(), p.1.ln())).collect();
    let fit = linear_fit(&pts).ok_or_else(|| Error::Fit("degenerate sample set".into()))?;
    let residual = fit.sse / fit.sst.max(pts.len() as f64);
    if residual > DECAY_RESIDUAL_LIMIT {
        return Err(Error::Fit(format!("no clean power law (residual {residual:.3})")));
    }
    Ok(DecayFit { exponent: fit.slope, prefactor: fit.intercept.exp(), residual, points: pts.len() })
}

/// `count` logarithmically spaced values in `[lo, hi]`.
pub fn log_times(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (count - 1).max(1) as f64).exp())
        .collect()
}

/// Sup-norms of the rescaled Green function at rescaled times `τ = κt`.
pub fn green_decay_series(
    symbol: &HomogenizedSymbol,
    kappa: f64,
    unit: &Mollifier,
    taus: &[f64],
    region: DecayRegion,
) -> Result<Vec<(f64, f64)>> {
    let grid = unit.grid;
    let reach = match region {
        DecayRegion::Global => {
            max_group_speed(symbol, kappa, &grid)? * taus.iter().fold(0.0f64, |a, &b| a.max(b)) + 4.0 * unit.second_moment().sqrt()
        }
        DecayRegion::Interior { .. } => 0.0,
    };
    if reach > grid.half_width() {
        return Err(Error::Horizon { needed: reach, available: grid.half_width() });
    }
    taus.par_iter()
        .map(|&tau| {
            let g = green_rescaled(symbol, kappa, unit, tau)?;
            let sup = match region {
                DecayRegion::Global => g.iter().fold(0.0f64, |a, v| a.max(v.abs())),
                DecayRegion::Interior { fraction } => {
                    let r = fraction * tau;
                    g.iter()
                        .enumerate()
                        .filter(|(i, _)| grid.distance(*i, [0.0, 0.0]) <= r)
                        .fold(0.0f64, |a, (_, v)| a.max(v.abs()))
                }
            };
            Ok((tau, sup))
        })
        .collect()
}
