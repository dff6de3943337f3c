//! Regularized data, two-scale reconstructions and error budgets.

use crate::correctors::CorrectorSet;
use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::grid::Grid;
use crate::hetwave::{evolve_heterogeneous, Operator, WaveState};
use crate::homprop::{certify_kappa, FourierFlow, HomogenizedSymbol};
use crate::media::{tile_field, CoefficientField};
use crate::spectral::Spectral;
use crate::tensor::{multiplicity, multiset_index, multisets, tuples};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Nonnegative kernel of unit mass whose transform is supported in `|ξ| ≤ κ`.
#[derive(Debug, Clone)]
pub struct Mollifier {
    pub kappa: f64,
    pub grid: Grid,
    /// Kernel centered at the origin node.
    pub rho: Vec<f64>,
    /// `h^d · FFT(ρ)`, so that the zero mode equals `∫ρ = 1`.
    pub rho_hat: Vec<Complex64>,
}

fn bump(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

/// `ρ_κ = |b|²/∫|b|²` with `b̂` a smooth radial bump on `|ξ| ≤ κ/2`.
pub fn build_mollifier(kappa: f64, grid: &Grid) -> Result<Mollifier> {
    let lo = 4.0 * 2.0 * std::f64::consts::PI / grid.extent;
    let hi = 0.5 * grid.nyquist();
    if !(kappa >= lo * (1.0 - 1e-12) && kappa <= hi) {
        return Err(Error::InvalidParameter(format!("band κ = {kappa} must lie in [{lo}, {hi}] for this grid")));
    }
    let sp = Spectral::new(*grid);
    let b_hat: Vec<Complex64> = (0..grid.len())
        .map(|i| {
            let k = grid.wavevector(i);
            Complex64::new(bump((k[0] * k[0] + k[1] * k[1]).sqrt() / (0.5 * kappa)), 0.0)
        })
        .collect();
    let b = sp.inverse(b_hat);
    let w = grid.cell_volume();
    let mass: f64 = b.iter().map(|v| v * v).sum::<f64>() * w;
    let rho0: Vec<f64> = b.iter().map(|v| v * v / mass).collect();
    let mut rho_hat = sp.forward(&rho0);
    for (i, c) in rho_hat.iter_mut().enumerate() {
        let k = grid.wavevector(i);
        if (k[0] * k[0] + k[1] * k[1]).sqrt() > kappa {
            *c = Complex64::new(0.0, 0.0);
        } else {
            *c *= w;
        }
    }
    let rho: Vec<f64> = sp.inverse(rho_hat.iter().map(|c| c / w).collect());
    Ok(Mollifier { kappa, grid: *grid, rho, rho_hat })
}

impl Mollifier {
    /// `∫ρ`.
    pub fn mass(&self) -> f64 {
        self.grid.integral(&self.rho)
    }

    /// `∫|y|²ρ(y)dy` with torus distance.
    pub fn second_moment(&self) -> f64 {
        let g = &self.grid;
        self.rho.iter().enumerate().map(|(i, r)| g.distance(i, [0.0, 0.0]).powi(2) * r.abs()).sum::<f64>() * g.cell_volume()
    }

    /// `ρ ∗ u` computed spectrally.
    pub fn convolve(&self, u: &[f64]) -> Vec<f64> {
        let sp = Spectral::new(self.grid);
        let mut s = sp.forward(u);
        s.iter_mut().zip(&self.rho_hat).for_each(|(a, b)| *a *= b);
        sp.inverse(s)
    }
}

/// Radial cutoff: 1 on `B_{L/2}`, 0 outside `B_L`, quintic smoothstep between.
#[derive(Debug, Clone)]
pub struct Cutoff {
    pub radius: f64,
    pub center: [f64; 2],
    pub chi: Vec<f64>,
}

/// Quintic smoothstep profile `1 - (6s⁵ - 15s⁴ + 10s³)`, `s = (r - L/2)/(L/2)`.
pub fn cutoff_profile(r: f64, radius: f64) -> f64 {
    let s = ((r - 0.5 * radius) / (0.5 * radius)).clamp(0.0, 1.0);
    1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

pub fn build_cutoff(radius: f64, center: [f64; 2], grid: &Grid) -> Result<Cutoff> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("cutoff radius must be positive, got {radius}")));
    }
    let chi = (0..grid.len()).map(|i| cutoff_profile(grid.distance(i, center), radius)).collect();
    Ok(Cutoff { radius, center, chi })
}

/// `u°_{κ,L} = ρ_κ ∗ (χ_L u°)`.
pub fn regularize(u0: &[f64], mollifier: &Mollifier, cutoff: &Cutoff) -> Vec<f64> {
    let w: Vec<f64> = u0.iter().zip(&cutoff.chi).map(|(a, b)| a * b).collect();
    mollifier.convolve(&w)
}

/// Measured regularization error against its bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularizationReport {
    pub t: f64,
    /// `‖u(t) - u_{κ,L}(t)‖_{L²(B_R)}`.
    pub measured: f64,
    /// `(κL)⁻²‖u°‖`; zero when `u°` is supported in `B_{L/2}`.
    pub cutoff_term: f64,
    /// `(∫|y|²ρ_κ)^{1/2}‖∇u°‖`.
    pub smoothing_term: f64,
    pub ratio: f64,
    /// Whether the compact-support branch applied.
    pub supported: bool,
}

/// Evolve `u°` and its regularization and compare inside `B_R` around the cutoff center.
pub fn regularization_error(op: &Operator, u0: &[f64], mollifier: &Mollifier, cutoff: &Cutoff, r: f64, t: f64) -> Result<RegularizationReport> {
    let g = op.grid;
    let sp = Spectral::new(g);
    let outside: f64 =
        u0.iter().enumerate().filter(|(i, _)| g.distance(*i, cutoff.center) > 0.5 * cutoff.radius).map(|(_, v)| v * v).sum();
    let total: f64 = u0.iter().map(|v| v * v).sum();
    let supported = outside <= 1e-28 * total.max(1e-300);
    let c = op.ceiling.sqrt();
    if !supported && cutoff.radius < 4.0 * (r + c * t) {
        return Err(Error::InvalidParameter(format!("cutoff radius {} must be at least 4(R + ct) = {}", cutoff.radius, 4.0 * (r + c * t))));
    }
    let reg = regularize(u0, mollifier, cutoff);
    let dt = op.default_dt();
    let (a, b) = rayon::join(
        || evolve_heterogeneous(op, &WaveState::at_rest(g, u0.to_vec()), t, dt),
        || evolve_heterogeneous(op, &WaveState::at_rest(g, reg), t, dt),
    );
    let (a, b) = (a?, b?);
    let diff: Vec<f64> =
        a.u.iter().zip(&b.u).enumerate().map(|(i, (x, y))| if g.distance(i, cutoff.center) <= r { x - y } else { 0.0 }).collect();
    let measured = g.norm(&diff);
    let grad = sp.gradient(u0);
    let gnorm = grad.iter().map(|c| g.norm(c).powi(2)).sum::<f64>().sqrt();
    let cutoff_term = if supported { 0.0 } else { (mollifier.kappa * cutoff.radius).powi(-2) * g.norm(u0) };
    let smoothing_term = mollifier.second_moment().sqrt() * gnorm;
    let bound = cutoff_term + smoothing_term;
    Ok(RegularizationReport { t, measured, cutoff_term, smoothing_term, ratio: if bound > 0.0 { measured / bound } else { 0.0 }, supported })
}

/// Corrector fields tiled onto a commensurate large grid.
#[derive(Debug, Clone)]
pub struct TiledCorrectors {
    pub grid: Grid,
    pub order: usize,
    /// `phi[n][multiset]`.
    pub phi: Vec<Vec<Vec<f64>>>,
    /// `sigma[n][multiset][i*d + l]`.
    pub sigma: Vec<Vec<Vec<Vec<f64>>>>,
}

/// Tile orders `0..=order` of a corrector set onto `big`.
pub fn tile_correctors(set: &CorrectorSet, order: usize, big: Grid) -> Result<TiledCorrectors> {
    if order > set.order {
        return Err(Error::MissingOrder(order));
    }
    let cell = set.grid;
    if cell.d != big.d || (cell.h() - big.h()).abs() > 1e-12 * cell.h() || big.points % cell.points != 0 {
        return Err(Error::InvalidParameter("corrector grid does not tile the simulation grid".into()));
    }
    let phi = set.orders[..=order].iter().map(|o| o.phi.iter().map(|p| tile_field(p, cell, big)).collect()).collect();
    let sigma = set.orders[..=order]
        .iter()
        .map(|o| o.sigma.iter().map(|s| s.iter().map(|c| tile_field(c, cell, big)).collect()).collect())
        .collect();
    Ok(TiledCorrectors { grid: big, order, phi, sigma })
}

/// Cache of mixed derivatives of one spectrum.
struct Stack<'a> {
    sp: &'a Spectral,
    spec: Vec<Complex64>,
}

impl Stack<'_> {
    fn get(&self, axes: &[usize]) -> Vec<f64> {
        self.sp.mixed_derivative(&self.spec, axes)
    }
}

/// `Σ_{n≤N} φⁿ_J ∇ⁿ_J ū`, summing over ordered index tuples via multisets.
pub fn two_scale_reconstruct(tiled: &TiledCorrectors, ubar: &[f64], order: usize) -> Vec<f64> {
    let sp = Spectral::new(tiled.grid);
    let stack = Stack { sp: &sp, spec: sp.forward(ubar) };
    let mut out = stack.get(&[]);
    add_corrector_terms(tiled, &stack, 1, order, &mut out);
    out
}

fn add_corrector_terms(tiled: &TiledCorrectors, stack: &Stack, from: usize, order: usize, out: &mut [f64]) {
    let d = tiled.grid.d;
    for n in from..=order {
        for (b, s) in multisets(d, n).iter().enumerate() {
            let w = multiplicity(d, s);
            let der = stack.get(s);
            let phi = &tiled.phi[n][b];
            out.iter_mut().zip(phi.iter().zip(&der)).for_each(|(o, (p, q))| *o += w * p * q);
        }
    }
}

/// One row of the error budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetRow {
    pub order: usize,
    pub kappa: f64,
    pub t: f64,
    pub a0: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// `M_{N,κ}`.
    pub m: f64,
    /// Assembled bound `κ + K_Nκᴺ + (K_N + M)κ^{N+1}(L + κ⁻¹ + t)`, times `‖u°‖`.
    pub bound: f64,
    /// `A° + A + t(B + C + D)`.
    pub budget: f64,
    /// `‖u(t) - ū(t)‖`.
    pub measured: f64,
    /// Part of the measured error carried by frequencies `|ξ| ≤ 2κ`.
    pub macro_error: f64,
    pub ratio: f64,
}

/// Budget parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BudgetSetup {
    pub kappa: f64,
    pub cutoff: f64,
    pub order: usize,
}

/// `M_{N,κ} = Σ_{n=1}^{N-1} κ^{n-1} Σ_{m=1}^{N-n} K_{N-m} K_{n+m}`.
pub fn m_shorthand(growth: &[f64], order: usize, kappa: f64) -> f64 {
    let k = |n: usize| growth.get(n).copied().unwrap_or(0.0);
    (1..order).map(|n| kappa.powi(n as i32 - 1) * (1..=order - n).map(|m| k(order - m) * k(n + m)).sum::<f64>()).sum()
}

/// Error budget of the order-`N` two-scale expansion along sorted times.
///
/// `field` lives on the simulation grid; `set` on a cell grid that tiles it.
/// `u0` must already be regularized at band `κ`.
pub fn error_budget(field: &CoefficientField, set: &CorrectorSet, u0: &[f64], setup: BudgetSetup, times: &[f64]) -> Result<Vec<BudgetRow>> {
    let n_ord = setup.order;
    let kappa = setup.kappa;
    if n_ord == 0 || n_ord > set.order {
        return Err(Error::MissingOrder(n_ord));
    }
    let symbol = HomogenizedSymbol::from_correctors(set, n_ord)?;
    let cert = certify_kappa(&symbol, kappa, 0);
    if !cert.pass {
        return Err(Error::NotAdmissible(format!("κ = {kappa} fails the smallness test at N = {n_ord}")));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidParameter("budget times must be sorted and nonnegative".into()));
    }
    let g = field.grid;
    let d = g.d;
    let tiled = tile_correctors(set, n_ord, g)?;
    let sp = Spectral::new(g);
    let flow = FourierFlow::new(&symbol, u0, g)?;
    let op = Operator::new(field);
    let unorm = g.norm(u0);

    let a0 = {
        let stack = Stack { sp: &sp, spec: flow.initial.clone() };
        let mut acc = vec![0.0; g.len()];
        add_corrector_terms(&tiled, &stack, 1, n_ord, &mut acc);
        g.norm(&acc)
    };
    let m = m_shorthand(&set.growth, n_ord, kappa);
    let k_n = set.growth[n_ord];

    // Instantaneous (non-sup) values at every time, computed concurrently.
    let inst: Vec<[f64; 4]> = times
        .par_iter()
        .map(|&t| {
            let u = Stack { sp: &sp, spec: flow.displacement_spectrum(t) };
            let v = Stack { sp: &sp, spec: flow.velocity_spectrum(t) };
            let w = Stack { sp: &sp, spec: flow.integral_spectrum(t) };
            let mut a = vec![0.0; g.len()];
            add_corrector_terms(&tiled, &u, 1, n_ord, &mut a);
            let a = g.norm(&a);
            let b = b_term(field, &tiled, &u, &v, n_ord);
            let c = c_term(&tiled, &w, n_ord);
            let dd: f64 = d_terms(set, &tiled, &w, n_ord).iter().sum();
            [a, b, c, dd]
        })
        .collect();
    let _ = d;

    let mut rows = Vec::with_capacity(times.len());
    let mut state = WaveState::at_rest(g, u0.to_vec());
    let dt = op.default_dt();
    let (mut sup_b, mut sup_c, mut sup_d) = (0.0f64, 0.0f64, 0.0f64);
    let band = 2.0 * kappa;
    for (k, &t) in times.iter().enumerate() {
        state = evolve_heterogeneous(&op, &state, t, dt)?;
        let ubar = flow.displacement(t);
        let diff: Vec<f64> = state.u.iter().zip(&ubar).map(|(a, b)| a - b).collect();
        let measured = g.norm(&diff);
        let low = sp.multiply(&diff, |i| {
            let x = g.wavevector(i);
            Complex64::new(if (x[0] * x[0] + x[1] * x[1]).sqrt() <= band { 1.0 } else { 0.0 }, 0.0)
        });
        let [a, b, c, dd] = inst[k];
        sup_b = sup_b.max(b);
        sup_c = sup_c.max(c);
        sup_d = sup_d.max(dd);
        let bound =
            (kappa + k_n * kappa.powi(n_ord as i32) + (k_n + m) * kappa.powi(n_ord as i32 + 1) * (setup.cutoff + 1.0 / kappa + t)) * unorm;
        rows.push(BudgetRow {
            order: n_ord,
            kappa,
            t,
            a0,
            a,
            b: sup_b,
            c: sup_c,
            d: sup_d,
            m,
            bound,
            budget: a0 + a + t * (sup_b + sup_c + sup_d),
            measured,
            macro_error: g.norm(&low),
            ratio: if bound > 0.0 { measured / bound } else { 0.0 },
        });
    }
    Ok(rows)
}

/// `‖(f, g)‖` with `f = (Aφᴺ_J + (σᴺ_J)ᵀ)∇∇ᴺ_J ū` and `g = φᴺ_J ∇ᴺ_J ∂ₜū`.
fn b_term(field: &CoefficientField, tiled: &TiledCorrectors, u: &Stack, v: &Stack, n_ord: usize) -> f64 {
    let g = tiled.grid;
    let d = g.d;
    let len = g.len();
    let mut f = vec![vec![0.0; len]; d];
    let mut gg = vec![0.0; len];
    for (bi, s) in multisets(d, n_ord).iter().enumerate() {
        let w = multiplicity(d, s);
        let phi = &tiled.phi[n_ord][bi];
        let sig = &tiled.sigma[n_ord][bi];
        let dv = v.get(s);
        for x in 0..len {
            gg[x] += w * phi[x] * dv[x];
        }
        for l in 0..d {
            let mut axes = s.clone();
            axes.push(l);
            let du = u.get(&axes);
            for (i, fi) in f.iter_mut().enumerate() {
                let sg = &sig[l * d + i];
                for x in 0..len {
                    fi[x] += w * (field.a(x, i, l) * phi[x] + sg[x]) * du[x];
                }
            }
        }
    }
    (f.iter().map(|c| g.norm(c).powi(2)).sum::<f64>() + g.norm(&gg).powi(2)).sqrt()
}

/// `‖σᴺ_J : ∇²∇ᴺ_J W‖` with `W = ∫₀ˢ ū`.
fn c_term(tiled: &TiledCorrectors, w: &Stack, n_ord: usize) -> f64 {
    let g = tiled.grid;
    let d = g.d;
    let mut acc = vec![0.0; g.len()];
    for (bi, s) in multisets(d, n_ord).iter().enumerate() {
        let wt = multiplicity(d, s);
        for i in 0..d {
            for l in 0..d {
                let mut axes = s.clone();
                axes.push(i);
                axes.push(l);
                let der = w.get(&axes);
                let sg = &tiled.sigma[n_ord][bi][i * d + l];
                acc.iter_mut().zip(sg.iter().zip(&der)).for_each(|(a, (p, q))| *a += wt * p * q);
            }
        }
    }
    g.norm(&acc)
}

/// Norms of `Σ_J φ^{n-m-1}_{j₁…} Āᵐ_{…}[jₙ][jₙ₋₁] ∇ⁿ_J W` for each `(n, m)` pair.
fn d_terms(set: &CorrectorSet, tiled: &TiledCorrectors, w: &Stack, n_ord: usize) -> Vec<f64> {
    let g = tiled.grid;
    let d = g.d;
    let mut out = Vec::new();
    for n in n_ord + 2..=2 * n_ord {
        for m in n - n_ord..=n_ord {
            let mut acc = vec![0.0; g.len()];
            for j in tuples(d, n) {
                let p = n - m - 1;
                let coef = set.block(m, &j[p..n - 2], j[n - 1], j[n - 2]);
                if coef == 0.0 {
                    continue;
                }
                let phi = &tiled.phi[p][multiset_index(d, &j[..p])];
                let der = w.get(&j);
                acc.iter_mut().zip(phi.iter().zip(&der)).for_each(|(a, (x, y))| *a += coef * x * y);
            }
            out.push(g.norm(&acc));
        }
    }
    out
}

/// Horizon rule `t_max = c·κ^{-(N+1)}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HorizonRule {
    pub constant: f64,
    /// Optional cap on `t_max`.
    pub cap: Option<f64>,
    /// Number of evenly spaced sample times in `[κ⁻¹, t_max]`.
    pub samples: usize,
}

impl HorizonRule {
    pub fn t_max(&self, kappa: f64, order: usize) -> f64 {
        let t = self.constant * kappa.powi(-(order as i32 + 1));
        self.cap.map_or(t, |c| t.min(c))
    }
}

/// A simulation setup for one `κ`.
#[derive(Debug, Clone)]
pub struct PreparedCase {
    pub field: CoefficientField,
    /// Band-limited initial displacement.
    pub u0: Vec<f64>,
    /// Cutoff radius `L` used for the data.
    pub cutoff: f64,
    /// Latest time at which the torus does not yet feed the pulse back onto itself.
    pub horizon: f64,
}

/// Provider of grids and initial data for a scaling sweep.
pub trait ScalingCase: Sync {
    fn prepare(&self, kappa: f64, t_max: f64) -> Result<PreparedCase>;
}

/// Tiled 1D periodic medium with a regularized Gaussian pulse of width `κ⁻¹`.
#[derive(Debug, Clone)]
pub struct PeriodicCase {
    /// Coefficient field on one unit cell.
    pub cell: CoefficientField,
    /// Pulse footprint in units of `κ⁻¹`.
    pub width: f64,
    /// Largest admissible simulation grid.
    pub max_points: usize,
}

impl ScalingCase for PeriodicCase {
    fn prepare(&self, kappa: f64, t_max: f64) -> Result<PreparedCase> {
        let cg = self.cell.grid;
        if cg.d != 1 {
            return Err(Error::UnsupportedDimension(cg.d));
        }
        // Macroscopic speed √Ā from the harmonic mean, with a margin for dispersion.
        let harmonic = 1.0 / self.cell.values[0].iter().map(|a| 1.0 / a).sum::<f64>() * cg.points as f64;
        let speed = 1.05 * harmonic.sqrt();
        let footprint = self.width / kappa;
        // The two halves of the pulse meet again once they have covered the torus.
        let wanted = (2.0 * speed * t_max + footprint).max(2.0 * footprint);
        let cells = ((wanted / cg.extent / 64.0).ceil() as usize * 64).min(self.max_points / cg.points);
        let big = Grid { d: 1, extent: cells as f64 * cg.extent, points: cells * cg.points };
        if big.extent < 2.0 * footprint {
            return Err(Error::Horizon { needed: 2.0 * footprint, available: big.extent });
        }
        let field = self.cell.tile(big)?;
        let center = [0.5 * big.extent, 0.0];
        let radius = 0.5 * big.extent;
        let pulse = big.sample(|x| (-(kappa * (x[0] - center[0])).powi(2)).exp());
        let u0 = regularize(&pulse, &build_mollifier(kappa, &big)?, &build_cutoff(radius, center, &big)?);
        Ok(PreparedCase { field, u0, cutoff: radius, horizon: (big.extent - footprint) / (2.0 * speed) })
    }
}

/// Per-`(N, κ)` summary of a budget series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub order: usize,
    pub kappa: f64,
    pub t_max: f64,
    /// Whether the torus horizon cut `t_max` below the rule.
    pub capped: bool,
    pub data_norm: f64,
    /// Mean oscillatory error `measured - macro` over the samples.
    pub plateau: f64,
    /// Slope of the macroscopic error against `t`, fitted with an intercept.
    pub rate: f64,
    /// `rate / (κ‖u°‖)`: growth per unit macroscopic time and unit data.
    pub relative_rate: f64,
    /// `plateau / rate`, the time at which secular growth matches the plateau.
    pub crossover: f64,
    pub worst_ratio: f64,
    pub rows: Vec<BudgetRow>,
}

/// Secular exponent `p` with `relative_rate ∝ κᵖ` for one order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentFit {
    pub order: usize,
    /// `None` when fewer than 3 `κ` values show secular growth.
    pub exponent: Option<f64>,
    pub usable: usize,
}

/// Fitted secular exponents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    pub exponents: Vec<ExponentFit>,
    pub worst_ratio: f64,
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1).max(1) as f64).collect()
}

/// Run budgets over `(N, κ)` and fit secular exponents.
pub fn scaling_experiment(
    set: &CorrectorSet,
    case: &dyn ScalingCase,
    orders: &[usize],
    kappas: &[f64],
    rule: HorizonRule,
) -> Result<ScalingReport> {
    if kappas.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 κ values, got {}", kappas.len())));
    }
    let mut jobs: Vec<(usize, f64)> = orders.iter().flat_map(|&n| kappas.iter().map(move |&k| (n, k))).collect();
    jobs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let points: Vec<Result<ScalingPoint>> = jobs
        .par_iter()
        .map(|&(n, kappa)| {
            let wanted = rule.t_max(kappa, n);
            let prep = case.prepare(kappa, wanted)?;
            let t_max = wanted.min(prep.horizon);
            let t0 = 1.0 / kappa;
            if t_max <= t0 {
                return Err(Error::Horizon { needed: t0, available: t_max });
            }
            let times = linspace(t0, t_max, rule.samples.max(3));
            let rows = error_budget(&prep.field, set, &prep.u0, BudgetSetup { kappa, cutoff: prep.cutoff, order: n }, &times)?;
            let series: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.macro_error)).collect();
            let rate = linear_fit(&series).ok_or_else(|| Error::Fit("degenerate time samples".into()))?.slope;
            let plateau = rows.iter().map(|r| r.measured - r.macro_error).sum::<f64>() / rows.len() as f64;
            let data_norm = prep.field.grid.norm(&prep.u0);
            let worst_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
            Ok(ScalingPoint {
                order: n,
                kappa,
                t_max,
                capped: t_max < wanted,
                data_norm,
                plateau,
                rate,
                relative_rate: rate / (kappa * data_norm),
                crossover: plateau / rate,
                worst_ratio,
                rows,
            })
        })
        .collect();
    let points: Vec<ScalingPoint> = points.into_iter().collect::<Result<_>>()?;
    let mut exponents = Vec::new();
    for &n in orders {
        let pts: Vec<(f64, f64)> =
            points.iter().filter(|p| p.order == n && p.rate > 0.0).map(|p| (p.kappa.ln(), p.relative_rate.ln())).collect();
        let exponent = if pts.len() < 3 { None } else { linear_fit(&pts).map(|f| f.slope) };
        exponents.push(ExponentFit { order: n, exponent, usable: pts.len() });
    }
    let worst_ratio = points.iter().map(|p| p.worst_ratio).fold(0.0, f64::max);
    Ok(ScalingReport { points, exponents, worst_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correctors::{build_correctors, oracle_1d, SolverOptions};
    use crate::grid::build_grid;
    use crate::media::{sample_periodic, PeriodicProfile};

    #[test]
    fn mollifier_properties() {
        let g = build_grid(1, 256.0, 1024).unwrap();
        for kappa in [0.5, 1.0, 2.0] {
            let m = build_mollifier(kappa, &g).unwrap();
            assert!((m.mass() - 1.0).abs() < 1e-12);
            assert!(m.rho.iter().all(|&v| v >= -1e-12));
            for (i, c) in m.rho_hat.iter().enumerate() {
                if g.wavevector(i)[0].abs() > kappa {
                    assert_eq!(c.norm(), 0.0);
                }
            }
            let r = m.second_moment() * kappa * kappa;
            assert!((1.0..=50.0).contains(&r), "{r}");
        }
        assert!(build_mollifier(0.01, &g).is_err());
    }

    #[test]
    fn cutoff_bounds() {
        let g = build_grid(2, 32.0, 128).unwrap();
        let c = build_cutoff(8.0, [16.0, 16.0], &g).unwrap();
        assert!(c.chi.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let step = 1e-6;
        let worst = (0..1000).map(|i| {
            let r = 4.0 + 4.0 * i as f64 / 1000.0;
            ((cutoff_profile(r + step, 8.0) - cutoff_profile(r, 8.0)) / step).abs()
        });
        assert!(worst.fold(0.0, f64::max) <= 4.0 / 8.0);
        assert_eq!(cutoff_profile(3.9, 8.0), 1.0);
        assert_eq!(cutoff_profile(8.1, 8.0), 0.0);
    }

    #[test]
    fn regularize_is_contractive_and_band_limited() {
        let g = build_grid(1, 128.0, 512).unwrap();
        let m = build_mollifier(1.0, &g).unwrap();
        let c = build_cutoff(40.0, [64.0, 0.0], &g).unwrap();
        let u0 = g.sample(|x| if (x[0] - 60.0).abs() < 10.0 { 1.0 } else { 0.0 });
        let r = regularize(&u0, &m, &c);
        assert!(g.norm(&r) <= g.norm(&u0));
        assert!(crate::homprop::mass_outside_band(&r, 1.0, &g) < 1e-20);
        assert!(regularize(&vec![0.0; 512], &m, &c).iter().all(|&v| v == 0.0));
        let smooth = g.sample(|x| (-((x[0] - 64.0) / 8.0).powi(2)).exp() * (0.2 * x[0]).cos());
        let r = regularize(&smooth, &m, &c);
        let err = g.norm(&r.iter().zip(&smooth).map(|(a, b)| a - b).collect::<Vec<_>>());
        let grad = g.norm(&Spectral::new(g).derivative(&smooth, 0));
        assert!(err <= m.second_moment().sqrt() * grad, "{err}");
    }

    #[test]
    fn reconstruction_first_order_laminate() {
        let cell = build_grid(1, 1.0, 16).unwrap();
        let f = sample_periodic(&PeriodicProfile::Laminate { low: 1.0, high: 4.0 }, 1.0, &cell).unwrap();
        let set = build_correctors(&f, 2, SolverOptions::default()).unwrap();
        let oracle = oracle_1d(&f, 1).unwrap();
        let big = build_grid(1, 64.0, 1024).unwrap();
        let tiled = tile_correctors(&set, 2, big).unwrap();
        let ubar = big.sample(|x| (2.0 * std::f64::consts::PI * x[0] / 64.0).sin());
        let r0 = two_scale_reconstruct(&tiled, &ubar, 0);
        assert!(r0.iter().zip(&ubar).all(|(a, b)| (a - b).abs() < 1e-12));
        let r1 = two_scale_reconstruct(&tiled, &ubar, 1);
        let du = Spectral::new(big).derivative(&ubar, 0);
        let phi = tile_field(&oracle.orders[1].phi[0], cell, big);
        for i in 0..big.len() {
            assert!((r1[i] - ubar[i] - phi[i] * du[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_budget_vanishes() {
        let cell = build_grid(1, 1.0, 8).unwrap();
        let f = sample_periodic(&PeriodicProfile::identity(), 1.0, &cell).unwrap();
        let set = build_correctors(&f, 1, SolverOptions::default()).unwrap();
        let big = build_grid(1, 256.0, 2048).unwrap();
        let field = f.tile(big).unwrap();
        let m = build_mollifier(0.5, &big).unwrap();
        let c = build_cutoff(100.0, [0.0, 0.0], &big).unwrap();
        let u0 = regularize(&big.sample(|x| (-(big.wrap(x[0]) / 4.0).powi(2)).exp()), &m, &c);
        let rows = error_budget(&field, &set, &u0, BudgetSetup { kappa: 0.5, cutoff: 100.0, order: 1 }, &[2.0, 8.0]).unwrap();
        for r in rows {
            assert_eq!((r.a0, r.a, r.b, r.c, r.d), (0.0, 0.0, 0.0, 0.0, 0.0));
            assert!(r.measured < 1e-3 * big.norm(&u0), "{}", r.measured);
        }
    }

    #[test]
    fn shorthand_sums() {
        assert_eq!(m_shorthand(&[1.0, 2.0], 1, 0.3), 0.0);
        // N = 2: n = 1, m = 1: K_1 K_2.
        assert_eq!(m_shorthand(&[1.0, 2.0, 3.0], 2, 0.3), 6.0);
    }
}
