//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits with status 0 after printing every line. Set `ACCEPTANCE_STRICT=1` to
//! turn any FAIL into a nonzero exit status.

use std::f64::consts::PI;
use std::time::{Duration, Instant};
use wavehom::correctors::{build_correctors, CorrectorSet, SolverOptions};
use wavehom::grid::{build_grid, Grid};
use wavehom::hetwave::{
    discrete_eigenpairs, energy, evolve_with, finite_speed_check, leapfrog_energy, standing_wave_defect, Boundary, Operator, WaveState,
};
use wavehom::homprop::{green_decay_series, log_times, measure_decay, DecayRegion, HomogenizedSymbol};
use wavehom::media::{sample_periodic, sample_random, CoefficientField, PeriodicProfile};
use wavehom::spreading::{
    large_scale_average, large_scale_average_brute, localization_length, peak_center, standing_wave_probe,
    width_comparison, window_series, ProbeParams, PROBE_CONSTANT,
};
use wavehom::twoscale::{build_mollifier, scaling_experiment, HorizonRule, PeriodicCase};

// Pinned tolerances.
const TENSOR_TOL: f64 = 1e-8;
const EVEN_A2_TOL: f64 = 1e-9;
const EVEN_A4_TOL: f64 = 1e-8;
const RESIDUAL_TOL: f64 = 1e-8;
const DECAY_1D: (f64, f64) = (0.0, 0.05);
const DECAY_2D: (f64, f64) = (-0.5, 0.1);
const INTERIOR_MAX: f64 = -0.8;
const SECULAR_N1: (f64, f64) = (2.0, 0.4);
const SECULAR_N3: (f64, f64) = (4.0, 0.5);
const BOUND_FACTOR: f64 = 100.0;
const DRIFT_TOL: f64 = 1e-6;
const DALEMBERT_TOL: f64 = 1e-4;
const LEAKAGE_TOL: f64 = 1e-6;
const AVERAGE_TOL: f64 = 1e-12;
const PERIODICITY_TOL: f64 = 1e-5;
const RETURN_TOL: f64 = 1e-6;
const THETA: f64 = 0.2;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Check = fn() -> Result<Outcome, String>;

fn main() {
    let criteria: [(&str, u64, Check); 11] = [
        ("homogenized tensor oracle", 5, tensor_oracle),
        ("even-order vanishing", 30, even_orders),
        ("ellipticity of the homogenized matrix", 60, ellipticity),
        ("corrector residuals", 120, corrector_residuals),
        ("Green-function global decay", 120, green_decay),
        ("interior decay", 120, interior_decay),
        ("two-scale secular scaling", 600, secular_scaling),
        ("solver integrity", 120, solver_integrity),
        ("width machinery", 30, width_machinery),
        ("standing-wave identities", 300, standing_waves),
        ("probe contrast", 600, probe_contrast),
    ];
    // ACCEPTANCE_ONLY=8,11 runs a subset.
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|k| k.trim().parse().ok()).collect());
    let mut failed = 0;
    let mut ran = 0;
    for (k, (name, budget, check)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(k + 1))) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*budget);
        let (pass, detail) = match result {
            Ok(o) => (o.pass && in_time, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {detail} [{:.1}s of {budget}s]",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

fn grid(d: usize, extent: f64, points: usize) -> Result<Grid, String> {
    build_grid(d, extent, points).map_err(|e| e.to_string())
}

fn periodic(profile: PeriodicProfile, d: usize, points: usize) -> Result<CoefficientField, String> {
    sample_periodic(&profile, 1.0, &grid(d, 1.0, points)?).map_err(|e| e.to_string())
}

fn random(seed: u64, d: usize) -> Result<CoefficientField, String> {
    let (extent, points) = if d == 1 { (16.0, 64) } else { (8.0, 16) };
    sample_random(seed, 2.0, &grid(d, extent, points)?, 4.0).map_err(|e| e.to_string())
}

fn laminate() -> PeriodicProfile {
    PeriodicProfile::Laminate { low: 1.0, high: 4.0 }
}

fn cosine() -> PeriodicProfile {
    PeriodicProfile::Cosine { mean: 2.0, amplitude: 1.0 }
}

fn cosine_series() -> PeriodicProfile {
    PeriodicProfile::CosineSeries { mean: 2.0, terms: vec![(0.5, [1, 0]), (0.3, [0, 1]), (0.2, [1, 1])] }
}

fn correctors(field: &CoefficientField, order: usize) -> Result<CorrectorSet, String> {
    build_correctors(field, order, SolverOptions::default()).map_err(|e| e.to_string())
}

/// Suite media shared by the corrector criteria: `(label, field, order)`.
fn suite() -> Result<Vec<(String, CoefficientField, usize)>, String> {
    Ok(vec![
        ("1D laminate".into(), periodic(laminate(), 1, 16)?, 4),
        ("1D cosine".into(), periodic(cosine(), 1, 32)?, 4),
        ("1D random".into(), random(11, 1)?, 4),
        ("2D cosine series".into(), periodic(cosine_series(), 2, 16)?, 4),
        ("2D laminate".into(), periodic(laminate(), 2, 16)?, 4),
        ("2D random".into(), random(11, 2)?, 4),
    ])
}

/// Trapezoid quadrature of `1/a` on a fine unit-cell grid.
fn harmonic_mean(a: impl Fn(f64) -> f64) -> f64 {
    let n = 1 << 16;
    let s: f64 = (0..n).map(|i| 1.0 / a((i as f64 + 0.5) / n as f64)).sum();
    n as f64 / s
}

fn tensor_oracle() -> Result<Outcome, String> {
    let lam = correctors(&periodic(laminate(), 1, 16)?, 1)?.abar()[0];
    let cos = correctors(&periodic(cosine(), 1, 64)?, 1)?.abar()[0];
    let lam_ref = harmonic_mean(|x| if x < 0.5 { 1.0 } else { 4.0 });
    let cos_ref = harmonic_mean(|x| 2.0 + (2.0 * PI * x).cos());
    let e1 = (lam - lam_ref).abs().max((lam - 1.6).abs());
    let e2 = (cos - cos_ref).abs().max((cos - 3f64.sqrt()).abs());
    Ok(outcome(
        e1 < TENSOR_TOL && e2 < TENSOR_TOL,
        format!("laminate {lam:.12} (err {e1:.1e}), cosine {cos:.12} (err {e2:.1e}), tol {TENSOR_TOL:.0e}"),
    ))
}

fn even_orders() -> Result<Outcome, String> {
    let mut worst = (0.0f64, 0.0f64);
    for (_, field, order) in suite()? {
        let set = correctors(&field, order)?;
        worst.0 = worst.0.max(set.tensor_norm(2));
        worst.1 = worst.1.max(set.tensor_norm(4));
    }
    Ok(outcome(
        worst.0 < EVEN_A2_TOL && worst.1 < EVEN_A4_TOL,
        format!("max |A2| {:.1e} (tol {EVEN_A2_TOL:.0e}), max |A4| {:.1e} (tol {EVEN_A4_TOL:.0e}) over 6 media", worst.0, worst.1),
    ))
}

fn sym_eigenvalues(a: &[f64], d: usize) -> (f64, f64) {
    if d == 1 {
        return (a[0], a[0]);
    }
    let (p, q, r) = (a[0], 0.5 * (a[1] + a[2]), a[3]);
    let m = 0.5 * (p + r);
    let s = (0.25 * (p - r) * (p - r) + q * q).sqrt();
    (m - s, m + s)
}

fn ellipticity() -> Result<Outcome, String> {
    let mut fields = Vec::new();
    for seed in 1..=20 {
        fields.push(random(seed, 2)?);
    }
    fields.push(periodic(laminate(), 1, 16)?);
    fields.push(periodic(cosine(), 1, 32)?);
    fields.push(periodic(cosine_series(), 2, 16)?);
    fields.push(periodic(laminate(), 2, 16)?);
    fields.push(periodic(PeriodicProfile::Constant { a11: 2.0, a12: 0.5, a22: 1.0 }, 2, 8)?);
    let mut margin = f64::INFINITY;
    for f in &fields {
        let set = correctors(f, 1)?;
        let (lo, hi) = sym_eigenvalues(&set.abar(), f.grid.d);
        let c0 = f.ceiling.max(1.0 / f.floor);
        margin = margin.min(lo - 1.0 / c0).min(c0 - hi).min(lo - f.floor).min(f.ceiling - hi);
    }
    Ok(outcome(
        margin >= -1e-12,
        format!("{} media, smallest margin to [floor, ceiling] {margin:.3e}", fields.len()),
    ))
}

fn corrector_residuals() -> Result<Outcome, String> {
    let mut worst = (0.0f64, 0.0f64);
    let mut labels = Vec::new();
    for (label, field, order) in suite()? {
        let order = if field.grid.d == 1 { order } else { 3 };
        let (r, f) = correctors(&field, order)?.worst_residuals();
        worst = (worst.0.max(r), worst.1.max(f));
        labels.push(format!("{label} N={order}"));
    }
    Ok(outcome(
        worst.0 < RESIDUAL_TOL && worst.1 < RESIDUAL_TOL,
        format!("corrector {:.1e}, flux {:.1e} (tol {RESIDUAL_TOL:.0e}) over {}", worst.0, worst.1, labels.join(", ")),
    ))
}

fn symbol(field: &CoefficientField) -> Result<HomogenizedSymbol, String> {
    HomogenizedSymbol::from_correctors(&correctors(field, 3)?, 3).map_err(|e| e.to_string())
}

fn decay_exponent(sym: &HomogenizedSymbol, kappa: f64, g: Grid, region: DecayRegion) -> Result<f64, String> {
    let unit = build_mollifier(1.0, &g).map_err(|e| e.to_string())?;
    let taus = log_times(10.0, 1000.0, 12);
    let series = green_decay_series(sym, kappa, &unit, &taus, region).map_err(|e| e.to_string())?;
    Ok(measure_decay(&series).map_err(|e| e.to_string())?.exponent)
}

fn green_decay() -> Result<Outcome, String> {
    let s1 = symbol(&periodic(laminate(), 1, 64)?)?;
    let g1 = grid(1, 4096.0, 8192)?;
    let e1: Vec<f64> =
        [0.05, 0.1].iter().map(|&k| decay_exponent(&s1, k, g1, DecayRegion::Global)).collect::<Result<_, _>>()?;
    let s2 = symbol(&periodic(cosine_series(), 2, 32)?)?;
    let e2 = decay_exponent(&s2, 0.1, grid(2, 3072.0, 2048)?, DecayRegion::Global)?;
    let ok1 = e1.iter().all(|e| (e - DECAY_1D.0).abs() <= DECAY_1D.1);
    let ok2 = (e2 - DECAY_2D.0).abs() <= DECAY_2D.1;
    Ok(outcome(
        ok1 && ok2,
        format!(
            "1D exponents {:.4}, {:.4} (target {} ± {}), 2D exponent {e2:.4} (target {} ± {})",
            e1[0], e1[1], DECAY_1D.0, DECAY_1D.1, DECAY_2D.0, DECAY_2D.1
        ),
    ))
}

fn interior_decay() -> Result<Outcome, String> {
    let s1 = symbol(&periodic(laminate(), 1, 64)?)?;
    let g1 = grid(1, 4096.0, 8192)?;
    let region = DecayRegion::Interior { fraction: 0.25 };
    let e: Vec<f64> = [0.05, 0.1].iter().map(|&k| decay_exponent(&s1, k, g1, region)).collect::<Result<_, _>>()?;
    Ok(outcome(
        e.iter().all(|&x| x <= INTERIOR_MAX),
        format!("exponents {:.3}, {:.3} (required <= {INTERIOR_MAX})", e[0], e[1]),
    ))
}

fn secular_scaling() -> Result<Outcome, String> {
    let cell = periodic(laminate(), 1, 16)?;
    let set = correctors(&cell, 3)?;
    let rule = HorizonRule { constant: 10.0, cap: None, samples: 8 };
    let low = PeriodicCase { cell: cell.clone(), width: 8.0, max_points: 1 << 18 };
    let r1 = scaling_experiment(&set, &low, &[1], &[0.05, 0.1, 0.2], rule).map_err(|e| e.to_string())?;
    let high = PeriodicCase { cell, width: 8.0, max_points: 1 << 16 };
    let r3 = scaling_experiment(&set, &high, &[3], &[0.06, 0.09, 0.135], rule).map_err(|e| e.to_string())?;
    let p1 = r1.exponents[0].exponent;
    let p3 = r3.exponents[0].exponent;
    let within = |p: Option<f64>, (c, w): (f64, f64)| p.is_some_and(|p| (p - c).abs() <= w);
    let worst = r1.worst_ratio.max(r3.worst_ratio);
    let show = |p: Option<f64>, usable: usize| p.map_or(format!("none ({usable} usable)"), |p| format!("{p:.3}"));
    Ok(outcome(
        within(p1, SECULAR_N1) && within(p3, SECULAR_N3) && worst <= BOUND_FACTOR,
        format!(
            "N=1 exponent {} (target {} ± {}), N=3 exponent {} (target {} ± {}), worst measured/bound {worst:.2e} (limit {BOUND_FACTOR})",
            show(p1, r1.exponents[0].usable),
            SECULAR_N1.0,
            SECULAR_N1.1,
            show(p3, r3.exponents[0].usable),
            SECULAR_N3.0,
            SECULAR_N3.1
        ),
    ))
}

fn bump(g: &Grid, center: f64, width: f64) -> Vec<f64> {
    g.sample(|x| {
        let r = ((x[0] - center).powi(2) + if g.d == 2 { (x[1] - center).powi(2) } else { 0.0 }).sqrt() / width;
        if r < 1.0 {
            (1.0 - r * r).powi(4)
        } else {
            0.0
        }
    })
}

fn solver_integrity() -> Result<Outcome, String> {
    // Drift of the discrete leapfrog energy over 10⁴ half-CFL steps in a random 2D medium.
    // The continuous energy is reported alongside; it oscillates at O(dt²) without drifting.
    let g = grid(2, 32.0, 64)?;
    let op = Operator::new(&sample_random(5, 2.0, &g, 4.0).map_err(|e| e.to_string())?);
    let s0 = WaveState::at_rest(g, bump(&g, 16.0, 4.0));
    let dt = op.default_dt();
    let (e0, l0) = (energy(&op, &s0), leapfrog_energy(&op, &s0, dt));
    let (mut drift, mut oscillation) = (0.0f64, 0.0f64);
    evolve_with(&op, &s0, 1e4 * dt, dt, |k, s| {
        if k % 100 == 0 {
            drift = drift.max((leapfrog_energy(&op, s, dt) - l0).abs() / l0);
            oscillation = oscillation.max((energy(&op, s) - e0).abs() / e0);
        }
    })
    .map_err(|e| e.to_string())?;

    // Identity medium against the travelling-wave solution for a pulse resolved by about 128 points per width.
    let g = grid(1, 128.0, 4096)?;
    let id = Operator::new(&sample_periodic(&PeriodicProfile::identity(), 1.0, &g).map_err(|e| e.to_string())?);
    let f = |x: f64| (-((x - 64.0) / 4.0).powi(2)).exp();
    let t = 10.0;
    let u = wavehom::hetwave::evolve_heterogeneous(&id, &WaveState::at_rest(g, g.sample(|x| f(x[0]))), t, id.default_dt())
        .map_err(|e| e.to_string())?
        .u;
    let reference = g.sample(|x| 0.5 * (f(x[0] - t) + f(x[0] + t)));
    let diff: Vec<f64> = u.iter().zip(&reference).map(|(a, b)| a - b).collect();
    let dalembert = g.norm(&diff) / g.norm(&reference);

    // Finite speed outside the cone of speed √ceiling.
    let lg = grid(1, 128.0, 2048)?;
    let lam = sample_periodic(&laminate(), 1.0, &lg).map_err(|e| e.to_string())?;
    let rg = grid(2, 64.0, 128)?;
    let rnd = sample_random(9, 2.0, &rg, 4.0).map_err(|e| e.to_string())?;
    let mut leakage = 0.0f64;
    for (field, gg) in [(lam, lg), (rnd, rg)] {
        let op = Operator::new(&field);
        let c = 0.5 * gg.extent;
        let l = finite_speed_check(&op, &bump(&gg, c, 4.0), [c, c], 4.0, 10.0).map_err(|e| e.to_string())?;
        leakage = leakage.max(l);
    }
    Ok(outcome(
        drift < DRIFT_TOL && dalembert < DALEMBERT_TOL && leakage < LEAKAGE_TOL,
        format!(
            "leapfrog energy drift {drift:.1e} (tol {DRIFT_TOL:.0e}, continuous energy oscillation {oscillation:.1e}), traveling-wave error {dalembert:.1e} (tol {DALEMBERT_TOL:.0e}), leakage {leakage:.1e} (tol {LEAKAGE_TOL:.0e})"
        ),
    ))
}

fn width_machinery() -> Result<Outcome, String> {
    // Rescaling: the width of λ^{d/4}φ(λ^{1/2}·) is λ^{-1/2} times the width of φ.
    let mut rescale_err = 0.0f64;
    let mut slack_h = f64::INFINITY;
    for d in [1, 2] {
        let points = if d == 1 { 2048 } else { 256 };
        let g = grid(d, 64.0, points)?;
        let c = 32.0;
        let phi = |x: [f64; 2], s: f64| {
            let y = [(x[0] - c) * s, if d == 2 { (x[1] - c) * s } else { 0.0 }];
            let r2 = y[0] * y[0] + y[1] * y[1];
            (-r2 / 2.0).exp() * (1.0 + 0.3 * (3.0 * y[0]).cos())
        };
        let base = g.sample(|x| phi(x, 1.0));
        for lambda in [0.25f64, 0.5] {
            let scaled = g.sample(|x| lambda.powf(d as f64 / 4.0) * phi(x, lambda.sqrt()));
            for theta in [0.1, 0.2, 0.3, 0.45] {
                let w0 = localization_length(&base, &g, [c, c], theta).map_err(|e| e.to_string())?.radius;
                let w1 = localization_length(&scaled, &g, [c, c], theta).map_err(|e| e.to_string())?.radius;
                let err = (w1 - w0 / lambda.sqrt()).abs();
                rescale_err = rescale_err.max(err / g.h());
                slack_h = slack_h.min(2.0 - err / g.h());
            }
        }
    }

    // Monotonicity in θ on eigenstates of a random medium.
    let g = grid(1, 64.0, 256)?;
    let op = Operator::new(&sample_random(3, 2.0, &g, 10.0).map_err(|e| e.to_string())?);
    let mut monotone = true;
    for pair in discrete_eigenpairs(&op, 6, 0.5, Boundary::Periodic).map_err(|e| e.to_string())? {
        let c = peak_center(&pair.psi, &g);
        let widths: Vec<f64> = [0.05, 0.1, 0.2, 0.3, 0.4, 0.49]
            .iter()
            .map(|&t| localization_length(&pair.psi, &g, c, t).map(|w| w.radius))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        monotone &= widths.windows(2).all(|w| w[1] <= w[0]);
    }

    // Moving-window average against the brute-force ball scan.
    let mut avg_err = 0.0f64;
    for d in [1, 2] {
        let g = grid(d, 16.0, 64)?;
        let u = g.sample(|x| (0.7 * x[0]).sin() * (1.0 + 0.5 * (1.3 * x[1]).cos()) + 0.1 * x[0]);
        for r in [0.3, 1.0, 2.5, 4.0, 7.5] {
            let a = large_scale_average(&u, &g, r);
            let b = large_scale_average_brute(&u, &g, r);
            avg_err = avg_err.max((a - b).abs() / b.abs().max(1e-300));
        }
    }
    Ok(outcome(
        slack_h >= 0.0 && monotone && avg_err <= AVERAGE_TOL,
        format!(
            "rescaling error {rescale_err:.2}h (limit 2h), monotone in theta {monotone}, window average relative error {avg_err:.1e} (tol {AVERAGE_TOL:.0e})"
        ),
    ))
}

/// Random 1D medium with eigenstates localized well inside the torus.
fn localized_fixture(
    extent: f64,
    points: usize,
    contrast: f64,
    target: f64,
    count: usize,
) -> Result<(Operator, Vec<wavehom::hetwave::Eigenpair>), String> {
    let g = grid(1, extent, points)?;
    let op = Operator::new(&sample_random(7, 2.0, &g, contrast).map_err(|e| e.to_string())?);
    let pairs = discrete_eigenpairs(&op, count, target, Boundary::Periodic).map_err(|e| e.to_string())?;
    Ok((op, pairs))
}

fn standing_waves() -> Result<Outcome, String> {
    let mut periodicity = 0.0f64;
    let mut min_slack = f64::INFINITY;
    let mut compared = 0;
    let mut comparison = true;
    let mut widths = (f64::INFINITY, 0.0f64);
    for target in [2.0, 4.0] {
        let (op, pairs) = localized_fixture(256.0, 1024, 10.0, target, 8)?;
        for pair in &pairs {
            periodicity = periodicity
                .max(standing_wave_defect(&op, &pair.psi, pair.lambda, op.default_dt()).map_err(|e| e.to_string())?);
            let c = peak_center(&pair.psi, &op.grid);
            let cmp = width_comparison(&op, pair, c, THETA, 1.0).map_err(|e| e.to_string())?;
            min_slack = min_slack.min(cmp.weighted_slack);
            widths = (widths.0.min(cmp.mass_width.radius), widths.1.max(cmp.mass_width.radius));
            if let Some(holds) = cmp.comparison_holds {
                compared += 1;
                comparison &= holds;
            }
        }
    }
    Ok(outcome(
        periodicity < PERIODICITY_TOL && min_slack >= 0.0 && compared > 0 && comparison,
        format!(
            "periodicity defect {periodicity:.1e} (tol {PERIODICITY_TOL:.0e}), min weighted slack {min_slack:.2e}, energy width >= mass width/4 on {compared} admissible states: {comparison} (mass widths {:.1}..{:.1})",
            widths.0, widths.1
        ),
    ))
}

fn probe_contrast() -> Result<Outcome, String> {
    // Localized: the window norm comes back to its initial value at each period.
    // The cutoff radius 2L stays well past the exponential tails of the narrowest states.
    let (op, pairs) = localized_fixture(512.0, 2048, 100.0, 1.0, 3)?;
    let mut returns = 0.0f64;
    let mut chain = f64::INFINITY;
    for pair in pairs.iter().take(3) {
        let c = peak_center(&pair.psi, &op.grid);
        let w = localization_length(&pair.psi, &op.grid, c, THETA).map_err(|e| e.to_string())?.radius.max(2.0);
        let p = ProbeParams { kappa: pair.lambda.powf(0.25), r: w, l: (3.0 * w).max(24.0), periods: 3, eta: 0.2, center: c, constant: PROBE_CONSTANT };
        let result = standing_wave_probe(&op, &pair.psi, pair.lambda, p).map_err(|e| e.to_string())?;
        for row in &result.rows {
            returns = returns.max((row.measured - result.initial).abs() / result.initial);
            chain = chain.min(row.chain_slack);
        }
    }

    // Periodic laminate: truncated low-frequency data leave the window.
    let g = grid(1, 512.0, 4096)?;
    let lam = Operator::new(&sample_periodic(&laminate(), 1.0, &g).map_err(|e| e.to_string())?);
    let c = 256.0;
    let (r, l) = (8.0, 16.0);
    let u0 = g.sample(|x| (2.0 * PI * (x[0] - c) / 32.0).cos());
    let p = ProbeParams { kappa: 0.25, r, l, periods: 0, eta: 0.2, center: [c, 0.0], constant: PROBE_CONSTANT };
    let times: Vec<f64> = (0..=8).map(|k| 12.0 * k as f64).collect();
    let series = window_series(&lam, &u0, &p, &times).map_err(|e| e.to_string())?;
    let initial = series[0].1;
    let late: Vec<&(f64, f64)> = series.iter().filter(|(t, _)| *t >= 3.0 * (r + l)).collect();
    let worst_late = late.iter().fold(0.0f64, |a, (_, m)| a.max(m / initial));
    Ok(outcome(
        returns < RETURN_TOL && chain >= -1e-12 && !late.is_empty() && worst_late < 1.0 - THETA,
        format!(
            "localized return defect {returns:.1e} (tol {RETURN_TOL:.0e}), min chain slack {chain:.2e}; laminate window ratio for t >= 3(R+L) {worst_late:.2e} (required < {})",
            1.0 - THETA
        ),
    ))
}
