//! Subcommand bodies: each turns a validated config into tables, plots and derived constants.

use crate::config::ExperimentConfig;
use crate::report::{Cell, Output, PlotSpec, Stage, Table};
use anyhow::{bail, ensure, Result};
use rayon::prelude::*;
use serde_json::json;
use std::path::Path;
use std::time::Instant;
use wavehom::correctors::{build_correctors, corrector_growth, CorrectorSet, SolverOptions};
use wavehom::grid::build_grid;
use wavehom::hetwave::{discrete_eigenpairs, Boundary, Operator};
use wavehom::homprop::{
    certify_kappa, green_decay_series, largest_certified_kappa, log_times, measure_decay, DecayRegion, HomogenizedSymbol,
};
use wavehom::io::{export_correctors, export_eigenpairs};
use wavehom::spreading::{
    dispersion_table, peak_center, predict_lower_bound, standing_wave_probe, width_comparison, LowerBound, ProbeParams, Setting,
    PROBE_CONSTANT,
};
use wavehom::tensor::multisets;
use wavehom::twoscale::{build_mollifier, scaling_experiment, HorizonRule, PeriodicCase};

/// Stopwatch collecting named stage durations.
struct Clock {
    stages: Vec<Stage>,
    last: Instant,
}

impl Clock {
    fn new() -> Self {
        Clock { stages: Vec::new(), last: Instant::now() }
    }

    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.stages.push(Stage { name: name.into(), seconds: (now - self.last).as_secs_f64() });
        self.last = now;
    }
}

fn plot(name: &str, table: &str, x: &'static str, y: &'static str, group: Option<&'static str>, log: (bool, bool)) -> PlotSpec {
    PlotSpec { name: name.into(), table: table.into(), x, y, group, log_x: log.0, log_y: log.1 }
}

fn cell_correctors(cfg: &ExperimentConfig) -> Result<CorrectorSet> {
    let field = cfg.medium.sample(&cfg.cell_grid()?, cfg.seed)?;
    Ok(build_correctors(&field, cfg.order, SolverOptions::default())?)
}

/// `C0`, `K_n` and certified `κ` ceilings of a corrector set.
fn derived_constants(set: &CorrectorSet) -> Result<serde_json::Value> {
    let symbol = HomogenizedSymbol::from_correctors(set, set.order)?;
    Ok(json!({
        "floor": set.floor,
        "ceiling": set.ceiling,
        "contrast": set.contrast(),
        "growth": set.growth,
        "kappa_max_k0": largest_certified_kappa(&symbol, 0, 1.0),
        "kappa_max_k1": largest_certified_kappa(&symbol, 1, 1.0),
    }))
}

pub fn correctors(cfg: &ExperimentConfig, dir: &Path) -> Result<Output> {
    let mut clock = Clock::new();
    let set = cell_correctors(cfg)?;
    clock.lap("solve");
    let growth = corrector_growth(&set);
    let mut table = Table::new("growth", &["n", "k_n", "residual", "flux_residual", "iterations", "tensor_norm"]);
    for n in 1..=set.order {
        let o = &set.orders[n];
        table.push(vec![
            n.into(),
            growth.constants[n].into(),
            o.residual.into(),
            o.flux_residual.into(),
            o.iterations.into(),
            set.tensor_norm(n).into(),
        ]);
    }
    let symbol = HomogenizedSymbol::from_correctors(&set, set.order)?;
    let mut certs = Table::new("certificates", &["kappa", "k", "margin", "strengthened", "threshold", "pass"]);
    for &kappa in &cfg.kappas {
        for k in [0, 1] {
            let c = certify_kappa(&symbol, kappa, k);
            certs.push(vec![kappa.into(), k.into(), c.margin.into(), c.strengthened.into(), c.threshold.into(), c.pass.into()]);
        }
    }
    let extra = export_correctors(dir, "cell", &set)?;
    clock.lap("report");
    let mut derived = derived_constants(&set)?;
    derived["growth_log_rate"] = json!(growth.log_rate);
    Ok(Output {
        tables: vec![table, certs],
        plots: vec![plot("growth", "growth", "n", "k_n", None, (false, true))],
        derived,
        stages: clock.stages,
        extra,
        failures: Vec::new(),
    })
}

pub fn tensors(cfg: &ExperimentConfig) -> Result<Output> {
    let mut clock = Clock::new();
    let set = cell_correctors(cfg)?;
    clock.lap("solve");
    let d = set.d();
    let mut table = Table::new("tensors", &["m", "index", "value", "norm"]);
    for m in 1..=set.order {
        let t = set.tensor(m);
        for idx in multisets(d, m + 1) {
            let label: String = idx.iter().map(|i| (i + 1).to_string()).collect();
            table.push(vec![m.into(), label.into(), t.get(&idx).into(), t.norm().into()]);
        }
    }
    Ok(Output { tables: vec![table], derived: derived_constants(&set)?, stages: clock.stages, ..Default::default() })
}

pub fn green_decay(cfg: &ExperimentConfig) -> Result<Output> {
    let mut clock = Clock::new();
    let set = cell_correctors(cfg)?;
    let symbol = HomogenizedSymbol::from_correctors(&set, set.order)?;
    clock.lap("correctors");
    let spec = cfg.green_decay();
    let grid = build_grid(cfg.cell.d, spec.extent, spec.points)?;
    let unit = build_mollifier(1.0, &grid)?;
    let taus = log_times(spec.tau_min, spec.tau_max, spec.samples);
    let regions = [("global", DecayRegion::Global), ("interior", DecayRegion::Interior { fraction: spec.fraction })];
    let jobs: Vec<(f64, &str, DecayRegion)> =
        cfg.kappas.iter().flat_map(|&k| regions.iter().map(move |&(name, r)| (k, name, r))).collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(kappa, name, region)| {
            let series = green_decay_series(&symbol, kappa, &unit, &taus, region);
            let fit = series.as_ref().map_err(|e| e.to_string()).and_then(|s| measure_decay(s).map_err(|e| e.to_string()));
            (kappa, name, series.unwrap_or_default(), fit)
        })
        .collect();
    clock.lap("series");
    let mut fits = Table::new("green_decay", &["d", "n", "kappa", "region", "exponent", "prefactor", "fit_residual", "status"]);
    let mut samples = Table::new("green_series", &["kappa", "region", "tau", "sup"]);
    let mut failures = Vec::new();
    for (kappa, name, series, fit) in results {
        let (e, p, r, status) = match &fit {
            Ok(f) => (Some(f.exponent), Some(f.prefactor), Some(f.residual), "ok".to_string()),
            Err(e) => {
                failures.push(format!("kappa {kappa} {name}: {e}"));
                (None, None, None, e.clone())
            }
        };
        fits.push(vec![cfg.cell.d.into(), set.order.into(), kappa.into(), name.into(), e.into(), p.into(), r.into(), status.into()]);
        for (tau, sup) in series {
            samples.push(vec![kappa.into(), name.into(), tau.into(), sup.into()]);
        }
    }
    Ok(Output {
        tables: vec![fits, samples],
        plots: vec![plot("green_series", "green_series", "tau", "sup", Some("region"), (true, true))],
        derived: derived_constants(&set)?,
        stages: clock.stages,
        extra: Vec::new(),
        failures,
    })
}

pub fn two_scale(cfg: &ExperimentConfig) -> Result<Output> {
    ensure!(cfg.cell.d == 1 && cfg.medium.is_periodic(), "two-scale sweeps need a one-dimensional periodic medium");
    ensure!(cfg.kappas.len() >= 3, "two-scale sweeps need at least three kappa values");
    let mut clock = Clock::new();
    let field = cfg.medium.sample(&cfg.cell_grid()?, cfg.seed)?;
    let set = build_correctors(&field, cfg.order, SolverOptions::default())?;
    clock.lap("correctors");
    let case = PeriodicCase { cell: field, width: cfg.two_scale.width, max_points: cfg.two_scale.max_points };
    let rule = HorizonRule { constant: cfg.horizon.constant, cap: cfg.horizon.cap, samples: cfg.horizon.samples };
    let mut kappas = cfg.kappas.clone();
    kappas.sort_by(f64::total_cmp);
    let report = scaling_experiment(&set, &case, &cfg.two_scale.orders, &kappas, rule)?;
    clock.lap("sweep");
    let mut rows = Table::new(
        "two_scale",
        &["n", "kappa", "t", "a0", "a", "b", "c", "d", "bound", "measured", "ratio", "macro_error", "budget"],
    );
    let mut points = Table::new(
        "secular",
        &["n", "kappa", "t_max", "capped", "data_norm", "plateau", "rate", "relative_rate", "crossover", "worst_ratio"],
    );
    for p in &report.points {
        for r in &p.rows {
            rows.push(vec![
                r.order.into(),
                r.kappa.into(),
                r.t.into(),
                r.a0.into(),
                r.a.into(),
                r.b.into(),
                r.c.into(),
                r.d.into(),
                r.bound.into(),
                r.measured.into(),
                r.ratio.into(),
                r.macro_error.into(),
                r.budget.into(),
            ]);
        }
        points.push(vec![
            p.order.into(),
            p.kappa.into(),
            p.t_max.into(),
            p.capped.into(),
            p.data_norm.into(),
            p.plateau.into(),
            p.rate.into(),
            p.relative_rate.into(),
            p.crossover.into(),
            p.worst_ratio.into(),
        ]);
    }
    let mut exps = Table::new("exponents", &["n", "exponent", "usable"]);
    for e in &report.exponents {
        exps.push(vec![e.order.into(), e.exponent.into(), e.usable.into()]);
    }
    let mut derived = derived_constants(&set)?;
    derived["worst_ratio"] = json!(report.worst_ratio);
    Ok(Output {
        tables: vec![rows, points, exps],
        plots: vec![plot("two_scale_error", "two_scale", "t", "measured", Some("kappa"), (false, true))],
        derived,
        stages: clock.stages,
        ..Default::default()
    })
}

pub fn dispersion(cfg: &ExperimentConfig) -> Result<Output> {
    let mut clock = Clock::new();
    let spec = &cfg.dispersion;
    let grid = build_grid(cfg.cell.d, spec.extent, spec.points)?;
    let field = cfg.medium.sample(&grid, cfg.seed)?;
    let op = Operator::new(&field);
    let c = 0.5 * spec.extent;
    let w = spec.pulse_width;
    let u0 = grid.sample(|x| {
        let r2 = (x[0] - c).powi(2) + if grid.d == 2 { (x[1] - c).powi(2) } else { 0.0 };
        (-r2 / (w * w)).exp()
    });
    clock.lap("setup");
    let rows = dispersion_table(&op, &u0, &cfg.kappas, &spec.radii, &spec.times, spec.constant)?;
    clock.lap("evolve");
    let mut table =
        Table::new("dispersion", &["kappa", "r", "t", "lhs", "dispersive", "homogenization", "rhs", "ratio"]);
    let mut lhs = Table::new("dispersion_lhs", &["r", "t", "lhs"]);
    for r in &rows {
        table.push(vec![
            r.kappa.into(),
            r.r.into(),
            r.t.into(),
            r.lhs.into(),
            r.dispersive.into(),
            r.homogenization.into(),
            r.rhs.into(),
            r.ratio.into(),
        ]);
        if r.kappa == rows[0].kappa {
            lhs.push(vec![r.r.into(), r.t.into(), r.lhs.into()]);
        }
    }
    let worst = rows.iter().map(|r| r.ratio).fold(0.0f64, f64::max);
    Ok(Output {
        tables: vec![table, lhs],
        plots: vec![plot("dispersion_lhs", "dispersion_lhs", "t", "lhs", Some("r"), (false, true))],
        derived: json!({ "floor": field.floor, "ceiling": field.ceiling, "worst_ratio": worst, "constant": spec.constant }),
        stages: clock.stages,
        ..Default::default()
    })
}

pub fn spreading(cfg: &ExperimentConfig, dir: &Path) -> Result<Output> {
    let mut clock = Clock::new();
    let spec = &cfg.spreading;
    let grid = build_grid(cfg.cell.d, spec.extent, spec.points)?;
    let field = cfg.medium.sample(&grid, cfg.seed)?;
    let op = Operator::new(&field);
    let pairs = discrete_eigenpairs(&op, spec.count, spec.target, Boundary::Periodic)?;
    clock.lap("eigenpairs");
    let mut eig = Table::new("eigenpairs", &["index", "lambda", "residual", "participation"]);
    for (k, p) in pairs.iter().enumerate() {
        eig.push(vec![k.into(), p.lambda.into(), p.residual.into(), p.participation.into()]);
    }
    let extra = export_eigenpairs(dir, "eigen", grid, &pairs)?;
    let setting = cfg.medium.setting(cfg.cell.d, spec.sigma, spec.epsilon);
    let setting_label = |s: Setting| match s {
        Setting::Periodic => "periodic",
        Setting::Quasiperiodic { .. } => "quasiperiodic",
        Setting::Random { .. } => "random",
        Setting::Hyperuniform { .. } => "hyperuniform",
    };
    let jobs: Vec<(usize, f64)> = (0..pairs.len()).flat_map(|k| cfg.thetas.iter().map(move |&t| (k, t))).collect();
    let results: Vec<Result<Vec<Cell>>> = jobs
        .par_iter()
        .map(|&(k, theta)| {
            let pair = &pairs[k];
            let center = peak_center(&pair.psi, &grid);
            let cmp = width_comparison(&op, pair, center, theta, spec.alpha)?;
            let predicted = match predict_lower_bound(setting, pair.lambda)? {
                LowerBound::NoLowEigenvalue => None,
                LowerBound::Length(l) => Some(l),
            };
            let r = cmp.mass_width.radius.max(2.0 * grid.h());
            let params = ProbeParams {
                kappa: pair.lambda.powf(0.25),
                r,
                l: (spec.cutoff_ratio * r).max(spec.min_cutoff),
                periods: spec.periods,
                eta: spec.eta,
                center,
                constant: PROBE_CONSTANT,
            };
            let (slack, status) = match standing_wave_probe(&op, &pair.psi, pair.lambda, params) {
                Ok(p) => (p.rows.iter().map(|r| r.slack).reduce(f64::min), "ok".to_string()),
                Err(e) => (None, e.to_string()),
            };
            Ok(vec![
                setting_label(setting).into(),
                k.into(),
                pair.lambda.into(),
                theta.into(),
                cmp.mass_width.radius.into(),
                cmp.energy_width.map(|e| e.width.radius).into(),
                predicted.into(),
                slack.into(),
                cmp.theta_hat.into(),
                cmp.weighted_slack.into(),
                cmp.comparison_holds.into(),
                status.into(),
            ])
        })
        .collect();
    clock.lap("widths");
    let mut widths = Table::new(
        "spreading",
        &[
            "setting",
            "index",
            "lambda",
            "theta",
            "ell",
            "ell_prime",
            "predicted",
            "slack_min",
            "theta_hat",
            "weighted_slack",
            "comparison_holds",
            "probe_status",
        ],
    );
    let mut failures = Vec::new();
    for (job, r) in jobs.iter().zip(results) {
        match r {
            Ok(row) => widths.push(row),
            Err(e) => failures.push(format!("eigenpair {} theta {}: {e:#}", job.0, job.1)),
        }
    }
    Ok(Output {
        tables: vec![eig, widths],
        plots: vec![plot("widths", "spreading", "lambda", "ell", Some("theta"), (true, true))],
        derived: json!({ "floor": field.floor, "ceiling": field.ceiling, "probe_constant": PROBE_CONSTANT }),
        stages: clock.stages,
        extra,
        failures,
    })
}

/// Dispatch by subcommand name.
pub fn run_named(name: &str, cfg: &ExperimentConfig, dir: &Path) -> Result<Output> {
    std::fs::create_dir_all(dir)?;
    match name {
        "correctors" => correctors(cfg, dir),
        "tensors" => tensors(cfg),
        "green-decay" => green_decay(cfg),
        "two-scale" => two_scale(cfg),
        "dispersion" => dispersion(cfg),
        "spreading" => spreading(cfg, dir),
        other => bail!("unknown subcommand {other}"),
    }
}

/// Subcommands run by `all`, in order.
pub const ALL: [&str; 6] = ["correctors", "tensors", "green-decay", "two-scale", "dispersion", "spreading"];

/// Whether `all` should skip a stage for this medium.
pub fn applicable(name: &str, cfg: &ExperimentConfig) -> bool {
    name != "two-scale" || (cfg.cell.d == 1 && cfg.medium.is_periodic())
}
