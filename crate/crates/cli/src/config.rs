//! Experiment configuration: TOML file, validated, with command-line overrides.

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use wavehom::grid::{build_grid, Grid};
use wavehom::media::{sample_periodic, sample_quasiperiodic, sample_random, CoefficientField, LiftedProfile, PeriodicProfile};
use wavehom::spreading::{Setting, PROBE_CONSTANT};

/// Medium kind and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MediumSpec {
    Identity,
    Constant { a11: f64, a12: f64, a22: f64 },
    Laminate { low: f64, high: f64 },
    Cosine { mean: f64, amplitude: f64 },
    CosineSeries { mean: f64, terms: Vec<(f64, [i64; 2])> },
    /// Finite-range random field; `range` is the correlation range.
    Random { range: f64, contrast: f64 },
    /// `mean + Σ amp_k cos(2π F_k·x)` with one frequency row per amplitude.
    Quasiperiodic { mean: f64, amplitudes: Vec<f64>, frequencies: Vec<Vec<f64>> },
}

impl Default for MediumSpec {
    fn default() -> Self {
        MediumSpec::Laminate { low: 1.0, high: 4.0 }
    }
}

impl MediumSpec {
    fn profile(&self) -> Option<PeriodicProfile> {
        Some(match self.clone() {
            MediumSpec::Identity => PeriodicProfile::identity(),
            MediumSpec::Constant { a11, a12, a22 } => PeriodicProfile::Constant { a11, a12, a22 },
            MediumSpec::Laminate { low, high } => PeriodicProfile::Laminate { low, high },
            MediumSpec::Cosine { mean, amplitude } => PeriodicProfile::Cosine { mean, amplitude },
            MediumSpec::CosineSeries { mean, terms } => PeriodicProfile::CosineSeries { mean, terms },
            _ => return None,
        })
    }

    pub fn is_periodic(&self) -> bool {
        self.profile().is_some()
    }

    /// Sample on an arbitrary grid; periodic profiles use a unit cell.
    pub fn sample(&self, grid: &Grid, seed: u64) -> Result<CoefficientField> {
        if let Some(p) = self.profile() {
            return Ok(sample_periodic(&p, 1.0, grid)?);
        }
        Ok(match self {
            MediumSpec::Random { range, contrast } => sample_random(seed, *range, grid, *contrast)?,
            MediumSpec::Quasiperiodic { mean, amplitudes, frequencies } => {
                let lifted = LiftedProfile { mean: *mean, amplitudes: amplitudes.clone() };
                sample_quasiperiodic(&lifted, frequencies, grid)?
            }
            _ => unreachable!(),
        })
    }

    /// Setting used by the eigenstate lower-bound predictors.
    pub fn setting(&self, d: usize, sigma: f64, epsilon: f64) -> Setting {
        match self {
            MediumSpec::Random { .. } => Setting::Random { d, epsilon },
            MediumSpec::Quasiperiodic { .. } => Setting::Quasiperiodic { sigma },
            _ => Setting::Periodic,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            MediumSpec::Identity => "identity",
            MediumSpec::Constant { .. } => "constant",
            MediumSpec::Laminate { .. } => "laminate",
            MediumSpec::Cosine { .. } => "cosine",
            MediumSpec::CosineSeries { .. } => "cosine_series",
            MediumSpec::Random { .. } => "random",
            MediumSpec::Quasiperiodic { .. } => "quasiperiodic",
        }
    }
}

/// Grid of the corrector cell problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellSpec {
    pub d: usize,
    pub points: usize,
    /// Cell length; periodic profiles require 1.
    pub extent: f64,
}

impl Default for CellSpec {
    fn default() -> Self {
        CellSpec { d: 1, points: 16, extent: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonSpec {
    /// `t_max = constant · κ^{-(N+1)}`.
    pub constant: f64,
    pub cap: Option<f64>,
    pub samples: usize,
}

impl Default for HorizonSpec {
    fn default() -> Self {
        HorizonSpec { constant: 10.0, cap: None, samples: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenDecaySpec {
    pub extent: f64,
    pub points: usize,
    pub tau_min: f64,
    pub tau_max: f64,
    pub samples: usize,
    /// Interior region `|x| ≤ fraction · τ`.
    pub fraction: f64,
}

impl Default for GreenDecaySpec {
    fn default() -> Self {
        GreenDecaySpec { extent: 4096.0, points: 8192, tau_min: 10.0, tau_max: 1000.0, samples: 12, fraction: 0.25 }
    }
}

impl GreenDecaySpec {
    /// Defaults sized for two dimensions when the file leaves the grid unset.
    fn for_dimension(d: usize) -> Self {
        if d == 2 {
            GreenDecaySpec { extent: 3072.0, points: 2048, ..Default::default() }
        } else {
            Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoScaleSpec {
    /// Corrector orders swept; each must not exceed `order`.
    pub orders: Vec<usize>,
    /// Pulse footprint in units of `κ⁻¹`.
    pub width: f64,
    pub max_points: usize,
}

impl Default for TwoScaleSpec {
    fn default() -> Self {
        TwoScaleSpec { orders: vec![1], width: 8.0, max_points: 1 << 18 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DispersionSpec {
    pub extent: f64,
    pub points: usize,
    pub radii: Vec<f64>,
    pub times: Vec<f64>,
    /// Width of the Gaussian initial pulse.
    pub pulse_width: f64,
    pub constant: f64,
}

impl Default for DispersionSpec {
    fn default() -> Self {
        DispersionSpec {
            extent: 512.0,
            points: 4096,
            radii: vec![2.0, 8.0, 32.0],
            times: vec![0.0, 25.0, 50.0, 100.0],
            pulse_width: 4.0,
            constant: PROBE_CONSTANT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpreadingSpec {
    pub extent: f64,
    pub points: usize,
    pub count: usize,
    /// Eigenvalues nearest to this target are computed.
    pub target: f64,
    /// Decay parameter of the exponential weight.
    pub alpha: f64,
    pub periods: usize,
    pub eta: f64,
    /// Probe cutoff radius `L = max(cutoff_ratio · R, min_cutoff)` with `R = ℓ_θ`.
    pub cutoff_ratio: f64,
    pub min_cutoff: f64,
    /// Predictor exponents.
    pub sigma: f64,
    pub epsilon: f64,
}

impl Default for SpreadingSpec {
    fn default() -> Self {
        SpreadingSpec {
            extent: 256.0,
            points: 1024,
            count: 8,
            target: 2.0,
            alpha: 1.0,
            periods: 2,
            eta: 0.2,
            cutoff_ratio: 3.0,
            min_cutoff: 0.0,
            sigma: 0.5,
            epsilon: 0.05,
        }
    }
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub order: usize,
    pub kappas: Vec<f64>,
    pub thetas: Vec<f64>,
    pub medium: MediumSpec,
    pub cell: CellSpec,
    pub horizon: HorizonSpec,
    pub green_decay: Option<GreenDecaySpec>,
    pub two_scale: TwoScaleSpec,
    pub dispersion: DispersionSpec,
    pub spreading: SpreadingSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 7,
            workers: 1,
            out: PathBuf::from("out"),
            order: 3,
            kappas: vec![0.05, 0.1, 0.2],
            thetas: vec![0.2],
            medium: MediumSpec::default(),
            cell: CellSpec::default(),
            horizon: HorizonSpec::default(),
            green_decay: None,
            two_scale: TwoScaleSpec::default(),
            dispersion: DispersionSpec::default(),
            spreading: SpreadingSpec::default(),
        }
    }
}

/// Flag values that replace file values when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub d: Option<usize>,
    pub kappas: Option<Vec<f64>>,
    pub order: Option<usize>,
    pub thetas: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
        if let Some(v) = o.d {
            self.cell.d = v;
        }
        if let Some(v) = &o.kappas {
            self.kappas = v.clone();
        }
        if let Some(v) = o.order {
            self.order = v;
        }
        if let Some(v) = &o.thetas {
            self.thetas = v.clone();
        }
    }

    pub fn green_decay(&self) -> GreenDecaySpec {
        self.green_decay.clone().unwrap_or_else(|| GreenDecaySpec::for_dimension(self.cell.d))
    }

    /// Check every field before any computation starts.
    pub fn validate(&self) -> Result<()> {
        ensure!(self.workers >= 1, "workers must be at least 1");
        ensure!((1..=6).contains(&self.order), "order must lie in 1..=6, got {}", self.order);
        ensure!(!self.kappas.is_empty(), "kappas must be nonempty");
        ensure!(self.kappas.iter().all(|&k| k > 0.0 && k.is_finite()), "kappas must be positive");
        ensure!(!self.thetas.is_empty(), "thetas must be nonempty");
        ensure!(self.thetas.iter().all(|&t| t > 0.0 && t < 0.5), "thetas must lie in (0, 1/2)");
        ensure!(matches!(self.cell.d, 1 | 2), "d must be 1 or 2, got {}", self.cell.d);
        self.cell_grid()?;
        if self.medium.is_periodic() {
            ensure!(self.cell.extent == 1.0, "periodic profiles use a unit cell; set cell.extent = 1");
        }
        match &self.medium {
            MediumSpec::Random { range, contrast } => {
                ensure!(*range > 0.0 && *contrast >= 1.0, "random medium needs range > 0 and contrast >= 1")
            }
            MediumSpec::Quasiperiodic { amplitudes, frequencies, .. } => ensure!(
                amplitudes.len() == frequencies.len() && frequencies.iter().all(|r| r.len() == self.cell.d),
                "quasiperiodic medium needs one amplitude and one length-d frequency row per lifted coordinate"
            ),
            _ => {}
        }
        let h = &self.horizon;
        ensure!(h.constant > 0.0 && h.samples >= 2, "horizon needs constant > 0 and samples >= 2");
        if let Some(c) = h.cap {
            ensure!(c > 0.0, "horizon cap must be positive");
        }
        let g = self.green_decay();
        build_grid(self.cell.d, g.extent, g.points)?;
        ensure!(g.tau_min > 0.0 && g.tau_max >= 100.0 * g.tau_min, "green_decay times must span two decades");
        ensure!(g.samples >= 8, "green_decay needs at least 8 samples");
        ensure!(g.fraction > 0.0 && g.fraction < 1.0, "green_decay.fraction must lie in (0, 1)");
        let t = &self.two_scale;
        ensure!(t.width > 0.0, "two_scale.width must be positive");
        ensure!(
            !t.orders.is_empty() && t.orders.iter().all(|&n| n >= 1 && n <= self.order),
            "two_scale.orders must lie in 1..=order"
        );
        let p = &self.dispersion;
        build_grid(self.cell.d, p.extent, p.points)?;
        ensure!(!p.radii.is_empty() && p.radii.iter().all(|&r| r > 0.0), "dispersion.radii must be positive");
        ensure!(!p.times.is_empty() && p.times.iter().all(|&t| t >= 0.0), "dispersion.times must be nonnegative");
        ensure!(p.pulse_width > 0.0 && p.constant > 0.0, "dispersion pulse width and constant must be positive");
        let s = &self.spreading;
        build_grid(self.cell.d, s.extent, s.points)?;
        ensure!(s.count >= 1 && s.count <= s.points.pow(self.cell.d as u32), "spreading.count out of range");
        ensure!(s.alpha > 0.0 && s.eta > 0.0, "spreading alpha and eta must be positive");
        ensure!(s.cutoff_ratio >= 1.0 && s.min_cutoff >= 0.0, "spreading.cutoff_ratio must be >= 1 and min_cutoff >= 0");
        if s.target < 0.0 {
            bail!("spreading.target must be nonnegative");
        }
        Ok(())
    }

    pub fn cell_grid(&self) -> Result<Grid> {
        Ok(build_grid(self.cell.d, self.cell.extent, self.cell.points)?)
    }
}
