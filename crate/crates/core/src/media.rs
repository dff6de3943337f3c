//! Coefficient fields: periodic profiles, quasiperiodic lifts and random realizations.

use crate::error::{Error, Result};
use crate::grid::Grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// A one-periodic profile on the unit cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PeriodicProfile {
    /// Constant symmetric matrix `[[a11, a12], [a12, a22]]` (only `a11` is used in 1D).
    Constant { a11: f64, a12: f64, a22: f64 },
    /// Two-phase laminate along the first axis: `low` on `[0, 1/2)`, `high` on `[1/2, 1)`.
    Laminate { low: f64, high: f64 },
    /// `mean + amplitude * cos(2πx₁)` in 1D, and the average of the two axis cosines in 2D.
    Cosine { mean: f64, amplitude: f64 },
    /// Scalar trigonometric series `mean + Σ amp·cos(2π k·x)` with integer wavevectors.
    CosineSeries { mean: f64, terms: Vec<(f64, [i64; 2])> },
}

impl PeriodicProfile {
    pub fn identity() -> Self {
        PeriodicProfile::Constant { a11: 1.0, a12: 0.0, a22: 1.0 }
    }
}

/// A lifted profile on the M-torus, evaluated at `y = F x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedProfile {
    pub mean: f64,
    /// One amplitude per lifted coordinate: `A0(y) = mean + Σ_k amp_k cos(2π y_k)`.
    pub amplitudes: Vec<f64>,
}

/// Provenance of a coefficient field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MediumKind {
    Periodic { cell: f64, profile: PeriodicProfile },
    Quasiperiodic { frequencies: Vec<Vec<f64>>, profile: LiftedProfile },
    Random { seed: u64, range: f64, contrast: f64 },
}

/// Symmetric coefficient field sampled on a grid.
///
/// Components are stored per node in packed order: `[a]` in 1D and
/// `[a11, a12, a22]` in 2D.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientField {
    pub grid: Grid,
    pub values: Vec<Vec<f64>>,
    pub kind: MediumKind,
    pub floor: f64,
    pub ceiling: f64,
}

impl CoefficientField {
    /// Build a field from packed components, validating symmetry-positivity.
    pub fn from_components(grid: Grid, values: Vec<Vec<f64>>, kind: MediumKind) -> Result<Self> {
        let comps = if grid.d == 1 { 1 } else { 3 };
        if values.len() != comps || values.iter().any(|v| v.len() != grid.len()) {
            return Err(Error::InvalidParameter("component layout does not match grid".into()));
        }
        let mut f = CoefficientField { grid, values, kind, floor: 0.0, ceiling: 0.0 };
        let (lo, hi) = f.scan()?;
        f.floor = lo;
        f.ceiling = hi;
        Ok(f)
    }

    fn scan(&self) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut at = 0;
        for node in 0..self.grid.len() {
            let (a, b) = self.eigenvalues(node);
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::Ellipticity { node, value: a });
            }
            if a < lo {
                lo = a;
                at = node;
            }
            hi = hi.max(b);
        }
        // Report the node with the most negative eigenvalue.
        if lo <= 0.0 {
            return Err(Error::Ellipticity { node: at, value: lo });
        }
        Ok((lo, hi))
    }

    /// Entry `A_ij` at a node.
    #[inline]
    pub fn a(&self, node: usize, i: usize, j: usize) -> f64 {
        if self.grid.d == 1 {
            self.values[0][node]
        } else {
            match (i, j) {
                (0, 0) => self.values[0][node],
                (1, 1) => self.values[2][node],
                _ => self.values[1][node],
            }
        }
    }

    /// Eigenvalues `(min, max)` of `A` at a node.
    pub fn eigenvalues(&self, node: usize) -> (f64, f64) {
        if self.grid.d == 1 {
            let a = self.values[0][node];
            (a, a)
        } else {
            let a = self.values[0][node];
            let b = self.values[1][node];
            let c = self.values[2][node];
            let m = 0.5 * (a + c);
            let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            (m - r, m + r)
        }
    }

    /// Contrast `C0 = ceiling / floor`.
    pub fn contrast(&self) -> f64 {
        self.ceiling / self.floor
    }

    /// Maximal wave speed `√ceiling`.
    pub fn wave_speed(&self) -> f64 {
        self.ceiling.sqrt()
    }

    /// Whether the field is a multiple of the identity at every node.
    pub fn is_scalar(&self) -> bool {
        self.grid.d == 1
            || self.values[1].iter().all(|&v| v == 0.0)
                && self.values[0].iter().zip(&self.values[2]).all(|(a, c)| a == c)
    }

    /// Apply `A` to a vector at a node.
    #[inline]
    pub fn apply(&self, node: usize, e: [f64; 2]) -> [f64; 2] {
        if self.grid.d == 1 {
            [self.values[0][node] * e[0], 0.0]
        } else {
            let a = self.values[0][node];
            let b = self.values[1][node];
            let c = self.values[2][node];
            [a * e[0] + b * e[1], b * e[0] + c * e[1]]
        }
    }

    /// Tile a cell field periodically onto a larger commensurate grid.
    pub fn tile(&self, big: Grid) -> Result<CoefficientField> {
        let values = tile_components(&self.values, self.grid, big)?;
        let mut f = self.clone();
        f.grid = big;
        f.values = values;
        Ok(f)
    }
}

/// Tile periodic node data from a cell grid onto a grid whose spacing matches.
pub fn tile_components(values: &[Vec<f64>], cell: Grid, big: Grid) -> Result<Vec<Vec<f64>>> {
    if cell.d != big.d || (cell.h() - big.h()).abs() > 1e-12 * cell.h() || big.points % cell.points != 0 {
        return Err(Error::InvalidParameter("grids are not commensurate".into()));
    }
    Ok(values.iter().map(|v| tile_field(v, cell, big)).collect())
}

/// Tile one periodic field from a cell grid onto a commensurate grid.
pub fn tile_field(v: &[f64], cell: Grid, big: Grid) -> Vec<f64> {
    let n = cell.points;
    (0..big.len())
        .map(|idx| {
            let m = big.multi(idx);
            if big.d == 1 {
                v[m[0] % n]
            } else {
                v[(m[0] % n) * n + m[1] % n]
            }
        })
        .collect()
}

fn cell_points(grid: &Grid, cell: f64) -> Result<usize> {
    let ratio = grid.extent / cell;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "extent {} is not an integer multiple of the cell {}",
            grid.extent, cell
        )));
    }
    let per = grid.points as f64 / ratio.round();
    if (per - per.round()).abs() > 1e-9 {
        return Err(Error::InvalidParameter("cell is not resolved by an integer number of nodes".into()));
    }
    Ok(per.round() as usize)
}

fn scalar_components(grid: &Grid, a: Vec<f64>) -> Vec<Vec<f64>> {
    if grid.d == 1 {
        vec![a]
    } else {
        vec![a.clone(), vec![0.0; a.len()], a]
    }
}

/// Sample a one-periodic profile, scaled to a cell of the given size.
pub fn sample_periodic(profile: &PeriodicProfile, cell: f64, grid: &Grid) -> Result<CoefficientField> {
    let kind = MediumKind::Periodic { cell, profile: profile.clone() };
    let per = cell_points(grid, cell)?;
    let values = match profile {
        PeriodicProfile::Constant { a11, a12, a22 } => {
            let n = grid.len();
            if grid.d == 1 {
                vec![vec![*a11; n]]
            } else {
                vec![vec![*a11; n], vec![*a12; n], vec![*a22; n]]
            }
        }
        PeriodicProfile::Laminate { low, high } => {
            if per % 2 != 0 {
                return Err(Error::InvalidParameter("laminate needs an even number of nodes per cell".into()));
            }
            // Smooth the compliance 1/a with the [1/4, 1/2, 1/4] kernel over two spacings:
            // this keeps the discrete harmonic mean and removes the Nyquist mode of 1/a.
            let inv_at = |m: usize| {
                let r = m % per;
                if r < per / 2 {
                    1.0 / low
                } else {
                    1.0 / high
                }
            };
            let line: Vec<f64> = (0..grid.points)
                .map(|m| {
                    let l = inv_at(m + grid.points - 1);
                    let c = inv_at(m);
                    let r = inv_at(m + 1);
                    1.0 / (0.25 * l + 0.5 * c + 0.25 * r)
                })
                .collect();
            let a: Vec<f64> = (0..grid.len()).map(|i| line[grid.multi(i)[0]]).collect();
            scalar_components(grid, a)
        }
        PeriodicProfile::Cosine { mean, amplitude } => {
            let a = grid.sample(|x| {
                if grid.d == 1 {
                    mean + amplitude * (2.0 * PI * x[0] / cell).cos()
                } else {
                    mean + 0.5 * amplitude * ((2.0 * PI * x[0] / cell).cos() + (2.0 * PI * x[1] / cell).cos())
                }
            });
            scalar_components(grid, a)
        }
        PeriodicProfile::CosineSeries { mean, terms } => {
            let a = grid.sample(|x| {
                let mut v = *mean;
                for (amp, k) in terms {
                    let phase = if grid.d == 1 {
                        k[0] as f64 * x[0]
                    } else {
                        k[0] as f64 * x[0] + k[1] as f64 * x[1]
                    };
                    v += amp * (2.0 * PI * phase / cell).cos();
                }
                v
            });
            scalar_components(grid, a)
        }
    };
    CoefficientField::from_components(*grid, values, kind)
}

/// Sample `A(x) = A0(F x)` for a lifted profile on the M-torus.
///
/// `frequencies` holds the M rows of F, each a vector in ℝ^d.
pub fn sample_quasiperiodic(profile: &LiftedProfile, frequencies: &[Vec<f64>], grid: &Grid) -> Result<CoefficientField> {
    let m = frequencies.len();
    if m <= grid.d || frequencies.iter().any(|r| r.len() != grid.d) || profile.amplitudes.len() != m {
        return Err(Error::InvalidParameter("frequency matrix must be M x d with M > d, one amplitude per row".into()));
    }
    let a = grid.sample(|x| {
        let mut v = profile.mean;
        for (row, amp) in frequencies.iter().zip(&profile.amplitudes) {
            let y: f64 = row.iter().zip(x.iter()).map(|(f, xi)| f * xi).sum();
            v += amp * (2.0 * PI * y).cos();
        }
        v
    });
    let kind = MediumKind::Quasiperiodic { frequencies: frequencies.to_vec(), profile: profile.clone() };
    CoefficientField::from_components(*grid, scalar_components(grid, a), kind)
}

/// Diophantine scan result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiophantineCertificate {
    pub frequencies: Vec<Vec<f64>>,
    pub zmax: i64,
    pub gamma: f64,
    pub margin: f64,
    pub worst: Vec<i64>,
}

/// Minimum of `|Fᵀz|·|z|^γ` over nonzero integer vectors with `|z|_∞ ≤ zmax`.
pub fn diophantine_margin(frequencies: &[Vec<f64>], gamma: f64, zmax: i64) -> DiophantineCertificate {
    let m = frequencies.len();
    let d = frequencies.first().map_or(0, |r| r.len());
    let mut z = vec![-zmax; m];
    let mut best = f64::INFINITY;
    let mut worst = vec![0; m];
    loop {
        if z.iter().any(|&v| v != 0) {
            let mut norm2 = 0.0;
            for a in 0..d {
                let s: f64 = (0..m).map(|k| z[k] as f64 * frequencies[k][a]).sum();
                norm2 += s * s;
            }
            let zn = (z.iter().map(|&v| (v * v) as f64).sum::<f64>()).sqrt();
            let val = norm2.sqrt() * zn.powf(gamma);
            // Ties go to the shortest lattice vector.
            let shorter = worst.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt() > zn;
            if val < best || (val == best && shorter) {
                best = val;
                worst = z.clone();
            }
        }
        let mut k = 0;
        loop {
            if k == m {
                return DiophantineCertificate {
                    frequencies: frequencies.to_vec(),
                    zmax,
                    gamma,
                    margin: best,
                    worst,
                };
            }
            z[k] += 1;
            if z[k] > zmax {
                z[k] = -zmax;
                k += 1;
            } else {
                break;
            }
        }
    }
}

/// Seeded random field with finite range of dependence.
///
/// Lattice white noise (uniform, unit variance) is convolved with the bump
/// `(1 - |x|²/r²)²` of radius `r = range / 2`, normalized to unit variance, and
/// mapped pointwise into `[1/contrast, 1]` by a clamped geometric interpolation.
/// Values at nodes farther apart than `range` depend on disjoint noise.
pub fn sample_random(seed: u64, range: f64, grid: &Grid, contrast: f64) -> Result<CoefficientField> {
    let h = grid.h();
    if range < 2.0 * h - 1e-12 {
        return Err(Error::InvalidParameter(format!("correlation range {range} below 2h = {}", 2.0 * h)));
    }
    if contrast < 1.0 {
        return Err(Error::InvalidParameter("contrast must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s3 = 3f64.sqrt();
    let noise: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-s3..s3)).collect();
    let r = 0.5 * range;
    let reach = (r / h).floor() as isize;
    let mut stencil = Vec::new();
    let jr = if grid.d == 1 { 0 } else { reach };
    for di in -reach..=reach {
        for dj in -jr..=jr {
            let dist2 = ((di * di + dj * dj) as f64) * h * h;
            // Strict inequality keeps the dependence range exactly below `range`.
            if dist2 < r * r {
                let w = 1.0 - dist2 / (r * r);
                stencil.push((di, dj, w * w));
            }
        }
    }
    let norm = stencil.iter().map(|s| s.2 * s.2).sum::<f64>().sqrt();
    let lo = (1.0 / contrast).ln();
    let a: Vec<f64> = (0..grid.len())
        .map(|idx| {
            let m = grid.multi(idx);
            let mut z = 0.0;
            for &(di, dj, w) in &stencil {
                z += w * noise[grid.flat(m[0] as isize + di, m[1] as isize + dj)];
            }
            z /= norm;
            let t = ((z + 2.0) / 4.0).clamp(0.0, 1.0);
            (lo * (1.0 - t)).exp()
        })
        .collect();
    let kind = MediumKind::Random { seed, range, contrast };
    CoefficientField::from_components(*grid, scalar_components(grid, a), kind)
}

/// Minimum and maximum eigenvalue over all nodes.
pub fn ellipticity_constants(field: &CoefficientField) -> (f64, f64) {
    (field.floor, field.ceiling)
}
