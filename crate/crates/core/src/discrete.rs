//! Greedy allocation of swings on a grid `{0, beta, 2 beta, ...}`.
//!
//! Swings are tracked as integer step counts so outputs sit exactly on the
//! grid. `beta` and the brute-force cap are given relative to `sigma`; the
//! returned swings are in the same units as the noise model.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::metrics::{weight, FidelitySpec, SwingVector, WordFormat};
use crate::noise::NoiseModel;
use crate::solvers::{ground_level, Criterion};

/// Greedy loops give up after this many steps.
pub const ITERATION_CAP: u64 = 10_000_000;

/// Largest grid the brute-force oracle will enumerate.
pub const BRUTE_FORCE_BUDGET: f64 = 1e8;

/// Swing quantum `beta`, relative to `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Granularity(f64);

impl Granularity {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(domain(format!("granularity must be positive, got {beta}")));
        }
        Ok(Self(beta))
    }

    pub fn step(&self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Granularity {
    type Error = Error;

    fn try_from(beta: f64) -> Result<Self> {
        Self::new(beta)
    }
}

impl From<Granularity> for f64 {
    fn from(g: Granularity) -> f64 {
        g.0
    }
}

/// Per-bit MSE terms `4^b tail(k beta)` on the unit-scale grid.
struct Grid {
    noise: NoiseModel,
    beta: f64,
    ground: Vec<f64>,
    counts: Vec<u64>,
    terms: Vec<f64>,
    steps: u64,
}

impl Grid {
    fn new(format: WordFormat, noise: &NoiseModel, beta: Granularity) -> Self {
        let unit = noise.unit();
        let n = format.len();
        let mut grid = Self {
            noise: unit,
            beta: beta.step(),
            ground: (0..n).map(|b| ground_level(&unit, b)).collect(),
            counts: vec![0; n],
            terms: vec![0.0; n],
            steps: 0,
        };
        for b in 0..n {
            grid.terms[b] = grid.term(b, 0);
        }
        grid
    }

    fn swing(&self, k: u64) -> f64 {
        k as f64 * self.beta
    }

    fn term(&self, b: usize, k: u64) -> f64 {
        weight(b) * self.noise.tail(self.swing(k))
    }

    fn mse(&self) -> f64 {
        self.terms.iter().sum()
    }

    fn height(&self, b: usize) -> f64 {
        self.noise.height(self.swing(self.counts[b]))
    }

    fn add(&mut self, b: usize) -> Result<()> {
        self.steps += 1;
        if self.steps > ITERATION_CAP {
            return Err(Error::IterationCap(ITERATION_CAP));
        }
        self.counts[b] += 1;
        self.terms[b] = self.term(b, self.counts[b]);
        Ok(())
    }

    fn swings(&self, sigma: f64) -> SwingVector {
        SwingVector::from_vec_unchecked(self.counts.iter().map(|&k| self.swing(k) * sigma).collect())
    }
}

/// Index of the smallest key, lowest index on ties.
fn argmin_by(n: usize, key: impl Fn(usize) -> f64) -> usize {
    let mut best = 0;
    let mut best_key = key(0);
    for b in 1..n {
        let k = key(b);
        if k < best_key {
            best = b;
            best_key = k;
        }
    }
    best
}

fn budget(fidelity: &FidelitySpec) -> Result<f64> {
    let v = fidelity.mse_budget();
    if v <= 0.0 {
        return Err(Error::Infeasible(format!(
            "MSE budget {v} cannot be met with finite swings"
        )));
    }
    Ok(v)
}

/// Discrete water-filling: repeatedly add `beta` to the bit with the lowest
/// `g_b + height(delta_b)` until `MSE <= V`.
///
/// For `MinEnergy` the grounds are `g_b = -ln(4^b f(0))`; for `MaxSpeed` the
/// ground is flat (`g = 0`), which cycles through the bits. A speed run that
/// meets the budget part-way through a cycle is completed to the uniform
/// level it reached, which keeps the maximum swing and lowers the MSE.
pub fn discrete_water_fill(
    criterion: Criterion,
    format: WordFormat,
    noise: &NoiseModel,
    fidelity: &FidelitySpec,
    beta: Granularity,
) -> Result<SwingVector> {
    discrete_water_fill_traced(criterion, format, noise, fidelity, beta, None)
}

fn discrete_water_fill_traced(
    criterion: Criterion,
    format: WordFormat,
    noise: &NoiseModel,
    fidelity: &FidelitySpec,
    beta: Granularity,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<SwingVector> {
    let flat = match criterion {
        Criterion::MinEnergy => false,
        Criterion::MaxSpeed => true,
        Criterion::MinEdp => return Err(domain("discrete water-filling covers min-energy and max-speed only")),
    };
    let v = budget(fidelity)?;
    let mut grid = Grid::new(format, noise, beta);
    let n = format.len();
    while grid.mse() > v {
        let b = argmin_by(n, |b| {
            let g = if flat { 0.0 } else { grid.ground[b] };
            g + grid.height(b)
        });
        grid.add(b)?;
        if let Some(t) = trace.as_deref_mut() {
            t.push(grid.mse());
        }
    }
    if flat {
        let top = grid.counts.iter().copied().max().unwrap_or(0);
        for b in 0..n {
            while grid.counts[b] < top {
                grid.add(b)?;
            }
        }
    }
    Ok(grid.swings(noise.sigma()))
}

/// Levin-Campello: add `beta` where it buys the largest MSE reduction. Exact
/// on the grid because the MSE is a sum of convex per-bit terms.
pub fn levin_campello(
    format: WordFormat,
    noise: &NoiseModel,
    fidelity: &FidelitySpec,
    beta: Granularity,
) -> Result<SwingVector> {
    levin_campello_traced(format, noise, fidelity, beta, None)
}

fn levin_campello_traced(
    format: WordFormat,
    noise: &NoiseModel,
    fidelity: &FidelitySpec,
    beta: Granularity,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<SwingVector> {
    let v = budget(fidelity)?;
    let mut grid = Grid::new(format, noise, beta);
    let n = format.len();
    while grid.mse() > v {
        let b = argmin_by(n, |b| grid.term(b, grid.counts[b] + 1) - grid.terms[b]);
        grid.add(b)?;
        if let Some(t) = trace.as_deref_mut() {
            t.push(grid.mse());
        }
    }
    Ok(grid.swings(noise.sigma()))
}

/// Output of the sand-pouring greedy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandPourResult {
    pub swings: SwingVector,
    /// Poured sand `eta_b`, in the same units as the swings.
    pub sand: Vec<f64>,
    pub iterations: u64,
}

/// Sand-pouring with discrete water-filling, for the EDP criterion.
///
/// Each iteration takes `rho = max delta`, pours `beta` of sand on the bit
/// with the lowest `g_b + s_b`, recomputes every `s_b = ln(1 + eta_b / rho)`
/// (zero while `rho = 0`), then adds `beta` of water to the bit with the
/// lowest `g_b + s_b + height(delta_b)`.
pub fn sand_pour_water_fill(
    format: WordFormat,
    noise: &NoiseModel,
    fidelity: &FidelitySpec,
    beta: Granularity,
) -> Result<SandPourResult> {
    sand_pour_traced(format, noise, fidelity, beta, None)
}

fn sand_pour_traced(
    format: WordFormat,
    noise: &NoiseModel,
    fidelity: &FidelitySpec,
    beta: Granularity,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<SandPourResult> {
    let v = budget(fidelity)?;
    let mut grid = Grid::new(format, noise, beta);
    let n = format.len();
    let mut sand = vec![0u64; n];
    let mut depth = vec![0.0; n];
    let mut iterations = 0;
    while grid.mse() > v {
        let rho = grid.swing(grid.counts.iter().copied().max().unwrap_or(0));
        let b = argmin_by(n, |b| grid.ground[b] + depth[b]);
        sand[b] += 1;
        for (s, &eta) in depth.iter_mut().zip(&sand) {
            *s = if rho > 0.0 {
                (grid.swing(eta) / rho).ln_1p()
            } else {
                0.0
            };
        }
        let b = argmin_by(n, |b| grid.ground[b] + depth[b] + grid.height(b));
        grid.add(b)?;
        iterations += 1;
        if let Some(t) = trace.as_deref_mut() {
            t.push(grid.mse());
        }
    }
    let sigma = noise.sigma();
    Ok(SandPourResult {
        swings: grid.swings(sigma),
        sand: sand.iter().map(|&k| grid.swing(k) * sigma).collect(),
        iterations,
    })
}

/// One objective's minimizer from the exhaustive search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    pub swings: SwingVector,
    pub objective: f64,
    pub mse: f64,
}

/// Feasible minimizers of energy, maximum swing and EDP over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub min_energy: GridOptimum,
    pub max_speed: GridOptimum,
    pub min_edp: GridOptimum,
    /// Number of grid points visited.
    pub points: u64,
    pub feasible: u64,
}

impl BruteForceResult {
    pub fn get(&self, criterion: Criterion) -> &GridOptimum {
        match criterion {
            Criterion::MinEnergy => &self.min_energy,
            Criterion::MaxSpeed => &self.max_speed,
            Criterion::MinEdp => &self.min_edp,
        }
    }
}

/// Enumerates `{0, beta, ..., cap}^B` and returns the feasible minimizer of
/// each objective. Objectives are compared as integer step counts; ties on
/// speed and EDP go to the lower energy, remaining ties to the first point
/// in enumeration order (bit 0 varies fastest).
pub fn brute_force_discrete(
    format: WordFormat,
    noise: &NoiseModel,
    fidelity: &FidelitySpec,
    beta: Granularity,
    swing_cap: f64,
) -> Result<BruteForceResult> {
    if !(swing_cap.is_finite() && swing_cap > 0.0) {
        return Err(domain(format!("swing cap must be positive, got {swing_cap}")));
    }
    let v = fidelity.mse_budget();
    let per_bit = (swing_cap / beta.step() * (1.0 + 1e-12)).floor() as u64 + 1;
    let required = (per_bit as f64).powi(format.bits() as i32);
    if required > BRUTE_FORCE_BUDGET {
        return Err(Error::BudgetExceeded {
            required,
            budget: BRUTE_FORCE_BUDGET,
        });
    }
    let n = format.len();
    let grid = Grid::new(format, noise, beta);
    let table: Vec<Vec<f64>> = (0..n)
        .map(|b| (0..per_bit).map(|k| grid.term(b, k)).collect())
        .collect();

    // Per objective: the key (objective, energy) and the point (mse, counts).
    // Only a strictly smaller key replaces the incumbent.
    type Best = Option<((u64, u64), (f64, Vec<u64>))>;
    let mut best: [Best; 3] = [None, None, None];
    let mut counts = vec![0u64; n];
    let mut points = 0u64;
    let mut feasible = 0u64;
    loop {
        points += 1;
        let mse: f64 = (0..n).map(|b| table[b][counts[b] as usize]).sum();
        if mse <= v {
            feasible += 1;
            let e: u64 = counts.iter().sum();
            let m = counts.iter().copied().max().unwrap_or(0);
            let keys = [(e, 0), (m, e), (e * m, e)];
            for (slot, key) in best.iter_mut().zip(keys) {
                if slot.as_ref().is_none_or(|(k, _)| key < *k) {
                    *slot = Some((key, (mse, counts.clone())));
                }
            }
        }
        // Odometer increment, bit 0 fastest.
        let mut b = 0;
        loop {
            if b == n {
                break;
            }
            counts[b] += 1;
            if counts[b] < per_bit {
                break;
            }
            counts[b] = 0;
            b += 1;
        }
        if b == n {
            break;
        }
    }

    let step = beta.step() * noise.sigma();
    let [energy, speed, edp] = best;
    // The key's first entry is the objective in step counts.
    let finish = |best: Best, scale: f64| -> Result<GridOptimum> {
        let ((objective, _), (mse, counts)) =
            best.ok_or_else(|| Error::Infeasible(format!("no grid point up to swing {swing_cap} meets MSE {v}")))?;
        Ok(GridOptimum {
            swings: SwingVector::from_vec_unchecked(counts.iter().map(|&k| k as f64 * step).collect()),
            objective: objective as f64 * scale,
            mse,
        })
    };
    Ok(BruteForceResult {
        min_energy: finish(energy, step)?,
        max_speed: finish(speed, step)?,
        min_edp: finish(edp, step * step)?,
        points,
        feasible,
    })
}
