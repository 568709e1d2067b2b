//! Continuous swing allocation for the three criteria.
//!
//! Every solver works on a unit-scale copy of the noise model and rescales
//! its output, since all quantities depend on `delta / sigma` only.
//!
//! * min-energy: water-filling on grounds `g_b = -ln(4^b f(0))`.
//! * max-speed: uniform swings with flattened grounds.
//! * min-EDP: capped water-filling with sand poured on the capped bits. The
//!   cap `rho` is chosen by a coarse scan, golden-section search and a final
//!   bisection on `dEDP/drho = sum(delta) - sum(eta)`.

use std::f64::consts::LN_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::metrics::{weight, FidelitySpec, SwingVector, WordFormat};
use crate::noise::NoiseModel;
use crate::scalar;

const LN_4: f64 = 2.0 * LN_2;

pub const DEFAULT_TOL: f64 = 1e-9;

/// Number of points in the coarse scan over `rho` for min-EDP.
pub const EDP_SCAN_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    MinEnergy,
    MaxSpeed,
    MinEdp,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::MinEnergy, Criterion::MaxSpeed, Criterion::MinEdp];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::MinEnergy => "min-energy",
            Criterion::MaxSpeed => "max-speed",
            Criterion::MinEdp => "min-edp",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min-energy" | "energy" => Ok(Criterion::MinEnergy),
            "max-speed" | "speed" => Ok(Criterion::MaxSpeed),
            "min-edp" | "edp" => Ok(Criterion::MinEdp),
            other => Err(domain(format!("unknown criterion `{other}`"))),
        }
    }
}

/// Optimal swings together with the dual certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSolution {
    pub criterion: Criterion,
    pub swings: SwingVector,
    /// Dual of the MSE constraint (the water level is `ln nu`).
    pub nu: f64,
    /// Duals of `delta_b >= 0`.
    pub lambda: Vec<f64>,
    /// Duals of `delta_b <= rho`. Zero for min-energy.
    pub eta: Vec<f64>,
    /// `ln(1 + eta_b / rho)` for min-EDP, zero otherwise.
    pub sand_depths: Vec<f64>,
    pub achieved_mse: f64,
    pub rho: f64,
    pub kkt_residual: f64,
    /// The budget is at or above the zero-swing MSE and all swings are zero.
    pub saturated: bool,
}

impl SolverSolution {
    pub fn energy(&self) -> f64 {
        self.swings.energy()
    }

    pub fn edp(&self) -> f64 {
        self.swings.edp()
    }

    /// Bits whose swing sits exactly at the cap `rho`.
    pub fn capped_bits(&self) -> Vec<usize> {
        if self.rho <= 0.0 {
            return Vec::new();
        }
        (0..self.swings.len()).filter(|&b| self.swings[b] == self.rho).collect()
    }

    /// `ln nu`, the common water level of the active bits.
    pub fn water_level(&self) -> f64 {
        self.nu.ln()
    }
}

/// Ground level `-ln(4^b f(0))` of bit `b`. For Gaussian noise this is
/// `ln(sqrt(2 pi) sigma / 4^b)`.
pub fn ground_level(noise: &NoiseModel, b: usize) -> f64 {
    noise.log_inv_peak_density() - b as f64 * LN_4
}

/// Unit-scale ladder of grounds shared by the water-filling solvers.
struct Ladder {
    noise: NoiseModel,
    ground: Vec<f64>,
    weights: Vec<f64>,
}

struct Fill {
    level: f64,
    swings: Vec<f64>,
}

struct CappedFill {
    rho: f64,
    level: f64,
    swings: Vec<f64>,
    eta: Vec<f64>,
    energy: f64,
}

impl CappedFill {
    fn edp(&self) -> f64 {
        self.rho * self.energy
    }

    /// `dEDP/drho` by the envelope theorem.
    fn slope(&self) -> f64 {
        self.energy - self.eta.iter().sum::<f64>()
    }
}

impl Ladder {
    fn new(format: WordFormat, noise: &NoiseModel) -> Self {
        let unit = noise.unit();
        let ground = (0..format.len()).map(|b| ground_level(&unit, b)).collect();
        let weights = (0..format.len()).map(weight).collect();
        Self {
            noise: unit,
            ground,
            weights,
        }
    }

    fn bits(&self) -> usize {
        self.ground.len()
    }

    fn swing(&self, b: usize, level: f64, cap: f64) -> f64 {
        let h = level - self.ground[b];
        if h <= 0.0 {
            return 0.0;
        }
        // Same expression as the bracket in `capped_fill`, so that level caps exactly.
        if level >= self.ground[b] + self.noise.height(cap) {
            return cap;
        }
        // Only called for noise with a depth inverse.
        self.noise.depth(h).unwrap_or(0.0).min(cap)
    }

    fn mse_at(&self, level: f64, cap: f64) -> f64 {
        (0..self.bits())
            .map(|b| self.weights[b] * self.noise.tail(self.swing(b, level, cap)))
            .sum()
    }

    fn swings_at(&self, level: f64, cap: f64) -> Vec<f64> {
        (0..self.bits()).map(|b| self.swing(b, level, cap)).collect()
    }

    fn lowest_ground(&self) -> f64 {
        self.ground[self.bits() - 1]
    }

    /// Uncapped water-filling meeting `mse = v`.
    fn water_fill(&self, v: f64) -> Result<Fill> {
        let lo = self.lowest_ground();
        let mut width = 1.0;
        while self.mse_at(lo + width, f64::INFINITY) > v {
            width *= 2.0;
            if width > 1e6 {
                return Err(Error::NonConvergence {
                    what: "water level bracket",
                    residual: self.mse_at(lo + width, f64::INFINITY) / v - 1.0,
                });
            }
        }
        let (_, hi) = scalar::bisect(lo, lo + width, |w| self.mse_at(w, f64::INFINITY) > v);
        Ok(Fill {
            level: hi,
            swings: self.swings_at(hi, f64::INFINITY),
        })
    }

    /// Water-filling with every swing capped at `rho >= rho_speed`. The level
    /// returned is `ln(nu / rho)`.
    fn capped_fill(&self, v: f64, rho: f64) -> CappedFill {
        let lo = self.lowest_ground();
        let hi = self.ground[0] + self.noise.height(rho);
        let level = if self.mse_at(hi, rho) > v {
            hi
        } else {
            scalar::bisect(lo, hi, |w| self.mse_at(w, rho) > v).1
        };
        self.capped_fill_at(rho, level)
    }

    /// Every bit at the cap, at the lowest level that caps them all.
    fn all_capped(&self, rho: f64) -> CappedFill {
        self.capped_fill_at(rho, self.ground[0] + self.noise.height(rho))
    }

    fn capped_fill_at(&self, rho: f64, level: f64) -> CappedFill {
        let swings = self.swings_at(level, rho);
        let h_rho = self.noise.height(rho);
        let eta = (0..self.bits())
            .map(|b| {
                if swings[b] >= rho {
                    (rho * (level - self.ground[b] - h_rho).exp_m1()).max(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        let energy = swings.iter().sum();
        CappedFill {
            rho,
            level,
            swings,
            eta,
            energy,
        }
    }

    /// When every active bit is capped the MSE is flat over a range of
    /// levels, so `nu` is not pinned by the budget. Pick the level in that
    /// range that balances `sum eta = sum delta`, or the closest end.
    fn balance(&self, fill: CappedFill) -> CappedFill {
        let rho = fill.rho;
        let m0 = self.mse_at(fill.level, rho);
        // eta_b <= sum delta <= B rho bounds the useful levels.
        let roof = self.ground[0] + self.noise.height(rho) + (1.0 + self.bits() as f64).ln() + 1.0;
        let (upper, _) = scalar::bisect(fill.level, roof, |w| self.mse_at(w, rho) >= m0);
        if upper <= fill.level {
            return fill;
        }
        let at = |level: f64| self.capped_fill_at(rho, level);
        let top = at(upper);
        if top.slope() >= 0.0 {
            return if top.slope().abs() < fill.slope().abs() {
                top
            } else {
                fill
            };
        }
        if fill.slope() <= 0.0 {
            return fill;
        }
        let (lo, hi) = scalar::bisect(fill.level, upper, |w| at(w).slope() > 0.0);
        let (a, b) = (at(lo), at(hi));
        if a.slope().abs() <= b.slope().abs() {
            a
        } else {
            b
        }
    }

    fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Uniform swing meeting `mse = v`.
    fn speed_rho(&self, v: f64) -> Result<f64> {
        self.noise.inverse_tail(v / self.total_weight())
    }

    /// `ln f(delta)` for the unit noise.
    fn ln_density(&self, delta: f64) -> f64 {
        -self.noise.log_inv_peak_density() - self.noise.height(delta)
    }
}

fn check_budget(fidelity: &FidelitySpec, tol: f64) -> Result<f64> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(domain(format!("tolerance must be positive, got {tol}")));
    }
    let v = fidelity.mse_budget();
    if v <= 0.0 {
        return Err(Error::Infeasible(format!(
            "MSE budget {v} cannot be met with finite swings"
        )));
    }
    Ok(v)
}

fn require_water_filling(noise: &NoiseModel, operation: &'static str) -> Result<()> {
    if noise.supports_water_filling() {
        Ok(())
    } else {
        Err(Error::UnsupportedNoise {
            operation,
            noise: noise.kind().name(),
        })
    }
}

fn check_root(what: &'static str, residual: f64, tol: f64) -> Result<()> {
    if residual.abs() <= tol {
        Ok(())
    } else {
        Err(Error::NonConvergence { what, residual })
    }
}

fn saturated(criterion: Criterion, format: WordFormat, noise: &NoiseModel, v: f64) -> SolverSolution {
    let n = format.len();
    let total = format.total_weight();
    let (lambda, eta) = match criterion {
        Criterion::MinEnergy => (vec![1.0; n], vec![0.0; n]),
        Criterion::MaxSpeed => {
            let eta: Vec<f64> = (0..n).map(|b| weight(b) / total).collect();
            (eta.clone(), eta)
        }
        Criterion::MinEdp => (vec![0.0; n], vec![0.0; n]),
    };
    let mut sol = SolverSolution {
        criterion,
        swings: SwingVector::zeros(format),
        nu: 0.0,
        lambda,
        eta,
        sand_depths: vec![0.0; n],
        achieved_mse: format.zero_swing_mse(),
        rho: 0.0,
        kkt_residual: 0.0,
        saturated: true,
    };
    sol.kkt_residual = kkt_residuals_unchecked(&sol, criterion, noise, v);
    sol
}

/// Minimum read energy `sum delta_b` subject to `MSE <= V`.
pub fn solve_min_energy(
    format: WordFormat,
    noise: &NoiseModel,
    fidelity: &FidelitySpec,
    tol: f64,
) -> Result<SolverSolution> {
    let v = check_budget(fidelity, tol)?;
    require_water_filling(noise, "min-energy solver")?;
    if fidelity.is_saturated(format) {
        return Ok(saturated(Criterion::MinEnergy, format, noise, v));
    }
    let ladder = Ladder::new(format, noise);
    let fill = ladder.water_fill(v)?;
    let mse = ladder.mse_at(fill.level, f64::INFINITY);
    check_root("min-energy water level", mse / v - 1.0, tol)?;

    let sigma = noise.sigma();
    let nu_unit = fill.level.exp();
    let lambda = (0..format.len())
        .map(|b| {
            if fill.swings[b] > 0.0 {
                0.0
            } else {
                (-(fill.level - ladder.ground[b]).exp_m1()).max(0.0)
            }
        })
        .collect();
    let swings = SwingVector::from_vec_unchecked(fill.swings.iter().map(|d| d * sigma).collect());
    let rho = swings.max_swing();
    let mut sol = SolverSolution {
        criterion: Criterion::MinEnergy,
        swings,
        nu: nu_unit * sigma,
        lambda,
        eta: vec![0.0; format.len()],
        sand_depths: vec![0.0; format.len()],
        achieved_mse: mse,
        rho,
        kkt_residual: 0.0,
        saturated: false,
    };
    sol.kkt_residual = kkt_residuals_unchecked(&sol, Criterion::MinEnergy, noise, v);
    Ok(sol)
}

/// Minimum maximum swing subject to `MSE <= V`: the uniform assignment.
pub fn solve_max_speed(
    format: WordFormat,
    noise: &NoiseModel,
    fidelity: &FidelitySpec,
    tol: f64,
) -> Result<SolverSolution> {
    let v = check_budget(fidelity, tol)?;
    if fidelity.is_saturated(format) {
        return Ok(saturated(Criterion::MaxSpeed, format, noise, v));
    }
    let ladder = Ladder::new(format, noise);
    let rho_unit = ladder.speed_rho(v)?;
    let total = ladder.total_weight();
    let mse = total * ladder.noise.tail(rho_unit);
    check_root("max-speed swing", mse / v - 1.0, tol)?;

    let sigma = noise.sigma();
    // nu = 1 / (f(rho) sum_b 4^b), so that sum_b eta_b = 1.
    let nu_unit = (-ladder.ln_density(rho_unit) - total.ln()).exp();
    let eta = ladder.weights.iter().map(|w| w / total).collect();
    let rho = rho_unit * sigma;
    let mut sol = SolverSolution {
        criterion: Criterion::MaxSpeed,
        swings: SwingVector::from_vec_unchecked(vec![rho; format.len()]),
        nu: nu_unit * sigma,
        lambda: vec![0.0; format.len()],
        eta,
        sand_depths: vec![0.0; format.len()],
        achieved_mse: mse,
        rho,
        kkt_residual: 0.0,
        saturated: false,
    };
    sol.kkt_residual = kkt_residuals_unchecked(&sol, Criterion::MaxSpeed, noise, v);
    Ok(sol)
}

/// Minimum energy-delay product `rho * sum delta_b` subject to `MSE <= V`.
pub fn solve_min_edp(
    format: WordFormat,
    noise: &NoiseModel,
    fidelity: &FidelitySpec,
    tol: f64,
) -> Result<SolverSolution> {
    let v = check_budget(fidelity, tol)?;
    require_water_filling(noise, "min-EDP solver")?;
    if fidelity.is_saturated(format) {
        return Ok(saturated(Criterion::MinEdp, format, noise, v));
    }
    let ladder = Ladder::new(format, noise);
    let rho_speed = ladder.speed_rho(v)?;
    let rho_energy = ladder.water_fill(v)?.swings.iter().copied().fold(0.0, f64::max);

    // A single bit, or a range lost to rounding, leaves only the uniform swing.
    let fill = if format.len() == 1 || rho_energy <= rho_speed * (1.0 + 1e-9) {
        ladder.balance(ladder.all_capped(rho_speed))
    } else {
        search_edp_cap(&ladder, v, rho_speed, rho_energy)
    };
    check_root("min-EDP cap", fill.slope() / fill.rho, tol)?;

    let sigma = noise.sigma();
    let n = format.len();
    let mse = ladder.mse_at(fill.level, fill.rho);
    let lambda_unit: Vec<f64> = (0..n)
        .map(|b| {
            if fill.swings[b] > 0.0 {
                0.0
            } else {
                (fill.rho * -(fill.level - ladder.ground[b]).exp_m1()).max(0.0)
            }
        })
        .collect();
    check_root("min-EDP water level", mse / v - 1.0, tol)?;

    let sand_depths = fill.eta.iter().map(|e| (e / fill.rho).ln_1p()).collect();
    let rho = fill.rho * sigma;
    let swings = SwingVector::from_vec_unchecked(
        fill.swings
            .iter()
            .map(|&d| if d >= fill.rho { rho } else { d * sigma })
            .collect(),
    );
    let mut sol = SolverSolution {
        criterion: Criterion::MinEdp,
        swings,
        nu: fill.rho * fill.level.exp() * sigma * sigma,
        lambda: lambda_unit.iter().map(|l| l * sigma).collect(),
        eta: fill.eta.iter().map(|e| e * sigma).collect(),
        sand_depths,
        achieved_mse: mse,
        rho,
        kkt_residual: 0.0,
        saturated: false,
    };
    sol.kkt_residual = kkt_residuals_unchecked(&sol, Criterion::MinEdp, noise, v);
    Ok(sol)
}

/// Finds the EDP-optimal cap in `[rho_speed, rho_energy]`.
fn search_edp_cap(ladder: &Ladder, v: f64, rho_speed: f64, rho_energy: f64) -> CappedFill {
    let span = rho_energy - rho_speed;
    let edp = |rho: f64| ladder.capped_fill(v, rho).edp();

    let grid: Vec<f64> = (0..EDP_SCAN_POINTS)
        .map(|i| rho_speed + span * i as f64 / (EDP_SCAN_POINTS - 1) as f64)
        .collect();
    let scan: Vec<f64> = grid.iter().map(|&r| edp(r)).collect();
    let (a, b) = if scalar::is_unimodal(&scan, 1e-12) {
        (rho_speed, rho_energy)
    } else {
        let i = scalar::argmin(&scan).unwrap_or(0);
        (grid[i.saturating_sub(1)], grid[(i + 1).min(EDP_SCAN_POINTS - 1)])
    };
    let (rho_golden, _) = scalar::golden_section(a, b, 1e-10 * span, edp);

    // Polish on the sign of dEDP/drho.
    let slope = |rho: f64| ladder.capped_fill(v, rho).slope();
    let s0 = slope(rho_golden);
    let (mut lo, mut hi) = (rho_golden, rho_golden);
    let mut step = 1e-8 * span;
    if s0 < 0.0 {
        loop {
            hi = (hi + step).min(rho_energy);
            if slope(hi) >= 0.0 || hi >= rho_energy {
                break;
            }
            lo = hi;
            step *= 2.0;
        }
    } else {
        loop {
            lo = (lo - step).max(rho_speed);
            if slope(lo) < 0.0 {
                break;
            }
            if lo <= rho_speed {
                return ladder.balance(ladder.all_capped(rho_speed));
            }
            hi = lo;
            step *= 2.0;
        }
    }
    let (lo, hi) = scalar::bisect(lo, hi, |r| slope(r) < 0.0);
    let fl = ladder.balance(ladder.capped_fill(v, lo));
    let fh = ladder.balance(ladder.capped_fill(v, hi));
    let best = if fl.slope().abs() <= fh.slope().abs() { fl } else { fh };
    // Guard against a polish that wandered away from the scan minimum.
    let scan_min = scan.iter().copied().fold(f64::INFINITY, f64::min);
    debug_assert!(best.edp() <= scan_min * (1.0 + 1e-9));
    best
}

/// Dispatches to the solver for `criterion`.
pub fn solve(
    criterion: Criterion,
    format: WordFormat,
    noise: &NoiseModel,
    fidelity: &FidelitySpec,
    tol: f64,
) -> Result<SolverSolution> {
    match criterion {
        Criterion::MinEnergy => solve_min_energy(format, noise, fidelity, tol),
        Criterion::MaxSpeed => solve_max_speed(format, noise, fidelity, tol),
        Criterion::MinEdp => solve_min_edp(format, noise, fidelity, tol),
    }
}

/// Largest violation among the KKT conditions of `criterion` for the claimed
/// `solution`: stationarity, primal feasibility, dual sign and complementary
/// slackness. Stationarity and products are made dimensionless (divided by
/// `sigma`, or by `rho` and `rho^2` for min-EDP) so one threshold fits all.
pub fn kkt_residuals(
    solution: &SolverSolution,
    criterion: Criterion,
    format: WordFormat,
    noise: &NoiseModel,
    fidelity: &FidelitySpec,
) -> Result<f64> {
    solution.swings.check_format(format)?;
    for v in [&solution.lambda, &solution.eta, &solution.sand_depths] {
        if v.len() != format.len() {
            return Err(Error::DimensionMismatch {
                expected: format.len(),
                found: v.len(),
            });
        }
    }
    Ok(kkt_residuals_unchecked(
        solution,
        criterion,
        noise,
        fidelity.mse_budget(),
    ))
}

fn kkt_residuals_unchecked(sol: &SolverSolution, criterion: Criterion, noise: &NoiseModel, v: f64) -> f64 {
    let d = sol.swings.as_slice();
    let n = d.len();
    let rho = sol.rho;
    let nu = sol.nu;
    let ln_f0 = -noise.log_inv_peak_density();
    // nu 4^b f(delta_b), evaluated in logs to stay finite for wide words.
    let pull = |b: usize| {
        if nu > 0.0 {
            (nu.ln() + b as f64 * LN_4 + ln_f0 - noise.height(d[b])).exp()
        } else {
            0.0
        }
    };

    let mut worst: f64 = 0.0;
    let mut note = |r: f64| {
        worst = if r.is_nan() { f64::INFINITY } else { worst.max(r) };
    };

    let mse: f64 = (0..n).map(|b| weight(b) * noise.tail(d[b])).sum();
    if nu > 0.0 {
        note((mse - v).abs() / v);
    } else {
        note(((mse - v) / v).max(0.0));
    }
    note(-nu);
    note((rho - sol.swings.max_swing()).abs() / noise.sigma().max(rho));

    match criterion {
        Criterion::MinEnergy => {
            let sigma = noise.sigma();
            for b in 0..n {
                note((1.0 - pull(b) - sol.lambda[b]).abs());
                note(-sol.lambda[b]);
                note((sol.lambda[b] * d[b]).abs() / sigma);
            }
        }
        Criterion::MaxSpeed => {
            let sigma = noise.sigma();
            for b in 0..n {
                note((sol.eta[b] - pull(b) - sol.lambda[b]).abs());
                note(-sol.lambda[b]);
                note(-sol.eta[b]);
                note((sol.lambda[b] * d[b]).abs() / sigma);
                note((sol.eta[b] * (rho - d[b])).abs() / sigma);
            }
            note((1.0 - sol.eta.iter().sum::<f64>()).abs());
        }
        Criterion::MinEdp => {
            let scale = if rho > 0.0 { rho } else { noise.sigma() };
            for b in 0..n {
                note((rho - pull(b) + sol.eta[b] - sol.lambda[b]).abs() / scale);
                note(-sol.lambda[b] / scale);
                note(-sol.eta[b] / scale);
                note((sol.lambda[b] * d[b]).abs() / (scale * scale));
                note((sol.eta[b] * (rho - d[b])).abs() / (scale * scale));
            }
            let total_eta: f64 = sol.eta.iter().sum();
            note((sol.swings.energy() - total_eta).abs() / scale);
        }
    }
    worst
}

/// `ln(1 + E / rho)`: the sand depth of the MSB when it is the only capped bit.
/// Zero in the `E -> 0` limit.
pub fn sand_capacity(energy: f64, rho: f64) -> f64 {
    if energy <= 0.0 {
        return 0.0;
    }
    (energy / rho).ln_1p()
}

/// Sand capacity of a min-EDP solution whose only capped bit is the MSB.
/// The PASR then equals `B / (exp(s) - 1)`.
pub fn single_cap_sand_capacity(solution: &SolverSolution) -> Result<f64> {
    let capped = solution.capped_bits();
    let msb = solution.swings.len() - 1;
    if capped != [msb] {
        return Err(Error::Precondition(format!(
            "expected only bit {msb} at the cap, found {capped:?}"
        )));
    }
    Ok(sand_capacity(solution.energy(), solution.rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{mse_from_psnr, mse_uniform};
    use crate::noise::NoiseKind;

    fn g1() -> NoiseModel {
        NoiseModel::gaussian(1.0).unwrap()
    }

    fn fmt(b: u32) -> WordFormat {
        WordFormat::new(b).unwrap()
    }

    fn at_psnr(b: u32, db: f64) -> FidelitySpec {
        FidelitySpec::from_psnr(db, fmt(b)).unwrap()
    }

    fn mse(v: f64) -> FidelitySpec {
        FidelitySpec::from_mse(v).unwrap()
    }

    #[test]
    fn criterion_parses() {
        for c in Criterion::ALL {
            assert_eq!(c.name().parse::<Criterion>().unwrap(), c);
        }
        assert!("fastest".parse::<Criterion>().is_err());
    }

    #[test]
    fn min_energy_b8_at_30db() {
        let sol = solve_min_energy(fmt(8), &g1(), &at_psnr(8, 30.0), DEFAULT_TOL).unwrap();
        let d = sol.swings.as_slice();
        assert_eq!(&d[..3], &[0.0, 0.0, 0.0]);
        assert!(d[3..].windows(2).all(|w| w[1] > w[0]));
        // Reference swings from an independent scipy water-filling run.
        let want = [0.4301, 1.7198, 2.3938, 2.9159, 3.3579];
        for (got, want) in d[3..].iter().zip(want) {
            assert!((got - want).abs() < 1e-4, "{got} vs {want}");
        }
        assert!((sol.achieved_mse / 65.025 - 1.0).abs() < 1e-9);
        assert!(sol.kkt_residual < 1e-9, "{}", sol.kkt_residual);
        assert!(!sol.saturated);
    }

    #[test]
    fn min_energy_single_bit_is_inverse_tail() {
        let sol = solve_min_energy(fmt(1), &g1(), &mse(0.1), DEFAULT_TOL).unwrap();
        assert!((sol.swings[0] - 1.281_551_565_544_600_4).abs() < 1e-9);
    }

    /// Grid oracle: for each grid choice of the three upper swings, the
    /// cheapest feasible `delta_0` on the same grid.
    fn grid_min_energy_b4(v: f64, step: f64, ranges: [(f64, f64); 3]) -> f64 {
        let n = g1();
        let mut best = f64::INFINITY;
        let pts = |(lo, hi): (f64, f64)| {
            let k0 = (lo / step).ceil().max(0.0) as i64;
            let k1 = (hi / step).floor() as i64;
            (k0..=k1).map(move |k| k as f64 * step)
        };
        for d1 in pts(ranges[0]) {
            let m1 = 4.0 * n.tail(d1);
            for d2 in pts(ranges[1]) {
                let m2 = m1 + 16.0 * n.tail(d2);
                for d3 in pts(ranges[2]) {
                    let rest = v - m2 - 64.0 * n.tail(d3);
                    if rest <= 0.0 {
                        continue;
                    }
                    let d0 = if rest >= 0.5 {
                        0.0
                    } else {
                        let exact = n.inverse_tail(rest).unwrap();
                        let mut k = (exact / step).ceil();
                        while n.tail(k * step) > rest {
                            k += 1.0;
                        }
                        k * step
                    };
                    best = best.min(d0 + d1 + d2 + d3);
                }
            }
        }
        best
    }

    #[test]
    fn min_energy_matches_grid_oracle() {
        let sol = solve_min_energy(fmt(4), &g1(), &mse(1.0), DEFAULT_TOL).unwrap();
        let full = [(0.0, 6.0); 3];
        let coarse = grid_min_energy_b4(1.0, 0.05, full);
        let d = sol.swings.as_slice();
        let local = [
            (d[1] - 0.3, d[1] + 0.3),
            (d[2] - 0.3, d[2] + 0.3),
            (d[3] - 0.3, d[3] + 0.3),
        ];
        let fine = grid_min_energy_b4(1.0, 0.01, local);
        let grid = coarse.min(fine);
        assert!(sol.energy() <= grid + 1e-9);
        assert!(grid - sol.energy() < 0.02, "grid {grid} vs {}", sol.energy());
    }

    #[test]
    fn max_speed_examples() {
        let sol = solve_max_speed(fmt(8), &g1(), &at_psnr(8, 30.0), DEFAULT_TOL).unwrap();
        assert!(sol.swings.as_slice().iter().all(|&d| d == sol.rho));
        assert!((sol.rho - 2.750_342_110_320_15).abs() < 1e-9);
        assert!((sol.eta[7] - 49152.0 / 65535.0).abs() < 1e-15);
        assert!((sol.eta.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(sol.kkt_residual < 1e-9);

        let sat = solve_max_speed(fmt(2), &g1(), &mse(2.5), DEFAULT_TOL).unwrap();
        assert_eq!(sat.rho, 0.0);
        assert!(sat.saturated);
    }

    #[test]
    fn flattened_ground_identity() {
        let n = NoiseModel::gaussian(1.7).unwrap();
        let sol = solve_max_speed(fmt(8), &n, &at_psnr(8, 27.0), DEFAULT_TOL).unwrap();
        let flat = (3.0 * (2.0 * std::f64::consts::PI).sqrt() * 1.7 / 65535.0).ln();
        for b in 0..8 {
            let lhs = ground_level(&n, b) + sol.eta[b].ln();
            assert!((lhs - flat).abs() < 1e-12);
            let rhs = ground_level(&n, b) + sol.eta[b].ln() + n.height(sol.rho);
            assert!((sol.water_level() - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn min_edp_b8_at_30db() {
        let v = at_psnr(8, 30.0);
        let sol = solve_min_edp(fmt(8), &g1(), &v, DEFAULT_TOL).unwrap();
        assert_eq!(sol.capped_bits(), vec![6, 7]);
        let speed = solve_max_speed(fmt(8), &g1(), &v, DEFAULT_TOL).unwrap();
        let ratio = sol.edp() / speed.edp();
        assert!((ratio - 0.5558).abs() < 1e-3, "{ratio}");
        assert!((sol.rho / speed.rho - 1.0824).abs() < 1e-3);
        assert!(sol.kkt_residual < 1e-9, "{}", sol.kkt_residual);
        let sand: f64 = sol.sand_depths.iter().map(|s| s.exp()).sum();
        assert!((sand - (sol.energy() / sol.rho + 8.0)).abs() < 1e-9);
        for b in 0..6 {
            assert_eq!(sol.sand_depths[b], 0.0);
        }
        assert!(sol.sand_depths[6] > 0.0 && sol.sand_depths[7] > 0.0);
    }

    /// Grid over `(rho, ln(nu/rho))` of the three-branch capped swings.
    #[test]
    fn min_edp_matches_grid_oracle() {
        let n = g1();
        let v = 1.0;
        let sol = solve_min_edp(fmt(4), &n, &mse(v), DEFAULT_TOL).unwrap();
        let ground: Vec<f64> = (0..4).map(|b| ground_level(&n, b)).collect();
        let step = 0.005;
        let mut best = f64::INFINITY;
        let mut rho = step;
        while rho < 6.0 {
            let mut level = ground[3];
            let top = ground[0] + 0.5 * rho * rho;
            while level <= top + step {
                let d: Vec<f64> = ground
                    .iter()
                    .map(|g| (2.0 * (level - g).max(0.0)).sqrt().min(rho))
                    .collect();
                let m: f64 = d
                    .iter()
                    .enumerate()
                    .map(|(b, x)| 4f64.powi(b as i32) * n.tail(*x))
                    .sum();
                if m <= v {
                    best = best.min(rho * d.iter().sum::<f64>());
                }
                level += step;
            }
            rho += step;
        }
        assert!(sol.edp() <= best * (1.0 + 1e-9));
        assert!(best <= sol.edp() * 1.01, "grid {best} vs {}", sol.edp());
    }

    #[test]
    fn single_bit_min_edp_is_uniform() {
        let sol = solve_min_edp(fmt(1), &g1(), &mse(0.1), DEFAULT_TOL).unwrap();
        assert!((sol.rho - 1.281_551_565_544_600_4).abs() < 1e-9);
        assert!(sol.kkt_residual < 1e-9, "{}", sol.kkt_residual);
        assert!((sol.eta[0] - sol.rho).abs() < 1e-12);
    }

    #[test]
    fn perturbed_energy_solution_fails_kkt() {
        let f = at_psnr(8, 30.0);
        let mut sol = solve_min_energy(fmt(8), &g1(), &f, DEFAULT_TOL).unwrap();
        let mut d = sol.swings.as_slice().to_vec();
        d[5] += 0.1;
        sol.swings = SwingVector::new(d).unwrap();
        let r = kkt_residuals(&sol, Criterion::MinEnergy, fmt(8), &g1(), &f).unwrap();
        assert!(r > 1e-3, "{r}");
    }

    #[test]
    fn uniform_is_not_energy_optimal() {
        let f = at_psnr(8, 30.0);
        let sol = solve_max_speed(fmt(8), &g1(), &f, DEFAULT_TOL).unwrap();
        let r = kkt_residuals(&sol, Criterion::MinEnergy, fmt(8), &g1(), &f).unwrap();
        assert!(r > 0.1, "{r}");
    }

    #[test]
    fn rescaling_with_sigma() {
        let f = at_psnr(8, 33.0);
        let n2 = NoiseModel::gaussian(2.0).unwrap();
        for c in Criterion::ALL {
            let a = solve(c, fmt(8), &g1(), &f, DEFAULT_TOL).unwrap();
            let b = solve(c, fmt(8), &n2, &f, DEFAULT_TOL).unwrap();
            for i in 0..8 {
                assert!((b.swings[i] - 2.0 * a.swings[i]).abs() < 1e-12);
            }
            assert!(b.kkt_residual < 1e-9, "{c}: {}", b.kkt_residual);
            assert_eq!(a.sand_depths, b.sand_depths);
        }
    }

    #[test]
    fn laplace_solutions_satisfy_kkt() {
        let n = NoiseModel::new(NoiseKind::Laplace, 1.0).unwrap();
        for db in [22.0, 30.0, 38.0] {
            for c in Criterion::ALL {
                let sol = solve(c, fmt(8), &n, &at_psnr(8, db), DEFAULT_TOL).unwrap();
                assert!(sol.kkt_residual < 1e-6, "{c} {db}: {}", sol.kkt_residual);
            }
        }
    }

    #[test]
    fn bounded_uniform_only_supports_speed() {
        let n = NoiseModel::new(NoiseKind::BoundedUniform, 1.0).unwrap();
        let f = at_psnr(8, 30.0);
        assert!(matches!(
            solve_min_energy(fmt(8), &n, &f, DEFAULT_TOL),
            Err(Error::UnsupportedNoise { .. })
        ));
        assert!(matches!(
            solve_min_edp(fmt(8), &n, &f, DEFAULT_TOL),
            Err(Error::UnsupportedNoise { .. })
        ));
        let sol = solve_max_speed(fmt(8), &n, &f, DEFAULT_TOL).unwrap();
        assert!((mse_uniform(&sol.swings, &n) / 65.025 - 1.0).abs() < 1e-12);
        assert!(sol.kkt_residual < 1e-9);
    }

    #[test]
    fn saturation_and_infeasibility() {
        for c in Criterion::ALL {
            let sol = solve(c, fmt(8), &g1(), &mse(10922.5), DEFAULT_TOL).unwrap();
            assert!(sol.saturated);
            assert_eq!(sol.energy(), 0.0);
            assert!(sol.kkt_residual < 1e-12, "{c}: {}", sol.kkt_residual);
            assert!(matches!(
                solve(c, fmt(8), &g1(), &mse(0.0), DEFAULT_TOL),
                Err(Error::Infeasible(_))
            ));
        }
        assert!(solve_min_energy(fmt(8), &g1(), &mse(1.0), 0.0).is_err());
    }

    #[test]
    fn sand_capacity_examples() {
        let (e, rho) = (4.0 * 1.5, 1.5);
        let s = sand_capacity(e, rho);
        assert!((s - 5f64.ln()).abs() < 1e-15);
        assert!((4.0 / s.exp_m1() - 1.0).abs() < 1e-15);
        assert_eq!(sand_capacity(0.0, 0.0), 0.0);
    }

    #[test]
    fn single_cap_requires_exactly_one_capped_bit() {
        let two = solve_min_edp(fmt(8), &g1(), &at_psnr(8, 30.0), DEFAULT_TOL).unwrap();
        assert!(matches!(single_cap_sand_capacity(&two), Err(Error::Precondition(_))));
        // Sweep for a budget where only the MSB is capped.
        let mut found = false;
        for i in 0..200 {
            let db = 5.0 + 0.25 * i as f64;
            let v = mse_from_psnr(db, 8).unwrap();
            let sol = solve_min_edp(fmt(8), &g1(), &mse(v), DEFAULT_TOL).unwrap();
            if sol.capped_bits() == [7] {
                let s = single_cap_sand_capacity(&sol).unwrap();
                assert!((s - sol.sand_depths[7]).abs() < 1e-10, "{db}");
                let pasr = sol.swings.pasr().unwrap();
                assert!((pasr - 8.0 / sol.sand_depths[7].exp_m1()).abs() < 1e-9);
                found = true;
            }
        }
        assert!(found);
    }
}
