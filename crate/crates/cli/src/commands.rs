use rayon::prelude::*;
use swingfill::scalar::bisect;
use swingfill::{
    discrete_water_fill, extract_source_stats, kkt_residuals, levin_campello, lsb_dropping_energy, lsb_dropping_mse,
    monte_carlo_mse, mse_nonuniform, mse_uniform, psnr_from_mse, read_corpus, sand_pour_water_fill,
    selective_ecc_energy, selective_ecc_mse, solve, solve_min_energy, words_from_bytes, Criterion, FidelitySpec,
    Granularity, HammingCode, NoiseModel, SelectiveEccLayout, SimConfig, SimSource, SourceStats, SwingVector,
    WordFormat, DEFAULT_TOL,
};

use crate::config::{Fidelity, RunConfig, Target};
use crate::output::{Record, Report, Value};
use crate::{CliError, Result};

/// Largest KKT residual `kkt-check` accepts.
pub const KKT_THRESHOLD: f64 = 1e-6;

const OK: &str = "ok";

fn status(ok: bool, rows: Vec<Record>, command: &'static str) -> Report {
    Report { command, rows, ok }
}

fn all_ok(rows: &[Record]) -> bool {
    rows.iter().all(|r| r.get("status") == Some(&Value::Text(OK.into())))
}

fn psnr_or_null(mse: f64, format: WordFormat) -> Value {
    psnr_from_mse(mse, format.bits()).ok().into()
}

/// Swings from a discrete algorithm, with the poured sand for min-EDP.
fn discrete(
    criterion: Criterion,
    format: WordFormat,
    noise: &NoiseModel,
    fidelity: &FidelitySpec,
    beta: Granularity,
) -> swingfill::Result<(SwingVector, Option<Vec<f64>>)> {
    match criterion {
        Criterion::MinEdp => {
            let r = sand_pour_water_fill(format, noise, fidelity, beta)?;
            Ok((r.swings, Some(r.sand)))
        }
        c => Ok((discrete_water_fill(c, format, noise, fidelity, beta)?, None)),
    }
}

fn swing_metrics(rec: &mut Record, swings: &SwingVector, noise: &NoiseModel, format: WordFormat) {
    let mse = mse_uniform(swings, noise);
    rec.push("energy", swings.energy());
    rec.push("rho", swings.max_swing());
    rec.push("edp", swings.edp());
    rec.push("pasr", swings.pasr().ok());
    rec.push("achieved_mse", mse);
    rec.push("achieved_psnr", psnr_or_null(mse, format));
}

fn capped(swings: &SwingVector) -> Vec<i64> {
    let rho = swings.max_swing();
    if rho <= 0.0 {
        return Vec::new();
    }
    (0..swings.len())
        .filter(|&b| swings[b] == rho)
        .map(|b| b as i64)
        .collect()
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<Report> {
    let target = match cfg.fidelity {
        Fidelity::Point(t) => t,
        Fidelity::Unset => return Err(CliError::Config("solve needs --psnr or --mse".into())),
        Fidelity::Sweep(_) => {
            return Err(CliError::Config(
                "solve takes a single --psnr or --mse, not --sweep".into(),
            ))
        }
    };
    let format = cfg.format;
    let fidelity = target.fidelity(format)?;
    let mut rows = Vec::new();
    for criterion in cfg.criteria_or(&[Criterion::MinEnergy]) {
        let mut rec = Record::new()
            .with("criterion", criterion.name())
            .with("bits", format.bits())
            .with("sigma", cfg.noise.sigma())
            .with("noise", cfg.noise.kind().name())
            .with("beta", cfg.beta.map(|b| b.step()))
            .with("psnr_target", target.psnr(format))
            .with("mse_budget", fidelity.mse_budget())
            .with("status", OK);
        match cfg.beta {
            None => {
                let sol = solve(criterion, format, &cfg.noise, &fidelity, DEFAULT_TOL)?;
                swing_metrics(&mut rec, &sol.swings, &cfg.noise, format);
                rec.push("nu", sol.nu);
                rec.push("water_level", sol.water_level());
                rec.push("kkt_residual", sol.kkt_residual);
                rec.push("saturated", sol.saturated);
                rec.push(
                    "capped_bits",
                    Value::Ints(sol.capped_bits().into_iter().map(|b| b as i64).collect()),
                );
                rec.push("delta", Value::Nums(sol.swings.as_slice().to_vec()));
                rec.push("lambda", Value::Nums(sol.lambda));
                rec.push("eta", Value::Nums(sol.eta));
                rec.push("sand", Value::Nums(sol.sand_depths));
            }
            Some(beta) => {
                let (swings, sand) = discrete(criterion, format, &cfg.noise, &fidelity, beta)?;
                swing_metrics(&mut rec, &swings, &cfg.noise, format);
                rec.push("nu", Value::Null);
                rec.push("water_level", Value::Null);
                rec.push("kkt_residual", Value::Null);
                rec.push("saturated", swings.energy() == 0.0);
                rec.push("capped_bits", Value::Ints(capped(&swings)));
                rec.push("delta", Value::Nums(swings.as_slice().to_vec()));
                rec.push("lambda", Value::Null);
                rec.push("eta", sand.map_or(Value::Null, Value::Nums));
                rec.push("sand", Value::Null);
            }
        }
        rows.push(rec);
    }
    Ok(status(true, rows, "solve"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SweepScheme {
    Criterion(Criterion),
    LevinCampello,
}

impl SweepScheme {
    fn name(self) -> &'static str {
        match self {
            SweepScheme::Criterion(c) => c.name(),
            SweepScheme::LevinCampello => "levin-campello",
        }
    }
}

fn sweep_schemes(cfg: &RunConfig) -> Result<Vec<SweepScheme>> {
    let mut schemes: Vec<SweepScheme> = if cfg.criteria.is_empty() && !cfg.schemes.is_empty() {
        Vec::new()
    } else {
        cfg.criteria_or(&Criterion::ALL)
            .into_iter()
            .map(SweepScheme::Criterion)
            .collect()
    };
    for s in &cfg.schemes {
        let scheme = match s.as_str() {
            "levin-campello" => {
                if cfg.beta.is_none() {
                    return Err(CliError::Config("levin-campello needs --beta".into()));
                }
                SweepScheme::LevinCampello
            }
            other => SweepScheme::Criterion(other.parse()?),
        };
        if !schemes.contains(&scheme) {
            schemes.push(scheme);
        }
    }
    Ok(schemes)
}

fn sweep_row(cfg: &RunConfig, target: Target, scheme: SweepScheme) -> Record {
    let format = cfg.format;
    let mut rec = Record::new()
        .with("psnr_db", target.psnr(format))
        .with("mse_budget", target.fidelity(format).map(|f| f.mse_budget()).ok())
        .with("scheme", scheme.name())
        .with("beta", cfg.beta.map(|b| b.step()));
    let run = || -> swingfill::Result<(SwingVector, Option<f64>)> {
        let fidelity = target.fidelity(format)?;
        match (scheme, cfg.beta) {
            (SweepScheme::Criterion(c), None) => {
                let sol = solve(c, format, &cfg.noise, &fidelity, DEFAULT_TOL)?;
                Ok((sol.swings, Some(sol.kkt_residual)))
            }
            (SweepScheme::Criterion(c), Some(beta)) => Ok((discrete(c, format, &cfg.noise, &fidelity, beta)?.0, None)),
            (SweepScheme::LevinCampello, Some(beta)) => {
                Ok((levin_campello(format, &cfg.noise, &fidelity, beta)?, None))
            }
            (SweepScheme::LevinCampello, None) => unreachable!("checked when the schemes were parsed"),
        }
    };
    match run() {
        Ok((swings, kkt)) => {
            rec.push("status", OK);
            swing_metrics(&mut rec, &swings, &cfg.noise, format);
            rec.push("kkt_residual", kkt);
            rec.push("delta", Value::Nums(swings.as_slice().to_vec()));
        }
        Err(e) => {
            rec.push("status", e.to_string());
            for key in [
                "energy",
                "rho",
                "edp",
                "pasr",
                "achieved_mse",
                "achieved_psnr",
                "kkt_residual",
                "delta",
            ] {
                rec.push(key, Value::Null);
            }
        }
    }
    rec
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Report> {
    let schemes = sweep_schemes(cfg)?;
    let mut targets = cfg.targets_or_default();
    targets.sort_by(|a, b| {
        a.psnr(cfg.format)
            .partial_cmp(&b.psnr(cfg.format))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let rows: Vec<Record> = targets
        .par_iter()
        .flat_map_iter(|&t| schemes.iter().map(move |&s| sweep_row(cfg, t, s)))
        .collect();
    Ok(status(all_ok(&rows), rows, "sweep"))
}

#[derive(Debug, Clone, PartialEq)]
enum CompareScheme {
    Optimal,
    Uniform,
    Lsb(usize),
    Secc(&'static str, HammingCode, SelectiveEccLayout),
}

fn compare_schemes(cfg: &RunConfig) -> Result<Vec<(String, CompareScheme)>> {
    let names: Vec<String> = if cfg.schemes.is_empty() {
        let mut v: Vec<String> = ["optimal", "uniform", "lsb-1", "lsb-2", "lsb-3", "lsb-4", "secc-7-4"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        if cfg.format.bits() == 8 || cfg.format.bits() >= 15 {
            v.push("secc-15-11".into());
        }
        v
    } else {
        cfg.schemes.clone()
    };
    let bits = cfg.format.bits();
    names
        .into_iter()
        .map(|name| {
            let scheme = match name.as_str() {
                "optimal" | "min-energy" => CompareScheme::Optimal,
                "uniform" | "max-speed" => CompareScheme::Uniform,
                "secc-7-4" => CompareScheme::Secc(
                    "secc-7-4",
                    HammingCode::h7_4(),
                    SelectiveEccLayout::secc_7_4(bits, false)?,
                ),
                "secc-15-11" => {
                    let layout = if bits == 8 {
                        SelectiveEccLayout::secc_15_11_four_words()
                    } else {
                        SelectiveEccLayout::secc_15_11(bits, false)?
                    };
                    CompareScheme::Secc("secc-15-11", HammingCode::h15_11(), layout)
                }
                other => match other.strip_prefix("lsb-").and_then(|l| l.parse::<usize>().ok()) {
                    Some(l) if l < cfg.format.len() => CompareScheme::Lsb(l),
                    Some(l) => {
                        return Err(CliError::Config(format!("cannot drop {l} of {bits} bits")));
                    }
                    None => return Err(CliError::Config(format!("unknown compare scheme `{other}`"))),
                },
            };
            Ok((name, scheme))
        })
        .collect()
}

fn min_energy_at(format: WordFormat, noise: &NoiseModel, mse: f64) -> swingfill::Result<f64> {
    if mse >= format.zero_swing_mse() {
        return Ok(0.0);
    }
    Ok(solve_min_energy(format, noise, &FidelitySpec::from_mse(mse)?, DEFAULT_TOL)?.energy())
}

/// Smallest MSE the optimal allocation reaches with energy `energy`.
pub fn optimal_mse_at_energy(format: WordFormat, noise: &NoiseModel, energy: f64) -> swingfill::Result<f64> {
    let top = format.zero_swing_mse().ln();
    if energy <= 0.0 {
        return Ok(format.zero_swing_mse());
    }
    let mut first_error = None;
    let mut costs_more = |ln_v: f64| match min_energy_at(format, noise, ln_v.exp()) {
        Ok(e) => e > energy,
        Err(err) => {
            first_error.get_or_insert(err);
            false
        }
    };
    let mut lo = top - 10.0;
    while !costs_more(lo) {
        lo -= 10.0;
        if lo < top - 1400.0 {
            return Ok((top - 1400.0).exp());
        }
    }
    let (_, hi) = bisect(lo, top, &mut costs_more);
    match first_error {
        Some(e) => Err(e),
        None => Ok(hi.exp()),
    }
}

fn compare_row(cfg: &RunConfig, name: &str, scheme: &CompareScheme, swing: f64) -> Record {
    let format = cfg.format;
    let noise = &cfg.noise;
    let point = || -> swingfill::Result<(Option<f64>, f64, f64)> {
        Ok(match scheme {
            CompareScheme::Optimal => {
                let energy = format.len() as f64 * swing;
                (None, energy, optimal_mse_at_energy(format, noise, energy)?)
            }
            CompareScheme::Uniform => {
                let s = SwingVector::uniform(format, swing)?;
                (Some(swing), s.energy(), mse_uniform(&s, noise))
            }
            CompareScheme::Lsb(l) => (
                Some(swing),
                lsb_dropping_energy(format, *l, swing)?,
                lsb_dropping_mse(format, *l, swing, noise)?,
            ),
            CompareScheme::Secc(_, code, layout) => (
                Some(swing),
                selective_ecc_energy(layout, swing),
                selective_ecc_mse(layout, code, swing, noise)?,
            ),
        })
    };
    let mut rec = Record::new().with("scheme", name);
    match point().and_then(|(s, e, mse)| Ok((s, e, mse, min_energy_at(format, noise, mse)?))) {
        Ok((s, energy, mse, optimal)) => {
            rec.push("swing", s);
            rec.push("energy", energy);
            rec.push("mse", mse);
            rec.push("psnr_db", psnr_or_null(mse, format));
            rec.push("optimal_energy", optimal);
            rec.push("dominated", optimal <= energy * (1.0 + 1e-9) + 1e-12);
            rec.push("status", OK);
        }
        Err(e) => {
            rec.push("swing", Value::Null);
            for key in ["energy", "mse", "psnr_db", "optimal_energy", "dominated"] {
                rec.push(key, Value::Null);
            }
            rec.push("status", e.to_string());
        }
    }
    rec
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<Report> {
    let schemes = compare_schemes(cfg)?;
    let grid = cfg.swing_grid.points();
    let rows: Vec<Record> = schemes
        .iter()
        .flat_map(|(name, scheme)| grid.iter().map(move |&s| (name, scheme, s)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(name, scheme, s)| compare_row(cfg, name, scheme, s))
        .collect();
    Ok(status(all_ok(&rows), rows, "compare"))
}

struct Source {
    label: String,
    words: Option<Vec<u64>>,
    stats: Option<SourceStats>,
}

fn load_source(cfg: &RunConfig) -> Result<Source> {
    match &cfg.corpus {
        None => Ok(Source {
            label: "uniform".into(),
            words: None,
            stats: None,
        }),
        Some(path) => {
            let bytes = read_corpus(path)?;
            Ok(Source {
                label: path.display().to_string(),
                words: Some(words_from_bytes(&bytes, cfg.format)?),
                stats: Some(extract_source_stats(&bytes, cfg.format)?),
            })
        }
    }
}

fn simulate_row(
    cfg: &RunConfig,
    source: &Source,
    target: Option<Target>,
    label: &str,
    swings: swingfill::Result<SwingVector>,
) -> Record {
    let format = cfg.format;
    let target_psnr = target.and_then(|t| t.psnr(format));
    let mut rec = Record::new()
        .with("psnr_target", target_psnr)
        .with("criterion", label)
        .with("source", source.label.as_str())
        .with("samples", cfg.samples)
        .with("seed", cfg.seed);
    let run = || -> swingfill::Result<Vec<(&'static str, Value)>> {
        let swings = swings?;
        let sim = SimConfig {
            samples: cfg.samples,
            seed: cfg.seed,
            source: match &source.words {
                None => SimSource::Uniform,
                Some(w) => SimSource::Words(w.clone()),
            },
        };
        let est = monte_carlo_mse(&swings, &cfg.noise, &sim)?;
        let analytic = match &source.stats {
            None => mse_uniform(&swings, &cfg.noise),
            Some(stats) => mse_nonuniform(&swings, &cfg.noise, stats)?,
        };
        let mc_psnr = psnr_from_mse(est.mean, format.bits()).ok();
        let analytic_psnr = psnr_from_mse(analytic, format.bits()).ok();
        let delta = mc_psnr.zip(analytic_psnr).map(|(a, b)| a - b);
        let target_delta = mc_psnr.zip(target_psnr).map(|(a, b)| a - b);
        Ok(vec![
            ("mc_mse", est.mean.into()),
            ("std_error", est.std_error.into()),
            ("mc_psnr", mc_psnr.into()),
            ("analytic_mse", analytic.into()),
            ("analytic_psnr", analytic_psnr.into()),
            ("delta_db", delta.into()),
            ("target_delta_db", target_delta.into()),
            ("delta", Value::Nums(swings.as_slice().to_vec())),
        ])
    };
    match run() {
        Ok(fields) => {
            rec.push("status", OK);
            rec.0.extend(fields);
        }
        Err(e) => {
            rec.push("status", e.to_string());
            for key in [
                "mc_mse",
                "std_error",
                "mc_psnr",
                "analytic_mse",
                "analytic_psnr",
                "delta_db",
                "target_delta_db",
                "delta",
            ] {
                rec.push(key, Value::Null);
            }
        }
    }
    rec
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Report> {
    let source = load_source(cfg)?;
    let mut rows = Vec::new();
    if let Some(swings) = &cfg.swings {
        if cfg.explicit_bits && swings.len() != cfg.format.len() {
            return Err(CliError::Config(format!(
                "{} swings given for a {}-bit word",
                swings.len(),
                cfg.format.bits()
            )));
        }
        let mut cfg = cfg.clone();
        cfg.format = swings.format();
        let source = if cfg.corpus.is_some() {
            load_source(&cfg)?
        } else {
            source
        };
        rows.push(simulate_row(&cfg, &source, None, "explicit", Ok(swings.clone())));
        return Ok(status(all_ok(&rows), rows, "simulate"));
    }
    if cfg.fidelity == Fidelity::Unset {
        return Err(CliError::Config(
            "simulate needs --swings, --psnr, --mse or --sweep".into(),
        ));
    }
    for target in cfg.targets_or_default() {
        for criterion in cfg.criteria_or(&[Criterion::MinEnergy]) {
            let swings = target.fidelity(cfg.format).and_then(|fid| match cfg.beta {
                None => solve(criterion, cfg.format, &cfg.noise, &fid, DEFAULT_TOL).map(|s| s.swings),
                Some(beta) => discrete(criterion, cfg.format, &cfg.noise, &fid, beta).map(|d| d.0),
            });
            rows.push(simulate_row(cfg, &source, Some(target), criterion.name(), swings));
        }
    }
    Ok(status(all_ok(&rows), rows, "simulate"))
}

pub fn cmd_kkt_check(cfg: &RunConfig) -> Result<Report> {
    if cfg.beta.is_some() {
        return Err(CliError::Config(
            "kkt-check covers the continuous solvers; drop --beta".into(),
        ));
    }
    let cases: Vec<(Target, Criterion)> = cfg
        .targets_or_default()
        .into_iter()
        .flat_map(|t| cfg.criteria_or(&Criterion::ALL).into_iter().map(move |c| (t, c)))
        .collect();
    let rows: Vec<Record> = cases
        .into_par_iter()
        .map(|(target, criterion)| {
            let format = cfg.format;
            let mut rec = Record::new()
                .with("psnr_target", target.psnr(format))
                .with("criterion", criterion.name());
            let residual = target.fidelity(format).and_then(|fid| {
                let sol = solve(criterion, format, &cfg.noise, &fid, DEFAULT_TOL)?;
                kkt_residuals(&sol, criterion, format, &cfg.noise, &fid)
            });
            match residual {
                Ok(r) => {
                    let ok = r < KKT_THRESHOLD;
                    rec.push(
                        "status",
                        if ok {
                            OK.to_string()
                        } else {
                            format!("residual above {KKT_THRESHOLD:e}")
                        },
                    );
                    rec.push("kkt_residual", r);
                    rec.push("pass", ok);
                }
                Err(e) => {
                    rec.push("status", e.to_string());
                    rec.push("kkt_residual", Value::Null);
                    rec.push("pass", false);
                }
            }
            rec
        })
        .collect();
    Ok(status(all_ok(&rows), rows, "kkt-check"))
}
