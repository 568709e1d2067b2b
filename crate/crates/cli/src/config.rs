//! Command-line flags, the optional JSON config file and their merge.
//!
//! Flags override the file, which overrides the defaults. The fidelity
//! fields (`psnr`, `mse`, `sweep`) are taken as a group from whichever
//! source sets any of them.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use swingfill::{Criterion, FidelitySpec, Granularity, NoiseKind, NoiseModel, SwingVector, WordFormat};

use crate::output::OutputFormat;
use crate::{CliError, Result};

pub const CONFIG_ENV: &str = "SWINGFILL_CONFIG";

#[derive(Debug, Parser)]
#[command(
    name = "swingfill",
    version,
    about = "Per-bit read-swing allocation under an MSE budget"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Solve one instance and print the swings with their dual certificate.
    Solve,
    /// Solve every criterion over a PSNR range.
    Sweep,
    /// PSNR-vs-energy curves of the optimal swings and the baselines.
    Compare,
    /// Monte-Carlo PSNR next to the analytic prediction.
    Simulate,
    /// Solve and report the KKT residual of each solution.
    KktCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::Compare => "compare",
            Command::Simulate => "simulate",
            Command::KktCheck => "kkt-check",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// min-energy, max-speed or min-edp. Repeat or comma-separate for several.
    #[arg(long, global = true, value_delimiter = ',')]
    pub criterion: Vec<String>,
    /// Scheme names for `compare` (optimal, uniform, lsb-L, secc-7-4,
    /// secc-15-11) or extra sweep schemes (levin-campello).
    #[arg(long, global = true, value_delimiter = ',')]
    pub scheme: Vec<String>,
    /// Word length B.
    #[arg(long, global = true)]
    pub bits: Option<u32>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    /// gaussian, laplace or bounded-uniform.
    #[arg(long, global = true)]
    pub noise: Option<String>,
    /// Target PSNR in dB.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub psnr: Option<f64>,
    /// MSE budget.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub mse: Option<f64>,
    /// Swing granularity relative to sigma; switches to the discrete algorithms.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    /// PSNR range START:STOP:STEP in dB.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub sweep: Option<String>,
    /// Swing range START:STOP:STEP for the baseline curves of `compare`.
    #[arg(long, global = true)]
    pub swing_grid: Option<String>,
    /// Explicit swings for `simulate`, comma-separated, LSB first.
    #[arg(long, global = true, value_delimiter = ',')]
    pub swings: Option<Vec<f64>>,
    /// PGM (P5) or raw byte file used as the word source.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte-Carlo sample count.
    #[arg(long, global = true)]
    pub samples: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// Write results here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON config file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
}

/// One name or a list of names.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Names {
    One(String),
    Many(Vec<String>),
}

impl Names {
    fn into_vec(self) -> Vec<String> {
        match self {
            Names::One(s) => vec![s],
            Names::Many(v) => v,
        }
    }
}

/// Contents of the config file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub criterion: Option<Names>,
    pub scheme: Option<Names>,
    pub bits: Option<u32>,
    pub sigma: Option<f64>,
    pub noise: Option<String>,
    pub psnr: Option<f64>,
    pub mse: Option<f64>,
    pub beta: Option<f64>,
    pub sweep: Option<String>,
    pub swing_grid: Option<String>,
    pub swings: Option<Vec<f64>>,
    pub corpus: Option<PathBuf>,
    pub seed: Option<u64>,
    pub samples: Option<u64>,
    pub format: Option<OutputFormat>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))
    }
}

/// Inclusive arithmetic range `start:stop:step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Range {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

impl FromStr for Range {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CliError::Config(format!("range must be START:STOP:STEP, got `{s}`"));
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
            return Err(bad());
        }
        if step <= 0.0 {
            return Err(CliError::Config(format!("range step must be positive, got {step}")));
        }
        if stop < start {
            return Err(CliError::Config(format!("range stop {stop} is below start {start}")));
        }
        Ok(Range { start, stop, step })
    }
}

/// A single fidelity point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Psnr(f64),
    Mse(f64),
}

impl Target {
    pub fn fidelity(self, format: WordFormat) -> swingfill::Result<FidelitySpec> {
        match self {
            Target::Psnr(db) => FidelitySpec::from_psnr(db, format),
            Target::Mse(v) => FidelitySpec::from_mse(v),
        }
    }

    /// The PSNR this target stands for, if it has one.
    pub fn psnr(self, format: WordFormat) -> Option<f64> {
        match self {
            Target::Psnr(db) => Some(db),
            Target::Mse(v) => swingfill::psnr_from_mse(v, format.bits()).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fidelity {
    Unset,
    Point(Target),
    Sweep(Range),
}

pub const DEFAULT_SWEEP: Range = Range {
    start: 20.0,
    stop: 40.0,
    step: 0.5,
};

pub const DEFAULT_SWING_GRID: Range = Range {
    start: 0.1,
    stop: 6.0,
    step: 0.1,
};

pub const DEFAULT_SAMPLES: u64 = 1_000_000;

/// Fully resolved settings for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub criteria: Vec<Criterion>,
    pub schemes: Vec<String>,
    pub format: WordFormat,
    /// Set only when `--bits` or the file gave a word length.
    pub explicit_bits: bool,
    pub noise: NoiseModel,
    pub fidelity: Fidelity,
    pub beta: Option<Granularity>,
    pub swing_grid: Range,
    pub swings: Option<SwingVector>,
    pub corpus: Option<PathBuf>,
    pub seed: u64,
    pub samples: u64,
    pub output: OutputFormat,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Merges flags over the file over the defaults.
    pub fn resolve(flags: &Flags, file: &FileConfig) -> Result<Self> {
        let pick = |flag: &Vec<String>, file: &Option<Names>| -> Vec<String> {
            if !flag.is_empty() {
                flag.clone()
            } else {
                file.clone().map(Names::into_vec).unwrap_or_default()
            }
        };
        let criteria = pick(&flags.criterion, &file.criterion)
            .iter()
            .map(|s| s.parse::<Criterion>())
            .collect::<swingfill::Result<Vec<_>>>()?;
        let schemes = pick(&flags.scheme, &file.scheme);

        let bits = flags.bits.or(file.bits);
        let format = WordFormat::new(bits.unwrap_or(8))?;
        let sigma = flags.sigma.or(file.sigma).unwrap_or(1.0);
        let kind = match flags.noise.as_ref().or(file.noise.as_ref()) {
            Some(s) => s.parse::<NoiseKind>()?,
            None => NoiseKind::Gaussian,
        };
        let noise = NoiseModel::new(kind, sigma)?;

        let flag_fidelity = flags.psnr.is_some() || flags.mse.is_some() || flags.sweep.is_some();
        let fidelity = if flag_fidelity {
            fidelity_from(flags.psnr, flags.mse, flags.sweep.as_deref())?
        } else {
            fidelity_from(file.psnr, file.mse, file.sweep.as_deref())?
        };

        let beta = flags.beta.or(file.beta).map(Granularity::new).transpose()?;
        let swing_grid = match flags.swing_grid.as_ref().or(file.swing_grid.as_ref()) {
            Some(s) => s.parse()?,
            None => DEFAULT_SWING_GRID,
        };
        let swings = flags
            .swings
            .clone()
            .or_else(|| file.swings.clone())
            .map(SwingVector::new)
            .transpose()?;
        if let (Some(s), Some(b)) = (&swings, bits) {
            if s.len() != b as usize {
                return Err(CliError::Config(format!("{} swings given for a {b}-bit word", s.len())));
            }
        }
        let samples = flags.samples.or(file.samples).unwrap_or(DEFAULT_SAMPLES);
        if samples == 0 {
            return Err(CliError::Config("sample count must be at least 1".into()));
        }
        Ok(RunConfig {
            criteria,
            schemes,
            format,
            explicit_bits: bits.is_some(),
            noise,
            fidelity,
            beta,
            swing_grid,
            swings,
            corpus: flags.corpus.clone().or_else(|| file.corpus.clone()),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            samples,
            output: flags.format.or(file.format).unwrap_or(OutputFormat::Json),
            out: flags.out.clone().or_else(|| file.out.clone()),
        })
    }

    /// The fidelity points to evaluate, falling back to the default PSNR grid.
    pub fn targets_or_default(&self) -> Vec<Target> {
        match &self.fidelity {
            Fidelity::Unset => DEFAULT_SWEEP.points().into_iter().map(Target::Psnr).collect(),
            Fidelity::Point(t) => vec![*t],
            Fidelity::Sweep(r) => r.points().into_iter().map(Target::Psnr).collect(),
        }
    }

    /// Criteria to run, or `default` when none were named.
    pub fn criteria_or(&self, default: &[Criterion]) -> Vec<Criterion> {
        if self.criteria.is_empty() {
            default.to_vec()
        } else {
            self.criteria.clone()
        }
    }
}

fn fidelity_from(psnr: Option<f64>, mse: Option<f64>, sweep: Option<&str>) -> Result<Fidelity> {
    match (psnr, mse, sweep) {
        (None, None, None) => Ok(Fidelity::Unset),
        (Some(db), None, None) => Ok(Fidelity::Point(Target::Psnr(db))),
        (None, Some(v), None) => Ok(Fidelity::Point(Target::Mse(v))),
        (None, None, Some(r)) => Ok(Fidelity::Sweep(r.parse()?)),
        _ => Err(CliError::Config("give exactly one of --psnr, --mse and --sweep".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_parsing() {
        let r: Range = "20:40:0.5".parse().unwrap();
        let pts = r.points();
        assert_eq!(pts.len(), 41);
        assert_eq!(pts[0], 20.0);
        assert_eq!(pts[40], 40.0);
        assert_eq!(
            "20:40:4".parse::<Range>().unwrap().points(),
            vec![20.0, 24.0, 28.0, 32.0, 36.0, 40.0]
        );
        assert_eq!("0.1:0.3:0.1".parse::<Range>().unwrap().points().len(), 3);
        assert!("20:40".parse::<Range>().is_err());
        assert!("20:40:0".parse::<Range>().is_err());
        assert!("40:20:1".parse::<Range>().is_err());
        assert!("a:b:c".parse::<Range>().is_err());
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let file: FileConfig =
            serde_json::from_str(r#"{"bits": 16, "sigma": 2.0, "criterion": "min-edp", "psnr": 25}"#).unwrap();
        let flags = Flags {
            sigma: Some(0.5),
            ..Flags::default()
        };
        let cfg = RunConfig::resolve(&flags, &file).unwrap();
        assert_eq!(cfg.format.bits(), 16);
        assert_eq!(cfg.noise.sigma(), 0.5);
        assert_eq!(cfg.criteria, vec![Criterion::MinEdp]);
        assert_eq!(cfg.fidelity, Fidelity::Point(Target::Psnr(25.0)));

        let defaults = RunConfig::resolve(&Flags::default(), &FileConfig::default()).unwrap();
        assert_eq!(defaults.format.bits(), 8);
        assert_eq!(defaults.noise, NoiseModel::gaussian(1.0).unwrap());
        assert_eq!(defaults.targets_or_default().len(), 41);
        assert_eq!(defaults.output, OutputFormat::Json);
    }

    #[test]
    fn fidelity_flags_replace_the_file_group() {
        let file: FileConfig = serde_json::from_str(r#"{"psnr": 25}"#).unwrap();
        let flags = Flags {
            mse: Some(1.0),
            ..Flags::default()
        };
        let cfg = RunConfig::resolve(&flags, &file).unwrap();
        assert_eq!(cfg.fidelity, Fidelity::Point(Target::Mse(1.0)));
    }

    #[test]
    fn conflicting_fidelity_is_rejected() {
        let flags = Flags {
            psnr: Some(30.0),
            mse: Some(1.0),
            ..Flags::default()
        };
        assert!(RunConfig::resolve(&flags, &FileConfig::default()).is_err());
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        assert!(serde_json::from_str::<FileConfig>(r#"{"bitz": 8}"#).is_err());
    }
}
