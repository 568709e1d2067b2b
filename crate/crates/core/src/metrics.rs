//! Word format, swing vectors and the analytic resource/fidelity metrics.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::noise::NoiseModel;

pub const MAX_BITS: u32 = 64;

/// A `B`-bit unsigned word. Bit `b` carries importance weight `4^b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WordFormat {
    bits: u32,
}

impl WordFormat {
    pub fn new(bits: u32) -> Result<Self> {
        if !(1..=MAX_BITS).contains(&bits) {
            return Err(Error::InvalidBitWidth(bits));
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.bits as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `4^b`. Powers of two, so exact in `f64` for every `b < 64`.
    pub fn weight(&self, b: usize) -> f64 {
        weight(b)
    }

    /// `4^b` as an integer, available while it fits (`b <= 31`).
    pub fn weight_exact(&self, b: usize) -> Option<u64> {
        (b <= 31).then(|| 1u64 << (2 * b))
    }

    /// `sum_b 4^b = (4^B - 1) / 3`.
    pub fn total_weight(&self) -> f64 {
        (0..self.len()).map(weight).sum()
    }

    /// MSE of the all-zero swing vector, `(4^B - 1) / 6`.
    pub fn zero_swing_mse(&self) -> f64 {
        0.5 * self.total_weight()
    }

    /// Largest word value `2^B - 1`.
    pub fn peak(&self) -> f64 {
        2f64.powi(self.bits as i32) - 1.0
    }

    /// Mask of the `B` low bits.
    pub fn mask(&self) -> u64 {
        if self.bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.bits) - 1
        }
    }
}

pub(crate) fn weight(b: usize) -> f64 {
    2f64.powi(2 * b as i32)
}

/// Per-bit swings `(Delta_0, ..., Delta_{B-1})`, LSB first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SwingVector(Vec<f64>);

impl SwingVector {
    pub fn new(swings: Vec<f64>) -> Result<Self> {
        if swings.is_empty() || swings.len() > MAX_BITS as usize {
            return Err(Error::InvalidBitWidth(swings.len() as u32));
        }
        if let Some(bad) = swings.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(domain(format!("swings must be finite and nonnegative, got {bad}")));
        }
        Ok(Self(swings))
    }

    pub fn zeros(format: WordFormat) -> Self {
        Self(vec![0.0; format.len()])
    }

    pub fn uniform(format: WordFormat, swing: f64) -> Result<Self> {
        Self::new(vec![swing; format.len()])
    }

    pub(crate) fn from_vec_unchecked(swings: Vec<f64>) -> Self {
        debug_assert!(swings.iter().all(|d| *d >= 0.0));
        Self(swings)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn format(&self) -> WordFormat {
        WordFormat {
            bits: self.0.len() as u32,
        }
    }

    pub fn check_format(&self, format: WordFormat) -> Result<()> {
        if self.len() != format.len() {
            return Err(Error::DimensionMismatch {
                expected: format.len(),
                found: self.len(),
            });
        }
        Ok(())
    }

    /// Read energy `E = sum_b Delta_b`.
    pub fn energy(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Maximum swing `rho`, which sets the access delay.
    pub fn max_swing(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn edp(&self) -> f64 {
        self.energy() * self.max_swing()
    }

    /// Peak-to-average swing ratio `rho / (E / B)`.
    pub fn pasr(&self) -> Result<f64> {
        let e = self.energy();
        if e <= 0.0 {
            return Err(domain("PASR is undefined for an all-zero swing vector"));
        }
        Ok(self.max_swing() * self.len() as f64 / e)
    }

    /// Sum of per-bit error probabilities.
    pub fn overall_ber(&self, noise: &NoiseModel) -> f64 {
        self.0.iter().map(|&d| noise.tail(d)).sum()
    }

    /// Per-bit error probabilities `p_b`.
    pub fn error_probs(&self, noise: &NoiseModel) -> Vec<f64> {
        self.0.iter().map(|&d| noise.tail(d)).collect()
    }
}

impl TryFrom<Vec<f64>> for SwingVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SwingVector> for Vec<f64> {
    fn from(v: SwingVector) -> Self {
        v.0
    }
}

impl std::ops::Index<usize> for SwingVector {
    type Output = f64;

    fn index(&self, b: usize) -> &f64 {
        &self.0[b]
    }
}

/// MSE budget `V` on the retrieved word.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelitySpec {
    mse_budget: f64,
}

impl FidelitySpec {
    pub fn from_mse(mse_budget: f64) -> Result<Self> {
        if !(mse_budget.is_finite() && mse_budget >= 0.0) {
            return Err(domain(format!(
                "MSE budget must be finite and nonnegative, got {mse_budget}"
            )));
        }
        Ok(Self { mse_budget })
    }

    pub fn from_psnr(psnr_db: f64, format: WordFormat) -> Result<Self> {
        Self::from_mse(mse_from_psnr(psnr_db, format.bits())?)
    }

    pub fn mse_budget(&self) -> f64 {
        self.mse_budget
    }

    pub fn psnr(&self, format: WordFormat) -> Result<f64> {
        psnr_from_mse(self.mse_budget, format.bits())
    }

    /// `V` at or above the zero-swing MSE: `Delta = 0` already meets the budget.
    pub fn is_saturated(&self, format: WordFormat) -> bool {
        self.mse_budget >= format.zero_swing_mse()
    }
}

/// Empirical bit statistics of a non-uniform source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceStats {
    /// `Pr(x_b = 1)`.
    marginals: Vec<f64>,
    /// Symmetric `B x B` matrix, row-major, `phi(b, b') = Pr(x_b = x_b') - Pr(x_b != x_b')`.
    agreement: Vec<f64>,
}

impl SourceStats {
    pub fn new(marginals: Vec<f64>, agreement: Vec<Vec<f64>>) -> Result<Self> {
        let n = marginals.len();
        if n == 0 || n > MAX_BITS as usize {
            return Err(Error::InvalidBitWidth(n as u32));
        }
        if agreement.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: agreement.len(),
            });
        }
        let mut flat = Vec::with_capacity(n * n);
        for row in &agreement {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        if marginals.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(domain("bit marginals must lie in [0, 1]"));
        }
        for b in 0..n {
            for c in 0..n {
                let phi = flat[b * n + c];
                if !(-1.0..=1.0).contains(&phi) {
                    return Err(domain(format!("agreement phi({b},{c}) = {phi} outside [-1, 1]")));
                }
                if (phi - flat[c * n + b]).abs() > 1e-12 {
                    return Err(domain("agreement matrix must be symmetric"));
                }
            }
        }
        Ok(Self {
            marginals,
            agreement: flat,
        })
    }

    /// Uniform source: `Pr(x_b = 1) = 1/2`, `phi = 0` off the diagonal.
    pub fn uniform(format: WordFormat) -> Self {
        let n = format.len();
        let mut agreement = vec![0.0; n * n];
        for b in 0..n {
            agreement[b * n + b] = 1.0;
        }
        Self {
            marginals: vec![0.5; n],
            agreement,
        }
    }

    /// Statistics of a finite sample of `B`-bit words.
    pub fn from_words(words: &[u64], format: WordFormat) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::Corpus("no words to extract statistics from".into()));
        }
        let n = format.len();
        let mut ones = vec![0u64; n];
        let mut agree = vec![0u64; n * n];
        for &w in words {
            for b in 0..n {
                let xb = (w >> b) & 1;
                ones[b] += xb;
                for c in 0..b {
                    if xb == (w >> c) & 1 {
                        agree[b * n + c] += 1;
                    }
                }
            }
        }
        let total = words.len() as f64;
        let marginals = ones.iter().map(|&k| k as f64 / total).collect();
        let mut agreement = vec![0.0; n * n];
        for b in 0..n {
            agreement[b * n + b] = 1.0;
            for c in 0..b {
                let phi = (2.0 * agree[b * n + c] as f64 / total - 1.0).clamp(-1.0, 1.0);
                agreement[b * n + c] = phi;
                agreement[c * n + b] = phi;
            }
        }
        Ok(Self { marginals, agreement })
    }

    pub fn bits(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginal(&self, b: usize) -> f64 {
        self.marginals[b]
    }

    pub fn marginals(&self) -> &[f64] {
        &self.marginals
    }

    pub fn agreement(&self, b: usize, c: usize) -> f64 {
        self.agreement[b * self.bits() + c]
    }
}

/// MSE of a uniformly distributed word: `sum_b 4^b p_b`.
pub fn mse_uniform(swings: &SwingVector, noise: &NoiseModel) -> f64 {
    mse_from_probs(&swings.error_probs(noise))
}

pub(crate) fn mse_from_probs(p: &[f64]) -> f64 {
    p.iter().enumerate().map(|(b, &pb)| weight(b) * pb).sum()
}

/// MSE of a non-uniform source,
/// `sum_b 4^b p_b + 2 sum_{b > b'} 2^{b+b'} p_b p_b' phi(b, b')`.
pub fn mse_nonuniform(swings: &SwingVector, noise: &NoiseModel, stats: &SourceStats) -> Result<f64> {
    if stats.bits() != swings.len() {
        return Err(Error::DimensionMismatch {
            expected: swings.len(),
            found: stats.bits(),
        });
    }
    let p = swings.error_probs(noise);
    let mut cross = 0.0;
    for b in 1..p.len() {
        for c in 0..b {
            cross += 2f64.powi((b + c) as i32) * p[b] * p[c] * stats.agreement(b, c);
        }
    }
    Ok(mse_from_probs(&p) + 2.0 * cross)
}

/// Upper bound on `|mse_nonuniform - mse_uniform| / mse_uniform` that holds
/// when `p_0` is the largest bit error probability:
/// `sum_b 2^{b+1} (2^b - 1) p_0 p_b / sum_b 4^b p_b`.
pub fn source_deviation_bound(swings: &SwingVector, noise: &NoiseModel) -> f64 {
    let p = swings.error_probs(noise);
    let num: f64 = (0..p.len())
        .map(|b| {
            let two_b = 2f64.powi(b as i32);
            2.0 * two_b * (two_b - 1.0) * p[0] * p[b]
        })
        .sum();
    num / mse_from_probs(&p)
}

/// `PSNR = 10 log10((2^B - 1)^2 / MSE)`.
pub fn psnr_from_mse(mse: f64, bits: u32) -> Result<f64> {
    let format = WordFormat::new(bits)?;
    if !(mse > 0.0) {
        return Err(domain(format!("PSNR needs a positive MSE, got {mse}")));
    }
    let peak = format.peak();
    Ok(10.0 * (peak * peak / mse).log10())
}

pub fn mse_from_psnr(psnr_db: f64, bits: u32) -> Result<f64> {
    let format = WordFormat::new(bits)?;
    if !psnr_db.is_finite() {
        return Err(domain(format!("PSNR must be finite, got {psnr_db}")));
    }
    let peak = format.peak();
    Ok(peak * peak / 10f64.powf(psnr_db / 10.0))
}
