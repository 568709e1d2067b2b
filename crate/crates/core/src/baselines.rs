//! Baseline schemes: LSB dropping with uniform swings, and selective ECC
//! where Hamming parity overwrites the LSBs of the word.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::metrics::{weight, WordFormat};
use crate::noise::NoiseModel;

/// Systematic Hamming code: data bits occupy codeword positions `0..k` and
/// parity bits positions `k..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HammingCode {
    n: usize,
    k: usize,
    /// Column `j` of the parity-check matrix as an `(n - k)`-bit integer.
    columns: Vec<u32>,
    /// For each syndrome, the codeword position it points at.
    position_of: Vec<Option<usize>>,
    /// For each error pattern, the data bits left wrong after decoding.
    residual: Arc<Vec<u32>>,
}

impl HammingCode {
    /// Hamming (7, 4).
    pub fn h7_4() -> Self {
        Self::with_parity_bits(3)
    }

    /// Hamming (15, 11).
    pub fn h15_11() -> Self {
        Self::with_parity_bits(4)
    }

    fn with_parity_bits(m: usize) -> Self {
        let n = (1 << m) - 1;
        let k = n - m;
        // Data columns: the nonzero syndromes of weight >= 2 in increasing
        // order; parity columns: the unit vectors.
        let mut columns: Vec<u32> = (1..=n as u32).filter(|c| c.count_ones() >= 2).collect();
        columns.extend((0..m).map(|i| 1u32 << i));
        let mut position_of = vec![None; 1 << m];
        for (j, &c) in columns.iter().enumerate() {
            position_of[c as usize] = Some(j);
        }
        let mut code = Self {
            n,
            k,
            columns,
            position_of,
            residual: Arc::new(Vec::new()),
        };
        let data_mask = (1u32 << k) - 1;
        let residual = (0..1u32 << n).map(|e| code.correct(e) & data_mask).collect();
        code.residual = Arc::new(residual);
        code
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Parity-check matrix `H = [A | I]`, `(n - k)` rows by `n` columns.
    pub fn parity_check_matrix(&self) -> Vec<Vec<u8>> {
        (0..self.n - self.k)
            .map(|row| self.columns.iter().map(|c| ((c >> row) & 1) as u8).collect())
            .collect()
    }

    fn syndrome(&self, word: u32) -> u32 {
        let mut s = 0;
        for (j, &c) in self.columns.iter().enumerate() {
            if (word >> j) & 1 == 1 {
                s ^= c;
            }
        }
        s
    }

    /// Applies single-error correction to a received codeword.
    fn correct(&self, word: u32) -> u32 {
        match self.position_of[self.syndrome(word) as usize] {
            Some(j) => word ^ (1 << j),
            None => word,
        }
    }

    /// Encodes the low `k` bits of `data` into an `n`-bit codeword.
    pub fn encode_word(&self, data: u32) -> u32 {
        let data = data & ((1 << self.k) - 1);
        // Parity bits make the syndrome vanish.
        let s = self.syndrome(data);
        data | (s << self.k)
    }

    /// Decodes the low `n` bits of `received`, correcting one error.
    pub fn decode_word(&self, received: u32) -> u32 {
        let received = received & ((1 << self.n) - 1);
        self.correct(received) & ((1 << self.k) - 1)
    }

    pub fn encode(&self, data: &[u8]) -> Result<Vec<u8>> {
        let word = pack(data, self.k)?;
        Ok(unpack(self.encode_word(word), self.n))
    }

    pub fn decode(&self, received: &[u8]) -> Result<Vec<u8>> {
        let word = pack(received, self.n)?;
        Ok(unpack(self.decode_word(word), self.k))
    }

    /// Per-data-bit error probability after decoding, when every codeword
    /// bit flips independently with probability `p`. Exact, by enumerating
    /// all `2^n` error patterns. Results are memoized per `(n, p)`.
    pub fn post_decoding_error_rates(&self, p: f64) -> Result<Arc<Vec<f64>>> {
        if !(0.0..=1.0).contains(&p) {
            return Err(domain(format!("bit error probability must lie in [0, 1], got {p}")));
        }
        let key = (self.n, p.to_bits());
        if let Some(hit) = rate_cache().read().ok().and_then(|c| c.get(&key).cloned()) {
            return Ok(hit);
        }
        let rates = Arc::new(self.enumerate_rates(p));
        if let Ok(mut cache) = rate_cache().write() {
            cache.entry(key).or_insert_with(|| rates.clone());
        }
        Ok(rates)
    }

    fn enumerate_rates(&self, p: f64) -> Vec<f64> {
        // p^w (1 - p)^(n - w) for each weight w.
        let probs: Vec<f64> = (0..=self.n)
            .map(|w| p.powi(w as i32) * (1.0 - p).powi((self.n - w) as i32))
            .collect();
        let mut rates = vec![0.0; self.k];
        for (e, &wrong) in self.residual.iter().enumerate() {
            if wrong == 0 {
                continue;
            }
            let pr = probs[(e as u32).count_ones() as usize];
            for (j, r) in rates.iter_mut().enumerate() {
                if (wrong >> j) & 1 == 1 {
                    *r += pr;
                }
            }
        }
        rates
    }
}

type RateCache = RwLock<HashMap<(usize, u64), Arc<Vec<f64>>>>;

fn rate_cache() -> &'static RateCache {
    static CACHE: OnceLock<RateCache> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

fn pack(bits: &[u8], len: usize) -> Result<u32> {
    if bits.len() != len {
        return Err(Error::DimensionMismatch {
            expected: len,
            found: bits.len(),
        });
    }
    let mut word = 0;
    for (i, &b) in bits.iter().enumerate() {
        match b {
            0 => {}
            1 => word |= 1 << i,
            other => return Err(domain(format!("bit values must be 0 or 1, got {other}"))),
        }
    }
    Ok(word)
}

fn unpack(word: u32, len: usize) -> Vec<u8> {
    (0..len).map(|i| ((word >> i) & 1) as u8).collect()
}

/// MSE of LSB dropping: the `L` low bits carry no information (`p = 1/2`),
/// the rest are read with a common swing.
pub fn lsb_dropping_mse(format: WordFormat, dropped: usize, swing: f64, noise: &NoiseModel) -> Result<f64> {
    check_drop(format, dropped, swing)?;
    let p = noise.tail(swing);
    Ok((0..format.len())
        .map(|b| weight(b) * if b < dropped { 0.5 } else { p })
        .sum())
}

/// Read energy of LSB dropping: only the `B - L` kept bits are read.
pub fn lsb_dropping_energy(format: WordFormat, dropped: usize, swing: f64) -> Result<f64> {
    check_drop(format, dropped, swing)?;
    Ok((format.len() - dropped) as f64 * swing)
}

/// PSNR ceiling of LSB dropping, `10 log10((2^B - 1)^2 6 / (4^L - 1))`.
pub fn lsb_dropping_psnr_ceiling(format: WordFormat, dropped: usize) -> Result<f64> {
    check_drop(format, dropped, 0.0)?;
    if dropped == 0 {
        return Ok(f64::INFINITY);
    }
    let floor: f64 = (0..dropped).map(|b| 0.5 * weight(b)).sum();
    crate::metrics::psnr_from_mse(floor, format.bits())
}

fn check_drop(format: WordFormat, dropped: usize, swing: f64) -> Result<()> {
    if dropped >= format.len() {
        return Err(domain(format!("cannot drop {dropped} of {} bits", format.len())));
    }
    if !(swing.is_finite() && swing >= 0.0) {
        return Err(domain(format!("swing must be finite and nonnegative, got {swing}")));
    }
    Ok(())
}

/// Role of each bit position within one word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordLayout {
    /// Data bits covered by the code.
    pub protected: Vec<usize>,
    /// Positions overwritten by parity; their data is lost.
    pub parity: Vec<usize>,
    /// Data bits stored without protection.
    pub stored: Vec<usize>,
    /// Data bits neither stored nor read.
    #[serde(default)]
    pub discarded: Vec<usize>,
}

/// Placement of one Hamming codeword across `W` words of `B` bits.
///
/// The code's data bits are taken from the `protected` sets in word order,
/// and its parity bits from the `parity` sets in word order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectiveEccLayout {
    pub bits: u32,
    pub words: Vec<WordLayout>,
}

impl SelectiveEccLayout {
    /// Hamming (7, 4) in one word: the four MSBs protected, parity in bits
    /// 0..3, the remaining bits stored (or discarded when
    /// `discard_unprotected` is set).
    pub fn secc_7_4(bits: u32, discard_unprotected: bool) -> Result<Self> {
        Self::single_word(bits, 4, 3, discard_unprotected)
    }

    /// Hamming (15, 11) in one word of at least 15 bits.
    pub fn secc_15_11(bits: u32, discard_unprotected: bool) -> Result<Self> {
        Self::single_word(bits, 11, 4, discard_unprotected)
    }

    fn single_word(bits: u32, k: usize, parity: usize, discard: bool) -> Result<Self> {
        let format = WordFormat::new(bits)?;
        let b = format.len();
        if b < k + parity {
            return Err(Error::InvalidLayout(format!(
                "a ({}, {k}) codeword does not fit in {b} bits",
                k + parity
            )));
        }
        let middle: Vec<usize> = (parity..b - k).collect();
        let (stored, discarded) = if discard {
            (Vec::new(), middle)
        } else {
            (middle, Vec::new())
        };
        Ok(Self {
            bits,
            words: vec![WordLayout {
                protected: (b - k..b).rev().collect(),
                parity: (0..parity).collect(),
                stored,
                discarded,
            }],
        })
    }

    /// Hamming (15, 11) spread over four 8-bit words: each word gives its
    /// bit 0 to parity, and the 11 protected bits are the most significant
    /// ones taken round-robin (bit 7 of every word, bit 6 of every word,
    /// then bit 5 of words 0..3).
    pub fn secc_15_11_four_words() -> Self {
        let mut words: Vec<WordLayout> = (0..4)
            .map(|_| WordLayout {
                protected: Vec::new(),
                parity: vec![0],
                stored: Vec::new(),
                discarded: Vec::new(),
            })
            .collect();
        let mut remaining = 11;
        for bit in (1..8).rev() {
            for w in words.iter_mut() {
                if remaining > 0 {
                    w.protected.push(bit);
                    remaining -= 1;
                } else {
                    w.stored.push(bit);
                }
            }
        }
        Self { bits: 8, words }
    }

    pub fn format(&self) -> Result<WordFormat> {
        WordFormat::new(self.bits)
    }

    /// Checks that every word's sets partition `0..B` and that the totals
    /// match the code.
    pub fn validate(&self, code: &HammingCode) -> Result<()> {
        let b = self.format()?.len();
        if self.words.is_empty() {
            return Err(Error::InvalidLayout("layout has no words".into()));
        }
        let mut data = 0;
        let mut parity = 0;
        for (w, word) in self.words.iter().enumerate() {
            let mut seen = vec![false; b];
            for &pos in word
                .protected
                .iter()
                .chain(&word.parity)
                .chain(&word.stored)
                .chain(&word.discarded)
            {
                if pos >= b {
                    return Err(Error::InvalidLayout(format!("word {w}: bit {pos} out of range")));
                }
                if std::mem::replace(&mut seen[pos], true) {
                    return Err(Error::InvalidLayout(format!("word {w}: bit {pos} assigned twice")));
                }
            }
            if let Some(pos) = seen.iter().position(|s| !s) {
                return Err(Error::InvalidLayout(format!("word {w}: bit {pos} unassigned")));
            }
            data += word.protected.len();
            parity += word.parity.len();
        }
        if data != code.k() || parity != code.n() - code.k() {
            return Err(Error::InvalidLayout(format!(
                "layout has {data} data and {parity} parity bits, code ({}, {}) needs {} and {}",
                code.n(),
                code.k(),
                code.k(),
                code.n() - code.k()
            )));
        }
        Ok(())
    }

    /// Average number of positions read per word.
    fn read_positions(&self) -> f64 {
        let b = self.bits as f64;
        let skipped: usize = self.words.iter().map(|w| w.discarded.len()).sum();
        b - skipped as f64 / self.words.len() as f64
    }
}

/// Per-word MSE of selective ECC with a uniform swing on every read
/// position. Parity and discarded positions cost `4^b / 2`, stored bits
/// `4^b p` and protected bits `4^b p_post`.
pub fn selective_ecc_mse(
    layout: &SelectiveEccLayout,
    code: &HammingCode,
    swing: f64,
    noise: &NoiseModel,
) -> Result<f64> {
    layout.validate(code)?;
    if !(swing.is_finite() && swing >= 0.0) {
        return Err(domain(format!("swing must be finite and nonnegative, got {swing}")));
    }
    let p = noise.tail(swing);
    let post = code.post_decoding_error_rates(p)?;
    let mut data_index = 0;
    let mut total = 0.0;
    for word in &layout.words {
        for &b in word.parity.iter().chain(&word.discarded) {
            total += 0.5 * weight(b);
        }
        for &b in &word.stored {
            total += p * weight(b);
        }
        for &b in &word.protected {
            total += post[data_index] * weight(b);
            data_index += 1;
        }
    }
    Ok(total / layout.words.len() as f64)
}

/// Per-word read energy of selective ECC: every read position gets `swing`.
pub fn selective_ecc_energy(layout: &SelectiveEccLayout, swing: f64) -> f64 {
    layout.read_positions() * swing
}
