//! Monte-Carlo read channel.
//!
//! Every bit of a stored word flips independently with its swing's error
//! probability. Randomness comes from ChaCha8: the seed keys the generator
//! and each chunk of [`CHUNK`] samples reads its own stream, so results do
//! not depend on the number of worker threads. Chunk statistics are merged
//! in chunk order.

use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::HammingCode;
use crate::error::{domain, Error, Result};
use crate::metrics::{SourceStats, SwingVector, WordFormat};
use crate::noise::NoiseModel;

/// Samples per RNG stream.
pub const CHUNK: u64 = 1 << 16;

/// Where simulated words come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimSource {
    /// Independent uniform `B`-bit words.
    Uniform,
    /// Words drawn uniformly from a PGM (P5) or raw byte file.
    Corpus(PathBuf),
    /// Words drawn uniformly from an in-memory sample.
    Words(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub samples: u64,
    pub seed: u64,
    pub source: SimSource,
}

impl SimConfig {
    pub fn uniform(samples: u64, seed: u64) -> Self {
        Self {
            samples,
            seed,
            source: SimSource::Uniform,
        }
    }
}

/// Sample mean with its standard error. `std_error` is `None` for a single
/// sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseEstimate {
    pub mean: f64,
    pub std_error: Option<f64>,
    pub samples: u64,
}

impl MseEstimate {
    pub fn psnr(&self, format: WordFormat) -> Result<f64> {
        crate::metrics::psnr_from_mse(self.mean, format.bits())
    }

    /// `|mean - reference| <= k * std_error`. False when the error is unknown.
    pub fn within(&self, reference: f64, k: f64) -> bool {
        self.std_error.is_some_and(|se| (self.mean - reference).abs() <= k * se)
    }
}

/// Running mean and sum of squared deviations, merged with Chan's update.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        Moments {
            n,
            mean: self.mean + d * w,
            m2: self.m2 + other.m2 + d * d * self.n as f64 * w,
        }
    }

    fn estimate(&self) -> MseEstimate {
        let std_error = (self.n > 1).then(|| {
            let var = self.m2 / (self.n - 1) as f64;
            (var / self.n as f64).sqrt()
        });
        MseEstimate {
            mean: self.mean,
            std_error,
            samples: self.n,
        }
    }
}

/// Per-bit flip thresholds for a fixed swing vector.
#[derive(Debug, Clone)]
pub struct ReadChannel {
    format: WordFormat,
    /// A bit flips when a uniform `u64` falls below its threshold.
    thresholds: Vec<u64>,
}

impl ReadChannel {
    pub fn new(swings: &SwingVector, noise: &NoiseModel) -> Self {
        let thresholds = swings
            .as_slice()
            .iter()
            .map(|&d| probability_threshold(noise.tail(d)))
            .collect();
        Self {
            format: swings.format(),
            thresholds,
        }
    }

    pub fn format(&self) -> WordFormat {
        self.format
    }

    /// Draws an error pattern, bit `b` set when bit `b` flips.
    pub fn error_pattern(&self, rng: &mut impl RngCore) -> u64 {
        let mut eps = 0;
        for (b, &t) in self.thresholds.iter().enumerate() {
            if rng.next_u64() < t {
                eps |= 1 << b;
            }
        }
        eps
    }

    /// Reads `word` through the channel.
    pub fn read(&self, word: u64, rng: &mut impl RngCore) -> Result<u64> {
        check_word(word, self.format)?;
        Ok(word ^ self.error_pattern(rng))
    }
}

/// `p 2^64` rounded down, saturating at `u64::MAX` for `p = 1`.
fn probability_threshold(p: f64) -> u64 {
    if p >= 1.0 {
        u64::MAX
    } else {
        // 2^64 * p is exact in f64 for p = k / 2^m; the cast saturates.
        (p * 18_446_744_073_709_551_616.0) as u64
    }
}

fn check_word(word: u64, format: WordFormat) -> Result<()> {
    if word & !format.mask() != 0 {
        return Err(domain(format!("word {word} does not fit in {} bits", format.bits())));
    }
    Ok(())
}

/// Reads one word through a channel with swings `swings`.
pub fn simulate_read(word: u64, swings: &SwingVector, noise: &NoiseModel, rng: &mut impl RngCore) -> Result<u64> {
    ReadChannel::new(swings, noise).read(word, rng)
}

/// XORs a given error pattern into `word`. `pattern[b]` is the flip of bit `b`.
pub fn apply_error_pattern(word: u64, pattern: &[u8], format: WordFormat) -> Result<u64> {
    check_word(word, format)?;
    if pattern.len() != format.len() {
        return Err(Error::DimensionMismatch {
            expected: format.len(),
            found: pattern.len(),
        });
    }
    let mut eps = 0u64;
    for (b, &e) in pattern.iter().enumerate() {
        match e {
            0 => {}
            1 => eps |= 1 << b,
            other => return Err(domain(format!("pattern entries must be 0 or 1, got {other}"))),
        }
    }
    Ok(word ^ eps)
}

/// Decimal error `x_hat - x`.
pub fn decimal_error(word: u64, read: u64) -> i128 {
    read as i128 - word as i128
}

fn squared_error(word: u64, read: u64) -> f64 {
    let e = decimal_error(word, read) as f64;
    e * e
}

fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Runs `per_sample` over `samples` draws split into fixed chunks, in
/// parallel, and merges chunk moments in chunk order.
fn chunked_moments<F>(samples: u64, seed: u64, per_sample: F) -> Moments
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let len = CHUNK.min(samples - c * CHUNK);
            let mut m = Moments::default();
            for _ in 0..len {
                m.push(per_sample(&mut rng));
            }
            m
        })
        .collect();
    parts.into_iter().fold(Moments::default(), Moments::merge)
}

/// Empirical `E[(x_hat - x)^2]` over `config.samples` reads.
pub fn monte_carlo_mse(swings: &SwingVector, noise: &NoiseModel, config: &SimConfig) -> Result<MseEstimate> {
    if config.samples == 0 {
        return Err(domain("sample count must be at least 1"));
    }
    let channel = ReadChannel::new(swings, noise);
    let format = channel.format();
    let corpus;
    let words: Option<&[u64]> = match &config.source {
        SimSource::Uniform => None,
        SimSource::Corpus(path) => {
            corpus = words_from_bytes(&read_corpus(path)?, format)?;
            Some(&corpus)
        }
        SimSource::Words(w) => {
            if w.is_empty() {
                return Err(Error::Corpus("no words to sample from".into()));
            }
            for &x in w {
                check_word(x, format)?;
            }
            Some(w)
        }
    };
    let mask = format.mask();
    let moments = chunked_moments(config.samples, config.seed, |rng| {
        let x = match words {
            None => rng.next_u64() & mask,
            Some(w) => w[rng.gen_range(0..w.len())],
        };
        let eps = channel.error_pattern(rng);
        squared_error(x, x ^ eps)
    });
    Ok(moments.estimate())
}

/// Post-decoding per-data-bit error rates of `code` with raw flip
/// probability `p`, by encoding random data, flipping and decoding.
pub fn monte_carlo_post_decoding(code: &HammingCode, p: f64, trials: u64, seed: u64) -> Result<Vec<MseEstimate>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(domain(format!("bit error probability must lie in [0, 1], got {p}")));
    }
    if trials == 0 {
        return Err(domain("trial count must be at least 1"));
    }
    let threshold = probability_threshold(p);
    let (n, k) = (code.n(), code.k());
    (0..k)
        .map(|j| {
            // One pass per data bit keeps the moments scalar; the shared seed
            // makes the passes see the same codewords and errors.
            let m = chunked_moments(trials, seed, |rng| {
                let data = (rng.next_u64() as u32) & ((1 << k) - 1);
                let mut rx = code.encode_word(data);
                for i in 0..n {
                    if rng.next_u64() < threshold {
                        rx ^= 1 << i;
                    }
                }
                let wrong = (code.decode_word(rx) ^ data) >> j & 1;
                wrong as f64
            });
            Ok(m.estimate())
        })
        .collect()
}

/// Reads a corpus file: binary PGM (P5) pixel data, or the raw bytes of any
/// other file.
pub fn read_corpus(path: &Path) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|e| Error::Corpus(format!("cannot read {}: {e}", path.display())))?;
    if bytes.starts_with(b"P5") {
        parse_pgm(&bytes)
    } else {
        Ok(bytes)
    }
}

/// Pixel bytes of a binary PGM. Samples wider than a byte stay big-endian.
pub fn parse_pgm(bytes: &[u8]) -> Result<Vec<u8>> {
    let bad = |msg: &str| Error::Corpus(format!("malformed PGM: {msg}"));
    if !bytes.starts_with(b"P5") {
        return Err(bad("missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad header number"))?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval outside 1..=65535"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("header not terminated"));
    }
    pos += 1;
    let depth = if maxval < 256 { 1 } else { 2 };
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(depth))
        .ok_or_else(|| bad("image too large"))?;
    let data = bytes.get(pos..pos + len).ok_or_else(|| bad("truncated pixel data"))?;
    Ok(data.to_vec())
}

/// Groups corpus bytes into words: one byte per word for `B = 8`, big-endian
/// byte pairs for `B = 16`.
pub fn words_from_bytes(bytes: &[u8], format: WordFormat) -> Result<Vec<u64>> {
    if bytes.is_empty() {
        return Err(Error::Corpus("empty corpus".into()));
    }
    match format.bits() {
        8 => Ok(bytes.iter().map(|&b| b as u64).collect()),
        16 => {
            if bytes.len() % 2 != 0 {
                return Err(Error::Corpus("odd byte count for 16-bit words".into()));
            }
            Ok(bytes
                .chunks_exact(2)
                .map(|p| u16::from_be_bytes([p[0], p[1]]) as u64)
                .collect())
        }
        b => Err(Error::Corpus(format!("corpus words must be 8 or 16 bits, got {b}"))),
    }
}

/// Bit statistics of a corpus byte stream.
pub fn extract_source_stats(bytes: &[u8], format: WordFormat) -> Result<SourceStats> {
    SourceStats::from_words(&words_from_bytes(bytes, format)?, format)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::mse_uniform;

    fn g1() -> NoiseModel {
        NoiseModel::gaussian(1.0).unwrap()
    }

    fn fmt(b: u32) -> WordFormat {
        WordFormat::new(b).unwrap()
    }

    #[test]
    fn forced_patterns_from_the_decimal_error_model() {
        let f = fmt(4);
        let x_hat = apply_error_pattern(9, &[1, 0, 0, 1], f).unwrap();
        assert_eq!(x_hat, 0);
        assert_eq!(decimal_error(9, x_hat), -9);
        let x_hat = apply_error_pattern(6, &[1, 0, 0, 1], f).unwrap();
        assert_eq!(x_hat, 15);
        assert_eq!(decimal_error(6, x_hat), 9);
        assert!(apply_error_pattern(16, &[0; 4], f).is_err());
        assert!(apply_error_pattern(1, &[0; 3], f).is_err());
    }

    #[test]
    fn huge_swings_never_flip() {
        let s = SwingVector::uniform(fmt(8), 40.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for x in 0..256 {
            assert_eq!(simulate_read(x, &s, &g1(), &mut rng).unwrap(), x);
        }
        assert!(simulate_read(256, &s, &g1(), &mut rng).is_err());
    }

    #[test]
    fn thresholds() {
        assert_eq!(probability_threshold(0.5), 1 << 63);
        assert_eq!(probability_threshold(0.0), 0);
        assert_eq!(probability_threshold(1.0), u64::MAX);
    }

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 113) as f64 * 0.37).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let merged = xs.chunks(77).fold(Moments::default(), |acc, c| {
            let mut m = Moments::default();
            c.iter().for_each(|&x| m.push(x));
            acc.merge(m)
        });
        assert_eq!(whole.n, merged.n);
        assert!((whole.mean - merged.mean).abs() < 1e-12);
        assert!((whole.m2 - merged.m2).abs() < 1e-9 * whole.m2);
    }

    #[test]
    fn zero_swing_uniform_source() {
        let s = SwingVector::zeros(fmt(8));
        let est = monte_carlo_mse(&s, &g1(), &SimConfig::uniform(1_000_000, 7)).unwrap();
        assert!(est.within(10922.5, 3.0), "{est:?}");
    }

    #[test]
    fn single_sample_has_no_standard_error() {
        let s = SwingVector::zeros(fmt(8));
        let est = monte_carlo_mse(&s, &g1(), &SimConfig::uniform(1, 7)).unwrap();
        assert_eq!(est.samples, 1);
        assert_eq!(est.std_error, None);
        assert!(!est.within(est.mean, 3.0));
        assert!(monte_carlo_mse(&s, &g1(), &SimConfig::uniform(0, 7)).is_err());
    }

    #[test]
    fn seed_determines_output() {
        let s = SwingVector::new(vec![0.3, 0.9, 1.4, 2.0, 2.2, 2.6, 3.0, 3.1]).unwrap();
        let a = monte_carlo_mse(&s, &g1(), &SimConfig::uniform(200_000, 42)).unwrap();
        let b = monte_carlo_mse(&s, &g1(), &SimConfig::uniform(200_000, 42)).unwrap();
        let c = monte_carlo_mse(&s, &g1(), &SimConfig::uniform(200_000, 43)).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std_error.unwrap().to_bits(), b.std_error.unwrap().to_bits());
        assert_ne!(a.mean.to_bits(), c.mean.to_bits());
        assert!(a.within(mse_uniform(&s, &g1()), 4.0));
    }

    #[test]
    fn flips_are_independent_across_positions() {
        let s = SwingVector::new(vec![0.5, 1.0, 0.8]).unwrap();
        let ch = ReadChannel::new(&s, &g1());
        let p = s.error_probs(&g1());
        let n = 1_000_000u64;
        let mut rng = chunk_rng(99, 0);
        let (mut a, mut b, mut both) = (0u64, 0u64, 0u64);
        for _ in 0..n {
            let e = ch.error_pattern(&mut rng);
            a += e & 1;
            b += (e >> 2) & 1;
            both += e & (e >> 2) & 1;
        }
        let joint = both as f64 / n as f64;
        let want = p[0] * p[2];
        let se = (want * (1.0 - want) / n as f64).sqrt();
        assert!((joint - want).abs() < 3.0 * se, "{joint} vs {want}");
        let (fa, fb) = (a as f64 / n as f64, b as f64 / n as f64);
        assert!((fa * fb - joint).abs() < 3.0 * se);
    }

    #[test]
    fn source_stats_from_bytes() {
        let stats = extract_source_stats(&[0xff; 100], fmt(8)).unwrap();
        for b in 0..8 {
            assert_eq!(stats.marginal(b), 1.0);
            for c in 0..8 {
                assert_eq!(stats.agreement(b, c), 1.0);
            }
        }
        let stats = extract_source_stats(&[0x00, 0xff, 0x00, 0xff], fmt(8)).unwrap();
        assert_eq!(stats.marginal(3), 0.5);
        assert_eq!(stats.agreement(6, 1), 1.0);
        assert!(extract_source_stats(&[], fmt(8)).is_err());
        assert!(extract_source_stats(&[1, 2, 3], fmt(16)).is_err());
        assert!(extract_source_stats(&[1, 2], fmt(12)).is_err());
    }

    #[test]
    fn iid_bytes_have_small_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bytes: Vec<u8> = (0..1_000_000).map(|_| rng.gen()).collect();
        let stats = extract_source_stats(&bytes, fmt(8)).unwrap();
        for b in 0..8 {
            for c in 0..b {
                assert!(stats.agreement(b, c).abs() < 0.01);
            }
        }
    }

    #[test]
    fn sixteen_bit_words_are_big_endian() {
        let w = words_from_bytes(&[0x12, 0x34, 0xab, 0xcd], fmt(16)).unwrap();
        assert_eq!(w, vec![0x1234, 0xabcd]);
    }

    #[test]
    fn pgm_parsing() {
        let mut file = b"P5\n# a comment\n3 2\n255\n".to_vec();
        file.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        assert_eq!(parse_pgm(&file).unwrap(), vec![1, 2, 3, 4, 5, 6]);
        let short = b"P5 3 2 255\n\x01\x02".to_vec();
        assert!(parse_pgm(&short).is_err());
        assert!(parse_pgm(b"P2 1 1 255\n0").is_err());
        let wide = b"P5 1 1 65535\n\x12\x34".to_vec();
        assert_eq!(parse_pgm(&wide).unwrap(), vec![0x12, 0x34]);
    }

    #[test]
    fn missing_corpus_is_an_error() {
        let s = SwingVector::zeros(fmt(8));
        let cfg = SimConfig {
            samples: 10,
            seed: 0,
            source: SimSource::Corpus("/nonexistent/corpus.pgm".into()),
        };
        assert!(matches!(monte_carlo_mse(&s, &g1(), &cfg), Err(Error::Corpus(_))));
    }

    #[test]
    fn hamming_monte_carlo_is_close_to_enumeration() {
        let code = HammingCode::h7_4();
        let exact = code.post_decoding_error_rates(0.1).unwrap();
        let mc = monte_carlo_post_decoding(&code, 0.1, 200_000, 3).unwrap();
        for (e, m) in exact.iter().zip(&mc) {
            assert!(m.within(*e, 4.0), "{m:?} vs {e}");
        }
    }
}
