//! Sequence generation under the geometrically varying success model and
//! exact-run counting.
//!
//! Randomness comes from ChaCha8 keyed by a 64-bit seed. Independent
//! sub-streams share the key and differ in the ChaCha stream id, so parallel
//! workers can be handed `(seed, stream)` pairs and still reproduce a serial
//! run bit-for-bit.

use std::fmt;
use std::str::FromStr;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dist::RunSpec;
use crate::error::{Error, Result};
use crate::qcalculus::ModelParams;

/// A 0/1 trial outcome vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinarySequence {
    bits: Vec<bool>,
}

impl BinarySequence {
    pub fn new(bits: Vec<bool>) -> Self {
        BinarySequence { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit);
    }
}

impl fmt::Display for BinarySequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BinarySequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::domain(format!("invalid trial symbol {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(BinarySequence::new)
    }
}

/// Deterministic ChaCha8 generator identified by `(seed, stream)`.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub const ALGORITHM: &'static str = "ChaCha8";

    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SeededRng {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// One sequence of `n` trials. Trial `j` succeeds with probability
/// `theta * q^z`, `z` being the failures among the earlier trials. Exactly one
/// uniform is drawn per trial.
pub fn generate_sequence(n: usize, params: ModelParams, rng: &mut SeededRng) -> BinarySequence {
    let q = params.q().value();
    let mut success = params.theta();
    let mut bits = Vec::with_capacity(n);
    for _ in 0..n {
        let one = rng.uniform() < success;
        if !one {
            success *= q;
        }
        bits.push(one);
    }
    BinarySequence::new(bits)
}

/// Number of maximal blocks of ones whose length is exactly `k`.
pub fn count_exact_runs(seq: &BinarySequence, k: usize) -> usize {
    let mut count = 0;
    let mut len = 0;
    for &b in seq.bits().iter().chain(std::iter::once(&false)) {
        if b {
            len += 1;
        } else {
            if len == k {
                count += 1;
            }
            len = 0;
        }
    }
    count
}

/// `draws` independent values of `E_{n,k}`, generated one after another from
/// `rng`, so a shorter request yields a prefix of a longer one.
pub fn sample_run_counts(
    draws: usize,
    spec: RunSpec,
    params: ModelParams,
    rng: &mut SeededRng,
) -> Vec<usize> {
    (0..draws)
        .map(|_| count_exact_runs(&generate_sequence(spec.n(), params, rng), spec.k()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::pmf_exact;
    use crate::infer::chi_square_sf;

    fn params(theta: f64, q: f64) -> ModelParams {
        ModelParams::new(theta, q).unwrap()
    }

    fn seq(s: &str) -> BinarySequence {
        s.parse().unwrap()
    }

    #[test]
    fn counting_examples() {
        assert_eq!(count_exact_runs(&seq("111011110111100110"), 2), 1);
        assert_eq!(count_exact_runs(&seq("011111000111"), 3), 1);
        assert_eq!(count_exact_runs(&seq("011111000111"), 2), 0);
        for k in 1..6 {
            assert_eq!(count_exact_runs(&seq(&"1".repeat(k)), k), 1);
        }
        assert_eq!(count_exact_runs(&seq(""), 1), 0);
    }

    #[test]
    fn ascii_round_trip() {
        let s = seq("0110100");
        assert_eq!(s.to_string(), "0110100");
        assert_eq!(s.len(), 7);
        assert!("01a".parse::<BinarySequence>().is_err());
    }

    #[test]
    fn degenerate_theta() {
        let mut rng = SeededRng::new(1);
        assert!(generate_sequence(50, params(1.0, 0.3), &mut rng)
            .bits()
            .iter()
            .all(|&b| b));
        assert!(generate_sequence(50, params(0.0, 0.3), &mut rng)
            .bits()
            .iter()
            .all(|&b| !b));
        let spec = RunSpec::new(4, 4).unwrap();
        assert!(sample_run_counts(100, spec, params(1.0, 0.5), &mut rng)
            .iter()
            .all(|&x| x == 1));
        let spec = RunSpec::new(9, 2).unwrap();
        assert!(sample_run_counts(100, spec, params(0.0, 0.5), &mut rng)
            .iter()
            .all(|&x| x == 0));
    }

    #[test]
    fn first_trial_frequency() {
        let mut rng = SeededRng::new(11);
        let trials = 100_000;
        let ones = (0..trials)
            .filter(|_| generate_sequence(1, params(0.5, 0.9), &mut rng).bits()[0])
            .count();
        let sd = (trials as f64 * 0.25).sqrt();
        assert!((ones as f64 - 0.5 * trials as f64).abs() < 3.0 * sd);
    }

    #[test]
    fn determinism_and_prefix() {
        let spec = RunSpec::new(15, 3).unwrap();
        let p = params(0.6, 0.8);
        let a = sample_run_counts(500, spec, p, &mut SeededRng::substream(42, 7));
        let b = sample_run_counts(500, spec, p, &mut SeededRng::substream(42, 7));
        let c = sample_run_counts(200, spec, p, &mut SeededRng::substream(42, 7));
        let d = sample_run_counts(500, spec, p, &mut SeededRng::substream(42, 8));
        assert_eq!(a, b);
        assert_eq!(&a[..200], &c[..]);
        assert_ne!(a, d);
    }

    #[test]
    fn trailing_zero_does_not_change_count() {
        let mut rng = SeededRng::new(3);
        for _ in 0..500 {
            let mut s = generate_sequence(12, params(0.7, 0.9), &mut rng);
            if s.bits().last() != Some(&false) {
                continue;
            }
            let before = count_exact_runs(&s, 2);
            s.push(false);
            assert_eq!(count_exact_runs(&s, 2), before);
        }
    }

    fn empirical(spec: RunSpec, p: ModelParams, draws: usize, seed: u64) -> Vec<usize> {
        let mut hist = vec![0; spec.support_max() + 1];
        for x in sample_run_counts(draws, spec, p, &mut SeededRng::new(seed)) {
            hist[x] += 1;
        }
        hist
    }

    #[test]
    fn empirical_pmf_is_close() {
        let spec = RunSpec::new(8, 2).unwrap();
        let p = params(0.5, 0.8);
        let draws = 100_000;
        let hist = empirical(spec, p, draws, 5);
        for (x, &c) in hist.iter().enumerate() {
            let diff = (c as f64 / draws as f64 - pmf_exact(spec, p, x)).abs();
            assert!(diff < 4.0 / (draws as f64).sqrt(), "x={x}: {diff}");
        }
    }

    #[test]
    fn goodness_of_fit() {
        let draws = 100_000;
        for (i, &(n, k, theta, q)) in [(8, 2, 0.5, 0.8), (15, 3, 0.7, 0.6), (12, 1, 0.3, 0.95)]
            .iter()
            .enumerate()
        {
            let spec = RunSpec::new(n, k).unwrap();
            let p = params(theta, q);
            let hist = empirical(spec, p, draws, 100 + i as u64);
            // Pool cells with small expected counts into their neighbour.
            let mut pooled: Vec<(f64, f64)> = Vec::new();
            let (mut obs, mut exp) = (0.0, 0.0);
            for (x, &c) in hist.iter().enumerate() {
                obs += c as f64;
                exp += draws as f64 * pmf_exact(spec, p, x);
                if exp >= 5.0 {
                    pooled.push((obs, exp));
                    obs = 0.0;
                    exp = 0.0;
                }
            }
            if let Some(last) = pooled.last_mut() {
                last.0 += obs;
                last.1 += exp;
            }
            let stat: f64 = pooled.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
            let pvalue = chi_square_sf(stat, (pooled.len() - 1) as f64);
            assert!(pvalue > 0.001, "config {i}: stat {stat}, p {pvalue}");
        }
    }
}
