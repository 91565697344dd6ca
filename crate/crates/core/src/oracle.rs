//! Brute-force ground truth by enumerating all `2^n` outcomes.
//!
//! Each outcome's probability is the product of the per-trial conditionals
//! (success with probability `theta * q^z` after `z` failures). Runs are
//! counted by a direct scan. Nothing here calls into the formula modules, so
//! the results can be used to check them.

use rayon::prelude::*;

use crate::dist::RunSpec;
use crate::error::{Error, Result};
use crate::qcalculus::ModelParams;

/// Largest trial count accepted by [`enumerate`].
pub const MAX_TRIALS: usize = 20;

const CHUNK: u32 = 1 << 12;

/// Exact-by-summation quantities for one `(n, k, theta, q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationResult {
    pub n: usize,
    pub k: usize,
    /// `pmf[x] = P(E = x)` for `x = 0..=n`.
    pub pmf: Vec<f64>,
    /// `indicator_means[j - 1] = E[I_j]` for run starts `j = 1..=n-k+1`.
    pub indicator_means: Vec<f64>,
    // Dense (n-k+1)^2 table, row-major over 0-based starts.
    products: Vec<f64>,
    pub total_probability: f64,
}

impl EnumerationResult {
    /// Number of possible run starts, `n - k + 1` (zero when `n < k`).
    pub fn starts(&self) -> usize {
        (self.n + 1).saturating_sub(self.k)
    }

    /// `E[I_i I_j]` for 1-based starts.
    pub fn indicator_product(&self, i: usize, j: usize) -> f64 {
        let m = self.starts();
        assert!(i >= 1 && j >= 1 && i <= m && j <= m, "start out of range");
        if i == j {
            return self.indicator_means[i - 1];
        }
        self.products[(i - 1) * m + (j - 1)]
    }

    /// `P(E >= x)`.
    pub fn survival(&self, x: usize) -> f64 {
        self.pmf.iter().skip(x).sum()
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(x, p)| x as f64 * p).sum()
    }
}

struct Partial {
    pmf: Vec<f64>,
    means: Vec<f64>,
    products: Vec<f64>,
    total: f64,
}

impl Partial {
    fn zeros(n: usize, starts: usize) -> Self {
        Partial {
            pmf: vec![0.0; n + 1],
            means: vec![0.0; starts],
            products: vec![0.0; starts * starts],
            total: 0.0,
        }
    }

    fn absorb(&mut self, other: &Partial) {
        for (a, b) in self.pmf.iter_mut().zip(&other.pmf) {
            *a += b;
        }
        for (a, b) in self.means.iter_mut().zip(&other.means) {
            *a += b;
        }
        for (a, b) in self.products.iter_mut().zip(&other.products) {
            *a += b;
        }
        self.total += other.total;
    }
}

fn scan_range(n: usize, k: usize, theta: f64, q: f64, masks: std::ops::Range<u32>) -> Partial {
    let starts = (n + 1).saturating_sub(k);
    let mut acc = Partial::zeros(n, starts);
    let mut run_starts: Vec<usize> = Vec::with_capacity(n);
    for mask in masks {
        // Path probability.
        let mut prob = 1.0;
        let mut success = theta;
        for pos in 0..n {
            if mask >> pos & 1 == 1 {
                prob *= success;
            } else {
                prob *= 1.0 - success;
                success *= q;
            }
        }
        // Maximal blocks of ones of length exactly k.
        run_starts.clear();
        let mut len = 0;
        for pos in 0..=n {
            let one = pos < n && mask >> pos & 1 == 1;
            if one {
                len += 1;
            } else {
                if len == k {
                    run_starts.push(pos - k);
                }
                len = 0;
            }
        }
        acc.total += prob;
        acc.pmf[run_starts.len()] += prob;
        for (a, &i) in run_starts.iter().enumerate() {
            acc.means[i] += prob;
            for &j in &run_starts[a + 1..] {
                acc.products[i * starts + j] += prob;
                acc.products[j * starts + i] += prob;
            }
        }
    }
    acc
}

/// Enumerates all outcomes of `n <= 20` trials.
///
/// Mask ranges are scanned in parallel and merged in a fixed order, so the
/// result does not depend on the thread count.
pub fn enumerate(spec: RunSpec, params: ModelParams) -> Result<EnumerationResult> {
    let (n, k) = (spec.n(), spec.k());
    if n > MAX_TRIALS {
        return Err(Error::EnumerationTooLarge(n));
    }
    let (theta, q) = (params.theta(), params.q().value());
    let outcomes: u32 = 1 << n;
    let chunks = outcomes.div_ceil(CHUNK);
    let partials: Vec<Partial> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(outcomes);
            scan_range(n, k, theta, q, lo..hi)
        })
        .collect();
    let starts = (n + 1).saturating_sub(k);
    let mut total = Partial::zeros(n, starts);
    for p in &partials {
        total.absorb(p);
    }
    Ok(EnumerationResult {
        n,
        k,
        pmf: total.pmf,
        indicator_means: total.means,
        products: total.products,
        total_probability: total.total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn run(n: usize, k: usize, theta: f64, q: f64) -> EnumerationResult {
        enumerate(
            RunSpec::new(n, k).unwrap(),
            ModelParams::new(theta, q).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn single_trial() {
        for &q in &[0.2, 0.9, 1.0] {
            let r = run(1, 1, 0.5, q);
            assert_eq!(r.pmf, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn two_trials_by_hand() {
        // theta = 0.5, q = 0.5, k = 1.
        //   11: 0.5 * 0.5            = 0.25   one block of length 2 -> E = 0
        //   10: 0.5 * (1 - 0.5)      = 0.25   E = 1
        //   01: (1 - 0.5) * 0.25     = 0.125  E = 1
        //   00: (1 - 0.5) * 0.75     = 0.375  E = 0
        let r = run(2, 1, 0.5, 0.5);
        assert_abs_diff_eq!(r.pmf[0], 0.25 + 0.375, epsilon = 1e-15);
        assert_abs_diff_eq!(r.pmf[1], 0.25 + 0.125, epsilon = 1e-15);
        assert_eq!(r.pmf[2], 0.0);
        assert_abs_diff_eq!(r.indicator_means[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(r.indicator_means[1], 0.125, epsilon = 1e-15);
        assert_eq!(r.indicator_product(1, 2), 0.0);
    }

    #[test]
    fn total_probability_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let unit = |rng: &mut ChaCha8Rng| (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        for _ in 0..50 {
            let theta = unit(&mut rng);
            let q = 1.0 - 0.999 * unit(&mut rng);
            let n = (rng.next_u32() % 13) as usize;
            let k = 1 + (rng.next_u32() % 3) as usize;
            let r = run(n, k, theta, q);
            assert_abs_diff_eq!(r.total_probability, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(r.pmf.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn refuses_large_n() {
        let spec = RunSpec::new(21, 2).unwrap();
        let p = ModelParams::new(0.5, 0.5).unwrap();
        assert_eq!(enumerate(spec, p), Err(Error::EnumerationTooLarge(21)));
    }

    #[test]
    fn product_table_is_symmetric_and_bounded() {
        let r = run(10, 2, 0.6, 0.8);
        let m = r.starts();
        for i in 1..=m {
            for j in 1..=m {
                let p = r.indicator_product(i, j);
                assert_eq!(p, r.indicator_product(j, i));
                if i != j {
                    assert!(p <= r.indicator_means[i - 1].min(r.indicator_means[j - 1]) + 1e-15);
                }
                if i != j && i.abs_diff(j) <= 2 {
                    assert_eq!(p, 0.0);
                }
            }
        }
    }
}
