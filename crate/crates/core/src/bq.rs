//! The combinatorial kernel `B_q(r, s, t, k)`.
//!
//! `B_q(r, s, t, k)` sums `q^{y_2 + 2 y_3 + ... + (r-1) y_r}` over all
//! compositions `y_1 + ... + y_r = s` into non-negative parts of which exactly
//! `t` equal `k`. With `r = i + 1` cells separated by `i` failures, the weight
//! is exactly the q-part of the probability of a sequence whose success runs
//! have lengths `y_1, ..., y_r`.
//!
//! Values come from the recurrence that peels off the last cell, memoized on
//! `(r, s, t)` inside a [`BqSession`] that fixes `k` and `q`.

use std::collections::HashMap;

use crate::qcalculus::{binomial, QReal};

/// Argument tuple of `B_q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BqKey {
    /// Number of cells, at least one.
    pub r: usize,
    /// Number of balls (successes).
    pub s: usize,
    /// Number of cells holding exactly `k` balls.
    pub t: usize,
    /// Run length, at least one.
    pub k: usize,
}

/// One recurrence step. `child(r, s, t)` supplies `B_q` at `r - 1` cells.
#[inline]
fn recurrence_step(
    r: usize,
    s: usize,
    t: usize,
    k: usize,
    q: QReal,
    mut child: impl FnMut(usize, usize, usize) -> f64,
) -> f64 {
    if r == 0 {
        return 0.0;
    }
    if r == 1 {
        let hit = (s == k && t == 1) || (s != k && t == 0);
        return if hit { 1.0 } else { 0.0 };
    }
    if t > r || s < t * k {
        return 0.0;
    }
    // Occupancy j of the last cell carries weight q^{j (r-1)}.
    let step = q.pow(r - 1);
    let mut weight = 1.0;
    let mut sum = 0.0;
    for j in 0..=s {
        if j != k {
            sum += weight * child(r - 1, s - j, t);
        } else if t > 0 {
            sum += weight * child(r - 1, s - k, t - 1);
        }
        weight *= step;
    }
    sum
}

/// Memo table of `B_q` values for a fixed run length `k` and deformation `q`.
#[derive(Debug, Clone)]
pub struct BqSession {
    k: usize,
    q: QReal,
    memo: HashMap<(usize, usize, usize), f64>,
}

impl BqSession {
    pub fn new(k: usize, q: QReal) -> Self {
        assert!(k >= 1, "run length k must be at least 1");
        BqSession {
            k,
            q,
            memo: HashMap::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn q(&self) -> QReal {
        self.q
    }

    /// `B_q(r, s, t, k)` for this session's `k` and `q`.
    pub fn value(&mut self, r: usize, s: usize, t: usize) -> f64 {
        if r <= 1 || t > r || s < t * self.k {
            return recurrence_step(r, s, t, self.k, self.q, |_, _, _| 0.0);
        }
        if let Some(&v) = self.memo.get(&(r, s, t)) {
            return v;
        }
        let (k, q) = (self.k, self.q);
        let v = recurrence_step(r, s, t, k, q, |r, s, t| self.value(r, s, t));
        self.memo.insert((r, s, t), v);
        v
    }

    pub fn cached_entries(&self) -> usize {
        self.memo.len()
    }
}

/// `B_q` evaluated in a fresh session.
pub fn bq_value(key: BqKey, q: QReal) -> f64 {
    if key.k == 0 {
        return 0.0;
    }
    BqSession::new(key.k, q).value(key.r, key.s, key.t)
}

/// `B_q` by the bare recurrence without memoization. Exponential in `r`;
/// meant for cross-checking the memoized path on small arguments.
pub fn bq_value_uncached(key: BqKey, q: QReal) -> f64 {
    fn go(r: usize, s: usize, t: usize, k: usize, q: QReal) -> f64 {
        recurrence_step(r, s, t, k, q, |r, s, t| go(r, s, t, k, q))
    }
    if key.k == 0 {
        return 0.0;
    }
    go(key.r, key.s, key.t, key.k, q)
}

/// Binomial coefficient extended to integer arguments: zero outside
/// `0 <= bottom <= top`, except `C(-1, 0) = 1`.
fn binomial_ext(top: i64, bottom: i64) -> f64 {
    if bottom < 0 {
        return 0.0;
    }
    if bottom == 0 {
        return if top >= -1 { 1.0 } else { 0.0 };
    }
    if top < bottom {
        return 0.0;
    }
    binomial(top as usize, bottom as usize)
}

/// `A(alpha, r, k)`: the number of compositions of `alpha` into `r`
/// non-negative parts none of which equals `k`, by inclusion-exclusion over
/// the parts forced to equal `k`.
pub fn a_count(alpha: usize, r: usize, k: usize) -> f64 {
    assert!(k >= 1);
    let (alpha_i, r_i, k_i) = (alpha as i64, r as i64, k as i64);
    let mut sum = 0.0;
    for j in 0..=(alpha / k) as i64 {
        let term = binomial_ext(r_i, j)
            * binomial_ext(alpha_i - (k_i + 1) * j + r_i - 1, alpha_i - j * k_i);
        if j % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    sum
}

/// `B_1(r, s, t, k) = C(r, t) A(s - t k, r - t, k)`, the classical count.
pub fn b1_value(r: usize, s: usize, t: usize, k: usize) -> f64 {
    if k == 0 || r == 0 || t > r || s < t * k {
        return 0.0;
    }
    binomial(r, t) * a_count(s - t * k, r - t, k)
}
