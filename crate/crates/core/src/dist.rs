//! The distribution of `E_{n,k}`, the number of success runs of length
//! exactly `k` in `n` trials of the geometrically varying model.
//!
//! Three independent evaluation schemes are provided:
//!
//! * [`pmf_exact`]: the closed sum over the number of failures `i`, weighted
//!   by the combinatorial kernel `B_q(i + 1, n - i, x, k)`;
//! * [`pmf_recursive`]: conditioning on the position of the first failure,
//!   which turns `theta` into `theta * q` for the remaining trials;
//! * [`pmf_corollary`]: the first-order-in-`n` recursion derived from the
//!   previous one, anchored at `n = k` and `n = k + 1`.
//!
//! The recursive schemes memoize on `(x, n, m)` where `theta * q^m` is the
//! effective success parameter after `m` failures.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::bq::{a_count, BqSession};
use crate::error::{Error, Result};
use crate::qcalculus::{binomial, powu, ModelParams, QReal};

/// Trial count `n` and run length `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RunSpec {
    n: usize,
    k: usize,
}

impl RunSpec {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("run length k must be at least 1"));
        }
        Ok(RunSpec { n, k })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    /// Largest attainable value of `E_{n,k}`, `floor((n + 1) / (k + 1))`.
    #[inline]
    pub fn support_max(&self) -> usize {
        (self.n + 1) / (self.k + 1)
    }

    #[inline]
    pub fn in_support(&self, x: usize) -> bool {
        x <= self.support_max()
    }
}

/// PMF evaluation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Recursive,
    Corollary,
    /// IID closed form; uses `theta` only and ignores `q`.
    Classical,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Exact,
        Method::Recursive,
        Method::Corollary,
        Method::Classical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Recursive => "recursive",
            Method::Corollary => "corollary",
            Method::Classical => "classical",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown PMF method '{s}'")))
    }
}

/// Full probability vector of `E_{n,k}` over `0..=support_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pmf {
    spec: RunSpec,
    params: ModelParams,
    probs: Vec<f64>,
}

/// Largest tolerated deviation of a PMF total from one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

impl Pmf {
    /// Clamps round-off negatives to zero and checks normalization.
    pub fn from_raw(spec: RunSpec, params: ModelParams, mut probs: Vec<f64>) -> Result<Self> {
        for p in probs.iter_mut() {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let total: f64 = probs.iter().sum();
        let residual = (total - 1.0).abs();
        if residual.is_nan() || residual > NORMALIZATION_TOLERANCE {
            return Err(Error::Normalization { residual });
        }
        Ok(Pmf {
            spec,
            params,
            probs,
        })
    }

    pub fn spec(&self) -> RunSpec {
        self.spec
    }

    pub fn params(&self) -> ModelParams {
        self.params
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `P(E = x)`, zero beyond the support.
    pub fn get(&self, x: usize) -> f64 {
        self.probs.get(x).copied().unwrap_or(0.0)
    }

    /// `P(E >= x)`.
    pub fn survival(&self, x: usize) -> f64 {
        if x == 0 {
            return 1.0;
        }
        self.probs.iter().skip(x).sum()
    }

    /// `P(E <= x)`.
    pub fn cdf(&self, x: usize) -> f64 {
        self.probs.iter().take(x + 1).sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(x, p)| x as f64 * p)
            .sum()
    }

    pub fn residual(&self) -> f64 {
        (self.probs.iter().sum::<f64>() - 1.0).abs()
    }
}

/// Precomputed `B_q(i + 1, n - i, x, k)` coefficients for one `(n, k, q)`.
///
/// The kernel does not depend on `theta`, so a likelihood evaluated at many
/// `theta` values reuses one table.
#[derive(Debug, Clone)]
pub struct ExactKernel {
    spec: RunSpec,
    q: QReal,
    // coeffs[x][i] for i in 0..=n - x k
    coeffs: Vec<Vec<f64>>,
}

impl ExactKernel {
    pub fn new(spec: RunSpec, q: QReal) -> Self {
        let (n, k) = (spec.n(), spec.k());
        let mut session = BqSession::new(k, q);
        let coeffs = (0..=spec.support_max())
            .map(|x| {
                (0..=n - x * k)
                    .map(|i| session.value(i + 1, n - i, x))
                    .collect()
            })
            .collect();
        ExactKernel { spec, q, coeffs }
    }

    pub fn spec(&self) -> RunSpec {
        self.spec
    }

    pub fn q(&self) -> QReal {
        self.q
    }

    /// `sum_i theta^{n-i} prod_{j=1}^{i} (1 - theta q^{j-1}) B_q(i+1, n-i, x, k)`.
    pub fn pmf(&self, x: usize, theta: f64) -> f64 {
        let Some(row) = self.coeffs.get(x) else {
            return 0.0;
        };
        let n = self.spec.n();
        let q = self.q.value();
        let mut failures_factor = 1.0;
        let mut theta_q = theta;
        let mut sum = 0.0;
        for (i, &b) in row.iter().enumerate() {
            if i > 0 {
                failures_factor *= 1.0 - theta_q;
                theta_q *= q;
            }
            if b != 0.0 {
                sum += powu(theta, n - i) * failures_factor * b;
            }
        }
        sum
    }

    pub fn pmf_vec(&self, theta: f64) -> Vec<f64> {
        (0..self.coeffs.len()).map(|x| self.pmf(x, theta)).collect()
    }
}

/// `P(E_{n,k} = x)` by the closed `B_q` sum. The `i = 0` term (no failures)
/// carries an empty product and accounts for the all-success sequence.
pub fn pmf_exact(spec: RunSpec, params: ModelParams, x: usize) -> f64 {
    if !spec.in_support(x) {
        return 0.0;
    }
    let (n, k) = (spec.n(), spec.k());
    let theta = params.theta();
    let mut session = BqSession::new(k, params.q());
    let mut failures_factor = 1.0;
    let mut sum = 0.0;
    for i in 0..=n - x * k {
        if i > 0 {
            failures_factor *= 1.0 - params.success_prob(i - 1);
        }
        sum += powu(theta, n - i) * failures_factor * session.value(i + 1, n - i, x);
    }
    sum
}

/// Memoized evaluator for the first-failure recursion.
#[derive(Debug, Clone)]
pub struct RecursiveSession {
    spec: RunSpec,
    params: ModelParams,
    memo: HashMap<(usize, usize, usize), f64>,
}

impl RecursiveSession {
    pub fn new(spec: RunSpec, params: ModelParams) -> Self {
        RecursiveSession {
            spec,
            params,
            memo: HashMap::new(),
        }
    }

    pub fn pmf(&mut self, x: usize) -> f64 {
        self.eval(x as isize, self.spec.n() as isize, 0)
    }

    fn eval(&mut self, x: isize, n: isize, m: usize) -> f64 {
        let k = self.spec.k() as isize;
        if x < 0 || n < 0 {
            return 0.0;
        }
        if n < k {
            return if x == 0 { 1.0 } else { 0.0 };
        }
        if x > (n + 1) / (k + 1) {
            return 0.0;
        }
        let key = (x as usize, n as usize, m);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let theta = self.params.success_prob(m);
        let ku = k as usize;
        let mut sum = 0.0;
        // First failure at trial i; the i - 1 leading successes form a run
        // that counts only when i - 1 = k.
        let mut lead = 1.0;
        for i in 1..=n {
            if i != k + 1 {
                sum += lead * (1.0 - theta) * self.eval(x, n - i, m + 1);
            }
            lead *= theta;
        }
        let theta_k = powu(theta, ku);
        if n > k {
            sum += theta_k * (1.0 - theta) * self.eval(x - 1, n - k - 1, m + 1);
        }
        // No failure at all: a single run of length n.
        if n == k && x == 1 {
            sum += theta_k;
        }
        if n > k && x == 0 {
            sum += powu(theta, n as usize);
        }
        self.memo.insert(key, sum);
        sum
    }
}

/// `P(E_{n,k} = x)` by the first-failure recursion.
pub fn pmf_recursive(spec: RunSpec, params: ModelParams, x: isize) -> f64 {
    let mut session = RecursiveSession::new(spec, params);
    session.eval(x, spec.n() as isize, 0)
}

/// Memoized evaluator for the recursion in `n` anchored at `n = k, k + 1`.
#[derive(Debug, Clone)]
pub struct CorollarySession {
    spec: RunSpec,
    params: ModelParams,
    memo: HashMap<(usize, usize, usize), f64>,
}

impl CorollarySession {
    pub fn new(spec: RunSpec, params: ModelParams) -> Self {
        CorollarySession {
            spec,
            params,
            memo: HashMap::new(),
        }
    }

    pub fn pmf(&mut self, x: usize) -> f64 {
        self.eval(x as isize, self.spec.n(), 0)
    }

    fn eval(&mut self, x: isize, n: usize, m: usize) -> f64 {
        let k = self.spec.k();
        if x < 0 {
            return 0.0;
        }
        let xu = x as usize;
        if n < k {
            return if xu == 0 { 1.0 } else { 0.0 };
        }
        if xu > (n + 1) / (k + 1) {
            return 0.0;
        }
        let theta = self.params.success_prob(m);
        let theta_k = powu(theta, k);
        if n == k {
            return if xu == 0 { 1.0 - theta_k } else { theta_k };
        }
        if n == k + 1 {
            let one = theta_k * (1.0 - theta) * (1.0 + self.params.q().pow(k));
            return if xu == 0 { 1.0 - one } else { one };
        }
        let key = (xu, n, m);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let same = self.eval(x, n - 1, m);
        let shifted = self.eval(x, n - 1, m + 1);
        let gain = self.eval(x - 1, n - k - 1, m + 1) - self.eval(x, n - k - 1, m + 1);
        let loss = self.eval(x, n - k - 2, m + 1) - self.eval(x - 1, n - k - 2, m + 1);
        let v = theta * same + (1.0 - theta) * (shifted + theta_k * gain + theta_k * theta * loss);
        self.memo.insert(key, v);
        v
    }
}

/// `P(E_{n,k} = x)` by the recursion in `n`.
pub fn pmf_corollary(spec: RunSpec, params: ModelParams, x: isize) -> f64 {
    let mut session = CorollarySession::new(spec, params);
    session.eval(x, spec.n(), 0)
}

/// IID (`q = 1`) closed form
/// `sum_i theta^{n-i} (1-theta)^i C(i+1, x) A(n - i - x k, i + 1 - x, k)`.
pub fn pmf_classical(spec: RunSpec, theta: f64, x: usize) -> f64 {
    if !spec.in_support(x) {
        return 0.0;
    }
    let (n, k) = (spec.n(), spec.k());
    let mut sum = 0.0;
    for i in 0..=n - x * k {
        if i + 1 < x {
            continue;
        }
        sum += powu(theta, n - i)
            * powu(1.0 - theta, i)
            * binomial(i + 1, x)
            * a_count(n - i - x * k, i + 1 - x, k);
    }
    sum
}

/// Full PMF vector by the chosen scheme, clamped and checked for
/// normalization.
pub fn pmf_full(spec: RunSpec, params: ModelParams, method: Method) -> Result<Pmf> {
    let support = 0..=spec.support_max();
    let raw: Vec<f64> = match method {
        Method::Exact => ExactKernel::new(spec, params.q()).pmf_vec(params.theta()),
        Method::Recursive => {
            let mut s = RecursiveSession::new(spec, params);
            support.map(|x| s.pmf(x)).collect()
        }
        Method::Corollary => {
            let mut s = CorollarySession::new(spec, params);
            support.map(|x| s.pmf(x)).collect()
        }
        Method::Classical => support
            .map(|x| pmf_classical(spec, params.theta(), x))
            .collect(),
    };
    Pmf::from_raw(spec, params, raw)
}

/// `P(E_{n,k} >= x)` summed from the exact PMF.
pub fn survival(spec: RunSpec, params: ModelParams, x: usize) -> f64 {
    if x == 0 {
        return 1.0;
    }
    if !spec.in_support(x) {
        return 0.0;
    }
    let kernel = ExactKernel::new(spec, params.q());
    (x..=spec.support_max())
        .map(|i| kernel.pmf(i, params.theta()).max(0.0))
        .sum()
}
