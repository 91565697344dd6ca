//! Closed-form mean and variance of `E_{n,k}` through run-start indicators.
//!
//! `I_j = (1 - X_{j-1}) X_j ... X_{j+k-1} (1 - X_{j+k})` with the convention
//! `X_0 = X_{n+1} = 0`, so `E_{n,k} = sum_{j=1}^{n-k+1} I_j`.
//!
//! A run starting at `j >= 2` is opened by a failure at `j - 1`. Writing
//! `a - 1` for the number of failures up to and including `j - 1`
//! (`a = 2..=j`), the prefix of `j - 2` trials holds `j - a` successes with
//! q-binomial probability `b_q(j - a; j - 2; theta)`, the opening failure has
//! probability `1 - theta q^{a-2}`, the run `(theta q^{a-1})^k` and the closing
//! failure (absent when the run touches trial `n`) `1 - theta q^{a-1}`.
//!
//! For pairs `i < j` with `j - i >= k + 2` a free middle stretch of
//! `j - i - k - 2` trials sits between the closing failure of the first run
//! and the opening failure of the second; with `beta - 1` failures up to and
//! including `j - 1` it contributes
//! `b_q(j - i - k - beta + alpha; j - i - k - 2; theta q^alpha)`.
//! For `j - i = k + 1` the two runs share one failure and `beta = alpha + 1`.

use std::collections::BTreeMap;

use crate::dist::RunSpec;
use crate::error::{Error, Result};
use crate::qcalculus::{powu, q_binomial_pmf, ModelParams};

/// q-binomial PMF with an explicit success parameter.
fn b_q(x: usize, n: usize, theta: f64, params: &ModelParams) -> f64 {
    let shifted = ModelParams::with_q(theta, params.q()).expect("theta * q^m stays in [0, 1]");
    q_binomial_pmf(x, n, shifted)
}

/// Distribution of the failure count in front of a run starting at `start`,
/// weighted by the probability of the opening failure. Entry `(a, w)` means
/// `a - 1` failures up to and including trial `start - 1`.
fn opening(start: usize, params: &ModelParams) -> Vec<(usize, f64)> {
    if start == 1 {
        return vec![(1, 1.0)];
    }
    let theta = params.theta();
    (2..=start)
        .map(|a| {
            let w = b_q(start - a, start - 2, theta, params) * (1.0 - params.success_prob(a - 2));
            (a, w)
        })
        .collect()
}

fn check_start(j: usize, spec: RunSpec) -> Result<()> {
    let last = (spec.n() + 1).saturating_sub(spec.k());
    if j == 0 || j > last {
        return Err(Error::domain(format!(
            "run start {j} outside 1..={last} for n = {}, k = {}",
            spec.n(),
            spec.k()
        )));
    }
    Ok(())
}

/// `mu_j = E[I_j]`.
pub fn indicator_mean(j: usize, spec: RunSpec, params: ModelParams) -> Result<f64> {
    check_start(j, spec)?;
    let k = spec.k();
    let closed = j + k <= spec.n();
    let mut sum = 0.0;
    for (a, w) in opening(j, &params) {
        let run = powu(params.success_prob(a - 1), k);
        let close = if closed {
            1.0 - params.success_prob(a - 1)
        } else {
            1.0
        };
        sum += w * run * close;
    }
    Ok(sum)
}

/// `mu_{i,j} = E[I_i I_j]` for `i < j`; zero when `j - i <= k`.
pub fn indicator_product_mean(
    i: usize,
    j: usize,
    spec: RunSpec,
    params: ModelParams,
) -> Result<f64> {
    check_start(i, spec)?;
    check_start(j, spec)?;
    if i >= j {
        return Err(Error::domain(format!(
            "indicator pair needs i < j, got ({i}, {j})"
        )));
    }
    let k = spec.k();
    if j - i <= k {
        return Ok(0.0);
    }
    let theta = params.theta();
    let closed = j + k <= spec.n();
    let gap = j - i - k; // >= 1
    let mut sum = 0.0;
    for (alpha, w) in opening(i, &params) {
        // First run and its closing failure; alpha failures afterwards.
        let first =
            w * powu(params.success_prob(alpha - 1), k) * (1.0 - params.success_prob(alpha - 1));
        let second = |beta: usize| {
            let run = powu(params.success_prob(beta - 1), k);
            let close = if closed {
                1.0 - params.success_prob(beta - 1)
            } else {
                1.0
            };
            run * close
        };
        if gap == 1 {
            sum += first * second(alpha + 1);
            continue;
        }
        let middle = gap - 2;
        let theta_mid = theta * params.q().pow(alpha);
        let mut inner = 0.0;
        for beta in alpha + 2..=alpha + gap {
            let successes = middle + alpha + 2 - beta;
            inner += b_q(successes, middle, theta_mid, &params)
                * (1.0 - params.success_prob(beta - 2))
                * second(beta);
        }
        sum += first * inner;
    }
    Ok(sum)
}

/// All `mu_j` and the non-zero `mu_{i,j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorTable {
    pub spec: RunSpec,
    pub params: ModelParams,
    /// `mu[j - 1] = mu_j`.
    pub mu: Vec<f64>,
    /// `mu_{i,j}` for `j - i >= k + 1`.
    pub mu2: BTreeMap<(usize, usize), f64>,
}

impl IndicatorTable {
    pub fn new(spec: RunSpec, params: ModelParams) -> Self {
        let last = (spec.n() + 1).saturating_sub(spec.k());
        let mu = (1..=last)
            .map(|j| indicator_mean(j, spec, params).expect("start in range"))
            .collect();
        let mut mu2 = BTreeMap::new();
        for i in 1..=last {
            for j in i + spec.k() + 1..=last {
                let v = indicator_product_mean(i, j, spec, params).expect("pair in range");
                mu2.insert((i, j), v);
            }
        }
        IndicatorTable {
            spec,
            params,
            mu,
            mu2,
        }
    }

    pub fn mean(&self) -> f64 {
        neumaier_sum(self.mu.iter().copied())
    }

    /// `E[E^2] = sum_i mu_i + 2 sum_{i<j} mu_{i,j}`.
    pub fn second_moment(&self) -> f64 {
        neumaier_sum(
            self.mu
                .iter()
                .copied()
                .chain(self.mu2.values().map(|v| 2.0 * v)),
        )
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        neumaier_sum([self.second_moment(), -mean * mean])
    }
}

/// Compensated summation.
fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `E[E_{n,k}] = sum_j mu_j`; zero for `n < k`.
pub fn mean_closed(spec: RunSpec, params: ModelParams) -> f64 {
    if spec.n() < spec.k() {
        return 0.0;
    }
    IndicatorTable::new(spec, params).mean()
}

/// `Var(E_{n,k})` from the indicator expansion of `E[E^2]`; zero for `n < k`.
pub fn variance_closed(spec: RunSpec, params: ModelParams) -> f64 {
    if spec.n() < spec.k() {
        return 0.0;
    }
    IndicatorTable::new(spec, params).variance()
}
