//! Generating functions and moments of `E_{n,k}`.
//!
//! The PGF, factorial moments `rho_r` and raw moments `nu_r` all satisfy the
//! same shape of recursion in `n`: one term at the current `theta`, the rest
//! at `theta * q`. Each is evaluated by a memoized session keyed on `n` and
//! the number `m` of accumulated `q` factors (plus the order `r` for
//! moments). Central moments and shape factors follow from the raw moments;
//! PMF and survival values can be recovered from binomial moments
//! `rho_r / r!` by inclusion-exclusion.

use std::collections::HashMap;

use serde::Serialize;

use crate::dist::RunSpec;
use crate::qcalculus::{binomial, powu, ModelParams};

/// Default maximum moment order: enough for skewness and kurtosis.
pub const DEFAULT_ORDER: usize = 4;

/// Variances at or below this are treated as degenerate.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

/// `P(E = 1)` at `n = k + 1`, `theta^k (1 - theta) (1 + q^k)`.
#[inline]
fn single_run_next(params: &ModelParams, k: usize, m: usize) -> f64 {
    let theta = params.success_prob(m);
    powu(theta, k) * (1.0 - theta) * (1.0 + params.q().pow(k))
}

/// Generating-function recursion in the variable `u` (PGF at `u = t`,
/// MGF at `u = e^t`).
struct GfSession {
    k: usize,
    params: ModelParams,
    u: f64,
    memo: HashMap<(usize, usize), f64>,
}

impl GfSession {
    fn eval(&mut self, n: usize, m: usize) -> f64 {
        let k = self.k;
        let u = self.u;
        if n < k {
            return 1.0;
        }
        let theta = self.params.success_prob(m);
        let theta_k = powu(theta, k);
        if n == k {
            return 1.0 + theta_k * (u - 1.0);
        }
        if n == k + 1 {
            let c = single_run_next(&self.params, k, m);
            return 1.0 - c + c * u;
        }
        if let Some(&v) = self.memo.get(&(n, m)) {
            return v;
        }
        let v = theta * self.eval(n - 1, m)
            + (1.0 - theta)
                * (self.eval(n - 1, m + 1)
                    + theta_k * (u - 1.0) * self.eval(n - k - 1, m + 1)
                    + theta_k * theta * (1.0 - u) * self.eval(n - k - 2, m + 1));
        self.memo.insert((n, m), v);
        v
    }
}

fn generating_function(u: f64, spec: RunSpec, params: ModelParams) -> f64 {
    GfSession {
        k: spec.k(),
        params,
        u,
        memo: HashMap::new(),
    }
    .eval(spec.n(), 0)
}

/// Probability generating function `E[t^E]`.
pub fn pgf(t: f64, spec: RunSpec, params: ModelParams) -> f64 {
    generating_function(t, spec, params)
}

/// Moment generating function `E[e^{tE}]`, by the same recursion with
/// `e^t` in place of `t`.
pub fn mgf(t: f64, spec: RunSpec, params: ModelParams) -> f64 {
    generating_function(t.exp(), spec, params)
}

struct FactorialSession {
    k: usize,
    params: ModelParams,
    memo: HashMap<(usize, usize, usize), f64>,
}

impl FactorialSession {
    fn eval(&mut self, r: usize, n: usize, m: usize) -> f64 {
        let k = self.k;
        if r == 0 {
            return 1.0;
        }
        if n < k {
            return 0.0;
        }
        let theta = self.params.success_prob(m);
        let theta_k = powu(theta, k);
        if n == k {
            return if r == 1 { theta_k } else { 0.0 };
        }
        if n == k + 1 {
            return if r == 1 {
                single_run_next(&self.params, k, m)
            } else {
                0.0
            };
        }
        if let Some(&v) = self.memo.get(&(r, n, m)) {
            return v;
        }
        let rf = r as f64;
        let v = theta * self.eval(r, n - 1, m)
            + (1.0 - theta)
                * (self.eval(r, n - 1, m + 1) + theta_k * rf * self.eval(r - 1, n - k - 1, m + 1)
                    - theta_k * theta * rf * self.eval(r - 1, n - k - 2, m + 1));
        self.memo.insert((r, n, m), v);
        v
    }
}

/// Factorial moments `rho_r = E[E (E-1) ... (E-r+1)]` for `r = 0..=order`.
pub fn factorial_moments(spec: RunSpec, params: ModelParams, order: usize) -> Vec<f64> {
    let mut s = FactorialSession {
        k: spec.k(),
        params,
        memo: HashMap::new(),
    };
    (0..=order).map(|r| s.eval(r, spec.n(), 0)).collect()
}

struct RawSession {
    k: usize,
    params: ModelParams,
    memo: HashMap<(usize, usize, usize), f64>,
}

impl RawSession {
    fn eval(&mut self, r: usize, n: usize, m: usize) -> f64 {
        let k = self.k;
        if r == 0 {
            return 1.0;
        }
        if n < k {
            return 0.0;
        }
        let theta = self.params.success_prob(m);
        let theta_k = powu(theta, k);
        // E takes values in {0, 1} here, so every raw moment equals P(E = 1).
        if n == k {
            return theta_k;
        }
        if n == k + 1 {
            return single_run_next(&self.params, k, m);
        }
        if let Some(&v) = self.memo.get(&(r, n, m)) {
            return v;
        }
        let mut gain = 0.0;
        let mut loss = 0.0;
        for i in 0..r {
            let c = binomial(r, i);
            gain += c * self.eval(i, n - k - 1, m + 1);
            loss += c * self.eval(i, n - k - 2, m + 1);
        }
        let v = theta * self.eval(r, n - 1, m)
            + (1.0 - theta)
                * (self.eval(r, n - 1, m + 1) + theta_k * gain - theta_k * theta * loss);
        self.memo.insert((r, n, m), v);
        v
    }
}

/// Raw moments `nu_r = E[E^r]` for `r = 0..=order`.
pub fn raw_moments(spec: RunSpec, params: ModelParams, order: usize) -> Vec<f64> {
    let mut s = RawSession {
        k: spec.k(),
        params,
        memo: HashMap::new(),
    };
    (0..=order).map(|r| s.eval(r, spec.n(), 0)).collect()
}

/// Central moments from raw moments:
/// `xi_r = sum_{j=0}^{r-2} (-1)^j C(r, j) nu_{r-j} nu_1^j + (-1)^{r-1} (r-1) nu_1^r`.
pub fn central_from_raw(nu: &[f64]) -> Vec<f64> {
    let mean = nu.get(1).copied().unwrap_or(0.0);
    (0..nu.len())
        .map(|r| match r {
            0 => 1.0,
            1 => 0.0,
            _ => {
                let mut sum = 0.0;
                for j in 0..=r - 2 {
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    sum += sign * binomial(r, j) * nu[r - j] * powu(mean, j);
                }
                let sign = if (r - 1) % 2 == 0 { 1.0 } else { -1.0 };
                sum + sign * (r - 1) as f64 * powu(mean, r)
            }
        })
        .collect()
}

/// Factorial, raw and central moments with shape factors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSet {
    pub spec: RunSpec,
    pub params: ModelParams,
    pub order: usize,
    pub rho: Vec<f64>,
    pub nu: Vec<f64>,
    pub xi: Vec<f64>,
    /// Skewness `xi_3 / xi_2^{3/2}`; absent for degenerate variance or order < 3.
    pub gamma1: Option<f64>,
    /// Kurtosis `xi_4 / xi_2^2`; absent for degenerate variance or order < 4.
    pub gamma2: Option<f64>,
}

impl MomentSet {
    pub fn mean(&self) -> f64 {
        self.nu[1]
    }

    pub fn variance(&self) -> f64 {
        self.xi[2]
    }

    pub fn degenerate_variance(&self) -> bool {
        self.xi[2] <= DEGENERATE_VARIANCE
    }
}

/// All moments up to `order` (at least 2) plus skewness and kurtosis.
pub fn central_moments_and_shape(spec: RunSpec, params: ModelParams, order: usize) -> MomentSet {
    let order = order.max(2);
    let rho = factorial_moments(spec, params, order);
    let nu = raw_moments(spec, params, order);
    let xi = central_from_raw(&nu);
    let var = xi[2];
    let (gamma1, gamma2) = if var <= DEGENERATE_VARIANCE {
        (None, None)
    } else {
        (
            xi.get(3).map(|x3| x3 / var.powf(1.5)),
            xi.get(4).map(|x4| x4 / (var * var)),
        )
    };
    MomentSet {
        spec,
        params,
        order,
        rho,
        nu,
        xi,
        gamma1,
        gamma2,
    }
}

fn binomial_moments(spec: RunSpec, params: ModelParams) -> Vec<f64> {
    let rho = factorial_moments(spec, params, spec.support_max());
    let mut factorial = 1.0;
    rho.iter()
        .enumerate()
        .map(|(r, &v)| {
            if r > 0 {
                factorial *= r as f64;
            }
            v / factorial
        })
        .collect()
}

/// `P(E = x) = sum_{r >= x} (-1)^{r-x} C(r, x) rho_r / r!`, truncated at the
/// support size where the binomial moments vanish.
pub fn pmf_from_binomial_moments(spec: RunSpec, params: ModelParams, x: usize) -> f64 {
    if !spec.in_support(x) {
        return 0.0;
    }
    binomial_moments(spec, params)
        .iter()
        .enumerate()
        .skip(x)
        .map(|(r, b)| {
            let sign = if (r - x).is_multiple_of(2) { 1.0 } else { -1.0 };
            sign * binomial(r, x) * b
        })
        .sum()
}

/// `P(E >= x) = sum_{i >= x} (-1)^{x+i} C(i-1, x-1) rho_i / i!` for `x >= 1`;
/// one at `x = 0`.
pub fn survival_from_binomial_moments(spec: RunSpec, params: ModelParams, x: usize) -> f64 {
    if x == 0 {
        return 1.0;
    }
    if !spec.in_support(x) {
        return 0.0;
    }
    binomial_moments(spec, params)
        .iter()
        .enumerate()
        .skip(x)
        .map(|(i, b)| {
            let sign = if (x + i).is_multiple_of(2) { 1.0 } else { -1.0 };
            sign * binomial(i - 1, x - 1) * b
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{pmf_exact, pmf_full, survival, Method};
    use approx::assert_abs_diff_eq;

    fn spec(n: usize, k: usize) -> RunSpec {
        RunSpec::new(n, k).unwrap()
    }

    fn params(theta: f64, q: f64) -> ModelParams {
        ModelParams::new(theta, q).unwrap()
    }

    fn weighted(spec: RunSpec, p: ModelParams, f: impl Fn(f64) -> f64) -> f64 {
        let pmf = pmf_full(spec, p, Method::Exact).unwrap();
        pmf.probs()
            .iter()
            .enumerate()
            .map(|(x, pr)| f(x as f64) * pr)
            .sum()
    }

    #[test]
    fn pgf_examples() {
        for n in 0..12 {
            assert_abs_diff_eq!(pgf(1.0, spec(n, 2), params(0.6, 0.8)), 1.0, epsilon = 1e-12);
        }
        for k in 1..5 {
            let t = 0.37;
            let want = 1.0 + 0.6f64.powi(k as i32) * (t - 1.0);
            assert_abs_diff_eq!(pgf(t, spec(k, k), params(0.6, 0.8)), want, epsilon = 1e-15);
        }
        let (s, p) = (spec(8, 2), params(0.6, 0.8));
        assert_abs_diff_eq!(
            pgf(0.5, s, p),
            weighted(s, p, |x| 0.5f64.powf(x)),
            epsilon = 1e-12
        );
    }

    #[test]
    fn mgf_examples() {
        assert_abs_diff_eq!(mgf(0.0, spec(9, 3), params(0.5, 0.7)), 1.0, epsilon = 1e-12);
        let t: f64 = 0.8;
        let want = 1.0 + 0.5f64.powi(3) * (t.exp() - 1.0);
        assert_abs_diff_eq!(mgf(t, spec(3, 3), params(0.5, 0.7)), want, epsilon = 1e-15);
        let (s, p) = (spec(7, 3), params(0.5, 0.7));
        for &t in &[-1.0f64, 0.0, 0.3, 0.5] {
            assert_abs_diff_eq!(mgf(t, s, p), pgf(t.exp(), s, p), epsilon = 1e-12);
        }
    }

    #[test]
    fn factorial_and_raw_examples() {
        let p = params(0.45, 0.6);
        for r in 1..5 {
            assert_eq!(factorial_moments(spec(2, 3), p, r)[r], 0.0);
            assert_eq!(raw_moments(spec(2, 3), p, r)[r], 0.0);
            assert_abs_diff_eq!(
                raw_moments(spec(3, 3), p, r)[r],
                0.45f64.powi(3),
                epsilon = 1e-15
            );
        }
        assert_abs_diff_eq!(
            factorial_moments(spec(3, 3), p, 1)[1],
            0.45f64.powi(3),
            epsilon = 1e-15
        );
        assert_eq!(factorial_moments(spec(3, 3), p, 2)[2], 0.0);
        assert_eq!(raw_moments(spec(7, 2), p, 0), vec![1.0]);

        let (s, p) = (spec(9, 2), params(0.5, 0.8));
        let rho = factorial_moments(s, p, 2);
        assert_abs_diff_eq!(rho[2], weighted(s, p, |x| x * (x - 1.0)), epsilon = 1e-12);
        let nu = raw_moments(s, p, 3);
        assert_abs_diff_eq!(nu[3], weighted(s, p, |x| x * x * x), epsilon = 1e-12);
    }

    #[test]
    fn central_and_shape() {
        let (s, p) = (spec(10, 2), params(0.6, 0.7));
        let ms = central_moments_and_shape(s, p, DEFAULT_ORDER);
        assert_eq!(ms.xi[0], 1.0);
        assert_eq!(ms.xi[1], 0.0);
        let mean = ms.mean();
        assert_abs_diff_eq!(
            ms.xi[2],
            weighted(s, p, |x| (x - mean).powi(2)),
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            ms.xi[3],
            weighted(s, p, |x| (x - mean).powi(3)),
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            ms.xi[4],
            weighted(s, p, |x| (x - mean).powi(4)),
            epsilon = 1e-10
        );
        assert!(ms.gamma1.is_some() && ms.gamma2.is_some());

        let ms = central_moments_and_shape(spec(3, 3), params(1.0, 0.5), DEFAULT_ORDER);
        assert!(ms.degenerate_variance());
        assert_eq!(ms.gamma1, None);
        assert_eq!(ms.gamma2, None);
    }

    #[test]
    fn binomial_moment_inversion() {
        let (s, p) = (spec(8, 2), params(0.4, 0.9));
        for x in 0..=s.support_max() {
            assert_abs_diff_eq!(
                pmf_from_binomial_moments(s, p, x),
                pmf_exact(s, p, x),
                epsilon = 1e-8
            );
        }
        assert_eq!(pmf_from_binomial_moments(s, p, s.support_max() + 1), 0.0);
        for k in 1..4 {
            assert_abs_diff_eq!(
                pmf_from_binomial_moments(spec(k, k), p, 1),
                0.4f64.powi(k as i32),
                epsilon = 1e-15
            );
            assert_abs_diff_eq!(
                survival_from_binomial_moments(spec(k, k), p, 1),
                0.4f64.powi(k as i32),
                epsilon = 1e-15
            );
        }
        let (s, p) = (spec(10, 2), params(0.5, 0.8));
        assert_eq!(survival_from_binomial_moments(s, p, 0), 1.0);
        for x in 1..=s.support_max() {
            assert_abs_diff_eq!(
                survival_from_binomial_moments(s, p, x),
                survival(s, p, x),
                epsilon = 1e-8
            );
        }
    }

    proptest::proptest! {
        #[test]
        fn raw_and_factorial_agree(n in 0usize..16, k in 1usize..5, theta in 0.0f64..=1.0, q in 0.05f64..=1.0) {
            let (s, p) = (spec(n, k), params(theta, q));
            let rho = factorial_moments(s, p, 2);
            let nu = raw_moments(s, p, 2);
            proptest::prop_assert!((nu[1] - rho[1]).abs() <= 1e-10);
            proptest::prop_assert!((nu[2] - rho[2] - rho[1]).abs() <= 1e-10);
        }

        #[test]
        fn pgf_slope_is_mean(n in 0usize..16, k in 1usize..5, theta in 0.0f64..=1.0, q in 0.05f64..=1.0) {
            let (s, p) = (spec(n, k), params(theta, q));
            let h = 1e-5;
            let slope = (pgf(1.0 + h, s, p) - pgf(1.0 - h, s, p)) / (2.0 * h);
            proptest::prop_assert!((slope - raw_moments(s, p, 1)[1]).abs() <= 1e-6);
        }

        #[test]
        fn variance_is_non_negative(n in 0usize..16, k in 1usize..5, theta in 0.0f64..=1.0, q in 0.05f64..=1.0) {
            let ms = central_moments_and_shape(spec(n, k), params(theta, q), 2);
            proptest::prop_assert!(ms.xi[2] >= -1e-10);
        }
    }
}
