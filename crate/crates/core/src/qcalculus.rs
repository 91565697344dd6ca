//! q-series primitives.
//!
//! q-numbers, q-shifted factorials, Gaussian binomial coefficients and the
//! q-binomial distribution of the number of successes in `n` trials. Every
//! function takes an explicit classical branch at `q = 1` rather than relying
//! on the limit of a `0/0` expression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The deformation parameter `q`, restricted to `(0, 1]`.
///
/// `q = 1` selects the classical (IID Bernoulli) code paths.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QReal(f64);

impl QReal {
    pub const ONE: QReal = QReal(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 && value <= 1.0 {
            Ok(QReal(value))
        } else {
            Err(Error::domain(format!("q must lie in (0, 1], got {value}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_classical(self) -> bool {
        self.0 == 1.0
    }

    /// `1 - q^z`, accurate for `q` close to one.
    #[inline]
    pub fn one_minus_pow(self, z: usize) -> f64 {
        if self.is_classical() || z == 0 {
            0.0
        } else {
            -(z as f64 * self.0.ln()).exp_m1()
        }
    }

    #[inline]
    pub fn pow(self, z: usize) -> f64 {
        powu(self.0, z)
    }
}

impl TryFrom<f64> for QReal {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        QReal::new(value)
    }
}

impl From<QReal> for f64 {
    fn from(q: QReal) -> f64 {
        q.0
    }
}

/// Parameters `(theta, q)` of the geometrically varying success model: the
/// success probability after `i` failures is `theta * q^i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    theta: f64,
    q: QReal,
}

impl ModelParams {
    pub fn new(theta: f64, q: f64) -> Result<Self> {
        let q = QReal::new(q)?;
        Self::with_q(theta, q)
    }

    pub fn with_q(theta: f64, q: QReal) -> Result<Self> {
        if !(theta.is_finite() && (0.0..=1.0).contains(&theta)) {
            return Err(Error::domain(format!(
                "theta must lie in [0, 1], got {theta}"
            )));
        }
        Ok(ModelParams { theta, q })
    }

    #[inline]
    pub fn theta(&self) -> f64 {
        self.theta
    }

    #[inline]
    pub fn q(&self) -> QReal {
        self.q
    }

    /// Success probability of a trial preceded by `failures` failures.
    #[inline]
    pub fn success_prob(&self, failures: usize) -> f64 {
        self.theta * self.q.pow(failures)
    }

    /// The same model after one more failure: `theta` becomes `theta * q`.
    #[inline]
    pub fn shifted(&self) -> ModelParams {
        ModelParams {
            theta: self.theta * self.q.0,
            q: self.q,
        }
    }
}

/// `x^n` for a non-negative integer exponent, with `0^0 = 1`.
#[inline]
pub(crate) fn powu(x: f64, n: usize) -> f64 {
    match i32::try_from(n) {
        Ok(n) => x.powi(n),
        Err(_) => x.powf(n as f64),
    }
}

/// The q-number `[z]_q = (1 - q^z) / (1 - q)`; equals `z` at `q = 1`.
pub fn q_number(z: usize, q: QReal) -> f64 {
    if q.is_classical() {
        z as f64
    } else {
        q.one_minus_pow(z) / (1.0 - q.value())
    }
}

/// The q-shifted factorial `(a; q)_n = prod_{j<n} (1 - a q^j)`.
pub fn q_shifted_factorial(a: f64, q: QReal, n: usize) -> f64 {
    let mut prod = 1.0;
    let mut aq = a;
    for _ in 0..n {
        prod *= 1.0 - aq;
        aq *= q.value();
    }
    prod
}

/// Gaussian binomial coefficient `[n m]_q`, zero for `m > n`.
///
/// Evaluated as the running product `prod_{i=1}^{m} (1 - q^{n-m+i}) / (1 - q^i)`
/// over the smaller of `m` and `n - m`, so `[n]_q!` is never formed.
pub fn q_binomial_coefficient(n: usize, m: usize, q: QReal) -> f64 {
    if m > n {
        return 0.0;
    }
    let m = m.min(n - m);
    if q.is_classical() {
        return binomial(n, m);
    }
    let mut value = 1.0;
    for i in 1..=m {
        value *= q.one_minus_pow(n - m + i) / q.one_minus_pow(i);
    }
    value
}

/// Classical binomial coefficient as `f64`, zero for `m > n`.
pub fn binomial(n: usize, m: usize) -> f64 {
    if m > n {
        return 0.0;
    }
    let m = m.min(n - m);
    let mut value = 1.0;
    for i in 1..=m {
        value = value * (n - m + i) as f64 / i as f64;
    }
    // Ratio products drift a few ulps off the integer; snap back while
    // integers are still exactly representable.
    if value < 9.0e15 {
        value.round()
    } else {
        value
    }
}

/// PMF of the number of successes `Z_n` in `n` trials of the model:
/// `[n r]_q theta^r prod_{i=1}^{n-r} (1 - theta q^{i-1})`.
pub fn q_binomial_pmf(r: usize, n: usize, params: ModelParams) -> f64 {
    if r > n {
        return 0.0;
    }
    q_binomial_coefficient(n, r, params.q())
        * powu(params.theta(), r)
        * q_shifted_factorial(params.theta(), params.q(), n - r)
}
