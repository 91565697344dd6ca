//! Likelihood inference for `theta` with `n`, `k` and `q` known.
//!
//! The log-likelihood of an i.i.d. sample of run counts is maximized by
//! Brent's method on `[EPSILON, 1 - EPSILON]` from several starting points;
//! the likelihood-ratio interval endpoints are bracketed by scanning inward
//! from each domain edge and refined by bisection.

use std::fmt::Write as _;

use serde::Serialize;

use crate::dist::{ExactKernel, RunSpec};
use crate::error::{Error, Result};
use crate::qcalculus::QReal;

/// Distance of the optimization domain from 0 and 1.
pub const EPSILON: f64 = 1e-9;
/// PMF values below this are floored before taking logs.
pub const PMF_FLOOR: f64 = 1e-300;
/// Starting points of the multi-start optimizer.
pub const STARTS: [f64; 3] = [0.1, 0.5, 0.9];
/// An estimate this close to a domain edge is reported as a boundary hit.
pub const BOUNDARY_MARGIN: f64 = 1e-7;

const BRENT_TOL: f64 = 2.4e-9;
const BRENT_MAX_ITER: usize = 500;
const BRACKET_STEP: f64 = 0.01;
const GRID_POINTS: usize = 100;
const INNER_STEP: f64 = 0.01;
const OUTER_STEP: f64 = 0.002;
const BISECT_TOL: f64 = 1e-9;

/// Observed run counts from `N` sequences sharing `(n, k, q)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub spec: RunSpec,
    pub q: QReal,
    counts: Vec<usize>,
}

impl Sample {
    pub fn new(spec: RunSpec, q: QReal, counts: Vec<usize>) -> Result<Self> {
        if let Some(&x) = counts.iter().find(|&&x| !spec.in_support(x)) {
            return Err(Error::domain(format!(
                "count {x} outside support 0..={} for n = {}, k = {}",
                spec.support_max(),
                spec.n(),
                spec.k()
            )));
        }
        Ok(Sample { spec, q, counts })
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `(value, multiplicity)` pairs in increasing value order.
    pub fn histogram(&self) -> Vec<(usize, usize)> {
        let mut hist = vec![0usize; self.spec.support_max() + 1];
        for &x in &self.counts {
            hist[x] += 1;
        }
        hist.into_iter()
            .enumerate()
            .filter(|&(_, c)| c > 0)
            .collect()
    }

    /// Parses a header line `n k q` followed by one count per line.
    pub fn parse(text: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse { line, message };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header \"n k q\"".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(
                1,
                format!("header needs 3 fields \"n k q\", found {}", fields.len()),
            ));
        }
        let n: usize = fields[0]
            .parse()
            .map_err(|e| parse_err(1, format!("n: {e}")))?;
        let k: usize = fields[1]
            .parse()
            .map_err(|e| parse_err(1, format!("k: {e}")))?;
        let q: f64 = fields[2]
            .parse()
            .map_err(|e| parse_err(1, format!("q: {e}")))?;
        let spec = RunSpec::new(n, k).map_err(|e| parse_err(1, e.to_string()))?;
        let q = QReal::new(q).map_err(|e| parse_err(1, e.to_string()))?;
        let mut counts = Vec::new();
        for (i, line) in lines {
            let x: usize = line
                .trim()
                .parse()
                .map_err(|e| parse_err(i + 1, format!("{line:?}: {e}")))?;
            if !spec.in_support(x) {
                return Err(parse_err(
                    i + 1,
                    format!("count {x} outside support 0..={}", spec.support_max()),
                ));
            }
            counts.push(x);
        }
        Sample::new(spec, q, counts)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.spec.n(), self.spec.k(), self.q.value());
        for x in &self.counts {
            writeln!(out, "{x}").expect("writing to a String");
        }
        out
    }
}

/// A log-likelihood value and whether any PMF term was floored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikelihood {
    pub value: f64,
    pub floored: bool,
}

/// Log-likelihood evaluator for one sample. The `B_q` kernel does not depend
/// on `theta` and is built once; each call evaluates the PMF once per
/// distinct count.
#[derive(Debug, Clone)]
pub struct Likelihood {
    kernel: ExactKernel,
    groups: Vec<(usize, f64)>,
}

impl Likelihood {
    pub fn new(sample: &Sample) -> Self {
        Self::with_kernel(ExactKernel::new(sample.spec, sample.q), sample)
    }

    /// Reuses a kernel built for the sample's `(n, k, q)`.
    pub fn with_kernel(kernel: ExactKernel, sample: &Sample) -> Self {
        assert!(
            kernel.spec() == sample.spec && kernel.q() == sample.q,
            "kernel built for a different (n, k, q)"
        );
        Likelihood {
            kernel,
            groups: sample
                .histogram()
                .into_iter()
                .map(|(x, c)| (x, c as f64))
                .collect(),
        }
    }

    /// `sum_i log f(x_i; theta)`; `-inf` when an observed count is impossible.
    pub fn evaluate(&self, theta: f64) -> LogLikelihood {
        let mut value = 0.0;
        let mut floored = false;
        for &(x, c) in &self.groups {
            let p = self.kernel.pmf(x, theta);
            if p <= 0.0 {
                return LogLikelihood {
                    value: f64::NEG_INFINITY,
                    floored,
                };
            }
            let p = if p < PMF_FLOOR {
                floored = true;
                PMF_FLOOR
            } else {
                p
            };
            value += c * p.ln();
        }
        LogLikelihood { value, floored }
    }

    pub fn value(&self, theta: f64) -> f64 {
        self.evaluate(theta).value
    }
}

/// `l(theta)` for `theta` in `[0, 1]`.
pub fn log_likelihood(theta: f64, sample: &Sample) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::domain(format!("theta = {theta} outside [0, 1]")));
    }
    Ok(Likelihood::new(sample).value(theta))
}

/// Maximum-likelihood estimate and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MleResult {
    pub theta_hat: f64,
    pub log_likelihood: f64,
    pub at_lower_boundary: bool,
    pub at_upper_boundary: bool,
    /// Some PMF value at the estimate was floored.
    pub floored: bool,
}

impl MleResult {
    pub fn at_boundary(&self) -> bool {
        self.at_lower_boundary || self.at_upper_boundary
    }
}

/// Brent's minimizer on `[a, b]` started from `x0`. Stops once the bracket is
/// narrower than `4 * BRENT_TOL`.
fn brent_minimize(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, x0: f64) -> (f64, f64) {
    let golden = 0.5 * (3.0 - 5f64.sqrt());
    let (mut x, mut w, mut v) = (x0, x0, x0);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..BRENT_MAX_ITER {
        let m = 0.5 * (a + b);
        let tol = BRENT_TOL + 1e-15 * x.abs();
        let tol2 = 2.0 * tol;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden_step = true;
        if e.abs() > tol {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol } else { -tol };
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x < m { b - x } else { a - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol {
            x + d
        } else if d > 0.0 {
            x + tol
        } else {
            x - tol
        };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            (v, fv, w, fw, x, fx) = (w, fw, x, fx, u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv, w, fw) = (w, fw, u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    (x, fx)
}

/// Walks downhill from `x0` with growing steps until `f` rises again, giving
/// a bracket `[a, b]` around a local minimum (or ending at a domain edge).
fn bracket_downhill(f: &impl Fn(f64) -> f64, x0: f64, lo: f64, hi: f64) -> (f64, f64, f64) {
    let clamp = |x: f64| x.clamp(lo, hi);
    let f0 = f(x0);
    let dir = if f(clamp(x0 + BRACKET_STEP)) < f0 {
        1.0
    } else if f(clamp(x0 - BRACKET_STEP)) < f0 {
        -1.0
    } else {
        return (clamp(x0 - BRACKET_STEP), x0, clamp(x0 + BRACKET_STEP));
    };
    let edge = if dir > 0.0 { hi } else { lo };
    let (mut prev, mut cur, mut fcur) = (x0, x0, f0);
    let mut step = BRACKET_STEP;
    loop {
        let next = clamp(cur + dir * step);
        let fnext = f(next);
        if fnext > fcur || next == edge {
            let (a, b) = if prev < next {
                (prev, next)
            } else {
                (next, prev)
            };
            let start = if fnext <= fcur { next } else { cur };
            return (a, start, b);
        }
        (prev, cur, fcur) = (cur, next, fnext);
        step *= 1.618;
    }
}

/// MLE over `[EPSILON, 1 - EPSILON]` for a prepared likelihood.
///
/// Each start in [`STARTS`], and each local maximum of the likelihood on a
/// 0.01 grid, is bracketed by walking uphill and refined by Brent's method.
/// The domain edges are candidates too.
pub fn mle_with(likelihood: &Likelihood) -> Result<MleResult> {
    let (lo, hi) = (EPSILON, 1.0 - EPSILON);
    let objective = |t: f64| {
        let l = likelihood.value(t);
        if l.is_finite() {
            -l
        } else {
            f64::MAX
        }
    };
    let grid: Vec<f64> = (0..=GRID_POINTS)
        .map(|i| (i as f64 / GRID_POINTS as f64).clamp(lo, hi))
        .collect();
    let values: Vec<f64> = grid.iter().map(|&t| objective(t)).collect();
    let grid_modes =
        (1..GRID_POINTS).filter(|&i| values[i] <= values[i - 1] && values[i] <= values[i + 1]);
    let starts: Vec<f64> = STARTS
        .iter()
        .copied()
        .chain(grid_modes.map(|i| grid[i]))
        .collect();
    let mut candidates: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let (a, x0, b) = bracket_downhill(&objective, s, lo, hi);
            brent_minimize(objective, a, b, x0).0
        })
        .collect();
    candidates.extend([lo, hi]);
    let mut best: Option<(f64, f64)> = None;
    for t in candidates {
        let l = likelihood.value(t);
        if !l.is_finite() {
            continue;
        }
        best = match best {
            None => Some((t, l)),
            Some((bt, bl)) => {
                let slack = 1e-12 * bl.abs().max(1.0);
                if l > bl + slack || (l >= bl - slack && t < bt) {
                    Some((t, l))
                } else {
                    Some((bt, bl))
                }
            }
        };
    }
    let (theta_hat, _) = best.ok_or_else(|| {
        Error::Numerical("degenerate sample: log-likelihood is not finite at any start".into())
    })?;
    let at = likelihood.evaluate(theta_hat);
    Ok(MleResult {
        theta_hat,
        log_likelihood: at.value,
        at_lower_boundary: theta_hat - lo < BOUNDARY_MARGIN,
        at_upper_boundary: hi - theta_hat < BOUNDARY_MARGIN,
        floored: at.floored,
    })
}

pub fn mle(sample: &Sample) -> Result<MleResult> {
    if sample.is_empty() {
        return Err(Error::domain("sample must contain at least one count"));
    }
    mle_with(&Likelihood::new(sample))
}

/// Likelihood-ratio interval `{theta : 2 l(theta_hat) - 2 l(theta) <= chi2}`.
///
/// When that set is not connected (a secondary mode of the likelihood comes
/// within `chi2 / 2` of the maximum) the endpoints span all of it and
/// `disconnected` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    /// Confidence level `1 - alpha`.
    pub level: f64,
    /// The domain edge itself satisfies the condition; `lower` is that edge.
    pub lower_at_boundary: bool,
    /// The domain edge itself satisfies the condition; `upper` is that edge.
    pub upper_at_boundary: bool,
    pub disconnected: bool,
}

impl ConfidenceInterval {
    pub fn contains(&self, theta: f64) -> bool {
        self.lower <= theta && theta <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn at_boundary(&self) -> bool {
        self.lower_at_boundary || self.upper_at_boundary
    }
}

/// Bisects `[inside, outside]` where `h(inside) >= 0 > h(outside)`.
fn bisect(h: &impl Fn(f64) -> f64, mut inside: f64, mut outside: f64) -> f64 {
    while (outside - inside).abs() > BISECT_TOL {
        let mid = 0.5 * (inside + outside);
        if h(mid) < 0.0 {
            outside = mid;
        } else {
            inside = mid;
        }
    }
    0.5 * (inside + outside)
}

/// Walks from `from` towards `to` in steps of `step` until `h(next) < 0`
/// equals `want_negative`; returns `(previous, next)`.
fn scan(
    h: &impl Fn(f64) -> f64,
    from: f64,
    to: f64,
    step: f64,
    want_negative: bool,
) -> Option<(f64, f64)> {
    let dir = if to > from { 1.0 } else { -1.0 };
    let mut prev = from;
    loop {
        if prev == to {
            return None;
        }
        let next = prev + dir * step;
        let next = if (to - next) * dir <= 0.0 { to } else { next };
        if (h(next) < 0.0) == want_negative {
            return Some((prev, next));
        }
        prev = next;
    }
}

/// Outermost and innermost crossing between the estimate and one domain edge.
/// Returns `(endpoint, at_edge, disconnected)`.
fn side(h: &impl Fn(f64) -> f64, estimate: f64, edge: f64) -> (f64, bool, bool) {
    if h(edge) >= 0.0 {
        let inner_gap = scan(h, estimate, edge, INNER_STEP, true).is_some();
        return (edge, true, inner_gap);
    }
    let (outside, inside) = scan(h, edge, estimate, OUTER_STEP, false).expect("h(estimate) >= 0");
    let outer = bisect(h, inside, outside);
    let (inside, outside) = scan(h, estimate, edge, INNER_STEP, true).expect("h(edge) < 0");
    let inner = bisect(h, inside, outside);
    (outer, false, (outer - inner).abs() > 10.0 * BISECT_TOL)
}

/// LR interval around a known MLE.
pub fn lr_interval_with(
    likelihood: &Likelihood,
    estimate: &MleResult,
    alpha: f64,
) -> Result<ConfidenceInterval> {
    let chi2 = chi_square_quantile(alpha)?;
    let target = estimate.log_likelihood - 0.5 * chi2;
    let h = |t: f64| {
        let l = likelihood.value(t);
        if l.is_nan() {
            f64::NEG_INFINITY
        } else {
            l - target
        }
    };
    let t = estimate.theta_hat;
    let (lower, lower_at_boundary, gap_below) = side(&h, t, EPSILON);
    let (upper, upper_at_boundary, gap_above) = side(&h, t, 1.0 - EPSILON);
    Ok(ConfidenceInterval {
        lower: lower.min(t),
        upper: upper.max(t),
        level: 1.0 - alpha,
        lower_at_boundary,
        upper_at_boundary,
        disconnected: gap_below || gap_above,
    })
}

pub fn lr_interval(sample: &Sample, alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    let likelihood = Likelihood::new(sample);
    let estimate = mle(sample)?;
    lr_interval_with(&likelihood, &estimate, alpha)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha = {alpha} outside (0, 1)")));
    }
    Ok(())
}

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower and upper incomplete gamma `(P(a, x), Q(a, x))`.
fn incomplete_gamma(a: f64, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        let p = (sum.ln() + log_prefactor).exp();
        (p, 1.0 - p)
    } else {
        // Modified Lentz on the continued fraction for Q.
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let q = (h.ln() + log_prefactor).exp();
        (1.0 - q, q)
    }
}

pub fn erf(x: f64) -> f64 {
    let p = incomplete_gamma(0.5, x * x).0;
    if x < 0.0 {
        -p
    } else {
        p
    }
}

pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        1.0 + incomplete_gamma(0.5, x * x).0
    } else {
        incomplete_gamma(0.5, x * x).1
    }
}

/// `P(X > x)` for `X ~ chi-square(df)`.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    incomplete_gamma(0.5 * df, 0.5 * x).1
}

/// Upper-`alpha` quantile of chi-square with one degree of freedom, by
/// bisection on `P(X > x) = erfc(sqrt(x / 2))`.
pub fn chi_square_quantile(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let sf = |x: f64| erfc((0.5 * x).sqrt());
    let mut hi = 1.0;
    while sf(hi) > alpha {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if sf(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
