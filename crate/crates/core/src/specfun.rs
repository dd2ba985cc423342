//! Standard normal CDF, its inverse, and the Gaussian privacy curve.
//!
//! Everything here works in log space where the linear value would
//! underflow. The GDP curve
//!
//! ```text
//! delta_mu(eps) = Phi(-eps/mu + mu/2) - e^eps * Phi(-eps/mu - mu/2)
//! ```
//!
//! is a difference of two terms that both vanish (and agree) as `eps`
//! grows, so the evaluation switches to a Mills-ratio form
//! `phi(a) * (M(a) - M(b))` once the terms are close or deep in the tail.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{domain, Result};

/// ln(sqrt(2π))
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// `1/sqrt(pi)`
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Below this, `erfc` is a normal double and the direct route is exact enough.
const ERFC_DIRECT_LIMIT: f64 = 26.0;

/// `ln(1e-300)`: curve values below this are reported as zero with a flag.
pub const LN_DELTA_FLOOR: f64 = -690.775_527_898_213_7;

/// Relative agreement of the two curve terms that triggers the Mills-ratio route.
const TERM_AGREEMENT: f64 = 1e-6;

/// Natural log of a probability, always `<= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogProb(f64);

impl LogProb {
    pub fn new(log_value: f64) -> Result<Self> {
        if log_value.is_nan() || log_value > 0.0 {
            return Err(domain(format!("log-probability {log_value} is not <= 0")));
        }
        Ok(Self(log_value))
    }

    /// Clamps tiny positive rounding excess to zero.
    pub(crate) fn saturating(log_value: f64) -> Self {
        Self(log_value.min(0.0))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn to_linear(self) -> f64 {
        self.0.exp()
    }
}

/// `Phi(t)` in linear and log form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfValue {
    pub value: f64,
    pub ln: LogProb,
}

/// `exp(x*x)` with the square split into a head and an exact tail so the
/// rounding of `x*x` does not get amplified by the exponential.
fn exp_square(x: f64) -> f64 {
    let hi = x * x;
    let lo = x.mul_add(x, -hi);
    hi.exp() * lo.exp()
}

/// Scaled complementary error function `exp(x^2) * erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 * exp_square(x) - erfcx(-x);
    }
    if x < ERFC_DIRECT_LIMIT {
        return exp_square(x) * libm::erfc(x);
    }
    if x.is_infinite() {
        return 0.0;
    }
    // Continued fraction x + (1/2)/(x + (2/2)/(x + (3/2)/(x + ...))),
    // evaluated backwards. At x >= 26 forty terms are far past convergence.
    let mut f = x;
    for n in (1..=40).rev() {
        f = x + 0.5 * f64::from(n) / f;
    }
    FRAC_1_SQRT_PI / f
}

/// `ln Phi(t)`.
///
/// For `t < 0` this never goes through `1 - Phi(-t)`.
pub fn ln_normal_cdf(t: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t >= 0.0 {
        return (-0.5 * libm::erfc(t / SQRT_2)).ln_1p();
    }
    let x = -t / SQRT_2;
    if x < ERFC_DIRECT_LIMIT {
        (0.5 * libm::erfc(x)).ln()
    } else if x.is_infinite() {
        f64::NEG_INFINITY
    } else {
        (0.5 * erfcx(x)).ln() - x * x
    }
}

/// `Phi(t)` in both forms. The linear form saturates to 0 or 1.
pub fn normal_cdf(t: f64) -> CdfValue {
    CdfValue {
        value: 0.5 * libm::erfc(-t / SQRT_2),
        ln: LogProb::saturating(ln_normal_cdf(t)),
    }
}

/// Mills ratio `Phi(t) / phi(t)`; finite for every finite `t < 26`.
pub fn mills_ratio(t: f64) -> f64 {
    (PI / 2.0).sqrt() * erfcx(-t / SQRT_2)
}

/// `ln phi(t)`, the log standard normal density.
pub fn ln_normal_pdf(t: f64) -> f64 {
    -0.5 * t * t - LN_SQRT_2PI
}

/// Inverse of the standard normal CDF.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("quantile probability {p} not in (0, 1)")));
    }
    if p <= 0.5 {
        Ok(lower_quantile_from_ln(p.ln()))
    } else {
        // 1 - p is exact here.
        Ok(-lower_quantile_from_ln((1.0 - p).ln()))
    }
}

/// Quantile of a probability given by its log, so `p` may lie far below
/// the smallest double.
pub fn normal_quantile_ln(ln_p: f64) -> Result<f64> {
    if ln_p.is_nan() || ln_p >= 0.0 || ln_p == f64::NEG_INFINITY {
        return Err(domain(format!("log-probability {ln_p} not in (-inf, 0)")));
    }
    if ln_p <= -std::f64::consts::LN_2 {
        Ok(lower_quantile_from_ln(ln_p))
    } else {
        normal_quantile(ln_p.exp())
    }
}

fn lower_quantile_from_ln(ln_p: f64) -> f64 {
    let mut x = if ln_p > -700.0 {
        -SQRT_2 * erfc_inv(2.0 * ln_p.exp())
    } else {
        let l = -2.0 * ln_p;
        -(l - l.ln() - (2.0 * PI).ln()).sqrt()
    };
    // Newton on ln Phi(x) = ln_p; the derivative of ln Phi is 1 / M(x).
    for _ in 0..6 {
        let step = (ln_normal_cdf(x) - ln_p) * mills_ratio(x);
        x -= step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

fn check_curve_args(mu: f64, eps: f64) -> Result<()> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(domain(format!("mu must be finite and > 0, got {mu}")));
    }
    if !(eps >= 0.0) {
        return Err(domain(format!("eps must be >= 0, got {eps}")));
    }
    Ok(())
}

/// One evaluation of the GDP curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaEval {
    /// Linear value; exactly zero when `floored` is set.
    pub value: f64,
    pub ln_value: f64,
    /// The true value is positive but below `1e-300`.
    pub floored: bool,
}

/// `ln delta_mu(eps)`.
pub fn ln_delta_mu(mu: f64, eps: f64) -> Result<f64> {
    check_curve_args(mu, eps)?;
    if eps.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    let a = -eps / mu + mu / 2.0;
    let b = a - mu;
    let ln_first = ln_normal_cdf(a);
    let ln_second = eps + ln_normal_cdf(b);
    let gap = ln_first - ln_second;

    let ln = if a >= -1.0 && gap > TERM_AGREEMENT {
        // delta = t1 * (1 - t2/t1)
        ln_first + (-(-gap).exp_m1()).ln()
    } else {
        // e^eps * phi(b) == phi(a), so delta = phi(a) * (M(a) - M(b)).
        let diff = mills_ratio(a) - mills_ratio(b);
        if diff > 0.0 {
            ln_normal_pdf(a) + diff.ln()
        } else {
            // M(a) and M(b) round to the same double; only reachable far
            // into the tail where the asymptotic form is exact to rounding.
            ln_delta_mu_tilde(mu, eps)?
        }
    };
    Ok(ln.min(0.0))
}

/// The GDP curve with the underflow flag.
pub fn delta_mu_eval(mu: f64, eps: f64) -> Result<DeltaEval> {
    let ln_value = ln_delta_mu(mu, eps)?;
    let floored = ln_value < LN_DELTA_FLOOR;
    Ok(DeltaEval {
        value: if floored { 0.0 } else { ln_value.exp() },
        ln_value,
        floored: floored && ln_value > f64::NEG_INFINITY,
    })
}

/// `delta_mu(eps)` in `[0, 1]`; values below `1e-300` come back as 0.
pub fn delta_mu(mu: f64, eps: f64) -> Result<f64> {
    delta_mu_eval(mu, eps).map(|d| d.value)
}

fn tilde_a(mu: f64, eps: f64) -> Result<f64> {
    check_curve_args(mu, eps)?;
    let a = -eps / mu + mu / 2.0;
    let scale = (eps / mu).max(mu / 2.0).max(1.0);
    if a.abs() <= 8.0 * f64::EPSILON * scale {
        return Err(domain(format!(
            "asymptotic curve undefined at eps = mu^2/2 (mu = {mu}, eps = {eps})"
        )));
    }
    Ok(a)
}

/// `ln` of the asymptotic surrogate `mu * exp(-a^2/2) / (sqrt(2 pi) a^2)`.
pub fn ln_delta_mu_tilde(mu: f64, eps: f64) -> Result<f64> {
    let a = tilde_a(mu, eps)?;
    Ok(mu.ln() + ln_normal_pdf(a) - 2.0 * a.abs().ln())
}

/// Asymptotic surrogate of the GDP curve; its ratio to `delta_mu` tends to
/// one as `eps` grows. Errors at the `a = 0` singularity.
pub fn delta_mu_tilde(mu: f64, eps: f64) -> Result<f64> {
    ln_delta_mu_tilde(mu, eps).map(f64::exp)
}

/// Two-sided elementary bounds on `sqrt(pi/2) * exp(t^2/2) * Phi(t)` for `t < 0`.
pub fn mills_bounds(t: f64) -> Result<(f64, f64)> {
    if !(t < 0.0 && t.is_finite()) {
        return Err(domain(format!("mills bounds need finite t < 0, got {t}")));
    }
    let lower = 1.0 / (-t + (t * t + 4.0).sqrt());
    let upper = 1.0 / (-t + (t * t + 4.0 / FRAC_PI_2).sqrt());
    Ok((lower, upper))
}
