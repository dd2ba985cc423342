//! Deciding whether a profile is GDP at all, and checking head or tail
//! conditions against a candidate `mu`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::GdpError;
use crate::gdpt::{self, MeasurementConfig};
use crate::numfmt::serialize_real;
use crate::profiles::PrivacyProfile;
use crate::specfun;

/// Exponents `k` of the numeric sample points `eps = 2^k`.
const SAMPLE_EXPONENTS: std::ops::RangeInclusive<i32> = 3..=14;

/// Tail checks past this point rely on the tail estimate.
pub const TAIL_WINDOW_MIN: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    Analytic,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Converging,
    Diverging,
    Inconclusive,
}

/// Stopping rule for the numeric tail estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendThresholds {
    /// Largest relative change across the last three samples still read as converged.
    pub converge_rel: f64,
    /// Smallest growth per doubling, sustained over the last three samples, read as divergence.
    pub diverge_growth: f64,
}

impl Default for TrendThresholds {
    fn default() -> Self {
        Self { converge_rel: 0.01, diverge_growth: 0.10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailEstimate {
    pub kind: EstimateKind,
    #[serde(serialize_with = "serialize_real")]
    pub mu_t: f64,
    /// `(eps, eps^2 / (-2 ln delta(eps)))` at `eps = 2^k`.
    pub samples: Vec<TailSample>,
    pub trend: Trend,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailSample {
    pub eps: f64,
    #[serde(serialize_with = "serialize_real")]
    pub ratio: f64,
}

impl TailEstimate {
    pub fn is_finite(&self) -> bool {
        self.trend == Trend::Converging && self.mu_t.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Gdp,
    NotGdp,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub verdict: Verdict,
    /// Lower bound on any `mu` the profile can satisfy; not necessarily achievable.
    #[serde(serialize_with = "serialize_real")]
    pub mu_lower_bound: f64,
    pub evidence: TailEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Head,
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadTailQuery {
    pub boundary_eps: f64,
    pub mu: f64,
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Holds,
    Fails,
    Inconclusive,
}

fn ratio(eps: f64, ln_delta: f64) -> f64 {
    if ln_delta == f64::NEG_INFINITY {
        0.0
    } else {
        eps * eps / (-2.0 * ln_delta)
    }
}

fn numeric_samples(p: &PrivacyProfile) -> Vec<TailSample> {
    SAMPLE_EXPONENTS
        .map(|k| {
            let eps = 2f64.powi(k);
            TailSample { eps, ratio: ratio(eps, p.ln_delta(eps)) }
        })
        .collect()
}

fn trend_of(samples: &[TailSample], th: &TrendThresholds) -> Trend {
    let r: Vec<f64> = samples.iter().rev().take(3).rev().map(|s| s.ratio).collect();
    if r.iter().any(|x| x.is_nan()) {
        return Trend::Inconclusive;
    }
    if r[2] == f64::INFINITY {
        return Trend::Diverging;
    }
    let rel = |a: f64, b: f64| if a == b { 0.0 } else { (b - a).abs() / a.abs().max(b.abs()) };
    if rel(r[0], r[1]) < th.converge_rel && rel(r[1], r[2]) < th.converge_rel {
        return Trend::Converging;
    }
    let grows = |a: f64, b: f64| b > a * (1.0 + th.diverge_growth);
    if grows(r[0], r[1]) && grows(r[1], r[2]) {
        return Trend::Diverging;
    }
    Trend::Inconclusive
}

/// Limit of `sqrt(eps^2 / (-2 ln delta(eps)))` as `eps -> inf`.
pub fn tail_limit(p: &PrivacyProfile) -> TailEstimate {
    tail_limit_with(p, &TrendThresholds::default())
}

pub fn tail_limit_with(p: &PrivacyProfile, th: &TrendThresholds) -> TailEstimate {
    let samples = numeric_samples(p);
    if let Some(mu_t) = p.analytic_tail_limit() {
        let trend = if mu_t.is_finite() { Trend::Converging } else { Trend::Diverging };
        return TailEstimate { kind: EstimateKind::Analytic, mu_t, samples, trend };
    }
    let trend = trend_of(&samples, th);
    let mu_t = match trend {
        Trend::Diverging => f64::INFINITY,
        _ => samples.last().map_or(f64::NAN, |s| s.ratio.sqrt()),
    };
    TailEstimate { kind: EstimateKind::Numeric, mu_t, samples, trend }
}

/// GDP iff the tail estimate is finite.
pub fn classify(p: &PrivacyProfile) -> Classification {
    classify_with(p, &TrendThresholds::default())
}

pub fn classify_with(p: &PrivacyProfile, th: &TrendThresholds) -> Classification {
    let evidence = tail_limit_with(p, th);
    let verdict = match evidence.trend {
        Trend::Converging if evidence.mu_t.is_finite() => Verdict::Gdp,
        Trend::Diverging => Verdict::NotGdp,
        _ => Verdict::Inconclusive,
    };
    let mu_lower_bound = if verdict == Verdict::Gdp { evidence.mu_t } else { f64::INFINITY };
    Classification { verdict, mu_lower_bound, evidence }
}

/// Checks `(boundary_eps, mu)`-head or -tail GDP with error budget `1/c`.
pub fn check_condition(p: &PrivacyProfile, q: &HeadTailQuery, c: f64) -> Outcome {
    check_condition_with(p, q, &MeasurementConfig { c, ..MeasurementConfig::default() })
}

/// As [`check_condition`]; `cfg.eps_h` is replaced by the query boundary.
pub fn check_condition_with(p: &PrivacyProfile, q: &HeadTailQuery, cfg: &MeasurementConfig) -> Outcome {
    if !(q.mu > 0.0 && q.mu.is_finite() && q.boundary_eps >= 0.0 && q.boundary_eps.is_finite()) {
        return Outcome::Inconclusive;
    }
    match q.side {
        Side::Head => check_head(p, q, cfg),
        Side::Tail => check_tail(p, q, cfg.c),
    }
}

/// `delta(eps) > delta_mu(eps)` certifies that the condition fails at `eps`.
fn violates(p: &PrivacyProfile, mu: f64, eps: f64) -> bool {
    specfun::ln_delta_mu(mu, eps).is_ok_and(|curve| p.ln_delta(eps) > curve)
}

fn check_head(p: &PrivacyProfile, q: &HeadTailQuery, cfg: &MeasurementConfig) -> Outcome {
    if q.boundary_eps == 0.0 {
        return match gdpt::gdpt_eval_with(p, 0.0, 1.0 / (2.0 * cfg.c), cfg.mu_max) {
            Ok(b) if q.mu >= b.mu_hi => Outcome::Holds,
            _ if violates(p, q.mu, 0.0) => Outcome::Fails,
            _ => Outcome::Inconclusive,
        };
    }
    let cfg = MeasurementConfig { eps_h: q.boundary_eps, ..*cfg };
    match gdpt::head_measure(p, &cfg) {
        Ok(r) if q.mu >= r.bracket.mu_hi => Outcome::Holds,
        Ok(r) if q.mu < r.bracket.mu_lo => Outcome::Fails,
        Ok(_) => Outcome::Inconclusive,
        Err(GdpError::CeilingExceeded { eps, .. }) => {
            if violates(p, q.mu, 0.0) || violates(p, q.mu, eps) {
                Outcome::Fails
            } else {
                Outcome::Inconclusive
            }
        }
        Err(_) => Outcome::Inconclusive,
    }
}

fn check_tail(p: &PrivacyProfile, q: &HeadTailQuery, c: f64) -> Outcome {
    let start = q.boundary_eps;
    let end = (2.0 * start).max(TAIL_WINDOW_MIN);
    let d = 1.0 / (8f64.sqrt() * c * PI);
    let steps = ((end - start) / d).ceil() as usize;
    let d = (end - start) / steps as f64;
    let curve = |x: f64| specfun::ln_delta_mu(q.mu, x).unwrap_or(f64::NAN);

    let mut window_ok = true;
    let mut prev = p.ln_delta(start);
    if prev > curve(start) {
        return Outcome::Fails;
    }
    for i in 1..=steps {
        let x = start + i as f64 * d;
        let cur = p.ln_delta(x);
        let at = curve(x);
        if cur > at {
            return Outcome::Fails;
        }
        // delta is non-increasing, so delta(x_{i-1}) <= delta_mu(x_i) covers the whole cell
        if !(prev <= at) {
            window_ok = false;
        }
        prev = cur;
    }
    let tail = tail_limit(p);
    if window_ok && tail.is_finite() && tail.mu_t <= q.mu {
        Outcome::Holds
    } else {
        Outcome::Inconclusive
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{builtin_profile, TradeoffEquation};

    fn laplace() -> PrivacyProfile {
        builtin_profile(&TradeoffEquation::Laplace { sensitivity: 2.0, scale: 1.0 }).unwrap()
    }

    fn sgd() -> PrivacyProfile {
        builtin_profile(&TradeoffEquation::SgdLike { a: 2.0, b: 1.0, sigma: 2.0 }).unwrap()
    }

    fn icea() -> PrivacyProfile {
        builtin_profile(&TradeoffEquation::Icea { m: 20, n: 4 }).unwrap()
    }

    /// Same curve without the family's closed-form limit.
    fn opaque(p: PrivacyProfile) -> PrivacyProfile {
        PrivacyProfile::from_ln_fn("opaque", move |e| p.ln_delta(e)).unwrap()
    }

    fn slow() -> PrivacyProfile {
        // ratio grows like ln(eps): about 7% per doubling near eps = 2^13
        PrivacyProfile::from_ln_fn("slow", |e: f64| -e * e / (1.0 + (1.0 + e).ln())).unwrap()
    }

    #[test]
    fn analytic_limits() {
        assert_eq!(tail_limit(&laplace()).mu_t, 0.0);
        assert!((tail_limit(&sgd()).mu_t - 0.5f64.sqrt()).abs() < 1e-15);
        let t = tail_limit(&icea());
        assert_eq!(t.mu_t, f64::INFINITY);
        assert_eq!(t.trend, Trend::Diverging);
        assert_eq!(tail_limit(&PrivacyProfile::gdp_curve(2.0).unwrap()).mu_t, 2.0);
    }

    #[test]
    fn numeric_limits_match_analytic() {
        let t = tail_limit(&opaque(sgd()));
        assert_eq!(t.kind, EstimateKind::Numeric);
        assert_eq!(t.trend, Trend::Converging);
        assert!((t.mu_t - 0.5f64.sqrt()).abs() < 1e-12);

        let t = tail_limit(&opaque(laplace()));
        assert_eq!((t.trend, t.mu_t), (Trend::Converging, 0.0));

        let t = tail_limit(&opaque(icea()));
        assert_eq!((t.trend, t.mu_t), (Trend::Diverging, f64::INFINITY));

        for mu in [0.5, 2.0, 5.0] {
            let t = tail_limit(&opaque(PrivacyProfile::gdp_curve(mu).unwrap()));
            assert!((t.mu_t - mu).abs() < 0.02 * mu, "{mu}: {}", t.mu_t);
        }
        let s = &t.samples;
        assert_eq!(s.len(), 12);
        assert!(s.windows(2).all(|w| w[0].eps < w[1].eps));
    }

    #[test]
    fn thresholds_are_configurable() {
        let p = slow();
        assert_eq!(tail_limit(&p).trend, Trend::Inconclusive);
        let loose = TrendThresholds { converge_rel: 0.01, diverge_growth: 0.05 };
        assert_eq!(tail_limit_with(&p, &loose).trend, Trend::Diverging);
    }

    #[test]
    fn classify_examples() {
        let c = classify(&laplace());
        assert_eq!((c.verdict, c.mu_lower_bound), (Verdict::Gdp, 0.0));
        assert_eq!(classify(&icea()).verdict, Verdict::NotGdp);
        let c = classify(&PrivacyProfile::gdp_curve(2.0).unwrap());
        assert_eq!((c.verdict, c.mu_lower_bound), (Verdict::Gdp, 2.0));
        let v = serde_json::to_value(classify(&icea())).unwrap();
        assert_eq!(v["mu_lower_bound"], "inf");
        assert_eq!(v["evidence"]["samples"].as_array().unwrap().len(), 12);
    }

    #[test]
    fn head_checks() {
        let p = PrivacyProfile::gdp_curve(2.0).unwrap();
        let q = |mu| HeadTailQuery { boundary_eps: 5.0, mu, side: Side::Head };
        assert_eq!(check_condition(&p, &q(2.01), 1000.0), Outcome::Holds);
        assert_eq!(check_condition(&p, &q(1.9), 1000.0), Outcome::Fails);
        assert_eq!(check_condition(&p, &q(2.0), 1000.0), Outcome::Inconclusive);
    }

    #[test]
    fn head_ceiling_is_a_failure_when_certified() {
        let q = HeadTailQuery { boundary_eps: 2.0, mu: 3.0, side: Side::Head };
        assert_eq!(check_condition(&icea(), &q, 100.0), Outcome::Fails);
    }

    #[test]
    fn tail_checks() {
        let q = HeadTailQuery { boundary_eps: 2.0, mu: 0.1, side: Side::Tail };
        assert_eq!(check_condition(&laplace(), &q, 100.0), Outcome::Holds);
        let q = HeadTailQuery { boundary_eps: 2.0, mu: 1.0, side: Side::Tail };
        assert_eq!(check_condition(&sgd(), &q, 100.0), Outcome::Holds);
        let q = HeadTailQuery { boundary_eps: 1.0, mu: 1.0, side: Side::Tail };
        assert_eq!(check_condition(&sgd(), &q, 100.0), Outcome::Fails);
        let q = HeadTailQuery { boundary_eps: 1.0, mu: 0.5, side: Side::Tail };
        assert_eq!(check_condition(&sgd(), &q, 100.0), Outcome::Fails);
        let q = HeadTailQuery { boundary_eps: 1.0, mu: 5.0, side: Side::Tail };
        assert_eq!(check_condition(&icea(), &q, 100.0), Outcome::Fails);
        // passes the finite window but the tail estimate never settles
        let q = HeadTailQuery { boundary_eps: 1.0, mu: 10.0, side: Side::Tail };
        assert_eq!(check_condition(&slow(), &q, 100.0), Outcome::Inconclusive);
    }
}
