//! k-fold composition of pure-DP mechanisms under several accounting rules.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, GdpError, Result};
use crate::gdpt::{head_measure, GdpInterval, MeasurementConfig};
use crate::identify::{classify, Verdict};
use crate::numfmt;
use crate::profiles::{builtin_profile, PrivacyProfile, ProfileCurve, TradeoffEquation};
use crate::specfun;
use crate::transform::pure_to_gdp;

/// Largest `k * eps` accepted by [`optimal_profile_pure`].
pub const OVERFLOW_GUARD: f64 = 300.0;

/// Search range of `eps` when inverting a GDP curve.
const INVERT_EPS_MAX: f64 = 50.0;

/// Search range of `ln(alpha - 1)` for the Renyi conversion.
const LN_ALPHA_RANGE: (f64, f64) = (-10.0, 10.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionScenario {
    /// Per-step pure-DP level.
    pub eps: f64,
    pub k: u32,
    pub delta_targets: Vec<f64>,
}

impl CompositionScenario {
    pub fn new(eps: f64, k: u32, delta_targets: Vec<f64>) -> Result<Self> {
        let s = Self { eps, k, delta_targets };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(invalid(format!("eps must be finite and > 0, got {}", self.eps)));
        }
        if self.k == 0 {
            return Err(invalid("k must be >= 1"));
        }
        if let Some(d) = self.delta_targets.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
            return Err(invalid(format!("delta targets must lie in (0, 1), got {d}")));
        }
        Ok(())
    }

    fn total(&self) -> f64 {
        f64::from(self.k) * self.eps
    }
}

/// `sqrt(sum mu_i^2)`.
pub fn gdp_compose(mus: &[f64]) -> f64 {
    let scale = mus.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * mus.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}

/// Smallest `eps'` implied by `(k eps, 0)`-DP at level `delta`.
pub fn basic_compose_eps(s: &CompositionScenario, delta: f64) -> f64 {
    let total = s.total();
    // ln(e^K - delta (1 + e^K)) = K + ln(1 - delta (1 + e^-K))
    let inner = 1.0 - delta * (1.0 + (-total).exp());
    if inner <= 0.0 {
        return 0.0;
    }
    (total + inner.ln()).clamp(0.0, total)
}

pub fn advanced_compose_eps(s: &CompositionScenario, delta_prime: f64) -> f64 {
    let k = f64::from(s.k);
    (2.0 * k * (1.0 / delta_prime).ln()).sqrt() * s.eps + k * s.eps * s.eps.exp_m1()
}

/// Renyi bound of order `alpha` for one `eps`-DP step.
fn renyi_pure(eps: f64, alpha: f64) -> f64 {
    eps.min(2.0 * alpha * eps * eps)
}

/// Composes per-step Renyi bounds and converts back to `(eps', delta)`.
pub fn rdp_compose_eps(s: &CompositionScenario, delta: f64) -> f64 {
    let k = f64::from(s.k);
    let ln_inv = (1.0 / delta).ln();
    let cost = |t: f64| {
        let alpha = 1.0 + t.exp();
        k * renyi_pure(s.eps, alpha) + ln_inv / (alpha - 1.0)
    };
    let (lo, hi) = LN_ALPHA_RANGE;
    let cells = 400;
    let h = (hi - lo) / f64::from(cells);
    let best = (0..=cells)
        .map(|i| lo + f64::from(i) * h)
        .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
        .unwrap_or(lo);
    let refined = golden_min(cost, (best - h).max(lo), (best + h).min(hi));
    cost(refined).min(cost(best))
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..100 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

fn ln_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Exact profile of `k` composed randomized-response steps, the worst case
/// among `eps`-DP mechanisms.
struct OptimalCurve {
    eps: f64,
    k: u32,
    ln_binom: Vec<f64>,
    ln_norm: f64,
}

impl OptimalCurve {
    /// Indices `l` whose privacy loss `(k - 2l) eps` exceeds `x`.
    fn active(&self, x: f64) -> impl Iterator<Item = usize> + '_ {
        let k = f64::from(self.k);
        (0..=self.k as usize).take_while(move |&l| (k - 2.0 * l as f64) * self.eps > x)
    }
}

impl ProfileCurve for OptimalCurve {
    fn family(&self) -> String {
        format!("optimal({}, {})", self.k, self.eps)
    }
    fn delta(&self, eps: f64) -> f64 {
        self.ln_delta(eps).exp()
    }
    fn ln_delta(&self, x: f64) -> f64 {
        let k = f64::from(self.k);
        self.active(x)
            .map(|l| {
                let l_f = l as f64;
                let gap = (k - 2.0 * l_f) * self.eps - x;
                self.ln_binom[l] + (k - l_f) * self.eps + (-(-gap).exp_m1()).ln()
            })
            .fold(f64::NEG_INFINITY, ln_add)
            - self.ln_norm
    }
    fn derivative(&self, x: f64) -> Option<f64> {
        let ln = self
            .active(x)
            .map(|l| self.ln_binom[l] + x + l as f64 * self.eps)
            .fold(f64::NEG_INFINITY, ln_add);
        Some(-(ln - self.ln_norm).exp())
    }
    fn tail_limit(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Optimal privacy profile of `k`-fold composition of `eps`-DP mechanisms,
/// exact at every `eps'` (not only at the loss atoms `(k - 2i) eps`).
pub fn optimal_profile_pure(eps: f64, k: u32) -> Result<PrivacyProfile> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid(format!("eps must be finite and > 0, got {eps}")));
    }
    if k == 0 {
        return Err(invalid("k must be >= 1"));
    }
    let total = f64::from(k) * eps;
    if total > OVERFLOW_GUARD {
        return Err(GdpError::OverflowGuard(total));
    }
    let kf = f64::from(k);
    let ln_binom = (0..=k)
        .map(|l| {
            let l = f64::from(l);
            libm::lgamma(kf + 1.0) - libm::lgamma(l + 1.0) - libm::lgamma(kf - l + 1.0)
        })
        .collect();
    let ln_norm = kf * (eps + (-eps).exp().ln_1p());
    PrivacyProfile::new(OptimalCurve { eps, k, ln_binom, ln_norm })
}

/// Smallest `eps` with `delta_mu(eps) <= delta`, by bisection on `[0, 50]`.
pub fn gdp_eps_for_delta(mu: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if mu == 0.0 {
        return Ok(0.0);
    }
    let ln_target = delta.ln();
    if specfun::ln_delta_mu(mu, 0.0)? <= ln_target {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, INVERT_EPS_MAX);
    if specfun::ln_delta_mu(mu, hi)? > ln_target {
        return Err(invalid(format!("no eps <= {INVERT_EPS_MAX} reaches delta {delta} for mu {mu}")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if specfun::ln_delta_mu(mu, mid)? > ln_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Smallest `eps` with `p(eps) <= delta`.
pub fn profile_eps_for_delta(p: &PrivacyProfile, delta: f64) -> Result<f64> {
    let ln_target = delta.ln();
    if p.ln_delta(0.0) <= ln_target {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while p.ln_delta(hi) > ln_target {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(invalid(format!("profile stays above {delta} up to eps = 1e6")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if p.ln_delta(mid) > ln_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Head-measured `mu` of a GDP profile, after checking its tail is finite.
pub fn gdp_summarize(p: &PrivacyProfile, eps_h: f64, c: f64) -> Result<GdpInterval> {
    gdp_summarize_with(p, &MeasurementConfig::new(eps_h, c))
}

pub fn gdp_summarize_with(p: &PrivacyProfile, cfg: &MeasurementConfig) -> Result<GdpInterval> {
    let class = classify(p);
    if class.verdict != Verdict::Gdp {
        return Err(invalid(format!("{} has no finite tail limit ({:?})", p.family(), class.verdict)));
    }
    Ok(head_measure(p, cfg)?.bracket)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Basic,
    Advanced,
    Rdp,
    Gdp,
    GdpLap,
    Optimal,
    GdpSummary,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Basic,
        Method::Advanced,
        Method::Rdp,
        Method::Gdp,
        Method::GdpLap,
        Method::Optimal,
        Method::GdpSummary,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Basic => "basic",
            Self::Advanced => "advanced",
            Self::Rdp => "rdp",
            Self::Gdp => "gdp",
            Self::GdpLap => "gdp_lap",
            Self::Optimal => "optimal",
            Self::GdpSummary => "gdp_summary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub delta: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionReport {
    pub scenario: CompositionScenario,
    /// `eps'` per method, one entry per delta target.
    pub rows: BTreeMap<Method, Vec<f64>>,
    pub mu_values: BTreeMap<Method, f64>,
    /// `delta -> eps'` samples for plotting.
    pub curves: BTreeMap<Method, Vec<CurvePoint>>,
}

/// Delta grid for the plotting curves.
fn curve_deltas() -> Vec<f64> {
    (0..=60).map(|i| 10f64.powf(-1.0 - 5.0 * f64::from(i) / 60.0)).collect()
}

pub fn build_report(s: &CompositionScenario, cfg: &MeasurementConfig) -> Result<CompositionReport> {
    s.validate()?;
    let k = s.k as usize;
    let mut mu_values = BTreeMap::new();

    let mu_gdp = gdp_compose(&vec![pure_to_gdp(s.eps)?; k]);
    mu_values.insert(Method::Gdp, mu_gdp);

    let laplace = builtin_profile(&TradeoffEquation::Laplace { sensitivity: s.eps, scale: 1.0 })?;
    let per_step = head_measure(&laplace, cfg)?.bracket.mu_hi;
    let mu_lap = gdp_compose(&vec![per_step; k]);
    mu_values.insert(Method::GdpLap, mu_lap);

    let optimal = optimal_profile_pure(s.eps, s.k)?;
    let cfg_summary = MeasurementConfig { eps_h: cfg.eps_h.max(s.total()), ..*cfg };
    let mu_summary = gdp_summarize_with(&optimal, &cfg_summary)?.mu_hi;
    mu_values.insert(Method::GdpSummary, mu_summary);

    let eps_at = |method: Method, delta: f64| -> Result<f64> {
        match method {
            Method::Basic => Ok(basic_compose_eps(s, delta)),
            Method::Advanced => Ok(advanced_compose_eps(s, delta)),
            Method::Rdp => Ok(rdp_compose_eps(s, delta)),
            Method::Gdp => gdp_eps_for_delta(mu_gdp, delta),
            Method::GdpLap => gdp_eps_for_delta(mu_lap, delta),
            Method::Optimal => profile_eps_for_delta(&optimal, delta),
            Method::GdpSummary => gdp_eps_for_delta(mu_summary, delta),
        }
    };

    let mut rows = BTreeMap::new();
    let mut curves = BTreeMap::new();
    let deltas = curve_deltas();
    for method in Method::ALL {
        let row = s.delta_targets.iter().map(|&d| eps_at(method, d)).collect::<Result<Vec<_>>>()?;
        rows.insert(method, row);
        let curve = deltas
            .iter()
            .map(|&delta| eps_at(method, delta).map(|eps| CurvePoint { delta, eps }))
            .collect::<Result<Vec<_>>>()?;
        curves.insert(method, curve);
    }
    Ok(CompositionReport { scenario: s.clone(), rows, mu_values, curves })
}

impl CompositionReport {
    pub fn get(&self, method: Method) -> &[f64] {
        &self.rows[&method]
    }

    /// One row per method: `method,mu,<one column per delta target>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,mu");
        for d in &self.scenario.delta_targets {
            let _ = write!(out, ",{}", numfmt::real(*d));
        }
        out.push('\n');
        for (method, row) in &self.rows {
            out.push_str(method.as_str());
            out.push(',');
            if let Some(mu) = self.mu_values.get(method) {
                out.push_str(&numfmt::real(*mu));
            }
            for eps in row {
                let _ = write!(out, ",{}", numfmt::real(*eps));
            }
            out.push('\n');
        }
        out
    }
}
