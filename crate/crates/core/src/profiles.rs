//! Privacy profiles and the exact implication order on `(eps, delta)` pairs.
//!
//! A profile maps `eps >= 0` to the smallest `delta` for which a mechanism
//! is `(eps, delta)`-DP. Profiles are immutable, cheap to clone, and safe to
//! share across threads.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, GdpError, Result};
use crate::specfun;

/// Upper end of the crossover scan used by [`refine`].
const REFINE_SCAN_MAX: f64 = 200.0;
const REFINE_SCAN_STEP: f64 = 0.005;
const REFINE_TOL: f64 = 1e-9;

/// Relative finite-difference step for profiles without an analytic derivative.
const FD_STEP: f64 = 1e-5;

/// A single `(eps, delta)` guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyPoint {
    pub eps: f64,
    pub delta: f64,
}

impl PrivacyPoint {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        if !(eps >= 0.0) {
            return Err(invalid(format!("eps must be >= 0, got {eps}")));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(invalid(format!("delta must lie in [0, 1], got {delta}")));
        }
        Ok(Self { eps, delta })
    }
}

/// `(e^a - e^b)^+ / (1 + e^a)`, written to stay finite for large `a`.
fn implication_excess(from_eps: f64, to_eps: f64) -> f64 {
    if to_eps >= from_eps {
        return 0.0;
    }
    -(to_eps - from_eps).exp_m1() / (1.0 + (-from_eps).exp())
}

/// Smallest `delta` such that `(from.eps, from.delta)`-DP implies `(eps, delta)`-DP.
pub fn implication_threshold(from: PrivacyPoint, eps: f64) -> f64 {
    from.delta + (1.0 - from.delta) * implication_excess(from.eps, eps)
}

/// Whether the guarantee `from` logically implies `to`.
pub fn implies(from: PrivacyPoint, to: PrivacyPoint) -> bool {
    to.delta >= implication_threshold(from, to.eps)
}

/// Optimal `delta(eps)` of the four-outcome mechanism that is exactly
/// `(eps0, delta0)`-DP, found by checking every event in both directions.
pub fn worst_case_mechanism_delta(eps0: f64, delta0: f64, eps: f64) -> f64 {
    let alpha = 1.0 / (1.0 + (-eps0).exp());
    let keep = 1.0 - delta0;
    let p0 = [delta0, 0.0, keep * alpha, keep * (1.0 - alpha)];
    let p1 = [0.0, delta0, keep * (1.0 - alpha), keep * alpha];
    let scale = eps.exp();
    let mut best: f64 = 0.0;
    for event in 0u8..16 {
        let mass = |p: &[f64; 4]| -> f64 {
            (0..4).filter(|i| event & (1 << i) != 0).map(|i| p[i]).sum()
        };
        let (m0, m1) = (mass(&p0), mass(&p1));
        best = best.max(m0 - scale * m1).max(m1 - scale * m0);
    }
    best
}

/// Evaluation behind a [`PrivacyProfile`].
///
/// Implementations must be non-increasing in `eps` with values in `[0, 1]`.
pub trait ProfileCurve: Send + Sync {
    /// Short family tag, e.g. `"laplace"`.
    fn family(&self) -> String;

    fn delta(&self, eps: f64) -> f64;

    fn ln_delta(&self, eps: f64) -> f64 {
        self.delta(eps).ln()
    }

    /// Analytic derivative, when the family has one.
    fn derivative(&self, _eps: f64) -> Option<f64> {
        None
    }

    /// `sqrt(lim eps^2 / (-2 ln delta(eps)))` when known in closed form;
    /// `Some(f64::INFINITY)` for profiles known to diverge.
    fn tail_limit(&self) -> Option<f64> {
        None
    }
}

/// Whether a profile went through [`refine`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Refinement {
    Naive,
    Refined { crossover: f64 },
    /// No crossover was bracketed; the profile is the unrefined input.
    Failed,
}

/// A non-increasing map `eps -> delta` on `[0, inf)`.
#[derive(Clone)]
pub struct PrivacyProfile {
    curve: Arc<dyn ProfileCurve>,
    refinement: Refinement,
}

impl fmt::Debug for PrivacyProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrivacyProfile")
            .field("family", &self.curve.family())
            .field("refinement", &self.refinement)
            .finish()
    }
}

impl PrivacyProfile {
    /// Wraps a curve after spot-checking monotonicity and range at 32
    /// geometric points on `[1e-3, 1e3]` plus the origin.
    pub fn new(curve: impl ProfileCurve + 'static) -> Result<Self> {
        Self::from_arc(Arc::new(curve))
    }

    pub fn from_arc(curve: Arc<dyn ProfileCurve>) -> Result<Self> {
        let profile = Self { curve, refinement: Refinement::Naive };
        profile.spot_check()?;
        Ok(profile)
    }

    /// Profile backed by an arbitrary closure.
    pub fn from_fn<F>(name: impl Into<String>, f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(FnCurve { name: name.into(), f: Box::new(f) })
    }

    /// Profile given by `ln delta(eps)`; keeps precision where `delta` underflows.
    pub fn from_ln_fn<F>(name: impl Into<String>, f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(LnFnCurve { name: name.into(), f: Box::new(f) })
    }

    /// The `mu`-GDP curve itself.
    pub fn gdp_curve(mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(invalid(format!("mu must be finite and > 0, got {mu}")));
        }
        Self::new(GdpCurve { mu })
    }

    /// Worst-case profile of an `eps0`-DP mechanism.
    pub fn pure_dp(eps0: f64) -> Result<Self> {
        builtin_profile(&TradeoffEquation::PureDp { eps0 })
    }

    fn spot_check(&self) -> Result<()> {
        let mut prev = self.delta(0.0);
        if !(0.0..=1.0).contains(&prev) {
            return Err(invalid(format!("{}: delta(0) = {prev} outside [0, 1]", self.family())));
        }
        for i in 0..32 {
            let eps = 1e-3 * 1e6f64.powf(f64::from(i) / 31.0);
            let d = self.delta(eps);
            if !(0.0..=1.0).contains(&d) {
                return Err(invalid(format!("{}: delta({eps}) = {d} outside [0, 1]", self.family())));
            }
            if d > prev * (1.0 + 1e-9) + 1e-15 {
                return Err(invalid(format!("{}: profile increases at eps = {eps}", self.family())));
            }
            prev = d;
        }
        Ok(())
    }

    pub fn family(&self) -> String {
        self.curve.family()
    }

    pub fn refinement(&self) -> Refinement {
        self.refinement
    }

    pub fn curve(&self) -> &Arc<dyn ProfileCurve> {
        &self.curve
    }

    /// `delta(eps)`; negative `eps` is treated as 0.
    pub fn delta(&self, eps: f64) -> f64 {
        self.curve.delta(eps.max(0.0)).clamp(0.0, 1.0)
    }

    pub fn ln_delta(&self, eps: f64) -> f64 {
        self.curve.ln_delta(eps.max(0.0)).min(0.0)
    }

    /// Analytic derivative when available, otherwise a five-point finite
    /// difference (forward near the origin).
    pub fn derivative(&self, eps: f64) -> f64 {
        if let Some(d) = self.curve.derivative(eps) {
            return d;
        }
        let h = FD_STEP * eps.max(1.0);
        let f = |x: f64| self.delta(x);
        if eps >= 2.0 * h {
            (f(eps - 2.0 * h) - 8.0 * f(eps - h) + 8.0 * f(eps + h) - f(eps + 2.0 * h)) / (12.0 * h)
        } else {
            (-25.0 * f(eps) + 48.0 * f(eps + h) - 36.0 * f(eps + 2.0 * h) + 16.0 * f(eps + 3.0 * h)
                - 3.0 * f(eps + 4.0 * h))
                / (12.0 * h)
        }
    }

    pub fn analytic_tail_limit(&self) -> Option<f64> {
        self.curve.tail_limit()
    }

    pub fn refine(&self) -> PrivacyProfile {
        refine(self)
    }
}

/// `eval_profile` in free-function form.
pub fn eval_profile(p: &PrivacyProfile, eps: f64) -> f64 {
    p.delta(eps)
}

/// A privacy-utility trade-off equation `noise = g(eps, delta)` together
/// with the noise level actually used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TradeoffEquation {
    /// Laplace noise of scale `scale` on a query of sensitivity `sensitivity`.
    Laplace { sensitivity: f64, scale: f64 },
    /// `sigma = a / eps * sqrt(ln(b / delta))`.
    SgdLike { a: f64, b: f64, sigma: f64 },
    /// `(eps, delta)`-DP whenever `m > 10 ln(n / (eps delta))`.
    Icea { m: u32, n: u32 },
    /// Worst case of an `eps0`-DP mechanism.
    PureDp { eps0: f64 },
    /// `sigma = -c ln(delta) / eps`.
    LogRatio { c: f64, sigma: f64 },
    /// Explicit `(eps, delta)` knots.
    Tabulated { points: Vec<PrivacyPoint> },
}

impl TradeoffEquation {
    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        match *self {
            Self::Laplace { sensitivity, scale } => {
                positive("sensitivity", sensitivity)?;
                positive("scale", scale)
            }
            Self::SgdLike { a, b, sigma } => {
                positive("a", a)?;
                positive("b", b)?;
                positive("sigma", sigma)
            }
            Self::Icea { m, n } => {
                if m == 0 || n == 0 {
                    return Err(invalid("m and n must be positive integers"));
                }
                Ok(())
            }
            Self::PureDp { eps0 } => {
                if eps0 >= 0.0 && eps0.is_finite() {
                    Ok(())
                } else {
                    Err(invalid(format!("eps0 must be finite and >= 0, got {eps0}")))
                }
            }
            Self::LogRatio { c, sigma } => {
                positive("c", c)?;
                positive("sigma", sigma)
            }
            Self::Tabulated { ref points } => validate_table(points).map_err(|(_, e)| e),
        }
    }

    /// Noise the equation demands for `(eps, delta)`, or `None` when the
    /// family has no such relation.
    pub fn noise(&self, eps: f64, delta: f64) -> Option<f64> {
        match *self {
            Self::Laplace { sensitivity, .. } => Some(sensitivity / eps),
            Self::SgdLike { a, b, .. } => Some(a / eps * (b / delta).ln().max(0.0).sqrt()),
            Self::Icea { n, .. } => Some(10.0 * (f64::from(n) / (eps * delta)).ln()),
            Self::LogRatio { c, .. } => Some(-c * delta.ln() / eps),
            Self::PureDp { .. } | Self::Tabulated { .. } => None,
        }
    }
}

/// Builds the naive profile obtained by inverting the trade-off equation.
pub fn builtin_profile(spec: &TradeoffEquation) -> Result<PrivacyProfile> {
    spec.validate()?;
    match spec {
        TradeoffEquation::Laplace { sensitivity, scale } => {
            PrivacyProfile::new(LaplaceCurve { ratio: sensitivity / scale })
        }
        TradeoffEquation::SgdLike { a, b, sigma } => {
            PrivacyProfile::new(SgdCurve { a: *a, b: *b, sigma: *sigma })
        }
        TradeoffEquation::Icea { m, n } => PrivacyProfile::new(IceaCurve {
            ln_k: f64::from(*n).ln() - f64::from(*m) / 10.0,
        }),
        TradeoffEquation::PureDp { eps0 } => PrivacyProfile::new(PureDpCurve { eps0: *eps0 }),
        TradeoffEquation::LogRatio { c, sigma } => {
            PrivacyProfile::new(LogRatioCurve { rate: sigma / c })
        }
        TradeoffEquation::Tabulated { points } => {
            PrivacyProfile::new(TabulatedCurve { points: points.clone() })
        }
    }
}

struct FnCurve {
    name: String,
    f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl ProfileCurve for FnCurve {
    fn family(&self) -> String {
        self.name.clone()
    }
    fn delta(&self, eps: f64) -> f64 {
        (self.f)(eps)
    }
}

struct LnFnCurve {
    name: String,
    f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl ProfileCurve for LnFnCurve {
    fn family(&self) -> String {
        self.name.clone()
    }
    fn delta(&self, eps: f64) -> f64 {
        (self.f)(eps).exp()
    }
    fn ln_delta(&self, eps: f64) -> f64 {
        (self.f)(eps)
    }
}

/// `max(1 - exp(eps/2 - ratio/2), 0)` with `ratio = sensitivity / scale`.
struct LaplaceCurve {
    ratio: f64,
}

impl ProfileCurve for LaplaceCurve {
    fn family(&self) -> String {
        "laplace".into()
    }
    fn delta(&self, eps: f64) -> f64 {
        if eps >= self.ratio {
            0.0
        } else {
            -(0.5 * (eps - self.ratio)).exp_m1()
        }
    }
    fn ln_delta(&self, eps: f64) -> f64 {
        if eps >= self.ratio {
            f64::NEG_INFINITY
        } else {
            (-(0.5 * (eps - self.ratio)).exp_m1()).ln()
        }
    }
    fn derivative(&self, eps: f64) -> Option<f64> {
        Some(if eps >= self.ratio { 0.0 } else { -0.5 * (0.5 * (eps - self.ratio)).exp() })
    }
    fn tail_limit(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `min(1, b * exp(-(sigma eps / a)^2))`.
struct SgdCurve {
    a: f64,
    b: f64,
    sigma: f64,
}

impl SgdCurve {
    fn rate(&self) -> f64 {
        (self.sigma / self.a).powi(2)
    }
}

impl ProfileCurve for SgdCurve {
    fn family(&self) -> String {
        "sgd_like".into()
    }
    fn delta(&self, eps: f64) -> f64 {
        self.ln_delta(eps).exp()
    }
    fn ln_delta(&self, eps: f64) -> f64 {
        (self.b.ln() - self.rate() * eps * eps).min(0.0)
    }
    fn derivative(&self, eps: f64) -> Option<f64> {
        let ln = self.b.ln() - self.rate() * eps * eps;
        Some(if ln >= 0.0 { 0.0 } else { -2.0 * self.rate() * eps * ln.exp() })
    }
    fn tail_limit(&self) -> Option<f64> {
        Some(self.a / (self.sigma * std::f64::consts::SQRT_2))
    }
}

/// `min(1, n e^{-m/10} / eps)`, held at 1 at the origin.
struct IceaCurve {
    ln_k: f64,
}

impl ProfileCurve for IceaCurve {
    fn family(&self) -> String {
        "icea".into()
    }
    fn delta(&self, eps: f64) -> f64 {
        self.ln_delta(eps).exp()
    }
    fn ln_delta(&self, eps: f64) -> f64 {
        if eps <= 0.0 {
            return 0.0;
        }
        (self.ln_k - eps.ln()).min(0.0)
    }
    fn derivative(&self, eps: f64) -> Option<f64> {
        let ln = self.ln_k - eps.ln();
        Some(if eps <= 0.0 || ln >= 0.0 { 0.0 } else { -ln.exp() / eps })
    }
    fn tail_limit(&self) -> Option<f64> {
        Some(f64::INFINITY)
    }
}

/// `(e^{eps0} - e^eps)^+ / (1 + e^{eps0})`.
struct PureDpCurve {
    eps0: f64,
}

impl ProfileCurve for PureDpCurve {
    fn family(&self) -> String {
        "pure_dp".into()
    }
    fn delta(&self, eps: f64) -> f64 {
        implication_excess(self.eps0, eps)
    }
    fn ln_delta(&self, eps: f64) -> f64 {
        if eps >= self.eps0 {
            return f64::NEG_INFINITY;
        }
        (-(eps - self.eps0).exp_m1()).ln() - (-self.eps0).exp().ln_1p()
    }
    fn derivative(&self, eps: f64) -> Option<f64> {
        Some(if eps >= self.eps0 { 0.0 } else { -eps.exp() / (1.0 + self.eps0.exp()) })
    }
    fn tail_limit(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `exp(-rate * eps)`.
struct LogRatioCurve {
    rate: f64,
}

impl ProfileCurve for LogRatioCurve {
    fn family(&self) -> String {
        "log_ratio".into()
    }
    fn delta(&self, eps: f64) -> f64 {
        (-self.rate * eps).exp()
    }
    fn ln_delta(&self, eps: f64) -> f64 {
        -self.rate * eps
    }
    fn derivative(&self, eps: f64) -> Option<f64> {
        Some(-self.rate * (-self.rate * eps).exp())
    }
    fn tail_limit(&self) -> Option<f64> {
        Some(f64::INFINITY)
    }
}

struct GdpCurve {
    mu: f64,
}

impl ProfileCurve for GdpCurve {
    fn family(&self) -> String {
        format!("gdp({})", self.mu)
    }
    fn delta(&self, eps: f64) -> f64 {
        specfun::delta_mu(self.mu, eps).unwrap_or(f64::NAN)
    }
    fn ln_delta(&self, eps: f64) -> f64 {
        specfun::ln_delta_mu(self.mu, eps).unwrap_or(f64::NAN)
    }
    fn derivative(&self, eps: f64) -> Option<f64> {
        let b = -eps / self.mu - self.mu / 2.0;
        Some(-(eps + specfun::ln_normal_cdf(b)).exp())
    }
    fn tail_limit(&self) -> Option<f64> {
        Some(self.mu)
    }
}

/// Tabulated knots. Exact at the knots; between knots, the tighter of the
/// left knot's value and the implication from every knot to the right.
struct TabulatedCurve {
    points: Vec<PrivacyPoint>,
}

impl ProfileCurve for TabulatedCurve {
    fn family(&self) -> String {
        "tabulated".into()
    }
    fn delta(&self, eps: f64) -> f64 {
        let split = self.points.partition_point(|p| p.eps <= eps);
        let left = if split == 0 { 1.0 } else { self.points[split - 1].delta };
        self.points[split..]
            .iter()
            .map(|&p| implication_threshold(p, eps))
            .fold(left, f64::min)
    }
    fn tail_limit(&self) -> Option<f64> {
        match self.points.last() {
            Some(p) if p.delta == 0.0 => Some(0.0),
            _ => Some(f64::INFINITY),
        }
    }
}

fn validate_table(points: &[PrivacyPoint]) -> std::result::Result<(), (usize, GdpError)> {
    if points.is_empty() {
        return Err((0, invalid("tabulated profile has no points")));
    }
    for (i, p) in points.iter().enumerate() {
        if !(p.eps >= 0.0 && p.eps.is_finite()) {
            return Err((i, invalid(format!("eps {} must be finite and >= 0", p.eps))));
        }
        if !(0.0..=1.0).contains(&p.delta) {
            return Err((i, invalid(format!("delta {} outside [0, 1]", p.delta))));
        }
        if i > 0 {
            let prev = points[i - 1];
            if p.eps <= prev.eps {
                return Err((i, invalid(format!("eps {} not strictly increasing", p.eps))));
            }
            if p.delta > prev.delta {
                return Err((i, invalid(format!("delta {} increases", p.delta))));
            }
        }
    }
    Ok(())
}

/// Reads a `eps,delta` CSV into a tabulated profile.
pub fn load_tabulated<R: Read>(reader: R) -> Result<PrivacyProfile> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let load = |line: u64, message: String| GdpError::Load { line, message };
    let headers = rdr.headers().map_err(|e| load(1, e.to_string()))?.clone();
    if headers.len() != 2 || &headers[0] != "eps" || &headers[1] != "delta" {
        return Err(load(1, format!("expected header `eps,delta`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut points = Vec::new();
    let mut lines = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            load(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<f64> {
            record
                .get(i)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|e| load(line, format!("column {}: {e}", i + 1)))
        };
        points.push(PrivacyPoint { eps: field(0)?, delta: field(1)? });
        lines.push(line);
    }
    validate_table(&points).map_err(|(i, e)| {
        let line = lines.get(i).copied().unwrap_or(1);
        let message = match e {
            GdpError::InvalidParameter(m) => m,
            other => other.to_string(),
        };
        load(line, message)
    })?;
    builtin_profile(&TradeoffEquation::Tabulated { points })
}

pub fn load_tabulated_path(path: impl AsRef<Path>) -> Result<PrivacyProfile> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| GdpError::Load { line: 0, message: format!("{}: {e}", path.as_ref().display()) })?;
    load_tabulated(file)
}

/// Naive profile tightened by the implication order, past a single crossover.
struct RefinedCurve {
    base: PrivacyProfile,
    crossover: f64,
    at_crossover: PrivacyPoint,
}

impl RefinedCurve {
    fn implied(&self, eps: f64) -> f64 {
        implication_threshold(self.at_crossover, eps)
    }
}

impl ProfileCurve for RefinedCurve {
    fn family(&self) -> String {
        self.base.family()
    }
    fn delta(&self, eps: f64) -> f64 {
        let base = self.base.delta(eps);
        if eps >= self.crossover {
            base
        } else {
            base.min(self.implied(eps))
        }
    }
    fn ln_delta(&self, eps: f64) -> f64 {
        if eps >= self.crossover {
            self.base.ln_delta(eps)
        } else {
            self.delta(eps).ln()
        }
    }
    fn derivative(&self, eps: f64) -> Option<f64> {
        if eps < self.crossover && self.implied(eps) < self.base.delta(eps) {
            let keep = 1.0 - self.at_crossover.delta;
            Some(-keep * eps.exp() / (self.crossover.exp() + 1.0))
        } else {
            Some(self.base.derivative(eps))
        }
    }
    fn tail_limit(&self) -> Option<f64> {
        self.base.analytic_tail_limit()
    }
}

/// Sign of `d g(eps, eps0) / d eps0`, independent of `eps`.
fn crossover_slope(p: &PrivacyProfile, eps0: f64) -> f64 {
    let d = p.delta(eps0);
    let dd = p.derivative(eps0);
    dd + eps0.exp() * (1.0 - d + dd)
}

/// Tightens a naive profile with the implication order:
/// `delta(eps) = inf_{eps0 >= eps} delta_hat(eps0) + (1 - delta_hat(eps0)) (e^{eps0} - e^eps) / (e^{eps0} + 1)`.
///
/// The infimum sits at the first point where the slope in `eps0` turns
/// positive; that crossover is located once and cached. When no crossover
/// shows up in `[0, 200]` the input comes back unchanged, flagged
/// [`Refinement::Failed`].
pub fn refine(p: &PrivacyProfile) -> PrivacyProfile {
    let positive = |x: f64| crossover_slope(p, x) > 0.0;
    let crossover = if positive(0.0) {
        Some(0.0)
    } else {
        let steps = (REFINE_SCAN_MAX / REFINE_SCAN_STEP) as usize;
        (1..=steps).map(|i| i as f64 * REFINE_SCAN_STEP).find(|&x| positive(x)).map(|hit| {
            let (mut lo, mut hi) = (hit - REFINE_SCAN_STEP, hit);
            while hi - lo > REFINE_TOL {
                let mid = 0.5 * (lo + hi);
                if positive(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        })
    };
    match crossover {
        Some(c) => {
            let curve = RefinedCurve {
                base: p.clone(),
                crossover: c,
                at_crossover: PrivacyPoint { eps: c, delta: p.delta(c) },
            };
            PrivacyProfile { curve: Arc::new(curve), refinement: Refinement::Refined { crossover: c } }
        }
        None => PrivacyProfile { curve: p.curve.clone(), refinement: Refinement::Failed },
    }
}

/// Result of [`min_noise_for_target`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseChoice {
    pub sigma: f64,
    /// The guarantee to calibrate for; it implies the target.
    pub at: PrivacyPoint,
}

/// Cheapest noise that still implies `target`, searching guarantees on
/// the implication boundary with `eps in [target.eps, target.eps + 20]`.
pub fn min_noise_for_target(g: &TradeoffEquation, target: PrivacyPoint) -> Result<NoiseChoice> {
    let direct = g
        .noise(target.eps, target.delta)
        .filter(|s| s.is_finite())
        .ok_or_else(|| invalid("trade-off family has no finite noise relation at the target"))?;
    // delta on the boundary: (target.delta - q) / (1 - q), q = excess(eps, target.eps)
    let boundary = |eps: f64| {
        let q = implication_excess(eps, target.eps);
        (target.delta - q) / (1.0 - q)
    };
    let cost = |eps: f64| {
        let delta = boundary(eps);
        if delta <= 0.0 {
            return f64::INFINITY;
        }
        g.noise(eps, delta).filter(|s| s.is_finite()).unwrap_or(f64::INFINITY)
    };

    let steps: usize = 4000;
    let h = 20.0 / steps as f64;
    let (best_i, best) = (0..=steps)
        .map(|i| (i, cost(target.eps + i as f64 * h)))
        .fold((0, f64::INFINITY), |acc, (i, c)| if c < acc.1 { (i, c) } else { acc });
    let mut choice = NoiseChoice { sigma: direct, at: target };
    if best < direct {
        // golden-section polish inside the neighbouring cells
        let invphi = (5f64.sqrt() - 1.0) / 2.0;
        let mut lo = target.eps + best_i.saturating_sub(1) as f64 * h;
        let mut hi = target.eps + (best_i + 1).min(steps) as f64 * h;
        let mut x1 = hi - invphi * (hi - lo);
        let mut x2 = lo + invphi * (hi - lo);
        let (mut f1, mut f2) = (cost(x1), cost(x2));
        for _ in 0..100 {
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - invphi * (hi - lo);
                f1 = cost(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + invphi * (hi - lo);
                f2 = cost(x2);
            }
        }
        let eps = 0.5 * (lo + hi);
        let sigma = cost(eps).min(best);
        let eps = if cost(eps) <= best { eps } else { target.eps + best_i as f64 * h };
        choice = NoiseChoice { sigma, at: PrivacyPoint { eps, delta: boundary(eps) } };
    }
    Ok(choice)
}
