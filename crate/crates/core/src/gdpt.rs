//! Pointwise conversion of a privacy profile to the GDP scale and the
//! certified measurement of its supremum over a head interval `[0, eps_h]`.

use std::f64::consts::{PI, SQRT_2};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{invalid, GdpError, Result};
use crate::profiles::PrivacyProfile;
use crate::specfun;

pub const DEFAULT_MU_MAX: f64 = 10.0;

/// Identifier of the shuffle generator, echoed in measurement output.
pub const RNG_ID: &str = "chacha8";

/// Binary-search margin used when callers do not pick one.
pub const DEFAULT_MARGIN: f64 = 1e-6;

/// Certified bracket `[mu_lo, mu_hi]` around an implicit `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdpInterval {
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub margin: f64,
}

impl GdpInterval {
    pub fn zero(margin: f64) -> Self {
        Self { mu_lo: 0.0, mu_hi: 0.0, margin }
    }

    pub fn width(&self) -> f64 {
        self.mu_hi - self.mu_lo
    }

    pub fn contains(&self, mu: f64) -> bool {
        self.mu_lo <= mu && mu <= self.mu_hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Naive,
    #[default]
    Shuffled,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Naive => "naive",
            Self::Shuffled => "shuffled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConfig {
    /// Head horizon.
    pub eps_h: f64,
    /// Reciprocal of the total error budget.
    pub c: f64,
    pub mu_max: f64,
    pub seed: u64,
    pub strategy: Strategy,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self { eps_h: 10.0, c: 1000.0, mu_max: DEFAULT_MU_MAX, seed: 0, strategy: Strategy::Shuffled }
    }
}

impl MeasurementConfig {
    pub fn new(eps_h: f64, c: f64) -> Self {
        Self { eps_h, c, ..Self::default() }
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_h > 0.0 && self.eps_h.is_finite()) {
            return Err(invalid(format!("eps_h must be finite and > 0, got {}", self.eps_h)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid(format!("c must be finite and > 0, got {}", self.c)));
        }
        if !(self.mu_max > 0.0 && self.mu_max.is_finite()) {
            return Err(invalid(format!("mu_max must be finite and > 0, got {}", self.mu_max)));
        }
        Ok(())
    }

    /// Grid size `ceil(sqrt(8) c pi eps_h) + 1`.
    pub fn grid_n(&self) -> usize {
        (8f64.sqrt() * self.c * PI * self.eps_h).ceil() as usize + 1
    }

    /// Per-search margin. Two searches and the grid term each take half of `1/c`.
    pub fn search_margin(&self) -> f64 {
        1.0 / (4.0 * self.c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementResult {
    pub bracket: GdpInterval,
    pub grid_n: usize,
    pub grid_d: f64,
    pub binary_search_count: usize,
    pub config: MeasurementConfig,
}

impl Serialize for MeasurementResult {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Flat<'a> {
            mu_lo: f64,
            mu_hi: f64,
            c: f64,
            eps_h: f64,
            n: usize,
            d: f64,
            strategy: &'a str,
            seed: u64,
            binary_search_count: usize,
            mu_max: f64,
            rng: &'a str,
        }
        Flat {
            mu_lo: self.bracket.mu_lo,
            mu_hi: self.bracket.mu_hi,
            c: self.config.c,
            eps_h: self.config.eps_h,
            n: self.grid_n,
            d: self.grid_d,
            strategy: self.config.strategy.as_str(),
            seed: self.config.seed,
            binary_search_count: self.binary_search_count,
            mu_max: self.config.mu_max,
            rng: RNG_ID,
        }
        .serialize(s)
    }
}

/// Right-open step function on `[0, eps_h + d]`; step `i` covers `[x_i, x_{i+1})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Staircase {
    pub knots: Vec<(f64, f64)>,
    pub d: f64,
}

impl Staircase {
    /// Value of the step containing `x`, or `None` outside the support.
    pub fn eval(&self, x: f64) -> Option<f64> {
        if x < 0.0 || x >= self.knots.len() as f64 * self.d {
            return None;
        }
        let i = ((x / self.d).floor() as usize).min(self.knots.len() - 1);
        Some(self.knots[i].1)
    }

    pub fn max(&self) -> f64 {
        self.knots.iter().map(|k| k.1).fold(0.0, f64::max)
    }
}

/// Binary search for `mu` with `delta_mu(eps) = exp(ln_delta)`.
pub fn mu_gdp_bounds_ln(eps: f64, ln_delta: f64, margin: f64, mu_max: f64) -> Result<(GdpInterval, usize)> {
    if !(eps >= 0.0) {
        return Err(invalid(format!("eps must be >= 0, got {eps}")));
    }
    if !(margin > 0.0) {
        return Err(invalid(format!("margin must be > 0, got {margin}")));
    }
    if ln_delta.is_nan() || ln_delta > 0.0 {
        return Err(invalid(format!("delta must lie in [0, 1], got {}", ln_delta.exp())));
    }
    if ln_delta == f64::NEG_INFINITY {
        return Ok((GdpInterval::zero(margin), 0));
    }
    if specfun::ln_delta_mu(mu_max, eps)? < ln_delta {
        return Err(GdpError::CeilingExceeded { mu_max, eps, delta: ln_delta.exp() });
    }
    let (mut lo, mut hi) = (0.0, mu_max);
    let mut steps = 0;
    while hi - lo > margin {
        let mid = 0.5 * (lo + hi);
        if specfun::ln_delta_mu(mid, eps)? > ln_delta {
            hi = mid;
        } else {
            lo = mid;
        }
        steps += 1;
    }
    Ok((GdpInterval { mu_lo: lo, mu_hi: hi, margin }, steps))
}

/// Bracket around the `mu` whose GDP curve passes through `(eps, delta)`.
pub fn mu_gdp_bounds(eps: f64, delta: f64, margin: f64, mu_max: f64) -> Result<GdpInterval> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(invalid(format!("delta must lie in [0, 1], got {delta}")));
    }
    mu_gdp_bounds_ln(eps, delta.ln(), margin, mu_max).map(|r| r.0)
}

/// GDPT of `p` at `eps`.
pub fn gdpt_eval(p: &PrivacyProfile, eps: f64, margin: f64) -> Result<GdpInterval> {
    gdpt_eval_with(p, eps, margin, DEFAULT_MU_MAX)
}

pub fn gdpt_eval_with(p: &PrivacyProfile, eps: f64, margin: f64, mu_max: f64) -> Result<GdpInterval> {
    mu_gdp_bounds_ln(eps, p.ln_delta(eps), margin, mu_max).map(|r| r.0)
}

/// Lower and upper staircases on the grid `x_i = i eps_h / n`.
pub fn staircase_bounds(p: &PrivacyProfile, eps_h: f64, n: usize) -> Result<(Staircase, Staircase)> {
    staircase_bounds_with(p, eps_h, n, DEFAULT_MARGIN, DEFAULT_MU_MAX)
}

pub fn staircase_bounds_with(
    p: &PrivacyProfile,
    eps_h: f64,
    n: usize,
    margin: f64,
    mu_max: f64,
) -> Result<(Staircase, Staircase)> {
    if n == 0 {
        return Err(invalid("n must be >= 1"));
    }
    if !(eps_h > 0.0) {
        return Err(invalid(format!("eps_h must be > 0, got {eps_h}")));
    }
    let d = eps_h / n as f64;
    let x: Vec<f64> = (0..=n + 1).map(|i| i as f64 * d).collect();
    let ln_delta: Vec<f64> = x.iter().map(|&e| p.ln_delta(e)).collect();
    let mut lower = Vec::with_capacity(n + 1);
    let mut upper = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let lo = mu_gdp_bounds_ln(x[i], ln_delta[i + 1], margin, mu_max)?.0;
        let hi = mu_gdp_bounds_ln(x[i + 1], ln_delta[i], margin, mu_max)?.0;
        lower.push((x[i], lo.mu_lo));
        upper.push((x[i], hi.mu_hi));
    }
    Ok((Staircase { knots: lower, d }, Staircase { knots: upper, d }))
}

/// Certified bracket of width at most `1/c` around `sup_{[0, eps_h]} GDPT(p)`.
pub fn head_measure(p: &PrivacyProfile, cfg: &MeasurementConfig) -> Result<MeasurementResult> {
    cfg.validate()?;
    let n = cfg.grid_n();
    let d = cfg.eps_h / n as f64;
    let margin = cfg.search_margin();
    let x: Vec<f64> = (0..=n + 1).map(|i| i as f64 * d).collect();
    let ln_delta: Vec<f64> = x.iter().map(|&e| p.ln_delta(e)).collect();
    let search = |eps: f64, ln_d: f64| mu_gdp_bounds_ln(eps, ln_d, margin, cfg.mu_max).map(|r| r.0);

    let mut mu_lo: f64 = 0.0;
    let mut mu_hi: f64 = 0.0;
    let mut count = 0;
    match cfg.strategy {
        Strategy::Naive => {
            for i in 0..=n {
                if ln_delta[i + 1] > f64::NEG_INFINITY {
                    mu_lo = mu_lo.max(search(x[i], ln_delta[i + 1])?.mu_lo);
                    count += 1;
                }
                if ln_delta[i] > f64::NEG_INFINITY {
                    mu_hi = mu_hi.max(search(x[i + 1], ln_delta[i])?.mu_hi);
                    count += 1;
                }
            }
        }
        Strategy::Shuffled => {
            let mut order: Vec<usize> = (0..=n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
            // A step is searched only when its true value can exceed the running bound.
            let exceeds = |mu: f64, eps: f64, ln_d: f64| -> Result<bool> {
                Ok(mu == 0.0 || specfun::ln_delta_mu(mu, eps)? < ln_d)
            };
            for i in order {
                if ln_delta[i] > f64::NEG_INFINITY && exceeds(mu_hi, x[i + 1], ln_delta[i])? {
                    mu_hi = mu_hi.max(search(x[i + 1], ln_delta[i])?.mu_hi);
                    count += 1;
                }
                if ln_delta[i + 1] > f64::NEG_INFINITY && exceeds(mu_lo, x[i], ln_delta[i + 1])? {
                    mu_lo = mu_lo.max(search(x[i], ln_delta[i + 1])?.mu_lo);
                    count += 1;
                }
            }
        }
    }
    Ok(MeasurementResult {
        bracket: GdpInterval { mu_lo, mu_hi, margin },
        grid_n: n,
        grid_d: d,
        binary_search_count: count,
        config: *cfg,
    })
}

/// Largest possible slope of `eps -> mu_GDP(eps, delta)`.
pub const GDPT_SLOPE_BOUND: f64 = SQRT_2 * PI / 2.0;
