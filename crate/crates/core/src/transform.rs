//! Conversions and amplification: pure DP to GDP, clip-and-rectify
//! post-processing, and Poisson subsampling.

use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Result};
use crate::profiles::{PrivacyProfile, ProfileCurve};
use crate::specfun;

/// Smallest `mu` such that every `eps`-DP mechanism is `mu`-GDP.
pub fn pure_to_gdp(eps: f64) -> Result<f64> {
    if !(eps >= 0.0) {
        return Err(domain(format!("eps must be >= 0, got {eps}")));
    }
    // ln(1 / (1 + e^eps)) without overflow
    let ln_p = -(eps.max(0.0) + (-eps.abs()).exp().ln_1p());
    Ok((-2.0 * specfun::normal_quantile_ln(ln_p)?).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipRectifySpec {
    /// Horizon up to which the head condition was verified.
    pub eps_h: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl ClipRectifySpec {
    pub fn new(eps_h: f64, y_lo: f64, y_hi: f64) -> Result<Self> {
        if !(eps_h > 0.0 && eps_h.is_finite()) {
            return Err(invalid(format!("eps_h must be finite and > 0, got {eps_h}")));
        }
        if !(y_hi > y_lo && (y_hi - y_lo).is_finite()) {
            return Err(invalid(format!("need finite y_lo < y_hi, got [{y_lo}, {y_hi}]")));
        }
        Ok(Self { eps_h, y_lo, y_hi })
    }

    /// Scale of the Laplace noise added after clipping.
    pub fn laplace_scale(&self) -> f64 {
        (self.y_hi - self.y_lo) / self.eps_h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsampleSpec {
    pub gamma: f64,
}

impl SubsampleSpec {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(invalid(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        Ok(Self { gamma })
    }
}

struct ClipRectifyCurve {
    base: PrivacyProfile,
    pure: PrivacyProfile,
}

impl ProfileCurve for ClipRectifyCurve {
    fn family(&self) -> String {
        format!("clip_rectify({})", self.base.family())
    }
    fn delta(&self, eps: f64) -> f64 {
        self.base.delta(eps).min(self.pure.delta(eps))
    }
    fn ln_delta(&self, eps: f64) -> f64 {
        self.base.ln_delta(eps).min(self.pure.ln_delta(eps))
    }
    fn derivative(&self, eps: f64) -> Option<f64> {
        let side = if self.base.delta(eps) <= self.pure.delta(eps) { &self.base } else { &self.pure };
        Some(side.derivative(eps))
    }
    fn tail_limit(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Profile after clipping to `[y_lo, y_hi]` and adding Laplace noise of
/// scale `(y_hi - y_lo) / eps_h`: the pointwise minimum of `p` and the
/// `eps_h`-DP worst case, so zero from `eps_h` on.
pub fn clip_rectify(p: &PrivacyProfile, spec: &ClipRectifySpec) -> Result<PrivacyProfile> {
    let pure = PrivacyProfile::pure_dp(spec.eps_h)?;
    PrivacyProfile::new(ClipRectifyCurve { base: p.clone(), pure })
}

struct SubsampledCurve {
    base: PrivacyProfile,
    gamma: f64,
}

impl SubsampledCurve {
    /// Base-mechanism `eps` matching `eps'` after subsampling.
    fn inner_eps(&self, eps: f64) -> f64 {
        if eps < 30.0 {
            (eps.exp_m1() / self.gamma).ln_1p()
        } else {
            eps - self.gamma.ln() + ((self.gamma - 1.0) * (-eps).exp()).ln_1p()
        }
    }
}

impl ProfileCurve for SubsampledCurve {
    fn family(&self) -> String {
        format!("subsampled({}, {})", self.base.family(), self.gamma)
    }
    fn delta(&self, eps: f64) -> f64 {
        self.gamma * self.base.delta(self.inner_eps(eps))
    }
    fn ln_delta(&self, eps: f64) -> f64 {
        self.gamma.ln() + self.base.ln_delta(self.inner_eps(eps))
    }
    fn derivative(&self, eps: f64) -> Option<f64> {
        let chain = 1.0 / (1.0 + (self.gamma - 1.0) * (-eps).exp());
        Some(self.gamma * self.base.derivative(self.inner_eps(eps)) * chain)
    }
    fn tail_limit(&self) -> Option<f64> {
        self.base.analytic_tail_limit()
    }
}

/// Profile of the mechanism run on a Poisson subsample with rate `gamma`.
pub fn poisson_subsample(p: &PrivacyProfile, spec: &SubsampleSpec) -> Result<PrivacyProfile> {
    SubsampleSpec::new(spec.gamma)?;
    if spec.gamma == 1.0 {
        return Ok(p.clone());
    }
    PrivacyProfile::new(SubsampledCurve { base: p.clone(), gamma: spec.gamma })
}
