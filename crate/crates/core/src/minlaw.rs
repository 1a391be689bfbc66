//! Distribution of the running minimum of a drifted geometric Brownian motion
//! started at 1.
//!
//! All laws here describe `X_t = exp(m t + sigma B_t)` with `X_0 = 1`, where `m`
//! is the **log-drift** `mu - sigma^2 / 2`, not the arithmetic drift `mu`. Callers
//! rescale by dividing firm values by the value at the start of the window.
//!
//! Besides the densities in the natural coordinates (`w`, `u`, `v` on the
//! value scale) the module exposes the same laws in *depth* coordinates:
//!
//! * depth `a >= 0`: `w = exp(-sigma sqrt(t) a)`, the minimum measured in
//!   standard deviations below the start value;
//! * rise `c >= 0`: `v = exp(sigma sqrt(t) (c - a))`, the terminal value measured
//!   in standard deviations above the minimum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbm::FirmParams;
use crate::special::{norm_cdf, norm_pdf, reflected_term};

/// Values below this are treated as an unreachable minimum.
pub const MIN_VALUE_FLOOR: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedLaw {
    /// Log-drift `mu - sigma^2 / 2`.
    pub m: f64,
    pub sigma: f64,
}

impl NormalizedLaw {
    pub fn new(m: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { m, sigma })
    }

    /// Law of `X / X_0` for the given firm parameters.
    pub fn from_firm(params: &FirmParams) -> Self {
        Self { m: params.log_drift(), sigma: params.sigma }
    }

    /// Standard deviation of `ln X_t`.
    pub fn scale(&self, t: f64) -> f64 {
        self.sigma * t.max(0.0).sqrt()
    }

    /// Drift of `ln X_t` in units of its standard deviation.
    pub fn kappa(&self, t: f64) -> f64 {
        self.m * t.max(0.0).sqrt() / self.sigma
    }

    /// Density of the minimum depth `a = -ln(M_t) / (sigma sqrt t)`.
    pub fn depth_density(&self, t: f64, a: f64) -> f64 {
        if a < 0.0 {
            return 0.0;
        }
        let k = self.kappa(t);
        2.0 * norm_pdf(a + k) + 2.0 * k * reflected_term(k, a)
    }

    /// `P(depth < a)`, which is `Psi(t, exp(-sigma sqrt(t) a))`.
    pub fn depth_cdf(&self, t: f64, a: f64) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        let k = self.kappa(t);
        (norm_cdf(a + k) - reflected_term(k, a)).clamp(0.0, 1.0)
    }

    /// Joint density of depth `a` and rise `c` of the terminal value above the minimum.
    pub fn joint_depth_density(&self, t: f64, a: f64, c: f64) -> f64 {
        if a < 0.0 || c < 0.0 {
            return 0.0;
        }
        let r = a + c;
        if r == 0.0 {
            return 0.0;
        }
        let k = self.kappa(t);
        // combined exponent so that a large rise with positive drift cannot overflow
        ((2.0 * r).ln() - 0.5 * (r * r + LN_2PI) + k * (c - a) - 0.5 * k * k).exp()
    }

    /// Density `f^M_t(w)` of the running minimum `M_t`.
    pub fn min_density(&self, t: f64, w: f64) -> Result<f64> {
        positive_duration(t)?;
        if w > 1.0 || w < MIN_VALUE_FLOOR {
            return Ok(0.0);
        }
        let s = self.scale(t);
        Ok(self.depth_density(t, -w.ln() / s) / (s * w))
    }

    /// Joint density `f^{M,X}_t(u, v)` of the minimum `u` and the terminal value `v`.
    pub fn min_terminal_joint_density(&self, t: f64, u: f64, v: f64) -> Result<f64> {
        positive_duration(t)?;
        if u > 1.0 || u < MIN_VALUE_FLOOR || v < u {
            return Ok(0.0);
        }
        let (m, s2) = (self.m, self.sigma * self.sigma);
        let spread = (v / (u * u)).ln();
        if spread <= 0.0 {
            return Ok(0.0);
        }
        let ln_f = std::f64::consts::LN_2 + (m / s2 - 1.0) * v.ln() + spread.ln()
            - 3.0 * self.sigma.ln()
            - 0.5 * LN_2PI
            - 1.5 * t.ln()
            - u.ln()
            - m * m * t / (2.0 * s2)
            - spread * spread / (2.0 * s2 * t);
        Ok(ln_f.exp())
    }

    /// Complementary distribution `Psi(t, u) = P(M_t > u)`.
    ///
    /// `Psi(0, u) = 1` for `u <= 1` and `Psi(t, u) = 0` for `u > 1`.
    pub fn min_ccdf(&self, t: f64, u: f64) -> f64 {
        if u > 1.0 {
            return 0.0;
        }
        if t <= 0.0 || u <= 0.0 {
            return 1.0;
        }
        self.depth_cdf(t, -u.ln() / self.scale(t))
    }
}

fn positive_duration(t: f64) -> Result<()> {
    if t > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidTime { t, reason: "duration must be positive".into() })
    }
}

/// Probability that a geometric Brownian bridge from `x_a` to `x_b` over `dt`
/// stays strictly above `l`.
pub fn bridge_min_survival(sigma: f64, dt: f64, x_a: f64, x_b: f64, l: f64) -> f64 {
    if l <= 0.0 {
        return 1.0;
    }
    if l >= x_a.min(x_b) {
        return 0.0;
    }
    if dt <= 0.0 {
        return 1.0;
    }
    let z = 2.0 * (l / x_a).ln() * (l / x_b).ln() / (sigma * sigma * dt);
    -(-z).exp_m1()
}
