//! Normal-distribution helpers that stay finite in the far tails.

use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Scaled complementary error function `exp(x^2) erfc(x)` for `x >= 0`.
pub fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 25.0 {
        (x * x).exp() * erfc(x)
    } else {
        // asymptotic series, terms alternate and shrink fast for x >= 25
        let z = 1.0 / (2.0 * x * x);
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..8 {
            term *= -((2 * k - 1) as f64) * z;
            sum += term;
        }
        sum / (x * PI.sqrt())
    }
}

/// Mills ratio `Phi(-x) / phi(x)` for `x >= 0`.
pub fn mills_ratio(x: f64) -> f64 {
    (PI / 2.0).sqrt() * erfcx(x * FRAC_1_SQRT_2)
}

/// `exp(-2 k a) * Phi(k - a)`, the reflected term of the drifted-minimum laws.
///
/// Uses the identity `exp(-2ka) Phi(k-a) = phi(a+k) * R(a-k)` when `a > k` so that
/// neither factor overflows.
pub fn reflected_term(k: f64, a: f64) -> f64 {
    let d = a - k;
    if d > 0.0 {
        norm_pdf(a + k) * mills_ratio(d)
    } else {
        (-2.0 * k * a).exp() * norm_cdf(-d)
    }
}
