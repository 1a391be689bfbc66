//! Laws of the barrier vector `(L^1, ..., L^n)`: marginal distributions coupled
//! by a Gumbel copula.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardUniform};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Continuous, ContinuousCDF};

use crate::error::{Error, Result};

/// Step (in uniform coordinates) of the finite-difference copula density used
/// for three or more regimes.
pub const NUMERICAL_DENSITY_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Beta { alpha: f64, beta: f64 },
    /// Exponential with the given rate (mean `1 / rate`).
    Exponential { rate: f64 },
    Uniform {
        #[serde(default)]
        lo: f64,
        #[serde(default = "one")]
        hi: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Marginal {
    pub fn standard_uniform() -> Self {
        Marginal::Uniform { lo: 0.0, hi: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Marginal::Beta { alpha, beta } => alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite(),
            Marginal::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            Marginal::Uniform { lo, hi } => lo >= 0.0 && hi > lo && hi.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid marginal {self:?}")))
        }
    }

    /// `(lower, upper)` edges of the support; the upper edge may be infinite.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Marginal::Beta { .. } => (0.0, 1.0),
            Marginal::Exponential { .. } => (0.0, f64::INFINITY),
            Marginal::Uniform { lo, hi } => (lo, hi),
        }
    }

    fn beta(alpha: f64, beta: f64) -> Beta {
        Beta::new(alpha, beta).expect("validated beta parameters")
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        match *self {
            Marginal::Beta { alpha, beta } => Self::beta(alpha, beta).cdf(x),
            Marginal::Exponential { rate } => -(-rate * x).exp_m1(),
            Marginal::Uniform { lo, hi } => (x - lo) / (hi - lo),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return 0.0;
        }
        match *self {
            Marginal::Beta { alpha, beta } => Self::beta(alpha, beta).pdf(x),
            Marginal::Exponential { rate } => rate * (-rate * x).exp(),
            Marginal::Uniform { lo, hi } => 1.0 / (hi - lo),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match *self {
            Marginal::Beta { alpha, beta } => Self::beta(alpha, beta).inverse_cdf(p),
            Marginal::Exponential { rate } => -(-p).ln_1p() / rate,
            Marginal::Uniform { lo, hi } => lo + p * (hi - lo),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityMode {
    /// Closed form; available for one or two regimes.
    Analytic,
    /// Finite-difference mixed partial of the copula.
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierLaw {
    pub marginals: Vec<Marginal>,
    /// Gumbel parameter; 1 is independence.
    pub theta: f64,
}

impl BarrierLaw {
    pub fn new(marginals: Vec<Marginal>, theta: f64) -> Result<Self> {
        let law = Self { marginals, theta };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        if self.marginals.is_empty() {
            return Err(Error::InvalidParameter("barrier law needs at least one marginal".into()));
        }
        if !(self.theta >= 1.0 && self.theta.is_finite()) {
            return Err(Error::InvalidParameter(format!("Gumbel theta must be >= 1, got {}", self.theta)));
        }
        self.marginals.iter().try_for_each(Marginal::validate)
    }

    pub fn regimes(&self) -> usize {
        self.marginals.len()
    }

    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        Self::new(self.marginals.clone(), theta)
    }

    /// Law of the first `i` barriers.
    pub fn prefix(&self, i: usize) -> Result<Self> {
        self.check_prefix(i)?;
        Ok(Self { marginals: self.marginals[..i].to_vec(), theta: self.theta })
    }

    fn check_prefix(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.regimes() {
            return Err(Error::BarrierCount { expected: self.regimes(), got: i });
        }
        Ok(())
    }

    /// Gumbel copula at uniform coordinates.
    pub fn copula(&self, u: &[f64]) -> f64 {
        if u.iter().any(|&v| v <= 0.0) {
            return 0.0;
        }
        let x: Vec<f64> = u.iter().map(|&v| -v.min(1.0).ln()).collect();
        (-gumbel_norm(&x, self.theta)).exp()
    }

    /// `F_{L^1..L^i}(x_1, ..., x_i)` with `i = x.len()`.
    pub fn joint_cdf(&self, x: &[f64]) -> Result<f64> {
        self.check_prefix(x.len())?;
        if x.len() == 1 {
            return Ok(self.marginals[0].cdf(x[0]));
        }
        let u: Vec<f64> = x.iter().zip(&self.marginals).map(|(&v, m)| m.cdf(v)).collect();
        Ok(self.copula(&u))
    }

    /// Joint density of all `n` barriers, choosing the closed form when available.
    pub fn joint_pdf(&self, l: &[f64]) -> Result<f64> {
        let mode = if self.regimes() <= 2 { DensityMode::Analytic } else { DensityMode::Numerical };
        self.joint_pdf_with(l, mode)
    }

    pub fn joint_pdf_with(&self, l: &[f64], mode: DensityMode) -> Result<f64> {
        let n = self.regimes();
        if l.len() != n {
            return Err(Error::BarrierCount { expected: n, got: l.len() });
        }
        let marginal: f64 = l.iter().zip(&self.marginals).map(|(&v, m)| m.pdf(v)).product();
        if marginal == 0.0 {
            return Ok(0.0);
        }
        let u: Vec<f64> = l.iter().zip(&self.marginals).map(|(&v, m)| m.cdf(v)).collect();
        let c = match (mode, n) {
            (_, 1) => 1.0,
            (DensityMode::Analytic, 2) => gumbel_density_2d(u[0], u[1], self.theta),
            (DensityMode::Analytic, _) => {
                return Err(Error::UnsupportedRegimes {
                    regimes: n,
                    reason: "closed-form copula density exists for at most two regimes".into(),
                })
            }
            (DensityMode::Numerical, _) => self.numerical_copula_density(&u),
        };
        Ok(c * marginal)
    }

    fn numerical_copula_density(&self, u: &[f64]) -> f64 {
        let n = u.len();
        let h = NUMERICAL_DENSITY_STEP;
        let lo: Vec<f64> = u.iter().map(|&v| (v - h).max(0.0)).collect();
        let hi: Vec<f64> = u.iter().map(|&v| (v + h).min(1.0)).collect();
        let volume: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
        let mut total = 0.0;
        let mut corner = vec![0.0; n];
        for mask in 0..(1usize << n) {
            let mut sign = 1.0;
            for j in 0..n {
                if mask >> j & 1 == 1 {
                    corner[j] = hi[j];
                } else {
                    corner[j] = lo[j];
                    sign = -sign;
                }
            }
            total += sign * self.copula(&corner);
        }
        (total / volume).max(0.0)
    }

    /// `d/dl1 F_{L^1,L^2}(l1, b)` for a two-regime law: the density of `L^1` at
    /// `l1` jointly with `L^2 <= b`.
    pub fn first_density_second_cdf(&self, l1: f64, b: f64) -> Result<f64> {
        if self.regimes() != 2 {
            return Err(Error::BarrierCount { expected: 2, got: self.regimes() });
        }
        let f1 = self.marginals[0].pdf(l1);
        if f1 == 0.0 {
            return Ok(0.0);
        }
        let u1 = self.marginals[0].cdf(l1);
        let u2 = self.marginals[1].cdf(b);
        Ok(f1 * gumbel_first_partial(u1, u2, self.theta))
    }

    /// `dC(u1, u2) / du1` of the bivariate copula.
    pub fn copula_first_partial(&self, u1: f64, u2: f64) -> f64 {
        gumbel_first_partial(u1, u2, self.theta)
    }

    /// One draw of the barrier vector.
    pub fn sample_barriers<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.sample_uniforms(rng).iter().zip(&self.marginals).map(|(&u, m)| m.quantile(u)).collect()
    }

    /// One draw from the copula, via the Marshall–Olkin frailty construction.
    pub fn sample_uniforms<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.regimes();
        if n == 1 || self.theta == 1.0 {
            return (0..n).map(|_| rng.sample::<f64, _>(StandardUniform)).collect();
        }
        let alpha = 1.0 / self.theta;
        let v = positive_stable(alpha, rng);
        (0..n)
            .map(|_| {
                let e: f64 = Exp1.sample(rng);
                (-(e / v).powf(alpha)).exp()
            })
            .collect()
    }
}

/// `(sum x_j^theta)^(1/theta)`, scaled to avoid overflow.
fn gumbel_norm(x: &[f64], theta: f64) -> f64 {
    let top = x.iter().copied().fold(0.0, f64::max);
    if top == 0.0 || top.is_infinite() {
        return top;
    }
    top * x.iter().map(|&v| (v / top).powf(theta)).sum::<f64>().powf(1.0 / theta)
}

fn gumbel_density_2d(u1: f64, u2: f64, theta: f64) -> f64 {
    if u1 <= 0.0 || u2 <= 0.0 || u1 >= 1.0 || u2 >= 1.0 {
        return 0.0;
    }
    let (x1, x2) = (-u1.ln(), -u2.ln());
    let a = gumbel_norm(&[x1, x2], theta);
    let ln_c = -a + x1 + x2 + (theta - 1.0) * ((x1 / a).ln() + (x2 / a).ln());
    ln_c.exp() * (1.0 + (theta - 1.0) / a)
}

/// `dC(u1, u2) / du1`.
fn gumbel_first_partial(u1: f64, u2: f64, theta: f64) -> f64 {
    if u2 <= 0.0 {
        return 0.0;
    }
    if u1 >= 1.0 {
        return if u2 >= 1.0 { 1.0 } else if theta == 1.0 { u2 } else { 0.0 };
    }
    if u1 <= 0.0 {
        return if theta == 1.0 { u2 } else { 1.0 };
    }
    let (x1, x2) = (-u1.ln(), -u2.min(1.0).ln());
    let a = gumbel_norm(&[x1, x2], theta);
    (x1 - a).exp() * (x1 / a).powf(theta - 1.0)
}

/// Positive stable variable with Laplace transform `exp(-s^alpha)`, `0 < alpha < 1`
/// (Kanter's representation).
fn positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample::<f64, _>(StandardUniform) * std::f64::consts::PI;
    let w: f64 = Exp1.sample(rng);
    let a = ((alpha * u).sin().powf(alpha) * ((1.0 - alpha) * u).sin().powf(1.0 - alpha) / u.sin())
        .powf(1.0 / (1.0 - alpha));
    (a / w).powf((1.0 - alpha) / alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_adaptive, integrate_nested, Level, QuadConfig};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn beta22() -> Marginal {
        Marginal::Beta { alpha: 2.0, beta: 2.0 }
    }

    fn reference_law(theta: f64) -> BarrierLaw {
        BarrierLaw::new(vec![beta22(), Marginal::Exponential { rate: 2.0 / 3.0 }], theta).unwrap()
    }

    #[test]
    fn marginal_pdfs_integrate_to_one() {
        let cfg = QuadConfig::default();
        for m in [beta22(), Marginal::Exponential { rate: 2.0 / 3.0 }, Marginal::standard_uniform()] {
            let (lo, hi) = m.support();
            let r = integrate_adaptive(|x| m.pdf(x), lo, hi, &cfg);
            assert!((r.value - 1.0).abs() < 1e-8, "{m:?}: {}", r.value);
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for m in [beta22(), Marginal::Exponential { rate: 2.0 / 3.0 }, Marginal::Uniform { lo: 0.2, hi: 0.7 }] {
            for p in [0.01, 0.3, 0.5, 0.9, 0.999] {
                assert!((m.cdf(m.quantile(p)) - p).abs() < 1e-9, "{m:?} {p}");
            }
        }
    }

    #[test]
    fn beta_cdf_closed_form() {
        // Beta(2,2): 3x^2 - 2x^3
        for x in [0.1, 0.5, 0.8] {
            assert!((beta22().cdf(x) - (3.0 * x * x - 2.0 * x * x * x)).abs() < 1e-12);
        }
    }

    #[test]
    fn independence_factorizes() {
        let law = reference_law(1.0);
        let (a, b) = (0.4, 1.3);
        let f = law.joint_cdf(&[a, b]).unwrap();
        let expect = law.marginals[0].cdf(a) * law.marginals[1].cdf(b);
        assert!((f - expect).abs() < 1e-14);
        let d = law.joint_pdf(&[a, b]).unwrap();
        assert!((d - law.marginals[0].pdf(a) * law.marginals[1].pdf(b)).abs() < 1e-12);
    }

    #[test]
    fn grounded_at_lower_edge() {
        let law = reference_law(2.0);
        assert_eq!(law.joint_cdf(&[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(law.joint_cdf(&[0.5, -1.0]).unwrap(), 0.0);
    }

    #[test]
    fn prefix_one_is_marginal() {
        for theta in [1.0, 2.0, 100.0] {
            let law = reference_law(theta);
            assert_eq!(law.joint_cdf(&[0.37]).unwrap(), beta22().cdf(0.37));
        }
    }

    #[test]
    fn prefix_length_checked() {
        let law = reference_law(2.0);
        assert!(law.joint_cdf(&[]).is_err());
        assert!(law.joint_cdf(&[0.1, 0.2, 0.3]).is_err());
        assert!(law.prefix(3).is_err());
    }

    #[test]
    fn comonotone_limit() {
        // on the diagonal C(a, a) = a^(2^(1/theta)), whose gap to a peaks at a = 1/e
        let law = BarrierLaw::new(vec![beta22(), beta22()], 100.0).unwrap();
        let power = 2f64.powf(0.01);
        let worst = (power - 1.0) / std::f64::consts::E;
        for x in [0.02, 0.2, 0.5, 0.8, 0.98] {
            let a = beta22().cdf(x);
            let c = law.joint_cdf(&[x, x]).unwrap();
            assert!((c - a.powf(power)).abs() < 1e-14);
            assert!((c - a).abs() <= worst * 1.0001);
        }
        assert!((law.joint_cdf(&[0.02, 0.02]).unwrap() - beta22().cdf(0.02)).abs() < 1e-3);
        assert!((law.joint_cdf(&[0.98, 0.98]).unwrap() - beta22().cdf(0.98)).abs() < 1e-3);
    }

    #[test]
    fn density_normalizes_on_truncated_box() {
        for theta in [1.0, 2.0, 5.0] {
            let law = reference_law(theta);
            let hi2 = law.marginals[1].quantile(1.0 - 1e-6);
            let levels = [Level::fixed(0.0, 1.0), Level::fixed(0.0, hi2)];
            let cfg = QuadConfig { abs_tol: 1e-7, rel_tol: 1e-7, max_subdivisions: 400, ..QuadConfig::default() };
            let r = integrate_nested(&|l: &[f64]| law.joint_pdf(l).unwrap(), &levels, &cfg).unwrap();
            assert!((r.value - 1.0).abs() < 1e-4, "theta {theta}: {}", r.value);
        }
    }

    #[test]
    fn density_is_mixed_partial_of_cdf() {
        for theta in [1.0, 1.5, 2.0, 10.0] {
            let law = reference_law(theta);
            let (a, b, h) = (0.5, 0.9, 1e-4);
            let f = |x: f64, y: f64| law.joint_cdf(&[x, y]).unwrap();
            let fd = (f(a + h, b + h) - f(a + h, b - h) - f(a - h, b + h) + f(a - h, b - h)) / (4.0 * h * h);
            let d = law.joint_pdf(&[a, b]).unwrap();
            assert!((fd / d - 1.0).abs() < 1e-3, "theta {theta}: {fd} vs {d}");
        }
    }

    #[test]
    fn first_partial_matches_difference() {
        for theta in [1.0, 2.0, 7.0] {
            let law = reference_law(theta);
            let (a, b, h) = (0.35, 0.8, 1e-5);
            let fd = (law.joint_cdf(&[a + h, b]).unwrap() - law.joint_cdf(&[a - h, b]).unwrap()) / (2.0 * h);
            let p = law.first_density_second_cdf(a, b).unwrap();
            assert!((fd - p).abs() < 1e-7, "theta {theta}: {fd} vs {p}");
        }
    }

    #[test]
    fn numerical_density_agrees_with_closed_form() {
        let law = reference_law(2.5);
        let l = [0.45, 1.1];
        let exact = law.joint_pdf_with(&l, DensityMode::Analytic).unwrap();
        let approx = law.joint_pdf_with(&l, DensityMode::Numerical).unwrap();
        assert!((approx / exact - 1.0).abs() < 1e-3);
    }

    #[test]
    fn analytic_density_refused_beyond_two() {
        let law = BarrierLaw::new(vec![beta22(); 3], 2.0).unwrap();
        assert!(law.joint_pdf_with(&[0.3, 0.4, 0.5], DensityMode::Analytic).is_err());
        assert!(law.joint_pdf(&[0.3, 0.4, 0.5]).unwrap() > 0.0);
    }

    #[test]
    fn theta_below_one_rejected() {
        assert!(BarrierLaw::new(vec![beta22()], 0.5).is_err());
    }

    #[test]
    fn sampled_marginal_passes_ks() {
        let law = reference_law(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n).map(|_| law.sample_barriers(&mut rng)[0]).collect();
        xs.sort_by(f64::total_cmp);
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = beta22().cdf(x);
                (c - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - c).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 1.628 / (n as f64).sqrt(), "KS {ks}");
    }

    #[test]
    fn independent_draws_uncorrelated() {
        let law = reference_law(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let u = law.sample_uniforms(&mut rng);
            acc += (u[0] - 0.5) * (u[1] - 0.5);
        }
        // Var(U) = 1/12, so the correlation estimate has standard error 1/sqrt(n)
        let corr = 12.0 * acc / n as f64;
        assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "corr {corr}");
    }

    #[test]
    fn strong_dependence_is_nearly_comonotone() {
        let law = reference_law(100.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 20_000;
        let close = (0..n)
            .filter(|_| {
                let u = law.sample_uniforms(&mut rng);
                (u[0] - u[1]).abs() < 0.01
            })
            .count();
        assert!(close as f64 / n as f64 > 0.9);
    }

    #[test]
    fn empirical_joint_cdf_matches() {
        let law = reference_law(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| law.sample_barriers(&mut rng)).collect();
        for (a, b) in [(0.3, 0.5), (0.5, 1.2), (0.8, 2.5)] {
            let p = law.joint_cdf(&[a, b]).unwrap();
            let hits = draws.iter().filter(|l| l[0] <= a && l[1] <= b).count() as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((hits - p).abs() < 4.0 * se, "({a},{b}): {hits} vs {p}");
        }
    }

    proptest! {
        #[test]
        fn joint_cdf_monotone(theta in 1.0f64..20.0, a in 0.01f64..0.99, b in 0.01f64..4.0, da in 0.0f64..0.3, db in 0.0f64..2.0) {
            let law = reference_law(theta);
            let f0 = law.joint_cdf(&[a, b]).unwrap();
            let f1 = law.joint_cdf(&[(a + da).min(1.0), b + db]).unwrap();
            prop_assert!(f1 >= f0 - 1e-14);
            prop_assert!((0.0..=1.0).contains(&f0));
        }

        #[test]
        fn copula_within_frechet_bounds(theta in 1.0f64..50.0, u in 0.0f64..1.0, v in 0.0f64..1.0) {
            let law = reference_law(theta);
            let c = law.copula(&[u, v]);
            prop_assert!(c <= u.min(v) + 1e-12);
            prop_assert!(c >= u * v - 1e-12);
        }
    }
}
