//! Conditional survival probabilities for continuously (C) and discretely (D)
//! informed investors, with the credit spreads and zero-recovery bond prices
//! they imply.
//!
//! Each conditional probability is a ratio `P(tau > T | info) / P(tau > t | info)`
//! on the no-default set. Numerators are iterated integrals over the laws of
//! the future running minima; they are evaluated in depth coordinates (see
//! [`crate::minlaw`]).

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbm::{regime_minimum, BarrierSchedule, FirmParams, PathRecord, TIME_EPS};
use crate::minlaw::{bridge_min_survival, NormalizedLaw};
use crate::quadrature::{integrate_nested, integrate_with_breakpoints, Level, QuadConfig, QuadResult, MAX_DEPTH};
use crate::special::norm_pdf;
use crate::thresholds::{BarrierLaw, Marginal};

/// Survival-to-date probabilities below this make the ratio meaningless.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Largest supported number of barrier regimes.
pub const MAX_REGIMES: usize = 3;

/// Standard deviations kept on each side of a Gaussian integration variable.
const GAUSS_SPAN: f64 = 12.0;

/// What a continuously observing investor knows at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CInvestorView {
    pub t: f64,
    pub schedule: BarrierSchedule,
    /// Running minima of the regimes completed before `t`.
    pub completed_minima: Vec<f64>,
    /// Running minimum since the start of the current regime, `X_t` included.
    pub current_minimum: f64,
    pub current_value: f64,
    pub defaulted: bool,
}

impl CInvestorView {
    pub fn new(
        t: f64,
        schedule: BarrierSchedule,
        completed_minima: Vec<f64>,
        current_minimum: f64,
        current_value: f64,
        defaulted: bool,
    ) -> Result<Self> {
        schedule.validate()?;
        if !(t >= 0.0 && t < schedule.horizon) {
            return Err(Error::InvalidTime { t, reason: "evaluation time must lie in [0, horizon)".into() });
        }
        let regime = schedule.regime_of(t);
        if completed_minima.len() != regime {
            return Err(Error::InvalidParameter(format!(
                "{} completed regimes at t = {t}, got {} minima",
                regime,
                completed_minima.len()
            )));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !completed_minima.iter().all(|&v| positive(v)) || !positive(current_minimum) || !positive(current_value) {
            return Err(Error::InvalidParameter("minima and firm value must be positive".into()));
        }
        if current_minimum > current_value * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter("current minimum exceeds the current value".into()));
        }
        Ok(Self { t, schedule, completed_minima, current_minimum, current_value, defaulted })
    }

    /// Reads the view at `t` off a recorded path.
    pub fn from_path(path: &PathRecord, t: f64) -> Result<Self> {
        let schedule = path.schedule.clone();
        if t > path.horizon() + TIME_EPS {
            return Err(Error::InvalidTime { t, reason: "beyond the recorded path".into() });
        }
        let r = schedule.regime_of(t);
        let completed = (0..r)
            .map(|j| regime_minimum(path, schedule.regime_start(j), schedule.regime_start(j + 1)))
            .collect::<Result<Vec<_>>>()?;
        let start = schedule.regime_start(r);
        let x = path.value_at(t);
        let current = if t > start + TIME_EPS { regime_minimum(path, start, t)?.min(x) } else { x };
        Self::new(t, schedule, completed, current, x, path.is_defaulted_by(t))
    }

    pub fn regime(&self) -> usize {
        self.schedule.regime_of(self.t)
    }

    /// Observed minima of all regimes up to and including the current one.
    pub fn minima(&self) -> Vec<f64> {
        let mut m = self.completed_minima.clone();
        m.push(self.current_minimum);
        m
    }
}

/// Information dates of a D-investor, containing every adjustment time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationDates {
    times: Vec<f64>,
}

impl ObservationDates {
    pub fn new(mut times: Vec<f64>, schedule: &BarrierSchedule) -> Result<Self> {
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() <= TIME_EPS);
        if times.first().is_none_or(|&t0| t0.abs() > TIME_EPS) {
            return Err(Error::InvalidParameter("observation dates must start at 0".into()));
        }
        if times.iter().any(|&t| t >= schedule.horizon - TIME_EPS) {
            return Err(Error::InvalidParameter("observation dates must precede the maturity".into()));
        }
        for &a in &schedule.adjustment_times {
            if !times.iter().any(|&t| (t - a).abs() <= TIME_EPS) {
                return Err(Error::MissingAdjustmentObservation(a));
            }
        }
        Ok(Self { times })
    }

    /// Dates `0, step, 2 step, ...` before the maturity, plus every adjustment time.
    pub fn every(step: f64, schedule: &BarrierSchedule) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidParameter("observation step must be positive".into()));
        }
        let count = ((schedule.horizon - TIME_EPS) / step).ceil() as usize;
        let mut times: Vec<f64> = (0..count).map(|k| k as f64 * step).collect();
        times.extend(&schedule.adjustment_times);
        Self::new(times, schedule)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Dates at or before `t`.
    pub fn observed_by(&self, t: f64) -> &[f64] {
        let k = self.times.partition_point(|&d| d <= t + TIME_EPS);
        &self.times[..k]
    }
}

/// What a discretely observing investor knows at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DInvestorView {
    pub t: f64,
    pub schedule: BarrierSchedule,
    /// Information dates up to and including the last one at or before `t`.
    pub times: Vec<f64>,
    /// Firm values observed at `times`.
    pub values: Vec<f64>,
    pub defaulted: bool,
}

impl DInvestorView {
    pub fn new(t: f64, schedule: BarrierSchedule, dates: &ObservationDates, values: Vec<f64>, defaulted: bool) -> Result<Self> {
        if !(t >= 0.0 && t < schedule.horizon) {
            return Err(Error::InvalidTime { t, reason: "evaluation time must lie in [0, horizon)".into() });
        }
        let times = dates.observed_by(t).to_vec();
        if values.len() != times.len() {
            return Err(Error::InvalidParameter(format!(
                "{} information dates by t = {t}, got {} values",
                times.len(),
                values.len()
            )));
        }
        if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter("observed values must be positive".into()));
        }
        Ok(Self { t, schedule, times, values, defaulted })
    }

    pub fn from_path(path: &PathRecord, dates: &ObservationDates, t: f64) -> Result<Self> {
        let values = dates.observed_by(t).iter().map(|&d| path.value_at(d)).collect();
        Self::new(t, path.schedule.clone(), dates, values, path.is_defaulted_by(t))
    }

    pub fn regime(&self) -> usize {
        self.schedule.regime_of(self.t)
    }

    pub fn last_observation(&self) -> (f64, f64) {
        (*self.times.last().unwrap(), *self.values.last().unwrap())
    }

    /// Observations `(T^j_0, X), (T^j_1, X), ...` of regime `j`. A completed
    /// regime includes the adjustment date that closes it.
    pub fn regime_observations(&self, j: usize) -> Vec<(f64, f64)> {
        let start = self.schedule.regime_start(j);
        let end = if j < self.regime() { self.schedule.regime_end(j) } else { f64::INFINITY };
        self.times
            .iter()
            .zip(&self.values)
            .filter(|(&d, _)| d >= start - TIME_EPS && d <= end + TIME_EPS)
            .map(|(&d, &x)| (d, x))
            .collect()
    }

    /// Index `i` of the last information date `T^k_i` of the current regime.
    pub fn observation_index(&self) -> usize {
        self.regime_observations(self.regime()).len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingInputs {
    /// Continuously compounded risk-free rate.
    pub rate: f64,
    pub maturity: f64,
}

impl PricingInputs {
    pub fn new(rate: f64, maturity: f64) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("rate must be non-negative, got {rate}")));
        }
        if !(maturity > 0.0) {
            return Err(Error::InvalidParameter("maturity must be positive".into()));
        }
        Ok(Self { rate, maturity })
    }
}

fn check_setup(law: &BarrierLaw, schedule: &BarrierSchedule, t: f64, maturity: f64) -> Result<usize> {
    law.validate()?;
    let n = law.regimes();
    if n != schedule.regimes() {
        return Err(Error::BarrierCount { expected: schedule.regimes(), got: n });
    }
    if n > MAX_REGIMES {
        return Err(Error::UnsupportedRegimes { regimes: n, reason: format!("at most {MAX_REGIMES} regimes") });
    }
    if !(t < maturity - TIME_EPS) {
        return Err(Error::InvalidTime { t, reason: format!("must precede the maturity {maturity}") });
    }
    if schedule.adjustment_times.iter().any(|&a| a >= maturity - TIME_EPS) {
        return Err(Error::InvalidParameter("every adjustment time must precede the maturity".into()));
    }
    Ok(n)
}

fn check_depth(n: usize, depth: usize, cfg: &QuadConfig) -> Result<()> {
    if depth > MAX_DEPTH {
        return Err(Error::DepthExceeded { depth, max: MAX_DEPTH });
    }
    if n == MAX_REGIMES && !cfg.allow_expensive {
        return Err(Error::UnsupportedRegimes {
            regimes: n,
            reason: "three regimes need the allow_expensive quadrature flag".into(),
        });
    }
    Ok(())
}

/// Depths `a > 0` at which `exp(y - s a)` crosses one of `levels`.
fn crossing_depths(y: f64, s: f64, levels: impl IntoIterator<Item = f64>) -> Vec<f64> {
    levels
        .into_iter()
        .filter(|&l| l > 0.0 && l.is_finite())
        .map(|l| (y - l.ln()) / s)
        .filter(|&a| a > 0.0)
        .collect()
}

fn support_edges(m: &Marginal) -> [f64; 2] {
    let (lo, hi) = m.support();
    [lo, hi]
}

/// One-entry memo of a marginal CDF, for integrands whose outer arguments
/// repeat across many inner evaluations.
struct CdfMemo<'a> {
    marginal: &'a Marginal,
    last: Cell<(f64, f64)>,
}

impl<'a> CdfMemo<'a> {
    fn new(marginal: &'a Marginal) -> Self {
        Self { marginal, last: Cell::new((f64::NAN, f64::NAN)) }
    }

    fn cdf(&self, x: f64) -> f64 {
        let (arg, val) = self.last.get();
        if arg == x {
            return val;
        }
        let val = self.marginal.cdf(x);
        self.last.set((x, val));
        val
    }
}

/// `P(tau > T | F_t)` for the continuously observing investor.
#[allow(non_snake_case)]
pub fn c_f_survival_T(
    view: &CInvestorView,
    law: &BarrierLaw,
    params: &FirmParams,
    maturity: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    let n = check_setup(law, &view.schedule, view.t, maturity)?;
    params.validate()?;
    cfg.validate()?;
    let r = view.regime();
    let pairs = n - 1 - r;
    check_depth(n, 2 * pairs + 1, cfg)?;
    let walk = NormalizedLaw::from_firm(params);
    let (t, x, m_cur) = (view.t, view.current_value, view.current_minimum);
    let memos: Vec<CdfMemo> = law.marginals.iter().map(CdfMemo::new).collect();
    let prior: Vec<f64> = view.completed_minima.iter().zip(&law.marginals).map(|(&v, m)| m.cdf(v)).collect();

    if pairs == 0 {
        // Once the last regime has started only the final minimum is unknown. For
        // depths below a_star the minimum stays at the recorded one.
        let tau = maturity - t;
        let s = walk.scale(tau);
        let a_star = (x / m_cur).ln().max(0.0) / s;
        let with_last = |b: f64| {
            let mut u = prior.clone();
            u.push(memos[n - 1].cdf(b));
            law.copula(&u)
        };
        let frozen = with_last(m_cur) * walk.depth_cdf(tau, a_star);
        let breaks = crossing_depths(x.ln(), s, support_edges(&law.marginals[n - 1]));
        let fine = QuadConfig { abs_tol: cfg.abs_tol * 1e-3, rel_tol: cfg.rel_tol * 1e-3, ..*cfg };
        let tail = integrate_with_breakpoints(
            |a| {
                let g = walk.depth_density(tau, a);
                if g == 0.0 { 0.0 } else { with_last(x * (-s * a).exp()) * g }
            },
            a_star,
            f64::INFINITY,
            &breaks,
            &fine,
        );
        return Ok(QuadResult { value: frozen + tail.value, ..tail });
    }

    // Variables, outermost first: (a_r, c_r), ..., (a_{n-2}, c_{n-2}), a_w.
    let mut durations: Vec<f64> = (r..n - 1)
        .map(|j| view.schedule.regime_end(j) - if j == r { t } else { view.schedule.regime_start(j) })
        .collect();
    durations.push(maturity - view.schedule.regime_start(n - 1));
    let scales: Vec<f64> = durations.iter().map(|&d| walk.scale(d)).collect();
    let y0 = x.ln();
    let scales = &scales;
    let log_level = move |vars: &[f64], pair: usize| -> f64 {
        (0..pair).map(|p| scales[p] * (vars[2 * p + 1] - vars[2 * p])).sum::<f64>() + y0
    };

    let integrand = |vars: &[f64]| -> f64 {
        let mut density = 1.0;
        for p in 0..pairs {
            density *= walk.joint_depth_density(durations[p], vars[2 * p], vars[2 * p + 1]);
        }
        density *= walk.depth_density(durations[pairs], vars[2 * pairs]);
        if density == 0.0 {
            return 0.0;
        }
        let mut u = prior.clone();
        let mut y = y0;
        for p in 0..=pairs {
            let a = vars[2 * p];
            let mut arg = (y - scales[p] * a).exp();
            if p == 0 {
                arg = arg.min(m_cur);
            }
            u.push(memos[r + p].cdf(arg));
            if p < pairs {
                y += scales[p] * (vars[2 * p + 1] - a);
            }
        }
        law.copula(&u) * density
    };

    let mut levels = Vec::with_capacity(2 * pairs + 1);
    for p in 0..=pairs {
        let marginal = law.marginals[r + p];
        let s = scales[p];
        let log_level = &log_level;
        let kinks = move |outer: &[f64]| {
            let y = log_level(outer, p);
            let mut targets = support_edges(&marginal).to_vec();
            if p == 0 {
                targets.push(m_cur);
            }
            crossing_depths(y, s, targets)
        };
        levels.push(Level::half_line().with_breakpoints(kinks));
        if p < pairs {
            levels.push(Level::half_line());
        }
    }
    integrate_nested(&integrand, &levels, cfg)
}

/// `P(tau > t | F_t)`: the joint barrier CDF at the observed regime minima.
pub fn c_f_survival_t(view: &CInvestorView, law: &BarrierLaw) -> Result<f64> {
    let minima = view.minima();
    law.prefix(minima.len())?.joint_cdf(&minima)
}

/// `num / den` clamped to `[0, 1]`, with first-order error propagation.
pub fn survival_ratio(num: QuadResult, den: QuadResult) -> Result<QuadResult> {
    if !(den.value >= DENOMINATOR_FLOOR) {
        return Err(Error::ImprobableInformation(den.value));
    }
    let value = (num.value / den.value).clamp(0.0, 1.0);
    let error = num.error / den.value + num.value.abs() * den.error / (den.value * den.value);
    Ok(QuadResult {
        value,
        error,
        converged: num.converged && den.converged,
        evaluations: num.evaluations + den.evaluations,
    })
}

/// Survival to `maturity` given the continuous investor's information.
pub fn c_conditional_survival(
    view: &CInvestorView,
    law: &BarrierLaw,
    params: &FirmParams,
    maturity: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    check_setup(law, &view.schedule, view.t, maturity)?;
    if view.defaulted {
        return Ok(QuadResult::exact(0.0));
    }
    let den = c_f_survival_t(view, law)?;
    if !(den >= DENOMINATOR_FLOOR) {
        return Err(Error::ImprobableInformation(den));
    }
    survival_ratio(c_f_survival_T(view, law, params, maturity, cfg)?, QuadResult::exact(den))
}

/// Two-regime conditional survival when the barriers are treated as
/// independent, whatever the law's `theta`: the factor of the first barrier
/// cancels and the integrals run over the minimum and terminal values directly.
pub fn c_conditional_survival_independent(
    view: &CInvestorView,
    law: &BarrierLaw,
    params: &FirmParams,
    maturity: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    check_setup(law, &view.schedule, view.t, maturity)?;
    if law.regimes() != 2 {
        return Err(Error::BarrierCount { expected: 2, got: law.regimes() });
    }
    if view.defaulted {
        return Ok(QuadResult::exact(0.0));
    }
    let walk = NormalizedLaw::from_firm(params);
    let (f1, f2) = (&law.marginals[0], &law.marginals[1]);
    let (t, x, m) = (view.t, view.current_value, view.current_minimum);
    let t1 = view.schedule.adjustment_times[1];
    let min_density = |tau: f64, w: f64| walk.min_density(tau, w).unwrap_or(0.0);

    if view.regime() == 1 {
        let den = f2.cdf(m);
        if !(den >= DENOMINATOR_FLOOR) {
            return Err(Error::ImprobableInformation(den));
        }
        let tau = maturity - t;
        let num = integrate_with_breakpoints(|w| f2.cdf(m.min(w * x)) * min_density(tau, w), 0.0, 1.0, &[m / x], cfg);
        return survival_ratio(num, QuadResult::exact(den));
    }

    let den = f1.cdf(m);
    if !(den >= DENOMINATOR_FLOOR) {
        return Err(Error::ImprobableInformation(den));
    }
    let (tau1, tau2) = (t1 - t, maturity - t1);
    let first = CdfMemo::new(f1);
    let integrand = |v: &[f64]| {
        let (u, y, w) = (v[0], v[1], v[2]);
        let joint = walk.min_terminal_joint_density(tau1, u, y).unwrap_or(0.0);
        if joint == 0.0 {
            return 0.0;
        }
        first.cdf(m.min(u * x)) * f2.cdf(w * y * x) * min_density(tau2, w) * joint
    };
    let levels = [
        Level::fixed(0.0, 1.0).with_breakpoints(move |_| vec![m / x]),
        Level::new(|o: &[f64]| o[0], |_| f64::INFINITY),
        Level::fixed(0.0, 1.0),
    ];
    let num = integrate_nested(&integrand, &levels, cfg)?;
    survival_ratio(num, QuadResult::exact(den))
}

/// `K^{k,i}(l)`: probability that the bridges over the first `i` observation
/// gaps of regime `k` all stay above `l`.
pub fn k_product(view: &DInvestorView, params: &FirmParams, k: usize, i: usize, l: f64) -> Result<f64> {
    let obs = view.regime_observations(k);
    if i + 1 > obs.len() {
        return Err(Error::InvalidParameter(format!("regime {k} has only {} observation gaps", obs.len().saturating_sub(1))));
    }
    Ok(bridge_product(&obs[..=i], params.sigma, l))
}

fn bridge_product(obs: &[(f64, f64)], sigma: f64, l: f64) -> f64 {
    let mut p = 1.0;
    for w in obs.windows(2) {
        p *= bridge_min_survival(sigma, w[1].0 - w[0].0, w[0].1, w[1].1, l);
        if p == 0.0 {
            break;
        }
    }
    p
}

/// Integrals over `(l^1, ..., l^{k+1})` of the completed-regime bridge factors,
/// the current-regime factor and `Psi(horizon, l^{k+1} / X_last)`, against the
/// joint density of the first `k + 1` barriers.
fn bridge_weighted_integral(
    view: &DInvestorView,
    law: &BarrierLaw,
    params: &FirmParams,
    horizon: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    let k = view.regime();
    let law = law.prefix(k + 1)?;
    let walk = NormalizedLaw::from_firm(params);
    let (_, x_last) = view.last_observation();
    let sigma = params.sigma;
    let observations: Vec<Vec<(f64, f64)>> = (0..=k).map(|j| view.regime_observations(j)).collect();
    let mut levels = Vec::with_capacity(k + 1);
    for (j, obs) in observations.iter().enumerate() {
        let (lo, hi) = law.marginals[j].support();
        let observed_min = obs.iter().map(|o| o.1).fold(f64::INFINITY, f64::min);
        let top = hi.min(observed_min);
        if !(top > lo) {
            return Ok(QuadResult::exact(0.0));
        }
        let level = Level::fixed(lo, top);
        levels.push(if j == 0 {
            level
        } else {
            // strong dependence concentrates the joint density along the diagonal u_j = u_{j-1}
            let (prev, cur) = (law.marginals[j - 1], law.marginals[j]);
            level.with_breakpoints(move |outer: &[f64]| vec![cur.quantile(prev.cdf(outer[j - 1]))])
        });
    }
    let integrand = |l: &[f64]| {
        let mut w = walk.min_ccdf(horizon, l[k] / x_last);
        for (j, obs) in observations.iter().enumerate() {
            if w == 0.0 {
                return 0.0;
            }
            w *= bridge_product(obs, sigma, l[j]);
        }
        if w == 0.0 {
            return 0.0;
        }
        w * law.joint_pdf(l).unwrap_or(0.0)
    };
    integrate_nested(&integrand, &levels, cfg)
}

/// `P(tau > t | F^D_t)` for the discretely observing investor.
pub fn d_f_survival_t(view: &DInvestorView, law: &BarrierLaw, params: &FirmParams, cfg: &QuadConfig) -> Result<QuadResult> {
    let n = check_setup(law, &view.schedule, view.t, view.schedule.horizon)?;
    params.validate()?;
    cfg.validate()?;
    check_depth(n, view.regime() + 1, cfg)?;
    let (t_last, _) = view.last_observation();
    bridge_weighted_integral(view, law, params, view.t - t_last, cfg)
}

/// `P(tau > T | F^D_t)` for the discretely observing investor. It only changes
/// at information dates.
#[allow(non_snake_case)]
pub fn d_f_survival_T(
    view: &DInvestorView,
    law: &BarrierLaw,
    params: &FirmParams,
    maturity: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    let n = check_setup(law, &view.schedule, view.t, maturity)?;
    params.validate()?;
    cfg.validate()?;
    let k = view.regime();
    let (t_last, _) = view.last_observation();
    if k + 1 == n {
        check_depth(n, n, cfg)?;
        return bridge_weighted_integral(view, law, params, maturity - t_last, cfg);
    }
    if n != 2 {
        return Err(Error::UnsupportedRegimes {
            regimes: n,
            reason: "discrete-information survival before the last adjustment is implemented for two regimes".into(),
        });
    }
    two_regime_numerator(view, law, params, maturity, cfg)
}

/// Numerator before the adjustment for two regimes. Variables: the first barrier
/// `l`, the standardized log-value `z` at the adjustment date, and the depth `a`
/// of the last-regime minimum. The second barrier and the first-regime minimum
/// are integrated in closed form: the former through the first partial of the
/// joint CDF, the latter through the density of a path killed below `l`.
fn two_regime_numerator(
    view: &DInvestorView,
    law: &BarrierLaw,
    params: &FirmParams,
    maturity: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    let walk = NormalizedLaw::from_firm(params);
    let (t_last, x_last) = view.last_observation();
    let t1 = view.schedule.adjustment_times[1];
    let (tau1, tau2) = (t1 - t_last, maturity - t1);
    let (s1, s2, kappa1) = (walk.scale(tau1), walk.scale(tau2), walk.kappa(tau1));
    let obs = view.regime_observations(0);
    let (m1, m2) = (&law.marginals[0], &law.marginals[1]);
    let (lo, hi) = m1.support();
    let top = hi.min(obs.iter().map(|o| o.1).fold(f64::INFINITY, f64::min));
    if !(top > lo) {
        return Ok(QuadResult::exact(0.0));
    }
    let sigma = params.sigma;
    let barrier_depth = move |l: f64| if l > 0.0 { (l / x_last).ln() / s1 } else { f64::NEG_INFINITY };

    // (l, weight, F1(l)) where weight = K(l) f1(l)
    let outer = Cell::new((f64::NAN, 0.0, 0.0));
    let first_barrier = |l: f64| {
        let (at, w, u) = outer.get();
        if at == l {
            return (w, u);
        }
        let w = bridge_product(&obs, sigma, l) * m1.pdf(l);
        let u = m1.cdf(l);
        outer.set((l, w, u));
        (w, u)
    };
    let second = CdfMemo::new(m2);
    let integrand = |v: &[f64]| {
        let (l, z, a) = (v[0], v[1], v[2]);
        let (weight, u1) = first_barrier(l);
        if weight == 0.0 {
            return 0.0;
        }
        let beta = barrier_depth(l);
        let killed = norm_pdf(z - kappa1) * if beta.is_finite() { -(2.0 * beta * (z - beta)).exp_m1() } else { 1.0 };
        let g = walk.depth_density(tau2, a);
        if killed <= 0.0 || g == 0.0 {
            return 0.0;
        }
        let b = x_last * (s1 * z - s2 * a).exp();
        weight * law.copula_first_partial(u1, second.cdf(b)) * killed * g
    };
    let levels = [
        Level::fixed(lo, top),
        Level::new(move |o: &[f64]| barrier_depth(o[0]).max(kappa1 - GAUSS_SPAN), move |_| kappa1 + GAUSS_SPAN),
        Level::half_line().with_breakpoints(move |o: &[f64]| {
            crossing_depths(x_last.ln() + s1 * o[1], s2, support_edges(m2))
        }),
    ];
    integrate_nested(&integrand, &levels, cfg)
}

/// Survival to `maturity` given the discrete investor's information.
pub fn d_conditional_survival(
    view: &DInvestorView,
    law: &BarrierLaw,
    params: &FirmParams,
    maturity: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    check_setup(law, &view.schedule, view.t, maturity)?;
    if view.defaulted {
        return Ok(QuadResult::exact(0.0));
    }
    let den = d_f_survival_t(view, law, params, cfg)?;
    if !(den.value >= DENOMINATOR_FLOOR) {
        return Err(Error::ImprobableInformation(den.value));
    }
    survival_ratio(d_f_survival_T(view, law, params, maturity, cfg)?, den)
}

/// Credit yield spread `-ln(p) / (T - t)`; infinite when `p = 0`.
pub fn credit_spread(p: f64, t: f64, maturity: f64) -> Result<f64> {
    if !(t < maturity) {
        return Err(Error::InvalidTime { t, reason: format!("must precede the maturity {maturity}") });
    }
    if !(-1e-9..=1.0 + 1e-9).contains(&p) {
        return Err(Error::ProbabilityRange(p));
    }
    if p <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((-p.min(1.0).ln() / (maturity - t)).max(0.0))
}

/// Price of the zero-recovery zero-coupon bond: discounted survival probability.
pub fn bond_price(p: f64, inputs: &PricingInputs, t: f64) -> Result<f64> {
    if !(t < inputs.maturity) {
        return Err(Error::InvalidTime { t, reason: format!("must precede the maturity {}", inputs.maturity) });
    }
    if !(-1e-9..=1.0 + 1e-9).contains(&p) {
        return Err(Error::ProbabilityRange(p));
    }
    Ok((-inputs.rate * (inputs.maturity - t)).exp() * p.clamp(0.0, 1.0))
}
