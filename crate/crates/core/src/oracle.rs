//! Brute-force Monte Carlo estimators of the conditional survival probabilities
//! and of the running-minimum laws, used to validate the closed forms.
//!
//! Future paths are simulated exactly in log space on a fine grid; within each
//! step the bridge minimum is sampled, so the barrier test carries no
//! discretization bias.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbm::{bridge_log_minimum, BarrierSchedule, FirmParams, TIME_EPS};
use crate::minlaw::{bridge_min_survival, NormalizedLaw};
use crate::survival::{CInvestorView, DInvestorView};
use crate::thresholds::BarrierLaw;

/// Continuity correction for discretely monitored barriers (Broadie, Glasserman
/// and Kou): `zeta(1/2) / sqrt(2 pi)`.
pub const DISCRETE_MONITORING_SHIFT: f64 = 0.5826;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Abort when fewer than one in this many barrier draws is consistent with
    /// the observed history.
    pub max_rejection_ratio: f64,
    /// Simulation step for the future path.
    pub step: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { n_samples: 100_000, seed: 7, max_rejection_ratio: 1000.0, step: 1.0 / 250.0 }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidParameter("oracle needs at least one sample".into()));
        }
        if !(self.max_rejection_ratio >= 1.0) || !(self.step > 0.0) {
            return Err(Error::InvalidParameter("oracle rejection ratio must be >= 1 and step positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub estimate: f64,
    pub std_error: f64,
    /// Barrier draws used, after rejection.
    pub samples: usize,
    pub effective_sample_size: f64,
    /// Set when the effective sample size falls below 1% of the budget.
    pub low_ess: bool,
}

impl OracleEstimate {
    /// `(value - estimate) / std_error`; zero when both agree exactly. The error
    /// is floored at the weight of one sample, so an estimate with no observed
    /// variation (all paths survived, say) still yields a finite score.
    pub fn z_score(&self, value: f64) -> f64 {
        let d = value - self.estimate;
        if d == 0.0 {
            return 0.0;
        }
        d / self.std_error.max(1.0 / self.effective_sample_size.max(1.0))
    }
}

/// Step boundaries on `[start, end]` of length at most `step`, containing every knot.
fn step_grid(start: f64, end: f64, step: f64, knots: &[f64]) -> Vec<f64> {
    let mut cuts: Vec<f64> = knots.iter().copied().filter(|&k| k > start + TIME_EPS && k < end - TIME_EPS).collect();
    cuts.push(end);
    cuts.sort_by(f64::total_cmp);
    let mut grid = vec![start];
    let mut left = start;
    for c in cuts {
        let pieces = ((c - left) / step).ceil().max(1.0) as usize;
        let h = (c - left) / pieces as f64;
        for j in 1..pieces {
            grid.push(left + j as f64 * h);
        }
        grid.push(c);
        left = c;
    }
    grid
}

/// Simulates the log value along `grid` and returns the right end of the first
/// step whose bridge minimum reaches the barrier, if any.
fn first_crossing<R: Rng + ?Sized>(
    grid: &[f64],
    y0: f64,
    log_barriers: &[f64],
    schedule: &BarrierSchedule,
    params: &FirmParams,
    rng: &mut R,
) -> Option<f64> {
    let (m, s2) = (params.log_drift(), params.sigma * params.sigma);
    let mut y = y0;
    for w in grid.windows(2) {
        let dt = w[1] - w[0];
        let barrier = log_barriers[schedule.regime_of(w[0])];
        let z: f64 = StandardNormal.sample(rng);
        let next = y + m * dt + (s2 * dt).sqrt() * z;
        if next.min(y) > barrier {
            let u = 1.0 - rng.random::<f64>();
            if bridge_log_minimum(y, next, s2 * dt, u) > barrier {
                y = next;
                continue;
            }
        }
        return Some(w[1]);
    }
    None
}

fn log_levels(barriers: &[f64]) -> Vec<f64> {
    barriers.iter().map(|&l| if l > 0.0 { l.ln() } else { f64::NEG_INFINITY }).collect()
}

fn check_law(law: &BarrierLaw, schedule: &BarrierSchedule) -> Result<()> {
    law.validate()?;
    if law.regimes() != schedule.regimes() {
        return Err(Error::BarrierCount { expected: schedule.regimes(), got: law.regimes() });
    }
    Ok(())
}

/// Monte Carlo estimate of the continuous investor's conditional survival.
///
/// Barrier draws are kept only when every observed regime minimum lies above its
/// barrier; the future path is then simulated from `(t, X_t)`.
pub fn mc_c_survival(
    view: &CInvestorView,
    law: &BarrierLaw,
    params: &FirmParams,
    maturity: f64,
    cfg: &OracleConfig,
) -> Result<OracleEstimate> {
    cfg.validate()?;
    check_law(law, &view.schedule)?;
    if view.defaulted {
        return Err(Error::InvalidParameter("conditioning on survival of a defaulted view".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let minima = view.minima();
    let grid = step_grid(view.t, maturity, cfg.step, &view.schedule.adjustment_times);
    let y0 = view.current_value.ln();
    let budget = (cfg.n_samples as f64 * cfg.max_rejection_ratio).ceil() as usize;
    let (mut drawn, mut accepted, mut survived) = (0usize, 0usize, 0usize);
    while accepted < cfg.n_samples {
        if drawn >= budget {
            return Err(Error::ConditioningTooRare { accepted, drawn });
        }
        drawn += 1;
        let barriers = law.sample_barriers(&mut rng);
        if !minima.iter().zip(&barriers).all(|(&m, &l)| m > l) {
            continue;
        }
        accepted += 1;
        let logs = log_levels(&barriers);
        if first_crossing(&grid, y0, &logs, &view.schedule, params, &mut rng).is_none() {
            survived += 1;
        }
    }
    let n = accepted as f64;
    let p = survived as f64 / n;
    Ok(OracleEstimate {
        estimate: p,
        std_error: (p * (1.0 - p) / n).sqrt(),
        samples: accepted,
        effective_sample_size: n,
        low_ess: false,
    })
}

/// Monte Carlo estimate of the discrete investor's conditional survival.
///
/// Each barrier draw is weighted by the exact probability that the unobserved
/// path between information dates stayed above it. From the last information
/// date the path is simulated to maturity; the estimate is the weighted share of
/// survivors to maturity among survivors to `t` (self-normalized, delta-method
/// standard error).
pub fn mc_d_survival(
    view: &DInvestorView,
    law: &BarrierLaw,
    params: &FirmParams,
    maturity: f64,
    cfg: &OracleConfig,
) -> Result<OracleEstimate> {
    cfg.validate()?;
    check_law(law, &view.schedule)?;
    if view.defaulted {
        return Err(Error::InvalidParameter("conditioning on survival of a defaulted view".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = view.regime();
    let observations: Vec<Vec<(f64, f64)>> = (0..=k).map(|j| view.regime_observations(j)).collect();
    let (t_last, x_last) = view.last_observation();
    let mut knots = view.schedule.adjustment_times.clone();
    knots.push(view.t);
    let grid = step_grid(t_last, maturity, cfg.step, &knots);
    let y0 = x_last.ln();

    let mut weights = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        let barriers = law.sample_barriers(&mut rng);
        let mut w = 1.0;
        for (j, obs) in observations.iter().enumerate() {
            for g in obs.windows(2) {
                w *= bridge_min_survival(params.sigma, g[1].0 - g[0].0, g[0].1, g[1].1, barriers[j]);
            }
            if let Some(&(_, x)) = obs.first() {
                if x <= barriers[j] {
                    w = 0.0;
                }
            }
        }
        if w == 0.0 {
            weights.push((0.0, false, false));
            continue;
        }
        let logs = log_levels(&barriers);
        let crossing = first_crossing(&grid, y0, &logs, &view.schedule, params, &mut rng);
        let alive_now = crossing.is_none_or(|c| c > view.t + TIME_EPS);
        weights.push((w, alive_now, crossing.is_none()));
    }
    let den: f64 = weights.iter().filter(|x| x.1).map(|x| x.0).sum();
    let num: f64 = weights.iter().filter(|x| x.2).map(|x| x.0).sum();
    if !(den > 0.0) {
        return Err(Error::ConditioningTooRare { accepted: 0, drawn: cfg.n_samples });
    }
    let ratio = num / den;
    let spread: f64 = weights
        .iter()
        .map(|&(w, a, b)| {
            let r = w * (f64::from(u8::from(b)) - ratio * f64::from(u8::from(a)));
            r * r
        })
        .sum();
    let squares: f64 = weights.iter().filter(|x| x.1).map(|x| x.0 * x.0).sum();
    let ess = den * den / squares;
    Ok(OracleEstimate {
        estimate: ratio,
        std_error: spread.sqrt() / den,
        samples: cfg.n_samples,
        effective_sample_size: ess,
        low_ess: ess < cfg.n_samples as f64 / 100.0,
    })
}

/// A bridge configuration for [`LawCheck::BridgeSurvival`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeCase {
    pub x_a: f64,
    pub x_b: f64,
    pub level: f64,
    pub dt: f64,
    pub sigma: f64,
}

/// Which closed form to compare with simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LawCheck {
    /// `P(M_t > u)` at the given points, from exact (endpoint, bridge minimum) draws.
    MinimumCcdf { horizon: f64, points: Vec<f64> },
    /// Bridge survival from finely discretized bridges with a continuity correction.
    BridgeSurvival { cases: Vec<BridgeCase>, steps: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawCheckReport {
    pub closed_form: Vec<f64>,
    pub empirical: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub max_abs_deviation: f64,
}

impl LawCheckReport {
    fn from_pairs(closed_form: Vec<f64>, empirical: Vec<f64>, trials: usize) -> Self {
        let n = trials as f64;
        let z_scores = closed_form
            .iter()
            .zip(&empirical)
            .map(|(&p, &e)| {
                let se = (e * (1.0 - e) / n).sqrt();
                if p == e { 0.0 } else { (p - e) / se }
            })
            .collect();
        let max_abs_deviation = closed_form.iter().zip(&empirical).map(|(p, e)| (p - e).abs()).fold(0.0, f64::max);
        Self { closed_form, empirical, z_scores, max_abs_deviation }
    }

    pub fn max_abs_z(&self) -> f64 {
        self.z_scores.iter().map(|z| z.abs()).fold(0.0, f64::max)
    }
}

/// Compares a running-minimum law with simulation over `trials` draws.
pub fn mc_law_check<R: Rng + ?Sized>(check: &LawCheck, params: &FirmParams, trials: usize, rng: &mut R) -> Result<LawCheckReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    params.validate()?;
    match check {
        LawCheck::MinimumCcdf { horizon, points } => {
            let walk = NormalizedLaw::from_firm(params);
            let t = *horizon;
            let var = params.sigma * params.sigma * t;
            let mut minima: Vec<f64> = (0..trials)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    let end = walk.m * t + var.sqrt() * z;
                    let u = 1.0 - rng.random::<f64>();
                    bridge_log_minimum(0.0, end, var, u).min(0.0).min(end)
                })
                .collect();
            minima.sort_by(f64::total_cmp);
            let closed = points.iter().map(|&u| walk.min_ccdf(t, u)).collect();
            let empirical = points
                .iter()
                .map(|&u| {
                    let below = minima.partition_point(|&y| y <= u.ln());
                    (trials - below) as f64 / trials as f64
                })
                .collect();
            Ok(LawCheckReport::from_pairs(closed, empirical, trials))
        }
        LawCheck::BridgeSurvival { cases, steps } => {
            let steps = (*steps).max(1);
            let mut closed = Vec::with_capacity(cases.len());
            let mut empirical = Vec::with_capacity(cases.len());
            for case in cases {
                closed.push(bridge_min_survival(case.sigma, case.dt, case.x_a, case.x_b, case.level));
                let alive = (0..trials).filter(|_| discrete_bridge_survives(case, steps, rng)).count();
                empirical.push(alive as f64 / trials as f64);
            }
            Ok(LawCheckReport::from_pairs(closed, empirical, trials))
        }
    }
}

/// Walks a log-space Brownian bridge in `steps` conditional increments and tests
/// it against the level raised by the discrete-monitoring correction.
fn discrete_bridge_survives<R: Rng + ?Sized>(case: &BridgeCase, steps: usize, rng: &mut R) -> bool {
    if case.level <= 0.0 {
        return true;
    }
    let (ya, yb) = (case.x_a.ln(), case.x_b.ln());
    let h = case.dt / steps as f64;
    let s2 = case.sigma * case.sigma;
    let barrier = case.level.ln() + DISCRETE_MONITORING_SHIFT * case.sigma * h.sqrt();
    if ya <= barrier || yb <= barrier {
        return false;
    }
    let mut y = ya;
    for j in 0..steps - 1 {
        let left = (steps - j) as f64;
        let mean = y + (yb - y) / left;
        let var = s2 * h * (left - 1.0) / left;
        let z: f64 = StandardNormal.sample(rng);
        y = mean + var.sqrt() * z;
        if y <= barrier {
            return false;
        }
    }
    true
}
