//! Firm-value paths: exact geometric Brownian motion on a grid, per-regime
//! running minima and first-passage detection against a barrier ladder.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when matching times against grid points.
pub const TIME_EPS: f64 = 1e-9;

/// Drift, volatility and start value of the firm-value process
/// `dX = X (mu dt + sigma dB)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirmParams {
    pub mu: f64,
    pub sigma: f64,
    pub x0: f64,
}

impl FirmParams {
    pub fn new(mu: f64, sigma: f64, x0: f64) -> Result<Self> {
        let p = Self { mu, sigma, x0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.x0 > 0.0 && self.x0.is_finite()) {
            return Err(Error::InvalidParameter(format!("x0 must be positive, got {}", self.x0)));
        }
        if !self.mu.is_finite() {
            return Err(Error::InvalidParameter("mu must be finite".into()));
        }
        Ok(())
    }

    /// Log-drift `mu - sigma^2 / 2`, the drift of `ln X`.
    pub fn log_drift(&self) -> f64 {
        self.mu - 0.5 * self.sigma * self.sigma
    }
}

/// Adjustment times `0 = t_0 < t_1 < ... < t_{n-1} < T` of the barrier ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierSchedule {
    pub adjustment_times: Vec<f64>,
    pub horizon: f64,
}

impl BarrierSchedule {
    pub fn new(adjustment_times: Vec<f64>, horizon: f64) -> Result<Self> {
        let s = Self { adjustment_times, horizon };
        s.validate()?;
        Ok(s)
    }

    /// A single regime on `[0, horizon)`.
    pub fn single(horizon: f64) -> Result<Self> {
        Self::new(vec![0.0], horizon)
    }

    pub fn validate(&self) -> Result<()> {
        let times = &self.adjustment_times;
        if times.is_empty() {
            return Err(Error::InvalidParameter("at least one adjustment time is required".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidParameter("the first adjustment time must be 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("adjustment times must be strictly increasing".into()));
        }
        let last = *times.last().unwrap();
        if !(self.horizon > last) || !self.horizon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "horizon {} must exceed the last adjustment time {}",
                self.horizon, last
            )));
        }
        Ok(())
    }

    pub fn regimes(&self) -> usize {
        self.adjustment_times.len()
    }

    /// Index `i` of the regime `[t_i, t_{i+1})` containing `t`; times at or past the
    /// last adjustment time belong to the last regime.
    pub fn regime_of(&self, t: f64) -> usize {
        self.adjustment_times
            .iter()
            .rposition(|&a| a <= t + TIME_EPS)
            .unwrap_or(0)
    }

    pub fn regime_start(&self, i: usize) -> f64 {
        self.adjustment_times[i]
    }

    /// Right end of regime `i`: the next adjustment time or the horizon.
    pub fn regime_end(&self, i: usize) -> f64 {
        self.adjustment_times.get(i + 1).copied().unwrap_or(self.horizon)
    }

    /// The ladder restricted to `[0, maturity)`.
    pub fn truncated(&self, maturity: f64) -> Result<Self> {
        let times: Vec<f64> = self
            .adjustment_times
            .iter()
            .copied()
            .filter(|&a| a < maturity - TIME_EPS)
            .collect();
        Self::new(times, maturity)
    }
}

/// A firm-value trajectory on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Running minimum since the start of the regime containing each grid point.
    pub regime_minima: Vec<f64>,
    pub default_time: Option<f64>,
    pub realized_barriers: Option<Vec<f64>>,
    pub schedule: BarrierSchedule,
}

impl PathRecord {
    /// Wraps observed values; the grid must start at 0 and cover the schedule horizon.
    pub fn from_values(grid: Vec<f64>, values: Vec<f64>, schedule: BarrierSchedule) -> Result<Self> {
        if grid.is_empty() || grid.len() != values.len() {
            return Err(Error::InvalidParameter("grid and values must be non-empty and of equal length".into()));
        }
        if grid[0].abs() > TIME_EPS {
            return Err(Error::InvalidParameter("path grid must start at t = 0".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("path grid must be strictly increasing".into()));
        }
        if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter("firm values must be positive".into()));
        }
        for &a in &schedule.adjustment_times {
            if find_time(&grid, a).is_none() {
                return Err(Error::InvalidParameter(format!("adjustment time {a} is not a grid point")));
            }
        }
        let regime_minima = regime_minima(&grid, &values, &schedule);
        Ok(Self { grid, values, regime_minima, default_time: None, realized_barriers: None, schedule })
    }

    /// Attaches a realized barrier ladder and records the grid-resolved default time.
    pub fn with_barriers(mut self, barriers: Vec<f64>) -> Result<Self> {
        let schedule = self.schedule.clone();
        self.default_time = detect_default(&self, &barriers, &schedule)?;
        self.realized_barriers = Some(barriers);
        Ok(self)
    }

    pub fn with_default_time(mut self, default_time: Option<f64>) -> Self {
        self.default_time = default_time;
        self
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        find_time(&self.grid, t)
    }

    /// Value at `t`; log-linear between grid points.
    pub fn value_at(&self, t: f64) -> f64 {
        if let Some(i) = self.index_of(t) {
            return self.values[i];
        }
        let k = self.grid.partition_point(|&g| g <= t);
        if k == 0 {
            return self.values[0];
        }
        if k >= self.grid.len() {
            return *self.values.last().unwrap();
        }
        let (t0, t1) = (self.grid[k - 1], self.grid[k]);
        let w = (t - t0) / (t1 - t0);
        (self.values[k - 1].ln() * (1.0 - w) + self.values[k].ln() * w).exp()
    }

    pub fn is_defaulted_by(&self, t: f64) -> bool {
        matches!(self.default_time, Some(tau) if tau <= t + TIME_EPS)
    }
}

pub(crate) fn find_time(grid: &[f64], t: f64) -> Option<usize> {
    let k = grid.partition_point(|&g| g < t - TIME_EPS);
    (k < grid.len() && (grid[k] - t).abs() <= TIME_EPS).then_some(k)
}

fn regime_minima(grid: &[f64], values: &[f64], schedule: &BarrierSchedule) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut current = f64::INFINITY;
    let mut regime = usize::MAX;
    for (&t, &x) in grid.iter().zip(values) {
        let r = schedule.regime_of(t);
        if r != regime {
            regime = r;
            current = x;
        }
        current = current.min(x);
        out.push(current);
    }
    out
}

/// Simulates a path on a uniform grid of spacing `step`, refined to contain every
/// adjustment time and the horizon.
pub fn simulate_path<R: Rng + ?Sized>(
    params: &FirmParams,
    schedule: &BarrierSchedule,
    step: f64,
    rng: &mut R,
) -> Result<PathRecord> {
    simulate_path_with_knots(params, schedule, step, &[], rng)
}

/// Like [`simulate_path`], with extra grid points (observation dates, evaluation times).
pub fn simulate_path_with_knots<R: Rng + ?Sized>(
    params: &FirmParams,
    schedule: &BarrierSchedule,
    step: f64,
    knots: &[f64],
    rng: &mut R,
) -> Result<PathRecord> {
    params.validate()?;
    schedule.validate()?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {step}")));
    }
    let horizon = schedule.horizon;
    let grid = build_grid(horizon, step, schedule.adjustment_times.iter().chain(knots).copied());

    let m = params.log_drift();
    let sigma = params.sigma;
    let mut y = params.x0.ln();
    let mut values = Vec::with_capacity(grid.len());
    values.push(params.x0);
    for w in grid.windows(2) {
        let dt = w[1] - w[0];
        let z: f64 = StandardNormal.sample(rng);
        y += m * dt + sigma * dt.sqrt() * z;
        values.push(y.exp());
    }
    PathRecord::from_values(grid, values, schedule.clone())
}

/// Uniform grid on `[0, horizon]` merged with `knots` (points outside the range are dropped).
pub fn build_grid(horizon: f64, step: f64, knots: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let n = (horizon / step).floor() as usize;
    let mut pts: Vec<(f64, bool)> = (0..=n).map(|k| (k as f64 * step, false)).collect();
    pts.extend(knots.into_iter().filter(|&k| (0.0..=horizon + TIME_EPS).contains(&k)).map(|k| (k.min(horizon), true)));
    pts.push((horizon, true));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut grid: Vec<(f64, bool)> = Vec::with_capacity(pts.len());
    for p in pts {
        match grid.last_mut() {
            Some(last) if p.0 - last.0 <= TIME_EPS => {
                if p.1 && !last.1 {
                    *last = p;
                }
            }
            _ => grid.push(p),
        }
    }
    grid.into_iter().map(|p| p.0).collect()
}

/// Minimum of the stored values over the closed window `[s, t]`.
///
/// When no grid point falls inside the window, the value at the last grid point
/// before `s` is returned.
pub fn regime_minimum(path: &PathRecord, s: f64, t: f64) -> Result<f64> {
    if !(s < t) {
        return Err(Error::InvalidTime { t: s, reason: format!("window start must precede its end {t}") });
    }
    if s < -TIME_EPS || t > path.horizon() + TIME_EPS {
        return Err(Error::InvalidTime { t, reason: "window outside the path grid".into() });
    }
    let lo = path.grid.partition_point(|&g| g < s - TIME_EPS);
    let hi = path.grid.partition_point(|&g| g <= t + TIME_EPS);
    if lo < hi {
        Ok(path.values[lo..hi].iter().copied().fold(f64::INFINITY, f64::min))
    } else {
        Ok(path.values[lo.saturating_sub(1)])
    }
}

/// Minimum of a Brownian bridge in log space pinned at `ya` and `yb`, with
/// total variance `var = sigma^2 dt`, driven by a uniform `u` in `(0, 1]`.
///
/// Inverts `P(min <= y) = exp(-2 (y - ya)(y - yb) / var)`.
pub fn bridge_log_minimum(ya: f64, yb: f64, var: f64, u: f64) -> f64 {
    let h = -0.5 * var * u.ln();
    let d = ya - yb;
    0.5 * (ya + yb - (d * d + 4.0 * h).sqrt())
}

/// Draws the minimum of a geometric Brownian bridge from `x_a` to `x_b` over `dt`.
pub fn bridge_minimum_sample<R: Rng + ?Sized>(x_a: f64, x_b: f64, dt: f64, sigma: f64, rng: &mut R) -> Result<f64> {
    if !(x_a > 0.0 && x_b > 0.0 && dt > 0.0 && sigma > 0.0) {
        return Err(Error::InvalidParameter("bridge endpoints, duration and sigma must be positive".into()));
    }
    let u = 1.0 - rng.random::<f64>();
    let y = bridge_log_minimum(x_a.ln(), x_b.ln(), sigma * sigma * dt, u);
    Ok(y.exp().min(x_a).min(x_b))
}

fn check_barriers(barriers: &[f64], schedule: &BarrierSchedule) -> Result<()> {
    if barriers.len() != schedule.regimes() {
        return Err(Error::BarrierCount { expected: schedule.regimes(), got: barriers.len() });
    }
    Ok(())
}

/// First grid point where the value is at or below the active barrier.
pub fn detect_default(path: &PathRecord, barriers: &[f64], schedule: &BarrierSchedule) -> Result<Option<f64>> {
    check_barriers(barriers, schedule)?;
    Ok(path
        .grid
        .iter()
        .zip(&path.values)
        .find(|(&t, &x)| x <= barriers[schedule.regime_of(t)])
        .map(|(&t, _)| t))
}

/// Default detection that also samples the bridge minimum between grid points.
///
/// A crossing inside `[g_k, g_{k+1})` is reported at `g_{k+1}`.
pub fn detect_default_bridged<R: Rng + ?Sized>(
    path: &PathRecord,
    barriers: &[f64],
    schedule: &BarrierSchedule,
    sigma: f64,
    rng: &mut R,
) -> Result<Option<f64>> {
    check_barriers(barriers, schedule)?;
    let n = path.grid.len();
    for k in 0..n {
        let t = path.grid[k];
        let barrier = barriers[schedule.regime_of(t)];
        if path.values[k] <= barrier {
            return Ok(Some(t));
        }
        if k + 1 < n {
            let dt = path.grid[k + 1] - t;
            let low = bridge_minimum_sample(path.values[k], path.values[k + 1], dt, sigma, rng)?;
            if low <= barrier {
                return Ok(Some(path.grid[k + 1]));
            }
        }
    }
    Ok(None)
}
