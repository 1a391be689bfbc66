//! Scenario files: a firm, a barrier law swept over dependence levels, a set of
//! investors and one firm-value path, evaluated on a time grid.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gbm::{simulate_path_with_knots, BarrierSchedule, FirmParams, PathRecord, TIME_EPS};
use crate::oracle::{mc_c_survival, mc_d_survival, OracleConfig, OracleEstimate};
use crate::quadrature::{QuadConfig, QuadResult};
use crate::report::{self, fmt_num, OracleCell, Quantity, RowStatus, SeriesRow, SurvivalSeries};
use crate::survival::{
    bond_price, c_conditional_survival, credit_spread, d_f_survival_T, d_f_survival_t, survival_ratio,
    CInvestorView, DInvestorView, ObservationDates, PricingInputs, DENOMINATOR_FLOOR, MAX_REGIMES,
};
use crate::thresholds::{BarrierLaw, Marginal};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{origin}:{line}:{column}: {message}")]
    Syntax { origin: String, line: usize, column: usize, message: String },

    #[error("{origin}{}: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Invalid { origin: String, line: Option<usize>, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Model(#[from] crate::Error),
}

impl ScenarioError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Syntax { .. } | Self::Invalid { .. } => 2,
            Self::Io { .. } => 1,
            Self::Model(_) => 3,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }
}

/// Marginals shared by every member of the sweep, one Gumbel `theta` per member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSweep {
    pub marginals: Vec<Marginal>,
    pub thetas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum InvestorSpec {
    /// Watches the firm value continuously.
    C {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        /// Restricts the sweep for this investor.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        thetas: Option<Vec<f64>>,
    },
    /// Sees the firm value at `0, every, 2 every, ...` or at explicit `dates`.
    D {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        every: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dates: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        thetas: Option<Vec<f64>>,
    },
}

impl InvestorSpec {
    fn label(&self, index: usize) -> String {
        match self {
            Self::C { label, .. } => label.clone().unwrap_or_else(|| "c".into()),
            Self::D { label, .. } => label.clone().unwrap_or_else(|| format!("d{index}")),
        }
    }

    fn thetas<'a>(&'a self, sweep: &'a [f64]) -> &'a [f64] {
        match self {
            Self::C { thetas, .. } | Self::D { thetas, .. } => thetas.as_deref().unwrap_or(sweep),
        }
    }

    fn dates(&self, schedule: &BarrierSchedule) -> Option<crate::Result<ObservationDates>> {
        match self {
            Self::C { .. } => None,
            Self::D { every: Some(step), dates: None, .. } => Some(ObservationDates::every(*step, schedule)),
            Self::D { every: None, dates: Some(d), .. } => Some(ObservationDates::new(d.clone(), schedule)),
            Self::D { .. } => {
                Some(Err(crate::Error::InvalidParameter("give exactly one of `every` and `dates`".into())))
            }
        }
    }
}

fn default_step() -> f64 {
    0.004
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum PathSource {
    /// Seeded Euler-free simulation on a grid of spacing `step`. Without
    /// `barriers`, a ladder is drawn from the law at the first sweep `theta`.
    Simulate {
        seed: u64,
        #[serde(default = "default_step")]
        step: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        barriers: Option<Vec<f64>>,
    },
    /// A `t,value` CSV, relative to the scenario file.
    File {
        file: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        barriers: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        default_time: Option<f64>,
    },
}

fn default_points() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Equally spaced points on `[0, T)`.
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub extra: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { points: default_points(), extra: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingSpec {
    #[serde(default)]
    pub rate: f64,
}

fn default_oracle_points() -> usize {
    5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationSpec {
    #[serde(flatten)]
    pub config: OracleConfig,
    /// Grid rows per series that get an oracle estimate.
    #[serde(default = "default_oracle_points")]
    pub points: usize,
}

impl Default for ValidationSpec {
    fn default() -> Self {
        Self { config: OracleConfig::default(), points: default_oracle_points() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub firm: FirmParams,
    /// Its horizon is the bond maturity.
    pub schedule: BarrierSchedule,
    pub barrier_law: LawSweep,
    pub investors: Vec<InvestorSpec>,
    pub path: PathSource,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub pricing: PricingSpec,
    #[serde(default = "QuadConfig::nested")]
    pub quadrature: QuadConfig,
    #[serde(default)]
    pub oracle: ValidationSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Svg,
    Both,
}

impl OutputFormat {
    fn csv(self) -> bool {
        matches!(self, Self::Csv | Self::Both)
    }

    fn svg(self) -> bool {
        matches!(self, Self::Svg | Self::Both)
    }
}

/// Command-line adjustments applied on top of a loaded scenario.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Replaces the path seed and the oracle seed.
    pub seed: Option<u64>,
    /// Replaces both quadrature tolerances.
    pub quad_tol: Option<f64>,
    pub oracle_samples: Option<usize>,
    pub validate: bool,
    pub format: OutputFormat,
}

impl Scenario {
    /// Parses and validates; `origin` names the source in diagnostics.
    pub fn from_json(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        let scenario: Self = serde_json::from_str(text).map_err(|e| ScenarioError::Syntax {
            origin: origin.into(),
            line: e.line(),
            column: e.column(),
            message: e.to_string().split(" at line ").next().unwrap_or_default().to_string(),
        })?;
        scenario.validate().map_err(|(keys, message)| ScenarioError::Invalid {
            origin: origin.into(),
            line: locate(text, &keys),
            message,
        })?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ScenarioError> {
        if let Some(seed) = o.seed {
            if let PathSource::Simulate { seed: s, .. } = &mut self.path {
                *s = seed;
            }
            self.oracle.config.seed = seed;
        }
        if let Some(tol) = o.quad_tol {
            self.quadrature.abs_tol = tol;
            self.quadrature.rel_tol = tol;
        }
        if let Some(n) = o.oracle_samples {
            self.oracle.config.n_samples = n;
        }
        self.validate().map_err(|(_, message)| ScenarioError::Invalid {
            origin: "command line".into(),
            line: None,
            message,
        })
    }

    pub fn maturity(&self) -> f64 {
        self.schedule.horizon
    }

    /// Member `theta` of the sweep as a full law.
    pub fn law(&self, theta: f64) -> crate::Result<BarrierLaw> {
        BarrierLaw::new(self.barrier_law.marginals.clone(), theta)
    }

    pub fn observation_dates(&self, investor: &InvestorSpec) -> Option<ObservationDates> {
        investor.dates(&self.schedule).and_then(|d| d.ok())
    }

    /// Equally spaced points on `[0, T)` merged with the extra points, the
    /// adjustment times and every information date.
    pub fn evaluation_grid(&self) -> Vec<f64> {
        let horizon = self.maturity();
        let mut pts: Vec<f64> = (0..self.grid.points).map(|k| k as f64 * horizon / self.grid.points as f64).collect();
        pts.extend(&self.grid.extra);
        pts.extend(&self.schedule.adjustment_times);
        for inv in &self.investors {
            if let Some(d) = self.observation_dates(inv) {
                pts.extend(d.times());
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() <= TIME_EPS);
        pts
    }

    fn validate(&self) -> Result<(), (Vec<(&'static str, usize)>, String)> {
        let at = |keys: &[(&'static str, usize)], e: String| (keys.to_vec(), e);
        self.firm.validate().map_err(|e| at(&[("firm", 0)], e.to_string()))?;
        self.schedule.validate().map_err(|e| at(&[("schedule", 0)], e.to_string()))?;
        let n = self.schedule.regimes();
        if n > MAX_REGIMES {
            return Err(at(&[("schedule", 0)], format!("{n} barrier regimes; at most {MAX_REGIMES} are supported")));
        }
        if n == MAX_REGIMES && !self.quadrature.allow_expensive {
            return Err(at(
                &[("schedule", 0)],
                format!("{n} barrier regimes need \"allow_expensive\": true in the quadrature settings"),
            ));
        }
        if self.barrier_law.marginals.len() != n {
            return Err(at(
                &[("barrier_law", 0), ("marginals", 0)],
                format!("{} marginals for {n} regimes", self.barrier_law.marginals.len()),
            ));
        }
        if self.barrier_law.thetas.is_empty() {
            return Err(at(&[("barrier_law", 0), ("thetas", 0)], "the theta sweep is empty".into()));
        }
        for &theta in &self.barrier_law.thetas {
            self.law(theta).map_err(|e| at(&[("barrier_law", 0)], e.to_string()))?;
        }
        if self.investors.is_empty() {
            return Err(at(&[("investors", 0)], "no investors".into()));
        }
        let mut labels = HashMap::new();
        for (i, inv) in self.investors.iter().enumerate() {
            let keys = [("investors", 0), ("type", i)];
            if let Some(prev) = labels.insert(inv.label(i), i) {
                return Err(at(&keys, format!("investor label `{}` repeats investor {prev}", inv.label(i))));
            }
            if let InvestorSpec::C { thetas: Some(t), .. } | InvestorSpec::D { thetas: Some(t), .. } = inv {
                if t.is_empty() {
                    return Err(at(&keys, "empty theta list".into()));
                }
                for &theta in t {
                    self.law(theta).map_err(|e| at(&keys, e.to_string()))?;
                }
            }
            if let Some(dates) = inv.dates(&self.schedule) {
                dates.map_err(|e| at(&keys, format!("investor `{}`: {e}", inv.label(i))))?;
                if n == MAX_REGIMES {
                    return Err(at(
                        &keys,
                        format!("discrete investors support at most {} regimes", MAX_REGIMES - 1),
                    ));
                }
            }
        }
        match &self.path {
            PathSource::Simulate { step, barriers, .. } => {
                if !(*step > 0.0 && step.is_finite()) {
                    return Err(at(&[("path", 0), ("step", 0)], "simulation step must be positive".into()));
                }
                check_barriers(barriers.as_deref(), n).map_err(|e| at(&[("path", 0), ("barriers", 0)], e))?;
            }
            PathSource::File { barriers, default_time, .. } => {
                check_barriers(barriers.as_deref(), n).map_err(|e| at(&[("path", 0), ("barriers", 0)], e))?;
                if default_time.is_some_and(|t| !(t >= 0.0)) {
                    return Err(at(&[("path", 0), ("default_time", 0)], "default time must be non-negative".into()));
                }
            }
        }
        if self.grid.points == 0 && self.grid.extra.is_empty() {
            return Err(at(&[("grid", 0)], "empty evaluation grid".into()));
        }
        if let Some(&t) = self.grid.extra.iter().find(|&&t| !(t >= 0.0 && t < self.maturity())) {
            return Err(at(&[("grid", 0), ("extra", 0)], format!("grid point {t} outside [0, {})", self.maturity())));
        }
        if !self.pricing.rate.is_finite() {
            return Err(at(&[("pricing", 0)], "rate must be finite".into()));
        }
        self.quadrature.validate().map_err(|e| at(&[("quadrature", 0)], e.to_string()))?;
        self.oracle.config.validate().map_err(|e| at(&[("oracle", 0)], e.to_string()))?;
        Ok(())
    }
}

fn check_barriers(barriers: Option<&[f64]>, regimes: usize) -> Result<(), String> {
    match barriers {
        Some(b) if b.len() != regimes => Err(format!("{} barrier levels for {regimes} regimes", b.len())),
        Some(b) if b.iter().any(|&l| !(l > 0.0 && l.is_finite())) => Err("barrier levels must be positive".into()),
        _ => Ok(()),
    }
}

/// Line of the `occurrence`-th `"key"` after the previous match, for each key in turn.
fn locate(text: &str, keys: &[(&str, usize)]) -> Option<usize> {
    let mut pos = 0;
    for &(key, occurrence) in keys {
        let needle = format!("\"{key}\"");
        for _ in 0..=occurrence {
            pos += text[pos..].find(&needle)? + needle.len();
        }
    }
    Some(text[..pos].matches('\n').count() + 1)
}

/// Reads a `t,value` CSV; `#` lines and a non-numeric header are skipped.
pub fn read_path_csv(path: &Path, schedule: &BarrierSchedule) -> Result<PathRecord, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
    let invalid = |line: usize, message: String| ScenarioError::Invalid {
        origin: path.display().to_string(),
        line: Some(line),
        message,
    };
    let (mut grid, mut values) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cells = line.split(',').map(str::trim);
        let (Some(a), Some(b)) = (cells.next(), cells.next()) else {
            return Err(invalid(i + 1, "expected `t,value`".into()));
        };
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(t), Ok(x)) => {
                grid.push(t);
                values.push(x);
            }
            _ if grid.is_empty() => continue,
            _ => return Err(invalid(i + 1, format!("cannot parse `{line}`"))),
        }
    }
    PathRecord::from_values(grid, values, schedule.clone()).map_err(|e| invalid(0, e.to_string()))
}

/// Every series of a scenario, evaluated but not yet written.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub path: PathRecord,
    pub series: Vec<SurvivalSeries>,
    /// Per-row problems, for the user.
    pub warnings: Vec<String>,
}

impl Evaluation {
    pub fn numerical_failures(&self) -> usize {
        self.series.iter().map(SurvivalSeries::numerical_failures).sum()
    }

    pub fn find(&self, investor: &str, theta: f64) -> Option<&SurvivalSeries> {
        self.series.iter().find(|s| s.investor == investor && s.theta == theta)
    }
}

/// Builds the scenario's path: simulated, or read relative to `base_dir`.
pub fn build_path(scenario: &Scenario, base_dir: &Path) -> Result<PathRecord, ScenarioError> {
    match &scenario.path {
        PathSource::Simulate { seed, step, barriers } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let knots = scenario.evaluation_grid();
            let path = simulate_path_with_knots(&scenario.firm, &scenario.schedule, *step, &knots, &mut rng)?;
            let ladder = match barriers {
                Some(b) => b.clone(),
                None => scenario.law(scenario.barrier_law.thetas[0])?.sample_barriers(&mut rng),
            };
            Ok(path.with_barriers(ladder)?)
        }
        PathSource::File { file, barriers, default_time } => {
            let mut path = read_path_csv(&base_dir.join(file), &scenario.schedule)?;
            if let Some(b) = barriers {
                path = path.with_barriers(b.clone())?;
            }
            if default_time.is_some() {
                path = path.with_default_time(*default_time);
            }
            Ok(path)
        }
    }
}

struct Job<'a> {
    index: usize,
    investor: &'a InvestorSpec,
    theta: f64,
}

/// Evaluates every investor at every sweep member. `log` receives one line per
/// finished series.
pub fn evaluate(
    scenario: &Scenario,
    base_dir: &Path,
    validate: bool,
    log: &(dyn Fn(&str) + Sync),
) -> Result<Evaluation, ScenarioError> {
    let path = build_path(scenario, base_dir)?;
    let grid = scenario.evaluation_grid();
    let jobs: Vec<Job> = scenario
        .investors
        .iter()
        .enumerate()
        .flat_map(|(index, investor)| {
            investor.thetas(&scenario.barrier_law.thetas).iter().map(move |&theta| Job { index, investor, theta })
        })
        .collect();

    let slots: Vec<Mutex<Option<(SurvivalSeries, Vec<String>)>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = Mutex::new(0usize);
    let work = || loop {
        let k = {
            let mut n = next.lock().unwrap();
            *n += 1;
            *n - 1
        };
        let Some(job) = jobs.get(k) else { break };
        let done = evaluate_series(scenario, &path, &grid, job, validate);
        log(&format!(
            "{} θ={}: {} rows, {} numerical failures",
            done.0.investor,
            fmt_num(job.theta),
            done.0.rows.len(),
            done.0.numerical_failures()
        ));
        *slots[k].lock().unwrap() = Some(done);
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len());
    if workers <= 1 {
        work();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(work);
            }
        });
    }

    let mut series = Vec::with_capacity(jobs.len());
    let mut warnings = Vec::new();
    for slot in slots {
        let (s, w) = slot.into_inner().unwrap().expect("every job ran");
        series.push(s);
        warnings.extend(w);
    }
    Ok(Evaluation { path, series, warnings })
}

fn evaluate_series(
    scenario: &Scenario,
    path: &PathRecord,
    grid: &[f64],
    job: &Job,
    validate: bool,
) -> (SurvivalSeries, Vec<String>) {
    let label = job.investor.label(job.index);
    let maturity = scenario.maturity();
    let cfg = &scenario.quadrature;
    let pricing = PricingInputs { rate: scenario.pricing.rate, maturity };
    let mut warnings = Vec::new();
    let mut rows = Vec::with_capacity(grid.len());

    let law = match scenario.law(job.theta) {
        Ok(l) => l,
        Err(e) => {
            warnings.push(format!("{label} θ={}: {e}", fmt_num(job.theta)));
            rows.extend(grid.iter().map(|&t| SeriesRow::failed(t)));
            return (series_shell(scenario, &label, job, rows, validate), warnings);
        }
    };
    let dates = scenario.observation_dates(job.investor);
    let mut numerators: HashMap<usize, crate::Result<QuadResult>> = HashMap::new();

    for &t in grid {
        let survival = match &dates {
            None => CInvestorView::from_path(path, t).and_then(|view| {
                if view.defaulted {
                    return Ok(None);
                }
                c_conditional_survival(&view, &law, &scenario.firm, maturity, cfg).map(Some)
            }),
            Some(dates) => DInvestorView::from_path(path, dates, t).and_then(|view| {
                if view.defaulted {
                    return Ok(None);
                }
                let num = numerators
                    .entry(view.times.len())
                    .or_insert_with(|| d_f_survival_T(&view, &law, &scenario.firm, maturity, cfg))
                    .clone()?;
                let den = d_f_survival_t(&view, &law, &scenario.firm, cfg)?;
                if !(den.value >= DENOMINATOR_FLOOR) {
                    return Err(crate::Error::ImprobableInformation(den.value));
                }
                survival_ratio(num, den).map(Some)
            }),
        };
        let row = match survival {
            Ok(None) => SeriesRow::defaulted(t),
            Ok(Some(q)) => match (credit_spread(q.value, t, maturity), bond_price(q.value, &pricing, t)) {
                (Ok(spread), Ok(price)) => SeriesRow {
                    t,
                    survival: q.value,
                    spread,
                    bond_price: price,
                    status: if q.converged { RowStatus::Ok } else { RowStatus::Unconverged },
                    oracle: None,
                },
                (Err(e), _) | (_, Err(e)) => {
                    warnings.push(format!("{label} θ={} t={}: {e}", fmt_num(job.theta), fmt_num(t)));
                    SeriesRow::failed(t)
                }
            },
            Err(e) => {
                warnings.push(format!("{label} θ={} t={}: {e}", fmt_num(job.theta), fmt_num(t)));
                SeriesRow::failed(t)
            }
        };
        if row.status == RowStatus::Unconverged {
            warnings.push(format!("{label} θ={} t={}: quadrature did not converge", fmt_num(job.theta), fmt_num(t)));
        }
        rows.push(row);
    }

    if validate {
        attach_oracle(scenario, path, dates.as_ref(), &law, &mut rows, &label, &mut warnings);
    }
    (series_shell(scenario, &label, job, rows, validate), warnings)
}

fn attach_oracle(
    scenario: &Scenario,
    path: &PathRecord,
    dates: Option<&ObservationDates>,
    law: &BarrierLaw,
    rows: &mut [SeriesRow],
    label: &str,
    warnings: &mut Vec<String>,
) {
    let live: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].status == RowStatus::Ok).collect();
    let picks = scenario.oracle.points.min(live.len());
    let maturity = scenario.maturity();
    let cfg = &scenario.oracle.config;
    for j in 0..picks {
        let i = live[if picks == 1 { 0 } else { j * (live.len() - 1) / (picks - 1) }];
        let t = rows[i].t;
        let estimate: crate::Result<OracleEstimate> = match dates {
            None => CInvestorView::from_path(path, t).and_then(|v| mc_c_survival(&v, law, &scenario.firm, maturity, cfg)),
            Some(d) => {
                DInvestorView::from_path(path, d, t).and_then(|v| mc_d_survival(&v, law, &scenario.firm, maturity, cfg))
            }
        };
        match estimate {
            Ok(o) => {
                if o.low_ess {
                    warnings.push(format!("{label} t={}: oracle effective sample size {:.0}", fmt_num(t), o.effective_sample_size));
                }
                rows[i].oracle = Some(OracleCell { estimate: o.estimate, std_error: o.std_error, z: o.z_score(rows[i].survival) });
            }
            Err(e) => warnings.push(format!("{label} t={}: oracle: {e}", fmt_num(t))),
        }
    }
}

fn series_shell(scenario: &Scenario, label: &str, job: &Job, rows: Vec<SeriesRow>, validated: bool) -> SurvivalSeries {
    let q = &scenario.quadrature;
    let investor = match job.investor {
        InvestorSpec::C { .. } => "continuous observation".to_string(),
        InvestorSpec::D { .. } => {
            let dates = scenario.observation_dates(job.investor).map(|d| d.times().to_vec()).unwrap_or_default();
            let list: Vec<String> = dates.iter().map(|&d| fmt_num(d)).collect();
            format!("observes at {}", list.join(" "))
        }
    };
    let path = match &scenario.path {
        PathSource::Simulate { seed, step, .. } => format!("simulated seed={seed} step={}", fmt_num(*step)),
        PathSource::File { file, .. } => format!("file {}", file.display()),
    };
    let mut metadata = vec![
        ("generator".into(), format!("switchcredit {}", env!("CARGO_PKG_VERSION"))),
        ("scenario".into(), scenario.name.clone()),
        ("investor".into(), format!("{label} ({investor})")),
        ("theta".into(), fmt_num(job.theta)),
        ("path".into(), path),
        (
            "firm".into(),
            format!("x0={} mu={} sigma={}", fmt_num(scenario.firm.x0), fmt_num(scenario.firm.mu), fmt_num(scenario.firm.sigma)),
        ),
        (
            "quadrature".into(),
            format!(
                "abs_tol={} rel_tol={} max_subdivisions={} rule={}",
                fmt_num(q.abs_tol),
                fmt_num(q.rel_tol),
                q.max_subdivisions,
                q.rule
            ),
        ),
        ("maturity".into(), fmt_num(scenario.maturity())),
        ("rate".into(), fmt_num(scenario.pricing.rate)),
    ];
    if validated {
        let o = &scenario.oracle.config;
        metadata.push((
            "oracle".into(),
            format!("n_samples={} seed={} step={}", o.n_samples, o.seed, fmt_num(o.step)),
        ));
    }
    SurvivalSeries { investor: label.to_string(), theta: job.theta, metadata, rows, validated }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub evaluation: Evaluation,
}

impl RunSummary {
    pub fn numerical_failures(&self) -> usize {
        self.evaluation.numerical_failures()
    }

    /// 0 on success, 3 when any row failed numerically.
    pub fn exit_code(&self) -> i32 {
        if self.numerical_failures() > 0 {
            3
        } else {
            0
        }
    }
}

/// File name of one series' CSV.
pub fn series_file_name(scenario: &str, series: &SurvivalSeries) -> String {
    format!("{scenario}_{}_theta{}.csv", sanitize(&series.investor), fmt_num(series.theta))
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

/// Scenarios shipped with the library, by name.
pub const BUNDLED: [(&str, &str); 3] = [
    ("theta_sweep", include_str!("../scenarios/theta_sweep.json")),
    ("default_jump", include_str!("../scenarios/default_jump.json")),
    ("long_horizon", include_str!("../scenarios/long_horizon.json")),
];

pub fn bundled(name: &str) -> Option<Scenario> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, text)| Scenario::from_json(text, n).expect("bundled scenarios are valid"))
}

/// Loads, evaluates and writes a scenario. A `config` that is not an existing
/// file but names a bundled scenario runs that one.
pub fn run_scenario(
    config: &Path,
    out_dir: &Path,
    overrides: &Overrides,
    log: &(dyn Fn(&str) + Sync),
) -> Result<RunSummary, ScenarioError> {
    let (scenario, base) = match config.to_str().and_then(bundled) {
        Some(s) if !config.exists() => (s, PathBuf::from(".")),
        _ => (Scenario::load(config)?, config.parent().unwrap_or(Path::new(".")).to_path_buf()),
    };
    run_loaded(scenario, &base, out_dir, overrides, log)
}

pub fn run_loaded(
    mut scenario: Scenario,
    base_dir: &Path,
    out_dir: &Path,
    overrides: &Overrides,
    log: &(dyn Fn(&str) + Sync),
) -> Result<RunSummary, ScenarioError> {
    scenario.apply(overrides)?;
    let evaluation = evaluate(&scenario, base_dir, overrides.validate, log)?;
    let files = write_outputs(&scenario, &evaluation, out_dir, overrides.format)?;
    Ok(RunSummary { files, evaluation })
}

pub fn write_outputs(
    scenario: &Scenario,
    evaluation: &Evaluation,
    out_dir: &Path,
    format: OutputFormat,
) -> Result<Vec<PathBuf>, ScenarioError> {
    fs::create_dir_all(out_dir).map_err(|e| ScenarioError::io(out_dir, e))?;
    let mut files = Vec::new();
    let mut write = |name: String, body: String| -> Result<(), ScenarioError> {
        let p = out_dir.join(name);
        fs::write(&p, body).map_err(|e| ScenarioError::io(&p, e))?;
        files.push(p);
        Ok(())
    };
    let name = sanitize(&scenario.name);
    if format.csv() {
        for s in &evaluation.series {
            write(series_file_name(&name, s), report::to_csv(s))?;
        }
        write(format!("{name}_path.csv"), path_csv(scenario, &evaluation.path))?;
    }
    if format.svg() {
        let title = |what: &str| format!("{}: {what}", scenario.name);
        write(format!("{name}_survival.svg"), report::to_svg(&title("survival"), &evaluation.series, Quantity::Survival))?;
        write(format!("{name}_spread.svg"), report::to_svg(&title("spread"), &evaluation.series, Quantity::Spread))?;
    }
    Ok(files)
}

fn path_csv(scenario: &Scenario, path: &PathRecord) -> String {
    let mut out = format!("# generator: switchcredit {}\n# scenario: {}\n", env!("CARGO_PKG_VERSION"), scenario.name);
    if let Some(b) = &path.realized_barriers {
        let levels: Vec<String> = b.iter().map(|&l| fmt_num(l)).collect();
        out.push_str(&format!("# barriers: {}\n", levels.join(" ")));
    }
    out.push_str(&format!("# default_time: {}\n", path.default_time.map_or("none".into(), fmt_num)));
    out.push_str("t,value,regime_minimum\n");
    for ((&t, &x), &m) in path.grid.iter().zip(&path.values).zip(&path.regime_minima) {
        out.push_str(&format!("{},{},{}\n", fmt_num(t), fmt_num(x), fmt_num(m)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
  "name": "mini",
  "firm": { "mu": 0.05, "sigma": 0.8, "x0": 1.0 },
  "schedule": { "adjustment_times": [0.0, 1.0], "horizon": 2.0 },
  "barrier_law": {
    "marginals": [
      { "kind": "beta", "alpha": 2.0, "beta": 2.0 },
      { "kind": "exponential", "rate": 0.6666666666666666 }
    ],
    "thetas": [1.0, 2.0]
  },
  "investors": [
    { "type": "c" },
    { "type": "d", "label": "quarterly", "every": 0.25 }
  ],
  "path": { "source": "simulate", "seed": 1, "barriers": [0.6, 1.2] },
  "grid": { "points": 4 }
}"#;

    fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        Scenario::from_json(text, "test.json")
    }

    #[test]
    fn round_trip_is_idempotent() {
        let s = parse(MINIMAL).unwrap();
        let once = s.to_json();
        let again = parse(&once).unwrap();
        assert_eq!(again, s);
        assert_eq!(again.to_json(), once);
    }

    proptest::proptest! {
        #[test]
        fn round_trip_holds_for_varied_scenarios(
            mu in -0.5f64..0.5,
            sigma in 0.05f64..2.0,
            seed in proptest::prelude::any::<u64>(),
            points in 1usize..300,
            rate in 0.0f64..0.1,
        ) {
            let mut s = parse(MINIMAL).unwrap();
            s.firm = FirmParams::new(mu, sigma, 1.0).unwrap();
            s.grid.points = points;
            s.pricing.rate = rate;
            if let PathSource::Simulate { seed: ref mut sd, .. } = s.path {
                *sd = seed;
            }
            let once = s.to_json();
            let again = parse(&once).unwrap();
            proptest::prop_assert_eq!(&again, &s);
            proptest::prop_assert_eq!(again.to_json(), once);
        }
    }

    #[test]
    fn strongly_dependent_discrete_investor_converges_after_adjustment() {
        let mut s = parse(&MINIMAL.replace(r#""seed": 1,"#, r#""seed": 46,"#)).unwrap();
        s.barrier_law.thetas = vec![100.0];
        s.investors = vec![InvestorSpec::D { label: None, every: None, dates: Some(vec![0.0, 0.4, 1.0, 1.7]), thetas: None }];
        s.grid.points = 5;
        let eval = evaluate(&s, Path::new("."), false, &|_| {}).unwrap();
        assert_eq!(eval.numerical_failures(), 0, "{:?}", eval.series[0].rows);
    }

    #[test]
    fn grid_is_refined_with_dates_and_adjustments() {
        let s = parse(MINIMAL).unwrap();
        assert_eq!(s.evaluation_grid(), vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75]);
    }

    #[test]
    fn missing_adjustment_date_is_a_config_error_with_line() {
        let text = MINIMAL.replace(r#""every": 0.25"#, r#""dates": [0.0, 0.5]"#);
        let err = parse(&text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        match err {
            ScenarioError::Invalid { line, message, .. } => {
                assert_eq!(line, Some(14));
                assert!(message.contains("adjustment time 1"), "{message}");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        let text = MINIMAL.replace(r#""seed": 1,"#, r#""seed": 1"#);
        match parse(&text).unwrap_err() {
            ScenarioError::Syntax { line, .. } => assert_eq!(line, 16),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = MINIMAL.replace(r#""name": "mini","#, r#""name": "mini", "nmae": 1,"#);
        assert!(matches!(parse(&text), Err(ScenarioError::Syntax { .. })));
    }

    #[test]
    fn empty_grid_rejected() {
        let text = MINIMAL.replace(r#""points": 4"#, r#""points": 0"#);
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().contains("empty evaluation grid"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn both_every_and_dates_rejected() {
        let text = MINIMAL.replace(r#""every": 0.25"#, r#""every": 0.25, "dates": [0.0, 1.0]"#);
        assert!(parse(&text).is_err());
    }

    #[test]
    fn three_regimes_need_opt_in() {
        let text = MINIMAL
            .replace(r#""adjustment_times": [0.0, 1.0]"#, r#""adjustment_times": [0.0, 0.5, 1.0]"#)
            .replace(
                r#""marginals": ["#,
                r#""marginals": [ { "kind": "uniform", "lo": 0.0, "hi": 1.0 },"#,
            );
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().contains("allow_expensive"), "{err}");
    }

    #[test]
    fn overrides_apply() {
        let mut s = parse(MINIMAL).unwrap();
        s.apply(&Overrides { seed: Some(9), quad_tol: Some(1e-4), oracle_samples: Some(10), ..Default::default() })
            .unwrap();
        assert!(matches!(s.path, PathSource::Simulate { seed: 9, .. }));
        assert_eq!(s.quadrature.abs_tol, 1e-4);
        assert_eq!(s.oracle.config.n_samples, 10);
        assert!(s.apply(&Overrides { quad_tol: Some(0.0), ..Default::default() }).is_err());
    }

    #[test]
    fn path_file_parses_with_header_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        fs::write(&p, "# note\nt,value\n0,1\n0.5,1.1\n1,0.9\n2,1.3\n").unwrap();
        let schedule = BarrierSchedule::new(vec![0.0, 1.0], 2.0).unwrap();
        let path = read_path_csv(&p, &schedule).unwrap();
        assert_eq!(path.grid, vec![0.0, 0.5, 1.0, 2.0]);
        fs::write(&p, "t,value\n0,1\n0.5,x\n").unwrap();
        assert!(matches!(read_path_csv(&p, &schedule), Err(ScenarioError::Invalid { line: Some(3), .. })));
    }

    #[test]
    fn small_scenario_evaluates_and_writes() {
        let mut s = parse(MINIMAL).unwrap();
        s.investors.truncate(1);
        s.barrier_law.thetas.truncate(1);
        s.grid.points = 2;
        let dir = tempfile::tempdir().unwrap();
        let eval = evaluate(&s, dir.path(), false, &|_| {}).unwrap();
        assert_eq!(eval.series.len(), 1);
        let rows = &eval.series[0].rows;
        assert_eq!(rows.iter().map(|r| r.t).collect::<Vec<_>>(), vec![0.0, 1.0]);
        assert!(rows.iter().all(|r| r.status == RowStatus::Ok && r.survival > 0.0 && r.survival <= 1.0));
        let files = write_outputs(&s, &eval, dir.path(), OutputFormat::Both).unwrap();
        let names: Vec<String> = files.iter().map(|f| f.file_name().unwrap().to_string_lossy().into_owned()).collect();
        assert_eq!(names, ["mini_c_theta1.csv", "mini_path.csv", "mini_survival.svg", "mini_spread.svg"]);
    }
}
