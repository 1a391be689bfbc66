//! Globally adaptive Gauss–Kronrod integration and iterated (nested)
//! integration over regions whose inner bounds depend on outer variables.

use std::cell::{Cell, RefCell};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deepest supported nesting.
pub const MAX_DEPTH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    /// 7-point Gauss / 15-point Kronrod.
    #[default]
    Gk15,
    /// 10-point Gauss / 21-point Kronrod.
    Gk21,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Gk15 => "gk15",
            Rule::Gk21 => "gk21",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    pub rule: Rule,
    /// Permits the costly three-regime survival formulas.
    pub allow_expensive: bool,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self { abs_tol: 1e-8, rel_tol: 1e-6, max_subdivisions: 200, rule: Rule::Gk15, allow_expensive: false }
    }
}

impl QuadConfig {
    /// Default budget for the iterated survival integrals.
    pub fn nested() -> Self {
        Self { abs_tol: 1e-5, rel_tol: 1e-5, max_subdivisions: 100, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter("quadrature tolerances must be positive".into()));
        }
        if self.max_subdivisions == 0 {
            return Err(Error::InvalidParameter("max_subdivisions must be at least 1".into()));
        }
        Ok(())
    }

    fn split(&self, parts: usize) -> Self {
        Self { abs_tol: self.abs_tol / parts as f64, rel_tol: self.rel_tol / parts as f64, ..*self }
    }
}

/// An integral value with its error estimate.
///
/// `converged` is false when the subdivision cap was hit before the tolerance was
/// met; `value` is then the best available estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
    pub evaluations: usize,
}

impl QuadResult {
    pub fn exact(value: f64) -> Self {
        Self { value, error: 0.0, converged: true, evaluations: 0 }
    }
}

const XGK15: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK15: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG7: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const XGK21: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];
const WGK21: [f64; 11] = [
    0.011_694_638_867_371_87,
    0.032_558_162_307_964_73,
    0.054_755_896_574_352_0,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_61,
    0.109_387_158_802_297_6,
    0.123_491_976_262_065_9,
    0.134_709_217_311_473_3,
    0.142_775_938_577_060_1,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];
const WG10: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_0,
    0.269_266_719_309_996_4,
    0.295_524_224_714_752_9,
];

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

/// One Gauss–Kronrod panel, QUADPACK-style error scaling.
fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rule: Rule) -> Panel {
    let (xgk, wgk, wg): (&[f64], &[f64], &[f64]) = match rule {
        Rule::Gk15 => (&XGK15, &WGK15, &WG7),
        Rule::Gk21 => (&XGK21, &WGK21, &WG10),
    };
    let last = xgk.len() - 1;
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_g = if xgk.len() % 2 == 0 { fc * wg[wg.len() - 1] } else { 0.0 };
    let mut res_k = fc * wgk[last];
    let mut res_abs = res_k.abs();
    let mut fv = [(0.0, 0.0); 11];
    for (j, &x) in xgk[..last].iter().enumerate() {
        let dx = half * x;
        let (f1, f2) = (f(center - dx), f(center + dx));
        fv[j] = (f1, f2);
        res_k += wgk[j] * (f1 + f2);
        res_abs += wgk[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += wg[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = wgk[last] * (fc - mean).abs();
    for (j, &(f1, f2)) in fv[..last].iter().enumerate() {
        res_asc += wgk[j] * ((f1 - mean).abs() + (f2 - mean).abs());
    }
    let scale = half.abs();
    let (value, res_abs, res_asc) = (res_k * half, res_abs * scale, res_asc * scale);
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Panel { a, b, value, error: err }
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, cuts: &[f64], cfg: &QuadConfig) -> QuadResult {
    let evals_per_panel = match cfg.rule {
        Rule::Gk15 => 15,
        Rule::Gk21 => 21,
    };
    let mut panels: Vec<Panel> = cuts.windows(2).map(|w| kronrod(f, w[0], w[1], cfg.rule)).collect();
    let mut evaluations = panels.len() * evals_per_panel;
    loop {
        let value: f64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        let tol = cfg.abs_tol.max(cfg.rel_tol * value.abs());
        if error <= tol {
            return QuadResult { value, error, converged: true, evaluations };
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .unwrap();
        let (a, b) = (panels[worst].a, panels[worst].b);
        let mid = 0.5 * (a + b);
        let too_fine = !(a < mid && mid < b);
        if panels.len() >= cfg.max_subdivisions || too_fine || !error.is_finite() {
            return QuadResult { value, error, converged: false, evaluations };
        }
        panels.swap_remove(worst);
        panels.push(kronrod(f, a, mid, cfg.rule));
        panels.push(kronrod(f, mid, b, cfg.rule));
        evaluations += 2 * evals_per_panel;
    }
}

/// Integrates `f` over `[a, b]`; `b` may be `f64::INFINITY`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadConfig) -> QuadResult {
    integrate_with_breakpoints(f, a, b, &[], cfg)
}

/// Integrates `f` over `[a, b]`, starting from panels split at `breakpoints`
/// (points outside `(a, b)` are ignored). Use this for kinks and jumps at known
/// locations.
pub fn integrate_with_breakpoints<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    cfg: &QuadConfig,
) -> QuadResult {
    if !(b > a) {
        return QuadResult::exact(0.0);
    }
    if b.is_infinite() {
        // v = a + s / (1 - s)
        let g = |s: f64| {
            let d = 1.0 - s;
            let y = f(a + s / d);
            if y == 0.0 { 0.0 } else { y / (d * d) }
        };
        let cuts = cut_points(0.0, 1.0, breakpoints.iter().filter(|&&x| x > a).map(|&x| (x - a) / (1.0 + x - a)));
        adaptive(&g, &cuts, cfg)
    } else {
        let cuts = cut_points(a, b, breakpoints.iter().copied());
        adaptive(&f, &cuts, cfg)
    }
}

fn cut_points(a: f64, b: f64, inner: impl Iterator<Item = f64>) -> Vec<f64> {
    let width = b - a;
    let mut cuts: Vec<f64> = inner.filter(|&x| x > a + 1e-12 * width && x < b - 1e-12 * width).collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * width);
    cuts
}

type BoundFn<'a> = Box<dyn Fn(&[f64]) -> f64 + 'a>;
type BreakFn<'a> = Box<dyn Fn(&[f64]) -> Vec<f64> + 'a>;

/// One level of an iterated integral. Its bounds and breakpoints are functions
/// of the variables of the enclosing (outer) levels, outermost first.
pub struct Level<'a> {
    lower: BoundFn<'a>,
    upper: BoundFn<'a>,
    breakpoints: Option<BreakFn<'a>>,
}

impl<'a> Level<'a> {
    pub fn new(lower: impl Fn(&[f64]) -> f64 + 'a, upper: impl Fn(&[f64]) -> f64 + 'a) -> Self {
        Self { lower: Box::new(lower), upper: Box::new(upper), breakpoints: None }
    }

    pub fn fixed(lower: f64, upper: f64) -> Self {
        Self::new(move |_| lower, move |_| upper)
    }

    /// `[0, infinity)`.
    pub fn half_line() -> Self {
        Self::fixed(0.0, f64::INFINITY)
    }

    pub fn with_breakpoints(mut self, breaks: impl Fn(&[f64]) -> Vec<f64> + 'a) -> Self {
        self.breakpoints = Some(Box::new(breaks));
        self
    }
}

struct NestedState {
    level_error: RefCell<[f64; MAX_DEPTH]>,
    converged: Cell<bool>,
    evaluations: Cell<usize>,
}

/// Iterated adaptive quadrature of `f(x_0, ..., x_{d-1})`, outermost variable first.
///
/// Every level gets `1/d` of the tolerance budget. The returned error is the sum
/// over levels of the largest error estimate seen at that level; an unconverged
/// inner integral marks the whole result unconverged.
pub fn integrate_nested(f: &dyn Fn(&[f64]) -> f64, levels: &[Level<'_>], cfg: &QuadConfig) -> Result<QuadResult> {
    let depth = levels.len();
    if depth == 0 || depth > MAX_DEPTH {
        return Err(Error::DepthExceeded { depth, max: MAX_DEPTH });
    }
    cfg.validate()?;
    let level_cfg = cfg.split(depth);
    let state = NestedState {
        level_error: RefCell::new([0.0; MAX_DEPTH]),
        converged: Cell::new(true),
        evaluations: Cell::new(0),
    };
    let value = nested_level(f, levels, 0, [0.0; MAX_DEPTH], &level_cfg, &state);
    let error = state.level_error.borrow()[..depth].iter().sum();
    Ok(QuadResult { value, error, converged: state.converged.get(), evaluations: state.evaluations.get() })
}

fn nested_level(
    f: &dyn Fn(&[f64]) -> f64,
    levels: &[Level<'_>],
    depth: usize,
    vars: [f64; MAX_DEPTH],
    cfg: &QuadConfig,
    state: &NestedState,
) -> f64 {
    let level = &levels[depth];
    let outer = &vars[..depth];
    let (a, b) = ((level.lower)(outer), (level.upper)(outer));
    let breaks = level.breakpoints.as_ref().map(|g| g(outer)).unwrap_or_default();
    let innermost = depth + 1 == levels.len();
    let g = |x: f64| {
        let mut v = vars;
        v[depth] = x;
        if innermost {
            state.evaluations.set(state.evaluations.get() + 1);
            f(&v[..=depth])
        } else {
            nested_level(f, levels, depth + 1, v, cfg, state)
        }
    };
    let r = integrate_with_breakpoints(g, a, b, &breaks, cfg);
    if !r.converged {
        state.converged.set(false);
    }
    let mut errs = state.level_error.borrow_mut();
    errs[depth] = errs[depth].max(r.error);
    r.value
}
