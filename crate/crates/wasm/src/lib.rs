//! Browser bindings: running-minimum law curves, the bridge survival factor and
//! survival curves along a simulated path.

use std::path::Path;

use switchcredit::gbm::{BarrierSchedule, FirmParams};
use switchcredit::minlaw::{bridge_min_survival, NormalizedLaw};
use switchcredit::oracle::OracleConfig;
use switchcredit::quadrature::QuadConfig;
use switchcredit::scenario::{
    evaluate, GridSpec, InvestorSpec, LawSweep, Overrides, PathSource, PricingSpec, Scenario, ValidationSpec,
};
use switchcredit::thresholds::Marginal;
use wasm_bindgen::prelude::*;

/// Density and survival function of the running minimum of `X / X_0` over
/// `[0, t]`, as flat `[u, density, P(min > u), ...]` triples on `(0, 1)`.
pub fn minimum_law_table(mu: f64, sigma: f64, t: f64, points: usize) -> Result<Vec<f64>, String> {
    let law = NormalizedLaw::new(mu - 0.5 * sigma * sigma, sigma).map_err(|e| e.to_string())?;
    if !(t > 0.0) || points < 2 {
        return Err("need t > 0 and at least two points".into());
    }
    let mut out = Vec::with_capacity(3 * points);
    for k in 1..=points {
        let u = k as f64 / (points + 1) as f64;
        out.extend([u, law.min_density(t, u).map_err(|e| e.to_string())?, law.min_ccdf(t, u)]);
    }
    Ok(out)
}

/// Probability that a bridge from `x_a` to `x_b` over `dt` stays above each
/// level, as flat `[level, probability, ...]` pairs below `min(x_a, x_b)`.
pub fn bridge_survival_table(sigma: f64, dt: f64, x_a: f64, x_b: f64, points: usize) -> Result<Vec<f64>, String> {
    if !(sigma > 0.0 && dt > 0.0 && x_a > 0.0 && x_b > 0.0) || points < 2 {
        return Err("need positive sigma, dt, endpoints and at least two points".into());
    }
    let top = x_a.min(x_b);
    Ok((0..points)
        .flat_map(|k| {
            let l = top * k as f64 / (points - 1) as f64;
            [l, bridge_min_survival(sigma, dt, x_a, x_b, l)]
        })
        .collect())
}

/// Two barrier regimes (Beta(2,2) then Exponential(2/3), switch at 1, maturity 2)
/// on a seeded path. Flat `[t, X_t, continuous survival, quarterly survival,
/// continuous spread, quarterly spread, ...]` rows; default gives survival 0 and
/// an infinite spread.
pub fn survival_table(mu: f64, sigma: f64, theta: f64, seed: u64, points: usize) -> Result<Vec<f64>, String> {
    let mut scenario = Scenario {
        name: "browser".into(),
        firm: FirmParams { mu, sigma, x0: 1.0 },
        schedule: BarrierSchedule { adjustment_times: vec![0.0, 1.0], horizon: 2.0 },
        barrier_law: LawSweep {
            marginals: vec![Marginal::Beta { alpha: 2.0, beta: 2.0 }, Marginal::Exponential { rate: 2.0 / 3.0 }],
            thetas: vec![theta],
        },
        investors: vec![
            InvestorSpec::C { label: Some("c".into()), thetas: None },
            InvestorSpec::D { label: Some("d".into()), every: Some(0.25), dates: None, thetas: None },
        ],
        path: PathSource::Simulate { seed, step: 0.01, barriers: None },
        grid: GridSpec { points, extra: Vec::new() },
        pricing: PricingSpec::default(),
        quadrature: QuadConfig::nested(),
        oracle: ValidationSpec { config: OracleConfig::default(), points: 0 },
    };
    scenario.apply(&Overrides::default()).map_err(|e| e.to_string())?;
    let eval = evaluate(&scenario, Path::new("."), false, &|_| {}).map_err(|e| e.to_string())?;
    let (c, d) = (&eval.series[0].rows, &eval.series[1].rows);
    Ok(c.iter()
        .zip(d)
        .flat_map(|(rc, rd)| [rc.t, eval.path.value_at(rc.t), rc.survival, rd.survival, rc.spread, rd.spread])
        .collect())
}

#[wasm_bindgen(js_name = minimumLaw)]
pub fn minimum_law(mu: f64, sigma: f64, t: f64, points: usize) -> Result<Vec<f64>, JsError> {
    minimum_law_table(mu, sigma, t, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = bridgeSurvival)]
pub fn bridge_survival(sigma: f64, dt: f64, x_a: f64, x_b: f64, points: usize) -> Result<Vec<f64>, JsError> {
    bridge_survival_table(sigma, dt, x_a, x_b, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = survivalAlongPath)]
pub fn survival_along_path(mu: f64, sigma: f64, theta: f64, seed: u32, points: usize) -> Result<Vec<f64>, JsError> {
    survival_table(mu, sigma, theta, u64::from(seed), points).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimum_law_is_a_ccdf() {
        let tab = minimum_law_table(0.05, 0.8, 1.0, 20).unwrap();
        assert_eq!(tab.len(), 60);
        let ccdf: Vec<f64> = tab.chunks(3).map(|r| r[2]).collect();
        assert!(ccdf.windows(2).all(|w| w[1] <= w[0]));
        assert!(tab.chunks(3).all(|r| r[1] >= 0.0));
    }

    #[test]
    fn bridge_table_ends_at_zero() {
        let tab = bridge_survival_table(0.8, 0.25, 1.0, 1.2, 11).unwrap();
        assert_eq!(tab[1], 1.0);
        assert!(tab[tab.len() - 1].abs() < 1e-12);
    }

    #[test]
    fn survival_rows_have_six_columns() {
        let tab = survival_table(0.05, 0.8, 2.0, 3, 8).unwrap();
        assert_eq!(tab.len() % 6, 0);
        assert!(tab.chunks(6).all(|r| r[2] == 0.0 || (r[2] > 0.0 && r[2] <= 1.0)));
        assert!(survival_table(0.05, -1.0, 2.0, 3, 8).is_err());
    }
}
