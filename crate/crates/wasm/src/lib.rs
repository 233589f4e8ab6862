//! Browser bindings: each export takes slider values and returns a JSON
//! string for `www/main.js` to draw.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use sepode::estimator::{
    evaluation_grid, identifiability_report, FitOptions, SmoothPipeline, WeightScheme, DEFAULT_COND_THRESHOLD,
    DEFAULT_REFINE,
};
use sepode::experiments::{protocols, rng_for, simulate, Data, Distribution, Prepared};
use sepode::ode::{self, solve_ode, Trajectory};
use sepode::quadrature::linspace;
use sepode::smoothing::{epanechnikov, BandwidthScale, SmootherConfig};

#[derive(Serialize)]
struct Series {
    t: Vec<f64>,
    /// One vector per state component.
    x: Vec<Vec<f64>>,
}

impl Series {
    fn of(traj: &Trajectory) -> Self {
        Series { t: traj.times().to_vec(), x: (0..traj.dim()).map(|k| traj.component(k)).collect() }
    }

    fn from_rows(t: &[f64], values: &[f64], d: usize) -> Self {
        Series { t: t.to_vec(), x: (0..d).map(|k| values.iter().skip(k).step_by(d).copied().collect()).collect() }
    }
}

#[derive(Serialize)]
struct SmoothView {
    bandwidth: f64,
    data: Series,
    truth: Series,
    smooth: Series,
    nu_hat: Option<Vec<f64>>,
    refit: Series,
}

/// FitzHugh-Nagumo data at `noise_sd`, smoothed with half-width `bandwidth`,
/// then fitted and re-solved from the estimates.
pub fn fhn_smoothing(bandwidth: f64, noise_sd: f64, seed: u64) -> Result<String, String> {
    let cfg = protocols::fhn_grid([noise_sd, noise_sd], 1, 0, seed).map_err(|e| e.to_string())?;
    let theta = cfg.theta().map_err(|e| e.to_string())?;
    let Data::Grid(obs) = simulate(&cfg.model, &theta, &cfg.xi, &cfg.design, &cfg.noise, &mut rng_for(seed, 0))
        .map_err(|e| e.to_string())?
    else {
        unreachable!("grid design yields grid data")
    };
    let smoother =
        SmootherConfig::new(1, bandwidth, BandwidthScale::Absolute, epanechnikov()).map_err(|e| e.to_string())?;
    let pipe = SmoothPipeline::for_observations(&obs, &smoother, DEFAULT_REFINE, FitOptions::default())
        .map_err(|e| e.to_string())?;
    let smooth = pipe.smooth(obs.values()).map_err(|e| e.to_string())?;
    let fine = linspace(0.0, 20.0, 801);
    let truth = solve_ode(&cfg.model, &theta, &cfg.xi, &fine).map_err(|e| e.to_string())?;
    let est = pipe.estimate(&cfg.model, &obs, 0, seed).map_err(|e| e.to_string())?;
    // a wildly wrong estimate can blow up; show the smoother alone then
    let refit = solve_ode(&cfg.model, &est.theta, &est.xi, &fine)
        .map(|r| Series::of(&r))
        .unwrap_or(Series { t: vec![], x: vec![] });
    let view = SmoothView {
        bandwidth,
        data: Series::from_rows(obs.times(), obs.values(), 2),
        truth: Series::of(&truth),
        smooth: Series::of(&smooth),
        nu_hat: est.nu,
        refit,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct StepView {
    replicates: usize,
    theta_hat: Vec<f64>,
    xi_hat: Vec<f64>,
    means: Series,
    truth: Series,
    refit: Series,
}

/// Lotka-Volterra repeated design with `j` replicates per time point,
/// step estimator fit.
pub fn lv_step_fit(j: usize, noise_sd: f64, seed: u64) -> Result<String, String> {
    let cfg = protocols::lv_repeated(1, j, Distribution::Gaussian, noise_sd, 1, seed).map_err(|e| e.to_string())?;
    let theta = cfg.theta().map_err(|e| e.to_string())?;
    let data = simulate(&cfg.model, &theta, &cfg.xi, &cfg.design, &cfg.noise, &mut rng_for(seed, 0))
        .map_err(|e| e.to_string())?;
    let prepared = Prepared::new(&cfg.pipeline, &cfg.design, 2).map_err(|e| e.to_string())?;
    let est = prepared.estimate(&cfg.model, &data, seed).map_err(|e| e.to_string())?;
    let Data::Repeated(obs) = &data else { unreachable!("repeated design yields repeated data") };
    let horizon = cfg.design.horizon();
    let fine = linspace(0.0, horizon, 601);
    let truth = solve_ode(&cfg.model, &theta, &cfg.xi, &fine).map_err(|e| e.to_string())?;
    let refit = solve_ode(&cfg.model, &est.theta, &est.xi, &fine)
        .map(|r| Series::of(&r))
        .unwrap_or(Series { t: vec![], x: vec![] });
    let view = StepView {
        replicates: j,
        theta_hat: est.theta,
        xi_hat: est.xi,
        means: Series::from_rows(obs.times(), &obs.means(), 2),
        truth: Series::of(&truth),
        refit,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct SpectrumView {
    model: String,
    horizon: f64,
    eigenvalues: Vec<f64>,
    rank: usize,
    rcond: f64,
    identifiable: bool,
    null_space: Vec<Vec<f64>>,
}

/// Spectrum of `C` along the true trajectory of a preset over `[0, horizon]`.
/// Presets: `fhn`, `lv`, `lv-equilibrium`, `duplicated`.
pub fn spectrum(preset: &str, horizon: f64) -> Result<String, String> {
    let (model, theta, xi) = match preset {
        "fhn" => {
            let m = ode::fitzhugh_nagumo();
            let theta = m.theta_of(&protocols::FHN_NU).map_err(|e| e.to_string())?;
            (m, theta, protocols::FHN_XI.to_vec())
        }
        "lv" => (ode::lotka_volterra(), vec![0.5; 4], vec![1.0, 0.5]),
        "lv-equilibrium" => (ode::lotka_volterra(), vec![0.5; 4], vec![1.0, 1.0]),
        "duplicated" => (ode::duplicated_column(), vec![0.3, 0.2], vec![1.0]),
        other => return Err(format!("unknown preset '{other}'")),
    };
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err("horizon must be positive".into());
    }
    let grid = evaluation_grid(&linspace(0.0, horizon, 201), horizon, 2);
    let x = solve_ode(&model, &theta, &xi, &grid).map_err(|e| e.to_string())?;
    let r = identifiability_report(&model, &x, &WeightScheme::UniformLebesgue).map_err(|e| e.to_string())?;
    let view = SpectrumView {
        model: model.name().to_string(),
        horizon,
        identifiable: r.identifiable(DEFAULT_COND_THRESHOLD),
        eigenvalues: r.eigenvalues,
        rank: r.rank,
        rcond: r.rcond,
        null_space: r.null_space,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = fhnSmoothing)]
pub fn fhn_smoothing_js(bandwidth: f64, noise_sd: f64, seed: u32) -> Result<String, JsValue> {
    fhn_smoothing(bandwidth, noise_sd, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = lvStepFit)]
pub fn lv_step_fit_js(j: u32, noise_sd: f64, seed: u32) -> Result<String, JsValue> {
    lv_step_fit(j as usize, noise_sd, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = spectrum)]
pub fn spectrum_js(preset: &str, horizon: f64) -> Result<String, JsValue> {
    spectrum(preset, horizon).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> serde_json::Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn smoothing_view_has_all_series() {
        let v = parse(&fhn_smoothing(0.171, 0.05, 3).unwrap());
        assert_eq!(v["data"]["t"].as_array().unwrap().len(), 201);
        assert_eq!(v["smooth"]["x"].as_array().unwrap().len(), 2);
        assert!(v["nu_hat"][2].as_f64().unwrap() > 2.0);
        assert!(fhn_smoothing(-1.0, 0.05, 3).is_err());
    }

    #[test]
    fn step_fit_is_near_truth() {
        let v = parse(&lv_step_fit(30, 0.5, 1).unwrap());
        for t in v["theta_hat"].as_array().unwrap() {
            assert!((t.as_f64().unwrap() - 0.5).abs() < 0.2);
        }
        assert_eq!(v["means"]["t"].as_array().unwrap().len(), 30);
    }

    #[test]
    fn spectrum_flags_presets() {
        assert_eq!(parse(&spectrum("lv", 15.0).unwrap())["identifiable"], true);
        assert_eq!(parse(&spectrum("lv-equilibrium", 15.0).unwrap())["rank"], 2);
        assert_eq!(parse(&spectrum("duplicated", 1.0).unwrap())["identifiable"], false);
        assert!(spectrum("nope", 1.0).is_err());
    }
}
