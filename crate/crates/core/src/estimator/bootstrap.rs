use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::design::{compute_g, fit_design, FitOptions, FitResult};
use super::invert::{invert_to_nu, Mahalanobis, NuEstimate};
use crate::error::{Error, Result};
use crate::ode::{OdeModel, Trajectory};
use crate::par::map_indexed;
use crate::quadrature::refine;
use crate::smoothing::{LocalPolyWeights, Observations, SmootherConfig};

/// Default number of uniform subdivisions of each observation interval in
/// the evaluation grid.
pub const DEFAULT_REFINE: usize = 4;

/// Smooth-then-match for one fixed observation design. The smoother weights
/// are computed once, both on the evaluation grid and at the observation
/// times (the latter give the fitted values for residuals).
#[derive(Debug, Clone)]
pub struct SmoothPipeline {
    obs_times: Vec<f64>,
    horizon: f64,
    dim: usize,
    on_grid: LocalPolyWeights,
    on_obs: LocalPolyWeights,
    pub fit: FitOptions,
}

/// `{0} + distinct observation times + {T}`, refined `factor` times.
pub fn evaluation_grid(obs_times: &[f64], horizon: f64, factor: usize) -> Vec<f64> {
    let mut knots = vec![0.0];
    for &t in obs_times {
        if t > *knots.last().unwrap() {
            knots.push(t);
        }
    }
    if horizon > *knots.last().unwrap() {
        knots.push(horizon);
    }
    refine(&knots, factor)
}

impl SmoothPipeline {
    pub fn new(
        obs_times: &[f64],
        horizon: f64,
        dim: usize,
        smoother: &SmootherConfig,
        refine_factor: usize,
        fit: FitOptions,
    ) -> Result<Self> {
        let grid = evaluation_grid(obs_times, horizon, refine_factor);
        let on_grid = LocalPolyWeights::new(obs_times, horizon, smoother, &grid)?;
        let on_obs = LocalPolyWeights::new(obs_times, horizon, smoother, obs_times)?;
        Ok(SmoothPipeline { obs_times: obs_times.to_vec(), horizon, dim, on_grid, on_obs, fit })
    }

    pub fn for_observations(
        obs: &Observations,
        smoother: &SmootherConfig,
        refine_factor: usize,
        fit: FitOptions,
    ) -> Result<Self> {
        SmoothPipeline::new(obs.times(), obs.horizon(), obs.dim(), smoother, refine_factor, fit)
    }

    pub fn grid(&self) -> &[f64] {
        self.on_grid.eval_times()
    }

    fn check(&self, obs: &Observations) -> Result<()> {
        if obs.times() != self.obs_times.as_slice() || obs.horizon() != self.horizon {
            return Err(Error::invalid("observations do not match the pipeline design"));
        }
        Error::check_len("observation dimension", self.dim, obs.dim())
    }

    /// `x_hat` on the evaluation grid.
    pub fn smooth(&self, values: &[f64]) -> Result<Trajectory> {
        self.on_grid.apply(values, self.dim)
    }

    /// `x_hat(t_i)` at the observation times, row-major.
    pub fn fitted(&self, values: &[f64]) -> Result<Vec<f64>> {
        Ok(self.on_obs.apply(values, self.dim)?.values().to_vec())
    }

    /// `(theta_hat, xi_hat)` from raw observation values.
    pub fn fit_values(&self, model: &OdeModel, values: &[f64]) -> Result<FitResult> {
        let xhat = self.smooth(values)?;
        let g = compute_g(model, &xhat, self.fit.rule)?;
        fit_design(&xhat, &g, &self.fit)
    }

    pub fn fit(&self, model: &OdeModel, obs: &Observations) -> Result<FitResult> {
        self.check(obs)?;
        self.fit_values(model, obs.values())
    }

    /// Fit, bootstrap `Sigma` with `b` replicates, and invert to `nu`. With
    /// `b == 0` the inversion uses the Euclidean metric and `sigma` stays
    /// empty.
    pub fn estimate(&self, model: &OdeModel, obs: &Observations, b: usize, seed: u64) -> Result<FitResult> {
        let mut result = self.fit(model, obs)?;
        let p = model.n_theta();
        let sigma = if b > 0 { Some(bootstrap_covariance(model, obs, self, b, seed)?) } else { None };
        let nu: NuEstimate = match &sigma {
            Some(s) => invert_to_nu(model, &result.theta, s, None)?,
            None => invert_to_nu(model, &result.theta, &DMatrix::identity(p, p), None)?,
        };
        result.nu = Some(nu.nu);
        result.nu_converged = Some(nu.converged);
        result.nu_distance = Some(nu.distance);
        result.sigma = sigma;
        Ok(result)
    }
}

/// Resampling indices for bootstrap replicate `replicate`: for every
/// component `k` and observation `i`, entry `k * n + i` is the observation
/// whose residual replaces the one at `i`. The stream depends only on
/// `(seed, replicate)`.
pub fn resample_indices(seed: u64, replicate: usize, n: usize, d: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    let n32 = u32::try_from(n).expect("bootstrap sample too large");
    (0..n * d).map(|_| rng.random_range(0..n32) as usize).collect()
}

/// Centered residuals `Y(t_i) - x_hat(t_i)` per component.
pub fn centered_residuals(values: &[f64], fitted: &[f64], d: usize) -> Vec<f64> {
    let n = values.len() / d;
    let mut res: Vec<f64> = values.iter().zip(fitted).map(|(y, f)| y - f).collect();
    for k in 0..d {
        let mean = res.iter().skip(k).step_by(d).sum::<f64>() / n as f64;
        for i in 0..n {
            res[i * d + k] -= mean;
        }
    }
    res
}

/// `Y* = x_hat(t_i) + eps*` for one replicate.
pub fn bootstrap_sample(fitted: &[f64], residuals: &[f64], indices: &[usize], d: usize) -> Vec<f64> {
    let n = fitted.len() / d;
    let mut out = fitted.to_vec();
    for k in 0..d {
        for i in 0..n {
            out[i * d + k] += residuals[indices[k * n + i] * d + k];
        }
    }
    out
}

/// `(1/B) sum (v_b - mean)(v_b - mean)^T`.
pub fn outer_covariance(samples: &[Vec<f64>]) -> DMatrix<f64> {
    let p = samples.first().map_or(0, Vec::len);
    let b = samples.len() as f64;
    let mut mean = vec![0.0; p];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / b;
        }
    }
    let mut cov = DMatrix::zeros(p, p);
    for s in samples {
        for r in 0..p {
            for c in 0..p {
                cov[(r, c)] += (s[r] - mean[r]) * (s[c] - mean[c]) / b;
            }
        }
    }
    cov
}

/// Residual bootstrap estimate of the covariance of `theta_hat`. Replicates
/// run in parallel; the result does not depend on scheduling.
pub fn bootstrap_covariance(
    model: &OdeModel,
    obs: &Observations,
    pipeline: &SmoothPipeline,
    b: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if b < 2 {
        return Err(Error::invalid("bootstrap needs at least 2 replicates"));
    }
    pipeline.check(obs)?;
    let d = obs.dim();
    let n = obs.len();
    let fitted = pipeline.fitted(obs.values())?;
    let residuals = centered_residuals(obs.values(), &fitted, d);
    let thetas = map_indexed(b, |r| {
        let idx = resample_indices(seed, r, n, d);
        let y = bootstrap_sample(&fitted, &residuals, &idx, d);
        pipeline
            .fit_values(model, &y)
            .map(|f| f.theta)
            .map_err(|e| Error::Bootstrap { replicate: r, source: Box::new(e) })
    });
    let thetas = thetas.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(outer_covariance(&thetas))
}

/// Mahalanobis distance `d_n(x, y)` under the floored `Sigma`.
pub fn mahalanobis(sigma: &DMatrix<f64>, x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(Mahalanobis::new(sigma)?.distance(x, y))
}
