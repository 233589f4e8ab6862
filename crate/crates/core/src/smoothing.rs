//! Nonparametric reconstruction of `x(.)` from noisy observations: the local
//! polynomial smoother and the replicate-mean step estimator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::rcond_sym;
use crate::ode::Trajectory;

/// One noisy `d`-vector per time point. Times are non-decreasing; ties are
/// allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    times: Vec<f64>,
    values: Vec<f64>,
    dim: usize,
    horizon: f64,
}

impl Observations {
    pub fn new(times: Vec<f64>, values: Vec<f64>, dim: usize, horizon: f64) -> Result<Self> {
        if dim == 0 || times.is_empty() {
            return Err(Error::invalid("observations need at least one point and one component"));
        }
        Error::check_len("observation values", times.len() * dim, values.len())?;
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("observation times must be non-decreasing"));
        }
        if times[0] < 0.0 || *times.last().unwrap() > horizon {
            return Err(Error::invalid("observation times must lie in [0, T]"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidState { time: times[i / dim] });
        }
        Ok(Observations { times, values, dim, horizon })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Same design, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Observations::new(self.times.clone(), values, self.dim, self.horizon)
    }
}

/// Repeated measures: `J_i` replicate vectors at each time `t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedObservations {
    times: Vec<f64>,
    /// `replicates[i]` holds `J_i * d` values, row-major.
    replicates: Vec<Vec<f64>>,
    dim: usize,
    horizon: f64,
}

impl RepeatedObservations {
    pub fn new(times: Vec<f64>, replicates: Vec<Vec<f64>>, dim: usize, horizon: f64) -> Result<Self> {
        if dim == 0 || times.is_empty() {
            return Err(Error::invalid("repeated design needs at least one time point"));
        }
        Error::check_len("replicate blocks", times.len(), replicates.len())?;
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("repeated-design times must be strictly increasing"));
        }
        if times[0] <= 0.0 || *times.last().unwrap() > horizon {
            return Err(Error::invalid("repeated-design times must lie in (0, T]"));
        }
        for (i, block) in replicates.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::invalid(format!("empty replicate set at t = {}", times[i])));
            }
            if block.len() % dim != 0 {
                return Err(Error::invalid(format!("ragged replicate block at t = {}", times[i])));
            }
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidState { time: times[i] });
            }
        }
        Ok(RepeatedObservations { times, replicates, dim, horizon })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn replicates(&self, i: usize) -> &[f64] {
        &self.replicates[i]
    }
    /// `J_i`.
    pub fn counts(&self) -> Vec<usize> {
        self.replicates.iter().map(|b| b.len() / self.dim).collect()
    }
    /// Total number of observation vectors `n = sum J_i`.
    pub fn total(&self) -> usize {
        self.counts().iter().sum()
    }

    /// Replicate means, one `d`-vector per time point (row-major).
    pub fn means(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = Vec::with_capacity(self.times.len() * d);
        for block in &self.replicates {
            let j = (block.len() / d) as f64;
            for k in 0..d {
                let s: f64 = block.iter().skip(k).step_by(d).sum();
                out.push(s / j);
            }
        }
        out
    }
}

/// A kernel supported on `[-1, 1]`.
#[derive(Clone, Copy)]
pub struct KernelSpec {
    pub name: &'static str,
    pub eval: fn(f64) -> f64,
}

impl std::fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KernelSpec({})", self.name)
    }
}

impl KernelSpec {
    pub fn at(&self, u: f64) -> f64 {
        (self.eval)(u)
    }
}

/// `K(u) = 3/4 (1 - u^2)` on `|u| <= 1`.
pub fn epanechnikov() -> KernelSpec {
    fn k(u: f64) -> f64 {
        if u.abs() <= 1.0 {
            0.75 * (1.0 - u * u)
        } else {
            0.0
        }
    }
    KernelSpec { name: "epanechnikov", eval: k }
}

/// `K(u) = 35/32 (1 - u^2)^3` on `|u| <= 1`.
pub fn triweight() -> KernelSpec {
    fn k(u: f64) -> f64 {
        if u.abs() <= 1.0 {
            let v = 1.0 - u * u;
            35.0 / 32.0 * v * v * v
        } else {
            0.0
        }
    }
    KernelSpec { name: "triweight", eval: k }
}

pub fn kernel_by_name(name: &str) -> Option<KernelSpec> {
    match name {
        "epanechnikov" => Some(epanechnikov()),
        "triweight" => Some(triweight()),
        _ => None,
    }
}

/// Sampled check of the kernel regularity conditions (symmetry, compact
/// support, Lipschitz, bounded, bounded away from zero near the origin).
#[derive(Debug, Clone)]
pub struct KernelReport {
    pub symmetric: bool,
    pub compact_support: bool,
    pub lipschitz: f64,
    pub k_max: f64,
    /// `min K(u)` over `|u| <= delta`.
    pub k_min: f64,
}

impl KernelReport {
    pub fn satisfied(&self) -> bool {
        self.symmetric
            && self.compact_support
            && self.lipschitz.is_finite()
            && self.k_max.is_finite()
            && self.k_min > 0.0
    }
}

pub fn check_kernel(kernel: &KernelSpec, delta: f64, samples: usize) -> KernelReport {
    let us: Vec<f64> = (0..=samples).map(|i| -1.5 + 3.0 * i as f64 / samples as f64).collect();
    let symmetric = us.iter().all(|&u| (kernel.at(u) - kernel.at(-u)).abs() <= 1e-14);
    let compact_support = us.iter().filter(|u| u.abs() > 1.0).all(|&u| kernel.at(u) == 0.0);
    let lipschitz =
        us.windows(2).map(|w| (kernel.at(w[1]) - kernel.at(w[0])).abs() / (w[1] - w[0])).fold(0.0, f64::max);
    let k_max = us.iter().map(|&u| kernel.at(u).abs()).fold(0.0, f64::max);
    let k_min = us.iter().filter(|u| u.abs() <= delta).map(|&u| kernel.at(u).abs()).fold(f64::INFINITY, f64::min);
    KernelReport { symmetric, compact_support, lipschitz, k_max, k_min }
}

/// Whether the bandwidth is a fraction of the horizon or a time span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BandwidthScale {
    /// `b` lives on the normalized `[0, 1]` scale; the window is `b T`.
    #[default]
    Normalized,
    /// `b` is the half-width of the window in raw time units.
    Absolute,
}

#[derive(Debug, Clone, Copy)]
pub struct SmootherConfig {
    pub order: usize,
    pub bandwidth: f64,
    pub scale: BandwidthScale,
    pub kernel: KernelSpec,
}

/// Practical cap on the local polynomial order.
pub const MAX_ORDER: usize = 5;

impl SmootherConfig {
    pub fn new(order: usize, bandwidth: f64, scale: BandwidthScale, kernel: KernelSpec) -> Result<Self> {
        let cfg = SmootherConfig { order, bandwidth, scale, kernel };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order > MAX_ORDER {
            return Err(Error::invalid(format!("local polynomial order {} exceeds {MAX_ORDER}", self.order)));
        }
        let ok = self.bandwidth.is_finite()
            && self.bandwidth > 0.0
            && (self.scale == BandwidthScale::Absolute || self.bandwidth <= 1.0);
        if !ok {
            return Err(Error::invalid(format!("bandwidth {} out of range", self.bandwidth)));
        }
        Ok(())
    }

    /// Half-width of the kernel window in time units.
    pub fn window(&self, horizon: f64) -> f64 {
        match self.scale {
            BandwidthScale::Normalized => self.bandwidth * horizon,
            BandwidthScale::Absolute => self.bandwidth,
        }
    }
}

/// `n^{-1/(2 alpha)}` for smoothness `alpha >= 1`, else `n^{-1/3}`.
pub fn default_bandwidth(n: usize, alpha: Option<f64>) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid("default bandwidth needs n >= 2"));
    }
    let exponent = match alpha {
        None => 1.0 / 3.0,
        Some(a) if a >= 1.0 && a.is_finite() => 1.0 / (2.0 * a),
        Some(a) => return Err(Error::invalid(format!("smoothness alpha = {a} must be >= 1"))),
    };
    Ok((n as f64).powf(-exponent))
}

/// The reciprocal-condition floor below which the local design is singular.
pub const SINGULAR_RCOND: f64 = 1e-12;

/// Smoother weights `W_{n,i}(t)` for a fixed design and evaluation grid.
/// They do not depend on the observed values, so one set serves every
/// replicate and bootstrap sample on the same design.
#[derive(Debug, Clone)]
pub struct LocalPolyWeights {
    eval_times: Vec<f64>,
    n_obs: usize,
    rows: Vec<WeightRow>,
}

#[derive(Debug, Clone)]
struct WeightRow {
    start: usize,
    weights: Vec<f64>,
}

fn basis(u: f64, order: usize, out: &mut [f64]) {
    // U(u) = (1, u, u^2/2!, ..., u^l/l!)
    out[0] = 1.0;
    for j in 1..=order {
        out[j] = out[j - 1] * u / j as f64;
    }
}

impl LocalPolyWeights {
    pub fn new(obs_times: &[f64], horizon: f64, cfg: &SmootherConfig, eval_times: &[f64]) -> Result<Self> {
        cfg.validate()?;
        if eval_times.iter().any(|&t| !(0.0..=horizon).contains(&t)) {
            return Err(Error::invalid("evaluation times must lie in [0, T]"));
        }
        let n = obs_times.len();
        let window = cfg.window(horizon);
        let b_norm = window / horizon;
        let m = cfg.order + 1;
        let mut u_buf = vec![0.0; m];
        let mut rows = Vec::with_capacity(eval_times.len());
        for &t in eval_times {
            let start = obs_times.partition_point(|&s| s < t - window);
            let end = obs_times.partition_point(|&s| s <= t + window);
            let mut bmat = DMatrix::<f64>::zeros(m, m);
            let mut active = 0;
            for &s in &obs_times[start..end] {
                let u = (s - t) / window;
                let k = cfg.kernel.at(u);
                if k == 0.0 {
                    continue;
                }
                active += 1;
                basis(u, cfg.order, &mut u_buf);
                for a in 0..m {
                    for c in 0..m {
                        bmat[(a, c)] += u_buf[a] * u_buf[c] * k;
                    }
                }
            }
            bmat /= n as f64 * b_norm;
            if active == 0 || rcond_sym(&bmat) < SINGULAR_RCOND {
                return Err(Error::SingularDesign { time: t, points: active });
            }
            let mut e0 = DVector::zeros(m);
            e0[0] = 1.0;
            let coef = bmat.cholesky().ok_or(Error::SingularDesign { time: t, points: active })?.solve(&e0);
            let weights = obs_times[start..end]
                .iter()
                .map(|&s| {
                    let u = (s - t) / window;
                    basis(u, cfg.order, &mut u_buf);
                    let dot: f64 = u_buf.iter().zip(coef.iter()).map(|(a, b)| a * b).sum();
                    dot * cfg.kernel.at(u) / (n as f64 * b_norm)
                })
                .collect();
            rows.push(WeightRow { start, weights });
        }
        Ok(LocalPolyWeights { eval_times: eval_times.to_vec(), n_obs: n, rows })
    }

    pub fn eval_times(&self) -> &[f64] {
        &self.eval_times
    }

    /// Dense `W_{n,i}(t)` for evaluation point `k`.
    pub fn weights_at(&self, k: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.n_obs];
        let row = &self.rows[k];
        w[row.start..row.start + row.weights.len()].copy_from_slice(&row.weights);
        w
    }

    /// `x_hat(t) = sum_i W_{n,i}(t) Y(t_i)` for every component at once.
    pub fn apply(&self, values: &[f64], dim: usize) -> Result<Trajectory> {
        Error::check_len("observation values", self.n_obs * dim, values.len())?;
        let mut out = vec![0.0; self.rows.len() * dim];
        for (k, row) in self.rows.iter().enumerate() {
            let dst = &mut out[k * dim..(k + 1) * dim];
            for (j, w) in row.weights.iter().enumerate() {
                let src = &values[(row.start + j) * dim..(row.start + j + 1) * dim];
                for c in 0..dim {
                    dst[c] += w * src[c];
                }
            }
        }
        Trajectory::new(self.eval_times.clone(), out, dim)
    }
}

/// Local polynomial estimate of `x(.)` at `eval_times`.
pub fn local_poly_fit(obs: &Observations, cfg: &SmootherConfig, eval_times: &[f64]) -> Result<Trajectory> {
    LocalPolyWeights::new(obs.times(), obs.horizon(), cfg, eval_times)?.apply(obs.values(), obs.dim())
}

/// Piecewise-constant replicate-mean estimator: on `(t_{i-1}, t_i]` the
/// value is the mean at `t_i` (with `t_0 = 0`), and `x_hat(0) = x_hat(t_1)`.
/// Times after `t_I` take the last mean.
pub fn step_estimator(obs: &RepeatedObservations, eval_times: &[f64]) -> Result<Trajectory> {
    if eval_times.iter().any(|&t| !(0.0..=obs.horizon()).contains(&t)) {
        return Err(Error::invalid("evaluation times must lie in [0, T]"));
    }
    let means = obs.means();
    let d = obs.dim();
    let last = obs.times().len() - 1;
    let mut out = Vec::with_capacity(eval_times.len() * d);
    for &t in eval_times {
        let i = obs.times().partition_point(|&s| s < t).min(last);
        out.extend_from_slice(&means[i * d..(i + 1) * d]);
    }
    Trajectory::new(eval_times.to_vec(), out, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{linspace, trapezoid};

    fn cfg(order: usize, b: f64) -> SmootherConfig {
        SmootherConfig::new(order, b, BandwidthScale::Normalized, epanechnikov()).unwrap()
    }

    #[test]
    fn bandwidth_rules() {
        assert!((default_bandwidth(201, None).unwrap() - 201f64.powf(-1.0 / 3.0)).abs() < 1e-15);
        assert!((default_bandwidth(201, None).unwrap() - 0.17072).abs() < 1e-5);
        assert_eq!(default_bandwidth(201, Some(1.5)).unwrap(), default_bandwidth(201, None).unwrap());
        assert!((default_bandwidth(10000, Some(2.0)).unwrap() - 0.1).abs() < 1e-15);
        assert!(default_bandwidth(100, Some(0.5)).is_err());
        assert!(default_bandwidth(1, None).is_err());
    }

    #[test]
    fn epanechnikov_values() {
        let k = epanechnikov();
        assert_eq!(k.at(0.0), 0.75);
        assert_eq!(k.at(1.2), 0.0);
        let us = linspace(-1.0, 1.0, 10_000);
        let vals: Vec<f64> = us.iter().map(|&u| k.at(u)).collect();
        assert!((trapezoid(&us, &vals) - 1.0).abs() < 1e-6);
        let rep = check_kernel(&k, 0.9, 2000);
        assert!(rep.satisfied());
        assert!(rep.k_min >= 0.75 * (1.0 - 0.81) - 1e-12);
        assert!(check_kernel(&triweight(), 0.9, 2000).satisfied());
    }

    #[test]
    fn constant_data_reproduced() {
        let times = linspace(0.0, 1.0, 41);
        let values = vec![2.5; 41 * 2];
        let obs = Observations::new(times, values, 2, 1.0).unwrap();
        for order in 0..=2 {
            let fit = local_poly_fit(&obs, &cfg(order, 0.2), &linspace(0.0, 1.0, 17)).unwrap();
            assert!(fit.values().iter().all(|v| (v - 2.5).abs() < 1e-12));
        }
    }

    #[test]
    fn linear_data_reproduced_at_boundaries() {
        let times = linspace(0.0, 3.0, 31);
        let values: Vec<f64> = times.iter().map(|t| 1.0 - 0.7 * t).collect();
        let obs = Observations::new(times, values, 1, 3.0).unwrap();
        let eval = linspace(0.0, 3.0, 25);
        let fit = local_poly_fit(&obs, &cfg(1, 0.15), &eval).unwrap();
        for (t, v) in eval.iter().zip(fit.values()) {
            assert!((v - (1.0 - 0.7 * t)).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn matches_weighted_least_squares_oracle() {
        // brute-force local normal equations: minimize sum K (y - a - c u)^2
        let times = vec![0.1, 0.2, 0.3, 0.4, 0.5];
        let ys = vec![0.3, -1.2, 0.8, 2.0, 0.1];
        let (t0, b) = (0.25, 0.3);
        let k = epanechnikov();
        let (mut s0, mut s1, mut s2, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&t, &y) in times.iter().zip(&ys) {
            let u = (t - t0) / b;
            let w = k.at(u);
            s0 += w;
            s1 += w * u;
            s2 += w * u * u;
            r0 += w * y;
            r1 += w * u * y;
        }
        let oracle = (r0 * s2 - r1 * s1) / (s0 * s2 - s1 * s1);

        let obs = Observations::new(times, ys, 1, 1.0).unwrap();
        let fit = local_poly_fit(&obs, &cfg(1, b), &[t0]).unwrap();
        assert!((fit.values()[0] - oracle).abs() < 1e-12, "{} vs {oracle}", fit.values()[0]);
    }

    #[test]
    fn too_few_points_is_singular() {
        let obs = Observations::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0, 3.0], 1, 1.0).unwrap();
        match local_poly_fit(&obs, &cfg(1, 0.1), &[0.5]) {
            Err(Error::SingularDesign { time, points }) => {
                assert_eq!(time, 0.5);
                assert_eq!(points, 1);
            }
            other => panic!("expected singular design, got {other:?}"),
        }
    }

    #[test]
    fn ties_are_allowed() {
        let obs = Observations::new(vec![0.0, 0.5, 0.5, 1.0], vec![1.0, 1.0, 3.0, 3.0], 1, 1.0).unwrap();
        let fit = local_poly_fit(&obs, &cfg(0, 0.3), &[0.5]).unwrap();
        assert!((fit.values()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn step_example() {
        let obs =
            RepeatedObservations::new(vec![0.5, 1.0], vec![vec![1.0, 0.0, 3.0, 0.0], vec![0.0, 2.0, 0.0, 4.0]], 2, 1.0)
                .unwrap();
        let fit = step_estimator(&obs, &[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let expect = [2.0, 0.0, 2.0, 0.0, 2.0, 0.0, 0.0, 3.0, 0.0, 3.0];
        assert_eq!(fit.values(), &expect);
    }

    #[test]
    fn step_rejects_empty_block() {
        let r = RepeatedObservations::new(vec![0.5, 1.0], vec![vec![1.0], vec![]], 1, 1.0);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn config_validation() {
        assert!(SmootherConfig::new(6, 0.1, BandwidthScale::Normalized, epanechnikov()).is_err());
        assert!(SmootherConfig::new(1, 1.5, BandwidthScale::Normalized, epanechnikov()).is_err());
        assert!(SmootherConfig::new(1, 1.5, BandwidthScale::Absolute, epanechnikov()).is_ok());
        assert!(SmootherConfig::new(1, 0.0, BandwidthScale::Absolute, epanechnikov()).is_err());
    }
}
