use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sepode::estimator::{bootstrap_covariance, fit, invert_to_nu, FitOptions, SmoothPipeline, WeightScheme};
use sepode::experiments::{protocols, run_monte_carlo, Distribution};
use sepode::ode::{self, Trajectory};
use sepode::quadrature::linspace;
use sepode::smoothing::{epanechnikov, BandwidthScale, Observations, SmootherConfig};

/// Bootstrap covariance coded from scratch: local linear weights by direct
/// normal equations, trapezoid G and Gram, closed-form theta, with the index
/// stream drawn the same way as the library.
fn bootstrap_oracle(times: &[f64], y: &[f64], b: usize, seed: u64, bw: f64) -> f64 {
    let n = times.len();
    let k = epanechnikov();
    let smooth_at = |t: f64, ys: &[f64]| {
        let (mut s0, mut s1, mut s2, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&s, &v) in times.iter().zip(ys) {
            let u = (s - t) / bw;
            let w = k.at(u);
            s0 += w;
            s1 += w * u;
            s2 += w * u * u;
            r0 += w * v;
            r1 += w * u * v;
        }
        (r0 * s2 - r1 * s1) / (s0 * s2 - s1 * s1)
    };
    let mut grid = vec![];
    for w in times.windows(2) {
        for j in 0..4 {
            grid.push(w[0] + (w[1] - w[0]) * j as f64 / 4.0);
        }
    }
    grid.push(*times.last().unwrap());
    let theta_of = |ys: &[f64]| {
        let x: Vec<f64> = grid.iter().map(|&t| smooth_at(t, ys)).collect();
        // x' = theta x: G(t) = int_0^t x
        let mut g = vec![0.0; grid.len()];
        for i in 1..grid.len() {
            g[i] = g[i - 1] + 0.5 * (grid[i] - grid[i - 1]) * (x[i] + x[i - 1]);
        }
        let (mut a, mut bb, mut c, mut ix, mut gx) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..grid.len() {
            let w = if i == 0 {
                0.5 * (grid[1] - grid[0])
            } else if i == grid.len() - 1 {
                0.5 * (grid[i] - grid[i - 1])
            } else {
                0.5 * (grid[i + 1] - grid[i - 1])
            };
            a += w;
            bb += w * g[i];
            c += w * g[i] * g[i];
            ix += w * x[i];
            gx += w * g[i] * x[i];
        }
        let xi = (ix - bb * gx / c) / (a - bb * bb / c);
        (gx - bb * xi) / c
    };
    let fitted: Vec<f64> = times.iter().map(|&t| smooth_at(t, y)).collect();
    let mut res: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let mean = res.iter().sum::<f64>() / n as f64;
    res.iter_mut().for_each(|r| *r -= mean);
    let mut thetas = vec![];
    for r in 0..b {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let ys: Vec<f64> = (0..n).map(|i| fitted[i] + res[rng.random_range(0..n as u32) as usize]).collect();
        thetas.push(theta_of(&ys));
    }
    let m = thetas.iter().sum::<f64>() / b as f64;
    thetas.iter().map(|t| (t - m) * (t - m)).sum::<f64>() / b as f64
}

#[test]
fn bootstrap_matches_independent_oracle() {
    let times = linspace(0.0, 1.0, 20);
    let y: Vec<f64> =
        times.iter().enumerate().map(|(i, t)| (0.8 * t).exp() + 0.05 * ((i * 7 % 5) as f64 - 2.0)).collect();
    let bw = 0.3;
    let oracle = bootstrap_oracle(&times, &y, 3, 99, bw);

    let cfg = SmootherConfig::new(1, bw, BandwidthScale::Absolute, epanechnikov()).unwrap();
    let pipe = SmoothPipeline::new(&times, 1.0, 1, &cfg, 4, FitOptions::default()).unwrap();
    let obs = Observations::new(times, y, 1, 1.0).unwrap();
    let sigma = bootstrap_covariance(&ode::exponential(), &obs, &pipe, 3, 99).unwrap();
    let got = sigma[(0, 0)];
    // both sides evaluate the same formulas in a different order, so
    // agreement is to rounding rather than bit-for-bit
    assert!((got - oracle).abs() <= 1e-12 * oracle.abs().max(1e-300), "{got:e} vs {oracle:e}");
    assert!(oracle > 0.0);
}

#[test]
fn inversion_matches_grid_search() {
    let m = ode::fitzhugh_nagumo();
    let nu0 = [0.34, 0.2, 3.0];
    let mut theta = m.theta_of(&nu0).unwrap();
    let delta = [0.01, -0.004, 0.003, 0.002];
    for (t, d) in theta.iter_mut().zip(delta) {
        *t += d;
    }
    let est = invert_to_nu(&m, &theta, &DMatrix::identity(4, 4), None).unwrap();

    let dist = |nu: &[f64]| {
        let h = m.theta_of(nu).unwrap();
        h.iter().zip(&theta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    };
    // coarse-to-fine grid search at final resolution 1e-3
    let mut best = nu0.to_vec();
    for (half, step) in [(0.05, 0.005), (0.006, 0.001)] {
        let centre = best.clone();
        let steps = (2.0 * half / step) as i64;
        let mut best_val = f64::INFINITY;
        for i in 0..=steps {
            for j in 0..=steps {
                for k in 0..=steps {
                    let nu = [
                        centre[0] - half + i as f64 * step,
                        centre[1] - half + j as f64 * step,
                        centre[2] - half + k as f64 * step,
                    ];
                    let v = dist(&nu);
                    if v < best_val {
                        best_val = v;
                        best = nu.to_vec();
                    }
                }
            }
        }
    }
    for (a, b) in est.nu.iter().zip(&best) {
        assert!((a - b).abs() <= 1e-3 + 1e-9, "{:?} vs grid {:?}", est.nu, best);
    }
    assert!(est.converged);
}

#[test]
fn monte_carlo_is_thread_count_independent() {
    let cfg_fhn = protocols::fhn_grid([0.05, 0.05], 6, 10, 77).unwrap();
    let cfg_lv = protocols::lv_repeated(1, 6, Distribution::Laplace, 0.5, 20, 78).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| (run_monte_carlo(&cfg_fhn).unwrap(), run_monte_carlo(&cfg_lv).unwrap()))
    };
    let (a1, b1) = run(1);
    let (a8, b8) = run(8);
    // Debug output round-trips f64 exactly and treats NaN ARE cells alike
    assert_eq!(a1.raw, a8.raw);
    assert_eq!(format!("{a1:?}"), format!("{a8:?}"));
    assert_eq!(format!("{b1:?}"), format!("{b8:?}"));
    assert_eq!(format!("{a1:?}"), format!("{:?}", run(1).0));
}

#[test]
fn noiseless_exponential_fit() {
    let grid = linspace(0.0, 1.0, 2001);
    let vals = grid.iter().map(|t| (0.5 * t).exp()).collect();
    let x = Trajectory::new(grid, vals, 1).unwrap();
    let r = fit(&ode::exponential(), &x, &WeightScheme::UniformLebesgue, None).unwrap();
    assert!((r.theta[0] - 0.5).abs() < 1e-5 && (r.xi[0] - 1.0).abs() < 1e-5);
}
