//! Derivative-free Nelder-Mead simplex search.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Stop once every vertex is within this distance of the best one.
    pub diameter_tol: f64,
    pub max_evals: usize,
    /// Relative perturbation used to build the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            diameter_tol: 1e-8,
            max_evals: 10_000,
            initial_step: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

fn diameter(simplex: &[Vec<f64>]) -> f64 {
    let best = &simplex[0];
    simplex[1..]
        .iter()
        .map(|v| v.iter().zip(best).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

fn lerp(from: &[f64], to: &[f64], s: f64) -> Vec<f64> {
    // from + s (to - from)
    from.iter().zip(to).map(|(a, b)| a + s * (b - a)).collect()
}

/// Minimizes `f` from `x0`. Non-finite objective values are treated as
/// `+inf`. Returns the best vertex even when the evaluation cap is hit.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if n == 0 {
        let value = eval(x0, &mut evals);
        return Minimum { x: vec![], value, evaluations: evals, converged: true };
    }

    let mut simplex = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] = if v[i] != 0.0 { v[i] * (1.0 + opts.initial_step) } else { 0.00025 };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    let mut converged = false;
    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if diameter(&simplex) < opts.diameter_tol {
            converged = true;
            break;
        }
        if evals >= opts.max_evals {
            break;
        }

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let reflected = lerp(&centroid, &worst, -opts.reflection);
        let f_r = eval(&reflected, &mut evals);

        if f_r < values[0] {
            let expanded = lerp(&centroid, &worst, -opts.reflection * opts.expansion);
            let f_e = eval(&expanded, &mut evals);
            if f_e < f_r {
                simplex[n] = expanded;
                values[n] = f_e;
            } else {
                simplex[n] = reflected;
                values[n] = f_r;
            }
            continue;
        }
        if f_r < values[n - 1] {
            simplex[n] = reflected;
            values[n] = f_r;
            continue;
        }
        // contraction, outside if the reflection improved on the worst vertex
        let (candidate, f_c, accept) = if f_r < values[n] {
            let c = lerp(&centroid, &reflected, opts.contraction);
            let fc = eval(&c, &mut evals);
            (c, fc, fc <= f_r)
        } else {
            let c = lerp(&centroid, &worst, opts.contraction);
            let fc = eval(&c, &mut evals);
            (c, fc, fc < values[n])
        };
        if accept {
            simplex[n] = candidate;
            values[n] = f_c;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            simplex[i] = lerp(&best, &simplex[i], opts.shrink);
            values[i] = eval(&simplex[i], &mut evals);
        }
    }
    Minimum { x: simplex[0].clone(), value: values[0], evaluations: evals, converged }
}
