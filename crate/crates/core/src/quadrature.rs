//! Composite quadrature on arbitrary (non-uniform) grids.

/// Composite trapezoid weights: `sum_i w_i f(t_i)` approximates
/// `int_{t_0}^{t_last} f`.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; grid.len()];
    for (i, pair) in grid.windows(2).enumerate() {
        let half = 0.5 * (pair[1] - pair[0]);
        w[i] += half;
        w[i + 1] += half;
    }
    w
}

pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    assert_eq!(grid.len(), values.len());
    grid.windows(2).zip(values.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

/// How a cumulative integral `int_0^t f` is accumulated between grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CumulativeRule {
    /// Composite trapezoid, second order for smooth integrands.
    #[default]
    Trapezoid,
    /// `F(t_i) = F(t_{i-1}) + (t_i - t_{i-1}) f(t_i)`. Exact when `f` is
    /// constant on every `(t_{i-1}, t_i]`, which is the case for the
    /// replicate-mean step estimator evaluated at its breakpoints.
    RightRectangle,
}

/// Cumulative integral of a vector-valued sample path. `samples` holds one
/// block of `width` values per grid point; the output has the same layout and
/// starts at zero.
pub fn cumulative(grid: &[f64], samples: &[f64], width: usize, rule: CumulativeRule) -> Vec<f64> {
    assert_eq!(samples.len(), grid.len() * width);
    let mut out = vec![0.0; samples.len()];
    for i in 1..grid.len() {
        let dt = grid[i] - grid[i - 1];
        let (done, rest) = out.split_at_mut(i * width);
        let prev = &done[(i - 1) * width..];
        let cur = &mut rest[..width];
        let a = &samples[(i - 1) * width..i * width];
        let b = &samples[i * width..(i + 1) * width];
        for k in 0..width {
            cur[k] = prev[k]
                + match rule {
                    CumulativeRule::Trapezoid => 0.5 * dt * (a[k] + b[k]),
                    CumulativeRule::RightRectangle => dt * b[k],
                };
        }
    }
    out
}

/// Uniform subdivision of each grid interval into `factor` pieces.
pub fn refine(grid: &[f64], factor: usize) -> Vec<f64> {
    let factor = factor.max(1);
    if grid.len() < 2 {
        return grid.to_vec();
    }
    let mut out = Vec::with_capacity((grid.len() - 1) * factor + 1);
    for pair in grid.windows(2) {
        for k in 0..factor {
            out.push(pair[0] + (pair[1] - pair[0]) * k as f64 / factor as f64);
        }
    }
    out.push(*grid.last().unwrap());
    out
}

/// `n` equispaced points covering `[start, end]` inclusive.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => (0..n).map(|i| if i == n - 1 { end } else { start + (end - start) * i as f64 / (n - 1) as f64 }).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let grid = [0.0, 0.3, 0.35, 1.0];
        let v: Vec<f64> = grid.iter().map(|t| 2.0 * t + 1.0).collect();
        assert!((trapezoid(&grid, &v) - 2.0).abs() < 1e-15);
        let w = trapezoid_weights(&grid);
        let s: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((s - 2.0).abs() < 1e-15);
    }

    #[test]
    fn right_rectangle_is_exact_for_left_continuous_steps() {
        // f = 1 on (0, 1], 3 on (1, 2]
        let grid = [0.0, 1.0, 2.0];
        let samples = [1.0, 1.0, 3.0];
        let c = cumulative(&grid, &samples, 1, CumulativeRule::RightRectangle);
        assert_eq!(c, vec![0.0, 1.0, 4.0]);
    }

    #[test]
    fn refine_keeps_endpoints() {
        let r = refine(&[0.0, 1.0, 3.0], 4);
        assert_eq!(r.len(), 9);
        assert_eq!(r[4], 1.0);
        assert_eq!(r[8], 3.0);
        assert!((r[6] - 2.0).abs() < 1e-15);
    }
}
