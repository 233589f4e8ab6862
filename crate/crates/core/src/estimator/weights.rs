use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ode::Trajectory;
use crate::quadrature::trapezoid_weights;

/// Diagonal matrix of measures `W` defining `<x, y>_W = int x^T dW y`,
/// discretized on an evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightScheme {
    /// `W = I_d` times Lebesgue measure on the grid span, integrated by
    /// composite trapezoid.
    UniformLebesgue,
    /// Point masses at the grid points, shared by all components.
    Discrete(Vec<f64>),
    /// `W_hh` has density `densities[h]` (sampled on the grid) with respect
    /// to Lebesgue measure.
    Density(Vec<Vec<f64>>),
}

impl WeightScheme {
    /// Per-point, per-component quadrature weights (`grid.len() * d`,
    /// row-major).
    pub fn point_weights(&self, grid: &[f64], d: usize) -> Result<Vec<f64>> {
        let m = grid.len();
        let out = match self {
            WeightScheme::UniformLebesgue => {
                trapezoid_weights(grid).into_iter().flat_map(|w| std::iter::repeat_n(w, d)).collect()
            }
            WeightScheme::Discrete(w) => {
                Error::check_len("discrete weights", m, w.len())?;
                w.iter().flat_map(|&w| std::iter::repeat_n(w, d)).collect()
            }
            WeightScheme::Density(dens) => {
                Error::check_len("density components", d, dens.len())?;
                let tw = trapezoid_weights(grid);
                let mut out = vec![0.0; m * d];
                for (h, dh) in dens.iter().enumerate() {
                    Error::check_len("density samples", m, dh.len())?;
                    // 0 must be in the support of every W_hh
                    if m > 1 && dh[0] <= 0.0 && dh[1] <= 0.0 {
                        return Err(Error::invalid(format!("density {h} vanishes near t = 0")));
                    }
                    for i in 0..m {
                        out[i * d + h] = tw[i] * dh[i];
                    }
                }
                out
            }
        };
        if out.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weight measures must be finite and nonnegative"));
        }
        for h in 0..d {
            let mass: f64 = out.iter().skip(h).step_by(d).sum();
            if !(mass > 0.0) {
                return Err(Error::invalid(format!("component {h} of W has zero mass")));
            }
        }
        Ok(out)
    }
}

/// A matrix-valued function sampled on a grid: one `rows x cols` block per
/// grid point, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPath {
    times: Vec<f64>,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatrixPath {
    pub fn new(times: Vec<f64>, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Error::check_len("matrix path data", times.len() * rows * cols, data.len())?;
        Ok(MatrixPath { times, rows, cols, data })
    }

    pub fn from_trajectory(x: &Trajectory) -> Self {
        MatrixPath { times: x.times().to_vec(), rows: x.dim(), cols: 1, data: x.values().to_vec() }
    }

    /// The constant path `I_d`.
    pub fn identity(times: &[f64], d: usize) -> Self {
        let mut data = vec![0.0; times.len() * d * d];
        for block in data.chunks_exact_mut(d * d) {
            for h in 0..d {
                block[h * d + h] = 1.0;
            }
        }
        MatrixPath { times: times.to_vec(), rows: d, cols: d, data }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn at(&self, i: usize) -> DMatrix<f64> {
        let n = self.rows * self.cols;
        DMatrix::from_row_slice(self.rows, self.cols, &self.data[i * n..(i + 1) * n])
    }
    pub fn block(&self, i: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.data[i * n..(i + 1) * n]
    }
}

/// `<f, g>_W` as the `k x l` matrix of inner products of the columns of `f`
/// (`d x k`) and `g` (`d x l`).
pub fn inner_product(w: &WeightScheme, f: &MatrixPath, g: &MatrixPath) -> Result<DMatrix<f64>> {
    if f.times != g.times {
        return Err(Error::invalid("inner product of paths on different grids"));
    }
    Error::check_len("path rows", f.rows, g.rows)?;
    let d = f.rows;
    let pw = w.point_weights(&f.times, d)?;
    Ok(inner_product_weighted(&pw, f, g))
}

pub(crate) fn inner_product_weighted(pw: &[f64], f: &MatrixPath, g: &MatrixPath) -> DMatrix<f64> {
    let (d, k, l) = (f.rows, f.cols, g.cols);
    let mut out = DMatrix::zeros(k, l);
    for i in 0..f.times.len() {
        let fb = f.block(i);
        let gb = g.block(i);
        for h in 0..d {
            let w = pw[i * d + h];
            if w == 0.0 {
                continue;
            }
            for a in 0..k {
                let fa = w * fb[h * k + a];
                if fa == 0.0 {
                    continue;
                }
                for b in 0..l {
                    out[(a, b)] += fa * gb[h * l + b];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::linspace;

    fn scalar_path(times: &[f64], f: impl Fn(f64) -> f64) -> MatrixPath {
        MatrixPath::new(times.to_vec(), 1, 1, times.iter().map(|&t| f(t)).collect()).unwrap()
    }

    #[test]
    fn lebesgue_t_times_t_squared() {
        let grid = linspace(0.0, 1.0, 201);
        let ip =
            inner_product(&WeightScheme::UniformLebesgue, &scalar_path(&grid, |t| t), &scalar_path(&grid, |t| t * t))
                .unwrap();
        assert!((ip[(0, 0)] - 0.25).abs() < 2e-4);
    }

    #[test]
    fn identity_gram_is_total_mass() {
        let grid = linspace(0.0, 1.0, 11);
        let id = MatrixPath::identity(&grid, 3);
        let a = inner_product(&WeightScheme::UniformLebesgue, &id, &id).unwrap();
        assert!((a - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-14);
    }

    #[test]
    fn discrete_example() {
        let grid = vec![0.3, 0.8];
        let data: Vec<f64> = grid.iter().flat_map(|&t| [t, 2.0 * t]).collect();
        let f = MatrixPath::new(grid.clone(), 2, 1, data).unwrap();
        let ip = inner_product(&WeightScheme::Discrete(vec![0.5, 0.5]), &f, &f).unwrap();
        assert!((ip[(0, 0)] - 1.825).abs() < 1e-14);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let a = scalar_path(&[0.0, 1.0], |t| t);
        let b = scalar_path(&[0.0, 0.5], |t| t);
        assert!(matches!(inner_product(&WeightScheme::UniformLebesgue, &a, &b), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn negative_or_massless_weights_rejected() {
        let a = scalar_path(&[0.0, 1.0], |t| t);
        assert!(inner_product(&WeightScheme::Discrete(vec![-1.0, 2.0]), &a, &a).is_err());
        assert!(inner_product(&WeightScheme::Discrete(vec![0.0, 0.0]), &a, &a).is_err());
        assert!(inner_product(&WeightScheme::Density(vec![vec![0.0, 0.0]]), &a, &a).is_err());
        assert!(inner_product(&WeightScheme::Density(vec![vec![1.0, 2.0]]), &a, &a).is_ok());
    }
}
