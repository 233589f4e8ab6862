use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::sym_eigen;
use crate::ode::OdeModel;
use crate::optim::{nelder_mead, NelderMeadOptions};

/// Relative eigenvalue floor applied to `Sigma` before inversion.
pub const SIGMA_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct NuEstimate {
    pub nu: Vec<f64>,
    /// `d_n(h(nu), theta_hat)` at the returned point.
    pub distance: f64,
    pub converged: bool,
    pub evaluations: usize,
}

/// Whitening map `x -> Lambda^{-1/2} V^T x` for the floored `Sigma`, so
/// that `d(x, y) = |L (x - y)|`.
#[derive(Debug, Clone)]
pub struct Mahalanobis {
    whiten: DMatrix<f64>,
}

impl Mahalanobis {
    /// Rejects non-square, non-symmetric or indefinite `Sigma`. A zero
    /// `Sigma` (no sampling noise at all) falls back to the Euclidean metric.
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        let p = sigma.nrows();
        if sigma.ncols() != p || p == 0 {
            return Err(Error::invalid("Sigma must be a non-empty square matrix"));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("Sigma has non-finite entries"));
        }
        let scale = sigma.abs().max();
        if (sigma - sigma.transpose()).abs().max() > 1e-10 * scale.max(1.0) {
            return Err(Error::invalid("Sigma is not symmetric"));
        }
        let (values, vectors) = sym_eigen(sigma);
        let top = values.last().copied().unwrap_or(0.0);
        if values[0] < -1e-10 * top.max(f64::MIN_POSITIVE) {
            return Err(Error::invalid(format!("Sigma is not positive semidefinite (eigenvalue {:e})", values[0])));
        }
        let trace: f64 = sigma.diagonal().sum();
        if !(trace > 0.0) {
            return Ok(Mahalanobis { whiten: DMatrix::identity(p, p) });
        }
        let floor = SIGMA_FLOOR * trace / p as f64;
        let mut whiten = vectors.transpose();
        for (k, &lambda) in values.iter().enumerate() {
            let s = 1.0 / lambda.max(floor).sqrt();
            whiten.row_mut(k).scale_mut(s);
        }
        Ok(Mahalanobis { whiten })
    }

    pub fn identity(p: usize) -> Self {
        Mahalanobis { whiten: DMatrix::identity(p, p) }
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let p = self.whiten.ncols();
        let mut total = 0.0;
        for r in 0..p {
            let mut s = 0.0;
            for c in 0..p {
                s += self.whiten[(r, c)] * (x[c] - y[c]);
            }
            total += s * s;
        }
        total.sqrt()
    }
}

/// Minimizes `nu -> d_n(h(nu), theta_hat)` by simplex search. With an
/// identity link the answer is `theta_hat` itself. Without `initial`, the
/// model's `h` inverse supplies the starting point.
pub fn invert_to_nu(
    model: &OdeModel,
    theta_hat: &[f64],
    sigma: &DMatrix<f64>,
    initial: Option<&[f64]>,
) -> Result<NuEstimate> {
    invert_to_nu_with(model, theta_hat, sigma, initial, &NelderMeadOptions::default())
}

pub fn invert_to_nu_with(
    model: &OdeModel,
    theta_hat: &[f64],
    sigma: &DMatrix<f64>,
    initial: Option<&[f64]>,
    opts: &NelderMeadOptions,
) -> Result<NuEstimate> {
    let p = model.n_theta();
    Error::check_len("theta_hat", p, theta_hat.len())?;
    Error::check_len("Sigma rows", p, sigma.nrows())?;
    let metric = Mahalanobis::new(sigma)?;
    if model.has_identity_link() {
        return Ok(NuEstimate { nu: theta_hat.to_vec(), distance: 0.0, converged: true, evaluations: 0 });
    }
    let start = match initial {
        Some(x) => x.to_vec(),
        None => model
            .nu_of(theta_hat)
            .ok_or_else(|| Error::invalid("no initial nu given and the model has no h inverse"))?,
    };
    Error::check_len("initial nu", model.n_nu(), start.len())?;
    if start.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("initial nu must be finite"));
    }
    let objective = |nu: &[f64]| match model.theta_of(nu) {
        Ok(theta) => metric.distance(&theta, theta_hat),
        Err(_) => f64::INFINITY,
    };
    let m = nelder_mead(objective, &start, opts);
    Ok(NuEstimate { nu: m.x, distance: m.value, converged: m.converged, evaluations: m.evaluations })
}
