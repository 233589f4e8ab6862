use nalgebra::{DMatrix, DVector};

use super::weights::{inner_product_weighted, MatrixPath, WeightScheme};
use crate::error::{Error, Result};
use crate::linalg::{qr_solve, qr_solve_vec, rcond_from_spectrum, sym_eigen};
use crate::ode::{OdeModel, Trajectory};
use crate::quadrature::{cumulative, CumulativeRule};

/// The reciprocal condition number of `C` below which `theta` is declared
/// non-identifiable.
pub const DEFAULT_COND_THRESHOLD: f64 = 1e-10;

/// Relative eigenvalue tolerance for the numerical rank of `C`.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// `G(t) = int_0^t g(x(s)) ds` on the grid of `x`, with `G(t_0) = 0`.
pub fn compute_g(model: &OdeModel, x: &Trajectory, rule: CumulativeRule) -> Result<MatrixPath> {
    let (d, p) = (model.dim(), model.n_theta());
    Error::check_len("trajectory dimension", d, x.dim())?;
    let mut samples = Vec::with_capacity(x.len() * d * p);
    for (i, s) in x.states().enumerate() {
        let g = model.g(s)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState { time: x.times()[i] });
        }
        for r in 0..d {
            for c in 0..p {
                samples.push(g[(r, c)]);
            }
        }
    }
    let data = cumulative(x.times(), &samples, d * p, rule);
    MatrixPath::new(x.times().to_vec(), d, p, data)
}

/// `A = <I, I>_W`, `B = <I, G>_W`, `C = <G, G>_W`.
#[derive(Debug, Clone)]
pub struct DesignMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    /// `<G, x>_W` (length `p`).
    pub gx: DVector<f64>,
    /// `<I, x>_W` (length `d`).
    pub ix: DVector<f64>,
    pub cond_c: f64,
    pub grid: Vec<f64>,
}

impl DesignMatrices {
    pub fn build(x: &Trajectory, g: &MatrixPath, w: &WeightScheme) -> Result<Self> {
        if g.times() != x.times() {
            return Err(Error::invalid("G and x_hat must share one grid"));
        }
        let (d, p) = (g.rows(), g.cols());
        let pw = w.point_weights(x.times(), d)?;
        // stack [I_d, G] so one pass yields A, B and C
        let mut stacked = Vec::with_capacity(x.len() * d * (d + p));
        for i in 0..x.len() {
            let gb = g.block(i);
            for r in 0..d {
                for c in 0..d {
                    stacked.push(if r == c { 1.0 } else { 0.0 });
                }
                stacked.extend_from_slice(&gb[r * p..(r + 1) * p]);
            }
        }
        let design = MatrixPath::new(x.times().to_vec(), d, d + p, stacked)?;
        let gram = inner_product_weighted(&pw, &design, &design);
        let rhs = inner_product_weighted(&pw, &design, &MatrixPath::from_trajectory(x));
        let a = gram.view((0, 0), (d, d)).into_owned();
        let b = gram.view((0, d), (d, p)).into_owned();
        let c = gram.view((d, d), (p, p)).into_owned();
        let ix = rhs.view((0, 0), (d, 1)).column(0).into_owned();
        let gx = rhs.view((d, 0), (p, 1)).column(0).into_owned();
        let (spectrum, _) = sym_eigen(&c);
        Ok(DesignMatrices { a, b, c, gx, ix, cond_c: rcond_from_spectrum(&spectrum), grid: x.times().to_vec() })
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub weights: WeightScheme,
    pub rule: CumulativeRule,
    pub known_xi: Option<Vec<f64>>,
    pub cond_threshold: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            weights: WeightScheme::UniformLebesgue,
            rule: CumulativeRule::Trapezoid,
            known_xi: None,
            cond_threshold: DEFAULT_COND_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta: Vec<f64>,
    pub xi: Vec<f64>,
    pub nu: Option<Vec<f64>>,
    pub sigma: Option<DMatrix<f64>>,
    pub cond_c: f64,
    /// `||x_hat - xi_hat - G theta_hat||_W^2`.
    pub criterion: f64,
    /// Whether the simplex search for `nu` met its tolerance.
    pub nu_converged: Option<bool>,
    /// Mahalanobis distance `d_n(h(nu_hat), theta_hat)` achieved.
    pub nu_distance: Option<f64>,
}

fn non_identifiable(c: &DMatrix<f64>) -> Error {
    let report = IdentifiabilityReport::from_gram(c.clone());
    Error::NonIdentifiable {
        rcond: report.rcond,
        rank: report.rank,
        spectrum: report.eigenvalues,
        null_space: report.null_space,
    }
}

/// Closed-form minimizer of `||x_hat - zeta - G eta||_W^2` over
/// `(eta, zeta)`, with trapezoid `G` and default options.
pub fn fit(model: &OdeModel, xhat: &Trajectory, w: &WeightScheme, known_xi: Option<&[f64]>) -> Result<FitResult> {
    let opts = FitOptions { weights: w.clone(), known_xi: known_xi.map(<[f64]>::to_vec), ..Default::default() };
    fit_with(model, xhat, &opts)
}

pub fn fit_with(model: &OdeModel, xhat: &Trajectory, opts: &FitOptions) -> Result<FitResult> {
    let g = compute_g(model, xhat, opts.rule)?;
    fit_design(xhat, &g, opts)
}

/// Solves the two linear systems for a precomputed `G`.
pub fn fit_design(xhat: &Trajectory, g: &MatrixPath, opts: &FitOptions) -> Result<FitResult> {
    let dm = DesignMatrices::build(xhat, g, &opts.weights)?;
    let d = xhat.dim();
    if !(dm.cond_c >= opts.cond_threshold) {
        return Err(non_identifiable(&dm.c));
    }
    let c_inv_bt = qr_solve(&dm.c, &dm.b.transpose()).ok_or_else(|| non_identifiable(&dm.c))?;
    let c_inv_gx = qr_solve_vec(&dm.c, &dm.gx).ok_or_else(|| non_identifiable(&dm.c))?;

    let xi = match &opts.known_xi {
        Some(xi) => {
            Error::check_len("known xi", d, xi.len())?;
            DVector::from_column_slice(xi)
        }
        None => {
            let schur = &dm.a - &dm.b * &c_inv_bt;
            let (spec, _) = sym_eigen(&schur);
            if !(rcond_from_spectrum(&spec) >= 1e-14) {
                return Err(non_identifiable(&dm.c));
            }
            let rhs = &dm.ix - &dm.b * &c_inv_gx;
            qr_solve_vec(&schur, &rhs).ok_or_else(|| non_identifiable(&dm.c))?
        }
    };
    let theta = &c_inv_gx - &c_inv_bt * &xi;
    let criterion = criterion_value(xhat, g, &opts.weights, theta.as_slice(), xi.as_slice())?;
    Ok(FitResult {
        theta: theta.as_slice().to_vec(),
        xi: xi.as_slice().to_vec(),
        nu: None,
        sigma: None,
        cond_c: dm.cond_c,
        criterion,
        nu_converged: None,
        nu_distance: None,
    })
}

/// `||x_hat - zeta - G eta||_W^2` for arbitrary `(eta, zeta)`.
pub fn criterion_value(xhat: &Trajectory, g: &MatrixPath, w: &WeightScheme, eta: &[f64], zeta: &[f64]) -> Result<f64> {
    let (d, p) = (g.rows(), g.cols());
    Error::check_len("eta", p, eta.len())?;
    Error::check_len("zeta", d, zeta.len())?;
    let pw = w.point_weights(xhat.times(), d)?;
    let mut total = 0.0;
    for i in 0..xhat.len() {
        let gb = g.block(i);
        let x = xhat.state(i);
        for h in 0..d {
            let fitted: f64 = zeta[h] + gb[h * p..(h + 1) * p].iter().zip(eta).map(|(a, b)| a * b).sum::<f64>();
            let r = x[h] - fitted;
            total += pw[i * d + h] * r * r;
        }
    }
    Ok(total)
}

/// Spectral diagnosis of `C = <G, G>_W`.
#[derive(Debug, Clone)]
pub struct IdentifiabilityReport {
    pub rcond: f64,
    pub rank: usize,
    /// Ascending eigenvalues of `C`.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal basis of the numerical null space of `C` (empty when
    /// `C` has full rank).
    pub null_space: Vec<Vec<f64>>,
    pub c: DMatrix<f64>,
}

impl IdentifiabilityReport {
    pub fn identifiable(&self, cond_threshold: f64) -> bool {
        self.rcond >= cond_threshold && self.null_space.is_empty()
    }

    fn from_gram(c: DMatrix<f64>) -> Self {
        let (values, vectors) = sym_eigen(&c);
        let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tol = RANK_TOLERANCE * scale;
        let mut null_space = Vec::new();
        let mut rank = 0;
        for (k, &lambda) in values.iter().enumerate() {
            if lambda.abs() > tol && scale > 0.0 {
                rank += 1;
            } else {
                null_space.push(vectors.column(k).iter().copied().collect());
            }
        }
        IdentifiabilityReport { rcond: rcond_from_spectrum(&values), rank, eigenvalues: values, null_space, c }
    }
}

/// Never fails on a singular `C`; only shape errors propagate.
pub fn identifiability_report(model: &OdeModel, x: &Trajectory, w: &WeightScheme) -> Result<IdentifiabilityReport> {
    identifiability_report_with(model, x, w, CumulativeRule::Trapezoid)
}

pub fn identifiability_report_with(
    model: &OdeModel,
    x: &Trajectory,
    w: &WeightScheme,
    rule: CumulativeRule,
) -> Result<IdentifiabilityReport> {
    let g = compute_g(model, x, rule)?;
    let dm = DesignMatrices::build(x, &g, w)?;
    Ok(IdentifiabilityReport::from_gram(dm.c))
}
