//! Separable ODE models `x' = g(x) theta`, `theta = h(nu)`, a fixed-step
//! reference solver, and the benchmark systems.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `g: R^d -> R^{d x p}`.
pub type MatrixField = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
/// A map between parameter spaces (`h` or its inverse).
pub type ParamMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A model whose right-hand side is linear in the natural parameter
/// `theta = h(nu)`.
#[derive(Clone)]
pub struct OdeModel {
    name: String,
    dim: usize,
    n_theta: usize,
    n_nu: usize,
    g: MatrixField,
    link: Option<(ParamMap, Option<ParamMap>)>,
    nu_names: Vec<String>,
}

impl fmt::Debug for OdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdeModel")
            .field("name", &self.name)
            .field("d", &self.dim)
            .field("p", &self.n_theta)
            .field("q", &self.n_nu)
            .field("identity_link", &self.link.is_none())
            .finish()
    }
}

impl OdeModel {
    /// A model with `h = identity` (so `q = p`).
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        n_theta: usize,
        g: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        assert!(dim > 0 && n_theta > 0, "model dimensions must be positive");
        OdeModel {
            name: name.into(),
            dim,
            n_theta,
            n_nu: n_theta,
            g: Arc::new(g),
            link: None,
            nu_names: (1..=n_theta).map(|k| format!("theta{k}")).collect(),
        }
    }

    /// Replaces the identity link by `theta = h(nu)` with `nu` in `R^q`.
    pub fn with_link(
        mut self,
        n_nu: usize,
        h: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        h_inverse: Option<ParamMap>,
    ) -> Self {
        assert!(n_nu > 0 && n_nu <= self.n_theta, "need 0 < q <= p");
        self.n_nu = n_nu;
        self.link = Some((Arc::new(h), h_inverse));
        self.nu_names = (1..=n_nu).map(|k| format!("nu{k}")).collect();
        self
    }

    pub fn with_nu_names(mut self, names: &[&str]) -> Self {
        assert_eq!(names.len(), self.n_nu);
        self.nu_names = names.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    /// State dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }
    /// Natural parameter dimension `p`.
    pub fn n_theta(&self) -> usize {
        self.n_theta
    }
    /// Interest parameter dimension `q`.
    pub fn n_nu(&self) -> usize {
        self.n_nu
    }
    pub fn nu_names(&self) -> &[String] {
        &self.nu_names
    }
    pub fn has_identity_link(&self) -> bool {
        self.link.is_none()
    }
    pub fn has_inverse(&self) -> bool {
        match &self.link {
            None => true,
            Some((_, inv)) => inv.is_some(),
        }
    }

    /// Evaluates `g(x)`, checking both the input and the returned shape.
    pub fn g(&self, state: &[f64]) -> Result<DMatrix<f64>> {
        Error::check_len("state", self.dim, state.len())?;
        let m = (self.g)(state);
        Error::check_len("g rows", self.dim, m.nrows())?;
        Error::check_len("g columns", self.n_theta, m.ncols())?;
        Ok(m)
    }

    /// `theta = h(nu)`.
    pub fn theta_of(&self, nu: &[f64]) -> Result<Vec<f64>> {
        Error::check_len("nu", self.n_nu, nu.len())?;
        let theta = match &self.link {
            None => nu.to_vec(),
            Some((h, _)) => h(nu),
        };
        Error::check_len("h(nu)", self.n_theta, theta.len())?;
        Ok(theta)
    }

    /// One-sided inverse of `h` when the model provides one.
    pub fn nu_of(&self, theta: &[f64]) -> Option<Vec<f64>> {
        if theta.len() != self.n_theta {
            return None;
        }
        match &self.link {
            None => Some(theta.to_vec()),
            Some((_, Some(inv))) => Some(inv(theta)),
            Some((_, None)) => None,
        }
    }
}

/// A sampled vector-valued path on a strictly increasing grid. Values are
/// stored row-major, one state per time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    values: Vec<f64>,
    dim: usize,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("trajectory dimension must be positive"));
        }
        Error::check_len("trajectory values", times.len() * dim, values.len())?;
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("trajectory times must be strictly increasing"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidState { time: times[i / dim] });
        }
        Ok(Trajectory { times, values, dim })
    }

    pub fn from_states(times: Vec<f64>, states: &[Vec<f64>]) -> Result<Self> {
        let dim = states.first().map(|s| s.len()).unwrap_or(1);
        let values = states.iter().flatten().copied().collect();
        Self::new(times, values, dim)
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
        self.times.last().copied().unwrap_or(0.0)
    }
    pub fn state(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }
    /// Component `k` over the whole grid.
    pub fn component(&self, k: usize) -> Vec<f64> {
        self.states().map(|s| s[k]).collect()
    }
}

/// `g(state) theta`.
pub fn eval_rhs(model: &OdeModel, state: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    Error::check_len("theta", model.n_theta(), theta.len())?;
    let g = model.g(state)?;
    Ok((g * DVector::from_column_slice(theta)).as_slice().to_vec())
}

/// Minimum internal RK4 steps per output interval used by [`solve_ode`].
pub const DEFAULT_SUBSTEPS: usize = 8;

/// Largest internal step [`solve_ode`] takes on coarse grids.
pub const MAX_INTERNAL_STEP: f64 = 0.01;

/// Classical fourth-order Runge-Kutta on `grid` (which must start at 0).
/// Each grid interval is split into at least [`DEFAULT_SUBSTEPS`] equal
/// steps, and more when needed to keep them below [`MAX_INTERNAL_STEP`].
pub fn solve_ode(model: &OdeModel, theta: &[f64], xi: &[f64], grid: &[f64]) -> Result<Trajectory> {
    integrate(model, theta, xi, grid, |dt| DEFAULT_SUBSTEPS.max((dt / MAX_INTERNAL_STEP).ceil() as usize))
}

/// RK4 with exactly `substeps` internal steps per grid interval.
pub fn solve_ode_with(
    model: &OdeModel,
    theta: &[f64],
    xi: &[f64],
    grid: &[f64],
    substeps: usize,
) -> Result<Trajectory> {
    if substeps == 0 {
        return Err(Error::invalid("substeps must be positive"));
    }
    integrate(model, theta, xi, grid, |_| substeps)
}

fn integrate(
    model: &OdeModel,
    theta: &[f64],
    xi: &[f64],
    grid: &[f64],
    substeps_for: impl Fn(f64) -> usize,
) -> Result<Trajectory> {
    let d = model.dim();
    Error::check_len("theta", model.n_theta(), theta.len())?;
    Error::check_len("xi", d, xi.len())?;
    if grid.is_empty() || grid[0] != 0.0 {
        return Err(Error::invalid("solver grid must start at t = 0"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("solver grid steps must be positive"));
    }
    let theta = DVector::from_column_slice(theta);
    let rhs = |x: &DVector<f64>| -> DVector<f64> { (model.g)(x.as_slice()) * &theta };

    let mut values = Vec::with_capacity(grid.len() * d);
    let mut x = DVector::from_column_slice(xi);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolverDivergence { time: 0.0 });
    }
    values.extend_from_slice(x.as_slice());
    for w in grid.windows(2) {
        let substeps = substeps_for(w[1] - w[0]);
        let h = (w[1] - w[0]) / substeps as f64;
        for s in 0..substeps {
            let k1 = rhs(&x);
            let k2 = rhs(&(&x + &k1 * (0.5 * h)));
            let k3 = rhs(&(&x + &k2 * (0.5 * h)));
            let k4 = rhs(&(&x + &k3 * h));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::SolverDivergence { time: w[0] + h * (s + 1) as f64 });
            }
        }
        values.extend_from_slice(x.as_slice());
    }
    Trajectory::new(grid.to_vec(), values, d)
}

/// FitzHugh-Nagumo, `x1' = gamma (x1 - x1^3 + x2)`,
/// `x2' = -(x1 - alpha + beta x2) / gamma`, with
/// `theta = (gamma, 1/gamma, alpha/gamma, beta/gamma)`.
pub fn fitzhugh_nagumo() -> OdeModel {
    fhn_family("fitzhugh-nagumo", 1.0)
}

/// The variant with cubic term `x1^3 / 3` and `nu = (a, b, c)`.
pub fn fitzhugh_nagumo_cubic_third() -> OdeModel {
    fhn_family("fitzhugh-nagumo-cubic-third", 1.0 / 3.0).with_nu_names(&["a", "b", "c"])
}

fn fhn_family(name: &str, cubic: f64) -> OdeModel {
    OdeModel::new(name, 2, 4, move |x: &[f64]| {
        DMatrix::from_row_slice(2, 4, &[x[0] - cubic * x[0].powi(3) + x[1], 0.0, 0.0, 0.0, 0.0, -x[0], 1.0, -x[1]])
    })
    .with_link(
        3,
        |nu: &[f64]| {
            let (alpha, beta, gamma) = (nu[0], nu[1], nu[2]);
            vec![gamma, 1.0 / gamma, alpha / gamma, beta / gamma]
        },
        // used to seed the Mahalanobis search from theta_hat
        Some(Arc::new(|t: &[f64]| vec![t[0] * t[2], t[0] * t[3], t[0]])),
    )
    .with_nu_names(&["alpha", "beta", "gamma"])
}

/// Lotka-Volterra predator-prey, `x1' = t1 x1 - t2 x1 x2`,
/// `x2' = -t3 x2 + t4 x1 x2`, identity link.
pub fn lotka_volterra() -> OdeModel {
    OdeModel::new("lotka-volterra", 2, 4, |x: &[f64]| {
        DMatrix::from_row_slice(2, 4, &[x[0], -x[0] * x[1], 0.0, 0.0, 0.0, 0.0, -x[1], x[0] * x[1]])
    })
}

/// `x' = theta x`.
pub fn exponential() -> OdeModel {
    OdeModel::new("exponential", 1, 1, |x: &[f64]| DMatrix::from_element(1, 1, x[0]))
}

/// `x' = (theta1 + theta2) x`: the two columns of `g` coincide, so only the
/// sum is identifiable.
pub fn duplicated_column() -> OdeModel {
    OdeModel::new("duplicated-column", 1, 2, |x: &[f64]| DMatrix::from_row_slice(1, 2, &[x[0], x[0]]))
}

/// Looks up a model by the name used in configuration files.
pub fn builtin(name: &str) -> Option<OdeModel> {
    match name {
        "fitzhugh-nagumo" => Some(fitzhugh_nagumo()),
        "fitzhugh-nagumo-cubic-third" => Some(fitzhugh_nagumo_cubic_third()),
        "lotka-volterra" => Some(lotka_volterra()),
        "exponential" => Some(exponential()),
        "duplicated-column" => Some(duplicated_column()),
        _ => None,
    }
}

pub const BUILTIN_NAMES: &[&str] =
    &["fitzhugh-nagumo", "fitzhugh-nagumo-cubic-third", "lotka-volterra", "exponential", "duplicated-column"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::linspace;

    #[test]
    fn lv_rhs_example() {
        let m = lotka_volterra();
        let r = eval_rhs(&m, &[1.0, 0.5], &[0.5; 4]).unwrap();
        assert!((r[0] - 0.25).abs() < 1e-15 && r[1].abs() < 1e-15);
        assert_eq!(eval_rhs(&m, &[1.0, 0.5], &[0.0; 4]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn fhn_rhs_example() {
        let m = fitzhugh_nagumo();
        let theta = m.theta_of(&[0.34, 0.2, 3.0]).unwrap();
        let r = eval_rhs(&m, &[0.0, 0.1], &theta).unwrap();
        // direct coding of the two FHN equations
        let (a, b, c) = (0.34, 0.2, 3.0);
        let (x1, x2): (f64, f64) = (0.0, 0.1);
        let direct = [c * (x1 - x1.powi(3) + x2), -(x1 - a + b * x2) / c];
        assert!((r[0] - 0.3).abs() < 1e-14);
        assert!((r[1] - 0.32 / 3.0).abs() < 1e-14);
        assert!((r[0] - direct[0]).abs() < 1e-14 && (r[1] - direct[1]).abs() < 1e-14);
    }

    #[test]
    fn rhs_dimension_errors_name_the_dimension() {
        let m = lotka_volterra();
        match eval_rhs(&m, &[1.0], &[0.5; 4]) {
            Err(Error::DimensionMismatch { what, expected: 2, got: 1 }) => assert_eq!(what, "state"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(eval_rhs(&m, &[1.0, 1.0], &[0.5; 3]), Err(Error::DimensionMismatch { what: "theta", .. })));
    }

    #[test]
    fn fhn_link_and_inverse() {
        let m = fitzhugh_nagumo();
        let t = m.theta_of(&[0.34, 0.2, 3.0]).unwrap();
        let expect = [3.0, 1.0 / 3.0, 0.34 / 3.0, 0.2 / 3.0];
        for (a, b) in t.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let nu = m.nu_of(&t).unwrap();
        for (a, b) in nu.iter().zip([0.34, 0.2, 3.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn lv_g_example() {
        let g = lotka_volterra().g(&[1.0, 0.5]).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 4, &[1.0, -0.5, 0.0, 0.0, 0.0, 0.0, -0.5, 0.5]));
    }

    #[test]
    fn exponential_solution() {
        let traj = solve_ode(&exponential(), &[1.0], &[1.0], &[0.0, 0.5, 1.0]).unwrap();
        for (t, v) in traj.times().iter().zip(traj.values()) {
            assert!((v - t.exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_theta_is_constant() {
        let grid = linspace(0.0, 5.0, 11);
        let traj = solve_ode(&lotka_volterra(), &[0.0; 4], &[1.3, 0.2], &grid).unwrap();
        for s in traj.states() {
            assert_eq!(s, &[1.3, 0.2]);
        }
    }

    #[test]
    fn lv_first_integral_conserved() {
        let grid = linspace(0.0, 14.9, 1491);
        let traj = solve_ode(&lotka_volterra(), &[0.5; 4], &[1.0, 0.5], &grid).unwrap();
        let v = |s: &[f64]| 0.5 * s[0] - 0.5 * s[0].ln() + 0.5 * s[1] - 0.5 * s[1].ln();
        let v0 = v(traj.state(0));
        let drift = traj.states().map(|s| (v(s) - v0).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-6, "drift {drift}");
    }

    #[test]
    fn rk4_fourth_order() {
        for theta in [-1.0, 0.5, 2.0] {
            let grid = linspace(0.0, 1.0, 11);
            let err = |sub: usize| {
                let traj = solve_ode_with(&exponential(), &[theta], &[1.0], &grid, sub).unwrap();
                traj.times().iter().zip(traj.values()).map(|(t, v)| (v - (theta * t).exp()).abs()).fold(0.0, f64::max)
            };
            let ratio = err(2) / err(4);
            assert!((12.0..=20.0).contains(&ratio), "theta {theta}: ratio {ratio}");
        }
    }

    #[test]
    fn divergence_reports_time() {
        // x' = x^2 style blow-up via exponential with huge rate
        let m = OdeModel::new("blowup", 1, 1, |x: &[f64]| DMatrix::from_element(1, 1, x[0] * x[0]));
        let grid = linspace(0.0, 2.0, 21);
        match solve_ode(&m, &[1.0], &[1.0], &grid) {
            Err(Error::SolverDivergence { time }) => assert!(time > 0.9 && time <= 2.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn grid_must_start_at_zero() {
        assert!(solve_ode(&exponential(), &[1.0], &[1.0], &[0.1, 0.2]).is_err());
    }
}
