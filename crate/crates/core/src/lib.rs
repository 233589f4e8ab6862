//! Direct integral estimation for ODE systems of the form
//! `x'(t) = g(x(t)) h(nu)`.
//!
//! The workflow has two steps. Noisy observations are first smoothed into a
//! trajectory estimate `x_hat` (local polynomials, or replicate means on a
//! repeated-measures design). The integrated system
//! `x(t) = xi + G(t) theta` with `G(t) = int_0^t g(x(s)) ds` is then matched
//! to `x_hat` in a weighted seminorm, which is a linear least-squares problem
//! with a closed-form solution for `(theta, xi)`. The parameter of interest
//! `nu` is recovered by minimizing a Mahalanobis distance between `h(nu)` and
//! `theta_hat`.
//!
//! ```
//! use sepode::ode::{self, solve_ode};
//! use sepode::estimator::{fit, WeightScheme};
//!
//! let model = ode::lotka_volterra();
//! let theta = [0.5, 0.5, 0.5, 0.5];
//! let grid: Vec<f64> = (0..=2000).map(|i| 14.9 * i as f64 / 2000.0).collect();
//! let truth = solve_ode(&model, &theta, &[1.0, 0.5], &grid).unwrap();
//! let result = fit(&model, &truth, &WeightScheme::UniformLebesgue, None).unwrap();
//! assert!((result.theta[0] - 0.5).abs() < 1e-3);
//! ```

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod experiments;
pub mod linalg;
pub mod ode;
pub mod optim;
mod par;
pub mod quadrature;
pub mod smoothing;

pub use error::{Error, Result};
