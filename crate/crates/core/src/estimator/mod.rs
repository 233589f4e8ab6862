//! The direct integral estimator: weighted semi-inner products, the design
//! matrices, the closed-form `(theta_hat, xi_hat)`, identifiability
//! diagnostics, residual bootstrap covariance, and inversion to `nu`.

mod bootstrap;
mod design;
mod invert;
mod weights;

pub use bootstrap::{
    bootstrap_covariance, bootstrap_sample, centered_residuals, evaluation_grid, mahalanobis, outer_covariance,
    resample_indices, SmoothPipeline, DEFAULT_REFINE,
};
pub use design::{
    compute_g, criterion_value, fit, fit_design, fit_with, identifiability_report, identifiability_report_with,
    DesignMatrices, FitOptions, FitResult, IdentifiabilityReport, DEFAULT_COND_THRESHOLD, RANK_TOLERANCE,
};
pub use invert::{invert_to_nu, invert_to_nu_with, Mahalanobis, NuEstimate, SIGMA_FLOOR};
pub use weights::{inner_product, MatrixPath, WeightScheme};
