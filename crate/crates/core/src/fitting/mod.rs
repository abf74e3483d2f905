//! Nonlinear least-squares analysis of computed and measured spectra:
//! shared-width Lorentzian dip combs, square-pulse resonance profiles,
//! (damped) sinusoidal nutation traces, and hyperfine-parameter extraction
//! through the exact level model.

mod hyperfine;
mod lineshapes;
mod lm;
mod synthetic;

use serde::{Deserialize, Serialize};

pub use hyperfine::{extract_hyperfine, AperpMode};
pub use lineshapes::{depths_to_populations, fit_lorentzians, fit_sinusoid, fit_square_pulse};
pub use synthetic::{gaussian_noise, with_gaussian_noise};

/// Outcome of a least-squares fit.
///
/// `params` and `param_names` align index-for-index. Uncertainties come
/// from the linearized covariance σ²·(JᵀJ)⁻¹ — with σ² estimated from the
/// residuals when the data carries no `y_err` — and are only reported for
/// converged fits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    /// Which model produced this fit.
    pub model: String,
    pub param_names: Vec<String>,
    pub params: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub std_errors: Option<Vec<f64>>,
    /// Full parameter covariance, row-major, same ordering as `params`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub covariance: Option<Vec<Vec<f64>>>,
    /// Weighted sum of squared residuals.
    pub chi2: f64,
    /// √χ² — the ℓ₂ norm of the weighted residual vector.
    pub residual_norm: f64,
    /// Data points minus parameters.
    pub dof: usize,
    pub converged: bool,
    pub n_iter: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
    /// Model values at the best-fit parameters on the input grid.
    pub fitted_y: Vec<f64>,
}

impl FitResult {
    /// Look up a parameter value by name.
    pub fn param(&self, name: &str) -> Option<f64> {
        self.param_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.params[i])
    }

    /// Look up a parameter's 1σ uncertainty by name.
    pub fn std_error(&self, name: &str) -> Option<f64> {
        let i = self.param_names.iter().position(|n| n == name)?;
        self.std_errors.as_ref().map(|e| e[i])
    }
}
