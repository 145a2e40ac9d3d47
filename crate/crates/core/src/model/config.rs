use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prior on the per-pathway CAR dependence parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PhiPrior {
    /// Arcsine-shaped density on `(L_p, U_p)` that favours the interval ends.
    #[default]
    Beta,
    Uniform,
}

/// Finite supports for the flat priors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorBounds {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub sigma_nu2_max: f64,
    pub sigma_beta_max: f64,
}

impl Default for PriorBounds {
    fn default() -> Self {
        Self {
            alpha_min: -10.0,
            alpha_max: 10.0,
            sigma_nu2_max: 10.0,
            sigma_beta_max: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseGamma {
    pub shape: f64,
    pub scale: f64,
}

impl InverseGamma {
    pub fn ln_pdf(&self, v: f64) -> f64 {
        if !(v > 0.0) {
            return f64::NEG_INFINITY;
        }
        self.shape * self.scale.ln()
            - statrs::function::gamma::ln_gamma(self.shape)
            - (self.shape + 1.0) * v.ln()
            - self.scale / v
    }
}

/// Corrected forms used for two closed-form expressions, recorded in run manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormulaNotes {
    pub kappa_density: String,
    pub ridge_penalty: String,
    pub car_operator: String,
}

impl Default for FormulaNotes {
    fn default() -> Self {
        Self {
            kappa_density:
                "B(tau/2,1/2)^-1 s^tau k^(tau/2-1) (1-k)^(-1/2) (1-k+k s^2)^(-(tau+1)/2)".into(),
            ridge_penalty: "tau^-1 diag(k/(1-k)) = diag(1/(lambda^2 sigma_beta^2))".into(),
            car_operator: "S_p = (G_p A_p + A_p G_p)/2".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Degrees of freedom of the half Student-t local scales (global sparsity).
    pub tau: f64,
    /// Shape of the inverse-gamma(psi, psi - 1) prior on sigma2; `None` means `N T / 4`.
    pub psi: Option<f64>,
    /// Separate phi vectors for cases and controls.
    pub two_group: bool,
    /// Replace the intercept by `beta_alpha_m * y_drug` using this covariate.
    pub treatment_covariate: Option<String>,
    pub phi_prior: PhiPrior,
    pub bounds: PriorBounds,
    pub sigma_gamma2_prior: InverseGamma,
    pub formulas: FormulaNotes,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            psi: None,
            two_group: true,
            treatment_covariate: None,
            phi_prior: PhiPrior::Beta,
            bounds: PriorBounds::default(),
            sigma_gamma2_prior: InverseGamma {
                shape: 1.0,
                scale: 0.1,
            },
            formulas: FormulaNotes::default(),
        }
    }
}

impl ModelConfig {
    pub fn with_tau(tau: f64) -> Self {
        Self {
            tau,
            ..Self::default()
        }
    }

    /// Fills in `psi` from the data dimensions and validates every field.
    pub fn resolve(&self, n_subjects: usize, n_times: usize) -> Result<ModelConfig> {
        let mut cfg = self.clone();
        let psi = cfg.psi.unwrap_or((n_subjects * n_times) as f64 / 4.0);
        cfg.psi = Some(psi);
        if !(cfg.tau > 0.0 && cfg.tau.is_finite()) {
            return Err(Error::Config(format!(
                "tau must be positive, got {}",
                cfg.tau
            )));
        }
        if !(psi > 1.0 && psi.is_finite()) {
            return Err(Error::Config(format!(
                "psi must exceed 1 (got {psi}); set it explicitly for N*T <= 4"
            )));
        }
        let b = &cfg.bounds;
        if !(b.alpha_min < b.alpha_max && b.sigma_nu2_max > 0.0 && b.sigma_beta_max > 0.0) {
            return Err(Error::Config(format!("invalid prior bounds {b:?}")));
        }
        let ig = &cfg.sigma_gamma2_prior;
        if !(ig.shape > 0.0 && ig.scale > 0.0) {
            return Err(Error::Config(format!("invalid sigma_gamma2 prior {ig:?}")));
        }
        Ok(cfg)
    }

    pub(crate) fn psi_value(&self) -> f64 {
        self.psi.expect("config resolved before use")
    }
}
