//! The hierarchical model: CAR observation density, mixed effects with AR(1) temporal
//! terms, and horseshoe-type shrinkage on cross-omic coefficients.
//!
//! ```text
//! x_it | mu_it        ~ N(mu_it, (I - C(phi^e(i)))^{-1} sigma2)
//! mu_itm              = alpha_m + gamma_im + y_it . beta_m + nu_itm
//! beta_mk | lambda    ~ N(0, lambda_mk^2 sigma_beta_m^2)
//! lambda_mk           ~ St+(tau, 0, 1)
//! gamma_im            ~ N(0, sigma_gamma2_m)
//! nu_itm | nu_i,t-1,m ~ N(theta_m nu_i,t-1,m, sigma_nu2_m),  nu_i1m ~ N(0, sigma_nu2_m / (1 - theta_m^2))
//! ```

mod config;
mod params;
pub mod shrinkage;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use ndarray::{Array2, Array3, Axis};
use statrs::function::gamma::ln_gamma;

pub use config::{FormulaNotes, InverseGamma, ModelConfig, PhiPrior, PriorBounds};
pub use params::{Dims, Layout, ParameterState};
pub use shrinkage::{calibrate_tau, conditional_beta_mean, expected_kappa, kappa, kappa_density};

use crate::car::{logdet_gradient_from_inverse, CarFactor, PathwayDesign};
use crate::data::{Dataset, Group};
use crate::error::{Error, Result};
use crate::sampler::Target;
use params::{ln_logistic_jacobian, logistic, untransform_into, BETA_SCALE_POWER};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Dataset, pathway design and resolved configuration bound together.
#[derive(Debug, Clone)]
pub struct Model {
    data: Dataset,
    design: PathwayDesign,
    config: ModelConfig,
    layout: Layout,
    /// Covariates entering the shrinkage regression, shape (N, T, K).
    covariates: Array3<f64>,
    covariate_names: Vec<String>,
    /// Drug profile for treatment-as-covariate mode, shape (N, T).
    drug: Option<Array2<f64>>,
    /// Row of `phi` used by each subject.
    phi_row: Vec<usize>,
}

impl Model {
    pub fn new(data: Dataset, design: PathwayDesign, config: &ModelConfig) -> Result<Self> {
        data.validate(config.two_group)?;
        let (n, t, m) = data.x.dim();
        if design.n_metabolites != m {
            return Err(Error::Schema(format!(
                "pathway design covers {} metabolites but the dataset has {m}",
                design.n_metabolites
            )));
        }
        if design.is_empty() {
            return Err(Error::EmptyDesign("no pathways".into()));
        }
        let config = config.resolve(n, t)?;
        let (covariates, covariate_names, drug) = match &config.treatment_covariate {
            None => (data.y.clone(), data.covariates.clone(), None),
            Some(name) => {
                let idx = data.covariate_index(name).ok_or_else(|| {
                    Error::Schema(format!("treatment covariate `{name}` not found in data"))
                })?;
                let keep: Vec<usize> = (0..data.n_covariates()).filter(|&k| k != idx).collect();
                let cov = data.y.select(Axis(2), &keep);
                let names = keep.iter().map(|&k| data.covariates[k].clone()).collect();
                let drug = data.y.index_axis(Axis(2), idx).to_owned();
                (cov, names, Some(drug))
            }
        };
        let groups = if config.two_group { 2 } else { 1 };
        let phi_row = data
            .groups
            .iter()
            .map(|g| if config.two_group { g.index() } else { 0 })
            .collect();
        let layout = Layout::new(Dims {
            n,
            t,
            m,
            k: covariates.dim().2,
            p: design.len(),
            groups,
            treatment: drug.is_some(),
        })
        .with_bounds(&config.bounds);
        Ok(Self {
            data,
            design,
            config,
            layout,
            covariates,
            covariate_names,
            drug,
            phi_row,
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn design(&self) -> &PathwayDesign {
        &self.design
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dims(&self) -> Dims {
        self.layout.dims
    }

    pub fn covariates(&self) -> &Array3<f64> {
        &self.covariates
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn drug(&self) -> Option<&Array2<f64>> {
        self.drug.as_ref()
    }

    /// Row of `phi` that applies to subject `i`.
    pub fn phi_row(&self, i: usize) -> usize {
        self.phi_row[i]
    }

    /// Row of `phi` for a group, `None` in single-group mode.
    pub fn group_row(&self, group: Group) -> Option<usize> {
        self.config.two_group.then(|| group.index())
    }

    pub fn transform(&self, state: &ParameterState) -> Result<Vec<f64>> {
        state.transform(&self.layout, &self.design)
    }

    pub fn untransform(&self, u: &[f64]) -> (ParameterState, f64) {
        ParameterState::untransform(&self.layout, &self.design, u)
    }

    pub fn state_from_flat(&self, constrained: &[f64]) -> ParameterState {
        ParameterState::from_flat(&self.layout, constrained)
    }

    /// Mean tensor `mu`, shape (N, T, M).
    pub fn mean(&self, state: &ParameterState) -> Array3<f64> {
        let Dims { n, t, m, k, .. } = self.layout.dims;
        let mut mu = Array3::zeros((n, t, m));
        for i in 0..n {
            for tt in 0..t {
                for j in 0..m {
                    let intercept = match &self.drug {
                        Some(d) => state.alpha[j] * d[[i, tt]],
                        None => state.alpha[j],
                    };
                    let mut v = intercept + state.gamma[[i, j]] + state.nu[[i, tt, j]];
                    for kk in 0..k {
                        v += self.covariates[[i, tt, kk]] * state.beta[[j, kk]];
                    }
                    mu[[i, tt, j]] = v;
                }
            }
        }
        mu
    }

    /// Factorisations of `I - C(phi)` for every phi row; `None` if any is not PD.
    pub fn factors(&self, phi: &[Vec<f64>]) -> Option<Vec<CarFactor>> {
        phi.iter()
            .map(|row| CarFactor::from_kernel(self.design.precision_kernel(row)))
            .collect()
    }

    fn ln_phi_prior(&self, row: &[f64]) -> f64 {
        let mut lp = 0.0;
        for (&phi, op) in row.iter().zip(&self.design.pathways) {
            if !op.contains(phi) {
                return f64::NEG_INFINITY;
            }
            lp += match self.config.phi_prior {
                PhiPrior::Beta => {
                    -PI.ln() - 0.5 * (phi - op.lower).ln() - 0.5 * (op.upper - phi).ln()
                }
                PhiPrior::Uniform => -op.width().ln(),
            };
        }
        lp
    }

    /// Per-observation CAR log-likelihood `log p(x_it | mu_it, phi^e, sigma2)`, shape (N, T).
    pub fn pointwise_log_likelihood(&self, state: &ParameterState) -> Option<Array2<f64>> {
        let Dims { n, t, m, .. } = self.layout.dims;
        if !(state.sigma2 > 0.0) {
            return None;
        }
        let factors = self.factors(&state.phi)?;
        let mu = self.mean(state);
        let mut out = Array2::zeros((n, t));
        let mut r = vec![0.0; m];
        for i in 0..n {
            let f = &factors[self.phi_row[i]];
            for tt in 0..t {
                for j in 0..m {
                    r[j] = self.data.x[[i, tt, j]] - mu[[i, tt, j]];
                }
                out[[i, tt]] = -0.5 * m as f64 * (LN_2PI + state.sigma2.ln()) + 0.5 * f.log_det()
                    - 0.5 * f.quadratic(&r) / state.sigma2;
            }
        }
        Some(out)
    }

    /// Joint log-density of data and parameters in constrained coordinates.
    /// Returns `-inf` outside the support.
    pub fn log_joint(&self, state: &ParameterState) -> f64 {
        if state.check_shape(&self.layout).is_err() {
            return f64::NEG_INFINITY;
        }
        let Dims { n, t, m, k, .. } = self.layout.dims;
        let cfg = &self.config;
        let b = &cfg.bounds;
        let mut lp = 0.0;

        for row in &state.phi {
            lp += self.ln_phi_prior(row);
        }
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        let psi = cfg.psi_value();
        lp += InverseGamma {
            shape: psi,
            scale: psi - 1.0,
        }
        .ln_pdf(state.sigma2);

        for j in 0..m {
            let alpha = state.alpha[j];
            let theta = state.theta[j];
            let sg2 = state.sigma_gamma2[j];
            let snu2 = state.sigma_nu2[j];
            let sb = state.sigma_beta[j];
            if !(alpha >= b.alpha_min && alpha <= b.alpha_max)
                || !(theta.abs() < 1.0)
                || !(snu2 > 0.0 && snu2 <= b.sigma_nu2_max)
                || !(sb > 0.0 && sb <= b.sigma_beta_max)
                || !(sg2 > 0.0)
            {
                return f64::NEG_INFINITY;
            }
            lp -= (b.alpha_max - b.alpha_min).ln();
            lp -= std::f64::consts::LN_2;
            lp -= b.sigma_nu2_max.ln();
            lp -= b.sigma_beta_max.ln();
            lp += cfg.sigma_gamma2_prior.ln_pdf(sg2);
            for i in 0..n {
                lp += normal_ln_pdf(state.gamma[[i, j]], 0.0, sg2);
                lp += normal_ln_pdf(state.nu[[i, 0, j]], 0.0, snu2 / (1.0 - theta * theta));
                for tt in 1..t {
                    lp +=
                        normal_ln_pdf(state.nu[[i, tt, j]], theta * state.nu[[i, tt - 1, j]], snu2);
                }
            }
            for kk in 0..k {
                let lambda = state.lambda[[j, kk]];
                if !(lambda > 0.0) {
                    return f64::NEG_INFINITY;
                }
                lp += normal_ln_pdf(state.beta[[j, kk]], 0.0, (lambda * sb).powi(2));
                lp += half_t_ln_pdf(lambda, cfg.tau);
            }
        }
        match self.pointwise_log_likelihood(state) {
            Some(ll) => lp + ll.sum(),
            None => f64::NEG_INFINITY,
        }
    }

    /// Log-density over unconstrained coordinates (log-Jacobian included).
    pub fn log_density(&self, u: &[f64]) -> f64 {
        self.evaluate(u, None)
    }

    /// Gradient of [`Model::log_density`].
    pub fn grad_log_joint(&self, u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.layout.dim];
        self.evaluate(u, Some(&mut g));
        g
    }

    /// Log-density and analytic gradient over the unconstrained coordinates.
    ///
    /// Works directly in the non-centred variables, so the gamma and nu blocks
    /// carry standard-normal terms instead of their hierarchical priors plus Jacobians.
    /// Beta is partly centred, see [`BETA_SCALE_POWER`].
    pub fn evaluate(&self, u: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let layout = &self.layout;
        let Dims {
            n,
            t,
            m,
            k,
            p,
            groups,
            ..
        } = layout.dims;
        let cfg = &self.config;
        let bounds = &cfg.bounds;
        let tau = cfg.tau;
        let mut grad = grad;
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }

        let mut c = vec![0.0; layout.dim];
        untransform_into(layout, &self.design, u, &mut c);

        for j in 0..m {
            let alpha = c[layout.alpha.start + j];
            if !(alpha >= bounds.alpha_min && alpha <= bounds.alpha_max)
                || !(c[layout.sigma_nu2.start + j] <= bounds.sigma_nu2_max)
                || !(c[layout.sigma_beta.start + j] <= bounds.sigma_beta_max)
            {
                return f64::NEG_INFINITY;
            }
        }
        if !c.iter().all(|v| v.is_finite()) {
            return f64::NEG_INFINITY;
        }

        let sigma2 = c[layout.sigma2];
        let mut lp = 0.0;

        // Residuals and the CAR likelihood.
        let phi_rows: Vec<Vec<f64>> = (0..groups)
            .map(|g| c[layout.phi.start + g * p..layout.phi.start + (g + 1) * p].to_vec())
            .collect();
        let kernels: Vec<DMatrix<f64>> = phi_rows
            .iter()
            .map(|r| self.design.precision_kernel(r))
            .collect();
        let Some(factors) = kernels
            .iter()
            .map(|q| CarFactor::from_kernel(q.clone()))
            .collect::<Option<Vec<_>>>()
        else {
            return f64::NEG_INFINITY;
        };

        let drug = self.drug.as_ref();
        let alpha_at = |i: usize, tt: usize, j: usize| match drug {
            Some(d) => c[layout.alpha.start + j] * d[[i, tt]],
            None => c[layout.alpha.start + j],
        };
        let mut resid = vec![0.0; n * t * m];
        for i in 0..n {
            for tt in 0..t {
                let base = (i * t + tt) * m;
                for j in 0..m {
                    let mut mu = alpha_at(i, tt, j)
                        + c[layout.gamma.start + i * m + j]
                        + c[layout.nu.start + base + j];
                    for kk in 0..k {
                        mu += self.covariates[[i, tt, kk]] * c[layout.beta.start + j * k + kk];
                    }
                    resid[base + j] = self.data.x[[i, tt, j]] - mu;
                }
            }
        }

        let mut scatter = vec![DMatrix::<f64>::zeros(m, m); groups];
        let mut counts = vec![0usize; groups];
        for i in 0..n {
            let g = self.phi_row[i];
            counts[g] += t;
            let s = &mut scatter[g];
            for tt in 0..t {
                let r = &resid[(i * t + tt) * m..(i * t + tt + 1) * m];
                for a in 0..m {
                    let ra = r[a];
                    for bb in a..m {
                        s[(a, bb)] += ra * r[bb];
                    }
                }
            }
        }
        for s in scatter.iter_mut() {
            for a in 0..m {
                for bb in 0..a {
                    s[(a, bb)] = s[(bb, a)];
                }
            }
        }

        let mut quad_total = 0.0;
        for g in 0..groups {
            let ng = counts[g] as f64;
            let quad = kernels[g].component_mul(&scatter[g]).sum();
            quad_total += quad;
            lp += -0.5 * ng * m as f64 * (LN_2PI + sigma2.ln()) + 0.5 * ng * factors[g].log_det()
                - 0.5 * quad / sigma2;
        }

        // Parameter priors expressed in unconstrained / non-centred coordinates.
        for uu in &u[layout.phi.clone()] {
            lp += match cfg.phi_prior {
                PhiPrior::Beta => -PI.ln() + 0.5 * ln_logistic_jacobian(*uu),
                PhiPrior::Uniform => ln_logistic_jacobian(*uu),
            };
        }
        let psi = cfg.psi_value();
        let scale = psi - 1.0;
        let us2 = u[layout.sigma2];
        lp += psi * scale.ln() - ln_gamma(psi) - psi * us2 - scale / sigma2;

        let ig = cfg.sigma_gamma2_prior;
        let t_const = std::f64::consts::LN_2 + ln_gamma(0.5 * (tau + 1.0))
            - ln_gamma(0.5 * tau)
            - 0.5 * (tau * PI).ln();
        let mut sq = 0.0;
        for j in 0..m {
            lp -= (bounds.alpha_max - bounds.alpha_min).ln();
            lp += ln_logistic_jacobian(u[layout.theta.start + j]);
            // flat prior density and interval Jacobian: the log(B) terms cancel
            lp += ln_logistic_jacobian(u[layout.sigma_nu2.start + j]);
            lp += ln_logistic_jacobian(u[layout.sigma_beta.start + j]);
            let ug = u[layout.sigma_gamma2.start + j];
            lp += ig.shape * ig.scale.ln()
                - ln_gamma(ig.shape)
                - ig.shape * ug
                - ig.scale * (-ug).exp();
            let sb = c[layout.sigma_beta.start + j];
            for kk in 0..k {
                let lambda = c[layout.lambda.start + j * k + kk];
                let beta = c[layout.beta.start + j * k + kk];
                lp += -0.5 * LN_2PI
                    - (1.0 - BETA_SCALE_POWER) * (lambda * sb).ln()
                    - 0.5 * (beta / (lambda * sb)).powi(2);
                lp += t_const - 0.5 * (tau + 1.0) * (lambda * lambda / tau).ln_1p()
                    + u[layout.lambda.start + j * k + kk];
            }
        }
        let n_std = (n * m + n * t * m) as f64;
        for r in [layout.gamma.clone(), layout.nu.clone()] {
            sq += u[r].iter().map(|v| v * v).sum::<f64>();
        }
        lp += -0.5 * n_std * LN_2PI - 0.5 * sq;

        let Some(grad) = grad else {
            return lp;
        };

        // d lp / d mu_it = (I - C) r_it / sigma2
        let mut gmu = vec![0.0; n * t * m];
        for i in 0..n {
            let q = &kernels[self.phi_row[i]];
            for tt in 0..t {
                let base = (i * t + tt) * m;
                let r = &resid[base..base + m];
                for a in 0..m {
                    let mut s = 0.0;
                    for bb in 0..m {
                        s += q[(a, bb)] * r[bb];
                    }
                    gmu[base + a] = s / sigma2;
                }
            }
        }

        grad[layout.sigma2] =
            -0.5 * (n * t * m) as f64 + 0.5 * quad_total / sigma2 - psi + scale / sigma2;

        for g in 0..groups {
            let ng = counts[g] as f64;
            let inv = factors[g].inverse();
            let dlogdet = logdet_gradient_from_inverse(&inv, &self.design);
            for (pp, op) in self.design.pathways.iter().enumerate() {
                let idx = layout.phi_index(g, pp);
                let dphi = 0.5 * ng * dlogdet[pp] + 0.5 * op.trace_with(&scatter[g]) / sigma2;
                let s = logistic(u[idx]);
                let prior = match cfg.phi_prior {
                    PhiPrior::Beta => 0.5 - s,
                    PhiPrior::Uniform => 1.0 - 2.0 * s,
                };
                grad[idx] = dphi * op.width() * s * (1.0 - s) + prior;
            }
        }

        let mut adj = vec![0.0; t];
        for j in 0..m {
            let theta = c[layout.theta.start + j];
            let one_minus = (1.0 - theta) * (1.0 + theta);
            let sg = c[layout.sigma_gamma2.start + j].sqrt();
            let snu = c[layout.sigma_nu2.start + j].sqrt();
            let stationary = snu / one_minus.sqrt();

            let mut g_alpha = 0.0;
            let mut g_sg2 = 0.0;
            let mut g_snu2 = 0.0;
            let mut g_theta = 0.0;
            for i in 0..n {
                let gi = layout.gamma.start + i * m + j;
                let mut g_gamma = 0.0;
                for tt in 0..t {
                    let gm = gmu[(i * t + tt) * m + j];
                    g_gamma += gm;
                    g_alpha += match drug {
                        Some(d) => gm * d[[i, tt]],
                        None => gm,
                    };
                }
                grad[gi] = sg * g_gamma - u[gi];
                g_sg2 += 0.5 * g_gamma * c[gi];

                let nb = layout.nu.start + i * t * m;
                let mut carry = 0.0;
                for tt in (0..t).rev() {
                    let gm = gmu[(i * t + tt) * m + j];
                    carry = gm + theta * carry;
                    adj[tt] = carry;
                    g_snu2 += 0.5 * gm * c[nb + tt * m + j];
                }
                grad[nb + j] = stationary * adj[0] - u[nb + j];
                g_theta += adj[0] * c[nb + j] * theta / one_minus;
                for tt in 1..t {
                    let zi = nb + tt * m + j;
                    grad[zi] = snu * adj[tt] - u[zi];
                    g_theta += adj[tt] * c[nb + (tt - 1) * m + j];
                }
            }
            grad[layout.alpha.start + j] = g_alpha;
            let ug = u[layout.sigma_gamma2.start + j];
            grad[layout.sigma_gamma2.start + j] = g_sg2 - ig.shape + ig.scale * (-ug).exp();
            let s_nu = logistic(u[layout.sigma_nu2.start + j]);
            grad[layout.sigma_nu2.start + j] = g_snu2 * (1.0 - s_nu) + 1.0 - 2.0 * s_nu;
            grad[layout.theta.start + j] = g_theta * 0.5 * one_minus - theta;

            let sb = c[layout.sigma_beta.start + j];
            let mut g_lsb = 0.0;
            for kk in 0..k {
                let mut gb = 0.0;
                for i in 0..n {
                    for tt in 0..t {
                        gb += gmu[(i * t + tt) * m + j] * self.covariates[[i, tt, kk]];
                    }
                }
                let bi = layout.beta.start + j * k + kk;
                let li = layout.lambda.start + j * k + kk;
                let lambda = c[li];
                let beta = c[bi];
                let (w, v) = (BETA_SCALE_POWER, 1.0 - BETA_SCALE_POWER);
                let scale = lambda * sb;
                let z2 = (beta / scale).powi(2);
                grad[bi] = gb * scale.powf(w) - u[bi] * scale.powf(-2.0 * v);
                // derivative with respect to ln(lambda * sigma_beta)
                let g_scale = w * gb * beta - v + v * z2;
                let l2 = lambda * lambda;
                grad[li] = g_scale + 1.0 - (tau + 1.0) * l2 / (tau + l2);
                g_lsb += g_scale;
            }
            let s_b = logistic(u[layout.sigma_beta.start + j]);
            grad[layout.sigma_beta.start + j] = g_lsb * (1.0 - s_b) + 1.0 - 2.0 * s_b;
        }
        lp
    }

    /// Prior-median-derived starting point in unconstrained coordinates.
    pub fn default_initial_point(&self) -> Vec<f64> {
        let mut u = vec![0.0; self.layout.dim];
        let ig = self.config.sigma_gamma2_prior;
        // median of an inverse gamma = scale / median of Gamma(shape, 1); exact for shape 1
        let median = if ig.shape == 1.0 {
            ig.scale / std::f64::consts::LN_2
        } else {
            ig.scale / ig.shape
        };
        for j in self.layout.sigma_gamma2.clone() {
            u[j] = median.ln();
        }
        u
    }
}

fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln()) - 0.5 * (x - mean).powi(2) / var
}

/// Density of the half Student-t with `tau` degrees of freedom and unit scale.
pub(crate) fn half_t_ln_pdf(x: f64, tau: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    std::f64::consts::LN_2 + ln_gamma(0.5 * (tau + 1.0))
        - ln_gamma(0.5 * tau)
        - 0.5 * (tau * PI).ln()
        - 0.5 * (tau + 1.0) * (x * x / tau).ln_1p()
}

impl Target for Model {
    fn dim(&self) -> usize {
        self.layout.dim
    }

    fn log_density_and_grad(&self, position: &[f64], grad: &mut [f64]) -> f64 {
        self.evaluate(position, Some(grad))
    }

    fn initial_point(&self) -> Vec<f64> {
        self.default_initial_point()
    }

    fn parameter_names(&self) -> Vec<String> {
        self.layout.names()
    }

    fn constrain(&self, position: &[f64], out: &mut [f64]) {
        untransform_into(&self.layout, &self.design, position, out);
    }
}
