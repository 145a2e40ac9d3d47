//! Parameter layout and the constrained <-> unconstrained bijection.
//!
//! Unconstrained coordinates, in order:
//!
//! | block          | size      | map to constrained                                   |
//! |----------------|-----------|------------------------------------------------------|
//! | phi            | G * P     | `L_p + (U_p - L_p) logistic(u)`                      |
//! | sigma2         | 1         | `exp(u)`                                             |
//! | alpha          | M         | identity                                             |
//! | gamma          | N * M     | `sigma_gamma_m * u` (non-centred)                    |
//! | nu             | N * T * M | AR(1) recursion driven by standardised innovations   |
//! | theta          | M         | `2 logistic(u) - 1`                                  |
//! | beta           | M * K     | `(lambda_mk sigma_beta_m)^W * u`, partly centred     |
//! | lambda         | M * K     | `exp(u)`                                             |
//! | sigma_beta     | M         | `B_beta logistic(u)` on the flat-prior interval      |
//! | sigma_gamma2   | M         | `exp(u)`                                             |
//! | sigma_nu2      | M         | `B_nu logistic(u)` on the flat-prior interval        |
//!
//! The constrained flat vector used for draws has the same order and length.

use std::ops::Range;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::car::PathwayDesign;
use crate::model::PriorBounds;

/// Power W of the prior scale applied to the beta coordinate. W = 1 is fully
/// non-centred, which is stiff when the data pin a coefficient; W = 0 is centred,
/// which funnels when the horseshoe shrinks one to zero.
pub const BETA_SCALE_POWER: f64 = 0.5;
use crate::error::{Error, Result};

pub(crate) fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `ln(logistic(u)) + ln(1 - logistic(u))`, stable for large `|u|`.
pub(crate) fn ln_logistic_jacobian(u: f64) -> f64 {
    -u.abs() - 2.0 * (-u.abs()).exp().ln_1p()
}

fn logit(s: f64) -> f64 {
    (s / (1.0 - s)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub t: usize,
    pub m: usize,
    pub k: usize,
    pub p: usize,
    /// 2 in two-group mode, otherwise 1.
    pub groups: usize,
    pub treatment: bool,
}

/// Offsets of each parameter block in the flat vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub dims: Dims,
    pub phi: Range<usize>,
    pub sigma2: usize,
    pub alpha: Range<usize>,
    pub gamma: Range<usize>,
    pub nu: Range<usize>,
    pub theta: Range<usize>,
    pub beta: Range<usize>,
    pub lambda: Range<usize>,
    pub sigma_beta: Range<usize>,
    pub sigma_gamma2: Range<usize>,
    pub sigma_nu2: Range<usize>,
    pub dim: usize,
    /// Upper ends of the bounded (flat-prior) scales.
    pub sigma_nu2_max: f64,
    pub sigma_beta_max: f64,
}

impl Layout {
    pub fn new(dims: Dims) -> Self {
        let Dims {
            n,
            t,
            m,
            k,
            p,
            groups,
            ..
        } = dims;
        let mut at = 0;
        let mut block = |len: usize| {
            let r = at..at + len;
            at += len;
            r
        };
        let phi = block(groups * p);
        let sigma2 = block(1).start;
        let alpha = block(m);
        let gamma = block(n * m);
        let nu = block(n * t * m);
        let theta = block(m);
        let beta = block(m * k);
        let lambda = block(m * k);
        let sigma_beta = block(m);
        let sigma_gamma2 = block(m);
        let sigma_nu2 = block(m);
        Self {
            dims,
            phi,
            sigma2,
            alpha,
            gamma,
            nu,
            theta,
            beta,
            lambda,
            sigma_beta,
            sigma_gamma2,
            sigma_nu2,
            dim: at,
            sigma_nu2_max: PriorBounds::default().sigma_nu2_max,
            sigma_beta_max: PriorBounds::default().sigma_beta_max,
        }
    }

    pub fn with_bounds(mut self, bounds: &PriorBounds) -> Self {
        self.sigma_nu2_max = bounds.sigma_nu2_max;
        self.sigma_beta_max = bounds.sigma_beta_max;
        self
    }

    pub fn phi_row_name(&self, g: usize) -> &'static str {
        if self.dims.groups == 1 {
            "phi"
        } else if g == 0 {
            "phi_cases"
        } else {
            "phi_controls"
        }
    }

    /// Parameter names, indices zero-based.
    pub fn names(&self) -> Vec<String> {
        let Dims {
            n,
            t,
            m,
            k,
            p,
            groups,
            treatment,
        } = self.dims;
        let mut names = Vec::with_capacity(self.dim);
        for g in 0..groups {
            let row = self.phi_row_name(g);
            names.extend((0..p).map(|pp| format!("{row}[{pp}]")));
        }
        names.push("sigma2".into());
        let alpha = if treatment { "beta_alpha" } else { "alpha" };
        names.extend((0..m).map(|j| format!("{alpha}[{j}]")));
        for i in 0..n {
            names.extend((0..m).map(|j| format!("gamma[{i},{j}]")));
        }
        for i in 0..n {
            for tt in 0..t {
                names.extend((0..m).map(|j| format!("nu[{i},{tt},{j}]")));
            }
        }
        names.extend((0..m).map(|j| format!("theta[{j}]")));
        for j in 0..m {
            names.extend((0..k).map(|kk| format!("beta[{j},{kk}]")));
        }
        for j in 0..m {
            names.extend((0..k).map(|kk| format!("lambda[{j},{kk}]")));
        }
        names.extend((0..m).map(|j| format!("sigma_beta[{j}]")));
        names.extend((0..m).map(|j| format!("sigma_gamma2[{j}]")));
        names.extend((0..m).map(|j| format!("sigma_nu2[{j}]")));
        debug_assert_eq!(names.len(), self.dim);
        names
    }

    pub fn phi_index(&self, group: usize, pathway: usize) -> usize {
        self.phi.start + group * self.dims.p + pathway
    }

    pub fn beta_index(&self, m: usize, k: usize) -> usize {
        self.beta.start + m * self.dims.k + k
    }

    pub fn lambda_index(&self, m: usize, k: usize) -> usize {
        self.lambda.start + m * self.dims.k + k
    }
}

/// All model unknowns in constrained coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    /// Rows are groups (cases, controls) or a single shared row.
    pub phi: Vec<Vec<f64>>,
    pub sigma2: f64,
    /// Treatment effects, or `beta_alpha` in treatment-as-covariate mode.
    pub alpha: Vec<f64>,
    /// Subject effects, shape (N, M).
    pub gamma: Array2<f64>,
    /// Temporal effects, shape (N, T, M).
    pub nu: Array3<f64>,
    pub theta: Vec<f64>,
    /// Cross-omic coefficients, shape (M, K).
    pub beta: Array2<f64>,
    /// Local shrinkage scales, shape (M, K).
    pub lambda: Array2<f64>,
    pub sigma_beta: Vec<f64>,
    pub sigma_gamma2: Vec<f64>,
    pub sigma_nu2: Vec<f64>,
}

impl ParameterState {
    pub fn from_flat(layout: &Layout, v: &[f64]) -> Self {
        let Dims {
            n,
            t,
            m,
            k,
            p,
            groups,
            ..
        } = layout.dims;
        Self {
            phi: (0..groups)
                .map(|g| v[layout.phi.start + g * p..layout.phi.start + (g + 1) * p].to_vec())
                .collect(),
            sigma2: v[layout.sigma2],
            alpha: v[layout.alpha.clone()].to_vec(),
            gamma: Array2::from_shape_vec((n, m), v[layout.gamma.clone()].to_vec())
                .expect("layout shape"),
            nu: Array3::from_shape_vec((n, t, m), v[layout.nu.clone()].to_vec())
                .expect("layout shape"),
            theta: v[layout.theta.clone()].to_vec(),
            beta: Array2::from_shape_vec((m, k), v[layout.beta.clone()].to_vec())
                .expect("layout shape"),
            lambda: Array2::from_shape_vec((m, k), v[layout.lambda.clone()].to_vec())
                .expect("layout shape"),
            sigma_beta: v[layout.sigma_beta.clone()].to_vec(),
            sigma_gamma2: v[layout.sigma_gamma2.clone()].to_vec(),
            sigma_nu2: v[layout.sigma_nu2.clone()].to_vec(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for row in &self.phi {
            out.extend_from_slice(row);
        }
        out.push(self.sigma2);
        out.extend_from_slice(&self.alpha);
        out.extend(self.gamma.iter());
        out.extend(self.nu.iter());
        out.extend_from_slice(&self.theta);
        out.extend(self.beta.iter());
        out.extend(self.lambda.iter());
        out.extend_from_slice(&self.sigma_beta);
        out.extend_from_slice(&self.sigma_gamma2);
        out.extend_from_slice(&self.sigma_nu2);
        out
    }

    /// Checks every block has the shape implied by `layout`.
    pub fn check_shape(&self, layout: &Layout) -> Result<()> {
        let Dims {
            n,
            t,
            m,
            k,
            p,
            groups,
            ..
        } = layout.dims;
        let ok = self.phi.len() == groups
            && self.phi.iter().all(|r| r.len() == p)
            && self.alpha.len() == m
            && self.gamma.dim() == (n, m)
            && self.nu.dim() == (n, t, m)
            && self.theta.len() == m
            && self.beta.dim() == (m, k)
            && self.lambda.dim() == (m, k)
            && self.sigma_beta.len() == m
            && self.sigma_gamma2.len() == m
            && self.sigma_nu2.len() == m;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(
                "parameter state does not match model dimensions".into(),
            ))
        }
    }

    /// Maps to unconstrained coordinates.
    pub fn transform(&self, layout: &Layout, design: &PathwayDesign) -> Result<Vec<f64>> {
        self.check_shape(layout)?;
        let flat = self.to_flat();
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite value in parameter state".into()));
        }
        let Dims { n, t, m, k, .. } = layout.dims;
        let mut u = vec![0.0; layout.dim];
        let out_of_support = |what: &str| Error::Domain(format!("{what} outside its support"));

        for (g, row) in self.phi.iter().enumerate() {
            for (pp, (&phi, op)) in row.iter().zip(&design.pathways).enumerate() {
                if !op.contains(phi) {
                    return Err(out_of_support("phi"));
                }
                u[layout.phi_index(g, pp)] = logit((phi - op.lower) / op.width());
            }
        }
        let ln = |v: f64, what: &str| {
            if v > 0.0 {
                Ok(v.ln())
            } else {
                Err(out_of_support(what))
            }
        };
        u[layout.sigma2] = ln(self.sigma2, "sigma2")?;
        u[layout.alpha.clone()].copy_from_slice(&self.alpha);
        for j in 0..m {
            let sg2 = self.sigma_gamma2[j];
            let snu2 = self.sigma_nu2[j];
            let theta = self.theta[j];
            if !(theta.abs() < 1.0) {
                return Err(out_of_support("theta"));
            }
            u[layout.theta.start + j] = logit(0.5 * (theta + 1.0));
            u[layout.sigma_gamma2.start + j] = ln(sg2, "sigma_gamma2")?;
            let bounded = |v: f64, max: f64, what: &str| {
                if v > 0.0 && v < max {
                    Ok(logit(v / max))
                } else {
                    Err(out_of_support(what))
                }
            };
            u[layout.sigma_nu2.start + j] = bounded(snu2, layout.sigma_nu2_max, "sigma_nu2")?;
            u[layout.sigma_beta.start + j] =
                bounded(self.sigma_beta[j], layout.sigma_beta_max, "sigma_beta")?;
            let sg = sg2.sqrt();
            let snu = snu2.sqrt();
            let stationary = snu / (1.0 - theta * theta).sqrt();
            for i in 0..n {
                u[layout.gamma.start + i * m + j] = self.gamma[[i, j]] / sg;
                let base = layout.nu.start + i * t * m;
                u[base + j] = self.nu[[i, 0, j]] / stationary;
                for tt in 1..t {
                    u[base + tt * m + j] =
                        (self.nu[[i, tt, j]] - theta * self.nu[[i, tt - 1, j]]) / snu;
                }
            }
            for kk in 0..k {
                let lambda = self.lambda[[j, kk]];
                u[layout.lambda_index(j, kk)] = ln(lambda, "lambda")?;
                let scale = (lambda * self.sigma_beta[j]).powf(BETA_SCALE_POWER);
                u[layout.beta_index(j, kk)] = self.beta[[j, kk]] / scale;
            }
        }
        Ok(u)
    }

    /// Maps unconstrained coordinates back, returning the state and the log-Jacobian
    /// of the inverse map.
    pub fn untransform(layout: &Layout, design: &PathwayDesign, u: &[f64]) -> (Self, f64) {
        let mut v = vec![0.0; layout.dim];
        let log_jac = untransform_into(layout, design, u, &mut v);
        (Self::from_flat(layout, &v), log_jac)
    }
}

/// Writes constrained values for `u` into `out` and returns the log-Jacobian.
pub(crate) fn untransform_into(
    layout: &Layout,
    design: &PathwayDesign,
    u: &[f64],
    out: &mut [f64],
) -> f64 {
    let Dims {
        n,
        t,
        m,
        k,
        p,
        groups,
        ..
    } = layout.dims;
    let mut log_jac = 0.0;
    for g in 0..groups {
        for (pp, op) in design.pathways.iter().enumerate().take(p) {
            let i = layout.phi_index(g, pp);
            out[i] = op.lower + op.width() * logistic(u[i]);
            log_jac += op.width().ln() + ln_logistic_jacobian(u[i]);
        }
    }
    out[layout.sigma2] = u[layout.sigma2].exp();
    log_jac += u[layout.sigma2];
    out[layout.alpha.clone()].copy_from_slice(&u[layout.alpha.clone()]);
    for j in 0..m {
        let ut = u[layout.theta.start + j];
        let theta = 2.0 * logistic(ut) - 1.0;
        out[layout.theta.start + j] = theta;
        log_jac += std::f64::consts::LN_2 + ln_logistic_jacobian(ut);

        let lsg2 = u[layout.sigma_gamma2.start + j];
        let usnu2 = u[layout.sigma_nu2.start + j];
        let usb = u[layout.sigma_beta.start + j];
        let snu2 = layout.sigma_nu2_max * logistic(usnu2);
        let sb = layout.sigma_beta_max * logistic(usb);
        out[layout.sigma_gamma2.start + j] = lsg2.exp();
        out[layout.sigma_nu2.start + j] = snu2;
        out[layout.sigma_beta.start + j] = sb;
        log_jac += lsg2;
        log_jac += layout.sigma_nu2_max.ln() + ln_logistic_jacobian(usnu2);
        log_jac += layout.sigma_beta_max.ln() + ln_logistic_jacobian(usb);
        let lsnu2 = snu2.ln();

        let sg = (0.5 * lsg2).exp();
        let snu = snu2.sqrt();
        let one_minus = (1.0 - theta) * (1.0 + theta);
        let stationary = snu / one_minus.sqrt();
        log_jac += n as f64 * (0.5 * lsg2);
        log_jac += n as f64 * (t as f64 * 0.5 * lsnu2 - 0.5 * one_minus.ln());
        for i in 0..n {
            out[layout.gamma.start + i * m + j] = sg * u[layout.gamma.start + i * m + j];
            let base = layout.nu.start + i * t * m;
            let mut prev = stationary * u[base + j];
            out[base + j] = prev;
            for tt in 1..t {
                prev = theta * prev + snu * u[base + tt * m + j];
                out[base + tt * m + j] = prev;
            }
        }
        for kk in 0..k {
            let ll = u[layout.lambda_index(j, kk)];
            let lambda = ll.exp();
            out[layout.lambda_index(j, kk)] = lambda;
            let ln_scale = ll + sb.ln();
            out[layout.beta_index(j, kk)] =
                (BETA_SCALE_POWER * ln_scale).exp() * u[layout.beta_index(j, kk)];
            log_jac += ll + BETA_SCALE_POWER * ln_scale;
        }
    }
    log_jac
}
