//! Post-processing of posterior draws: pathway perturbation tests, ROC curves, WAIC,
//! posterior-predictive covariance checks, whitened residuals and shrinkage summaries.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::car::CarFactor;
use crate::error::{Error, Result};
use crate::model::{kappa, Dims, Model, ParameterState};
use crate::sampler::{chain_rng, PosteriorDraws};
use crate::stats::{equal_tailed, log_mean_exp, mean, quantile, skewness_kurtosis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceSummary {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    /// `max(P(d > 0), P(d < 0))`.
    pub score: f64,
    pub perturbed: bool,
}

/// Summarises draws of a difference by an equal-tailed interval.
pub fn summarize_difference(diffs: &[f64], level: f64) -> Result<DifferenceSummary> {
    if diffs.is_empty() {
        return Err(Error::InsufficientDraws(
            "no draws of the difference".into(),
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!(
            "credible level must lie in (0, 1), got {level}"
        )));
    }
    let (lower, upper) = equal_tailed(diffs, level);
    let n = diffs.len() as f64;
    let pos = diffs.iter().filter(|&&d| d > 0.0).count() as f64 / n;
    let neg = diffs.iter().filter(|&&d| d < 0.0).count() as f64 / n;
    Ok(DifferenceSummary {
        mean: mean(diffs),
        lower,
        upper,
        score: pos.max(neg),
        perturbed: lower > 0.0 || upper < 0.0,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathwayPerturbation {
    pub pathway: String,
    #[serde(flatten)]
    pub difference: DifferenceSummary,
    pub truth: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub level: f64,
    /// Which difference is summarised.
    pub statistic: String,
    pub pathways: Vec<PathwayPerturbation>,
    pub roc: Option<RocCurve>,
}

impl PerturbationReport {
    pub fn scores(&self) -> Vec<f64> {
        self.pathways.iter().map(|p| p.difference.score).collect()
    }

    /// Attaches truth labels and the ROC curve of the tail-probability scores.
    pub fn with_truth(mut self, truth: &[bool]) -> Result<Self> {
        if truth.len() != self.pathways.len() {
            return Err(Error::Schema(format!(
                "{} truth labels for {} pathways",
                truth.len(),
                self.pathways.len()
            )));
        }
        for (p, &t) in self.pathways.iter_mut().zip(truth) {
            p.truth = Some(t);
        }
        self.roc = Some(roc_auc(&self.scores(), truth)?);
        Ok(self)
    }
}

/// Per-pathway test of `phi_controls - phi_cases` from a two-group fit.
pub fn phi_difference_test(
    draws: &PosteriorDraws,
    pathway_ids: &[String],
    level: f64,
) -> Result<PerturbationReport> {
    let mut pathways = Vec::with_capacity(pathway_ids.len());
    for (p, id) in pathway_ids.iter().enumerate() {
        let (Some(ca), Some(co)) = (
            draws.index_of(&format!("phi_cases[{p}]")),
            draws.index_of(&format!("phi_controls[{p}]")),
        ) else {
            return Err(Error::UnsupportedMode(
                "perturbation test needs a two-group fit with phi_cases and phi_controls".into(),
            ));
        };
        let diffs: Vec<f64> = draws.iter_draws().map(|d| d[co] - d[ca]).collect();
        pathways.push(PathwayPerturbation {
            pathway: id.clone(),
            difference: summarize_difference(&diffs, level)?,
            truth: None,
        });
    }
    Ok(PerturbationReport {
        level,
        statistic: "phi_controls - phi_cases".into(),
        pathways,
        roc: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// (false positive rate, true positive rate), from (0, 0) to (1, 1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC curve over all score thresholds. Tied scores enter together, so the
/// trapezoidal AUC equals the Mann-Whitney statistic with ties counted as 1/2.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Result<RocCurve> {
    if scores.len() != truth.len() {
        return Err(Error::Schema(
            "scores and truth labels differ in length".into(),
        ));
    }
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        auc += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(RocCurve {
        points,
        auc: auc / (pos * neg) as f64,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointwiseWaic {
    pub subject: usize,
    pub time: usize,
    pub lppd: f64,
    pub p_waic: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaicReport {
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
    pub draws: usize,
    pub pointwise: Vec<PointwiseWaic>,
}

/// WAIC from a log-likelihood table of shape (draws, observations).
pub fn waic_from_loglik(loglik: &Array2<f64>) -> Result<WaicReport> {
    let (s, n) = loglik.dim();
    if s < 2 {
        return Err(Error::InsufficientDraws(format!(
            "WAIC needs at least 2 draws, got {s}"
        )));
    }
    let mut pointwise = Vec::with_capacity(n);
    for o in 0..n {
        let col: Vec<f64> = loglik.column(o).to_vec();
        let m = mean(&col);
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (s as f64 - 1.0);
        pointwise.push(PointwiseWaic {
            subject: 0,
            time: o,
            lppd: log_mean_exp(&col),
            p_waic: var,
        });
    }
    let lppd: f64 = pointwise.iter().map(|p| p.lppd).sum();
    let p_waic: f64 = pointwise.iter().map(|p| p.p_waic).sum();
    Ok(WaicReport {
        waic: -2.0 * (lppd - p_waic),
        lppd,
        p_waic,
        draws: s,
        pointwise,
    })
}

/// Per-draw log-likelihood of every (subject, time) vector, shape (draws, N T).
pub fn log_likelihood_table(draws: &PosteriorDraws, model: &Model) -> Result<Array2<f64>> {
    let Dims { n, t, .. } = model.dims();
    let all: Vec<&Vec<f64>> = draws.iter_draws().collect();
    let rows: Vec<Option<Array2<f64>>> = all
        .par_iter()
        .map(|d| model.pointwise_log_likelihood(&model.state_from_flat(d)))
        .collect();
    let mut table = Array2::zeros((all.len(), n * t));
    for (s, row) in rows.into_iter().enumerate() {
        let row = row.ok_or_else(|| {
            Error::Numeric(format!(
                "draw {s} has a non positive definite CAR precision"
            ))
        })?;
        for (o, v) in row.iter().enumerate() {
            table[[s, o]] = *v;
        }
    }
    Ok(table)
}

/// WAIC with the (subject, time) metabolite vector as the observation unit.
pub fn waic(draws: &PosteriorDraws, model: &Model) -> Result<WaicReport> {
    let t = model.dims().t;
    let mut report = waic_from_loglik(&log_likelihood_table(draws, model)?)?;
    for (o, p) in report.pointwise.iter_mut().enumerate() {
        p.subject = o / t;
        p.time = o % t;
    }
    Ok(report)
}

/// Sample covariance of the first `m` metabolites over the pooled (subject, time) rows.
pub fn pooled_covariance(x: &Array3<f64>, m: usize) -> DMatrix<f64> {
    let (n, t, _) = x.dim();
    let rows = (n * t) as f64;
    let mut means = vec![0.0; m];
    for i in 0..n {
        for tt in 0..t {
            for j in 0..m {
                means[j] += x[[i, tt, j]];
            }
        }
    }
    for v in &mut means {
        *v /= rows;
    }
    let mut cov = DMatrix::zeros(m, m);
    for i in 0..n {
        for tt in 0..t {
            for a in 0..m {
                let da = x[[i, tt, a]] - means[a];
                for b in 0..=a {
                    cov[(a, b)] += da * (x[[i, tt, b]] - means[b]);
                }
            }
        }
    }
    for a in 0..m {
        for b in 0..=a {
            cov[(a, b)] /= rows - 1.0;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    cov
}

/// Mean elementwise absolute difference between the observed and replicated
/// covariance of the first `m` metabolites, averaged over replicates.
pub fn covariance_mad(observed: &Array3<f64>, replicates: &[Array3<f64>], m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::Domain(format!(
            "covariance check needs at least 2 metabolites, got {m}"
        )));
    }
    if m > observed.dim().2 {
        return Err(Error::Domain(format!(
            "metabolite count {m} exceeds the {} available",
            observed.dim().2
        )));
    }
    if replicates.is_empty() {
        return Err(Error::InsufficientDraws(
            "no posterior predictive replicates".into(),
        ));
    }
    let obs = pooled_covariance(observed, m);
    let total: f64 = replicates
        .iter()
        .map(|r| (&obs - pooled_covariance(r, m)).abs().mean())
        .sum();
    Ok(total / replicates.len() as f64)
}

/// Draws one dataset from `x_it ~ N(mu_it, (I - C(phi^e))^-1 sigma2)`.
pub fn simulate_observations<R: Rng + ?Sized>(
    model: &Model,
    state: &ParameterState,
    rng: &mut R,
) -> Result<Array3<f64>> {
    let Dims { n, t, m, .. } = model.dims();
    let factors = model
        .factors(&state.phi)
        .ok_or_else(|| Error::NotPositiveDefinite {
            phi: state.phi.concat(),
        })?;
    let upper: Vec<DMatrix<f64>> = factors.iter().map(|f| f.lower().transpose()).collect();
    let mu = model.mean(state);
    let sd = state.sigma2.sqrt();
    let mut x = Array3::zeros((n, t, m));
    for i in 0..n {
        let u = &upper[model.phi_row(i)];
        for tt in 0..t {
            let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            // L' w = z gives Cov(w) = (L L')^-1
            let w = u
                .solve_upper_triangular(&z)
                .ok_or_else(|| Error::Numeric("singular CAR factor".into()))?;
            for j in 0..m {
                x[[i, tt, j]] = mu[[i, tt, j]] + sd * w[j];
            }
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PpcEntry {
    pub metabolites: usize,
    pub mad: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PpcReport {
    pub replicates: usize,
    /// Rows over which covariances are computed.
    pub covariance_rows: String,
    pub entries: Vec<PpcEntry>,
}

/// Posterior-predictive covariance check. `replicates` draws are taken evenly from the
/// pooled chains; each generates one replicated dataset with its own RNG stream.
pub fn ppc_mad(
    draws: &PosteriorDraws,
    model: &Model,
    metabolite_counts: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<PpcReport> {
    for &c in metabolite_counts {
        if c < 2 {
            return Err(Error::Domain(format!(
                "covariance check needs at least 2 metabolites, got {c}"
            )));
        }
        if c > model.dims().m {
            return Err(Error::Domain(format!(
                "metabolite count {c} exceeds the {} available",
                model.dims().m
            )));
        }
    }
    let all: Vec<&Vec<f64>> = draws.iter_draws().collect();
    if all.is_empty() || replicates == 0 {
        return Err(Error::InsufficientDraws(
            "posterior predictive check needs draws".into(),
        ));
    }
    let picks: Vec<usize> = (0..replicates)
        .map(|r| r * all.len() / replicates)
        .collect();
    let sims: Vec<Array3<f64>> = picks
        .par_iter()
        .enumerate()
        .map(|(r, &d)| {
            let mut rng = chain_rng(seed, r);
            simulate_observations(model, &model.state_from_flat(all[d]), &mut rng)
        })
        .collect::<Result<_>>()?;
    let entries = metabolite_counts
        .iter()
        .map(|&c| {
            Ok(PpcEntry {
                metabolites: c,
                mad: covariance_mad(&model.data().x, &sims, c)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PpcReport {
        replicates,
        covariance_rows: "pooled subject x time rows".into(),
        entries,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupResiduals {
    pub group: String,
    pub residuals: Vec<f64>,
    /// (theoretical normal quantile, empirical quantile), ascending.
    pub qq: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    pub groups: Vec<GroupResiduals>,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub mean_abs: f64,
}

/// Normal QQ pairs using plotting positions `(i - 1/2) / n`.
pub fn qq_pairs(values: &[f64]) -> Vec<(f64, f64)> {
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter()
        .enumerate()
        .map(|(i, e)| (std.inverse_cdf((i as f64 + 0.5) / n), e))
        .collect()
}

/// Residuals `Psi_e^-1 (x_it - mu_it)` with `Psi_e` the lower Cholesky factor of the
/// covariance `(I - C(phi^e))^-1 sigma2`, evaluated at `state`.
pub fn whiten_at(model: &Model, state: &ParameterState) -> Result<ResidualReport> {
    let Dims { n, t, m, .. } = model.dims();
    let layout = model.layout();
    let mut psi = Vec::with_capacity(state.phi.len());
    for row in &state.phi {
        let f = CarFactor::new(row, model.design())?;
        let cov = f.inverse() * state.sigma2;
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite { phi: row.clone() })?;
        psi.push(chol.l());
    }
    let mu = model.mean(state);
    let mut per_row: Vec<Vec<f64>> = vec![Vec::new(); state.phi.len()];
    for i in 0..n {
        let g = model.phi_row(i);
        for tt in 0..t {
            let r = DVector::from_fn(m, |j, _| model.data().x[[i, tt, j]] - mu[[i, tt, j]]);
            let w = psi[g]
                .solve_lower_triangular(&r)
                .ok_or_else(|| Error::Numeric("singular covariance factor".into()))?;
            per_row[g].extend(w.iter());
        }
    }
    let pooled: Vec<f64> = per_row.iter().flatten().copied().collect();
    let (skewness, excess_kurtosis) = skewness_kurtosis(&pooled);
    Ok(ResidualReport {
        groups: per_row
            .into_iter()
            .enumerate()
            .map(|(g, residuals)| GroupResiduals {
                group: match layout.phi_row_name(g) {
                    "phi_cases" => "cases".into(),
                    "phi_controls" => "controls".into(),
                    _ => "all".into(),
                },
                qq: qq_pairs(&residuals),
                residuals,
            })
            .collect(),
        skewness,
        excess_kurtosis,
        mean_abs: pooled.iter().map(|v| v.abs()).sum::<f64>() / pooled.len() as f64,
    })
}

/// Posterior mean state. The mean `mu` is linear in the state, so `mu` at this point is
/// the posterior mean of `mu`.
pub fn posterior_mean_state(draws: &PosteriorDraws, model: &Model) -> Result<ParameterState> {
    if draws.total_draws() == 0 {
        return Err(Error::InsufficientDraws("no posterior draws".into()));
    }
    Ok(model.state_from_flat(&draws.means()))
}

/// Whitened residuals at the posterior means of phi, sigma2 and mu.
pub fn whitened_residuals(draws: &PosteriorDraws, model: &Model) -> Result<ResidualReport> {
    whiten_at(model, &posterior_mean_state(draws, model)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BetaSummary {
    pub metabolite: String,
    pub covariate: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub selected: bool,
    pub kappa_mean: f64,
    pub kappa_median: f64,
    pub kappa_lower: f64,
    pub kappa_upper: f64,
}

/// Credible intervals for every cross-omic coefficient with shrinkage summaries.
pub fn beta_summary(draws: &PosteriorDraws, model: &Model, level: f64) -> Result<Vec<BetaSummary>> {
    let Dims { m, k, .. } = model.dims();
    if k == 0 {
        return Ok(Vec::new());
    }
    if draws.total_draws() == 0 {
        return Err(Error::InsufficientDraws("no posterior draws".into()));
    }
    let layout = model.layout();
    let tau = model.config().tau;
    let mut out = Vec::with_capacity(m * k);
    for j in 0..m {
        for kk in 0..k {
            let b = draws.pooled(layout.beta_index(j, kk));
            let kap: Vec<f64> = draws
                .iter_draws()
                .map(|d| {
                    kappa(
                        d[layout.lambda_index(j, kk)],
                        d[layout.sigma_beta.start + j],
                        tau,
                    )
                })
                .collect();
            let (lower, upper) = equal_tailed(&b, level);
            let (kl, ku) = equal_tailed(&kap, level);
            out.push(BetaSummary {
                metabolite: model.data().metabolites[j].clone(),
                covariate: model.covariate_names()[kk].clone(),
                mean: mean(&b),
                lower,
                upper,
                selected: lower > 0.0 || upper < 0.0,
                kappa_mean: mean(&kap),
                kappa_median: quantile(&kap, 0.5),
                kappa_lower: kl,
                kappa_upper: ku,
            });
        }
    }
    Ok(out)
}
