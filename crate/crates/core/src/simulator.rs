//! Synthetic studies: random pathway membership, group-specific phi with a perturbation
//! mixture, full data generation from the model, and corruption of the pathway design.
//!
//! Simulated pathways are complete subgraphs over their members, so every shortest path
//! has length one and the fitted design coincides with the generating one.

use std::collections::BTreeMap;

use nalgebra::DVector;
use ndarray::{Array2, Array3};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::car::{build_pathway_design, CarFactor, PathwayDesign};
use crate::data::{Dataset, Group, Pathway, PathwayGraph};
use crate::error::{Error, Result};
use crate::model::{InverseGamma, ParameterState, PriorBounds};
use crate::sampler::chain_rng;

/// Distributions for parameters the generating model leaves open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationPriors {
    pub alpha_sd: f64,
    /// theta ~ U(-theta_max, theta_max).
    pub theta_max: f64,
    pub sigma_nu2: InverseGamma,
    pub sigma_gamma2: InverseGamma,
    pub sigma_beta: f64,
    pub sigma2: f64,
}

impl Default for SimulationPriors {
    fn default() -> Self {
        Self {
            alpha_sd: 1.0,
            theta_max: 0.6,
            sigma_nu2: InverseGamma {
                shape: 3.0,
                scale: 2.0,
            },
            sigma_gamma2: InverseGamma {
                shape: 3.0,
                scale: 2.0,
            },
            sigma_beta: 1.0,
            sigma2: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub n: usize,
    pub t: usize,
    pub m: usize,
    pub k: usize,
    pub p: usize,
    /// Subjects labelled cases (the first ones); `None` means `ceil(N / 2)`.
    pub n_cases: Option<usize>,
    pub tau: f64,
    pub pi_omega: f64,
    pub rho: f64,
    pub sigma_phi2: f64,
    /// SD of the unperturbed phi component.
    pub psi_sim: f64,
    /// Probability of a metabolite belonging to this many pathways.
    pub density: BTreeMap<usize, f64>,
    pub priors: SimulationPriors,
    pub seed: u64,
    /// Fraction of each pathway's members falsely reassigned in the fitted design.
    pub corruption: f64,
    pub replicates: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n: 22,
            t: 7,
            m: 40,
            k: 1,
            p: 11,
            n_cases: None,
            tau: 1.2,
            pi_omega: 0.7,
            rho: 0.05,
            sigma_phi2: 0.2,
            psi_sim: 10.0,
            density: BTreeMap::from([(1, 0.55), (2, 0.25), (3, 0.12), (4, 0.08)]),
            priors: SimulationPriors::default(),
            seed: 1,
            corruption: 0.0,
            replicates: 1,
        }
    }
}

impl SimulationConfig {
    pub fn n_cases(&self) -> usize {
        self.n_cases.unwrap_or(self.n.div_ceil(2))
    }

    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        for (field, v) in [("n", self.n), ("t", self.t), ("m", self.m), ("p", self.p)] {
            if v == 0 {
                return err(field, "must be at least 1".into());
            }
        }
        if self.n_cases() == 0 || self.n_cases() >= self.n {
            return err(
                "n_cases",
                format!("must leave both groups non-empty (N = {})", self.n),
            );
        }
        if !(0.0..=1.0).contains(&self.pi_omega) {
            return err(
                "pi_omega",
                format!("must lie in [0, 1], got {}", self.pi_omega),
            );
        }
        if !(self.rho >= 0.0) {
            return err("rho", format!("must be non-negative, got {}", self.rho));
        }
        if !(self.sigma_phi2 >= 0.0) || !(self.psi_sim > 0.0) {
            return err("sigma_phi2", "variances must be non-negative".into());
        }
        if !(self.tau > 0.0) {
            return err("tau", format!("must be positive, got {}", self.tau));
        }
        if !(0.0..=1.0).contains(&self.corruption) {
            return err(
                "corruption",
                format!("must lie in [0, 1], got {}", self.corruption),
            );
        }
        if self.replicates == 0 {
            return err("replicates", "must be at least 1".into());
        }
        if self.density.is_empty()
            || self.density.iter().any(|(&c, &w)| c == 0 || !(w >= 0.0))
            || !(self.density.values().sum::<f64>() > 0.0)
        {
            return err(
                "density",
                "needs positive counts with non-negative weights".into(),
            );
        }
        let pr = &self.priors;
        if !(pr.theta_max >= 0.0 && pr.theta_max < 1.0) {
            return err("priors.theta_max", "must lie in [0, 1)".into());
        }
        if !(pr.sigma2 >= 0.0 && pr.sigma_beta > 0.0 && pr.alpha_sd >= 0.0) {
            return err("priors", "scales must be non-negative".into());
        }
        Ok(())
    }
}

fn complete_edges(members: &[usize]) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for (a, &x) in members.iter().enumerate() {
        for &y in &members[a + 1..] {
            edges.push((x.min(y), x.max(y)));
        }
    }
    edges
}

pub fn pathway_id(p: usize) -> String {
    format!("pathway_{:02}", p + 1)
}

/// Assigns each metabolite to a number of uniformly chosen pathways drawn from
/// `density` (counts above `P` are capped at `P`). Pathways are complete subgraphs.
pub fn simulate_membership<R: Rng + ?Sized>(
    m: usize,
    p: usize,
    density: &BTreeMap<usize, f64>,
    rng: &mut R,
) -> Result<PathwayGraph> {
    if p == 0 {
        return Err(Error::Config(
            "p: simulated designs need at least one pathway".into(),
        ));
    }
    let counts: Vec<usize> = density.keys().copied().collect();
    let weights: Vec<f64> = density.values().copied().collect();
    let pick = rand::distributions::WeightedIndex::new(&weights)
        .map_err(|e| Error::Config(format!("density: {e}")))?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); p];
    for j in 0..m {
        let c = counts[pick.sample(rng)].min(p);
        for pp in sample(rng, p, c) {
            members[pp].push(j);
        }
    }
    Ok(PathwayGraph {
        pathways: members
            .into_iter()
            .enumerate()
            .map(|(pp, mem)| Pathway {
                id: pathway_id(pp),
                edges: complete_edges(&mem),
                members: mem,
            })
            .collect(),
        unresolved: Vec::new(),
    })
}

/// Truncated normal on `[lo, hi]` by inverse CDF. A zero SD returns the clamped mean.
fn truncated_normal<R: Rng + ?Sized>(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    if !(sd > 0.0) {
        return mean.clamp(lo, hi);
    }
    let d = Normal::new(mean, sd).expect("valid normal");
    let (a, b) = (d.cdf(lo), d.cdf(hi));
    if !(b > a) {
        // all mass beyond one end at double precision
        return if mean < lo { lo } else { hi };
    }
    let u: f64 = rng.gen_range(a..b);
    d.inverse_cdf(u).clamp(lo, hi)
}

/// Margin keeping simulated phi strictly inside its open interval.
const PHI_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiTruth {
    pub phi_cases: Vec<f64>,
    pub phi_controls: Vec<f64>,
    pub perturbed: Vec<bool>,
}

pub fn simulate_phi<R: Rng + ?Sized>(
    design: &PathwayDesign,
    cfg: &SimulationConfig,
    rng: &mut R,
) -> PhiTruth {
    let sd = cfg.sigma_phi2.sqrt();
    let mut out = PhiTruth {
        phi_cases: Vec::with_capacity(design.len()),
        phi_controls: Vec::with_capacity(design.len()),
        perturbed: Vec::with_capacity(design.len()),
    };
    for op in &design.pathways {
        let eps = PHI_MARGIN * op.width();
        let (lo, hi) = (op.lower + eps, op.upper - eps);
        let omega = rng.gen_bool(cfg.pi_omega);
        if omega {
            out.phi_controls
                .push(truncated_normal(op.upper - cfg.rho, sd, 0.0, hi, rng));
            out.phi_cases
                .push(truncated_normal(op.lower + cfg.rho, sd, lo, 0.0, rng));
        } else {
            let v = truncated_normal(0.0, cfg.psi_sim, lo, hi, rng);
            out.phi_controls.push(v);
            out.phi_cases.push(v);
        }
        out.perturbed.push(omega);
    }
    out
}

/// Everything drawn while generating a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub pathway_ids: Vec<String>,
    pub perturbed: Vec<bool>,
    pub phi: PhiTruth,
    /// Parameter values in the layout of a two-group fit (phi rows: cases, controls).
    pub state: ParameterState,
    pub tau: f64,
    pub priors: SimulationPriors,
}

fn inverse_gamma<R: Rng + ?Sized>(ig: InverseGamma, max: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(ig.shape, 1.0 / ig.scale)
        .map_err(|e| Error::Config(format!("inverse gamma {ig:?}: {e}")))?;
    // redraw values beyond the fitted model's flat-prior bound
    for _ in 0..1000 {
        let v = 1.0 / g.sample(rng);
        if v <= max {
            return Ok(v);
        }
    }
    Err(Error::Config(format!(
        "inverse gamma {ig:?} puts almost no mass below {max}"
    )))
}

/// Generates one dataset given the design and both phi vectors.
pub fn simulate_dataset<R: Rng + ?Sized>(
    design: &PathwayDesign,
    phi: &PhiTruth,
    cfg: &SimulationConfig,
    rng: &mut R,
) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let (n, t, m, k) = (cfg.n, cfg.t, cfg.m, cfg.k);
    if design.n_metabolites != m {
        return Err(Error::Schema(format!(
            "design covers {} metabolites, configuration asks for {m}",
            design.n_metabolites
        )));
    }
    let pr = &cfg.priors;
    let bounds = PriorBounds::default();
    let normal = |rng: &mut R| -> f64 { rng.sample(StandardNormal) };

    let theta: Vec<f64> = (0..m)
        .map(|_| {
            if pr.theta_max > 0.0 {
                rng.gen_range(-pr.theta_max..pr.theta_max)
            } else {
                0.0
            }
        })
        .collect();
    let sigma_nu2 = (0..m)
        .map(|_| inverse_gamma(pr.sigma_nu2, bounds.sigma_nu2_max, rng))
        .collect::<Result<Vec<_>>>()?;
    let sigma_gamma2 = (0..m)
        .map(|_| inverse_gamma(pr.sigma_gamma2, f64::INFINITY, rng))
        .collect::<Result<Vec<_>>>()?;
    let alpha: Vec<f64> = (0..m)
        .map(|_| (pr.alpha_sd * normal(rng)).clamp(bounds.alpha_min, bounds.alpha_max))
        .collect();
    let half_t = StudentT::new(cfg.tau).map_err(|e| Error::Config(format!("tau: {e}")))?;
    let lambda = Array2::from_shape_fn((m, k), |_| half_t.sample(rng).abs());
    let beta = Array2::from_shape_fn((m, k), |(j, kk)| {
        lambda[[j, kk]] * pr.sigma_beta * normal(rng)
    });
    let gamma = Array2::from_shape_fn((n, m), |(_, j)| sigma_gamma2[j].sqrt() * normal(rng));
    let mut nu = Array3::zeros((n, t, m));
    for i in 0..n {
        for j in 0..m {
            let snu = sigma_nu2[j].sqrt();
            let mut prev = snu / (1.0 - theta[j] * theta[j]).sqrt() * normal(rng);
            nu[[i, 0, j]] = prev;
            for tt in 1..t {
                prev = theta[j] * prev + snu * normal(rng);
                nu[[i, tt, j]] = prev;
            }
        }
    }
    let y = Array3::from_shape_fn((n, t, k), |_| normal(rng));

    let n_cases = cfg.n_cases();
    let groups: Vec<Group> = (0..n)
        .map(|i| {
            if i < n_cases {
                Group::Cases
            } else {
                Group::Controls
            }
        })
        .collect();
    let uppers = [&phi.phi_cases, &phi.phi_controls]
        .map(|row| CarFactor::new(row, design).map(|f| f.lower().transpose()));
    let [cases_u, controls_u] = uppers;
    let (cases_u, controls_u) = (cases_u?, controls_u?);
    let sd = pr.sigma2.sqrt();
    let mut x = Array3::zeros((n, t, m));
    for i in 0..n {
        let u = if groups[i] == Group::Cases {
            &cases_u
        } else {
            &controls_u
        };
        for tt in 0..t {
            let z = DVector::from_fn(m, |_, _| normal(rng));
            let w = u
                .solve_upper_triangular(&z)
                .ok_or_else(|| Error::Numeric("singular CAR factor".into()))?;
            for j in 0..m {
                let mut mu = alpha[j] + gamma[[i, j]] + nu[[i, tt, j]];
                for kk in 0..k {
                    mu += y[[i, tt, kk]] * beta[[j, kk]];
                }
                x[[i, tt, j]] = mu + sd * w[j];
            }
        }
    }
    let dataset = Dataset {
        x,
        y,
        groups,
        subjects: (0..n).map(|i| format!("s{:02}", i + 1)).collect(),
        metabolites: (0..m).map(|j| format!("m{:02}", j + 1)).collect(),
        covariates: (0..k).map(|kk| format!("c{:02}", kk + 1)).collect(),
    };
    let truth = GroundTruth {
        pathway_ids: design.pathways.iter().map(|p| p.id.clone()).collect(),
        perturbed: phi.perturbed.clone(),
        phi: phi.clone(),
        state: ParameterState {
            phi: vec![phi.phi_cases.clone(), phi.phi_controls.clone()],
            sigma2: pr.sigma2,
            alpha,
            gamma,
            nu,
            theta,
            beta,
            lambda,
            sigma_beta: vec![pr.sigma_beta; m],
            sigma_gamma2,
            sigma_nu2,
        },
        tau: cfg.tau,
        priors: pr.clone(),
    };
    Ok((dataset, truth))
}

/// Moves a fraction `y` of each pathway's members: each moved metabolite is either
/// dropped from every pathway or reassigned to a pathway it did not belong to, with equal
/// probability. Edges among retained members are kept; a reassigned metabolite is
/// connected to every member of its new pathway.
pub fn corrupt_design<R: Rng + ?Sized>(graph: &PathwayGraph, y: f64, rng: &mut R) -> PathwayGraph {
    let y = y.clamp(0.0, 1.0);
    let p = graph.len();
    let mut removed: Vec<Vec<usize>> = vec![Vec::new(); p];
    let mut dropped: Vec<usize> = Vec::new();
    let mut added: Vec<Vec<usize>> = vec![Vec::new(); p];
    for (pp, pw) in graph.pathways.iter().enumerate() {
        let count = (y * pw.members.len() as f64).round() as usize;
        for idx in sample(rng, pw.members.len(), count) {
            let j = pw.members[idx];
            removed[pp].push(j);
            let targets: Vec<usize> = (0..p)
                .filter(|&q| !graph.pathways[q].members.contains(&j))
                .collect();
            if rng.gen_bool(0.5) || targets.is_empty() {
                dropped.push(j);
            } else {
                added[targets[rng.gen_range(0..targets.len())]].push(j);
            }
        }
    }
    let pathways = graph
        .pathways
        .iter()
        .enumerate()
        .map(|(pp, pw)| {
            let keep = |j: &usize| !removed[pp].contains(j) && !dropped.contains(j);
            let mut members: Vec<usize> = pw.members.iter().copied().filter(keep).collect();
            let mut edges: Vec<(usize, usize)> = pw
                .edges
                .iter()
                .copied()
                .filter(|(a, b)| keep(a) && keep(b))
                .collect();
            for &j in &added[pp] {
                if members.contains(&j) {
                    continue;
                }
                for &o in &members {
                    edges.push((j.min(o), j.max(o)));
                }
                members.push(j);
            }
            Pathway {
                id: pw.id.clone(),
                members,
                edges,
            }
        })
        .collect();
    PathwayGraph {
        pathways,
        unresolved: graph.unresolved.clone(),
    }
}

/// One simulated study: the generating graph, the (possibly corrupted) graph given to
/// the fit, the data and the truth.
#[derive(Debug, Clone)]
pub struct SimulatedStudy {
    pub graph: PathwayGraph,
    pub fit_graph: PathwayGraph,
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

/// Generates replicate `r` from its own RNG stream of `cfg.seed`.
pub fn simulate_study(cfg: &SimulationConfig, replicate: usize) -> Result<SimulatedStudy> {
    cfg.validate()?;
    let mut rng = chain_rng(cfg.seed, replicate);
    let graph = simulate_membership(cfg.m, cfg.p, &cfg.density, &mut rng)?;
    let design = build_pathway_design(&graph, cfg.m);
    let phi = simulate_phi(&design, cfg, &mut rng);
    let (dataset, truth) = simulate_dataset(&design, &phi, cfg, &mut rng)?;
    let fit_graph = if cfg.corruption > 0.0 {
        corrupt_design(&graph, cfg.corruption, &mut rng)
    } else {
        graph.clone()
    };
    Ok(SimulatedStudy {
        graph,
        fit_graph,
        dataset,
        truth,
    })
}
