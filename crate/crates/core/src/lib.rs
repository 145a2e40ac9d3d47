//! Bayesian hierarchical model for short time-course metabolomics with
//! pathway-structured CAR covariance, horseshoe shrinkage of cross-omic effects and
//! mixed effects with AR(1) temporal terms, fitted by Hamiltonian Monte Carlo.
//!
//! Typical pipeline:
//!
//! ```no_run
//! use icarh::{build_pathway_design, load_dataset, load_pathways, standardize, CsvSchema};
//! use icarh::{run_hmc, Model, ModelConfig, SamplerConfig};
//!
//! let raw = load_dataset("data.csv", &CsvSchema::default())?;
//! let (data, _scaling) = standardize(&raw)?;
//! let graph = load_pathways("pathways.json", &data)?;
//! let design = build_pathway_design(&graph, data.n_metabolites());
//! let model = Model::new(data, design, &ModelConfig::with_tau(1.2))?;
//! let draws = run_hmc(&model, &SamplerConfig::default())?;
//! # Ok::<(), icarh::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod car;
pub mod data;
pub mod error;
pub mod model;
mod quad;
pub mod sampler;
pub mod simulator;
pub mod stats;

pub use analysis::{
    beta_summary, phi_difference_test, ppc_mad, roc_auc, waic, waic_from_loglik,
    whitened_residuals, BetaSummary, PerturbationReport, PpcReport, ResidualReport, RocCurve,
    WaicReport,
};
pub use car::{
    build_pathway_design, car_gaussian_logpdf, car_matrix, phi_logdet_gradient, CarFactor,
    PathwayDesign, PathwayOperator,
};
pub use data::{
    load_dataset, load_pathways, save_dataset, standardize, CsvSchema, Dataset, Group, Pathway,
    PathwayFile, PathwayGraph, ScalingReport,
};
pub use error::{Error, Result};
pub use model::{
    calibrate_tau, conditional_beta_mean, expected_kappa, kappa, kappa_density, Dims, Layout,
    Model, ModelConfig, ParameterState, PhiPrior,
};
pub use sampler::{
    run_hmc, PosteriorDraws, SamplerConfig, SummaryReport, Target, TrajectoryLength,
};
pub use simulator::{
    corrupt_design, simulate_dataset, simulate_membership, simulate_phi, simulate_study,
    GroundTruth, PhiTruth, SimulatedStudy, SimulationConfig,
};
