//! Hamiltonian Monte Carlo with a fixed (jittered) number of leapfrog steps.
//!
//! Warmup tunes the step size by dual averaging and a diagonal inverse metric from
//! windowed draw variances. Chains run in parallel on the ambient rayon pool.
//!
//! Chain `c` draws from a ChaCha8 stream seeded with the run seed and stream id `c + 1`,
//! so results depend only on `(seed, config, target)` and are identical across thread
//! counts. All floating-point reductions inside a chain run in a fixed order.

mod adapt;
pub mod diagnostics;
mod draws;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adapt::{DualAveraging, RunningVariance, WindowSchedule};
pub use diagnostics::{
    diagnostics, effective_sample_size, split_r_hat, ParameterDiagnostics, RunDiagnostics,
};
pub use draws::{ChainDraws, ParameterSummary, PosteriorDraws, SummaryReport};

use crate::error::{Error, Result};

/// A differentiable log-density over unconstrained coordinates.
pub trait Target: Sync {
    fn dim(&self) -> usize;

    /// Returns the log-density and writes its gradient into `grad`.
    /// Outside the support the value is `-inf` and the gradient is unspecified.
    fn log_density_and_grad(&self, position: &[f64], grad: &mut [f64]) -> f64;

    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn parameter_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("x[{i}]")).collect()
    }

    /// Maps an unconstrained position to the reported (constrained) values.
    fn constrain(&self, position: &[f64], out: &mut [f64]) {
        out.copy_from_slice(position);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryLength {
    /// Nominal leapfrog steps; each iteration draws uniformly from `[0.8 L, 1.2 L]`.
    Steps(usize),
    /// Nominal integration time `L * eps`, capped by `max_steps`.
    Time { length: f64, max_steps: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Total iterations per chain, warmup included.
    pub iterations: usize,
    pub warmup: usize,
    pub chains: usize,
    pub seed: u64,
    pub trajectory: TrajectoryLength,
    pub target_accept: f64,
    pub initial_step_size: f64,
    pub init_buffer: usize,
    pub term_buffer: usize,
    pub base_window: usize,
    /// Half-width of the uniform jitter added to the initial point.
    pub init_radius: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            warmup: 1000,
            chains: 4,
            seed: 1,
            trajectory: TrajectoryLength::Steps(32),
            target_accept: 0.8,
            initial_step_size: 0.1,
            init_buffer: 75,
            term_buffer: 50,
            base_window: 25,
            init_radius: 1.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        if self.warmup >= self.iterations {
            return Err(Error::Config(format!(
                "warmup ({}) must be less than iterations ({})",
                self.warmup, self.iterations
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("target_accept must lie in (0, 1)".into()));
        }
        if !(self.initial_step_size > 0.0) {
            return Err(Error::Config("initial_step_size must be positive".into()));
        }
        match self.trajectory {
            TrajectoryLength::Steps(0) => {
                Err(Error::Config("leapfrog steps must be positive".into()))
            }
            TrajectoryLength::Time { length, max_steps } if !(length > 0.0) || max_steps == 0 => {
                Err(Error::Config("trajectory length must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn draws_per_chain(&self) -> usize {
        self.iterations - self.warmup
    }
}

/// Phase-space point with cached log-density and gradient.
#[derive(Debug, Clone)]
pub struct PhasePoint {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
}

impl PhasePoint {
    pub fn new<T: Target + ?Sized>(target: &T, position: Vec<f64>, momentum: Vec<f64>) -> Self {
        let mut grad = vec![0.0; position.len()];
        let log_density = target.log_density_and_grad(&position, &mut grad);
        Self {
            position,
            momentum,
            log_density,
            grad,
        }
    }

    pub fn kinetic(&self, inv_metric: &[f64]) -> f64 {
        0.5 * self
            .momentum
            .iter()
            .zip(inv_metric)
            .map(|(p, m)| m * p * p)
            .sum::<f64>()
    }

    /// Total energy `-log p(q) + K(p)`.
    pub fn hamiltonian(&self, inv_metric: &[f64]) -> f64 {
        -self.log_density + self.kinetic(inv_metric)
    }
}

/// Runs `steps` leapfrog steps in place. Stops early (returning `false`) if the
/// log-density becomes non-finite.
pub fn leapfrog<T: Target + ?Sized>(
    target: &T,
    point: &mut PhasePoint,
    step_size: f64,
    steps: usize,
    inv_metric: &[f64],
) -> bool {
    let half = 0.5 * step_size;
    for _ in 0..steps {
        for (p, g) in point.momentum.iter_mut().zip(&point.grad) {
            *p += half * g;
        }
        for ((q, p), m) in point
            .position
            .iter_mut()
            .zip(&point.momentum)
            .zip(inv_metric)
        {
            *q += step_size * m * p;
        }
        point.log_density = target.log_density_and_grad(&point.position, &mut point.grad);
        if !point.log_density.is_finite() || point.grad.iter().any(|g| !g.is_finite()) {
            return false;
        }
        for (p, g) in point.momentum.iter_mut().zip(&point.grad) {
            *p += half * g;
        }
    }
    true
}

const DIVERGENCE_THRESHOLD: f64 = 1000.0;

struct Transition {
    accept_stat: f64,
    divergent: bool,
    steps: usize,
}

struct ChainRunner<'a, T: Target + ?Sized> {
    target: &'a T,
    cfg: &'a SamplerConfig,
    rng: ChaCha8Rng,
    inv_metric: Vec<f64>,
    current: PhasePoint,
}

impl<'a, T: Target + ?Sized> ChainRunner<'a, T> {
    fn sample_momentum(&mut self) -> Vec<f64> {
        let rng = &mut self.rng;
        self.inv_metric
            .iter()
            .map(|m| {
                let z: f64 = rng.sample(StandardNormal);
                z / m.sqrt()
            })
            .collect()
    }

    fn steps_for(&mut self, step_size: f64) -> usize {
        let nominal = match self.cfg.trajectory {
            TrajectoryLength::Steps(l) => l as f64,
            TrajectoryLength::Time { length, max_steps } => {
                (length / step_size).ceil().clamp(1.0, max_steps as f64)
            }
        };
        let lo = (0.8 * nominal).floor().max(1.0) as usize;
        let hi = (1.2 * nominal).ceil().max(lo as f64) as usize;
        self.rng.gen_range(lo..=hi)
    }

    fn transition(&mut self, step_size: f64) -> Transition {
        let momentum = self.sample_momentum();
        let steps = self.steps_for(step_size);
        self.current.momentum = momentum;
        let h0 = self.current.hamiltonian(&self.inv_metric);
        let mut proposal = self.current.clone();
        let ok = leapfrog(
            self.target,
            &mut proposal,
            step_size,
            steps,
            &self.inv_metric,
        );
        let h1 = if ok {
            proposal.hamiltonian(&self.inv_metric)
        } else {
            f64::INFINITY
        };
        let delta = h0 - h1;
        let divergent = !ok || !delta.is_finite() || -delta > DIVERGENCE_THRESHOLD;
        let accept_stat = if delta.is_finite() {
            delta.min(0.0).exp()
        } else {
            0.0
        };
        let u: f64 = self.rng.gen();
        if !divergent && u.ln() < delta {
            self.current = proposal;
        }
        Transition {
            accept_stat,
            divergent,
            steps,
        }
    }

    /// Doubles or halves the step size until the one-step acceptance crosses 0.5.
    fn find_reasonable_step(&mut self, initial: f64) -> f64 {
        let mut eps = initial;
        let momentum = self.sample_momentum();
        let mut probe = self.current.clone();
        probe.momentum = momentum;
        let h0 = probe.hamiltonian(&self.inv_metric);
        let log_ratio = |runner: &Self, eps: f64| {
            let mut p = probe.clone();
            if leapfrog(runner.target, &mut p, eps, 1, &runner.inv_metric) {
                let v = h0 - p.hamiltonian(&runner.inv_metric);
                if v.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    v
                }
            } else {
                f64::NEG_INFINITY
            }
        };
        let first = log_ratio(self, eps);
        let direction = if first > 0.5f64.ln() { 1.0 } else { -1.0 };
        for _ in 0..50 {
            let r = log_ratio(self, eps);
            if direction * r <= direction * 0.5f64.ln() {
                break;
            }
            eps *= 2f64.powf(direction);
            if !(1e-10..=1e4).contains(&eps) {
                break;
            }
        }
        eps.clamp(1e-10, 1e4)
    }
}

fn initialize<T: Target + ?Sized>(
    target: &T,
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PhasePoint> {
    let base = target.initial_point();
    if base.len() != target.dim() {
        return Err(Error::Initialization(
            "initial point has the wrong dimension".into(),
        ));
    }
    const RETRIES: usize = 100;
    for _ in 0..RETRIES {
        let position: Vec<f64> = base
            .iter()
            .map(|b| b + rng.gen_range(-cfg.init_radius..=cfg.init_radius))
            .collect();
        let point = PhasePoint::new(target, position, vec![0.0; target.dim()]);
        if point.log_density.is_finite() && point.grad.iter().all(|g| g.is_finite()) {
            return Ok(point);
        }
    }
    Err(Error::Initialization(format!(
        "no finite log-density and gradient after {RETRIES} jittered starts"
    )))
}

pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64 + 1);
    rng
}

fn run_chain<T: Target + ?Sized>(
    target: &T,
    cfg: &SamplerConfig,
    chain: usize,
) -> Result<ChainDraws> {
    let mut rng = chain_rng(cfg.seed, chain);
    let current = initialize(target, cfg, &mut rng)?;
    let dim = target.dim();
    let mut runner = ChainRunner {
        target,
        cfg,
        rng,
        inv_metric: vec![1.0; dim],
        current,
    };

    let schedule = WindowSchedule::new(
        cfg.warmup,
        cfg.init_buffer,
        cfg.term_buffer,
        cfg.base_window,
    );
    let window_ends = schedule.window_ends();
    let mut step = if cfg.warmup > 0 {
        runner.find_reasonable_step(cfg.initial_step_size)
    } else {
        cfg.initial_step_size
    };
    let mut da = DualAveraging::new(step, cfg.target_accept);
    let mut window = RunningVariance::new(dim);
    let mut warmup_divergences = 0;

    for it in 0..cfg.warmup {
        let tr = runner.transition(da.current());
        warmup_divergences += tr.divergent as usize;
        da.update(tr.accept_stat);
        if schedule.in_slow_phase(it) {
            window.add(&runner.current.position);
        }
        if window_ends.contains(&it) && window.count() > 2 {
            runner.inv_metric = window.regularized();
            window = RunningVariance::new(dim);
            step = runner.find_reasonable_step(da.current());
            da = DualAveraging::new(step, cfg.target_accept);
        }
    }
    let step_size = if cfg.warmup > 0 {
        da.final_step()
    } else {
        step
    };

    let n_draws = cfg.draws_per_chain();
    let mut out = ChainDraws {
        chain,
        draws: Vec::with_capacity(n_draws),
        log_density: Vec::with_capacity(n_draws),
        accept_stat: Vec::with_capacity(n_draws),
        divergent: Vec::with_capacity(n_draws),
        n_leapfrog: Vec::with_capacity(n_draws),
        step_size,
        inv_metric: runner.inv_metric.clone(),
        warmup_divergences,
    };
    for _ in 0..n_draws {
        let tr = runner.transition(step_size);
        let mut constrained = vec![0.0; dim];
        target.constrain(&runner.current.position, &mut constrained);
        out.draws.push(constrained);
        out.log_density.push(runner.current.log_density);
        out.accept_stat.push(tr.accept_stat);
        out.divergent.push(tr.divergent);
        out.n_leapfrog.push(tr.steps);
    }
    Ok(out)
}

/// Runs all chains (in parallel) and collects post-warmup draws in chain order.
pub fn run_hmc<T: Target + ?Sized>(target: &T, cfg: &SamplerConfig) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let chains: Vec<Result<ChainDraws>> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(target, cfg, c))
        .collect();
    let chains = chains.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(PosteriorDraws {
        parameter_names: target.parameter_names(),
        chains,
    })
}
