//! Acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero if any
//! criterion fails. Desk-scale fits make this the slow target of the workspace.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use icarh::{
    build_pathway_design, car_gaussian_logpdf, conditional_beta_mean, kappa, kappa_density,
    phi_difference_test, ppc_mad, run_hmc, simulate_study, standardize, waic_from_loglik,
    whitened_residuals, CarFactor, Dataset, Group, Model, ModelConfig, Pathway, PathwayDesign,
    PathwayGraph, PhiPrior, PosteriorDraws, SamplerConfig, SimulationConfig, Target,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{array, Array2, Array3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StudentT};

struct Verdict {
    id: usize,
    pass: bool,
    detail: String,
}

fn report(v: &Verdict, secs: f64) {
    let mut out = std::io::stdout().lock();
    let tag = if v.pass { "PASS" } else { "FAIL" };
    writeln!(
        out,
        "criterion {:>2}: {tag}  {} [{secs:.1} s]",
        v.id, v.detail
    )
    .unwrap();
    out.flush().unwrap();
}

// ---------------------------------------------------------------- shared oracles

fn random_graph<R: Rng>(rng: &mut R, m: usize, p: usize) -> PathwayGraph {
    let pathways = (0..p)
        .map(|pp| {
            let size = rng.gen_range(2..=m.min(6));
            let members: Vec<usize> = sample(rng, m, size).into_vec();
            let mut edges: Vec<(usize, usize)> = members
                .windows(2)
                .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
                .collect();
            for _ in 0..size {
                let a = members[rng.gen_range(0..size)];
                let b = members[rng.gen_range(0..size)];
                if a != b && !edges.contains(&(a.min(b), a.max(b))) {
                    edges.push((a.min(b), a.max(b)));
                }
            }
            Pathway {
                id: format!("p{pp}"),
                members,
                edges,
            }
        })
        .collect();
    PathwayGraph {
        pathways,
        unresolved: vec![],
    }
}

fn random_dataset<R: Rng>(rng: &mut R, n: usize, t: usize, m: usize, k: usize) -> Dataset {
    Dataset {
        x: Array3::from_shape_fn((n, t, m), |_| rng.gen_range(-2.0..2.0)),
        y: Array3::from_shape_fn((n, t, k), |_| rng.gen_range(-2.0..2.0)),
        groups: (0..n)
            .map(|i| {
                if i % 2 == 0 {
                    Group::Cases
                } else {
                    Group::Controls
                }
            })
            .collect(),
        subjects: (0..n).map(|i| format!("s{i}")).collect(),
        metabolites: (0..m).map(|j| format!("m{j}")).collect(),
        covariates: (0..k).map(|c| format!("c{c}")).collect(),
    }
}

/// Sum of per-pathway `phi (G A + A G) / 2`, built from the raw operator fields.
fn direct_car(phi: &[f64], design: &PathwayDesign) -> DMatrix<f64> {
    let m = design.n_metabolites;
    let mut c = DMatrix::zeros(m, m);
    for (op, &f) in design.pathways.iter().zip(phi) {
        let g = DMatrix::from_diagonal(&op.weights);
        c += (&g * &op.adjacency + &op.adjacency * &g) * (0.5 * f);
    }
    c
}

fn dense_mvn(x: &[f64], mu: &[f64], cov: &DMatrix<f64>) -> f64 {
    let m = x.len();
    let r = DVector::from_iterator(m, x.iter().zip(mu).map(|(a, b)| a - b));
    let prec = cov.clone().try_inverse().unwrap();
    let det = cov.clone().lu().determinant();
    -0.5 * m as f64 * (2.0 * PI).ln() - 0.5 * det.ln() - 0.5 * (r.transpose() * prec * &r)[(0, 0)]
}

/// Composite 5-point Gauss-Legendre on `(0, 1)` after `x = (1 - cos(pi s)) / 2`.
fn integrate_unit(f: impl Fn(f64) -> f64, panels: usize) -> f64 {
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683,
        0.538_469_310_105_683,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_889,
        0.478_628_670_499_366,
        0.478_628_670_499_366,
        0.236_926_885_056_189,
        0.236_926_885_056_189,
    ];
    let h = 1.0 / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let c = (k as f64 + 0.5) * h;
        for (z, w) in NODES.iter().zip(WEIGHTS) {
            let s = c + 0.5 * h * z;
            let x = 0.5 * (1.0 - (PI * s).cos());
            total += w * 0.5 * h * f(x) * 0.5 * PI * (PI * s).sin();
        }
    }
    total
}

// ---------------------------------------------------------------- 1

fn gradient_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut bad = 0;
    let mut states = 0;
    let mut coords = 0;
    for (inst, prior) in [
        PhiPrior::Beta,
        PhiPrior::Uniform,
        PhiPrior::Beta,
        PhiPrior::Uniform,
    ]
    .into_iter()
    .enumerate()
    {
        let data = random_dataset(&mut rng, 4, 3, 6, 2);
        let design = build_pathway_design(&random_graph(&mut rng, 6, 3), 6);
        let cfg = ModelConfig {
            phi_prior: prior,
            two_group: inst % 2 == 0,
            ..ModelConfig::with_tau(1.2)
        };
        let model = Model::new(data, design, &cfg).unwrap();
        for _ in 0..5 {
            let u: Vec<f64> = (0..model.layout().dim)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let g = model.grad_log_joint(&u);
            let h = 1e-5;
            for i in 0..u.len() {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (model.log_density(&up) - model.log_density(&dn)) / (2.0 * h);
                let err = (g[i] - fd).abs();
                if err > (1e-5 * fd.abs()).max(1e-8) {
                    bad += 1;
                }
                worst = worst.max(err / fd.abs().max(1e-3));
                coords += 1;
            }
            states += 1;
        }
    }
    Verdict {
        id: 1,
        pass: bad == 0,
        detail: format!(
            "{states} states, {coords} coordinates, {bad} outside 1e-5 rel / 1e-8 abs (worst scaled error {worst:.2e})"
        ),
    }
}

// ---------------------------------------------------------------- 2

/// Maximum distance between the empirical CDF of `kappa` transforms of half-t draws
/// and the CDF obtained by integrating `kappa_density`.
fn kappa_ks(tau: f64, s: f64, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = StudentT::new(tau).unwrap();
    let mut k: Vec<f64> = (0..draws)
        .map(|_| kappa(t.sample(&mut rng).abs(), s, tau))
        .collect();
    k.sort_by(f64::total_cmp);
    let mut cdf = 0.0;
    let mut prev = 0.0;
    let mut ks: f64 = 0.0;
    for gi in 1..1000 {
        let idx = gi * draws / 1000;
        let g = k[idx];
        let width = g - prev;
        cdf += width
            * integrate_unit(
                |x| kappa_density(prev + width * x, tau, s).unwrap_or(0.0),
                40,
            );
        prev = g;
        let below = idx as f64 / draws as f64;
        let through = (idx + 1) as f64 / draws as f64;
        ks = ks.max((cdf - below).abs()).max((cdf - through).abs());
    }
    ks
}

fn density_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut logpdf_err: f64 = 0.0;
    for _ in 0..100 {
        let m = rng.gen_range(2..=8);
        let p = rng.gen_range(1..=4);
        let design = build_pathway_design(&random_graph(&mut rng, m, p), m);
        let phi: Vec<f64> = design
            .pathways
            .iter()
            .map(|op| op.lower + op.width() * rng.gen_range(0.001..0.999))
            .collect();
        let sigma2 = rng.gen_range(0.2..3.0);
        let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mu: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cov = (DMatrix::identity(m, m) - direct_car(&phi, &design))
            .try_inverse()
            .unwrap()
            * sigma2;
        let got = car_gaussian_logpdf(&x, &mu, &phi, sigma2, &design).unwrap();
        logpdf_err = logpdf_err.max((got - dense_mvn(&x, &mu, &cov)).abs());
    }

    let mut kappa_mass_err: f64 = 0.0;
    for &tau in &[1.0, 1.2, 3.0, 5.0, 10.0] {
        for &s in &[0.5, 1.0, 2.0] {
            let mass = integrate_unit(|k| kappa_density(k, tau, s).unwrap_or(0.0), 4000);
            kappa_mass_err = kappa_mass_err.max((mass - 1.0).abs());
        }
    }

    // the phi prior as the model evaluates it: with one pathway and one phi row, the
    // log joint under the beta prior minus the log joint under the uniform prior is
    // log prior(phi) + log(U - L)
    let mut phi_mass_err: f64 = 0.0;
    for _ in 0..3 {
        let data = random_dataset(&mut rng, 4, 2, 5, 1);
        let design = build_pathway_design(&random_graph(&mut rng, 5, 1), 5);
        let (lo, w) = (design.pathways[0].lower, design.pathways[0].width());
        let base = ModelConfig {
            two_group: false,
            ..ModelConfig::with_tau(1.2)
        };
        let beta = Model::new(data.clone(), design.clone(), &base).unwrap();
        let unif = Model::new(
            data,
            design,
            &ModelConfig {
                phi_prior: PhiPrior::Uniform,
                ..base
            },
        )
        .unwrap();
        let (state, _) = beta.untransform(&vec![0.0; beta.layout().dim]);
        let mass = integrate_unit(
            |x| {
                let mut s = state.clone();
                s.phi[0][0] = lo + w * x;
                (beta.log_joint(&s) - unif.log_joint(&s)).exp()
            },
            2000,
        );
        phi_mass_err = phi_mass_err.max((mass - 1.0).abs());
    }

    let mut ks_worst: f64 = 0.0;
    for &(tau, s) in &[(1.0, 1.0), (1.2, 1.0), (3.0, 0.7), (5.0, 2.0)] {
        ks_worst = ks_worst.max(kappa_ks(tau, s, 100_000, 17));
    }
    Verdict {
        id: 2,
        pass: logpdf_err < 1e-8 && kappa_mass_err < 1e-4 && phi_mass_err < 1e-4 && ks_worst < 0.02,
        detail: format!(
            "logpdf max err {logpdf_err:.2e} (<1e-8); kappa mass err {kappa_mass_err:.2e}, phi prior mass err {phi_mass_err:.2e} (<1e-4); KS {ks_worst:.4} (<0.02)"
        ),
    }
}

// ---------------------------------------------------------------- 3

fn positive_definiteness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut ok = 0;
    for _ in 0..1000 {
        let m = rng.gen_range(2..=30);
        let p = rng.gen_range(1..=8);
        let design = build_pathway_design(&random_graph(&mut rng, m, p), m);
        let phi: Vec<f64> = design
            .pathways
            .iter()
            .map(|op| rng.gen_range(op.lower..op.upper))
            .collect();
        if CarFactor::new(&phi, &design).is_ok() {
            ok += 1;
        }
    }
    let mut worst_min = f64::NEG_INFINITY;
    for _ in 0..20 {
        let m = rng.gen_range(2..=12);
        let design = build_pathway_design(&random_graph(&mut rng, m, 1), m);
        let phi = [design.pathways[0].upper * 1.001];
        let min = SymmetricEigen::new(DMatrix::identity(m, m) - direct_car(&phi, &design))
            .eigenvalues
            .min();
        worst_min = worst_min.max(min);
    }
    Verdict {
        id: 3,
        pass: ok == 1000 && worst_min <= 0.0,
        detail: format!(
            "{ok}/1000 Cholesky ok; P=1 at 1.001 U: largest min eigenvalue {worst_min:.3e} (<=0)"
        ),
    }
}

// ---------------------------------------------------------------- 4

/// Correlated Gaussian with unit marginal variances, `Sigma_ij = 0.5^|i-j|`.
struct CorrelatedGaussian {
    mean: Vec<f64>,
    precision: DMatrix<f64>,
}

impl Target for CorrelatedGaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }
    fn log_density_and_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let r = DVector::from_iterator(x.len(), x.iter().zip(&self.mean).map(|(a, b)| a - b));
        let pr = &self.precision * &r;
        for (gi, v) in g.iter_mut().zip(pr.iter()) {
            *gi = -v;
        }
        -0.5 * r.dot(&pr)
    }
}

fn sampler_calibration() -> Verdict {
    let mean = vec![0.0, 1.0, -2.0, 3.0, 0.5];
    let cov = DMatrix::from_fn(5, 5, |i, j| 0.5f64.powi((i as i32 - j as i32).abs()));
    let target = CorrelatedGaussian {
        mean: mean.clone(),
        precision: cov.clone().try_inverse().unwrap(),
    };
    let cfg = SamplerConfig {
        seed: 1,
        ..SamplerConfig::default()
    };
    let draws = run_hmc(&target, &cfg).unwrap();
    let summary = draws.summary();
    let (mut mean_err, mut var_err, mut r_hat) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..5 {
        let xs = draws.pooled(i);
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        mean_err = mean_err.max((m - mean[i]).abs());
        var_err = var_err.max((v - cov[(i, i)]).abs());
        r_hat = r_hat.max(summary.parameters[i].r_hat.unwrap_or(f64::INFINITY));
    }
    Verdict {
        id: 4,
        pass: mean_err < 0.05 && var_err < 0.1 && r_hat < 1.01 && summary.chains == 4 && summary.draws == 4000,
        detail: format!(
            "{} chains x {} draws: max |mean err| {mean_err:.4} (<0.05), max |var err| {var_err:.4} (<0.1), max R-hat {r_hat:.4} (<1.01)",
            summary.chains,
            summary.draws / summary.chains
        ),
    }
}

// ---------------------------------------------------------------- 5, 6, 8, 9

struct DeskFit {
    auc: f64,
    model: Model,
    draws: PosteriorDraws,
}

fn desk_config(seed: u64, corruption: f64) -> SimulationConfig {
    SimulationConfig {
        n: 16,
        t: 7,
        m: 20,
        k: 1,
        p: 6,
        tau: 1.2,
        seed,
        corruption,
        ..SimulationConfig::default()
    }
}

fn desk_fit(seed: u64, prior: PhiPrior, corruption: f64) -> DeskFit {
    let study = simulate_study(&desk_config(seed, corruption), 0).unwrap();
    let (data, _) = standardize(&study.dataset).unwrap();
    let design = build_pathway_design(&study.fit_graph, data.n_metabolites());
    let cfg = ModelConfig {
        phi_prior: prior,
        ..ModelConfig::with_tau(1.2)
    };
    let model = Model::new(data, design, &cfg).unwrap();
    let sampler = SamplerConfig {
        iterations: 1000,
        warmup: 500,
        chains: 2,
        seed: 1,
        ..SamplerConfig::default()
    };
    let draws = run_hmc(&model, &sampler).unwrap();
    let auc = phi_difference_test(&draws, &study.truth.pathway_ids, 0.95)
        .and_then(|r| r.with_truth(&study.truth.perturbed))
        .unwrap()
        .roc
        .unwrap()
        .auc;
    DeskFit { auc, model, draws }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt(v: &[f64]) -> String {
    v.iter()
        .map(|a| format!("{a:.3}"))
        .collect::<Vec<_>>()
        .join(", ")
}

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn main() {
    let start = Instant::now();
    let mut verdicts = Vec::new();
    let mut run = |f: &dyn Fn() -> Verdict| {
        let t = Instant::now();
        let v = f();
        report(&v, t.elapsed().as_secs_f64());
        verdicts.push(v.pass);
    };

    run(&|| {
        let t = Instant::now();
        let mut v = gradient_correctness();
        let secs = t.elapsed().as_secs_f64();
        v.pass &= secs < 30.0;
        v.detail.push_str(&format!("; runtime {secs:.1} s (<30)"));
        v
    });
    run(&density_oracles);
    run(&positive_definiteness);
    run(&sampler_calibration);

    // desk-scale fits shared by criteria 5, 6, 8 and 9
    let t5 = Instant::now();
    let beta: Vec<DeskFit> = SEEDS
        .iter()
        .map(|&s| desk_fit(s, PhiPrior::Beta, 0.0))
        .collect();
    let uniform: Vec<f64> = SEEDS
        .iter()
        .map(|&s| desk_fit(s, PhiPrior::Uniform, 0.0).auc)
        .collect();
    let secs5 = t5.elapsed().as_secs_f64();
    let beta_auc: Vec<f64> = beta.iter().map(|f| f.auc).collect();
    run(&|| {
        let (b, u) = (mean(&beta_auc), mean(&uniform));
        Verdict {
            id: 5,
            pass: b >= 0.75 && b - u >= 0.10 && secs5 < 1200.0,
            detail: format!(
                "beta-prior mean AUC {b:.3} (>=0.75) [{}]; uniform mean AUC {u:.3} [{}]; gap {:.3} (>=0.10); fit time {secs5:.0} s (<1200)",
                fmt(&beta_auc),
                fmt(&uniform),
                b - u
            ),
        }
    });

    let t6 = Instant::now();
    let corrupted: Vec<f64> = SEEDS
        .iter()
        .map(|&s| desk_fit(s, PhiPrior::Beta, 0.5).auc)
        .collect();
    let secs6 = t6.elapsed().as_secs_f64();
    run(&|| {
        let (clean, half) = (mean(&beta_auc), mean(&corrupted));
        Verdict {
            id: 6,
            pass: clean - half >= 0.15 && (0.35..=0.65).contains(&half),
            detail: format!(
                "mean AUC y=0 {clean:.3}, y=0.5 {half:.3} [{}]; drop {:.3} (>=0.15); y=0.5 in [0.35, 0.65]; corrupted fits {secs6:.0} s",
                fmt(&corrupted),
                clean - half
            ),
        }
    });

    run(&waic_oracle);

    run(&|| {
        let counts = [4, 8, 12, 16, 20];
        let mut avg = vec![0.0; counts.len()];
        for f in &beta {
            let r = ppc_mad(&f.draws, &f.model, &counts, 100, 1).unwrap();
            for (a, e) in avg.iter_mut().zip(&r.entries) {
                *a += e.mad / beta.len() as f64;
            }
        }
        let non_increasing = avg.windows(2).filter(|w| w[1] <= w[0]).count();
        Verdict {
            id: 8,
            pass: non_increasing == counts.len() - 1,
            detail: format!(
                "5-replicate mean MAD at {counts:?}: [{}]; {non_increasing}/4 consecutive pairs non-increasing",
                avg.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>().join(", ")
            ),
        }
    });

    run(&|| {
        let r = whitened_residuals(&beta[0].draws, &beta[0].model).unwrap();
        let n: usize = r.groups.iter().map(|g| g.residuals.len()).sum();
        Verdict {
            id: 9,
            pass: n >= 2000 && r.skewness.abs() < 0.3 && r.excess_kurtosis.abs() < 0.5,
            detail: format!(
                "{n} residuals (>=2000): skewness {:.3} (|.|<0.3), excess kurtosis {:.3} (|.|<0.5)",
                r.skewness, r.excess_kurtosis
            ),
        }
    });

    run(&beta_mean_oracle);
    run(&case_study_shape);

    let passed = verdicts.iter().filter(|p| **p).count();
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "acceptance: {passed}/{} criteria passed in {:.0} s",
        verdicts.len(),
        start.elapsed().as_secs_f64()
    )
    .unwrap();
    if passed != verdicts.len() {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- 7

fn waic_oracle() -> Verdict {
    let table = array![[-1.2, -0.4], [-0.9, -0.7], [-1.5, -0.3]];
    // hand evaluation: lppd_i = log(mean_s exp(l_si)), p_i = sample variance over draws
    let mut lppd = 0.0;
    let mut p = 0.0;
    for col in 0..2 {
        let v: Vec<f64> = (0..3).map(|s| table[[s, col]]).collect();
        lppd += (v.iter().map(|x: &f64| x.exp()).sum::<f64>() / 3.0).ln();
        let m = mean(&v);
        p += v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 2.0;
    }
    let want = -2.0 * (lppd - p);
    let got = waic_from_loglik(&table).unwrap();
    let permuted = waic_from_loglik(&array![[-1.5, -0.3], [-1.2, -0.4], [-0.9, -0.7]]).unwrap();
    let err = (got.waic - want)
        .abs()
        .max((got.lppd - lppd).abs())
        .max((got.p_waic - p).abs());
    let perm = (permuted.waic - got.waic).abs();
    Verdict {
        id: 7,
        pass: err < 1e-10 && perm < 1e-10,
        detail: format!(
            "WAIC {:.6} vs hand {want:.6}: err {err:.1e} (<1e-10); permutation diff {perm:.1e}",
            got.waic
        ),
    }
}

// ---------------------------------------------------------------- 10

fn beta_mean_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (n, t, k) = (
            rng.gen_range(1..5),
            rng.gen_range(1..5),
            rng.gen_range(1..4),
        );
        let tau = rng.gen_range(0.5..10.0);
        let s2 = rng.gen_range(0.3..3.0);
        let cov = Array3::from_shape_fn((n, t, k), |_| rng.gen_range(-2.0..2.0));
        let resp = Array2::from_shape_fn((n, t), |_| rng.gen_range(-2.0..2.0));
        let lambda: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..3.0)).collect();
        let sigma_beta = rng.gen_range(0.3..2.0);
        let kap: Vec<f64> = lambda.iter().map(|&l| kappa(l, sigma_beta, tau)).collect();
        let got = conditional_beta_mean(&cov, &resp, s2, &kap, tau).unwrap();

        // beta ~ N(0, diag((lambda sigma_beta)^2)), r ~ N(Y beta, s2 I); data-space form
        let y = DMatrix::from_fn(n * t, k, |row, c| cov[[row / t, row % t, c]]);
        let r = DVector::from_fn(n * t, |row, _| resp[[row / t, row % t]]);
        let l = DMatrix::from_diagonal(&DVector::from_iterator(
            k,
            lambda.iter().map(|l| (l * sigma_beta).powi(2)),
        ));
        let gram = &y * &l * y.transpose() + DMatrix::identity(n * t, n * t) * s2;
        let want = &l * y.transpose() * gram.try_inverse().unwrap() * r;
        for (a, b) in got.iter().zip(want.iter()) {
            worst = worst.max((a - b).abs());
        }
    }
    Verdict {
        id: 10,
        pass: worst < 1e-8,
        detail: format!("50 instances, max abs diff {worst:.2e} (<1e-8)"),
    }
}

// ---------------------------------------------------------------- 11

fn icarh(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_icarh"))
        .args(args)
        .env_remove("ICARH_THREADS")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{} exited {:?}: {}",
            args[0],
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn case_study_shape() -> Verdict {
    let dir = tempfile::TempDir::new().unwrap();
    let d = dir.path();
    let p = |name: &str| d.join(name).to_str().unwrap().to_string();
    std::fs::write(d.join("sim.json"), r#"{"n": 24, "t": 9, "m": 56, "k": 6}"#).unwrap();
    let steps = || -> Result<(), String> {
        icarh(&[
            "simulate",
            "--config",
            &p("sim.json"),
            "--out",
            &p("sim"),
            "--seed",
            "11",
        ])?;
        icarh(&[
            "fit",
            "--data",
            &p("sim/data.csv"),
            "--pathways",
            &p("sim/pathways.json"),
            "--out",
            &p("fit"),
            "--iter",
            "100",
            "--warmup",
            "50",
            "--chains",
            "2",
        ])?;
        icarh(&["diagnose", "--fit", &p("fit")])?;
        icarh(&[
            "perturbation",
            "--fit",
            &p("fit"),
            "--truth",
            &p("sim/truth.json"),
        ])
    };
    let result = steps();
    let expected = [
        "manifest.json",
        "draws.csv",
        "summary.json",
        "waic.json",
        "ppc.json",
        "residuals.json",
        "beta.json",
        "qq_cases.csv",
        "qq_controls.csv",
        "diagnose_manifest.json",
        "perturbation.json",
        "roc.csv",
        "perturbation_manifest.json",
    ];
    let fit = d.join("fit");
    let missing: Vec<&str> = expected
        .iter()
        .copied()
        .filter(|f| !Path::new(&fit.join(f)).is_file())
        .collect();
    Verdict {
        id: 11,
        pass: result.is_ok() && missing.is_empty(),
        detail: match result {
            Ok(()) => format!(
                "N=24 T=9 M=56 K=6 pipeline completed; {} of {} reports present",
                expected.len() - missing.len(),
                expected.len()
            ),
            Err(e) => e,
        },
    }
}
