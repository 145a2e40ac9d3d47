use icarh::simulator::SimulationPriors;
use icarh::{
    build_pathway_design, corrupt_design, simulate_dataset, simulate_membership, simulate_phi,
    simulate_study, Group, Model, ModelConfig, SimulationConfig,
};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn default_dimensions() {
    let s = simulate_study(&SimulationConfig::default(), 0).unwrap();
    assert_eq!(s.dataset.x.dim(), (22, 7, 40));
    assert_eq!(s.dataset.y.dim(), (22, 7, 1));
    assert_eq!(s.graph.len(), 11);
    assert_eq!(s.dataset.group_count(Group::Cases), 11);
    assert_eq!(s.truth.perturbed.len(), 11);
    assert_eq!(s.graph, s.fit_graph);
}

#[test]
fn seeded_runs_repeat() {
    let cfg = SimulationConfig {
        seed: 42,
        ..SimulationConfig::default()
    };
    let a = simulate_study(&cfg, 0).unwrap();
    let b = simulate_study(&cfg, 0).unwrap();
    assert_eq!(a.dataset, b.dataset);
    assert_eq!(a.truth, b.truth);
    let c = simulate_study(&cfg, 1).unwrap();
    assert_ne!(a.dataset.x, c.dataset.x);
}

#[test]
fn phi_respects_bounds_and_signs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = SimulationConfig::default();
    for _ in 0..30 {
        let graph = simulate_membership(cfg.m, cfg.p, &cfg.density, &mut rng).unwrap();
        let design = build_pathway_design(&graph, cfg.m);
        let phi = simulate_phi(&design, &cfg, &mut rng);
        for (p, op) in design.pathways.iter().enumerate() {
            assert!(op.contains(phi.phi_cases[p]) && op.contains(phi.phi_controls[p]));
            if phi.perturbed[p] {
                assert!(phi.phi_controls[p] >= 0.0 && phi.phi_cases[p] <= 0.0);
            } else {
                assert_eq!(phi.phi_cases[p], phi.phi_controls[p]);
            }
        }
    }
}

#[test]
fn perturbation_rate_matches_probability() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = SimulationConfig {
        m: 10,
        p: 4000,
        ..SimulationConfig::default()
    };
    let graph = simulate_membership(cfg.m, cfg.p, &cfg.density, &mut rng).unwrap();
    let design = build_pathway_design(&graph, cfg.m);
    let phi = simulate_phi(&design, &cfg, &mut rng);
    let rate = phi.perturbed.iter().filter(|&&b| b).count() as f64 / cfg.p as f64;
    let se = (0.7f64 * 0.3 / cfg.p as f64).sqrt();
    assert!((rate - 0.7).abs() < 4.0 * se, "{rate}");
}

#[test]
fn membership_counts_follow_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = SimulationConfig::default();
    let mut hist = [0usize; 5];
    let reps = 200;
    for _ in 0..reps {
        let g = simulate_membership(cfg.m, cfg.p, &cfg.density, &mut rng).unwrap();
        for c in g.membership_counts(cfg.m) {
            hist[c] += 1;
        }
        for p in &g.pathways {
            let k = p.members.len();
            assert_eq!(p.edges.len(), k * (k.max(1) - 1) / 2);
        }
    }
    let total = (reps * cfg.m) as f64;
    for (c, w) in [(1, 0.55), (2, 0.25), (3, 0.12), (4, 0.08)] {
        let f = hist[c] as f64 / total;
        assert!((f - w).abs() < 0.02, "count {c}: {f}");
    }
    assert_eq!(hist[0], 0);
}

/// Mean tensor rebuilt from the recorded truth.
fn truth_mean(s: &icarh::SimulatedStudy) -> ndarray::Array3<f64> {
    let st = &s.truth.state;
    let d = &s.dataset;
    let (n, t, m) = d.x.dim();
    ndarray::Array3::from_shape_fn((n, t, m), |(i, tt, j)| {
        let mut v = st.alpha[j] + st.gamma[[i, j]] + st.nu[[i, tt, j]];
        for k in 0..d.n_covariates() {
            v += d.y[[i, tt, k]] * st.beta[[j, k]];
        }
        v
    })
}

#[test]
fn noiseless_limit_reproduces_mean() {
    let cfg = SimulationConfig {
        priors: SimulationPriors {
            sigma2: 0.0,
            ..SimulationPriors::default()
        },
        ..SimulationConfig::default()
    };
    let s = simulate_study(&cfg, 0).unwrap();
    let mu = truth_mean(&s);
    for (a, b) in s.dataset.x.iter().zip(mu.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn residual_covariance_matches_car() {
    let cfg = SimulationConfig {
        n: 40_000,
        t: 1,
        m: 5,
        k: 1,
        p: 2,
        density: [(2, 1.0)].into_iter().collect(),
        priors: SimulationPriors {
            sigma2: 1.5,
            ..SimulationPriors::default()
        },
        seed: 8,
        ..SimulationConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let graph = simulate_membership(cfg.m, cfg.p, &cfg.density, &mut rng).unwrap();
    let design = build_pathway_design(&graph, cfg.m);
    let phi = simulate_phi(&design, &cfg, &mut rng);
    let (dataset, truth) = simulate_dataset(&design, &phi, &cfg, &mut rng).unwrap();
    let study = icarh::SimulatedStudy {
        fit_graph: graph.clone(),
        graph,
        dataset,
        truth,
    };
    let mu = truth_mean(&study);
    let m = cfg.m;
    for (group, row) in [
        (Group::Cases, &phi.phi_cases),
        (Group::Controls, &phi.phi_controls),
    ] {
        // I - sum_p phi_p S_p, assembled densely
        let mut c = DMatrix::<f64>::zeros(m, m);
        for (op, &f) in design.pathways.iter().zip(row.iter()) {
            c += &op.operator * f;
        }
        let want = (DMatrix::<f64>::identity(m, m) - c).try_inverse().unwrap() * cfg.priors.sigma2;
        let mut got = DMatrix::<f64>::zeros(m, m);
        let mut count = 0.0;
        for i in 0..cfg.n {
            if study.dataset.groups[i] != group {
                continue;
            }
            let r: Vec<f64> = (0..m)
                .map(|j| study.dataset.x[[i, 0, j]] - mu[[i, 0, j]])
                .collect();
            for a in 0..m {
                for b in 0..m {
                    got[(a, b)] += r[a] * r[b];
                }
            }
            count += 1.0;
        }
        got /= count;
        let rel = (&got - &want).norm() / want.norm();
        assert!(rel < 0.05, "{group}: relative error {rel}");
    }
}

#[test]
fn full_corruption_removes_original_memberships() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = SimulationConfig::default();
    for _ in 0..20 {
        let g = simulate_membership(cfg.m, cfg.p, &cfg.density, &mut rng).unwrap();
        let c = corrupt_design(&g, 1.0, &mut rng);
        for (orig, new) in g.pathways.iter().zip(&c.pathways) {
            assert!(new.members.iter().all(|j| !orig.members.contains(j)));
            assert!(new
                .edges
                .iter()
                .all(|(a, b)| new.members.contains(a) && new.members.contains(b)));
        }
        assert_eq!(corrupt_design(&g, 0.0, &mut rng), g);
    }
}

#[test]
fn truth_has_finite_log_joint() {
    for r in 0..5 {
        let s = simulate_study(&SimulationConfig::default(), r).unwrap();
        let design = build_pathway_design(&s.graph, s.dataset.n_metabolites());
        let model = Model::new(s.dataset.clone(), design, &ModelConfig::with_tau(1.2)).unwrap();
        let lp = model.log_joint(&s.truth.state);
        assert!(lp.is_finite(), "replicate {r}: {lp}");
    }
}

#[test]
fn invalid_config_names_field() {
    let cfg = SimulationConfig {
        pi_omega: 1.5,
        ..SimulationConfig::default()
    };
    match simulate_study(&cfg, 0) {
        Err(icarh::Error::Config(msg)) => assert!(msg.contains("pi_omega"), "{msg}"),
        other => panic!("{other:?}"),
    }
}
