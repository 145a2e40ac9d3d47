use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use icarh::sampler::diagnostics::DIVERGENCE_WARNING_RATE;
use icarh::{
    beta_summary, build_pathway_design, calibrate_tau, expected_kappa, load_dataset, load_pathways,
    phi_difference_test, ppc_mad, run_hmc, save_dataset, simulate_study, standardize, waic,
    whitened_residuals, CsvSchema, Model, ModelConfig, PhiPrior, PosteriorDraws, SamplerConfig,
    SimulationConfig, TrajectoryLength,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::manifest::{self, digest, digest_outputs, FileDigest, RunManifest};
use crate::{
    CalibrateArgs, CliError, Command, DiagnoseArgs, FitArgs, PerturbationArgs, PhiPriorArg,
    ReplayArgs, SimulateArgs,
};

type Res<T> = Result<T, CliError>;

pub const FIT_RECORD: &str = "fit.json";
pub const MODEL_DATA: &str = "model_data.csv";
pub const MODEL_PATHWAYS: &str = "model_pathways.json";
pub const DRAWS: &str = "draws.csv";

/// Settings needed to rebuild the fitted model from a fit directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRecord {
    pub model: ModelConfig,
    pub sampler: SamplerConfig,
    pub standardized: bool,
    pub pathway_ids: Vec<String>,
    pub unresolved_metabolites: Vec<String>,
}

/// What a run produced, before the manifest is written.
struct RunOutput {
    out_dir: PathBuf,
    manifest_name: &'static str,
    resolved: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<FileDigest>,
    outputs: Vec<PathBuf>,
    /// Arguments as recorded (absolute input paths).
    args: Command,
}

pub fn run(cmd: &Command) -> Res<()> {
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let out = match cmd {
        Command::Simulate(a) => simulate(a)?,
        Command::Fit(a) => fit(a)?,
        Command::Diagnose(a) => diagnose(a)?,
        Command::Perturbation(a) => perturbation(a)?,
        Command::CalibrateTau(a) => return calibrate(a),
        Command::Replay(a) => return replay(a),
    };
    let m = RunManifest {
        command: out.args.name().to_string(),
        args: out.args,
        resolved: out.resolved,
        seed: out.seed,
        inputs: out.inputs,
        outputs: digest_outputs(&out.out_dir, &out.outputs)?,
        version: env!("CARGO_PKG_VERSION").to_string(),
        threads: rayon::current_num_threads(),
        started_unix,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };
    manifest::write(&out.out_dir.join(out.manifest_name), &m)
}

fn absolute(path: &Path) -> Res<PathBuf> {
    fs::canonicalize(path).map_err(|e| CliError::io(path, e))
}

fn prepare_out_dir(dir: &Path, force: bool) -> Res<()> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
        if entries.next().is_some() && !force {
            return Err(CliError::Validation(format!(
                "output directory {} is not empty (use --force to overwrite)",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Res<()> {
    let text = serde_json::to_string_pretty(value).map_err(CliError::numeric)?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Res<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn write_pairs(path: &Path, header: [&str; 2], rows: &[(f64, f64)]) -> Res<()> {
    let f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| CliError::io(path, e);
    writeln!(w, "{},{}", header[0], header[1]).map_err(io)?;
    for (a, b) in rows {
        writeln!(w, "{a},{b}").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn replicate_dir(r: usize, total: usize) -> String {
    let width = total.to_string().len().max(2);
    format!("replicate_{:0width$}", r + 1)
}

fn simulate(a: &SimulateArgs) -> Res<RunOutput> {
    let mut args = a.clone();
    let mut inputs = Vec::new();
    let mut cfg: SimulationConfig = match &a.config {
        Some(p) => {
            let abs = absolute(p)?;
            inputs.push(digest(&abs, abs.display().to_string())?);
            args.config = Some(abs);
            read_json(p)?
        }
        None => SimulationConfig::default(),
    };
    if let Some(r) = a.replicates {
        cfg.replicates = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(y) = a.corruption {
        cfg.corruption = y;
    }
    cfg.validate()?;
    prepare_out_dir(&a.out, a.force)?;

    let total = cfg.replicates;
    let per_replicate: Vec<Vec<PathBuf>> = (0..total)
        .into_par_iter()
        .map(|r| -> Res<Vec<PathBuf>> {
            let study = simulate_study(&cfg, r)?;
            let sub = if total > 1 {
                PathBuf::from(replicate_dir(r, total))
            } else {
                PathBuf::new()
            };
            let dir = a.out.join(&sub);
            fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
            let names = &study.dataset.metabolites;
            save_dataset(dir.join("data.csv"), &study.dataset)?;
            study
                .fit_graph
                .to_file(names)
                .save(dir.join("pathways.json"))?;
            study
                .graph
                .to_file(names)
                .save(dir.join("generating_pathways.json"))?;
            write_json(&dir.join("truth.json"), &study.truth)?;
            Ok([
                "data.csv",
                "pathways.json",
                "generating_pathways.json",
                "truth.json",
            ]
            .iter()
            .map(|f| sub.join(f))
            .collect())
        })
        .collect::<Res<Vec<_>>>()?;
    println!(
        "simulated {total} dataset(s): N={} T={} M={} K={} P={} tau={} corruption={}",
        cfg.n, cfg.t, cfg.m, cfg.k, cfg.p, cfg.tau, cfg.corruption
    );
    Ok(RunOutput {
        out_dir: a.out.clone(),
        manifest_name: manifest::MANIFEST,
        resolved: serde_json::to_value(&cfg).map_err(CliError::numeric)?,
        seed: Some(cfg.seed),
        inputs,
        outputs: per_replicate.into_iter().flatten().collect(),
        args: Command::Simulate(args),
    })
}

#[derive(Serialize)]
struct FitSettings {
    iterations: usize,
    warmup: usize,
    chains: usize,
}

#[derive(Serialize)]
struct FitSummary<'a> {
    settings: FitSettings,
    warnings: Vec<String>,
    #[serde(flatten)]
    report: &'a icarh::SummaryReport,
}

fn fit_warnings(report: &icarh::SummaryReport) -> Vec<String> {
    let d = &report.diagnostics;
    let mut w = Vec::new();
    if !d.r_hat_available {
        w.push("R-hat unavailable: needs at least 2 chains with 4 or more draws".into());
    }
    if !d.flagged.is_empty() {
        w.push(format!(
            "{} parameter(s) with R-hat above 1.05",
            d.flagged.len()
        ));
    }
    for (c, rate) in d.divergence_rate.iter().enumerate() {
        if *rate > DIVERGENCE_WARNING_RATE {
            w.push(format!(
                "chain {c}: {:.1}% divergent transitions",
                100.0 * rate
            ));
        }
    }
    w
}

fn fit(a: &FitArgs) -> Res<RunOutput> {
    let data_path = absolute(&a.data)?;
    let pathways_path = absolute(&a.pathways)?;
    let raw = load_dataset(&data_path, &CsvSchema::default())?;
    raw.validate(a.two_group)?;
    let (data, scaling) = if a.no_standardize {
        (raw, None)
    } else {
        let (d, s) = standardize(&raw)?;
        (d, Some(s))
    };
    let graph = load_pathways(&pathways_path, &data)?;
    if !graph.unresolved.is_empty() {
        eprintln!(
            "warning: {} pathway metabolite(s) not in the data were dropped",
            graph.unresolved.len()
        );
    }
    let design = build_pathway_design(&graph, data.n_metabolites());
    let model_cfg = ModelConfig {
        tau: a.tau,
        two_group: a.two_group,
        treatment_covariate: a.treatment_covariate.clone(),
        phi_prior: match a.phi_prior {
            PhiPriorArg::Beta => PhiPrior::Beta,
            PhiPriorArg::Uniform => PhiPrior::Uniform,
        },
        ..ModelConfig::default()
    };
    let sampler = SamplerConfig {
        iterations: a.iter,
        warmup: a.warmup,
        chains: a.chains,
        seed: a.seed,
        trajectory: TrajectoryLength::Steps(a.steps),
        target_accept: a.target_accept,
        ..SamplerConfig::default()
    };
    sampler.validate()?;
    prepare_out_dir(&a.out, a.force)?;
    let design_report = design.report();
    let model = Model::new(data.clone(), design, &model_cfg)?;
    println!(
        "fitting {} iterations ({} warm-up) x {} chain(s), {} parameters",
        a.iter,
        a.warmup,
        a.chains,
        model.layout().dim
    );
    let draws = run_hmc(&model, &sampler)?;
    let report = draws.summary();
    let warnings = fit_warnings(&report);
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let out = &a.out;
    let draws_path = out.join(DRAWS);
    let f = fs::File::create(&draws_path).map_err(|e| CliError::io(&draws_path, e))?;
    draws.write_csv(BufWriter::new(f))?;
    write_json(
        &out.join("summary.json"),
        &FitSummary {
            settings: FitSettings {
                iterations: a.iter,
                warmup: a.warmup,
                chains: a.chains,
            },
            warnings,
            report: &report,
        },
    )?;
    write_json(&out.join("design.json"), &design_report)?;
    write_json(&out.join("scaling.json"), &scaling)?;
    save_dataset(out.join(MODEL_DATA), &data)?;
    graph
        .to_file(&data.metabolites)
        .save(out.join(MODEL_PATHWAYS))?;
    let record = FitRecord {
        model: model.config().clone(),
        sampler: sampler.clone(),
        standardized: !a.no_standardize,
        pathway_ids: graph.pathways.iter().map(|p| p.id.clone()).collect(),
        unresolved_metabolites: graph.unresolved.clone(),
    };
    write_json(&out.join(FIT_RECORD), &record)?;
    println!(
        "wrote {} draws per chain to {}",
        sampler.draws_per_chain(),
        draws_path.display()
    );

    let mut args = a.clone();
    args.data = data_path.clone();
    args.pathways = pathways_path.clone();
    Ok(RunOutput {
        out_dir: out.clone(),
        manifest_name: manifest::MANIFEST,
        resolved: serde_json::to_value(&record).map_err(CliError::numeric)?,
        seed: Some(a.seed),
        inputs: vec![
            digest(&data_path, data_path.display().to_string())?,
            digest(&pathways_path, pathways_path.display().to_string())?,
        ],
        outputs: [
            DRAWS,
            "summary.json",
            "design.json",
            "scaling.json",
            MODEL_DATA,
            MODEL_PATHWAYS,
            FIT_RECORD,
        ]
        .iter()
        .map(PathBuf::from)
        .collect(),
        args: Command::Fit(args),
    })
}

/// A fitted model and its draws, reloaded from a fit directory.
struct LoadedFit {
    record: FitRecord,
    model: Model,
    draws: PosteriorDraws,
    inputs: Vec<FileDigest>,
}

fn load_fit(dir: &Path) -> Res<LoadedFit> {
    let record: FitRecord = read_json(&dir.join(FIT_RECORD))?;
    let data = load_dataset(dir.join(MODEL_DATA), &CsvSchema::default())?;
    let graph = load_pathways(dir.join(MODEL_PATHWAYS), &data)?;
    let design = build_pathway_design(&graph, data.n_metabolites());
    let model = Model::new(data, design, &record.model)?;
    let draws_path = dir.join(DRAWS);
    if !draws_path.exists() {
        return Err(CliError::Validation(format!(
            "{} not found; run `icarh fit` first",
            draws_path.display()
        )));
    }
    let f = fs::File::open(&draws_path).map_err(|e| CliError::io(&draws_path, e))?;
    let draws = PosteriorDraws::read_csv(BufReader::new(f))?;
    if draws.parameter_names != model.layout().names() {
        return Err(CliError::Validation(format!(
            "{} does not match the model recorded in {}",
            draws_path.display(),
            FIT_RECORD
        )));
    }
    if draws.total_draws() == 0 {
        return Err(CliError::Validation(
            "the fit has no post-warmup draws".into(),
        ));
    }
    let inputs = [FIT_RECORD, MODEL_DATA, MODEL_PATHWAYS, DRAWS]
        .iter()
        .map(|f| {
            let p = absolute(&dir.join(f))?;
            digest(&p, p.display().to_string())
        })
        .collect::<Res<Vec<_>>>()?;
    Ok(LoadedFit {
        record,
        model,
        draws,
        inputs,
    })
}

fn diagnose(a: &DiagnoseArgs) -> Res<RunOutput> {
    let fit_dir = absolute(&a.fit)?;
    let loaded = load_fit(&fit_dir)?;
    let out = a.out.clone().unwrap_or_else(|| fit_dir.clone());
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let (model, draws) = (&loaded.model, &loaded.draws);
    let mut outputs: Vec<PathBuf> = Vec::new();
    let mut emit = |name: String| outputs.push(PathBuf::from(name));

    let report = waic(draws, model)?;
    write_json(&out.join("waic.json"), &report)?;
    emit("waic.json".into());
    println!(
        "WAIC {:.3} (lppd {:.3}, p_waic {:.3})",
        report.waic, report.lppd, report.p_waic
    );

    let m = model.dims().m;
    let mut counts: Vec<usize> = a
        .metabolites
        .iter()
        .copied()
        .filter(|&c| c >= 2 && c <= m)
        .collect();
    if counts.is_empty() && m >= 2 {
        counts.push(m);
    }
    let replicates = a.replicates.min(draws.total_draws()).max(1);
    let ppc = if counts.is_empty() {
        serde_json::json!({ "skipped": "covariance check needs at least 2 metabolites" })
    } else {
        let r = ppc_mad(draws, model, &counts, replicates, a.seed)?;
        for e in &r.entries {
            println!("PPC MAD over {} metabolites: {:.4}", e.metabolites, e.mad);
        }
        serde_json::to_value(&r).map_err(CliError::numeric)?
    };
    write_json(&out.join("ppc.json"), &ppc)?;
    emit("ppc.json".into());

    let residuals = whitened_residuals(draws, model)?;
    for g in &residuals.groups {
        let name = format!("qq_{}.csv", g.group);
        write_pairs(&out.join(&name), ["theoretical", "empirical"], &g.qq)?;
        emit(name);
    }
    write_json(&out.join("residuals.json"), &residuals)?;
    emit("residuals.json".into());
    println!(
        "whitened residuals: skewness {:.3}, excess kurtosis {:.3}",
        residuals.skewness, residuals.excess_kurtosis
    );

    let betas = beta_summary(draws, model, a.level)?;
    write_json(&out.join("beta.json"), &betas)?;
    emit("beta.json".into());

    let mut args = a.clone();
    args.fit = fit_dir;
    Ok(RunOutput {
        out_dir: out,
        manifest_name: "diagnose_manifest.json",
        resolved: serde_json::json!({
            "fit": loaded.record,
            "ppc_metabolites": counts,
            "ppc_replicates": replicates,
            "level": a.level,
        }),
        seed: Some(a.seed),
        inputs: loaded.inputs,
        outputs,
        args: Command::Diagnose(args),
    })
}

fn read_truth_flags(path: &Path) -> Res<Vec<bool>> {
    let v: serde_json::Value = read_json(path)?;
    v.get("perturbed")
        .and_then(|p| serde_json::from_value::<Vec<bool>>(p.clone()).ok())
        .ok_or_else(|| {
            CliError::Validation(format!(
                "{}: expected a boolean array `perturbed`",
                path.display()
            ))
        })
}

fn perturbation(a: &PerturbationArgs) -> Res<RunOutput> {
    let fit_dir = absolute(&a.fit)?;
    let loaded = load_fit(&fit_dir)?;
    let out = a.out.clone().unwrap_or_else(|| fit_dir.clone());
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let mut report = phi_difference_test(&loaded.draws, &loaded.record.pathway_ids, a.level)?;
    let mut inputs = loaded.inputs;
    let mut args = a.clone();
    args.fit = fit_dir;
    let mut outputs = vec![PathBuf::from("perturbation.json")];
    if let Some(tp) = &a.truth {
        let abs = absolute(tp)?;
        inputs.push(digest(&abs, abs.display().to_string())?);
        report = report.with_truth(&read_truth_flags(&abs)?)?;
        args.truth = Some(abs);
    }
    if let Some(roc) = &report.roc {
        write_pairs(
            &out.join("roc.csv"),
            ["false_positive_rate", "true_positive_rate"],
            &roc.points,
        )?;
        outputs.push(PathBuf::from("roc.csv"));
        println!("AUC {:.4}", roc.auc);
    }
    let flagged = report
        .pathways
        .iter()
        .filter(|p| p.difference.perturbed)
        .count();
    println!(
        "{flagged} of {} pathway(s) perturbed at level {}",
        report.pathways.len(),
        a.level
    );
    write_json(&out.join("perturbation.json"), &report)?;
    Ok(RunOutput {
        out_dir: out,
        manifest_name: "perturbation_manifest.json",
        resolved: serde_json::json!({ "level": a.level, "statistic": report.statistic }),
        seed: None,
        inputs,
        outputs,
        args: Command::Perturbation(args),
    })
}

fn calibrate(a: &CalibrateArgs) -> Res<()> {
    let tau = calibrate_tau(a.target, a.sigma_beta)?;
    let achieved = expected_kappa(tau, a.sigma_beta)?;
    let out = serde_json::json!({
        "target": a.target,
        "sigma_beta": a.sigma_beta,
        "tau": tau,
        "expected_kappa": achieved,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&out).map_err(CliError::numeric)?
    );
    Ok(())
}

fn replay(a: &ReplayArgs) -> Res<()> {
    let recorded = manifest::read(&a.manifest)?;
    for input in &recorded.inputs {
        let now = manifest::sha256_file(Path::new(&input.path))?;
        if now != input.sha256 {
            return Err(CliError::Validation(format!(
                "input {} changed since the run",
                input.path
            )));
        }
    }
    let mut cmd = recorded.args.clone();
    let manifest_name = match &mut cmd {
        Command::Simulate(s) => {
            s.out = a.out.clone();
            s.force = a.force;
            manifest::MANIFEST
        }
        Command::Fit(f) => {
            f.out = a.out.clone();
            f.force = a.force;
            manifest::MANIFEST
        }
        Command::Diagnose(d) => {
            d.out = Some(a.out.clone());
            "diagnose_manifest.json"
        }
        Command::Perturbation(p) => {
            p.out = Some(a.out.clone());
            "perturbation_manifest.json"
        }
        Command::CalibrateTau(_) | Command::Replay(_) => {
            return Err(CliError::Validation(format!(
                "`{}` runs do not write manifests",
                cmd.name()
            )))
        }
    };
    run(&cmd)?;
    let fresh = manifest::read(&a.out.join(manifest_name))?;
    let mut mismatched = Vec::new();
    for o in &recorded.outputs {
        match fresh.outputs.iter().find(|f| f.path == o.path) {
            Some(f) if f.sha256 == o.sha256 => {}
            _ => mismatched.push(o.path.clone()),
        }
    }
    if mismatched.is_empty() {
        println!(
            "reproduced {} output(s) bit-for-bit",
            recorded.outputs.len()
        );
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "{} of {} output(s) differ: {}",
            mismatched.len(),
            recorded.outputs.len(),
            mismatched.join(", ")
        )))
    }
}
