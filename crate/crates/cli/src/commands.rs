use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use assetflow::analysis::{self, ContagionOptions, SurfaceOptions};
use assetflow::bifurcation::{self, ScanOptions};
use assetflow::calibration::{self, EstimationProblem, FitSettings, FreeParam, Method, Observations, SmlSettings};
use assetflow::equilibrium;
use assetflow::integrator::{self, IntegratorSettings};
use assetflow::scenarios::{load_scenario, Scenario};
use assetflow::spectral::{self, JacobianKind};
use assetflow::validation;
use serde::Deserialize;
use serde_json::json;

use crate::manifest::{sha256_hex, Outputs, RunManifest};
use crate::{CalibrateArgs, Common, ContagionArgs, EquilibriaArgs, ExcursionArgs, Kind, MethodArg, ScanArgs, SimulateArgs, ValidateArgs};

fn scenario(common: &Common) -> Result<Scenario> {
    let mut sc = load_scenario(&common.scenario)?;
    for o in &common.overrides {
        let (name, value) = o.split_once('=').ok_or_else(|| anyhow!("override `{o}` is not NAME=VALUE"))?;
        let v: f64 = value.trim().parse().with_context(|| format!("override `{o}`"))?;
        sc = sc.with_param(name.trim(), v)?;
    }
    Ok(sc)
}

fn manifest(command: &str, sc: Option<&Scenario>, seed: u64, settings: serde_json::Value, summary: serde_json::Value) -> Result<RunManifest> {
    let hash = match sc {
        Some(s) => Some(sha256_hex(&serde_json::to_vec(s)?)),
        None => None,
    };
    Ok(RunManifest {
        command: command.to_string(),
        scenario: sc.map(|s| s.name.clone()),
        config_sha256: hash,
        settings,
        seed,
        version: env!("CARGO_PKG_VERSION"),
        outputs: Vec::new(),
        summary,
    })
}

fn csv_bytes<F>(f: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn simulate(a: &SimulateArgs, command: &str) -> Result<()> {
    let sc = scenario(&a.common)?;
    let (x0, classification, leading) = match sc.base_equilibrium() {
        Ok(eq) => {
            let rep = spectral::full_spectrum(&sc.config, &eq)?;
            (bifurcation::seeded_state(&eq, a.perturb), Some(rep.classification), Some(rep.leading))
        }
        Err(_) => (sc.initial_state()?, None, None),
    };
    let settings = IntegratorSettings { abs_tol: a.atol, rel_tol: a.rtol, ..IntegratorSettings::horizon(a.horizon, a.dt) };
    let traj = integrator::integrate(&sc.config, &x0, &settings)?;
    let drift = integrator::drift_monitor(&traj);
    let mut out = Outputs::new(&a.common.out)?;
    out.write("trajectory.csv", &csv_bytes(|w| traj.write_csv(w))?)?;
    if let Some(c) = classification {
        println!("equilibrium classification: {c:?} (leading Re {:.3e})", leading.unwrap_or(f64::NAN));
    }
    let summary = json!({
        "classification": classification,
        "leading_re": leading,
        "diagnostics": traj.diagnostics,
        "drift": drift,
    });
    let settings_json = json!({ "integrator": settings, "perturbation": a.perturb, "overrides": a.common.overrides });
    out.finish(manifest(command, Some(&sc), a.common.seed, settings_json, summary)?)?;
    Ok(())
}

pub fn equilibria(a: &EquilibriaArgs, command: &str) -> Result<()> {
    let sc = scenario(&a.common)?;
    let cfg = &sc.config;
    if a.grid == 0 {
        bail!("grid must have at least one division");
    }
    let grid = if cfg.n == 2 { equilibrium::two_group_grid(cfg.m0, a.grid) } else { equilibrium::simplex_grid(cfg.n, cfg.m0, a.grid) };
    let records = equilibrium::manifold_scan(cfg, &grid);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in &records {
        let key = r.classification.map_or("Failed".to_string(), |c| format!("{c:?}"));
        *counts.entry(key).or_default() += 1;
    }
    println!("{} cash splits: {:?}", records.len(), counts);
    let mut out = Outputs::new(&a.common.out)?;
    out.write("equilibria.csv", &csv_bytes(|w| equilibrium::write_manifold_csv(&records, cfg.m, w))?)?;
    let settings = json!({ "grid": a.grid, "overrides": a.common.overrides });
    out.finish(manifest(command, Some(&sc), a.common.seed, settings, json!({ "classifications": counts }))?)?;
    Ok(())
}

fn linspace(from: f64, to: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..n).map(|k| from + (to - from) * k as f64 / (n - 1) as f64).collect(),
    }
}

pub fn scan(a: &ScanArgs, command: &str) -> Result<()> {
    let sc = scenario(&a.common)?;
    let param = a.param.clone().or_else(|| sc.default_parameter.clone()).ok_or_else(|| anyhow!("scenario has no default parameter; pass --param"))?;
    if a.steps < 2 || !(a.to > a.from) {
        bail!("scan needs --to > --from and at least two steps");
    }
    let grid = linspace(a.from, a.to, a.steps);
    let kind = match a.jacobian {
        Kind::Reduced => JacobianKind::Reduced,
        Kind::Full => JacobianKind::Full,
    };
    let opts = ScanOptions { perturbation: a.perturb, min_horizon: a.horizon, kind, ..Default::default() };
    log::info!("scanning {param} over {} nodes", grid.len());
    let res = bifurcation::bifurcation_scan(&sc, &param, &grid, &opts)?;
    for n in &res.nodes {
        let period = n.metrics.as_ref().and_then(|m| m.period).map_or("-".to_string(), |p| format!("{p:.3}"));
        let amp = n.metrics.as_ref().map_or(f64::NAN, |m| m.amplitude);
        println!("{param} = {:<10.5} Re = {:+.4e}  amplitude = {amp:.4e}  period = {period}", n.value, n.leading);
    }
    match &res.threshold {
        Some(h) => println!("threshold {param} = {:.6} (omega {:.4}, period {:.3})", h.value, h.omega, h.period),
        None => println!("no stability change on the grid"),
    }
    let mut out = Outputs::new(&a.common.out)?;
    out.write("scan.csv", &csv_bytes(|w| bifurcation::write_scan_csv(&res, w))?)?;
    out.write("scan.gp", bifurcation::gnuplot_script("scan.csv", &param, res.threshold.as_ref().map(|h| h.value)).as_bytes())?;
    out.write_json("scan.json", &res)?;
    let settings = json!({ "param": param, "grid": grid, "options": opts, "overrides": a.common.overrides });
    let summary = json!({ "threshold": res.threshold, "note": res.note });
    out.finish(manifest(command, Some(&sc), a.common.seed, settings, summary)?)?;
    Ok(())
}

pub fn excursion(a: &ExcursionArgs, command: &str) -> Result<()> {
    let sc = scenario(&a.common)?;
    let eq = sc.base_equilibrium()?;
    let opts = SurfaceOptions { grid_1: a.grid.clone(), grid_2: a.grid.clone(), seed_fraction: a.seed_fraction, horizon: a.horizon, ..Default::default() };
    let res = analysis::excursion_surface(&sc.config, &eq, &opts);
    let failed = res.nodes.iter().filter(|n| n.report.is_none()).count();
    for (i, st) in res.stats.iter().enumerate() {
        println!("asset {}: mean {:.4} median {:.4} sd {:.4} flatness {:.4}", i + 1, st.mean, st.median, st.stddev, st.flatness);
    }
    if failed > 0 {
        log::warn!("{failed} nodes failed to integrate");
    }
    let mut out = Outputs::new(&a.common.out)?;
    out.write("surface.csv", &csv_bytes(|w| analysis::write_surface_csv(&res, sc.config.m, w))?)?;
    out.write("surface.gp", analysis::surface_gnuplot("surface.csv").as_bytes())?;
    let settings = json!({ "options": opts, "overrides": a.common.overrides });
    out.finish(manifest(command, Some(&sc), a.common.seed, settings, json!({ "stats": res.stats, "failed_nodes": failed }))?)?;
    Ok(())
}

pub fn contagion(a: &ContagionArgs, command: &str) -> Result<()> {
    let sc = scenario(&a.common)?;
    let eq = sc.base_equilibrium()?;
    let opts = ContagionOptions { shock: a.shock, horizon: a.horizon, window: a.window, ..Default::default() };
    let rep = analysis::contagion_matrix(&sc.config, &eq, &opts)?;
    let mut csv = String::from("responder");
    for k in 0..sc.config.m {
        csv.push_str(&format!(",shock{}", k + 1));
    }
    csv.push('\n');
    for (i, row) in rep.gamma.iter().enumerate() {
        csv.push_str(&(i + 1).to_string());
        for v in row {
            csv.push_str(&format!(",{v:e}"));
        }
        csv.push('\n');
    }
    print!("{csv}");
    if let Some(asym) = rep.asymmetry {
        println!("asymmetry index {asym:.4}");
    }
    let mut out = Outputs::new(&a.common.out)?;
    out.write("contagion.csv", csv.as_bytes())?;
    out.write_json("contagion.json", &rep)?;
    let settings = json!({ "options": opts, "overrides": a.common.overrides });
    out.finish(manifest(command, Some(&sc), a.common.seed, settings, json!({ "asymmetry": rep.asymmetry }))?)?;
    Ok(())
}

/// Estimation problem file: observations inline or from a CSV next to the file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    scenario: String,
    #[serde(default)]
    set: BTreeMap<String, f64>,
    free: Vec<FreeParam>,
    #[serde(default)]
    observations: Option<Observations>,
    #[serde(default)]
    observations_csv: Option<PathBuf>,
    #[serde(default = "default_method")]
    method: Method,
    #[serde(default)]
    sml: SmlSettings,
    #[serde(default)]
    fit: FitSettings,
}

fn default_method() -> Method {
    Method::Nls
}

fn load_problem(path: &Path) -> Result<EstimationProblem> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let pf: ProblemFile = serde_path_to_error::deserialize(de).map_err(|e| anyhow!("{}: {} at {}", path.display(), e.inner(), e.path()))?;
    let mut sc = load_scenario(&pf.scenario)?;
    for (k, v) in &pf.set {
        sc = sc.with_param(k, *v)?;
    }
    let observations = match (pf.observations, pf.observations_csv) {
        (Some(o), None) => o,
        (None, Some(csv)) => {
            let p = if csv.is_absolute() { csv } else { path.parent().unwrap_or(Path::new(".")).join(csv) };
            Observations::from_csv(std::fs::File::open(&p).with_context(|| format!("opening {}", p.display()))?)?
        }
        _ => bail!("{}: give exactly one of `observations` or `observations_csv`", path.display()),
    };
    Ok(EstimationProblem { scenario: sc, free: pf.free, observations, method: pf.method, sml: pf.sml, fit: pf.fit })
}

fn parse_free(spec: &str, sc: &Scenario) -> Result<FreeParam> {
    let parts: Vec<&str> = spec.split(':').collect();
    let name = parts[0].to_string();
    let truth = sc.param(&name)?.get(&sc.config)?;
    let (lo, hi) = match parts.len() {
        1 => calibration::oil_market_bounds()
            .into_iter()
            .find(|b| b.name == name)
            .map(|b| (b.lo, b.hi))
            .unwrap_or((0.5 * truth, 1.5 * truth)),
        3 => (parts[1].parse()?, parts[2].parse()?),
        _ => bail!("free parameter `{spec}` is not NAME or NAME:LO:HI"),
    };
    Ok(FreeParam { name, lo, hi, truth: Some(truth) })
}

fn synthetic_problem(a: &CalibrateArgs) -> Result<EstimationProblem> {
    let sc = scenario(&a.common)?;
    if a.free.is_empty() {
        bail!("synthetic calibration needs at least one --free parameter (or pass --problem)");
    }
    let free = a.free.iter().map(|f| parse_free(f, &sc)).collect::<Result<Vec<_>>>()?;
    let names: Vec<&str> = free.iter().map(|p| p.name.as_str()).collect();
    let truth: Vec<f64> = free.iter().map(|p| p.truth.unwrap_or(f64::NAN)).collect();
    let times: Vec<f64> = (1..=a.observations).map(|k| k as f64).collect();
    let noise = a.noise * sc.config.pa[0];
    let observations = calibration::synthetic_observations(&sc, &names, &truth, &times, a.shock, noise, a.common.seed.wrapping_add(1))?;
    let method = if a.method == MethodArg::Sml { Method::Sml } else { Method::Nls };
    let sml = SmlSettings { noise: if noise > 0.0 { noise } else { SmlSettings::default().noise }, ..Default::default() };
    let fit = FitSettings { initial_perturbation: a.shock, seed: a.common.seed, ..Default::default() };
    Ok(EstimationProblem { scenario: sc, free, observations, method, sml, fit })
}

pub fn calibrate(a: &CalibrateArgs, command: &str) -> Result<()> {
    let problem = match &a.problem {
        Some(p) => load_problem(p)?,
        None => synthetic_problem(a)?,
    };
    let result = match problem.method {
        Method::Nls => calibration::nls_fit(&problem)?,
        Method::Sml => calibration::sml_fit(&problem, problem.fit.seed)?,
    };
    println!("{:<12} {:>12} {:>12} {:>10}", "parameter", "estimate", "truth", "error %");
    for p in &result.parameters {
        let truth = p.truth.map_or("-".to_string(), |t| format!("{t:.6}"));
        let err = p.rel_error.map_or("-".to_string(), |e| format!("{:.2}", 100.0 * e));
        println!("{:<12} {:>12.6} {:>12} {:>10}", p.name, p.estimate, truth, err);
    }
    println!("loss {:.6e}, rmse {:?}, converged {}", result.loss, result.rmse, result.converged);

    let names: Vec<&str> = problem.free.iter().map(|p| p.name.as_str()).collect();
    let theta: Vec<f64> = result.parameters.iter().map(|p| p.estimate).collect();
    let obs = &problem.observations;
    let sim = calibration::simulate_observables(&problem.scenario, &names, &theta, &obs.times, problem.fit.initial_perturbation)?;
    let mut csv = String::from("time");
    for i in 0..obs.prices.len() {
        csv.push_str(&format!(",observed{0},fitted{0}", i + 1));
    }
    csv.push('\n');
    for (k, t) in obs.times.iter().enumerate() {
        csv.push_str(&format!("{t}"));
        for i in 0..obs.prices.len() {
            csv.push_str(&format!(",{},{}", obs.prices[i][k], sim[i][k]));
        }
        csv.push('\n');
    }
    let mut out = Outputs::new(&a.common.out)?;
    out.write_json("calibration.json", &result)?;
    out.write("fit.csv", csv.as_bytes())?;
    let settings = json!({ "free": problem.free, "method": problem.method, "sml": problem.sml, "fit": problem.fit, "observations": obs.times.len() });
    let summary = json!({ "loss": result.loss, "converged": result.converged });
    out.finish(manifest(command, Some(&problem.scenario), problem.fit.seed, settings, summary)?)?;
    Ok(())
}

/// Small runs of every artifact-producing subcommand, each into its own directory.
fn smoke(dir: &Path) -> Vec<(String, Result<()>)> {
    let common = |scenario: &str, sub: &str, set: &[&str]| Common {
        scenario: scenario.into(),
        overrides: set.iter().map(|s| s.to_string()).collect(),
        out: dir.join(sub),
        seed: 1,
    };
    let cmd = |name: &str| format!("assetflow {name} (validate smoke run)");
    vec![
        (
            "simulate".into(),
            simulate(
                &SimulateArgs { common: common("bulut-mixed", "simulate", &["q1_2=1.005"]), horizon: 50.0, dt: 0.1, perturb: 0.01, rtol: 1e-6, atol: 1e-8 },
                &cmd("simulate"),
            ),
        ),
        ("equilibria".into(), equilibria(&EquilibriaArgs { common: common("desantis-case1", "equilibria", &[]), grid: 10 }, &cmd("equilibria"))),
        (
            "scan".into(),
            scan(
                &ScanArgs {
                    common: common("bulut-mixed", "scan", &[]),
                    param: Some("q1_2".into()),
                    from: 0.9,
                    to: 1.1,
                    steps: 3,
                    jacobian: Kind::Reduced,
                    perturb: 0.01,
                    horizon: 100.0,
                },
                &cmd("scan"),
            ),
        ),
        (
            "excursion".into(),
            excursion(
                &ExcursionArgs { common: common("cavani-nigeria-libya", "excursion", &["q1_china=0.3"]), grid: vec![-5.0, 5.0], horizon: 60.0, seed_fraction: 0.01 },
                &cmd("excursion"),
            ),
        ),
        (
            "contagion".into(),
            contagion(
                &ContagionArgs { common: common("cavani-nigeria-libya", "contagion", &["q1_china=0.2"]), shock: 0.1, horizon: 60.0, window: 0.2 },
                &cmd("contagion"),
            ),
        ),
        (
            "calibrate".into(),
            calibrate(
                &CalibrateArgs {
                    common: common("cavani-nigeria-libya", "calibrate", &["q1_china=0.3"]),
                    problem: None,
                    free: vec!["q1_china".into()],
                    method: MethodArg::Nls,
                    noise: 0.0,
                    shock: 0.5,
                    observations: 50,
                },
                &cmd("calibrate"),
            ),
        ),
    ]
}

pub fn validate(a: &ValidateArgs, command: &str) -> Result<bool> {
    let ids: Vec<u32> = if a.criteria.is_empty() { (1..=13).collect() } else { a.criteria.clone() };
    let mut rows: Vec<(String, String, bool, String)> = Vec::new();
    for id in &ids {
        log::info!("criterion {id}");
        let r = validation::run_criterion(*id);
        rows.push((r.id.to_string(), r.name.to_string(), r.passed, format!("{} [{:.1}s]", r.detail, r.seconds)));
    }
    if !a.no_smoke {
        for (name, res) in smoke(&a.out.join("smoke")) {
            let (ok, detail) = match res {
                Ok(()) => (true, "artifacts and manifest written".to_string()),
                Err(e) => (false, format!("{e:#}")),
            };
            rows.push(("smoke".into(), name, ok, detail));
        }
    }
    println!("{:<6} {:<42} {:<5} detail", "id", "check", "");
    for (id, name, ok, detail) in &rows {
        println!("{:<6} {:<42} {:<5} {}", id, name, if *ok { "PASS" } else { "FAIL" }, detail);
    }
    let failed = rows.iter().filter(|r| !r.2).count();
    println!("{} of {} checks passed", rows.len() - failed, rows.len());

    let mut out = Outputs::new(&a.out)?;
    let table: Vec<_> = rows.iter().map(|(id, name, ok, detail)| json!({ "id": id, "check": name, "passed": ok, "detail": detail })).collect();
    out.write_json("validate.json", &table)?;
    let settings = json!({ "criteria": ids, "smoke": !a.no_smoke });
    out.finish(manifest(command, None, 0, settings, json!({ "failed": failed }))?)?;
    Ok(failed == 0)
}

