//! Parameter estimation from price series: bounded Nelder–Mead least squares and simulated
//! maximum likelihood with Gaussian kernel densities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bifurcation::seeded_state;
use crate::integrator::{self, IntegrationError, IntegratorSettings};
use crate::scenarios::{Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("no free parameters")]
    NoFreeParameters,
    #[error("bounds for `{name}` are invalid: [{lo}, {hi}]")]
    BadBounds { name: String, lo: f64, hi: f64 },
    #[error("observation times must be strictly increasing and nonnegative")]
    BadTimes,
    #[error("observations have {got} assets, model has {expected}")]
    AssetMismatch { got: usize, expected: usize },
    #[error("simulated likelihood needs at least 50 simulations, got {0}")]
    TooFewSimulations(usize),
    #[error("observation noise scale must be positive")]
    BadNoise,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeParam {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    /// Known value for synthetic studies.
    #[serde(default)]
    pub truth: Option<f64>,
}

/// Estimation domains for the two-asset oil-market parameters.
pub fn oil_market_bounds() -> Vec<FreeParam> {
    [
        ("b_china", 0.5, 4.0),
        ("d_usa", 0.001, 0.3),
        ("alpha", 0.5, 5.0),
        ("q1_china", 0.1, 1.2),
        ("q2_usa", 0.1, 0.8),
        ("c1_china", 0.05, 0.5),
        ("c2_usa", 0.1, 0.6),
        ("k0_china", 0.05, 0.4),
        ("k0_usa", 0.05, 0.4),
    ]
    .iter()
    .map(|&(n, lo, hi)| FreeParam { name: n.into(), lo, hi, truth: None })
    .collect()
}

/// Price observations: `prices[i][k]` is asset `i` at `times[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observations {
    pub times: Vec<f64>,
    pub prices: Vec<Vec<f64>>,
}

impl Observations {
    /// Reads a CSV with a `time` column followed by one column per asset.
    pub fn from_csv<R: std::io::Read>(r: R) -> Result<Self, csv::Error> {
        let mut rd = csv::Reader::from_reader(r);
        let mut times = Vec::new();
        let mut prices: Vec<Vec<f64>> = Vec::new();
        for rec in rd.deserialize::<Vec<f64>>() {
            let row = rec?;
            if prices.is_empty() {
                prices = vec![Vec::new(); row.len().saturating_sub(1)];
            }
            times.push(row[0]);
            for (i, v) in row[1..].iter().enumerate() {
                prices[i].push(*v);
            }
        }
        Ok(Self { times, prices })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Nls,
    Sml,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmlSettings {
    /// Number of simulations `S` per likelihood evaluation.
    pub simulations: usize,
    /// Standard deviation of the additive observation noise in price units.
    pub noise: f64,
}

impl Default for SmlSettings {
    fn default() -> Self {
        Self { simulations: 50, noise: 0.8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSettings {
    pub restarts: usize,
    pub max_evals: usize,
    /// Relative kick on the first price that starts every simulation off equilibrium.
    pub initial_perturbation: f64,
    pub seed: u64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self { restarts: 5, max_evals: 400, initial_perturbation: 0.1, seed: 7 }
    }
}

#[derive(Debug, Clone)]
pub struct EstimationProblem {
    pub scenario: Scenario,
    pub free: Vec<FreeParam>,
    pub observations: Observations,
    pub method: Method,
    pub sml: SmlSettings,
    pub fit: FitSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamEstimate {
    pub name: String,
    pub estimate: f64,
    pub truth: Option<f64>,
    /// `|estimate − truth| / |truth|` when the truth is known.
    pub rel_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationResult {
    pub method: Method,
    pub parameters: Vec<ParamEstimate>,
    /// Sum of squared errors (NLS) or mean log-likelihood (SML).
    pub loss: f64,
    pub converged: bool,
    pub evaluations: usize,
    /// Best objective reached by each restart.
    pub restart_objectives: Vec<f64>,
    pub rmse: Vec<f64>,
    pub density_floors: usize,
}

impl EstimationProblem {
    fn check(&self) -> Result<(), CalibrationError> {
        if self.free.is_empty() {
            return Err(CalibrationError::NoFreeParameters);
        }
        for p in &self.free {
            if !(p.lo.is_finite() && p.hi.is_finite() && p.lo < p.hi) {
                return Err(CalibrationError::BadBounds { name: p.name.clone(), lo: p.lo, hi: p.hi });
            }
            self.scenario.param(&p.name)?;
        }
        let t = &self.observations.times;
        if t.is_empty() || t[0] < 0.0 || t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CalibrationError::BadTimes);
        }
        if self.observations.prices.len() != self.scenario.config.m {
            return Err(CalibrationError::AssetMismatch { got: self.observations.prices.len(), expected: self.scenario.config.m });
        }
        Ok(())
    }

    fn names(&self) -> Vec<&str> {
        self.free.iter().map(|p| p.name.as_str()).collect()
    }
}

/// Model prices at `times` with the named parameters overlaid, starting from the seeded base equilibrium.
/// Sentiments start at zero.
pub fn simulate_observables(
    sc: &Scenario,
    names: &[&str],
    theta: &[f64],
    times: &[f64],
    perturbation: f64,
) -> Result<Vec<Vec<f64>>, CalibrationError> {
    let mut s = sc.clone();
    for (n, v) in names.iter().zip(theta) {
        s = s.with_param(n, *v)?;
    }
    let eq = s.base_equilibrium()?;
    let x0 = seeded_state(&eq, perturbation);
    let t_end = *times.last().ok_or(CalibrationError::BadTimes)?;
    let dt = if times.len() > 1 { times[1] - times[0] } else { t_end };
    let on_grid = times.iter().all(|t| ((t / dt).round() * dt - t).abs() < 1e-9 * t_end.max(1.0));
    let sample_dt = if on_grid { dt } else { (t_end / 10_000.0).max(1e-3) };
    let traj = integrator::integrate(&s.config, &x0, &IntegratorSettings::horizon(t_end, sample_dt))?;
    let m = s.config.m;
    let out = (0..m)
        .map(|i| {
            let p = traj.prices(i);
            times
                .iter()
                .map(|&t| {
                    let u = t / sample_dt;
                    let k = (u.floor() as usize).min(p.len() - 1);
                    let frac = u - k as f64;
                    if k + 1 < p.len() && frac > 1e-9 {
                        p[k] + frac * (p[k + 1] - p[k])
                    } else {
                        p[k]
                    }
                })
                .collect()
        })
        .collect();
    Ok(out)
}

/// Noiseless or noisy synthetic observations at the given truth.
pub fn synthetic_observations(
    sc: &Scenario,
    names: &[&str],
    truth: &[f64],
    times: &[f64],
    perturbation: f64,
    noise: f64,
    seed: u64,
) -> Result<Observations, CalibrationError> {
    let mut prices = simulate_observables(sc, names, truth, times, perturbation)?;
    if noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for series in prices.iter_mut() {
            for v in series.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += noise * z;
            }
        }
    }
    Ok(Observations { times: times.to_vec(), prices })
}

pub fn sse(obs: &Observations, sim: &[Vec<f64>]) -> f64 {
    obs.prices.iter().zip(sim).flat_map(|(o, s)| o.iter().zip(s).map(|(a, b)| (a - b) * (a - b))).sum()
}

pub fn rmse(obs: &Observations, sim: &[Vec<f64>]) -> Vec<f64> {
    obs.prices
        .iter()
        .zip(sim)
        .map(|(o, s)| (o.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / o.len() as f64).sqrt())
        .collect()
}

/// Draws for simulation `sim`: one independent ChaCha stream per `(seed, sim)`.
fn noise_draws(seed: u64, sim: usize, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sim as u64 + 1);
    (0..count).map(|_| rng.sample(StandardNormal)).collect()
}

/// Gaussian KDE at `x` with Silverman's bandwidth `1.06·σ̂·S^(−1/5)`. Returns the density and
/// whether it had to be floored.
pub fn kde_density(samples: &[f64], x: f64) -> (f64, bool) {
    let s = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / s;
    let sd = (samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (s - 1.0).max(1.0)).sqrt();
    let h = (1.06 * sd * s.powf(-0.2)).max(1e-12 * mean.abs().max(1.0));
    let norm = 1.0 / (s * h * (2.0 * std::f64::consts::PI).sqrt());
    let mut dens = 0.0;
    let mut near = false;
    for v in samples {
        let u = (x - v) / h;
        near |= u.abs() <= 6.0;
        dens += (-0.5 * u * u).exp();
    }
    let dens = dens * norm;
    if !near || dens < 1e-300 {
        return (1e-300, true);
    }
    (dens, false)
}

/// Simulated mean log-likelihood of the observations given model prices `sim`.
/// Noise draws depend only on `(seed, sim index)` so the objective is smooth in θ.
pub fn sml_loglik(obs: &Observations, sim: &[Vec<f64>], settings: &SmlSettings, seed: u64) -> (f64, usize) {
    let m = obs.prices.len();
    let k_count = obs.times.len();
    let draws: Vec<Vec<f64>> = (0..settings.simulations).map(|s| noise_draws(seed, s, m * k_count)).collect();
    let mut total = 0.0;
    let mut floors = 0;
    let mut samples = vec![0.0; settings.simulations];
    for i in 0..m {
        for k in 0..k_count {
            for (s, d) in draws.iter().enumerate() {
                samples[s] = sim[i][k] + settings.noise * d[i * k_count + k];
            }
            let (f, floored) = kde_density(&samples, obs.prices[i][k]);
            floors += floored as usize;
            total += f.ln();
        }
    }
    if floors > 0 {
        log::warn!("{floors} observations fell outside every kernel; density floored at 1e-300");
    }
    (total / (m * k_count) as f64, floors)
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// Stop when the simplex diameter falls below this.
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_evals: 400, f_tol: 1e-10, x_tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Unconstrained Nelder–Mead minimisation from an axis-aligned simplex of size `step`.
/// Non-finite objective values are treated as `+∞`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], step: f64, opts: &NelderMeadOptions) -> NelderMeadResult {
    let d = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() { v } else { f64::INFINITY }
    };
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for k in 0..d {
        let mut p = x0.to_vec();
        p[k] += step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p, &mut evals)).collect();
    let mut converged = false;
    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let spread = vals[d] - vals[0];
        let diam = pts[1..].iter().map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
        if (spread.is_finite() && spread <= opts.f_tol * (1.0 + vals[0].abs())) || diam <= opts.x_tol {
            converged = vals[0].is_finite();
            break;
        }
        let centroid: Vec<f64> = (0..d).map(|k| pts[..d].iter().map(|p| p[k]).sum::<f64>() / d as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..d).map(|k| centroid[k] + t * (pts[d][k] - centroid[k])).collect() };
        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                pts[d] = xe;
                vals[d] = fe;
            } else {
                pts[d] = xr;
                vals[d] = fr;
            }
            continue;
        }
        if fr < vals[d - 1] {
            pts[d] = xr;
            vals[d] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[d] {
            let x = along(-0.5);
            let v = eval(&x, &mut evals);
            (x, v)
        } else {
            let x = along(0.5);
            let v = eval(&x, &mut evals);
            (x, v)
        };
        if fc < vals[d].min(fr) {
            pts[d] = xc;
            vals[d] = fc;
            continue;
        }
        // shrink towards the best vertex
        for i in 1..=d {
            for k in 0..d {
                pts[i][k] = pts[0][k] + 0.5 * (pts[i][k] - pts[0][k]);
            }
            vals[i] = eval(&pts[i], &mut evals);
        }
    }
    let best = (0..=d).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    NelderMeadResult { x: pts[best].clone(), f: vals[best], evals, converged }
}

fn to_bounded(u: f64, p: &FreeParam) -> f64 {
    p.lo + (p.hi - p.lo) / (1.0 + (-u).exp())
}

fn to_unbounded(v: f64, p: &FreeParam) -> f64 {
    let s = ((v - p.lo) / (p.hi - p.lo)).clamp(1e-9, 1.0 - 1e-9);
    (s / (1.0 - s)).ln()
}

fn fit(problem: &EstimationProblem) -> Result<EstimationResult, CalibrationError> {
    problem.check()?;
    if problem.method == Method::Sml {
        if problem.sml.simulations < 50 {
            return Err(CalibrationError::TooFewSimulations(problem.sml.simulations));
        }
        if !(problem.sml.noise > 0.0) {
            return Err(CalibrationError::BadNoise);
        }
    }
    let names = problem.names();
    let obs = &problem.observations;
    let fs = &problem.fit;
    let objective = |u: &[f64]| -> f64 {
        let theta: Vec<f64> = u.iter().zip(&problem.free).map(|(x, p)| to_bounded(*x, p)).collect();
        match simulate_observables(&problem.scenario, &names, &theta, &obs.times, fs.initial_perturbation) {
            Ok(sim) => match problem.method {
                Method::Nls => sse(obs, &sim),
                Method::Sml => -sml_loglik(obs, &sim, &problem.sml, fs.seed).0,
            },
            Err(_) => f64::INFINITY,
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(fs.seed);
    let opts = NelderMeadOptions { max_evals: fs.max_evals, ..Default::default() };
    let mut best: Option<NelderMeadResult> = None;
    let mut restart_objectives = Vec::new();
    let mut evaluations = 0;
    for r in 0..fs.restarts.max(1) {
        // the first restart starts mid-domain; the rest draw seeded starts inside the middle 80%
        let u0: Vec<f64> = problem
            .free
            .iter()
            .map(|p| {
                let s = if r == 0 { 0.5 } else { rng.gen_range(0.1..0.9) };
                to_unbounded(p.lo + s * (p.hi - p.lo), p)
            })
            .collect();
        let res = nelder_mead(&objective, &u0, 0.5, &opts);
        evaluations += res.evals;
        restart_objectives.push(res.f);
        if best.as_ref().is_none_or(|b| res.f < b.f) {
            best = Some(res);
        }
    }
    let best = best.expect("at least one restart");
    let theta: Vec<f64> = best.x.iter().zip(&problem.free).map(|(x, p)| to_bounded(*x, p)).collect();
    let converged = best.f.is_finite() && best.converged;
    if !converged {
        log::warn!("estimation did not converge; reporting best-seen parameters");
    }
    let (rmse_v, floors) = match simulate_observables(&problem.scenario, &names, &theta, &obs.times, fs.initial_perturbation) {
        Ok(sim) => {
            let floors = if problem.method == Method::Sml { sml_loglik(obs, &sim, &problem.sml, fs.seed).1 } else { 0 };
            (rmse(obs, &sim), floors)
        }
        Err(_) => (vec![f64::NAN; obs.prices.len()], 0),
    };
    let parameters = problem
        .free
        .iter()
        .zip(&theta)
        .map(|(p, &v)| ParamEstimate {
            name: p.name.clone(),
            estimate: v,
            truth: p.truth,
            rel_error: p.truth.map(|t| (v - t).abs() / t.abs().max(f64::MIN_POSITIVE)),
        })
        .collect();
    let loss = match problem.method {
        Method::Nls => best.f,
        Method::Sml => -best.f,
    };
    Ok(EstimationResult {
        method: problem.method,
        parameters,
        loss,
        converged,
        evaluations,
        restart_objectives,
        rmse: rmse_v,
        density_floors: floors,
    })
}

/// Least-squares fit: minimises `Σ_k Σ_i (P_obs − P_sim)²`.
pub fn nls_fit(problem: &EstimationProblem) -> Result<EstimationResult, CalibrationError> {
    let mut p = problem.clone();
    p.method = Method::Nls;
    fit(&p)
}

/// Simulated maximum likelihood fit, deterministic given `seed`.
pub fn sml_fit(problem: &EstimationProblem, seed: u64) -> Result<EstimationResult, CalibrationError> {
    let mut p = problem.clone();
    p.method = Method::Sml;
    p.fit.seed = seed;
    fit(&p)
}
