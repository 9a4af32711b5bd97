//! Excursions, excursion surfaces, contagion matrices and wealth redistribution.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::equilibrium::EquilibriumPoint;
use crate::integrator::{self, IntegrationError, IntegratorSettings, Trajectory};
use crate::model::{self, ModelConfig, ModelError, StateVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("empty trajectory")]
    Empty,
    #[error("asymmetry index undefined: Γ[{i}][{j}] + Γ[{j}][{i}] = 0")]
    UndefinedAsymmetry { i: usize, j: usize },
    #[error("shock fraction must be positive, got {0}")]
    BadShock(f64),
    #[error("perturbation leaves a non-positive price for asset {0}")]
    NonPositivePrice(usize),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `max_t |P_i(t) − P_i(0)|`.
pub fn excursion(traj: &Trajectory, asset: usize) -> Result<f64, AnalysisError> {
    let p = traj.prices(asset);
    let p0 = *p.first().ok_or(AnalysisError::Empty)?;
    Ok(p.iter().fold(0.0, |acc, v| acc.max((v - p0).abs())))
}

/// Pearson correlation; zero-variance series correlate fully with themselves and not at all otherwise.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcursionReport {
    pub excursion: Vec<f64>,
    pub e_max: f64,
    /// Root-sum-square of the per-asset excursions.
    pub e_agg: f64,
    /// Correlation of price series over the post-transient samples.
    pub correlation: Vec<Vec<f64>>,
    pub perturbation: Vec<f64>,
}

pub fn excursion_report(traj: &Trajectory, perturbation: &[f64], transient_fraction: f64) -> Result<ExcursionReport, AnalysisError> {
    if traj.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let m = traj.layout.m;
    let excursion = (0..m).map(|i| excursion(traj, i)).collect::<Result<Vec<_>, _>>()?;
    let e_max = excursion.iter().cloned().fold(0.0, f64::max);
    let e_agg = excursion.iter().map(|e| e * e).sum::<f64>().sqrt();
    let (t0, t1) = (traj.times[0], traj.times[traj.len() - 1]);
    let tail = traj.tail_from(t0 + transient_fraction * (t1 - t0));
    let series: Vec<Vec<f64>> = (0..m).map(|i| tail.prices(i)).collect();
    let correlation = (0..m)
        .map(|i| (0..m).map(|k| if i == k { 1.0 } else { pearson(&series[i], &series[k]) }).collect())
        .collect();
    Ok(ExcursionReport { excursion, e_max, e_agg, correlation, perturbation: perturbation.to_vec() })
}

#[derive(Debug, Clone, Serialize)]
pub struct SurfaceOptions {
    /// Absolute price offsets for the first asset.
    pub grid_1: Vec<f64>,
    /// Absolute price offsets for the second asset (ignored for single-asset models).
    pub grid_2: Vec<f64>,
    /// Relative kick on `P^(1)` applied to every node before the grid offset.
    pub seed_fraction: f64,
    pub horizon: f64,
    pub sample_dt: f64,
    pub transient_fraction: f64,
}

impl Default for SurfaceOptions {
    fn default() -> Self {
        let g = vec![-10.0, -5.0, 0.0, 5.0, 10.0];
        Self { grid_1: g.clone(), grid_2: g, seed_fraction: 0.01, horizon: 300.0, sample_dt: 0.1, transient_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SurfaceNode {
    pub dp: Vec<f64>,
    pub report: Option<ExcursionReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub median: f64,
    pub stddev: f64,
    /// `stddev / mean`.
    pub flatness: f64,
}

pub fn summary_stats(values: &[f64]) -> SummaryStats {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) { 0.5 * (sorted[mid - 1] + sorted[mid]) } else { sorted[mid] };
    let stddev = var.sqrt();
    SummaryStats { mean, median, stddev, flatness: if mean != 0.0 { stddev / mean } else { f64::INFINITY } }
}

#[derive(Debug, Clone, Serialize)]
pub struct SurfaceResult {
    pub nodes: Vec<SurfaceNode>,
    /// Per-asset statistics over the nodes that integrated successfully.
    pub stats: Vec<SummaryStats>,
    pub options: SurfaceOptions,
}

fn perturbed(eq: &EquilibriumPoint, seed_fraction: f64, dp: &[f64]) -> Result<StateVector, AnalysisError> {
    let mut x = eq.state.clone();
    x.set_price(0, x.price(0) * (1.0 + seed_fraction));
    for (i, d) in dp.iter().enumerate() {
        let p = x.price(i) + d;
        if p <= 0.0 {
            return Err(AnalysisError::NonPositivePrice(i));
        }
        x.set_price(i, p);
    }
    Ok(x)
}

/// One integration per grid node from the seeded equilibrium shifted by the node's offsets.
pub fn excursion_surface(cfg: &ModelConfig, eq: &EquilibriumPoint, opts: &SurfaceOptions) -> SurfaceResult {
    let m = cfg.m;
    let mut offsets = Vec::new();
    for &d1 in &opts.grid_1 {
        if m == 1 {
            offsets.push(vec![d1]);
            continue;
        }
        for &d2 in &opts.grid_2 {
            let mut dp = vec![0.0; m];
            dp[0] = d1;
            dp[1] = d2;
            offsets.push(dp);
        }
    }
    let settings = IntegratorSettings::horizon(opts.horizon, opts.sample_dt);
    let nodes: Vec<SurfaceNode> = offsets
        .into_par_iter()
        .map(|dp| {
            let run = || -> Result<ExcursionReport, AnalysisError> {
                let x0 = perturbed(eq, opts.seed_fraction, &dp)?;
                let traj = integrator::integrate(cfg, &x0, &settings)?;
                excursion_report(&traj, &dp, opts.transient_fraction)
            };
            match run() {
                Ok(r) => SurfaceNode { dp, report: Some(r), error: None },
                Err(e) => SurfaceNode { dp, report: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    let stats = (0..m)
        .map(|i| {
            let vals: Vec<f64> = nodes.iter().filter_map(|n| n.report.as_ref().map(|r| r.excursion[i])).collect();
            summary_stats(&vals)
        })
        .collect();
    SurfaceResult { nodes, stats, options: opts.clone() }
}

pub fn write_surface_csv<W: std::io::Write>(res: &SurfaceResult, m: usize, w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut head: Vec<String> = (1..=m.min(2)).map(|i| format!("dP_{i}")).collect();
    head.extend((1..=m).map(|i| format!("E_{i}")));
    head.extend(["E_max".to_string(), "E_agg".to_string(), "error".to_string()]);
    wr.write_record(&head)?;
    for node in &res.nodes {
        let mut row: Vec<String> = node.dp.iter().take(2).map(|v| v.to_string()).collect();
        match &node.report {
            Some(r) => {
                row.extend(r.excursion.iter().map(|v| v.to_string()));
                row.extend([r.e_max.to_string(), r.e_agg.to_string(), String::new()]);
            }
            None => {
                row.extend((0..m + 2).map(|_| "NaN".to_string()));
                row.push(node.error.clone().unwrap_or_default());
            }
        }
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn surface_gnuplot(csv_name: &str) -> String {
    format!(
        "set datafile separator ','\nset terminal pngcairo size 900,700\nset output 'excursion_surface.png'\n\
set xlabel 'dP_1'\nset ylabel 'dP_2'\nset zlabel 'E_1'\nset dgrid3d 5,5\nset hidden3d\n\
splot '{csv_name}' using 1:2:3 every ::1 with lines title 'excursion of asset 1'\n"
    )
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ContagionOptions {
    /// Shock size as a fraction of the fundamental value.
    pub shock: f64,
    pub horizon: f64,
    /// Trailing fraction of the horizon over which the response is measured.
    pub window: f64,
    pub sample_dt: f64,
}

impl Default for ContagionOptions {
    fn default() -> Self {
        Self { shock: 0.1, horizon: 60.0, window: 0.2, sample_dt: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContagionReport {
    /// `gamma[i][k]`: response of asset `i` per unit shock to asset `k`.
    pub gamma: Vec<Vec<f64>>,
    /// Index `A` for assets 1 and 2 when defined.
    pub asymmetry: Option<f64>,
    pub shocks: Vec<f64>,
}

fn late_deviation(cfg: &ModelConfig, traj: &Trajectory, window: f64) -> Vec<f64> {
    let (t0, t1) = (traj.times[0], traj.times[traj.len() - 1]);
    let tail = traj.tail_from(t1 - window * (t1 - t0));
    (0..cfg.m)
        .map(|i| tail.prices(i).iter().fold(0.0, |acc: f64, p| acc.max((p - cfg.pa[i]).abs())))
        .collect()
}

/// Shock each price in turn by `shock·Pa` and measure the late-window cross response,
/// net of the unshocked baseline.
pub fn contagion_matrix(cfg: &ModelConfig, eq: &EquilibriumPoint, opts: &ContagionOptions) -> Result<ContagionReport, AnalysisError> {
    if !(opts.shock > 0.0) {
        return Err(AnalysisError::BadShock(opts.shock));
    }
    let m = cfg.m;
    let settings = IntegratorSettings::horizon(opts.horizon, opts.sample_dt);
    let runs: Vec<Result<Vec<f64>, AnalysisError>> = (0..=m)
        .into_par_iter()
        .map(|j| {
            let mut x0 = eq.state.clone();
            if j < m {
                x0.set_price(j, x0.price(j) + opts.shock * cfg.pa[j]);
            }
            let traj = integrator::integrate(cfg, &x0, &settings)?;
            Ok(late_deviation(cfg, &traj, opts.window))
        })
        .collect();
    let mut runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let baseline = runs.pop().expect("baseline run");
    let shocks: Vec<f64> = cfg.pa.iter().map(|pa| opts.shock * pa).collect();
    let mut gamma = vec![vec![0.0; m]; m];
    for (j, dev) in runs.iter().enumerate() {
        for i in 0..m {
            if i != j {
                gamma[i][j] = (dev[i] - baseline[i]) / shocks[j];
            }
        }
    }
    let asymmetry = if m >= 2 { asymmetry_index(&gamma, 0, 1).ok() } else { None };
    Ok(ContagionReport { gamma, asymmetry, shocks })
}

/// `(Γ[i][j] − Γ[j][i]) / (Γ[i][j] + Γ[j][i])`.
pub fn asymmetry_index(gamma: &[Vec<f64>], i: usize, j: usize) -> Result<f64, AnalysisError> {
    let (a, b) = (gamma[i][j], gamma[j][i]);
    if a + b == 0.0 {
        return Err(AnalysisError::UndefinedAsymmetry { i, j });
    }
    Ok((a - b) / (a + b))
}

/// Per-group wealth with the trading and capital-gain decomposition at every sample.
///
/// `trading[k][j]` is the executed net cash inflow `Σ_i (sold − bought)`, which equals `dM_j/dt`;
/// `capital_gain[k][j]` is `Σ_i N_ji dP_i/dt`. Because share purchases are valued at the current
/// price, `dW_j/dt = capital_gain` exactly and the sum of both terms equals `dW_j/dt + dM_j/dt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WealthSeries {
    pub times: Vec<f64>,
    pub wealth: Vec<Vec<f64>>,
    pub trading: Vec<Vec<f64>>,
    pub capital_gain: Vec<Vec<f64>>,
    /// Central-difference `dW_j/dt` (one-sided at the ends).
    pub dw_dt: Vec<Vec<f64>>,
}

pub fn wealth_series(cfg: &ModelConfig, traj: &Trajectory) -> Result<WealthSeries, AnalysisError> {
    if traj.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let (m, n) = (cfg.m, cfg.n);
    let lay = traj.layout;
    let mut wealth = Vec::with_capacity(traj.len());
    let mut trading = Vec::with_capacity(traj.len());
    let mut capital_gain = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        let x = traj.state(k);
        wealth.push(model::wealth(&x).per_group);
        let dx = model::rhs(cfg, &x)?;
        trading.push((0..n).map(|j| dx.cash(j)).collect());
        capital_gain.push((0..n).map(|j| (0..m).map(|i| x.shares(j, i) * dx.price(i)).sum()).collect());
    }
    let len = traj.len();
    let t = &traj.times;
    let dw_dt = (0..len)
        .map(|k| {
            let (a, b) = if len == 1 {
                (0, 0)
            } else if k == 0 {
                (0, 1)
            } else if k == len - 1 {
                (len - 2, len - 1)
            } else {
                (k - 1, k + 1)
            };
            (0..lay.n)
                .map(|j| if a == b { 0.0 } else { (wealth[b][j] - wealth[a][j]) / (t[b] - t[a]) })
                .collect()
        })
        .collect();
    Ok(WealthSeries { times: traj.times.clone(), wealth, trading, capital_gain, dw_dt })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asymmetry_examples() {
        let g = vec![vec![0.0, 0.0133], vec![0.0066, 0.0]];
        assert!((asymmetry_index(&g, 0, 1).unwrap() - 0.3367).abs() < 1e-4);
        let g = vec![vec![0.0, 0.5], vec![0.5, 0.0]];
        assert_eq!(asymmetry_index(&g, 0, 1).unwrap(), 0.0);
        let g = vec![vec![0.0, 0.5], vec![0.0, 0.0]];
        assert_eq!(asymmetry_index(&g, 0, 1).unwrap(), 1.0);
        let g = vec![vec![0.0; 2]; 2];
        assert!(asymmetry_index(&g, 0, 1).is_err());
    }

    #[test]
    fn stats_of_small_sample() {
        let s = summary_stats(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        assert!((s.stddev - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn pearson_bounds() {
        let a = [1.0, 2.0, 3.0];
        assert!((pearson(&a, &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-15);
        assert!((pearson(&a, &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&a, &[1.0, 1.0, 1.0]), 0.0);
    }
}
