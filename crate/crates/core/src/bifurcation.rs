//! Hopf thresholds from the leading eigenvalue, limit-cycle metrology and one-parameter scans.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::equilibrium::EquilibriumPoint;
use crate::integrator::{self, IntegrationError, IntegratorSettings, Trajectory};
use crate::scenarios::{Scenario, ScenarioError};
use crate::spectral::{self, Classification, JacobianKind, SpectralError, SpectrumReport};

#[derive(Debug, Error)]
pub enum BifurcationError {
    #[error("no sign change of the leading real part on [{lo}, {hi}] ({re_lo:e}, {re_hi:e})")]
    NoSignChange { lo: f64, hi: f64, re_lo: f64, re_hi: f64 },
    #[error("real eigenvalue crosses zero at {at}: fold, not Hopf")]
    RealCrossing { at: f64 },
    #[error("window too short: {peaks} peaks found")]
    WindowTooShort { peaks: usize },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

#[derive(Debug, Clone, Serialize)]
pub struct HopfThreshold {
    pub parameter: String,
    pub value: f64,
    /// Imaginary part of the critical pair at the threshold.
    pub omega: f64,
    /// `2π/ω`, the period of the cycle born at the threshold.
    pub period: f64,
    /// Finite-difference derivative of the leading real part with respect to the parameter.
    pub transversality: f64,
    pub kind: JacobianKind,
}

/// Spectrum at the scenario's base equilibrium with `param = value`.
pub fn spectrum_at(sc: &Scenario, param: &str, value: f64, kind: JacobianKind) -> Result<(SpectrumReport, EquilibriumPoint), BifurcationError> {
    let s = sc.with_param(param, value)?;
    let eq = s.base_equilibrium()?;
    let rep = match kind {
        JacobianKind::Full => spectral::full_spectrum(&s.config, &eq)?,
        JacobianKind::Reduced => spectral::reduced_spectrum(&s.config, &eq)?,
    };
    Ok((rep, eq))
}

/// Bisection on the leading real part of the Jacobian at the base equilibrium.
pub fn find_hopf_threshold(
    sc: &Scenario,
    param: &str,
    lo: f64,
    hi: f64,
    tol: f64,
    kind: JacobianKind,
) -> Result<HopfThreshold, BifurcationError> {
    let lead = |v: f64| -> Result<f64, BifurcationError> { Ok(spectrum_at(sc, param, v, kind)?.0.leading) };
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (lead(a)?, lead(b)?);
    if fa.signum() == fb.signum() {
        return Err(BifurcationError::NoSignChange { lo, hi, re_lo: fa, re_hi: fb });
    }
    let sa = fa.signum();
    while (b - a).abs() > tol {
        let mid = 0.5 * (a + b);
        let fm = lead(mid)?;
        if fm.signum() == sa {
            a = mid;
        } else {
            b = mid;
        }
    }
    let value = 0.5 * (a + b);
    let (rep, _) = spectrum_at(sc, param, value, kind)?;
    if rep.leading_im <= 1e-6 {
        return Err(BifurcationError::RealCrossing { at: value });
    }
    let h = (10.0 * tol).max(1e-6 * value.abs().max(1.0));
    let transversality = (lead(value + h)? - lead(value - h)?) / (2.0 * h);
    if transversality == 0.0 || transversality.signum() != (fb - fa).signum() * (hi - lo).signum() {
        log::warn!("transversality check inconclusive at {param} = {value}: dRe/dmu = {transversality:e}");
    }
    Ok(HopfThreshold {
        parameter: param.to_string(),
        value,
        omega: rep.leading_im,
        period: 2.0 * std::f64::consts::PI / rep.leading_im,
        transversality,
        kind,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleMetrics {
    /// Half the peak-to-trough range over the window.
    pub amplitude: f64,
    /// Mean spacing of successive peaks; `None` for non-oscillatory windows.
    pub period: Option<f64>,
    pub p_max: f64,
    pub p_min: f64,
    pub peaks: usize,
}

/// Peak times (parabolic refinement) of strict local maxima rising `floor` above the window mean.
pub fn peak_times(times: &[f64], y: &[f64], floor: f64) -> Vec<f64> {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let mut out = Vec::new();
    for k in 1..y.len().saturating_sub(1) {
        if y[k] > y[k - 1] && y[k] >= y[k + 1] && y[k] - mean > floor {
            let (a, b, c) = (y[k - 1], y[k], y[k + 1]);
            let denom = a - 2.0 * b + c;
            let shift = if denom.abs() > 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
            let dt = 0.5 * (times[k + 1] - times[k - 1]);
            out.push(times[k] + shift * dt);
        }
    }
    out
}

pub fn series_metrics(times: &[f64], y: &[f64]) -> Result<CycleMetrics, BifurcationError> {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let p_max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let p_min = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let noise = 1e-6 * mean.abs();
    let amplitude = 0.5 * (p_max - p_min);
    if p_max - p_min <= noise {
        return Ok(CycleMetrics { amplitude, period: None, p_max, p_min, peaks: 0 });
    }
    let peaks = peak_times(times, y, noise);
    if peaks.len() < 3 {
        return Err(BifurcationError::WindowTooShort { peaks: peaks.len() });
    }
    let period = (peaks[peaks.len() - 1] - peaks[0]) / (peaks.len() - 1) as f64;
    Ok(CycleMetrics { amplitude, period: Some(period), p_max, p_min, peaks: peaks.len() })
}

/// Amplitude, period and extremes of price `asset` over a post-transient window.
pub fn cycle_metrics(traj: &Trajectory, asset: usize) -> Result<CycleMetrics, BifurcationError> {
    series_metrics(&traj.times, &traj.prices(asset))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScanOptions {
    /// Relative kick applied to the first price to seed oscillations.
    pub perturbation: f64,
    pub transient_fraction: f64,
    /// Lower bound on the simulated horizon.
    pub min_horizon: f64,
    /// Horizon is at least this many expected periods.
    pub periods: f64,
    pub sample_dt: f64,
    pub kind: JacobianKind,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { perturbation: 0.01, transient_fraction: 0.5, min_horizon: 200.0, periods: 25.0, sample_dt: 0.1, kind: JacobianKind::Reduced }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanNode {
    pub value: f64,
    pub leading: f64,
    pub leading_im: f64,
    pub classification: Option<Classification>,
    pub horizon: f64,
    pub metrics: Option<CycleMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HopfScanResult {
    pub parameter: String,
    pub grid: Vec<f64>,
    pub nodes: Vec<ScanNode>,
    pub threshold: Option<HopfThreshold>,
    pub note: Option<String>,
}

/// Perturbed base equilibrium: `P^(1) ← (1 + perturbation)·P^(1)`.
pub fn seeded_state(eq: &EquilibriumPoint, perturbation: f64) -> crate::model::StateVector {
    let mut x = eq.state.clone();
    let p = x.price(0);
    x.set_price(0, p * (1.0 + perturbation));
    x
}

fn scan_node(sc: &Scenario, param: &str, value: f64, opts: &ScanOptions) -> ScanNode {
    let mut node = ScanNode {
        value,
        leading: f64::NAN,
        leading_im: f64::NAN,
        classification: None,
        horizon: 0.0,
        metrics: None,
        error: None,
    };
    let mut run = || -> Result<(), BifurcationError> {
        let (rep, eq) = spectrum_at(sc, param, value, opts.kind)?;
        node.leading = rep.leading;
        node.leading_im = rep.leading_im;
        node.classification = Some(rep.classification);
        let expected = if rep.leading_im > 1e-9 { 2.0 * std::f64::consts::PI / rep.leading_im } else { 0.0 };
        let horizon = opts.min_horizon.max(opts.periods * expected);
        node.horizon = horizon;
        let s = sc.with_param(param, value)?;
        let x0 = seeded_state(&eq, opts.perturbation);
        let settings = IntegratorSettings::horizon(horizon, opts.sample_dt);
        let tail = integrator::integrate_to_attractor(&s.config, &x0, &settings, opts.transient_fraction)?;
        node.metrics = Some(match cycle_metrics(&tail, 0) {
            Err(BifurcationError::WindowTooShort { peaks }) => {
                // decaying or drifting tail: keep the range, report no period
                let p = tail.prices(0);
                let p_max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let p_min = p.iter().cloned().fold(f64::INFINITY, f64::min);
                CycleMetrics { amplitude: 0.5 * (p_max - p_min), period: None, p_max, p_min, peaks }
            }
            other => other?,
        });
        Ok(())
    };
    if let Err(e) = run() {
        node.error = Some(e.to_string());
    }
    node
}

/// Spectral classification plus a seeded long simulation at every grid value.
pub fn bifurcation_scan(sc: &Scenario, param: &str, grid: &[f64], opts: &ScanOptions) -> Result<HopfScanResult, BifurcationError> {
    sc.param(param)?;
    let nodes: Vec<ScanNode> = grid.par_iter().map(|&v| scan_node(sc, param, v, opts)).collect();
    let mut threshold = None;
    let mut note = None;
    for w in nodes.windows(2) {
        if w[0].leading.is_finite() && w[1].leading.is_finite() && w[0].leading.signum() != w[1].leading.signum() {
            match find_hopf_threshold(sc, param, w[0].value, w[1].value, 1e-6, opts.kind) {
                Ok(t) => threshold = Some(t),
                Err(e) => note = Some(e.to_string()),
            }
            break;
        }
    }
    if threshold.is_none() && note.is_none() {
        note = Some("no crossing in range".into());
    }
    Ok(HopfScanResult { parameter: param.to_string(), grid: grid.to_vec(), nodes, threshold, note })
}

pub fn write_scan_csv<W: std::io::Write>(res: &HopfScanResult, w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["parameter", "leadingRe", "amplitude", "period", "Pmax", "Pmin"])?;
    for n in &res.nodes {
        let (amp, per, pmax, pmin) = match &n.metrics {
            Some(m) => (m.amplitude, m.period.unwrap_or(f64::NAN), m.p_max, m.p_min),
            None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
        };
        wr.write_record([n.value, n.leading, amp, per, pmax, pmin].iter().map(|v| format!("{v}")))?;
    }
    wr.flush()?;
    Ok(())
}

/// Gnuplot script drawing amplitude / extremes and period against the scanned parameter.
pub fn gnuplot_script(csv_name: &str, param: &str, threshold: Option<f64>) -> String {
    let mark = threshold
        .map(|q| format!("set arrow from {q}, graph 0 to {q}, graph 1 nohead dashtype 2\n"))
        .unwrap_or_default();
    format!(
        "set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 1200,500\n\
set output 'bifurcation.png'\nset multiplot layout 1,2\n{mark}set xlabel '{param}'\nset ylabel 'price'\n\
plot '{csv_name}' using 1:5 with linespoints title 'P max', '' using 1:6 with linespoints title 'P min', \
'' using 1:3 with linespoints title 'amplitude'\nset ylabel 'period'\n\
plot '{csv_name}' using 1:4 with linespoints title 'period'\nunset multiplot\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoid_metrics() {
        let times: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = times.iter().map(|t| 80.0 + 5.0 * (2.0 * std::f64::consts::PI * t / 14.0).sin()).collect();
        let m = series_metrics(&times, &y).unwrap();
        assert!((m.amplitude - 5.0).abs() < 0.01);
        assert!((m.period.unwrap() - 14.0).abs() < 0.05);
    }

    #[test]
    fn constant_has_no_period() {
        let times: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let m = series_metrics(&times, &vec![3.0; 100]).unwrap();
        assert_eq!(m.amplitude, 0.0);
        assert!(m.period.is_none());
    }

    #[test]
    fn short_window_is_an_error() {
        let times: Vec<f64> = (0..100).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = times.iter().map(|t| 1.0 + (t * 0.5).sin()).collect();
        assert!(matches!(series_metrics(&times, &y), Err(BifurcationError::WindowTooShort { .. })));
    }
}
