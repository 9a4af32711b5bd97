//! Dormand–Prince 5(4) integration with PI step control and dense output on a uniform grid.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, Layout, ModelConfig, ModelError, StateVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("invalid integrator settings: {0}")]
    Settings(String),
    #[error("at t = {t}: {source}")]
    Model { t: f64, source: ModelError },
    #[error(
        "step size underflow at t = {t} (h = {h:e}); the problem is stiff here: reduce sample_dt, tighten tolerances or soften the scenario parameters"
    )]
    StepUnderflow { t: f64, h: f64 },
    #[error("maximum number of steps ({0}) exceeded")]
    MaxSteps(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub t0: f64,
    pub t_end: f64,
    pub sample_dt: f64,
    pub max_steps: usize,
    pub min_step: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self { abs_tol: 1e-8, rel_tol: 1e-6, t0: 0.0, t_end: 100.0, sample_dt: 0.1, max_steps: 5_000_000, min_step: 1e-12 }
    }
}

impl IntegratorSettings {
    pub fn horizon(t_end: f64, sample_dt: f64) -> Self {
        Self { t_end, sample_dt, ..Self::default() }
    }

    fn check(&self) -> Result<(), IntegrationError> {
        let bad = |s: &str| Err(IntegrationError::Settings(s.to_string()));
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.t_end > self.t0) {
            return bad("t_end must exceed t0");
        }
        if !(self.sample_dt > 0.0) || self.sample_dt > self.t_end - self.t0 {
            return bad("sample_dt must be positive and no longer than the horizon");
        }
        if !(self.min_step > 0.0) {
            return bad("min_step must be positive");
        }
        Ok(())
    }

    fn grid(&self) -> Vec<f64> {
        let count = ((self.t_end - self.t0) / self.sample_dt + 1e-9).floor() as usize;
        (0..=count).map(|k| self.t0 + k as f64 * self.sample_dt).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    /// Samples at which some group's buy rates summed above one.
    pub budget_violations: usize,
}

/// Maximum absolute deviation of the conserved totals along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub cash: f64,
    pub shares: Vec<f64>,
}

impl DriftReport {
    pub fn max(&self) -> f64 {
        self.shares.iter().fold(self.cash, |a, &b| a.max(b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub layout: Layout,
    pub m0: f64,
    pub n0: Vec<f64>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn state(&self, k: usize) -> StateVector {
        StateVector { layout: self.layout, data: self.states[k].clone() }
    }
    pub fn last(&self) -> StateVector {
        self.state(self.len() - 1)
    }
    pub fn component(&self, idx: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[idx]).collect()
    }
    pub fn prices(&self, i: usize) -> Vec<f64> {
        self.component(self.layout.price(i))
    }
    /// Samples with `t >= t_from`.
    pub fn tail_from(&self, t_from: f64) -> Trajectory {
        let start = self.times.iter().position(|&t| t >= t_from - 1e-12).unwrap_or(self.len() - 1);
        Trajectory {
            layout: self.layout,
            m0: self.m0,
            n0: self.n0.clone(),
            times: self.times[start..].to_vec(),
            states: self.states[start..].to_vec(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// Samples with `t_from <= t <= t_to`.
    pub fn between(&self, t_from: f64, t_to: f64) -> Trajectory {
        let keep: Vec<usize> = (0..self.len()).filter(|&k| self.times[k] >= t_from - 1e-12 && self.times[k] <= t_to + 1e-12).collect();
        Trajectory {
            layout: self.layout,
            m0: self.m0,
            n0: self.n0.clone(),
            times: keep.iter().map(|&k| self.times[k]).collect(),
            states: keep.iter().map(|&k| self.states[k].clone()).collect(),
            diagnostics: self.diagnostics.clone(),
        }
    }
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let lay = self.layout;
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["time".to_string()];
        header.extend(lay.labels());
        header.extend((1..=lay.n).map(|j| format!("W_{j}")));
        wr.write_record(&header)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let x = StateVector { layout: lay, data: s.clone() };
            let w = model::wealth(&x);
            let mut rec = vec![format!("{t}")];
            rec.extend(s.iter().map(|v| format!("{v}")));
            rec.extend(w.per_group.iter().map(|v| format!("{v}")));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub fn drift_monitor(traj: &Trajectory) -> DriftReport {
    let lay = traj.layout;
    let mut cash: f64 = 0.0;
    let mut shares = vec![0.0f64; lay.m];
    for s in &traj.states {
        let total: f64 = (0..lay.n).map(|j| s[lay.cash(j)]).sum();
        cash = cash.max((total - traj.m0).abs());
        for i in 0..lay.m {
            let t: f64 = (0..lay.n).map(|j| s[lay.shares(j, i)]).sum();
            shares[i] = shares[i].max((t - traj.n0[i]).abs());
        }
    }
    DriftReport { cash, shares }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Output of [`dopri5`]: samples on the uniform grid plus step statistics.
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

/// Integrates `y' = f(t, y)` and samples the solution every `settings.sample_dt`.
pub fn dopri5<F>(mut f: F, y0: &[f64], settings: &IntegratorSettings) -> Result<Solution, IntegrationError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), ModelError>,
{
    settings.check()?;
    let d = y0.len();
    let grid = settings.grid();
    let (atol, rtol) = (settings.abs_tol, settings.rel_tol);
    let mut diag = Diagnostics::default();
    let mut call = |t: f64, y: &[f64], out: &mut [f64], diag: &mut Diagnostics| {
        diag.rhs_evals += 1;
        f(t, y, out).map_err(|source| IntegrationError::Model { t, source })
    };

    let mut t = settings.t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; d];
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut ytmp = vec![0.0; d];
    let mut ynew = vec![0.0; d];
    let mut cont = vec![vec![0.0; d]; 5];
    call(t, &y, &mut k1, &mut diag)?;

    let sc = |y: &[f64], k: usize| atol + rtol * y[k].abs();
    // starting step from the local scale of the solution and its derivative
    let mut h = {
        let d0 = (0..d).map(|k| (y[k] / sc(&y, k)).powi(2)).sum::<f64>().sqrt() / (d as f64).sqrt();
        let d1 = (0..d).map(|k| (k1[k] / sc(&y, k)).powi(2)).sum::<f64>().sqrt() / (d as f64).sqrt();
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(settings.t_end - settings.t0);
        for k in 0..d {
            ytmp[k] = y[k] + h0 * k1[k];
        }
        call(t + h0, &ytmp, &mut k2, &mut diag)?;
        let d2 = (0..d).map(|k| ((k2[k] - k1[k]) / sc(&y, k)).powi(2)).sum::<f64>().sqrt() / (d as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        (100.0 * h0).min(h1).min(settings.t_end - settings.t0)
    };

    let mut times = Vec::with_capacity(grid.len());
    let mut states = Vec::with_capacity(grid.len());
    times.push(grid[0]);
    states.push(y.clone());
    let mut next = 1;

    let beta = 0.04;
    let expo1 = 0.2 - beta * 0.75;
    let safe = 0.9;
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;

    while next < grid.len() {
        if diag.steps + diag.rejected >= settings.max_steps {
            return Err(IntegrationError::MaxSteps(settings.max_steps));
        }
        let remaining = settings.t_end - t;
        if h > remaining {
            h = remaining;
        }
        if h < settings.min_step && remaining > settings.min_step {
            return Err(IntegrationError::StepUnderflow { t, h });
        }

        // a trial stage may leave the positive orthant even though the true solution cannot;
        // such steps are rejected and retried with a smaller step
        let attempt = (|| -> Result<(), IntegrationError> {
            for k in 0..d {
                ytmp[k] = y[k] + h * A21 * k1[k];
            }
            call(t + C2 * h, &ytmp, &mut k2, &mut diag)?;
            for k in 0..d {
                ytmp[k] = y[k] + h * (A31 * k1[k] + A32 * k2[k]);
            }
            call(t + C3 * h, &ytmp, &mut k3, &mut diag)?;
            for k in 0..d {
                ytmp[k] = y[k] + h * (A41 * k1[k] + A42 * k2[k] + A43 * k3[k]);
            }
            call(t + C4 * h, &ytmp, &mut k4, &mut diag)?;
            for k in 0..d {
                ytmp[k] = y[k] + h * (A51 * k1[k] + A52 * k2[k] + A53 * k3[k] + A54 * k4[k]);
            }
            call(t + C5 * h, &ytmp, &mut k5, &mut diag)?;
            for k in 0..d {
                ytmp[k] = y[k] + h * (A61 * k1[k] + A62 * k2[k] + A63 * k3[k] + A64 * k4[k] + A65 * k5[k]);
            }
            call(t + h, &ytmp, &mut k6, &mut diag)?;
            for k in 0..d {
                ynew[k] = y[k] + h * (A71 * k1[k] + A73 * k3[k] + A74 * k4[k] + A75 * k5[k] + A76 * k6[k]);
            }
            call(t + h, &ynew, &mut k7, &mut diag)?;
            Ok(())
        })();
        if let Err(e) = attempt {
            if h <= 10.0 * settings.min_step {
                return Err(e);
            }
            diag.rejected += 1;
            h *= 0.25;
            last_rejected = true;
            continue;
        }

        let mut err = 0.0;
        for k in 0..d {
            let e = h * (E1 * k1[k] + E3 * k3[k] + E4 * k4[k] + E5 * k5[k] + E6 * k6[k] + E7 * k7[k]);
            let s = atol + rtol * y[k].abs().max(ynew[k].abs());
            err += (e / s).powi(2);
        }
        err = (err / d as f64).sqrt();
        if !err.is_finite() {
            diag.rejected += 1;
            h *= 0.1;
            last_rejected = true;
            continue;
        }

        let fac11 = err.powf(expo1);
        if err <= 1.0 {
            let fac = (fac11 / facold.powf(beta) / safe).clamp(0.1, 5.0);
            let mut hnew = h / fac;
            if last_rejected {
                hnew = hnew.min(h);
            }
            facold = err.max(1e-4);
            diag.steps += 1;

            for k in 0..d {
                let ydiff = ynew[k] - y[k];
                let bspl = h * k1[k] - ydiff;
                cont[0][k] = y[k];
                cont[1][k] = ydiff;
                cont[2][k] = bspl;
                cont[3][k] = ydiff - h * k7[k] - bspl;
                cont[4][k] = h * (D1 * k1[k] + D3 * k3[k] + D4 * k4[k] + D5 * k5[k] + D6 * k6[k] + D7 * k7[k]);
            }
            let t_new = t + h;
            let at_end = (settings.t_end - t_new).abs() <= 1e-12 * settings.t_end.abs().max(1.0);
            while next < grid.len() && (grid[next] <= t_new || at_end) {
                let th = ((grid[next] - t) / h).clamp(0.0, 1.0);
                let th1 = 1.0 - th;
                let s: Vec<f64> = (0..d)
                    .map(|k| cont[0][k] + th * (cont[1][k] + th1 * (cont[2][k] + th * (cont[3][k] + th1 * cont[4][k]))))
                    .collect();
                times.push(grid[next]);
                states.push(s);
                next += 1;
            }
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            t = if at_end { settings.t_end } else { t_new };
            h = hnew;
            last_rejected = false;
        } else {
            diag.rejected += 1;
            h /= (fac11 / safe).min(5.0);
            last_rejected = true;
        }
    }
    Ok(Solution { times, states, diagnostics: diag })
}

pub fn integrate(cfg: &ModelConfig, x0: &StateVector, settings: &IntegratorSettings) -> Result<Trajectory, IntegrationError> {
    let lay = cfg.layout();
    if x0.layout != lay {
        return Err(IntegrationError::Model {
            t: settings.t0,
            source: ModelError::InvalidState("initial state layout does not match configuration".into()),
        });
    }
    let sol = dopri5(|_, y, dy| model::rhs_into(cfg, y, dy), &x0.data, settings)?;
    let mut traj = Trajectory {
        layout: lay,
        m0: cfg.m0,
        n0: cfg.n0.clone(),
        times: sol.times,
        states: sol.states,
        diagnostics: sol.diagnostics,
    };
    let mut violations = 0;
    for s in &traj.states {
        let x = StateVector { layout: lay, data: s.clone() };
        if let Ok(r) = model::rates(cfg, &x) {
            if r.budget_excess > 1e-12 {
                violations += 1;
            }
        }
    }
    if violations > 0 && !cfg.rescale_buy_rates {
        log::debug!("buy rates of some group summed above one at {violations} of {} samples", traj.len());
    }
    traj.diagnostics.budget_violations = violations;
    Ok(traj)
}

/// Integrates the full horizon and keeps only the samples after the leading `transient_fraction`.
pub fn integrate_to_attractor(
    cfg: &ModelConfig,
    x0: &StateVector,
    settings: &IntegratorSettings,
    transient_fraction: f64,
) -> Result<Trajectory, IntegrationError> {
    if !(0.0..=0.9).contains(&transient_fraction) {
        return Err(IntegrationError::Settings(format!("transient fraction {transient_fraction} outside [0, 0.9]")));
    }
    let traj = integrate(cfg, x0, settings)?;
    if transient_fraction == 0.0 {
        return Ok(traj);
    }
    Ok(traj.tail_from(settings.t0 + transient_fraction * (settings.t_end - settings.t0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let s = IntegratorSettings { t_end: 1.0, sample_dt: 0.25, ..Default::default() };
        let sol = dopri5(
            |_, y, dy| {
                dy[0] = -y[0];
                Ok(())
            },
            &[1.0],
            &s,
        )
        .unwrap();
        assert_eq!(sol.times.len(), 5);
        for (t, y) in sol.times.iter().zip(&sol.states) {
            assert!((y[0] - (-t).exp()).abs() < 1e-7, "t={t}");
        }
    }

    #[test]
    fn dense_output_on_oscillator() {
        let s = IntegratorSettings { t_end: 20.0, sample_dt: 0.01, abs_tol: 1e-10, rel_tol: 1e-10, ..Default::default() };
        let sol = dopri5(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
                Ok(())
            },
            &[0.0, 1.0],
            &s,
        )
        .unwrap();
        let worst = sol.times.iter().zip(&sol.states).map(|(t, y)| (y[0] - t.sin()).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-7, "worst {worst}");
    }

    #[test]
    fn rejects_bad_settings() {
        let s = IntegratorSettings { t_end: 0.0, ..Default::default() };
        assert!(matches!(dopri5(|_, _, _| Ok(()), &[1.0], &s), Err(IntegrationError::Settings(_))));
    }

    #[test]
    fn blow_up_reports_underflow() {
        let s = IntegratorSettings { t_end: 2.0, sample_dt: 0.1, ..Default::default() };
        let r = dopri5(
            |_, y, dy| {
                dy[0] = y[0] * y[0];
                Ok(())
            },
            &[1.0],
            &s,
        );
        assert!(r.is_err());
    }
}
