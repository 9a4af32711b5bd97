//! Fundamental equilibria, general equilibrium points for a given cash distribution,
//! and scans of the equilibrium manifold.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::model::{self, ModelConfig, ModelError, StateVector};
use crate::spectral::{self, Classification};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cash distribution sums to {sum}, expected M0 = {m0}")]
    CashMismatch { sum: f64, m0: f64 },
    #[error("calibration condition fails: share totals miss N0 by {mismatch:?}")]
    CalibrationInfeasible { mismatch: Vec<f64> },
    #[error("zero sell rate at zero sentiment for group {group}, asset {asset}")]
    ZeroSellRate { group: usize, asset: usize },
    #[error("Newton iteration did not converge (best residual {best:e})")]
    NoConvergence { best: f64 },
    #[error("Newton step kept producing non-positive prices")]
    NegativePrice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EquilibriumKind {
    Fundamental,
    Manifold,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumPoint {
    pub state: StateVector,
    /// Max-norm of the right-hand side at `state`.
    pub residual: f64,
    pub kind: EquilibriumKind,
    pub cash: Vec<f64>,
}

fn check_cash(cfg: &ModelConfig, m_eq: &[f64]) -> Result<(), EquilibriumError> {
    let sum: f64 = m_eq.iter().sum();
    if m_eq.len() != cfg.n || (sum - cfg.m0).abs() > 1e-12 * cfg.m0.max(1.0) {
        return Err(EquilibriumError::CashMismatch { sum, m0: cfg.m0 });
    }
    Ok(())
}

fn residual_of(cfg: &ModelConfig, x: &StateVector) -> Result<f64, ModelError> {
    Ok(model::rhs(cfg, x)?.max_norm())
}

/// Fundamental equilibrium `P = Pa`, zero sentiments, shares from the calibration condition.
pub fn fundamental_equilibrium(cfg: &ModelConfig, m_eq: &[f64]) -> Result<EquilibriumPoint, EquilibriumError> {
    check_cash(cfg, m_eq)?;
    let (m, n) = (cfg.m, cfg.n);
    let lay = cfg.layout();
    let z = vec![0.0; m * n];
    let (k, kt) = model::rates_at(cfg, &cfg.pa, &z, &z);
    let mut x = StateVector::zeros(lay);
    let mut mismatch = vec![0.0; m];
    for i in 0..m {
        x.set_price(i, cfg.pa[i]);
        let mut total = 0.0;
        for j in 0..n {
            let idx = j * m + i;
            if kt[idx] <= 0.0 {
                return Err(EquilibriumError::ZeroSellRate { group: j, asset: i });
            }
            let nji = k[idx] * m_eq[j] / (kt[idx] * cfg.pa[i]);
            x.set_shares(j, i, nji);
            total += nji;
        }
        mismatch[i] = total - cfg.n0[i];
    }
    for j in 0..n {
        x.set_cash(j, m_eq[j]);
    }
    if mismatch.iter().zip(&cfg.n0).any(|(d, n0)| d.abs() > 1e-9 * n0.max(1e-300)) {
        return Err(EquilibriumError::CalibrationInfeasible { mismatch });
    }
    let residual = residual_of(cfg, &x)?;
    Ok(EquilibriumPoint { state: x, residual, kind: EquilibriumKind::Fundamental, cash: m_eq.to_vec() })
}

/// Builds the full state from the Newton unknowns `(P, N_j for j ≥ 1)`.
fn assemble(cfg: &ModelConfig, m_eq: &[f64], u: &[f64]) -> StateVector {
    let (m, n) = (cfg.m, cfg.n);
    let mut x = StateVector::zeros(cfg.layout());
    for i in 0..m {
        let p = u[i];
        x.set_price(i, p);
        let mut rest = 0.0;
        for j in 1..n {
            let v = u[m + (j - 1) * m + i];
            x.set_shares(j, i, v);
            rest += v;
        }
        x.set_shares(0, i, cfg.n0[i] - rest);
        for j in 0..n {
            x.set_z2(j, i, cfg.q2[j][i] * (1.0 - p / cfg.pa[i]));
        }
    }
    for j in 0..n {
        x.set_cash(j, m_eq[j]);
    }
    x
}

/// Residual of the balance conditions `k M − k̃ N P` for every (group, asset).
fn balance_residual(cfg: &ModelConfig, x: &StateVector) -> Vec<f64> {
    let (m, n) = (cfg.m, cfg.n);
    let (k, kt) = model::rates_at(cfg, x.prices(), x.z1_slice(), x.z2_slice());
    let mut r = Vec::with_capacity(m * n);
    for j in 0..n {
        for i in 0..m {
            let idx = j * m + i;
            r.push(k[idx] * x.cash(j) - kt[idx] * x.shares(j, i) * x.price(i));
        }
    }
    r
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Damped Newton solve of the equilibrium conditions for a fixed cash distribution.
/// `guess` supplies starting prices and shares; `None` starts from `P = Pa` with shares split pro rata to cash.
pub fn solve_manifold_point(
    cfg: &ModelConfig,
    m_eq: &[f64],
    guess: Option<&StateVector>,
) -> Result<EquilibriumPoint, EquilibriumError> {
    check_cash(cfg, m_eq)?;
    let (m, n) = (cfg.m, cfg.n);
    let dim = m * n;
    let mut u = vec![0.0; dim];
    match guess {
        Some(g) => {
            for i in 0..m {
                u[i] = g.price(i);
                for j in 1..n {
                    u[m + (j - 1) * m + i] = g.shares(j, i);
                }
            }
        }
        None => {
            for i in 0..m {
                u[i] = cfg.pa[i];
                for j in 1..n {
                    u[m + (j - 1) * m + i] = cfg.n0[i] * m_eq[j] / cfg.m0;
                }
            }
        }
    }
    if u[..m].iter().any(|&p| p <= 0.0) {
        return Err(EquilibriumError::NegativePrice);
    }
    let eval = |u: &[f64]| balance_residual(cfg, &assemble(cfg, m_eq, u));
    let mut r = eval(&u);
    let mut norm = max_abs(&r);
    let scale = cfg.m0.max(1e-300);
    for _ in 0..200 {
        if norm <= 1e-15 * scale {
            break;
        }
        let mut jac = DMatrix::zeros(dim, dim);
        let mut up = u.clone();
        for c in 0..dim {
            let h = 1e-6 * u[c].abs().max(1.0);
            up[c] = u[c] + h;
            let fp = eval(&up);
            up[c] = u[c] - h;
            let fm = eval(&up);
            up[c] = u[c];
            for row in 0..dim {
                jac[(row, c)] = (fp[row] - fm[row]) / (2.0 * h);
            }
        }
        let rhs = DVector::from_iterator(dim, r.iter().map(|v| -v));
        let Some(step) = jac.lu().solve(&rhs) else {
            return Err(EquilibriumError::NoConvergence { best: norm });
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        let mut saw_positive = false;
        for _ in 0..=30 {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, d)| a + lambda * d).collect();
            if trial[..m].iter().all(|&p| p > 0.0) {
                saw_positive = true;
                let rt = eval(&trial);
                let nt = max_abs(&rt);
                if nt < norm {
                    u = trial;
                    r = rt;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            if !saw_positive {
                return Err(EquilibriumError::NegativePrice);
            }
            break;
        }
    }
    let x = assemble(cfg, m_eq, &u);
    let residual = residual_of(cfg, &x)?;
    if residual >= 1e-10 {
        return Err(EquilibriumError::NoConvergence { best: residual });
    }
    Ok(EquilibriumPoint { state: x, residual, kind: EquilibriumKind::Manifold, cash: m_eq.to_vec() })
}

/// Interior cash grid for two groups: `M_1 = M0·(k + ½)/count`.
pub fn two_group_grid(m0: f64, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|k| {
            let m1 = m0 * (k as f64 + 0.5) / count as f64;
            vec![m1, m0 - m1]
        })
        .collect()
}

/// Regular barycentric grid of strictly positive cash splits with `divisions` parts per unit.
pub fn simplex_grid(n: usize, m0: f64, divisions: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if n == 1 {
            if left >= 1 {
                cur.push(left);
                out.push(cur.clone());
                cur.pop();
            }
            return;
        }
        for k in 1..left {
            cur.push(k);
            rec(n - 1, left - k, cur, out);
            cur.pop();
        }
    }
    let mut raw = Vec::new();
    rec(n, divisions, &mut Vec::new(), &mut raw);
    raw.into_iter().map(|c| c.into_iter().map(|k| m0 * k as f64 / divisions as f64).collect()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifoldRecord {
    pub cash: Vec<f64>,
    pub point: Option<EquilibriumPoint>,
    pub error: Option<String>,
    pub leading: f64,
    pub classification: Option<Classification>,
}

/// Solves each grid node warm-started from the previous solution and classifies it with the full Jacobian.
pub fn manifold_scan(cfg: &ModelConfig, grid: &[Vec<f64>]) -> Vec<ManifoldRecord> {
    let mut prev: Option<StateVector> = None;
    let mut out = Vec::with_capacity(grid.len());
    for cash in grid {
        let sol = solve_manifold_point(cfg, cash, prev.as_ref()).or_else(|e| {
            if prev.is_some() {
                solve_manifold_point(cfg, cash, None)
            } else {
                Err(e)
            }
        });
        match sol {
            Ok(pt) => {
                prev = Some(pt.state.clone());
                let (leading, classification) = match spectral::full_spectrum(cfg, &pt) {
                    Ok(s) => (s.leading, Some(s.classification)),
                    Err(_) => (f64::NAN, None),
                };
                out.push(ManifoldRecord { cash: cash.clone(), point: Some(pt), error: None, leading, classification });
            }
            Err(e) => out.push(ManifoldRecord {
                cash: cash.clone(),
                point: None,
                error: Some(e.to_string()),
                leading: f64::NAN,
                classification: None,
            }),
        }
    }
    out
}

pub fn write_manifold_csv<W: std::io::Write>(records: &[ManifoldRecord], m: usize, w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["M_1".to_string()];
    header.extend((1..=m).map(|i| format!("P_eq_{i}")));
    header.extend(["residual".into(), "stable".into(), "leadingRe".into()]);
    wr.write_record(&header)?;
    for r in records {
        let mut rec = vec![format!("{}", r.cash[0])];
        match &r.point {
            Some(p) => {
                rec.extend((0..m).map(|i| format!("{}", p.state.price(i))));
                rec.push(format!("{:e}", p.residual));
            }
            None => {
                rec.extend((0..=m).map(|_| "NaN".to_string()));
            }
        }
        let stable = matches!(r.classification, Some(Classification::Stable));
        rec.push(if stable { "1".into() } else { "0".into() });
        rec.push(format!("{}", r.leading));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_grid_sums() {
        let g = simplex_grid(3, 1.0, 4);
        assert_eq!(g.len(), 3);
        for c in &g {
            assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(c.iter().all(|&v| v > 0.0));
        }
        assert_eq!(two_group_grid(1.0, 1), vec![vec![0.5, 0.5]]);
    }
}
