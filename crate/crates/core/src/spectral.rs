//! Finite-difference Jacobians at equilibria, spectra and stability classification.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::eigen::{self, EigenError};
use crate::equilibrium::EquilibriumPoint;
use crate::model::{self, ModelConfig, ModelError};

pub const ZERO_TOL: f64 = 1e-7;
pub const STABILITY_MARGIN: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error("equilibrium residual {0:e} too large for a Jacobian evaluation")]
    NotAnEquilibrium(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    Stable,
    Marginal,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JacobianKind {
    Full,
    Reduced,
}

fn as_pairs<S: Serializer>(ev: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
    let pairs: Vec<[f64; 2]> = ev.iter().map(|z| [z.re, z.im]).collect();
    pairs.serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    #[serde(serialize_with = "as_pairs")]
    pub eigenvalues: Vec<Complex64>,
    pub zero_modes: usize,
    /// Largest real part among eigenvalues with |λ| ≥ zero_tol.
    pub leading: f64,
    /// Imaginary part (nonnegative) of the leading eigenvalue.
    pub leading_im: f64,
    pub classification: Classification,
    pub jacobian_kind: JacobianKind,
}

/// Central-difference Jacobian of `f` restricted to coordinates `idx` (rows and columns).
pub fn fd_jacobian<F>(mut f: F, x: &[f64], idx: &[usize]) -> Result<DMatrix<f64>, ModelError>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<(), ModelError>,
{
    let d = x.len();
    let r = idx.len();
    let mut jac = DMatrix::zeros(r, r);
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; d];
    let mut fm = vec![0.0; d];
    for (c, &k) in idx.iter().enumerate() {
        let h = 1e-6 * x[k].abs().max(1.0);
        xp[k] = x[k] + h;
        f(&xp, &mut fp)?;
        xp[k] = x[k] - h;
        f(&xp, &mut fm)?;
        xp[k] = x[k];
        for (row, &i) in idx.iter().enumerate() {
            jac[(row, c)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

fn check_eq(eq: &EquilibriumPoint) -> Result<(), SpectralError> {
    if eq.residual >= 1e-8 {
        return Err(SpectralError::NotAnEquilibrium(eq.residual));
    }
    Ok(())
}

/// Full D×D Jacobian of the right-hand side.
pub fn jacobian_full(cfg: &ModelConfig, eq: &EquilibriumPoint) -> Result<DMatrix<f64>, SpectralError> {
    check_eq(eq)?;
    let idx: Vec<usize> = (0..eq.state.data.len()).collect();
    Ok(fd_jacobian(|y, dy| model::rhs_into(cfg, y, dy), &eq.state.data, &idx)?)
}

/// Jacobian of the (P, Z1, Z2) sub-dynamics with cash and shares frozen at their equilibrium values.
pub fn jacobian_reduced(cfg: &ModelConfig, eq: &EquilibriumPoint) -> Result<DMatrix<f64>, SpectralError> {
    check_eq(eq)?;
    let idx = cfg.layout().reduced_indices();
    Ok(fd_jacobian(|y, dy| model::rhs_into(cfg, y, dy), &eq.state.data, &idx)?)
}

pub fn spectrum(matrix: &DMatrix<f64>, kind: JacobianKind, zero_tol: f64) -> Result<SpectrumReport, SpectralError> {
    let ev = eigen::eigenvalues(matrix)?;
    let zero_modes = ev.iter().filter(|z| z.norm() < zero_tol).count();
    let lead = ev.iter().filter(|z| z.norm() >= zero_tol).max_by(|a, b| a.re.total_cmp(&b.re));
    let (leading, leading_im) = match lead {
        Some(z) => (z.re, z.im.abs()),
        None => (0.0, 0.0),
    };
    let classification = if lead.is_none() || leading.abs() <= STABILITY_MARGIN {
        Classification::Marginal
    } else if leading < 0.0 {
        Classification::Stable
    } else {
        Classification::Unstable
    };
    Ok(SpectrumReport { eigenvalues: ev, zero_modes, leading, leading_im, classification, jacobian_kind: kind })
}

/// Reclassifies a spectrum and warns when the zero-mode count differs from `expected_zero_modes`.
pub fn classify(report: &SpectrumReport, expected_zero_modes: usize) -> Classification {
    if report.zero_modes != expected_zero_modes {
        log::warn!(
            "{:?} Jacobian has {} zero eigenvalues, expected {}",
            report.jacobian_kind,
            report.zero_modes,
            expected_zero_modes
        );
    }
    if report.leading < -STABILITY_MARGIN {
        Classification::Stable
    } else if report.leading.abs() <= STABILITY_MARGIN {
        Classification::Marginal
    } else {
        Classification::Unstable
    }
}

pub fn full_spectrum(cfg: &ModelConfig, eq: &EquilibriumPoint) -> Result<SpectrumReport, SpectralError> {
    spectrum(&jacobian_full(cfg, eq)?, JacobianKind::Full, ZERO_TOL)
}

pub fn reduced_spectrum(cfg: &ModelConfig, eq: &EquilibriumPoint) -> Result<SpectrumReport, SpectralError> {
    spectrum(&jacobian_reduced(cfg, eq)?, JacobianKind::Reduced, ZERO_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RouthHurwitz {
    pub stable: bool,
    /// `a1·a2 − a0` for the monic cubic `λ³ + a2 λ² + a1 λ + a0`.
    pub hopf_margin: f64,
}

/// Routh–Hurwitz test for `a3 λ³ + a2 λ² + a1 λ + a0` with `a3 > 0`.
pub fn routh_hurwitz_cubic(a3: f64, a2: f64, a1: f64, a0: f64) -> RouthHurwitz {
    let (b2, b1, b0) = (a2 / a3, a1 / a3, a0 / a3);
    let hopf_margin = b2 * b1 - b0;
    RouthHurwitz { stable: b2 > 0.0 && b1 > 0.0 && b0 > 0.0 && hopf_margin > 0.0, hopf_margin }
}

/// Coefficients `[1, a2, a1, a0]` of the characteristic polynomial `det(λI − A)` of a 3×3 matrix.
pub fn char_poly_3x3(a: &DMatrix<f64>) -> [f64; 4] {
    let tr = a[(0, 0)] + a[(1, 1)] + a[(2, 2)];
    let minors = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)] + a[(0, 0)] * a[(2, 2)] - a[(0, 2)] * a[(2, 0)]
        + a[(1, 1)] * a[(2, 2)]
        - a[(1, 2)] * a[(2, 1)];
    let det = a[(0, 0)] * (a[(1, 1)] * a[(2, 2)] - a[(1, 2)] * a[(2, 1)])
        - a[(0, 1)] * (a[(1, 0)] * a[(2, 2)] - a[(1, 2)] * a[(2, 0)])
        + a[(0, 2)] * (a[(1, 0)] * a[(2, 1)] - a[(1, 1)] * a[(2, 0)]);
    [1.0, -tr, minors, -det]
}
