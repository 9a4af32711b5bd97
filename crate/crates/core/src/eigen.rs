//! Eigenvalues of dense real matrices: balancing, Hessenberg reduction and the Francis
//! double-shift QR iteration.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("QR iteration did not converge for eigenvalue {index} after {iterations} iterations")]
    NoConvergence { index: usize, iterations: usize },
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Row/column scaling by powers of two so that row and column norms are comparable.
fn balance(a: &mut [Vec<f64>]) {
    let n = a.len();
    let radix: f64 = 2.0;
    let sqrdx = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let (mut r, mut c): (f64, f64) = (0.0, 0.0);
            for j in 0..n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / radix;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= radix;
                    c *= sqrdx;
                }
                g = r * radix;
                while c > g {
                    f /= radix;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 0..n {
                        a[i][j] *= g;
                    }
                    for row in a.iter_mut() {
                        row[i] *= f;
                    }
                }
            }
        }
    }
}

/// Reduction to upper Hessenberg form by stabilized elementary similarity transforms.
fn hessenberg(a: &mut [Vec<f64>]) {
    let n = a.len();
    for m in 1..n.saturating_sub(1) {
        let mut x: f64 = 0.0;
        let mut piv = m;
        for j in m..n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                piv = j;
            }
        }
        if piv != m {
            a.swap(piv, m);
            for row in a.iter_mut() {
                row.swap(piv, m);
            }
        }
        if x != 0.0 {
            for i in m + 1..n {
                let mut y = a[i][m - 1];
                if y != 0.0 {
                    y /= x;
                    a[i][m - 1] = y;
                    for j in m..n {
                        a[i][j] -= y * a[m][j];
                    }
                    for row in a.iter_mut() {
                        row[m] += y * row[i];
                    }
                }
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        for v in row.iter_mut().take(i.saturating_sub(1)) {
            *v = 0.0;
        }
    }
}

/// Eigenvalues of an upper Hessenberg matrix (destroyed on output).
fn hqr(a: &mut [Vec<f64>]) -> Result<Vec<Complex64>, EigenError> {
    let n = a.len();
    let max_its = 30 * n.max(1);
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut anorm: f64 = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n as isize - 1;
    let mut t: f64 = 0.0;
    let mut its = 0;
    while nn >= 0 {
        let nu = nn as usize;
        let mut l = nu;
        while l >= 1 {
            let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
            if s == 0.0 {
                s = anorm;
            }
            if a[l][l - 1].abs() <= f64::EPSILON * s {
                a[l][l - 1] = 0.0;
                break;
            }
            l -= 1;
        }
        let mut x = a[nu][nu];
        if l == nu {
            wr[nu] = x + t;
            wi[nu] = 0.0;
            nn -= 1;
            its = 0;
            continue;
        }
        let mut y = a[nu - 1][nu - 1];
        let mut w = a[nu][nu - 1] * a[nu - 1][nu];
        if l == nu - 1 {
            let p = 0.5 * (y - x);
            let q = p * p + w;
            let mut z = q.abs().sqrt();
            x += t;
            if q >= 0.0 {
                z = p + sign(z, p);
                wr[nu - 1] = x + z;
                wr[nu] = x + z;
                if z != 0.0 {
                    wr[nu] = x - w / z;
                }
                wi[nu - 1] = 0.0;
                wi[nu] = 0.0;
            } else {
                wr[nu - 1] = x + p;
                wr[nu] = x + p;
                wi[nu - 1] = z;
                wi[nu] = -z;
            }
            nn -= 2;
            its = 0;
            continue;
        }
        if its >= max_its {
            return Err(EigenError::NoConvergence { index: nu, iterations: its });
        }
        if its == 10 || its == 20 {
            // exceptional shift
            t += x;
            for i in 0..=nu {
                a[i][i] -= x;
            }
            let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
            x = 0.75 * s;
            y = x;
            w = -0.4375 * s * s;
        }
        its += 1;
        let mut m = nu - 2;
        let (mut p, mut q, mut r);
        loop {
            let z = a[m][m];
            let rr = x - z;
            let ss = y - z;
            p = (rr * ss - w) / a[m + 1][m] + a[m][m + 1];
            q = a[m + 1][m + 1] - z - rr - ss;
            r = a[m + 2][m + 1];
            let s = p.abs() + q.abs() + r.abs();
            p /= s;
            q /= s;
            r /= s;
            if m == l {
                break;
            }
            let u = a[m][m - 1].abs() * (q.abs() + r.abs());
            let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
            if u <= f64::EPSILON * v {
                break;
            }
            m -= 1;
        }
        for i in m + 2..=nu {
            a[i][i - 2] = 0.0;
            if i != m + 2 {
                a[i][i - 3] = 0.0;
            }
        }
        let mut k = m;
        while k < nu {
            if k != m {
                p = a[k][k - 1];
                q = a[k + 1][k - 1];
                r = if k != nu - 1 { a[k + 2][k - 1] } else { 0.0 };
                x = p.abs() + q.abs() + r.abs();
                if x != 0.0 {
                    p /= x;
                    q /= x;
                    r /= x;
                }
            }
            let s = sign((p * p + q * q + r * r).sqrt(), p);
            if s != 0.0 {
                if k == m {
                    if l != m {
                        a[k][k - 1] = -a[k][k - 1];
                    }
                } else {
                    a[k][k - 1] = -s * x;
                }
                p += s;
                x = p / s;
                y = q / s;
                let z = r / s;
                q /= p;
                r /= p;
                for j in k..=nu {
                    let mut pp = a[k][j] + q * a[k + 1][j];
                    if k != nu - 1 {
                        pp += r * a[k + 2][j];
                        a[k + 2][j] -= pp * z;
                    }
                    a[k + 1][j] -= pp * y;
                    a[k][j] -= pp * x;
                }
                let mmin = if nu < k + 3 { nu } else { k + 3 };
                for i in l..=mmin {
                    let mut pp = x * a[i][k] + y * a[i][k + 1];
                    if k != nu - 1 {
                        pp += z * a[i][k + 2];
                        a[i][k + 2] -= pp * r;
                    }
                    a[i][k + 1] -= pp * q;
                    a[i][k] -= pp;
                }
            }
            k += 1;
        }
    }
    Ok(wr.into_iter().zip(wi).map(|(re, im)| Complex64::new(re, im)).collect())
}

/// All eigenvalues of a square real matrix, sorted by descending real part (ties: descending imaginary part).
pub fn eigenvalues(matrix: &DMatrix<f64>) -> Result<Vec<Complex64>, EigenError> {
    let (r, c) = matrix.shape();
    if r != c {
        return Err(EigenError::NotSquare(r, c));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(EigenError::NonFinite);
    }
    let mut a: Vec<Vec<f64>> = (0..r).map(|i| (0..c).map(|j| matrix[(i, j)]).collect()).collect();
    balance(&mut a);
    hessenberg(&mut a);
    let mut ev = hqr(&mut a)?;
    sort_spectrum(&mut ev);
    Ok(ev)
}

pub fn sort_spectrum(ev: &mut [Complex64]) {
    ev.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -2.0, 3.0]));
        let ev = eigenvalues(&m).unwrap();
        let re: Vec<f64> = ev.iter().map(|z| z.re).collect();
        assert_eq!(re, vec![3.0, 1.0, -2.0]);
        assert!(ev.iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn rotation_generator() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let ev = eigenvalues(&m).unwrap();
        assert!((ev[0] - Complex64::new(0.0, 1.0)).norm() < 1e-14);
        assert!((ev[1] - Complex64::new(0.0, -1.0)).norm() < 1e-14);
    }

    #[test]
    fn companion_matrix_roots() {
        // (λ-1)(λ-2)(λ-3)(λ²+1) = λ^5 - 6λ^4 + 12λ^3 - 12λ^2 + 11λ - 6
        let mut m = DMatrix::zeros(5, 5);
        for i in 1..5 {
            m[(i, i - 1)] = 1.0;
        }
        for i in 0..5 {
            m[(i, 4)] = -[-6.0, 11.0, -12.0, 12.0, -6.0][i];
        }
        let ev = eigenvalues(&m).unwrap();
        let expect = [
            Complex64::new(3.0, 0.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
        ];
        for (a, b) in ev.iter().zip(expect.iter()) {
            assert!((a - b).norm() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_rectangular() {
        assert!(matches!(eigenvalues(&DMatrix::zeros(2, 3)), Err(EigenError::NotSquare(2, 3))));
    }
}
