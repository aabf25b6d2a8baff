//! Independent dense oracles. Nothing here goes through the library's
//! block-diagonal, tridiagonal or Cholesky code paths.

#![allow(dead_code, clippy::needless_range_loop)]

use glscv::synthetic::{panel, PanelSpec};
use glscv::{CorrelationModel, Family, Matrix, RegressionProblem};

/// Gauss–Jordan inverse with partial pivoting.
pub fn gj_inverse(a: &Matrix<f64>) -> Matrix<f64> {
    let n = a.nrows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a.row(i).to_vec();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs()))
            .unwrap();
        m.swap(c, piv);
        let d = m[c][c];
        assert!(d.abs() > 1e-300, "singular matrix in oracle");
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
    }
    Matrix::from_fn(n, n, |i, j| m[i][n + j])
}

/// log |det A| by LU with partial pivoting.
pub fn lu_log_det(a: &Matrix<f64>) -> f64 {
    let n = a.nrows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut acc = 0.0;
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs()))
            .unwrap();
        m.swap(c, piv);
        let d = m[c][c];
        acc += d.abs().ln();
        for r in c + 1..n {
            let f = m[r][c] / d;
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    acc
}

/// Dense Σ evaluated entry by entry from the model definition.
pub fn dense_sigma(model: &CorrelationModel<f64>, p: &RegressionProblem<f64>) -> Matrix<f64> {
    let n = p.n();
    let g = p.groups();
    Matrix::from_fn(n, n, |i, j| {
        if i == j {
            return 1.0;
        }
        if g.group_of(i) != g.group_of(j) {
            return 0.0;
        }
        match model.family() {
            Family::Identity => 0.0,
            Family::Ar1 => model
                .rho()
                .powi(p.positions()[i].abs_diff(p.positions()[j]) as i32),
            Family::Car1 => model.rho().powf((p.times()[i] - p.times()[j]).abs()),
        }
    })
}

pub fn transpose_mul(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
    a.transpose().matmul(b)
}

pub struct DenseFit {
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    /// rᵀΣ⁻¹r
    pub wrss: f64,
    pub sigma2: f64,
    pub xtsix_inv: Matrix<f64>,
    pub sigma_inv: Matrix<f64>,
}

/// GLS by brute force: dense Σ, Gauss–Jordan inverses, normal equations.
pub fn dense_gls(y: &[f64], x: &Matrix<f64>, sigma: &Matrix<f64>) -> DenseFit {
    let si = gj_inverse(sigma);
    let six = si.matmul(x);
    let xtsix_inv = gj_inverse(&transpose_mul(x, &six));
    let xtsiy = six.transpose().mul_vec(y);
    let beta = xtsix_inv.mul_vec(&xtsiy);
    let fitted = x.mul_vec(&beta);
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let sr = si.mul_vec(&residuals);
    let wrss: f64 = residuals.iter().zip(&sr).map(|(a, b)| a * b).sum();
    let dof = (y.len() - x.ncols()) as f64;
    DenseFit {
        beta,
        residuals,
        wrss,
        sigma2: wrss / dof,
        xtsix_inv,
        sigma_inv: si,
    }
}

/// Dense GLS on the rows `keep` with Σ restricted to them.
pub fn dense_refit(p: &RegressionProblem<f64>, sigma: &Matrix<f64>, keep: &[usize]) -> DenseFit {
    let y: Vec<f64> = keep.iter().map(|&i| p.y()[i]).collect();
    let x = p.x().select_rows(keep);
    dense_gls(&y, &x, &sigma.principal(keep))
}

/// Random panel in the acceptance-suite regime: up to ~200 rows, p ≤ 8,
/// group sizes 1–6.
pub fn random_panel(seed: u64, family: Family, rho: f64) -> RegressionProblem<f64> {
    let n_subjects = 8 + (seed as usize * 7919) % 30;
    let p = 1 + (seed as usize * 31) % 8;
    let spec = PanelSpec::new(n_subjects, (1, 6), p).correlated(family, rho);
    panel(&spec, seed).unwrap()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}
