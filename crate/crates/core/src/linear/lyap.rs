use serde::{Deserialize, Serialize};

use super::mat::{cholesky, gauss_solve, Mat};
use crate::{CoreError, Result};

/// Outcome of the Lyapunov-based Hurwitz test.
///
/// The test is sound and complete: M is Hurwitz iff MᵀP + PM = −I has a
/// unique solution and that solution is positive definite. A singular
/// vectorized system means an eigenvalue pair summing to zero (in
/// particular any imaginary-axis eigenvalue), which already rules out
/// Hurwitz; such cases carry the `degenerate` flag.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HurwitzReport {
    pub hurwitz: bool,
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Mat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn sym_index(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i <= j);
    i * (2 * n - i + 1) / 2 + (j - i)
}

/// Solve MᵀP + PM = −I for symmetric P by eliminating the vectorized
/// system over the n(n+1)/2 packed unknowns.
pub fn lyap_solve(m: &Mat) -> Result<Mat> {
    if !m.is_square() {
        return Err(CoreError::Linear("lyap_solve needs a square matrix".into()));
    }
    let n = m.rows;
    let nn = n * (n + 1) / 2;
    let mut sys = Mat::zeros(nn, nn);
    let mut rhs = vec![0.0; nn];
    for i in 0..n {
        for j in i..n {
            let row = sym_index(i, j, n);
            rhs[row] = if i == j { -1.0 } else { 0.0 };
            for k in 0..n {
                // (MᵀP)_{ij} contributes M_{ki}·P_{kj}
                let (a, b) = if k <= j { (k, j) } else { (j, k) };
                let idx = sym_index(a, b, n);
                sys.set(row, idx, sys.at(row, idx) + m.at(k, i));
                // (PM)_{ij} contributes P_{ik}·M_{kj}
                let (a, b) = if i <= k { (i, k) } else { (k, i) };
                let idx = sym_index(a, b, n);
                sys.set(row, idx, sys.at(row, idx) + m.at(k, j));
            }
        }
    }
    let packed = gauss_solve(&sys, &rhs)?;
    let mut p = Mat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = packed[sym_index(i, j, n)];
            p.set(i, j, v);
            p.set(j, i, v);
        }
    }
    Ok(p)
}

/// Residual ‖MᵀP + PM + I‖ in the induced infinity norm.
pub fn lyap_residual(m: &Mat, p: &Mat) -> f64 {
    m.transpose()
        .mul(p)
        .add(&p.mul(m))
        .add(&Mat::identity(m.rows))
        .norm_inf()
}

/// Lyapunov-based Hurwitz test.
pub fn is_hurwitz(m: &Mat) -> Result<HurwitzReport> {
    if !m.is_square() {
        return Err(CoreError::Linear("is_hurwitz needs a square matrix".into()));
    }
    match lyap_solve(m) {
        Err(_) => Ok(HurwitzReport {
            hurwitz: false,
            degenerate: true,
            p: None,
            residual: None,
            note: Some("eigenvalue on imaginary axis or solver degeneracy".into()),
        }),
        Ok(p) => {
            let residual = lyap_residual(m, &p);
            if residual > 1e-8 * (1.0 + p.max_abs()) {
                return Ok(HurwitzReport {
                    hurwitz: false,
                    degenerate: true,
                    p: Some(p),
                    residual: Some(residual),
                    note: Some("eigenvalue on imaginary axis or solver degeneracy".into()),
                });
            }
            let pd = cholesky(&p).is_some();
            Ok(HurwitzReport {
                hurwitz: pd,
                degenerate: false,
                p: Some(p),
                residual: Some(residual),
                note: None,
            })
        }
    }
}
