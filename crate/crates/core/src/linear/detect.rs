use serde::{Deserialize, Serialize};

use super::certificate::LinearSystem;
use super::lyap::{is_hurwitz, HurwitzReport};
use super::mat::{gauss_solve, Mat};
use crate::{CoreError, Result};

/// Detectability verdict; `Detectable` carries a gain making A + LC
/// Hurwitz together with its certificate.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Detectability {
    Detectable { l: Mat, certificate: HurwitzReport },
    NotDetectable { reason: String },
}

impl Detectability {
    pub fn is_detectable(&self) -> bool {
        matches!(self, Detectability::Detectable { .. })
    }
}

/// Decide detectability. With a user gain the verdict is the Hurwitz test
/// on A + LC. Without one, the observability staircase splits the state
/// space: the unobservable block must be Hurwitz on its own, and the
/// observable block's gain is placed by the dual Ackermann formula against
/// the target polynomial (s+1)^n.
pub fn detectability_check(sys: &LinearSystem, l: Option<&Mat>) -> Result<Detectability> {
    if let Some(l) = l {
        let m = sys.a.add(&l.mul(&sys.c));
        let report = is_hurwitz(&m)?;
        return Ok(if report.hurwitz {
            Detectability::Detectable {
                l: l.clone(),
                certificate: report,
            }
        } else {
            Detectability::NotDetectable {
                reason: "A + LC is not Hurwitz with the supplied gain".into(),
            }
        });
    }

    let n = sys.n();
    let kernel = observability_kernel(sys);
    let q = kernel.len();

    if q == n {
        // Nothing is observable; detectability reduces to plain stability.
        let report = is_hurwitz(&sys.a)?;
        return Ok(if report.hurwitz {
            Detectability::Detectable {
                l: Mat::zeros(n, sys.p()),
                certificate: report,
            }
        } else {
            Detectability::NotDetectable {
                reason: "no output information and A is not Hurwitz".into(),
            }
        });
    }

    // Orthonormal basis: observable complement first, kernel last.
    let n_bas = orthonormalize(kernel);
    let r_bas = complete_basis(&n_bas, n)?;
    let n_o = r_bas.len();
    let mut t = Mat::zeros(n, n);
    for (j, col) in r_bas.iter().chain(n_bas.iter()).enumerate() {
        for i in 0..n {
            t.set(i, j, col[i]);
        }
    }
    let t_inv = invert(&t)?;
    let a_t = t_inv.mul(&sys.a).mul(&t);
    let c_t = sys.c.mul(&t);

    // Unobservable block must already be Hurwitz.
    if q > 0 {
        let mut a_u = Mat::zeros(q, q);
        for i in 0..q {
            for j in 0..q {
                a_u.set(i, j, a_t.at(n_o + i, n_o + j));
            }
        }
        let report = is_hurwitz(&a_u)?;
        if !report.hurwitz {
            let detail = report
                .note
                .unwrap_or_else(|| "unstable unobservable mode".into());
            return Ok(Detectability::NotDetectable {
                reason: format!("unobservable block is not Hurwitz ({detail})"),
            });
        }
    }

    // Observable block: single-row Ackermann placement at (s+1)^{n_o}.
    let mut a_o = Mat::zeros(n_o, n_o);
    for i in 0..n_o {
        for j in 0..n_o {
            a_o.set(i, j, a_t.at(i, j));
        }
    }
    let mut l_o: Option<(usize, Vec<f64>)> = None;
    for row in 0..sys.p() {
        let c_row: Vec<f64> = (0..n_o).map(|j| c_t.at(row, j)).collect();
        if let Some(col) = ackermann_observer_gain(&a_o, &c_row) {
            l_o = Some((row, col));
            break;
        }
    }
    let Some((row, col)) = l_o else {
        return Err(CoreError::Linear(
            "pole placement failed: no single output row observes the observable block; \
             supply a gain explicitly"
                .into(),
        ));
    };
    let mut l_t = Mat::zeros(n, sys.p());
    for i in 0..n_o {
        l_t.set(i, row, col[i]);
    }
    let l = t.mul(&l_t);

    let m = sys.a.add(&l.mul(&sys.c));
    let report = is_hurwitz(&m)?;
    if !report.hurwitz {
        return Err(CoreError::Linear(
            "pole placement produced a non-Hurwitz closed matrix (conditioning); \
             supply a gain explicitly"
                .into(),
        ));
    }
    Ok(Detectability::Detectable {
        l,
        certificate: report,
    })
}

/// Kernel of the observability map [C; CA; ...; CA^{n−1}].
fn observability_kernel(sys: &LinearSystem) -> Vec<Vec<f64>> {
    let n = sys.n();
    let p = sys.p();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n * p);
    let mut block = sys.c.clone();
    for _ in 0..n {
        for i in 0..p {
            rows.push((0..n).map(|j| block.at(i, j)).collect());
        }
        block = block.mul(&sys.a);
    }
    null_space(&rows, n)
}

/// Null space of a stacked row list by Gauss-Jordan reduction.
fn null_space(rows: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let scale = rows
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |a, &v| a.max(v.abs()))
        .max(1.0);
    let tol = 1e-10 * scale;
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let mut pivot_cols = Vec::new();
    let mut rank = 0usize;
    for col in 0..n {
        let Some(best) = (rank..m.len())
            .filter(|&r| m[r][col].abs() > tol)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
        else {
            continue;
        };
        m.swap(rank, best);
        let p = m[rank][col];
        for v in &mut m[rank] {
            *v /= p;
        }
        for r in 0..m.len() {
            if r != rank && m[r][col].abs() > 0.0 {
                let f = m[r][col];
                for j in 0..n {
                    m[r][j] -= f * m[rank][j];
                }
            }
        }
        pivot_cols.push(col);
        rank += 1;
        if rank == n {
            break;
        }
    }
    let mut basis = Vec::new();
    for free in (0..n).filter(|c| !pivot_cols.contains(c)) {
        let mut v = vec![0.0; n];
        v[free] = 1.0;
        for (r, &pc) in pivot_cols.iter().enumerate() {
            v[pc] = -m[r][free];
        }
        basis.push(v);
    }
    basis
}

fn orthonormalize(vectors: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mut v in vectors {
        for b in &out {
            let d: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= d * bi;
            }
        }
        let norm = crate::dynamics::norm(&v);
        if norm > 1e-10 {
            out.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    out
}

/// Extend an orthonormal set to a full basis with standard vectors.
fn complete_basis(existing: &[Vec<f64>], n: usize) -> Result<Vec<Vec<f64>>> {
    let mut complement: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        if existing.len() + complement.len() == n {
            break;
        }
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        for b in existing.iter().chain(complement.iter()) {
            let d: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= d * bi;
            }
        }
        let norm = crate::dynamics::norm(&v);
        if norm > 1e-8 {
            complement.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    if existing.len() + complement.len() != n {
        return Err(CoreError::Linear("basis completion failed".into()));
    }
    Ok(complement)
}

fn invert(m: &Mat) -> Result<Mat> {
    let n = m.rows;
    let mut inv = Mat::zeros(n, n);
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let col = gauss_solve(m, &e)?;
        for (r, v) in col.into_iter().enumerate() {
            inv.set(r, i, v);
        }
    }
    Ok(inv)
}

/// Observer gain column for a single-output observable pair: the dual
/// Ackermann formula L = −q(A)·O⁻¹·e_n with q(s) = (s+1)^n, so that
/// A + L·c has every eigenvalue at −1. Returns `None` when (A, c) is not
/// observable.
fn ackermann_observer_gain(a: &Mat, c_row: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows;
    if n == 0 {
        return Some(Vec::new());
    }
    let mut obs = Mat::zeros(n, n);
    let mut row = c_row.to_vec();
    for i in 0..n {
        for j in 0..n {
            obs.set(i, j, row[j]);
        }
        // row <- row · A
        row = (0..n)
            .map(|j| (0..n).map(|k| row[k] * a.at(k, j)).sum())
            .collect();
    }
    let mut e_n = vec![0.0; n];
    e_n[n - 1] = 1.0;
    let x = gauss_solve(&obs, &e_n).ok()?;
    // q(A) = (A + I)^n
    let ai = a.add(&Mat::identity(n));
    let mut qa = Mat::identity(n);
    for _ in 0..n {
        qa = qa.mul(&ai);
    }
    Some(qa.mul_vec(&x).into_iter().map(|v| -v).collect())
}
