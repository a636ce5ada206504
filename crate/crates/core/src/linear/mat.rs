use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

/// Dense row-major matrix. Sized for the n ≤ 32 systems this module
/// targets; no sparsity, no blocking.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) {
            return Err(CoreError::Linear("ragged or empty row data".into()));
        }
        let r = rows.len();
        let c = rows[0].len();
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Linear("non-finite matrix entry".into()));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data,
        })
    }

    pub fn column(values: Vec<f64>) -> Self {
        let rows = values.len();
        Self {
            rows,
            cols: 1,
            data: values,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.at(i, j));
            }
        }
        out
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "dimension mismatch in mul");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * out.cols + j] += a * other.at(k, j);
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.at(i, j) * v[j]).sum())
            .collect()
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, c: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    /// Max row sum (the induced infinity norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.at(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
    }

    /// Symmetry defect: max |a_ij − a_ji|.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.at(i, j) - self.at(j, i)).abs());
            }
        }
        worst
    }
}

/// Solve A·x = b by Gaussian elimination with partial pivoting. Reports a
/// singular system when a pivot degenerates relative to the matrix scale.
pub fn gauss_solve(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    if !a.is_square() || a.rows != b.len() {
        return Err(CoreError::Linear("gauss_solve needs square A and matching b".into()));
    }
    let n = a.rows;
    let scale = a.max_abs().max(1e-300);
    let mut m = a.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let (pivot_row, pivot_val) = (col..n)
            .map(|r| (r, m.at(r, col).abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if pivot_val <= 1e-13 * scale {
            return Err(CoreError::Linear(format!(
                "singular system (pivot {pivot_val:.3e} at column {col})"
            )));
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = m.at(col, j);
                m.set(col, j, m.at(pivot_row, j));
                m.set(pivot_row, j, tmp);
            }
            x.swap(col, pivot_row);
        }
        let p = m.at(col, col);
        for r in (col + 1)..n {
            let factor = m.at(r, col) / p;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                let v = m.at(r, j) - factor * m.at(col, j);
                m.set(r, j, v);
            }
            x[r] -= factor * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for j in (col + 1)..n {
            acc -= m.at(col, j) * x[j];
        }
        x[col] = acc / m.at(col, col);
    }
    Ok(x)
}

/// Cholesky factor of a symmetric matrix; `None` when it is not positive
/// definite.
pub fn cholesky(a: &Mat) -> Option<Mat> {
    if !a.is_square() {
        return None;
    }
    let n = a.rows;
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a.at(i, j);
            for k in 0..j {
                acc -= l.at(i, k) * l.at(j, k);
            }
            if i == j {
                if acc <= 0.0 {
                    return None;
                }
                l.set(i, j, acc.sqrt());
            } else {
                l.set(i, j, acc / l.at(j, j));
            }
        }
    }
    Some(l)
}

/// Matrix exponential by scaling-and-squaring with a Taylor series.
pub fn expm(m: &Mat) -> Mat {
    assert!(m.is_square());
    let norm = m.norm_inf();
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let t = m.scale(1.0 / f64::powi(2.0, s as i32));
    let n = m.rows;
    let mut sum = Mat::identity(n);
    let mut term = Mat::identity(n);
    for k in 1..=18 {
        term = term.mul(&t).scale(1.0 / k as f64);
        sum = sum.add(&term);
    }
    for _ in 0..s {
        sum = sum.mul(&sum);
    }
    sum
}

/// Spectral norm via power iteration on the symmetric square MᵀM.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.data.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let g = m.transpose().mul(m);
    let n = g.rows;
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + i as f64)).collect();
    let mut lambda = 0.0f64;
    for _ in 0..500 {
        let mut gv = g.mul_vec(&v);
        let norm = crate::dynamics::norm(&gv);
        if norm == 0.0 {
            return 0.0;
        }
        for x in &mut gv {
            *x /= norm;
        }
        let new_lambda: f64 = g
            .mul_vec(&gv)
            .iter()
            .zip(&gv)
            .map(|(a, b)| a * b)
            .sum();
        v = gv;
        if (new_lambda - lambda).abs() <= 1e-15 * new_lambda.abs() {
            lambda = new_lambda;
            break;
        }
        lambda = new_lambda;
    }
    lambda.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_solves_small_system() {
        let a = Mat::from_rows(vec![vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let x = gauss_solve(&a, &[5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_reports_singular() {
        let a = Mat::from_rows(vec![vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(gauss_solve(&a, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cholesky_detects_definiteness() {
        let pd = Mat::from_rows(vec![vec![2.0, -1.0], vec![-1.0, 2.0]]).unwrap();
        assert!(cholesky(&pd).is_some());
        let indef = Mat::from_rows(vec![vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(cholesky(&indef).is_none());
    }

    #[test]
    fn expm_of_diagonal() {
        let m = Mat::from_rows(vec![vec![-1.0, 0.0], vec![0.0, -2.0]]).unwrap();
        let e = expm(&m);
        assert!((e.at(0, 0) - (-1.0f64).exp()).abs() < 1e-14);
        assert!((e.at(1, 1) - (-2.0f64).exp()).abs() < 1e-14);
        assert!(e.at(0, 1).abs() < 1e-16);
    }

    #[test]
    fn expm_of_nilpotent() {
        // exp([[0,1],[0,0]]·t) = [[1,t],[0,1]]
        let m = Mat::from_rows(vec![vec![0.0, 3.0], vec![0.0, 0.0]]).unwrap();
        let e = expm(&m);
        assert!((e.at(0, 1) - 3.0).abs() < 1e-13);
        assert!((e.at(0, 0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_norm_matches_known_values() {
        let m = Mat::from_rows(vec![vec![3.0, 0.0], vec![0.0, -4.0]]).unwrap();
        assert!((spectral_norm(&m) - 4.0).abs() < 1e-10);
        let col = Mat::column(vec![0.0, 1.0]);
        assert!((spectral_norm(&col) - 1.0).abs() < 1e-12);
        let l = Mat::column(vec![-2.0, -1.0]);
        assert!((spectral_norm(&l) - 5.0f64.sqrt()).abs() < 1e-10);
    }
}
