use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

/// Rectangular node grid over a box, capped at three dimensions (the
/// converse-construction demonstrations, not a production HJB solver).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectGrid {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    /// Nodes per axis (each at least 2).
    pub dims: Vec<usize>,
}

impl RectGrid {
    pub fn new(mins: Vec<f64>, maxs: Vec<f64>, dims: Vec<usize>) -> Result<Self> {
        let n = mins.len();
        if n == 0 || n > 3 {
            return Err(CoreError::ValueFn(
                "grids support one to three dimensions".into(),
            ));
        }
        if maxs.len() != n || dims.len() != n {
            return Err(CoreError::ValueFn("grid axis descriptors disagree".into()));
        }
        if mins.iter().zip(&maxs).any(|(lo, hi)| hi <= lo) || dims.iter().any(|&d| d < 2) {
            return Err(CoreError::ValueFn(
                "each axis needs max > min and at least two nodes".into(),
            ));
        }
        let total: usize = dims.iter().product();
        if total > 4_000_000 {
            return Err(CoreError::ValueFn(format!(
                "grid with {total} nodes exceeds the supported budget"
            )));
        }
        Ok(Self { mins, maxs, dims })
    }

    /// Symmetric 1-D grid helper.
    pub fn symmetric(radius: f64, nodes: usize) -> Result<Self> {
        Self::new(vec![-radius], vec![radius], vec![nodes])
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.maxs[axis] - self.mins[axis]) / (self.dims[axis] - 1) as f64
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.ndim())
            .map(|a| self.spacing(a))
            .fold(0.0, f64::max)
    }

    pub fn axis_coord(&self, axis: usize, idx: usize) -> f64 {
        self.mins[axis] + self.spacing(axis) * idx as f64
    }

    /// Flat index to multi-index (row-major, last axis fastest).
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut multi = vec![0usize; self.ndim()];
        for axis in (0..self.ndim()).rev() {
            multi[axis] = flat % self.dims[axis];
            flat /= self.dims[axis];
        }
        multi
    }

    pub fn flatten(&self, multi: &[usize]) -> usize {
        let mut flat = 0usize;
        for (axis, &idx) in multi.iter().enumerate() {
            flat = flat * self.dims[axis] + idx;
        }
        flat
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.unflatten(flat)
            .iter()
            .enumerate()
            .map(|(axis, &idx)| self.axis_coord(axis, idx))
            .collect()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point
            .iter()
            .zip(self.mins.iter().zip(&self.maxs))
            .all(|(&x, (&lo, &hi))| x >= lo && x <= hi)
    }

    /// Multilinear interpolation; `None` outside the box.
    pub fn interp(&self, values: &[f64], point: &[f64]) -> Option<f64> {
        debug_assert_eq!(values.len(), self.len());
        if !self.contains(point) {
            return None;
        }
        let n = self.ndim();
        let mut base = vec![0usize; n];
        let mut frac = vec![0.0f64; n];
        for axis in 0..n {
            let rel = (point[axis] - self.mins[axis]) / self.spacing(axis);
            let idx = (rel.floor() as usize).min(self.dims[axis] - 2);
            base[axis] = idx;
            frac[axis] = (rel - idx as f64).clamp(0.0, 1.0);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut weight = 1.0;
            let mut multi = base.clone();
            for axis in 0..n {
                if corner & (1 << axis) != 0 {
                    multi[axis] += 1;
                    weight *= frac[axis];
                } else {
                    weight *= 1.0 - frac[axis];
                }
            }
            if weight > 0.0 {
                acc += weight * values[self.flatten(&multi)];
            }
        }
        Some(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_roundtrip() {
        let g = RectGrid::new(vec![-1.0, 0.0], vec![1.0, 2.0], vec![5, 3]).unwrap();
        for flat in 0..g.len() {
            assert_eq!(g.flatten(&g.unflatten(flat)), flat);
        }
        assert_eq!(g.coords(0), vec![-1.0, 0.0]);
        assert_eq!(g.coords(g.len() - 1), vec![1.0, 2.0]);
    }

    #[test]
    fn multilinear_reproduces_linear_functions() {
        let g = RectGrid::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![9, 9]).unwrap();
        let values: Vec<f64> = (0..g.len())
            .map(|i| {
                let c = g.coords(i);
                2.0 * c[0] - 3.0 * c[1] + 0.5
            })
            .collect();
        for &(x, y) in &[(0.13, -0.7), (0.99, 0.99), (-1.0, 1.0)] {
            let got = g.interp(&values, &[x, y]).unwrap();
            let want = 2.0 * x - 3.0 * y + 0.5;
            assert!((got - want).abs() < 1e-12, "({x},{y})");
        }
        assert!(g.interp(&values, &[1.5, 0.0]).is_none());
    }

    #[test]
    fn rejects_oversized_dimensions() {
        assert!(RectGrid::new(vec![0.0; 4], vec![1.0; 4], vec![3; 4]).is_err());
    }
}
