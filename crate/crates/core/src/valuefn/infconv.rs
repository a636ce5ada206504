use super::bellman::GridValueFn;
use crate::{CoreError, Result};

/// Discrete inf-convolution (Moreau envelope) over the grid nodes:
///
/// V_α(x) = min_y [ V(y) + |y − x|² / (2α²) ]
///
/// computed exactly on the node set by one separable lower-envelope sweep
/// per axis (linear work per line). The output is pointwise ≤ the input
/// and Lipschitz with constant bounded by the largest displacement over α².
pub fn inf_convolve(v: &GridValueFn, alpha: f64) -> Result<GridValueFn> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(CoreError::ValueFn(format!(
            "inf-convolution parameter must lie in (0, 1], got {alpha}"
        )));
    }
    let weight = 1.0 / (2.0 * alpha * alpha);
    let grid = &v.grid;
    let mut values = v.values.clone();

    // Sweep axis by axis: squared Euclidean distance is separable, so the
    // per-axis 1-D envelopes compose into the full n-D minimization.
    for axis in 0..grid.ndim() {
        let len = grid.dims[axis];
        let coords: Vec<f64> = (0..len).map(|i| grid.axis_coord(axis, i)).collect();
        // iterate over all lines along `axis`
        let outer: usize = grid.len() / len;
        let mut line = vec![0.0f64; len];
        for o in 0..outer {
            // map line-local index to flat index
            let mut multi = vec![0usize; grid.ndim()];
            let mut rem = o;
            for a in (0..grid.ndim()).rev() {
                if a == axis {
                    continue;
                }
                multi[a] = rem % grid.dims[a];
                rem /= grid.dims[a];
            }
            for (i, slot) in line.iter_mut().enumerate() {
                multi[axis] = i;
                *slot = values[grid.flatten(&multi)];
            }
            let env = lower_envelope(&coords, &line, weight);
            for (i, val) in env.into_iter().enumerate() {
                multi[axis] = i;
                values[grid.flatten(&multi)] = val;
            }
        }
    }
    Ok(GridValueFn {
        grid: grid.clone(),
        values,
        regions: v.regions.clone(),
        flags: v.flags.clone(),
        xi: v.xi.clone(),
        residual: v.residual,
        sweeps: v.sweeps,
    })
}

/// 1-D lower envelope of parabolas rooted at (xs[q], f[q]) with curvature
/// `weight`, evaluated back at the sample positions. Linear-time envelope
/// construction over sorted positions.
fn lower_envelope(xs: &[f64], f: &[f64], weight: f64) -> Vec<f64> {
    let n = xs.len();
    // hull of parabola indices and the left boundary of each one's range
    let mut hull: Vec<usize> = Vec::with_capacity(n);
    let mut bounds: Vec<f64> = Vec::with_capacity(n + 1);
    let intersect = |q: usize, r: usize| -> f64 {
        // crossing point of the parabolas rooted at q and r (q left of r)
        ((f[r] + weight * xs[r] * xs[r]) - (f[q] + weight * xs[q] * xs[q]))
            / (2.0 * weight * (xs[r] - xs[q]))
    };
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            match hull.last() {
                None => {
                    hull.push(q);
                    bounds.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&top) => {
                    let s = intersect(top, q);
                    if s <= *bounds.last().unwrap() {
                        hull.pop();
                        bounds.pop();
                    } else {
                        hull.push(q);
                        bounds.push(s);
                        break;
                    }
                }
            }
        }
    }
    bounds.push(f64::INFINITY);
    let mut out = Vec::with_capacity(n);
    let mut seg = 0usize;
    for p in 0..n {
        while bounds[seg + 1] < xs[p] {
            seg += 1;
        }
        let q = hull[seg];
        let d = xs[p] - xs[q];
        out.push(f[q] + weight * d * d);
    }
    out
}

/// Modulus of continuity of the grid values at scale `delta`, estimated
/// over node pairs within that distance.
pub fn modulus_of_continuity(v: &GridValueFn, delta: f64) -> f64 {
    let grid = &v.grid;
    let n = grid.ndim();
    let radii: Vec<isize> = (0..n)
        .map(|a| (delta / grid.spacing(a)).ceil() as isize)
        .collect();
    let mut worst = 0.0f64;
    for flat in 0..grid.len() {
        let base = grid.unflatten(flat);
        let x = grid.coords(flat);
        // scan the axis-aligned window around the node
        let mut offsets = vec![-radii[0]];
        offsets[0] = -radii[0];
        let mut idx = vec![0isize; n];
        for a in 0..n {
            idx[a] = -radii[a];
        }
        'window: loop {
            let mut multi = Vec::with_capacity(n);
            let mut valid = true;
            for a in 0..n {
                let j = base[a] as isize + idx[a];
                if j < 0 || j >= grid.dims[a] as isize {
                    valid = false;
                    break;
                }
                multi.push(j as usize);
            }
            if valid {
                let other = grid.flatten(&multi);
                let y = grid.coords(other);
                let dist: f64 = x
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if dist <= delta {
                    worst = worst.max((v.values[flat] - v.values[other]).abs());
                }
            }
            let mut a = 0;
            loop {
                idx[a] += 1;
                if idx[a] <= radii[a] {
                    break;
                }
                idx[a] = -radii[a];
                a += 1;
                if a == n {
                    break 'window;
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparison::ComparisonFn;
    use crate::valuefn::bellman::NodeFlag;
    use crate::valuefn::geometry::Region;
    use crate::valuefn::grid::RectGrid;

    fn grid_value(radius: f64, nodes: usize, f: impl Fn(f64) -> f64) -> GridValueFn {
        let grid = RectGrid::symmetric(radius, nodes).unwrap();
        let values: Vec<f64> = (0..grid.len()).map(|i| f(grid.coords(i)[0])).collect();
        let len = grid.len();
        GridValueFn {
            grid,
            values,
            regions: vec![Region::E; len],
            flags: vec![NodeFlag::Converged; len],
            xi: ComparisonFn::identity(),
            residual: 0.0,
            sweeps: 0,
        }
    }

    #[test]
    fn envelope_of_abs_is_huber() {
        // V(x) = |x|, α = 0.5: the continuous envelope is x²/(2α²) inside
        // |x| ≤ α², |x| − α²/2 beyond; node minimization matches within a
        // grid spacing.
        let v = grid_value(1.0, 401, |x| x.abs());
        let alpha = 0.5;
        let env = inf_convolve(&v, alpha).unwrap();
        let spacing = v.grid.spacing(0);
        for flat in 0..v.grid.len() {
            let x = v.grid.coords(flat)[0];
            let huber = if x.abs() <= alpha * alpha {
                x * x / (2.0 * alpha * alpha)
            } else {
                x.abs() - alpha * alpha / 2.0
            };
            let got = env.values[flat];
            assert!(
                (got - huber).abs() <= spacing,
                "x = {x}: {got} vs {huber}"
            );
        }
    }

    #[test]
    fn zero_stays_zero() {
        let v = grid_value(1.0, 51, |_| 0.0);
        let env = inf_convolve(&v, 0.3).unwrap();
        assert!(env.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn envelope_sits_below_and_grows_as_alpha_shrinks() {
        let v = grid_value(2.0, 201, |x| x * x + (3.0 * x).sin().abs());
        let coarse = inf_convolve(&v, 0.8).unwrap();
        let fine = inf_convolve(&v, 0.2).unwrap();
        for i in 0..v.grid.len() {
            assert!(coarse.values[i] <= v.values[i] + 1e-12);
            assert!(fine.values[i] <= v.values[i] + 1e-12);
            // Moreau envelopes increase toward V as α decreases
            assert!(coarse.values[i] <= fine.values[i] + 1e-12);
        }
    }

    #[test]
    fn two_dimensional_envelope_matches_direct_minimization() {
        let grid = RectGrid::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![21, 21]).unwrap();
        let values: Vec<f64> = (0..grid.len())
            .map(|i| {
                let c = grid.coords(i);
                c[0].abs() + 2.0 * c[1].abs()
            })
            .collect();
        let len = grid.len();
        let v = GridValueFn {
            grid: grid.clone(),
            values: values.clone(),
            regions: vec![Region::E; len],
            flags: vec![NodeFlag::Converged; len],
            xi: ComparisonFn::identity(),
            residual: 0.0,
            sweeps: 0,
        };
        let alpha = 0.6;
        let env = inf_convolve(&v, alpha).unwrap();
        let w = 1.0 / (2.0 * alpha * alpha);
        for flat in (0..len).step_by(17) {
            let x = grid.coords(flat);
            let mut direct = f64::INFINITY;
            for other in 0..len {
                let y = grid.coords(other);
                let d2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
                direct = direct.min(values[other] + w * d2);
            }
            assert!(
                (env.values[flat] - direct).abs() < 1e-10,
                "node {flat}: {} vs {direct}",
                env.values[flat]
            );
        }
    }

    #[test]
    fn modulus_estimate_for_lipschitz_data() {
        let v = grid_value(1.0, 101, |x| x.abs());
        let m = modulus_of_continuity(&v, 0.25);
        assert!((m - 0.25).abs() < 0.03, "modulus {m}");
    }
}
