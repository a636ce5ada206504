use serde::{Deserialize, Serialize};

use super::expr::ComparisonFn;
use super::table::{Interp, MonotoneTable};
use crate::{CoreError, Result};

/// Values of a two-argument bound sampled on a rectangular (r, t) knot set.
/// Row-major: `values[i * t_knots.len() + j]` is the value at (r_i, t_j).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KlGrid {
    pub r_knots: Vec<f64>,
    pub t_knots: Vec<f64>,
    pub values: Vec<f64>,
}

impl KlGrid {
    pub fn new(r_knots: Vec<f64>, t_knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if r_knots.len() * t_knots.len() != values.len() {
            return Err(CoreError::InvalidGain(
                "KL grid dimensions do not match value count".into(),
            ));
        }
        if r_knots.windows(2).any(|w| w[1] <= w[0]) || t_knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CoreError::InvalidGain(
                "KL grid knots must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            r_knots,
            t_knots,
            values,
        })
    }

    pub fn from_fn(r_knots: Vec<f64>, t_knots: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(r_knots.len() * t_knots.len());
        for &r in &r_knots {
            for &t in &t_knots {
                values.push(f(r, t));
            }
        }
        Self {
            r_knots,
            t_knots,
            values,
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.t_knots.len() + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.t_knots.len() + j] = v;
    }

    /// Bilinear interpolation; r extrapolates along the last segment, t
    /// clamps to the edge rows (the function is nonincreasing in t, so
    /// clamping past the last row keeps the value an upper bound).
    fn interp(&self, r: f64, t: f64) -> f64 {
        let row = |i: usize| -> f64 {
            let js = seg_index(&self.t_knots, t);
            match js {
                Seg::Below => self.at(i, 0),
                Seg::Above => self.at(i, self.t_knots.len() - 1),
                Seg::In(j, w) => self.at(i, j) * (1.0 - w) + self.at(i, j + 1) * w,
            }
        };
        if r <= 0.0 {
            return 0.0;
        }
        match seg_index(&self.r_knots, r) {
            Seg::Below => {
                // linear from the origin up to the first row
                row(0) * (r / self.r_knots[0])
            }
            Seg::Above => {
                let n = self.r_knots.len();
                if n == 1 {
                    return row(0);
                }
                let (r0, r1) = (self.r_knots[n - 2], self.r_knots[n - 1]);
                let w = (r - r0) / (r1 - r0);
                (row(n - 2) * (1.0 - w) + row(n - 1) * w).max(0.0)
            }
            Seg::In(i, w) => row(i) * (1.0 - w) + row(i + 1) * w,
        }
    }
}

enum Seg {
    Below,
    Above,
    In(usize, f64),
}

fn seg_index(knots: &[f64], x: f64) -> Seg {
    let n = knots.len();
    if x < knots[0] {
        return Seg::Below;
    }
    if x >= knots[n - 1] {
        return Seg::Above;
    }
    let idx = knots.partition_point(|&k| k <= x) - 1;
    let w = (x - knots[idx]) / (knots[idx + 1] - knots[idx]);
    Seg::In(idx, w)
}

/// Two-argument decay bound: class K in r, decreasing to 0 in t.
///
/// The canonical representation is the factored form μ₁(μ₂(r)·e^{−t});
/// raw grids and a small registry of named closed forms cover bounds that
/// do not factor.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KLFn {
    Factored { mu1: ComparisonFn, mu2: ComparisonFn },
    Grid { grid: KlGrid },
    Named { name: String },
}

fn named_form(name: &str) -> Option<fn(f64, f64) -> f64> {
    match name {
        // r·e^{2r − t/(1+r)}: exponential transient with state-dependent
        // decay rate; dominates trajectories of ẋ = x observed over unit
        // output energy.
        "exp-transient-decay" => Some(|r, t| {
            if r <= 0.0 {
                0.0
            } else {
                r * (2.0 * r - t / (1.0 + r)).exp()
            }
        }),
        _ => None,
    }
}

impl KLFn {
    pub fn factored(mu1: ComparisonFn, mu2: ComparisonFn) -> Self {
        KLFn::Factored { mu1, mu2 }
    }

    /// c·r·e^{−t}.
    pub fn exp_decay(c: f64) -> Self {
        KLFn::Factored {
            mu1: ComparisonFn::linear(c),
            mu2: ComparisonFn::identity(),
        }
    }

    pub fn named(name: &str) -> Result<Self> {
        if named_form(name).is_none() {
            return Err(CoreError::UnknownName {
                registry: "kl-forms",
                name: name.into(),
            });
        }
        Ok(KLFn::Named { name: name.into() })
    }

    pub fn validate(&self) -> Result<()> {
        if let KLFn::Named { name } = self {
            if named_form(name).is_none() {
                return Err(CoreError::UnknownName {
                    registry: "kl-forms",
                    name: name.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn eval(&self, r: f64, t: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self {
            KLFn::Factored { mu1, mu2 } => mu1.eval(mu2.eval(r) * (-t).exp()),
            KLFn::Grid { grid } => grid.interp(r, t),
            KLFn::Named { name } => {
                let f = named_form(name).expect("validated named KL form");
                f(r, t)
            }
        }
    }

    /// β(r, 0) as a comparison function; symbolic for factored forms.
    pub fn at_zero(&self) -> ComparisonFn {
        match self {
            KLFn::Factored { mu1, mu2 } => mu1.compose(mu2),
            other => {
                let cloned = other.clone();
                let spec = super::table::TableSpec::on(1e-6, 1e4).with_knots(257);
                ComparisonFn::from_samples(move |r| cloned.eval(r, 0.0), &spec)
                    .expect("sampled decay envelope")
            }
        }
    }

    /// True when the bound dominates the grid at every knot (slack >= -tol).
    pub fn dominates(&self, grid: &KlGrid, tol: f64) -> bool {
        for (i, &r) in grid.r_knots.iter().enumerate() {
            for (j, &t) in grid.t_knots.iter().enumerate() {
                if self.eval(r, t) < grid.at(i, j) - tol {
                    return false;
                }
            }
        }
        true
    }
}

/// Fit a factored bound μ₁(μ₂(r)e^{−t}) dominating the grid at every knot.
///
/// μ₂ is the separable envelope max{r, sup_t value·e^t} over the knot rows;
/// μ₁ is the monotone upper envelope of the knot values against the
/// abscissas μ₂(r_i)e^{−t_j}. Any dominating pair is acceptable, so both
/// pieces are biased upward only.
pub fn kl_factorize(grid: &KlGrid) -> Result<KLFn> {
    check_kl_monotone(grid)?;
    let nt = grid.t_knots.len();

    let mut mu2_vals = Vec::with_capacity(grid.r_knots.len());
    for (i, &r) in grid.r_knots.iter().enumerate() {
        let mut m = r;
        for j in 0..nt {
            m = m.max(grid.at(i, j) * grid.t_knots[j].exp());
        }
        mu2_vals.push(m);
    }
    let mu2 = ComparisonFn::from_table(MonotoneTable::from_knots(
        grid.r_knots.clone(),
        mu2_vals.clone(),
        true,
        Interp::Linear,
    )?);

    // Envelope abscissas: μ₂(r_i)e^{−t_j} paired with the knot values.
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(grid.r_knots.len() * nt);
    for i in 0..grid.r_knots.len() {
        for j in 0..nt {
            pairs.push((mu2_vals[i] * (-grid.t_knots[j]).exp(), grid.at(i, j)));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rs = Vec::with_capacity(pairs.len());
    let mut vs: Vec<f64> = Vec::with_capacity(pairs.len());
    let mut running: f64 = 0.0;
    for (s, v) in pairs {
        running = running.max(v);
        match rs.last() {
            Some(&last) if s <= last => {
                let k = vs.len() - 1;
                vs[k] = vs[k].max(running);
            }
            _ => {
                rs.push(s);
                vs.push(running);
            }
        }
    }
    let mu1 = ComparisonFn::from_table(MonotoneTable::from_knots(rs, vs, true, Interp::Linear)?);
    Ok(KLFn::Factored { mu1, mu2 })
}

fn check_kl_monotone(grid: &KlGrid) -> Result<()> {
    let scale = grid.values.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
    let tol = 1e-12 * scale;
    for (i, &r) in grid.r_knots.iter().enumerate() {
        for j in 1..grid.t_knots.len() {
            if grid.at(i, j) > grid.at(i, j - 1) + tol {
                return Err(CoreError::KlConditionViolated {
                    condition: "nonincreasing in t".into(),
                    r,
                    t: grid.t_knots[j],
                    value: grid.at(i, j),
                });
            }
        }
    }
    for i in 1..grid.r_knots.len() {
        for (j, &t) in grid.t_knots.iter().enumerate() {
            if grid.at(i, j) + tol < grid.at(i - 1, j) {
                return Err(CoreError::KlConditionViolated {
                    condition: "nondecreasing in r".into(),
                    r: grid.r_knots[i],
                    t,
                    value: grid.at(i, j),
                });
            }
        }
    }
    Ok(())
}

/// Tunable thresholds for the discrete smallness conditions checked by
/// [`kl_majorize`].
#[derive(Clone, Debug)]
pub struct MajorizeOptions {
    /// Each row must have decayed to this fraction of its peak by the last
    /// t-knot (uniform eventual smallness).
    pub decay_fraction: f64,
    /// The first row's peak must be below this fraction of the overall peak
    /// (smallness near r = 0).
    pub origin_fraction: f64,
    /// Values below this are treated as zero.
    pub abs_tol: f64,
}

impl Default for MajorizeOptions {
    fn default() -> Self {
        Self {
            decay_fraction: 0.5,
            origin_fraction: 0.5,
            abs_tol: 1e-9,
        }
    }
}

/// Majorize an arbitrary sampled (r, t) map by a KL bound.
///
/// The two preconditions (rows decay uniformly in t; values are small for
/// small r) are verified on the knots; the grid is then pushed into KL
/// shape by running maxima and factored.
pub fn kl_majorize(grid: &KlGrid, opts: &MajorizeOptions) -> Result<KLFn> {
    let nr = grid.r_knots.len();
    let nt = grid.t_knots.len();

    // Condition 1: uniform eventual smallness on each row.
    for i in 0..nr {
        let peak = (0..nt).map(|j| grid.at(i, j)).fold(0.0f64, f64::max);
        let tail = grid.at(i, nt - 1);
        if tail > f64::max(opts.decay_fraction * peak, opts.abs_tol) {
            return Err(CoreError::KlConditionViolated {
                condition: "condition 1 (uniform eventual smallness)".into(),
                r: grid.r_knots[i],
                t: grid.t_knots[nt - 1],
                value: tail,
            });
        }
    }
    // Condition 2: smallness near r = 0.
    let overall = grid.values.iter().fold(0.0f64, |a, &v| a.max(v));
    let first_row_peak = (0..nt).map(|j| grid.at(0, j)).fold(0.0f64, f64::max);
    if first_row_peak > f64::max(opts.origin_fraction * overall, opts.abs_tol) {
        return Err(CoreError::KlConditionViolated {
            condition: "condition 2 (smallness near r = 0)".into(),
            r: grid.r_knots[0],
            t: 0.0,
            value: first_row_peak,
        });
    }

    let mut shaped = grid.clone();
    // Nondecreasing in r: running max down the rows.
    for i in 1..nr {
        for j in 0..nt {
            let v = shaped.at(i, j).max(shaped.at(i - 1, j));
            shaped.set(i, j, v);
        }
    }
    // Nonincreasing in t: running max from the tail.
    for i in 0..nr {
        for j in (0..nt - 1).rev() {
            let v = shaped.at(i, j).max(shaped.at(i, j + 1));
            shaped.set(i, j, v);
        }
    }
    kl_factorize(&shaped)
}

/// Knot layout for the cascade construction.
#[derive(Clone, Debug)]
pub struct CascadeOptions {
    pub r_knots: Vec<f64>,
    pub t_knots: Vec<f64>,
}

impl Default for CascadeOptions {
    fn default() -> Self {
        Self {
            r_knots: super::table::log_spaced(40, 1e-3, 1e2),
            t_knots: super::table::lin_spaced(60, 0.0, 20.0),
        }
    }
}

/// Cascade transform: from a single-step decay bound build a pair (β, ν)
/// such that any continuous μ satisfying the step relation
/// μ(t₂) ≤ max{β̂(μ(t₁), t₂−t₁), μ(t₁)/2, C} obeys
/// μ(τ) ≤ max{β(μ(0), τ), ν(C)}.
///
/// β̂ is first replaced by β̃(r,t) = max{β̂(r,t), max(β̂(r,0), r)·e^{−t}},
/// which forces β̃(r,0) ≥ r and gives every halving time T_r ≥ ln 2, so the
/// halving-time series diverges. β is the KL majorant of the chained
/// half-decay profile and ν(r) = β̃(2r, 0).
pub fn kl_cascade(beta_hat: &KLFn, opts: &CascadeOptions) -> Result<(KLFn, ComparisonFn)> {
    let tilde = |r: f64, t: f64| -> f64 {
        let floor = beta_hat.eval(r, 0.0).max(r) * (-t).exp();
        beta_hat.eval(r, t).max(floor)
    };

    // Halving time: first t with β̃(r, t) = r/2 (β̃ is nonincreasing in t).
    let halving_time = |r: f64| -> Result<f64> {
        let target = r / 2.0;
        let mut hi = 1.0;
        let mut tries = 0;
        while tilde(r, hi) > target {
            hi *= 2.0;
            tries += 1;
            if tries > 200 {
                return Err(CoreError::InvalidGain(format!(
                    "halving time unbounded at r={r}; grid-backed bounds need a longer t range"
                )));
            }
        }
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if tilde(r, mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    };

    // Chained profile: follow β̃ until each halving, then restart from r/2^k.
    let phi = |r: f64, t: f64| -> Result<f64> {
        let mut level = r;
        let mut elapsed = 0.0;
        for _ in 0..4096 {
            let t_half = halving_time(level)?;
            if t < elapsed + t_half {
                return Ok(tilde(level, t - elapsed));
            }
            elapsed += t_half;
            level /= 2.0;
            if level < 1e-280 {
                return Ok(0.0);
            }
        }
        Ok(0.0)
    };

    let mut values = Vec::with_capacity(opts.r_knots.len() * opts.t_knots.len());
    for &r in &opts.r_knots {
        for &t in &opts.t_knots {
            values.push(phi(r, t)?);
        }
    }
    let grid = KlGrid::new(opts.r_knots.clone(), opts.t_knots.clone(), values)?;
    let beta = kl_majorize(&grid, &MajorizeOptions::default())?;

    let nu = match beta_hat {
        KLFn::Factored { mu1, mu2 } => {
            // β̂(2r, 0) = μ₁(μ₂(2r)), premajorized by 2r.
            mu1.compose(&mu2.compose(&ComparisonFn::linear(2.0)))
                .max(&ComparisonFn::linear(2.0))
        }
        other => {
            let cloned = other.clone();
            let spec = super::table::TableSpec::on(1e-6, 1e4).with_knots(513);
            ComparisonFn::from_samples(
                move |r| cloned.eval(2.0 * r, 0.0).max(2.0 * r),
                &spec,
            )?
        }
    };
    Ok((beta, nu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparison::table::{lin_spaced, log_spaced};

    fn exp_grid() -> KlGrid {
        KlGrid::from_fn(log_spaced(12, 0.1, 10.0), lin_spaced(15, 0.0, 6.0), |r, t| {
            r * (-t).exp()
        })
    }

    #[test]
    fn factorize_exponential_has_zero_slack() {
        let grid = exp_grid();
        let kl = kl_factorize(&grid).unwrap();
        for (i, &r) in grid.r_knots.iter().enumerate() {
            for (j, &t) in grid.t_knots.iter().enumerate() {
                let slack = kl.eval(r, t) - grid.at(i, j);
                assert!((-1e-12..=1e-9 * (1.0 + r)).contains(&slack), "slack {slack} at ({r},{t})");
            }
        }
    }

    #[test]
    fn factorize_dominates_slow_decay() {
        let grid = KlGrid::from_fn(log_spaced(10, 0.1, 5.0), lin_spaced(12, 0.0, 8.0), |r, t| {
            r / (1.0 + t)
        });
        let kl = kl_factorize(&grid).unwrap();
        assert!(kl.dominates(&grid, 1e-9));
    }

    #[test]
    fn factorize_zero_grid() {
        let grid = KlGrid::from_fn(log_spaced(6, 0.1, 2.0), lin_spaced(6, 0.0, 3.0), |_, _| 0.0);
        let kl = kl_factorize(&grid).unwrap();
        assert!(kl.dominates(&grid, 0.0));
        assert!(kl.eval(1.0, 1.0) >= 0.0);
    }

    #[test]
    fn factorize_rejects_nonmonotone_grid() {
        let grid = KlGrid::from_fn(log_spaced(6, 0.1, 2.0), lin_spaced(6, 0.0, 3.0), |r, t| {
            r * (t - 1.0).abs()
        });
        assert!(matches!(
            kl_factorize(&grid),
            Err(CoreError::KlConditionViolated { .. })
        ));
    }

    #[test]
    fn majorize_dominates_exponential() {
        let grid = exp_grid();
        let kl = kl_majorize(&grid, &MajorizeOptions::default()).unwrap();
        assert!(kl.dominates(&grid, 1e-9));
        // and stays below the doubled bound at the knots
        for (i, &r) in grid.r_knots.iter().enumerate() {
            for (j, &t) in grid.t_knots.iter().enumerate() {
                assert!(kl.eval(r, t) <= 2.0 * r * (-t).exp() + 1e-9 * (1.0 + r), "({i},{j})");
            }
        }
    }

    #[test]
    fn majorize_flags_nondecaying_row() {
        let grid = KlGrid::from_fn(log_spaced(8, 0.1, 1.0), lin_spaced(10, 0.0, 5.0), |r, _| r);
        let err = kl_majorize(&grid, &MajorizeOptions::default()).unwrap_err();
        match err {
            CoreError::KlConditionViolated { condition, .. } => {
                assert!(condition.contains("condition 1"), "{condition}")
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn cascade_exponential_is_fixed_point() {
        let (beta, nu) = kl_cascade(&KLFn::exp_decay(1.0), &CascadeOptions::default()).unwrap();
        let opts = CascadeOptions::default();
        for &r in opts.r_knots.iter().step_by(3) {
            for &t in opts.t_knots.iter().step_by(4) {
                let want = r * (-t).exp();
                assert!(
                    (beta.eval(r, t) - want).abs() <= 1e-9 * (1.0 + r),
                    "r={r} t={t} got={} want={want}",
                    beta.eval(r, t)
                );
            }
        }
        // ν(r) = β̃(2r, 0) = 2r
        assert!((nu.eval(3.0) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn cascade_dominates_worst_case_chains() {
        // Brute-force chains satisfying the step relation for β̂(r,t) = r/(1+t):
        // the greedy pointwise-max feasible sequence must stay below the
        // cascade bound.
        let beta_hat = KLFn::Factored {
            mu1: ComparisonFn::from_samples(
                |s| if s <= 0.0 { 0.0 } else { s },
                &crate::comparison::table::TableSpec::on(1e-6, 1e4).with_knots(200),
            )
            .unwrap(),
            mu2: ComparisonFn::identity(),
        };
        // direct closed-form variant instead: use a Grid-backed β̂
        let grid = KlGrid::from_fn(log_spaced(24, 1e-2, 30.0), lin_spaced(120, 0.0, 24.0), |r, t| {
            r / (1.0 + t)
        });
        drop(beta_hat);
        let beta_hat = KLFn::Grid { grid };
        let opts = CascadeOptions {
            r_knots: log_spaced(32, 1e-2, 20.0),
            t_knots: lin_spaced(80, 0.0, 18.0),
        };
        let (beta, nu) = kl_cascade(&beta_hat, &opts).unwrap();

        let tilde = |r: f64, t: f64| (r / (1.0 + t)).max(r * (-t).exp());
        for &mu0 in &[0.5, 2.0, 8.0] {
            for &c in &[0.0, 0.2] {
                let dt = 0.05;
                let steps = 240;
                let mut mu = vec![mu0];
                for k in 1..=steps {
                    let tk = k as f64 * dt;
                    let mut best = f64::INFINITY;
                    for (jj, &m) in mu.iter().enumerate() {
                        let tj = jj as f64 * dt;
                        let allowed = tilde(m, tk - tj).max(m / 2.0).max(c);
                        best = best.min(allowed);
                    }
                    mu.push(best);
                }
                for (k, &m) in mu.iter().enumerate() {
                    let t = k as f64 * dt;
                    let bound = beta.eval(mu0, t).max(nu.eval(c)) * (1.0 + 1e-6) + 1e-9;
                    assert!(m <= bound, "chain exceeds cascade at t={t}: {m} > {bound}");
                }
            }
        }
    }
}
