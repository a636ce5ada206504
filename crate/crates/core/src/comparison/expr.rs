use serde::{Deserialize, Serialize};

use super::table::{log_spaced, Interp, MonotoneTable, TableSpec};
use crate::{CoreError, Result};

/// Expression tree over strictly increasing scalar gain primitives.
///
/// Every node evaluates to 0 at 0 and is strictly increasing on its domain,
/// so any tree is a class-K function; it is class K-infinity exactly when
/// [`KExpr::is_unbounded`] reports so.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KExpr {
    /// c·r with c > 0.
    Linear { c: f64 },
    /// c·r^p with c > 0, p > 0.
    Power { c: f64, p: f64 },
    /// c·(1 − e^{−a·r}): strictly increasing, saturates at c.
    SatExp { c: f64, a: f64 },
    /// Monotone interpolation table.
    Table { table: MonotoneTable },
    /// outer ∘ inner.
    Compose { outer: Box<KExpr>, inner: Box<KExpr> },
    /// Pointwise maximum.
    Max { left: Box<KExpr>, right: Box<KExpr> },
}

impl KExpr {
    fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self {
            KExpr::Linear { c } => c * r,
            KExpr::Power { c, p } => c * r.powf(*p),
            KExpr::SatExp { c, a } => c * (1.0 - (-a * r).exp()),
            KExpr::Table { table } => table.eval(r),
            KExpr::Compose { outer, inner } => outer.eval(inner.eval(r)),
            KExpr::Max { left, right } => left.eval(r).max(right.eval(r)),
        }
    }

    fn is_unbounded(&self) -> bool {
        match self {
            KExpr::Linear { .. } | KExpr::Power { .. } => true,
            KExpr::SatExp { .. } => false,
            KExpr::Table { table } => table.unbounded(),
            KExpr::Compose { outer, inner } => outer.is_unbounded() && inner.is_unbounded(),
            KExpr::Max { left, right } => left.is_unbounded() || right.is_unbounded(),
        }
    }
}

/// A class-K (optionally K-infinity) comparison function.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComparisonFn {
    expr: KExpr,
}

/// Knot layout for numerically constructed inverses.
#[derive(Clone, Debug)]
pub struct InvertSpec {
    pub knots: usize,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for InvertSpec {
    fn default() -> Self {
        Self {
            knots: 1025,
            r_min: 1e-9,
            r_max: 1e6,
        }
    }
}

impl ComparisonFn {
    pub fn linear(c: f64) -> Self {
        assert!(c > 0.0 && c.is_finite(), "linear gain needs c > 0");
        Self {
            expr: KExpr::Linear { c },
        }
    }

    pub fn identity() -> Self {
        Self::linear(1.0)
    }

    pub fn power(c: f64, p: f64) -> Self {
        assert!(c > 0.0 && p > 0.0, "power gain needs c > 0, p > 0");
        Self {
            expr: KExpr::Power { c, p },
        }
    }

    /// c·(1 − e^{−a·r}): class K but not K-infinity.
    pub fn sat_exp(c: f64, a: f64) -> Self {
        assert!(c > 0.0 && a > 0.0, "saturating gain needs c > 0, a > 0");
        Self {
            expr: KExpr::SatExp { c, a },
        }
    }

    pub fn from_table(table: MonotoneTable) -> Self {
        Self {
            expr: KExpr::Table { table },
        }
    }

    /// Sample a scalar function into a table-backed comparison function.
    pub fn from_samples(f: impl Fn(f64) -> f64, spec: &TableSpec) -> Result<Self> {
        Ok(Self::from_table(MonotoneTable::sample(f, spec)?))
    }

    pub fn expr(&self) -> &KExpr {
        &self.expr
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.expr.eval(r)
    }

    pub fn is_unbounded(&self) -> bool {
        self.expr.is_unbounded()
    }

    /// self ∘ inner; folds pure linear/power pairs into closed form.
    pub fn compose(&self, inner: &ComparisonFn) -> ComparisonFn {
        let expr = match (&self.expr, &inner.expr) {
            (KExpr::Linear { c }, KExpr::Linear { c: d }) => KExpr::Linear { c: c * d },
            (KExpr::Linear { c }, KExpr::Power { c: d, p }) => KExpr::Power { c: c * d, p: *p },
            (KExpr::Power { c, p }, KExpr::Linear { c: d }) => KExpr::Power {
                c: c * d.powf(*p),
                p: *p,
            },
            (KExpr::Power { c, p }, KExpr::Power { c: d, p: q }) => KExpr::Power {
                c: c * d.powf(*p),
                p: p * q,
            },
            (KExpr::Linear { c }, g) if *c == 1.0 => g.clone(),
            (f, KExpr::Linear { c }) if *c == 1.0 => f.clone(),
            (f, g) => KExpr::Compose {
                outer: Box::new(f.clone()),
                inner: Box::new(g.clone()),
            },
        };
        ComparisonFn { expr }
    }

    /// Pointwise maximum with another gain.
    pub fn max(&self, other: &ComparisonFn) -> ComparisonFn {
        ComparisonFn {
            expr: KExpr::Max {
                left: Box::new(self.expr.clone()),
                right: Box::new(other.expr.clone()),
            },
        }
    }

    /// c·f(r).
    pub fn scale(&self, c: f64) -> ComparisonFn {
        ComparisonFn::linear(c).compose(self)
    }

    /// max{f(r), r}: the standard trick to make a decay envelope dominate
    /// the identity.
    pub fn premajorize_identity(&self) -> ComparisonFn {
        self.max(&ComparisonFn::identity())
    }

    /// Inverse of a class K-infinity gain. Closed forms invert symbolically,
    /// tables swap axes, and everything else falls back to a sampled table
    /// using the default [`InvertSpec`] resolution.
    pub fn invert(&self) -> Result<ComparisonFn> {
        self.invert_with(&InvertSpec::default())
    }

    pub fn invert_with(&self, spec: &InvertSpec) -> Result<ComparisonFn> {
        if !self.is_unbounded() {
            return Err(CoreError::NotInvertible(
                "function is not class K∞ (use invert_on with a range cap)".into(),
            ));
        }
        self.invert_unchecked(spec)
    }

    fn invert_unchecked(&self, spec: &InvertSpec) -> Result<ComparisonFn> {
        let expr = match &self.expr {
            KExpr::Linear { c } => KExpr::Linear { c: 1.0 / c },
            KExpr::Power { c, p } => KExpr::Power {
                c: c.powf(-1.0 / p),
                p: 1.0 / p,
            },
            KExpr::Table { table } => KExpr::Table {
                table: table.inverse(),
            },
            KExpr::Compose { outer, inner } => {
                // (f ∘ g)⁻¹ = g⁻¹ ∘ f⁻¹; the outer function is inverted
                // over the image of the inner one, so sampled fallbacks
                // cover the right interval.
                let gi = ComparisonFn {
                    expr: (**inner).clone(),
                };
                let outer_spec = InvertSpec {
                    knots: spec.knots,
                    r_min: gi.eval(spec.r_min).max(1e-300),
                    r_max: gi.eval(spec.r_max),
                };
                let fo = ComparisonFn {
                    expr: (**outer).clone(),
                }
                .invert_unchecked(&outer_spec)?;
                let gi = gi.invert_unchecked(spec)?;
                return Ok(gi.compose(&fo));
            }
            _ => {
                // Max (and any future non-symbolic node): sample and swap.
                // Log-log interpolation keeps power-law branches exact away
                // from crossover kinks.
                let rs = log_spaced(spec.knots, spec.r_min, spec.r_max);
                let vs: Vec<f64> = rs.iter().map(|&r| self.eval(r)).collect();
                let table = MonotoneTable::from_knots(rs, vs, true, Interp::LogLog)?;
                KExpr::Table {
                    table: table.inverse(),
                }
            }
        };
        Ok(ComparisonFn { expr })
    }

    /// Inverse restricted to the value range [0, range_cap]. Works for any
    /// class-K gain whose supremum exceeds the cap.
    pub fn invert_on(&self, range_cap: f64, knots: usize) -> Result<ComparisonFn> {
        assert!(range_cap > 0.0);
        let mut r_hi = 1.0;
        let mut tries = 0;
        while self.eval(r_hi) < range_cap {
            r_hi *= 2.0;
            tries += 1;
            if tries > 2000 {
                return Err(CoreError::NotInvertible(format!(
                    "range cap {range_cap} exceeds the function's supremum"
                )));
            }
        }
        let rs = log_spaced(knots, r_hi * 1e-9, r_hi);
        let vs: Vec<f64> = rs.iter().map(|&r| self.eval(r)).collect();
        let table = MonotoneTable::from_knots(rs, vs, false, Interp::Linear)?;
        Ok(ComparisonFn::from_table(table.inverse()))
    }

    /// Check the class-K contract on a probe grid: zero at zero, strictly
    /// increasing between adjacent probes.
    pub fn validate_class_k(&self, r_max: f64) -> Result<()> {
        if self.eval(0.0) != 0.0 {
            return Err(CoreError::InvalidGain("f(0) != 0".into()));
        }
        let probes = log_spaced(200, r_max * 1e-9, r_max);
        let mut prev_r = 0.0;
        let mut prev_v = 0.0;
        for &r in &probes {
            let v = self.eval(r);
            if !v.is_finite() || v <= prev_v {
                return Err(CoreError::InvalidGain(format!(
                    "not strictly increasing between r={prev_r} and r={r} (values {prev_v}, {v})"
                )));
            }
            prev_r = r;
            prev_v = v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compose_folds_linear_power() {
        // f(r) = 2r, g(r) = r²: (f∘g)(3) = 18
        let f = ComparisonFn::linear(2.0);
        let g = ComparisonFn::power(1.0, 2.0);
        let fg = f.compose(&g);
        assert_eq!(fg.eval(3.0), 18.0);
        assert!(matches!(fg.expr(), KExpr::Power { c, p } if *c == 2.0 && *p == 2.0));
    }

    #[test]
    fn identity_compose_is_identity_on_grid() {
        let g = ComparisonFn::sat_exp(2.0, 0.7);
        let idg = ComparisonFn::identity().compose(&g);
        for &r in &[0.0, 0.3, 1.7, 9.0] {
            assert_eq!(idg.eval(r), g.eval(r));
        }
    }

    #[test]
    fn table_compose_roundtrip_on_dense_grid() {
        // f(r) = √r and g(r) = r² as tables: ‖(f∘g)(r) − r‖∞ small on [0, 10].
        // The outer table must cover the inner table's range (r² ≤ 100).
        let f = ComparisonFn::from_samples(
            |r| r.sqrt(),
            &TableSpec::on(1e-6, 120.0).with_knots(600),
        )
        .unwrap();
        let g = ComparisonFn::from_samples(|r| r * r, &TableSpec::on(1e-6, 20.0).with_knots(600))
            .unwrap();
        let fg = f.compose(&g);
        let mut worst: f64 = 0.0;
        for i in 0..=1000 {
            let r = 10.0 * i as f64 / 1000.0;
            worst = worst.max((fg.eval(r) - r).abs());
        }
        assert!(worst < 0.02, "worst deviation {worst}");
    }

    #[test]
    fn symbolic_inverses() {
        let f = ComparisonFn::identity();
        assert_eq!(f.invert().unwrap().eval(7.0), 7.0);

        let cube = ComparisonFn::power(1.0, 3.0);
        let inv = cube.invert().unwrap();
        assert!((inv.eval(8.0) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn range_capped_inverse_of_bounded_use() {
        // f(r) = r/2 inverted on [0, 5] is 2r there.
        let f = ComparisonFn::linear(0.5);
        let inv = f.invert_on(5.0, 257).unwrap();
        for &y in &[0.1, 1.0, 2.5, 5.0] {
            assert!((inv.eval(y) - 2.0 * y).abs() < 1e-9, "y={y}");
        }
    }

    #[test]
    fn sat_exp_requires_range_cap() {
        let f = ComparisonFn::sat_exp(3.0, 1.0);
        assert!(f.invert().is_err());
        let inv = f.invert_on(2.0, 513).unwrap();
        // f(f⁻¹(y)) = y on the capped range
        for &y in &[0.2, 1.0, 1.9] {
            assert!((f.eval(inv.eval(y)) - y).abs() < 1e-3, "y={y}");
        }
    }

    #[test]
    fn unboundedness_propagates() {
        let bounded = ComparisonFn::sat_exp(1.0, 1.0);
        let unbounded = ComparisonFn::power(2.0, 0.5);
        assert!(!bounded.is_unbounded());
        assert!(unbounded.is_unbounded());
        assert!(!bounded.compose(&unbounded).is_unbounded());
        assert!(bounded.max(&unbounded).is_unbounded());
    }

    #[test]
    fn serialization_roundtrip() {
        let f = ComparisonFn::linear(2.0)
            .compose(&ComparisonFn::power(1.0, 2.0))
            .max(&ComparisonFn::sat_exp(1.0, 3.0));
        let text = serde_json::to_string(&f).unwrap();
        let back: ComparisonFn = serde_json::from_str(&text).unwrap();
        for &r in &[0.0, 0.5, 2.0, 40.0] {
            assert_eq!(f.eval(r), back.eval(r));
        }
    }
}
