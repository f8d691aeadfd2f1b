//! Market-clearing ordeals: the two-option mechanism that posts undamaged
//! goods at ordeals chosen so both supplies are exhausted.

use serde::Serialize;

use crate::dist::DensityModel;
use crate::error::{Error, Result};
use crate::mechanism::Mechanism;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const MAX_ITER: usize = 200;
/// Residual accepted by [`theorem1_mechanism`].
pub const FULL_ALLOCATION_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClearingResult {
    pub c_a: f64,
    pub c_b: f64,
    pub demand: (f64, f64),
    pub iterations: usize,
    /// largest `|demand − μ|` over the supplies that bind
    pub residual: f64,
    /// unused supply of a good whose ordeal is 0 and still under-demanded
    pub slack: (f64, f64),
}

impl ClearingResult {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("clearing result serializes")
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        wtr.write_record([
            "c_a", "c_b", "demand_a", "demand_b", "iterations", "residual", "slack_a", "slack_b",
        ])
        .map_err(io)?;
        let f = |v: f64| format!("{v:.8e}");
        wtr.write_record([
            f(self.c_a),
            f(self.c_b),
            f(self.demand.0),
            f(self.demand.1),
            self.iterations.to_string(),
            f(self.residual),
            f(self.slack.0),
            f(self.slack.1),
        ])
        .map_err(io)?;
        wtr.flush()?;
        Ok(())
    }
}

pub fn posted_demand(model: &DensityModel, c_a: f64, c_b: f64) -> (f64, f64) {
    Mechanism::posted(c_a, c_b)
        .expect("non-negative ordeals")
        .demand(model)
}

/// Smallest `c` in `[0, 1]` with `demand(c) ≤ target`, for `demand`
/// non-increasing. Returns `(c, demand(c), iterations)`.
fn bisect_down(target: f64, tol: f64, demand: impl Fn(f64) -> f64) -> Result<(f64, f64, usize)> {
    let d0 = demand(0.0);
    if d0 <= target + tol {
        return Ok((0.0, d0, 0));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut d_hi = demand(hi);
    for it in 1..=MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let d = demand(mid);
        if d > target {
            lo = mid;
        } else {
            hi = mid;
            d_hi = d;
        }
        if (d - target).abs() <= tol {
            return Ok((mid, d, it));
        }
        if hi - lo <= f64::EPSILON {
            return Ok((hi, d_hi, it));
        }
    }
    Err(Error::NonConvergence {
        what: "ordeal bisection",
        iterations: MAX_ITER,
        residual: (d_hi - target).abs(),
    })
}

/// Ordeals `(c_A, c_B)` whose posted mechanism demands `(μ_A, μ_B)`.
/// Outer bisection on `c_A` with `c_B` re-cleared for good B at every step;
/// both demands are monotone by gross substitutes.
pub fn market_clearing_ordeals(model: &DensityModel, mu_a: f64, mu_b: f64, tol: f64) -> Result<ClearingResult> {
    for (field, mu) in [("mu_a", mu_a), ("mu_b", mu_b)] {
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::invalid(field, format!("{mu} not in (0, 1]")));
        }
    }
    if mu_a + mu_b > 1.0 + 1e-12 {
        return Err(Error::invalid("mu_a", format!("supplies sum to {} > 1", mu_a + mu_b)));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", format!("{tol} must be positive")));
    }
    let inner_tol = tol * 1e-3;
    let clear_b = |c_a: f64| bisect_down(mu_b, inner_tol, |c_b| posted_demand(model, c_a, c_b).1);
    let demand_a = |c_a: f64| -> f64 {
        match clear_b(c_a) {
            Ok((c_b, _, _)) => posted_demand(model, c_a, c_b).0,
            Err(_) => f64::NAN,
        }
    };
    let (c_a, _, iterations) = bisect_down(mu_a, 0.5 * tol, |c| {
        let d = demand_a(c);
        if d.is_nan() {
            f64::INFINITY
        } else {
            d
        }
    })?;
    let (c_b, _, _) = clear_b(c_a)?;
    let demand = posted_demand(model, c_a, c_b);
    let binds_a = c_a > 0.0 || demand.0 >= mu_a - tol;
    let binds_b = c_b > 0.0 || demand.1 >= mu_b - tol;
    let mut residual = 0.0f64;
    if binds_a {
        residual = residual.max((demand.0 - mu_a).abs());
    }
    if binds_b {
        residual = residual.max((demand.1 - mu_b).abs());
    }
    let slack = (
        if binds_a { 0.0 } else { mu_a - demand.0 },
        if binds_b { 0.0 } else { mu_b - demand.1 },
    );
    if residual > tol {
        return Err(Error::NonConvergence {
            what: "market clearing",
            iterations,
            residual,
        });
    }
    Ok(ClearingResult {
        c_a,
        c_b,
        demand,
        iterations,
        residual,
        slack,
    })
}

/// Undamaged A and B at the market-clearing ordeals.
pub fn theorem1_mechanism(model: &DensityModel, mu_a: f64, mu_b: f64) -> Result<Mechanism> {
    let r = market_clearing_ordeals(model, mu_a, mu_b, DEFAULT_TOL)?;
    if r.residual > FULL_ALLOCATION_TOL {
        return Err(Error::Infeasible(format!("supplies not exhausted: residual {:.3e}", r.residual)));
    }
    Mechanism::posted(r.c_a, r.c_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Posted-ordeal demand for A on the uniform square by midpoint sums:
    /// A-buyers have `a > c_a` and `b < a − c_a + c_b`.
    fn uniform_demand_a(c_a: f64, c_b: f64) -> f64 {
        let n = 200_000;
        let h = (1.0 - c_a) / n as f64;
        (0..n)
            .map(|i| {
                let a = c_a + (i as f64 + 0.5) * h;
                (a - c_a + c_b).min(1.0) * h
            })
            .sum()
    }

    #[test]
    fn uniform_closed_forms() {
        let u = DensityModel::uniform();
        let r = market_clearing_ordeals(&u, 0.25, 0.25, 1e-5).unwrap();
        assert_abs_diff_eq!(r.c_a, 0.5f64.sqrt(), epsilon = 1e-4);
        assert_abs_diff_eq!(r.c_b, 0.5f64.sqrt(), epsilon = 1e-4);
        assert!(r.residual <= 1e-5);
        let r = market_clearing_ordeals(&u, 0.5, 0.5, 1e-6).unwrap();
        assert_eq!((r.c_a, r.c_b), (0.0, 0.0));
        let r = market_clearing_ordeals(&u, 0.375, 0.375, 1e-6).unwrap();
        assert_abs_diff_eq!(r.c_a, 0.5, epsilon = 1e-5);
        assert_abs_diff_eq!(r.c_b, 0.5, epsilon = 1e-5);
    }

    #[test]
    fn asymmetric_supplies() {
        let u = DensityModel::uniform();
        let r = market_clearing_ordeals(&u, 0.1, 0.4, 1e-6).unwrap();
        assert!(r.c_a > r.c_b);
        assert_abs_diff_eq!(uniform_demand_a(r.c_a, r.c_b), 0.1, epsilon = 1e-4);
        assert_abs_diff_eq!(uniform_demand_a(r.c_b, r.c_a), 0.4, epsilon = 1e-4);
    }

    #[test]
    fn symmetric_model_gives_equal_ordeals() {
        let m = DensityModel::from_fn(40, |a, b| 1.0 + a * b + (a - b).powi(2)).unwrap();
        let r = market_clearing_ordeals(&m, 0.3, 0.3, 1e-7).unwrap();
        assert_abs_diff_eq!(r.c_a, r.c_b, epsilon = 1e-5);
    }

    #[test]
    fn posted_menus_at_clearing() {
        let m = theorem1_mechanism(&DensityModel::uniform(), 0.25, 0.25).unwrap();
        assert_eq!(m.menu_a().len(), 1);
        assert_eq!(m.menu_a()[0].quality, 1.0);
        assert_abs_diff_eq!(m.menu_a()[0].ordeal, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-4);
        assert_abs_diff_eq!(m.menu_b()[0].ordeal, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-4);
        assert_abs_diff_eq!(m.direct_welfare(&DensityModel::uniform()), 0.077411, epsilon = 1e-4);
    }

    #[test]
    fn full_allocation_has_zero_b_ordeal() {
        // μ_A + μ_B = 1: every participating type is served, B posts no ordeal
        let r = market_clearing_ordeals(&DensityModel::uniform(), 0.1, 0.9, 1e-6).unwrap();
        assert!(r.c_b < 1e-5);
        assert_eq!(r.slack, (0.0, 0.0));
        assert!(r.residual <= 1e-6);
    }

    #[test]
    fn rejects_bad_supplies() {
        let u = DensityModel::uniform();
        assert!(market_clearing_ordeals(&u, 0.0, 0.3, 1e-6).is_err());
        assert!(market_clearing_ordeals(&u, 0.7, 0.4, 1e-6).is_err());
        assert!(market_clearing_ordeals(&u, 0.2, 0.3, 0.0).is_err());
    }

    #[test]
    fn exports() {
        let r = market_clearing_ordeals(&DensityModel::uniform(), 0.25, 0.25, 1e-6).unwrap();
        assert!(r.to_toml().contains("c_a = 0.707"));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn clears_and_certifies_substitutes(mu_a in 0.05f64..0.6, share in 0.1f64..0.9, tilt in 0.0f64..2.0) {
                let mu_b = (1.0 - mu_a) * share * 0.95;
                let model = DensityModel::from_fn(24, |a, b| 0.3 + tilt * a + b * b).unwrap();
                let r = market_clearing_ordeals(&model, mu_a, mu_b, 1e-6).unwrap();
                prop_assert!((r.demand.0 - mu_a).abs() <= 1e-6);
                prop_assert!((r.demand.1 - mu_b).abs() <= 1e-6);
                let d = 1e-3;
                let up = posted_demand(&model, r.c_a + d, r.c_b);
                prop_assert!(up.0 < r.demand.0);
                prop_assert!(up.1 >= r.demand.1 - 1e-12);
            }
        }
    }
}
