//! Sorting boundaries: strictly increasing piecewise-linear curves `b = z(a)`
//! separating types that take A (below) from those that take B (above).

use serde::{Deserialize, Serialize};

use crate::dist::DensityModel;
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::pwl::PwlConvex;

pub const MIN_SLOPE: f64 = 1e-6;
pub const MAX_SLOPE: f64 = 1e6;
pub const MIN_SPACING: f64 = 1e-6;
pub(crate) const WALL_SNAP: f64 = 1e-12;

/// Which wall of the unit square the boundary ends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Orientation {
    /// ends on `b = 1`
    Top,
    /// ends on `a = 1` below the top
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    knots: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct KnotFile {
    knots: Vec<[f64; 2]>,
}

impl Boundary {
    pub fn new(mut knots: Vec<(f64, f64)>) -> Result<Boundary> {
        if knots.len() < 2 {
            return Err(Error::InvalidBoundary("need at least two knots".into()));
        }
        for &(a, b) in &knots {
            if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
                return Err(Error::InvalidBoundary(format!("knot ({a}, {b}) outside the unit square")));
            }
        }
        for w in knots.windows(2) {
            let (da, db) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            if !(da >= MIN_SPACING) || !(db > 0.0) {
                return Err(Error::InvalidBoundary(format!(
                    "knots ({}, {}) and ({}, {}) are not strictly increasing with spacing ≥ {MIN_SPACING}",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
            let s = db / da;
            if !(MIN_SLOPE..=MAX_SLOPE).contains(&s) {
                return Err(Error::InvalidBoundary(format!("slope {s} outside [{MIN_SLOPE}, {MAX_SLOPE}]")));
            }
        }
        let last = knots.last_mut().unwrap();
        if 1.0 - last.0 <= WALL_SNAP {
            last.0 = 1.0;
        }
        if 1.0 - last.1 <= WALL_SNAP {
            last.1 = 1.0;
        }
        if last.0 != 1.0 && last.1 != 1.0 {
            return Err(Error::InvalidBoundary("last knot must lie on a = 1 or b = 1".into()));
        }
        Ok(Boundary { knots })
    }

    /// Line of slope `s` from `(a_low, b_low)` to the first wall it meets.
    pub fn linear(a_low: f64, b_low: f64, slope: f64) -> Result<Boundary> {
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(Error::invalid("slope", format!("{slope} must be positive")));
        }
        let b_end = b_low + slope * (1.0 - a_low);
        let end = if b_end <= 1.0 {
            (1.0, b_end)
        } else {
            (a_low + (1.0 - b_low) / slope, 1.0)
        };
        Boundary::new(vec![(a_low, b_low), end])
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn a_low(&self) -> f64 {
        self.knots[0].0
    }

    pub fn b_low(&self) -> f64 {
        self.knots[0].1
    }

    pub fn a_bar(&self) -> f64 {
        self.knots[self.knots.len() - 1].0
    }

    pub fn b_bar(&self) -> f64 {
        self.knots[self.knots.len() - 1].1
    }

    pub fn orientation(&self) -> Orientation {
        if self.b_bar() == 1.0 {
            Orientation::Top
        } else {
            Orientation::Right
        }
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.knots
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect()
    }

    /// `(a0, b0, a1, b1)` for each linear piece.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        self.knots.windows(2).map(|w| (w[0].0, w[0].1, w[1].0, w[1].1))
    }

    fn interp(knots: &[(f64, f64)], x: f64) -> f64 {
        let k = knots.partition_point(|p| p.0 < x);
        if k == 0 {
            return knots[0].1;
        }
        if k == knots.len() {
            return knots[k - 1].1;
        }
        let (x0, y0) = knots[k - 1];
        let (x1, y1) = knots[k];
        if x == x1 {
            return y1;
        }
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// `ẑ(a)`: 0 below `a_low`, `z(a)` on the domain, 1 above `ā`.
    pub fn extended(&self, a: f64) -> f64 {
        if a < self.a_low() {
            0.0
        } else if a > self.a_bar() {
            1.0
        } else {
            Self::interp(&self.knots, a)
        }
    }

    /// `ẑ⁻¹(b)`: 0 below `b_low`, `z⁻¹(b)` on the range, 1 above `b̄`.
    pub fn extended_inverse(&self, b: f64) -> f64 {
        self.inverse().extended(b)
    }

    /// Slope of the piece containing `a` from the left (first piece at `a_low`).
    pub fn slope_left(&self, a: f64) -> f64 {
        let k = self.knots.partition_point(|p| p.0 < a).clamp(1, self.knots.len() - 1);
        let (x0, y0) = self.knots[k - 1];
        let (x1, y1) = self.knots[k];
        (y1 - y0) / (x1 - x0)
    }

    /// The same curve read as `a = z⁻¹(b)`.
    pub fn inverse(&self) -> Boundary {
        Boundary {
            knots: self.knots.iter().map(|&(a, b)| (b, a)).collect(),
        }
    }

    /// Masses of `{a > a_low, b < ẑ(a)}` and `{b > b_low, a < ẑ⁻¹(b)}`.
    pub fn supply_masses(&self, model: &DensityModel) -> (f64, f64) {
        let mut below = 0.0;
        let mut above = 0.0;
        for (a0, b0, a1, b1) in self.segments() {
            below += model
                .moments_convex(&[
                    Point::new(a0, 0.0),
                    Point::new(a1, 0.0),
                    Point::new(a1, b1),
                    Point::new(a0, b0),
                ])
                .mass;
            above += model
                .moments_convex(&[
                    Point::new(0.0, b0),
                    Point::new(a0, b0),
                    Point::new(a1, b1),
                    Point::new(0.0, b1),
                ])
                .mass;
        }
        let (ab, bb) = (self.a_bar(), self.b_bar());
        if ab < 1.0 {
            below += model
                .moments_convex(&[
                    Point::new(ab, 0.0),
                    Point::new(1.0, 0.0),
                    Point::new(1.0, 1.0),
                    Point::new(ab, 1.0),
                ])
                .mass;
        }
        if bb < 1.0 {
            above += model
                .moments_convex(&[
                    Point::new(0.0, bb),
                    Point::new(1.0, bb),
                    Point::new(1.0, 1.0),
                    Point::new(0.0, 1.0),
                ])
                .mass;
        }
        (below, above)
    }

    /// Mass of the excluded rectangle `[0, a_low] × [0, b_low]`.
    pub fn excluded_mass(&self, model: &DensityModel) -> f64 {
        model.cdf_unchecked(self.a_low(), self.b_low())
    }

    pub fn to_toml(&self) -> String {
        let f = KnotFile {
            knots: self.knots.iter().map(|&(a, b)| [a, b]).collect(),
        };
        toml::to_string(&f).expect("knots serialize")
    }

    pub fn from_toml(s: &str) -> Result<Boundary> {
        let f: KnotFile = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        Boundary::new(f.knots.iter().map(|k| (k[0], k[1])).collect())
    }
}

/// Outcome of the feasibility check for a boundary and an A-utility.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub ua_monotone: bool,
    pub ratio_monotone: bool,
    pub slopes_ok: bool,
    pub supply_ok: bool,
    /// `(μ_A − below, μ_B − above)`
    pub slack: (f64, f64),
}

const SHAPE_TOL: f64 = 1e-9;

/// Sub-intervals of `(a_low, ā)` on which both `U_A′` and `z′` are constant,
/// as `(a0, a1, U_A′, z′)`.
pub(crate) fn ratio_pieces(z: &Boundary, ua: &PwlConvex) -> Vec<(f64, f64, f64, f64)> {
    let (lo, hi) = (z.a_low(), z.a_bar());
    let mut xs: Vec<f64> = z.knots().iter().map(|k| k.0).collect();
    xs.extend(ua.kinks().into_iter().filter(|&v| v > lo && v < hi));
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);
    xs.windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            (w[0], w[1], ua.slope_right(mid), z.slope_left(mid))
        })
        .collect()
}

/// Checks that `(z, U_A)` can be implemented by a mechanism that respects
/// the supplies: `U_A′` and `U_A′/z′` non-decreasing and at most 1, slopes
/// finite and positive, and allocated masses within `(μ_A, μ_B)`.
pub fn check_feasible_pair(
    z: &Boundary,
    ua: &PwlConvex,
    model: &DensityModel,
    mu_a: f64,
    mu_b: f64,
) -> FeasibilityReport {
    let lo = z.a_low();
    let ua_slopes = ua.slopes();
    let ua_monotone = ua.is_convex(SHAPE_TOL)
        && ua_slopes.iter().all(|&s| s <= 1.0 + SHAPE_TOL)
        && ua.value(lo) <= SHAPE_TOL
        && (ua.zero_level_end() - lo).abs() <= SHAPE_TOL;
    let pieces = ratio_pieces(z, ua);
    let ratios: Vec<f64> = pieces.iter().map(|p| p.2 / p.3).collect();
    let ratio_monotone = ratios.windows(2).all(|w| w[1] >= w[0] - SHAPE_TOL)
        && ratios.iter().all(|&r| r <= 1.0 + SHAPE_TOL);
    let slopes_ok = z
        .slopes()
        .iter()
        .all(|s| s.is_finite() && (MIN_SLOPE..=MAX_SLOPE).contains(s))
        && pieces.iter().all(|p| p.2.is_finite() && p.2 > 0.0)
        && ua_slopes.iter().all(|s| s.is_finite());
    let (below, above) = z.supply_masses(model);
    let slack = (mu_a - below, mu_b - above);
    let supply_ok = slack.0 >= -SHAPE_TOL && slack.1 >= -SHAPE_TOL;
    FeasibilityReport {
        feasible: ua_monotone && ratio_monotone && slopes_ok && supply_ok,
        ua_monotone,
        ratio_monotone,
        slopes_ok,
        supply_ok,
        slack,
    }
}
