//! Piecewise-linear convex non-decreasing functions on `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SHAPE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwlConvex {
    /// `(v, U(v))`, `v` strictly increasing from 0 to 1
    knots: Vec<(f64, f64)>,
}

impl PwlConvex {
    pub fn from_knots(knots: Vec<(f64, f64)>) -> Result<PwlConvex> {
        if knots.len() < 2 {
            return Err(Error::invalid("knots", "need at least two knots"));
        }
        if knots[0].0 != 0.0 || knots[knots.len() - 1].0 != 1.0 {
            return Err(Error::invalid("knots", "must span [0, 1]"));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::invalid("knots", "abscissae must increase strictly"));
            }
        }
        if knots.iter().any(|k| !k.1.is_finite() || k.1 < -SHAPE_TOL) {
            return Err(Error::invalid("knots", "utility must be finite and non-negative"));
        }
        let f = PwlConvex { knots };
        let slopes = f.slopes();
        if slopes[0] < -SHAPE_TOL {
            return Err(Error::invalid("knots", "function must be non-decreasing"));
        }
        for w in slopes.windows(2) {
            if w[1] < w[0] - SHAPE_TOL {
                return Err(Error::invalid("knots", "function must be convex"));
            }
        }
        Ok(f)
    }

    /// Builds `U` from its value at 0 and slopes on consecutive intervals
    /// `[breaks[i], breaks[i+1]]`, where `breaks` runs from 0 to 1.
    pub fn from_slopes(value0: f64, breaks: &[f64], slopes: &[f64]) -> Result<PwlConvex> {
        if breaks.len() != slopes.len() + 1 {
            return Err(Error::invalid("slopes", "need one slope per interval"));
        }
        let mut knots = Vec::with_capacity(breaks.len());
        let mut u = value0;
        knots.push((breaks[0], u));
        for (i, s) in slopes.iter().enumerate() {
            u += s * (breaks[i + 1] - breaks[i]);
            knots.push((breaks[i + 1], u));
        }
        Ok(PwlConvex::from_knots(knots)?.simplified())
    }

    pub fn zero() -> PwlConvex {
        PwlConvex {
            knots: vec![(0.0, 0.0), (1.0, 0.0)],
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.knots
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect()
    }

    /// `(v0, v1, slope)` for each linear piece.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.knots
            .windows(2)
            .map(|w| (w[0].0, w[1].0, (w[1].1 - w[0].1) / (w[1].0 - w[0].0)))
    }

    fn locate(&self, v: f64) -> usize {
        // index of the segment containing v, right-closed except the first
        let k = self.knots.partition_point(|p| p.0 < v);
        k.saturating_sub(1).min(self.knots.len() - 2)
    }

    pub fn value(&self, v: f64) -> f64 {
        let v = v.clamp(0.0, 1.0);
        let i = self.locate(v);
        let (v0, u0) = self.knots[i];
        let (v1, u1) = self.knots[i + 1];
        if v == v1 {
            return u1;
        }
        u0 + (u1 - u0) * (v - v0) / (v1 - v0)
    }

    /// Slope on the piece immediately to the left of `v` (first piece at 0).
    pub fn slope_left(&self, v: f64) -> f64 {
        let i = self.locate(v);
        let (v0, u0) = self.knots[i];
        let (v1, u1) = self.knots[i + 1];
        (u1 - u0) / (v1 - v0)
    }

    /// Slope on the piece immediately to the right of `v` (last piece at 1).
    pub fn slope_right(&self, v: f64) -> f64 {
        let k = self.knots.partition_point(|p| p.0 <= v);
        let i = k.saturating_sub(1).min(self.knots.len() - 2);
        let (v0, u0) = self.knots[i];
        let (v1, u1) = self.knots[i + 1];
        (u1 - u0) / (v1 - v0)
    }

    pub fn max_slope(&self) -> f64 {
        self.slopes().into_iter().fold(0.0, f64::max)
    }

    /// Merges adjacent pieces whose slopes agree to within 1e-12.
    pub fn simplified(&self) -> PwlConvex {
        let mut out: Vec<(f64, f64)> = vec![self.knots[0]];
        for k in 1..self.knots.len() {
            let p = self.knots[k];
            if out.len() >= 2 && k < self.knots.len() {
                let (v0, u0) = out[out.len() - 2];
                let (v1, u1) = out[out.len() - 1];
                let s_prev = (u1 - u0) / (v1 - v0);
                let s_next = (p.1 - u1) / (p.0 - v1);
                if (s_prev - s_next).abs() <= 1e-12 * s_prev.abs().max(1.0) {
                    out.pop();
                }
            }
            out.push(p);
        }
        PwlConvex { knots: out }
    }

    /// `sup { v : U(v) ≤ 0 }`, the last point with zero utility.
    pub fn zero_level_end(&self) -> f64 {
        self.inverse_sup(0.0)
    }

    /// `sup { v ∈ [0, 1] : U(v) ≤ u }`; 0 when `U(0) > u`.
    pub fn inverse_sup(&self, u: f64) -> f64 {
        let last = self.knots[self.knots.len() - 1];
        if last.1 <= u {
            return 1.0;
        }
        if self.knots[0].1 > u {
            return 0.0;
        }
        // first knot strictly above u; the crossing lies on the piece before it
        let k = self.knots.iter().position(|p| p.1 > u).unwrap();
        let (v0, u0) = self.knots[k - 1];
        let (v1, u1) = self.knots[k];
        let v = v0 + (u - u0) * (v1 - v0) / (u1 - u0);
        v.clamp(v0, v1)
    }

    pub fn is_convex(&self, tol: f64) -> bool {
        self.slopes().windows(2).all(|w| w[1] >= w[0] - tol)
    }

    pub fn is_nondecreasing(&self, tol: f64) -> bool {
        self.slopes().iter().all(|s| *s >= -tol)
    }

    /// Knot abscissae in `(0, 1)`.
    pub fn kinks(&self) -> Vec<f64> {
        self.knots[1..self.knots.len() - 1].iter().map(|k| k.0).collect()
    }
}
