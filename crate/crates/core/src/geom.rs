//! Small convex-polygon toolkit used for exact integration of
//! piecewise-constant densities over polygonal regions.

use std::ops::{Add, AddAssign, Mul};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn swapped(self) -> Self {
        Point::new(self.y, self.x)
    }
}

/// Zeroth and first moments of a measure restricted to a region:
/// `mass = ∫ f`, `ma = ∫ a f`, `mb = ∫ b f`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub mass: f64,
    pub ma: f64,
    pub mb: f64,
}

impl Moments {
    pub fn swapped(self) -> Self {
        Moments {
            mass: self.mass,
            ma: self.mb,
            mb: self.ma,
        }
    }
}

impl Add for Moments {
    type Output = Moments;
    fn add(self, o: Moments) -> Moments {
        Moments {
            mass: self.mass + o.mass,
            ma: self.ma + o.ma,
            mb: self.mb + o.mb,
        }
    }
}

impl AddAssign for Moments {
    fn add_assign(&mut self, o: Moments) {
        self.mass += o.mass;
        self.ma += o.ma;
        self.mb += o.mb;
    }
}

impl Mul<f64> for Moments {
    type Output = Moments;
    fn mul(self, k: f64) -> Moments {
        Moments {
            mass: self.mass * k,
            ma: self.ma * k,
            mb: self.mb * k,
        }
    }
}

/// Area moments of a simple polygon (either orientation).
pub fn polygon_moments(poly: &[Point]) -> Moments {
    let n = poly.len();
    if n < 3 {
        return Moments::default();
    }
    let (mut area2, mut mx, mut my) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let cross = p.x * q.y - q.x * p.y;
        area2 += cross;
        mx += (p.x + q.x) * cross;
        my += (p.y + q.y) * cross;
    }
    let sign = if area2 < 0.0 { -1.0 } else { 1.0 };
    Moments {
        mass: sign * area2 / 2.0,
        ma: sign * mx / 6.0,
        mb: sign * my / 6.0,
    }
}

/// Axis-aligned half-plane used by the clipping routines.
#[derive(Debug, Clone, Copy)]
pub enum AxisBound {
    XMin(f64),
    XMax(f64),
    YMin(f64),
    YMax(f64),
}

impl AxisBound {
    fn inside(self, p: Point) -> bool {
        match self {
            AxisBound::XMin(v) => p.x >= v,
            AxisBound::XMax(v) => p.x <= v,
            AxisBound::YMin(v) => p.y >= v,
            AxisBound::YMax(v) => p.y <= v,
        }
    }

    // Intersection pins the clipped coordinate exactly so that later
    // equality tests against cell edges are reliable.
    fn cut(self, p: Point, q: Point) -> Point {
        match self {
            AxisBound::XMin(v) | AxisBound::XMax(v) => {
                let t = (v - p.x) / (q.x - p.x);
                Point::new(v, p.y + t * (q.y - p.y))
            }
            AxisBound::YMin(v) | AxisBound::YMax(v) => {
                let t = (v - p.y) / (q.y - p.y);
                Point::new(p.x + t * (q.x - p.x), v)
            }
        }
    }
}

/// Sutherland-Hodgman clip of a polygon against one axis-aligned half-plane.
pub fn clip_axis(poly: &[Point], bound: AxisBound) -> Vec<Point> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 2);
    if n == 0 {
        return out;
    }
    for i in 0..n {
        let cur = poly[i];
        let prev = poly[(i + n - 1) % n];
        let (ci, pi) = (bound.inside(cur), bound.inside(prev));
        if ci {
            if !pi {
                out.push(bound.cut(prev, cur));
            }
            out.push(cur);
        } else if pi {
            out.push(bound.cut(prev, cur));
        }
    }
    out
}

pub fn clip_rect(poly: &[Point], x0: f64, x1: f64, y0: f64, y1: f64) -> Vec<Point> {
    let p = clip_axis(poly, AxisBound::XMin(x0));
    let p = clip_axis(&p, AxisBound::XMax(x1));
    let p = clip_axis(&p, AxisBound::YMin(y0));
    clip_axis(&p, AxisBound::YMax(y1))
}

/// Half-plane `nx·x + ny·y ≤ c`.
#[derive(Debug, Clone, Copy)]
pub struct HalfPlane {
    pub nx: f64,
    pub ny: f64,
    pub c: f64,
}

impl HalfPlane {
    fn eval(&self, p: Point) -> f64 {
        self.nx * p.x + self.ny * p.y - self.c
    }
}

pub fn clip_halfplane(poly: &[Point], h: &HalfPlane) -> Vec<Point> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let cur = poly[i];
        let prev = poly[(i + n - 1) % n];
        let (dc, dp) = (h.eval(cur), h.eval(prev));
        let cut = || {
            let t = dp / (dp - dc);
            Point::new(prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y))
        };
        if dc <= 0.0 {
            if dp > 0.0 {
                out.push(cut());
            }
            out.push(cur);
        } else if dp <= 0.0 {
            out.push(cut());
        }
    }
    out
}

/// Half-planes whose intersection is the given counter-clockwise convex polygon.
pub fn halfplanes_of(poly: &[Point]) -> Vec<HalfPlane> {
    let n = poly.len();
    let mut area2 = 0.0;
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        area2 += p.x * q.y - q.x * p.y;
    }
    let orient = if area2 >= 0.0 { 1.0 } else { -1.0 };
    (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            // outward normal for a CCW polygon is (dy, -dx)
            let (nx, ny) = (orient * (q.y - p.y), -orient * (q.x - p.x));
            HalfPlane {
                nx,
                ny,
                c: nx * p.x + ny * p.y,
            }
        })
        .collect()
}

pub fn clip_convex(poly: &[Point], planes: &[HalfPlane]) -> Vec<Point> {
    let mut cur = poly.to_vec();
    for h in planes {
        if cur.is_empty() {
            break;
        }
        cur = clip_halfplane(&cur, h);
    }
    cur
}

/// Parameter interval `[t0, t1] ⊂ [0, 1]` of the segment `p + t (q - p)`
/// lying inside the convex region, if any.
pub fn clip_segment(p: Point, q: Point, planes: &[HalfPlane]) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for h in planes {
        let dp = h.eval(p);
        let dd = h.nx * (q.x - p.x) + h.ny * (q.y - p.y);
        if dd.abs() < 1e-300 {
            if dp > 0.0 {
                return None;
            }
            continue;
        }
        let t = -dp / dd;
        if dd > 0.0 {
            t1 = t1.min(t);
        } else {
            t0 = t0.max(t);
        }
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

pub fn point_in_convex(p: Point, planes: &[HalfPlane], tol: f64) -> bool {
    planes.iter().all(|h| h.eval(p) <= tol)
}

/// Vertical extent of a polygon at abscissa `x`, taken over vertices that sit
/// exactly on `x` and over edges crossing it.
pub fn vertical_section(poly: &[Point], x: f64) -> Option<(f64, f64)> {
    let n = poly.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        if p.x == x {
            lo = lo.min(p.y);
            hi = hi.max(p.y);
        }
        if (p.x < x && q.x > x) || (p.x > x && q.x < x) {
            let y = p.y + (x - p.x) / (q.x - p.x) * (q.y - p.y);
            lo = lo.min(y);
            hi = hi.max(y);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Composite Simpson rule on one panel; exact for quadratics.
pub fn simpson(f0: f64, fm: f64, f1: f64, width: f64) -> f64 {
    width * (f0 + 4.0 * fm + f1) / 6.0
}
