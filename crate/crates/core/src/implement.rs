//! Implementing a given boundary: the welfare-maximizing A-utility, its
//! companion B-utility, the menus that realize them, and welfare written as
//! a one-dimensional integral along the boundary.

use serde::Serialize;

use crate::boundary::{ratio_pieces, Boundary, Orientation, MIN_SPACING, WALL_SNAP};
use crate::dist::DensityModel;
use crate::error::{Error, Result};
use crate::geom::{simpson, Point};
use crate::mechanism::{Mechanism, MenuOption};
use crate::pwl::PwlConvex;

const SHAPE_TOL: f64 = 1e-9;

/// Right-continuous step function on `[breaks[0], breaks[last]]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFunction {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn value(&self, x: f64) -> f64 {
        let k = self.breaks.partition_point(|b| *b <= x);
        self.values[k.saturating_sub(1).min(self.values.len() - 1)]
    }
}

/// Product of the upward slope jumps of `z` up to each piece, starting at 1.
pub fn m_profile(z: &Boundary) -> StepFunction {
    let slopes = z.slopes();
    let mut values = Vec::with_capacity(slopes.len());
    let mut m = 1.0;
    for (k, s) in slopes.iter().enumerate() {
        if k > 0 {
            m *= (s / slopes[k - 1]).max(1.0);
        }
        values.push(m);
    }
    StepFunction {
        breaks: z.knots().iter().map(|k| k.0).collect(),
        values,
    }
}

/// Normalizing constant `1 / max(m(ā), m(ā) / z′(ā⁻))`.
pub fn c_scale(z: &Boundary) -> f64 {
    let m = m_profile(z);
    let m_last = *m.values.last().unwrap();
    let s_last = *z.slopes().last().unwrap();
    1.0 / m_last.max(m_last / s_last)
}

/// The A-utility that maximizes welfare among those implementing `z`:
/// slope 0 below `a_low`, `m · c` along the boundary, 1 above `ā`.
pub fn optimal_ua(z: &Boundary) -> PwlConvex {
    let m = m_profile(z);
    let c = c_scale(z);
    let mut breaks = vec![0.0];
    let mut slopes = Vec::new();
    if z.a_low() > 0.0 {
        breaks.push(z.a_low());
        slopes.push(0.0);
    }
    for (k, v) in m.values.iter().enumerate() {
        breaks.push(m.breaks[k + 1]);
        slopes.push(v * c);
    }
    if z.a_bar() < 1.0 {
        breaks.push(1.0);
        slopes.push(1.0);
    }
    PwlConvex::from_slopes(0.0, &breaks, &slopes).expect("optimal profile is convex")
}

/// The B-utility paired with `(z, U_A)`: `U_B′(z(a)) = U_A′(a) / z′(a)`,
/// zero up to `b_low`, and slope 1 above `b̄`.
pub fn ub_from(z: &Boundary, ua: &PwlConvex) -> Result<PwlConvex> {
    let pieces = ratio_pieces(z, ua);
    let mut breaks = vec![0.0];
    let mut slopes = Vec::new();
    if z.b_low() > 0.0 {
        breaks.push(z.b_low());
        slopes.push(0.0);
    }
    let mut prev = 0.0f64;
    for &(_, a1, ua_slope, z_slope) in &pieces {
        let r = ua_slope / z_slope;
        if r < prev - SHAPE_TOL {
            return Err(Error::Infeasible(format!(
                "U_A′/z′ falls from {prev:.6} to {r:.6} near a = {a1:.6}; U_B would not be convex"
            )));
        }
        if r > 1.0 + SHAPE_TOL {
            return Err(Error::Infeasible(format!("B-quality {r:.6} exceeds 1 near a = {a1:.6}")));
        }
        prev = prev.max(r);
        breaks.push(z.extended(a1));
        slopes.push(r.min(1.0));
    }
    if z.b_bar() < 1.0 {
        breaks.push(1.0);
        slopes.push(1.0);
    }
    PwlConvex::from_slopes(0.0, &breaks, &slopes)
}

fn menu_of(u: &PwlConvex) -> Vec<MenuOption> {
    let mut menu: Vec<MenuOption> = u
        .segments()
        .filter(|s| s.2 > 1e-15)
        .map(|(v0, _, s)| MenuOption {
            quality: s.min(1.0),
            ordeal: (v0 * s - u.value(v0)).max(0.0),
        })
        .collect();
    if menu.is_empty() {
        menu.push(MenuOption {
            quality: 0.0,
            ordeal: 0.0,
        });
    }
    menu
}

/// One option per linear piece of each indirect utility: quality is the
/// slope and ordeal the intercept that makes the piece tangent.
pub fn mechanism_from(z: &Boundary, ua: &PwlConvex) -> Result<Mechanism> {
    if !ua.is_convex(SHAPE_TOL) || ua.max_slope() > 1.0 + SHAPE_TOL {
        return Err(Error::Infeasible("U_A must be convex with slopes at most 1".into()));
    }
    let ub = ub_from(z, ua)?;
    Mechanism::new(menu_of(ua), menu_of(&ub))
}

/// Drops knots that are collinear with their neighbours or closer than the
/// minimum spacing to the previous one.
fn clean_knots(raw: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
    for (i, p) in raw.iter().enumerate() {
        let is_last = i + 1 == raw.len();
        if let Some(q) = out.last() {
            if p.0 - q.0 < MIN_SPACING {
                if is_last {
                    out.pop();
                } else {
                    continue;
                }
            }
        }
        if out.len() >= 2 {
            let (a0, b0) = out[out.len() - 2];
            let (a1, b1) = out[out.len() - 1];
            let s0 = (b1 - b0) / (a1 - a0);
            let s1 = (p.1 - b1) / (p.0 - a1);
            if (s0 - s1).abs() <= 1e-9 * s0.max(s1) {
                out.pop();
            }
        }
        out.push(*p);
    }
    out
}

/// Recovers the indifference curve `U_A(a) = U_B(z(a))` of a mechanism.
pub fn extract_boundary(mech: &Mechanism) -> Result<Boundary> {
    let (ua, ub) = (mech.ua(), mech.ub());
    let a_low = ua.zero_level_end();
    let b_low = ub.zero_level_end();
    if a_low >= 1.0 {
        return Err(Error::Degenerate("no type strictly gains from any A-option".into()));
    }
    if b_low >= 1.0 {
        return Err(Error::Degenerate("no type strictly gains from any B-option".into()));
    }
    let mut xs = vec![a_low, 1.0];
    xs.extend(ua.kinks().into_iter().filter(|&v| v > a_low));
    for &(_, u) in ub.knots() {
        if u > 0.0 {
            let v = ua.inverse_sup(u);
            if v > a_low && v < 1.0 {
                xs.push(v);
            }
        }
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);
    let mut raw = Vec::with_capacity(xs.len());
    for x in xs {
        let mut b = ub.inverse_sup(ua.value(x));
        if b >= 1.0 - WALL_SNAP {
            b = 1.0;
        }
        raw.push((x, b));
        if b >= 1.0 {
            break;
        }
    }
    Boundary::new(clean_knots(raw)).map_err(|e| Error::Degenerate(format!("extracted curve: {e}")))
}

/// `∫ F` along the straight path `p0 → p1`, in units of the a-coordinate
/// (or of b when the path is vertical). Exact for piecewise-constant
/// densities: `F` is quadratic between breakpoints.
fn path_integral(model: &DensityModel, p0: Point, p1: Point, len: f64) -> f64 {
    let mut ts = model.path_breakpoints(p0, p1);
    ts.push(0.0);
    ts.push(1.0);
    ts.sort_by(|a, b| a.total_cmp(b));
    ts.dedup();
    let at = |t: f64| {
        model.cdf_unchecked(p0.x + t * (p1.x - p0.x), p0.y + t * (p1.y - p0.y))
    };
    let mut s = 0.0;
    let mut f0 = at(0.0);
    for w in ts.windows(2) {
        let f1 = at(w[1]);
        s += simpson(f0, at(0.5 * (w[0] + w[1])), f1, w[1] - w[0]);
        f0 = f1;
    }
    s * len
}

/// Welfare of the mechanism implementing `(z, U_A)` computed along the
/// boundary: `max(U_A(1), U_B(1)) − ∫ U_A′(a) F(a, ẑ(a)) da`, minus
/// `∫_{b̄}^1 U_B′(b) F(1, b) db` when the boundary ends on `a = 1`.
pub fn wstar_welfare(z: &Boundary, ua: &PwlConvex, model: &DensityModel) -> Result<f64> {
    let ub = ub_from(z, ua)?;
    let mut integral = 0.0;
    for (a0, a1, s, _) in ratio_pieces(z, ua) {
        if s != 0.0 {
            let p0 = Point::new(a0, z.extended(a0));
            let p1 = Point::new(a1, z.extended(a1));
            integral += s * path_integral(model, p0, p1, a1 - a0);
        }
    }
    let a_bar = z.a_bar();
    for (v0, v1, s) in ua.segments() {
        let (v0, v1) = (v0.max(a_bar), v1);
        if v1 > v0 && s != 0.0 {
            integral += s * path_integral(model, Point::new(v0, 1.0), Point::new(v1, 1.0), v1 - v0);
        }
    }
    let mut w = ua.value(1.0).max(ub.value(1.0)) - integral;
    if z.orientation() == Orientation::Right {
        let b_bar = z.b_bar();
        for (v0, v1, s) in ub.segments() {
            let (v0, v1) = (v0.max(b_bar), v1);
            if v1 > v0 && s != 0.0 {
                w -= s * path_integral(model, Point::new(1.0, v0), Point::new(1.0, v1), v1 - v0);
            }
        }
    }
    Ok(w)
}

/// Test oracle for [`optimal_ua`]: maximizes `∫ U_A′ (1 − F(a, ẑ(a))) da`
/// over slope profiles that are constant on the cells of a uniform grid over
/// `[a_low, ā]` (refined at the knots of `z`), subject to `U_A′` and
/// `U_A′/z′` non-decreasing and both at most 1. Cells are raised greedily,
/// largest objective coefficient first, until nothing can move.
pub fn brute_force_best_ua(z: &Boundary, model: &DensityModel, grid: usize) -> Result<PwlConvex> {
    if grid < 16 {
        return Err(Error::invalid("grid", format!("{grid} < 16")));
    }
    let (lo, hi) = (z.a_low(), z.a_bar());
    let mut xs: Vec<f64> = (0..=grid).map(|k| lo + (hi - lo) * k as f64 / grid as f64).collect();
    xs.extend(z.knots().iter().map(|k| k.0));
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-14);
    *xs.last_mut().unwrap() = hi;
    let cells: Vec<(f64, f64, f64)> = xs
        .windows(2)
        .map(|w| (w[0], w[1], z.slope_left(0.5 * (w[0] + w[1]))))
        .collect();
    let n = cells.len();
    let coef: Vec<f64> = cells
        .iter()
        .map(|&(a0, a1, _)| {
            let p0 = Point::new(a0, z.extended(a0));
            let p1 = Point::new(a1, z.extended(a1));
            (a1 - a0) - path_integral(model, p0, p1, a1 - a0)
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| coef[j].total_cmp(&coef[i]).then(j.cmp(&i)));
    let mut g = vec![0.0f64; n];
    for _pass in 0..=n + 1 {
        let mut moved = false;
        for &i in &order {
            if coef[i] < 0.0 {
                continue;
            }
            let s = cells[i].2;
            let mut cap = 1.0f64.min(s);
            if i + 1 < n {
                let (gn, sn) = (g[i + 1], cells[i + 1].2);
                cap = cap.min(gn).min(gn * s / sn);
            }
            if cap > g[i] {
                g[i] = cap;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    let mut breaks = vec![0.0];
    let mut slopes = Vec::new();
    if lo > 0.0 {
        breaks.push(lo);
        slopes.push(0.0);
    }
    for (k, c) in cells.iter().enumerate() {
        breaks.push(c.1);
        slopes.push(g[k]);
    }
    if hi < 1.0 {
        breaks.push(1.0);
        slopes.push(1.0);
    }
    PwlConvex::from_slopes(0.0, &breaks, &slopes)
}

/// Everything derived from a boundary under the optimal implementation.
#[derive(Debug, Clone)]
pub struct ImplementationBundle {
    pub boundary: Boundary,
    pub ua: PwlConvex,
    pub ub: PwlConvex,
    pub mech: Mechanism,
    pub m_profile: StepFunction,
    pub c_scale: f64,
}

#[derive(Serialize)]
struct BundleFile<'a> {
    c_scale: f64,
    boundary: Vec<[f64; 2]>,
    ua: Vec<[f64; 2]>,
    ub: Vec<[f64; 2]>,
    menu_a: Vec<[f64; 2]>,
    menu_b: Vec<[f64; 2]>,
    m_profile: &'a StepFunction,
}

impl ImplementationBundle {
    pub fn optimal(z: &Boundary) -> Result<ImplementationBundle> {
        let ua = optimal_ua(z);
        let ub = ub_from(z, &ua)?;
        let mech = mechanism_from(z, &ua)?;
        Ok(ImplementationBundle {
            boundary: z.clone(),
            ua,
            ub,
            mech,
            m_profile: m_profile(z),
            c_scale: c_scale(z),
        })
    }

    pub fn welfare(&self, model: &DensityModel) -> Result<f64> {
        wstar_welfare(&self.boundary, &self.ua, model)
    }

    pub fn to_toml(&self) -> String {
        let pairs = |v: &[(f64, f64)]| v.iter().map(|&(x, y)| [x, y]).collect::<Vec<_>>();
        let menu = |m: &[MenuOption]| m.iter().map(|o| [o.quality, o.ordeal]).collect::<Vec<_>>();
        let f = BundleFile {
            c_scale: self.c_scale,
            boundary: pairs(self.boundary.knots()),
            ua: pairs(self.ua.knots()),
            ub: pairs(self.ub.knots()),
            menu_a: menu(self.mech.menu_a()),
            menu_b: menu(self.mech.menu_b()),
            m_profile: &self.m_profile,
        };
        toml::to_string(&f).expect("bundle serializes")
    }

    /// Plot table `a, U_A′(a), ẑ(a), F(a, ẑ(a))` at `samples` evenly spaced points.
    pub fn write_csv<W: std::io::Write>(&self, model: &DensityModel, samples: usize, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        wtr.write_record(["a", "ua_slope", "z_ext", "cdf"]).map_err(io)?;
        let n = samples.max(2);
        for k in 0..n {
            let a = k as f64 / (n - 1) as f64;
            let z = self.boundary.extended(a);
            let row = [a, self.ua.slope_right(a), z, model.cdf_unchecked(a, z)];
            wtr.write_record(row.iter().map(|v| format!("{v:.8e}"))).map_err(io)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn kinked() -> Boundary {
        // slopes (1, 2), kink at a = 0.4
        Boundary::new(vec![(0.2, 0.1), (0.4, 0.3), (0.75, 1.0)]).unwrap()
    }

    #[test]
    fn m_profile_examples() {
        assert_eq!(m_profile(&Boundary::linear(0.1, 0.2, 1.7).unwrap()).values, vec![1.0]);
        assert_abs_diff_eq!(m_profile(&kinked()).values[1], 2.0, epsilon = 1e-12);
        let down = Boundary::new(vec![(0.2, 0.1), (0.4, 0.5), (0.9, 1.0)]).unwrap();
        assert_eq!(m_profile(&down).values, vec![1.0, 1.0]);
    }

    #[test]
    fn optimal_ua_examples() {
        let z = Boundary::linear(0.3, 0.2, 1.5).unwrap();
        let ua = optimal_ua(&z);
        assert_abs_diff_eq!(ua.slope_right(0.5), 1.0, epsilon = 1e-12);
        let ub = ub_from(&z, &ua).unwrap();
        assert_abs_diff_eq!(ub.slope_right(0.5), 1.0 / 1.5, epsilon = 1e-12);

        let z = Boundary::linear(0.3, 0.2, 0.5).unwrap();
        let ua = optimal_ua(&z);
        assert_abs_diff_eq!(ua.slope_right(0.5), 0.5, epsilon = 1e-12);
        let ub = ub_from(&z, &ua).unwrap();
        assert_abs_diff_eq!(ub.slope_right(0.4), 1.0, epsilon = 1e-12);

        let z = kinked();
        let ua = optimal_ua(&z);
        assert_abs_diff_eq!(c_scale(&z), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(ua.slope_right(0.3), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(ua.slope_right(0.5), 1.0, epsilon = 1e-12);
        let ub = ub_from(&z, &ua).unwrap();
        assert_abs_diff_eq!(ub.slope_right(0.2), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(ub.slope_right(0.5), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn ub_examples_and_errors() {
        let c = 0.3;
        let z = Boundary::linear(c, c, 1.0).unwrap();
        let ua = optimal_ua(&z);
        let ub = ub_from(&z, &ua).unwrap();
        assert_abs_diff_eq!(ub.value(0.8), 0.5, epsilon = 1e-12);
        let z = Boundary::linear(0.0, 0.0, 2.0).unwrap();
        let ua = PwlConvex::from_knots(vec![(0.0, 0.0), (1.0, 1.0)]).unwrap();
        assert_abs_diff_eq!(ub_from(&z, &ua).unwrap().slope_right(0.3), 0.5, epsilon = 1e-12);
        // U_A′ ≡ 1 across an upward kink of z breaks convexity of U_B
        let ua = PwlConvex::from_knots(vec![(0.0, 0.0), (0.2, 0.0), (1.0, 0.8)]).unwrap();
        assert!(matches!(ub_from(&kinked(), &ua), Err(Error::Infeasible(_))));
    }

    #[test]
    fn mechanism_examples() {
        let z = Boundary::linear(0.5, 0.5, 1.0).unwrap();
        let ua = PwlConvex::from_knots(vec![(0.0, 0.0), (0.5, 0.0), (1.0, 0.5)]).unwrap();
        let m = mechanism_from(&z, &ua).unwrap();
        assert_eq!(m.menu_a(), &[MenuOption { quality: 1.0, ordeal: 0.5 }]);
        let ua = PwlConvex::from_knots(vec![(0.0, 0.0), (0.8, 0.4), (1.0, 0.6)]).unwrap();
        let z = Boundary::linear(0.0, 0.0, 1.0).unwrap();
        let m = mechanism_from(&z, &ua).unwrap();
        assert_eq!(m.menu_a().len(), 2);
        assert_abs_diff_eq!(m.menu_a()[1].ordeal, 0.4, epsilon = 1e-12);
        assert_eq!(m.menu_a()[0], MenuOption { quality: 0.5, ordeal: 0.0 });
    }

    #[test]
    fn extraction_examples() {
        let m = Mechanism::posted(0.5, 0.3).unwrap();
        let z = extract_boundary(&m).unwrap();
        assert_eq!(z.knots()[0], (0.5, 0.3));
        assert_abs_diff_eq!(z.extended(0.9), 0.7, epsilon = 1e-12);
        assert_eq!(z.orientation(), Orientation::Right);
        let m = Mechanism::from_pairs(&[(1.0, 0.0)], &[(0.5, 0.0)]).unwrap();
        let z = extract_boundary(&m).unwrap();
        assert_eq!(z.knots(), &[(0.0, 0.0), (0.5, 1.0)]);
        let m = Mechanism::posted(0.2, 0.2).unwrap();
        assert_eq!(extract_boundary(&m).unwrap().knots(), &[(0.2, 0.2), (1.0, 1.0)]);
        let never = Mechanism::posted(0.2, 1.5).unwrap();
        assert!(matches!(extract_boundary(&never), Err(Error::Degenerate(_))));
    }

    #[test]
    fn wstar_closed_forms() {
        let u = DensityModel::uniform();
        let c = 0.5f64.sqrt();
        let z = Boundary::linear(c, c, 1.0).unwrap();
        let w = wstar_welfare(&z, &optimal_ua(&z), &u).unwrap();
        assert_abs_diff_eq!(w, (1.0 - c) - (1.0 - c * c * c) / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w, 0.077411, epsilon = 1e-5);
        // ending on a = 1: A at ordeal 0.2, B free; E[max(a − 0.2, b)] = 0.585333…
        let z = Boundary::linear(0.2, 0.0, 1.0).unwrap();
        let w = wstar_welfare(&z, &optimal_ua(&z), &u).unwrap();
        assert_abs_diff_eq!(w, 1.0 - (0.992 / 3.0 - 0.096) - 0.18, epsilon = 1e-12);
    }

    #[test]
    fn brute_force_examples() {
        let u = DensityModel::uniform();
        let z = Boundary::linear(0.2, 0.1, 0.7).unwrap();
        let g = brute_force_best_ua(&z, &u, 16).unwrap();
        assert_abs_diff_eq!(g.slope_right(0.5), 0.7, epsilon = 1e-12);
        let g = brute_force_best_ua(&kinked(), &u, 32).unwrap();
        assert_abs_diff_eq!(g.slope_right(0.3), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(g.slope_right(0.5), 1.0, epsilon = 1e-12);
        let other = DensityModel::from_fn(20, |a, b| 0.1 + a * a + b).unwrap();
        assert_eq!(brute_force_best_ua(&kinked(), &other, 32).unwrap(), brute_force_best_ua(&kinked(), &u, 32).unwrap());
        assert!(brute_force_best_ua(&z, &u, 8).is_err());
    }

    #[test]
    fn bundle_exports() {
        let b = ImplementationBundle::optimal(&kinked()).unwrap();
        let s = b.to_toml();
        assert!(s.contains("menu_a") && s.contains("c_scale = "));
        let mut buf = Vec::new();
        b.write_csv(&DensityModel::uniform(), 5, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
    }

    mod props {
        use super::*;
        use crate::boundary::check_feasible_pair;
        use crate::boundary::tests::arb_boundary;
        use proptest::prelude::*;

        fn tilted() -> DensityModel {
            DensityModel::from_fn(12, |a, b| 0.4 + a + 1.5 * b * b).unwrap()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(96))]

            #[test]
            fn boundary_welfare_matches_direct(z in arb_boundary()) {
                let ua = optimal_ua(&z);
                let mech = mechanism_from(&z, &ua).unwrap();
                for model in [DensityModel::uniform(), tilted()] {
                    let w = wstar_welfare(&z, &ua, &model).unwrap();
                    let d = mech.direct_welfare(&model);
                    prop_assert!((w - d).abs() < 1e-9, "{w} vs {d}");
                }
            }

            #[test]
            fn optimal_profile_is_feasible(z in arb_boundary()) {
                let ua = optimal_ua(&z);
                let (lo, hi) = z.supply_masses(&DensityModel::uniform());
                let r = check_feasible_pair(&z, &ua, &DensityModel::uniform(), lo, hi);
                prop_assert!(r.feasible, "{r:?}");
                prop_assert!(ua.slopes().iter().all(|s| *s <= 1.0 + 1e-12));
            }

            #[test]
            fn greedy_oracle_agrees(z in arb_boundary()) {
                let model = tilted();
                let g = brute_force_best_ua(&z, &model, 24).unwrap();
                let ua = optimal_ua(&z);
                let wg = wstar_welfare(&z, &g, &model).unwrap();
                let wo = wstar_welfare(&z, &ua, &model).unwrap();
                prop_assert!((wg - wo).abs() < 1e-9, "{wg} vs {wo}");
                for k in 0..50 {
                    let a = (k as f64 + 0.5) / 50.0;
                    prop_assert!((g.value(a) - ua.value(a)).abs() < 1e-9);
                }
            }

            #[test]
            fn optimal_dominates_random_feasible(
                z in arb_boundary(),
                raw in proptest::collection::vec(0.01f64..1.0, 6),
                scale in 0.05f64..1.0,
                tail in 0.0f64..1.0,
            ) {
                let model = tilted();
                let best = wstar_welfare(&z, &optimal_ua(&z), &model).unwrap();
                let s = z.slopes();
                let mut g = Vec::with_capacity(s.len());
                for k in 0..s.len() {
                    let mut v = raw[k];
                    if k > 0 {
                        v = v.max(g[k - 1]).max(g[k - 1] * s[k] / s[k - 1]);
                    }
                    g.push(v);
                }
                let last = *g.last().unwrap();
                let norm = scale / last.max(last / s[s.len() - 1]);
                let mut breaks = vec![0.0];
                let mut slopes = Vec::new();
                if z.a_low() > 0.0 {
                    breaks.push(z.a_low());
                    slopes.push(0.0);
                }
                for (k, v) in g.iter().enumerate() {
                    breaks.push(z.knots()[k + 1].0);
                    slopes.push(v * norm);
                }
                if z.a_bar() < 1.0 {
                    breaks.push(1.0);
                    slopes.push(last * norm + tail * (1.0 - last * norm));
                }
                let u = PwlConvex::from_slopes(0.0, &breaks, &slopes).unwrap();
                let w = wstar_welfare(&z, &u, &model).unwrap();
                prop_assert!(w <= best + 1e-12, "{w} > {best}");
            }

            #[test]
            fn normalization_and_dichotomy(z in arb_boundary()) {
                let ua = optimal_ua(&z);
                let s = z.slopes();
                let k = z.knots();
                let mid = |i: usize| 0.5 * (k[i].0 + k[i + 1].0);
                let g: Vec<f64> = (0..s.len()).map(|i| ua.slope_right(mid(i))).collect();
                let last = s.len() - 1;
                prop_assert!((g[last].max(g[last] / s[last]) - 1.0).abs() < 1e-9);
                for i in 1..s.len() {
                    if s[i] < s[i - 1] {
                        prop_assert!((g[i] - g[i - 1]).abs() < 1e-9);
                    } else {
                        prop_assert!((g[i] / s[i] - g[i - 1] / s[i - 1]).abs() < 1e-9);
                    }
                }
                let ub = ub_from(&z, &ua).unwrap();
                for &(a, b) in k {
                    prop_assert!((ua.value(a) - ub.value(b)).abs() < 1e-9);
                }
            }

            #[test]
            fn extraction_round_trip(z in arb_boundary()) {
                let mech = mechanism_from(&z, &optimal_ua(&z)).unwrap();
                let back = extract_boundary(&mech).unwrap();
                prop_assert!((back.a_low() - z.a_low()).abs() < 1e-9);
                prop_assert!((back.b_low() - z.b_low()).abs() < 1e-9);
                for k in 0..=40 {
                    let a = k as f64 / 40.0;
                    prop_assert!((back.extended(a) - z.extended(a)).abs() < 1e-7, "a = {a}");
                }
            }
        }
    }
}
