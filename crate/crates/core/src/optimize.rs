//! Numerical checks of boundary optimality: supply-preserving lines and
//! slope sweeps, a local search over piecewise-linear boundaries, the
//! one-good comparison, the damage counterexample and a stationarity scan.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::{check_feasible_pair, Boundary, MAX_SLOPE, MIN_SLOPE};
use crate::dist::DensityModel;
use crate::error::{Error, Result};
use crate::implement::{optimal_ua, wstar_welfare};
use crate::mechanism::Mechanism;

const FIT_TOL: f64 = 1e-6;

/// A boundary shape up to translation: segments `(width, slope)`, the last
/// one running on until it meets a wall.
#[derive(Debug, Clone, PartialEq)]
struct Shape {
    segs: Vec<(f64, f64)>,
}

impl Shape {
    fn place(&self, a_low: f64, b_low: f64) -> Result<Boundary> {
        let mut knots = vec![(a_low, b_low)];
        let (mut a, mut b) = (a_low, b_low);
        for (i, &(w, s)) in self.segs.iter().enumerate() {
            let last = i + 1 == self.segs.len();
            let to_top = (1.0 - b) / s;
            let to_right = 1.0 - a;
            let run = if last { to_top.min(to_right) } else { w.min(to_top).min(to_right) };
            a += run;
            b += s * run;
            if run == to_top {
                b = 1.0;
            }
            if run == to_right {
                a = 1.0;
            }
            knots.push((a, b));
            if a >= 1.0 || b >= 1.0 {
                break;
            }
        }
        // drop knots too close to the previous one
        let mut clean: Vec<(f64, f64)> = Vec::with_capacity(knots.len());
        for (i, k) in knots.iter().enumerate() {
            if let Some(p) = clean.last() {
                if k.0 - p.0 < 1e-6 {
                    if i + 1 == knots.len() && clean.len() > 1 {
                        clean.pop();
                    } else {
                        continue;
                    }
                }
            }
            clean.push(*k);
        }
        Boundary::new(clean)
    }
}

/// Root of a non-increasing `g` on `[0, 1]` given `g(0) > 0`, by regula
/// falsi with the Illinois step; failed evaluations count as negative.
/// Returns the evaluation closest to the root.
fn falling_root<T>(g: impl Fn(f64) -> Option<(T, f64)>, at0: (T, f64), tol: f64) -> (T, f64) {
    let (mut lo, mut glo) = (0.0f64, at0.1);
    let (mut hi, mut ghi): (f64, Option<f64>) = (1.0, None);
    let mut best = at0;
    let mut side = 0i8;
    if let Some(v) = g(1.0) {
        if v.1 > 0.0 {
            return v;
        }
        ghi = Some(v.1);
        if v.1.abs() < best.1.abs() {
            best = v;
        }
    }
    for _ in 0..100 {
        let w = hi - lo;
        let x = match ghi {
            Some(gh) if glo > gh => (lo + glo * w / (glo - gh)).clamp(lo + 1e-3 * w, hi - 1e-3 * w),
            _ => 0.5 * (lo + hi),
        };
        match g(x) {
            Some(v) if v.1 > 0.0 => {
                lo = x;
                glo = v.1;
                if side == 1 {
                    ghi = ghi.map(|h| 0.5 * h);
                }
                side = 1;
                if v.1.abs() < best.1.abs() {
                    best = v;
                }
            }
            r => {
                hi = x;
                ghi = r.as_ref().map(|v| v.1);
                if side == -1 {
                    glo *= 0.5;
                }
                side = -1;
                if let Some(v) = r {
                    if v.1.abs() < best.1.abs() {
                        best = v;
                    }
                }
            }
        }
        if best.1.abs() <= tol || hi - lo <= 1e-15 {
            break;
        }
    }
    best
}

/// Finds the translation of `shape` whose supply masses are `(μ_A, μ_B)`.
/// Inner root-find on `a_low` for the A-mass (decreasing in `a_low`), outer
/// on `b_low` for the B-mass (decreasing in `b_low` once A is held fixed).
/// Placements squeezed against a wall are degenerate and count as leaving
/// the moving good under-demanded.
fn fit_translation(model: &DensityModel, mu_a: f64, mu_b: f64, shape: &Shape) -> Option<Boundary> {
    type Fit = (Boundary, (f64, f64));
    let masses = |a: f64, b: f64| -> Option<Fit> {
        let z = shape.place(a, b).ok()?;
        let m = z.supply_masses(model);
        Some((z, m))
    };
    let fit_a = |b_low: f64| -> Option<Fit> {
        let at0 = masses(0.0, b_low)?;
        if at0.1 .0 <= mu_a {
            return Some(at0);
        }
        let g = |a: f64| masses(a, b_low).map(|f| {
            let r = f.1 .0 - mu_a;
            (f, r)
        });
        let r0 = at0.1 .0 - mu_a;
        Some(falling_root(g, (at0, r0), 1e-12).0)
    };
    let at0 = fit_a(0.0)?;
    let (z, (ma, mb)) = if at0.1 .1 > mu_b {
        let g = |b: f64| fit_a(b).map(|f| {
            let r = f.1 .1 - mu_b;
            (f, r)
        });
        let r0 = at0.1 .1 - mu_b;
        falling_root(g, (at0, r0), 1e-11).0
    } else {
        at0
    };
    ((ma - mu_a).abs() <= FIT_TOL && (mb - mu_b).abs() <= FIT_TOL).then_some(z)
}

fn check_supplies(mu_a: f64, mu_b: f64) -> Result<()> {
    for (field, mu) in [("mu_a", mu_a), ("mu_b", mu_b)] {
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::invalid(field, format!("{mu} not in (0, 1)")));
        }
    }
    if mu_a + mu_b > 1.0 + 1e-12 {
        return Err(Error::invalid("mu_a", format!("supplies sum to {} > 1", mu_a + mu_b)));
    }
    Ok(())
}

/// The slope-`s` line whose supply masses are `(μ_A, μ_B)`.
pub fn supply_preserving_linear(model: &DensityModel, mu_a: f64, mu_b: f64, slope: f64) -> Result<Boundary> {
    check_supplies(mu_a, mu_b)?;
    if !(MIN_SLOPE..=MAX_SLOPE).contains(&slope) {
        return Err(Error::InfeasibleSlope { slope });
    }
    let shape = Shape {
        segs: vec![(1.0, slope)],
    };
    fit_translation(model, mu_a, mu_b, &shape).ok_or(Error::InfeasibleSlope { slope })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub slope: f64,
    pub a_low: f64,
    pub b_low: f64,
    pub welfare: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn argmax(&self) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.feasible)
            .max_by(|x, y| x.welfare.total_cmp(&y.welfare))
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        wtr.write_record(["slope", "a_low", "b_low", "welfare", "feasible"]).map_err(io)?;
        for r in &self.rows {
            wtr.write_record([
                format!("{:.8e}", r.slope),
                format!("{:.8e}", r.a_low),
                format!("{:.8e}", r.b_low),
                format!("{:.8e}", r.welfare),
                r.feasible.to_string(),
            ])
            .map_err(io)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `0.5, 0.6, …, 2.0`.
pub fn default_slopes() -> Vec<f64> {
    (5..=20).map(|k| k as f64 / 10.0).collect()
}

/// Welfare of the optimal implementation of each supply-preserving line.
/// Slopes with no such line are marked infeasible.
pub fn slope_sweep(model: &DensityModel, mu_a: f64, mu_b: f64, slopes: &[f64]) -> Result<SweepResult> {
    check_supplies(mu_a, mu_b)?;
    if let Some(s) = slopes.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::invalid("slopes", format!("{s} is not positive")));
    }
    let rows = slopes
        .par_iter()
        .map(|&slope| {
            let row = supply_preserving_linear(model, mu_a, mu_b, slope).and_then(|z| {
                let w = wstar_welfare(&z, &optimal_ua(&z), model)?;
                Ok(SweepRow {
                    slope,
                    a_low: z.a_low(),
                    b_low: z.b_low(),
                    welfare: w,
                    feasible: true,
                })
            });
            row.unwrap_or(SweepRow {
                slope,
                a_low: f64::NAN,
                b_low: f64::NAN,
                welfare: f64::NAN,
                feasible: false,
            })
        })
        .collect();
    Ok(SweepResult { rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best_boundary: Boundary,
    pub best_welfare: f64,
    pub trace: Vec<(usize, f64)>,
    pub converged: bool,
}

impl SearchResult {
    pub fn write_trace_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        wtr.write_record(["iteration", "welfare"]).map_err(io)?;
        for (it, v) in &self.trace {
            wtr.write_record([it.to_string(), format!("{v:.8e}")]).map_err(io)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub const SEARCH_MIN_STEP: f64 = 1e-4;
pub const SEARCH_MIN_GAIN: f64 = 1e-7;
const SEARCH_MAX_EVALS: usize = 4000;

/// Pattern search over the log-slopes of an `n_knots`-knot boundary.
/// Every move re-solves the boundary's translation so both supplies stay
/// exactly allocated, a paired up/down deformation of the curve.
pub fn local_boundary_search(
    model: &DensityModel,
    mu_a: f64,
    mu_b: f64,
    n_knots: usize,
    seed: u64,
) -> Result<SearchResult> {
    check_supplies(mu_a, mu_b)?;
    if !(2..=16).contains(&n_knots) {
        return Err(Error::invalid("n_knots", format!("{n_knots} not in [2, 16]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pieces = n_knots - 1;
    let eval = |log_s: &[f64], width: f64| -> Option<(Boundary, f64)> {
        let shape = Shape {
            segs: log_s.iter().map(|l| (width, l.exp())).collect(),
        };
        let z = fit_translation(model, mu_a, mu_b, &shape)?;
        let w = wstar_welfare(&z, &optimal_ua(&z), model).ok()?;
        Some((z, w))
    };
    // random start: a supply-preserving line perturbed piece by piece
    let mut start = None;
    for _ in 0..50 {
        let base: f64 = rng.random_range(-0.5..0.5);
        let log_s: Vec<f64> = (0..pieces).map(|_| base + rng.random_range(-0.2..0.2)).collect();
        let line = match supply_preserving_linear(model, mu_a, mu_b, base.exp()) {
            Ok(z) => z,
            Err(_) => continue,
        };
        let width = (1.0 - line.a_low()) / pieces as f64;
        if let Some((z, w)) = eval(&log_s, width) {
            start = Some((log_s, width, z, w));
            break;
        }
    }
    let (mut x, width, mut best_z, mut best_w) =
        start.ok_or_else(|| Error::Infeasible("no supply-preserving starting boundary".into()))?;
    // single slopes, neighbouring pairs, and all slopes at once: moving one
    // slope alone kinks the curve, which welfare penalizes at first order
    let mut directions: Vec<Vec<f64>> = Vec::new();
    for i in 0..pieces {
        let mut e = vec![0.0; pieces];
        e[i] = 1.0;
        directions.push(e);
    }
    for i in 0..pieces.saturating_sub(1) {
        let mut e = vec![0.0; pieces];
        e[i] = 1.0;
        e[i + 1] = 1.0;
        directions.push(e);
    }
    if pieces > 2 {
        directions.push(vec![1.0; pieces]);
    }
    let mut trace = vec![(0usize, best_w)];
    let mut evals = 0usize;
    let mut step = 0.2;
    let mut converged = false;
    'outer: loop {
        let mut improved = false;
        for d in &directions {
            for sign in [1.0, -1.0] {
                if evals >= SEARCH_MAX_EVALS {
                    break 'outer;
                }
                let cand: Vec<f64> = x.iter().zip(d).map(|(v, e)| v + sign * step * e).collect();
                evals += 1;
                if let Some((z, w)) = eval(&cand, width) {
                    if w >= best_w + SEARCH_MIN_GAIN {
                        x = cand;
                        best_z = z;
                        best_w = w;
                        trace.push((evals, w));
                        improved = true;
                        break;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
            if step < SEARCH_MIN_STEP {
                converged = true;
                break;
            }
        }
    }
    Ok(SearchResult {
        best_boundary: best_z,
        best_welfare: best_w,
        trace,
        converged,
    })
}

/// Best of independent searches, one per seed, run in parallel.
pub fn multi_start_search(
    model: &DensityModel,
    mu_a: f64,
    mu_b: f64,
    n_knots: usize,
    seeds: &[u64],
) -> Result<SearchResult> {
    if seeds.is_empty() {
        return Err(Error::invalid("seeds", "need at least one seed"));
    }
    let runs: Vec<Result<SearchResult>> = seeds
        .par_iter()
        .map(|&s| local_boundary_search(model, mu_a, mu_b, n_knots, s))
        .collect();
    let mut best: Option<SearchResult> = None;
    for r in runs {
        let r = r?;
        if best.as_ref().is_none_or(|b| r.best_welfare > b.best_welfare) {
            best = Some(r);
        }
    }
    Ok(best.unwrap())
}

/// Feasibility of a search result under the supplies it was run with.
pub fn search_is_feasible(r: &SearchResult, model: &DensityModel, mu_a: f64, mu_b: f64) -> bool {
    let z = &r.best_boundary;
    check_feasible_pair(z, &optimal_ua(z), model, mu_a + FIT_TOL, mu_b + FIT_TOL).feasible
}

/// A density on `[0, 1]`, constant on equal-width bins.
#[derive(Debug, Clone, PartialEq)]
pub struct OneDimDensity {
    bins: Vec<f64>,
}

impl OneDimDensity {
    pub fn uniform() -> OneDimDensity {
        OneDimDensity { bins: vec![1.0] }
    }

    /// Normalizes the bin heights to unit mass.
    pub fn from_bins(bins: Vec<f64>) -> Result<OneDimDensity> {
        if bins.is_empty() || bins.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("bins", "need finite non-negative heights"));
        }
        let total: f64 = bins.iter().sum::<f64>() / bins.len() as f64;
        if !(total > 0.0) {
            return Err(Error::invalid("bins", "zero total mass"));
        }
        Ok(OneDimDensity {
            bins: bins.into_iter().map(|v| v / total).collect(),
        })
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    /// `(∫_x^1 f, ∫_x^1 a f)`.
    pub fn tail_moments(&self, x: f64) -> (f64, f64) {
        let n = self.bins.len() as f64;
        let (mut m0, mut m1) = (0.0, 0.0);
        for (i, f) in self.bins.iter().enumerate() {
            let lo = (i as f64 / n).max(x);
            let hi = (i + 1) as f64 / n;
            if hi > lo {
                m0 += f * (hi - lo);
                m1 += f * 0.5 * (hi * hi - lo * lo);
            }
        }
        (m0, m1)
    }
}

/// Welfare of deterring low types from A with an ordeal versus a damage, at
/// the same cutoff: B (worth `b_out`) is free, and the cutoff type is
/// indifferent. Returns `(w_ordeal, w_damage)`.
pub fn single_good_compare(f_a: &OneDimDensity, b_out: f64, cutoff: f64) -> Result<(f64, f64)> {
    if !(b_out > 0.0 && b_out < 1.0) {
        return Err(Error::invalid("b_out", format!("{b_out} not in (0, 1)")));
    }
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(Error::invalid("cutoff", format!("{cutoff} not in (0, 1)")));
    }
    if cutoff <= b_out {
        return Err(Error::invalid("cutoff", format!("{cutoff} ≤ b_out = {b_out}; A would not deter")));
    }
    let (m0, m1) = f_a.tail_moments(cutoff);
    let below = (1.0 - m0) * b_out;
    let w_ordeal = below + m1 - (cutoff - b_out) * m0;
    let w_damage = below + b_out / cutoff * m1;
    Ok((w_ordeal, w_damage))
}

/// Ordeal-only benchmark (A free, B at ordeal ½) against the ray mechanism
/// (A free, B damaged to `q` with no ordeal) on the counterexample density,
/// both allocating `(1 − k − ε, k + ε)`. Returns `(w_ordeal, w_damage)`.
pub fn example1_compare(epsilon: f64, k: f64) -> Result<(f64, f64)> {
    if !(epsilon > 0.0 && epsilon <= 0.1) {
        return Err(Error::invalid("epsilon", format!("{epsilon} not in (0, 0.1]")));
    }
    if !(k > 0.0 && k < 1.0 - epsilon) {
        return Err(Error::invalid("k", format!("{k} not in (0, 1 − ε)")));
    }
    let model = DensityModel::example1(epsilon, k)?;
    let target = (1.0 - k - epsilon, k + epsilon);
    let ordeal = Mechanism::from_pairs(&[(1.0, 0.0)], &[(1.0, 0.5)])?;
    let d = ordeal.demand(&model);
    if (d.0 - target.0).abs() > 1e-3 || (d.1 - target.1).abs() > 1e-3 {
        return Err(Error::Infeasible(format!(
            "ordeal benchmark demands ({:.6}, {:.6}), supplies ({:.6}, {:.6})",
            d.0, d.1, target.0, target.1
        )));
    }
    let ray = |q: f64| Mechanism::from_pairs(&[(1.0, 0.0)], &[(q, 0.0)]);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut found = None;
    for _ in 0..MAX_BISECT {
        let q = 0.5 * (lo + hi);
        let db = ray(q)?.demand(&model).1;
        if (db - target.1).abs() <= 1e-10 {
            found = Some(q);
            break;
        }
        if db < target.1 {
            lo = q;
        } else {
            hi = q;
        }
        if hi - lo <= f64::EPSILON {
            found = Some(0.5 * (lo + hi));
            break;
        }
    }
    let q = found.ok_or(Error::NonConvergence {
        what: "ray quality",
        iterations: MAX_BISECT,
        residual: hi - lo,
    })?;
    let damage = ray(q)?;
    let dd = damage.demand(&model);
    if (dd.1 - target.1).abs() > 1e-6 {
        return Err(Error::NonConvergence {
            what: "ray quality",
            iterations: MAX_BISECT,
            residual: (dd.1 - target.1).abs(),
        });
    }
    Ok((ordeal.direct_welfare(&model), damage.direct_welfare(&model)))
}

const MAX_BISECT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationarityPoint {
    pub a: f64,
    pub b: f64,
    /// `F_{A|B}(a|z(a)) / f_{A|B}(a|z(a))`; NaN where the density is below the floor
    pub rate: f64,
    pub floor_violation: bool,
}

pub const DIAGNOSTIC_POINTS: usize = 256;

/// Inverse conditional anti-hazard rate of A along the boundary.
pub fn stationarity_diagnostic(z: &Boundary, model: &DensityModel) -> Vec<StationarityPoint> {
    let (lo, hi) = (z.a_low(), z.a_bar());
    (0..DIAGNOSTIC_POINTS)
        .map(|i| {
            let a = lo + (hi - lo) * (i as f64 + 0.5) / DIAGNOSTIC_POINTS as f64;
            let b = z.extended(a);
            match model.inv_anti_hazard_a(a, b) {
                Ok(rate) => StationarityPoint {
                    a,
                    b,
                    rate,
                    floor_violation: false,
                },
                Err(_) => StationarityPoint {
                    a,
                    b,
                    rate: f64::NAN,
                    floor_violation: true,
                },
            }
        })
        .collect()
}

/// True when every rate is finite and the profile strictly increases.
pub fn strictly_increasing(profile: &[StationarityPoint]) -> bool {
    profile.iter().all(|p| p.rate.is_finite()) && profile.windows(2).all(|w| w[1].rate > w[0].rate)
}

pub fn write_diagnostic_csv<W: std::io::Write>(profile: &[StationarityPoint], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Io(e.to_string());
    wtr.write_record(["a", "b", "rate", "floor_violation"]).map_err(io)?;
    for p in profile {
        wtr.write_record([
            format!("{:.8e}", p.a),
            format!("{:.8e}", p.b),
            format!("{:.8e}", p.rate),
            p.floor_violation.to_string(),
        ])
        .map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}
