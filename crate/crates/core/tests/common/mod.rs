//! Random instances shared by the integration tests.
#![allow(dead_code)]

use ordeal_core::{Boundary, DensityModel, Mechanism, PwlConvex};
use rand::Rng;

/// Boundary with 2 to 6 knots starting anywhere in `[0, 0.8)²`.
pub fn random_boundary<R: Rng>(rng: &mut R) -> Boundary {
    loop {
        let (a0, b0) = (rng.random_range(0.0..0.8), rng.random_range(0.0..0.8));
        let pieces = rng.random_range(1..=5);
        let widths: Vec<f64> = (0..pieces).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = widths.iter().sum();
        let mut knots = vec![(a0, b0)];
        let (mut a, mut b) = (a0, b0);
        let mut done = false;
        for w in widths {
            let s: f64 = rng.random_range(0.2..4.0);
            let da = w / total * (1.0 - a0);
            if b + s * da >= 1.0 {
                knots.push((a + (1.0 - b) / s, 1.0));
                done = true;
                break;
            }
            a += da;
            b += s * da;
            knots.push((a, b));
        }
        if !done {
            knots.last_mut().unwrap().0 = 1.0;
        }
        if let Ok(z) = Boundary::new(knots) {
            return z;
        }
    }
}

/// A-utility implementing `z`: slopes on the boundary's pieces non-decreasing
/// in both `U_A′` and `U_A′/z′`, capped at 1, then any convex tail.
pub fn random_feasible_ua<R: Rng>(rng: &mut R, z: &Boundary) -> PwlConvex {
    let s = z.slopes();
    let mut g: Vec<f64> = Vec::with_capacity(s.len());
    for k in 0..s.len() {
        let mut v: f64 = rng.random_range(0.01..1.0);
        if k > 0 {
            v = v.max(g[k - 1]).max(g[k - 1] * s[k] / s[k - 1]);
        }
        g.push(v);
    }
    let last = *g.last().unwrap();
    let norm = rng.random_range(0.05..=1.0) / last.max(last / s[s.len() - 1]);
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
        let top = last * norm;
        breaks.push(1.0);
        slopes.push(top + rng.random_range(0.0..=1.0) * (1.0 - top));
    }
    PwlConvex::from_slopes(0.0, &breaks, &slopes).unwrap()
}

/// Smooth positive density: a floor plus three Gaussian bumps.
pub fn random_density<R: Rng>(rng: &mut R, n: usize) -> DensityModel {
    let floor: f64 = rng.random_range(0.1..1.0);
    let bumps: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.05..0.4),
                rng.random_range(0.0..3.0),
            )
        })
        .collect();
    DensityModel::from_fn(n, move |a, b| {
        floor
            + bumps
                .iter()
                .map(|&(ca, cb, s, w)| w * (-((a - ca).powi(2) + (b - cb).powi(2)) / (2.0 * s * s)).exp())
                .sum::<f64>()
    })
    .unwrap()
}

/// One to three options per good with arbitrary qualities and ordeals.
pub fn random_mechanism<R: Rng>(rng: &mut R) -> Mechanism {
    let menu = |rng: &mut R| -> Vec<(f64, f64)> {
        (0..rng.random_range(1..=3))
            .map(|_| (rng.random_range(0.05..=1.0), rng.random_range(0.0..0.9)))
            .collect()
    };
    let a = menu(rng);
    let b = menu(rng);
    Mechanism::from_pairs(&a, &b).unwrap()
}
