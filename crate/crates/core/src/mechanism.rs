//! Deterministic menu mechanisms: each good is offered through a menu of
//! `(quality, ordeal)` options and agents best-respond.

use serde::{Deserialize, Serialize};

use crate::dist::DensityModel;
use crate::error::{Error, Result};
use crate::geom::{Moments, Point};
use crate::pwl::PwlConvex;

const TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MenuOption {
    pub quality: f64,
    pub ordeal: f64,
}

impl MenuOption {
    pub fn new(quality: f64, ordeal: f64) -> Result<MenuOption> {
        if !(0.0..=1.0).contains(&quality) {
            return Err(Error::invalid("quality", format!("{quality} not in [0, 1]")));
        }
        if !(ordeal >= 0.0 && ordeal.is_finite()) {
            return Err(Error::invalid("ordeal", format!("{ordeal} must be finite and ≥ 0")));
        }
        Ok(MenuOption { quality, ordeal })
    }

    pub fn utility(&self, v: f64) -> f64 {
        self.quality * v - self.ordeal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Good {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    Good(Good),
    None,
}

/// Best option in `menu` for value `v`: `(max(0, best utility), index)`.
/// The index is `None` only when staying out is strictly better; near-ties
/// go to the lower ordeal, then the higher quality.
pub fn best_option(menu: &[MenuOption], v: f64) -> Result<(f64, Option<usize>)> {
    if menu.is_empty() {
        return Err(Error::EmptyMenu);
    }
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid("value", format!("{v} not in [0, 1]")));
    }
    let mut best = 0usize;
    for (i, o) in menu.iter().enumerate().skip(1) {
        let (ui, ub) = (o.utility(v), menu[best].utility(v));
        let b = &menu[best];
        let better = if (ui - ub).abs() <= TIE {
            o.ordeal < b.ordeal || (o.ordeal == b.ordeal && o.quality > b.quality)
        } else {
            ui > ub
        };
        if better {
            best = i;
        }
    }
    let u = menu[best].utility(v);
    if u < -TIE {
        Ok((0.0, None))
    } else {
        Ok((u.max(0.0), Some(best)))
    }
}

fn envelope_breaks(menu: &[MenuOption]) -> Vec<f64> {
    let mut xs = vec![0.0, 1.0];
    let lines: Vec<(f64, f64)> = menu
        .iter()
        .map(|o| (o.quality, -o.ordeal))
        .chain(std::iter::once((0.0, 0.0)))
        .collect();
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            let (s1, c1) = lines[i];
            let (s2, c2) = lines[j];
            if s1 != s2 {
                let x = (c2 - c1) / (s1 - s2);
                if x > 0.0 && x < 1.0 {
                    xs.push(x);
                }
            }
        }
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);
    xs
}

fn envelope_value(menu: &[MenuOption], v: f64) -> f64 {
    let u = menu.iter().map(|o| o.utility(v)).fold(0.0, f64::max);
    // rounding at a participation threshold must not leave a sliver above 0
    if u < 1e-14 {
        0.0
    } else {
        u
    }
}

/// Upper envelope of `{quality · v − ordeal}` and 0 over `v ∈ [0, 1]`.
pub fn indirect_utility(menu: &[MenuOption]) -> Result<PwlConvex> {
    if menu.is_empty() {
        return Err(Error::EmptyMenu);
    }
    let knots = envelope_breaks(menu)
        .into_iter()
        .map(|v| (v, envelope_value(menu, v)))
        .collect();
    Ok(PwlConvex::from_knots(knots)?.simplified())
}

/// Options that are the unique best response, at positive utility, on some
/// open interval of values; sorted by quality. A menu where nobody ever
/// participates keeps only its best option at `v = 1`.
pub fn canonical_menu(menu: &[MenuOption]) -> Result<Vec<MenuOption>> {
    if menu.is_empty() {
        return Err(Error::EmptyMenu);
    }
    let xs = envelope_breaks(menu);
    let mut keep = vec![false; menu.len()];
    for w in xs.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let (i, u) = menu
            .iter()
            .enumerate()
            .map(|(i, o)| (i, o.utility(mid)))
            .fold((usize::MAX, 0.0), |acc, (i, u)| if u > acc.1 { (i, u) } else { acc });
        if i != usize::MAX && u > 0.0 {
            keep[i] = true;
        }
    }
    let mut out: Vec<MenuOption> = menu
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(o, _)| *o)
        .collect();
    if out.is_empty() {
        let (_, idx) = best_option(menu, 1.0)?;
        let idx = idx.unwrap_or_else(|| {
            // everyone strictly prefers to stay out; keep the least bad option
            (0..menu.len())
                .max_by(|&i, &j| menu[i].utility(1.0).total_cmp(&menu[j].utility(1.0)))
                .unwrap()
        });
        out.push(menu[idx]);
    }
    out.sort_by(|a, b| a.quality.total_cmp(&b.quality).then(a.ordeal.total_cmp(&b.ordeal)));
    out.dedup();
    Ok(out)
}

/// Aggregates of a mechanism under a density.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Outcome {
    pub mass_a: f64,
    pub mass_b: f64,
    /// `∫ max(U_A, U_B, 0) dF`
    pub welfare: f64,
    /// `∫ ordeal of the chosen option dF`
    pub revenue: f64,
    /// `∫ quality · value of the chosen option dF`
    pub efficiency: f64,
}

/// Convex piece of a choice region with the option taken there.
#[derive(Debug, Clone)]
pub struct RegionPiece {
    pub good: Good,
    pub option: usize,
    pub poly: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    menu_a: Vec<MenuOption>,
    menu_b: Vec<MenuOption>,
    ua: PwlConvex,
    ub: PwlConvex,
}

#[derive(Serialize, Deserialize)]
struct MenuFile {
    menu_a: Vec<[f64; 2]>,
    menu_b: Vec<[f64; 2]>,
}

impl Mechanism {
    pub fn new(menu_a: Vec<MenuOption>, menu_b: Vec<MenuOption>) -> Result<Mechanism> {
        for o in menu_a.iter().chain(&menu_b) {
            MenuOption::new(o.quality, o.ordeal)?;
        }
        let menu_a = canonical_menu(&menu_a)?;
        let menu_b = canonical_menu(&menu_b)?;
        let ua = indirect_utility(&menu_a)?;
        let ub = indirect_utility(&menu_b)?;
        Ok(Mechanism {
            menu_a,
            menu_b,
            ua,
            ub,
        })
    }

    /// Builds from `(quality, ordeal)` pairs.
    pub fn from_pairs(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<Mechanism> {
        let conv = |v: &[(f64, f64)]| {
            v.iter()
                .map(|&(q, c)| MenuOption::new(q, c))
                .collect::<Result<Vec<_>>>()
        };
        Mechanism::new(conv(a)?, conv(b)?)
    }

    /// Undamaged goods at posted ordeals.
    pub fn posted(c_a: f64, c_b: f64) -> Result<Mechanism> {
        Mechanism::from_pairs(&[(1.0, c_a)], &[(1.0, c_b)])
    }

    pub fn menu_a(&self) -> &[MenuOption] {
        &self.menu_a
    }

    pub fn menu_b(&self) -> &[MenuOption] {
        &self.menu_b
    }

    pub fn ua(&self) -> &PwlConvex {
        &self.ua
    }

    pub fn ub(&self) -> &PwlConvex {
        &self.ub
    }

    pub fn menu(&self, g: Good) -> &[MenuOption] {
        match g {
            Good::A => &self.menu_a,
            Good::B => &self.menu_b,
        }
    }

    /// Ties at positive utility go to A.
    pub fn choose_good(&self, a: f64, b: f64) -> Choice {
        let ua = self.ua.value(a);
        let ub = self.ub.value(b);
        if ua <= 0.0 && ub <= 0.0 {
            Choice::None
        } else if ua >= ub {
            Choice::Good(Good::A)
        } else {
            Choice::Good(Good::B)
        }
    }

    /// Convex pieces of the A and B choice regions. Over each piece a single
    /// option is chosen and the region's upper edge is linear.
    pub fn region_pieces(&self) -> Vec<RegionPiece> {
        let mut out = Vec::new();
        for good in [Good::A, Good::B] {
            let (own, other) = match good {
                Good::A => (&self.ua, &self.ub),
                Good::B => (&self.ub, &self.ua),
            };
            let menu = self.menu(good);
            let lo = own.zero_level_end();
            if lo >= 1.0 {
                continue;
            }
            // cut-off in the other coordinate as a function of own value;
            // for A this keeps every tie, for B ties form a null set
            let cut = |v: f64| other.inverse_sup(own.value(v));
            let mut xs = vec![lo, 1.0];
            xs.extend(own.kinks().into_iter().filter(|&v| v > lo && v < 1.0));
            for &(_, u) in other.knots() {
                if u > 0.0 {
                    let v = own.inverse_sup(u);
                    if v > lo && v < 1.0 {
                        xs.push(v);
                    }
                }
            }
            xs.sort_by(|a, b| a.total_cmp(b));
            xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);
            for w in xs.windows(2) {
                let (v0, v1) = (w[0], w[1]);
                let (c0, c1) = (cut(v0), cut(v1));
                if c0 <= 0.0 && c1 <= 0.0 {
                    continue;
                }
                let option = best_option(menu, 0.5 * (v0 + v1))
                    .ok()
                    .and_then(|(_, i)| i)
                    .unwrap_or(0);
                let pts = [(v0, 0.0), (v1, 0.0), (v1, c1), (v0, c0)];
                let poly = pts
                    .iter()
                    .map(|&(x, y)| match good {
                        Good::A => Point::new(x, y),
                        Good::B => Point::new(y, x),
                    })
                    .collect();
                out.push(RegionPiece { good, option, poly });
            }
        }
        out
    }

    pub fn evaluate(&self, model: &DensityModel) -> Outcome {
        let mut o = Outcome::default();
        for piece in self.region_pieces() {
            let m: Moments = model.moments_convex(&piece.poly);
            let opt = self.menu(piece.good)[piece.option];
            let value_moment = match piece.good {
                Good::A => m.ma,
                Good::B => m.mb,
            };
            match piece.good {
                Good::A => o.mass_a += m.mass,
                Good::B => o.mass_b += m.mass,
            }
            o.welfare += opt.quality * value_moment - opt.ordeal * m.mass;
            o.revenue += opt.ordeal * m.mass;
            o.efficiency += opt.quality * value_moment;
        }
        o
    }

    pub fn demand(&self, model: &DensityModel) -> (f64, f64) {
        let o = self.evaluate(model);
        (o.mass_a, o.mass_b)
    }

    pub fn direct_welfare(&self, model: &DensityModel) -> f64 {
        self.evaluate(model).welfare
    }

    pub fn revenue(&self, model: &DensityModel) -> f64 {
        self.evaluate(model).revenue
    }

    /// Welfare plus `gamma` times ordeal revenue.
    pub fn objective_wr(&self, model: &DensityModel, gamma: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid("gamma", format!("{gamma} not in [0, 1]")));
        }
        let o = self.evaluate(model);
        Ok(o.welfare + gamma * o.revenue)
    }

    pub fn efficiency(&self, model: &DensityModel) -> f64 {
        self.evaluate(model).efficiency
    }

    pub fn to_toml(&self) -> String {
        let f = MenuFile {
            menu_a: self.menu_a.iter().map(|o| [o.quality, o.ordeal]).collect(),
            menu_b: self.menu_b.iter().map(|o| [o.quality, o.ordeal]).collect(),
        };
        toml::to_string(&f).expect("menus serialize")
    }

    pub fn from_toml(s: &str) -> Result<Mechanism> {
        let f: MenuFile = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        let pairs = |v: &[[f64; 2]]| v.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>();
        Mechanism::from_pairs(&pairs(&f.menu_a), &pairs(&f.menu_b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn opt(q: f64, c: f64) -> MenuOption {
        MenuOption::new(q, c).unwrap()
    }

    #[test]
    fn best_option_examples() {
        assert_eq!(best_option(&[opt(1.0, 0.5)], 0.7).unwrap().1, Some(0));
        assert_abs_diff_eq!(best_option(&[opt(1.0, 0.5)], 0.7).unwrap().0, 0.2, epsilon = 1e-15);
        assert_eq!(best_option(&[opt(1.0, 0.5)], 0.4).unwrap(), (0.0, None));
        let (u, i) = best_option(&[opt(0.4, 0.0), opt(1.0, 0.3)], 0.5).unwrap();
        assert_abs_diff_eq!(u, 0.2, epsilon = 1e-15);
        assert_eq!(i, Some(0));
        assert_eq!(best_option(&[], 0.5), Err(Error::EmptyMenu));
    }

    #[test]
    fn envelopes() {
        let u = indirect_utility(&[opt(1.0, 0.5)]).unwrap();
        assert_eq!(u.knots(), &[(0.0, 0.0), (0.5, 0.0), (1.0, 0.5)]);
        let u = indirect_utility(&[opt(0.5, 0.0), opt(1.0, 0.4)]).unwrap();
        assert_eq!(u.slopes(), vec![0.5, 1.0]);
        assert_abs_diff_eq!(u.kinks()[0], 0.8, epsilon = 1e-15);
        let u = indirect_utility(&[opt(1.0, 0.0)]).unwrap();
        assert_eq!(u.knots(), &[(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn canonical_drops_dominated() {
        let m = canonical_menu(&[opt(1.0, 0.4), opt(0.3, 0.5), opt(0.5, 0.0), opt(0.5, 0.0)]).unwrap();
        assert_eq!(m, vec![opt(0.5, 0.0), opt(1.0, 0.4)]);
        assert_eq!(canonical_menu(&[opt(1.0, 2.0)]).unwrap(), vec![opt(1.0, 2.0)]);
    }

    #[test]
    fn choice_examples() {
        let m = Mechanism::posted(0.5, 0.5).unwrap();
        assert_eq!(m.choose_good(0.9, 0.6), Choice::Good(Good::A));
        assert_eq!(m.choose_good(0.3, 0.4), Choice::None);
        let m = Mechanism::from_pairs(&[(1.0, 0.0)], &[(0.5, 0.0)]).unwrap();
        assert_eq!(m.choose_good(0.4, 0.9), Choice::Good(Good::B));
    }

    #[test]
    fn uniform_demands_and_welfare() {
        let u = DensityModel::uniform();
        let (da, db) = Mechanism::posted(0.5, 0.5).unwrap().demand(&u);
        assert_abs_diff_eq!(da, 0.375, epsilon = 1e-12);
        assert_abs_diff_eq!(db, 0.375, epsilon = 1e-12);
        let free = Mechanism::posted(0.0, 2.0).unwrap();
        let o = free.evaluate(&u);
        assert_abs_diff_eq!(o.mass_a, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(o.mass_b, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(o.welfare, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(o.efficiency, 0.5, epsilon = 1e-12);
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let m = Mechanism::posted(c, c).unwrap();
        let o = m.evaluate(&u);
        assert_abs_diff_eq!(o.mass_a, (1.0 - c * c) / 2.0, epsilon = 1e-12);
        let closed = 2.0 * (1.0 / 3.0 - c / 2.0 + c * c * c / 6.0);
        assert_abs_diff_eq!(o.welfare, closed, epsilon = 1e-12);
        assert_abs_diff_eq!(closed, 0.077411, epsilon = 1e-5);
        assert_abs_diff_eq!(m.objective_wr(&u, 1.0).unwrap(), 0.430966, epsilon = 1e-5);
        assert_abs_diff_eq!(m.objective_wr(&u, 0.0).unwrap(), o.welfare, epsilon = 0.0);
        let half = Mechanism::from_pairs(&[(0.5, 0.0)], &[(1.0, 2.0)]).unwrap();
        assert_abs_diff_eq!(half.efficiency(&u), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn nobody_participates() {
        let m = Mechanism::from_pairs(&[(1.0, 1.0), (0.5, 2.0)], &[(0.9, 1.5)]).unwrap();
        let o = m.evaluate(&DensityModel::example1(0.05, 0.3).unwrap());
        assert_eq!(o, Outcome::default());
    }

    #[test]
    fn toml_round_trip() {
        let m = Mechanism::from_pairs(&[(0.5, 0.0), (1.0, 0.4)], &[(1.0, 0.3)]).unwrap();
        let s = m.to_toml();
        assert_eq!(Mechanism::from_toml(&s).unwrap(), m);
        assert!(Mechanism::from_toml("menu_a = [[1.5, 0.0]]\nmenu_b = [[1, 0]]").is_err());
    }

    fn arb_menu() -> impl Strategy<Value = Vec<MenuOption>> {
        proptest::collection::vec((0.0f64..=1.0, 0.0f64..1.2), 1..6)
            .prop_map(|v| v.into_iter().map(|(q, c)| opt(q, c)).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn envelope_matches_pointwise_max(menu in arb_menu(), v in 0.0f64..=1.0) {
            let u = indirect_utility(&menu).unwrap();
            prop_assert!(u.is_convex(1e-12) && u.is_nondecreasing(1e-12));
            prop_assert!((u.value(v) - envelope_value(&menu, v)).abs() < 1e-12);
            let canon = indirect_utility(&canonical_menu(&menu).unwrap()).unwrap();
            prop_assert!((canon.value(v) - u.value(v)).abs() < 1e-12);
        }

        #[test]
        fn regions_match_pointwise_choice(ma in arb_menu(), mb in arb_menu(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let m = Mechanism::new(ma, mb).unwrap();
            let planes_hit = |g: Good| m.region_pieces().iter().filter(|p| p.good == g).any(|p| {
                let hp = crate::geom::halfplanes_of(&p.poly);
                crate::geom::point_in_convex(Point::new(a, b), &hp, 1e-12)
            });
            match m.choose_good(a, b) {
                Choice::Good(g) => {
                    // away from the indifference curve the piece lookup must agree
                    if (m.ua().value(a) - m.ub().value(b)).abs() > 1e-9 && m.ua().value(a).max(m.ub().value(b)) > 1e-9 {
                        prop_assert!(planes_hit(g));
                    }
                }
                Choice::None => {}
            }
        }

        #[test]
        fn masses_partition(ma in arb_menu(), mb in arb_menu()) {
            let model = DensityModel::from_fn(12, |a, b| 1.0 + a * b).unwrap();
            let m = Mechanism::new(ma, mb).unwrap();
            let (da, db) = m.demand(&model);
            let lo = model.cdf(m.ua().zero_level_end(), m.ub().zero_level_end()).unwrap();
            prop_assert!(da >= 0.0 && db >= 0.0);
            prop_assert!((da + db + lo - 1.0).abs() < 1e-9);
        }
    }
}
