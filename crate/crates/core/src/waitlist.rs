//! Waitlists as screening devices: options pair an ordeal with a wait and a
//! service probability, and only the expected discount `p·e^{−ρt}` matters
//! to agents. A flow simulator checks the steady state with re-entry.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::DensityModel;
use crate::error::{Error, Result};
use crate::mechanism::{best_option, Choice, Good, Mechanism, MenuOption};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaitOption {
    pub ordeal: f64,
    pub wait: f64,
    pub prob: f64,
}

impl WaitOption {
    pub fn new(ordeal: f64, wait: f64, prob: f64) -> Result<WaitOption> {
        if !(ordeal >= 0.0 && ordeal.is_finite()) {
            return Err(Error::invalid("ordeal", format!("{ordeal} must be finite and ≥ 0")));
        }
        if !(wait >= 0.0 && wait.is_finite()) {
            return Err(Error::invalid("wait", format!("{wait} must be finite and ≥ 0")));
        }
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::invalid("prob", format!("{prob} not in [0, 1]")));
        }
        Ok(WaitOption { ordeal, wait, prob })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaitMechanism {
    pub menu_a: Vec<WaitOption>,
    pub menu_b: Vec<WaitOption>,
}

impl WaitMechanism {
    pub fn new(menu_a: Vec<WaitOption>, menu_b: Vec<WaitOption>) -> Result<WaitMechanism> {
        if menu_a.is_empty() || menu_b.is_empty() {
            return Err(Error::EmptyMenu);
        }
        for o in menu_a.iter().chain(&menu_b) {
            WaitOption::new(o.ordeal, o.wait, o.prob)?;
        }
        Ok(WaitMechanism { menu_a, menu_b })
    }

    pub fn menu(&self, g: Good) -> &[WaitOption] {
        match g {
            Good::A => &self.menu_a,
            Good::B => &self.menu_b,
        }
    }

    fn min_positive_wait(&self) -> Option<f64> {
        self.menu_a
            .iter()
            .chain(&self.menu_b)
            .map(|o| o.wait)
            .filter(|w| *w > 0.0)
            .min_by(|x, y| x.total_cmp(y))
    }

    fn max_wait(&self) -> f64 {
        self.menu_a.iter().chain(&self.menu_b).map(|o| o.wait).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub rho: f64,
    pub dt: f64,
    pub horizon: f64,
    pub mu_a: f64,
    pub mu_b: f64,
    pub model: DensityModel,
    /// Route sampled agents instead of exact masses: this many per tick.
    pub agents_per_tick: Option<usize>,
}

impl SimConfig {
    pub fn validate(&self, wm: &WaitMechanism) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::invalid("rho", format!("{} must be positive", self.rho)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt", format!("{} must be positive", self.dt)));
        }
        if let Some(w) = wm.min_positive_wait() {
            if self.dt > w / 4.0 {
                return Err(Error::invalid("dt", format!("{} exceeds a quarter of the shortest wait {w}", self.dt)));
            }
        }
        if !(self.horizon >= self.dt) {
            return Err(Error::invalid("horizon", format!("{} shorter than one tick", self.horizon)));
        }
        if !(self.mu_a >= 0.0 && self.mu_b >= 0.0 && self.mu_a + self.mu_b <= 1.0 + 1e-12) {
            return Err(Error::invalid("mu_a", "supplies must be non-negative and sum to at most 1"));
        }
        if self.agents_per_tick == Some(0) {
            return Err(Error::invalid("agents_per_tick", "must be positive"));
        }
        Ok(())
    }
}

pub fn expected_discount(opt: &WaitOption, rho: f64) -> f64 {
    opt.prob * (-rho * opt.wait).exp()
}

fn equivalent_menu(menu: &[WaitOption], rho: f64) -> Vec<MenuOption> {
    menu.iter()
        .map(|o| MenuOption {
            quality: expected_discount(o, rho),
            ordeal: o.ordeal,
        })
        .collect()
}

/// The static mechanism offering `(p·e^{−ρt}, c)` for every wait option.
pub fn static_equivalent(wm: &WaitMechanism, rho: f64) -> Result<Mechanism> {
    if !(rho > 0.0) {
        return Err(Error::invalid("rho", format!("{rho} must be positive")));
    }
    Mechanism::new(equivalent_menu(&wm.menu_a, rho), equivalent_menu(&wm.menu_b, rho))
}

/// Choice masses of the static equivalent and whether they fit the supplies.
/// Service probabilities drop out: rejected agents come back.
pub fn steady_state_check(
    wm: &WaitMechanism,
    model: &DensityModel,
    mu_a: f64,
    mu_b: f64,
    rho: f64,
) -> Result<(bool, (f64, f64))> {
    let m = static_equivalent(wm, rho)?;
    let d = m.demand(model);
    Ok((d.0 <= mu_a + 1e-6 && d.1 <= mu_b + 1e-6, d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub time: f64,
    pub queue_a: f64,
    pub queue_b: f64,
    pub served_a: f64,
    pub served_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    /// total mass that failed its lottery and re-entered, per good
    pub reentered: (f64, f64),
    /// total arrival mass routed to each good
    pub arrived: (f64, f64),
}

impl Trajectory {
    /// Mean served flow per tick over rows with `time ≥ from`.
    pub fn mean_served_after(&self, from: f64) -> (f64, f64) {
        let tail: Vec<_> = self.rows.iter().filter(|r| r.time >= from).collect();
        let n = tail.len().max(1) as f64;
        (
            tail.iter().map(|r| r.served_a).sum::<f64>() / n,
            tail.iter().map(|r| r.served_b).sum::<f64>() / n,
        )
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        wtr.write_record(["time", "queue_a", "queue_b", "served_a", "served_b"]).map_err(io)?;
        for r in &self.rows {
            wtr.write_record(
                [r.time, r.queue_a, r.queue_b, r.served_a, r.served_b].map(|v| format!("{v:.8e}")),
            )
            .map_err(io)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// One waitlist option: a FIFO pipeline of cohorts, one slot per tick of
/// wait, plus a backlog of agents whose wait is over but who found no unit.
struct Lane {
    prob: f64,
    slots: std::collections::VecDeque<f64>,
    backlog: f64,
    inflow: f64,
}

impl Lane {
    fn new(opt: &WaitOption, dt: f64) -> Lane {
        let len = if opt.wait > 0.0 {
            ((opt.wait / dt).round() as usize).max(1)
        } else {
            0
        };
        Lane {
            prob: opt.prob,
            slots: std::iter::repeat_n(0.0, len).collect(),
            backlog: 0.0,
            inflow: 0.0,
        }
    }

    fn queued(&self) -> f64 {
        self.slots.iter().sum::<f64>() + self.backlog
    }
}

/// Mass routed to each wait option per unit of arrivals, for each good.
fn routing(wm: &WaitMechanism, mech: &Mechanism, model: &DensityModel, rho: f64) -> [Vec<f64>; 2] {
    let mut shares = [vec![0.0; wm.menu_a.len()], vec![0.0; wm.menu_b.len()]];
    for piece in mech.region_pieces() {
        let gi = piece.good as usize;
        let opt = mech.menu(piece.good)[piece.option];
        let j = wait_index(wm.menu(piece.good), opt, rho);
        shares[gi][j] += model.moments_convex(&piece.poly).mass;
    }
    shares
}

/// First wait option whose static equivalent is `opt`.
fn wait_index(menu: &[WaitOption], opt: MenuOption, rho: f64) -> usize {
    menu.iter()
        .position(|o| (expected_discount(o, rho) - opt.quality).abs() <= 1e-12 && (o.ordeal - opt.ordeal).abs() <= 1e-12)
        .unwrap_or(0)
}

/// Discrete-time flow simulation. Each tick a unit-rate population arrives
/// (mass `dt`), picks its favourite option, waits its full wait, and is
/// served with probability `p`; losers re-enter the same option at once.
/// Each good's service per tick is capped by its supply flow `μ·dt`, and
/// unused units perish.
pub fn simulate(wm: &WaitMechanism, cfg: &SimConfig, seed: u64) -> Result<Trajectory> {
    cfg.validate(wm)?;
    let mech = static_equivalent(wm, cfg.rho)?;
    let exact = routing(wm, &mech, &cfg.model, cfg.rho);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lanes: [Vec<Lane>; 2] = [
        wm.menu_a.iter().map(|o| Lane::new(o, cfg.dt)).collect(),
        wm.menu_b.iter().map(|o| Lane::new(o, cfg.dt)).collect(),
    ];
    let caps = [cfg.mu_a * cfg.dt, cfg.mu_b * cfg.dt];
    let ticks = (cfg.horizon / cfg.dt).round() as usize;
    let mut rows = Vec::with_capacity(ticks);
    let mut reentered = [0.0; 2];
    let mut arrived = [0.0; 2];
    for tick in 1..=ticks {
        // arrivals
        match cfg.agents_per_tick {
            None => {
                for g in 0..2 {
                    for (lane, share) in lanes[g].iter_mut().zip(&exact[g]) {
                        lane.inflow += share * cfg.dt;
                    }
                }
            }
            Some(n) => {
                let w = cfg.dt / n as f64;
                for _ in 0..n {
                    let (a, b) = cfg.model.sample(&mut rng);
                    if let Choice::Good(g) = mech.choose_good(a, b) {
                        let v = if g == Good::A { a } else { b };
                        if let Ok((_, Some(i))) = best_option(mech.menu(g), v) {
                            let j = wait_index(wm.menu(g), mech.menu(g)[i], cfg.rho);
                            lanes[g as usize][j].inflow += w;
                        }
                    }
                }
            }
        }
        let mut served = [0.0; 2];
        for g in 0..2 {
            // eligible mass: cohorts finishing their wait, plus zero-wait arrivals
            let mut eligible = Vec::with_capacity(lanes[g].len());
            for lane in lanes[g].iter_mut() {
                arrived[g] += lane.inflow;
                let due = if lane.slots.is_empty() {
                    std::mem::take(&mut lane.inflow)
                } else {
                    let head = lane.slots.pop_front().unwrap();
                    lane.slots.push_back(std::mem::take(&mut lane.inflow));
                    head
                };
                lane.backlog += due;
                eligible.push(lane.backlog);
            }
            // lottery winners; zero-wait lanes redraw until served within the tick
            let winners: Vec<f64> = lanes[g]
                .iter()
                .zip(&eligible)
                .map(|(l, e)| if l.slots.is_empty() && l.prob > 0.0 { *e } else { l.prob * e })
                .collect();
            let total: f64 = winners.iter().sum();
            let theta = if total > caps[g] { caps[g] / total } else { 1.0 };
            for ((lane, e), w) in lanes[g].iter_mut().zip(&eligible).zip(&winners) {
                let s = theta * w;
                served[g] += s;
                lane.backlog -= s;
                if lane.slots.is_empty() {
                    if lane.prob > 0.0 {
                        reentered[g] += s * (1.0 - lane.prob) / lane.prob;
                    }
                } else {
                    // losers of the draw start the wait again
                    let losers = (1.0 - lane.prob) * e;
                    lane.backlog -= losers;
                    reentered[g] += losers;
                    *lane.slots.back_mut().unwrap() += losers;
                }
                if lane.backlog < 1e-18 {
                    lane.backlog = lane.backlog.max(0.0);
                }
            }
        }
        let queue = |g: usize| lanes[g].iter().map(Lane::queued).sum::<f64>();
        rows.push(TrajectoryRow {
            time: tick as f64 * cfg.dt,
            queue_a: queue(0),
            queue_b: queue(1),
            served_a: served[0],
            served_b: served[1],
        });
    }
    Ok(Trajectory {
        rows,
        reentered: (reentered[0], reentered[1]),
        arrived: (arrived[0], arrived[1]),
    })
}

/// Burn-in used when comparing simulated and static flows: five longest waits.
pub fn burn_in(wm: &WaitMechanism) -> f64 {
    5.0 * wm.max_wait()
}
