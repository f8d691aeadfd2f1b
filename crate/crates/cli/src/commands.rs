use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ordeal_core::optimize::write_diagnostic_csv;
use ordeal_core::{
    check_assumption1, default_slopes, example1_compare, market_clearing_ordeals, multi_start_search,
    simulate, single_good_compare, slope_sweep, static_equivalent, stationarity_diagnostic,
    steady_state_check, ImplementationBundle, Mechanism, SimConfig, WaitMechanism, WaitOption,
};
use serde::Serialize;

use crate::scenario::Scenario;
use crate::{Command, Failure, Options};

fn fmt(v: f64) -> String {
    format!("{v:.8e}")
}

struct Out {
    dir: PathBuf,
}

impl Out {
    fn new(dir: &Path) -> Result<Out, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        Ok(Out { dir: dir.to_path_buf() })
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, Failure> {
        let p = self.dir.join(name);
        File::create(&p)
            .map(BufWriter::new)
            .map_err(|e| Failure::Io(format!("{}: {e}", p.display())))
    }

    fn text(&self, name: &str, body: &str) -> Result<(), Failure> {
        let mut f = self.create(name)?;
        f.write_all(body.as_bytes()).map_err(|e| Failure::Io(e.to_string()))?;
        f.flush().map_err(|e| Failure::Io(e.to_string()))
    }

    /// Writes a header and rows of numbers in fixed scientific notation.
    fn table(&self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<(), Failure> {
        let mut body = header.join(",");
        body.push('\n');
        for r in rows {
            body.push_str(&r.iter().map(|v| fmt(*v)).collect::<Vec<_>>().join(","));
            body.push('\n');
        }
        self.text(name, &body)
    }
}

#[derive(Serialize)]
struct SolveReport {
    c_a: f64,
    c_b: f64,
    demand_a: f64,
    demand_b: f64,
    residual: f64,
    iterations: usize,
    welfare: f64,
    revenue: f64,
    efficiency: f64,
}

pub fn run(cmd: Command, scenario: &Scenario, opts: &Options) -> Result<(), Failure> {
    let out = Out::new(&opts.out)?;
    let tol = opts.tol.unwrap_or(ordeal_core::market::DEFAULT_TOL);
    if !(tol > 0.0) {
        return Err(Failure::Validation(format!("tol: {tol} must be positive")));
    }
    match cmd {
        Command::Solve => solve(scenario, opts, tol, &out),
        Command::Sweep => sweep(scenario, opts, &out),
        Command::Search => search(scenario, opts, &out),
        Command::CheckConditions => check_conditions(scenario, opts, &out),
        Command::Example1 => example1(scenario, &out),
        Command::SingleGood => single_good(scenario, &out),
        Command::WaitlistSim => waitlist_sim(scenario, opts, tol, &out),
        Command::WrSweep => wr_sweep(scenario, opts, tol, &out),
    }
}

fn solve(s: &Scenario, opts: &Options, tol: f64, out: &Out) -> Result<(), Failure> {
    let mu = s.supplies()?;
    let model = s.model(opts.grid)?;
    let r = market_clearing_ordeals(&model, mu.mu_a, mu.mu_b, tol)?;
    let mech = Mechanism::posted(r.c_a, r.c_b)?;
    let o = mech.evaluate(&model);
    let report = SolveReport {
        c_a: r.c_a,
        c_b: r.c_b,
        demand_a: r.demand.0,
        demand_b: r.demand.1,
        residual: r.residual,
        iterations: r.iterations,
        welfare: o.welfare,
        revenue: o.revenue,
        efficiency: o.efficiency,
    };
    out.text("solve.toml", &toml::to_string(&report).expect("report serializes"))?;
    out.text("mechanism.toml", &mech.to_toml())?;
    r.write_csv(out.create("clearing.csv")?)?;
    println!("ordeals c_A = {:.6}, c_B = {:.6}, welfare {:.6}", r.c_a, r.c_b, o.welfare);
    Ok(())
}

fn sweep(s: &Scenario, opts: &Options, out: &Out) -> Result<(), Failure> {
    let mu = s.supplies()?;
    let model = s.model(opts.grid)?;
    let slopes = s.sweep.slopes.clone().unwrap_or_else(default_slopes);
    let r = slope_sweep(&model, mu.mu_a, mu.mu_b, &slopes)?;
    r.write_csv(out.create("sweep.csv")?)?;
    match r.argmax() {
        Some(best) => println!("best slope {} with welfare {:.6}", best.slope, best.welfare),
        None => println!("no feasible slope"),
    }
    Ok(())
}

fn search(s: &Scenario, opts: &Options, out: &Out) -> Result<(), Failure> {
    let mu = s.supplies()?;
    let model = s.model(opts.grid)?;
    let seeds = match &s.search.seeds {
        Some(v) => v.clone(),
        None => {
            let first = opts.seed.unwrap_or(0);
            (first..first + 5).collect()
        }
    };
    let r = multi_start_search(&model, mu.mu_a, mu.mu_b, s.search.knots, &seeds)?;
    out.text("boundary.toml", &r.best_boundary.to_toml())?;
    r.write_trace_csv(out.create("search_trace.csv")?)?;
    let bundle = ImplementationBundle::optimal(&r.best_boundary)?;
    out.text("implementation.toml", &bundle.to_toml())?;
    out.text("mechanism.toml", &bundle.mech.to_toml())?;
    bundle.write_csv(&model, s.search.samples, out.create("implementation.csv")?)?;
    write_diagnostic_csv(
        &stationarity_diagnostic(&r.best_boundary, &model),
        out.create("stationarity.csv")?,
    )?;
    println!("best welfare {:.6} over {} seeds", r.best_welfare, seeds.len());
    if !r.converged {
        return Err(Failure::Convergence("boundary search hit its evaluation budget".into()));
    }
    Ok(())
}

fn check_conditions(s: &Scenario, opts: &Options, out: &Out) -> Result<(), Failure> {
    let model = s.model(opts.grid)?;
    let resolution = s
        .conditions
        .resolution
        .or(opts.grid)
        .unwrap_or(ordeal_core::dist::DEFAULT_GRID);
    let report = check_assumption1(&model, resolution)?;
    out.text(
        "conditions.toml",
        &toml::to_string(&report).map_err(|e| Failure::Io(e.to_string()))?,
    )?;
    println!(
        "passes = {}, continuity_ok = {}, {} violations",
        report.passes,
        report.continuity_ok,
        report.violations.len()
    );
    Ok(())
}

fn example1(s: &Scenario, out: &Out) -> Result<(), Failure> {
    let k = s.example1.k;
    let mut rows = Vec::new();
    for &e in &s.example1.epsilons {
        let (wo, wd) = example1_compare(e, k)?;
        rows.push(vec![e, k, wo, wd, wd - wo]);
    }
    out.table("example1.csv", &["epsilon", "k", "w_ordeal", "w_damage", "gap"], &rows)
}

fn single_good(s: &Scenario, out: &Out) -> Result<(), Failure> {
    let f = s.one_dim()?;
    let b = s.single_good.b_out;
    let mut rows = Vec::new();
    for &c in &s.single_good.cutoffs {
        let (wo, wd) = single_good_compare(&f, b, c)?;
        rows.push(vec![b, c, wo, wd, wo - wd]);
    }
    out.table("single_good.csv", &["b_out", "cutoff", "w_ordeal", "w_damage", "gap"], &rows)
}

fn waitlist_sim(s: &Scenario, opts: &Options, tol: f64, out: &Out) -> Result<(), Failure> {
    let mu = s.supplies()?;
    let model = s.model(opts.grid)?;
    let w = &s.waitlist;
    let wm = match s.wait_menus()? {
        Some(wm) => wm,
        None => {
            let r = market_clearing_ordeals(&model, mu.mu_a, mu.mu_b, tol)?;
            WaitMechanism::new(vec![WaitOption::new(r.c_a, 0.0, 1.0)?], vec![WaitOption::new(r.c_b, 0.0, 1.0)?])?
        }
    };
    let cfg = SimConfig {
        rho: w.rho,
        dt: w.dt,
        horizon: w.horizon,
        mu_a: mu.mu_a,
        mu_b: mu.mu_b,
        model: model.clone(),
        agents_per_tick: w.agents_per_tick,
    };
    let (steady, masses) = steady_state_check(&wm, &model, mu.mu_a, mu.mu_b, w.rho)?;
    let traj = simulate(&wm, &cfg, opts.seed.unwrap_or(0))?;
    traj.write_csv(out.create("trajectory.csv")?)?;
    out.text("static_mechanism.toml", &static_equivalent(&wm, w.rho)?.to_toml())?;
    println!(
        "steady state {}: static demand ({:.6}, {:.6}), {} ticks",
        if steady { "holds" } else { "fails" },
        masses.0,
        masses.1,
        traj.rows.len()
    );
    Ok(())
}

fn wr_sweep(s: &Scenario, opts: &Options, tol: f64, out: &Out) -> Result<(), Failure> {
    let mu = s.supplies()?;
    let model = s.model(opts.grid)?;
    let r = market_clearing_ordeals(&model, mu.mu_a, mu.mu_b, tol)?;
    let mech = Mechanism::posted(r.c_a, r.c_b)?;
    let o = mech.evaluate(&model);
    let mut rows = Vec::new();
    for &g in &s.wr.gammas {
        rows.push(vec![g, mech.objective_wr(&model, g)?, o.welfare, o.revenue]);
    }
    out.table("wr_sweep.csv", &["gamma", "objective", "welfare", "revenue"], &rows)?;
    out.text("mechanism.toml", &mech.to_toml())
}
