//! Scenario files: one TOML document per experiment.
//!
//! ```toml
//! [distribution]
//! kind = "uniform"          # or "csv" (path), "example1" (epsilon, k), "beta"
//!
//! [supplies]
//! mu_a = 0.25
//! mu_b = 0.25
//! ```
//!
//! Every other table is optional and only read by the command that needs it.

use std::path::{Path, PathBuf};

use ordeal_core::dist::DEFAULT_GRID;
use ordeal_core::{DensityModel, OneDimDensity, WaitMechanism, WaitOption};
use serde::Deserialize;

use crate::Failure;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub distribution: Distribution,
    pub supplies: Option<Supplies>,
    #[serde(default)]
    pub sweep: SweepParams,
    #[serde(default)]
    pub search: SearchParams,
    #[serde(default)]
    pub conditions: ConditionParams,
    #[serde(default)]
    pub example1: Example1Params,
    #[serde(default)]
    pub single_good: SingleGoodParams,
    #[serde(default)]
    pub waitlist: WaitlistParams,
    #[serde(default)]
    pub wr: WrParams,
    /// directory of the scenario file, for resolving relative paths
    #[serde(skip)]
    pub base: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Distribution {
    Uniform,
    Csv { path: PathBuf },
    Example1 { epsilon: f64, k: f64 },
    /// product of Beta kernels `a^(α−1)(1−a)^(β−1)`, tabulated on the grid
    Beta {
        alpha_a: f64,
        beta_a: f64,
        alpha_b: f64,
        beta_b: f64,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Supplies {
    pub mu_a: f64,
    pub mu_b: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    pub slopes: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchParams {
    pub knots: usize,
    pub seeds: Option<Vec<u64>>,
    /// rows in the implementation table
    pub samples: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            knots: 4,
            seeds: None,
            samples: 201,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionParams {
    pub resolution: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Example1Params {
    pub epsilons: Vec<f64>,
    pub k: f64,
}

impl Default for Example1Params {
    fn default() -> Self {
        Example1Params {
            epsilons: vec![0.02, 0.05, 0.08],
            k: 0.3,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SingleGoodParams {
    pub b_out: f64,
    pub cutoffs: Vec<f64>,
    /// histogram of A-values; uniform when absent
    pub bins: Option<Vec<f64>>,
}

impl Default for SingleGoodParams {
    fn default() -> Self {
        SingleGoodParams {
            b_out: 0.2,
            cutoffs: vec![0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            bins: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaitOptionSpec {
    pub ordeal: f64,
    #[serde(default)]
    pub wait: f64,
    #[serde(default = "one")]
    pub prob: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaitlistParams {
    pub rho: f64,
    pub dt: f64,
    pub horizon: f64,
    pub agents_per_tick: Option<usize>,
    /// menus; when both are absent the market-clearing ordeals are posted
    pub menu_a: Option<Vec<WaitOptionSpec>>,
    pub menu_b: Option<Vec<WaitOptionSpec>>,
}

impl Default for WaitlistParams {
    fn default() -> Self {
        WaitlistParams {
            rho: 0.1,
            dt: 0.01,
            horizon: 10.0,
            agents_per_tick: None,
            menu_a: None,
            menu_b: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WrParams {
    pub gammas: Vec<f64>,
}

impl Default for WrParams {
    fn default() -> Self {
        WrParams {
            gammas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

fn invalid(field: &str, reason: impl std::fmt::Display) -> Failure {
    Failure::Validation(format!("{field}: {reason}"))
}

fn check_unit(field: &str, v: f64) -> Result<(), Failure> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} not in [0, 1]")))
    }
}

impl Scenario {
    pub fn parse(text: &str, base: &Path) -> Result<Scenario, Failure> {
        let mut s: Scenario = toml::from_str(text).map_err(|e| Failure::Validation(e.to_string()))?;
        s.base = base.to_path_buf();
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Scenario::parse(&text, base)
    }

    fn validate(&self) -> Result<(), Failure> {
        if let Distribution::Beta {
            alpha_a,
            beta_a,
            alpha_b,
            beta_b,
        } = self.distribution
        {
            for (f, v) in [
                ("distribution.alpha_a", alpha_a),
                ("distribution.beta_a", beta_a),
                ("distribution.alpha_b", alpha_b),
                ("distribution.beta_b", beta_b),
            ] {
                if !(v >= 1.0 && v.is_finite()) {
                    return Err(invalid(f, format!("{v} must be at least 1 to keep the density bounded")));
                }
            }
        }
        if let Some(s) = self.supplies {
            check_unit("supplies.mu_a", s.mu_a)?;
            check_unit("supplies.mu_b", s.mu_b)?;
        }
        if self.search.knots < 2 {
            return Err(invalid("search.knots", "need at least 2"));
        }
        if matches!(&self.search.seeds, Some(s) if s.is_empty()) {
            return Err(invalid("search.seeds", "empty list"));
        }
        if matches!(self.conditions.resolution, Some(r) if r < 8) {
            return Err(invalid("conditions.resolution", "must be at least 8"));
        }
        for &g in &self.wr.gammas {
            check_unit("wr.gammas", g)?;
        }
        check_unit("single_good.b_out", self.single_good.b_out)?;
        for &c in &self.single_good.cutoffs {
            check_unit("single_good.cutoffs", c)?;
        }
        if self.waitlist.menu_a.is_some() != self.waitlist.menu_b.is_some() {
            return Err(invalid("waitlist.menu_a", "give both menus or neither"));
        }
        Ok(())
    }

    pub fn supplies(&self) -> Result<Supplies, Failure> {
        self.supplies
            .ok_or_else(|| invalid("supplies", "this command needs a [supplies] table"))
    }

    pub fn model(&self, grid: Option<usize>) -> Result<DensityModel, Failure> {
        let n = grid.unwrap_or(DEFAULT_GRID);
        if n == 0 {
            return Err(invalid("grid", "must be positive"));
        }
        Ok(match &self.distribution {
            Distribution::Uniform => DensityModel::uniform(),
            Distribution::Csv { path } => DensityModel::from_csv(&self.base.join(path))
                .map_err(|e| invalid("distribution.path", e))?,
            Distribution::Example1 { epsilon, k } => {
                DensityModel::example1(*epsilon, *k).map_err(|e| invalid("distribution", e))?
            }
            &Distribution::Beta {
                alpha_a,
                beta_a,
                alpha_b,
                beta_b,
            } => {
                let kern = |x: f64, p: f64, q: f64| x.powf(p - 1.0) * (1.0 - x).powf(q - 1.0);
                DensityModel::from_fn(n, |a, b| kern(a, alpha_a, beta_a) * kern(b, alpha_b, beta_b))
                    .map_err(|e| invalid("distribution", e))?
            }
        })
    }

    pub fn one_dim(&self) -> Result<OneDimDensity, Failure> {
        match &self.single_good.bins {
            None => Ok(OneDimDensity::uniform()),
            Some(b) => OneDimDensity::from_bins(b.clone()).map_err(|e| invalid("single_good.bins", e)),
        }
    }

    /// Explicit wait menus, if the scenario gives them.
    pub fn wait_menus(&self) -> Result<Option<WaitMechanism>, Failure> {
        let (Some(a), Some(b)) = (&self.waitlist.menu_a, &self.waitlist.menu_b) else {
            return Ok(None);
        };
        let conv = |field: &str, v: &[WaitOptionSpec]| -> Result<Vec<WaitOption>, Failure> {
            v.iter()
                .map(|o| WaitOption::new(o.ordeal, o.wait, o.prob).map_err(|e| invalid(field, e)))
                .collect()
        };
        WaitMechanism::new(conv("waitlist.menu_a", a)?, conv("waitlist.menu_b", b)?)
            .map(Some)
            .map_err(|e| invalid("waitlist", e))
    }
}
