use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::generators::{DriverF, DriverG, Terminal};
use crate::error::{Error, Result};
use crate::path_calculus::{LagMeasure, TimeGrid, MAX_SEGMENT_DIM};
use crate::registry::{ComponentSpec, Registry};
use crate::stochastic_engine::{realize_increasing_process, simulate_brownian, IncreasingProcess, PathEnsemble};

/// Bound process for the delayed-argument Lipschitz constants `K`, `K~`.
///
/// JSON: a number, `{"table": [[t, k], ...]}` (right-continuous steps), or
/// `{"bounded_w": {"base": .., "scale": .., "cap": ..}}` meaning
/// `min(cap, base + scale |W(t)|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KBound {
    Constant(f64),
    Table { table: Vec<[f64; 2]> },
    BoundedW { bounded_w: BoundedW },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundedW {
    pub base: f64,
    pub scale: f64,
    pub cap: f64,
}

impl Default for KBound {
    fn default() -> Self {
        KBound::Constant(0.0)
    }
}

impl KBound {
    pub fn validate(&self, what: &str) -> Result<()> {
        let bad = |m: String| Error::Config {
            path: format!("constants.{what}"),
            message: m,
        };
        match self {
            KBound::Constant(k) => {
                if !(*k >= 0.0) || !k.is_finite() {
                    return Err(bad(format!("must be a finite value >= 0, got {k}")));
                }
            }
            KBound::Table { table } => {
                if table.is_empty() {
                    return Err(bad("table is empty".into()));
                }
                if table.iter().any(|r| !(r[1] >= 0.0) || !r[1].is_finite()) {
                    return Err(bad("table values must be finite and >= 0".into()));
                }
                if table.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                    return Err(bad("table times must be strictly increasing".into()));
                }
            }
            KBound::BoundedW { bounded_w: b } => {
                if !(b.base >= 0.0 && b.scale >= 0.0 && b.cap >= 0.0) || !b.cap.is_finite() {
                    return Err(bad("base, scale, cap must be >= 0 and cap finite".into()));
                }
            }
        }
        Ok(())
    }

    /// `K(t, omega)` with `w` the Brownian value at `t`.
    pub fn value(&self, t: f64, w: &[f64]) -> f64 {
        match self {
            KBound::Constant(k) => *k,
            KBound::Table { table } => {
                let mut v = table[0][1];
                for r in table {
                    if r[0] <= t {
                        v = r[1];
                    }
                }
                v
            }
            KBound::BoundedW { bounded_w: b } => {
                let n: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                (b.base + b.scale * n).min(b.cap)
            }
        }
    }

    /// `K_1 = sup_t K(t)` along one Brownian path (node-major, `d` wide).
    pub fn path_sup(&self, grid: &TimeGrid, w_path: &[f64], d: usize) -> f64 {
        match self {
            KBound::Constant(k) => *k,
            _ => (0..grid.len())
                .map(|i| self.value(grid.t(i), &w_path[i * d..(i + 1) * d]))
                .fold(0.0, f64::max),
        }
    }

    /// Deterministic upper bound over all `(t, omega)`.
    pub fn global_sup(&self) -> f64 {
        match self {
            KBound::Constant(k) => *k,
            KBound::Table { table } => table.iter().map(|r| r[1]).fold(0.0, f64::max),
            KBound::BoundedW { bounded_w: b } => b.cap,
        }
    }
}

/// Structural constants shared by the standing assumptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    pub beta: f64,
    /// `L`: Lipschitz constant of `F` in `(y, z)`.
    pub lipschitz: f64,
    /// `L~`: Lipschitz constant of `G` in `y`.
    pub lipschitz_g: f64,
    /// Smallness constant `c`.
    pub c: f64,
    #[serde(default)]
    pub k: KBound,
    #[serde(default)]
    pub k_tilde: KBound,
}

fn one() -> usize {
    1
}

/// JSON description of a delayed BSDE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub horizon: f64,
    pub delay: f64,
    #[serde(default = "one")]
    pub m: usize,
    #[serde(default = "one")]
    pub d: usize,
    pub terminal: ComponentSpec,
    pub driver_f: ComponentSpec,
    pub driver_g: ComponentSpec,
    pub increasing_process: ComponentSpec,
    pub constants: Constants,
    /// `[[theta, weight], ...]` on `[-delay, 0]`; a point mass at `-delay` if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_tilde: Option<Vec<[f64; 2]>>,
}

/// A validated problem bound to a grid, with every component resolved.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: ProblemConfig,
    pub grid: Arc<TimeGrid>,
    pub terminal: Arc<dyn Terminal>,
    pub f: Arc<dyn DriverF>,
    pub g: Arc<dyn DriverG>,
    pub a_spec: Arc<dyn IncreasingProcess>,
    pub rho: LagMeasure,
    pub rho_tilde: LagMeasure,
}

impl ProblemConfig {
    /// Field-level checks that need neither a grid nor the registry.
    pub fn check_fields(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut push = |p: &str, m: String| out.push((p.to_string(), m));
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            push("horizon", format!("must be positive, got {}", self.horizon));
        }
        if !(self.delay > 0.0) || self.delay > self.horizon {
            push("delay", format!("must lie in (0, horizon], got {}", self.delay));
        }
        if self.m == 0 || self.d == 0 || self.m * self.d > MAX_SEGMENT_DIM {
            push(
                "m",
                format!("need m, d >= 1 and m * d <= {MAX_SEGMENT_DIM}, got m = {}, d = {}", self.m, self.d),
            );
        }
        let c = &self.constants;
        for (name, v) in [("beta", c.beta), ("lipschitz", c.lipschitz), ("lipschitz_g", c.lipschitz_g), ("c", c.c)] {
            if !(v > 0.0) || !v.is_finite() {
                push(&format!("constants.{name}"), format!("must be positive, got {v}"));
            }
        }
        if c.beta <= 2.0 * 2f64.sqrt() * c.lipschitz_g {
            push(
                "constants.beta",
                format!(
                    "beta <= 2*sqrt(2)*L~ ({} <= {:.6})",
                    c.beta,
                    2.0 * 2f64.sqrt() * c.lipschitz_g
                ),
            );
        } else if c.c > 0.0 {
            let thr = super::assumptions::c_threshold_unchecked(c.beta, c.lipschitz_g);
            if c.c >= thr {
                push(
                    "constants.c",
                    format!("c = {} is not below c_threshold(beta, L~) = {thr:.6e}", c.c),
                );
            }
        }
        for (name, k) in [("k", &c.k), ("k_tilde", &c.k_tilde)] {
            if let Err(e) = k.validate(name) {
                push(&format!("constants.{name}"), e.to_string());
            }
        }
        out
    }

    /// Grid with `n_steps` uniform steps carrying this problem's delay.
    pub fn grid(&self, n_steps: usize) -> Result<TimeGrid> {
        TimeGrid::uniform_with_delay(self.horizon, n_steps, self.delay)
    }
}

impl Problem {
    pub fn build(config: ProblemConfig, registry: &Registry, n_steps: usize) -> Result<Self> {
        if let Some((path, message)) = config.check_fields().into_iter().next() {
            if path == "constants.beta" {
                return Err(Error::ConstraintViolation(message));
            }
            return Err(Error::Config { path, message });
        }
        let grid = Arc::new(config.grid(n_steps)?);
        Self::build_on(config, registry, grid)
    }

    /// Builds against an existing grid, which must carry the problem's delay.
    pub fn build_on(config: ProblemConfig, registry: &Registry, grid: Arc<TimeGrid>) -> Result<Self> {
        let span = grid
            .delay()
            .ok_or_else(|| Error::GridAlignment("grid carries no delay".into()))?;
        if (span.delta - config.delay).abs() > grid.tolerance()
            || (grid.horizon() - config.horizon).abs() > grid.tolerance()
        {
            return Err(Error::GridAlignment(format!(
                "grid (T = {}, delta = {}) does not match the problem (T = {}, delta = {})",
                grid.horizon(),
                span.delta,
                config.horizon,
                config.delay
            )));
        }
        let measure = |atoms: &Option<Vec<[f64; 2]>>, name: &str| -> Result<LagMeasure> {
            match atoms {
                None => LagMeasure::dirac_at_delay(&grid),
                Some(a) => {
                    let pairs: Vec<(f64, f64)> = a.iter().map(|r| (r[0], r[1])).collect();
                    LagMeasure::project(&pairs, &grid).map_err(|e| Error::Config {
                        path: name.to_string(),
                        message: e.to_string(),
                    })
                }
            }
        };
        let rho = measure(&config.rho, "rho")?;
        let rho_tilde = measure(&config.rho_tilde, "rho_tilde")?;
        let terminal = registry.build_terminal(&config.terminal)?;
        let f = registry.build_f(&config.driver_f)?;
        let g = registry.build_g(&config.driver_g)?;
        let a_spec = registry.build_increasing(&config.increasing_process)?;
        Ok(Self {
            config,
            grid,
            terminal,
            f,
            g,
            a_spec,
            rho,
            rho_tilde,
        })
    }

    pub fn m(&self) -> usize {
        self.config.m
    }

    pub fn d(&self) -> usize {
        self.config.d
    }

    pub fn constants(&self) -> &Constants {
        &self.config.constants
    }

    pub fn delay_steps(&self) -> usize {
        self.grid.delay_steps().expect("problem grids carry a delay")
    }

    /// Simulates `W` on the problem grid and realizes `A` on it.
    pub fn simulate(&self, n_paths: usize, seed: u64) -> Result<PathEnsemble> {
        let mut ens = simulate_brownian(self.grid.clone(), n_paths, self.d(), seed)?;
        realize_increasing_process(self.a_spec.as_ref(), &mut ens)?;
        Ok(ens)
    }
}
