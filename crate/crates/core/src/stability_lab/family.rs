use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::model::{check_h1, check_h2, probe_lipschitz, KBound, Problem, ProblemConfig};
use crate::registry::{ComponentSpec, Registry};
use crate::stochastic_engine::PathEnsemble;

/// Overrides for one member of a perturbation family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberConfig {
    pub n: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<ComponentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver_f: Option<ComponentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver_g: Option<ComponentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub increasing_process: Option<ComponentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<KBound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_tilde: Option<KBound>,
}

impl MemberConfig {
    fn bare(n: f64) -> Self {
        Self {
            n,
            terminal: None,
            driver_f: None,
            driver_g: None,
            increasing_process: None,
            k: None,
            k_tilde: None,
        }
    }
}

/// Built-in member generators applied to the base problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Generate {
    /// Members equal to the base.
    Identical { ns: Vec<f64> },
    /// `xi_n = xi + 1/n`.
    XiShift { ns: Vec<f64> },
    /// `A_n(t) = A(t) + T sin(2 pi n t / T) / (4 pi n)`.
    OscillatoryA { ns: Vec<f64> },
    /// `F_n = F + 1/n`.
    FOffset { ns: Vec<f64> },
    /// `F_n = F + sin(y)/n` componentwise.
    FSine { ns: Vec<f64> },
}

type Apply = fn(&ProblemConfig, f64, &mut MemberConfig);

impl Generate {
    fn expand(&self, base: &ProblemConfig) -> Vec<MemberConfig> {
        let (ns, f): (&Vec<f64>, Apply) = match self {
            Generate::Identical { ns } => (ns, |_, _, _| {}),
            Generate::XiShift { ns } => (ns, |b, n, m| {
                m.terminal = Some(ComponentSpec::new("shifted", json!({"base": b.terminal, "shift": 1.0 / n})));
            }),
            Generate::OscillatoryA { ns } => (ns, |b, n, m| {
                m.increasing_process = Some(ComponentSpec::new(
                    "oscillatory",
                    json!({"base": b.increasing_process, "n": n}),
                ));
            }),
            Generate::FOffset { ns } => (ns, |b, n, m| {
                m.driver_f = Some(ComponentSpec::new("perturbed", json!({"base": b.driver_f, "offset": 1.0 / n})));
            }),
            Generate::FSine { ns } => (ns, |b, n, m| {
                m.driver_f = Some(ComponentSpec::new("perturbed", json!({"base": b.driver_f, "sine": 1.0 / n})));
            }),
        };
        ns.iter()
            .map(|&n| {
                let mut m = MemberConfig::bare(n);
                f(base, n, &mut m);
                m
            })
            .collect()
    }
}

fn two() -> f64 {
    2.0
}

/// JSON description of a perturbation family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub base: ProblemConfig,
    #[serde(default)]
    pub members: Vec<MemberConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<Generate>,
    /// Moment exponent, `> 1`.
    #[serde(default = "two")]
    pub p: f64,
}

impl FamilyConfig {
    /// Explicit members followed by generated ones, ordered by `n`.
    pub fn member_configs(&self) -> Vec<MemberConfig> {
        let mut out = self.members.clone();
        if let Some(g) = &self.generate {
            out.extend(g.expand(&self.base));
        }
        out.sort_by(|a, b| a.n.total_cmp(&b.n));
        out
    }

    pub fn member_problem(&self, m: &MemberConfig) -> ProblemConfig {
        let mut c = self.base.clone();
        if let Some(v) = &m.terminal {
            c.terminal = v.clone();
        }
        if let Some(v) = &m.driver_f {
            c.driver_f = v.clone();
        }
        if let Some(v) = &m.driver_g {
            c.driver_g = v.clone();
        }
        if let Some(v) = &m.increasing_process {
            c.increasing_process = v.clone();
        }
        if let Some(v) = &m.k {
            c.constants.k = v.clone();
        }
        if let Some(v) = &m.k_tilde {
            c.constants.k_tilde = v.clone();
        }
        c
    }

    pub fn check_fields(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = self
            .base
            .check_fields()
            .into_iter()
            .map(|(p, m)| (format!("base.{p}"), m))
            .collect();
        if !(self.p > 1.0) || !self.p.is_finite() {
            out.push(("p".into(), format!("must be > 1, got {}", self.p)));
        }
        let members = self.member_configs();
        if members.is_empty() {
            out.push(("members".into(), "family has no members".into()));
        }
        for (i, m) in members.iter().enumerate() {
            if !(m.n > 0.0) || !m.n.is_finite() {
                out.push((format!("members[{i}].n"), format!("must be positive, got {}", m.n)));
            }
            if i > 0 && members[i - 1].n == m.n {
                out.push((format!("members[{i}].n"), format!("duplicate index {}", m.n)));
            }
        }
        out
    }
}

/// A base problem and its members, all on one grid with shared constants.
#[derive(Debug, Clone)]
pub struct PerturbationFamily {
    pub base: Arc<Problem>,
    pub members: Vec<(f64, Arc<Problem>)>,
    pub p: f64,
    pub q: f64,
}

fn label(n: f64) -> String {
    format!("n = {n}")
}

impl PerturbationFamily {
    pub fn build(config: &FamilyConfig, registry: &Registry, n_steps: usize) -> Result<Self> {
        if let Some((path, message)) = config.check_fields().into_iter().next() {
            if path == "base.constants.beta" {
                return Err(Error::ConstraintViolation(message));
            }
            return Err(Error::Config { path, message });
        }
        let base = Problem::build(config.base.clone(), registry, n_steps)?;
        let grid = base.grid.clone();
        let members = config
            .member_configs()
            .iter()
            .map(|m| {
                let pc = config.member_problem(m);
                if let Some((path, reason)) = pc.check_fields().into_iter().next() {
                    return Err(Error::FamilyInvalid {
                        member: label(m.n),
                        reason: format!("{path}: {reason}"),
                    });
                }
                let p = Problem::build_on(pc, registry, grid.clone()).map_err(|e| Error::FamilyInvalid {
                    member: label(m.n),
                    reason: e.to_string(),
                })?;
                Ok((m.n, Arc::new(p)))
            })
            .collect::<Result<Vec<_>>>()?;
        let p = config.p;
        let q = p / (p - 1.0);
        Ok(Self {
            base: Arc::new(base),
            members,
            p,
            q,
        })
    }

    /// Probes every member's declared constants and evaluates both smallness
    /// conditions on its ensemble; the first failure names the member.
    pub fn validate_members(&self, ensembles: &[PathEnsemble], probe_samples: usize) -> Result<()> {
        let c = self.base.constants().c;
        for ((n, problem), ens) in self.members.iter().zip(ensembles) {
            let (pf, pg) = probe_lipschitz(problem, probe_samples, 0);
            if let Some(v) = pf.violations.iter().chain(&pg.violations).next() {
                return Err(Error::FamilyInvalid {
                    member: label(*n),
                    reason: v.clone(),
                });
            }
            for report in [check_h1(problem, ens, c)?, check_h2(problem, ens, c)?] {
                if !report.all_pass() {
                    return Err(Error::FamilyInvalid {
                        member: label(*n),
                        reason: format!(
                            "{} fails (worst lhs {:.6e} > c = {:.6e})",
                            report.name,
                            report.worst_lhs(),
                            c
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}
