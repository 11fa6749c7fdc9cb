//! JSON-configured experiments: validation, dispatch and artifact emission.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::csv_io::fmt_f64;
use crate::error::{Error, Result};
use crate::model::{
    c_threshold, check_h1, check_h2, check_integrability, probe_lipschitz, select_lambda, Problem, ProblemConfig,
};
use crate::picard_solver::{contraction_report, iterate, Scheme, Solution, SolveOptions, Verdict, DEFAULT_SLACK};
use crate::registry::Registry;
use crate::stability_lab::{
    run_helly_bray, run_stability, FamilyConfig, HellyBrayConfig, HellyBrayReport, HellyBrayVerdict, PerturbationFamily,
    SampleSpec, StabilityOptions,
};
use crate::stochastic_engine::{BasisConfig, PathField};

/// Sample paths written next to the path average.
pub const SAMPLE_PATHS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    CheckAssumptions,
    Solve,
    Stability,
    HellyBray,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub seed: u64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub basis: BasisConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_paths: 10_000,
            n_steps: 100,
            basis: BasisConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub scheme: Scheme,
    pub override_assumptions: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            scheme: Scheme::default(),
            override_assumptions: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySettings {
    pub threshold: f64,
    pub sample: SampleSpec,
    pub nu_grid: Vec<f64>,
    pub probe_samples: usize,
}

impl Default for StabilitySettings {
    fn default() -> Self {
        let d = StabilityOptions::default();
        Self {
            threshold: d.threshold,
            sample: d.sample,
            nu_grid: d.nu_grid,
            probe_samples: d.probe_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssumptionSettings {
    /// Moment exponent of the integrability table.
    pub p: f64,
    /// Exponents `r` of the `E e^{r beta A(T)}` ladder.
    pub r_ladder: Vec<f64>,
    pub probe_samples: usize,
}

impl Default for AssumptionSettings {
    fn default() -> Self {
        Self {
            p: 2.0,
            r_ladder: vec![1.0, 2.0, 4.0],
            probe_samples: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub helly_bray: Option<HellyBrayConfig>,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub stability: StabilitySettings,
    #[serde(default)]
    pub assumptions: AssumptionSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// One validation finding, addressed by JSON path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Command-line overrides applied on top of a parsed config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_paths: Option<usize>,
    pub n_steps: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.engine.seed = v;
        }
        if let Some(v) = o.n_paths {
            self.engine.n_paths = v;
        }
        if let Some(v) = o.n_steps {
            self.engine.n_steps = v;
        }
        if let Some(v) = o.tol {
            self.solver.tol = v;
        }
        if let Some(v) = o.max_iter {
            self.solver.max_iter = v;
        }
        if let Some(v) = &o.out {
            self.out = Some(v.clone());
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        let mut o = SolveOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            override_assumptions: self.solver.override_assumptions,
            ..Default::default()
        };
        o.gamma.basis = self.engine.basis.clone();
        o.gamma.scheme = self.solver.scheme;
        o
    }

    pub fn stability_options(&self) -> StabilityOptions {
        StabilityOptions {
            solve: self.solve_options(),
            sample: self.stability.sample,
            threshold: self.stability.threshold,
            nu_grid: self.stability.nu_grid.clone(),
            probe_samples: self.stability.probe_samples,
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Parses config text; the error names the offending JSON path.
pub fn parse_config(text: &str) -> std::result::Result<ExperimentConfig, Diagnostic> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Diagnostic::new(if path == "." { "$".into() } else { path }, e.into_inner().to_string())
    })
}

/// Reads a config file; `problem`, `family` and `helly_bray` may be given as
/// paths to separate JSON files, resolved relative to the config.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    let mut value: Value = serde_json::from_str(&text).map_err(|e| Error::Config {
        path: "$".into(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    if let Some(obj) = value.as_object_mut() {
        for key in ["problem", "family", "helly_bray"] {
            if let Some(Value::String(file)) = obj.get(key) {
                let p = base.join(file);
                let inner = fs::read_to_string(&p).map_err(|e| Error::Config {
                    path: key.into(),
                    message: format!("cannot read {}: {e}", p.display()),
                })?;
                let v: Value = serde_json::from_str(&inner).map_err(|e| Error::Config {
                    path: key.into(),
                    message: format!("{}: {e}", p.display()),
                })?;
                obj.insert(key.into(), v);
            }
        }
    }
    parse_config(&value.to_string()).map_err(|d| Error::Config {
        path: d.path,
        message: d.message,
    })
}

fn prefixed(prefix: &str, items: Vec<(String, String)>) -> impl Iterator<Item = Diagnostic> + '_ {
    items.into_iter().map(move |(p, m)| Diagnostic::new(format!("{prefix}.{p}"), m))
}

fn build_diagnostic(prefix: &str, e: Error) -> Diagnostic {
    match e {
        Error::GridAlignment(m) => Diagnostic::new("engine.n_steps", m),
        Error::Config { path, message } => Diagnostic::new(format!("{prefix}.{path}"), message),
        e => Diagnostic::new(prefix, e.to_string()),
    }
}

/// Schema-level and cross-field checks without running anything.
pub fn validate(config: &ExperimentConfig, registry: &Registry) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let e = &config.engine;
    if e.n_paths < 2 {
        out.push(Diagnostic::new("engine.n_paths", format!("need at least 2 paths, got {}", e.n_paths)));
    }
    if e.n_steps == 0 {
        out.push(Diagnostic::new("engine.n_steps", "must be at least 1"));
    }
    if let Err(err) = e.basis.validate() {
        out.push(Diagnostic::new("engine.basis", err.to_string()));
    }
    let s = &config.solver;
    if !(s.tol > 0.0) || !s.tol.is_finite() {
        out.push(Diagnostic::new("solver.tol", format!("must be positive, got {}", s.tol)));
    }
    if s.max_iter == 0 {
        out.push(Diagnostic::new("solver.max_iter", "must be at least 1"));
    }
    let st = &config.stability;
    if !(st.threshold > 0.0) {
        out.push(Diagnostic::new("stability.threshold", format!("must be positive, got {}", st.threshold)));
    }
    if !(st.sample.radius > 0.0) || st.sample.samples == 0 {
        out.push(Diagnostic::new("stability.sample", "needs a positive radius and sample count"));
    }
    let a = &config.assumptions;
    if !(a.p > 1.0) {
        out.push(Diagnostic::new("assumptions.p", format!("must be > 1, got {}", a.p)));
    }
    if !out.is_empty() {
        return out;
    }

    let need = |name: &str| Diagnostic::new(name, format!("required for mode {:?}", config.mode));
    match config.mode {
        Mode::CheckAssumptions | Mode::Solve => match &config.problem {
            None => out.push(need("problem")),
            Some(p) => out.extend(validate_problem(p, registry, e.n_steps)),
        },
        Mode::Stability => {
            match &config.family {
                None => out.push(need("family")),
                Some(f) => {
                    let fields: Vec<Diagnostic> = prefixed("family", f.check_fields()).collect();
                    if fields.is_empty() {
                        if let Err(err) = PerturbationFamily::build(f, registry, e.n_steps) {
                            out.push(build_diagnostic("family", err));
                        }
                    }
                    out.extend(fields);
                }
            }
            if let Some(h) = &config.helly_bray {
                out.extend(validate_helly_bray(h, registry));
            }
        }
        Mode::HellyBray => match &config.helly_bray {
            None => out.push(need("helly_bray")),
            Some(h) => out.extend(validate_helly_bray(h, registry)),
        },
    }
    out
}

fn validate_problem(p: &ProblemConfig, registry: &Registry, n_steps: usize) -> Vec<Diagnostic> {
    let fields: Vec<Diagnostic> = prefixed("problem", p.check_fields()).collect();
    if !fields.is_empty() {
        return fields;
    }
    match Problem::build(p.clone(), registry, n_steps) {
        Ok(_) => Vec::new(),
        Err(e) => vec![build_diagnostic("problem", e)],
    }
}

fn validate_helly_bray(h: &HellyBrayConfig, registry: &Registry) -> Vec<Diagnostic> {
    let mut out: Vec<Diagnostic> = prefixed("helly_bray", h.check_fields()).collect();
    if let Err(e) = registry.build_sequence(&h.x) {
        out.push(Diagnostic::new("helly_bray.x", e.to_string()));
    }
    if let Err(e) = registry.build_sequence(&h.h) {
        out.push(Diagnostic::new("helly_bray.h", e.to_string()));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    /// An assumption, contraction or convergence check failed.
    ChecksFailed,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::ChecksFailed => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub status: Status,
    /// Human-readable lines for the terminal.
    pub summary: Vec<String>,
    /// Files written, relative to the output directory.
    pub artifacts: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    mode: Mode,
    config_sha256: String,
    seed: u64,
    n_paths: usize,
    n_steps: usize,
    status: Status,
    artifacts: &'a [String],
    config: &'a ExperimentConfig,
}

struct Writer<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Writer<'_> {
    fn csv(&mut self, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }
}

fn strs(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Runs a validated experiment and writes its artifacts to `out_dir`.
pub fn run(config: &ExperimentConfig, registry: &Registry, out_dir: &Path) -> Result<Outcome> {
    if let Some(d) = validate(config, registry).into_iter().next() {
        return Err(Error::Config {
            path: d.path,
            message: d.message,
        });
    }
    fs::create_dir_all(out_dir)?;
    let mut w = Writer {
        dir: out_dir,
        written: Vec::new(),
    };
    let (status, summary) = match config.mode {
        Mode::CheckAssumptions => run_check(config, registry, &mut w)?,
        Mode::Solve => run_solve(config, registry, &mut w)?,
        Mode::Stability => run_stability_mode(config, registry, &mut w)?,
        Mode::HellyBray => {
            let h = config.helly_bray.as_ref().expect("validated");
            let e = &config.engine;
            let rep = run_helly_bray(h, registry, e.n_steps, e.n_paths, e.seed)?;
            let lines = write_helly_bray(&rep, &mut w)?;
            let status = if rep.verdict == HellyBrayVerdict::Pass {
                Status::Pass
            } else {
                Status::ChecksFailed
            };
            (status, lines)
        }
    };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        mode: config.mode,
        config_sha256: config.hash(),
        seed: config.engine.seed,
        n_paths: config.engine.n_paths,
        n_steps: config.engine.n_steps,
        status,
        artifacts: &w.written,
        config,
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    let mut artifacts = w.written;
    artifacts.push("manifest.json".into());
    Ok(Outcome {
        status,
        summary,
        artifacts,
    })
}

/// One row of the assumption table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub value: f64,
    pub threshold: f64,
    /// `PASS`, `FAIL` or `WARN`.
    pub status: &'static str,
}

impl CheckRow {
    fn le(check: &str, value: f64, threshold: f64) -> Self {
        Self {
            check: check.into(),
            value,
            threshold,
            status: if value <= threshold { "PASS" } else { "FAIL" },
        }
    }

    fn lt(check: &str, value: f64, threshold: f64) -> Self {
        Self {
            status: if value < threshold { "PASS" } else { "FAIL" },
            ..Self::le(check, value, threshold)
        }
    }
}

/// Every assumption check on `problem` over one simulated ensemble.
pub fn assumption_table(config: &ExperimentConfig, problem: &Problem) -> Result<Vec<CheckRow>> {
    let e = &config.engine;
    let k = problem.constants();
    let ens = problem.simulate(e.n_paths, e.seed)?;
    let mut rows = vec![
        CheckRow {
            status: "PASS",
            ..CheckRow::le("beta > 2 sqrt(2) L~", k.beta, 2.0 * 2f64.sqrt() * k.lipschitz_g)
        },
        CheckRow::lt("c < c_threshold", k.c, c_threshold(k.beta, k.lipschitz_g)?),
    ];
    let h1 = check_h1(problem, &ens, k.c)?;
    let h2 = check_h2(problem, &ens, k.c)?;
    rows.push(CheckRow::le("H1 worst lhs <= c", h1.worst_lhs(), k.c));
    rows.push(CheckRow::le("H2 worst lhs <= c", h2.worst_lhs(), k.c));
    let lam = select_lambda(k.c, k.beta, k.lipschitz_g)?;
    rows.push(CheckRow::lt("mu_lambda < 1", lam.mu_lambda, 1.0));
    let (pf, pg) = probe_lipschitz(problem, config.assumptions.probe_samples, e.seed);
    for r in [&pf, &pg] {
        rows.push(CheckRow::le(
            &format!("{} observed Lipschitz <= declared", r.generator),
            r.lipschitz,
            r.declared_lipschitz,
        ));
        rows.push(CheckRow::le(
            &format!("{} observed delay constant <= declared", r.generator),
            r.k1,
            r.declared_k1,
        ));
    }
    let integ = check_integrability(problem, &ens, config.assumptions.p, &config.assumptions.r_ladder)?;
    for m in &integ.rows {
        rows.push(CheckRow {
            check: format!("{} finite: {}", m.name, m.description),
            value: m.estimate,
            threshold: f64::INFINITY,
            status: if !m.finite {
                "FAIL"
            } else if m.heavy_tail {
                "WARN"
            } else {
                "PASS"
            },
        });
    }
    Ok(rows)
}

fn write_table(rows: &[CheckRow], w: &mut Writer) -> Result<Vec<String>> {
    w.csv(
        "assumptions.csv",
        &strs(&["check", "value", "threshold", "status"]),
        rows.iter()
            .map(|r| vec![r.check.clone(), fmt_f64(r.value), fmt_f64(r.threshold), r.status.to_string()]),
    )?;
    Ok(rows
        .iter()
        .map(|r| format!("{:<4}  {:<60} {:>14.6e} {:>14.6e}", r.status, r.check, r.value, r.threshold))
        .collect())
}

fn build_problem(config: &ExperimentConfig, registry: &Registry) -> Result<Problem> {
    let pc = config.problem.clone().expect("validated");
    Problem::build(pc, registry, config.engine.n_steps)
}

fn run_check(config: &ExperimentConfig, registry: &Registry, w: &mut Writer) -> Result<(Status, Vec<String>)> {
    let problem = build_problem(config, registry)?;
    let rows = assumption_table(config, &problem)?;
    let lines = write_table(&rows, w)?;
    let status = if rows.iter().any(|r| r.status == "FAIL") {
        Status::ChecksFailed
    } else {
        Status::Pass
    };
    Ok((status, lines))
}

fn path_columns(prefix: &str, dim: usize, n_paths: usize) -> Vec<String> {
    let comp = |c: usize| if dim == 1 { String::new() } else { format!("_{}", c + 1) };
    let mut h = vec!["t".to_string()];
    for c in 0..dim {
        h.push(format!("{prefix}mean{}", comp(c)));
    }
    for p in 0..SAMPLE_PATHS.min(n_paths) {
        for c in 0..dim {
            h.push(format!("{prefix}path{p}{}", comp(c)));
        }
    }
    h
}

fn path_rows(f: &PathField) -> impl Iterator<Item = Vec<String>> + '_ {
    let grid = f.grid().clone();
    let shown = SAMPLE_PATHS.min(f.n_paths());
    (0..f.nodes()).map(move |i| {
        let mut row = vec![fmt_f64(grid.t(i))];
        for c in 0..f.dim() {
            row.push(fmt_f64(f.mean_at(i, c)));
        }
        for p in 0..shown {
            row.extend(f.at(p, i).iter().map(|&v| fmt_f64(v)));
        }
        row
    })
}

/// Writes the solution paths and the per-iteration diagnostics.
pub fn write_solution(sol: &Solution, dir: &Path) -> Result<Vec<String>> {
    let mut w = Writer {
        dir,
        written: Vec::new(),
    };
    write_solution_with(sol, &mut w)?;
    Ok(w.written)
}

fn write_solution_with(sol: &Solution, w: &mut Writer) -> Result<()> {
    let (y, z) = (&sol.pair.y, &sol.pair.z);
    w.csv("solution_Y.csv", &path_columns("", y.dim(), y.n_paths()), path_rows(y))?;
    w.csv("solution_Z.csv", &path_columns("", z.dim(), z.n_paths()), path_rows(z))?;
    let d = &sol.diagnostics;
    let mu = fmt_f64(d.mu_lambda());
    w.csv(
        "diagnostics.csv",
        &strs(&["iteration", "norm", "ratio", "mu_lambda"]),
        d.records.iter().map(|r| {
            vec![
                r.iteration.to_string(),
                fmt_f64(r.norm),
                r.ratio.map(fmt_f64).unwrap_or_default(),
                mu.clone(),
            ]
        }),
    )
}

fn run_solve(config: &ExperimentConfig, registry: &Registry, w: &mut Writer) -> Result<(Status, Vec<String>)> {
    let problem = build_problem(config, registry)?;
    let rows = assumption_table(config, &problem)?;
    let mut lines = write_table(&rows, w)?;
    let blocked = rows.iter().any(|r| r.status == "FAIL" && r.check.starts_with('H'));
    if blocked && !config.solver.override_assumptions {
        lines.push("smallness condition failed; not solving (set solver.override_assumptions to force)".into());
        return Ok((Status::ChecksFailed, lines));
    }
    let e = &config.engine;
    let ens = problem.simulate(e.n_paths, e.seed)?;
    let opts = config.solve_options();
    let sol = iterate(&problem, &ens, &opts)?;
    write_solution_with(&sol, w)?;
    let d = &sol.diagnostics;
    let rep = contraction_report(d, DEFAULT_SLACK);
    let y0 = sol.pair.y.mean_at(0, 0);
    lines.push(format!(
        "Y(0) = {y0:.8}, iterations {}, converged {}, residual {:.3e}",
        d.iterations(),
        d.converged,
        d.residual
    ));
    lines.push(format!(
        "contraction: tail max ratio {:.4} vs mu_lambda {:.4} + {}: {:?}",
        rep.tail_max, rep.mu_lambda, rep.slack, rep.verdict
    ));
    let last_ratio = d.records.last().and_then(|r| r.ratio).unwrap_or(0.0);
    let diverged = !d.converged && last_ratio >= 1.0;
    if diverged {
        lines.push(format!("Picard iteration did not contract (last ratio {last_ratio:.4e})"));
    }
    let status = if diverged || rep.verdict == Verdict::Fail {
        Status::ChecksFailed
    } else {
        Status::Pass
    };
    Ok((status, lines))
}

fn tail_rows(curve: &[(f64, f64)]) -> impl Iterator<Item = Vec<String>> + '_ {
    curve.iter().map(|&(nu, f)| vec![fmt_f64(nu), fmt_f64(f)])
}

fn write_helly_bray(rep: &HellyBrayReport, w: &mut Writer) -> Result<Vec<String>> {
    w.csv(
        "hellybray.csv",
        &strs(&["n", "nu", "phi_distance", "ks"]),
        rep.rows
            .iter()
            .map(|r| vec![fmt_f64(r.n), fmt_f64(r.nu), fmt_f64(r.phi_distance), fmt_f64(r.ks)]),
    )?;
    w.csv("hellybray_bv_tail.csv", &strs(&["nu", "tail_fraction"]), tail_rows(&rep.tail_curve))?;
    let (p, k) = rep.final_distances();
    Ok(vec![format!(
        "helly-bray: final phi distance {p:.4e}, KS {k:.4e}, tolerance {}, bounded-variation precondition {}: {:?}",
        rep.tolerance, rep.precondition, rep.verdict
    )])
}

fn run_stability_mode(
    config: &ExperimentConfig,
    registry: &Registry,
    w: &mut Writer,
) -> Result<(Status, Vec<String>)> {
    let e = &config.engine;
    let fc = config.family.as_ref().expect("validated");
    let family = PerturbationFamily::build(fc, registry, e.n_steps)?;
    let rep = match run_stability(&family, e.n_paths, e.seed, &config.stability_options()) {
        Ok(r) => r,
        Err(err @ (Error::FamilyInvalid { .. } | Error::AssumptionFailed(_) | Error::NonContraction { .. })) => {
            return Ok((Status::ChecksFailed, vec![err.to_string()]));
        }
        Err(err) => return Err(err),
    };
    w.csv(
        "stability.csv",
        &strs(&["n", "delta_xi", "delta_f", "delta_g", "sup_a_diff", "bv_h", "error"]),
        rep.rows.iter().map(|r| {
            [r.n, r.delta_xi, r.delta_f, r.delta_g, r.sup_a_diff, r.bv_h, r.error]
                .iter()
                .map(|&v| fmt_f64(v))
                .collect()
        }),
    )?;
    w.csv(
        "stability_moments.csv",
        &strs(&["n", "exp_moment", "iterations"]),
        rep.rows
            .iter()
            .map(|r| vec![fmt_f64(r.n), fmt_f64(r.exp_moment), r.iterations.to_string()]),
    )?;
    w.csv("stability_bv_tail.csv", &strs(&["nu", "tail_fraction"]), tail_rows(&rep.tail_curve))?;
    let mut lines = vec![format!(
        "stability: last error {:.4e} (threshold {}), spearman {}, box radius {} with {} samples: {}",
        rep.rows.last().map(|r| r.error).unwrap_or(f64::NAN),
        rep.threshold,
        rep.spearman.map(|s| format!("{s:.3}")).unwrap_or_else(|| "undefined".into()),
        rep.sample.radius,
        rep.sample.samples,
        if rep.pass { "PASS" } else { "FAIL" }
    )];
    let mut status = if rep.pass { Status::Pass } else { Status::ChecksFailed };
    if let Some(h) = &config.helly_bray {
        let hb = run_helly_bray(h, registry, e.n_steps, e.n_paths, e.seed)?;
        lines.extend(write_helly_bray(&hb, w)?);
        if hb.verdict != HellyBrayVerdict::Pass {
            status = Status::ChecksFailed;
        }
    }
    Ok((status, lines))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn base(mode: &str) -> Value {
        json!({
            "mode": mode,
            "problem": {
                "horizon": 1.0,
                "delay": 0.25,
                "terminal": {"kind": "affine", "params": {"w": 1.0}},
                "driver_f": {"kind": "zero"},
                "driver_g": {"kind": "zero"},
                "increasing_process": {"kind": "linear"},
                "constants": {"beta": 2.0, "lipschitz": 0.5, "lipschitz_g": 0.5, "c": 0.001}
            },
            "engine": {"seed": 1, "n_paths": 500, "n_steps": 20}
        })
    }

    fn parse(v: Value) -> ExperimentConfig {
        parse_config(&v.to_string()).unwrap()
    }

    #[test]
    fn well_formed_config_has_no_diagnostics() {
        assert!(validate(&parse(base("solve")), &Registry::default()).is_empty());
    }

    #[test]
    fn parse_error_names_path() {
        let mut v = base("solve");
        v["engine"]["n_paths"] = json!("many");
        let d = parse_config(&v.to_string()).unwrap_err();
        assert_eq!(d.path, "engine.n_paths");
        let mut v = base("solve");
        v["solver"] = json!({"tolerance": 1});
        assert_eq!(parse_config(&v.to_string()).unwrap_err().path, "solver.tolerance");
    }

    #[test]
    fn beta_boundary_is_reported() {
        let mut v = base("solve");
        v["problem"]["constants"]["beta"] = json!(2.0);
        v["problem"]["constants"]["lipschitz_g"] = json!(1.0);
        let d = validate(&parse(v), &Registry::default());
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].path, "problem.constants.beta");
        assert!(d[0].message.contains("beta <= 2*sqrt(2)*L~"), "{}", d[0].message);
    }

    #[test]
    fn misaligned_delay_suggests_steps() {
        let mut v = base("solve");
        v["problem"]["delay"] = json!(0.33);
        v["engine"]["n_steps"] = json!(101);
        let d = validate(&parse(v), &Registry::default());
        assert_eq!(d[0].path, "engine.n_steps");
        assert!(d[0].message.contains("nearest aligned n_steps is 100"), "{}", d[0].message);
    }

    #[test]
    fn unknown_generator_and_missing_section() {
        let mut v = base("solve");
        v["problem"]["driver_f"] = json!({"kind": "cubic"});
        let d = validate(&parse(v), &Registry::default());
        assert!(d[0].message.contains("cubic"), "{:?}", d);
        let d = validate(&parse(base("stability")), &Registry::default());
        assert_eq!(d[0].path, "family");
    }

    #[test]
    fn non_positive_tol_rejected() {
        let mut v = base("solve");
        v["solver"] = json!({"tol": 0.0});
        let d = validate(&parse(v), &Registry::default());
        assert_eq!(d[0].path, "solver.tol");
    }

    #[test]
    fn overrides_change_hash() {
        let mut c = parse(base("solve"));
        let h = c.hash();
        assert_eq!(h, parse(base("solve")).hash());
        c.apply(&Overrides {
            seed: Some(9),
            ..Default::default()
        });
        assert_ne!(h, c.hash());
        assert_eq!(c.engine.seed, 9);
    }
}
