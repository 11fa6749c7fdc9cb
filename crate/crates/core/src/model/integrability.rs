use rayon::prelude::*;
use serde::Serialize;

use super::generators::{FArgs, GArgs, TerminalArgs};
use super::problem::Problem;
use crate::error::Result;
use crate::path_calculus::{Segment, MAX_SEGMENT_DIM};
use crate::stochastic_engine::PathEnsemble;

/// Share of the estimate carried by the top 1% of samples above which a
/// moment is flagged as heavy tailed.
pub const HEAVY_TAIL_SHARE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    pub name: String,
    pub description: String,
    pub estimate: f64,
    pub finite: bool,
    /// Fraction of the sum contributed by the largest 1% of samples.
    pub top_share: f64,
    pub heavy_tail: bool,
}

impl MomentRow {
    fn from_samples(name: &str, description: &str, mut samples: Vec<f64>) -> Self {
        let n = samples.len();
        let total: f64 = samples.iter().sum();
        let estimate = total / n as f64;
        let finite = estimate.is_finite();
        samples.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        let top = n.div_ceil(100);
        let top_sum: f64 = samples[..top].iter().sum();
        let top_share = if total > 0.0 && finite { top_sum / total } else { 0.0 };
        // a single sample cannot be heavy tailed relative to itself
        let heavy_tail = n >= 100 && top_share > HEAVY_TAIL_SHARE;
        if !finite {
            log::warn!("{name}: estimate diverged");
        } else if heavy_tail {
            log::warn!("{name}: top 1% of samples carry {:.1}% of the estimate", 100.0 * top_share);
        }
        Self {
            name: name.to_string(),
            description: description.to_string(),
            estimate,
            finite,
            top_share,
            heavy_tail,
        }
    }

    pub fn ok(&self) -> bool {
        self.finite && !self.heavy_tail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrabilityReport {
    pub p: f64,
    pub rows: Vec<MomentRow>,
}

impl IntegrabilityReport {
    pub fn ok(&self) -> bool {
        self.rows.iter().all(MomentRow::ok)
    }

    pub fn row(&self, name: &str) -> Option<&MomentRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

struct PathMoments {
    xi2: f64,
    a_t: f64,
    f0: f64,
    g0_da: f64,
    g0_dt: f64,
    g0_sup: f64,
}

/// Monte Carlo moments behind every integrability hypothesis, for moment
/// exponent `p` and the exponential ladder `r_ladder`.
pub fn check_integrability(problem: &Problem, ens: &PathEnsemble, p: f64, r_ladder: &[f64]) -> Result<IntegrabilityReport> {
    let (m, d) = (problem.m(), problem.d());
    let beta = problem.constants().beta;
    let grid = ens.grid();
    let lags = problem.delay_steps();
    let w = ens.w()?;
    let a = ens.a()?;
    let per_path: Vec<PathMoments> = (0..ens.n_paths())
        .into_par_iter()
        .map(|path| {
            let wp = w.path(path);
            let ap = a.path(path);
            let mut xi = vec![0.0; m];
            problem.terminal.eval(&TerminalArgs { w: wp, a: ap, d, m }, &mut xi);
            let zero = [0.0; MAX_SEGMENT_DIM];
            let mut out = vec![0.0; m];
            let (mut f0, mut g0_da, mut g0_dt, mut g0_sup) = (0.0, 0.0, 0.0, 0.0f64);
            for i in 0..grid.len() {
                let t = grid.t(i);
                let wt = &wp[i * d..(i + 1) * d];
                let gargs = GArgs {
                    t,
                    node: i,
                    path,
                    y: &zero[..m],
                    y_seg: Segment::zero(m, lags),
                    w: wt,
                    a: ap[i],
                    rho_tilde: &problem.rho_tilde,
                    m,
                };
                problem.g.eval(&gargs, &mut out);
                let g2: f64 = out.iter().map(|v| v * v).sum();
                g0_sup = g0_sup.max(g2);
                if i + 1 < grid.len() {
                    let wgt = (beta * ap[i]).exp();
                    g0_da += wgt * g2 * (ap[i + 1] - ap[i]);
                    g0_dt += wgt * g2 * grid.dt(i);
                    let fargs = FArgs {
                        t,
                        node: i,
                        path,
                        y: &zero[..m],
                        z: &zero[..m * d],
                        y_seg: Segment::zero(m, lags),
                        z_seg: Segment::zero(m * d, lags),
                        w: wt,
                        a: ap[i],
                        rho: &problem.rho,
                        m,
                        d,
                    };
                    problem.f.eval(&fargs, &mut out);
                    let f2: f64 = out.iter().map(|v| v * v).sum();
                    f0 += wgt * f2 * grid.dt(i);
                }
            }
            PathMoments {
                xi2: xi.iter().map(|v| v * v).sum(),
                a_t: *ap.last().unwrap(),
                f0,
                g0_da,
                g0_dt,
                g0_sup,
            }
        })
        .collect();
    let col = |f: &dyn Fn(&PathMoments) -> f64| per_path.iter().map(f).collect::<Vec<f64>>();
    let mut rows = vec![
        MomentRow::from_samples("A0", "E[e^{beta A(T)} (1 + |xi|^2)]", col(&|s| (beta * s.a_t).exp() * (1.0 + s.xi2))),
        MomentRow::from_samples(
            "A1",
            "E[int e^{beta A}|F(t,0,0,0,0)|^2 dt + int e^{beta A}|G(t,0,0)|^2 dA]",
            col(&|s| s.f0 + s.g0_da),
        ),
        MomentRow::from_samples(
            "A0'",
            "E[e^{p beta A(T)} |xi|^{2p}]",
            col(&|s| (p * beta * s.a_t).exp() * s.xi2.powf(p)),
        ),
    ];
    for &r in r_ladder {
        rows.push(MomentRow::from_samples(
            &format!("A0''[r={r}]"),
            "E[e^{r A(T)}]",
            col(&|s| (r * s.a_t).exp()),
        ));
    }
    rows.push(MomentRow::from_samples(
        "A1'",
        "E[(int e^{beta A}|F(t,0,0,0,0)|^2 dt)^p]",
        col(&|s| s.f0.powf(p)),
    ));
    rows.push(MomentRow::from_samples(
        "A1''",
        "E[(int e^{beta A}|G(t,0,0)|^2 dt)^p]",
        col(&|s| s.g0_dt.powf(p)),
    ));
    rows.push(MomentRow::from_samples(
        "A1'''",
        "E[sup_t |G(t,0,0)|^{2p}]",
        col(&|s| s.g0_sup.powf(p)),
    ));
    Ok(IntegrabilityReport { p, rows })
}
