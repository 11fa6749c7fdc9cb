use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FArgs, GArgs, Problem, TerminalArgs};
use crate::path_calculus::{Segment, SegmentKind, MAX_SEGMENT_DIM};
use crate::stochastic_engine::{BasisConfig, PathEnsemble, PathField, Projection};

const INNER_MAX_ITER: usize = 20;
const INNER_TOL: f64 = 1e-12;

/// An adapted pair `(Y, Z)` on an ensemble: `Y` has dimension `m`, `Z` has
/// dimension `m * d` stored row-major (`Z[j][k]` at `j * d + k`).
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPair {
    pub y: PathField,
    pub z: PathField,
}

impl SolutionPair {
    pub fn zeros(ens: &PathEnsemble, m: usize, d: usize) -> Self {
        Self {
            y: PathField::zeros(ens.grid().clone(), ens.n_paths(), m),
            z: PathField::zeros(ens.grid().clone(), ens.n_paths(), m * d),
        }
    }

    /// Path averages of `Y(0)`.
    pub fn y0(&self) -> Vec<f64> {
        (0..self.y.dim()).map(|c| self.y.mean_at(0, c)).collect()
    }

    pub fn sub(&self, other: &SolutionPair) -> Result<SolutionPair> {
        Ok(SolutionPair {
            y: self.y.sub(&other.y)?,
            z: self.z.sub(&other.z)?,
        })
    }
}

/// Time discretization of the frozen-delay backward equation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `Y_i = E_i[Y_{i+1} + F(t_i, Y_{i+1}, Z_i) dt]`.
    #[default]
    Explicit,
    /// `Y_i = E_i[Y_{i+1}] + F(t_i, Y_i, Z_i) dt`, solved by fixed point per path.
    Implicit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaConfig {
    pub basis: BasisConfig,
    pub scheme: Scheme,
}

/// `B(t) = int_0^t G(s, U(s), U_s) dA(s)` and the shifted terminal value.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaArtifacts {
    pub b: PathField,
    /// `xi + B(T)`, `m` values per path.
    pub shifted_terminal: Vec<f64>,
}

fn first_error(results: Vec<Result<()>>) -> Result<()> {
    results.into_iter().find(|r| r.is_err()).unwrap_or(Ok(()))
}

/// `xi` on every path, `m` values per path.
pub fn terminal_values(problem: &Problem, ens: &PathEnsemble) -> Result<Vec<f64>> {
    let (m, d) = (problem.m(), problem.d());
    let w = ens.w()?;
    let a = ens.a()?;
    if w.dim() != d {
        return Err(Error::Domain(format!(
            "ensemble has {} Brownian components, problem needs {d}",
            w.dim()
        )));
    }
    let horizon = ens.grid().horizon();
    let mut xi = vec![0.0; ens.n_paths() * m];
    let results = xi
        .par_chunks_mut(m)
        .enumerate()
        .map(|(p, out)| {
            problem.terminal.eval(
                &TerminalArgs {
                    w: w.path(p),
                    a: a.path(p),
                    d,
                    m,
                },
                out,
            );
            if out.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::Generator {
                    name: problem.terminal.name().to_string(),
                    t: horizon,
                    path: p,
                })
            }
        })
        .collect();
    first_error(results)?;
    Ok(xi)
}

/// Left-point Stieltjes accumulation of `G(s, U(s), U_s)` against `dA`.
pub fn build_b(u: &PathField, problem: &Problem, ens: &PathEnsemble) -> Result<GammaArtifacts> {
    let xi = terminal_values(problem, ens)?;
    build_b_with(u, problem, ens, &xi)
}

fn build_b_with(u: &PathField, problem: &Problem, ens: &PathEnsemble, xi: &[f64]) -> Result<GammaArtifacts> {
    let m = problem.m();
    let grid = ens.grid();
    check_shape(u, ens, m, "U")?;
    let w = ens.w()?;
    let a = ens.a()?;
    let lags = problem.delay_steps();
    let nodes = grid.len();
    let mut b = PathField::zeros(grid.clone(), ens.n_paths(), m);
    let results = b
        .data_mut()
        .par_chunks_mut(nodes * m)
        .enumerate()
        .map(|(p, out)| {
            let (up, ap) = (u.path(p), a.path(p));
            let mut g = [0.0; MAX_SEGMENT_DIM];
            for i in 0..nodes - 1 {
                let args = GArgs {
                    t: grid.t(i),
                    node: i,
                    path: p,
                    y: &up[i * m..(i + 1) * m],
                    y_seg: Segment::new(up, m, i, lags, SegmentKind::StateLike),
                    w: w.at(p, i),
                    a: ap[i],
                    rho_tilde: &problem.rho_tilde,
                    m,
                };
                problem.g.eval(&args, &mut g[..m]);
                if !g[..m].iter().all(|v| v.is_finite()) {
                    return Err(Error::Generator {
                        name: problem.g.name().to_string(),
                        t: grid.t(i),
                        path: p,
                    });
                }
                let da = ap[i + 1] - ap[i];
                for j in 0..m {
                    out[(i + 1) * m + j] = out[i * m + j] + g[j] * da;
                }
            }
            Ok(())
        })
        .collect();
    first_error(results)?;
    let last = nodes - 1;
    let shifted_terminal = (0..ens.n_paths())
        .flat_map(|p| {
            let bt = b.at(p, last);
            (0..m).map(move |j| (p, j, bt[j]))
        })
        .map(|(p, j, bt)| xi[p * m + j] + bt)
        .collect();
    Ok(GammaArtifacts { b, shifted_terminal })
}

fn check_shape(f: &PathField, ens: &PathEnsemble, dim: usize, what: &str) -> Result<()> {
    if f.n_paths() != ens.n_paths() || f.dim() != dim || !crate::path_calculus::same_grid(f.grid(), ens.grid()) {
        return Err(Error::GridAlignment(format!(
            "{what} must have {} paths of dimension {dim} on the ensemble grid",
            ens.n_paths()
        )));
    }
    Ok(())
}

/// One application of the map `Gamma`, holding per-solve data.
pub struct Gamma<'a> {
    problem: &'a Problem,
    ens: &'a PathEnsemble,
    config: GammaConfig,
    xi: Vec<f64>,
}

impl<'a> Gamma<'a> {
    pub fn new(problem: &'a Problem, ens: &'a PathEnsemble, config: GammaConfig) -> Result<Self> {
        config.basis.validate()?;
        if !crate::path_calculus::same_grid(&problem.grid, ens.grid()) {
            return Err(Error::GridAlignment("ensemble grid differs from the problem grid".into()));
        }
        let xi = terminal_values(problem, ens)?;
        Ok(Self {
            problem,
            ens,
            config,
            xi,
        })
    }

    pub fn terminal(&self) -> &[f64] {
        &self.xi
    }

    /// Solves the backward equation with delayed arguments frozen at `input`.
    pub fn apply(&self, input: &SolutionPair) -> Result<(SolutionPair, GammaArtifacts)> {
        let (problem, ens) = (self.problem, self.ens);
        let (m, d) = (problem.m(), problem.d());
        let md = m * d;
        let (u, v) = (&input.y, &input.z);
        check_shape(v, ens, md, "V")?;
        let art = build_b_with(u, problem, ens, &self.xi)?;
        let grid = ens.grid();
        let n_paths = ens.n_paths();
        let nodes = grid.len();
        let last = nodes - 1;
        let lags = problem.delay_steps();
        let w = ens.w()?;
        let a = ens.a()?;
        let a_stoch = ens.a_is_stochastic();
        let seg_feats = self.config.basis.segment_features;
        let n_raw = d + usize::from(a_stoch) + if seg_feats { 3 * m } else { 0 };

        // column-wise working storage, path-major
        let mut y_next = art.shifted_terminal.clone();
        let mut yhat = PathField::zeros(grid.clone(), n_paths, m);
        let mut z = PathField::zeros(grid.clone(), n_paths, md);
        write_column(&mut yhat, last, &y_next);

        let mut raw = vec![0.0; n_paths * n_raw];
        let mut z_col = vec![0.0; n_paths * md];
        let mut target = vec![0.0; n_paths * m];
        for i in (0..last).rev() {
            let t = grid.t(i);
            let dt = grid.dt(i);
            raw.par_chunks_mut(n_raw.max(1)).enumerate().for_each(|(p, r)| {
                if n_raw == 0 {
                    return;
                }
                let mut k = 0;
                for &x in w.at(p, i) {
                    r[k] = x;
                    k += 1;
                }
                if a_stoch {
                    r[k] = a.at(p, i)[0];
                    k += 1;
                }
                if seg_feats {
                    let up = u.path(p);
                    r[k..k + m].copy_from_slice(&up[i * m..(i + 1) * m]);
                    Segment::new(up, m, i, lags, SegmentKind::StateLike)
                        .integrate(&problem.rho, &mut r[k + m..k + 2 * m]);
                    r[k + 2 * m..k + 3 * m].copy_from_slice(art.b.at(p, i));
                }
            });
            let proj = Projection::fit(&raw, n_raw, n_paths, &self.config.basis)?;
            let e1 = proj.project(&y_next, m)?;

            // Z_i = E_i[(Y_{i+1} - E_i Y_{i+1}) dW] / dt
            z_col.par_chunks_mut(md).enumerate().for_each(|(p, out)| {
                let wp = w.path(p);
                for j in 0..m {
                    let dy = y_next[p * m + j] - e1[p * m + j];
                    for k in 0..d {
                        let dw = wp[(i + 1) * d + k] - wp[i * d + k];
                        out[j * d + k] = dy * dw / dt;
                    }
                }
            });
            let z_i = proj.project(&z_col, md)?;

            let f_hat = |p: usize, y: &[f64], out: &mut [f64]| -> Result<()> {
                let mut shifted = [0.0; MAX_SEGMENT_DIM];
                let bi = art.b.at(p, i);
                for j in 0..m {
                    shifted[j] = y[j] - bi[j];
                }
                let args = FArgs {
                    t,
                    node: i,
                    path: p,
                    y: &shifted[..m],
                    z: &z_i[p * md..(p + 1) * md],
                    y_seg: Segment::new(u.path(p), m, i, lags, SegmentKind::StateLike),
                    z_seg: Segment::new(v.path(p), md, i, lags, SegmentKind::ControlLike),
                    w: w.at(p, i),
                    a: a.at(p, i)[0],
                    rho: &problem.rho,
                    m,
                    d,
                };
                problem.f.eval(&args, out);
                if out.iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::Generator {
                        name: problem.f.name().to_string(),
                        t,
                        path: p,
                    })
                }
            };

            let y_i = match self.config.scheme {
                Scheme::Explicit => {
                    let results = target
                        .par_chunks_mut(m)
                        .enumerate()
                        .map(|(p, out)| {
                            let yn = &y_next[p * m..(p + 1) * m];
                            let mut f = [0.0; MAX_SEGMENT_DIM];
                            f_hat(p, yn, &mut f[..m])?;
                            for j in 0..m {
                                out[j] = yn[j] + f[j] * dt;
                            }
                            Ok(())
                        })
                        .collect();
                    first_error(results)?;
                    proj.project(&target, m)?
                }
                Scheme::Implicit => {
                    let results = target
                        .par_chunks_mut(m)
                        .enumerate()
                        .map(|(p, out)| {
                            let base = &e1[p * m..(p + 1) * m];
                            out.copy_from_slice(base);
                            let mut f = [0.0; MAX_SEGMENT_DIM];
                            for _ in 0..INNER_MAX_ITER {
                                f_hat(p, out, &mut f[..m])?;
                                let mut change: f64 = 0.0;
                                for j in 0..m {
                                    let next = base[j] + f[j] * dt;
                                    change = change.max((next - out[j]).abs() / (1.0 + next.abs()));
                                    out[j] = next;
                                }
                                if change <= INNER_TOL {
                                    break;
                                }
                            }
                            Ok(())
                        })
                        .collect();
                    first_error(results)?;
                    target.clone()
                }
            };
            if !y_i.iter().all(|v| v.is_finite()) || !z_i.iter().all(|v| v.is_finite()) {
                return Err(Error::Blowup { step: i });
            }
            write_column(&mut yhat, i, &y_i);
            write_column(&mut z, i, &z_i);
            y_next = y_i;
        }
        if last > 0 {
            let prev: Vec<f64> = (0..n_paths).flat_map(|p| z.at(p, last - 1).to_vec()).collect();
            write_column(&mut z, last, &prev);
        }

        // Y = Yhat - B, with Y(T) = xi exactly
        let mut y = yhat;
        let xi = &self.xi;
        let b = &art.b;
        y.data_mut()
            .par_chunks_mut(nodes * m)
            .enumerate()
            .for_each(|(p, out)| {
                let bp = b.path(p);
                for (o, bv) in out[..last * m].iter_mut().zip(&bp[..last * m]) {
                    *o -= bv;
                }
                out[last * m..].copy_from_slice(&xi[p * m..(p + 1) * m]);
            });
        Ok((SolutionPair { y, z }, art))
    }
}

fn write_column(field: &mut PathField, i: usize, values: &[f64]) {
    let dim = field.dim();
    let stride = field.stride();
    field
        .data_mut()
        .par_chunks_mut(stride)
        .enumerate()
        .for_each(|(p, out)| out[i * dim..(i + 1) * dim].copy_from_slice(&values[p * dim..(p + 1) * dim]));
}

/// `Gamma(U, V)` for a single iterate.
pub fn gamma_step(
    input: &SolutionPair,
    problem: &Problem,
    ens: &PathEnsemble,
    config: &GammaConfig,
) -> Result<(SolutionPair, GammaArtifacts)> {
    Gamma::new(problem, ens, config.clone())?.apply(input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProblemConfig;
    use crate::registry::Registry;
    use serde_json::json;

    fn problem(n_steps: usize, f: serde_json::Value, g: serde_json::Value, xi: serde_json::Value, a: serde_json::Value) -> Problem {
        let cfg: ProblemConfig = serde_json::from_value(json!({
            "horizon": 1.0,
            "delay": 0.1,
            "terminal": xi,
            "driver_f": f,
            "driver_g": g,
            "increasing_process": a,
            "constants": {"beta": 2.0, "lipschitz": 0.5, "lipschitz_g": 0.5, "c": 0.001}
        }))
        .unwrap();
        Problem::build(cfg, &Registry::default(), n_steps).unwrap()
    }

    fn zero() -> serde_json::Value {
        json!({"kind": "zero"})
    }

    #[test]
    fn zero_g_gives_zero_b() {
        let p = problem(10, zero(), zero(), json!({"kind": "constant", "params": {"value": 2.0}}), json!({"kind": "linear"}));
        let ens = p.simulate(50, 1).unwrap();
        let u = PathField::zeros(ens.grid().clone(), 50, 1).map(|_| 3.0);
        let art = build_b(&u, &p, &ens).unwrap();
        assert!(art.b.data().iter().all(|&v| v == 0.0));
        assert!(art.shifted_terminal.iter().all(|&v| v == 2.0));
    }

    #[test]
    fn unit_g_against_time_gives_time() {
        let p = problem(20, zero(), json!({"kind": "constant", "params": {"value": 1.0}}), zero(), json!({"kind": "linear"}));
        let ens = p.simulate(4, 1).unwrap();
        let u = PathField::zeros(ens.grid().clone(), 4, 1);
        let art = build_b(&u, &p, &ens).unwrap();
        for i in 0..=20 {
            assert!((art.b.at(3, i)[0] - ens.grid().t(i)).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_g_against_square_matches_left_sum() {
        let n = 200;
        let p = problem(
            n,
            zero(),
            json!({"kind": "linear", "params": {"b": 1.0}}),
            zero(),
            json!({"kind": "power", "params": {"exponent": 2.0}}),
        );
        let ens = p.simulate(2, 1).unwrap();
        let u = PathField::zeros(ens.grid().clone(), 2, 1).map(|_| 2.0);
        let art = build_b(&u, &p, &ens).unwrap();
        // closed form 2 t^2, and the left sum is exact for a constant integrand
        for i in 0..=n {
            let t = ens.grid().t(i);
            assert!((art.b.at(0, i)[0] - 2.0 * t * t).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_terminal_is_reproduced_exactly() {
        let p = problem(10, zero(), zero(), json!({"kind": "constant", "params": {"value": 1.5}}), json!({"kind": "linear"}));
        let ens = p.simulate(100, 3).unwrap();
        let (out, _) = gamma_step(&SolutionPair::zeros(&ens, 1, 1), &p, &ens, &GammaConfig::default()).unwrap();
        assert!(out.y.data().iter().all(|&v| v == 1.5));
        assert!(out.z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_problem_maps_to_zero() {
        let p = problem(10, zero(), zero(), zero(), json!({"kind": "linear"}));
        let ens = p.simulate(100, 3).unwrap();
        let (out, _) = gamma_step(&SolutionPair::zeros(&ens, 1, 1), &p, &ens, &GammaConfig::default()).unwrap();
        assert!(out.y.data().iter().chain(out.z.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn linear_driver_matches_exponential() {
        let p = problem(
            100,
            json!({"kind": "linear", "params": {"a": 0.5}}),
            zero(),
            json!({"kind": "constant", "params": {"value": 1.0}}),
            json!({"kind": "linear"}),
        );
        let ens = p.simulate(64, 3).unwrap();
        for scheme in [Scheme::Explicit, Scheme::Implicit] {
            let cfg = GammaConfig { scheme, ..Default::default() };
            let (out, _) = gamma_step(&SolutionPair::zeros(&ens, 1, 1), &p, &ens, &cfg).unwrap();
            let y0 = out.y0()[0];
            assert!((y0 / 0.5f64.exp() - 1.0).abs() < 0.01, "{scheme:?}: {y0}");
        }
    }

    #[test]
    fn terminal_holds_exactly_with_nonzero_b() {
        let p = problem(
            20,
            zero(),
            json!({"kind": "linear", "params": {"b": 0.3, "c": 0.2}}),
            json!({"kind": "affine", "params": {"w": 1.0}}),
            json!({"kind": "running-max"}),
        );
        let ens = p.simulate(200, 5).unwrap();
        let u = SolutionPair {
            y: ens.w().unwrap().clone(),
            z: PathField::zeros(ens.grid().clone(), 200, 1),
        };
        let (out, _) = gamma_step(&u, &p, &ens, &GammaConfig::default()).unwrap();
        let w = ens.w().unwrap();
        for path in 0..200 {
            assert_eq!(out.y.at(path, 20)[0], w.at(path, 20)[0]);
        }
    }
}
