use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::generators::{DriverF, DriverG, FArgs, GArgs};
use super::problem::Problem;
use crate::path_calculus::{LagMeasure, Segment, SegmentKind, TimeGrid};

/// Excess over a declared constant that counts as a violation.
pub const PROBE_TOLERANCE: f64 = 1e-9;

/// Empirical difference quotients; each is a lower bound on the true constant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub generator: String,
    pub samples: usize,
    /// `L` for `F`, `L~` for `G`.
    pub lipschitz: f64,
    /// `K_1` for `F`, `K~_1` for `G`.
    pub k1: f64,
    pub declared_lipschitz: f64,
    pub declared_k1: f64,
    pub violations: Vec<String>,
}

impl ProbeReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn finish(mut self) -> Self {
        if self.lipschitz > self.declared_lipschitz + PROBE_TOLERANCE {
            self.violations.push(format!(
                "{}: observed Lipschitz quotient {:.6e} exceeds declared {:.6e}",
                self.generator, self.lipschitz, self.declared_lipschitz
            ));
        }
        if self.k1 > self.declared_k1 + PROBE_TOLERANCE {
            self.violations.push(format!(
                "{}: observed delay constant {:.6e} exceeds declared {:.6e}",
                self.generator, self.k1, self.declared_k1
            ));
        }
        self
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    radius: f64,
}

impl Sampler {
    fn vec(&mut self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| self.radius * self.rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn shifted(&mut self, base: &[f64], dim: usize, constant: bool) -> Vec<f64> {
        if constant {
            let s = self.vec(dim);
            base.iter().enumerate().map(|(i, v)| v + s[i % dim]).collect()
        } else {
            self.vec(base.len())
        }
    }
}

fn lag_l2(a: &[f64], b: &[f64], dim: usize, lags: usize, mu: &LagMeasure) -> f64 {
    mu.atoms()
        .iter()
        .map(|&(back, w)| {
            let j = lags - back;
            let d2: f64 = a[j * dim..(j + 1) * dim]
                .iter()
                .zip(&b[j * dim..(j + 1) * dim])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            w * d2
        })
        .sum()
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Samples difference quotients of `F` in `(y, z)` and in the delayed window.
/// Window perturbations cycle through state-only, control-only and joint
/// shifts; half are constant shifts, which attain the bound for integral-type
/// dependence.
#[allow(clippy::too_many_arguments)]
pub fn probe_f(
    f: &dyn DriverF,
    grid: &TimeGrid,
    m: usize,
    d: usize,
    rho: &LagMeasure,
    samples: usize,
    seed: u64,
    declared: (f64, f64),
) -> ProbeReport {
    let lags = grid.delay_steps().unwrap_or(0);
    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(seed),
        radius: 2.0,
    };
    let (mut lq, mut kq) = (0.0f64, 0.0f64);
    let (mut o1, mut o2) = (vec![0.0; m], vec![0.0; m]);
    for k in 0..samples {
        let node = s.rng.random_range(0..grid.len());
        let t = grid.t(node);
        let w = s.vec(d);
        let (y, z) = (s.vec(m), s.vec(m * d));
        let ys = s.vec((lags + 1) * m);
        let zs = s.vec((lags + 1) * m * d);
        let constant = (k / 3) % 2 == 0;
        let ys2 = match k % 3 {
            1 => ys.clone(),
            _ => s.shifted(&ys, m, constant),
        };
        let zs2 = match k % 3 {
            0 => zs.clone(),
            _ => s.shifted(&zs, m * d, constant),
        };
        let (y2, z2) = match k % 3 {
            0 => (s.vec(m), z.clone()),
            1 => (y.clone(), s.vec(m * d)),
            _ => (s.vec(m), s.vec(m * d)),
        };
        let (ysv, zsv, ys2v, zs2v) = (&ys, &zs, &ys2, &zs2);
        let args = |y: &[f64], z: &[f64], yv: &[f64], zv: &[f64], out: &mut [f64]| {
            let a = FArgs {
                t,
                node,
                path: 0,
                y,
                z,
                y_seg: Segment::new(yv, m, lags, lags, SegmentKind::StateLike),
                z_seg: Segment::new(zv, m * d, lags, lags, SegmentKind::ControlLike),
                w: &w,
                a: t,
                rho,
                m,
                d,
            };
            f.eval(&a, out);
        };
        args(&y, &z, ysv, zsv, &mut o1);
        args(&y2, &z2, ysv, zsv, &mut o2);
        let den = l2(&y, &y2) + l2(&z, &z2);
        if den > 0.0 {
            lq = lq.max(l2(&o1, &o2) / den);
        }
        args(&y, &z, ys2v, zs2v, &mut o2);
        let den = lag_l2(ysv, ys2v, m, lags, rho) + lag_l2(zsv, zs2v, m * d, lags, rho);
        if den > 0.0 {
            kq = kq.max(l2(&o1, &o2).powi(2) / den);
        }
    }
    ProbeReport {
        generator: format!("F:{}", f.name()),
        samples,
        lipschitz: lq,
        k1: kq,
        declared_lipschitz: declared.0,
        declared_k1: declared.1,
        violations: Vec::new(),
    }
    .finish()
}

/// Same as [`probe_f`] for `G`, quotients in `y` and in the window.
pub fn probe_g(
    g: &dyn DriverG,
    grid: &TimeGrid,
    m: usize,
    rho_tilde: &LagMeasure,
    samples: usize,
    seed: u64,
    declared: (f64, f64),
) -> ProbeReport {
    let lags = grid.delay_steps().unwrap_or(0);
    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(seed),
        radius: 2.0,
    };
    let (mut lq, mut kq) = (0.0f64, 0.0f64);
    let (mut o1, mut o2) = (vec![0.0; m], vec![0.0; m]);
    for k in 0..samples {
        let node = s.rng.random_range(0..grid.len());
        let t = grid.t(node);
        let w = s.vec(1);
        let (y, y2) = (s.vec(m), s.vec(m));
        let ys = s.vec((lags + 1) * m);
        let ys2 = s.shifted(&ys, m, k % 2 == 0);
        let eval = |y: &[f64], yv: &[f64], out: &mut [f64]| {
            let a = GArgs {
                t,
                node,
                path: 0,
                y,
                y_seg: Segment::new(yv, m, lags, lags, SegmentKind::StateLike),
                w: &w,
                a: t,
                rho_tilde,
                m,
            };
            g.eval(&a, out);
        };
        eval(&y, &ys, &mut o1);
        eval(&y2, &ys, &mut o2);
        let den = l2(&y, &y2);
        if den > 0.0 {
            lq = lq.max(l2(&o1, &o2) / den);
        }
        eval(&y, &ys2, &mut o2);
        let den = lag_l2(&ys, &ys2, m, lags, rho_tilde);
        if den > 0.0 {
            kq = kq.max(l2(&o1, &o2).powi(2) / den);
        }
    }
    ProbeReport {
        generator: format!("G:{}", g.name()),
        samples,
        lipschitz: lq,
        k1: kq,
        declared_lipschitz: declared.0,
        declared_k1: declared.1,
        violations: Vec::new(),
    }
    .finish()
}

/// Probes both generators of `problem` against its declared constants.
pub fn probe_lipschitz(problem: &Problem, samples: usize, seed: u64) -> (ProbeReport, ProbeReport) {
    let k = problem.constants();
    let f = probe_f(
        problem.f.as_ref(),
        &problem.grid,
        problem.m(),
        problem.d(),
        &problem.rho,
        samples,
        seed,
        (k.lipschitz, k.k.global_sup()),
    );
    let g = probe_g(
        problem.g.as_ref(),
        &problem.grid,
        problem.m(),
        &problem.rho_tilde,
        samples,
        seed.wrapping_add(1),
        (k.lipschitz_g, k.k_tilde.global_sup()),
    );
    (f, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generators::{LinearF, Window, ZeroF};

    fn grid() -> TimeGrid {
        TimeGrid::uniform_with_delay(1.0, 20, 0.2).unwrap()
    }

    #[test]
    fn linear_in_y() {
        let g = grid();
        let rho = LagMeasure::dirac_at_delay(&g).unwrap();
        let f = LinearF { a: 2.0, b: 0.0, kappa: 0.0, kappa_z: 0.0, c: 0.0, window: Window::None };
        let r = probe_f(&f, &g, 1, 1, &rho, 500, 1, (2.0, 0.0));
        assert!(r.lipschitz >= 2.0 - 1e-12 && r.ok(), "{r:?}");
    }

    #[test]
    fn zero_generator() {
        let g = grid();
        let rho = LagMeasure::dirac_at_delay(&g).unwrap();
        let r = probe_f(&ZeroF, &g, 1, 1, &rho, 200, 2, (0.0, 0.0));
        assert_eq!((r.lipschitz, r.k1), (0.0, 0.0));
        assert!(r.ok());
    }

    #[test]
    fn integral_dependence_exceeds_small_declaration() {
        let g = grid();
        let rho = LagMeasure::project(&[(-0.2, 0.5), (-0.1, 0.5)], &g).unwrap();
        let f = LinearF { a: 1.0, b: 0.0, kappa: 1.0, kappa_z: 0.0, c: 0.0, window: Window::Integral };
        let r = probe_f(&f, &g, 1, 1, &rho, 400, 3, (1.0, 0.5));
        // constant shifts attain Jensen's bound, so the quotient reaches 1
        assert!((r.k1 - 1.0).abs() < 1e-9, "{r:?}");
        assert!(!r.ok());
    }
}
