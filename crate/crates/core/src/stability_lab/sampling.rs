use serde::{Deserialize, Serialize};

use crate::model::{DriverF, DriverG, FArgs, GArgs};
use crate::path_calculus::{LagMeasure, Segment, SegmentKind, TimeGrid};

/// Box and size of the argument sample used for sup-distance estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSpec {
    /// Every coordinate of `y`, `z`, `W` and the segments lies in `[-radius, radius]`.
    pub radius: f64,
    pub samples: usize,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            radius: 5.0,
            samples: 4096,
        }
    }
}

/// Lower bound on a sup-distance, with the box it was taken over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupEstimate {
    pub value: f64,
    pub samples: usize,
    pub radius: f64,
}

fn primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut c = 2u64;
    while out.len() < n {
        if out.iter().take_while(|&&p| p * p <= c).all(|&p| !c.is_multiple_of(p)) {
            out.push(c);
        }
        c += 1;
    }
    out
}

/// Radical inverse of `i` in base `b`.
fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let inv = 1.0 / b as f64;
    let (mut f, mut r) = (inv, 0.0);
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// Halton points in `[0, 1)^dim`, skipping the origin.
pub fn halton(samples: usize, dim: usize) -> Vec<Vec<f64>> {
    let bases = primes(dim);
    (1..=samples as u64)
        .map(|i| bases.iter().map(|&b| radical_inverse(i, b)).collect())
        .collect()
}

/// Argument layout for one sample: node, `y`, `z`, `w`, and segment paths.
struct Draw {
    node: usize,
    y: Vec<f64>,
    z: Vec<f64>,
    w: Vec<f64>,
    y_path: Vec<f64>,
    z_path: Vec<f64>,
}

/// Segments vary along the lag axis through a low-order profile
/// `level + slope * (j / lags - 1/2)`, both coefficients taken from the point.
fn draws(grid: &TimeGrid, m: usize, d: usize, spec: SampleSpec) -> impl Iterator<Item = Draw> + '_ {
    let lags = grid.delay_steps().unwrap_or(0);
    let md = m * d;
    let dim = 1 + m + md + d + 2 * m + 2 * md;
    let r = spec.radius;
    halton(spec.samples, dim).into_iter().map(move |u| {
        let sc = |v: f64| r * (2.0 * v - 1.0);
        let mut k = 1;
        let mut take = |n: usize| {
            let out: Vec<f64> = u[k..k + n].iter().map(|&v| sc(v)).collect();
            k += n;
            out
        };
        let y = take(m);
        let z = take(md);
        let w = take(d);
        let (yl, ys) = (take(m), take(m));
        let (zl, zs) = (take(md), take(md));
        let profile = |level: &[f64], slope: &[f64], width: usize| -> Vec<f64> {
            let mut out = vec![0.0; (lags + 1) * width];
            for j in 0..=lags {
                let s = if lags == 0 { 0.0 } else { j as f64 / lags as f64 - 0.5 };
                for c in 0..width {
                    out[j * width + c] = (level[c] + slope[c] * s).clamp(-r, r);
                }
            }
            out
        };
        let node = ((u[0] * grid.len() as f64) as usize).min(grid.len() - 1);
        Draw {
            node,
            y_path: profile(&yl, &ys, m),
            z_path: profile(&zl, &zs, md),
            y,
            z,
            w,
        }
    })
}

fn euclid_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `max |F_n - F|` over a Halton sample of the box.
#[allow(clippy::too_many_arguments)]
pub fn delta_sup_f(
    f_n: &dyn DriverF,
    f: &dyn DriverF,
    grid: &TimeGrid,
    m: usize,
    d: usize,
    rho: &LagMeasure,
    spec: &SampleSpec,
) -> SupEstimate {
    let lags = grid.delay_steps().unwrap_or(0);
    let (mut o1, mut o2) = (vec![0.0; m], vec![0.0; m]);
    let mut best: f64 = 0.0;
    for s in draws(grid, m, d, *spec) {
        let args = FArgs {
            t: grid.t(s.node),
            node: s.node,
            path: 0,
            y: &s.y,
            z: &s.z,
            y_seg: Segment::new(&s.y_path, m, lags, lags, SegmentKind::StateLike),
            z_seg: Segment::new(&s.z_path, m * d, lags, lags, SegmentKind::ControlLike),
            w: &s.w,
            a: grid.t(s.node),
            rho,
            m,
            d,
        };
        f_n.eval(&args, &mut o1);
        f.eval(&args, &mut o2);
        best = best.max(euclid_dist(&o1, &o2));
    }
    SupEstimate {
        value: best,
        samples: spec.samples,
        radius: spec.radius,
    }
}

/// `max |G_n - G|` over a Halton sample of the box.
#[allow(clippy::too_many_arguments)]
pub fn delta_sup_g(
    g_n: &dyn DriverG,
    g: &dyn DriverG,
    grid: &TimeGrid,
    m: usize,
    d: usize,
    rho_tilde: &LagMeasure,
    spec: &SampleSpec,
) -> SupEstimate {
    let lags = grid.delay_steps().unwrap_or(0);
    let (mut o1, mut o2) = (vec![0.0; m], vec![0.0; m]);
    let mut best: f64 = 0.0;
    for s in draws(grid, m, d, *spec) {
        let args = GArgs {
            t: grid.t(s.node),
            node: s.node,
            path: 0,
            y: &s.y,
            y_seg: Segment::new(&s.y_path, m, lags, lags, SegmentKind::StateLike),
            w: &s.w,
            a: grid.t(s.node),
            rho_tilde,
            m,
        };
        g_n.eval(&args, &mut o1);
        g.eval(&args, &mut o2);
        best = best.max(euclid_dist(&o1, &o2));
    }
    SupEstimate {
        value: best,
        samples: spec.samples,
        radius: spec.radius,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generators::{LinearF, PerturbedF, Window};
    use std::sync::Arc;

    #[test]
    fn halton_first_points() {
        let h = halton(3, 2);
        assert_eq!(h[0], vec![0.5, 1.0 / 3.0]);
        assert_eq!(h[1], vec![0.25, 2.0 / 3.0]);
        assert_eq!(h[2], vec![0.75, 1.0 / 9.0]);
    }

    fn base() -> Arc<dyn DriverF> {
        Arc::new(LinearF { a: 0.3, b: 0.2, kappa: 0.1, kappa_z: 0.0, c: 0.0, window: Window::Delayed })
    }

    #[test]
    fn offsets_and_sines() {
        let grid = TimeGrid::uniform_with_delay(1.0, 20, 0.1).unwrap();
        let rho = LagMeasure::dirac_at_delay(&grid).unwrap();
        let spec = SampleSpec::default();
        let same = delta_sup_f(base().as_ref(), base().as_ref(), &grid, 1, 1, &rho, &spec);
        assert_eq!(same.value, 0.0);
        for n in [1.0, 4.0, 16.0] {
            let off = PerturbedF { base: base(), offset: 1.0 / n, sine: 0.0 };
            let e = delta_sup_f(&off, base().as_ref(), &grid, 1, 1, &rho, &spec);
            assert!((e.value - 1.0 / n).abs() < 1e-12);
            let sine = PerturbedF { base: base(), offset: 0.0, sine: 1.0 / n };
            let e = delta_sup_f(&sine, base().as_ref(), &grid, 1, 1, &rho, &spec);
            // dense-grid oracle: sup over |y| <= 5 of |sin y| / n is 1 / n
            let oracle = (0..=100_000)
                .map(|i| (-5.0 + 1e-4 * i as f64).sin().abs() / n)
                .fold(0.0, f64::max);
            assert!(e.value <= oracle + 1e-12 && e.value > oracle * (1.0 - 1e-4), "{} vs {oracle}", e.value);
        }
    }
}
