use std::f64::consts::PI;
use std::fmt;

use crate::path_calculus::TimeGrid;
use crate::stochastic_engine::oscillation;

/// A sequence of paths `n -> X_n` together with its limit, generated per
/// Brownian path. Used as integrands and integrators in Helly–Bray checks.
pub trait PathSequence: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Writes member `n` (or the limit when `n` is `None`) for one path.
    fn fill(&self, n: Option<f64>, grid: &TimeGrid, w: &[f64], d: usize, out: &mut [f64]);
}

#[derive(Debug, Clone)]
pub struct ZeroSeq;

impl PathSequence for ZeroSeq {
    fn name(&self) -> &str {
        "zero"
    }
    fn fill(&self, _: Option<f64>, _: &TimeGrid, _: &[f64], _: usize, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// `X_n(t) = t`.
#[derive(Debug, Clone)]
pub struct TimeSeq;

impl PathSequence for TimeSeq {
    fn name(&self) -> &str {
        "time"
    }
    fn fill(&self, _: Option<f64>, grid: &TimeGrid, _: &[f64], _: usize, out: &mut [f64]) {
        out.copy_from_slice(grid.points());
    }
}

/// `X_n(t) = t + 1/n`.
#[derive(Debug, Clone)]
pub struct TimeShiftSeq;

impl PathSequence for TimeShiftSeq {
    fn name(&self) -> &str {
        "time-shift"
    }
    fn fill(&self, n: Option<f64>, grid: &TimeGrid, _: &[f64], _: usize, out: &mut [f64]) {
        let s = n.map_or(0.0, |n| 1.0 / n);
        for (o, &t) in out.iter_mut().zip(grid.points()) {
            *o = t + s;
        }
    }
}

/// `X_n(t) = W_1(t) + amplitude sin(2 pi n t / T) / n`.
#[derive(Debug, Clone)]
pub struct BrownianSeq {
    pub amplitude: f64,
}

impl PathSequence for BrownianSeq {
    fn name(&self) -> &str {
        if self.amplitude == 0.0 {
            "brownian"
        } else {
            "brownian-perturbed"
        }
    }
    fn fill(&self, n: Option<f64>, grid: &TimeGrid, w: &[f64], d: usize, out: &mut [f64]) {
        let horizon = grid.horizon();
        for (i, o) in out.iter_mut().enumerate() {
            *o = w[i * d];
            if let Some(n) = n {
                *o += self.amplitude * (2.0 * PI * n * grid.t(i) / horizon).sin() / n;
            }
        }
    }
}

/// `X_n(t) = t + amplitude cos(2 pi n^2 t / T) / n`; resonates with
/// [`WildOscillationSeq`].
#[derive(Debug, Clone)]
pub struct OscillatingCosSeq {
    pub amplitude: f64,
}

impl PathSequence for OscillatingCosSeq {
    fn name(&self) -> &str {
        "oscillating-cos"
    }
    fn fill(&self, n: Option<f64>, grid: &TimeGrid, _: &[f64], _: usize, out: &mut [f64]) {
        let horizon = grid.horizon();
        for (o, &t) in out.iter_mut().zip(grid.points()) {
            *o = t;
            if let Some(n) = n {
                *o += self.amplitude * (2.0 * PI * n * n * t / horizon).cos() / n;
            }
        }
    }
}

/// `H_n(t) = t + T sin(2 pi n t / T) / (4 pi n)`: uniform convergence, bounded
/// but non-vanishing variation distance.
#[derive(Debug, Clone)]
pub struct OscillatorySeq;

impl PathSequence for OscillatorySeq {
    fn name(&self) -> &str {
        "oscillatory"
    }
    fn fill(&self, n: Option<f64>, grid: &TimeGrid, _: &[f64], _: usize, out: &mut [f64]) {
        let horizon = grid.horizon();
        for (o, &t) in out.iter_mut().zip(grid.points()) {
            *o = t + n.map_or(0.0, |n| oscillation(t, horizon, n));
        }
    }
}

/// `H_n(t) = t + amplitude T sin(2 pi n^2 t / T) / n`, variation of order
/// `4 amplitude n`: converges uniformly but is not bounded in variation.
#[derive(Debug, Clone)]
pub struct WildOscillationSeq {
    pub amplitude: f64,
}

impl PathSequence for WildOscillationSeq {
    fn name(&self) -> &str {
        "wild-oscillation"
    }
    fn fill(&self, n: Option<f64>, grid: &TimeGrid, _: &[f64], _: usize, out: &mut [f64]) {
        let horizon = grid.horizon();
        for (o, &t) in out.iter_mut().zip(grid.points()) {
            *o = t;
            if let Some(n) = n {
                *o += self.amplitude * horizon * (2.0 * PI * n * n * t / horizon).sin() / n;
            }
        }
    }
}

/// `H_n(t) = scale |G| t / T` with `G = W_1(T) / sqrt(T)` standard normal, so
/// `||H_n||_BV = scale |G|` for every `n`. Reads the terminal value and is
/// therefore not adapted; it only serves distributional checks.
#[derive(Debug, Clone)]
pub struct GaussianScaledSeq {
    pub scale: f64,
}

impl PathSequence for GaussianScaledSeq {
    fn name(&self) -> &str {
        "gaussian-scaled"
    }
    fn fill(&self, _: Option<f64>, grid: &TimeGrid, w: &[f64], d: usize, out: &mut [f64]) {
        let horizon = grid.horizon();
        let g = w[grid.n_steps() * d] / horizon.sqrt();
        for (o, &t) in out.iter_mut().zip(grid.points()) {
            *o = self.scale * g.abs() * t / horizon;
        }
    }
}
