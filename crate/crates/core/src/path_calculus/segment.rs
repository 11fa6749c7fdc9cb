use serde::{Deserialize, Serialize};

use super::function::GridFunction;
use super::grid::TimeGrid;
use crate::error::{Error, Result};

/// Largest per-node dimension a control-like segment may carry.
pub const MAX_SEGMENT_DIM: usize = 64;

static ZEROS: [f64; MAX_SEGMENT_DIM] = [0.0; MAX_SEGMENT_DIM];

/// How a path is prolonged to negative times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentKind {
    /// Frozen at the initial value `x(0)`.
    StateLike,
    /// Zero before time 0.
    ControlLike,
}

/// Borrowed window `theta -> x(t_i + theta)` over the `k + 1` lag nodes
/// ending at node `i`. Index `j = k` is `theta = 0`, `j = 0` is `theta = -delta`.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    dim: usize,
    lags: usize,
    pre: usize,
    pre_value: &'a [f64],
    data: &'a [f64],
}

impl<'a> Segment<'a> {
    /// `path` holds every node of one path, node-major with `dim` entries each.
    pub fn new(path: &'a [f64], dim: usize, node: usize, lags: usize, kind: SegmentKind) -> Self {
        let first = node.saturating_sub(lags);
        let pre = lags - (node - first);
        let pre_value = match kind {
            SegmentKind::StateLike => &path[..dim],
            SegmentKind::ControlLike => {
                assert!(dim <= MAX_SEGMENT_DIM, "segment dim {dim} exceeds {MAX_SEGMENT_DIM}");
                &ZEROS[..dim]
            }
        };
        Self {
            dim,
            lags,
            pre,
            pre_value,
            data: &path[first * dim..(node + 1) * dim],
        }
    }

    /// A segment that is identically zero.
    pub fn zero(dim: usize, lags: usize) -> Segment<'static> {
        assert!(dim <= MAX_SEGMENT_DIM, "segment dim {dim} exceeds {MAX_SEGMENT_DIM}");
        Segment {
            dim,
            lags,
            pre: lags + 1,
            pre_value: &ZEROS[..dim],
            data: &[],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of steps spanned by the window.
    pub fn lags(&self) -> usize {
        self.lags
    }

    /// Value at lag node `j` (`0..=lags`).
    pub fn at(&self, j: usize) -> &'a [f64] {
        debug_assert!(j <= self.lags);
        if j < self.pre {
            self.pre_value
        } else {
            let r = j - self.pre;
            &self.data[r * self.dim..(r + 1) * self.dim]
        }
    }

    /// Value `back` steps before the current node.
    pub fn back(&self, back: usize) -> &'a [f64] {
        self.at(self.lags - back)
    }

    /// `int x(theta) mu(d theta)`, accumulated into `out`.
    pub fn integrate(&self, mu: &LagMeasure, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(back, w) in mu.atoms() {
            for (o, v) in out.iter_mut().zip(self.back(back)) {
                *o += w * v;
            }
        }
    }
}

/// Probability measure on `[-delta, 0]` carried by lag nodes.
///
/// Atoms are stored as `(steps back from theta = 0, weight)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagMeasure {
    atoms: Vec<(usize, f64)>,
}

impl LagMeasure {
    /// Projects `(theta, weight)` atoms to the nearest lag node of `grid`.
    /// Weights must be nonnegative and sum to one within `1e-12`.
    pub fn project(atoms: &[(f64, f64)], grid: &TimeGrid) -> Result<Self> {
        let span = grid
            .delay()
            .ok_or_else(|| Error::Domain("lag measures need a grid with a delay".into()))?;
        if atoms.is_empty() {
            return Err(Error::Domain("measure has no atoms".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if atoms.iter().any(|a| !(a.1 >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "atom weights must be nonnegative and sum to 1, got sum {total}"
            )));
        }
        // lag node j sits at theta_j = t_j - delta
        let thetas: Vec<f64> = (0..=span.steps).map(|j| grid.t(j) - span.delta).collect();
        let tol = grid.tolerance();
        let mut merged: Vec<(usize, f64)> = Vec::new();
        for &(theta, w) in atoms {
            if theta < -span.delta - tol || theta > tol {
                return Err(Error::Domain(format!(
                    "atom at theta = {theta} lies outside [-{}, 0]",
                    span.delta
                )));
            }
            let j = nearest(&thetas, theta);
            let back = span.steps - j;
            match merged.iter_mut().find(|a| a.0 == back) {
                Some(a) => a.1 += w,
                None => merged.push((back, w)),
            }
        }
        merged.sort_by_key(|a| a.0);
        Ok(Self { atoms: merged })
    }

    /// Point mass at `theta = -delta`.
    pub fn dirac_at_delay(grid: &TimeGrid) -> Result<Self> {
        let steps = grid
            .delay_steps()
            .ok_or_else(|| Error::Domain("lag measures need a grid with a delay".into()))?;
        Ok(Self {
            atoms: vec![(steps, 1.0)],
        })
    }

    pub fn atoms(&self) -> &[(usize, f64)] {
        &self.atoms
    }
}

fn nearest(points: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (j, &p) in points.iter().enumerate() {
        // ties go to the later node
        if (p - x).abs() <= (points[best] - x).abs() {
            best = j;
        }
    }
    best
}

/// Owned copy of a delayed window.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayedSegment {
    pub theta: Vec<f64>,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl DelayedSegment {
    pub fn at(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }
}

/// `theta -> x(t + theta)` on the lag nodes of `[-delta, 0]` with the
/// prolongation rule of `kind` for negative times.
pub fn delayed_segment(x: &GridFunction, t: f64, kind: SegmentKind) -> Result<DelayedSegment> {
    let grid = x.grid();
    let span = grid
        .delay()
        .ok_or_else(|| Error::Domain("delayed segments need a grid with a delay".into()))?;
    let node = grid.index_of(t)?;
    let dim = x.dim();
    if kind == SegmentKind::ControlLike && dim > MAX_SEGMENT_DIM {
        return Err(Error::Domain(format!("segment dim {dim} exceeds {MAX_SEGMENT_DIM}")));
    }
    let seg = Segment::new(x.values(), dim, node, span.steps, kind);
    let theta = (0..=span.steps).map(|j| grid.t(j) - span.delta).collect();
    let mut values = Vec::with_capacity((span.steps + 1) * dim);
    for j in 0..=span.steps {
        values.extend_from_slice(seg.at(j));
    }
    Ok(DelayedSegment { theta, dim, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn grid() -> Arc<TimeGrid> {
        Arc::new(TimeGrid::uniform_with_delay(1.0, 10, 0.2).unwrap())
    }

    #[test]
    fn state_like_at_zero_is_constant() {
        let x = GridFunction::from_fn(grid(), |t| 3.0 + t);
        let s = delayed_segment(&x, 0.0, SegmentKind::StateLike).unwrap();
        assert_eq!(s.theta.len(), 3);
        assert!(s.values.iter().all(|&v| v == 3.0));
    }

    #[test]
    fn control_like_at_zero_is_zero_before_origin() {
        let x = GridFunction::from_fn(grid(), |t| 3.0 + t);
        let s = delayed_segment(&x, 0.0, SegmentKind::ControlLike).unwrap();
        assert_eq!(s.values, vec![0.0, 0.0, 3.0]);
    }

    #[test]
    fn interior_window_is_shifted_path() {
        let x = GridFunction::from_fn(grid(), |t| t);
        for kind in [SegmentKind::StateLike, SegmentKind::ControlLike] {
            let s = delayed_segment(&x, 0.5, kind).unwrap();
            for (j, &th) in s.theta.iter().enumerate() {
                assert!((s.at(j)[0] - (0.5 + th)).abs() < 1e-15);
            }
            assert_eq!(*s.values.last().unwrap(), x.scalar_at(5));
        }
    }

    #[test]
    fn partial_window_mixes_prolongation() {
        let x = GridFunction::from_fn(grid(), |t| 1.0 + t);
        let s = delayed_segment(&x, 0.1, SegmentKind::StateLike).unwrap();
        assert_eq!(s.values, vec![1.0, 1.0, x.scalar_at(1)]);
        let s = delayed_segment(&x, 0.1, SegmentKind::ControlLike).unwrap();
        assert_eq!(s.values, vec![0.0, 1.0, x.scalar_at(1)]);
        assert!(delayed_segment(&x, 0.15, SegmentKind::StateLike).is_err());
    }

    #[test]
    fn lag_measure_projection() {
        let g = grid();
        let mu = LagMeasure::project(&[(-0.2, 0.5), (-0.09, 0.25), (0.0, 0.25)], &g).unwrap();
        assert_eq!(mu.atoms(), &[(0, 0.25), (1, 0.25), (2, 0.5)]);
        assert!(LagMeasure::project(&[(-0.2, 0.5)], &g).is_err());
        assert!(LagMeasure::project(&[(-0.5, 1.0)], &g).is_err());
        let x = GridFunction::from_fn(g, |t| t);
        let seg = Segment::new(x.values(), 1, 5, 2, SegmentKind::StateLike);
        let mut out = [0.0];
        seg.integrate(&mu, &mut out);
        assert!((out[0] - (0.25 * 0.5 + 0.25 * 0.4 + 0.5 * 0.3)).abs() < 1e-15);
    }
}
