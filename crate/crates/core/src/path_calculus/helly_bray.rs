use super::function::{BvFunction, GridFunction};
use super::stieltjes::{stieltjes_cumulative, EvalPoint};
use crate::error::{Error, Result};

/// For each `n`, `sup_t |int_0^t <x_n, d eta_n> - int_0^t <x, d eta>|` over
/// the grid nodes, left-endpoint sums.
pub fn helly_bray_distance(
    x_seq: &[GridFunction],
    eta_seq: &[BvFunction],
    x: &GridFunction,
    eta: &BvFunction,
) -> Result<Vec<f64>> {
    helly_bray_distance_with(x_seq, eta_seq, x, eta, EvalPoint::Left)
}

pub fn helly_bray_distance_with(
    x_seq: &[GridFunction],
    eta_seq: &[BvFunction],
    x: &GridFunction,
    eta: &BvFunction,
    rule: EvalPoint,
) -> Result<Vec<f64>> {
    if x_seq.len() != eta_seq.len() {
        return Err(Error::Domain(format!(
            "{} integrands but {} integrators",
            x_seq.len(),
            eta_seq.len()
        )));
    }
    let limit = stieltjes_cumulative(x, eta, rule)?;
    x_seq
        .iter()
        .zip(eta_seq)
        .map(|(xn, en)| {
            let cum = stieltjes_cumulative(xn, en, rule)?;
            if cum.len() != limit.len() {
                return Err(Error::GridAlignment("sequence member on another grid".into()));
            }
            if !super::grid::same_grid(xn.grid(), x.grid()) {
                return Err(Error::GridAlignment("sequence member on another grid".into()));
            }
            Ok(cum
                .iter()
                .zip(&limit)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_calculus::grid::TimeGrid;
    use std::sync::Arc;

    #[test]
    fn identical_sequences_give_zero() {
        let g = Arc::new(TimeGrid::uniform(1.0, 50).unwrap());
        let x = GridFunction::from_fn(g.clone(), |t| t.sin());
        let eta = BvFunction::linear(GridFunction::from_fn(g, |t| t * t));
        let d = helly_bray_distance(&[x.clone(), x.clone()], &[eta.clone(), eta.clone()], &x, &eta)
            .unwrap();
        assert_eq!(d, vec![0.0, 0.0]);
    }

    #[test]
    fn constant_shift_bounded_by_variation() {
        let g = Arc::new(TimeGrid::uniform(1.0, 64).unwrap());
        let x = GridFunction::from_fn(g.clone(), |t| t);
        let eta = BvFunction::linear(GridFunction::from_fn(g, |t| t * t));
        let xs: Vec<_> = (1..=5).map(|n| x.map(|v| v + 1.0 / n as f64)).collect();
        let es = vec![eta.clone(); 5];
        let d = helly_bray_distance(&xs, &es, &x, &eta).unwrap();
        for (k, v) in d.iter().enumerate() {
            // oracle: |int (1/n) d eta| = V(eta) / n with V = 1
            assert!((v - 1.0 / (k + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_lengths_and_grids() {
        let g = Arc::new(TimeGrid::uniform(1.0, 8).unwrap());
        let h = Arc::new(TimeGrid::uniform(1.0, 9).unwrap());
        let x = GridFunction::from_fn(g.clone(), |t| t);
        let eta = BvFunction::linear(GridFunction::from_fn(g, |t| t));
        assert!(helly_bray_distance(std::slice::from_ref(&x), &[], &x, &eta).is_err());
        let xh = GridFunction::from_fn(h.clone(), |t| t);
        let eh = BvFunction::linear(GridFunction::from_fn(h, |t| t));
        assert!(matches!(
            helly_bray_distance(&[xh], &[eh], &x, &eta),
            Err(Error::GridAlignment(_))
        ));
    }
}
