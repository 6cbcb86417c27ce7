//! Laplace-weighted consensus of an ensemble.
//!
//! The consensus point is the weighted mean of the ensemble points with
//! weights `exp(-alpha * value_i)`. Weights are always computed relative to
//! the in-ensemble minimum value, so no exponential is ever taken of a
//! positive argument: the computation stays finite for arbitrarily large
//! alpha, and adding a constant to all values leaves the weights unchanged.
//! Sums are accumulated in index order, never pairwise or in parallel, so a
//! given ensemble always produces the same bits.

use ndarray::ArrayView2;

use crate::error::PsoError;

/// An ensemble of points with objective values and a weight sharpness alpha.
pub struct WeightedEnsemble<'a> {
    pub points: ArrayView2<'a, f64>,
    pub values: &'a [f64],
    pub alpha: f64,
}

impl<'a> WeightedEnsemble<'a> {
    pub fn new(
        points: ArrayView2<'a, f64>,
        values: &'a [f64],
        alpha: f64,
    ) -> Result<Self, PsoError> {
        if points.nrows() != values.len() {
            return Err(PsoError::invalid(format!(
                "{} points but {} values",
                points.nrows(),
                values.len()
            )));
        }
        Ok(WeightedEnsemble { points, values, alpha })
    }
}

fn check_alpha(alpha: f64) -> Result<(), PsoError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(PsoError::invalid(format!("alpha must be positive and finite, got {alpha}")));
    }
    Ok(())
}

fn finite_min(values: impl Iterator<Item = f64>) -> Result<f64, PsoError> {
    let mut min = f64::INFINITY;
    let mut any = false;
    for v in values {
        if !v.is_finite() {
            return Err(PsoError::invalid(format!("non-finite objective value {v}")));
        }
        any = true;
        if v < min {
            min = v;
        }
    }
    if !any {
        return Err(PsoError::invalid("empty ensemble"));
    }
    Ok(min)
}

/// Weighted mean of the full ensemble. See [`consensus_point_subset`].
pub fn consensus_point(ens: &WeightedEnsemble) -> Result<Vec<f64>, PsoError> {
    let all: Vec<usize> = (0..ens.points.nrows()).collect();
    consensus_point_subset(ens.points, ens.values, &all, ens.alpha)
}

/// Weighted mean over the sub-ensemble given by `subset` (row indices).
///
/// Output coordinates are projected onto the sub-ensemble's coordinate range,
/// so the result lies in the convex hull bounding box even when rounding in
/// the weighted sum would protrude by an ulp.
pub fn consensus_point_subset(
    points: ArrayView2<f64>,
    values: &[f64],
    subset: &[usize],
    alpha: f64,
) -> Result<Vec<f64>, PsoError> {
    check_alpha(alpha)?;
    if points.nrows() != values.len() {
        return Err(PsoError::invalid(format!(
            "{} points but {} values",
            points.nrows(),
            values.len()
        )));
    }
    if subset.iter().any(|&i| i >= values.len()) {
        return Err(PsoError::invalid("subset index out of range"));
    }
    let vmin = finite_min(subset.iter().map(|&i| values[i]))?;

    let d = points.ncols();
    let mut wsum = 0.0;
    let mut acc = vec![0.0; d];
    for &i in subset {
        let w = (-alpha * (values[i] - vmin)).exp();
        wsum += w;
        let row = points.row(i);
        for k in 0..d {
            acc[k] += w * row[k];
        }
    }
    for k in 0..d {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in subset {
            let c = points[(i, k)];
            lo = lo.min(c);
            hi = hi.max(c);
        }
        acc[k] = (acc[k] / wsum).clamp(lo, hi);
    }
    Ok(acc)
}

/// Stabilized estimate `vmin - log(mean_i exp(-alpha (v_i - vmin))) / alpha`.
///
/// Always lies in `[vmin, vmin + log(n)/alpha]`; the interior mean is clamped
/// to its exact-arithmetic range `[1/n, 1]` and the result to the envelope, so
/// the bracket holds as a hard guarantee, not just up to roundoff.
pub fn laplace_estimate(values: &[f64], alpha: f64) -> Result<f64, PsoError> {
    check_alpha(alpha)?;
    let vmin = finite_min(values.iter().copied())?;
    let n = values.len() as f64;
    let mut sum = 0.0;
    for &v in values {
        sum += (-alpha * (v - vmin)).exp();
    }
    let mean = (sum / n).clamp(1.0 / n, 1.0);
    let upper = vmin + n.ln() / alpha;
    Ok((vmin - mean.ln() / alpha).clamp(vmin, upper))
}
