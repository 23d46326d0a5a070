//! Dense-grid oracle for the optimum of an objective.

use rayon::prelude::*;
use thiserror::Error;

use crate::objectives::GlobalObjective;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("grid oracle supports dimensions 1 and 2, got {0}; supply f* explicitly")]
    Dimension(usize),
    #[error("grid resolution {got} is below the minimum of {min}")]
    Resolution { got: usize, min: usize },
    #[error("objective returned a non-finite value at {0:?}")]
    NonFinite(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extrema {
    pub max: f64,
    pub argmax: Vec<f64>,
    pub min: f64,
    pub argmin: Vec<f64>,
}

/// Smallest per-axis resolution accepted by [`estimate_fstar`].
pub const MIN_FSTAR_RESOLUTION: usize = 1000;
/// Default per-axis resolution for one-dimensional objectives.
pub const DEFAULT_RESOLUTION: usize = 1_000_000;

fn grid_point(obj: &GlobalObjective, resolution: usize, flat: usize) -> Vec<f64> {
    let domain = obj.domain();
    let mut rest = flat;
    (0..obj.dimension())
        .map(|d| {
            let j = rest % resolution;
            rest /= resolution;
            let (lo, hi) = (domain.lower[d], domain.upper[d]);
            if j + 1 == resolution {
                hi
            } else {
                lo + (hi - lo) * j as f64 / (resolution - 1) as f64
            }
        })
        .collect()
}

/// Evaluates `obj` on a uniform grid with `resolution` points per axis
/// (endpoints included). Ties resolve to the first grid point in
/// axis-0-fastest order.
pub fn grid_extrema(obj: &GlobalObjective, resolution: usize) -> Result<Extrema, OracleError> {
    let dim = obj.dimension();
    if dim == 0 || dim > 2 {
        return Err(OracleError::Dimension(dim));
    }
    if resolution < 2 {
        return Err(OracleError::Resolution {
            got: resolution,
            min: 2,
        });
    }
    let total = resolution.pow(dim as u32);
    // (max value, max index, min value, min index)
    let best = (0..total)
        .into_par_iter()
        .map(|flat| {
            let v = obj.evaluate(&grid_point(obj, resolution, flat));
            (v, flat, v, flat)
        })
        .try_fold(
            || (f64::NEG_INFINITY, usize::MAX, f64::INFINITY, usize::MAX),
            |acc, item| {
                if !item.0.is_finite() {
                    return Err(item.1);
                }
                Ok(merge(acc, item))
            },
        )
        .try_reduce(
            || (f64::NEG_INFINITY, usize::MAX, f64::INFINITY, usize::MAX),
            |a, b| Ok(merge(a, b)),
        )
        .map_err(|flat| OracleError::NonFinite(grid_point(obj, resolution, flat)))?;
    Ok(Extrema {
        max: best.0,
        argmax: grid_point(obj, resolution, best.1),
        min: best.2,
        argmin: grid_point(obj, resolution, best.3),
    })
}

fn merge(a: (f64, usize, f64, usize), b: (f64, usize, f64, usize)) -> (f64, usize, f64, usize) {
    let (max, imax) = if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        (b.0, b.1)
    } else {
        (a.0, a.1)
    };
    let (min, imin) = if b.2 < a.2 || (b.2 == a.2 && b.3 < a.3) {
        (b.2, b.3)
    } else {
        (a.2, a.3)
    };
    (max, imax, min, imin)
}

/// `(f*, argmax)` from the dense grid.
pub fn estimate_fstar(
    obj: &GlobalObjective,
    resolution: usize,
) -> Result<(f64, Vec<f64>), OracleError> {
    if resolution < MIN_FSTAR_RESOLUTION && obj.dimension() == 1 {
        return Err(OracleError::Resolution {
            got: resolution,
            min: MIN_FSTAR_RESOLUTION,
        });
    }
    let ext = grid_extrema(obj, resolution)?;
    Ok((ext.max, ext.argmax))
}

/// Mean absolute difference between neighboring grid values on a 1-D grid.
pub fn mean_neighbor_gap(obj: &GlobalObjective, resolution: usize) -> f64 {
    let values: Vec<f64> = (0..resolution)
        .map(|j| obj.evaluate(&grid_point(obj, resolution, j)))
        .collect();
    values.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (resolution - 1) as f64
}
