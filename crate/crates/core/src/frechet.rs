//! Closed-form bounds for binary outcomes from Fréchet inequalities.

use serde::{Deserialize, Serialize};

use crate::dataset::{AggregateDataset, GroupRecord};
use crate::error::{Error, Result};
use crate::support::CovariateSupport;

/// Bounds on `P[Y = y, X = x_k | G = g]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrechetCell {
    pub lower: f64,
    pub upper: f64,
}

pub fn cell_bounds(group: &GroupRecord, support: &CovariateSupport, y: u8, k: usize) -> Result<FrechetCell> {
    if y > 1 {
        return Err(Error::InvalidInput(format!("outcome value {y} is not binary")));
    }
    if k >= support.len() {
        return Err(Error::InvalidInput(format!("cell {k} outside a support of {}", support.len())));
    }
    let py = if y == 1 { group.y_mean } else { 1.0 - group.y_mean };
    let point = support.point(k);
    let mut sum = py;
    let mut upper = py;
    for (l, v) in point.iter().enumerate() {
        let m = group.marginal(l, *v).unwrap_or(0.0);
        sum += m;
        upper = upper.min(m);
    }
    let lower = (sum - point.len() as f64).max(0.0);
    Ok(FrechetCell {
        lower: lower.clamp(0.0, 1.0),
        upper: upper.clamp(lower, 1.0),
    })
}

/// Bounds on `E[Y | X = x_k, G = g]` from the four cell bounds. A cell with no
/// mass leaves the conditional mean unrestricted.
pub fn ratio_bounds(group: &GroupRecord, support: &CovariateSupport, k: usize) -> Result<(f64, f64)> {
    let one = cell_bounds(group, support, 1, k)?;
    let zero = cell_bounds(group, support, 0, k)?;
    let ratio = |num: f64, den: f64, empty: f64| if den > 0.0 { num / den } else { empty };
    let lo = ratio(one.lower, one.lower + zero.upper, 0.0);
    let hi = ratio(one.upper, zero.lower + one.upper, 1.0);
    Ok((lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrechetGroup {
    pub group: String,
    pub lower: f64,
    pub upper: f64,
    pub cells: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrechetResult {
    pub per_group: Vec<FrechetGroup>,
    pub lower: f64,
    pub upper: f64,
}

/// Interval for `sum_k lambda_k E[Y | X = x_k, G = g]` from the per-cell ratio
/// bounds. Cells with negative weight contribute their upper ratio to the
/// lower bound and vice versa.
pub fn group_frechet(group: &GroupRecord, support: &CovariateSupport, lambda: &[f64]) -> Result<FrechetGroup> {
    if lambda.len() != support.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} support points",
            lambda.len(),
            support.len()
        )));
    }
    let cells = (0..support.len())
        .map(|k| ratio_bounds(group, support, k))
        .collect::<Result<Vec<_>>>()?;
    let (mut lower, mut upper) = (0.0, 0.0);
    for (l, (lo, hi)) in lambda.iter().zip(&cells) {
        if *l >= 0.0 {
            lower += l * lo;
            upper += l * hi;
        } else {
            lower += l * hi;
            upper += l * lo;
        }
    }
    Ok(FrechetGroup {
        group: group.id.clone(),
        lower,
        upper,
        cells,
    })
}

pub fn frechet_identified_set(dataset: &AggregateDataset, lambda: &[f64]) -> Result<FrechetResult> {
    if !dataset.binary {
        return Err(Error::NotBinary);
    }
    let per_group = dataset
        .groups
        .iter()
        .map(|g| group_frechet(g, &dataset.support, lambda).map_err(|e| e.in_group(&g.id)))
        .collect::<Result<Vec<_>>>()?;
    let lower = per_group.iter().zip(&dataset.groups).map(|(f, g)| g.share * f.lower).sum();
    let upper = per_group.iter().zip(&dataset.groups).map(|(f, g)| g.share * f.upper).sum();
    Ok(FrechetResult { per_group, lower, upper })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::{group, single_binary};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn cell_examples() {
        let ds = single_binary();
        let g = &ds.groups[0];
        let c = cell_bounds(g, &ds.support, 1, 1).unwrap();
        assert!(close(c.lower, 0.3) && close(c.upper, 0.6));
        let c = cell_bounds(g, &ds.support, 0, 1).unwrap();
        assert!(close(c.lower, 0.1) && close(c.upper, 0.4));
    }

    #[test]
    fn point_mass_cell() {
        let s = CovariateSupport::binary_product(2).unwrap();
        let g = group("g", 1.0, 1.0, &[(0, 1.0, 1.0), (0, 0.0, 0.0), (1, 1.0, 1.0), (1, 0.0, 0.0)]);
        let c = cell_bounds(&g, &s, 1, 3).unwrap();
        assert!(close(c.lower, 1.0) && close(c.upper, 1.0));
        let f = group_frechet(&g, &s, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(close(f.lower, 1.0) && close(f.upper, 1.0));
    }

    #[test]
    fn single_cell_and_contrast() {
        let ds = single_binary();
        let r = frechet_identified_set(&ds, &[0.0, 1.0]).unwrap();
        assert!(close(r.lower, 3.0 / 7.0) && close(r.upper, 6.0 / 7.0));
        let r = frechet_identified_set(&ds, &[-1.0, 1.0]).unwrap();
        assert!(close(r.lower, -4.0 / 7.0) && close(r.upper, 6.0 / 7.0));
    }

    #[test]
    fn empty_cell_is_unrestricted() {
        let s = CovariateSupport::binary_product(1).unwrap();
        let g = group("g", 1.0, 0.4, &[(0, 0.0, 0.0), (0, 1.0, 1.0)]);
        assert_eq!(ratio_bounds(&g, &s, 0).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn requires_binary_flag() {
        let mut ds = single_binary();
        ds.binary = false;
        assert!(matches!(frechet_identified_set(&ds, &[0.0, 1.0]), Err(Error::NotBinary)));
    }
}
