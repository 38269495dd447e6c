//! Exhaustive grid oracle for the outer problem on small instances.

use serde::{Deserialize, Serialize};

use crate::bounds::{group_polytope, group_problem, inner_lp_with, Direction, GroupProblem, InnerOutcome, SearchOptions};
use crate::dataset::{GroupRecord, OutcomeRange, ShapeConstraintSet};
use crate::error::{Error, Result};
use crate::feasible::{clamp_to_simplex, FeasibleSetChart, NONNEG_TOL};
use crate::linprog::Solver;
use crate::support::CovariateSupport;

pub const ORACLE_MAX_K: usize = 8;
pub const ORACLE_MAX_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    /// Spacing of the grid in chart coordinates.
    pub grid_step: f64,
    /// Rounds of local refinement around the best grid points, each on a grid
    /// four times finer than the last.
    pub refine_levels: usize,
    /// Grid points refined per round and direction.
    pub refine_keep: usize,
    /// Refuse grids with more points than this.
    pub max_points: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            grid_step: 0.01,
            refine_levels: 0,
            refine_keep: 4,
            max_points: 20_000_000,
        }
    }
}

impl OracleOptions {
    pub fn with_step(grid_step: f64) -> Self {
        OracleOptions {
            grid_step,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleBounds {
    pub lower: f64,
    pub upper: f64,
    /// Joints attaining `lower` and `upper`.
    pub p_lower: Vec<f64>,
    pub p_upper: Vec<f64>,
    pub dim: usize,
    pub evaluated: usize,
}

struct Tracker<'a> {
    chart: &'a FeasibleSetChart,
    problem: &'a GroupProblem<'a>,
    solver: Solver,
    z: Vec<f64>,
    p: Vec<f64>,
    evaluated: usize,
    /// (value, w, p) for the lowest minima and highest maxima seen.
    low: Vec<(f64, Vec<f64>, Vec<f64>)>,
    high: Vec<(f64, Vec<f64>, Vec<f64>)>,
    keep: usize,
}

fn insert(list: &mut Vec<(f64, Vec<f64>, Vec<f64>)>, item: (f64, Vec<f64>, Vec<f64>), keep: usize, better: impl Fn(f64, f64) -> bool) {
    if list.len() == keep && !better(item.0, list[keep - 1].0) {
        return;
    }
    let pos = list.iter().position(|e| better(item.0, e.0)).unwrap_or(list.len());
    list.insert(pos, item);
    list.truncate(keep);
}

impl Tracker<'_> {
    fn visit_lifted(&mut self, w: &[f64], z: Option<&[f64]>) -> Result<()> {
        match z {
            Some(z) => self.z = z.to_vec(),
            None => self.chart.lifted_point(w, &mut self.z),
        }
        if self.z.iter().any(|v| *v < -NONNEG_TOL) {
            return Ok(());
        }
        clamp_to_simplex(&self.z[..self.chart.k()], &mut self.p);
        self.evaluated += 1;
        for dir in [Direction::Min, Direction::Max] {
            let out = inner_lp_with(&mut self.solver, &self.problem.inner(&self.p, dir))?;
            if let InnerOutcome::Optimal { value, .. } = out {
                let item = (value, w.to_vec(), self.p.clone());
                match dir {
                    Direction::Min => insert(&mut self.low, item, self.keep, |a, b| a < b),
                    Direction::Max => insert(&mut self.high, item, self.keep, |a, b| a > b),
                }
            } else {
                // the inner program at p is infeasible in both directions
                break;
            }
        }
        Ok(())
    }

    /// Visits the grid `center + step * i` for integer `i` with `|i_c| <=
    /// radius` clipped to the box `[lo, hi]`.
    fn grid(&mut self, lo: &[f64], hi: &[f64], step: f64) -> Result<()> {
        let d = lo.len();
        let counts: Vec<usize> = lo
            .iter()
            .zip(hi)
            .map(|(a, b)| ((b - a) / step).floor() as usize + 1)
            .collect();
        let mut idx = vec![0usize; d];
        let mut w = vec![0.0; d];
        loop {
            for c in 0..d {
                // the last point of each axis is pinned to the upper face
                w[c] = if idx[c] + 1 == counts[c] && counts[c] > 1 { hi[c] } else { lo[c] + step * idx[c] as f64 };
            }
            self.visit_lifted(&w.clone(), None)?;
            let mut c = 0;
            loop {
                if c == d {
                    return Ok(());
                }
                idx[c] += 1;
                if idx[c] < counts[c] {
                    break;
                }
                idx[c] = 0;
                c += 1;
            }
        }
    }
}

/// Grid size for a box at a given step.
fn grid_points(lo: &[f64], hi: &[f64], step: f64) -> f64 {
    lo.iter()
        .zip(hi)
        .map(|(a, b)| ((b - a) / step).floor() + 2.0)
        .product()
}

/// Bounds on `sum_k lambda_k E[Y | X = x_k, G = g]` by enumerating a grid over
/// the chart coordinates of the feasible joints, plus the axis extremes of the
/// chart, and solving the inner program as a linear program at every point.
/// Every reported value is attained by a feasible joint, so the oracle
/// interval is contained in the sharp interval and approaches it as the grid
/// is refined.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_bounds(
    group: &GroupRecord,
    support: &CovariateSupport,
    lambda: &[f64],
    range: OutcomeRange,
    shape: Option<&ShapeConstraintSet>,
    use_finer: bool,
    opts: &OracleOptions,
) -> Result<OracleBounds> {
    if support.len() > ORACLE_MAX_K {
        return Err(Error::TooLarge(format!("{} support points (oracle handles at most {ORACLE_MAX_K})", support.len())));
    }
    if !(opts.grid_step > 0.0) {
        return Err(Error::InvalidInput(format!("grid step {} must be positive", opts.grid_step)));
    }
    let problem = group_problem(group, support, lambda, range, shape, use_finer)?;
    let (_, chart) = group_polytope(group, support, &SearchOptions::default())?;
    let d = chart.dim();
    if d > ORACLE_MAX_DIM {
        return Err(Error::TooLarge(format!("chart dimension {d} (oracle handles at most {ORACLE_MAX_DIM})")));
    }
    let (lo, hi) = chart.bounding_box();
    let (lo, hi) = (lo.to_vec(), hi.to_vec());
    let n = grid_points(&lo, &hi, opts.grid_step);
    if n > opts.max_points as f64 {
        return Err(Error::TooLarge(format!("{n:.0} grid points at step {}", opts.grid_step)));
    }
    let keep = opts.refine_keep.max(1);
    let mut t = Tracker {
        chart: &chart,
        problem: &problem,
        solver: Solver::default(),
        z: Vec::new(),
        p: Vec::new(),
        evaluated: 0,
        low: Vec::with_capacity(keep + 1),
        high: Vec::with_capacity(keep + 1),
        keep,
    };
    let base = vec![0.0; d];
    t.visit_lifted(&base, None)?;
    for z in chart.extremes() {
        let w = chart.coords(z);
        t.visit_lifted(&w, Some(z))?;
    }
    if d > 0 {
        t.grid(&lo, &hi, opts.grid_step)?;
        let mut step = opts.grid_step;
        for _ in 0..opts.refine_levels {
            let centers: Vec<Vec<f64>> = t.low.iter().chain(&t.high).map(|e| e.1.clone()).collect();
            let fine = step / 4.0;
            for c in centers {
                let a: Vec<f64> = c.iter().zip(&lo).map(|(x, l)| (x - step).max(*l)).collect();
                let b: Vec<f64> = c.iter().zip(&hi).map(|(x, h)| (x + step).min(*h)).collect();
                t.grid(&a, &b, fine)?;
            }
            step = fine;
        }
    }
    let evaluated = t.evaluated;
    match (t.low.into_iter().next(), t.high.into_iter().next()) {
        (Some(l), Some(h)) => Ok(OracleBounds {
            lower: l.0,
            upper: h.0,
            p_lower: l.2,
            p_upper: h.2,
            dim: d,
            evaluated,
        }),
        _ => Err(Error::EmptyIdentifiedSet { group: group.id.clone() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::group_bounds;
    use crate::dataset::fixtures::{group, single_binary};
    use crate::dataset::Monotone;

    fn two_binary() -> (GroupRecord, CovariateSupport) {
        let s = CovariateSupport::binary_product(2).unwrap();
        let g = group("g", 1.0, 0.55, &[(0, 0.0, 0.4), (0, 1.0, 0.6), (1, 0.0, 0.3), (1, 1.0, 0.7)]);
        (g, s)
    }

    #[test]
    fn zero_dimensional_matches_search() {
        let ds = single_binary();
        let lam = [0.0, 1.0];
        let o = brute_force_bounds(&ds.groups[0], &ds.support, &lam, ds.range, None, false, &OracleOptions::default()).unwrap();
        let b = group_bounds(&ds.groups[0], &ds.support, &lam, ds.range, None, false, &SearchOptions::default()).unwrap();
        assert_eq!(o.dim, 0);
        assert!((o.lower - b.lower).abs() < 1e-12 && (o.upper - b.upper).abs() < 1e-12);
    }

    #[test]
    fn two_binary_matches_search() {
        let (g, s) = two_binary();
        for lam in [[0.0, 0.0, 0.0, 1.0], [1.0, 0.0, 0.0, -1.0], [0.0, 1.0, -1.0, 0.0]] {
            let o = brute_force_bounds(&g, &s, &lam, OutcomeRange::unit(), None, false, &OracleOptions::with_step(0.005)).unwrap();
            let b = group_bounds(&g, &s, &lam, OutcomeRange::unit(), None, false, &SearchOptions::default()).unwrap();
            assert_eq!(o.dim, 1);
            assert!((o.lower - b.lower).abs() <= 0.01, "{lam:?} {o:?} {b:?}");
            assert!((o.upper - b.upper).abs() <= 0.01, "{lam:?} {o:?} {b:?}");
            // oracle values are attained, so search can only be wider
            assert!(b.lower <= o.lower + 1e-6 && b.upper >= o.upper - 1e-6);
        }
    }

    #[test]
    fn shape_row_shrinks_oracle_interval() {
        let (mut g, s) = two_binary();
        g.y_mean = 0.9;
        let lam = [0.0, 0.0, 1.0, 0.0];
        let shape = ShapeConstraintSet::monotone(&s, 0, Monotone::Increasing).unwrap();
        let opts = OracleOptions::with_step(0.01);
        let free = brute_force_bounds(&g, &s, &lam, OutcomeRange::unit(), None, false, &opts).unwrap();
        let tied = brute_force_bounds(&g, &s, &lam, OutcomeRange::unit(), Some(&shape), false, &opts).unwrap();
        assert!(tied.lower >= free.lower - 1e-12 && tied.upper <= free.upper + 1e-12);
        assert!((tied.lower - free.lower) + (free.upper - tied.upper) > 1e-3, "{free:?} {tied:?}");
    }

    #[test]
    fn refinement_never_loosens() {
        let (g, s) = two_binary();
        let lam = [1.0, -1.0, 0.0, 0.0];
        let coarse = OracleOptions::with_step(0.05);
        let fine = OracleOptions { refine_levels: 2, ..coarse };
        let a = brute_force_bounds(&g, &s, &lam, OutcomeRange::unit(), None, false, &coarse).unwrap();
        let b = brute_force_bounds(&g, &s, &lam, OutcomeRange::unit(), None, false, &fine).unwrap();
        assert!(b.lower <= a.lower && b.upper >= a.upper);
    }

    #[test]
    fn rejects_large_instances() {
        let s = CovariateSupport::binary_product(4).unwrap();
        let marg: Vec<(usize, f64, f64)> = (0..4).flat_map(|l| [(l, 0.0, 0.5), (l, 1.0, 0.5)]).collect();
        let g = group("g", 1.0, 0.5, &marg);
        let lam = vec![0.0; 16];
        let r = brute_force_bounds(&g, &s, &lam, OutcomeRange::unit(), None, false, &OracleOptions::default());
        assert!(matches!(r, Err(Error::TooLarge(_))));
    }
}
