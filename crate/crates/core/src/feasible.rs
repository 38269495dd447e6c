//! Joint covariate distributions consistent with a group's marginals.
//!
//! Every feasible set is stored as a lifted polytope `{z >= 0 : E z = e}`
//! whose first `K` coordinates are the joint `p`. The extra coordinates are
//! slack variables: marginal deviations when the observed marginals are
//! mutually inconsistent, or band slacks when marginals are only known to lie
//! in intervals. Searches move through an orthonormal null-space chart of `E`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::GroupRecord;
use crate::error::{Error, Result};
use crate::linprog::{LinearProgram, LpStatus, Solver};
use crate::support::CovariateSupport;

/// Total marginal slack below which a group's marginals count as consistent.
pub const SLACK_TOL: f64 = 1e-8;
/// Relative singular-value cutoff for rank decisions.
pub const RANK_TOL: f64 = 1e-10;
/// Coordinates this far below zero still count as feasible.
pub const NONNEG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleJoint {
    pub p: Vec<f64>,
}

impl FeasibleJoint {
    /// Clamps negative entries to zero and renormalizes onto the simplex.
    pub fn from_raw(raw: &[f64]) -> Self {
        let mut p = Vec::with_capacity(raw.len());
        clamp_to_simplex(raw, &mut p);
        FeasibleJoint { p }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Implied marginals `A p`, in support row order.
    pub fn marginals(&self, support: &CovariateSupport) -> Vec<f64> {
        apply_rows(&support.indicator_rows(), &self.p)
    }
}

/// Writes `max(raw, 0)` rescaled to sum to one into `out`.
pub fn clamp_to_simplex(raw: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend(raw.iter().map(|v| v.max(0.0)));
    let s: f64 = out.iter().sum();
    if s > 0.0 {
        out.iter_mut().for_each(|v| *v /= s);
    } else {
        let u = 1.0 / out.len() as f64;
        out.iter_mut().for_each(|v| *v = u);
    }
}

fn apply_rows(rows: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    rows.iter()
        .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

#[derive(Debug, Clone)]
enum Lift {
    /// `z = p`
    Identity,
    /// `z = (p, v+, v-)` with `A p + v+ - v- = m`
    MarginalSlack { a: Vec<Vec<f64>>, m: Vec<f64> },
    /// `z = (p, s_lo, s_hi[, t_lo, t_hi])` with
    /// `A p - s_lo (+ t_lo) = lo` and `A p + s_hi (- t_hi) = hi`
    Band {
        a: Vec<Vec<f64>>,
        lo: Vec<f64>,
        hi: Vec<f64>,
        violation: bool,
    },
}

/// `{z >= 0 : E z = e}`; the first `k` coordinates of `z` are `p`.
#[derive(Debug, Clone)]
pub struct JointPolytope {
    k: usize,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    min_slack: f64,
    point: Vec<f64>,
    lift: Lift,
}

impl JointPolytope {
    /// The joints reproducing the marginals `m` (support row order). When the
    /// marginals are inconsistent this is the set of joints attaining the
    /// minimal total slack.
    pub fn for_marginals(support: &CovariateSupport, m: &[f64]) -> Result<Self> {
        let a = support.indicator_rows();
        if m.len() != a.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} marginal entries for {} support rows",
                m.len(),
                a.len()
            )));
        }
        let k = support.len();
        let (p, slack) = min_slack_lp(support, m)?;
        if slack <= SLACK_TOL {
            let mut rows = a;
            rows.push(vec![1.0; k]);
            let mut rhs = m.to_vec();
            rhs.push(1.0);
            return Ok(JointPolytope {
                k,
                rows,
                rhs,
                min_slack: slack,
                point: p,
                lift: Lift::Identity,
            });
        }

        let r = a.len();
        let n = k + 2 * r;
        let mult = support.row_multiplicities();
        let mut rows = Vec::with_capacity(r + 2);
        for (i, ai) in a.iter().enumerate() {
            let mut row = vec![0.0; n];
            row[..k].copy_from_slice(ai);
            row[k + i] = 1.0;
            row[k + r + i] = -1.0;
            rows.push(row);
        }
        let mut ones = vec![0.0; n];
        ones[..k].iter_mut().for_each(|v| *v = 1.0);
        rows.push(ones);
        let mut face = vec![0.0; n];
        for i in 0..r {
            face[k + i] = mult[i] as f64;
            face[k + r + i] = mult[i] as f64;
        }
        rows.push(face);
        let mut rhs = m.to_vec();
        rhs.push(1.0);
        rhs.push(slack);
        let lift = Lift::MarginalSlack { a, m: m.to_vec() };
        let point = lift_with(&lift, k, &p);
        Ok(JointPolytope {
            k,
            rows,
            rhs,
            min_slack: slack,
            point,
            lift,
        })
    }

    /// The joints whose marginals lie in `[lo, hi]` row by row. When no joint
    /// does, the set of joints with minimal total band violation.
    pub fn for_bands(support: &CovariateSupport, lo: &[f64], hi: &[f64]) -> Result<Self> {
        let a = support.indicator_rows();
        let r = a.len();
        if lo.len() != r || hi.len() != r {
            return Err(Error::DimensionMismatch(format!(
                "band vectors of length {}/{} for {r} support rows",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(hi).any(|(l, h)| l > h) {
            return Err(Error::InvalidInput("band with lower end above upper end".into()));
        }
        let k = support.len();
        let build = |violation: bool| {
            let n = k + 2 * r + if violation { 2 * r } else { 0 };
            let mut rows = Vec::with_capacity(2 * r + 1);
            let mut rhs = Vec::with_capacity(2 * r + 1);
            for (i, ai) in a.iter().enumerate() {
                let mut low = vec![0.0; n];
                low[..k].copy_from_slice(ai);
                low[k + i] = -1.0;
                let mut high = vec![0.0; n];
                high[..k].copy_from_slice(ai);
                high[k + r + i] = 1.0;
                if violation {
                    low[k + 2 * r + i] = 1.0;
                    high[k + 3 * r + i] = -1.0;
                }
                rows.push(low);
                rhs.push(lo[i]);
                rows.push(high);
                rhs.push(hi[i]);
            }
            let mut ones = vec![0.0; n];
            ones[..k].iter_mut().for_each(|v| *v = 1.0);
            rows.push(ones);
            rhs.push(1.0);
            (n, rows, rhs)
        };

        let mut solver = Solver::default();
        let (n, rows, rhs) = build(false);
        let mut lp = LinearProgram::minimize(vec![0.0; n]);
        for (row, b) in rows.iter().zip(&rhs) {
            lp.add_eq(row.clone(), *b);
        }
        let sol = solver.solve(&lp)?;
        let lift = Lift::Band {
            a: a.clone(),
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            violation: false,
        };
        if sol.status == LpStatus::Optimal {
            let p = FeasibleJoint::from_raw(&sol.x[..k]).p;
            let point = lift_with(&lift, k, &p);
            return Ok(JointPolytope {
                k,
                rows,
                rhs,
                min_slack: 0.0,
                point,
                lift,
            });
        }

        // violations count once per (covariate, support point) pair
        let (n, mut rows, mut rhs) = build(true);
        let mult = support.row_multiplicities();
        let mut obj = vec![0.0; n];
        for i in 0..r {
            obj[k + 2 * r + i] = mult[i] as f64;
            obj[k + 3 * r + i] = mult[i] as f64;
        }
        let mut lp = LinearProgram::minimize(obj.clone());
        for (row, b) in rows.iter().zip(&rhs) {
            lp.add_eq(row.clone(), *b);
        }
        let sol = solver.solve(&lp)?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::Internal("band violation program not solvable".into()));
        }
        rows.push(obj);
        rhs.push(sol.objective_value);
        Ok(JointPolytope {
            k,
            rows,
            rhs,
            min_slack: sol.objective_value,
            point: sol.x.iter().map(|v| v.max(0.0)).collect(),
            lift: Lift::Band {
                a,
                lo: lo.to_vec(),
                hi: hi.to_vec(),
                violation: true,
            },
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Length of the lifted vector `z`.
    pub fn lifted_len(&self) -> usize {
        self.rows.first().map_or(self.k, Vec::len)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Minimal total slack (marginal deviation or band violation); zero for
    /// consistent inputs.
    pub fn min_slack(&self) -> f64 {
        self.min_slack
    }

    pub fn is_exact(&self) -> bool {
        self.min_slack <= SLACK_TOL
    }

    /// One feasible lifted point.
    pub fn point(&self) -> &[f64] {
        &self.point
    }

    /// Lifts a joint `p` into `z` coordinates, filling slacks from `A p`.
    pub fn lift(&self, p: &[f64]) -> Vec<f64> {
        lift_with(&self.lift, self.k, p)
    }

    /// Largest equality residual at `z`.
    pub fn residual(&self, z: &[f64]) -> f64 {
        apply_rows(&self.rows, z)
            .iter()
            .zip(&self.rhs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        z.len() == self.lifted_len()
            && z.iter().all(|v| *v >= -tol)
            && self.residual(z) <= tol.max(1e-9)
    }
}

fn lift_with(lift: &Lift, k: usize, p: &[f64]) -> Vec<f64> {
    match lift {
        Lift::Identity => p.to_vec(),
        Lift::MarginalSlack { a, m } => {
            let ap = apply_rows(a, p);
            let r = a.len();
            let mut z = vec![0.0; k + 2 * r];
            z[..k].copy_from_slice(p);
            for i in 0..r {
                let dev = m[i] - ap[i];
                z[k + i] = dev.max(0.0);
                z[k + r + i] = (-dev).max(0.0);
            }
            z
        }
        Lift::Band { a, lo, hi, violation } => {
            let ap = apply_rows(a, p);
            let r = a.len();
            let mut z = vec![0.0; k + 2 * r + if *violation { 2 * r } else { 0 }];
            z[..k].copy_from_slice(p);
            for i in 0..r {
                if *violation {
                    z[k + i] = (ap[i] - lo[i]).max(0.0);
                    z[k + 2 * r + i] = (lo[i] - ap[i]).max(0.0);
                    z[k + r + i] = (hi[i] - ap[i]).max(0.0);
                    z[k + 3 * r + i] = (ap[i] - hi[i]).max(0.0);
                } else {
                    z[k + i] = ap[i] - lo[i];
                    z[k + r + i] = hi[i] - ap[i];
                }
            }
            z
        }
    }
}

/// The slack-minimization program over one `(covariate, support point)` row
/// per pair, so a marginal value shared by several points is counted once per
/// point. Returns an optimal `p` and the optimal total slack.
fn min_slack_lp(support: &CovariateSupport, m: &[f64]) -> Result<(Vec<f64>, f64)> {
    let k = support.len();
    let l = support.num_covariates();
    let lk = l * k;
    let n = k + 2 * lk;
    let mut obj = vec![0.0; n];
    obj[k..].iter_mut().for_each(|v| *v = 1.0);
    let mut lp = LinearProgram::minimize(obj);
    let a = support.indicator_rows();
    for cov in 0..l {
        for pt in 0..k {
            let r = support.row_of(cov, support.codes(pt)[cov]);
            let idx = cov * k + pt;
            let mut row = vec![0.0; n];
            row[..k].copy_from_slice(&a[r]);
            row[k + idx] = 1.0;
            row[k + lk + idx] = -1.0;
            lp.add_eq(row, m[r]);
        }
    }
    let mut ones = vec![0.0; n];
    ones[..k].iter_mut().for_each(|v| *v = 1.0);
    lp.add_eq(ones, 1.0);
    let sol = crate::linprog::solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!(
            "slack program ended with status {:?}",
            sol.status
        )));
    }
    Ok((FeasibleJoint::from_raw(&sol.x[..k]).p, sol.objective_value.max(0.0)))
}

/// Solves the slack-minimization program for a group and returns an optimal
/// joint with the optimal total slack (zero for consistent marginals).
pub fn min_slack_joint(
    group: &GroupRecord,
    support: &CovariateSupport,
) -> Result<(FeasibleJoint, f64)> {
    let m = group.marginal_vector(support)?;
    let (p, s) = min_slack_lp(support, &m)?;
    Ok((FeasibleJoint { p }, s))
}

/// Orthonormal basis (as columns) of the null space of the matrix with the
/// given rows and `n` columns.
pub fn null_space(rows: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    let nr = rows.len().max(n);
    let mat = DMatrix::from_fn(nr, n, |i, j| rows.get(i).map_or(0.0, |r| r[j]));
    let svd = mat.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.iter().fold(0.0f64, |a, b| a.max(*b));
    let cutoff = RANK_TOL * smax.max(f64::MIN_POSITIVE);
    let null: Vec<usize> = (0..n)
        .filter(|&i| svd.singular_values[i] <= cutoff)
        .collect();
    DMatrix::from_fn(n, null.len(), |r, c| vt[(null[c], r)])
}

/// Numerical rank with the module's singular-value cutoff.
pub fn numerical_rank(rows: &[Vec<f64>], n: usize) -> usize {
    n - null_space(rows, n).ncols()
}

/// An affine chart `z = base + B w` of a lifted polytope, with the extreme
/// points of each chart axis.
#[derive(Debug, Clone)]
pub struct FeasibleSetChart {
    k: usize,
    base: Vec<f64>,
    basis: DMatrix<f64>,
    extremes: Vec<Vec<f64>>,
    w_lo: Vec<f64>,
    w_hi: Vec<f64>,
}

impl FeasibleSetChart {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn base_point(&self) -> FeasibleJoint {
        FeasibleJoint::from_raw(&self.base[..self.k])
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn null_basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Lifted points maximizing and minimizing each chart coordinate.
    pub fn extremes(&self) -> &[Vec<f64>] {
        &self.extremes
    }

    /// Bounding box of the polytope in chart coordinates.
    pub fn bounding_box(&self) -> (&[f64], &[f64]) {
        (&self.w_lo, &self.w_hi)
    }

    /// `z = base + B w`, written into `z`.
    pub fn lifted_point(&self, w: &[f64], z: &mut Vec<f64>) {
        z.clear();
        z.extend_from_slice(&self.base);
        for (c, wc) in w.iter().enumerate() {
            if *wc == 0.0 {
                continue;
            }
            for (r, zr) in z.iter_mut().enumerate() {
                *zr += self.basis[(r, c)] * wc;
            }
        }
    }

    /// Chart coordinates of a lifted point: `B' (z - base)`.
    pub fn coords(&self, z: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|c| {
                z.iter()
                    .zip(&self.base)
                    .enumerate()
                    .map(|(r, (a, b))| self.basis[(r, c)] * (a - b))
                    .sum()
            })
            .collect()
    }
}

/// Builds the chart of a polytope. The base is recentered to the centroid of
/// the axis extremes so that it sits inside the polytope rather than on a face.
pub fn chart(polytope: &JointPolytope) -> Result<FeasibleSetChart> {
    let n = polytope.lifted_len();
    let basis = null_space(polytope.rows(), n);
    let d = basis.ncols();
    let mut base = polytope.point().to_vec();
    let mut extremes: Vec<Vec<f64>> = Vec::with_capacity(2 * d);
    let mut solver = Solver::default();
    for c in 0..d {
        let dir: Vec<f64> = basis.column(c).iter().copied().collect();
        for sense_max in [false, true] {
            let obj = if sense_max {
                dir.iter().map(|v| -v).collect()
            } else {
                dir.clone()
            };
            let mut lp = LinearProgram::minimize(obj);
            for (row, b) in polytope.rows().iter().zip(polytope.rhs()) {
                lp.add_eq(row.clone(), *b);
            }
            let sol = solver.solve(&lp)?;
            if sol.status != LpStatus::Optimal {
                return Err(Error::Internal(format!(
                    "axis program ended with status {:?}",
                    sol.status
                )));
            }
            let z: Vec<f64> = sol.x.iter().map(|v| v.max(0.0)).collect();
            let dup = extremes
                .iter()
                .any(|e| e.iter().zip(&z).all(|(a, b)| (a - b).abs() <= 1e-9));
            if !dup {
                extremes.push(z);
            }
        }
    }
    if !extremes.is_empty() {
        let inv = 1.0 / extremes.len() as f64;
        base = vec![0.0; n];
        for e in &extremes {
            for (b, v) in base.iter_mut().zip(e) {
                *b += v * inv;
            }
        }
    }
    let mut ch = FeasibleSetChart {
        k: polytope.k(),
        base,
        basis,
        extremes,
        w_lo: vec![0.0; d],
        w_hi: vec![0.0; d],
    };
    for e in ch.extremes.clone() {
        let w = ch.coords(&e);
        for c in 0..d {
            ch.w_lo[c] = ch.w_lo[c].min(w[c]);
            ch.w_hi[c] = ch.w_hi[c].max(w[c]);
        }
    }
    Ok(ch)
}

/// Polytope and chart for one group's observed marginals.
pub fn group_chart(
    group: &GroupRecord,
    support: &CovariateSupport,
) -> Result<(JointPolytope, FeasibleSetChart)> {
    let m = group.marginal_vector(support)?;
    let poly = JointPolytope::for_marginals(support, &m)?;
    let ch = chart(&poly)?;
    Ok((poly, ch))
}

/// Start points in chart coordinates: the base, the axis extremes, then up to
/// `n_random` points drawn uniformly from the bounding box and kept when they
/// land inside the polytope. After `50 * n_random` rejected draws the rest are
/// midpoints of pairs of extreme points.
pub fn sample_start_coords(chart: &FeasibleSetChart, n_random: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = chart.dim();
    let mut out = vec![vec![0.0; d]];
    if d == 0 {
        return out;
    }
    out.extend(chart.extremes.iter().map(|e| chart.coords(e)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = Vec::new();
    let mut accepted = 0;
    let mut draws = 0;
    let cap = 50 * n_random;
    let mut w = vec![0.0; d];
    while accepted < n_random && draws < cap {
        draws += 1;
        for c in 0..d {
            w[c] = chart.w_lo[c] + (chart.w_hi[c] - chart.w_lo[c]) * rng.random::<f64>();
        }
        chart.lifted_point(&w, &mut z);
        if z.iter().all(|v| *v >= 0.0) {
            out.push(w.clone());
            accepted += 1;
        }
    }
    let verts: Vec<Vec<f64>> = out[..1 + chart.extremes.len()].to_vec();
    let pairs: Vec<(usize, usize)> = (0..verts.len())
        .flat_map(|i| (i + 1..verts.len()).map(move |j| (i, j)))
        .collect();
    let mut next = 0;
    while accepted < n_random && !pairs.is_empty() {
        let (i, j) = pairs[next % pairs.len()];
        let t = if next < pairs.len() { 0.5 } else { rng.random::<f64>() };
        out.push(
            verts[i]
                .iter()
                .zip(&verts[j])
                .map(|(a, b)| a + t * (b - a))
                .collect(),
        );
        accepted += 1;
        next += 1;
    }
    out
}

/// [`sample_start_coords`] mapped to joints.
pub fn sample_starts(chart: &FeasibleSetChart, n_random: usize, seed: u64) -> Vec<FeasibleJoint> {
    let mut z = Vec::new();
    sample_start_coords(chart, n_random, seed)
        .into_iter()
        .map(|w| {
            chart.lifted_point(&w, &mut z);
            FeasibleJoint::from_raw(&z[..chart.k])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::group;

    fn l2_symmetric() -> (CovariateSupport, GroupRecord) {
        let s = CovariateSupport::binary_product(2).unwrap();
        let g = group(
            "g",
            1.0,
            0.5,
            &[(0, 0.0, 0.5), (0, 1.0, 0.5), (1, 0.0, 0.5), (1, 1.0, 0.5)],
        );
        (s, g)
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn single_covariate_pins_joint() {
        let s = CovariateSupport::binary_product(1).unwrap();
        let g = group("g", 1.0, 0.5, &[(0, 0.0, 0.3), (0, 1.0, 0.7)]);
        let (p, slack) = min_slack_joint(&g, &s).unwrap();
        assert!(close(&p.p, &[0.3, 0.7], 1e-12));
        assert!(slack <= 1e-12);
        let (_, ch) = group_chart(&g, &s).unwrap();
        assert_eq!(ch.dim(), 0);
        assert_eq!(sample_starts(&ch, 10, 1).len(), 1);
    }

    #[test]
    fn symmetric_two_by_two() {
        let (s, g) = l2_symmetric();
        let (p, slack) = min_slack_joint(&g, &s).unwrap();
        assert!(slack <= 1e-12);
        let m = p.marginals(&s);
        assert!(close(&m, &[0.5; 4], 1e-12));

        let (_, ch) = group_chart(&g, &s).unwrap();
        assert_eq!(ch.dim(), 1);
        assert!(close(&ch.base_point().p, &[0.25; 4], 1e-12));
        let starts = sample_starts(&ch, 0, 7);
        assert_eq!(starts.len(), 3);
        let mut verts: Vec<Vec<f64>> = starts[1..].iter().map(|j| j.p.clone()).collect();
        verts.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert!(close(&verts[0], &[0.0, 0.5, 0.5, 0.0], 1e-12));
        assert!(close(&verts[1], &[0.5, 0.0, 0.0, 0.5], 1e-12));
    }

    #[test]
    fn incompatible_restricted_support() {
        // p = (t, 1 - t) on {(0,0),(1,1)}: deviations 2|t - 0.4| + 2|t - 0.5|
        // from the two covariates, minimized to 0.2 on [0.4, 0.5]
        let s = CovariateSupport::new(vec![vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let g = group(
            "g",
            1.0,
            0.5,
            &[(0, 0.0, 0.4), (0, 1.0, 0.6), (1, 0.0, 0.5), (1, 1.0, 0.5)],
        );
        let (p, slack) = min_slack_joint(&g, &s).unwrap();
        assert!((slack - 0.2).abs() < 1e-10, "slack {slack}");
        assert!(p.p[0] >= 0.4 - 1e-10 && p.p[0] <= 0.5 + 1e-10);

        let (poly, ch) = group_chart(&g, &s).unwrap();
        assert!(!poly.is_exact());
        let starts = sample_starts(&ch, 8, 3);
        for st in &starts {
            assert!(st.p[0] >= 0.4 - 1e-9 && st.p[0] <= 0.5 + 1e-9, "{:?}", st.p);
        }
    }

    #[test]
    fn chart_dimensions() {
        for (l, d) in [(1, 0), (2, 1), (3, 4)] {
            let s = CovariateSupport::binary_product(l).unwrap();
            let m: Vec<f64> = (0..l).flat_map(|_| [0.4, 0.6]).collect();
            let poly = JointPolytope::for_marginals(&s, &m).unwrap();
            let ch = chart(&poly).unwrap();
            assert_eq!(ch.dim(), d, "L = {l}");
        }
    }

    #[test]
    fn chart_basis_is_orthonormal_null_space() {
        let s = CovariateSupport::binary_product(3).unwrap();
        let m = [0.3, 0.7, 0.55, 0.45, 0.9, 0.1];
        let poly = JointPolytope::for_marginals(&s, &m).unwrap();
        let ch = chart(&poly).unwrap();
        let b = ch.null_basis();
        let e = DMatrix::from_fn(poly.rows().len(), 8, |i, j| poly.rows()[i][j]);
        assert!((e * b).amax() < 1e-10);
        let gram = b.transpose() * b;
        assert!((gram - DMatrix::identity(ch.dim(), ch.dim())).amax() < 1e-10);
    }

    #[test]
    fn starts_are_feasible_and_deterministic() {
        let s = CovariateSupport::binary_product(3).unwrap();
        let m = [0.3, 0.7, 0.55, 0.45, 0.9, 0.1];
        let poly = JointPolytope::for_marginals(&s, &m).unwrap();
        let ch = chart(&poly).unwrap();
        let a = sample_starts(&ch, 16, 11);
        let b = sample_starts(&ch, 16, 11);
        assert_eq!(a, b);
        assert_eq!(a.len(), 1 + ch.extremes().len() + 16);
        for j in &a {
            assert!(close(&j.marginals(&s), &m, 1e-9));
            assert!(j.p.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn band_polytope_contains_lifted_point_estimate() {
        let s = CovariateSupport::binary_product(2).unwrap();
        let p = [0.1, 0.2, 0.3, 0.4];
        let m = FeasibleJoint { p: p.to_vec() }.marginals(&s);
        let lo: Vec<f64> = m.iter().map(|v| v - 0.05).collect();
        let hi: Vec<f64> = m.iter().map(|v| v + 0.05).collect();
        let poly = JointPolytope::for_bands(&s, &lo, &hi).unwrap();
        assert!(poly.is_exact());
        assert!(poly.contains(&poly.lift(&p), 1e-12));
        let ch = chart(&poly).unwrap();
        assert_eq!(ch.dim(), 3);
    }

    #[test]
    fn disjoint_bands_use_violation_face() {
        let s = CovariateSupport::binary_product(1).unwrap();
        // both cells forced above 0.6: total violation 0.2 at best
        let poly = JointPolytope::for_bands(&s, &[0.6, 0.6], &[0.7, 0.7]).unwrap();
        assert!((poly.min_slack() - 0.2).abs() < 1e-10);
        assert!(!poly.is_exact());
        let ch = chart(&poly).unwrap();
        for j in sample_starts(&ch, 5, 2) {
            assert!(j.p[0] >= 0.3 - 1e-9 && j.p[0] <= 0.7 + 1e-9);
        }
    }
}
