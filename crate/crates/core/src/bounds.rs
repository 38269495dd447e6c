//! Sharp per-group bounds on `sum_k lambda_k E[Y | X = x_k, G = g]`.
//!
//! The inner problem fixes a joint `p` and optimizes over conditional means
//! `c`; it is solved in closed form when only the mean constraint applies and
//! by linear programming otherwise. The outer problem searches the feasible
//! joints with multi-start Nelder–Mead in chart coordinates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AggregateDataset, GroupRecord, OutcomeRange, ShapeConstraintSet, ShapeSpec};
use crate::error::{Error, Result};
use crate::feasible::{
    chart, clamp_to_simplex, sample_start_coords, FeasibleSetChart, JointPolytope, NONNEG_TOL,
    SLACK_TOL,
};
use crate::linprog::{LinearProgram, LpStatus, Solver};
use crate::search::nelder_mead;
use crate::support::CovariateSupport;

/// Cells with less mass than this are treated as empty by the closed form.
pub const MASS_TOL: f64 = 1e-12;
/// Weight on total negativity of the lifted point in the outer objective.
pub const PENALTY: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Min,
    Max,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Min => 1.0,
            Direction::Max => -1.0,
        }
    }
}

/// Optimum of the inner problem with only the mean constraint
/// `sum_k c_k p_k = y_mean`.
///
/// Cells are ranked by `lambda_k / p_k`. For the maximum the highest-ranked
/// cells take `y_hi` until the mean budget runs out; for the minimum the
/// highest-ranked cells take `y_lo` while the rest can still absorb the
/// budget. Empty cells do not enter the mean and take whichever bound the sign
/// of `lambda_k` favours.
pub fn inner_closed_form(
    lambda: &[f64],
    p: &[f64],
    y_mean: f64,
    range: OutcomeRange,
    direction: Direction,
) -> (f64, Vec<f64>) {
    let k = lambda.len();
    let r = range.width();
    let budget = y_mean - range.lo;
    let mut c = vec![range.lo; k];

    let mut order: Vec<usize> = Vec::with_capacity(k);
    for j in 0..k {
        if p[j] > MASS_TOL {
            order.push(j);
        } else {
            let high = match direction {
                Direction::Min => lambda[j] < 0.0,
                Direction::Max => lambda[j] >= 0.0,
            };
            if high {
                c[j] = range.hi;
            }
        }
    }
    order.sort_by(|&a, &b| {
        (lambda[b] / p[b])
            .total_cmp(&(lambda[a] / p[a]))
            .then(a.cmp(&b))
    });
    let total: f64 = order.iter().map(|&j| p[j]).sum();

    let mut before = 0.0;
    for &j in &order {
        let after = before + p[j];
        let ct = match direction {
            Direction::Max => {
                if r * after <= budget {
                    r
                } else if r * before <= budget {
                    (budget - r * before) / p[j]
                } else {
                    0.0
                }
            }
            Direction::Min => {
                if r * (total - after) >= budget {
                    0.0
                } else if r * (total - before) <= budget {
                    r
                } else {
                    (budget - r * (total - after)) / p[j]
                }
            }
        };
        c[j] = range.lo + ct.clamp(0.0, r);
        before = after;
    }
    let value = lambda.iter().zip(&c).map(|(l, v)| l * v).sum();
    (value, c)
}

/// Inner optimum when the mean is only known to lie in `[band.0, band.1]`.
///
/// The optimal value is convex (for the minimum) in the mean, flat over the
/// means attained by the box-unconstrained optimizers, so the optimal mean is
/// that flat stretch clamped into the band.
pub fn inner_closed_form_band(
    lambda: &[f64],
    p: &[f64],
    band: (f64, f64),
    range: OutcomeRange,
    direction: Direction,
) -> (f64, Vec<f64>) {
    let r = range.width();
    let (mut s_lo, mut free) = (0.0, 0.0);
    for (l, pj) in lambda.iter().zip(p) {
        if *pj <= MASS_TOL {
            continue;
        }
        let high = match direction {
            Direction::Min => *l < 0.0,
            Direction::Max => *l > 0.0,
        };
        if high {
            s_lo += r * pj;
        } else if *l == 0.0 {
            free += r * pj;
        }
    }
    let s_hi = s_lo + free;
    let (b_lo, b_hi) = (band.0 - range.lo, band.1 - range.lo);
    let b = if s_hi < b_lo {
        b_lo
    } else if s_lo > b_hi {
        b_hi
    } else {
        b_lo.max(s_lo)
    };
    inner_closed_form(lambda, p, range.lo + b, range, direction)
}

/// A finer-aggregation moment on the cells sharing one covariate value:
/// `lower <= sum_{j in cells} c_j p_j <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinerRow {
    pub covariate: usize,
    pub value: f64,
    pub cells: Vec<usize>,
    pub lower: f64,
    pub upper: f64,
}

impl FinerRow {
    /// `E[Y | X_l = v] * P[X_l = v]` as an equality.
    pub fn exact(
        support: &CovariateSupport,
        covariate: usize,
        value: f64,
        y_cond: f64,
        prob: f64,
    ) -> Result<Self> {
        let vi = support
            .value_index(covariate, value)
            .ok_or_else(|| Error::InvalidInput(format!(
                "covariate {covariate} has no support value {value}"
            )))?;
        let cells = support.points_with(covariate, vi).collect();
        Ok(FinerRow {
            covariate,
            value,
            cells,
            lower: y_cond * prob,
            upper: y_cond * prob,
        })
    }
}

/// Finer rows for every finer moment a group reports, using the group's own
/// marginal probabilities.
pub fn finer_rows(group: &GroupRecord, support: &CovariateSupport) -> Result<Vec<FinerRow>> {
    group
        .finer
        .iter()
        .map(|f| {
            let prob = group.marginal(f.covariate, f.value).unwrap_or(0.0);
            FinerRow::exact(support, f.covariate, f.value, f.y_mean, prob)
        })
        .collect()
}

/// Inner program at a fixed joint `p`.
#[derive(Debug, Clone)]
pub struct InnerProblem<'a> {
    pub lambda: &'a [f64],
    pub p: &'a [f64],
    /// Bounds on `sum_k c_k p_k`; equal ends for an exact mean.
    pub y_band: (f64, f64),
    pub range: OutcomeRange,
    pub shape: Option<&'a ShapeConstraintSet>,
    pub finer: &'a [FinerRow],
    pub direction: Direction,
}

impl<'a> InnerProblem<'a> {
    pub fn new(
        lambda: &'a [f64],
        p: &'a [f64],
        y_mean: f64,
        range: OutcomeRange,
        direction: Direction,
    ) -> Self {
        InnerProblem {
            lambda,
            p,
            y_band: (y_mean, y_mean),
            range,
            shape: None,
            finer: &[],
            direction,
        }
    }

    pub fn with_band(mut self, lo: f64, hi: f64) -> Self {
        self.y_band = (lo, hi);
        self
    }

    pub fn with_shape(mut self, shape: Option<&'a ShapeConstraintSet>) -> Self {
        self.shape = shape;
        self
    }

    pub fn with_finer(mut self, finer: &'a [FinerRow]) -> Self {
        self.finer = finer;
        self
    }

    pub fn is_unconstrained(&self) -> bool {
        self.finer.is_empty() && self.shape.is_none_or(|s| s.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InnerOutcome {
    Optimal { value: f64, c: Vec<f64> },
    /// The restrictions admit no `c` at this `p`; carries the minimal total
    /// constraint violation.
    Infeasible { violation: f64 },
}

impl InnerOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            InnerOutcome::Optimal { value, .. } => Some(*value),
            InnerOutcome::Infeasible { .. } => None,
        }
    }
}

/// Solves the inner program as a linear program, whatever its restrictions.
pub fn inner_lp(problem: &InnerProblem) -> Result<InnerOutcome> {
    inner_lp_with(&mut Solver::default(), problem)
}

pub fn inner_lp_with(solver: &mut Solver, problem: &InnerProblem) -> Result<InnerOutcome> {
    let k = problem.lambda.len();
    if problem.p.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "joint of length {} for {k} weights",
            problem.p.len()
        )));
    }
    let mut lp = match problem.direction {
        Direction::Min => LinearProgram::minimize(problem.lambda.to_vec()),
        Direction::Max => LinearProgram::maximize(problem.lambda.to_vec()),
    }
    .with_bounds(problem.range.lo, problem.range.hi);

    let (lo, hi) = problem.y_band;
    if lo == hi {
        lp.add_eq(problem.p.to_vec(), lo);
    } else {
        lp.add_le(problem.p.to_vec(), hi);
        lp.add_ge(problem.p.to_vec(), lo);
    }
    if let Some(shape) = problem.shape {
        shape.check(k)?;
        for row in &shape.rows {
            lp.add_le(row.coeffs.clone(), row.rhs);
        }
    }
    for f in problem.finer {
        let mut row = vec![0.0; k];
        for &j in &f.cells {
            row[j] = problem.p[j];
        }
        if f.lower == f.upper {
            lp.add_eq(row, f.lower);
        } else {
            lp.add_le(row.clone(), f.upper);
            lp.add_ge(row, f.lower);
        }
    }
    let sol = solver.solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(InnerOutcome::Optimal {
            value: sol.objective_value,
            c: sol.x,
        }),
        LpStatus::Infeasible => Ok(InnerOutcome::Infeasible {
            violation: sol.infeasibility,
        }),
        LpStatus::Unbounded => Err(Error::Internal("bounded inner program reported unbounded".into())),
    }
}

/// Closed form when the problem is unconstrained, linear program otherwise.
pub fn inner_solve(solver: &mut Solver, problem: &InnerProblem) -> Result<InnerOutcome> {
    if problem.is_unconstrained() {
        let (lo, hi) = problem.y_band;
        let (value, c) = if lo == hi {
            inner_closed_form(problem.lambda, problem.p, lo, problem.range, problem.direction)
        } else {
            inner_closed_form_band(
                problem.lambda,
                problem.p,
                problem.y_band,
                problem.range,
                problem.direction,
            )
        };
        Ok(InnerOutcome::Optimal { value, c })
    } else {
        inner_lp_with(solver, problem)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub n_random_starts: usize,
    pub max_iters_per_start: usize,
    /// Initial simplex edge as a fraction of the chart's bounding box.
    pub initial_step: f64,
    pub convergence_tol: f64,
    pub seed: u64,
    /// Reject groups whose marginals are inconsistent instead of searching
    /// the minimal-slack joints.
    pub strict: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            n_random_starts: 32,
            max_iters_per_start: 400,
            initial_step: 0.1,
            convergence_tol: 1e-7,
            seed: 0,
            strict: false,
        }
    }
}

impl SearchOptions {
    pub fn check(&self) -> Result<()> {
        if self.max_iters_per_start == 0
            || !(self.initial_step > 0.0)
            || !(self.convergence_tol > 0.0)
        {
            return Err(Error::InvalidInput(
                "search options must have positive iterations, step and tolerance".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub p: Vec<f64>,
    pub c: Vec<f64>,
}

/// One extreme of the outer problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extreme {
    pub value: f64,
    pub witness: Witness,
    pub evaluations: usize,
}

/// Everything about one group's inner program except the joint.
#[derive(Debug, Clone)]
pub struct GroupProblem<'a> {
    pub lambda: &'a [f64],
    pub range: OutcomeRange,
    pub y_band: (f64, f64),
    pub shape: Option<&'a ShapeConstraintSet>,
    pub finer: Vec<FinerRow>,
}

impl<'a> GroupProblem<'a> {
    pub fn inner<'b>(&'b self, p: &'b [f64], direction: Direction) -> InnerProblem<'b> {
        InnerProblem {
            lambda: self.lambda,
            p,
            y_band: self.y_band,
            range: self.range,
            shape: self.shape,
            finer: &self.finer,
            direction,
        }
    }

    /// Affine map taking inner values onto the unit outcome range, so the
    /// search behaves the same under rescaling of `Y`.
    fn normalizer(&self) -> (f64, f64) {
        let offset = self.range.lo * self.lambda.iter().sum::<f64>();
        let scale = self.range.width() * self.lambda.iter().map(|l| l.abs()).sum::<f64>();
        (offset, if scale > 0.0 { scale } else { 1.0 })
    }
}

/// Searches the joints of `polytope` for the extreme (`outer`) of the inner
/// optimum (`inner`). Warm starts are joints tried before the sampled starts.
/// Returns `None` when no feasible joint admits a feasible inner program.
#[allow(clippy::too_many_arguments)]
pub fn search_extreme(
    polytope: &JointPolytope,
    chart: &FeasibleSetChart,
    problem: &GroupProblem,
    inner: Direction,
    outer: Direction,
    opts: &SearchOptions,
    warm: &[Vec<f64>],
) -> Result<Option<Extreme>> {
    let k = chart.k();
    let sign = outer.sign();
    let (offset, scale) = problem.normalizer();
    let infeasible_score = 1e6;

    let mut solver = Solver::default();
    let mut z = Vec::with_capacity(polytope.lifted_len());
    let mut p = Vec::with_capacity(k);
    let mut best: Option<(f64, Extreme)> = None;
    let mut evaluations = 0usize;
    let mut failure: Option<Error> = None;

    let mut objective = |w: &[f64]| -> f64 {
        evaluations += 1;
        chart.lifted_point(w, &mut z);
        let mut neg = 0.0;
        let mut worst = 0.0f64;
        for v in &z {
            if *v < 0.0 {
                neg -= v;
                worst = worst.max(-v);
            }
        }
        clamp_to_simplex(&z[..k], &mut p);
        let outcome = match inner_solve(&mut solver, &problem.inner(&p, inner)) {
            Ok(o) => o,
            Err(e) => {
                failure.get_or_insert(e);
                return f64::INFINITY;
            }
        };
        match outcome {
            InnerOutcome::Optimal { value, c } => {
                let score = sign * (value - offset) / scale;
                if worst <= NONNEG_TOL && best.as_ref().is_none_or(|(s, _)| score < *s) {
                    best = Some((
                        score,
                        Extreme {
                            value,
                            witness: Witness { p: p.clone(), c },
                            evaluations: 0,
                        },
                    ));
                }
                score + PENALTY * neg
            }
            InnerOutcome::Infeasible { violation } => {
                infeasible_score + PENALTY * (violation + neg)
            }
        }
    };

    let d = chart.dim();
    let mut starts: Vec<Vec<f64>> = warm
        .iter()
        .filter(|w| w.len() == k)
        .map(|wp| chart.coords(&polytope.lift(wp)))
        .collect();
    starts.extend(sample_start_coords(chart, opts.n_random_starts, opts.seed));

    if d == 0 {
        for w in &starts {
            objective(w);
        }
    } else {
        let (lo, hi) = chart.bounding_box();
        let step: Vec<f64> = lo
            .iter()
            .zip(hi)
            .map(|(a, b)| (opts.initial_step * (b - a)).max(1e-7))
            .collect();
        let mut best_end: Option<(f64, Vec<f64>)> = None;
        for w0 in &starts {
            let m = nelder_mead(
                &mut objective,
                w0,
                &step,
                opts.max_iters_per_start,
                opts.convergence_tol,
            );
            if best_end.as_ref().is_none_or(|(f, _)| m.f < *f) {
                best_end = Some((m.f, m.x));
            }
        }
        // restart once from the best end point with a fresh simplex
        if let Some((_, x)) = best_end {
            let small: Vec<f64> = step.iter().map(|s| 0.1 * s).collect();
            nelder_mead(
                &mut objective,
                &x,
                &small,
                opts.max_iters_per_start,
                opts.convergence_tol,
            );
        }
    }
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(best.map(|(_, mut e)| {
        e.evaluations = evaluations;
        e
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBounds {
    pub group: String,
    pub lower: f64,
    pub upper: f64,
    pub witness_lower: Witness,
    pub witness_upper: Witness,
    /// Dimension of the searched chart.
    pub chart_dim: usize,
    /// Minimal total marginal slack; nonzero means the marginals were
    /// inconsistent and the minimal-slack joints were searched.
    pub min_slack: f64,
    pub evaluations: usize,
}

/// Joints tried first in each direction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WarmStarts {
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

impl WarmStarts {
    pub fn from_bounds(b: &GroupBounds) -> Self {
        WarmStarts {
            lower: vec![b.witness_lower.p.clone()],
            upper: vec![b.witness_upper.p.clone()],
        }
    }

    pub fn extend(&mut self, other: WarmStarts) {
        self.lower.extend(other.lower);
        self.upper.extend(other.upper);
    }
}

/// Lower and upper bounds over a prepared polytope.
pub fn bounds_on(
    id: &str,
    polytope: &JointPolytope,
    chart: &FeasibleSetChart,
    problem: &GroupProblem,
    opts: &SearchOptions,
    warm: &WarmStarts,
) -> Result<GroupBounds> {
    let lo = search_extreme(polytope, chart, problem, Direction::Min, Direction::Min, opts, &warm.lower)?;
    let hi = search_extreme(polytope, chart, problem, Direction::Max, Direction::Max, opts, &warm.upper)?;
    match (lo, hi) {
        (Some(lo), Some(hi)) => Ok(GroupBounds {
            group: id.to_string(),
            lower: lo.value,
            upper: hi.value.max(lo.value),
            evaluations: lo.evaluations + hi.evaluations,
            witness_lower: lo.witness,
            witness_upper: hi.witness,
            chart_dim: chart.dim(),
            min_slack: polytope.min_slack(),
        }),
        _ => Err(Error::EmptyIdentifiedSet { group: id.to_string() }),
    }
}

/// The polytope of joints matching a group's marginals, with its chart.
pub fn group_polytope(
    group: &GroupRecord,
    support: &CovariateSupport,
    opts: &SearchOptions,
) -> Result<(JointPolytope, FeasibleSetChart)> {
    let m = group.marginal_vector(support)?;
    let poly = JointPolytope::for_marginals(support, &m)?;
    if opts.strict && poly.min_slack() > SLACK_TOL {
        return Err(Error::EmptyFeasibleSet {
            group: group.id.clone(),
            slack: poly.min_slack(),
        });
    }
    let ch = chart(&poly)?;
    Ok((poly, ch))
}

pub fn group_problem<'a>(
    group: &GroupRecord,
    support: &CovariateSupport,
    lambda: &'a [f64],
    range: OutcomeRange,
    shape: Option<&'a ShapeConstraintSet>,
    use_finer: bool,
) -> Result<GroupProblem<'a>> {
    if lambda.len() != support.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} support points",
            lambda.len(),
            support.len()
        )));
    }
    Ok(GroupProblem {
        lambda,
        range,
        y_band: (group.y_mean, group.y_mean),
        shape,
        finer: if use_finer { finer_rows(group, support)? } else { vec![] },
    })
}

/// Sharp bounds `[L_g, U_g]` for one group.
pub fn group_bounds(
    group: &GroupRecord,
    support: &CovariateSupport,
    lambda: &[f64],
    range: OutcomeRange,
    shape: Option<&ShapeConstraintSet>,
    use_finer: bool,
    opts: &SearchOptions,
) -> Result<GroupBounds> {
    group_bounds_warm(group, support, lambda, range, shape, use_finer, opts, &WarmStarts::default())
}

#[allow(clippy::too_many_arguments)]
pub fn group_bounds_warm(
    group: &GroupRecord,
    support: &CovariateSupport,
    lambda: &[f64],
    range: OutcomeRange,
    shape: Option<&ShapeConstraintSet>,
    use_finer: bool,
    opts: &SearchOptions,
    warm: &WarmStarts,
) -> Result<GroupBounds> {
    opts.check()?;
    let run = || -> Result<_> {
        let problem = group_problem(group, support, lambda, range, shape, use_finer)?;
        let (poly, ch) = group_polytope(group, support, opts)?;
        bounds_on(&group.id, &poly, &ch, &problem, opts, warm)
    };
    run().map_err(|e| e.in_group(&group.id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub per_group: Vec<GroupBounds>,
    pub shares: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

impl BoundResult {
    pub fn from_groups(per_group: Vec<GroupBounds>, shares: Vec<f64>) -> Self {
        let lower = per_group.iter().zip(&shares).map(|(g, s)| s * g.lower).sum();
        let upper = per_group.iter().zip(&shares).map(|(g, s)| s * g.upper).sum();
        BoundResult {
            per_group,
            shares,
            lower,
            upper,
        }
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lower - tol && x <= self.upper + tol
    }

    pub fn warm_starts(&self) -> Vec<WarmStarts> {
        self.per_group.iter().map(WarmStarts::from_bounds).collect()
    }
}

/// The aggregate identified interval `[sum_g share_g L_g, sum_g share_g U_g]`.
pub fn identified_set(
    dataset: &AggregateDataset,
    lambda: &[f64],
    shape: Option<&ShapeSpec>,
    use_finer: bool,
    opts: &SearchOptions,
) -> Result<BoundResult> {
    identified_set_warm(dataset, lambda, shape, use_finer, opts, &[])
}

/// [`identified_set`] with per-group warm starts (indexed like the groups;
/// missing entries mean none).
pub fn identified_set_warm(
    dataset: &AggregateDataset,
    lambda: &[f64],
    shape: Option<&ShapeSpec>,
    use_finer: bool,
    opts: &SearchOptions,
    warm: &[WarmStarts],
) -> Result<BoundResult> {
    if let Some(s) = shape {
        s.check(dataset.k())?;
    }
    let none = WarmStarts::default();
    let per_group = dataset
        .groups
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let sh = shape.and_then(|s| s.for_group(&g.id));
            group_bounds_warm(
                g,
                &dataset.support,
                lambda,
                dataset.range,
                sh,
                use_finer,
                opts,
                warm.get(i).unwrap_or(&none),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let shares = dataset.groups.iter().map(|g| g.share).collect();
    Ok(BoundResult::from_groups(per_group, shares))
}

/// How much `L_g` and `U_g` would move if the joint were known: their ranges
/// over the feasible joints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointKnownRange {
    pub group: String,
    pub lower_range: (f64, f64),
    pub upper_range: (f64, f64),
    pub witnesses: [Witness; 4],
}

impl JointKnownRange {
    pub fn lower_width(&self) -> f64 {
        self.lower_range.1 - self.lower_range.0
    }

    pub fn upper_width(&self) -> f64 {
        self.upper_range.1 - self.upper_range.0
    }
}

pub fn joint_known_range(
    group: &GroupRecord,
    support: &CovariateSupport,
    lambda: &[f64],
    range: OutcomeRange,
    shape: Option<&ShapeConstraintSet>,
    use_finer: bool,
    opts: &SearchOptions,
) -> Result<JointKnownRange> {
    opts.check()?;
    let run = || -> Result<_> {
        let problem = group_problem(group, support, lambda, range, shape, use_finer)?;
        let (poly, ch) = group_polytope(group, support, opts)?;
        let mut out = Vec::with_capacity(4);
        for (inner, outer) in [
            (Direction::Min, Direction::Min),
            (Direction::Min, Direction::Max),
            (Direction::Max, Direction::Min),
            (Direction::Max, Direction::Max),
        ] {
            let e = search_extreme(&poly, &ch, &problem, inner, outer, opts, &[])?
                .ok_or_else(|| Error::EmptyIdentifiedSet { group: group.id.clone() })?;
            out.push(e);
        }
        let v: Vec<f64> = out.iter().map(|e| e.value).collect();
        let mut w = out.into_iter().map(|e| e.witness);
        Ok(JointKnownRange {
            group: group.id.clone(),
            lower_range: (v[0], v[1].max(v[0])),
            upper_range: (v[2].min(v[3]), v[3]),
            witnesses: [
                w.next().unwrap(),
                w.next().unwrap(),
                w.next().unwrap(),
                w.next().unwrap(),
            ],
        })
    };
    run().map_err(|e| e.in_group(&group.id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::{group, single_binary};
    use crate::dataset::{Monotone, ShapeRow};

    fn unit() -> OutcomeRange {
        OutcomeRange::unit()
    }

    #[test]
    fn closed_form_single_cell() {
        for dir in [Direction::Min, Direction::Max] {
            let (v, c) = inner_closed_form(&[2.0], &[1.0], 0.6, unit(), dir);
            assert!((v - 1.2).abs() < 1e-15);
            assert_eq!(c, vec![0.6]);
        }
    }

    #[test]
    fn closed_form_substitution_example() {
        let (v, c) = inner_closed_form(&[1.0, 0.0], &[0.9, 0.1], 0.95, unit(), Direction::Min);
        assert!((v - 0.85 / 0.9).abs() < 1e-12);
        assert!((c[0] - 0.85 / 0.9).abs() < 1e-12 && (c[1] - 1.0).abs() < 1e-12);
        let (v, c) = inner_closed_form(&[1.0, 0.0], &[0.9, 0.1], 0.95, unit(), Direction::Max);
        assert!((v - 1.0).abs() < 1e-12);
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn closed_form_contrast_example() {
        let lam = [1.0, -1.0];
        let p = [0.7, 0.3];
        let (lo, _) = inner_closed_form(&lam, &p, 0.6, unit(), Direction::Min);
        let (hi, _) = inner_closed_form(&lam, &p, 0.6, unit(), Direction::Max);
        assert!((lo + 4.0 / 7.0).abs() < 1e-12);
        assert!((hi - 6.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_with_shifted_range_and_empty_cells() {
        let range = OutcomeRange::new(-2.0, 3.0).unwrap();
        let lam = [1.0, -0.5, 2.0, -1.0];
        let p = [0.5, 0.0, 0.5, 0.0];
        for dir in [Direction::Min, Direction::Max] {
            let (v, c) = inner_closed_form(&lam, &p, 0.4, range, dir);
            let mean: f64 = c.iter().zip(&p).map(|(a, b)| a * b).sum();
            assert!((mean - 0.4).abs() < 1e-12);
            let lp = inner_lp(&InnerProblem::new(&lam, &p, 0.4, range, dir)).unwrap();
            assert!((lp.value().unwrap() - v).abs() < 1e-9, "{dir:?}");
        }
    }

    #[test]
    fn band_form_matches_lp() {
        let lam = [1.0, -1.0, 0.0, 0.5];
        let p = [0.1, 0.4, 0.2, 0.3];
        for band in [(0.1, 0.2), (0.3, 0.9), (0.0, 1.0), (0.8, 0.85)] {
            for dir in [Direction::Min, Direction::Max] {
                let (v, c) = inner_closed_form_band(&lam, &p, band, unit(), dir);
                let mean: f64 = c.iter().zip(&p).map(|(a, b)| a * b).sum();
                assert!(mean >= band.0 - 1e-12 && mean <= band.1 + 1e-12);
                let prob = InnerProblem::new(&lam, &p, 0.0, unit(), dir).with_band(band.0, band.1);
                let lp = inner_lp(&prob).unwrap().value().unwrap();
                assert!((lp - v).abs() < 1e-9, "{band:?} {dir:?}: {lp} vs {v}");
            }
        }
    }

    #[test]
    fn shape_row_pins_contrast() {
        let shape = ShapeConstraintSet::new(
            vec![ShapeRow { coeffs: vec![1.0, -1.0], rhs: 0.0 }],
            2,
        )
        .unwrap();
        let lam = [1.0, -1.0];
        let p = [0.7, 0.3];
        let prob = InnerProblem::new(&lam, &p, 0.6, unit(), Direction::Max).with_shape(Some(&shape));
        match inner_lp(&prob).unwrap() {
            InnerOutcome::Optimal { value, c } => {
                assert!(value.abs() < 1e-10);
                assert!((c[0] - 0.6).abs() < 1e-10 && (c[1] - 0.6).abs() < 1e-10);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn finer_row_pins_cell() {
        let support = CovariateSupport::binary_product(1).unwrap();
        let rows = vec![FinerRow::exact(&support, 0, 1.0, 6.0 / 7.0, 0.7).unwrap()];
        let lam = [0.0, 1.0];
        let p = [0.3, 0.7];
        let mut vals = vec![];
        for dir in [Direction::Min, Direction::Max] {
            let prob = InnerProblem::new(&lam, &p, 0.6, unit(), dir).with_finer(&rows);
            vals.push(inner_lp(&prob).unwrap().value().unwrap());
        }
        assert!((vals[0] - 6.0 / 7.0).abs() < 1e-10);
        assert!((vals[1] - vals[0]).abs() < 1e-10);
    }

    #[test]
    fn conflicting_restrictions_are_infeasible() {
        let shape = ShapeConstraintSet::new(
            vec![ShapeRow { coeffs: vec![1.0, 0.0], rhs: 0.1 }],
            2,
        )
        .unwrap();
        let lam = [1.0, 0.0];
        let p = [0.9, 0.1];
        let prob = InnerProblem::new(&lam, &p, 0.95, unit(), Direction::Min).with_shape(Some(&shape));
        assert!(matches!(inner_lp(&prob).unwrap(), InnerOutcome::Infeasible { .. }));
    }

    #[test]
    fn single_binary_group_is_exact() {
        let ds = single_binary();
        let lam = [-1.0, 1.0];
        let g = group_bounds(&ds.groups[0], &ds.support, &lam, ds.range, None, false, &SearchOptions::default())
            .unwrap();
        assert_eq!(g.chart_dim, 0);
        assert!((g.lower + 4.0 / 7.0).abs() < 1e-12);
        assert!((g.upper - 6.0 / 7.0).abs() < 1e-12);
        let r = identified_set(&ds, &lam, None, false, &SearchOptions::default()).unwrap();
        assert_eq!(r.interval(), (g.lower, g.upper));
    }

    #[test]
    fn monotone_restriction_raises_lower_bound() {
        let ds = single_binary();
        let lam = [-1.0, 1.0];
        let shape = ShapeConstraintSet::monotone(&ds.support, 0, Monotone::Increasing).unwrap();
        let g = group_bounds(
            &ds.groups[0],
            &ds.support,
            &lam,
            ds.range,
            Some(&shape),
            false,
            &SearchOptions::default(),
        )
        .unwrap();
        assert!(g.lower.abs() < 1e-10);
        assert!((g.upper - 6.0 / 7.0).abs() < 1e-10);
    }

    #[test]
    fn aggregation_weights_by_share() {
        let mk = |lower, upper| GroupBounds {
            group: String::new(),
            lower,
            upper,
            witness_lower: Witness { p: vec![], c: vec![] },
            witness_upper: Witness { p: vec![], c: vec![] },
            chart_dim: 0,
            min_slack: 0.0,
            evaluations: 0,
        };
        let r = BoundResult::from_groups(vec![mk(0.0, 1.0), mk(0.2, 0.4)], vec![0.5, 0.5]);
        assert!((r.lower - 0.1).abs() < 1e-15 && (r.upper - 0.7).abs() < 1e-15);
    }

    fn l2_group() -> (CovariateSupport, GroupRecord) {
        let s = CovariateSupport::binary_product(2).unwrap();
        let g = group(
            "g",
            1.0,
            0.55,
            &[(0, 0.0, 0.4), (0, 1.0, 0.6), (1, 0.0, 0.7), (1, 1.0, 0.3)],
        );
        (s, g)
    }

    #[test]
    fn witnesses_replay() {
        let (s, g) = l2_group();
        let lam = [0.0, 0.0, 1.0, 0.0];
        let b = group_bounds(&g, &s, &lam, unit(), None, false, &SearchOptions::default()).unwrap();
        let (lo, _) = inner_closed_form(&lam, &b.witness_lower.p, g.y_mean, unit(), Direction::Min);
        let (hi, _) = inner_closed_form(&lam, &b.witness_upper.p, g.y_mean, unit(), Direction::Max);
        assert_eq!(lo, b.lower);
        assert_eq!(hi, b.upper);
        assert!(b.lower <= b.upper);
    }

    #[test]
    fn joint_known_range_brackets_bounds() {
        let (s, g) = l2_group();
        let lam = [0.0, 0.0, 1.0, 0.0];
        let opts = SearchOptions::default();
        let b = group_bounds(&g, &s, &lam, unit(), None, false, &opts).unwrap();
        let r = joint_known_range(&g, &s, &lam, unit(), None, false, &opts).unwrap();
        assert_eq!(r.lower_range.0, b.lower);
        assert_eq!(r.upper_range.1, b.upper);
        assert!(r.lower_width() > 0.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let (s, g) = l2_group();
        let lam = [1.0, -1.0, 0.5, 0.0];
        let opts = SearchOptions { seed: 9, ..Default::default() };
        let a = group_bounds(&g, &s, &lam, unit(), None, false, &opts).unwrap();
        let b = group_bounds(&g, &s, &lam, unit(), None, false, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_spec_size_is_checked() {
        let ds = single_binary();
        let bad = ShapeSpec::Shared(
            ShapeConstraintSet { rows: vec![ShapeRow { coeffs: vec![1.0], rhs: 0.0 }] },
        );
        assert!(identified_set(&ds, &[1.0, 0.0], Some(&bad), false, &SearchOptions::default()).is_err());
    }
}
