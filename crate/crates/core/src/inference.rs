//! Confidence sets for the identified interval.
//!
//! Every aggregate observation gets a marginal interval at level `1 - alpha/M`
//! (Bonferroni over the `M` observations). The bound programs are then
//! re-solved with each observation free to move inside its interval, and the
//! per-group bounds are aggregated with the share intervals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, Normal};

use crate::bounds::{
    bounds_on, identified_set, BoundResult, FinerRow, GroupBounds, GroupProblem, SearchOptions,
    WarmStarts,
};
use crate::dataset::{AggregateDataset, GroupRecord, ShapeSpec};
use crate::error::{Error, Result};
use crate::feasible::{chart, JointPolytope, SLACK_TOL};

/// Exact binomial interval for `successes` out of `n` at confidence `level`.
pub fn clopper_pearson(successes: u64, n: u64, level: f64) -> Result<(f64, f64)> {
    if n == 0 || successes > n || !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!(
            "Clopper-Pearson needs 0 <= x <= n, n >= 1 and a level in (0, 1); got x = {successes}, n = {n}, level = {level}"
        )));
    }
    let tail = (1.0 - level) / 2.0;
    let (x, nf) = (successes as f64, n as f64);
    let beta_q = |a: f64, b: f64, q: f64| -> Result<f64> {
        let d = Beta::new(a, b).map_err(|e| Error::Internal(format!("beta({a}, {b}): {e}")))?;
        Ok(d.inverse_cdf(q))
    };
    let lo = if successes == 0 {
        0.0
    } else if successes == n {
        tail.powf(1.0 / nf)
    } else {
        beta_q(x, nf - x + 1.0, tail)?
    };
    let hi = if successes == n {
        1.0
    } else if successes == 0 {
        1.0 - tail.powf(1.0 / nf)
    } else {
        beta_q(x + 1.0, nf - x, 1.0 - tail)?
    };
    Ok((lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0)))
}

/// `mean +- z se` with `z` the two-sided standard normal quantile, clipped to
/// `[lo, hi]`.
pub fn normal_mean_ci(mean: f64, se: f64, level: f64, clip: (f64, f64)) -> Result<(f64, f64)> {
    if !(se >= 0.0) || !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!(
            "normal interval needs se >= 0 and a level in (0, 1); got se = {se}, level = {level}"
        )));
    }
    let z = Normal::standard().inverse_cdf((1.0 + level) / 2.0);
    Ok(((mean - z * se).max(clip.0), (mean + z * se).min(clip.1)))
}

/// Per-interval level `1 - alpha / m`.
pub fn bonferroni_level(alpha: f64, m: usize) -> Result<f64> {
    if m == 0 || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "Bonferroni correction needs m >= 1 and alpha in (0, 1); got m = {m}, alpha = {alpha}"
        )));
    }
    Ok(1.0 - alpha / m as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    GroupShare,
    Marginal,
    YMean,
    FinerYMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    ClopperPearson,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalInterval {
    pub kind: ObservationKind,
    pub group: String,
    pub covariate: Option<usize>,
    pub value: Option<f64>,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub method: IntervalMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct CiOptions {
    pub search: SearchOptions,
    /// Treat group shares as fixed by design rather than estimated.
    pub shares_known: bool,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCi {
    pub group: String,
    pub share: (f64, f64),
    pub bounds: GroupBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub alpha: f64,
    /// Number of observations, one interval each.
    pub m: usize,
    pub level: f64,
    pub intervals: Vec<MarginalInterval>,
    pub per_group: Vec<GroupCi>,
    pub d_ci: (f64, f64),
    /// The point-estimate interval the confidence set was built around.
    pub estimate: (f64, f64),
    pub warnings: Vec<String>,
}

impl ConfidenceReport {
    pub fn contains(&self, interval: (f64, f64), tol: f64) -> bool {
        self.d_ci.0 <= interval.0 + tol && self.d_ci.1 >= interval.1 - tol
    }
}

fn round_count(prob: f64, n: u64) -> u64 {
    ((prob * n as f64).round().max(0.0) as u64).min(n)
}

/// Number of observations one group contributes.
fn group_observations(group: &GroupRecord, rows: usize, shares_known: bool) -> usize {
    rows + 1 + group.finer.len() + usize::from(!shares_known)
}

/// Builds every marginal interval at the Bonferroni level for `alpha`.
pub fn marginal_intervals(
    dataset: &AggregateDataset,
    alpha: f64,
    shares_known: bool,
) -> Result<(usize, f64, Vec<MarginalInterval>)> {
    let support = &dataset.support;
    let rows = support.marginal_rows();
    let m: usize = dataset
        .groups
        .iter()
        .map(|g| group_observations(g, rows.len(), shares_known))
        .sum();
    let level = bonferroni_level(alpha, m)?;
    let total = if shares_known {
        0
    } else {
        dataset.total_count().ok_or_else(|| Error::MissingData {
            group: dataset
                .groups
                .iter()
                .find(|g| g.count.is_none())
                .map_or_else(String::new, |g| g.id.clone()),
            what: "count (needed for share intervals)".into(),
        })?
    };
    let range = dataset.range;

    let mut out = Vec::with_capacity(m);
    for g in &dataset.groups {
        let n_g = g.count.ok_or_else(|| Error::MissingData {
            group: g.id.clone(),
            what: "count (binomial intervals need sample sizes)".into(),
        })?;
        let widen = |est: f64, (lo, hi): (f64, f64)| (lo.min(est), hi.max(est));
        let mut push = |kind, covariate, value, estimate, bounds, method| {
            let (lo, hi) = widen(estimate, bounds);
            out.push(MarginalInterval {
                kind,
                group: g.id.clone(),
                covariate,
                value,
                estimate,
                lo,
                hi,
                method,
            });
        };

        if !shares_known {
            let ci = clopper_pearson(n_g, total, level)?;
            push(ObservationKind::GroupShare, None, None, g.share, ci, IntervalMethod::ClopperPearson);
        }
        for &(l, vi) in &rows {
            let v = support.values(l)[vi];
            let prob = g.marginal(l, v).unwrap_or(0.0);
            let ci = clopper_pearson(round_count(prob, n_g), n_g, level)?;
            push(ObservationKind::Marginal, Some(l), Some(v), prob, ci, IntervalMethod::ClopperPearson);
        }
        let mean_ci = |mean: f64, se: Option<f64>, n: u64, what: &str| -> Result<((f64, f64), IntervalMethod)> {
            if dataset.binary {
                if n == 0 {
                    return Ok(((range.lo, range.hi), IntervalMethod::ClopperPearson));
                }
                let share = (mean - range.lo) / range.width();
                let (lo, hi) = clopper_pearson(round_count(share, n), n, level)?;
                Ok((
                    (range.lo + lo * range.width(), range.lo + hi * range.width()),
                    IntervalMethod::ClopperPearson,
                ))
            } else {
                let se = se.ok_or_else(|| Error::MissingData {
                    group: g.id.clone(),
                    what: format!(
                        "standard error of the {what}; a non-binary outcome needs observed standard errors"
                    ),
                })?;
                Ok((normal_mean_ci(mean, se, level, (range.lo, range.hi))?, IntervalMethod::Normal))
            }
        };
        let (ci, method) = mean_ci(g.y_mean, g.y_se, n_g, "outcome mean")?;
        push(ObservationKind::YMean, None, None, g.y_mean, ci, method);
        for f in &g.finer {
            let n_f = f
                .count
                .unwrap_or_else(|| round_count(g.marginal(f.covariate, f.value).unwrap_or(0.0), n_g));
            let (ci, method) = mean_ci(f.y_mean, f.y_se, n_f, "subgroup outcome mean")?;
            push(
                ObservationKind::FinerYMean,
                Some(f.covariate),
                Some(f.value),
                f.y_mean,
                ci,
                method,
            );
        }
    }
    debug_assert_eq!(out.len(), m);
    Ok((m, level, out))
}

fn interval_for(
    intervals: &[MarginalInterval],
    kind: ObservationKind,
    covariate: Option<usize>,
    value: Option<f64>,
) -> Option<&MarginalInterval> {
    intervals
        .iter()
        .find(|i| i.kind == kind && i.covariate == covariate && i.value == value)
}

/// Relaxed bounds for one group given its intervals.
#[allow(clippy::too_many_arguments)]
fn group_ci(
    dataset: &AggregateDataset,
    g: &GroupRecord,
    ivs: &[MarginalInterval],
    lambda: &[f64],
    shape: Option<&ShapeSpec>,
    use_finer: bool,
    opts: &CiOptions,
    warm: &WarmStarts,
) -> Result<GroupCi> {
    let support = &dataset.support;
    let rows = support.marginal_rows();
    let mut lo = Vec::with_capacity(rows.len());
    let mut hi = Vec::with_capacity(rows.len());
    for &(l, vi) in &rows {
        let v = support.values(l)[vi];
        let iv = interval_for(ivs, ObservationKind::Marginal, Some(l), Some(v))
            .ok_or_else(|| Error::Internal(format!("no marginal interval for covariate {l} value {v}")))?;
        lo.push(iv.lo);
        hi.push(iv.hi);
    }
    let y = interval_for(ivs, ObservationKind::YMean, None, None)
        .ok_or_else(|| Error::Internal("no outcome-mean interval".into()))?;
    let mut finer = Vec::new();
    if use_finer {
        for f in &g.finer {
            let fy = interval_for(ivs, ObservationKind::FinerYMean, Some(f.covariate), Some(f.value))
                .ok_or_else(|| Error::Internal("no subgroup-mean interval".into()))?;
            let vi = support.value_index(f.covariate, f.value).ok_or_else(|| {
                Error::InvalidInput(format!("covariate {} has no support value {}", f.covariate, f.value))
            })?;
            let r = support.row_of(f.covariate, vi);
            finer.push(FinerRow {
                covariate: f.covariate,
                value: f.value,
                cells: support.points_with(f.covariate, vi).collect(),
                lower: fy.lo * lo[r],
                upper: fy.hi * hi[r],
            });
        }
    }
    let problem = GroupProblem {
        lambda,
        range: dataset.range,
        y_band: (y.lo, y.hi),
        shape: shape.and_then(|s| s.for_group(&g.id)),
        finer,
    };
    let poly = JointPolytope::for_bands(support, &lo, &hi)?;
    if opts.search.strict && poly.min_slack() > SLACK_TOL {
        return Err(Error::EmptyFeasibleSet {
            group: g.id.clone(),
            slack: poly.min_slack(),
        });
    }
    let ch = chart(&poly)?;
    let bounds = bounds_on(&g.id, &poly, &ch, &problem, &opts.search, warm).map_err(|e| match e {
        Error::EmptyIdentifiedSet { group } => Error::Internal(format!(
            "group {group}: relaxed program has no feasible point although the estimate does"
        )),
        other => other,
    })?;
    let share = if opts.shares_known {
        (g.share, g.share)
    } else {
        let iv = interval_for(ivs, ObservationKind::GroupShare, None, None)
            .ok_or_else(|| Error::Internal("no share interval".into()))?;
        (iv.lo, iv.hi)
    };
    Ok(GroupCi {
        group: g.id.clone(),
        share,
        bounds,
    })
}

/// Confidence sets at several levels, nested by construction: levels are
/// processed from the largest `alpha` down and each one starts its searches
/// from the witnesses of the point estimate and of every narrower set.
pub fn ci_identified_sets(
    dataset: &AggregateDataset,
    lambda: &[f64],
    alphas: &[f64],
    shape: Option<&ShapeSpec>,
    use_finer: bool,
    opts: &CiOptions,
) -> Result<(BoundResult, Vec<ConfidenceReport>)> {
    let point = identified_set(dataset, lambda, shape, use_finer, &opts.search)?;
    let reports = ci_from_estimate(dataset, lambda, alphas, shape, use_finer, opts, &point)?;
    Ok((point, reports))
}

/// [`ci_identified_sets`] around an already computed point estimate. Reports
/// come back in the order of `alphas`.
pub fn ci_from_estimate(
    dataset: &AggregateDataset,
    lambda: &[f64],
    alphas: &[f64],
    shape: Option<&ShapeSpec>,
    use_finer: bool,
    opts: &CiOptions,
    point: &BoundResult,
) -> Result<Vec<ConfidenceReport>> {
    let mut order: Vec<usize> = (0..alphas.len()).collect();
    order.sort_by(|&a, &b| alphas[b].total_cmp(&alphas[a]));
    let mut warm = point.warm_starts();
    let mut reports: Vec<Option<ConfidenceReport>> = vec![None; alphas.len()];
    for i in order {
        let rep = ci_with_warm(dataset, lambda, alphas[i], shape, use_finer, opts, point, &warm)?;
        for (w, g) in warm.iter_mut().zip(&rep.per_group) {
            w.extend(WarmStarts::from_bounds(&g.bounds));
        }
        reports[i] = Some(rep);
    }
    Ok(reports.into_iter().flatten().collect())
}

/// The confidence set at one level.
pub fn ci_identified_set(
    dataset: &AggregateDataset,
    lambda: &[f64],
    alpha: f64,
    shape: Option<&ShapeSpec>,
    use_finer: bool,
    opts: &CiOptions,
) -> Result<ConfidenceReport> {
    let (_, mut reps) = ci_identified_sets(dataset, lambda, &[alpha], shape, use_finer, opts)?;
    Ok(reps.remove(0))
}

#[allow(clippy::too_many_arguments)]
fn ci_with_warm(
    dataset: &AggregateDataset,
    lambda: &[f64],
    alpha: f64,
    shape: Option<&ShapeSpec>,
    use_finer: bool,
    opts: &CiOptions,
    point: &BoundResult,
    warm: &[WarmStarts],
) -> Result<ConfidenceReport> {
    opts.search.check()?;
    let (m, level, intervals) = marginal_intervals(dataset, alpha, opts.shares_known)?;
    let mut warnings = Vec::new();
    if use_finer && dataset.range.lo < 0.0 && dataset.groups.iter().any(|g| !g.finer.is_empty()) {
        warnings.push(
            "outcome range includes negative values: subgroup-mean bands pair lower with lower and \
             upper with upper endpoints, which need not bracket the product"
                .to_string(),
        );
    }
    let none = WarmStarts::default();
    let per_group = dataset
        .groups
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let ivs: Vec<MarginalInterval> =
                intervals.iter().filter(|iv| iv.group == g.id).cloned().collect();
            group_ci(dataset, g, &ivs, lambda, shape, use_finer, opts, warm.get(i).unwrap_or(&none))
                .map_err(|e| e.in_group(&g.id))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut d_lo = 0.0;
    let mut d_hi = 0.0;
    for g in &per_group {
        let (s_lo, s_hi) = g.share;
        d_lo += (s_lo * g.bounds.lower).min(s_hi * g.bounds.lower);
        d_hi += (s_lo * g.bounds.upper).max(s_hi * g.bounds.upper);
    }
    Ok(ConfidenceReport {
        alpha,
        m,
        level,
        intervals,
        per_group,
        d_ci: (d_lo, d_hi),
        estimate: point.interval(),
        warnings,
    })
}
