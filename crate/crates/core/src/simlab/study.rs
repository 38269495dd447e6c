//! Monte Carlo coverage and consistency studies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sample::simulate_aggregate;
use super::spec::JointSpec;
use crate::bounds::{identified_set, BoundResult, SearchOptions};
use crate::error::{Error, Result};
use crate::inference::{ci_from_estimate, CiOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    pub search: SearchOptions,
    /// Base seed; repetition `r` draws with [`rep_seed`]`(seed, r)`.
    pub seed: u64,
    /// Report subgroup means and use them as constraints.
    pub use_finer: bool,
    /// Group shares are fixed by design (equal group sizes).
    pub shares_known: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            search: SearchOptions::default(),
            seed: 0,
            use_finer: false,
            shares_known: true,
        }
    }
}

pub fn rep_seed(seed: u64, rep: usize) -> u64 {
    seed ^ (rep as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Bounds computed from the exact aggregates of the spec.
pub fn population_bounds(spec: &JointSpec, lambda: &[f64], opts: &StudyOptions) -> Result<BoundResult> {
    let ds = spec.population_dataset(opts.use_finer);
    identified_set(&ds, lambda, None, opts.use_finer, &opts.search)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub seed: u64,
    pub estimate: (f64, f64),
    pub ci: (f64, f64),
    pub covered: bool,
    /// `max(|L_hat - L|, |U_hat - U|)`
    pub bound_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub max: f64,
    pub mean: f64,
    pub median: f64,
}

impl ErrorStats {
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return ErrorStats { max: 0.0, mean: 0.0, median: 0.0 };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        ErrorStats {
            max: v[n - 1],
            mean: v.iter().sum::<f64>() / n as f64,
            median,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub spec: String,
    pub n_per_group: u64,
    pub alpha: f64,
    pub population: (f64, f64),
    pub coverage_rate: f64,
    pub bound_error: ErrorStats,
    pub reps: Vec<RepOutcome>,
}

/// Draws `reps` samples of `n_per_group` per group, estimates the bounds and
/// the `1 - alpha` confidence set on each, and records how often the
/// confidence set contains the population bounds.
pub fn coverage_study(
    spec: &JointSpec,
    n_per_group: u64,
    reps: usize,
    alpha: f64,
    lambda: &[f64],
    opts: &StudyOptions,
) -> Result<CoverageReport> {
    if reps == 0 {
        return Err(Error::InvalidInput("coverage study needs at least one repetition".into()));
    }
    let pop = population_bounds(spec, lambda, opts)?.interval();
    let ci_opts = CiOptions {
        search: opts.search.clone(),
        shares_known: opts.shares_known,
    };
    let outcomes = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = rep_seed(opts.seed, rep);
            let ds = simulate_aggregate(spec, n_per_group, seed, opts.use_finer)?;
            let point = identified_set(&ds, lambda, None, opts.use_finer, &opts.search)?;
            let report = ci_from_estimate(&ds, lambda, &[alpha], None, opts.use_finer, &ci_opts, &point)?
                .remove(0);
            let estimate = point.interval();
            Ok(RepOutcome {
                rep,
                seed,
                estimate,
                ci: report.d_ci,
                covered: report.contains(pop, 0.0),
                bound_error: (estimate.0 - pop.0).abs().max((estimate.1 - pop.1).abs()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let covered = outcomes.iter().filter(|o| o.covered).count();
    let errors: Vec<f64> = outcomes.iter().map(|o| o.bound_error).collect();
    Ok(CoverageReport {
        spec: spec.name.clone(),
        n_per_group,
        alpha,
        population: pop,
        coverage_rate: covered as f64 / reps as f64,
        bound_error: ErrorStats::from_values(&errors),
        reps: outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub n_per_group: u64,
    pub bound_error: ErrorStats,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub spec: String,
    pub population: (f64, f64),
    pub rows: Vec<ConsistencyRow>,
}

impl ConsistencyReport {
    /// True when the median error does not increase with the sample size,
    /// allowing `slack` of Monte Carlo noise between neighbours.
    pub fn medians_non_increasing(&self, slack: f64) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].bound_error.median <= w[0].bound_error.median + slack)
    }
}

/// Bound estimation error `max(|L_hat - L|, |U_hat - U|)` at each sample size,
/// over `reps` draws. Sample sizes share repetition seeds.
pub fn consistency_study(
    spec: &JointSpec,
    sizes: &[u64],
    reps: usize,
    lambda: &[f64],
    opts: &StudyOptions,
) -> Result<ConsistencyReport> {
    let pop = population_bounds(spec, lambda, opts)?.interval();
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let errors = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let ds = simulate_aggregate(spec, n, rep_seed(opts.seed, rep), opts.use_finer)?;
                let (l, u) = identified_set(&ds, lambda, None, opts.use_finer, &opts.search)?.interval();
                Ok((l - pop.0).abs().max((u - pop.1).abs()))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(ConsistencyRow {
            n_per_group: n,
            bound_error: ErrorStats::from_values(&errors),
            errors,
        });
    }
    Ok(ConsistencyReport {
        spec: spec.name.clone(),
        population: pop,
        rows,
    })
}
