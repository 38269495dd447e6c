//! Group-level aggregate data and the restrictions users can place on
//! conditional means.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::support::CovariateSupport;

/// Tolerance for marginal and share sums.
pub const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRange {
    pub lo: f64,
    pub hi: f64,
}

impl OutcomeRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::InvalidInput(format!("invalid outcome range [{lo}, {hi}]")));
        }
        Ok(OutcomeRange { lo, hi })
    }

    pub fn unit() -> Self {
        OutcomeRange { lo: 0.0, hi: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, y: f64) -> bool {
        y >= self.lo && y <= self.hi
    }

    pub fn clamp(&self, y: f64) -> f64 {
        y.clamp(self.lo, self.hi)
    }
}

/// Observed `P[X_l = value | G = g]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEntry {
    pub covariate: usize,
    pub value: f64,
    pub prob: f64,
}

/// Observed `E[Y | X_l = value, G = g]`, optionally with its standard error
/// and the number of individuals it averages over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinerMoment {
    pub covariate: usize,
    pub value: f64,
    pub y_mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_se: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub id: String,
    pub share: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
    pub y_mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_se: Option<f64>,
    pub marginals: Vec<MarginalEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub finer: Vec<FinerMoment>,
}

impl GroupRecord {
    /// Marginal probabilities stacked in indicator-row order. Values missing
    /// from the record count as zero.
    pub fn marginal_vector(&self, support: &CovariateSupport) -> Result<Vec<f64>> {
        let mut m = vec![0.0; support.num_marginal_rows()];
        for e in &self.marginals {
            let v = lookup(support, e.covariate, e.value).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "group {}: covariate {} value {} is not in the support",
                    self.id, e.covariate, e.value
                ))
            })?;
            m[support.row_of(e.covariate, v)] += e.prob;
        }
        Ok(m)
    }

    pub fn marginal(&self, covariate: usize, value: f64) -> Option<f64> {
        self.marginals
            .iter()
            .find(|e| e.covariate == covariate && e.value == value)
            .map(|e| e.prob)
    }
}

fn lookup(support: &CovariateSupport, covariate: usize, value: f64) -> Option<usize> {
    if covariate >= support.num_covariates() {
        return None;
    }
    support.value_index(covariate, value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateDataset {
    pub support: CovariateSupport,
    pub range: OutcomeRange,
    /// Outcome declared binary: means are read as `P[Y = 1 | ...]`.
    #[serde(default)]
    pub binary: bool,
    pub groups: Vec<GroupRecord>,
}

impl AggregateDataset {
    pub fn k(&self) -> usize {
        self.support.len()
    }

    pub fn total_count(&self) -> Option<u64> {
        self.groups.iter().map(|g| g.count).sum()
    }

    /// Rescales each group's per-covariate marginals and the group shares so
    /// they sum to one. Sums that are zero are left alone.
    pub fn renormalized(mut self) -> Self {
        let l = self.support.num_covariates();
        for g in &mut self.groups {
            for cov in 0..l {
                let s: f64 = g
                    .marginals
                    .iter()
                    .filter(|e| e.covariate == cov)
                    .map(|e| e.prob)
                    .sum();
                if s > 0.0 {
                    for e in g.marginals.iter_mut().filter(|e| e.covariate == cov) {
                        e.prob /= s;
                    }
                }
            }
        }
        let total: f64 = self.groups.iter().map(|g| g.share).sum();
        if total > 0.0 {
            for g in &mut self.groups {
                g.share /= total;
            }
        }
        self
    }
}

/// One failed dataset invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NoGroups,
    InvalidRange { lo: f64, hi: f64 },
    DuplicateGroup { group: String },
    ShareOutOfRange { group: String, share: f64 },
    ShareSum { sum: f64 },
    MarginalSum { group: String, covariate: String, sum: f64 },
    ProbabilityOutOfRange { group: String, covariate: String, value: f64, prob: f64 },
    UnknownCovariateValue { group: String, covariate: String, value: f64 },
    OutcomeMeanOutOfRange { group: String, y_mean: f64 },
    FinerMeanOutOfRange { group: String, covariate: String, value: f64, y_mean: f64 },
    NegativeStandardError { group: String },
    NonFinite { group: String, field: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NoGroups => write!(f, "dataset has no groups"),
            InvalidRange { lo, hi } => write!(f, "invalid outcome range [{lo}, {hi}]"),
            DuplicateGroup { group } => write!(f, "duplicate group id {group}"),
            ShareOutOfRange { group, share } => {
                write!(f, "group share {share} outside (0, 1] (group {group})")
            }
            ShareSum { sum } => write!(f, "group shares sum to {sum}, not 1"),
            MarginalSum { group, covariate, sum } => {
                write!(f, "marginal sum ≠ 1 (group {group}, covariate {covariate}): {sum}")
            }
            ProbabilityOutOfRange { group, covariate, value, prob } => write!(
                f,
                "marginal probability {prob} outside [0, 1] (group {group}, covariate {covariate}, value {value})"
            ),
            UnknownCovariateValue { group, covariate, value } => write!(
                f,
                "covariate value not in support (group {group}, covariate {covariate}, value {value})"
            ),
            OutcomeMeanOutOfRange { group, y_mean } => {
                write!(f, "outcome mean outside range (group {group}): {y_mean}")
            }
            FinerMeanOutOfRange { group, covariate, value, y_mean } => write!(
                f,
                "subgroup outcome mean outside range (group {group}, covariate {covariate}, value {value}): {y_mean}"
            ),
            NegativeStandardError { group } => write!(f, "negative standard error (group {group})"),
            NonFinite { group, field } => write!(f, "non-finite {field} (group {group})"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ValidationOptions {
    /// Rescale marginals and shares to sum to one before checking.
    pub renormalize: bool,
}

/// Checks every dataset invariant. Returns the (possibly renormalized) dataset
/// or every violation found.
pub fn validate_dataset(
    dataset: AggregateDataset,
    opts: &ValidationOptions,
) -> std::result::Result<AggregateDataset, Vec<Violation>> {
    let dataset = if opts.renormalize { dataset.renormalized() } else { dataset };
    let v = violations(&dataset);
    if v.is_empty() {
        Ok(dataset)
    } else {
        Err(v)
    }
}

pub fn violations(ds: &AggregateDataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let support = &ds.support;
    let range = ds.range;
    if !range.lo.is_finite() || !range.hi.is_finite() || range.lo > range.hi {
        out.push(Violation::InvalidRange { lo: range.lo, hi: range.hi });
    }
    if ds.groups.is_empty() {
        out.push(Violation::NoGroups);
        return out;
    }
    let cov_name = |l: usize| {
        support
            .names()
            .get(l)
            .cloned()
            .unwrap_or_else(|| format!("#{}", l + 1))
    };

    let mut seen = HashSet::new();
    let mut share_sum = 0.0;
    for g in &ds.groups {
        if !seen.insert(g.id.as_str()) {
            out.push(Violation::DuplicateGroup { group: g.id.clone() });
        }
        if !g.share.is_finite() {
            out.push(Violation::NonFinite { group: g.id.clone(), field: "share".into() });
        } else if g.share <= 0.0 || g.share > 1.0 + SUM_TOL {
            out.push(Violation::ShareOutOfRange { group: g.id.clone(), share: g.share });
        }
        share_sum += g.share;

        if !g.y_mean.is_finite() {
            out.push(Violation::NonFinite { group: g.id.clone(), field: "y_mean".into() });
        } else if !range.contains(g.y_mean) {
            out.push(Violation::OutcomeMeanOutOfRange { group: g.id.clone(), y_mean: g.y_mean });
        }
        if g.y_se.is_some_and(|s| s < 0.0) {
            out.push(Violation::NegativeStandardError { group: g.id.clone() });
        }

        let mut sums: BTreeMap<usize, f64> = (0..support.num_covariates()).map(|l| (l, 0.0)).collect();
        for e in &g.marginals {
            if lookup(support, e.covariate, e.value).is_none() {
                out.push(Violation::UnknownCovariateValue {
                    group: g.id.clone(),
                    covariate: cov_name(e.covariate),
                    value: e.value,
                });
                continue;
            }
            if !e.prob.is_finite() {
                out.push(Violation::NonFinite { group: g.id.clone(), field: "marginal".into() });
                continue;
            }
            if !(0.0..=1.0).contains(&e.prob) {
                out.push(Violation::ProbabilityOutOfRange {
                    group: g.id.clone(),
                    covariate: cov_name(e.covariate),
                    value: e.value,
                    prob: e.prob,
                });
            }
            *sums.get_mut(&e.covariate).expect("covariate checked") += e.prob;
        }
        for (l, s) in sums {
            if (s - 1.0).abs() > SUM_TOL {
                out.push(Violation::MarginalSum { group: g.id.clone(), covariate: cov_name(l), sum: s });
            }
        }

        for f in &g.finer {
            if lookup(support, f.covariate, f.value).is_none() {
                out.push(Violation::UnknownCovariateValue {
                    group: g.id.clone(),
                    covariate: cov_name(f.covariate),
                    value: f.value,
                });
                continue;
            }
            if !f.y_mean.is_finite() || !range.contains(f.y_mean) {
                out.push(Violation::FinerMeanOutOfRange {
                    group: g.id.clone(),
                    covariate: cov_name(f.covariate),
                    value: f.value,
                    y_mean: f.y_mean,
                });
            }
            if f.y_se.is_some_and(|s| s < 0.0) {
                out.push(Violation::NegativeStandardError { group: g.id.clone() });
            }
        }
    }
    if (share_sum - 1.0).abs() > SUM_TOL {
        out.push(Violation::ShareSum { sum: share_sum });
    }
    out
}

/// Weights `lambda_k` of the target `sum_k lambda_k E[Y | X = x_k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite and non-empty".into()));
        }
        if v.iter().all(|x| *x == 0.0) {
            return Err(Error::InvalidInput("weight vector is identically zero".into()));
        }
        Ok(WeightVector(v))
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

impl WeightVector {
    pub fn new(weights: Vec<f64>, k: usize) -> Result<Self> {
        if weights.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for a support of {k} points",
                weights.len()
            )));
        }
        Self::try_from(weights)
    }

    /// Selects a single cell: `E[Y | X = x_k]`.
    pub fn unit(k_total: usize, k: usize) -> Result<Self> {
        let mut w = vec![0.0; k_total];
        *w.get_mut(k).ok_or_else(|| Error::InvalidInput(format!("cell {k} out of range")))? = 1.0;
        Ok(WeightVector(w))
    }

    /// `E[Y | X = x_a] - E[Y | X = x_b]`.
    pub fn contrast(k_total: usize, a: usize, b: usize) -> Result<Self> {
        if a == b {
            return Err(Error::InvalidInput("contrast of a cell with itself".into()));
        }
        let mut w = vec![0.0; k_total];
        *w.get_mut(a).ok_or_else(|| Error::InvalidInput(format!("cell {a} out of range")))? = 1.0;
        *w.get_mut(b).ok_or_else(|| Error::InvalidInput(format!("cell {b} out of range")))? = -1.0;
        Ok(WeightVector(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn check_len(&self, k: usize) -> Result<()> {
        if self.0.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for a support of {k} points",
                self.0.len()
            )));
        }
        Ok(())
    }
}

/// One polyhedral restriction `coeffs · c <= rhs` on a group's conditional
/// means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeRow {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Monotone {
    /// Conditional mean weakly increases with the covariate.
    Increasing,
    /// Conditional mean weakly decreases with the covariate.
    Decreasing,
}

/// `S c <= a` over the `K` conditional means of a group.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ShapeConstraintSet {
    pub rows: Vec<ShapeRow>,
}

impl ShapeConstraintSet {
    pub fn new(rows: Vec<ShapeRow>, k: usize) -> Result<Self> {
        let s = ShapeConstraintSet { rows };
        s.check(k)?;
        Ok(s)
    }

    pub fn check(&self, k: usize) -> Result<()> {
        for r in &self.rows {
            if r.coeffs.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "shape row has {} columns, support has {k} points",
                    r.coeffs.len()
                )));
            }
            if r.coeffs.iter().chain(std::iter::once(&r.rhs)).any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput("shape row is not finite".into()));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// Monotonicity in one covariate holding the others fixed. For each pair
    /// of support points that differ only in covariate `l`, at consecutive
    /// values `v < v'`, adds `c(v') - c(v) <= 0` (decreasing) or
    /// `c(v) - c(v') <= 0` (increasing).
    pub fn monotone(support: &CovariateSupport, l: usize, dir: Monotone) -> Result<Self> {
        if l >= support.num_covariates() {
            return Err(Error::InvalidInput(format!("covariate {l} out of range")));
        }
        let k = support.len();
        let mut rows = Vec::new();
        for lo in 0..k {
            let code = support.codes(lo);
            let mut next = code.to_vec();
            next[l] += 1;
            if next[l] >= support.values(l).len() {
                continue;
            }
            let Some(hi) = (0..k).find(|&j| support.codes(j) == next.as_slice()) else {
                continue;
            };
            let mut coeffs = vec![0.0; k];
            match dir {
                Monotone::Decreasing => {
                    coeffs[hi] = 1.0;
                    coeffs[lo] = -1.0;
                }
                Monotone::Increasing => {
                    coeffs[lo] = 1.0;
                    coeffs[hi] = -1.0;
                }
            }
            rows.push(ShapeRow { coeffs, rhs: 0.0 });
        }
        Ok(ShapeConstraintSet { rows })
    }

    pub fn extend(&mut self, other: ShapeConstraintSet) {
        self.rows.extend(other.rows);
    }
}

/// Shape restrictions shared by all groups or given group by group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeSpec {
    Shared(ShapeConstraintSet),
    PerGroup(BTreeMap<String, ShapeConstraintSet>),
}

impl ShapeSpec {
    pub fn for_group(&self, id: &str) -> Option<&ShapeConstraintSet> {
        match self {
            ShapeSpec::Shared(s) => Some(s),
            ShapeSpec::PerGroup(m) => m.get(id),
        }
        .filter(|s| !s.is_empty())
    }

    pub fn check(&self, k: usize) -> Result<()> {
        match self {
            ShapeSpec::Shared(s) => s.check(k),
            ShapeSpec::PerGroup(m) => m.values().try_for_each(|s| s.check(k)),
        }
    }
}
