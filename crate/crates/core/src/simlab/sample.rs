//! Micro-data draws from a [`JointSpec`] and their sample-analogue aggregates.

use rand::distr::{Bernoulli, Distribution, weighted::WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spec::JointSpec;
use crate::dataset::{AggregateDataset, FinerMoment, GroupRecord, MarginalEntry, OutcomeRange};
use crate::error::{Error, Result};
use crate::support::CovariateSupport;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroRecord {
    pub group: usize,
    /// Index of the support point `x`.
    pub cell: usize,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroSample {
    pub group_ids: Vec<String>,
    pub records: Vec<MicroRecord>,
    pub seed: u64,
}

/// Per-group stream of `(cell, y)` draws. Group `g` reads stream `g` of the
/// seeded generator, so groups are independent of each other and of the
/// order they are drawn in.
struct GroupDraws {
    rng: ChaCha8Rng,
    cells: Option<WeightedIndex<f64>>,
    single: usize,
    outcome: Vec<Outcome>,
}

enum Outcome {
    Coin(Bernoulli),
    Fixed(f64),
}

impl GroupDraws {
    fn new(spec: &JointSpec, g: usize, seed: u64) -> Result<Self> {
        let grp = &spec.groups[g];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(g as u64);
        let positive: Vec<usize> = (0..grp.joint.len()).filter(|&k| grp.joint[k] > 0.0).collect();
        let cells = if positive.len() > 1 {
            Some(
                WeightedIndex::new(&grp.joint)
                    .map_err(|e| Error::InvalidInput(format!("group {}: {e}", grp.id)))?,
            )
        } else {
            None
        };
        let outcome = grp
            .cond_means
            .iter()
            .map(|&c| {
                if spec.binary {
                    Bernoulli::new(c.clamp(0.0, 1.0))
                        .map(Outcome::Coin)
                        .map_err(|e| Error::InvalidInput(format!("group {}: {e}", grp.id)))
                } else {
                    Ok(Outcome::Fixed(c))
                }
            })
            .collect::<Result<_>>()?;
        Ok(GroupDraws {
            rng,
            cells,
            single: positive.first().copied().unwrap_or(0),
            outcome,
        })
    }

    fn next(&mut self) -> (usize, f64) {
        let k = match &self.cells {
            Some(w) => w.sample(&mut self.rng),
            None => self.single,
        };
        let y = match &self.outcome[k] {
            Outcome::Coin(b) => {
                if b.sample(&mut self.rng) {
                    1.0
                } else {
                    0.0
                }
            }
            Outcome::Fixed(c) => *c,
        };
        (k, y)
    }
}

/// `n_per_group` i.i.d. draws per group: the cell from the group's joint and
/// the outcome from a Bernoulli with the cell's mean (binary specs) or fixed at
/// that mean.
pub fn generate(spec: &JointSpec, n_per_group: u64, seed: u64) -> Result<MicroSample> {
    spec.check()?;
    let mut records = Vec::with_capacity(spec.groups.len() * n_per_group as usize);
    for g in 0..spec.groups.len() {
        let mut draws = GroupDraws::new(spec, g, seed)?;
        for _ in 0..n_per_group {
            let (cell, y) = draws.next();
            records.push(MicroRecord { group: g, cell, y });
        }
    }
    Ok(MicroSample {
        group_ids: spec.groups.iter().map(|g| g.id.clone()).collect(),
        records,
        seed,
    })
}

/// Sufficient statistics of one group's sample, per support cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub count: Vec<u64>,
    pub y_sum: Vec<f64>,
    pub y_sq: Vec<f64>,
}

impl CellStats {
    pub fn new(k: usize) -> Self {
        CellStats {
            count: vec![0; k],
            y_sum: vec![0.0; k],
            y_sq: vec![0.0; k],
        }
    }

    pub fn push(&mut self, cell: usize, y: f64) {
        self.count[cell] += 1;
        self.y_sum[cell] += y;
        self.y_sq[cell] += y * y;
    }

    pub fn n(&self) -> u64 {
        self.count.iter().sum()
    }

    fn over<'a>(&self, cells: impl Iterator<Item = usize> + 'a) -> (u64, f64, f64) {
        cells.fold((0, 0.0, 0.0), |(n, s, q), k| {
            (n + self.count[k], s + self.y_sum[k], q + self.y_sq[k])
        })
    }
}

fn mean_and_se(n: u64, sum: f64, sq: f64) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 {
        ((sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    (mean, (var / nf).sqrt())
}

/// Builds the aggregate dataset from per-group cell statistics. Finer moments
/// are reported for each `(covariate, value)` cell with at least one draw.
pub fn aggregate_stats(
    ids: &[String],
    stats: &[CellStats],
    support: &CovariateSupport,
    range: OutcomeRange,
    binary: bool,
    finer_cells: &[(usize, f64)],
) -> Result<AggregateDataset> {
    let total: u64 = stats.iter().map(CellStats::n).sum();
    let rows = support.marginal_rows();
    let mut finer_idx = Vec::with_capacity(finer_cells.len());
    for &(l, v) in finer_cells {
        let vi = (l < support.num_covariates())
            .then(|| support.value_index(l, v))
            .flatten()
            .ok_or_else(|| Error::InvalidInput(format!("finer cell ({l}, {v}) not in support")))?;
        finer_idx.push((l, v, vi));
    }
    let groups = ids
        .iter()
        .zip(stats)
        .map(|(id, st)| {
            let n = st.n();
            if n == 0 {
                return Err(Error::MissingData {
                    group: id.clone(),
                    what: "draws".into(),
                });
            }
            let (y_mean, y_se) = mean_and_se(n, st.y_sum.iter().sum(), st.y_sq.iter().sum());
            let marginals = rows
                .iter()
                .map(|&(l, vi)| MarginalEntry {
                    covariate: l,
                    value: support.values(l)[vi],
                    prob: st.over(support.points_with(l, vi)).0 as f64 / n as f64,
                })
                .collect();
            let finer = finer_idx
                .iter()
                .filter_map(|&(l, v, vi)| {
                    let (m, s, q) = st.over(support.points_with(l, vi));
                    (m > 0).then(|| {
                        let (mean, se) = mean_and_se(m, s, q);
                        FinerMoment {
                            covariate: l,
                            value: v,
                            y_mean: mean,
                            y_se: Some(se),
                            count: Some(m),
                        }
                    })
                })
                .collect();
            Ok(GroupRecord {
                id: id.clone(),
                share: n as f64 / total as f64,
                count: Some(n),
                y_mean,
                y_se: Some(y_se),
                marginals,
                finer,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AggregateDataset {
        support: support.clone(),
        range,
        binary,
        groups,
    })
}

/// Sample analogues of the group mean, the covariate marginals, the group
/// shares and (for `finer_cells`) the subgroup means.
pub fn aggregate_micro(
    sample: &MicroSample,
    support: &CovariateSupport,
    range: OutcomeRange,
    binary: bool,
    finer_cells: &[(usize, f64)],
) -> Result<AggregateDataset> {
    let k = support.len();
    let mut stats = vec![CellStats::new(k); sample.group_ids.len()];
    for r in &sample.records {
        if r.group >= stats.len() || r.cell >= k {
            return Err(Error::InvalidInput(format!(
                "record with group {} and cell {} outside the sample layout",
                r.group, r.cell
            )));
        }
        stats[r.group].push(r.cell, r.y);
    }
    aggregate_stats(&sample.group_ids, &stats, support, range, binary, finer_cells)
}

/// Same result as `aggregate_micro(generate(..))` without keeping the records.
pub fn simulate_aggregate(
    spec: &JointSpec,
    n_per_group: u64,
    seed: u64,
    with_finer: bool,
) -> Result<AggregateDataset> {
    spec.check()?;
    let k = spec.k();
    let stats = (0..spec.groups.len())
        .into_par_iter()
        .map(|g| {
            let mut draws = GroupDraws::new(spec, g, seed)?;
            let mut st = CellStats::new(k);
            for _ in 0..n_per_group {
                let (cell, y) = draws.next();
                st.push(cell, y);
            }
            Ok(st)
        })
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = spec.groups.iter().map(|g| g.id.clone()).collect();
    let finer: &[(usize, f64)] = if with_finer { &spec.finer_cells } else { &[] };
    aggregate_stats(&ids, &stats, &spec.support, spec.range, spec.binary, finer)
}
