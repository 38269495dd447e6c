#![allow(dead_code)]

use aggbounds::simlab::spec::{GroupSpec, JointSpec, SPEC_VERSION};
use aggbounds::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Product supports with at most eight points, keyed by values per covariate.
pub const SMALL_SHAPES: [&[usize]; 7] = [&[2], &[3], &[2, 2], &[3, 2], &[2, 3], &[4, 2], &[2, 2, 2]];

pub fn product_support(levels: &[usize]) -> CovariateSupport {
    let names = (0..levels.len()).map(|l| format!("x{l}")).collect();
    let values: Vec<Vec<f64>> = levels.iter().map(|&n| (0..n).map(|v| v as f64).collect()).collect();
    CovariateSupport::product(names, &values).unwrap()
}

/// A point on the simplex, with occasional empty cells.
pub fn random_joint(rng: &mut ChaCha8Rng, k: usize, allow_zero: bool) -> Vec<f64> {
    loop {
        let mut p: Vec<f64> = (0..k)
            .map(|_| {
                if allow_zero && rng.random::<f64>() < 0.1 {
                    0.0
                } else {
                    -rng.random::<f64>().max(1e-300).ln()
                }
            })
            .collect();
        let s: f64 = p.iter().sum();
        if s > 0.0 {
            p.iter_mut().for_each(|v| *v /= s);
            return p;
        }
    }
}

/// Sorts `c` within each fibre of covariate `l` so that it increases in `l`.
pub fn make_increasing(support: &CovariateSupport, l: usize, c: &mut [f64]) {
    let k = support.len();
    let mut seen = vec![false; k];
    for start in 0..k {
        if seen[start] {
            continue;
        }
        let key: Vec<usize> = support.codes(start).iter().enumerate().filter(|(i, _)| *i != l).map(|(_, v)| *v).collect();
        let mut fibre: Vec<usize> = (0..k)
            .filter(|&j| {
                let kj: Vec<usize> =
                    support.codes(j).iter().enumerate().filter(|(i, _)| *i != l).map(|(_, v)| *v).collect();
                kj == key
            })
            .collect();
        fibre.sort_by_key(|&j| support.codes(j)[l]);
        let mut vals: Vec<f64> = fibre.iter().map(|&j| c[j]).collect();
        vals.sort_by(f64::total_cmp);
        for (j, v) in fibre.iter().zip(vals) {
            c[*j] = v;
            seen[*j] = true;
        }
    }
}

pub struct Instance {
    pub spec: JointSpec,
    pub dataset: AggregateDataset,
    pub lambda: Vec<f64>,
}

impl Instance {
    pub fn group(&self) -> &GroupRecord {
        &self.dataset.groups[0]
    }

    pub fn support(&self) -> &CovariateSupport {
        &self.dataset.support
    }
}

pub fn spec_from(
    support: CovariateSupport,
    range: OutcomeRange,
    binary: bool,
    groups: Vec<(Vec<f64>, Vec<f64>)>,
    shares: Option<Vec<f64>>,
) -> JointSpec {
    let g = groups.len();
    let shares = shares.unwrap_or_else(|| vec![1.0 / g as f64; g]);
    let finer_cells = (0..support.num_covariates()).map(|l| (l, support.values(l)[1])).collect();
    JointSpec {
        version: SPEC_VERSION,
        name: "random".into(),
        support,
        range,
        binary,
        n_per_group: 1000,
        finer_cells,
        groups: groups
            .into_iter()
            .zip(shares)
            .enumerate()
            .map(|(i, ((joint, cond_means), share))| GroupSpec {
                id: format!("g{i}"),
                share,
                joint,
                cond_means,
            })
            .collect(),
    }
}

/// One group on a random small support with consistent aggregates. The true
/// conditional means increase in covariate 0 when `monotone` is set, and the
/// dataset reports the subgroup mean for covariate 0 at its second value
/// when `finer` is set.
pub fn random_instance(rng: &mut ChaCha8Rng, levels: &[usize], monotone: bool, finer: bool) -> Instance {
    let support = product_support(levels);
    let k = support.len();
    let p = random_joint(rng, k, false);
    let mut c: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    if monotone {
        make_increasing(&support, 0, &mut c);
    }
    let lambda = random_weights(rng, k);
    let mut spec = spec_from(support, OutcomeRange::unit(), false, vec![(p, c)], None);
    spec.finer_cells.truncate(1);
    let dataset = spec.population_dataset(finer);
    Instance { spec, dataset, lambda }
}

/// Weights mixing single cells, contrasts and dense vectors.
pub fn random_weights(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut l = vec![0.0; k];
    match rng.random_range(0..3) {
        0 => l[rng.random_range(0..k)] = 1.0,
        1 => {
            let a = rng.random_range(0..k);
            let b = (a + rng.random_range(1..k)) % k;
            l[a] = 1.0;
            l[b] = -1.0;
        }
        _ => l.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0)),
    }
    l
}

/// Several groups with random joints and means over a random small support.
pub fn random_dataset(rng: &mut ChaCha8Rng, binary: bool, max_groups: usize) -> (JointSpec, AggregateDataset) {
    let levels = SMALL_SHAPES[rng.random_range(0..SMALL_SHAPES.len())];
    let support = product_support(levels);
    let k = support.len();
    let ng = rng.random_range(1..=max_groups);
    let groups = (0..ng)
        .map(|_| (random_joint(rng, k, true), (0..k).map(|_| rng.random::<f64>()).collect()))
        .collect();
    let shares = random_joint(rng, ng, false);
    let spec = spec_from(support, OutcomeRange::unit(), binary, groups, Some(shares));
    let ds = spec.population_dataset(false);
    (spec, ds)
}

pub fn quick_search() -> SearchOptions {
    SearchOptions {
        n_random_starts: 12,
        max_iters_per_start: 300,
        ..Default::default()
    }
}
