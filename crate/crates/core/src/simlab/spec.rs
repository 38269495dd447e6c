//! Data-generating processes and the three exercise presets.

use serde::{Deserialize, Serialize};

use crate::dataset::{AggregateDataset, FinerMoment, GroupRecord, MarginalEntry, OutcomeRange, SUM_TOL};
use crate::error::{Error, Result};
use crate::support::CovariateSupport;

/// Bumped whenever the preset construction changes.
pub const SPEC_VERSION: u32 = 1;

/// One group of a data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub id: String,
    pub share: f64,
    /// `P[X = x_k | G = g]`
    pub joint: Vec<f64>,
    /// `E[Y | X = x_k, G = g]`
    pub cond_means: Vec<f64>,
}

impl GroupSpec {
    pub fn y_mean(&self) -> f64 {
        self.joint.iter().zip(&self.cond_means).map(|(p, c)| p * c).sum()
    }
}

/// A full joint distribution of `(G, X, E[Y | X, G])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub version: u32,
    pub name: String,
    pub support: CovariateSupport,
    pub range: OutcomeRange,
    pub binary: bool,
    pub n_per_group: u64,
    /// `(covariate, value)` cells whose subgroup means are reported.
    pub finer_cells: Vec<(usize, f64)>,
    pub groups: Vec<GroupSpec>,
}

impl JointSpec {
    pub fn k(&self) -> usize {
        self.support.len()
    }

    pub fn check(&self) -> Result<()> {
        let k = self.k();
        if self.groups.is_empty() {
            return Err(Error::InvalidInput("spec has no groups".into()));
        }
        let total: f64 = self.groups.iter().map(|g| g.share).sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidInput(format!("group shares sum to {total}")));
        }
        for g in &self.groups {
            if g.joint.len() != k || g.cond_means.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "group {} has {} cells and {} means for {k} support points",
                    g.id,
                    g.joint.len(),
                    g.cond_means.len()
                )));
            }
            let s: f64 = g.joint.iter().sum();
            if g.joint.iter().any(|p| !(*p >= 0.0)) || (s - 1.0).abs() > SUM_TOL {
                return Err(Error::InvalidInput(format!("group {} joint is not a distribution", g.id)));
            }
            if g.cond_means.iter().any(|c| !self.range.contains(*c)) {
                return Err(Error::InvalidInput(format!("group {} has a mean outside the range", g.id)));
            }
        }
        for &(l, v) in &self.finer_cells {
            if l >= self.support.num_covariates() || self.support.value_index(l, v).is_none() {
                return Err(Error::InvalidInput(format!("finer cell ({l}, {v}) not in support")));
            }
        }
        Ok(())
    }

    /// True value of `sum_g share_g sum_k lambda_k E[Y | X = x_k, G = g]`.
    pub fn parameter(&self, lambda: &[f64]) -> f64 {
        self.groups
            .iter()
            .map(|g| g.share * lambda.iter().zip(&g.cond_means).map(|(l, c)| l * c).sum::<f64>())
            .sum()
    }

    /// The aggregates an infinite sample would report.
    pub fn population_dataset(&self, with_finer: bool) -> AggregateDataset {
        let s = &self.support;
        let groups = self
            .groups
            .iter()
            .map(|g| {
                let mut marginals = Vec::new();
                for (l, vi) in s.marginal_rows() {
                    let prob = s.points_with(l, vi).map(|j| g.joint[j]).sum();
                    marginals.push(MarginalEntry {
                        covariate: l,
                        value: s.values(l)[vi],
                        prob,
                    });
                }
                let mut finer = Vec::new();
                if with_finer {
                    for &(l, v) in &self.finer_cells {
                        let vi = s.value_index(l, v).expect("checked finer cell");
                        let (mut mass, mut ysum) = (0.0, 0.0);
                        for j in s.points_with(l, vi) {
                            mass += g.joint[j];
                            ysum += g.joint[j] * g.cond_means[j];
                        }
                        if mass > 0.0 {
                            finer.push(FinerMoment {
                                covariate: l,
                                value: v,
                                y_mean: self.range.clamp(ysum / mass),
                                y_se: None,
                                count: None,
                            });
                        }
                    }
                }
                GroupRecord {
                    id: g.id.clone(),
                    share: g.share,
                    count: Some(self.n_per_group),
                    y_mean: self.range.clamp(g.y_mean()),
                    y_se: None,
                    marginals,
                    finer,
                }
            })
            .collect();
        AggregateDataset {
            support: self.support.clone(),
            range: self.range,
            binary: self.binary,
            groups,
        }
    }

    /// Keeps the first `g` groups with shares rescaled to sum to one.
    pub fn truncated(&self, g: usize) -> JointSpec {
        let mut out = self.clone();
        out.groups.truncate(g.max(1));
        let total: f64 = out.groups.iter().map(|g| g.share).sum();
        for grp in &mut out.groups {
            grp.share /= total;
        }
        out
    }
}

pub const PRESET_GROUPS: usize = 50;
pub const PRESET_N_PER_GROUP: u64 = 1300;

/// Low-discrepancy sequence in `[0, 1)`.
fn frac_seq(i: usize, step: f64) -> f64 {
    ((i + 1) as f64 * step).fract()
}

/// Covariate order is `(white, econ, ell)`, all binary, so cell
/// `4 white + 2 econ + ell`.
fn cell(w: usize, e: usize, l: usize) -> usize {
    4 * w + 2 * e + l
}

/// Shared conditional means, identical in every preset.
fn preset_cond_means(g: usize) -> Vec<f64> {
    let offset = 0.05 * (2.0 * frac_seq(g, 0.381_966_011_250_105) - 1.0);
    let mut c = vec![0.0; 8];
    for w in 0..2 {
        for e in 0..2 {
            for l in 0..2 {
                c[cell(w, e, l)] =
                    0.45 + 0.25 * w as f64 - 0.20 * e as f64 - 0.15 * l as f64 + offset;
            }
        }
    }
    c
}

/// Joint over the eight cells with `P[white] = pw`, `P[econ] = pe` (negatively
/// associated), and `P[ell] = pl` concentrated among non-white and
/// economically disadvantaged students.
fn preset_joint(pw: f64, pe: f64, pl: f64) -> Vec<f64> {
    let dep = 0.5 * (pw * pe).min((1.0 - pw) * (1.0 - pe));
    let mut we = [[0.0; 2]; 2];
    we[1][1] = pw * pe - dep;
    we[1][0] = pw * (1.0 - pe) + dep;
    we[0][1] = (1.0 - pw) * pe + dep;
    we[0][0] = (1.0 - pw) * (1.0 - pe) - dep;
    let tilt = [[1.5, 2.0], [0.5, 1.0]];
    let avg: f64 = (0..2).flat_map(|w| (0..2).map(move |e| (w, e))).map(|(w, e)| we[w][e] * tilt[w][e]).sum();
    let mut p = vec![0.0; 8];
    for w in 0..2 {
        for e in 0..2 {
            let ell = (pl * tilt[w][e] / avg).min(1.0);
            p[cell(w, e, 1)] = we[w][e] * ell;
            p[cell(w, e, 0)] = we[w][e] * (1.0 - ell);
        }
    }
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

/// Per-group `(P[white], P[econ], P[ell])` of exercise 1.
fn exercise_one_profile(g: usize) -> (f64, f64, f64) {
    let u = frac_seq(g, 0.618_033_988_749_895);
    let u2 = frac_seq(g, 0.414_213_562_373_095);
    let u3 = frac_seq(g, 0.732_050_807_568_877);
    let pw = 0.3 + 0.65 * u.sqrt();
    let t = (pw - 0.3) / 0.65;
    let pe = 0.15 + 0.55 * (1.0 - (0.7 * t + 0.3 * u2));
    let pl = 0.02 + 0.23 * u3 * u3;
    (pw, pe, pl)
}

/// One of the three simulation exercises: 50 groups of 1300, three binary
/// covariates `(white, econ, ell)`, a binary outcome, and the same
/// conditional means in every exercise.
///
/// 1. `P[white]` spread over `[0.3, 0.95]` and skewed high, `P[econ]`
///    negatively related to it, `P[ell]` small.
/// 2. Every marginal close to 0 or 1.
/// 3. Exercise 1's econ and ell marginals, with half the groups almost all
///    white and half almost all non-white.
pub fn exercise_preset(id: u8) -> Result<JointSpec> {
    if !(1..=3).contains(&id) {
        return Err(Error::InvalidInput(format!("no exercise preset {id}; choose 1, 2 or 3")));
    }
    let points = CovariateSupport::binary_product(3)?.points().to_vec();
    let labels = points
        .iter()
        .map(|p| p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
        .collect();
    let support = CovariateSupport::with_labels(vec!["white".into(), "econ".into(), "ell".into()], points, labels)?;
    let groups = (0..PRESET_GROUPS)
        .map(|g| {
            let (pw1, pe1, pl1) = exercise_one_profile(g);
            let u = frac_seq(g, 0.618_033_988_749_895);
            let (pw, pe, pl) = match id {
                1 => (pw1, pe1, pl1),
                2 => (
                    0.93 + 0.06 * u,
                    0.01 + 0.07 * frac_seq(g, 0.414_213_562_373_095),
                    0.005 + 0.025 * frac_seq(g, 0.732_050_807_568_877),
                ),
                _ => {
                    let pw = if g % 2 == 0 { 0.92 + 0.06 * u } else { 0.02 + 0.06 * u };
                    (pw, pe1, pl1)
                }
            };
            GroupSpec {
                id: format!("g{:02}", g + 1),
                share: 1.0 / PRESET_GROUPS as f64,
                joint: preset_joint(pw, pe, pl),
                cond_means: preset_cond_means(g),
            }
        })
        .collect();
    let spec = JointSpec {
        version: SPEC_VERSION,
        name: format!("exercise-{id}"),
        support,
        range: OutcomeRange::unit(),
        binary: true,
        n_per_group: PRESET_N_PER_GROUP,
        finer_cells: vec![(0, 1.0), (1, 0.0), (2, 0.0)],
        groups,
    };
    spec.check()?;
    Ok(spec)
}

/// Weight vector picking the `(white = 1, econ = 0, ell = 0)` cell.
pub fn preset_focus_cell() -> usize {
    cell(1, 0, 0)
}

/// Weight vector for `(white = 1, econ = 0, ell = 0)` minus
/// `(white = 0, econ = 0, ell = 0)`.
pub fn preset_white_gap() -> Vec<f64> {
    let mut l = vec![0.0; 8];
    l[cell(1, 0, 0)] = 1.0;
    l[cell(0, 0, 0)] = -1.0;
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{validate_dataset, ValidationOptions};

    fn marginal(spec: &JointSpec, g: usize, l: usize) -> f64 {
        spec.support
            .points_with(l, 1)
            .map(|j| spec.groups[g].joint[j])
            .sum()
    }

    #[test]
    fn presets_are_valid() {
        for id in 1..=3 {
            let s = exercise_preset(id).unwrap();
            assert_eq!(s.groups.len(), 50);
            assert_eq!(s.k(), 8);
            let ds = s.population_dataset(true);
            validate_dataset(ds, &ValidationOptions::default()).unwrap();
        }
        assert!(exercise_preset(4).is_err());
    }

    #[test]
    fn presets_share_conditional_means() {
        let a = exercise_preset(1).unwrap();
        for id in 2..=3 {
            let b = exercise_preset(id).unwrap();
            for (x, y) in a.groups.iter().zip(&b.groups) {
                assert_eq!(x.cond_means, y.cond_means);
            }
        }
    }

    #[test]
    fn marginal_profiles() {
        let (a, b, c) = (
            exercise_preset(1).unwrap(),
            exercise_preset(2).unwrap(),
            exercise_preset(3).unwrap(),
        );
        let spread = |s: &JointSpec| {
            let mut t = 0.0;
            for g in 0..50 {
                for l in 0..3 {
                    t += (marginal(s, g, l) - 0.5).abs();
                }
            }
            t / 150.0
        };
        assert!(spread(&b) > spread(&a));
        for g in 0..50 {
            let w = marginal(&c, g, 0);
            assert!(!(0.1..=0.9).contains(&w));
            assert!((marginal(&c, g, 1) - marginal(&a, g, 1)).abs() < 0.02);
        }
    }

    #[test]
    fn population_aggregates_reproduce_spec() {
        let s = exercise_preset(1).unwrap();
        let ds = s.population_dataset(true);
        for (g, rec) in s.groups.iter().zip(&ds.groups) {
            assert!((rec.y_mean - g.y_mean()).abs() < 1e-15);
            let white: f64 = [4, 5, 6, 7].iter().map(|&j| g.joint[j]).sum();
            assert!((rec.marginal(0, 1.0).unwrap() - white).abs() < 1e-15);
            assert_eq!(rec.finer.len(), 3);
        }
    }
}
