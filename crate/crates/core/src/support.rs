//! Known finite covariate support and the indexing between support points and
//! per-covariate values.
//!
//! Support points are stored in canonical order: lexicographic in the index of
//! each coordinate within its covariate's sorted distinct values, with the
//! first covariate varying slowest. For the binary product support on two
//! covariates this gives `(0,0), (0,1), (1,0), (1,1)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SupportRepr", into = "SupportRepr")]
pub struct CovariateSupport {
    names: Vec<String>,
    labels: Vec<String>,
    points: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    codes: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct SupportRepr {
    covariates: Vec<String>,
    points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl TryFrom<SupportRepr> for CovariateSupport {
    type Error = Error;

    fn try_from(r: SupportRepr) -> Result<Self> {
        let labels = r.labels.unwrap_or_else(|| default_labels(r.points.len()));
        CovariateSupport::with_labels(r.covariates, r.points, labels)
    }
}

impl From<CovariateSupport> for SupportRepr {
    fn from(s: CovariateSupport) -> Self {
        SupportRepr {
            covariates: s.names,
            points: s.points,
            labels: Some(s.labels),
        }
    }
}

fn default_labels(k: usize) -> Vec<String> {
    (1..=k).map(|i| i.to_string()).collect()
}

impl CovariateSupport {
    /// Builds a support from an explicit list of points. Covariates are named
    /// `x1..xL`.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let l = points.first().map_or(0, Vec::len);
        let names = (1..=l).map(|i| format!("x{i}")).collect();
        let labels = default_labels(points.len());
        Self::with_labels(names, points, labels)
    }

    pub fn with_names(names: Vec<String>, points: Vec<Vec<f64>>) -> Result<Self> {
        let labels = default_labels(points.len());
        Self::with_labels(names, points, labels)
    }

    /// Builds a support with covariate names and one label per point. Labels
    /// follow their points into canonical order.
    pub fn with_labels(
        names: Vec<String>,
        points: Vec<Vec<f64>>,
        labels: Vec<String>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidSupport("support needs at least one point".into()));
        }
        let l = names.len();
        if l == 0 {
            return Err(Error::InvalidSupport("support needs at least one covariate".into()));
        }
        if labels.len() != points.len() {
            return Err(Error::InvalidSupport(format!(
                "{} labels for {} points",
                labels.len(),
                points.len()
            )));
        }
        for p in &points {
            if p.len() != l {
                return Err(Error::InvalidSupport(format!(
                    "point {p:?} has {} coordinates, expected {l}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSupport(format!("point {p:?} is not finite")));
            }
        }

        let mut values: Vec<Vec<f64>> = (0..l)
            .map(|j| {
                let mut v: Vec<f64> = points.iter().map(|p| p[j]).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            })
            .collect();
        // -0.0 and 0.0 compare unequal under total_cmp but are the same value
        for v in &mut values {
            v.dedup_by(|a, b| a == b);
        }

        let mut rows: Vec<(Vec<usize>, Vec<f64>, String)> = points
            .into_iter()
            .zip(labels)
            .map(|(p, label)| {
                let code = p
                    .iter()
                    .enumerate()
                    .map(|(j, x)| values[j].iter().position(|v| v == x).expect("value present"))
                    .collect();
                (code, p, label)
            })
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        for w in rows.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidSupport(format!("duplicate point {:?}", w[0].1)));
            }
        }

        let mut codes = Vec::with_capacity(rows.len());
        let mut pts = Vec::with_capacity(rows.len());
        let mut lbls = Vec::with_capacity(rows.len());
        for (c, p, lb) in rows {
            codes.push(c);
            pts.push(p);
            lbls.push(lb);
        }
        Ok(CovariateSupport {
            names,
            labels: lbls,
            points: pts,
            values,
            codes,
        })
    }

    /// Full product of the given per-covariate value lists.
    pub fn product(names: Vec<String>, values: &[Vec<f64>]) -> Result<Self> {
        let mut points: Vec<Vec<f64>> = vec![Vec::new()];
        for vals in values {
            let mut next = Vec::with_capacity(points.len() * vals.len());
            for p in &points {
                for v in vals {
                    let mut q = p.clone();
                    q.push(*v);
                    next.push(q);
                }
            }
            points = next;
        }
        Self::with_names(names, points)
    }

    /// `{0,1}^L` with covariates named `x1..xL`.
    pub fn binary_product(l: usize) -> Result<Self> {
        let names = (1..=l).map(|i| format!("x{i}")).collect();
        Self::product(names, &vec![vec![0.0, 1.0]; l])
    }

    pub fn num_covariates(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k]
    }

    /// Sorted distinct values of covariate `l`.
    pub fn values(&self, l: usize) -> &[f64] {
        &self.values[l]
    }

    pub fn per_covariate_values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Index of covariate `name`, also accepting a 1-based position.
    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        if let Some(i) = self.names.iter().position(|n| n == name) {
            return Some(i);
        }
        name.parse::<usize>()
            .ok()
            .filter(|i| (1..=self.names.len()).contains(i))
            .map(|i| i - 1)
    }

    pub fn value_index(&self, l: usize, value: f64) -> Option<usize> {
        self.values.get(l)?.iter().position(|v| *v == value)
    }

    /// Per-covariate value indices of point `k`.
    pub fn codes(&self, k: usize) -> &[usize] {
        &self.codes[k]
    }

    /// Canonical index of the support point with the given coordinates.
    pub fn flat_index(&self, values: &[f64]) -> Result<usize> {
        if values.len() != self.num_covariates() {
            return Err(Error::UnknownPoint(values.to_vec()));
        }
        let code: Option<Vec<usize>> = values
            .iter()
            .enumerate()
            .map(|(l, v)| self.value_index(l, *v))
            .collect();
        let code = code.ok_or_else(|| Error::UnknownPoint(values.to_vec()))?;
        self.codes
            .binary_search_by(|c| c.as_slice().cmp(code.as_slice()))
            .map_err(|_| Error::UnknownPoint(values.to_vec()))
    }

    pub fn support_values(&self, k: usize) -> &[f64] {
        &self.points[k]
    }

    /// Number of rows in the indicator matrix: one per (covariate, value).
    pub fn num_marginal_rows(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    /// `(covariate, value index)` for each indicator row, in row order.
    pub fn marginal_rows(&self) -> Vec<(usize, usize)> {
        self.values
            .iter()
            .enumerate()
            .flat_map(|(l, vs)| (0..vs.len()).map(move |v| (l, v)))
            .collect()
    }

    /// Row offset of covariate `l`'s block in the indicator matrix.
    pub fn row_offset(&self, l: usize) -> usize {
        self.values[..l].iter().map(Vec::len).sum()
    }

    pub fn row_of(&self, l: usize, value_index: usize) -> usize {
        self.row_offset(l) + value_index
    }

    /// Dense indicator rows: entry `[(l, v)][j]` is 1 when point `j` has
    /// value `v` in covariate `l`.
    pub fn indicator_rows(&self) -> Vec<Vec<f64>> {
        let mut rows = vec![vec![0.0; self.len()]; self.num_marginal_rows()];
        for (j, code) in self.codes.iter().enumerate() {
            for (l, v) in code.iter().enumerate() {
                rows[self.row_of(l, *v)][j] = 1.0;
            }
        }
        rows
    }

    pub fn indicator_matrix(&self) -> DMatrix<f64> {
        let rows = self.indicator_rows();
        DMatrix::from_fn(rows.len(), self.len(), |i, j| rows[i][j])
    }

    /// For each indicator row, how many support points carry that value.
    pub fn row_multiplicities(&self) -> Vec<usize> {
        self.indicator_rows()
            .iter()
            .map(|r| r.iter().filter(|x| **x != 0.0).count())
            .collect()
    }

    /// Support points in a single covariate's value-`v` cell.
    pub fn points_with(&self, l: usize, value_index: usize) -> impl Iterator<Item = usize> + '_ {
        self.codes
            .iter()
            .enumerate()
            .filter(move |(_, c)| c[l] == value_index)
            .map(|(k, _)| k)
    }
}
