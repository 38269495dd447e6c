//! Reading datasets from CSV tables or JSON, and the JSON run configuration.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use aggbounds::{
    AggregateDataset, CovariateSupport, FinerMoment, GroupRecord, MarginalEntry, OutcomeRange, ShapeSpec,
    ValidationOptions,
};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{io_err, CliError, CliResult};

/// Settings a JSON config file may provide. Command-line flags take
/// precedence over every field.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub groups: Option<PathBuf>,
    pub marginals: Option<PathBuf>,
    pub support: Option<PathBuf>,
    pub finer: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub lambda: Option<Vec<f64>>,
    pub contrast: Option<String>,
    pub range: Option<(f64, f64)>,
    pub binary: Option<bool>,
    pub renormalize: Option<bool>,
    pub alpha: Option<Vec<f64>>,
    pub starts: Option<usize>,
    pub iters: Option<usize>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub shape: Option<ShapeSpec>,
    pub monotone: Vec<String>,
    pub use_finer: Option<bool>,
    pub shares_known: Option<bool>,
    pub out: Option<PathBuf>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let f = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(std::io::BufReader::new(f)).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let wrap = |source| CliError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(wrap)?;
    rdr.deserialize().collect::<Result<Vec<T>, _>>().map_err(wrap)
}

#[derive(Debug, Deserialize)]
struct GroupRow {
    group_id: String,
    #[serde(default)]
    count: Option<u64>,
    y_mean: f64,
    #[serde(default)]
    y_se: Option<f64>,
    #[serde(default)]
    share: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct MarginalRow {
    group_id: String,
    covariate: String,
    value: f64,
    prob: f64,
}

#[derive(Debug, Deserialize)]
struct FinerRow {
    group_id: String,
    covariate: String,
    value: f64,
    y_mean: f64,
    #[serde(default)]
    y_se: Option<f64>,
    #[serde(default)]
    count: Option<u64>,
}

/// `point_id,<covariate>,...` with one row per support point.
fn read_support(path: &Path) -> CliResult<CovariateSupport> {
    let wrap = |source| CliError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(wrap)?;
    let header = rdr.headers().map_err(wrap)?.clone();
    if header.len() < 2 {
        return Err(CliError::input(format!(
            "{}: expected a point_id column followed by one column per covariate",
            path.display()
        )));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let (mut labels, mut points) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(wrap)?;
        labels.push(rec.get(0).unwrap_or_default().to_string());
        let point = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>().map_err(|_| {
                    CliError::input(format!("{}: row {}: value {v:?} is not a number", path.display(), line + 2))
                })
            })
            .collect::<CliResult<Vec<f64>>>()?;
        points.push(point);
    }
    Ok(CovariateSupport::with_labels(names, points, labels)?)
}

/// The full product of the values each covariate takes in the marginals
/// table, covariates in order of first appearance.
fn support_from_marginals(rows: &[MarginalRow]) -> CliResult<CovariateSupport> {
    let mut names: Vec<String> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let l = match names.iter().position(|n| *n == r.covariate) {
            Some(l) => l,
            None => {
                names.push(r.covariate.clone());
                values.push(Vec::new());
                names.len() - 1
            }
        };
        if !values[l].contains(&r.value) {
            values[l].push(r.value);
        }
    }
    if names.is_empty() {
        return Err(CliError::input("marginals table is empty"));
    }
    values.iter_mut().for_each(|v| v.sort_by(f64::total_cmp));
    let product = CovariateSupport::product(names.clone(), &values)?;
    // label each point by its values so `cell(1,0)` reads the same either way
    let labels = product
        .points()
        .iter()
        .map(|p| p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
        .collect();
    Ok(CovariateSupport::with_labels(names, product.points().to_vec(), labels)?)
}

fn covariate_index(support: &CovariateSupport, name: &str, table: &str, group: &str) -> CliResult<usize> {
    support
        .covariate_index(name)
        .or_else(|| name.parse::<usize>().ok().filter(|l| *l < support.num_covariates()))
        .ok_or_else(|| CliError::input(format!("{table}: group {group}: unknown covariate {name:?}")))
}

#[derive(Debug, Clone, Default)]
pub struct TableInputs {
    pub groups: PathBuf,
    pub marginals: PathBuf,
    pub support: Option<PathBuf>,
    pub finer: Option<PathBuf>,
}

/// Assembles a dataset from the CSV tables. Shares come from the `share`
/// column when every group has one, otherwise from the counts.
pub fn read_tables(t: &TableInputs, range: OutcomeRange, binary: bool) -> CliResult<AggregateDataset> {
    let groups: Vec<GroupRow> = read_csv(&t.groups)?;
    let marg: Vec<MarginalRow> = read_csv(&t.marginals)?;
    let support = match &t.support {
        Some(p) => read_support(p)?,
        None => support_from_marginals(&marg)?,
    };
    let finer: Vec<FinerRow> = match &t.finer {
        Some(p) => read_csv(p)?,
        None => Vec::new(),
    };
    if groups.is_empty() {
        return Err(CliError::input(format!("{}: no groups", t.groups.display())));
    }

    let shares: Vec<f64> = if groups.iter().all(|g| g.share.is_some()) {
        groups.iter().map(|g| g.share.unwrap_or_default()).collect()
    } else {
        let counts: Option<Vec<u64>> = groups.iter().map(|g| g.count).collect();
        let counts = counts.ok_or_else(|| {
            CliError::input(format!(
                "{}: every group needs a count (or every group a share) to form group shares",
                t.groups.display()
            ))
        })?;
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(CliError::input(format!("{}: counts sum to zero", t.groups.display())));
        }
        counts.iter().map(|c| *c as f64 / total as f64).collect()
    };

    let mut records: Vec<GroupRecord> = Vec::with_capacity(groups.len());
    let mut index = BTreeMap::new();
    for (g, share) in groups.iter().zip(shares) {
        index.insert(g.group_id.clone(), records.len());
        records.push(GroupRecord {
            id: g.group_id.clone(),
            share,
            count: g.count,
            y_mean: g.y_mean,
            y_se: g.y_se,
            marginals: Vec::new(),
            finer: Vec::new(),
        });
    }
    let lookup = |table: &Path, id: &str| -> CliResult<usize> {
        index
            .get(id)
            .copied()
            .ok_or_else(|| CliError::input(format!("{}: group {id:?} is not in the groups table", table.display())))
    };
    for r in &marg {
        let i = lookup(&t.marginals, &r.group_id)?;
        let l = covariate_index(&support, &r.covariate, &t.marginals.display().to_string(), &r.group_id)?;
        records[i].marginals.push(MarginalEntry {
            covariate: l,
            value: r.value,
            prob: r.prob,
        });
    }
    if let Some(path) = &t.finer {
        for r in &finer {
            let i = lookup(path, &r.group_id)?;
            let l = covariate_index(&support, &r.covariate, &path.display().to_string(), &r.group_id)?;
            records[i].finer.push(FinerMoment {
                covariate: l,
                value: r.value,
                y_mean: r.y_mean,
                y_se: r.y_se,
                count: r.count,
            });
        }
    }
    Ok(AggregateDataset {
        support,
        range,
        binary,
        groups: records,
    })
}

/// Checks a dataset, turning violations into one error listing all of them.
pub fn validated(ds: AggregateDataset, renormalize: bool) -> CliResult<AggregateDataset> {
    aggbounds::validate_dataset(ds, &ValidationOptions { renormalize }).map_err(|v| {
        let lines: Vec<String> = v.iter().map(|x| format!("  {x}")).collect();
        CliError::input(format!("dataset failed validation:\n{}", lines.join("\n")))
    })
}
