//! Resolving flags and config into a validated dataset and solver settings.

use std::collections::BTreeMap;
use std::path::PathBuf;

use aggbounds::{AggregateDataset, OutcomeRange, SearchOptions, ShapeConstraintSet, ShapeSpec};

use crate::args::{InputArgs, ParamArgs, RestrictionArgs, SearchArgs};
use crate::error::{CliError, CliResult};
use crate::input::{read_json, read_tables, validated, RunConfig, TableInputs};
use crate::params::{parse_contrast, parse_list, parse_monotone, parse_range};

pub fn load_config(input: &InputArgs) -> CliResult<RunConfig> {
    match &input.config {
        Some(p) => read_json(p),
        None => Ok(RunConfig::default()),
    }
}

pub fn load_dataset(input: &InputArgs, cfg: &RunConfig) -> CliResult<AggregateDataset> {
    let range = match &input.range {
        Some(r) => Some(parse_range(r)?),
        None => cfg.range.map(|(lo, hi)| OutcomeRange::new(lo, hi)).transpose()?,
    };
    let binary = input.binary || cfg.binary.unwrap_or(false);
    let renormalize = input.renormalize || cfg.renormalize.unwrap_or(false);
    let dataset_path = input.dataset.clone().or_else(|| cfg.dataset.clone());
    let mut ds = if let Some(p) = dataset_path {
        let mut ds: AggregateDataset = read_json(&p)?;
        if let Some(r) = range {
            ds.range = r;
        }
        ds.binary |= binary;
        ds
    } else {
        let pick = |flag: &Option<PathBuf>, conf: &Option<PathBuf>| flag.clone().or_else(|| conf.clone());
        let tables = TableInputs {
            groups: pick(&input.groups, &cfg.groups)
                .ok_or_else(|| CliError::input("no input: give --dataset, or --groups and --marginals"))?,
            marginals: pick(&input.marginals, &cfg.marginals)
                .ok_or_else(|| CliError::input("--groups needs a --marginals table"))?,
            support: pick(&input.support, &cfg.support),
            finer: pick(&input.finer, &cfg.finer),
        };
        read_tables(&tables, range.unwrap_or_else(OutcomeRange::unit), binary)?
    };
    ds = validated(ds, renormalize)?;
    Ok(ds)
}

pub fn lambda(params: &ParamArgs, cfg: &RunConfig, ds: &AggregateDataset) -> CliResult<Vec<f64>> {
    let k = ds.k();
    let l = if let Some(s) = &params.lambda {
        parse_list(s)?
    } else if let Some(e) = &params.contrast {
        parse_contrast(e, &ds.support)?
    } else if let Some(v) = &cfg.lambda {
        v.clone()
    } else if let Some(e) = &cfg.contrast {
        parse_contrast(e, &ds.support)?
    } else {
        return Err(CliError::input("no parameter: give --lambda or --contrast"));
    };
    if l.len() != k {
        return Err(CliError::input(format!("{} weights for {k} support points", l.len())));
    }
    if l.iter().any(|v| !v.is_finite()) {
        return Err(CliError::input("weights must be finite"));
    }
    Ok(l)
}

pub fn search_options(s: &SearchArgs, cfg: &RunConfig) -> CliResult<SearchOptions> {
    let d = SearchOptions::default();
    let opts = SearchOptions {
        n_random_starts: s.starts.or(cfg.starts).unwrap_or(d.n_random_starts),
        max_iters_per_start: s.iters.or(cfg.iters).unwrap_or(d.max_iters_per_start),
        convergence_tol: s.tol.or(cfg.tol).unwrap_or(d.convergence_tol),
        seed: s.seed.or(cfg.seed).unwrap_or(d.seed),
        ..d
    };
    opts.check()?;
    Ok(opts)
}

/// Shape restrictions from the file and the monotone flags. Monotone rows
/// apply to every group.
pub fn shape(r: &RestrictionArgs, cfg: &RunConfig, ds: &AggregateDataset) -> CliResult<Option<ShapeSpec>> {
    let from_file: Option<ShapeSpec> = match &r.shape {
        Some(p) => Some(read_json(p)?),
        None => cfg.shape.clone(),
    };
    let mut mono = ShapeConstraintSet::default();
    for m in r.monotone.iter().chain(&cfg.monotone) {
        mono.extend(parse_monotone(m, &ds.support)?);
    }
    let spec = match (from_file, mono.is_empty()) {
        (None, true) => None,
        (None, false) => Some(ShapeSpec::Shared(mono)),
        (Some(ShapeSpec::Shared(mut s)), _) => {
            s.extend(mono);
            Some(ShapeSpec::Shared(s))
        }
        (Some(ShapeSpec::PerGroup(mut m)), _) => {
            if !mono.is_empty() {
                for g in &ds.groups {
                    m.entry(g.id.clone()).or_default().extend(mono.clone());
                }
            }
            Some(ShapeSpec::PerGroup(m.into_iter().collect::<BTreeMap<_, _>>()))
        }
    };
    if let Some(s) = &spec {
        s.check(ds.k())?;
    }
    Ok(spec)
}

pub fn use_finer(r: &RestrictionArgs, cfg: &RunConfig) -> bool {
    r.use_finer || cfg.use_finer.unwrap_or(false)
}

pub fn out_dir(flag: &Option<PathBuf>, cfg: &RunConfig) -> Option<PathBuf> {
    flag.clone().or_else(|| cfg.out.clone())
}
