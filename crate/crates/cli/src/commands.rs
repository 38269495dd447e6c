use std::path::PathBuf;

use aggbounds::bounds::identified_set;
use aggbounds::inference::{ci_identified_sets, CiOptions};
use aggbounds::simlab::spec::{exercise_preset, preset_focus_cell, JointSpec};
use aggbounds::simlab::study::{consistency_study, coverage_study, StudyOptions};
use aggbounds::simlab::{brute_force_bounds, OracleOptions};
use aggbounds::{frechet_identified_set, joint_known_range, AggregateDataset, BoundResult, Witness};
use serde::Serialize;

use crate::args::*;
use crate::context::*;
use crate::error::{CliError, CliResult};
use crate::input::read_json;
use crate::params::parse_list;
use crate::report::*;

fn emit(format: Format, text: String, table: &Table, json: CliResult<String>) -> CliResult<()> {
    match format {
        Format::Text => print!("{text}"),
        Format::Csv => print!("{}", table.to_csv()?),
        Format::Json => println!("{}", json?),
    }
    Ok(())
}

#[derive(Serialize)]
struct GroupRow<'a> {
    group: &'a str,
    share: f64,
    lower: f64,
    upper: f64,
    chart_dim: usize,
    min_slack: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness_lower: Option<&'a Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness_upper: Option<&'a Witness>,
}

#[derive(Serialize)]
struct BoundsReport<'a> {
    lambda: &'a [f64],
    lower: f64,
    upper: f64,
    groups: Vec<GroupRow<'a>>,
    warnings: Vec<String>,
}

fn slack_warnings(r: &BoundResult) -> Vec<String> {
    r.per_group
        .iter()
        .filter(|g| g.min_slack > aggbounds::feasible::SLACK_TOL)
        .map(|g| {
            format!(
                "group {}: marginals are inconsistent with the support (slack {:.3e}); bounds use the closest joints",
                g.group, g.min_slack
            )
        })
        .collect()
}

fn bounds_table(r: &BoundResult) -> Table {
    let mut t = Table::new(&["group", "share", "lower", "upper", "chart_dim", "min_slack"]);
    for (g, s) in r.per_group.iter().zip(&r.shares) {
        t.push(vec![g.group.clone(), num(*s), num(g.lower), num(g.upper), g.chart_dim.to_string(), num(g.min_slack)]);
    }
    t
}

pub fn bounds(a: &BoundsArgs) -> CliResult<()> {
    let cfg = load_config(&a.input)?;
    let ds = load_dataset(&a.input, &cfg)?;
    let lam = lambda(&a.params, &cfg, &ds)?;
    let opts = search_options(&a.search, &cfg)?;
    let sh = shape(&a.restrict, &cfg, &ds)?;
    let finer = use_finer(&a.restrict, &cfg);
    let r = identified_set(&ds, &lam, sh.as_ref(), finer, &opts)?;
    let warnings = slack_warnings(&r);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let report = BoundsReport {
        lambda: &lam,
        lower: r.lower,
        upper: r.upper,
        groups: r
            .per_group
            .iter()
            .zip(&r.shares)
            .map(|(g, s)| GroupRow {
                group: &g.group,
                share: *s,
                lower: g.lower,
                upper: g.upper,
                chart_dim: g.chart_dim,
                min_slack: g.min_slack,
                witness_lower: a.witnesses.then_some(&g.witness_lower),
                witness_upper: a.witnesses.then_some(&g.witness_upper),
            })
            .collect(),
        warnings,
    };
    let table = bounds_table(&r);
    if let Some(dir) = out_dir(&a.output.out, &cfg) {
        ensure_dir(&dir)?;
        write_json(&dir.join("bounds.json"), &report)?;
        table.write_csv(&dir.join("groups.csv"))?;
        write_json(&dir.join("dataset.json"), &ds)?;
    }
    let text = format!("bounds [{:.6}, {:.6}] over {} groups\n", r.lower, r.upper, r.per_group.len());
    emit(a.output.format, text, &table, to_json(&report))
}

pub fn frechet(a: &FrechetArgs) -> CliResult<()> {
    let cfg = load_config(&a.input)?;
    let ds = load_dataset(&a.input, &cfg)?;
    if !ds.binary {
        return Err(CliError::input("Fréchet bounds need a binary outcome: pass --binary"));
    }
    let lam = lambda(&a.params, &cfg, &ds)?;
    if shape(&a.restrict, &cfg, &ds)?.is_some() || use_finer(&a.restrict, &cfg) {
        eprintln!("warning: shape and subgroup restrictions are ignored; the sharp bounds lie inside these");
    }
    let r = frechet_identified_set(&ds, &lam)?;
    let mut t = Table::new(&["group", "share", "lower", "upper"]);
    for (g, rec) in r.per_group.iter().zip(&ds.groups) {
        t.push(vec![g.group.clone(), num(rec.share), num(g.lower), num(g.upper)]);
    }
    if let Some(dir) = out_dir(&a.output.out, &cfg) {
        ensure_dir(&dir)?;
        write_json(&dir.join("frechet.json"), &r)?;
        t.write_csv(&dir.join("frechet.csv"))?;
    }
    let text = format!("Fréchet bounds [{:.6}, {:.6}] over {} groups\n", r.lower, r.upper, r.per_group.len());
    emit(a.output.format, text, &t, to_json(&r))
}

#[derive(Serialize)]
struct CiSummary {
    alpha: f64,
    m: usize,
    level: f64,
    lower: f64,
    upper: f64,
}

pub fn ci(a: &CiArgs) -> CliResult<()> {
    let cfg = load_config(&a.input)?;
    let ds = load_dataset(&a.input, &cfg)?;
    let lam = lambda(&a.params, &cfg, &ds)?;
    let search = search_options(&a.search, &cfg)?;
    let sh = shape(&a.restrict, &cfg, &ds)?;
    let finer = use_finer(&a.restrict, &cfg);
    let alphas = match &a.alpha {
        Some(s) => parse_list(s)?,
        None => cfg.alpha.clone().unwrap_or_else(|| vec![0.05]),
    };
    let opts = CiOptions {
        search,
        shares_known: a.shares_known || cfg.shares_known.unwrap_or(false),
    };
    let (point, reports) = ci_identified_sets(&ds, &lam, &alphas, sh.as_ref(), finer, &opts).map_err(|e| match e {
        aggbounds::Error::MissingData { group, what } => CliError::input(format!(
            "group {group}: missing {what}; confidence sets need sample counts, and standard errors for non-binary means"
        )),
        other => other.into(),
    })?;
    for w in reports.iter().flat_map(|r| &r.warnings) {
        eprintln!("warning: {w}");
    }
    let mut summary = Table::new(&["alpha", "m", "level", "lower", "upper"]);
    let mut intervals = Table::new(&["alpha", "group", "kind", "covariate", "value", "estimate", "lo", "hi", "method"]);
    for r in &reports {
        summary.push(vec![num(r.alpha), r.m.to_string(), num(r.level), num(r.d_ci.0), num(r.d_ci.1)]);
        for i in &r.intervals {
            intervals.push(vec![
                num(r.alpha),
                i.group.clone(),
                serde_json::to_value(i.kind).map(|v| v.as_str().unwrap_or_default().to_string()).unwrap_or_default(),
                i.covariate.map(|c| ds.support.names()[c].clone()).unwrap_or_default(),
                opt_num(i.value),
                num(i.estimate),
                num(i.lo),
                num(i.hi),
                serde_json::to_value(i.method).map(|v| v.as_str().unwrap_or_default().to_string()).unwrap_or_default(),
            ]);
        }
    }
    if let Some(dir) = out_dir(&a.output.out, &cfg) {
        ensure_dir(&dir)?;
        write_json(&dir.join("ci.json"), &reports)?;
        intervals.write_csv(&dir.join("intervals.csv"))?;
        summary.write_csv(&dir.join("ci_summary.csv"))?;
        write_json(&dir.join("dataset.json"), &ds)?;
    }
    let mut text = format!("estimate [{:.6}, {:.6}]\n", point.lower, point.upper);
    for r in &reports {
        text.push_str(&format!(
            "alpha {}: [{:.6}, {:.6}]  (M = {}, per-interval level {:.6})\n",
            r.alpha, r.d_ci.0, r.d_ci.1, r.m, r.level
        ));
    }
    let json: Vec<CiSummary> = reports
        .iter()
        .map(|r| CiSummary {
            alpha: r.alpha,
            m: r.m,
            level: r.level,
            lower: r.d_ci.0,
            upper: r.d_ci.1,
        })
        .collect();
    emit(a.output.format, text, &summary, to_json(&json))
}

fn load_spec(a: &SimulateArgs) -> CliResult<JointSpec> {
    let spec = match (&a.spec, a.preset) {
        (Some(p), _) => {
            let s: JointSpec = read_json(p)?;
            s.check()?;
            s
        }
        (None, Some(id)) => exercise_preset(id)?,
        (None, None) => return Err(CliError::input("give --preset 1|2|3 or --spec FILE")),
    };
    Ok(match a.groups {
        Some(g) if g < spec.groups.len() => spec.truncated(g),
        _ => spec,
    })
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let spec = load_spec(a)?;
    let search = search_options(&a.search, &Default::default())?;
    let lam = if a.params.lambda.is_none() && a.params.contrast.is_none() && spec.k() == 8 && a.preset.is_some() {
        let mut l = vec![0.0; 8];
        l[preset_focus_cell()] = 1.0;
        l
    } else {
        let ds = spec.population_dataset(false);
        lambda(&a.params, &Default::default(), &ds)?
    };
    let opts = StudyOptions {
        seed: search.seed,
        search,
        use_finer: a.use_finer,
        shares_known: !a.shares_estimated,
    };
    match a.study {
        Study::Coverage => {
            let n = a.n_per_group.unwrap_or(spec.n_per_group);
            let r = coverage_study(&spec, n, a.reps, a.alpha, &lam, &opts)?;
            let mut t = Table::new(&["rep", "seed", "est_lower", "est_upper", "ci_lower", "ci_upper", "covered", "bound_error"]);
            for o in &r.reps {
                t.push(vec![
                    o.rep.to_string(),
                    o.seed.to_string(),
                    num(o.estimate.0),
                    num(o.estimate.1),
                    num(o.ci.0),
                    num(o.ci.1),
                    o.covered.to_string(),
                    num(o.bound_error),
                ]);
            }
            #[derive(Serialize)]
            struct Summary<'a> {
                spec: &'a str,
                n_per_group: u64,
                reps: usize,
                alpha: f64,
                population: (f64, f64),
                coverage_rate: f64,
                bound_error: &'a aggbounds::simlab::study::ErrorStats,
            }
            let s = Summary {
                spec: &r.spec,
                n_per_group: n,
                reps: r.reps.len(),
                alpha: r.alpha,
                population: r.population,
                coverage_rate: r.coverage_rate,
                bound_error: &r.bound_error,
            };
            if let Some(dir) = &a.output.out {
                ensure_dir(dir)?;
                t.write_csv(&dir.join("reps.csv"))?;
                write_json(&dir.join("summary.json"), &s)?;
            }
            let text = format!(
                "{}: population [{:.6}, {:.6}], coverage {:.3} over {} reps, max bound error {:.4}\n",
                r.spec,
                r.population.0,
                r.population.1,
                r.coverage_rate,
                r.reps.len(),
                r.bound_error.max
            );
            emit(a.output.format, text, &t, to_json(&s))
        }
        Study::Consistency => {
            let sizes: Vec<u64> = parse_list(&a.sizes)?
                .into_iter()
                .map(|v| if v >= 1.0 && v.fract() == 0.0 { Ok(v as u64) } else { Err(CliError::input(format!("sample size {v} is not a positive integer"))) })
                .collect::<CliResult<_>>()?;
            let r = consistency_study(&spec, &sizes, a.reps, &lam, &opts)?;
            let mut t = Table::new(&["n_per_group", "median", "mean", "max"]);
            for row in &r.rows {
                t.push(vec![
                    row.n_per_group.to_string(),
                    num(row.bound_error.median),
                    num(row.bound_error.mean),
                    num(row.bound_error.max),
                ]);
            }
            if let Some(dir) = &a.output.out {
                ensure_dir(dir)?;
                t.write_csv(&dir.join("consistency.csv"))?;
                write_json(&dir.join("summary.json"), &r)?;
            }
            let mut text = format!("{}: population [{:.6}, {:.6}]\n", r.spec, r.population.0, r.population.1);
            for row in &r.rows {
                text.push_str(&format!("n = {}: median error {:.5}\n", row.n_per_group, row.bound_error.median));
            }
            emit(a.output.format, text, &t, to_json(&r))
        }
    }
}

#[derive(Serialize)]
struct OracleRow {
    group: String,
    chart_dim: usize,
    search: (f64, f64),
    oracle: (f64, f64),
    lower_range: (f64, f64),
    upper_range: (f64, f64),
}

pub fn oracle(a: &OracleArgs) -> CliResult<()> {
    let cfg = load_config(&a.input)?;
    let ds: AggregateDataset = load_dataset(&a.input, &cfg)?;
    let lam = lambda(&a.params, &cfg, &ds)?;
    let opts = search_options(&a.search, &cfg)?;
    let sh = shape(&a.restrict, &cfg, &ds)?;
    let finer = use_finer(&a.restrict, &cfg);
    let oo = OracleOptions {
        grid_step: a.grid_step,
        refine_levels: a.refine,
        ..Default::default()
    };
    let mut rows = Vec::new();
    for g in &ds.groups {
        let s = sh.as_ref().and_then(|s| s.for_group(&g.id));
        let b = aggbounds::group_bounds(g, &ds.support, &lam, ds.range, s, finer, &opts)?;
        let o = brute_force_bounds(g, &ds.support, &lam, ds.range, s, finer, &oo)?;
        let jk = joint_known_range(g, &ds.support, &lam, ds.range, s, finer, &opts)?;
        rows.push(OracleRow {
            group: g.id.clone(),
            chart_dim: b.chart_dim,
            search: (b.lower, b.upper),
            oracle: (o.lower, o.upper),
            lower_range: jk.lower_range,
            upper_range: jk.upper_range,
        });
    }
    let mut t = Table::new(&[
        "group", "chart_dim", "search_lower", "search_upper", "oracle_lower", "oracle_upper", "lower_min", "lower_max",
        "upper_min", "upper_max",
    ]);
    let mut text = String::new();
    for r in &rows {
        t.push(vec![
            r.group.clone(),
            r.chart_dim.to_string(),
            num(r.search.0),
            num(r.search.1),
            num(r.oracle.0),
            num(r.oracle.1),
            num(r.lower_range.0),
            num(r.lower_range.1),
            num(r.upper_range.0),
            num(r.upper_range.1),
        ]);
        text.push_str(&format!(
            "{} (d = {}): search [{:.5}, {:.5}]  oracle [{:.5}, {:.5}]  L over joints [{:.5}, {:.5}]  U over joints [{:.5}, {:.5}]\n",
            r.group, r.chart_dim, r.search.0, r.search.1, r.oracle.0, r.oracle.1, r.lower_range.0, r.lower_range.1, r.upper_range.0, r.upper_range.1
        ));
    }
    if let Some(dir) = out_dir(&a.output.out, &cfg) {
        ensure_dir(&dir)?;
        t.write_csv(&dir.join("oracle.csv"))?;
        write_json(&dir.join("oracle.json"), &rows)?;
    }
    emit(a.output.format, text, &t, to_json(&rows))
}

pub fn preset(a: &PresetArgs) -> CliResult<()> {
    let spec = exercise_preset(a.id)?;
    let text = if a.population {
        to_json(&spec.population_dataset(true))?
    } else {
        to_json(&spec)?
    };
    match &a.out {
        Some(p) => std::fs::write(p, text + "\n").map_err(crate::error::io_err(p)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

pub fn validate(a: &ValidateArgs) -> CliResult<()> {
    let cfg = load_config(&a.input)?;
    let ds = load_dataset(&a.input, &cfg)?;
    let out: Option<PathBuf> = a.out.clone();
    match out {
        Some(p) => write_json(&p, &ds)?,
        None => println!("{}", to_json(&ds)?),
    }
    eprintln!("{} groups, {} support points: ok", ds.groups.len(), ds.k());
    Ok(())
}
