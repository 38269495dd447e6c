//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use aggbounds::bounds::{inner_closed_form, inner_lp, InnerOutcome, InnerProblem};
use aggbounds::inference::clopper_pearson;
use aggbounds::simlab::spec::{exercise_preset, preset_focus_cell};
use aggbounds::simlab::study::{consistency_study, coverage_study, StudyOptions};
use aggbounds::simlab::{brute_force_bounds, OracleOptions};
use aggbounds::*;
use common::*;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Closed form and LP agree on unconstrained inner problems.
fn closed_form_vs_lp() -> Outcome {
    let t = Instant::now();
    let mut rng = rng(101);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(2..=16);
        let p = random_joint(&mut rng, k, true);
        let lo = rng.random_range(-2.0..1.0);
        let range = OutcomeRange::new(lo, lo + rng.random_range(0.1..3.0)).unwrap();
        let y = range.lo + rng.random::<f64>() * range.width();
        let lambda: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        for dir in [Direction::Min, Direction::Max] {
            let (cf, _) = inner_closed_form(&lambda, &p, y, range, dir);
            let lp = match inner_lp(&InnerProblem::new(&lambda, &p, y, range, dir)) {
                Ok(InnerOutcome::Optimal { value, .. }) => value,
                other => return outcome(false, format!("LP failed: {other:?}")),
            };
            worst = worst.max((cf - lp).abs());
        }
    }
    let el = t.elapsed();
    outcome(
        worst <= 1e-8 && secs(el) < 5.0,
        format!("1000 problems, max |closed form - LP| = {worst:.2e}, {:.2}s", secs(el)),
    )
}

/// Oracle settings by chart dimension: coarser grids refined locally as the
/// dimension grows.
fn oracle_opts(d: usize) -> OracleOptions {
    match d {
        0..=2 => OracleOptions {
            grid_step: 0.01,
            refine_levels: 1,
            ..Default::default()
        },
        3 => OracleOptions {
            grid_step: 0.025,
            refine_levels: 2,
            ..Default::default()
        },
        _ => OracleOptions {
            grid_step: 0.05,
            refine_levels: 2,
            ..Default::default()
        },
    }
}

struct OracleCase {
    inst: Instance,
    shape: Option<ShapeConstraintSet>,
    finer: bool,
}

fn oracle_cases() -> Vec<OracleCase> {
    let mut rng = rng(202);
    (0..50)
        .map(|i| {
            let levels = SMALL_SHAPES[i % SMALL_SHAPES.len()];
            let variant = (i / SMALL_SHAPES.len()) % 3;
            let (monotone, finer) = (variant == 1, variant == 2);
            let inst = random_instance(&mut rng, levels, monotone, finer);
            let shape = monotone.then(|| ShapeConstraintSet::monotone(inst.support(), 0, Monotone::Increasing).unwrap());
            OracleCase { inst, shape, finer }
        })
        .collect()
}

/// Search bounds agree with the grid oracle.
fn oracle_sharpness(cases: &[OracleCase]) -> Outcome {
    let t = Instant::now();
    let opts = SearchOptions::default();
    let (mut worst, mut missed, mut failures) = (0.0f64, 0.0f64, Vec::new());
    for (i, c) in cases.iter().enumerate() {
        let g = c.inst.group();
        let b = group_bounds(g, c.inst.support(), &c.inst.lambda, OutcomeRange::unit(), c.shape.as_ref(), c.finer, &opts)
            .unwrap();
        let o = brute_force_bounds(
            g,
            c.inst.support(),
            &c.inst.lambda,
            OutcomeRange::unit(),
            c.shape.as_ref(),
            c.finer,
            &oracle_opts(b.chart_dim),
        )
        .unwrap();
        let err = (b.lower - o.lower).abs().max((b.upper - o.upper).abs());
        worst = worst.max(err);
        // positive when the oracle found a joint the search missed
        missed = missed.max(b.lower - o.lower).max(o.upper - b.upper);
        if err > 0.01 {
            failures.push(format!("case {i} (d={}): search [{:.4}, {:.4}] oracle [{:.4}, {:.4}]", b.chart_dim, b.lower, b.upper, o.lower, o.upper));
        }
    }
    let el = t.elapsed();
    let mut detail = format!(
        "{} instances, max |search - oracle| = {worst:.2e}, oracle beyond search by {:.2e}, {:.1}s",
        cases.len(),
        missed.max(0.0),
        secs(el)
    );
    for f in &failures {
        detail.push_str(&format!("\n      {f}"));
    }
    outcome(failures.is_empty() && secs(el) < 120.0, detail)
}

/// Contrasts cannot exclude zero without shape or subgroup restrictions.
fn zero_containment() -> Outcome {
    let mut rng = rng(303);
    let mut bad = 0;
    for _ in 0..100 {
        let (_, ds) = random_dataset(&mut rng, false, 4);
        let k = ds.k();
        let mut lambda: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = lambda.iter().sum::<f64>() / k as f64;
        lambda.iter_mut().for_each(|l| *l -= mean);
        let r = identified_set(&ds, &lambda, None, false, &quick_search()).unwrap();
        if !(r.lower <= 0.0 && r.upper >= 0.0) {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{}/100 intervals contain 0", 100 - bad))
}

/// Adding restrictions never widens the interval.
fn monotone_narrowing(cases: &[OracleCase]) -> Outcome {
    let opts = SearchOptions::default();
    let (mut search_worst, mut oracle_worst, mut n) = (0.0f64, 0.0f64, 0);
    for c in cases.iter().filter(|c| c.shape.is_some() || c.finer) {
        n += 1;
        let (g, s, lam, r) = (c.inst.group(), c.inst.support(), &c.inst.lambda, OutcomeRange::unit());
        let tied = group_bounds(g, s, lam, r, c.shape.as_ref(), c.finer, &opts).unwrap();
        let free = group_bounds(g, s, lam, r, None, false, &opts).unwrap();
        search_worst = search_worst.max(free.lower - tied.lower).max(tied.upper - free.upper);
        let oo = oracle_opts(free.chart_dim);
        let ot = brute_force_bounds(g, s, lam, r, c.shape.as_ref(), c.finer, &OracleOptions { refine_levels: 0, ..oo }).unwrap();
        let of = brute_force_bounds(g, s, lam, r, None, false, &OracleOptions { refine_levels: 0, ..oo }).unwrap();
        oracle_worst = oracle_worst.max(of.lower - ot.lower).max(ot.upper - of.upper);
    }
    // the same on whole datasets with a shared monotone restriction
    let mut rng = rng(404);
    for _ in 0..10 {
        let levels = SMALL_SHAPES[rng.random_range(2..SMALL_SHAPES.len())];
        let inst = random_instance(&mut rng, levels, true, true);
        let shape = ShapeSpec::Shared(ShapeConstraintSet::monotone(inst.support(), 0, Monotone::Increasing).unwrap());
        let free = identified_set(&inst.dataset, &inst.lambda, None, false, &opts).unwrap();
        let tied = identified_set(&inst.dataset, &inst.lambda, Some(&shape), true, &opts).unwrap();
        search_worst = search_worst.max(free.lower - tied.lower).max(tied.upper - free.upper);
        n += 1;
    }
    outcome(
        search_worst <= 1e-6 && oracle_worst <= 0.0,
        format!("{n} restricted cases, search excess {search_worst:.2e}, oracle excess {oracle_worst:.2e}"),
    )
}

/// Sharp bounds sit inside the Fréchet bounds, with equality on a single
/// binary covariate.
fn frechet_consistency() -> Outcome {
    let mut rng = rng(505);
    let opts = quick_search();
    let mut excess = 0.0f64;
    for _ in 0..100 {
        let (_, ds) = random_dataset(&mut rng, true, 3);
        let lambda = random_weights(&mut rng, ds.k());
        let d = identified_set(&ds, &lambda, None, false, &opts).unwrap();
        let f = frechet_identified_set(&ds, &lambda).unwrap();
        excess = excess.max(f.lower - d.lower).max(d.upper - f.upper);
    }
    let mut gap = 0.0f64;
    for _ in 0..100 {
        let support = product_support(&[2]);
        let ng = rng.random_range(1..=4);
        let groups = (0..ng)
            .map(|_| (random_joint(&mut rng, 2, false), vec![rng.random::<f64>(), rng.random::<f64>()]))
            .collect();
        let spec = spec_from(support, OutcomeRange::unit(), true, groups, None);
        let ds = spec.population_dataset(false);
        for k in 0..2 {
            let mut lambda = vec![0.0; 2];
            lambda[k] = 1.0;
            let d = identified_set(&ds, &lambda, None, false, &opts).unwrap();
            let f = frechet_identified_set(&ds, &lambda).unwrap();
            gap = gap.max((d.lower - f.lower).abs()).max((d.upper - f.upper).abs());
        }
    }
    outcome(
        excess <= 1e-6 && gap <= 1e-8,
        format!("100 datasets, D beyond D^F by {excess:.2e}; single-covariate cells differ by {gap:.2e}"),
    )
}

fn focus() -> Vec<f64> {
    let mut l = vec![0.0; 8];
    l[preset_focus_cell()] = 1.0;
    l
}

/// Confidence sets contain the population bounds.
fn coverage() -> Outcome {
    let spec = exercise_preset(1).unwrap();
    let opts = StudyOptions {
        seed: 606,
        ..Default::default()
    };
    let t = Instant::now();
    let small = coverage_study(&spec.truncated(10), 1300, 30, 0.05, &focus(), &opts).unwrap();
    let t_small = t.elapsed();
    let t = Instant::now();
    let full = coverage_study(&spec, 1300, 100, 0.05, &focus(), &opts).unwrap();
    let t_full = t.elapsed();
    let covered = full.reps.iter().filter(|r| r.covered).count();
    outcome(
        covered >= 95 && small.coverage_rate >= 0.93 && secs(t_small) < 120.0 && secs(t_full) < 900.0,
        format!(
            "G=50: {covered}/100 covered in {:.0}s; G=10: {:.2} coverage over 30 in {:.0}s",
            secs(t_full),
            small.coverage_rate,
            secs(t_small)
        ),
    )
}

/// Estimation error shrinks with the sample size.
fn consistency() -> Outcome {
    let spec = exercise_preset(1).unwrap();
    let opts = StudyOptions {
        seed: 707,
        ..Default::default()
    };
    let r = consistency_study(&spec, &[1_000, 10_000, 100_000], 20, &focus(), &opts).unwrap();
    let medians: Vec<f64> = r.rows.iter().map(|row| row.bound_error.median).collect();
    let last = *medians.last().unwrap();
    outcome(
        r.medians_non_increasing(0.0) && last <= 0.01,
        format!("median max-bound error at n = 1e3, 1e4, 1e5: {medians:.4?}"),
    )
}

/// Estimate inside confidence set, nesting across levels, and the closed-form
/// Clopper-Pearson endpoints.
fn inference_structure() -> Outcome {
    let mut rng = rng(808);
    let opts = CiOptions {
        search: quick_search(),
        shares_known: false,
    };
    let alphas = [0.01, 0.05, 0.1, 0.2];
    let mut excess = 0.0f64;
    for i in 0..20 {
        let (spec, _) = random_dataset(&mut rng, i % 2 == 0, 3);
        let ds = aggbounds::simlab::simulate_aggregate(&spec, 400, i, true).unwrap();
        let lambda = random_weights(&mut rng, ds.k());
        let (point, reports) = ci_identified_sets(&ds, &lambda, &alphas, None, i % 3 == 0, &opts).unwrap();
        for r in &reports {
            excess = excess.max(r.d_ci.0 - point.lower).max(point.upper - r.d_ci.1);
        }
        for w in reports.windows(2) {
            // smaller alpha, wider set
            excess = excess.max(w[0].d_ci.0 - w[1].d_ci.0).max(w[1].d_ci.1 - w[0].d_ci.1);
        }
    }
    let mut cp = 0.0f64;
    for n in [1u64, 2, 7, 30, 1300, 100_000] {
        for level in [0.8, 0.95, 0.999] {
            let t = (1.0 - level) / 2.0;
            let (lo0, hi0) = clopper_pearson(0, n, level).unwrap();
            let (lon, hin) = clopper_pearson(n, n, level).unwrap();
            let nf = n as f64;
            cp = cp
                .max(lo0.abs())
                .max((hi0 - (1.0 - t.powf(1.0 / nf))).abs())
                .max((lon - t.powf(1.0 / nf)).abs())
                .max((hin - 1.0).abs());
        }
    }
    outcome(
        excess <= 1e-6 && cp <= 1e-10,
        format!("20 datasets x 4 levels, containment/nesting excess {excess:.2e}; CP boundary error {cp:.2e}"),
    )
}

/// Knowing the joint would move the lower bound.
fn joint_known() -> Outcome {
    let support = product_support(&[2, 2]);
    let spec = spec_from(
        support,
        OutcomeRange::unit(),
        true,
        vec![(vec![0.1, 0.3, 0.35, 0.25], vec![0.2, 0.5, 0.6, 0.9])],
        None,
    );
    let ds = spec.population_dataset(false);
    let lambda = [0.0, 0.0, 1.0, 0.0];
    let opts = SearchOptions::default();
    let g = &ds.groups[0];
    let jk = joint_known_range(g, &ds.support, &lambda, ds.range, None, false, &opts).unwrap();
    let b = group_bounds(g, &ds.support, &lambda, ds.range, None, false, &opts).unwrap();
    let diff = (jk.lower_range.0 - b.lower).abs();
    outcome(
        b.chart_dim >= 1 && jk.lower_width() > 0.0 && diff <= 1e-6,
        format!(
            "d = {}, L_g ranges over [{:.4}, {:.4}], min vs group bound {diff:.2e}",
            b.chart_dim, jk.lower_range.0, jk.lower_range.1
        ),
    )
}

fn main() {
    let cases = oracle_cases();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("closed form / LP equivalence", Box::new(closed_form_vs_lp)),
        ("oracle sharpness", Box::new(|| oracle_sharpness(&cases))),
        ("zero containment", Box::new(zero_containment)),
        ("monotone narrowing", Box::new(|| monotone_narrowing(&cases))),
        ("Frechet consistency", Box::new(frechet_consistency)),
        ("coverage", Box::new(coverage)),
        ("consistency trend", Box::new(consistency)),
        ("inference structure", Box::new(inference_structure)),
        ("joint-known comparison", Box::new(joint_known)),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {}: {tag} {name}: {}", i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
