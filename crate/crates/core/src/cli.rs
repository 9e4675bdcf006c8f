//! Subcommand implementations behind the `mdfem` binary.

use std::io::Write;
use std::path::PathBuf;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activeset::{build_active_set, IndexSet};
use crate::anchored::{Anchored, Fault};
use crate::config::{ModeChoice, RunConfig};
use crate::driver::{self, plan_for, plan_single_level, run_plan, single_level_baseline, MdfemResult, ParameterPlan};
use crate::error::{config, numerical, Result};
use crate::fem1d::{Discretization, Mesh1D};
use crate::oracles::{subset_sum_bruteforce, tensor_gauss_reference, OracleEstimate};
use crate::polylattice::{generate_points, RuleSource};
use crate::problem::{compute_kappa, product_weight_sum, Mode, ProblemSpec, WeightSequence};

/// Header of the study CSV.
pub const CSV_HEADER: [&str; 10] = [
    "epsilon",
    "value",
    "ref_value",
    "abs_error",
    "rmse",
    "cost_units",
    "wall_ms",
    "active_set_size",
    "max_cardinality",
    "seed",
];

/// Cache directory: `--cache`, else `MDFEM_CACHE`, else `plan.cache`.
pub fn cache_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> Option<PathBuf> {
    flag.or_else(|| std::env::var_os("MDFEM_CACHE").map(PathBuf::from)).or_else(|| cfg.cache.clone())
}

pub fn rule_source(cfg: &RunConfig, dir: Option<PathBuf>) -> RuleSource {
    RuleSource::new(cfg.strategy, dir)
}

fn check_mode(cfg: &RunConfig, mode: Mode) -> Result<()> {
    match (cfg.mode, mode) {
        (ModeChoice::Auto, _)
        | (ModeChoice::Deterministic, Mode::Deterministic)
        | (ModeChoice::Randomized, Mode::Randomized) => Ok(()),
        (_, derived) => config(format!("run.mode conflicts with the rates: lambda selects the {derived} branch")),
    }
}

pub fn cmd_plan(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<ParameterPlan>> {
    let rates = cfg.problem.rates()?;
    check_mode(cfg, rates.mode)?;
    writeln!(out, "kappa <= {:.6} (need < 1/(2 alpha + 1) = {:.6})", rates.kappa, 1.0 / f64::from(2 * rates.alpha + 1))?;
    writeln!(
        out,
        "tau = {} lambda = {:.6} alpha = {} mode = {} a_mdm = {:.6}",
        rates.tau, rates.lambda, rates.alpha, rates.mode, rates.a_mdm
    )?;
    let mut plans = Vec::new();
    for &eps in &cfg.epsilons {
        let plan = plan_for(&cfg.problem, eps, cfg.fem_constant)?;
        let d = plan.diagnostics;
        writeln!(
            out,
            "epsilon = {eps}: |U| = {} d = {} truncation bound = {:.3e} predicted error2 = {:.3e} predicted cost = {:.4e}",
            d.cardinality, d.max_card, d.tail_bound, plan.predicted_error2, plan.predicted_cost
        )?;
        for r in &plan.records {
            writeln!(
                out,
                "  {:<16} gammaM = {:.4e} n = {:<8} h = {:.4e} elements = {}",
                r.set.to_string(),
                r.weight,
                r.n,
                r.h,
                r.mesh.elements()
            )?;
        }
        plans.push(plan);
    }
    Ok(plans)
}

pub fn cmd_run(cfg: &RunConfig, rules: &RuleSource, out: &mut dyn Write) -> Result<Vec<MdfemResult>> {
    let rates = cfg.problem.rates()?;
    check_mode(cfg, rates.mode)?;
    let mut results = Vec::new();
    for &eps in &cfg.epsilons {
        let plan = plan_for(&cfg.problem, eps, cfg.fem_constant)?;
        let r = run_plan(&plan, &cfg.problem, rules, cfg.shifts, cfg.seed)?;
        let se = r.stderr.map_or("-".into(), |s| format!("{s:.3e}"));
        writeln!(
            out,
            "epsilon = {eps} value = {:.12} stderr = {se} cost_units = {:.4e} solves = {} |U| = {} d = {}",
            r.value, r.cost_units, r.solves, r.active_set_size, r.max_cardinality
        )?;
        results.push(r);
    }
    Ok(results)
}

/// Tensor Gauss reference for a problem with finitely many parameters.
pub fn oracle_for(problem: &ProblemSpec, points: usize, level: u32) -> Result<OracleEstimate> {
    let Some(s) = problem.model.weights().support() else {
        return config("oracle infeasible: the parameter sequence is not truncated (set weights.jmax)");
    };
    tensor_gauss_reference(&problem.model, &problem.f, &problem.functional, s, points, Mesh1D::dyadic(level, problem.degree)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub epsilon: f64,
    pub value: f64,
    pub ref_value: f64,
    pub abs_error: f64,
    pub rmse: f64,
    pub cost_units: f64,
    pub wall_ms: Option<f64>,
    pub active_set_size: usize,
    pub max_cardinality: usize,
    pub seed: u64,
}

/// One row per `(ε, replication)`; replication `r` uses seed `seed + r`.
pub fn study_rows(cfg: &RunConfig, rules: &RuleSource, oracle: &OracleEstimate) -> Result<Vec<StudyRow>> {
    if cfg.epsilons.len() < 3 {
        return config("a study needs at least 3 epsilon values");
    }
    let rates = cfg.problem.rates()?;
    check_mode(cfg, rates.mode)?;
    let mut rows = Vec::new();
    for &eps in &cfg.epsilons {
        let plan = plan_for(&cfg.problem, eps, cfg.fem_constant)?;
        let mut batch = Vec::new();
        for rep in 0..cfg.replications {
            let seed = cfg.seed.wrapping_add(rep as u64);
            let r = run_plan(&plan, &cfg.problem, rules, cfg.shifts, seed)?;
            batch.push((r, seed));
        }
        let rmse =
            (batch.iter().map(|(r, _)| (r.value - oracle.value).powi(2)).sum::<f64>() / batch.len() as f64).sqrt();
        for (r, seed) in batch {
            rows.push(StudyRow {
                epsilon: eps,
                value: r.value,
                ref_value: oracle.value,
                abs_error: (r.value - oracle.value).abs(),
                rmse,
                cost_units: r.cost_units,
                wall_ms: cfg.record_timing.then_some(r.wall_ms),
                active_set_size: r.active_set_size,
                max_cardinality: r.max_cardinality,
                seed: if r.mode == Mode::Randomized { seed } else { 0 },
            });
        }
    }
    Ok(rows)
}

pub fn write_csv(rows: &[StudyRow], out: &mut dyn Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.epsilon.to_string(),
            r.value.to_string(),
            r.ref_value.to_string(),
            r.abs_error.to_string(),
            r.rmse.to_string(),
            r.cost_units.to_string(),
            r.wall_ms.map_or(String::new(), |t| format!("{t:.3}")),
            r.active_set_size.to_string(),
            r.max_cardinality.to_string(),
            r.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Io(std::io::Error::other(e))
}

pub fn cmd_study(cfg: &RunConfig, rules: &RuleSource, out: &mut dyn Write) -> Result<Vec<StudyRow>> {
    let oracle = oracle_for(&cfg.problem, cfg.oracle_points, cfg.oracle_level)?;
    let rows = study_rows(cfg, rules, &oracle)?;
    write_csv(&rows, out)?;
    Ok(rows)
}

pub fn cmd_baseline(cfg: &RunConfig, rules: &RuleSource, out: &mut dyn Write) -> Result<()> {
    let rates = cfg.problem.rates()?;
    let (alpha, shifts) = match rates.mode {
        Mode::Deterministic => (rates.alpha, 0),
        Mode::Randomized => (1, cfg.shifts),
    };
    writeln!(out, "epsilon,value,stderr,cost_units,s,points,elements")?;
    for &eps in &cfg.epsilons {
        let plan = plan_single_level(&cfg.problem, &rates, eps, cfg.baseline)?;
        let r = single_level_baseline(&cfg.problem, plan, alpha, rules, shifts, cfg.seed)?;
        writeln!(
            out,
            "{eps},{},{},{},{},{},{}",
            r.value,
            r.stderr.map_or(String::new(), |s| s.to_string()),
            r.cost_units,
            plan.s,
            1u64 << plan.m,
            plan.mesh.elements()
        )?;
    }
    Ok(())
}

/// Outcome of one validation item.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Oracle-backed invariant checks; `fault` is threaded into the decomposition.
pub fn validation_suite(cfg: &RunConfig, rules: &RuleSource, fault: Fault) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let problem = &cfg.problem;
    let w = problem.model.weights();

    // telescoping over all subsets of {1, 2, 3}
    let disc = Discretization::new(&problem.model, &problem.f, &problem.functional, Mesh1D::new(32, problem.degree)?, &[1, 2, 3]);
    let ev = Anchored::new(&disc).with_fault(fault);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let y: Vec<f64> = (0..3).map(|_| (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5).collect();
        let mut sum = 0.0;
        for mask in 0..8 {
            let u = IndexSet::first(3).select(mask);
            let yu: Vec<f64> = u.as_slice().iter().map(|&j| y[j - 1]).collect();
            sum += ev.decomposed_value(&u, &yu)?;
        }
        worst = worst.max((sum - disc.value(&y)?).abs());
    }
    checks.push(Check { name: "telescoping", passed: worst <= 1e-12, detail: format!("max deviation {worst:.3e}") });

    // one-dimensional projections of a plain rule are the full dyadic grid
    let weights: Vec<f64> = (1..=3).map(|j| w.gamma(j).max(1e-3)).collect();
    let rule = rules.get(1, 8, &weights)?;
    let pts = generate_points(&rule, None);
    let mut ok = true;
    for j in 0..3 {
        let mut seen = vec![false; 256];
        for p in pts.points() {
            let k = ((p[j] + 0.5) * 256.0).round() as usize;
            ok &= k < 256 && !std::mem::replace(&mut seen[k], true);
        }
    }
    checks.push(Check { name: "net projections", passed: ok, detail: format!("2^8 points, s = 3, q = {:?}", rule.gen()) });

    // product-sum interval against brute force
    let rates = problem.rates()?;
    let m = crate::kernel::embedding_constant(rates.alpha);
    let jcap = w.support().unwrap_or(12).min(12);
    let brute = subset_sum_bruteforce(w, m, rates.pstar, jcap)?;
    let tail_ok = w.support().is_some_and(|s| s <= 12);
    let s = product_weight_sum(w, m, rates.pstar, 1e-14)?;
    let passed = if tail_ok { s.lower <= brute * (1.0 + 1e-12) && brute <= s.upper * (1.0 + 1e-12) } else { brute <= s.upper };
    checks.push(Check {
        name: "product sum",
        passed,
        detail: format!("brute force {brute:.12} in [{:.12}, {:.12}]", s.lower, s.upper),
    });

    // plan constraint and rounding
    let mut worst_res = 0.0f64;
    let mut rounding_ok = true;
    for &eps in &cfg.epsilons {
        let aset = build_active_set(w, m, rates.pstar, eps, s)?;
        let plan = driver::make_plan(
            &aset,
            w,
            &rates,
            &crate::problem::cubature_constants(&rates)?,
            eps,
            problem.degree,
            cfg.fem_constant,
        )?;
        worst_res = worst_res.max(plan.constraint_residual());
        rounding_ok &= plan.predicted_error2 <= eps / 2.0;
    }
    checks.push(Check {
        name: "plan constraint",
        passed: worst_res <= 1e-8 && rounding_ok,
        detail: format!("max relative residual {worst_res:.3e}, rounded error bound within eps/2: {rounding_ok}"),
    });

    let kappa = compute_kappa(&problem.model)?;
    checks.push(Check {
        name: "kappa bound",
        passed: kappa < 1.0 / f64::from(2 * rates.alpha + 1),
        detail: format!("kappa <= {kappa:.6}"),
    });
    Ok(checks)
}

pub fn cmd_validate(cfg: &RunConfig, rules: &RuleSource, fault: Fault, out: &mut dyn Write) -> Result<()> {
    let checks = validation_suite(cfg, rules, fault)?;
    let mut failed = 0;
    for c in &checks {
        writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        return numerical(format!("{failed} validation check(s) failed"));
    }
    Ok(())
}
