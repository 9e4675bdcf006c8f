//! One line per acceptance criterion. Exits nonzero if a criterion fails, unless it is listed in
//! `EXPECTED_FAILURES`; a listed criterion that passes also exits nonzero so the list stays honest.

mod common;

use std::collections::BTreeSet;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use mdfem::activeset::{active_set, IndexSet, Selection};
use mdfem::anchored::Anchored;
use mdfem::cli::{oracle_for, study_rows, StudyRow};
use mdfem::config::{RunConfig, PRESETS};
use mdfem::driver::{plan_for, plan_single_level, single_level_baseline, subset_seed};
use mdfem::fem1d::{slope, Discretization, Mesh1D};
use mdfem::kernel::embedding_constant;
use mdfem::polylattice::{generate_points, DigitalShift, RuleSource};
use mdfem::oracles::flux_reference;
use mdfem::problem::{product_weight_sum, Functional, Mode, Profile, WeightSequence};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::preset;

/// Criteria that cannot hold for the configuration they prescribe, with the reason.
const EXPECTED_FAILURES: &[(u32, &str)] = &[(
    9,
    "p* = 0.25, tau = 4 lies outside p* < 1/3 - 2d/(3 tau), where the single-level exponent is smaller",
)];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn log2s(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.log2()).collect()
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

fn telescoping() -> Outcome {
    let p = preset("randomized").problem;
    let disc = Discretization::new(&p.model, &p.f, &p.functional, Mesh1D::new(64, p.degree).unwrap(), &[1, 2, 3]);
    let anch = Anchored::new(&disc);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let y: Vec<f64> = (0..3).map(|_| uniform(&mut rng)).collect();
        let sum: f64 = (0..8)
            .map(|mask| {
                let u = IndexSet::first(3).select(mask);
                let yu: Vec<f64> = u.as_slice().iter().map(|&j| y[j - 1]).collect();
                anch.decomposed_value(&u, &yu).unwrap()
            })
            .sum();
        worst = worst.max((sum - disc.value(&y).unwrap()).abs());
    }
    outcome(worst <= 1e-12, format!("max |sum of terms - G| = {worst:.2e} over 50 draws"))
}

fn active_set_exactness() -> Outcome {
    let p = preset("halves").problem;
    let rates = p.rates().unwrap();
    let w = p.model.weights();
    assert_eq!(w.support(), Some(10));
    let m = embedding_constant(rates.alpha);
    let sel = Selection::for_pstar(rates.pstar);
    let s = product_weight_sum(w, m, sel.sum_exponent(), 1e-14).unwrap();
    let mut ok = true;
    let mut lines = Vec::new();
    for k in 1..=4 {
        let eps = 10f64.powi(-k);
        let aset = active_set(w, m, sel, eps).unwrap();
        let got: BTreeSet<Vec<usize>> = aset.members().iter().map(|mb| mb.set.as_slice().to_vec()).collect();
        let mut want = BTreeSet::new();
        let mut outside = 0.0;
        for mask in 0..1usize << 10 {
            let set: Vec<usize> = (0..10).filter(|i| mask >> i & 1 == 1).map(|i| i + 1).collect();
            let gm: f64 = set.iter().map(|&j| w.gamma(j) * m).product();
            if gm.powf(sel.membership_exponent()) > eps / 2.0 / s.upper {
                want.insert(set);
            } else {
                outside += gm;
            }
        }
        ok &= got == want && outside <= eps / 2.0;
        lines.push(format!("eps=1e-{k}: |U|={} tail={outside:.2e}", got.len()));
    }
    outcome(ok, lines.join("; "))
}

fn plan_constraint() -> Outcome {
    let mut worst = 0.0f64;
    let mut rounded = true;
    let mut count = 0;
    for name in PRESETS {
        let cfg = preset(name);
        for &eps in &cfg.epsilons {
            let plan = plan_for(&cfg.problem, eps, cfg.fem_constant).unwrap();
            worst = worst.max(plan.constraint_residual());
            rounded &= plan.predicted_error2 <= eps / 2.0;
            count += 1;
        }
    }
    outcome(
        worst <= 1e-8 && rounded,
        format!("{count} plans: max relative residual {worst:.1e}, rounded error within eps/2: {rounded}"),
    )
}

/// Errors of `G(u_h)` against the flux-formula reference on oscillatory load and weight.
fn fem_rates() -> Outcome {
    let model = preset("randomized").problem.model;
    let f: Profile = "trig:1,1,8".parse().unwrap();
    let g: Profile = "trig:0.5,1,9,0.5".parse().unwrap();
    let y = [(1, 0.4), (2, -0.3), (3, 0.25)];
    let exact = flux_reference(&model, &f, &g, &y, 512).unwrap();
    let functional = Functional::integral(g);
    let levels: Vec<u32> = (4..=9).collect();
    let xs: Vec<f64> = levels.iter().map(|&k| f64::from(k)).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for (degree, lo, hi) in [(1, 1.9, 2.1), (2, 3.8, 4.2)] {
        let errors: Vec<f64> = levels
            .iter()
            .map(|&k| {
                let disc = Discretization::new(&model, &f, &functional, Mesh1D::dyadic(k, degree).unwrap(), &[1, 2, 3]);
                (disc.value(&[0.4, -0.3, 0.25]).unwrap() - exact).abs()
            })
            .collect();
        let eoc = -slope(&xs, &log2s(&errors));
        let pairwise: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        ok &= (lo..=hi).contains(&eoc);
        parts.push(format!("degree {degree}: EOC {eoc:.3} (pairwise {:?})", round(&pairwise)));
    }
    outcome(ok, parts.join("; "))
}

fn round(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 100.0).round() / 100.0).collect()
}

/// `Π_j (1 + 3 γ_j (y_j + y_j^2 - 1/12))`, with integral 1 over [-1/2, 1/2]^3.
fn product_integrand(y: &[f64], g: &[f64]) -> f64 {
    y.iter().zip(g).map(|(t, gj)| 1.0 + 3.0 * gj * (t + t * t - 1.0 / 12.0)).product()
}

fn cubature_rates() -> Outcome {
    let g = [1.0, 0.5, 0.25];
    let rules = RuleSource::in_memory();
    let avg = |pts: &mdfem::polylattice::CubatureNodeSet| {
        pts.points().map(|p| product_integrand(p, &g)).sum::<f64>() / pts.len() as f64
    };
    let ms: Vec<u32> = (6..=12).collect();
    let rmse: Vec<f64> = ms
        .iter()
        .map(|&m| {
            let rule = rules.get(1, m, &g).unwrap();
            let se: f64 = (0..20)
                .map(|r| {
                    let sh = DigitalShift::from_seed(subset_seed(5, &IndexSet::first(3)), r, 3);
                    (avg(&generate_points(&rule, Some(&sh))) - 1.0).powi(2)
                })
                .sum();
            (se / 20.0).sqrt()
        })
        .collect();
    let xs: Vec<f64> = ms.iter().map(|&m| f64::from(m)).collect();
    let s1 = slope(&xs, &log2s(&rmse));
    let ms2: Vec<u32> = (4..=10).collect();
    let err: Vec<f64> =
        ms2.iter().map(|&m| (avg(&generate_points(&rules.get(2, m, &g).unwrap(), None)) - 1.0).abs()).collect();
    let xs2: Vec<f64> = ms2.iter().map(|&m| f64::from(m)).collect();
    let s2 = slope(&xs2, &log2s(&err));
    outcome(s1 <= -0.85 && s2 <= -1.5, format!("shifted order-1 RMSE slope {s1:.3}; order-2 error slope {s2:.3}"))
}

fn sweep(cfg: &RunConfig) -> (mdfem::oracles::OracleEstimate, Vec<StudyRow>) {
    let oracle = oracle_for(&cfg.problem, cfg.oracle_points, cfg.oracle_level).unwrap();
    let rows = study_rows(cfg, &RuleSource::in_memory(), &oracle).unwrap();
    (oracle, rows)
}

/// One `(epsilon, rmse, cost)` per epsilon.
fn per_epsilon(rows: &[StudyRow]) -> Vec<(f64, f64, f64)> {
    let mut out: Vec<(f64, f64, f64)> = Vec::new();
    for r in rows {
        if out.last().map_or(true, |l| l.0 != r.epsilon) {
            out.push((r.epsilon, r.rmse, r.cost_units));
        }
    }
    out
}

fn cost_slope(pts: &[(f64, f64, f64)]) -> f64 {
    let xs: Vec<f64> = pts.iter().map(|p| (1.0 / p.0).log2()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.2.log2()).collect();
    slope(&xs, &ys)
}

fn randomized_sweep() -> (Outcome, Outcome) {
    let cfg = preset("randomized");
    let rates = cfg.problem.rates().unwrap();
    let (oracle, rows) = sweep(&cfg);
    let pts = per_epsilon(&rows);
    let reps = rows.len() / pts.len();
    let within = pts.iter().all(|p| p.1 <= p.0);
    let oracle_ok = oracle.error_estimate <= cfg.epsilons.iter().fold(f64::INFINITY, |a, &b| a.min(b)) / 10.0;
    let worst = pts.iter().map(|p| p.1 / p.0).fold(0.0, f64::max);
    let six = outcome(
        within && oracle_ok && reps == 10 && oracle.dim == 6 && rates.mode == Mode::Randomized,
        format!(
            "{} eps x {reps} replications, max rmse/eps {worst:.2e}, oracle estimate {:.1e} (s = {})",
            pts.len(),
            oracle.error_estimate,
            oracle.dim
        ),
    );
    let s = cost_slope(&pts);
    let limit = rates.a_mdm + 0.4;
    let seven = outcome(s <= limit, format!("cost slope {s:.3} <= a_mdm + 0.4 = {limit:.3}"));
    (six, seven)
}

fn deterministic_sweep() -> Outcome {
    let cfg = preset("deterministic");
    let rates = cfg.problem.rates().unwrap();
    let (oracle, rows) = sweep(&cfg);
    let pts = per_epsilon(&rows);
    let within = pts.iter().all(|p| p.1 <= p.0) && oracle.error_estimate <= pts[pts.len() - 1].0 / 10.0;
    let worst = pts.iter().map(|p| p.1 / p.0).fold(0.0, f64::max);
    let s = cost_slope(&pts);
    outcome(
        within && s <= 1.9 && rates.mode == Mode::Deterministic && rates.alpha == 2,
        format!(
            "lambda {:.2}, alpha {}, max |err|/eps {worst:.2e}, cost slope {s:.3} <= 1.9 (a_mdm + 0.4 = {:.3})",
            rates.lambda,
            rates.alpha,
            rates.a_mdm + 0.4
        ),
    )
}

/// Compares errors at equal cost: the single-level error at the MDFEM's cost is taken from the
/// cheapest single-level run that costs at least as much (its error is never larger than at lower cost).
fn baseline_comparison() -> Outcome {
    let cfg = preset("comparison");
    let rates = cfg.problem.rates().unwrap();
    let (oracle, rows) = sweep(&cfg);
    let pts = per_epsilon(&rows);
    let rules = RuleSource::in_memory();
    let (alpha, shifts) = match rates.mode {
        Mode::Deterministic => (rates.alpha, 0),
        Mode::Randomized => (1, cfg.shifts),
    };
    let mut sl = Vec::new();
    for k in 2..=40 {
        let eps = 2f64.powi(-k);
        let plan = plan_single_level(&cfg.problem, &rates, eps, cfg.baseline).unwrap();
        let r = single_level_baseline(&cfg.problem, plan, alpha, &rules, shifts, cfg.seed).unwrap();
        let err = (r.value - oracle.value).abs().max(oracle.error_estimate);
        sl.push((r.cost_units, err));
        if r.cost_units > pts.iter().map(|p| p.2).fold(0.0, f64::max) {
            break;
        }
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for p in &pts[pts.len() - 2..] {
        let md_err = p.1.max(oracle.error_estimate);
        let sl_err = sl
            .iter()
            .filter(|s| s.0 <= p.2)
            .map(|s| s.1)
            .fold(f64::INFINITY, f64::min);
        ok &= md_err < sl_err;
        parts.push(format!("eps {:.2e}: MDFEM err {md_err:.2e} at cost {:.2e}, single-level err {sl_err:.2e} at cost <= that", p.0, p.2));
    }
    let gap = 1.0 / 3.0 - 2.0 / (3.0 * rates.tau);
    parts.push(format!("p* = {} vs regime bound 1/3 - 2d/(3 tau) = {gap:.4}", rates.pstar));
    outcome(ok, parts.join("; "))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let path = dir.path().join(format!("study-{threads}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_mdfem"))
            .args(["study", "--config", "builtin:randomized", "--epsilon", "2^-3,2^-4,2^-5", "--seed", "11"])
            .args(["--threads", threads, "--out", path.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(&path).unwrap());
    }
    outcome(outputs[0] == outputs[1], format!("{} bytes, threads 1 vs 3", outputs[0].len()))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut expected = 0;
    let mut unexpected_pass = 0;
    let mut report = |n: u32, name: &str, budget: Duration, start: Instant, o: Outcome| {
        let t = start.elapsed();
        let passed = o.passed && t <= budget;
        let known = EXPECTED_FAILURES.iter().find(|e| e.0 == n);
        match (passed, known) {
            (false, Some(_)) => expected += 1,
            (false, None) => failed += 1,
            (true, Some(_)) => unexpected_pass += 1,
            (true, None) => {}
        }
        println!(
            "{} {n:>2} {name}: {} [{:.1} s, budget {} s]{}",
            if passed { "PASS" } else { "FAIL" },
            o.detail,
            t.as_secs_f64(),
            budget.as_secs(),
            known.map_or(String::new(), |k| format!(" (expected failure: {})", k.1))
        );
    };
    let secs = Duration::from_secs;
    let t = Instant::now();
    report(1, "telescoping", secs(10), t, telescoping());
    let t = Instant::now();
    report(2, "active set", secs(5), t, active_set_exactness());
    let t = Instant::now();
    report(3, "plan constraint", secs(1), t, plan_constraint());
    let t = Instant::now();
    report(4, "fem rates", secs(30), t, fem_rates());
    let t = Instant::now();
    report(5, "cubature rates", secs(120), t, cubature_rates());
    let t = Instant::now();
    let (six, seven) = randomized_sweep();
    report(6, "end-to-end error", secs(600), t, six);
    report(7, "cost exponent", secs(600), t, seven);
    let t = Instant::now();
    report(8, "deterministic branch", secs(900), t, deterministic_sweep());
    let t = Instant::now();
    report(9, "baseline comparison", secs(900), t, baseline_comparison());
    let t = Instant::now();
    report(10, "determinism", secs(600), t, determinism());
    println!("{failed} unexpected failures, {expected} expected failures, {unexpected_pass} unexpected passes");
    if failed == 0 && unexpected_pass == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
