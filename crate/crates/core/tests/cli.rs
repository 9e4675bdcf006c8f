use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
problem.family = sine
problem.a0 = trig:1,0.2,1
problem.c = 0.4
problem.theta = 2
problem.t = 1
problem.tprime = 1
weights.b = geometric
weights.ratio = 1/8
weights.jmax = 3
weights.pstar = 0.5
run.epsilon = 2^-2,2^-3,2^-4,2^-5
run.shifts = 4
run.seed = 7
run.replications = 5
run.oracle_points = 4
run.oracle_level = 6
";

fn mdfem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdfem")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn study_csv_shape_and_thread_independence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let one = dir.path().join("one.csv");
    let four = dir.path().join("four.csv");
    for (threads, out) in [("1", &one), ("4", &four)] {
        stdout(&mdfem(&["study", "--config", &cfg, "--threads", threads, "--out", out.to_str().unwrap()]));
    }
    let a = std::fs::read(&one).unwrap();
    assert_eq!(a, std::fs::read(&four).unwrap());
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epsilon,value,ref_value,abs_error,rmse,cost_units,wall_ms,active_set_size,max_cardinality,seed"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|r| r.len() == 10 && r[6].is_empty()));
    let seeds: Vec<&str> = rows[..5].iter().map(|r| r[9]).collect();
    assert_eq!(seeds, ["7", "8", "9", "10", "11"]);
}

#[test]
fn seed_flag_changes_randomized_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = stdout(&mdfem(&["run", "--config", &cfg, "--epsilon", "2^-3"]));
    let b = stdout(&mdfem(&["run", "--config", &cfg, "--epsilon", "2^-3", "--seed", "8"]));
    assert_ne!(a, b);
    assert_eq!(a, stdout(&mdfem(&["run", "--config", &cfg, "--epsilon", "2^-3"])));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = write_config(dir.path(), "weights.pstar = 0.5\nproblem.colour = red\n");
    assert_eq!(mdfem(&["plan", "--config", &bad_key]).status.code(), Some(2));
    let bad_p = write_config(dir.path(), &SMALL.replace("weights.pstar = 0.5", "weights.pstar = 1"));
    assert_eq!(mdfem(&["plan", "--config", &bad_p]).status.code(), Some(2));
    // κ too large for the randomized branch
    let big_c = write_config(dir.path(), &SMALL.replace("problem.c = 0.4", "problem.c = 3"));
    let o = mdfem(&["plan", "--config", &big_c]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kappa"));
    // λ < 1/2
    let low = write_config(dir.path(), &SMALL.replace("weights.pstar = 0.5", "weights.pstar = 0.7"));
    let o = mdfem(&["plan", "--config", &low]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no theorem branch applies"));
    assert_eq!(mdfem(&["plan", "--config", "builtin:nonesuch"]).status.code(), Some(2));
}

#[test]
fn validate_passes_and_detects_fault() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let ok = mdfem(&["validate", "--config", &cfg]);
    let text = stdout(&ok);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 5, "{text}");
    let bad = mdfem(&["validate", "--config", &cfg, "--inject-fault"]);
    assert_eq!(bad.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL telescoping"));
}

#[test]
fn rule_cache_is_reused_and_recreated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let cache = dir.path().join("rules");
    let c = cache.to_str().unwrap();
    let first = stdout(&mdfem(&["run", "--config", &cfg, "--cache", c, "--epsilon", "2^-4"]));
    let files = std::fs::read_dir(&cache).unwrap().count();
    assert!(files > 0);
    assert_eq!(first, stdout(&mdfem(&["run", "--config", &cfg, "--cache", c, "--epsilon", "2^-4"])));
    std::fs::remove_dir_all(&cache).unwrap();
    let env = Command::new(env!("CARGO_BIN_EXE_mdfem"))
        .args(["run", "--config", &cfg, "--epsilon", "2^-4"])
        .env("MDFEM_CACHE", c)
        .output()
        .unwrap();
    assert_eq!(first, stdout(&env));
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), files);
}

#[test]
fn plan_and_baseline_output() {
    let plan = stdout(&mdfem(&["plan", "--epsilon", "0.05"]));
    assert!(plan.contains("|U| = 5 d = 2"), "{plan}");
    let base = stdout(&mdfem(&["baseline", "--config", "builtin:comparison", "--epsilon", "2^-8"]));
    let mut lines = base.lines();
    assert_eq!(lines.next().unwrap(), "epsilon,value,stderr,cost_units,s,points,elements");
    assert_eq!(lines.count(), 1);
}
