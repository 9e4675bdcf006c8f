//! Line-based `section.key = value` run configuration and the built-in presets.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{config, Error, Result};
use crate::polylattice::Strategy;
use crate::problem::{BFamily, BSequence, DiffusionModel, Functional, Profile, ProblemSpec};

/// Every key the parser accepts.
const KEYS: &[&str] = &[
    "problem.family",
    "problem.a0",
    "problem.c",
    "problem.theta",
    "problem.sigma",
    "problem.alpha_hat",
    "problem.delta",
    "problem.c_delta",
    "problem.f",
    "problem.g",
    "problem.functional",
    "problem.point",
    "problem.point_width",
    "problem.t",
    "problem.tprime",
    "problem.degree",
    "weights.b",
    "weights.scale",
    "weights.beta",
    "weights.ratio",
    "weights.jmax",
    "weights.pstar",
    "run.epsilon",
    "run.mode",
    "run.shifts",
    "run.seed",
    "run.replications",
    "run.fem_constant",
    "run.oracle_points",
    "run.oracle_level",
    "run.record_timing",
    "plan.strategy",
    "plan.candidates",
    "plan.cache",
    "output.csv",
    "baseline.quad",
    "baseline.fem",
    "baseline.trunc",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeChoice {
    Auto,
    Deterministic,
    Randomized,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub epsilons: Vec<f64>,
    pub mode: ModeChoice,
    pub shifts: usize,
    pub seed: u64,
    pub replications: usize,
    pub fem_constant: f64,
    pub oracle_points: usize,
    pub oracle_level: u32,
    pub record_timing: bool,
    pub strategy: Strategy,
    pub cache: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub baseline: crate::driver::BaselineConstants,
}

/// Raw `key -> value` pairs after syntax and key checks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigMap(BTreeMap<String, String>);

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'section.key = value'", no + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return config(format!("line {}: unknown key '{k}'", no + 1));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return config(format!("line {}: duplicate key '{k}'", no + 1));
            }
        }
        Ok(ConfigMap(map))
    }

    /// Keys of `other` replace those of `self`.
    pub fn merged(mut self, other: ConfigMap) -> Self {
        self.0.extend(other.0);
        self
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return config(format!("unknown key '{key}'"));
        }
        self.0.insert(key.into(), value.into());
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn num(&self, key: &str, default: Option<f64>) -> Result<f64> {
        match self.raw(key) {
            Some(v) => parse_num(v).ok_or_else(|| Error::Config(format!("{key}: '{v}' is not a number"))),
            None => default.ok_or_else(|| Error::Config(format!("missing key {key}"))),
        }
    }

    fn int(&self, key: &str, default: Option<u64>) -> Result<u64> {
        match self.raw(key) {
            Some(v) => v.parse().map_err(|_| Error::Config(format!("{key}: '{v}' is not a non-negative integer"))),
            None => default.ok_or_else(|| Error::Config(format!("missing key {key}"))),
        }
    }

    fn text<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.raw(key).unwrap_or(default)
    }

    pub fn build(&self) -> Result<RunConfig> {
        let pstar = self.num("weights.pstar", None)?;
        crate::problem::check_pstar(pstar)?;
        let jmax = match self.raw("weights.jmax") {
            Some(_) => Some(self.int("weights.jmax", None)? as usize),
            None => None,
        };
        let a0: Profile = self.text("problem.a0", "1").parse()?;
        let family = self.text("problem.family", "sine");
        let model = match family {
            "sine" => {
                let b = match self.text("weights.b", "power") {
                    "power" => BFamily::Power {
                        scale: self.num("weights.scale", Some(1.0))?,
                        beta: self.num("weights.beta", None)?,
                    },
                    "geometric" => BFamily::Geometric {
                        scale: self.num("weights.scale", Some(1.0))?,
                        ratio: self.num("weights.ratio", None)?,
                    },
                    other => return config(format!("weights.b: unknown family '{other}' (power, geometric)")),
                };
                DiffusionModel::sine(
                    a0,
                    self.num("problem.c", None)?,
                    self.num("problem.theta", Some(1.5))?,
                    BSequence::new(b, jmax),
                    pstar,
                )?
            }
            "wavelet" => {
                if self.raw("weights.b").is_some_and(|b| b != "wavelet") {
                    return config("the wavelet family fixes weights.b = wavelet");
                }
                DiffusionModel::wavelet(
                    a0,
                    self.num("problem.sigma", None)?,
                    self.num("problem.alpha_hat", None)?,
                    self.num("problem.delta", None)?,
                    self.num("problem.c_delta", Some(1.0))?,
                    jmax,
                    pstar,
                )?
            }
            other => return config(format!("problem.family: unknown family '{other}' (sine, wavelet)")),
        };
        let functional = match self.text("problem.functional", "integral") {
            "integral" => Functional::integral(self.text("problem.g", "1").parse()?),
            "point" => {
                let w = self.num("problem.point_width", Some(0.05))?;
                if !(w > 0.0) {
                    return config("problem.point_width must be positive");
                }
                Functional::smoothed_point(self.num("problem.point", None)?, w)
            }
            other => return config(format!("problem.functional: unknown kind '{other}' (integral, point)")),
        };
        let problem = ProblemSpec {
            model,
            f: self.text("problem.f", "1").parse()?,
            functional,
            t: self.num("problem.t", None)?,
            tprime: self.num("problem.tprime", None)?,
            degree: self.int("problem.degree", Some(1))? as u32,
        };
        problem.validate()?;

        let epsilons = self
            .text("run.epsilon", "0.05")
            .split(',')
            .map(|e| parse_num(e.trim()).filter(|v| *v > 0.0))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::Config("run.epsilon: expected a comma list of positive numbers".into()))?;
        let mode = match self.text("run.mode", "auto") {
            "auto" => ModeChoice::Auto,
            "deterministic" => ModeChoice::Deterministic,
            "randomized" => ModeChoice::Randomized,
            other => return config(format!("run.mode: unknown mode '{other}'")),
        };
        let strategy = match self.text("plan.strategy", "cbc") {
            "cbc" => Strategy::Cbc,
            "random" => Strategy::Random { candidates: self.int("plan.candidates", Some(64))? },
            "fixed" => Strategy::Fixed,
            other => return config(format!("plan.strategy: unknown strategy '{other}'")),
        };
        let record_timing = match self.text("run.record_timing", "false") {
            "true" => true,
            "false" => false,
            other => return config(format!("run.record_timing: expected true or false, got '{other}'")),
        };
        Ok(RunConfig {
            problem,
            epsilons,
            mode,
            shifts: self.int("run.shifts", Some(8))? as usize,
            seed: self.int("run.seed", Some(0))?,
            replications: self.int("run.replications", Some(1))?.max(1) as usize,
            fem_constant: self.num("run.fem_constant", Some(1.0))?,
            oracle_points: self.int("run.oracle_points", Some(5))? as usize,
            oracle_level: self.int("run.oracle_level", Some(10))? as u32,
            record_timing,
            strategy,
            cache: self.raw("plan.cache").map(PathBuf::from),
            csv: self.raw("output.csv").map(PathBuf::from),
            baseline: crate::driver::BaselineConstants {
                quad: self.num("baseline.quad", Some(1.0))?,
                fem: self.num("baseline.fem", Some(1.0))?,
                trunc: self.num("baseline.trunc", Some(1.0))?,
            },
        })
    }
}

/// Decimal number or `2^-k` / `2^k`.
fn parse_num(s: &str) -> Option<f64> {
    if let Some(e) = s.strip_prefix("2^") {
        return e.parse::<i32>().ok().map(|e| 2f64.powi(e));
    }
    if let Some((a, b)) = s.split_once('/') {
        return Some(a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?);
    }
    s.parse().ok()
}

const RANDOMIZED: &str = "\
problem.family = sine
problem.a0 = trig:1,0.2,1
problem.c = 0.4
problem.theta = 2
problem.f = 1
problem.g = 1
problem.t = 1
problem.tprime = 1
problem.degree = 1
weights.b = geometric
weights.ratio = 1/8
weights.jmax = 6
weights.pstar = 0.5
run.epsilon = 2^-3,2^-4,2^-5,2^-6,2^-7,2^-8
run.shifts = 4
run.seed = 20240611
run.replications = 10
run.oracle_points = 5
run.oracle_level = 10
";

const HALVES: &str = "\
problem.family = sine
problem.a0 = trig:1,0.2,1
problem.c = 0.4
problem.theta = 2
problem.f = 1
problem.g = 1
problem.t = 1
problem.tprime = 1
problem.degree = 1
weights.b = geometric
weights.ratio = 1/2
weights.jmax = 10
weights.pstar = 0.5
run.epsilon = 0.05
run.shifts = 4
";

const DETERMINISTIC: &str = "\
problem.family = sine
problem.a0 = trig:1,0.2,1
problem.c = 0.25
problem.theta = 2
problem.f = 1
problem.g = 1
problem.t = 2
problem.tprime = 2
problem.degree = 2
weights.b = geometric
weights.ratio = 1/4
weights.jmax = 6
weights.pstar = 1/3
run.epsilon = 2^-3,2^-4,2^-5,2^-6,2^-7
run.oracle_points = 5
run.oracle_level = 7
";

const COMPARISON: &str = "\
problem.family = sine
problem.a0 = trig:1,0.2,1
problem.c = 0.15
problem.theta = 2
problem.f = 1
problem.g = 1
problem.t = 2
problem.tprime = 2
problem.degree = 2
weights.b = geometric
weights.ratio = 1/16
weights.jmax = 6
weights.pstar = 0.25
run.epsilon = 2^-4,2^-5,2^-6,2^-7,2^-8
run.oracle_points = 5
run.oracle_level = 7
";

const WAVELET: &str = "\
problem.family = wavelet
problem.a0 = 1
problem.sigma = 0.3
problem.alpha_hat = 3
problem.delta = 0.5
problem.c_delta = 3
problem.f = 1
problem.g = 1
problem.t = 1
problem.tprime = 1
problem.degree = 1
weights.jmax = 7
weights.pstar = 0.5
run.epsilon = 0.1,0.05
";

/// Names accepted by `builtin:<name>`.
pub const PRESETS: &[&str] = &["randomized", "halves", "deterministic", "comparison", "wavelet"];

pub fn preset(name: &str) -> Result<ConfigMap> {
    let text = match name {
        "randomized" => RANDOMIZED,
        "halves" => HALVES,
        "deterministic" => DETERMINISTIC,
        "comparison" => COMPARISON,
        "wavelet" => WAVELET,
        other => return config(format!("unknown preset '{other}' (one of {})", PRESETS.join(", "))),
    };
    ConfigMap::parse(text)
}

/// `builtin:<name>` or a file path.
pub fn load(spec: &str) -> Result<ConfigMap> {
    match spec.strip_prefix("builtin:") {
        Some(name) => preset(name),
        None => ConfigMap::parse(&std::fs::read_to_string(Path::new(spec))?),
    }
}
