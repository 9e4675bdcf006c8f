#![allow(dead_code)]

use mdfem::config;
use mdfem::problem::{BFamily, BSequence, DiffusionModel, Functional, Profile, ProblemSpec};

pub fn preset(name: &str) -> config::RunConfig {
    config::preset(name).unwrap().build().unwrap()
}

/// Sine model with `b_j = ratio^j`, truncated at `jmax`.
pub fn sine_model(c: f64, ratio: f64, jmax: usize, pstar: f64) -> DiffusionModel {
    DiffusionModel::sine(
        Profile::Trig { c0: 1.0, amp: 0.2, freq: 1.0, phase: 0.0 },
        c,
        2.0,
        BSequence::new(BFamily::Geometric { scale: 1.0, ratio }, Some(jmax)),
        pstar,
    )
    .unwrap()
}

pub fn problem(model: DiffusionModel, t: f64, degree: u32) -> ProblemSpec {
    ProblemSpec {
        model,
        f: Profile::Constant(1.0),
        functional: Functional::integral(Profile::Constant(1.0)),
        t,
        tprime: t,
        degree,
    }
}
