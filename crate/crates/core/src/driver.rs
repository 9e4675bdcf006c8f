//! Planning and execution of the decomposition estimator, plus the single-level baseline.

use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::activeset::{active_set, ActiveSet, Diagnostics, IndexSet, Selection};
use crate::anchored::{Anchored, SubsetSolveCache};
use crate::error::{config, numerical, Result};
use crate::fem1d::{Discretization, Mesh1D};
use crate::kernel::embedding_constant;
use crate::polylattice::{generate_points, DigitalShift, RuleSource};
use crate::problem::{cubature_constants, CubatureConstants, Mode, ProblemSpec, RateParams, WeightSequence};

/// Dimension `d` of the physical domain.
const D: f64 = 1.0;

/// Finest mesh the planner will hand out.
pub const MAX_MESH_LEVEL: u32 = 24;

#[derive(Clone, Debug, PartialEq)]
pub struct PlanRecord {
    pub set: IndexSet,
    /// `γ_u`
    pub gamma: f64,
    /// `γ_u M_u`
    pub weight: f64,
    /// `C_{u,λ}`
    pub c_u: f64,
    /// `£_u = 2^{|u|} |u|`, with `£_∅ = 1`.
    pub pounds: f64,
    /// Unrounded number of points.
    pub k: f64,
    /// Points used: `k` rounded up to a power of two (`1` for `∅`).
    pub n: u64,
    pub m: u32,
    /// Unrounded mesh width.
    pub h: f64,
    pub mesh: Mesh1D,
}

#[derive(Clone, Debug)]
pub struct ParameterPlan {
    pub records: Vec<PlanRecord>,
    pub epsilon: f64,
    pub rates: RateParams,
    pub constants: CubatureConstants,
    pub m_embed: f64,
    pub fem_constant: f64,
    pub degree: u32,
    pub a: f64,
    pub b: f64,
    pub a_tilde: f64,
    pub b_tilde: f64,
    pub xi: f64,
    /// `Σ_u (γ_u^τ C_u^τ 2^{λd|u|} £_u^{λτ})^{1/(λ(τ+d)+τ)}`
    pub norm_sum: f64,
    /// Bound on the cubature and discretisation error after rounding.
    pub predicted_error2: f64,
    /// `Σ_u n_u h_u^{-1} £_u` with the rounded values.
    pub predicted_cost: f64,
    pub diagnostics: Diagnostics,
}

impl ParameterPlan {
    /// `|Σ_u (γ_u C_u k_u^{-λ} + c 2^{|u|} h_u^τ) - ε/2| / (ε/2)` with the unrounded values.
    pub fn constraint_residual(&self) -> f64 {
        let lam = self.rates.lambda;
        let tau = self.rates.tau;
        let total: f64 = self
            .records
            .iter()
            .map(|r| {
                r.gamma * r.c_u * r.k.powf(-lam) + self.fem_constant * 2f64.powi(r.set.len() as i32) * r.h.powf(tau)
            })
            .sum();
        (total - self.epsilon / 2.0).abs() / (self.epsilon / 2.0)
    }

    pub fn max_cardinality(&self) -> usize {
        self.records.iter().map(|r| r.set.len()).max().unwrap_or(0)
    }

    /// Smoothness order of the point sets: `α` in the deterministic branch, 1 otherwise.
    pub fn rule_order(&self) -> u32 {
        match self.rates.mode {
            Mode::Deterministic => self.rates.alpha,
            Mode::Randomized => 1,
        }
    }
}

/// `£_u = 2^{|u|} |u|`, with the one solve of the empty set counted as 1.
pub fn pounds(card: usize) -> f64 {
    if card == 0 {
        1.0
    } else {
        2f64.powi(card as i32) * card as f64
    }
}

/// Active set for `problem` at accuracy `epsilon`.
pub fn active_set_for(problem: &ProblemSpec, rates: &RateParams, epsilon: f64) -> Result<ActiveSet> {
    let m = embedding_constant(rates.alpha);
    active_set(problem.model.weights(), m, Selection::for_pstar(rates.pstar), epsilon)
}

/// Full plan: rates, active set, then the Lagrange solution for `(h_u, k_u)`.
pub fn plan_for(problem: &ProblemSpec, epsilon: f64, fem_constant: f64) -> Result<ParameterPlan> {
    problem.validate()?;
    let rates = problem.rates()?;
    let constants = cubature_constants(&rates)?;
    let aset = active_set_for(problem, &rates, epsilon)?;
    make_plan(&aset, problem.model.weights(), &rates, &constants, epsilon, problem.degree, fem_constant)
}

/// Minimises `Σ k_u h_u^{-d} £_u` subject to `Σ (γ_u C_u k_u^{-λ} + c 2^{|u|} h_u^τ) = ε/2`.
pub fn make_plan(
    aset: &ActiveSet,
    weights: &dyn WeightSequence,
    rates: &RateParams,
    constants: &CubatureConstants,
    epsilon: f64,
    degree: u32,
    fem_constant: f64,
) -> Result<ParameterPlan> {
    if aset.is_empty() {
        return config(format!("active set is empty for epsilon = {epsilon}: nothing to plan"));
    }
    if !(fem_constant > 0.0) {
        return config("fem_constant must be positive");
    }
    let lam = rates.lambda;
    let tau = rates.tau;
    let e = lam * (tau + D) + tau;
    let m_embed = embedding_constant(rates.alpha);

    let a = (D.powf(lam + 1.0) * lam / tau.powf(lam + 1.0)).powf(1.0 / e);
    let b = (D.powf(D) * lam.powf(tau + D) / tau.powf(D)).powf(1.0 / e);
    let a_tilde = 2f64.powf(-1.0 / tau) * a * (a.powf(tau) + b.powf(-lam)).powf(-1.0 / tau);
    let b_tilde = 2f64.powf(1.0 / lam) * b * (a.powf(tau) + b.powf(-lam)).powf(1.0 / lam);

    struct Pre {
        set: IndexSet,
        gamma: f64,
        weight: f64,
        c_u: f64,
        l: f64,
        hh: f64,
        kk: f64,
        p: f64,
        q: f64,
    }
    let mut pre = Vec::with_capacity(aset.len());
    let mut norm_sum = 0.0;
    for mb in aset.members() {
        let card = mb.set.len();
        let gamma: f64 = mb.set.as_slice().iter().map(|&j| weights.gamma(j)).product();
        let c_u = constants.c_u(card);
        let l = pounds(card);
        let p = gamma * c_u;
        let q = fem_constant * 2f64.powi(card as i32);
        let hh = (lam * D.powf(lam + 1.0) / tau.powf(lam + 1.0)).powf(1.0 / e)
            * (p * l.powf(lam) / q.powf(lam + 1.0)).powf(1.0 / e);
        let kk = tau * q * hh.powf(tau + D) / (D * l);
        norm_sum += (gamma.powf(tau) * c_u.powf(tau) * 2f64.powf(lam * D * card as f64) * l.powf(lam * tau)).powf(1.0 / e);
        pre.push(Pre { set: mb.set.clone(), gamma, weight: mb.weight, c_u, l, hh, kk, p, q });
    }
    let s: f64 = pre.iter().map(|r| r.p * r.kk.powf(-lam) + r.q * r.hh.powf(tau)).sum();
    if !(s.is_finite() && s > 0.0 && norm_sum.is_finite()) {
        return numerical(format!("plan normalisation sum is not finite (lambda = {lam})"));
    }
    let xi = (2.0 * s / epsilon).powf(e / (lam * tau));

    let max_m = match rates.mode {
        Mode::Deterministic => (63 / rates.alpha).min(40),
        Mode::Randomized => 40,
    };
    let mut records = Vec::with_capacity(pre.len());
    let mut predicted_error2 = 0.0;
    let mut predicted_cost = 0.0;
    for r in pre {
        let h = r.hh * xi.powf(-lam / e);
        let k = r.kk * xi.powf(tau / e);
        let (n, m) = if r.set.is_empty() {
            (1u64, 0u32)
        } else {
            let m = k.max(1.0).log2().ceil().max(0.0) as u32;
            let m = if 2f64.powi(m as i32) < k { m + 1 } else { m };
            if m > max_m {
                return numerical(format!("subset {} needs 2^{m} points, beyond the rule limit 2^{max_m}", r.set));
            }
            (1u64 << m, m)
        };
        let mesh = Mesh1D::for_width(h, degree)?;
        if mesh.elements() > 1 << MAX_MESH_LEVEL {
            return numerical(format!("subset {} needs {} elements", r.set, mesh.elements()));
        }
        // the empty set integrates a constant: no cubature error
        if !r.set.is_empty() {
            predicted_error2 += r.p * (n as f64).powf(-lam);
        }
        predicted_error2 += r.q * mesh.h().powf(tau);
        predicted_cost += n as f64 * mesh.elements() as f64 * r.l;
        records.push(PlanRecord {
            set: r.set,
            gamma: r.gamma,
            weight: r.weight,
            c_u: r.c_u,
            pounds: r.l,
            k,
            n,
            m,
            h,
            mesh,
        });
    }
    Ok(ParameterPlan {
        records,
        epsilon,
        rates: *rates,
        constants: *constants,
        m_embed,
        fem_constant,
        degree,
        a,
        b,
        a_tilde,
        b_tilde,
        xi,
        norm_sum,
        predicted_error2,
        predicted_cost,
        diagnostics: aset.diagnostics(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubsetContribution {
    pub set: IndexSet,
    pub n: u64,
    pub elements: usize,
    /// Mean over shifts of the subset's cubature value.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MdfemResult {
    pub value: f64,
    /// Standard error across shifts (randomized mode).
    pub stderr: Option<f64>,
    pub epsilon: f64,
    pub cost_units: f64,
    pub wall_ms: f64,
    pub contributions: Vec<SubsetContribution>,
    pub mode: Mode,
    pub shift_count: usize,
    pub seed: u64,
    pub active_set_size: usize,
    pub max_cardinality: usize,
    /// Distinct finite element solves performed.
    pub solves: u64,
}

/// Seed of the shifts belonging to subset `u`.
pub fn subset_seed(seed: u64, u: &IndexSet) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for &j in u.as_slice() {
        h.update((j as u64).to_le_bytes());
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

/// Per-shift cubature means of one subset, and the number of solves spent.
fn subset_estimates(
    problem: &ProblemSpec,
    rec: &PlanRecord,
    alpha: u32,
    rules: &RuleSource,
    shifts: &[Option<DigitalShift>],
) -> Result<(Vec<f64>, u64)> {
    let idx = rec.set.as_slice();
    let disc = Discretization::new(&problem.model, &problem.f, &problem.functional, rec.mesh, idx);
    if rec.set.is_empty() {
        let v = disc.value(&[])?;
        return Ok((vec![v; shifts.len()], 1));
    }
    let w: Vec<f64> = idx.iter().map(|&j| problem.model.weights().gamma(j)).collect();
    let rule = rules.get(alpha, rec.m, &w)?;
    let cache = SubsetSolveCache::new(rec.mesh);
    let ev = Anchored::new(&disc).with_cache(&cache);
    let mut out = Vec::with_capacity(shifts.len());
    for sh in shifts {
        let nodes = generate_points(&rule, sh.as_ref());
        let vals: Vec<f64> = (0..nodes.len())
            .into_par_iter()
            .map(|k| ev.decomposed_value(&rec.set, nodes.point(k)))
            .collect::<Result<_>>()?;
        out.push(vals.iter().sum::<f64>() / nodes.len() as f64);
    }
    Ok((out, cache.misses()))
}

fn execute(plan: &ParameterPlan, problem: &ProblemSpec, rules: &RuleSource, shifts: usize, seed: Option<u64>) -> Result<MdfemResult> {
    let start = Instant::now();
    let alpha = plan.rule_order();
    let per_subset: Vec<(Vec<f64>, u64)> = plan
        .records
        .par_iter()
        .map(|rec| {
            let sh: Vec<Option<DigitalShift>> = match seed {
                None => vec![None],
                Some(seed) => {
                    let ss = subset_seed(seed, &rec.set);
                    (0..shifts).map(|r| Some(DigitalShift::from_seed(ss, r as u64, rec.set.len()))).collect()
                }
            };
            subset_estimates(problem, rec, alpha, rules, &sh)
        })
        .collect::<Result<_>>()?;
    let r = per_subset.first().map_or(1, |p| p.0.len());
    let totals: Vec<f64> = (0..r).map(|i| per_subset.iter().map(|p| p.0[i]).sum()).collect();
    let value = totals.iter().sum::<f64>() / r as f64;
    let stderr = seed.map(|_| {
        let var = totals.iter().map(|t| (t - value).powi(2)).sum::<f64>() / (r as f64 - 1.0);
        (var / r as f64).sqrt()
    });
    let contributions = plan
        .records
        .iter()
        .zip(&per_subset)
        .map(|(rec, p)| SubsetContribution {
            set: rec.set.clone(),
            n: rec.n,
            elements: rec.mesh.elements(),
            value: p.0.iter().sum::<f64>() / r as f64,
        })
        .collect();
    Ok(MdfemResult {
        value,
        stderr,
        epsilon: plan.epsilon,
        cost_units: r as f64 * plan.predicted_cost,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        contributions,
        mode: if seed.is_some() { Mode::Randomized } else { Mode::Deterministic },
        shift_count: if seed.is_some() { r } else { 0 },
        seed: seed.unwrap_or(0),
        active_set_size: plan.records.len(),
        max_cardinality: plan.max_cardinality(),
        solves: per_subset.iter().map(|p| p.1).sum(),
    })
}

/// Unshifted higher-order rules of order `α` for every subset.
pub fn run_deterministic(plan: &ParameterPlan, problem: &ProblemSpec, rules: &RuleSource) -> Result<MdfemResult> {
    if plan.rates.mode != Mode::Deterministic {
        return config("deterministic run needs lambda >= 1");
    }
    execute(plan, problem, rules, 1, None)
}

/// `shifts` independent digital shifts per subset, drawn from `(seed, subset, shift index)`.
pub fn run_randomized(
    plan: &ParameterPlan,
    problem: &ProblemSpec,
    rules: &RuleSource,
    shifts: usize,
    seed: u64,
) -> Result<MdfemResult> {
    if plan.rates.mode != Mode::Randomized {
        return config("randomized run needs lambda in [1/2, 1)");
    }
    if shifts < 2 {
        return config(format!("need at least 2 shifts for a standard error, got {shifts}"));
    }
    execute(plan, problem, rules, shifts, Some(seed))
}

/// Runs whichever branch the plan's rates select.
pub fn run_plan(plan: &ParameterPlan, problem: &ProblemSpec, rules: &RuleSource, shifts: usize, seed: u64) -> Result<MdfemResult> {
    match plan.rates.mode {
        Mode::Deterministic => run_deterministic(plan, problem, rules),
        Mode::Randomized => run_randomized(plan, problem, rules, shifts, seed),
    }
}

/// Parameters of the single-level method: truncation dimension, `2^m` points and one mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselinePlan {
    pub s: usize,
    pub m: u32,
    pub mesh: Mesh1D,
}

/// Constants of the single-level error model `c_q N^{-1/p*} + c_h h^τ + c_t (sup_{j>s} b_j)^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselineConstants {
    pub quad: f64,
    pub fem: f64,
    pub trunc: f64,
}

impl Default for BaselineConstants {
    fn default() -> Self {
        BaselineConstants { quad: 1.0, fem: 1.0, trunc: 1.0 }
    }
}

/// Each of the three error terms gets `ε/3`.
pub fn plan_single_level(
    problem: &ProblemSpec,
    rates: &RateParams,
    epsilon: f64,
    consts: BaselineConstants,
) -> Result<BaselinePlan> {
    let third = epsilon / 3.0;
    let n_min = (consts.quad / third).powf(rates.pstar);
    let m = n_min.max(1.0).log2().ceil() as u32;
    let h = (third / consts.fem).powf(1.0 / rates.tau);
    let w = problem.model.weights();
    let mut s = 0;
    while consts.trunc * w.tail_sup(s).powi(2) > third {
        s += 1;
        if s > 64 {
            return numerical("single-level truncation dimension exceeds 64");
        }
    }
    Ok(BaselinePlan { s, m, mesh: Mesh1D::for_width(h, problem.degree)? })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineResult {
    pub value: f64,
    pub stderr: Option<f64>,
    pub cost_units: f64,
    pub wall_ms: f64,
    pub plan: BaselinePlan,
}

/// One `s`-dimensional rule with `2^m` points on one mesh; `cost = R N h^{-1} max(s, 1)`.
///
/// `shifts = 0` runs the unshifted order-`alpha` rule.
pub fn single_level_baseline(
    problem: &ProblemSpec,
    plan: BaselinePlan,
    alpha: u32,
    rules: &RuleSource,
    shifts: usize,
    seed: u64,
) -> Result<BaselineResult> {
    let start = Instant::now();
    let idx: Vec<usize> = (1..=plan.s).collect();
    let disc = Discretization::new(&problem.model, &problem.f, &problem.functional, plan.mesh, &idx);
    let n = 1u64 << plan.m;
    if plan.s == 0 {
        let v = disc.value(&[])?;
        return Ok(BaselineResult {
            value: v,
            stderr: (shifts > 0).then_some(0.0),
            cost_units: plan.mesh.elements() as f64 * shifts.max(1) as f64,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            plan,
        });
    }
    if shifts == 1 {
        return config("need 0 (unshifted) or at least 2 shifts");
    }
    let w: Vec<f64> = idx.iter().map(|&j| problem.model.weights().gamma(j)).collect();
    let rule = rules.get(alpha, plan.m, &w)?;
    let sh: Vec<Option<DigitalShift>> = if shifts == 0 {
        vec![None]
    } else {
        let ss = subset_seed(seed, &IndexSet::first(plan.s));
        (0..shifts).map(|r| Some(DigitalShift::from_seed(ss, r as u64, plan.s))).collect()
    };
    let mut est = Vec::with_capacity(sh.len());
    for shift in &sh {
        let nodes = generate_points(&rule, shift.as_ref());
        let vals: Vec<f64> = (0..nodes.len()).into_par_iter().map(|k| disc.value(nodes.point(k))).collect::<Result<_>>()?;
        est.push(vals.iter().sum::<f64>() / nodes.len() as f64);
    }
    let r = est.len() as f64;
    let value = est.iter().sum::<f64>() / r;
    let stderr = (shifts >= 2).then(|| (est.iter().map(|e| (e - value).powi(2)).sum::<f64>() / (r - 1.0) / r).sqrt());
    Ok(BaselineResult {
        value,
        stderr,
        cost_units: r * n as f64 * plan.mesh.elements() as f64 * plan.s as f64,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        plan,
    })
}
