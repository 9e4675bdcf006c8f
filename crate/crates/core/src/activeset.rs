//! Active set: the finite family of subsets `u` whose weight `γ_u M_u` is large enough to keep.

use std::fmt;

use crate::error::{admissibility, config, Result};
use crate::problem::{product_weight_sum, Interval, WeightSequence};

/// Finite set of positive indices, stored strictly increasing.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn new(mut v: Vec<usize>) -> Result<Self> {
        v.sort_unstable();
        if v.first() == Some(&0) {
            return config("indices start at 1");
        }
        if v.windows(2).any(|w| w[0] == w[1]) {
            return config("repeated index in subset");
        }
        Ok(IndexSet(v))
    }

    pub fn empty() -> Self {
        IndexSet(Vec::new())
    }

    /// `{1, ..., s}`.
    pub fn first(s: usize) -> Self {
        IndexSet((1..=s).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    /// Subset selected by the bits of `mask` (bit `i` keeps the `i`-th smallest index).
    pub fn select(&self, mask: usize) -> IndexSet {
        IndexSet(self.0.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &j)| j).collect())
    }

    /// `Π_{j ∈ u} γ_j M`, multiplied in ascending index order.
    pub fn weight(&self, weights: &dyn WeightSequence, m: f64) -> f64 {
        self.0.iter().map(|&j| weights.gamma(j) * m).product()
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("{}");
        }
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Member {
    pub set: IndexSet,
    /// `γ_u M_u`
    pub weight: f64,
}

/// Exponents of the membership rule `(γ_u M_u)^{q(1-1/ς)} > (ε/2)^q / Σ_v (γ_v M_v)^{q/ς}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Selection {
    pub q: f64,
    pub varsigma: f64,
}

impl Selection {
    /// `q = 1`, `ς = 1/p*`: the rule `(γ_u M_u)^{1-p*} > (ε/2) / Σ_v (γ_v M_v)^{p*}`.
    pub fn for_pstar(pstar: f64) -> Self {
        Selection { q: 1.0, varsigma: 1.0 / pstar }
    }

    pub fn membership_exponent(&self) -> f64 {
        self.q * (1.0 - 1.0 / self.varsigma)
    }

    pub fn sum_exponent(&self) -> f64 {
        self.q / self.varsigma
    }
}

#[derive(Clone, Debug)]
pub struct ActiveSet {
    members: Vec<Member>,
    threshold: f64,
    epsilon: f64,
    selection: Selection,
    /// Upper bound on `Σ_v γ_v M_v`.
    s1_upper: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostics {
    pub cardinality: usize,
    pub max_card: usize,
    /// `Σ_{u ∈ 𝔘} γ_u M_u`
    pub in_set_mass: f64,
    /// Upper bound on `Σ_{u ∉ 𝔘} γ_u M_u`.
    pub tail_bound: f64,
}

/// Product-sum tolerance (in log space) used when the caller does not supply `S`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Largest index examined when looking for the end of the candidate list.
const MAX_SCAN: usize = 1 << 22;

impl ActiveSet {
    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn selection(&self) -> Selection {
        self.selection
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn diagnostics(&self) -> Diagnostics {
        let in_set_mass: f64 = self.members.iter().map(|m| m.weight).sum();
        Diagnostics {
            cardinality: self.members.len(),
            max_card: self.members.iter().map(|m| m.set.len()).max().unwrap_or(0),
            in_set_mass,
            tail_bound: (self.s1_upper - in_set_mass).max(0.0),
        }
    }
}

/// Active set for `q = 1`, `ς = 1/p*`, with `s` the interval for `Σ_v (γ_v M_v)^{p*}`.
pub fn build_active_set(
    weights: &dyn WeightSequence,
    m: f64,
    pstar: f64,
    epsilon: f64,
    s: Interval,
) -> Result<ActiveSet> {
    build_with(weights, m, Selection::for_pstar(pstar), epsilon, s.upper)
}

/// Active set computing the weight sum itself.
pub fn active_set(weights: &dyn WeightSequence, m: f64, selection: Selection, epsilon: f64) -> Result<ActiveSet> {
    let s = product_weight_sum(weights, m, selection.sum_exponent(), WEIGHT_SUM_TOL)?;
    build_with(weights, m, selection, epsilon, s.upper)
}

fn build_with(
    weights: &dyn WeightSequence,
    m: f64,
    selection: Selection,
    epsilon: f64,
    s_upper: f64,
) -> Result<ActiveSet> {
    if !(epsilon > 0.0) {
        return config(format!("epsilon must be positive, got {epsilon}"));
    }
    let e = selection.membership_exponent();
    if !(e > 0.0 && selection.q > 0.0) {
        return config("need q > 0 and varsigma > 1");
    }
    let threshold = (epsilon / 2.0).powf(selection.q) / s_upper;
    // (γ_u M_u)^e > threshold  <=>  γ_u M_u > cut
    let cut = threshold.powf(1.0 / e);

    let finite_from = first_index_below_one(weights, m)?;
    let big: f64 = (1..finite_from).map(|j| weights.gamma(j) * m).filter(|&g| g > 1.0).product();
    // no index past `last` can enter any set
    let mut last = finite_from.saturating_sub(1);
    loop {
        if weights.support().is_some_and(|s| last >= s) || weights.tail_sup(last) * m * big <= cut {
            break;
        }
        last += 1;
        if last > MAX_SCAN {
            return admissibility("enumeration not guaranteed finite: weights decay too slowly");
        }
    }
    let mut order: Vec<(usize, f64)> =
        (1..=last).map(|j| (j, weights.gamma(j) * m)).filter(|&(_, g)| g > 0.0).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    // product of the factors > 1 strictly after each position
    let mut big_after = vec![1.0; order.len() + 1];
    for i in (0..order.len()).rev() {
        big_after[i] = big_after[i + 1] * order[i].1.max(1.0);
    }

    // pruning uses a slightly relaxed cut; membership is settled afterwards
    let relaxed = cut * (1.0 - 1e-9);
    let mut found: Vec<IndexSet> = Vec::new();
    if 1.0 > relaxed {
        found.push(IndexSet::empty());
    }
    let mut stack: Vec<usize> = Vec::new();
    dfs(&order, &big_after, 0, 1.0, relaxed, &mut stack, &mut found);

    let mut members: Vec<Member> = found
        .into_iter()
        .map(|set| {
            let weight = set.weight(weights, m);
            Member { set, weight }
        })
        .filter(|mb| mb.weight.powf(e) > threshold)
        .collect();
    members.sort_by(|a, b| a.set.len().cmp(&b.set.len()).then_with(|| a.set.cmp(&b.set)));

    let s1 = product_weight_sum(weights, m, 1.0, WEIGHT_SUM_TOL)?;
    Ok(ActiveSet { members, threshold, epsilon, selection, s1_upper: s1.upper })
}

fn dfs(
    order: &[(usize, f64)],
    big_after: &[f64],
    start: usize,
    w: f64,
    cut: f64,
    stack: &mut Vec<usize>,
    out: &mut Vec<IndexSet>,
) {
    for c in start..order.len() {
        let wc = w * order[c].1;
        if wc * big_after[c + 1] <= cut {
            // later candidates have smaller factors and fewer large ones after them
            break;
        }
        stack.push(order[c].0);
        if wc > cut {
            let mut v = stack.clone();
            v.sort_unstable();
            out.push(IndexSet(v));
        }
        dfs(order, big_after, c + 1, wc, cut, stack, out);
        stack.pop();
    }
}

/// Smallest `J` with `γ_j M < 1` for every `j >= J`.
fn first_index_below_one(weights: &dyn WeightSequence, m: f64) -> Result<usize> {
    let mut j = 0;
    loop {
        if weights.support().is_some_and(|s| j >= s) || weights.tail_sup(j) * m < 1.0 {
            return Ok(j + 1);
        }
        j += 1;
        if j > MAX_SCAN {
            return admissibility("enumeration not guaranteed finite: gamma_j M >= 1 infinitely often");
        }
    }
}
