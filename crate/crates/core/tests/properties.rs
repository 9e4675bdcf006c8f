mod common;

use std::collections::BTreeSet;

use mdfem::activeset::{active_set, IndexSet, Selection};
use mdfem::anchored::{Anchored, SubsetSolveCache};
use mdfem::driver::{active_set_for, make_plan, plan_for};
use mdfem::fem1d::{assemble_solve, Discretization, Mesh1D};
use mdfem::kernel::embedding_constant;
use mdfem::oracles::subset_sum_bruteforce;
use mdfem::problem::{
    cubature_constants, product_weight_sum, rates_from, BFamily, BSequence, Functional, Mode, Profile, WeightSequence,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

use common::{problem, sine_model};

fn explicit(b: &[f64]) -> BSequence {
    BSequence::new(BFamily::Explicit(b.to_vec()), None)
}

/// Every subset of `{1..J}` passing the membership rule, by enumerating all masks.
fn brute_members(b: &[f64], m: f64, pstar: f64, eps: f64, s_upper: f64) -> BTreeSet<Vec<usize>> {
    let sel = Selection::for_pstar(pstar);
    let threshold = eps / 2.0 / s_upper;
    (0..1usize << b.len())
        .filter_map(|mask| {
            let set: Vec<usize> = (0..b.len()).filter(|i| mask >> i & 1 == 1).map(|i| i + 1).collect();
            let w: f64 = set.iter().map(|&j| b[j - 1] * m).product();
            (w.powf(sel.membership_exponent()) > threshold).then_some(set)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lambda_decreases_in_pstar(p in 0.05f64..0.6, dp in 0.01f64..0.3, t in 0.5f64..2.0) {
        let a = rates_from(p, t, t);
        let b = rates_from(p + dp, t, t);
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!(b.lambda < a.lambda);
            prop_assert!(b.a_mdm > a.a_mdm);
        }
    }

    #[test]
    fn rate_branches_are_consistent(p in 0.02f64..0.98, t in 0.25f64..3.0) {
        match rates_from(p, t, t) {
            Ok(r) => {
                prop_assert!(r.lambda >= 0.5);
                prop_assert_eq!(r.alpha, r.lambda.floor() as u32 + 1);
                prop_assert_eq!(r.mode == Mode::Deterministic, r.lambda >= 1.0);
                // a_MDM = 1/λ + d/τ
                prop_assert!((r.a_mdm - (1.0 / r.lambda + 1.0 / r.tau)).abs() < 1e-12 * r.a_mdm);
            }
            Err(e) => prop_assert!(e.to_string().contains("no theorem branch applies")),
        }
    }

    #[test]
    fn product_sum_encloses_bruteforce(
        b in prop::collection::vec(0.01f64..0.9, 1..12),
        m in 0.5f64..1.0,
        p in 0.2f64..1.0,
    ) {
        let seq = explicit(&b);
        let exact = subset_sum_bruteforce(&seq, m, p, b.len()).unwrap();
        let iv = product_weight_sum(&seq, m, p, 1e-12).unwrap();
        prop_assert!(iv.lower <= exact * (1.0 + 1e-12) && exact <= iv.upper * (1.0 + 1e-12));
    }

    #[test]
    fn dfs_equals_bruteforce(
        mut b in prop::collection::vec(0.005f64..0.95, 1..11),
        pstar in 0.2f64..0.8,
        log_eps in -9.0f64..-1.0,
    ) {
        b.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let seq = explicit(&b);
        let m = embedding_constant(1);
        let eps = log_eps.exp();
        let aset = active_set(&seq, m, Selection::for_pstar(pstar), eps).unwrap();
        let s = product_weight_sum(&seq, m, pstar, 1e-12).unwrap();
        let want = brute_members(&b, m, pstar, eps, s.upper);
        let got: BTreeSet<Vec<usize>> = aset.members().iter().map(|mb| mb.set.as_slice().to_vec()).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn active_set_is_downward_closed_and_nested(
        ratio in 0.05f64..0.7,
        pstar in 0.3f64..0.7,
        log_eps in -8.0f64..-1.0,
    ) {
        let seq = BSequence::new(BFamily::Geometric { scale: 1.0, ratio }, Some(14));
        let m = embedding_constant(1);
        let eps = log_eps.exp();
        let sel = Selection::for_pstar(pstar);
        let big = active_set(&seq, m, sel, eps / 2.0).unwrap();
        let small = active_set(&seq, m, sel, eps).unwrap();
        let members: BTreeSet<Vec<usize>> = big.members().iter().map(|mb| mb.set.as_slice().to_vec()).collect();
        for u in &members {
            for drop in 0..u.len() {
                let mut v = u.clone();
                v.remove(drop);
                prop_assert!(members.contains(&v), "{:?} missing subset {:?}", u, v);
            }
        }
        for mb in small.members() {
            prop_assert!(members.contains(mb.set.as_slice()));
        }
        let d = big.diagnostics();
        prop_assert!(d.tail_bound <= eps / 4.0 * (1.0 + 1e-9));
    }

    #[test]
    fn plan_meets_constraint_and_rounds_up(
        c in 0.05f64..0.4,
        ratio in 0.05f64..0.3,
        log2_eps in -7.0f64..-2.0,
        fem in 0.1f64..10.0,
    ) {
        let p = problem(sine_model(c, ratio, 6, 0.5), 1.0, 1);
        let eps = log2_eps.exp2();
        let plan = plan_for(&p, eps, fem).unwrap();
        prop_assert!(plan.constraint_residual() <= 1e-8);
        prop_assert!(plan.predicted_error2 <= eps / 2.0 * (1.0 + 1e-12));
        for r in &plan.records {
            prop_assert!(r.mesh.h() <= r.h);
            if r.set.is_empty() {
                prop_assert_eq!(r.n, 1);
            } else {
                prop_assert!(r.n as f64 >= r.k && r.n.is_power_of_two());
                prop_assert!((r.n as f64) < 2.0 * r.k.max(1.0));
            }
        }
    }

    #[test]
    fn halving_epsilon_rescales_plan(c in 0.05f64..0.4, log2_eps in -7.0f64..-2.0) {
        let p = problem(sine_model(c, 0.125, 6, 0.5), 1.0, 1);
        let rates = p.rates().unwrap();
        let consts = cubature_constants(&rates).unwrap();
        let eps = log2_eps.exp2();
        let aset = active_set_for(&p, &rates, eps).unwrap();
        let w = p.model.weights();
        let a = make_plan(&aset, w, &rates, &consts, eps, 1, 1.0).unwrap();
        let b = make_plan(&aset, w, &rates, &consts, eps / 2.0, 1, 1.0).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            prop_assert!((rb.k / ra.k - 2f64.powf(1.0 / rates.lambda)).abs() < 1e-10);
            prop_assert!((ra.h / rb.h - 2f64.powf(1.0 / rates.tau)).abs() < 1e-10);
        }
    }
}

fn disc3(c: f64, elements: usize, degree: u32) -> Discretization {
    let model = sine_model(c, 0.5, 3, 0.5);
    let g = Functional::integral(Profile::Constant(1.0));
    Discretization::new(&model, &Profile::Constant(1.0), &g, Mesh1D::new(elements, degree).unwrap(), &[1, 2, 3])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn anchored_terms_telescope(y in prop::array::uniform3(-0.5f64..0.5), c in 0.05f64..0.5) {
        let disc = disc3(c, 32, 1);
        let anch = Anchored::new(&disc);
        let all = IndexSet::first(3);
        let total: f64 = (0..8).map(|mask| {
            let u = all.select(mask);
            let yu: Vec<f64> = u.as_slice().iter().map(|&j| y[j - 1]).collect();
            anch.decomposed_value(&u, &yu).unwrap()
        }).sum();
        prop_assert!((total - disc.value(&y).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn anchored_terms_vanish_on_the_anchor(y in prop::array::uniform3(-0.5f64..0.5), mask in 1usize..8, zero in 0usize..3) {
        let disc = disc3(0.3, 16, 2);
        let anch = Anchored::new(&disc);
        let u = IndexSet::first(3).select(mask);
        prop_assume!(zero < u.len());
        let mut yu: Vec<f64> = u.as_slice().iter().map(|&j| y[j - 1]).collect();
        yu[zero] = 0.0;
        prop_assert!(anch.decomposed_value(&u, &yu).unwrap().abs() <= 1e-14);
    }

    #[test]
    fn cache_is_bit_identical(y in prop::array::uniform3(-0.5f64..0.5)) {
        let disc = disc3(0.3, 16, 1);
        let cache = SubsetSolveCache::new(disc.mesh());
        let plain = Anchored::new(&disc);
        let cached = Anchored::new(&disc).with_cache(&cache);
        let all = IndexSet::first(3);
        for mask in 0..8 {
            let u = all.select(mask);
            let yu: Vec<f64> = u.as_slice().iter().map(|&j| y[j - 1]).collect();
            prop_assert_eq!(
                plain.decomposed_value(&u, &yu).unwrap().to_bits(),
                cached.decomposed_value(&u, &yu).unwrap().to_bits()
            );
        }
        // one solve per distinct projection of y
        let distinct = 1 << y.iter().filter(|v| **v != 0.0).count();
        prop_assert_eq!(cache.misses() as usize, distinct);
    }

    #[test]
    fn stiffness_is_spd_and_solve_is_accurate(
        y in prop::array::uniform3(-0.5f64..0.5),
        c in 0.05f64..0.5,
        k in 2u32..6,
        degree in 1u32..4,
    ) {
        let disc = disc3(c, 1 << k, degree);
        let a = disc.dense_stiffness(&y).unwrap();
        let n = (a.len() as f64).sqrt() as usize;
        let mat = DMatrix::from_row_slice(n, n, &a);
        prop_assert!((&mat - mat.transpose()).amax() <= 1e-12 * mat.amax());
        let eig = mat.symmetric_eigenvalues();
        prop_assert!(eig.min() > 0.0);
        let sol = disc.solve(&y).unwrap();
        prop_assert!(disc.relative_residual(&y, &sol).unwrap() <= 1e-12);
    }

    #[test]
    fn functional_is_linear(y in prop::array::uniform3(-0.5f64..0.5), s in -3.0f64..3.0) {
        let model = sine_model(0.3, 0.5, 3, 0.5);
        let mesh = Mesh1D::new(16, 2).unwrap();
        let f = Profile::Constant(1.0);
        let g1 = Profile::Trig { c0: 0.5, amp: 1.0, freq: 2.0, phase: 0.3 };
        let gs = Profile::Trig { c0: 0.5 + s, amp: 1.0, freq: 2.0, phase: 0.3 };
        let val = |g: Profile| Discretization::new(&model, &f, &Functional::integral(g), mesh, &[1, 2, 3]).value(&y).unwrap();
        let combined = val(g1.clone()) + s * val(Profile::Constant(1.0));
        prop_assert!((val(gs) - combined).abs() <= 1e-12 * (1.0 + combined.abs()));
    }

    #[test]
    fn energy_obeys_a_priori_bound(y in prop::array::uniform3(-0.5f64..0.5), c in 0.05f64..0.5) {
        // |u|_{H1} ≤ ‖f‖_{H^-1} / a_min ≤ ‖f‖_{L2} / (π a_min) by Poincaré
        let model = sine_model(c, 0.5, 3, 0.5);
        let coords: Vec<(usize, f64)> = y.iter().enumerate().map(|(i, &v)| (i + 1, v)).collect();
        let sol = assemble_solve(&model, &Profile::Constant(1.0), &coords, Mesh1D::new(32, 1).unwrap()).unwrap();
        let a_min = (0..=2000).map(|i| model.coefficient(i as f64 / 2000.0, &coords)).fold(f64::INFINITY, f64::min);
        prop_assert!(a_min > 0.0);
        prop_assert!(sol.energy_norm() <= 1.0 / (std::f64::consts::PI * a_min));
    }
}

#[test]
fn weights_are_used_in_ascending_order() {
    let seq = BSequence::new(BFamily::Geometric { scale: 1.0, ratio: 0.5 }, Some(5));
    let u = IndexSet::new(vec![4, 1]).unwrap();
    assert_eq!(u.as_slice(), &[1, 4]);
    assert_eq!(u.weight(&seq, 1.0), seq.gamma(1) * seq.gamma(4));
}
