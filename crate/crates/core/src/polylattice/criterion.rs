//! Shift-averaged worst-case error figure of merit.
//!
//! For a digital net the criterion is `sum over nonzero dual vectors h of prod_j r(h_j)`,
//! which equals `-1 + 2^{-m} sum_k prod_j (1 + γ_j ω_α(x_kj))` where
//! `ω_α(x) = sum_{k >= 1} ρ_α(k) wal_k(x)`.
//!
//! * `α = 1`: `ρ(k) = 4^{-μ_1(k)} / 3`, giving `ω_1(x) = 1/6 - 2^{-t-1}` with `t` the
//!   position of the first nonzero digit of `x`.
//! * `α >= 2`: `ρ(k) = 2^{-μ_α(k)}` (sum of the positions of the α leading digits of k).
//!   For `α = 2` this sums to `ω_2(x) = 3/2 - (5/2) 2^{-t} - t x`.

use super::PolyLatticeRule;

fn first_digit(frac: u64) -> i32 {
    frac.leading_zeros() as i32 + 1
}

/// `ω_α` evaluated at the point whose binary digits are `frac`.
pub fn omega(alpha: u32, frac: u64) -> f64 {
    match alpha {
        1 => {
            if frac == 0 {
                1.0 / 6.0
            } else {
                1.0 / 6.0 - 2f64.powi(-first_digit(frac) - 1)
            }
        }
        2 => {
            if frac == 0 {
                1.5
            } else {
                let t = first_digit(frac);
                let x = frac as f64 * 2f64.powi(-64);
                1.5 - 2.5 * 2f64.powi(-t) - f64::from(t) * x
            }
        }
        _ => omega_dp(alpha, frac),
    }
}

/// `ω_α` for `α >= 2` by a digit recursion over partial sums
/// `T_r(A) = sum_{k < 2^A} 2^{-μ_r(k)} wal_k(x)`:
/// `T_r(a) = T_r(a-1) + 2^{-a} (-1)^{x_a} T_{r-1}(a-1)` and `T_0(a) = 2^a [x_1 = .. = x_a = 0]`.
pub fn omega_dp(alpha: u32, frac: u64) -> f64 {
    assert!(alpha >= 2, "the 2^-mu series diverges for alpha = 1");
    let alpha = alpha as usize;
    let mut t = vec![1.0f64; alpha + 1];
    // digits past 64 are zero; 60 more levels push the tail below 2^-120
    for a in 1..=124u32 {
        let one = a <= 64 && (frac >> (64 - a)) & 1 == 1;
        let scale = if one { -(2f64.powi(-(a as i32))) } else { 2f64.powi(-(a as i32)) };
        for r in (1..=alpha).rev() {
            t[r] += scale * t[r - 1];
        }
        t[0] = if one { 0.0 } else { 2.0 * t[0] };
    }
    t[alpha] - 1.0
}

/// `Σ_k Π_j (1 + γ_j ω)` minus one, accumulated without the final cancellation.
pub(crate) fn product_excess(factors: impl Iterator<Item = f64>) -> f64 {
    let mut d = 0.0;
    for a in factors {
        d = d * (1.0 + a) + a;
    }
    d
}

/// Criterion of `rule` with product weights; clamped at zero. Smaller is better.
pub fn quality_criterion(rule: &PolyLatticeRule, weights: &[f64], alpha: u32) -> f64 {
    let s = rule.dim();
    assert!(weights.len() >= s, "need one weight per dimension");
    let fr = rule.fracs();
    let n_pts = rule.num_points();
    let total: f64 = (0..n_pts)
        .map(|k| product_excess((0..s).map(|j| weights[j] * omega(alpha, fr[k * s + j]))))
        .sum();
    (total / n_pts as f64).max(0.0)
}
