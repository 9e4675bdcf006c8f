//! Polynomial lattice point sets over GF(2): plain, digitally shifted and higher order.

mod cache;
mod criterion;
mod search;

pub use cache::{RuleKey, RuleSource};
pub use criterion::{omega, omega_dp, quality_criterion};
pub use search::{search_generating_vector, Strategy};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{config, Result};
use crate::gf2poly::{frac_to_f64, irreducible_of_degree, laurent_div, Poly2, MAX_DEGREE};

/// Digits kept in a shift; a double cannot hold more.
pub const SHIFT_BITS: u32 = 53;
const SHIFT_MASK: u64 = !((1u64 << (64 - SHIFT_BITS)) - 1);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyLatticeRule {
    m: u32,
    n: u32,
    modulus: Poly2,
    gen: Vec<Poly2>,
}

impl PolyLatticeRule {
    pub fn new(m: u32, n: u32, modulus: Poly2, gen: Vec<Poly2>) -> Result<Self> {
        if n == 0 || n > MAX_DEGREE {
            return config(format!("modulus degree {n} outside 1..={MAX_DEGREE}"));
        }
        if m > n || m > 40 {
            return config(format!("m = {m} must satisfy m <= n = {n} and m <= 40"));
        }
        if modulus.degree() != Some(n) || !modulus.is_irreducible() {
            return config(format!("modulus {modulus} is not irreducible of degree {n}"));
        }
        for (j, q) in gen.iter().enumerate() {
            if q.is_zero() || q.degree() >= Some(n) {
                return config(format!("generator q{} = {q} must be nonzero of degree < {n}", j + 1));
            }
        }
        Ok(PolyLatticeRule { m, n, modulus, gen })
    }

    /// Modulus degree `n = max(α m, 1)` with the smallest irreducible of that degree.
    pub fn with_order(alpha: u32, m: u32, gen: Vec<Poly2>) -> Result<Self> {
        let n = modulus_degree(alpha, m)?;
        Self::new(m, n, irreducible_of_degree(n)?, gen)
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn modulus(&self) -> Poly2 {
        self.modulus
    }

    pub fn gen(&self) -> &[Poly2] {
        &self.gen
    }

    pub fn dim(&self) -> usize {
        self.gen.len()
    }

    pub fn num_points(&self) -> usize {
        1usize << self.m
    }

    /// Digits of `x^i q_j mod p / p` for `i < m`, as left-aligned fractions.
    pub fn columns(&self, j: usize) -> Vec<u64> {
        generator_columns(self.gen[j], self.modulus, self.m, self.n)
    }

    /// Unshifted coordinates of every point, as left-aligned binary fractions; `[k * s + j]`.
    pub fn fracs(&self) -> Vec<u64> {
        let s = self.dim();
        let cols: Vec<Vec<u64>> = (0..s).map(|j| self.columns(j)).collect();
        let n_pts = self.num_points();
        let mut out = vec![0u64; n_pts * s];
        for k in 1..n_pts {
            let prev = k & (k - 1);
            let bit = (k ^ prev).trailing_zeros() as usize;
            for j in 0..s {
                out[k * s + j] = out[prev * s + j] ^ cols[j][bit];
            }
        }
        out
    }
}

pub(crate) fn modulus_degree(alpha: u32, m: u32) -> Result<u32> {
    if alpha == 0 {
        return config("smoothness order must be at least 1");
    }
    let n = (alpha as u64 * m as u64).max(1);
    if n > MAX_DEGREE as u64 {
        return config(format!(
            "modulus degree alpha*m = {alpha}*{m} exceeds {MAX_DEGREE}"
        ));
    }
    Ok(n as u32)
}

pub(crate) fn generator_columns(q: Poly2, p: Poly2, m: u32, n: u32) -> Vec<u64> {
    let mut c = q.rem(p).expect("nonzero modulus");
    let mut out = Vec::with_capacity(m as usize);
    for _ in 0..m {
        out.push(laurent_div(c, p, n).expect("nonzero modulus").frac());
        c = c.mul_mod(Poly2::X, p);
    }
    out
}

/// Per-dimension digit-wise XOR shift.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DigitalShift {
    digits: Vec<u64>,
    seed: u64,
}

impl DigitalShift {
    pub fn zero(s: usize) -> Self {
        DigitalShift { digits: vec![0; s], seed: 0 }
    }

    /// Shift for dimension `s` drawn from the ChaCha stream `(seed, stream)`.
    pub fn from_seed(seed: u64, stream: u64, s: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let digits = (0..s).map(|_| rng.next_u64() & SHIFT_MASK).collect();
        DigitalShift { digits, seed }
    }

    /// Shift given explicitly as left-aligned fractions; digits past 53 are dropped.
    pub fn from_fracs(digits: Vec<u64>) -> Self {
        DigitalShift { digits: digits.into_iter().map(|d| d & SHIFT_MASK).collect(), seed: 0 }
    }

    pub fn digits(&self) -> &[u64] {
        &self.digits
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.digits.len()
    }
}

/// Equal-weight nodes in [-1/2, 1/2)^s.
#[derive(Clone, Debug)]
pub struct CubatureNodeSet {
    s: usize,
    points: Vec<f64>,
}

impl CubatureNodeSet {
    pub fn dim(&self) -> usize {
        self.s
    }

    pub fn len(&self) -> usize {
        if self.s == 0 {
            1
        } else {
            self.points.len() / self.s
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.s..(k + 1) * self.s]
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).map(move |k| self.point(k))
    }
}

/// Nodes `ϑ_n(k q_j / p) ⊕ δ_j - 1/2`.
pub fn generate_points(rule: &PolyLatticeRule, shift: Option<&DigitalShift>) -> CubatureNodeSet {
    let s = rule.dim();
    if let Some(sh) = shift {
        assert_eq!(sh.dim(), s, "shift dimension mismatch");
    }
    let fr = rule.fracs();
    let points = fr
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let d = shift.map_or(0, |sh| sh.digits[i % s]);
            frac_to_f64(f ^ d) - 0.5
        })
        .collect();
    CubatureNodeSet { s, points }
}
