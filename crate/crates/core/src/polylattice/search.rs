//! Generating-vector search.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::criterion::{omega, quality_criterion};
use super::{generator_columns, modulus_degree, PolyLatticeRule};
use crate::error::{config, Result};
use crate::gf2poly::{distinct_prime_factors, irreducible_of_degree, laurent_div, Poly2};

/// Largest modulus degree searched exhaustively (via FFT over the multiplicative group).
pub const FAST_CBC_MAX_DEGREE: u32 = 22;
/// Point evaluations per component spent on sampled candidates above that degree.
const SAMPLED_BUDGET: u64 = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Component by component, minimising the criterion for each new coordinate.
    Cbc,
    /// Best of `candidates` random vectors; all vectors when that covers the search space.
    Random { candidates: u64 },
    /// `q_j = 1` for every coordinate.
    Fixed,
}

impl Strategy {
    pub fn tag(&self) -> String {
        match self {
            Strategy::Cbc => "cbc".into(),
            Strategy::Random { candidates } => format!("random{candidates}"),
            Strategy::Fixed => "fixed".into(),
        }
    }
}

pub fn search_generating_vector(
    m: u32,
    n: u32,
    s: usize,
    weights: &[f64],
    alpha: u32,
    strategy: Strategy,
) -> Result<PolyLatticeRule> {
    if s == 0 {
        return config("dimension must be at least 1");
    }
    if weights.len() < s {
        return config(format!("{} weights supplied for dimension {s}", weights.len()));
    }
    let expected = modulus_degree(alpha, m)?;
    if n != expected {
        return config(format!(
            "modulus degree {n} does not match alpha*m = {alpha}*{m} (expected {expected})"
        ));
    }
    let p = irreducible_of_degree(n)?;
    let gen = match strategy {
        Strategy::Fixed => vec![Poly2::ONE; s],
        Strategy::Cbc => cbc(m, n, p, &weights[..s], alpha),
        Strategy::Random { candidates } => random_search(m, n, p, &weights[..s], alpha, candidates)?,
    };
    PolyLatticeRule::new(m, n, p, gen)
}

/// Index of the smallest value; near-ties go to the smallest polynomial.
fn pick(cands: impl Iterator<Item = (Poly2, f64)>) -> Poly2 {
    let all: Vec<(Poly2, f64)> = cands.collect();
    let best = all.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let tol = 1e-10 * best.abs().max(1e-300);
    all.iter()
        .filter(|c| c.1 <= best + tol)
        .map(|c| c.0)
        .min()
        .expect("at least one candidate")
}

/// Linear map from a residue `r` (degree < n) to the first n digits of `r / p`.
struct DigitMap {
    tables: Vec<[u64; 256]>,
}

impl DigitMap {
    fn new(p: Poly2, n: u32) -> Self {
        let basis: Vec<u64> = (0..n)
            .map(|i| laurent_div(Poly2::monomial(i), p, n).unwrap().frac())
            .collect();
        let tables = basis
            .chunks(8)
            .map(|chunk| {
                let mut t = [0u64; 256];
                for (byte, slot) in t.iter_mut().enumerate() {
                    *slot = chunk
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| (byte >> i) & 1 == 1)
                        .fold(0, |acc, (_, &b)| acc ^ b);
                }
                t
            })
            .collect();
        DigitMap { tables }
    }

    fn frac(&self, r: u64) -> u64 {
        self.tables
            .iter()
            .enumerate()
            .fold(0, |acc, (i, t)| acc ^ t[((r >> (8 * i)) & 0xff) as usize])
    }
}

fn primitive_element(p: Poly2, n: u32) -> Poly2 {
    let order = (1u64 << n) - 1;
    let primes = distinct_prime_factors(order);
    (2u64..)
        .map(Poly2)
        .find(|g| {
            let g = g.rem(p).unwrap();
            !g.is_zero() && primes.iter().all(|&r| !g.pow_mod(order / r, p).is_one())
        })
        .expect("GF(2^n)* is cyclic")
}

fn cbc(m: u32, n: u32, p: Poly2, weights: &[f64], alpha: u32) -> Vec<Poly2> {
    let n_pts = 1usize << m;
    // P_k = prod over chosen coordinates of (1 + γ ω(x_k))
    let mut prod = vec![1.0f64; n_pts];
    let mut gen = Vec::with_capacity(weights.len());
    let fast = if n <= FAST_CBC_MAX_DEGREE { Some(FastCbc::new(p, n, alpha)) } else { None };
    for (j, &g) in weights.iter().enumerate() {
        let q = match &fast {
            Some(f) => f.best(&prod),
            None => sampled_best(m, n, p, alpha, &prod, j as u64),
        };
        let cols = generator_columns(q, p, m, n);
        let mut frac = 0u64;
        for k in 0..n_pts {
            if k > 0 {
                frac ^= cols[k.trailing_zeros() as usize];
            }
            // gray-code order visits k ^ (k >> 1)
            let idx = k ^ (k >> 1);
            prod[idx] *= 1.0 + g * omega(alpha, frac);
        }
        gen.push(q);
    }
    gen
}

struct FastCbc {
    n: u32,
    /// `pow[e] = g^e mod p`.
    pow: Vec<u32>,
    /// `log[r] = e` with `g^e = r`.
    log: Vec<u32>,
    /// Spectrum of `ω(ϑ_n(g^e / p))`.
    omega_hat: Vec<Complex<f64>>,
    planner: std::sync::Mutex<FftPlanner<f64>>,
}

impl FastCbc {
    fn new(p: Poly2, n: u32, alpha: u32) -> Self {
        let len = (1usize << n) - 1;
        let g = primitive_element(p, n);
        let digits = DigitMap::new(p, n);
        let mut pow = Vec::with_capacity(len);
        let mut log = vec![0u32; len + 1];
        let mut r = Poly2::ONE;
        for e in 0..len {
            pow.push(r.0 as u32);
            log[r.0 as usize] = e as u32;
            r = r.mul_mod(g, p);
        }
        let mut planner = FftPlanner::new();
        let mut omega_hat: Vec<Complex<f64>> = pow
            .iter()
            .map(|&r| Complex::new(omega(alpha, digits.frac(r as u64)), 0.0))
            .collect();
        planner.plan_fft_forward(len).process(&mut omega_hat);
        FastCbc { n, pow, log, omega_hat, planner: std::sync::Mutex::new(planner) }
    }

    /// Minimiser over all nonzero q of `Σ_{k≠0} P_k ω(ϑ_n(k q / p))`.
    ///
    /// With `k = g^a`, `q = g^b` this is the cyclic correlation `Σ_a V[a] Ω[a + b]`.
    fn best(&self, prod: &[f64]) -> Poly2 {
        let len = (1usize << self.n) - 1;
        let mut v = vec![Complex::new(0.0, 0.0); len];
        for (k, &pk) in prod.iter().enumerate().skip(1) {
            v[self.log[k] as usize] = Complex::new(pk, 0.0);
        }
        let mut planner = self.planner.lock().unwrap();
        planner.plan_fft_forward(len).process(&mut v);
        for (a, b) in v.iter_mut().zip(&self.omega_hat) {
            *a = a.conj() * b;
        }
        planner.plan_fft_inverse(len).process(&mut v);
        pick((0..len).map(|b| (Poly2(self.pow[b] as u64), v[b].re)))
    }
}

/// Above the FFT range: evaluate a deterministic pseudo-random sample of candidates.
fn sampled_best(m: u32, n: u32, p: Poly2, alpha: u32, prod: &[f64], component: u64) -> Poly2 {
    let count = (SAMPLED_BUDGET >> m).clamp(32, 1024);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 ^ ((n as u64) << 8) ^ m as u64);
    rng.set_stream(component);
    let mask = (1u64 << n) - 1;
    let mut cands = vec![Poly2::ONE];
    while (cands.len() as u64) < count {
        let q = rng.next_u64() & mask;
        if q != 0 {
            cands.push(Poly2(q));
        }
    }
    cands.sort();
    cands.dedup();
    pick(cands.into_iter().map(|q| {
        let cols = generator_columns(q, p, m, n);
        let mut frac = 0u64;
        let mut acc = 0.0;
        for k in 1..prod.len() {
            frac ^= cols[k.trailing_zeros() as usize];
            acc += prod[k ^ (k >> 1)] * omega(alpha, frac);
        }
        (q, acc)
    }))
}

fn random_search(
    m: u32,
    n: u32,
    p: Poly2,
    weights: &[f64],
    alpha: u32,
    candidates: u64,
) -> Result<Vec<Poly2>> {
    if candidates == 0 {
        return config("random search needs at least one candidate");
    }
    let s = weights.len();
    let per = (1u64 << n) - 1;
    let space = (per as f64).powi(s as i32);
    let vectors: Vec<Vec<Poly2>> = if space <= candidates as f64 {
        let mut all = Vec::new();
        let mut idx = vec![1u64; s];
        loop {
            all.push(idx.iter().map(|&q| Poly2(q)).collect());
            let mut j = s;
            loop {
                if j == 0 {
                    return best_vector(m, n, p, weights, alpha, all);
                }
                j -= 1;
                if idx[j] < per {
                    idx[j] += 1;
                    break;
                }
                idx[j] = 1;
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0xa11ce ^ ((n as u64) << 8) ^ m as u64);
        (0..candidates)
            .map(|_| {
                (0..s)
                    .map(|_| loop {
                        let q = rng.next_u64() & per;
                        if q != 0 {
                            break Poly2(q);
                        }
                    })
                    .collect()
            })
            .collect()
    };
    best_vector(m, n, p, weights, alpha, vectors)
}

fn best_vector(
    m: u32,
    n: u32,
    p: Poly2,
    weights: &[f64],
    alpha: u32,
    vectors: Vec<Vec<Poly2>>,
) -> Result<Vec<Poly2>> {
    let mut scored = Vec::with_capacity(vectors.len());
    for v in vectors {
        let rule = PolyLatticeRule::new(m, n, p, v.clone())?;
        scored.push((quality_criterion(&rule, weights, alpha), v));
    }
    let best = scored.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let tol = 1e-10 * best.abs().max(1e-300);
    Ok(scored
        .into_iter()
        .filter(|c| c.0 <= best + tol)
        .map(|c| c.1)
        .min()
        .expect("nonempty"))
}
