//! Polynomials over GF(2) packed into a machine word, plus the truncated
//! Laurent expansion map used to turn `k(x) q(x) / p(x)` into a point in [0, 1).
//!
//! Bit `i` of the word is the coefficient of `x^i`, so the integer `k` and the
//! polynomial `k(x)` share one representation.

use std::fmt;
use std::ops::{Add, Mul};

use crate::error::{Error, Result};

/// Largest supported degree. Everything fits in one `u64`.
pub const MAX_DEGREE: u32 = 63;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Poly2(pub u64);

impl Poly2 {
    pub const ZERO: Poly2 = Poly2(0);
    pub const ONE: Poly2 = Poly2(1);
    pub const X: Poly2 = Poly2(2);

    pub const fn from_bits(bits: u64) -> Self {
        Poly2(bits)
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Degree, or `None` for the zero polynomial (degree minus infinity).
    pub const fn degree(self) -> Option<u32> {
        if self.0 == 0 {
            None
        } else {
            Some(63 - self.0.leading_zeros())
        }
    }

    pub const fn coeff(self, i: u32) -> bool {
        i < 64 && (self.0 >> i) & 1 == 1
    }

    /// `x^i`.
    pub fn monomial(i: u32) -> Self {
        assert!(i <= MAX_DEGREE, "degree {i} exceeds {MAX_DEGREE}");
        Poly2(1u64 << i)
    }

    /// Product without overflow checking; result as a 128-bit word.
    pub fn clmul(self, rhs: Poly2) -> u128 {
        clmul(self.0, rhs.0)
    }

    pub fn checked_mul(self, rhs: Poly2) -> Option<Poly2> {
        let p = clmul(self.0, rhs.0);
        if p >> 64 == 0 {
            Some(Poly2(p as u64))
        } else {
            None
        }
    }

    /// Remainder modulo `m`.
    pub fn rem(self, m: Poly2) -> Result<Poly2> {
        if m.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(Poly2(rem_wide(self.0 as u128, m.0)))
    }

    pub fn div_rem(self, m: Poly2) -> Result<(Poly2, Poly2)> {
        let dm = m.degree().ok_or(Error::DivisionByZero)?;
        let mut r = self.0;
        let mut q = 0u64;
        while r != 0 {
            let dr = 63 - r.leading_zeros();
            if dr < dm {
                break;
            }
            q |= 1 << (dr - dm);
            r ^= m.0 << (dr - dm);
        }
        Ok((Poly2(q), Poly2(r)))
    }

    /// `self * rhs mod m`.
    pub fn mul_mod(self, rhs: Poly2, m: Poly2) -> Poly2 {
        debug_assert!(!m.is_zero());
        Poly2(rem_wide(clmul(self.0, rhs.0), m.0))
    }

    pub fn pow_mod(self, mut e: u64, m: Poly2) -> Poly2 {
        let mut base = Poly2(rem_wide(self.0 as u128, m.0));
        let mut acc = Poly2(rem_wide(1, m.0));
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul_mod(base, m);
            }
            base = base.mul_mod(base, m);
            e >>= 1;
        }
        acc
    }

    pub fn gcd(self, other: Poly2) -> Poly2 {
        let (mut a, mut b) = (self, other);
        while !b.is_zero() {
            let r = Poly2(rem_wide(a.0 as u128, b.0));
            a = b;
            b = r;
        }
        a
    }

    /// Deterministic irreducibility test (Rabin): `p` of degree n is irreducible iff
    /// `x^(2^n) = x mod p` and `gcd(x^(2^(n/r)) - x, p) = 1` for every prime `r | n`.
    pub fn is_irreducible(self) -> bool {
        let n = match self.degree() {
            None | Some(0) => return false,
            Some(n) => n,
        };
        if n == 1 {
            return true;
        }
        if !self.coeff(0) {
            return false;
        }
        let x = Poly2::X.rem(self).unwrap();
        let frob = |k: u32| {
            let mut t = x;
            for _ in 0..k {
                t = t.mul_mod(t, self);
            }
            t
        };
        if frob(n) != x {
            return false;
        }
        for r in prime_factors(n as u64) {
            let t = frob(n / r as u32);
            if !(t + x).gcd(self).is_one() {
                return false;
            }
        }
        true
    }

    pub const fn is_one(self) -> bool {
        self.0 == 1
    }
}

impl Add for Poly2 {
    type Output = Poly2;
    fn add(self, rhs: Poly2) -> Poly2 {
        Poly2(self.0 ^ rhs.0)
    }
}

impl Mul for Poly2 {
    type Output = Poly2;
    /// Panics if the product has degree above 63.
    fn mul(self, rhs: Poly2) -> Poly2 {
        self.checked_mul(rhs)
            .unwrap_or_else(|| panic!("GF(2) product {self} * {rhs} exceeds degree {MAX_DEGREE}"))
    }
}

impl From<u64> for Poly2 {
    fn from(k: u64) -> Self {
        Poly2(k)
    }
}

impl From<Poly2> for u64 {
    fn from(p: Poly2) -> u64 {
        p.0
    }
}

impl fmt::Display for Poly2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            return write!(f, "0");
        }
        let mut first = true;
        for i in (0..64).rev() {
            if !self.coeff(i) {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match i {
                0 => write!(f, "1")?,
                1 => write!(f, "x")?,
                _ => write!(f, "x^{i}")?,
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Poly2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Poly2({:#x})", self.0)
    }
}

impl fmt::LowerHex for Poly2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::LowerHex::fmt(&self.0, f)
    }
}

pub fn clmul(a: u64, b: u64) -> u128 {
    let a = a as u128;
    let mut b = b;
    let mut acc = 0u128;
    while b != 0 {
        let i = b.trailing_zeros();
        acc ^= a << i;
        b &= b - 1;
    }
    acc
}

/// Reduce a 128-bit polynomial modulo a nonzero `m`.
pub fn rem_wide(mut v: u128, m: u64) -> u64 {
    let dm = 63 - m.leading_zeros();
    let m = m as u128;
    while v != 0 {
        let dv = 127 - v.leading_zeros();
        if dv < dm {
            break;
        }
        v ^= m << (dv - dm);
    }
    v as u64
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

pub(crate) fn distinct_prime_factors(n: u64) -> Vec<u64> {
    prime_factors(n)
}

/// Smallest (as an integer) irreducible polynomial of degree `n`.
pub fn irreducible_of_degree(n: u32) -> Result<Poly2> {
    if !(1..=MAX_DEGREE).contains(&n) {
        return Err(Error::Config(format!(
            "irreducible degree {n} outside 1..={MAX_DEGREE}"
        )));
    }
    let lo = 1u64 << n;
    let hi = if n == 63 { u64::MAX } else { (1u64 << (n + 1)) - 1 };
    (lo..=hi)
        .map(Poly2)
        .find(|p| p.is_irreducible())
        .ok_or_else(|| Error::Numerical(format!("no irreducible polynomial of degree {n}")))
}

/// First `n` digits `w_1..w_n` of a formal Laurent series in `x^{-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LaurentPrefix {
    /// `w_i` sits at bit `64 - i`, so the word read as a binary fraction is the value.
    frac: u64,
    n: u32,
}

impl LaurentPrefix {
    pub fn from_frac(frac: u64, n: u32) -> Self {
        assert!((1..=64).contains(&n));
        let mask = if n == 64 { u64::MAX } else { !(u64::MAX >> n) };
        LaurentPrefix { frac: frac & mask, n }
    }

    pub fn depth(&self) -> u32 {
        self.n
    }

    /// Digits as a left-aligned binary fraction.
    pub fn frac(&self) -> u64 {
        self.frac
    }

    /// `w_i` for `1 <= i <= n`.
    pub fn digit(&self, i: u32) -> bool {
        assert!(i >= 1 && i <= self.n);
        (self.frac >> (64 - i)) & 1 == 1
    }

    pub fn digits(&self) -> Vec<bool> {
        (1..=self.n).map(|i| self.digit(i)).collect()
    }

    /// `sum_i w_i 2^{-i}`; exact while `n <= 53`.
    pub fn value(&self) -> f64 {
        frac_to_f64(self.frac)
    }
}

/// Interpret a left-aligned binary fraction as a double, truncating past 53 digits.
pub fn frac_to_f64(frac: u64) -> f64 {
    (frac >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Digits of `num / den` as a Laurent series in `x^{-1}`, truncated to `n` digits.
/// `num` is reduced modulo `den` first.
pub fn laurent_div(num: Poly2, den: Poly2, n: u32) -> Result<LaurentPrefix> {
    let dd = den.degree().ok_or(Error::DivisionByZero)?;
    if !(1..=64).contains(&n) {
        return Err(Error::Config(format!("truncation depth {n} outside 1..=64")));
    }
    let mut r = num.rem(den)?.0;
    let top = 1u64 << dd;
    let mut frac = 0u64;
    for i in 1..=n {
        // r has degree < dd <= 63, so the shift cannot overflow
        r <<= 1;
        if r & top != 0 {
            frac |= 1 << (64 - i);
            r ^= den.0;
        }
    }
    Ok(LaurentPrefix { frac, n })
}
