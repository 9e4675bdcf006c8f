//! PDE data, the sequence `b_j`, admissibility checks and the derived rate parameters.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{admissibility, config, Error, Result};
use crate::quadrature::GaussLegendre;

/// Closed-form scalar function on [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    Constant(f64),
    /// `c0 + c1 x`
    Linear { c0: f64, c1: f64 },
    /// `c0 + amp sin(freq π x + phase)`
    Trig { c0: f64, amp: f64, freq: f64, phase: f64 },
    /// Smooth bump `exp(-1 / (1 - r^2))`, `r = (x - center) / width`, normalised to unit mass.
    Bump { center: f64, width: f64, scale: f64 },
}

/// Range of `sin` over `[t0, t1]`.
fn sin_range(t0: f64, t1: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (t0.sin().min(t1.sin()), t0.sin().max(t1.sin()));
    let first = |base: f64| base + 2.0 * PI * ((t0 - base) / (2.0 * PI)).ceil();
    if first(PI / 2.0) <= t1 {
        hi = 1.0;
    }
    if first(3.0 * PI / 2.0) <= t1 {
        lo = -1.0;
    }
    (lo, hi)
}

fn bump_raw(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

impl Profile {
    pub fn bump(center: f64, width: f64) -> Self {
        let g = GaussLegendre::new(40);
        let mass = width * g.integrate(-1.0, 1.0, bump_raw);
        Profile::Bump { center, width, scale: 1.0 / mass }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Profile::Constant(c) => c,
            Profile::Linear { c0, c1 } => c0 + c1 * x,
            Profile::Trig { c0, amp, freq, phase } => c0 + amp * (freq * PI * x + phase).sin(),
            Profile::Bump { center, width, scale } => scale * bump_raw((x - center) / width),
        }
    }

    /// Exact `(min, max)` over [0, 1].
    pub fn range(&self) -> (f64, f64) {
        match *self {
            Profile::Constant(c) => (c, c),
            Profile::Linear { c0, c1 } => (c0.min(c0 + c1), c0.max(c0 + c1)),
            Profile::Trig { c0, amp, freq, phase } => {
                let (t0, t1) = (phase.min(freq * PI + phase), phase.max(freq * PI + phase));
                let (lo, hi) = sin_range(t0, t1);
                if amp >= 0.0 {
                    (c0 + amp * lo, c0 + amp * hi)
                } else {
                    (c0 + amp * hi, c0 + amp * lo)
                }
            }
            Profile::Bump { center, scale, .. } => {
                let peak = if (0.0..=1.0).contains(&center) { scale * (-1.0f64).exp() } else { 0.0 };
                (0.0, peak)
            }
        }
    }

    pub fn sup_abs(&self) -> f64 {
        let (lo, hi) = self.range();
        lo.abs().max(hi.abs())
    }

    /// Upper bound on `|value'|` over [0, 1].
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Profile::Constant(_) => 0.0,
            Profile::Linear { c1, .. } => c1.abs(),
            Profile::Trig { amp, freq, .. } => (amp * freq * PI).abs(),
            // max |d/dr exp(-1/(1-r^2))| < 1.6
            Profile::Bump { width, scale, .. } => 1.6 * scale / width,
        }
    }

    /// Polynomial degree when the profile is a polynomial.
    pub fn polynomial_degree(&self) -> Option<u32> {
        match *self {
            Profile::Constant(_) => Some(0),
            Profile::Linear { c1, .. } => Some(u32::from(c1 != 0.0)),
            Profile::Trig { amp, .. } if amp == 0.0 => Some(0),
            _ => None,
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Profile::Constant(c) => write!(f, "const:{c}"),
            Profile::Linear { c0, c1 } => write!(f, "linear:{c0},{c1}"),
            Profile::Trig { c0, amp, freq, phase } => write!(f, "trig:{c0},{amp},{freq},{phase}"),
            Profile::Bump { center, width, .. } => write!(f, "bump:{center},{width}"),
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    /// `const:c`, `linear:c0,c1`, `trig:c0,amp,freq[,phase]`, `bump:center,width`, or a bare number.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(c) = s.parse::<f64>() {
            return Ok(Profile::Constant(c));
        }
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("profile '{s}' must look like kind:args")))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("profile '{s}' has a non-numeric argument")))?;
        match (kind.trim(), nums.as_slice()) {
            ("const", [c]) => Ok(Profile::Constant(*c)),
            ("linear", [c0, c1]) => Ok(Profile::Linear { c0: *c0, c1: *c1 }),
            ("trig", [c0, amp, freq]) => Ok(Profile::Trig { c0: *c0, amp: *amp, freq: *freq, phase: 0.0 }),
            ("trig", [c0, amp, freq, phase]) => {
                Ok(Profile::Trig { c0: *c0, amp: *amp, freq: *freq, phase: *phase })
            }
            ("bump", [c, w]) if *w > 0.0 => Ok(Profile::bump(*c, *w)),
            _ => config(format!("unrecognised profile '{s}'")),
        }
    }
}

/// Sequence `j -> γ_j` (`j >= 1`) with the analytic tail information needed for
/// truncated products and enumeration.
pub trait WeightSequence: Send + Sync {
    fn gamma(&self, j: usize) -> f64;
    /// Last index with a nonzero weight, if finitely many.
    fn support(&self) -> Option<usize>;
    /// Upper bound on `sup_{i > j} γ_i`.
    fn tail_sup(&self, j: usize) -> f64;
    /// Upper bound on `Σ_{i > j} γ_i^p`, or `None` if the series diverges.
    fn tail_power_sum(&self, j: usize, p: f64) -> Option<f64>;
}

/// The summability sequence `b_j`, optionally truncated after `jmax`.
#[derive(Clone, Debug, PartialEq)]
pub struct BSequence {
    pub family: BFamily,
    pub jmax: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BFamily {
    /// `scale j^{-beta}`
    Power { scale: f64, beta: f64 },
    /// `scale ratio^j`
    Geometric { scale: f64, ratio: f64 },
    /// `c_delta sigma (ℓ+1)^{1+delta} 2^{-alpha_hat ℓ}` for `j = 2^ℓ + k`, `0 <= k < 2^ℓ`.
    Wavelet { c_delta: f64, sigma: f64, alpha_hat: f64, delta: f64 },
    Explicit(Vec<f64>),
}

/// Level and in-level offset of a wavelet index `j = 2^ℓ + k`.
pub fn wavelet_level(j: usize) -> (u32, usize) {
    assert!(j >= 1);
    let l = usize::BITS - 1 - j.leading_zeros();
    (l, j - (1usize << l))
}

impl BSequence {
    pub fn new(family: BFamily, jmax: Option<usize>) -> Self {
        BSequence { family, jmax }
    }

    fn raw(&self, j: usize) -> f64 {
        match &self.family {
            BFamily::Power { scale, beta } => scale * (j as f64).powf(-beta),
            BFamily::Geometric { scale, ratio } => scale * ratio.powi(j as i32),
            BFamily::Wavelet { c_delta, sigma, alpha_hat, delta } => {
                let (l, _) = wavelet_level(j);
                let l = f64::from(l);
                c_delta * sigma * (l + 1.0).powf(1.0 + delta) * 2f64.powf(-alpha_hat * l)
            }
            BFamily::Explicit(v) => v.get(j - 1).copied().unwrap_or(0.0),
        }
    }

    fn wavelet_level_value(&self, l: u32) -> f64 {
        match &self.family {
            BFamily::Wavelet { c_delta, sigma, alpha_hat, delta } => {
                let l = f64::from(l);
                c_delta * sigma * (l + 1.0).powf(1.0 + delta) * 2f64.powf(-alpha_hat * l)
            }
            _ => unreachable!("level values only exist for wavelet sequences"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { config(msg.to_string()) };
        match &self.family {
            BFamily::Power { scale, beta } => {
                check(*scale > 0.0 && *scale <= 1.0, "power b: scale must lie in (0, 1]")?;
                check(*beta > 0.0, "power b: beta must be positive")
            }
            BFamily::Geometric { scale, ratio } => {
                check(*scale > 0.0 && *scale <= 1.0 / ratio, "geometric b: need 0 < scale*ratio <= 1")?;
                check(*ratio > 0.0 && *ratio < 1.0, "geometric b: ratio must lie in (0, 1)")
            }
            BFamily::Wavelet { c_delta, sigma, alpha_hat, delta } => {
                check(*c_delta > 0.0 && *sigma > 0.0, "wavelet b: c_delta and sigma must be positive")?;
                check(*alpha_hat > 0.0 && *delta > 0.0, "wavelet b: alpha_hat and delta must be positive")?;
                let max = (0..200).map(|l| self.wavelet_level_value(l)).fold(0.0, f64::max);
                check(max <= 1.0, "wavelet b: c_delta * sigma too large, b_j must not exceed 1")
            }
            BFamily::Explicit(v) => check(
                v.iter().all(|&b| b > 0.0 && b <= 1.0),
                "explicit b: every entry must lie in (0, 1]",
            ),
        }
    }
}

impl WeightSequence for BSequence {
    fn gamma(&self, j: usize) -> f64 {
        assert!(j >= 1, "weights are indexed from 1");
        match self.support() {
            Some(s) if j > s => 0.0,
            _ => self.raw(j),
        }
    }

    fn support(&self) -> Option<usize> {
        let own = match &self.family {
            BFamily::Explicit(v) => Some(v.len()),
            _ => None,
        };
        match (own, self.jmax) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn tail_sup(&self, j: usize) -> f64 {
        if let Some(s) = self.support() {
            if j >= s {
                return 0.0;
            }
        }
        match &self.family {
            BFamily::Power { .. } | BFamily::Geometric { .. } => self.raw(j + 1),
            BFamily::Explicit(v) => v[j..].iter().copied().fold(0.0, f64::max),
            BFamily::Wavelet { alpha_hat, delta, .. } => {
                let (l0, _) = wavelet_level(j + 1);
                // level values decrease once (1 + 1/(ℓ+1))^{1+δ} < 2^{α̂}
                let mut best = 0.0f64;
                let mut l = l0;
                loop {
                    best = best.max(self.wavelet_level_value(l));
                    let ratio = (1.0 + 1.0 / (f64::from(l) + 1.0)).powf(1.0 + delta);
                    if ratio < 2f64.powf(*alpha_hat) || l > 4000 {
                        break;
                    }
                    l += 1;
                }
                best
            }
        }
    }

    fn tail_power_sum(&self, j: usize, p: f64) -> Option<f64> {
        if let Some(s) = self.support() {
            return Some((j + 1..=s).map(|i| self.raw(i).powf(p)).sum());
        }
        let jf = j as f64;
        match &self.family {
            BFamily::Power { scale, beta } => {
                let q = beta * p;
                if q <= 1.0 {
                    return None;
                }
                // Σ_{i>j} i^{-q} ≤ (j+1)^{-q} + ∫_{j+1}^∞ t^{-q} dt
                let a = jf + 1.0;
                Some(scale.powf(p) * (a.powf(-q) + a.powf(1.0 - q) / (q - 1.0)))
            }
            BFamily::Geometric { scale, ratio } => {
                let r = ratio.powf(p);
                Some(scale.powf(p) * r.powi(j as i32 + 1) / (1.0 - r))
            }
            BFamily::Wavelet { alpha_hat, delta, .. } => {
                if alpha_hat * p <= 1.0 {
                    return None;
                }
                let (l0, k0) = wavelet_level(j + 1);
                let mut sum = ((1usize << l0) - k0) as f64 * self.wavelet_level_value(l0).powf(p);
                let mut l = l0 + 1;
                loop {
                    let term = 2f64.powi(l as i32) * self.wavelet_level_value(l).powf(p);
                    let ratio = 2.0
                        * (1.0 + 1.0 / (f64::from(l) + 1.0)).powf(p * (1.0 + delta))
                        * 2f64.powf(-alpha_hat * p);
                    sum += term;
                    if ratio < 0.9 && term < 1e-18 * sum.max(1e-300) {
                        // later ratios are smaller, so the remainder is geometric
                        return Some(sum + term * ratio / (1.0 - ratio));
                    }
                    if l > 100_000 {
                        return None;
                    }
                    l += 1;
                }
            }
            BFamily::Explicit(_) => unreachable!("explicit sequences have finite support"),
        }
    }
}

/// Arbitrary fluctuation `φ_j(x)`; no analytic bounds are known for it.
pub type CustomPhi = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum PhiFamily {
    /// `φ_j = c b_j j^{-θ} sin(jπx)`; with `b_j = j^{3/2 - σ}` and `θ = 3/2` this is `c j^{-σ} sin(jπx)`.
    Sine { c: f64, theta: f64 },
    /// Dyadic hats `σ 2^{-α̂ℓ} hat(2^ℓ x - k)` with disjoint supports inside a level.
    Wavelet { sigma: f64, alpha_hat: f64 },
    Explicit(Vec<Profile>),
    Custom(CustomPhi),
}

impl fmt::Debug for PhiFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhiFamily::Sine { c, theta } => write!(f, "Sine {{ c: {c}, theta: {theta} }}"),
            PhiFamily::Wavelet { sigma, alpha_hat } => {
                write!(f, "Wavelet {{ sigma: {sigma}, alpha_hat: {alpha_hat} }}")
            }
            PhiFamily::Explicit(v) => write!(f, "Explicit({v:?})"),
            PhiFamily::Custom(_) => write!(f, "Custom"),
        }
    }
}

fn hat(t: f64) -> f64 {
    if (0.0..=1.0).contains(&t) {
        1.0 - (2.0 * t - 1.0).abs()
    } else {
        0.0
    }
}

/// `a(x, y) = a0(x) + Σ_j y_j φ_j(x)` together with the sequence `b_j` and exponent `p*`.
#[derive(Clone, Debug)]
pub struct DiffusionModel {
    pub a0: Profile,
    pub phi: PhiFamily,
    pub b: BSequence,
    pub pstar: f64,
}

/// Grid resolution used by [`compute_kappa`].
pub const KAPPA_GRID: usize = 10_000;

impl DiffusionModel {
    pub fn new(a0: Profile, phi: PhiFamily, b: BSequence, pstar: f64) -> Result<Self> {
        b.validate()?;
        if let (PhiFamily::Explicit(phis), BFamily::Explicit(bs)) = (&phi, &b.family) {
            if phis.len() != bs.len() {
                return config("explicit phi and b lists must have equal length");
            }
        }
        Ok(DiffusionModel { a0, phi, b, pstar })
    }

    /// Sine fluctuations scaled by `b`.
    pub fn sine(a0: Profile, c: f64, theta: f64, b: BSequence, pstar: f64) -> Result<Self> {
        Self::new(a0, PhiFamily::Sine { c, theta }, b, pstar)
    }

    /// Wavelet-style hats with matching `b_{ℓ,k} = c_δ σ (ℓ+1)^{1+δ} 2^{-α̂ℓ}`.
    pub fn wavelet(
        a0: Profile,
        sigma: f64,
        alpha_hat: f64,
        delta: f64,
        c_delta: f64,
        jmax: Option<usize>,
        pstar: f64,
    ) -> Result<Self> {
        let b = BSequence::new(BFamily::Wavelet { c_delta, sigma, alpha_hat, delta }, jmax);
        Self::new(a0, PhiFamily::Wavelet { sigma, alpha_hat }, b, pstar)
    }

    pub fn weights(&self) -> &BSequence {
        &self.b
    }

    /// `φ_j(x)`, zero past the support of `b`.
    pub fn phi(&self, j: usize, x: f64) -> f64 {
        if self.b.gamma(j) == 0.0 {
            return 0.0;
        }
        match &self.phi {
            PhiFamily::Sine { c, theta } => {
                c * self.b.gamma(j) * (j as f64).powf(-theta) * (j as f64 * PI * x).sin()
            }
            PhiFamily::Wavelet { sigma, alpha_hat } => {
                let (l, k) = wavelet_level(j);
                sigma * 2f64.powf(-alpha_hat * f64::from(l)) * hat(2f64.powi(l as i32) * x - k as f64)
            }
            PhiFamily::Explicit(v) => v.get(j - 1).map_or(0.0, |p| p.value(x)),
            PhiFamily::Custom(f) => f(j, x),
        }
    }

    /// `a(x, y)` for a sparse assignment `(j, y_j)`.
    pub fn coefficient(&self, x: f64, y: &[(usize, f64)]) -> f64 {
        self.a0.value(x) + y.iter().map(|&(j, yj)| yj * self.phi(j, x)).sum::<f64>()
    }

    /// `sup_x |φ_j(x)| / b_j`.
    fn sup_ratio(&self, j: usize) -> Option<f64> {
        let b = self.b.gamma(j);
        if b == 0.0 {
            return Some(0.0);
        }
        match &self.phi {
            PhiFamily::Sine { c, theta } => Some(c.abs() * (j as f64).powf(-theta)),
            PhiFamily::Wavelet { sigma, alpha_hat } => {
                let (l, _) = wavelet_level(j);
                Some(sigma * 2f64.powf(-alpha_hat * f64::from(l)) / b)
            }
            PhiFamily::Explicit(v) => Some(v.get(j - 1).map_or(0.0, Profile::sup_abs) / b),
            PhiFamily::Custom(_) => None,
        }
    }

    /// Bound on `|d/dx (|φ_j| / b_j)|`.
    fn lipschitz_ratio(&self, j: usize) -> Option<f64> {
        let b = self.b.gamma(j);
        if b == 0.0 {
            return Some(0.0);
        }
        match &self.phi {
            PhiFamily::Sine { c, theta } => Some(c.abs() * (j as f64).powf(1.0 - theta) * PI),
            PhiFamily::Wavelet { sigma, alpha_hat } => {
                let (l, _) = wavelet_level(j);
                Some(sigma * 2f64.powf((1.0 - alpha_hat) * f64::from(l) + 1.0) / b)
            }
            PhiFamily::Explicit(v) => Some(v.get(j - 1).map_or(0.0, Profile::lipschitz) / b),
            PhiFamily::Custom(_) => None,
        }
    }

    /// Bound on `sup_x Σ_{j > J} |φ_j(x)| / b_j`.
    fn ratio_tail(&self, big_j: usize) -> Option<f64> {
        if let Some(s) = self.b.support() {
            if big_j >= s {
                return Some(0.0);
            }
            return match &self.phi {
                PhiFamily::Wavelet { .. } => {
                    // hats inside a level are disjoint: one term per level
                    let (l0, _) = wavelet_level(big_j + 1);
                    let (l1, _) = wavelet_level(s);
                    (l0..=l1).map(|l| self.sup_ratio(1 << l)).sum()
                }
                _ => (big_j + 1..=s).map(|j| self.sup_ratio(j)).sum(),
            };
        }
        match &self.phi {
            PhiFamily::Sine { c, theta } => {
                if *theta <= 1.0 {
                    return None;
                }
                let a = big_j as f64 + 1.0;
                Some(c.abs() * (a.powf(-theta) + a.powf(1.0 - theta) / (theta - 1.0)))
            }
            PhiFamily::Wavelet { .. } => {
                let BFamily::Wavelet { c_delta, delta, .. } = self.b.family else {
                    return None;
                };
                // per level: 1 / (c_δ (ℓ+1)^{1+δ})
                let (l0, _) = wavelet_level(big_j + 1);
                let a = f64::from(l0) + 1.0;
                Some((a.powf(-1.0 - delta) + a.powf(-delta) / delta) / c_delta)
            }
            PhiFamily::Explicit(_) => Some(0.0),
            PhiFamily::Custom(_) => None,
        }
    }
}

/// Certified upper bound on `κ = ‖Σ_j |φ_j| / b_j / (2 a0)‖_∞`.
///
/// The smaller of two bounds: the sum of per-term sups, and a grid maximum of the truncated
/// series plus its analytic tail plus a Lipschitz allowance for the grid spacing.
pub fn compute_kappa(model: &DiffusionModel) -> Result<f64> {
    let (a0_min, _) = model.a0.range();
    if a0_min <= 0.0 {
        return admissibility(format!("a0 must be bounded below by a positive constant (min {a0_min})"));
    }
    if let PhiFamily::Custom(_) = model.phi {
        if model.b.support().is_none() {
            return admissibility("tail bound required for a custom phi family");
        }
    }
    let big_j = match (&model.phi, model.b.support()) {
        (_, Some(s)) => s.min(4095),
        (PhiFamily::Wavelet { .. }, None) => 4095,
        _ => 512,
    };
    let tail = model
        .ratio_tail(big_j)
        .ok_or_else(|| Error::Admissibility("tail bound required: fluctuation series diverges".into()))?;

    let termwise = match &model.phi {
        PhiFamily::Custom(_) => None,
        PhiFamily::Wavelet { .. } => {
            let (l1, _) = wavelet_level(big_j);
            (0..=l1).map(|l| model.sup_ratio(1 << l)).sum::<Option<f64>>()
        }
        _ => (1..=big_j).map(|j| model.sup_ratio(j)).sum::<Option<f64>>(),
    }
    .map(|s| (s + tail) / (2.0 * a0_min));

    let grid_sum = |x: f64| -> f64 {
        let s: f64 = (1..=big_j).map(|j| (model.phi(j, x) / model.b.gamma(j).max(f64::MIN_POSITIVE)).abs()).sum();
        s
    };
    let mut s_max = 0.0f64;
    let mut grid_max = 0.0f64;
    for i in 0..=KAPPA_GRID {
        let x = i as f64 / KAPPA_GRID as f64;
        let s = grid_sum(x);
        s_max = s_max.max(s);
        grid_max = grid_max.max(s / (2.0 * model.a0.value(x)));
    }
    let lip: Option<f64> = (1..=big_j).map(|j| model.lipschitz_ratio(j)).sum();
    let gridded = lip.map(|lip| {
        let deriv = lip / (2.0 * a0_min) + (s_max + tail) * model.a0.lipschitz() / (2.0 * a0_min * a0_min);
        grid_max + tail / (2.0 * a0_min) + deriv * 0.5 / KAPPA_GRID as f64
    });
    Ok(match (termwise, gridded) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) => a,
        (None, Some(b)) => b,
        // custom family with finite support: grid value only
        (None, None) => grid_max,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Higher-order polynomial lattice rules, `λ >= 1`.
    Deterministic,
    /// Randomly digitally shifted rules, `λ ∈ [1/2, 1)`.
    Randomized,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Deterministic => "deterministic",
            Mode::Randomized => "randomized",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateParams {
    pub d: f64,
    pub t: f64,
    pub tprime: f64,
    pub tau: f64,
    pub lambda: f64,
    pub alpha: u32,
    pub mode: Mode,
    pub a_mdm: f64,
    pub pstar: f64,
    /// Certified upper bound on κ.
    pub kappa: f64,
}

pub fn check_pstar(pstar: f64) -> Result<()> {
    if pstar > 0.0 && pstar < 1.0 {
        Ok(())
    } else {
        config(format!("p* must lie in (0,1), got {pstar}"))
    }
}

/// Rate parameters for the given regularity, without the κ check.
pub fn rates_from(pstar: f64, t: f64, tprime: f64) -> Result<RateParams> {
    check_pstar(pstar)?;
    if !(t > 0.0 && tprime > 0.0) {
        return config(format!("regularities must be positive (t = {t}, t' = {tprime})"));
    }
    let d = 1.0;
    let tau = t + tprime;
    let lambda = tau * (1.0 - pstar) / (pstar * (tau + d));
    if lambda < 0.5 {
        return admissibility(format!(
            "no theorem branch applies: lambda = {lambda:.4} < 1/2 (tau = {tau}, p* = {pstar})"
        ));
    }
    let alpha = lambda.floor() as u32 + 1;
    let mode = if lambda >= 1.0 { Mode::Deterministic } else { Mode::Randomized };
    let a_mdm = d / tau + (1.0 + d / tau) * pstar / (1.0 - pstar);
    Ok(RateParams { d, t, tprime, tau, lambda, alpha, mode, a_mdm, pstar, kappa: f64::NAN })
}

/// Rate parameters plus the κ and summability checks of the main theorem.
pub fn derive_rates(model: &DiffusionModel, t: f64, tprime: f64) -> Result<RateParams> {
    let mut r = rates_from(model.pstar, t, tprime)?;
    if model.b.tail_power_sum(0, model.pstar).is_none() {
        return admissibility(format!("b is not p*-summable for p* = {}", model.pstar));
    }
    let kappa = compute_kappa(model)?;
    let bound = 1.0 / f64::from(2 * r.alpha + 1);
    if kappa >= bound {
        return admissibility(format!(
            "kappa {kappa:.4} ≥ 1/(2α+1) = {bound:.4} (alpha = {})",
            r.alpha
        ));
    }
    r.kappa = kappa;
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CubatureConstants {
    pub alpha: u32,
    pub lambda: f64,
    pub mode: Mode,
    /// `C_{1,λ}` (randomized) or `C_{α,λ}` (deterministic).
    pub c: f64,
    /// `C̃_{α,λ}` in the deterministic branch.
    pub c_tilde: Option<f64>,
}

impl CubatureConstants {
    /// Per-subset constant `C_{u,λ}`.
    pub fn c_u(&self, card: usize) -> f64 {
        let e = card as f64 * self.lambda;
        match self.mode {
            Mode::Deterministic => self.c.powf(e),
            Mode::Randomized => 2f64.powf(self.lambda) * self.c.powf(e),
        }
    }
}

pub fn c_one(lambda: f64) -> Result<f64> {
    if !(0.5..1.0).contains(&lambda) {
        return admissibility(format!("C_1 needs lambda in [1/2, 1), got {lambda}"));
    }
    let first = (13.0f64 / 12.0).powf(1.0 / (2.0 * lambda));
    if lambda == 0.5 {
        Ok(first + 1.0 / 6.0)
    } else {
        Ok(first + 1.0 / (3f64.powf(1.0 / (2.0 * lambda)) * (2f64.powf(1.0 / lambda) - 2.0)))
    }
}

/// `(C_{α,λ}, C̃_{α,λ})`.
pub fn c_alpha(alpha: u32, lambda: f64) -> Result<(f64, f64)> {
    if alpha < 2 || !(1.0..f64::from(alpha)).contains(&lambda) {
        return admissibility(format!("C_alpha needs 1 <= lambda < alpha, got alpha = {alpha}, lambda = {lambda}"));
    }
    let a = f64::from(alpha);
    let r = 2f64.powf(1.0 / lambda);
    let c_tilde = if lambda == 1.0 {
        a - 1.0
    } else {
        (1.0 - (r - 1.0).powi(alpha as i32 - 1)) / ((2.0 - r) * (r - 1.0).powi(alpha as i32 - 1))
    };
    let prod: f64 = (1..alpha).map(|j| 1.0 / (2f64.powf(f64::from(j) / lambda) - 1.0)).product();
    let fact: f64 = (1..=alpha).map(f64::from).product();
    let c = 1.0
        + a.sqrt() * fact * 1.5 * 2.5f64.powi(alpha as i32 - 1)
            * (c_tilde + prod / (2f64.powf(a / lambda) - 2.0));
    Ok((c, c_tilde))
}

pub fn cubature_constants(rates: &RateParams) -> Result<CubatureConstants> {
    match rates.mode {
        Mode::Randomized => Ok(CubatureConstants {
            alpha: rates.alpha,
            lambda: rates.lambda,
            mode: rates.mode,
            c: c_one(rates.lambda)?,
            c_tilde: None,
        }),
        Mode::Deterministic => {
            let (c, ct) = c_alpha(rates.alpha, rates.lambda)?;
            Ok(CubatureConstants { alpha: rates.alpha, lambda: rates.lambda, mode: rates.mode, c, c_tilde: Some(ct) })
        }
    }
}

/// `Σ_{k>=1} r^k = r / (1 - r)` with `r = (2ακ / (1-κ))^2`.
pub fn c_kappa_alpha(kappa: f64, alpha: u32) -> Result<f64> {
    let bound = 1.0 / f64::from(2 * alpha + 1);
    if !(0.0..bound).contains(&kappa) {
        return admissibility(format!("kappa {kappa} ≥ 1/(2α+1) = {bound}: series diverges"));
    }
    let r = (2.0 * f64::from(alpha) * kappa / (1.0 - kappa)).powi(2);
    Ok(r / (1.0 - r))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Terms multiplied out by [`product_weight_sum`] before it settles for the tail bound.
pub const MAX_PRODUCT_TERMS: usize = 1 << 20;

/// `Π_j (1 + (γ_j M)^p)`, truncated once the analytic tail of `Σ log(1 + (γ_j M)^p)` drops
/// below `tol` (or after [`MAX_PRODUCT_TERMS`]); `upper = lower · exp(tail bound)`.
pub fn product_weight_sum(weights: &dyn WeightSequence, m: f64, p: f64, tol: f64) -> Result<Interval> {
    let mp = m.powf(p);
    let tail_at = |j: usize| weights.tail_power_sum(j, p).map(|t| t * mp);
    if tail_at(0).is_none() {
        return admissibility(format!("weight sum diverges for exponent {p}"));
    }
    let mut log = 0.0;
    let mut j = 0usize;
    let mut tail = tail_at(0).unwrap();
    while tail > tol {
        j += 1;
        log += (weights.gamma(j) * m).powf(p).ln_1p();
        if weights.support().is_some_and(|s| j >= s) {
            tail = 0.0;
            break;
        }
        if j % 64 == 0 || j < 64 {
            tail = tail_at(j).unwrap_or(f64::INFINITY);
        }
        if j >= MAX_PRODUCT_TERMS {
            break;
        }
    }
    let tail = tail_at(j).unwrap_or(tail).min(tail);
    Ok(Interval { lower: log.exp(), upper: (log + tail).exp() })
}

/// `ζ(s)` for `s > 1`, by direct summation with an Euler–Maclaurin tail.
pub fn zeta(s: f64) -> f64 {
    assert!(s > 1.0);
    let n = 10_000usize;
    let head: f64 = (1..n).map(|k| (k as f64).powf(-s)).sum();
    let nf = n as f64;
    head + nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s) + s * nf.powf(-s - 1.0) / 12.0
}

/// Problem specification: diffusion model, load, output functional and asserted regularity.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub model: DiffusionModel,
    pub f: Profile,
    pub functional: Functional,
    pub t: f64,
    pub tprime: f64,
    /// Lagrange element degree used by the solver.
    pub degree: u32,
}

/// Linear output functional `G(v) = ∫ g v`.
#[derive(Clone, Debug, PartialEq)]
pub struct Functional {
    pub g: Profile,
}

impl Functional {
    pub fn integral(g: Profile) -> Self {
        Functional { g }
    }

    /// Point value at `x0` smoothed with a bump of half-width `width`.
    pub fn smoothed_point(x0: f64, width: f64) -> Self {
        Functional { g: Profile::bump(x0, width) }
    }
}

impl ProblemSpec {
    pub fn rates(&self) -> Result<RateParams> {
        derive_rates(&self.model, self.t, self.tprime)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.degree) {
            return config(format!("element degree {} outside 1..=3", self.degree));
        }
        let tau = self.t + self.tprime;
        if tau > 2.0 * f64::from(self.degree) + 1e-12 {
            return config(format!(
                "tau = {tau} exceeds the rate 2k = {} of degree-{} elements",
                2 * self.degree,
                self.degree
            ));
        }
        Ok(())
    }
}
