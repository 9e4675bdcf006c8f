//! The anchored Sobolev-type kernel `K_α` on [-1/2, 1/2] and its embedding constant `M`.

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

fn binomial(n: u32, k: u32) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// `I_0(1) = sum_k (1/4)^k / (k!)^2`, summed until the terms vanish.
pub fn bessel_i0_at_one() -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0;
    let mut k = 0.0;
    while term > 0.0 {
        sum += term;
        k += 1.0;
        term *= 0.25 / (k * k);
    }
    sum
}

/// `K_α(x, y)` for `x, y` in [-1/2, 1/2].
pub fn kernel_eval(alpha: u32, x: f64, y: f64) -> f64 {
    assert!(alpha >= 1);
    if x == 0.0 || y == 0.0 || (x > 0.0) != (y > 0.0) {
        return 0.0;
    }
    let (x, y) = (x.abs(), y.abs());
    let mut poly = 0.0;
    let mut xr = 1.0;
    let mut yr = 1.0;
    for r in 1..alpha {
        xr *= x;
        yr *= y;
        let f = factorial(r);
        poly += xr * yr / (f * f);
    }
    let a = x.min(y);
    let c = x.max(y) - a;
    let m = alpha - 1;
    let integral: f64 = (0..=m)
        .map(|i| binomial(m, i) * c.powi((m - i) as i32) * a.powi((alpha + i) as i32) / f64::from(alpha + i))
        .sum();
    let f = factorial(m);
    poly + integral / (f * f)
}

/// Product kernel `K_{α,u}(x_u, y_u)`.
pub fn kernel_product(alpha: u32, x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(&a, &b)| kernel_eval(alpha, a, b)).product()
}

/// `M = sqrt(I_0(1) - 1 + 1 / (((α-1)!)^2 (2α-1) 2^(2α-1)))`.
pub fn embedding_constant(alpha: u32) -> f64 {
    assert!(alpha >= 1);
    let f = factorial(alpha - 1);
    let corr = 1.0 / (f * f * f64::from(2 * alpha - 1) * 2f64.powi(2 * alpha as i32 - 1));
    (bessel_i0_at_one() - 1.0 + corr).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelConstants {
    pub alpha: u32,
    pub m: f64,
}

impl KernelConstants {
    pub fn new(alpha: u32) -> Self {
        KernelConstants { alpha, m: embedding_constant(alpha) }
    }

    /// `M_u = M^{|u|}`.
    pub fn m_u(&self, card: usize) -> f64 {
        self.m.powi(card as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_order_kernel_is_min() {
        assert!((kernel_eval(1, 0.25, 0.5) - 0.25).abs() < 1e-15);
        assert!((kernel_eval(1, -0.25, -0.4) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn anchor_and_sign_cases() {
        for a in 1..5 {
            assert_eq!(kernel_eval(a, 0.3, -0.2), 0.0);
            assert_eq!(kernel_eval(a, 0.0, 0.4), 0.0);
            assert_eq!(kernel_eval(a, 0.4, 0.0), 0.0);
        }
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let g = crate::quadrature::GaussLegendre::new(20);
        for alpha in 1..=4u32 {
            for &(x, y) in &[(0.1, 0.45), (0.5, 0.5), (0.33, 0.2), (0.05, 0.01)] {
                let a = f64::min(x, y);
                let f = factorial(alpha - 1);
                let integral = g.integrate(0.0, a, |t| {
                    ((x - t) * (y - t)).powi(alpha as i32 - 1) / (f * f)
                });
                let poly: f64 = (1..alpha)
                    .map(|r| (x * y).powi(r as i32) / factorial(r).powi(2))
                    .sum();
                assert!((kernel_eval(alpha, x, y) - poly - integral).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn m_values() {
        let i0 = bessel_i0_at_one();
        assert!((i0 - 1.266_065_877_752_008_4).abs() < 1e-15);
        assert!((embedding_constant(1) - (i0 - 0.5).sqrt()).abs() < 1e-15);
        assert!((embedding_constant(1) - 0.875_252).abs() < 1e-6);
        assert!((embedding_constant(2) - (i0 - 1.0 + 1.0 / 24.0).sqrt()).abs() < 1e-15);
        assert!((embedding_constant(10) - 0.515_816).abs() < 1e-6);
        for a in 1..10 {
            assert!(embedding_constant(a + 1) <= embedding_constant(a));
        }
    }
}
