//! Brute-force reference values for truncated problems.

use rayon::prelude::*;

use crate::error::{config, Result};
use crate::fem1d::{Discretization, Mesh1D};
use crate::problem::{DiffusionModel, Functional, Profile, WeightSequence};
use crate::quadrature::GaussLegendre;

/// Largest dimension the tensor oracle accepts.
pub const MAX_ORACLE_DIM: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleEstimate {
    pub value: f64,
    /// `|Q_q - Q_{q+2}| + |G_h - G_{2h}|`
    pub error_estimate: f64,
    pub quad_points: usize,
    pub elements: usize,
    pub dim: usize,
}

/// `∫_{[-1/2,1/2]^s} f` by the `q`-point Gauss–Legendre product rule.
pub fn tensor_gauss(s: usize, q: usize, f: impl Fn(&[f64]) -> Result<f64> + Sync) -> Result<f64> {
    let (x, w) = GaussLegendre::new(q).on_interval(-0.5, 0.5);
    let total = q.pow(s as u32);
    let terms: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|mut k| {
            let mut y = vec![0.0; s];
            let mut wt = 1.0;
            for yi in y.iter_mut() {
                *yi = x[k % q];
                wt *= w[k % q];
                k /= q;
            }
            Ok(wt * f(&y)?)
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}

/// Reference for `E[G(u)]` with `y_j = 0` for `j > s`: tensor Gauss–Legendre in `y` and
/// finite elements on `elements` cells.
pub fn tensor_gauss_reference(
    model: &DiffusionModel,
    f: &Profile,
    functional: &Functional,
    s: usize,
    q: usize,
    mesh: Mesh1D,
) -> Result<OracleEstimate> {
    if s > MAX_ORACLE_DIM {
        return config(format!("oracle infeasible: dimension {s} exceeds {MAX_ORACLE_DIM}"));
    }
    if q == 0 {
        return config("oracle needs at least one quadrature point");
    }
    if mesh.elements() < 2 || mesh.elements() % 2 != 0 {
        return config("oracle mesh needs an even number of elements");
    }
    let idx: Vec<usize> = (1..=s).collect();
    let fine = Discretization::new(model, f, functional, mesh, &idx);
    let coarse = Discretization::new(model, f, functional, Mesh1D::new(mesh.elements() / 2, mesh.degree())?, &idx);
    let base = tensor_gauss(s, q, |y| fine.value(y))?;
    let more = if s == 0 { base } else { tensor_gauss(s, q + 2, |y| fine.value(y))? };
    let rough = tensor_gauss(s, q, |y| coarse.value(y))?;
    Ok(OracleEstimate {
        value: more,
        error_estimate: (base - more).abs() + (base - rough).abs(),
        quad_points: q,
        elements: mesh.elements(),
        dim: s,
    })
}

/// `G(u(·, y))` without spatial discretisation: `a u' = C - F` with `F(x) = ∫_0^x f`, `C` fixed by
/// `u(1) = 0`, so `G(u) = C ∫ R/a - ∫ F R/a` with `R(x) = ∫_x^1 g`. Composite 20-point Gauss on
/// `cells` subintervals.
pub fn flux_reference(model: &DiffusionModel, f: &Profile, g: &Profile, y: &[(usize, f64)], cells: usize) -> Result<f64> {
    if cells == 0 {
        return config("flux reference needs at least one cell");
    }
    let gl = GaussLegendre::new(20);
    let width = 1.0 / cells as f64;
    let g_total: f64 = (0..cells).map(|c| gl.integrate(c as f64 * width, (c + 1) as f64 * width, |t| g.value(t))).sum();
    let (mut f_left, mut g_left) = (0.0, 0.0);
    let (mut ia, mut ifa, mut ira, mut ifra) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..cells {
        let lo = c as f64 * width;
        let (xs, ws) = gl.on_interval(lo, lo + width);
        for (&x, &w) in xs.iter().zip(&ws) {
            let a = model.coefficient(x, y);
            if !(a > 0.0) {
                return Err(crate::Error::Numerical(format!("ellipticity violated: a(x, y) = {a} at x = {x}")));
            }
            let big_f = f_left + gl.integrate(lo, x, |t| f.value(t));
            let r = g_total - g_left - gl.integrate(lo, x, |t| g.value(t));
            ia += w / a;
            ifa += w * big_f / a;
            ira += w * r / a;
            ifra += w * big_f * r / a;
        }
        f_left += gl.integrate(lo, lo + width, |t| f.value(t));
        g_left += gl.integrate(lo, lo + width, |t| g.value(t));
    }
    Ok(ifa / ia * ira - ifra)
}

/// `Σ_{v ⊆ {1..J}} (γ_v M^{|v|})^p` by enumerating all `2^J` subsets.
pub fn subset_sum_bruteforce(weights: &dyn WeightSequence, m: f64, p: f64, big_j: usize) -> Result<f64> {
    if big_j > 20 {
        return config(format!("brute-force enumeration limited to 20 indices, got {big_j}"));
    }
    let g: Vec<f64> = (1..=big_j).map(|j| weights.gamma(j) * m).collect();
    Ok((0..1usize << big_j)
        .map(|mask| {
            let w: f64 = (0..big_j).filter(|i| mask >> i & 1 == 1).map(|i| g[i]).product();
            w.powf(p)
        })
        .sum())
}
