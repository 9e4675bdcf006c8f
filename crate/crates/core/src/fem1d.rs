//! Conforming Lagrange finite elements on (0, 1) with homogeneous Dirichlet conditions.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::error::{config, Error, Result};
use crate::problem::{DiffusionModel, Functional, Profile};
use crate::quadrature::GaussLegendre;

/// Uniform mesh of `elements` cells carrying degree-`degree` elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Mesh1D {
    elements: usize,
    degree: u32,
}

impl Mesh1D {
    pub fn new(elements: usize, degree: u32) -> Result<Self> {
        if elements == 0 {
            return config("mesh needs at least one element");
        }
        if !(1..=3).contains(&degree) {
            return config(format!("element degree {degree} outside 1..=3"));
        }
        Ok(Mesh1D { elements, degree })
    }

    /// `2^k` elements.
    pub fn dyadic(k: u32, degree: u32) -> Result<Self> {
        if k > 30 {
            return config(format!("mesh level {k} too fine"));
        }
        Self::new(1 << k, degree)
    }

    /// Coarsest dyadic mesh with at least two elements and width at most `h_max`.
    pub fn for_width(h_max: f64, degree: u32) -> Result<Self> {
        if !(h_max > 0.0) {
            return config(format!("mesh width must be positive, got {h_max}"));
        }
        let k = (-h_max.log2()).ceil().max(1.0);
        // guard against log2 rounding on exact powers of two
        let mut k = k as u32;
        while k > 1 && 2f64.powi(-(k as i32 - 1)) <= h_max {
            k -= 1;
        }
        Self::dyadic(k, degree)
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn h(&self) -> f64 {
        1.0 / self.elements as f64
    }

    /// Global nodes including both boundary nodes.
    pub fn dof_count(&self) -> usize {
        self.elements * self.degree as usize + 1
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / (self.elements * self.degree as usize) as f64
    }

    /// Number of Gauss points per element: exact for polynomials of degree `2 degree + 5`.
    pub fn quad_points(&self) -> usize {
        self.degree as usize + 3
    }
}

/// Lagrange basis on equispaced nodes of [0, 1] tabulated at Gauss points.
#[derive(Clone, Debug)]
struct RefElement {
    nb: usize,
    t: Vec<f64>,
    w: Vec<f64>,
    phi: Vec<f64>,
    dphi: Vec<f64>,
}

fn lagrange(deg: usize, i: usize, t: f64) -> (f64, f64) {
    let nodes: Vec<f64> = (0..=deg).map(|k| k as f64 / deg as f64).collect();
    let mut val = 1.0;
    let mut der = 0.0;
    for k in 0..=deg {
        if k == i {
            continue;
        }
        let den = nodes[i] - nodes[k];
        der = der * (t - nodes[k]) / den + val / den;
        val *= (t - nodes[k]) / den;
    }
    (val, der)
}

impl RefElement {
    fn new(deg: usize, nq: usize) -> Self {
        let g = GaussLegendre::new(nq);
        let (t, w) = g.on_interval(0.0, 1.0);
        let nb = deg + 1;
        let mut phi = vec![0.0; nq * nb];
        let mut dphi = vec![0.0; nq * nb];
        for q in 0..nq {
            for i in 0..nb {
                let (v, d) = lagrange(deg, i, t[q]);
                phi[q * nb + i] = v;
                dphi[q * nb + i] = d;
            }
        }
        RefElement { nb, t, w, phi, dphi }
    }
}

/// Everything about a mesh that does not depend on `y`: coefficient data at the quadrature
/// points, the load vector and the functional's representer.
#[derive(Clone, Debug)]
pub struct Discretization {
    mesh: Mesh1D,
    indices: Vec<usize>,
    re: RefElement,
    a0q: Vec<f64>,
    /// `phiq[i * E * nq + e * nq + q] = φ_{indices[i]}(x_eq)`
    phiq: Vec<f64>,
    load: Vec<f64>,
    gvec: Vec<f64>,
    /// `w_q dφ_i dφ_k / h`, indexed `[q][i][k]`
    wdd: Vec<f64>,
}

impl Discretization {
    /// Discretization on `mesh` in which the coordinates `indices` may be nonzero.
    pub fn new(model: &DiffusionModel, f: &Profile, functional: &Functional, mesh: Mesh1D, indices: &[usize]) -> Self {
        let deg = mesh.degree as usize;
        let nq = mesh.quad_points();
        let re = RefElement::new(deg, nq);
        let e_count = mesh.elements;
        let h = mesh.h();
        let xq: Vec<f64> =
            (0..e_count).flat_map(|e| re.t.iter().map(move |&t| (e as f64 + t) * h)).collect();
        let a0q: Vec<f64> = xq.iter().map(|&x| model.a0.value(x)).collect();
        let phiq: Vec<f64> =
            indices.iter().flat_map(|&j| xq.iter().map(move |&x| model.phi(j, x))).collect();
        let mut load = vec![0.0; mesh.dof_count()];
        let mut gvec = vec![0.0; mesh.dof_count()];
        for e in 0..e_count {
            for q in 0..nq {
                let x = xq[e * nq + q];
                let (fw, gw) = (f.value(x) * re.w[q] * h, functional.g.value(x) * re.w[q] * h);
                for i in 0..re.nb {
                    load[e * deg + i] += fw * re.phi[q * re.nb + i];
                    gvec[e * deg + i] += gw * re.phi[q * re.nb + i];
                }
            }
        }
        let nb = re.nb;
        let mut wdd = vec![0.0; nq * nb * nb];
        for q in 0..nq {
            for i in 0..nb {
                for k in 0..nb {
                    wdd[(q * nb + i) * nb + k] = re.w[q] * re.dphi[q * nb + i] * re.dphi[q * nb + k] / h;
                }
            }
        }
        Discretization { mesh, indices: indices.to_vec(), re, a0q, phiq, load, gvec, wdd }
    }

    pub fn mesh(&self) -> Mesh1D {
        self.mesh
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Galerkin solution for `y_{indices[i]} = y[i]`, all other coordinates zero.
    /// Returns every nodal value, boundary zeros included.
    pub fn solve(&self, y: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(y.len(), self.indices.len(), "one value per active index");
        let deg = self.mesh.degree as usize;
        let nq = self.re.t.len();
        let nb = self.re.nb;
        let e_count = self.mesh.elements;
        let n = self.mesh.dof_count() - 2;
        let bw = deg;
        // band[r * (bw + 1) + d] = A[r][r - d]
        let mut band = vec![0.0; n * (bw + 1)];
        let mut aq = vec![0.0; nq];
        let mut ke = vec![0.0; nb * nb];
        let stride = e_count * nq;
        for e in 0..e_count {
            aq.copy_from_slice(&self.a0q[e * nq..(e + 1) * nq]);
            for (i, &yi) in y.iter().enumerate() {
                if yi != 0.0 {
                    let p = &self.phiq[i * stride + e * nq..i * stride + (e + 1) * nq];
                    for q in 0..nq {
                        aq[q] += yi * p[q];
                    }
                }
            }
            ke.iter_mut().for_each(|v| *v = 0.0);
            for q in 0..nq {
                if !(aq[q] > 0.0) {
                    let x = (e as f64 + self.re.t[q]) * self.mesh.h();
                    return Err(Error::Numerical(format!(
                        "ellipticity violated: a(x, y) = {} at x = {x}",
                        aq[q]
                    )));
                }
                let w = &self.wdd[q * nb * nb..(q + 1) * nb * nb];
                for (k, v) in ke.iter_mut().enumerate() {
                    *v += aq[q] * w[k];
                }
            }
            for i in 0..nb {
                let gi = e * deg + i;
                if gi == 0 || gi == n + 1 {
                    continue;
                }
                for k in 0..=i {
                    let gk = e * deg + k;
                    if gk == 0 {
                        continue;
                    }
                    band[(gi - 1) * (bw + 1) + (gi - gk)] += ke[i * nb + k];
                }
            }
        }
        let rhs: Vec<f64> = self.load[1..=n].to_vec();
        let x = banded_cholesky_solve(&mut band, bw, rhs)?;
        let mut full = Vec::with_capacity(n + 2);
        full.push(0.0);
        full.extend_from_slice(&x);
        full.push(0.0);
        Ok(full)
    }

    /// `G(u^h(·, y))`.
    pub fn value(&self, y: &[f64]) -> Result<f64> {
        let c = self.solve(y)?;
        Ok(self.apply(&c))
    }

    /// `∫ g v` for the finite element function with nodal values `c`.
    pub fn apply(&self, c: &[f64]) -> f64 {
        self.gvec.iter().zip(c).map(|(g, v)| g * v).sum()
    }

    /// Residual `‖K c - F‖ / ‖F‖` of a computed solution.
    pub fn relative_residual(&self, y: &[f64], c: &[f64]) -> Result<f64> {
        let n = self.mesh.dof_count() - 2;
        let dense = self.dense_stiffness(y)?;
        let mut num = 0.0;
        let mut den = 0.0;
        for r in 0..n {
            let kc: f64 = (0..n).map(|k| dense[r * n + k] * c[k + 1]).sum();
            num += (kc - self.load[r + 1]).powi(2);
            den += self.load[r + 1].powi(2);
        }
        Ok((num / den.max(f64::MIN_POSITIVE)).sqrt())
    }

    /// Interior stiffness matrix as a dense row-major array (small meshes only).
    pub fn dense_stiffness(&self, y: &[f64]) -> Result<Vec<f64>> {
        let n = self.mesh.dof_count() - 2;
        let mut out = vec![0.0; n * n];
        let deg = self.mesh.degree as usize;
        let nq = self.re.t.len();
        let nb = self.re.nb;
        let stride = self.mesh.elements * nq;
        for e in 0..self.mesh.elements {
            for q in 0..nq {
                let mut a = self.a0q[e * nq + q];
                for (i, &yi) in y.iter().enumerate() {
                    a += yi * self.phiq[i * stride + e * nq + q];
                }
                if !(a > 0.0) {
                    return Err(Error::Numerical("ellipticity violated".into()));
                }
                for i in 0..nb {
                    for k in 0..nb {
                        let (gi, gk) = (e * deg + i, e * deg + k);
                        if gi == 0 || gk == 0 || gi == n + 1 || gk == n + 1 {
                            continue;
                        }
                        out[(gi - 1) * n + gk - 1] += a * self.wdd[(q * nb + i) * nb + k];
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Solves `A x = b` for symmetric positive definite banded `A` (lower band, overwritten by
/// its Cholesky factor).
pub fn banded_cholesky_solve(band: &mut [f64], bw: usize, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    let w = bw + 1;
    assert_eq!(band.len(), n * w);
    for j in 0..n {
        let lo = j.saturating_sub(bw);
        for i in lo..j {
            let mut s = band[j * w + (j - i)];
            for k in lo.max(i.saturating_sub(bw))..i {
                s -= band[j * w + (j - k)] * band[i * w + (i - k)];
            }
            band[j * w + (j - i)] = s / band[i * w];
        }
        let mut s = band[j * w];
        for k in lo..j {
            s -= band[j * w + (j - k)].powi(2);
        }
        if !(s > 0.0) {
            return Err(Error::Numerical(format!("stiffness matrix not positive definite at row {j}")));
        }
        band[j * w] = s.sqrt();
    }
    for j in 0..n {
        let lo = j.saturating_sub(bw);
        let mut s = b[j];
        for k in lo..j {
            s -= band[j * w + (j - k)] * b[k];
        }
        b[j] = s / band[j * w];
    }
    for j in (0..n).rev() {
        let mut s = b[j];
        for k in j + 1..(j + bw + 1).min(n) {
            s -= band[k * w + (k - j)] * b[k];
        }
        b[j] = s / band[j * w];
    }
    Ok(b)
}

/// A finite element function together with the parameter that produced it.
#[derive(Clone, Debug)]
pub struct FemSolution {
    pub coefficients: Vec<f64>,
    pub mesh: Mesh1D,
    pub param_fingerprint: u64,
}

fn fingerprint(y: &[(usize, f64)]) -> u64 {
    let mut h = DefaultHasher::new();
    for &(j, v) in y {
        if v != 0.0 {
            (j, v.to_bits()).hash(&mut h);
        }
    }
    h.finish()
}

impl FemSolution {
    /// Value at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let deg = self.mesh.degree as usize;
        let e = ((x * self.mesh.elements as f64).floor() as usize).min(self.mesh.elements - 1);
        let t = x * self.mesh.elements as f64 - e as f64;
        (0..=deg).map(|i| self.coefficients[e * deg + i] * lagrange(deg, i, t).0).sum()
    }

    /// `(∫ |u'|^2)^{1/2}`, the norm of `H^1_0(0, 1)`.
    pub fn energy_norm(&self) -> f64 {
        let deg = self.mesh.degree as usize;
        let re = RefElement::new(deg, self.mesh.quad_points());
        let h = self.mesh.h();
        let mut s = 0.0;
        for e in 0..self.mesh.elements {
            for q in 0..re.t.len() {
                let d: f64 = (0..re.nb).map(|i| self.coefficients[e * deg + i] * re.dphi[q * re.nb + i]).sum::<f64>() / h;
                s += re.w[q] * h * d * d;
            }
        }
        s.sqrt()
    }
}

/// Galerkin solution for the sparse parameter `y = [(j, y_j)]`.
pub fn assemble_solve(model: &DiffusionModel, f: &Profile, y: &[(usize, f64)], mesh: Mesh1D) -> Result<FemSolution> {
    for &(j, v) in y {
        if !(-0.5..=0.5).contains(&v) {
            return config(format!("y_{j} = {v} outside [-1/2, 1/2]"));
        }
    }
    let idx: Vec<usize> = y.iter().map(|p| p.0).collect();
    let vals: Vec<f64> = y.iter().map(|p| p.1).collect();
    let disc = Discretization::new(model, f, &Functional::integral(Profile::Constant(0.0)), mesh, &idx);
    Ok(FemSolution { coefficients: disc.solve(&vals)?, mesh, param_fingerprint: fingerprint(y) })
}

/// `G(u^h)` by per-element Gauss quadrature: exact for polynomial `g`, `degree + 6` otherwise.
pub fn apply_functional(functional: &Functional, sol: &FemSolution) -> f64 {
    let deg = sol.mesh.degree as usize;
    let exact_deg = deg + functional.g.polynomial_degree().map_or(6, |d| d as usize);
    let re = RefElement::new(deg, exact_deg / 2 + 1);
    let h = sol.mesh.h();
    let mut s = 0.0;
    for e in 0..sol.mesh.elements {
        for q in 0..re.t.len() {
            let u: f64 = (0..re.nb).map(|i| sol.coefficients[e * deg + i] * re.phi[q * re.nb + i]).sum();
            s += re.w[q] * h * functional.g.value((e as f64 + re.t[q]) * h) * u;
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct EocReport {
    pub elements: Vec<usize>,
    pub errors: Vec<f64>,
    /// `log2(e_i / e_{i+1})` for consecutive meshes.
    pub orders: Vec<f64>,
    /// Least-squares slope of `log2 e` against `log2(1/h)`.
    pub fitted: f64,
    /// Every error is at round-off level: the discrete space contains the solution.
    pub exact: bool,
}

/// Errors below this count as exact reproduction.
pub const EXACT_FLOOR: f64 = 1e-13;

/// Functional errors on `2^k` element meshes, `k ∈ levels`, against a reference on the
/// finest mesh refined three more times.
pub fn convergence_order(
    model: &DiffusionModel,
    f: &Profile,
    functional: &Functional,
    y: &[(usize, f64)],
    degree: u32,
    levels: &[u32],
) -> Result<EocReport> {
    let Some(&finest) = levels.iter().max() else {
        return config("need at least one mesh level");
    };
    let idx: Vec<usize> = y.iter().map(|p| p.0).collect();
    let vals: Vec<f64> = y.iter().map(|p| p.1).collect();
    let value = |k: u32| -> Result<f64> {
        Discretization::new(model, f, functional, Mesh1D::dyadic(k, degree)?, &idx).value(&vals)
    };
    let reference = value(finest + 3)?;
    let mut errors = Vec::new();
    for &k in levels {
        errors.push((value(k)? - reference).abs());
    }
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let exact = errors.iter().all(|&e| e < EXACT_FLOOR);
    let xs: Vec<f64> = levels.iter().map(|&k| f64::from(k)).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.max(f64::MIN_POSITIVE).log2()).collect();
    Ok(EocReport {
        elements: levels.iter().map(|&k| 1usize << k).collect(),
        errors,
        orders,
        fitted: -slope(&xs, &ys),
        exact,
    })
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{BFamily, BSequence, PhiFamily};

    fn flat() -> DiffusionModel {
        DiffusionModel::new(
            Profile::Constant(1.0),
            PhiFamily::Explicit(vec![]),
            BSequence::new(BFamily::Explicit(vec![]), None),
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn quadratic_solution_is_nodally_exact() {
        for deg in 1..=3 {
            let mesh = Mesh1D::new(7, deg).unwrap();
            let sol = assemble_solve(&flat(), &Profile::Constant(1.0), &[], mesh).unwrap();
            for (i, c) in sol.coefficients.iter().enumerate() {
                let x = mesh.node(i);
                assert!((c - x * (1.0 - x) / 2.0).abs() < 1e-13, "deg {deg} node {i}");
            }
            if deg >= 2 {
                let g = apply_functional(&Functional::integral(Profile::Constant(1.0)), &sol);
                assert!((g - 1.0 / 12.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_load_zero_solution() {
        let mesh = Mesh1D::new(5, 2).unwrap();
        let sol = assemble_solve(&flat(), &Profile::Constant(0.0), &[], mesh).unwrap();
        assert!(sol.coefficients.iter().all(|&c| c == 0.0));
        assert_eq!(apply_functional(&Functional::integral(Profile::Constant(1.0)), &sol), 0.0);
    }

    #[test]
    fn banded_matches_dense() {
        // tridiagonal 2, -1 system with known solution
        let n = 6;
        let mut band = vec![0.0; n * 2];
        for r in 0..n {
            band[r * 2] = 2.0;
            if r > 0 {
                band[r * 2 + 1] = -1.0;
            }
        }
        let x = banded_cholesky_solve(&mut band, 1, vec![1.0; n]).unwrap();
        for (i, v) in x.iter().enumerate() {
            let k = (i + 1) as f64;
            assert!((v - k * (n as f64 + 1.0 - k) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mesh_rounding() {
        assert_eq!(Mesh1D::for_width(0.25, 1).unwrap().elements(), 4);
        assert_eq!(Mesh1D::for_width(0.3, 1).unwrap().elements(), 4);
        assert_eq!(Mesh1D::for_width(0.9, 2).unwrap().elements(), 2);
        assert_eq!(Mesh1D::for_width(0.001, 1).unwrap().elements(), 1024);
    }

    #[test]
    fn ellipticity_is_checked() {
        let m = DiffusionModel::new(
            Profile::Constant(0.1),
            PhiFamily::Explicit(vec![Profile::Constant(1.0)]),
            BSequence::new(BFamily::Explicit(vec![1.0]), None),
            0.5,
        )
        .unwrap();
        let err = assemble_solve(&m, &Profile::Constant(1.0), &[(1, -0.5)], Mesh1D::new(4, 1).unwrap()).unwrap_err();
        assert!(err.to_string().contains("ellipticity violated"));
    }
}
