//! Anchored decomposition terms `G(u_u^h(·, y_u))` by inclusion–exclusion over the subsets of `u`.

use std::sync::atomic::{AtomicU64, Ordering};

use dashmap::DashMap;

use crate::activeset::IndexSet;
use crate::error::{config, Result};
use crate::fem1d::{Discretization, Mesh1D};

/// Memo of `G(u^h(·, y_v))` keyed by the nonzero coordinates `(j, bits of y_j)`.
///
/// Zero coordinates are dropped from keys, so `y_v` with `y_j = 0` shares an entry with
/// `y_{v \ {j}}`.
#[derive(Debug)]
pub struct SubsetSolveCache {
    mesh: Mesh1D,
    map: DashMap<Vec<(usize, u64)>, f64>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl SubsetSolveCache {
    pub fn new(mesh: Mesh1D) -> Self {
        SubsetSolveCache { mesh, map: DashMap::new(), hits: AtomicU64::new(0), misses: AtomicU64::new(0) }
    }

    pub fn mesh(&self) -> Mesh1D {
        self.mesh
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Deliberate defects for checking that validation notices them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Fault {
    #[default]
    None,
    /// Flip the sign of the `v = ∅` term of every nonempty `u`.
    FlipSign,
}

/// Evaluates decomposition terms on one discretization.
pub struct Anchored<'a> {
    disc: &'a Discretization,
    cache: Option<&'a SubsetSolveCache>,
    fault: Fault,
}

impl<'a> Anchored<'a> {
    pub fn new(disc: &'a Discretization) -> Self {
        Anchored { disc, cache: None, fault: Fault::None }
    }

    pub fn with_cache(mut self, cache: &'a SubsetSolveCache) -> Self {
        assert_eq!(cache.mesh(), self.disc.mesh(), "cache belongs to another mesh");
        self.cache = Some(cache);
        self
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = fault;
        self
    }

    /// `G(u^h(·, y))` with `y_j = values[i]` for `j = coords[i]`, all other coordinates zero.
    pub fn projected_value(&self, coords: &[usize], values: &[f64]) -> Result<f64> {
        let idx = self.disc.indices();
        let mut y = vec![0.0; idx.len()];
        let mut key: Vec<(usize, u64)> = Vec::with_capacity(coords.len());
        for (&j, &v) in coords.iter().zip(values) {
            let Some(pos) = idx.iter().position(|&i| i == j) else {
                return config(format!("coordinate {j} is not part of this discretization"));
            };
            y[pos] = v;
            if v != 0.0 {
                key.push((j, v.to_bits()));
            }
        }
        key.sort_unstable();
        let Some(cache) = self.cache else {
            return self.disc.value(&y);
        };
        if let Some(v) = cache.map.get(&key) {
            cache.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(*v);
        }
        cache.misses.fetch_add(1, Ordering::Relaxed);
        let v = self.disc.value(&y)?;
        Ok(*cache.map.entry(key).or_insert(v))
    }

    /// `Σ_{v ⊆ u} (-1)^{|u|-|v|} G(u^h(·, y_v))`, with `y_u[i]` the value of `u`'s `i`-th index.
    pub fn decomposed_value(&self, u: &IndexSet, y_u: &[f64]) -> Result<f64> {
        assert_eq!(u.len(), y_u.len(), "one value per index of u");
        let k = u.len();
        let mut total = 0.0;
        let mut coords = Vec::with_capacity(k);
        let mut vals = Vec::with_capacity(k);
        for mask in 0..1usize << k {
            coords.clear();
            vals.clear();
            for (i, (&j, &y)) in u.as_slice().iter().zip(y_u).enumerate() {
                if mask >> i & 1 == 1 {
                    coords.push(j);
                    vals.push(y);
                }
            }
            let mut term = self.projected_value(&coords, &vals)?;
            if (k - coords.len()) % 2 == 1 {
                term = -term;
            }
            if mask == 0 && k > 0 && self.fault == Fault::FlipSign {
                term = -term;
            }
            total += term;
        }
        Ok(total)
    }
}
