//! Generating vectors memoised in memory and, optionally, in a directory of text files.
//!
//! File format:
//! ```text
//! plr v1 alpha=2 m=5 n=10 s=3 modulus=409
//! q1=1
//! q2=1f3
//! q3=2c
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use super::{modulus_degree, search_generating_vector, PolyLatticeRule, Strategy};
use crate::error::{Error, Result};
use crate::gf2poly::Poly2;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RuleKey {
    pub alpha: u32,
    pub m: u32,
    pub n: u32,
    pub s: usize,
    pub strategy: String,
    /// Hex digest of the weight vector.
    pub weights: String,
}

impl RuleKey {
    pub fn new(alpha: u32, m: u32, weights: &[f64], strategy: Strategy) -> Result<Self> {
        let n = modulus_degree(alpha, m)?;
        Ok(RuleKey {
            alpha,
            m,
            n,
            s: weights.len(),
            strategy: strategy.tag(),
            weights: fingerprint(weights),
        })
    }

    fn file_name(&self) -> String {
        format!(
            "plr-a{}-m{}-n{}-s{}-{}-{}.txt",
            self.alpha, self.m, self.n, self.s, self.strategy, self.weights
        )
    }
}

fn fingerprint(weights: &[f64]) -> String {
    let mut h = Sha256::new();
    for w in weights {
        h.update(w.to_bits().to_le_bytes());
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Where rules come from: memory, then the cache directory, then a fresh search.
pub struct RuleSource {
    strategy: Strategy,
    dir: Option<PathBuf>,
    search_enabled: bool,
    mem: Mutex<HashMap<RuleKey, Arc<PolyLatticeRule>>>,
}

impl RuleSource {
    pub fn new(strategy: Strategy, dir: Option<PathBuf>) -> Self {
        RuleSource { strategy, dir, search_enabled: true, mem: Mutex::new(HashMap::new()) }
    }

    /// In-memory only, CBC.
    pub fn in_memory() -> Self {
        Self::new(Strategy::Cbc, None)
    }

    /// Refuse to construct rules that are not already cached.
    pub fn without_search(mut self) -> Self {
        self.search_enabled = false;
        self
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn cache_dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Rule with `2^m` points, modulus degree `max(α m, 1)`, weights `γ_j` per coordinate.
    pub fn get(&self, alpha: u32, m: u32, weights: &[f64]) -> Result<Arc<PolyLatticeRule>> {
        let key = RuleKey::new(alpha, m, weights, self.strategy)?;
        if let Some(r) = self.mem.lock().unwrap().get(&key) {
            return Ok(r.clone());
        }
        let rule = match self.read(&key) {
            Some(r) => r,
            None => {
                if !self.search_enabled {
                    return Err(Error::Numerical(format!(
                        "no cached generating vector for alpha={alpha} m={m} s={} and search is disabled",
                        weights.len()
                    )));
                }
                let r = search_generating_vector(m, key.n, key.s, weights, alpha, self.strategy)?;
                self.write(&key, &r)?;
                r
            }
        };
        let rule = Arc::new(rule);
        Ok(self.mem.lock().unwrap().entry(key).or_insert(rule).clone())
    }

    fn read(&self, key: &RuleKey) -> Option<PolyLatticeRule> {
        let path = self.dir.as_ref()?.join(key.file_name());
        let text = fs::read_to_string(path).ok()?;
        parse_rule(&text, key)
    }

    fn write(&self, key: &RuleKey, rule: &PolyLatticeRule) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        fs::create_dir_all(dir)?;
        let path = dir.join(key.file_name());
        let tmp = dir.join(format!("{}.tmp{}", key.file_name(), std::process::id()));
        fs::write(&tmp, format_rule(key.alpha, rule))?;
        fs::rename(tmp, path)?;
        Ok(())
    }
}

pub(crate) fn format_rule(alpha: u32, rule: &PolyLatticeRule) -> String {
    let mut out = format!(
        "plr v1 alpha={alpha} m={} n={} s={} modulus={:x}\n",
        rule.m(),
        rule.n(),
        rule.dim(),
        rule.modulus()
    );
    for (j, q) in rule.gen().iter().enumerate() {
        out.push_str(&format!("q{}={:x}\n", j + 1, q));
    }
    out
}

/// Parse a cache file, returning `None` on any mismatch with `key` so the rule is rebuilt.
fn parse_rule(text: &str, key: &RuleKey) -> Option<PolyLatticeRule> {
    let mut lines = text.lines();
    let header: HashMap<&str, &str> = {
        let h = lines.next()?;
        let rest = h.strip_prefix("plr v1 ")?;
        rest.split_whitespace().filter_map(|kv| kv.split_once('=')).collect()
    };
    let num = |k: &str| header.get(k)?.parse::<u64>().ok();
    if num("alpha")? != key.alpha as u64
        || num("m")? != key.m as u64
        || num("n")? != key.n as u64
        || num("s")? != key.s as u64
    {
        return None;
    }
    let modulus = Poly2(u64::from_str_radix(header.get("modulus")?, 16).ok()?);
    let mut gen = Vec::with_capacity(key.s);
    for (j, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let (name, val) = line.split_once('=')?;
        if name.trim() != format!("q{}", j + 1) {
            return None;
        }
        gen.push(Poly2(u64::from_str_radix(val.trim(), 16).ok()?));
    }
    if gen.len() != key.s {
        return None;
    }
    PolyLatticeRule::new(key.m, key.n, modulus, gen).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_through_text() {
        let w = [1.0, 0.5, 0.25];
        let src = RuleSource::in_memory();
        let rule = src.get(2, 4, &w).unwrap();
        let key = RuleKey::new(2, 4, &w, Strategy::Cbc).unwrap();
        let text = format_rule(2, &rule);
        assert!(text.starts_with("plr v1 alpha=2 m=4 n=8 s=3 modulus="));
        assert_eq!(parse_rule(&text, &key).as_ref(), Some(rule.as_ref()));
    }

    #[test]
    fn corrupt_file_is_ignored() {
        let key = RuleKey::new(1, 3, &[1.0], Strategy::Cbc).unwrap();
        assert!(parse_rule("garbage", &key).is_none());
        assert!(parse_rule("plr v1 alpha=1 m=3 n=3 s=1 modulus=b\nq1=0\n", &key).is_none());
        assert!(parse_rule("plr v1 alpha=1 m=3 n=3 s=1 modulus=b\nq1=5\n", &key).is_some());
    }

    #[test]
    fn search_disabled_without_cache_errors() {
        let src = RuleSource::in_memory().without_search();
        assert!(src.get(1, 3, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn fingerprint_distinguishes_weights() {
        assert_ne!(fingerprint(&[1.0, 0.5]), fingerprint(&[1.0, 0.25]));
        assert_eq!(fingerprint(&[1.0, 0.5]).len(), 16);
    }
}
