use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orthopoly::MultiIndex;

/// Truncated multi-index set `{β : (Σ_j β_j^q)^{1/q} ≤ H}`, ordered by total
/// degree and then descending lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiIndexSet {
    pub dim: usize,
    pub max_degree: u32,
    pub q: f64,
    pub indices: Vec<MultiIndex>,
}

impl MultiIndexSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// `‖β‖_q = (Σ_j β_j^q)^{1/q}`.
pub fn q_norm(degrees: &[u32], q: f64) -> f64 {
    let s: f64 = degrees
        .iter()
        .filter(|&&d| d > 0)
        .map(|&d| (d as f64).powf(q))
        .sum();
    s.powf(1.0 / q)
}

fn push_compositions(dim: usize, total: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() + 1 == dim {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first);
        push_compositions(dim, total - first, prefix, out);
        prefix.pop();
    }
}

pub fn hyperbolic_index_set(dim: usize, max_degree: u32, q: f64) -> Result<MultiIndexSet> {
    if dim == 0 {
        return Err(Error::domain("index set dimension must be at least 1"));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::domain(format!("hyperbolic norm q = {q} outside (0, 1]")));
    }
    let bound = max_degree as f64 * (1.0 + 1e-12);
    let mut indices = Vec::new();
    let mut buf = Vec::new();
    for total in 0..=max_degree {
        let mut comps = Vec::new();
        push_compositions(dim, total, &mut buf, &mut comps);
        indices.extend(
            comps
                .into_iter()
                .filter(|c| q_norm(c, q) <= bound)
                .map(MultiIndex),
        );
    }
    Ok(MultiIndexSet {
        dim,
        max_degree,
        q,
        indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    /// All indices with entries ≤ H, filtered by the hyperbolic criterion.
    fn brute_force(dim: usize, h: u32, q: f64) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        let total = (h as usize + 1).pow(dim as u32);
        for code in 0..total {
            let mut c = code;
            let mut idx = Vec::with_capacity(dim);
            for _ in 0..dim {
                idx.push((c % (h as usize + 1)) as u32);
                c /= h as usize + 1;
            }
            if idx.iter().sum::<u32>() <= h && q_norm(&idx, q) <= h as f64 + 1e-9 {
                out.push(idx);
            }
        }
        out.sort();
        out
    }

    #[test]
    fn standard_truncation_cardinality() {
        for m in 1..=6 {
            for h in 0..=6u32 {
                let set = hyperbolic_index_set(m, h, 1.0).unwrap();
                assert_eq!(set.len(), binomial(m + h as usize, h as usize), "M={m} H={h}");
            }
        }
    }

    #[test]
    fn hyperbolic_two_by_two() {
        let set = hyperbolic_index_set(2, 2, 0.5).unwrap();
        assert_eq!(set.len(), 5);
        assert!(!set.indices.contains(&MultiIndex(vec![1, 1])));
        assert_eq!(hyperbolic_index_set(2, 2, 1.0).unwrap().len(), 6);
        assert_eq!(hyperbolic_index_set(5, 0, 0.3).unwrap().indices, vec![MultiIndex::zero(5)]);
    }

    #[test]
    fn matches_brute_force_and_is_ordered() {
        for &(m, h, q) in &[(3, 4, 0.5), (4, 5, 0.75), (2, 6, 0.6), (5, 3, 0.8)] {
            let set = hyperbolic_index_set(m, h, q).unwrap();
            let mut got: Vec<Vec<u32>> = set.indices.iter().map(|i| i.0.clone()).collect();
            assert_eq!(got[0], vec![0; m]);
            for w in set.indices.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                assert!(
                    a.total_degree() < b.total_degree()
                        || (a.total_degree() == b.total_degree() && a.0 > b.0)
                );
            }
            got.sort();
            assert_eq!(got, brute_force(m, h, q));
        }
    }

    #[test]
    fn rejects_bad_q() {
        assert!(hyperbolic_index_set(2, 2, 0.0).is_err());
        assert!(hyperbolic_index_set(2, 2, 1.5).is_err());
    }
}
