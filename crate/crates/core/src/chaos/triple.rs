//! Expectations of triple products of multivariate Hermite polynomials.

use std::collections::HashMap;

use super::hermite::{chi, factorial, triple_product_1d};
use super::index::{IndexSet, MultiIndex};
use crate::{Error, Result};

/// `E[He_a He_b He_c] = Π_k E[He_{a_k} He_{b_k} He_{c_k}]`.
pub fn triple_product(a: &MultiIndex, b: &MultiIndex, c: &MultiIndex) -> Result<f64> {
    if a.len() != b.len() || a.len() != c.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: if a.len() != b.len() { b.len() } else { c.len() },
        });
    }
    let mut acc = 1.0;
    for k in 0..a.len() {
        let v = triple_product_1d(
            a.entries()[k] as usize,
            b.entries()[k] as usize,
            c.entries()[k] as usize,
        );
        if v == 0.0 {
            return Ok(0.0);
        }
        acc *= v;
    }
    Ok(acc)
}

/// Calls `visit(γ, E[He_a He_b He_γ])` for every `γ = a + b - 2κ`,
/// `κ ≤ a ∧ b`. These are the only `γ` with a nonzero triple product.
pub fn for_each_product_term(a: &MultiIndex, b: &MultiIndex, mut visit: impl FnMut(&MultiIndex, f64)) {
    let dim = a.len();
    let ae = a.entries();
    let be = b.entries();
    // coordinates where κ_k can be nonzero
    let active: Vec<usize> = (0..dim).filter(|&k| ae[k] > 0 && be[k] > 0).collect();
    let mut kappa = vec![0u32; active.len()];
    let mut gamma = a.add(b);
    loop {
        let mut value = 1.0;
        for (slot, &k) in active.iter().enumerate() {
            let (ak, bk, kk) = (ae[k] as usize, be[k] as usize, kappa[slot] as usize);
            value *= chi(ak, bk, kk) * factorial(ak + bk - 2 * kk);
        }
        for k in 0..dim {
            if !active.contains(&k) {
                value *= factorial(gamma.entries()[k] as usize);
            }
        }
        visit(&gamma, value);

        // odometer over κ ≤ a ∧ b
        let mut slot = 0;
        loop {
            if slot == active.len() {
                return;
            }
            let k = active[slot];
            if kappa[slot] < ae[k].min(be[k]) {
                kappa[slot] += 1;
                gamma = with_entry(&gamma, k, ae[k] + be[k] - 2 * kappa[slot]);
                break;
            }
            kappa[slot] = 0;
            gamma = with_entry(&gamma, k, ae[k] + be[k]);
            slot += 1;
        }
    }
}

fn with_entry(m: &MultiIndex, k: usize, v: u32) -> MultiIndex {
    let mut e = m.entries().to_vec();
    e[k] = v;
    MultiIndex::new(e)
}

/// Sparse, fully symmetric table of `E[He_{α(i)} He_{α(j)} He_{α(k)}]` over
/// one index set. Only canonical keys `i ≤ j ≤ k` are stored.
#[derive(Debug, Clone)]
pub struct TripleProductTensor {
    len: usize,
    entries: HashMap<(u32, u32, u32), f64>,
}

impl TripleProductTensor {
    pub fn build(set: &IndexSet) -> Self {
        let mut entries = HashMap::new();
        for i in 0..set.len() {
            for j in i..set.len() {
                for_each_product_term(set.member(i), set.member(j), |gamma, v| {
                    if let Some(k) = set.position(gamma) {
                        if k >= j {
                            entries.insert((i as u32, j as u32, k as u32), v);
                        }
                    }
                });
            }
        }
        TripleProductTensor {
            len: set.len(),
            entries,
        }
    }

    /// Entry for any ordering of `(i, j, k)`.
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let mut key = [i as u32, j as u32, k as u32];
        key.sort_unstable();
        self.entries
            .get(&(key[0], key[1], key[2]))
            .copied()
            .unwrap_or(0.0)
    }

    /// Number of stored canonical entries.
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Sparse matrix `(C_α)_{ij} = E[He_α He_{β(i)} He_{β(j)}]` over an inner
/// index set, stored as a coordinate list.
#[derive(Debug, Clone)]
pub struct ChaosMatrix {
    pub n: usize,
    pub entries: Vec<(u32, u32, f64)>,
}

impl ChaosMatrix {
    pub fn new(alpha: &MultiIndex, inner: &IndexSet) -> Self {
        let mut entries = Vec::new();
        for i in 0..inner.len() {
            for_each_product_term(alpha, inner.member(i), |gamma, v| {
                if let Some(j) = inner.position(gamma) {
                    entries.push((i as u32, j as u32, v));
                }
            });
        }
        entries.sort_by_key(|&(i, j, _)| (i, j));
        ChaosMatrix {
            n: inner.len(),
            entries,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }
}


#[cfg(test)]
mod props {
    use proptest::prelude::*;

    use super::*;

    fn index(dim: usize) -> impl Strategy<Value = MultiIndex> {
        proptest::collection::vec(0u32..5, dim).prop_map(MultiIndex::new)
    }

    proptest! {
        #[test]
        fn symmetric_and_parity_selective(
            (a, b, c) in (1usize..4).prop_flat_map(|d| (index(d), index(d), index(d)))
        ) {
            let abc = triple_product(&a, &b, &c).unwrap();
            prop_assert_eq!(abc, triple_product(&b, &a, &c).unwrap());
            prop_assert_eq!(abc, triple_product(&c, &b, &a).unwrap());
            prop_assert_eq!(abc, triple_product(&a, &c, &b).unwrap());
            prop_assert!(abc >= 0.0);
            if (a.degree() + b.degree() + c.degree()) % 2 == 1 {
                prop_assert_eq!(abc, 0.0);
            }
        }
    }
}
