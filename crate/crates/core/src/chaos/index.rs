//! Multi-indices and the truncated total-degree set `J(M, p)`.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use super::hermite::{binomial, factorial};
use super::triple::TripleProductTensor;
use crate::{Error, Result};

/// Default ceiling on the number of members of an [`IndexSet`].
pub const DEFAULT_CARDINALITY_CAP: usize = 200_000;

const NONE: u32 = u32::MAX;

/// A finite multi-index `α = (α_1, ..., α_M)` of Hermite degrees.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    pub fn zeros(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    /// The unit index `e_k`.
    pub fn unit(dim: usize, k: usize) -> Self {
        let mut v = vec![0; dim];
        v[k] = 1;
        MultiIndex(v)
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total degree `|α|`.
    pub fn degree(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    /// `α! = Π α_k!`.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&a| factorial(a as usize)).product()
    }

    /// Componentwise `self ≤ other`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// Componentwise `self ≤ other` with `self ≠ other`.
    pub fn lt(&self, other: &MultiIndex) -> bool {
        self.le(other) && self != other
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self - other` when `other ≤ self`.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        if !other.le(self) {
            return None;
        }
        Some(MultiIndex(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    /// Componentwise minimum `α ∧ β`.
    pub fn meet(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| *a.min(b)).collect())
    }

    /// `C(α, β) = Π C(α_k, β_k)`.
    pub fn binomial(&self, beta: &MultiIndex) -> f64 {
        self.0
            .iter()
            .zip(&beta.0)
            .map(|(&a, &b)| binomial(a as usize, b as usize))
            .product()
    }

    /// `x^α = Π x_k^{α_k}`.
    pub fn monomial(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .filter(|(&a, _)| a > 0)
            .map(|(&a, &v)| v.powi(a as i32))
            .product()
    }

    /// Every `κ` with `κ ≤ self`, in lexicographic order.
    pub fn down_set(&self) -> Vec<MultiIndex> {
        let mut out = vec![MultiIndex::zeros(self.len())];
        for (k, &a) in self.0.iter().enumerate() {
            let mut next = Vec::with_capacity(out.len() * (a as usize + 1));
            for base in &out {
                for v in 0..=a {
                    let mut m = base.clone();
                    m.0[k] = v;
                    next.push(m);
                }
            }
            out = next;
        }
        out.sort();
        out
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex(v)
    }
}

/// `N(M, p) = C(M + p, M)` computed exactly.
pub fn cardinality(dim: usize, degree: usize) -> u128 {
    // C(M+p, p) by the multiplicative formula, exact at every step
    let mut acc: u128 = 1;
    for i in 1..=degree as u128 {
        acc = acc * (dim as u128 + i) / i;
    }
    acc
}

/// The set `J(M, p)` of length-`M` multi-indices with total degree at most
/// `p`, in graded lexicographic order.
///
/// Members are sorted by ascending total degree, ties broken by ascending
/// lexicographic comparison of the entries, so member 0 is the zero index.
pub struct IndexSet {
    dim: usize,
    degree: usize,
    members: Vec<MultiIndex>,
    position: HashMap<MultiIndex, usize>,
    // flat N*M tables: index of α + e_k / α - e_k, or NONE
    raise: Vec<u32>,
    lower: Vec<u32>,
    factorials: Vec<f64>,
    triple: OnceLock<TripleProductTensor>,
}

impl IndexSet {
    pub fn new(dim: usize, degree: usize) -> Result<Self> {
        Self::with_cap(dim, degree, DEFAULT_CARDINALITY_CAP)
    }

    pub fn with_cap(dim: usize, degree: usize, cap: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("index set dimension must be >= 1".into()));
        }
        let n = cardinality(dim, degree);
        if n > cap as u128 {
            return Err(Error::IndexSetTooLarge {
                dim,
                degree,
                cardinality: n,
                cap,
            });
        }
        let mut members = Vec::with_capacity(n as usize);
        let mut scratch = vec![0u32; dim];
        for d in 0..=degree {
            compositions(&mut scratch, 0, d as u32, &mut members);
        }
        debug_assert_eq!(members.len() as u128, n);

        let position: HashMap<MultiIndex, usize> = members
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();

        let len = members.len();
        let mut raise = vec![NONE; len * dim];
        let mut lower = vec![NONE; len * dim];
        for (i, m) in members.iter().enumerate() {
            for k in 0..dim {
                let mut up = m.clone();
                up.0[k] += 1;
                if let Some(&j) = position.get(&up) {
                    raise[i * dim + k] = j as u32;
                    lower[j * dim + k] = i as u32;
                }
            }
        }
        let factorials = members.iter().map(MultiIndex::factorial).collect();

        Ok(IndexSet {
            dim,
            degree,
            members,
            position,
            raise,
            lower,
            factorials,
            triple: OnceLock::new(),
        })
    }

    /// Number of random dimensions `M`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Maximum total degree `p`.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[MultiIndex] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &MultiIndex {
        &self.members[i]
    }

    pub fn position(&self, alpha: &MultiIndex) -> Option<usize> {
        self.position.get(alpha).copied()
    }

    /// Flat index of `α(i) + e_k`, if it is a member.
    #[inline]
    pub fn raise(&self, i: usize, k: usize) -> Option<usize> {
        let j = self.raise[i * self.dim + k];
        (j != NONE).then_some(j as usize)
    }

    /// Flat index of `α(i) - e_k`, if `α(i)_k > 0`.
    #[inline]
    pub fn lower(&self, i: usize, k: usize) -> Option<usize> {
        let j = self.lower[i * self.dim + k];
        (j != NONE).then_some(j as usize)
    }

    /// `α(i)!`.
    #[inline]
    pub fn factorial(&self, i: usize) -> f64 {
        self.factorials[i]
    }

    /// Triple products over this set, built on first use.
    pub fn triple_tensor(&self) -> &TripleProductTensor {
        self.triple.get_or_init(|| TripleProductTensor::build(self))
    }
}

impl fmt::Debug for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IndexSet")
            .field("dim", &self.dim)
            .field("degree", &self.degree)
            .field("len", &self.members.len())
            .finish()
    }
}

// All entries of length scratch.len() - pos summing to `remaining`, appended
// in ascending lexicographic order.
fn compositions(scratch: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == scratch.len() {
        scratch[pos] = remaining;
        out.push(MultiIndex(scratch.to_vec()));
        return;
    }
    for v in 0..=remaining {
        scratch[pos] = v;
        compositions(scratch, pos + 1, remaining - v, out);
    }
    scratch[pos] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_cardinalities() {
        assert_eq!(IndexSet::new(3, 10).unwrap().len(), 286);
        assert_eq!(IndexSet::new(8, 5).unwrap().len(), 1287);
        let s = IndexSet::new(1, 0).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s.member(0).is_zero());
    }

    #[test]
    fn graded_lexicographic_order() {
        let s = IndexSet::new(2, 2).unwrap();
        let got: Vec<Vec<u32>> = s.members().iter().map(|m| m.entries().to_vec()).collect();
        assert_eq!(
            got,
            vec![
                vec![0, 0],
                vec![0, 1],
                vec![1, 0],
                vec![0, 2],
                vec![1, 1],
                vec![2, 0]
            ]
        );
    }

    #[test]
    fn cap_rejects_large_sets() {
        let err = IndexSet::with_cap(20, 10, 1000).unwrap_err();
        assert!(matches!(err, Error::IndexSetTooLarge { .. }));
        assert!(IndexSet::new(0, 3).is_err());
    }

    #[test]
    fn raise_and_lower_are_inverse() {
        let s = IndexSet::new(3, 4).unwrap();
        for i in 0..s.len() {
            for k in 0..3 {
                if let Some(j) = s.raise(i, k) {
                    assert_eq!(s.lower(j, k), Some(i));
                    assert_eq!(s.member(j).degree(), s.member(i).degree() + 1);
                } else {
                    assert_eq!(s.member(i).degree(), 4);
                }
            }
        }
    }

    #[test]
    fn multi_index_algebra() {
        let a = MultiIndex::new(vec![2, 1, 0]);
        let b = MultiIndex::new(vec![1, 1, 0]);
        assert!(b.le(&a) && b.lt(&a) && !a.lt(&a));
        assert_eq!(a.checked_sub(&b), Some(MultiIndex::new(vec![1, 0, 0])));
        assert_eq!(b.checked_sub(&a), None);
        assert_eq!(a.factorial(), 2.0);
        assert_eq!(a.binomial(&b), 2.0);
        assert_eq!(a.down_set().len(), 6);
        assert_eq!(a.monomial(&[3.0, 2.0, 5.0]), 18.0);
    }
}
