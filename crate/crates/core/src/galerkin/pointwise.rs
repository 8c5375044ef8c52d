//! Per-point chaos operators.
//!
//! At a fixed `x`, the classical model couples chaos modes through
//! `B_{αβ} = E[a He_α He_β] = c Σ_κ χ(α, β, κ) Φ^{α+β-2κ}`. Writing
//! `L_{κα} = C(α, κ) Φ^{α-κ}` for `κ ≤ α` gives `B = c Lᵀ diag(κ!) L`, and
//! `L` is a product of one shift per random dimension, so `B` applies in
//! `O(M·N·p)` work instead of `O(N²)`.

use crate::chaos::{binomial, IndexSet};

/// Raise chains of an index set: for member `β` and dimension `k`, the
/// members `β + j e_k` (`j = 1, 2, ...`) with the weights `C(β_k + j, j)`.
#[derive(Debug, Clone)]
pub struct ShiftPlan {
    n: usize,
    dim: usize,
    degree: usize,
    // offsets[k * (n + 1) + i] .. offsets[k * (n + 1) + i + 1]
    offsets: Vec<usize>,
    targets: Vec<u32>,
    powers: Vec<u8>,
    weights: Vec<f64>,
}

impl ShiftPlan {
    pub fn new(set: &IndexSet) -> Self {
        let (n, dim) = (set.len(), set.dim());
        let mut offsets = Vec::with_capacity(dim * (n + 1));
        let mut targets = Vec::new();
        let mut powers = Vec::new();
        let mut weights = Vec::new();
        for k in 0..dim {
            for i in 0..n {
                offsets.push(targets.len());
                let base = set.member(i).entries()[k] as usize;
                let mut cur = i;
                let mut j = 0;
                while let Some(next) = set.raise(cur, k) {
                    j += 1;
                    targets.push(next as u32);
                    powers.push(j as u8);
                    weights.push(binomial(base + j, j));
                    cur = next;
                }
            }
            offsets.push(targets.len());
        }
        ShiftPlan {
            n,
            dim,
            degree: set.degree(),
            offsets,
            targets,
            powers,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn range(&self, k: usize, i: usize) -> std::ops::Range<usize> {
        let o = k * (self.n + 1) + i;
        self.offsets[o]..self.offsets[o + 1]
    }

    /// Fills `pows[k * (p + 1) + j] = Φ_k^j`.
    pub fn powers(&self, phi: &[f64], pows: &mut Vec<f64>) {
        let w = self.degree + 1;
        pows.clear();
        pows.resize(self.dim * w, 1.0);
        for k in 0..self.dim {
            for j in 1..w {
                pows[k * w + j] = pows[k * w + j - 1] * phi[k];
            }
        }
    }

    /// `g ← L g` for `ncomp` interleaved components (`g[i * ncomp + c]`).
    pub fn apply_l(&self, pows: &[f64], g: &mut [f64], ncomp: usize) {
        let w = self.degree + 1;
        for k in 0..self.dim {
            let pk = &pows[k * w..(k + 1) * w];
            if pk.get(1).copied().unwrap_or(0.0) == 0.0 {
                continue;
            }
            // ascending: every read index is higher and still unmodified
            for i in 0..self.n {
                for e in self.range(k, i) {
                    let c = self.weights[e] * pk[self.powers[e] as usize];
                    let t = self.targets[e] as usize;
                    for comp in 0..ncomp {
                        g[i * ncomp + comp] += c * g[t * ncomp + comp];
                    }
                }
            }
        }
    }

    /// `h ← Lᵀ h`, the adjoint of [`ShiftPlan::apply_l`].
    pub fn apply_lt(&self, pows: &[f64], h: &mut [f64], ncomp: usize) {
        let w = self.degree + 1;
        for k in (0..self.dim).rev() {
            let pk = &pows[k * w..(k + 1) * w];
            if pk.get(1).copied().unwrap_or(0.0) == 0.0 {
                continue;
            }
            // descending scatter: the source entry is read before anything
            // lower can write into it
            for i in (0..self.n).rev() {
                for e in self.range(k, i) {
                    let c = self.weights[e] * pk[self.powers[e] as usize];
                    let t = self.targets[e] as usize;
                    for comp in 0..ncomp {
                        h[t * ncomp + comp] += c * h[i * ncomp + comp];
                    }
                }
            }
        }
    }
}

/// For each member `γ`, every split `γ = κ + δ` with both parts in the set.
/// The pair with `δ = 0` comes last.
#[derive(Debug, Clone)]
pub struct DownSets {
    offsets: Vec<usize>,
    pairs: Vec<(u32, u32)>,
}

impl DownSets {
    pub fn new(set: &IndexSet) -> Self {
        let mut offsets = Vec::with_capacity(set.len() + 1);
        let mut pairs = Vec::new();
        for (g, gamma) in set.members().iter().enumerate() {
            offsets.push(pairs.len());
            for kappa in gamma.down_set() {
                let k = set.position(&kappa).expect("down-closed set");
                if k == g {
                    continue;
                }
                let delta = gamma.checked_sub(&kappa).expect("κ ≤ γ");
                let d = set.position(&delta).expect("down-closed set");
                pairs.push((k as u32, d as u32));
            }
            pairs.push((g as u32, 0));
        }
        offsets.push(pairs.len());
        DownSets { offsets, pairs }
    }

    /// `(κ, δ)` flat indices with `κ + δ = γ(g)`.
    pub fn of(&self, g: usize) -> &[(u32, u32)] {
        &self.pairs[self.offsets[g]..self.offsets[g + 1]]
    }

    pub fn total(&self) -> usize {
        self.pairs.len()
    }
}

/// `out[i] = Φ^{α(i)} / α(i)!`.
pub fn scaled_monomials(set: &IndexSet, phi: &[f64], out: &mut [f64]) {
    out[0] = 1.0;
    for i in 1..set.len() {
        let alpha = set.member(i);
        let k = alpha
            .entries()
            .iter()
            .position(|&a| a > 0)
            .expect("nonzero member");
        let below = set.lower(i, k).expect("down-closed set");
        out[i] = out[below] * phi[k] / alpha.entries()[k] as f64;
    }
}
