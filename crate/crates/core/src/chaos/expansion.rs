//! Chaos expansions of scalar or field-valued random elements.

use std::sync::Arc;

use super::hermite::hermite_table;
use super::index::{IndexSet, MultiIndex};
use crate::{Error, Result};

/// Which Hermite basis the coefficients refer to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Coefficients of `He_α`.
    Hermite,
    /// Coefficients of `he_α = He_α / √(α!)`.
    Orthonormal,
}

/// `Σ_α c_α B_α(ξ)` where each `c_α` is a vector of `field_len` values and
/// `B_α` is `He_α` or `he_α` according to [`Normalization`].
///
/// Coefficients are stored flat, mode-major: mode `i` occupies
/// `coefficients[i * field_len..(i + 1) * field_len]`.
#[derive(Clone, Debug)]
pub struct ChaosExpansion {
    index_set: Arc<IndexSet>,
    field_len: usize,
    coefficients: Vec<f64>,
    normalization: Normalization,
}

impl ChaosExpansion {
    pub fn new(
        index_set: Arc<IndexSet>,
        field_len: usize,
        coefficients: Vec<f64>,
        normalization: Normalization,
    ) -> Result<Self> {
        let expected = index_set.len() * field_len;
        if coefficients.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: coefficients.len(),
            });
        }
        Ok(ChaosExpansion {
            index_set,
            field_len,
            coefficients,
            normalization,
        })
    }

    pub fn zeros(index_set: Arc<IndexSet>, field_len: usize) -> Self {
        let n = index_set.len() * field_len;
        ChaosExpansion {
            index_set,
            field_len,
            coefficients: vec![0.0; n],
            normalization: Normalization::Hermite,
        }
    }

    /// Scalar expansion in the `He` basis.
    pub fn scalar(index_set: Arc<IndexSet>, coefficients: Vec<f64>) -> Result<Self> {
        Self::new(index_set, 1, coefficients, Normalization::Hermite)
    }

    pub fn index_set(&self) -> &Arc<IndexSet> {
        &self.index_set
    }

    pub fn field_len(&self) -> usize {
        self.field_len
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }

    /// Coefficient field of mode `i`.
    pub fn mode(&self, i: usize) -> &[f64] {
        &self.coefficients[i * self.field_len..(i + 1) * self.field_len]
    }

    pub fn mode_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.field_len;
        &mut self.coefficients[i * n..(i + 1) * n]
    }

    /// Coefficient field of multi-index `α`, if it is in the index set.
    pub fn get(&self, alpha: &MultiIndex) -> Option<&[f64]> {
        self.index_set.position(alpha).map(|i| self.mode(i))
    }

    /// Same element expressed in the other basis.
    pub fn to_normalization(&self, target: Normalization) -> ChaosExpansion {
        let mut out = self.clone();
        if target == self.normalization {
            return out;
        }
        for i in 0..self.index_set.len() {
            let root = self.index_set.factorial(i).sqrt();
            // He coefficient c ↔ he coefficient c·√(α!)
            let factor = match target {
                Normalization::Orthonormal => root,
                Normalization::Hermite => 1.0 / root,
            };
            for v in out.mode_mut(i) {
                *v *= factor;
            }
        }
        out.normalization = target;
        out
    }

    /// `Σ_α c_α B_α(ξ)`.
    pub fn eval(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let weights = self.basis_values(xi)?;
        let mut out = vec![0.0; self.field_len];
        for (i, w) in weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            for (o, c) in out.iter_mut().zip(self.mode(i)) {
                *o += w * c;
            }
        }
        Ok(out)
    }

    /// Values of every basis polynomial of this expansion at `ξ`.
    pub fn basis_values(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let mut w = hermite_basis_values(&self.index_set, xi)?;
        if self.normalization == Normalization::Orthonormal {
            for (i, v) in w.iter_mut().enumerate() {
                *v /= self.index_set.factorial(i).sqrt();
            }
        }
        Ok(w)
    }

    /// `E[·]`, the coefficient of the zero index.
    pub fn mean(&self) -> &[f64] {
        self.mode(0)
    }

    /// `Var[·] = Σ_{α≠0} (orthonormal coefficient)²`, pointwise.
    pub fn variance(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.field_len];
        for i in 1..self.index_set.len() {
            let weight = match self.normalization {
                Normalization::Hermite => self.index_set.factorial(i),
                Normalization::Orthonormal => 1.0,
            };
            for (o, c) in out.iter_mut().zip(self.mode(i)) {
                *o += weight * c * c;
            }
        }
        out
    }

    /// Wick product `x ⋄ y`, truncated to total degree `degree`
    /// (default: the sum of both degrees).
    ///
    /// Fields multiply pointwise; a scalar (`field_len == 1`) operand
    /// broadcasts. The result uses `x`'s normalization.
    pub fn wick_product(&self, y: &ChaosExpansion, degree: Option<usize>) -> Result<ChaosExpansion> {
        let x = self;
        let dim = x.index_set.dim();
        if y.index_set.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: y.index_set.dim(),
            });
        }
        let field_len = match (x.field_len, y.field_len) {
            (a, b) if a == b => a,
            (1, b) => b,
            (a, 1) => a,
            (a, b) => return Err(Error::DimensionMismatch { expected: a, got: b }),
        };
        let degree = degree.unwrap_or(x.index_set.degree() + y.index_set.degree());
        let out_set = Arc::new(IndexSet::new(dim, degree)?);
        let xh = x.to_normalization(Normalization::Hermite);
        let yh = y.to_normalization(Normalization::Hermite);
        let mut out = ChaosExpansion::zeros(out_set.clone(), field_len);
        for (i, a) in x.index_set.members().iter().enumerate() {
            if a.degree() > degree {
                break;
            }
            let xa = xh.mode(i);
            for (j, b) in y.index_set.members().iter().enumerate() {
                if a.degree() + b.degree() > degree {
                    break;
                }
                let k = out_set
                    .position(&a.add(b))
                    .expect("sum of degrees within truncation");
                let yb = yh.mode(j);
                let dst = out.mode_mut(k);
                for (n, d) in dst.iter_mut().enumerate() {
                    let u = if xa.len() == 1 { xa[0] } else { xa[n] };
                    let v = if yb.len() == 1 { yb[0] } else { yb[n] };
                    *d += u * v;
                }
            }
        }
        Ok(out.to_normalization(x.normalization))
    }
}

/// `He_α(ξ)` for every member of `set`.
pub fn hermite_basis_values(set: &IndexSet, xi: &[f64]) -> Result<Vec<f64>> {
    if xi.len() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            got: xi.len(),
        });
    }
    let tables: Vec<Vec<f64>> = xi.iter().map(|&x| hermite_table(set.degree(), x)).collect();
    Ok(set
        .members()
        .iter()
        .map(|m| {
            m.entries()
                .iter()
                .zip(&tables)
                .map(|(&a, t)| t[a as usize])
                .product()
        })
        .collect())
}

/// Scalar expansion of `e^{⋄ Σ_k φ_k ξ_k} = exp(φ·ξ − |φ|²/2)`: coefficient
/// `φ^α / α!` on `He_α`.
pub fn wick_exponential(index_set: Arc<IndexSet>, phi: &[f64]) -> Result<ChaosExpansion> {
    if phi.len() != index_set.dim() {
        return Err(Error::DimensionMismatch {
            expected: index_set.dim(),
            got: phi.len(),
        });
    }
    let coefficients = index_set
        .members()
        .iter()
        .enumerate()
        .map(|(i, m)| m.monomial(phi) / index_set.factorial(i))
        .collect();
    ChaosExpansion::scalar(index_set, coefficients)
}
