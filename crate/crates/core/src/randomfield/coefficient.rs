//! The log-normal coefficient `a = exp(σG - σ²/2)`, its Wick inverse, and
//! their chaos expansions.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kl::KlBasis;
use crate::chaos::{chi, ChaosExpansion, IndexSet, MultiIndex, Normalization};
use crate::{Error, Result};

/// How the truncated coefficient is normalized.
///
/// With `Φ(x)` the scaled K-L vector, the truncated coefficient is
/// `c(x)·exp(Φ·ξ - |Φ|²/2)`:
///
/// * `Wick`: `c = 1`, so `E[a] = 1` at every point, and the Wick-inverse
///   coefficient is `e^{-σ²}` times the `a`-expansion.
/// * `Truncated`: `a = exp(Φ·ξ - σ²/2)` exactly, so `c = e^{(|Φ|²-σ²)/2}`;
///   the Wick inverse of `1/a` then carries `e^{-(|Φ|²+σ²)/2}`.
///
/// The two agree whenever `|Φ(x)|² = σ²`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientScaling {
    #[default]
    Wick,
    Truncated,
}

/// Source of the amplitude vector `Φ(x)`.
#[derive(Clone)]
pub enum FieldModel {
    /// `Φ(x) = (σ √λ_i φ_i(x))_i` from a K-L basis.
    Kl(Arc<KlBasis>),
    /// One Gaussian, no spatial variation: `Φ ≡ σ`.
    Constant,
    /// One Gaussian with amplitude `σ(1 + ε·shape(x))`.
    Perturbed {
        epsilon: f64,
        shape: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for FieldModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldModel::Kl(kl) => write!(f, "Kl(M={})", kl.len()),
            FieldModel::Constant => write!(f, "Constant"),
            FieldModel::Perturbed { epsilon, .. } => write!(f, "Perturbed(ε={epsilon})"),
        }
    }
}

/// Log-normal coefficient with standard deviation `σ` of the underlying
/// Gaussian field, or (with `wick_inverse_scaled`) the Wick-inverse
/// coefficient `â` of the Wick-type model.
#[derive(Clone, Debug)]
pub struct LognormalCoefficient {
    sigma: f64,
    model: FieldModel,
    scaling: CoefficientScaling,
    wick_inverse_scaled: bool,
}

impl LognormalCoefficient {
    pub fn from_kl(kl: KlBasis) -> Self {
        LognormalCoefficient {
            sigma: kl.sigma(),
            model: FieldModel::Kl(Arc::new(kl)),
            scaling: CoefficientScaling::Wick,
            wick_inverse_scaled: false,
        }
    }

    /// `a = exp(σξ - σ²/2)` with a single standard normal `ξ`.
    pub fn constant(sigma: f64) -> Self {
        LognormalCoefficient {
            sigma,
            model: FieldModel::Constant,
            scaling: CoefficientScaling::Wick,
            wick_inverse_scaled: false,
        }
    }

    /// One Gaussian with amplitude `Φ(x) = σ(1 + ε·shape(x))`. Under the
    /// default Wick scaling the Wick-inverse factor stays `e^{-σ²}` while the
    /// field variance is `|Φ(x)|²`, which is what makes the two models drift
    /// apart at order `εσ²`; with [`CoefficientScaling::Truncated`] the
    /// sample is exactly `exp(σ(1 + ε·shape(x))ξ - σ²/2)`.
    pub fn perturbed(
        sigma: f64,
        epsilon: f64,
        shape: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        LognormalCoefficient {
            sigma,
            model: FieldModel::Perturbed {
                epsilon,
                shape: Arc::new(shape),
            },
            scaling: CoefficientScaling::Wick,
            wick_inverse_scaled: false,
        }
    }

    pub fn with_scaling(mut self, scaling: CoefficientScaling) -> Self {
        self.scaling = scaling;
        self
    }

    /// The Wick-inverse coefficient `â` of the same field.
    pub fn wick_inverse(&self) -> Self {
        let mut out = self.clone();
        out.wick_inverse_scaled = true;
        out
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn model(&self) -> &FieldModel {
        &self.model
    }

    pub fn scaling(&self) -> CoefficientScaling {
        self.scaling
    }

    pub fn is_wick_inverse(&self) -> bool {
        self.wick_inverse_scaled
    }

    /// Number of Gaussian variables `M`.
    pub fn dim(&self) -> usize {
        match &self.model {
            FieldModel::Kl(kl) => kl.len(),
            _ => 1,
        }
    }

    /// `Φ(x)`.
    pub fn phi_at(&self, x: &[f64], out: &mut [f64]) {
        match &self.model {
            FieldModel::Kl(kl) => kl.phi_vector(x, out),
            FieldModel::Constant => out[0] = self.sigma,
            FieldModel::Perturbed { epsilon, shape } => {
                out[0] = self.sigma * (1.0 + epsilon * shape(x))
            }
        }
    }

    /// `Φ` at many points (stride `dim` in, stride `M` out).
    pub fn phi_at_points(&self, points: &[f64], dim: usize) -> Vec<f64> {
        let m = self.dim();
        let mut out = vec![0.0; points.len() / dim * m];
        out.par_chunks_mut(m)
            .zip(points.par_chunks(dim))
            .for_each(|(o, x)| self.phi_at(x, o));
        out
    }

    /// Scale `c(x)` of the classical coefficient given `Φ(x)`.
    pub fn model1_scale(&self, phi: &[f64]) -> f64 {
        let s2 = self.sigma * self.sigma;
        match self.scaling {
            CoefficientScaling::Wick => 1.0,
            CoefficientScaling::Truncated => (0.5 * (norm_sq(phi) - s2)).exp(),
        }
    }

    /// Scale of the Wick-inverse coefficient given `Φ(x)`.
    pub fn model2_scale(&self, phi: &[f64]) -> f64 {
        let s2 = self.sigma * self.sigma;
        match self.scaling {
            CoefficientScaling::Wick => (-s2).exp(),
            CoefficientScaling::Truncated => (-0.5 * (norm_sq(phi) + s2)).exp(),
        }
    }

    /// Scale multiplying `Φ^α/α!` in this coefficient's chaos expansion.
    pub fn scale(&self, phi: &[f64]) -> f64 {
        if self.wick_inverse_scaled {
            self.model2_scale(phi)
        } else {
            self.model1_scale(phi)
        }
    }

    /// Chaos expansion over `index_set` at the given points: mode `α` holds
    /// `scale·Φ^α(x)/α!` at each point.
    pub fn coefficient_chaos(
        &self,
        points: &[f64],
        dim: usize,
        index_set: Arc<IndexSet>,
    ) -> Result<ChaosExpansion> {
        if index_set.dim() > self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: index_set.dim(),
            });
        }
        let m = self.dim();
        let n_points = points.len() / dim;
        let phi = self.phi_at_points(points, dim);
        let n_modes = index_set.len();
        let mut coefficients = vec![0.0; n_modes * n_points];
        for p in 0..n_points {
            let full = &phi[p * m..(p + 1) * m];
            let used = &full[..index_set.dim()];
            let scale = self.scale(full);
            for (i, alpha) in index_set.members().iter().enumerate() {
                coefficients[i * n_points + p] = scale * alpha.monomial(used) / index_set.factorial(i);
            }
        }
        ChaosExpansion::new(index_set, n_points, coefficients, Normalization::Hermite)
    }

    /// `a(x; ξ) = c(x)·exp(Φ(x)·ξ - |Φ(x)|²/2)`; with the truncated scaling
    /// this is `exp(σ Σ √λ_i φ_i(x) ξ_i - σ²/2)`.
    pub fn sample_at(&self, x: &[f64], xi: &[f64], phi_buf: &mut [f64]) -> f64 {
        self.phi_at(x, phi_buf);
        self.sample_from_phi(phi_buf, xi)
    }

    /// Sample value given a precomputed `Φ(x)`.
    pub fn sample_from_phi(&self, phi: &[f64], xi: &[f64]) -> f64 {
        let dot: f64 = phi.iter().zip(xi).map(|(p, x)| p * x).sum();
        self.model1_scale(phi) * (dot - 0.5 * norm_sq(phi)).exp()
    }

    /// Sample of `a` at many points (stride `dim`).
    pub fn sample_coefficient(&self, points: &[f64], dim: usize, xi: &[f64]) -> Result<Vec<f64>> {
        if self.wick_inverse_scaled {
            return Err(Error::InvalidArgument(
                "sampling is defined for the classical coefficient only".into(),
            ));
        }
        if xi.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: xi.len(),
            });
        }
        let m = self.dim();
        Ok(points
            .par_chunks(dim)
            .map_init(|| vec![0.0; m], |buf, x| self.sample_at(x, xi, buf))
            .collect())
    }

    /// `E[a(x) He_α He_β] = scale·Σ_{κ ≤ α∧β} χ(α, β, κ) Φ^{α+β-2κ}(x)`.
    pub fn exact_second_moment(&self, a: &MultiIndex, b: &MultiIndex, x: &[f64]) -> Result<f64> {
        let m = self.dim();
        if a.len() != b.len() || a.len() > m {
            return Err(Error::DimensionMismatch {
                expected: a.len().max(m),
                got: b.len(),
            });
        }
        let mut phi = vec![0.0; m];
        self.phi_at(x, &mut phi);
        Ok(self.scale(&phi) * second_moment_sum(a, b, &phi[..a.len()]))
    }
}

/// `Σ_{κ ≤ α∧β} χ(α, β, κ) Φ^{α+β-2κ}`, factorized per coordinate.
pub fn second_moment_sum(a: &MultiIndex, b: &MultiIndex, phi: &[f64]) -> f64 {
    a.entries()
        .iter()
        .zip(b.entries())
        .zip(phi)
        .map(|((&ak, &bk), &p)| {
            let (ak, bk) = (ak as usize, bk as usize);
            (0..=ak.min(bk))
                .map(|k| chi(ak, bk, k) * p.powi((ak + bk - 2 * k) as i32))
                .sum::<f64>()
        })
        .product()
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}
