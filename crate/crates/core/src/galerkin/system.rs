//! Discrete stochastic Galerkin setting shared by both models.

use std::sync::Arc;

use rayon::prelude::*;

use super::pointwise::{scaled_monomials, DownSets, ShiftPlan};
use crate::chaos::{ChaosExpansion, IndexSet, Normalization};
use crate::fem::FemSpace;
use crate::randomfield::LognormalCoefficient;
use crate::{Error, Result};

/// Everything both propagators need: the FE space, the chaos index set,
/// the coefficient data at every quadrature point and the load.
///
/// Block vectors are mode-major: chaos mode `α(i)` occupies entries
/// `i * N_x .. (i + 1) * N_x`.
pub struct GalerkinSystem {
    space: Arc<FemSpace>,
    set: Arc<IndexSet>,
    coefficient: LognormalCoefficient,
    // Φ restricted to the set's dimensions, nqp × M
    phi: Vec<f64>,
    scale1: Vec<f64>,
    scale2: Vec<f64>,
    plan: ShiftPlan,
    down: DownSets,
    load: Vec<f64>,
}

impl GalerkinSystem {
    pub fn new(
        space: Arc<FemSpace>,
        coefficient: LognormalCoefficient,
        set: Arc<IndexSet>,
        force: impl Fn(&[f64]) -> f64 + Sync,
    ) -> Result<Self> {
        let m_field = coefficient.dim();
        let m = set.dim();
        if m > m_field {
            return Err(Error::DimensionMismatch {
                expected: m_field,
                got: m,
            });
        }
        let d = space.dim();
        let points = space.all_qp_coords();
        let full = coefficient.phi_at_points(&points, d);
        let nqp = space.n_qp();
        let mut phi = Vec::with_capacity(nqp * m);
        let mut scale1 = Vec::with_capacity(nqp);
        let mut scale2 = Vec::with_capacity(nqp);
        for q in 0..nqp {
            let f = &full[q * m_field..(q + 1) * m_field];
            phi.extend_from_slice(&f[..m]);
            scale1.push(coefficient.model1_scale(f));
            scale2.push(coefficient.model2_scale(f));
        }
        let load = space.assemble_load(force);
        Ok(GalerkinSystem {
            plan: ShiftPlan::new(&set),
            down: DownSets::new(&set),
            space,
            set,
            coefficient,
            phi,
            scale1,
            scale2,
            load,
        })
    }

    pub fn space(&self) -> &Arc<FemSpace> {
        &self.space
    }

    pub fn index_set(&self) -> &Arc<IndexSet> {
        &self.set
    }

    pub fn coefficient(&self) -> &LognormalCoefficient {
        &self.coefficient
    }

    /// `N_x`.
    pub fn n_dofs(&self) -> usize {
        self.space.n_dofs()
    }

    /// `N_{M,p}`.
    pub fn n_modes(&self) -> usize {
        self.set.len()
    }

    /// `N_x · N_{M,p}`.
    pub fn block_len(&self) -> usize {
        self.n_dofs() * self.n_modes()
    }

    /// Deterministic load `∫ f θ_i`.
    pub fn load(&self) -> &[f64] {
        &self.load
    }

    /// Block load: the deterministic load in mode 0, zero elsewhere.
    pub fn block_load(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.block_len()];
        f[..self.n_dofs()].copy_from_slice(&self.load);
        f
    }

    pub(crate) fn phi(&self, q: usize) -> &[f64] {
        let m = self.set.dim();
        &self.phi[q * m..(q + 1) * m]
    }

    pub(crate) fn scale1(&self, q: usize) -> f64 {
        self.scale1[q]
    }

    pub(crate) fn scale2(&self, q: usize) -> f64 {
        self.scale2[q]
    }

    pub(crate) fn plan(&self) -> &ShiftPlan {
        &self.plan
    }

    pub(crate) fn down_sets(&self) -> &DownSets {
        &self.down
    }

    /// Wraps a block vector as a chaos expansion of FE fields.
    pub fn to_expansion(&self, u: Vec<f64>) -> Result<ChaosExpansion> {
        ChaosExpansion::new(self.set.clone(), self.n_dofs(), u, Normalization::Hermite)
    }

    /// `L₂(Ω; H₀¹(D))` norm: `(Σ_α α! |u_α|²_{H¹})^{1/2}`.
    pub fn chaos_h1_norm(&self, u: &[f64]) -> f64 {
        let nx = self.n_dofs();
        let parts: Vec<f64> = (0..self.n_modes())
            .into_par_iter()
            .map(|i| self.set.factorial(i) * self.space.h1_seminorm_sq(&u[i * nx..(i + 1) * nx]))
            .collect();
        parts.iter().sum::<f64>().sqrt()
    }

    /// Gradients of `k` fields (concatenated, each of length `N_x`) at every
    /// quadrature point, laid out as `[qp][field][component]`.
    pub fn field_gradients(&self, fields: &[f64], k: usize) -> Vec<f64> {
        let (d, nx) = (self.space.dim(), self.n_dofs());
        let nq = self.space.n_qp_per_element();
        let space = &self.space;
        let mut out = vec![0.0; space.n_qp() * k * d];
        out.par_chunks_mut(nq * k * d)
            .enumerate()
            .for_each(|(e, chunk)| {
                let dofs = space.element_dofs(e);
                for (a, &dof) in dofs.iter().enumerate() {
                    if dof == u32::MAX {
                        continue;
                    }
                    for f in 0..k {
                        let v = fields[f * nx + dof as usize];
                        if v == 0.0 {
                            continue;
                        }
                        for l in 0..nq {
                            let g = space.shape_grad(l, a);
                            let base = (l * k + f) * d;
                            for c in 0..d {
                                chunk[base + c] += v * g[c];
                            }
                        }
                    }
                }
            });
        out
    }

    /// Inverse layout of [`GalerkinSystem::field_gradients`]: returns
    /// `Σ_q w_q flux_{q,f} · ∇θ_i(x_q)` for each field `f`, concatenated.
    pub fn field_divergence(&self, flux: &[f64], k: usize) -> Vec<f64> {
        let (d, nx) = (self.space.dim(), self.n_dofs());
        let nq = self.space.n_qp_per_element();
        let nl = self.space.n_local();
        let space = &self.space;
        // element-local contributions, [e][field][local node]
        let mut local = vec![0.0; space.n_elements() * k * nl];
        local
            .par_chunks_mut(k * nl)
            .enumerate()
            .for_each(|(e, chunk)| {
                let fl = &flux[e * nq * k * d..(e + 1) * nq * k * d];
                for l in 0..nq {
                    let w = space.qp_weight(l);
                    for a in 0..nl {
                        let g = space.shape_grad(l, a);
                        for f in 0..k {
                            let base = (l * k + f) * d;
                            let mut s = 0.0;
                            for c in 0..d {
                                s += fl[base + c] * g[c];
                            }
                            chunk[f * nl + a] += w * s;
                        }
                    }
                }
            });
        let mut out = vec![0.0; k * nx];
        out.par_chunks_mut(nx).enumerate().for_each(|(f, o)| {
            for e in 0..space.n_elements() {
                for (a, &dof) in space.element_dofs(e).iter().enumerate() {
                    if dof != u32::MAX {
                        o[dof as usize] += local[(e * k + f) * nl + a];
                    }
                }
            }
        });
        out
    }

    /// `Φ^α/α!` at quadrature point `q` for every member.
    pub(crate) fn monomials_at(&self, q: usize, out: &mut [f64]) {
        scaled_monomials(&self.set, self.phi(q), out);
    }
}
