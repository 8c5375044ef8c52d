//! The classical-model Galerkin operator `A_I`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::system::GalerkinSystem;
use crate::chaos::{ChaosMatrix, IndexSet};
use crate::fem::CsrMatrix;
use crate::{Error, Result};

/// A linear map on block vectors.
pub trait BlockOperator: Sync {
    fn len(&self) -> usize;

    fn apply(&self, x: &[f64]) -> Vec<f64>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// How `A_I` is represented.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "degree")]
pub enum AssemblyMode {
    /// Exact coupling `E[a He_α He_β]` at every quadrature point, applied
    /// matrix-free.
    ExactMoments,
    /// `Σ_α C_α ⊗ S_α` with the coefficient expansion cut at total degree
    /// `p̂`.
    TensorTruncated(usize),
}

/// `A_I`, block `(β, α)` equal to `∫ E[a He_α He_β] ∇θ_i · ∇θ_j`.
pub struct Model1Operator<'a> {
    sys: &'a GalerkinSystem,
    blocks: Option<Vec<(ChaosMatrix, CsrMatrix)>>,
}

impl<'a> Model1Operator<'a> {
    pub fn new(sys: &'a GalerkinSystem, mode: AssemblyMode) -> Result<Self> {
        let blocks = match mode {
            AssemblyMode::ExactMoments => None,
            AssemblyMode::TensorTruncated(degree) => {
                let p = sys.index_set().degree();
                if degree > 2 * p {
                    return Err(Error::InvalidArgument(format!(
                        "coefficient degree {degree} exceeds 2p = {}; terms beyond 2p do not couple and the exact mode is equivalent",
                        2 * p
                    )));
                }
                let outer = IndexSet::new(sys.index_set().dim(), degree)?;
                let nqp = sys.space().n_qp();
                let mut blocks = Vec::new();
                let mut mono = vec![0.0; outer.len()];
                let mut coeff = vec![vec![0.0; nqp]; outer.len()];
                for q in 0..nqp {
                    crate::galerkin::pointwise::scaled_monomials(&outer, sys.phi(q), &mut mono);
                    for (i, c) in coeff.iter_mut().enumerate() {
                        c[q] = sys.scale1(q) * mono[i];
                    }
                }
                for (i, alpha) in outer.members().iter().enumerate() {
                    let c = ChaosMatrix::new(alpha, sys.index_set());
                    if c.is_zero() {
                        continue;
                    }
                    blocks.push((c, sys.space().assemble_stiffness(&coeff[i])));
                }
                Some(blocks)
            }
        };
        Ok(Model1Operator { sys, blocks })
    }

    pub fn system(&self) -> &GalerkinSystem {
        self.sys
    }

    fn apply_exact(&self, x: &[f64]) -> Vec<f64> {
        let sys = self.sys;
        let n = sys.n_modes();
        let d = sys.space().dim();
        let set = sys.index_set();
        let plan = sys.plan();
        let mut g = sys.field_gradients(x, n);
        g.par_chunks_mut(n * d)
            .enumerate()
            .for_each_init(Vec::new, |pows, (q, chunk)| {
                plan.powers(sys.phi(q), pows);
                plan.apply_l(pows, chunk, d);
                for i in 0..n {
                    let f = set.factorial(i);
                    for c in 0..d {
                        chunk[i * d + c] *= f;
                    }
                }
                plan.apply_lt(pows, chunk, d);
                let s = sys.scale1(q);
                chunk.iter_mut().for_each(|v| *v *= s);
            });
        sys.field_divergence(&g, n)
    }

    fn apply_tensor(&self, blocks: &[(ChaosMatrix, CsrMatrix)], x: &[f64]) -> Vec<f64> {
        let nx = self.sys.n_dofs();
        let n = self.sys.n_modes();
        let mut out = vec![0.0; n * nx];
        for (c, s) in blocks {
            let sx: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|j| s.matvec(&x[j * nx..(j + 1) * nx]))
                .collect();
            for &(i, j, v) in &c.entries {
                let (i, j) = (i as usize, j as usize);
                for (o, y) in out[i * nx..(i + 1) * nx].iter_mut().zip(&sx[j]) {
                    *o += v * y;
                }
            }
        }
        out
    }
}

impl BlockOperator for Model1Operator<'_> {
    fn len(&self) -> usize {
        self.sys.block_len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match &self.blocks {
            None => self.apply_exact(x),
            Some(b) => self.apply_tensor(b, x),
        }
    }
}

/// Dense row-major copy of a block operator (small instances only).
pub fn densify(op: &dyn BlockOperator, limit: usize) -> Result<Vec<f64>> {
    let n = op.len();
    if n > limit {
        return Err(Error::TooLarge { size: n, limit });
    }
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            op.apply(&e)
        })
        .collect();
    let mut dense = vec![0.0; n * n];
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            dense[i * n + j] = *v;
        }
    }
    Ok(dense)
}
