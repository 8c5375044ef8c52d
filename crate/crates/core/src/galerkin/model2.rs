//! The Wick-type propagator: block lower triangular, every diagonal block
//! equal to `S_(0)`.

use rayon::prelude::*;

use super::operators::BlockOperator;
use super::system::GalerkinSystem;
use crate::chaos::ChaosExpansion;
use crate::fem::BandedCholesky;
use crate::Result;

/// Factorized `A_II`.
///
/// In its natural form, row `γ` of `A_II` is the equation for the `He_γ`
/// coefficient: `Σ_{α≤γ} S_{γ-α} u_α = δ_{γ0} b` with
/// `S_δ = ∫ ĉ Φ^δ/δ! ∇θ_i·∇θ_j`. As a preconditioner for the symmetric
/// `A_I` (whose row `β` carries the weight `E[He_β²] = β!`) its rows are
/// scaled by `γ!`; [`Model2Propagator::apply_inverse`] inverts that scaled
/// form.
pub struct Model2Propagator<'a> {
    sys: &'a GalerkinSystem,
    factor: BandedCholesky,
    levels: Vec<std::ops::Range<usize>>,
}

impl<'a> Model2Propagator<'a> {
    pub fn new(sys: &'a GalerkinSystem) -> Result<Self> {
        let nqp = sys.space().n_qp();
        let c: Vec<f64> = (0..nqp).map(|q| sys.scale2(q)).collect();
        let factor = BandedCholesky::factor(&sys.space().assemble_stiffness(&c))?;
        let set = sys.index_set();
        let mut levels = Vec::new();
        let mut start = 0;
        for i in 1..=set.len() {
            if i == set.len() || set.member(i).degree() != set.member(start).degree() {
                levels.push(start..i);
                start = i;
            }
        }
        Ok(Model2Propagator { sys, factor, levels })
    }

    pub fn system(&self) -> &GalerkinSystem {
        self.sys
    }

    /// Solves the natural-form system `A_II v = rhs` by forward
    /// substitution over degree levels, reusing one factorization.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let sys = self.sys;
        let (nx, n, d) = (sys.n_dofs(), sys.n_modes(), sys.space().dim());
        let nqp = sys.space().n_qp();
        let down = sys.down_sets();
        let mut v = vec![0.0; n * nx];
        // gradients of solved modes, [qp][mode][component]
        let mut grads = vec![0.0; nqp * n * d];
        for level in &self.levels {
            let width = level.len();
            let mut b = rhs[level.start * nx..level.end * nx].to_vec();
            if level.start > 0 {
                let mut flux = vec![0.0; nqp * width * d];
                flux.par_chunks_mut(width * d)
                    .enumerate()
                    .for_each_init(
                        || vec![0.0; n],
                        |mono, (q, fq)| {
                            sys.monomials_at(q, mono);
                            let gq = &grads[q * n * d..(q + 1) * n * d];
                            let s = sys.scale2(q);
                            for (li, g) in level.clone().enumerate() {
                                let pairs = down.of(g);
                                // the last pair is γ itself, still unknown
                                for &(kappa, delta) in &pairs[..pairs.len() - 1] {
                                    let c = s * mono[delta as usize];
                                    for comp in 0..d {
                                        fq[li * d + comp] += c * gq[kappa as usize * d + comp];
                                    }
                                }
                            }
                        },
                    );
                let div = sys.field_divergence(&flux, width);
                b.iter_mut().zip(&div).for_each(|(x, y)| *x -= y);
            }
            b.par_chunks_mut(nx).for_each(|col| self.factor.solve_in_place(col));
            let g = sys.field_gradients(&b, width);
            for q in 0..nqp {
                let src = &g[q * width * d..(q + 1) * width * d];
                grads[(q * n + level.start) * d..(q * n + level.end) * d].copy_from_slice(src);
            }
            v[level.start * nx..level.end * nx].copy_from_slice(&b);
        }
        v
    }

    /// `A_II v` in natural form.
    pub fn apply_natural(&self, v: &[f64]) -> Vec<f64> {
        let sys = self.sys;
        let (n, d) = (sys.n_modes(), sys.space().dim());
        let set = sys.index_set();
        let plan = sys.plan();
        let mut g = sys.field_gradients(v, n);
        g.par_chunks_mut(n * d)
            .enumerate()
            .for_each_init(Vec::new, |pows, (q, chunk)| {
                plan.powers(sys.phi(q), pows);
                for i in 0..n {
                    let f = set.factorial(i);
                    for c in 0..d {
                        chunk[i * d + c] *= f;
                    }
                }
                plan.apply_lt(pows, chunk, d);
                let s = sys.scale2(q);
                for i in 0..n {
                    let f = s / set.factorial(i);
                    for c in 0..d {
                        chunk[i * d + c] *= f;
                    }
                }
            });
        sys.field_divergence(&g, n)
    }

    /// Inverse of the row-scaled operator `diag(γ!) A_II`.
    pub fn apply_inverse(&self, r: &[f64]) -> Vec<f64> {
        let nx = self.sys.n_dofs();
        let set = self.sys.index_set();
        let mut scaled = r.to_vec();
        scaled
            .par_chunks_mut(nx)
            .enumerate()
            .for_each(|(i, c)| {
                let f = 1.0 / set.factorial(i);
                c.iter_mut().for_each(|v| *v *= f);
            });
        self.solve(&scaled)
    }
}

/// The row-scaled `diag(γ!) A_II`, comparable with `A_I`.
impl BlockOperator for Model2Propagator<'_> {
    fn len(&self) -> usize {
        self.sys.block_len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let nx = self.sys.n_dofs();
        let set = self.sys.index_set();
        let mut y = self.apply_natural(x);
        y.par_chunks_mut(nx).enumerate().for_each(|(i, c)| {
            let f = set.factorial(i);
            c.iter_mut().for_each(|v| *v *= f);
        });
        y
    }
}

/// Chaos coefficients of the Wick-type model's solution.
pub fn solve_model2(sys: &GalerkinSystem) -> Result<ChaosExpansion> {
    let prop = Model2Propagator::new(sys)?;
    sys.to_expansion(prop.solve(&sys.block_load()))
}
