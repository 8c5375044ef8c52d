//! Stochastic Galerkin discretizations of the classical and Wick-type
//! models, the Wick-type preconditioner and the iterative solvers.

mod model2;
mod operators;
mod pointwise;
mod solvers;
mod system;

pub use model2::{solve_model2, Model2Propagator};
pub use operators::{densify, AssemblyMode, BlockOperator, Model1Operator};
pub use pointwise::{scaled_monomials, DownSets, ShiftPlan};
pub use solvers::{
    block_gauss_seidel, condition_estimate, default_relaxation, gmres, richardson, InitialGuess, SolveReport,
    SolverSettings, StoppingNorm,
};
pub use system::GalerkinSystem;

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::chaos::IndexSet;
    use crate::fem::{factorization_count, solve_deterministic, BandedCholesky, CsrMatrix, FemSpace};
    use crate::randomfield::{second_moment_sum, KlBasis, LognormalCoefficient, Truncation};

    fn system(sigma: f64, m: usize, p: usize, nx: usize) -> GalerkinSystem {
        let space = Arc::new(FemSpace::reference(1, nx, 1).unwrap());
        let kl = KlBasis::exponential_1d(1.0, sigma, -1.0, 1.0, Truncation::Modes(m)).unwrap();
        let set = Arc::new(IndexSet::new(m, p).unwrap());
        GalerkinSystem::new(space, LognormalCoefficient::from_kl(kl), set, |x| 1.0 + x[0]).unwrap()
    }

    /// Block matrix whose `(row, col)` block is the stiffness matrix with
    /// per-quadrature-point coefficient `c(q, row, col)`.
    fn dense_blocks(sys: &GalerkinSystem, c: impl Fn(usize, usize, usize) -> f64) -> Vec<f64> {
        let (nx, n) = (sys.n_dofs(), sys.n_modes());
        let nqp = sys.space().n_qp();
        let len = nx * n;
        let mut out = vec![0.0; len * len];
        for r in 0..n {
            for col in 0..n {
                let coeff: Vec<f64> = (0..nqp).map(|q| c(q, r, col)).collect();
                let s: CsrMatrix = sys.space().assemble_stiffness(&coeff);
                for i in 0..nx {
                    for (j, v) in s.row(i) {
                        out[(r * nx + i) * len + col * nx + j] = v;
                    }
                }
            }
        }
        out
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn model1_matches_dense_moments() {
        let sys = system(0.6, 2, 3, 6);
        let set = sys.index_set().clone();
        let oracle = dense_blocks(&sys, |q, r, c| {
            sys.scale1(q) * second_moment_sum(set.member(r), set.member(c), sys.phi(q))
        });
        let op = Model1Operator::new(&sys, AssemblyMode::ExactMoments).unwrap();
        let dense = densify(&op, 1000).unwrap();
        assert!(max_diff(&dense, &oracle) < 1e-11);
        let len = op.len();
        for i in 0..len {
            for j in 0..len {
                assert!((dense[i * len + j] - dense[j * len + i]).abs() < 1e-11);
            }
        }
        let spd = CsrMatrix::from_triplets(
            len,
            (0..len * len).filter(|k| dense[*k] != 0.0).map(|k| (k / len, k % len, dense[k])).collect(),
        );
        assert!(BandedCholesky::factor(&spd).is_ok());
    }

    #[test]
    fn tensor_mode_with_full_degree_is_exact() {
        let sys = system(0.5, 2, 2, 5);
        let x: Vec<f64> = (0..sys.block_len()).map(|i| ((i * 5) as f64).sin()).collect();
        let exact = Model1Operator::new(&sys, AssemblyMode::ExactMoments).unwrap().apply(&x);
        let tensor = Model1Operator::new(&sys, AssemblyMode::TensorTruncated(4)).unwrap().apply(&x);
        assert!(max_diff(&exact, &tensor) < 1e-11);
        let low = Model1Operator::new(&sys, AssemblyMode::TensorTruncated(1)).unwrap().apply(&x);
        assert!(max_diff(&exact, &low) > 1e-4);
        assert!(Model1Operator::new(&sys, AssemblyMode::TensorTruncated(5)).is_err());
    }

    #[test]
    fn model2_matches_dense_and_is_block_lower_triangular() {
        let sys = system(0.7, 2, 3, 5);
        let set = sys.index_set().clone();
        let oracle = dense_blocks(&sys, |q, r, c| match set.member(r).checked_sub(set.member(c)) {
            Some(d) => sys.scale2(q) * d.monomial(sys.phi(q)) / d.factorial(),
            None => 0.0,
        });
        let before = factorization_count();
        let prop = Model2Propagator::new(&sys).unwrap();
        assert_eq!(factorization_count() - before, 1);
        let x: Vec<f64> = (0..sys.block_len()).map(|i| ((i * 3) as f64).cos()).collect();
        let len = sys.block_len();
        let expect: Vec<f64> = (0..len).map(|i| (0..len).map(|j| oracle[i * len + j] * x[j]).sum()).collect();
        assert!(max_diff(&prop.apply_natural(&x), &expect) < 1e-11);

        let back = prop.solve(&prop.apply_natural(&x));
        assert!(max_diff(&back, &x) < 1e-10);
        let scaled = prop.apply(&x);
        assert!(max_diff(&prop.apply_inverse(&scaled), &x) < 1e-10);

        // changing the last mode of the input leaves all earlier modes alone
        let nx = sys.n_dofs();
        let mut y = x.clone();
        for v in &mut y[len - nx..] {
            *v += 1.0;
        }
        let (a, b) = (prop.solve(&x), prop.solve(&y));
        assert!(max_diff(&a[..len - nx], &b[..len - nx]) == 0.0);
    }

    #[test]
    fn zero_variance_reduces_to_deterministic() {
        let sys = system(0.0, 2, 2, 8);
        let s = sys.space().assemble_stiffness_fn(|_| 1.0);
        let det = solve_deterministic(&s, sys.load()).unwrap();
        let u2 = solve_model2(&sys).unwrap();
        let report = block_gauss_seidel(&sys, &SolverSettings::new(1e-12, 5)).unwrap();
        let nx = sys.n_dofs();
        assert!(max_diff(&u2.coefficients()[..nx], &det) < 1e-12);
        assert!(u2.coefficients()[nx..].iter().all(|v| v.abs() < 1e-14));
        assert!(max_diff(&report.solution[..nx], &det) < 1e-12);
        assert_eq!(report.iterations, 1);
    }

    #[test]
    fn constant_coefficient_models_coincide() {
        let space = Arc::new(FemSpace::reference(1, 8, 1).unwrap());
        let set = Arc::new(IndexSet::new(1, 12).unwrap());
        let sys = GalerkinSystem::new(space, LognormalCoefficient::constant(0.5), set, |_| 1.0).unwrap();
        let prop = Model2Propagator::new(&sys).unwrap();
        let a = Model1Operator::new(&sys, AssemblyMode::ExactMoments).unwrap();
        let f = sys.block_load();
        let u1 = gmres(&a, &prop, &f, &SolverSettings::new(1e-13, 50)).unwrap().solution;
        let u2 = prop.solve(&f);
        let diff: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a - b).collect();
        assert!(sys.chaos_h1_norm(&diff) / sys.chaos_h1_norm(&u1) < 1e-6);
    }

    #[test]
    fn solvers_agree_with_a_direct_solve() {
        let sys = system(0.5, 2, 3, 6);
        let op = Model1Operator::new(&sys, AssemblyMode::ExactMoments).unwrap();
        let len = op.len();
        let dense = densify(&op, 1000).unwrap();
        let f = sys.block_load();
        let m = nalgebra::DMatrix::from_row_slice(len, len, &dense);
        let direct = m.lu().solve(&nalgebra::DVector::from_column_slice(&f)).unwrap();
        let direct: Vec<f64> = direct.iter().copied().collect();
        let prop = Model2Propagator::new(&sys).unwrap();
        let settings = SolverSettings::new(1e-10, 400);
        let gs = block_gauss_seidel(&sys, &settings).unwrap();
        let rich = richardson(&op, &prop, &f, &settings).unwrap();
        let gm = gmres(&op, &prop, &f, &settings.with_norm(StoppingNorm::Preconditioned)).unwrap();
        let restarted = gmres(&op, &prop, &f, &settings.with_restart(3)).unwrap();
        let cold = gmres(&op, &prop, &f, &settings.with_initial(InitialGuess::Zero)).unwrap();
        for r in [&gs, &rich, &gm, &restarted, &cold] {
            assert!(r.converged, "{:?}", r.residual_history);
            assert!(max_diff(&r.solution, &direct) < 1e-7);
        }
        assert!(gm.iterations <= rich.iterations);
        let kappa = condition_estimate(&op, &prop, 1000).unwrap();
        assert!((1.0..10.0).contains(&kappa), "{kappa}");
    }

    #[test]
    fn rejects_bad_settings() {
        let sys = system(0.2, 1, 1, 4);
        assert!(block_gauss_seidel(&sys, &SolverSettings::new(0.0, 3)).is_err());
        let op = Model1Operator::new(&sys, AssemblyMode::ExactMoments).unwrap();
        let prop = Model2Propagator::new(&sys).unwrap();
        assert!(gmres(&op, &prop, &[1.0], &SolverSettings::new(1e-6, 3)).is_err());
        let f = sys.block_load();
        assert!(gmres(&op, &prop, &f, &SolverSettings::new(1e-6, 3).with_restart(0)).is_err());
    }
}
