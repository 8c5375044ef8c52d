//! Iterative solvers for the classical-model system `A_I u = f`.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model2::Model2Propagator;
use super::operators::{densify, AssemblyMode, BlockOperator, Model1Operator};
use super::system::GalerkinSystem;
use crate::fem::BandedCholesky;
use crate::randomfield::second_moment_sum;
use crate::{Error, Result};

/// Quantity compared against the tolerance. Both are measured in the
/// orthonormal chaos basis with Euclidean norms over the FE coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppingNorm {
    /// `‖f - A_I u‖ / ‖f‖`.
    Residual,
    /// `‖P⁻¹(f - A_I u)‖ / ‖P⁻¹ f‖` with `P` the row-scaled `A_II`.
    Preconditioned,
}

/// Starting point of Richardson and GMRES.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    /// The Wick-type solution `P⁻¹ f`.
    #[default]
    Model2,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub norm: StoppingNorm,
    /// Richardson damping `γ`; `None` picks [`default_relaxation`].
    pub relaxation: Option<f64>,
    /// GMRES restart length; `None` keeps the full Krylov basis.
    pub restart: Option<usize>,
    #[serde(default)]
    pub initial: InitialGuess,
}

impl SolverSettings {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        SolverSettings {
            tol,
            max_iter,
            norm: StoppingNorm::Preconditioned,
            relaxation: None,
            restart: None,
            initial: InitialGuess::Model2,
        }
    }

    pub fn with_initial(mut self, initial: InitialGuess) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_norm(mut self, norm: StoppingNorm) -> Self {
        self.norm = norm;
        self
    }

    pub fn with_relaxation(mut self, gamma: f64) -> Self {
        self.relaxation = Some(gamma);
        self
    }

    pub fn with_restart(mut self, restart: usize) -> Self {
        self.restart = Some(restart);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.restart == Some(0) {
            return Err(Error::InvalidArgument("restart length must be positive".into()));
        }
        if let Some(g) = self.relaxation {
            if !(g > 0.0) {
                return Err(Error::InvalidArgument(format!("relaxation must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    /// Sweeps, Richardson steps or Krylov steps taken; 0 when the initial
    /// guess already met the tolerance.
    pub iterations: usize,
    /// Relative stopping quantity, starting with the initial guess.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// Set when the residual grew to ten times its running minimum while
    /// exceeding the zero-guess level.
    pub diverged: bool,
    pub wall_time: Duration,
}

/// Residual ten times above its running minimum and worse than the zero
/// guess. Preconditioned iterations on the non-normal `P⁻¹A_I` can grow by
/// two orders of magnitude before contracting, so growth alone is not
/// enough.
fn diverging(res: f64, best: f64) -> bool {
    !res.is_finite() || (res > 10.0 * best && res > 1.0)
}

/// Richardson damping `1 / (1 + 3σ²)`.
pub fn default_relaxation(sigma: f64) -> f64 {
    1.0 / (1.0 + 3.0 * sigma * sigma)
}

/// Norms of block vectors taken in the orthonormal chaos basis.
///
/// A coefficient block `u_α` of `He_α` has orthonormal-basis coefficient
/// `√α! u_α`, while a residual row `r_α` (tested against `He_α`) becomes
/// `r_α/√α!`.
struct ChaosNorms {
    nx: usize,
    factorials: Vec<f64>,
}

impl ChaosNorms {
    fn new(sys: &GalerkinSystem) -> Self {
        let set = sys.index_set();
        ChaosNorms {
            nx: sys.n_dofs(),
            factorials: (0..set.len()).map(|i| set.factorial(i)).collect(),
        }
    }

    fn weighted(&self, x: &[f64], y: &[f64], inverse: bool) -> f64 {
        // per-mode partials summed in order, so results do not depend on
        // the thread count
        let parts: Vec<f64> = x
            .par_chunks(self.nx)
            .zip(y.par_chunks(self.nx))
            .zip(self.factorials.par_iter())
            .map(|((a, b), f)| {
                let d: f64 = a.iter().zip(b).map(|(a, b)| a * b).sum();
                if inverse {
                    d / f
                } else {
                    d * f
                }
            })
            .collect();
        parts.iter().sum()
    }

    /// Inner product of two coefficient vectors.
    fn dot(&self, x: &[f64], y: &[f64]) -> f64 {
        self.weighted(x, y, false)
    }

    fn solution(&self, x: &[f64]) -> f64 {
        self.dot(x, x).sqrt()
    }

    fn residual(&self, r: &[f64]) -> f64 {
        self.weighted(r, r, true).sqrt()
    }
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.par_iter_mut().zip(x.par_iter()).for_each(|(y, x)| *y += a * x);
}

fn residual(a: &dyn BlockOperator, f: &[f64], u: &[f64]) -> Vec<f64> {
    let mut r = a.apply(u);
    r.par_iter_mut().zip(f.par_iter()).for_each(|(r, f)| *r = f - *r);
    r
}

/// Relative stopping quantity for a raw residual `r`.
struct Monitor<'p, 'a> {
    norm: StoppingNorm,
    norms: ChaosNorms,
    prec: &'p Model2Propagator<'a>,
    reference: f64,
}

impl<'p, 'a> Monitor<'p, 'a> {
    fn new(kind: StoppingNorm, prec: &'p Model2Propagator<'a>, f: &[f64]) -> Self {
        let norms = ChaosNorms::new(prec.system());
        let reference = match kind {
            StoppingNorm::Residual => norms.residual(f),
            StoppingNorm::Preconditioned => norms.solution(&prec.apply_inverse(f)),
        };
        Monitor {
            norm: kind,
            norms,
            prec,
            reference,
        }
    }

    fn measure(&self, r: &[f64], pr: Option<&[f64]>) -> f64 {
        let v = match self.norm {
            StoppingNorm::Residual => self.norms.residual(r),
            StoppingNorm::Preconditioned => match pr {
                Some(p) => self.norms.solution(p),
                None => self.norms.solution(&self.prec.apply_inverse(r)),
            },
        };
        if self.reference > 0.0 {
            v / self.reference
        } else {
            v
        }
    }
}

/// Block Gauss-Seidel on `A_I` from a zero initial guess, stopped on the
/// relative residual regardless of `settings.norm`. Each sweep solves
/// every diagonal block once, in index-set order; the diagonal blocks are
/// factorized up front.
pub fn block_gauss_seidel(sys: &GalerkinSystem, settings: &SolverSettings) -> Result<SolveReport> {
    settings.validate()?;
    let start = Instant::now();
    let (nx, n, d) = (sys.n_dofs(), sys.n_modes(), sys.space().dim());
    let nqp = sys.space().n_qp();
    let set = sys.index_set();
    let space = sys.space();
    let a = Model1Operator::new(sys, AssemblyMode::ExactMoments)?;
    let f = sys.block_load();

    let mut mono = vec![0.0; nqp * n];
    mono.par_chunks_mut(n).enumerate().for_each(|(q, m)| sys.monomials_at(q, m));
    let diagonal: Vec<BandedCholesky> = (0..n)
        .into_par_iter()
        .map(|g| {
            let gamma = set.member(g);
            let c: Vec<f64> = (0..nqp)
                .map(|q| sys.scale1(q) * second_moment_sum(gamma, gamma, sys.phi(q)))
                .collect();
            BandedCholesky::factor(&space.assemble_stiffness(&c))
        })
        .collect::<Result<_>>()?;

    let down = sys.down_sets();
    let norms = ChaosNorms::new(sys);
    let fnorm = norms.residual(&f);
    let rel = |r: &[f64]| {
        let v = norms.residual(r);
        if fnorm > 0.0 {
            v / fnorm
        } else {
            v
        }
    };
    let mut u = vec![0.0; n * nx];
    // h = L ∇u at every quadrature point, [qp][mode][component]
    let mut h = vec![0.0; nqp * n * d];
    let mut history = vec![rel(&f)];
    let mut iterations = 0;
    let mut converged = history[0] <= settings.tol;
    let mut diverged = false;
    let mut best = history[0];
    while !converged && iterations < settings.max_iter {
        for g in 0..n {
            let pairs = down.of(g);
            let fact = set.factorial(g);
            let mut flux = vec![0.0; nqp * d];
            flux.par_chunks_mut(d).enumerate().for_each(|(q, fl)| {
                let hq = &h[q * n * d..(q + 1) * n * d];
                let mq = &mono[q * n..(q + 1) * n];
                for &(kappa, delta) in pairs {
                    let c = mq[delta as usize];
                    for comp in 0..d {
                        fl[comp] += c * hq[kappa as usize * d + comp];
                    }
                }
                let s = sys.scale1(q) * fact;
                fl.iter_mut().for_each(|v| *v *= s);
            });
            let au = sys.field_divergence(&flux, 1);
            let mut delta: Vec<f64> = f[g * nx..(g + 1) * nx].iter().zip(&au).map(|(a, b)| a - b).collect();
            diagonal[g].solve_in_place(&mut delta);
            axpy(1.0, &delta, &mut u[g * nx..(g + 1) * nx]);
            let grad = sys.field_gradients(&delta, 1);
            h.par_chunks_mut(n * d).enumerate().for_each(|(q, hq)| {
                let mq = &mono[q * n..(q + 1) * n];
                let gq = &grad[q * d..(q + 1) * d];
                for &(kappa, dl) in pairs {
                    let c = fact / set.factorial(kappa as usize) * mq[dl as usize];
                    for comp in 0..d {
                        hq[kappa as usize * d + comp] += c * gq[comp];
                    }
                }
            });
        }
        iterations += 1;
        let r = residual(&a, &f, &u);
        let res = rel(&r);
        history.push(res);
        best = best.min(res);
        converged = res <= settings.tol;
        if diverging(res, best) {
            diverged = true;
            break;
        }
    }
    Ok(SolveReport {
        solution: u,
        iterations,
        residual_history: history,
        converged,
        diverged,
        wall_time: start.elapsed(),
    })
}

/// Preconditioned Richardson `u ← u + γ P⁻¹(f - A u)`, by default started
/// from the Wick-model solution `P⁻¹ f`.
pub fn richardson(
    a: &dyn BlockOperator,
    prec: &Model2Propagator,
    f: &[f64],
    settings: &SolverSettings,
) -> Result<SolveReport> {
    settings.validate()?;
    check_len(a, f)?;
    let start = Instant::now();
    let gamma = settings
        .relaxation
        .unwrap_or_else(|| default_relaxation(prec.system().coefficient().sigma()));
    let monitor = Monitor::new(settings.norm, prec, f);
    let mut u = initial_guess(settings.initial, prec, f);
    let mut r = residual(a, f, &u);
    let mut pr = prec.apply_inverse(&r);
    let mut res = monitor.measure(&r, Some(&pr));
    let mut history = vec![res];
    let mut best = res;
    let mut iterations = 0;
    let mut diverged = false;
    while res > settings.tol && iterations < settings.max_iter {
        axpy(gamma, &pr, &mut u);
        r = residual(a, f, &u);
        pr = prec.apply_inverse(&r);
        res = monitor.measure(&r, Some(&pr));
        iterations += 1;
        history.push(res);
        best = best.min(res);
        if diverging(res, best) {
            diverged = true;
            break;
        }
    }
    Ok(SolveReport {
        solution: u,
        iterations,
        converged: res <= settings.tol,
        residual_history: history,
        diverged,
        wall_time: start.elapsed(),
    })
}

fn check_len(a: &dyn BlockOperator, f: &[f64]) -> Result<()> {
    if f.len() != a.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: f.len(),
        });
    }
    Ok(())
}

fn initial_guess(kind: InitialGuess, prec: &Model2Propagator, f: &[f64]) -> Vec<f64> {
    match kind {
        InitialGuess::Model2 => prec.apply_inverse(f),
        InitialGuess::Zero => vec![0.0; f.len()],
    }
}

/// Left-preconditioned GMRES with Givens rotations, by default started from
/// the Wick-model solution `P⁻¹ f`. The Krylov basis is orthonormal in the
/// orthonormal-chaos inner product.
///
/// Under [`StoppingNorm::Preconditioned`] the Arnoldi residual estimate is
/// used directly; under [`StoppingNorm::Residual`] the true residual is
/// formed at every step.
pub fn gmres(
    a: &dyn BlockOperator,
    prec: &Model2Propagator,
    f: &[f64],
    settings: &SolverSettings,
) -> Result<SolveReport> {
    settings.validate()?;
    check_len(a, f)?;
    let start = Instant::now();
    let monitor = Monitor::new(settings.norm, prec, f);
    let norms = &monitor.norms;
    let pref = norms.solution(&prec.apply_inverse(f));
    let mut x = initial_guess(settings.initial, prec, f);
    let r = residual(a, f, &x);
    let mut z = prec.apply_inverse(&r);
    let mut res = monitor.measure(&r, Some(&z));
    let mut history = vec![res];
    let mut iterations = 0;
    let restart = settings.restart.unwrap_or(settings.max_iter).max(1);

    'outer: while res > settings.tol && iterations < settings.max_iter {
        let beta = norms.solution(&z);
        if beta == 0.0 {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![z.iter().map(|v| v / beta).collect()];
        let mut hess: Vec<Vec<f64>> = Vec::new();
        let mut rot: Vec<(f64, f64)> = Vec::new();
        let mut g = vec![beta];
        loop {
            let j = basis.len() - 1;
            let mut w = prec.apply_inverse(&a.apply(&basis[j]));
            let mut col = vec![0.0; j + 2];
            for _pass in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let hij = norms.dot(&w, v);
                    col[i] += hij;
                    axpy(-hij, v, &mut w);
                }
            }
            let hn = norms.solution(&w);
            col[j + 1] = hn;
            for (i, &(c, s)) in rot.iter().enumerate() {
                let (a0, a1) = (col[i], col[i + 1]);
                col[i] = c * a0 + s * a1;
                col[i + 1] = -s * a0 + c * a1;
            }
            let rho = col[j].hypot(col[j + 1]);
            let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (col[j] / rho, col[j + 1] / rho) };
            col[j] = rho;
            col[j + 1] = 0.0;
            rot.push((c, s));
            g.push(-s * g[j]);
            g[j] *= c;
            hess.push(col);
            iterations += 1;

            let estimate = g[j + 1].abs();
            let done_basis = basis.len() >= restart || iterations >= settings.max_iter;
            let breakdown = hn <= 1e-14 * beta;
            res = match settings.norm {
                StoppingNorm::Preconditioned => {
                    if pref > 0.0 {
                        estimate / pref
                    } else {
                        estimate
                    }
                }
                StoppingNorm::Residual => {
                    let trial = update(&x, &hess, &g, &basis);
                    monitor.measure(&residual(a, f, &trial), None)
                }
            };
            history.push(res);
            let stop = res <= settings.tol;
            if stop || done_basis || breakdown {
                x = update(&x, &hess, &g, &basis);
                let r = residual(a, f, &x);
                z = prec.apply_inverse(&r);
                if settings.norm == StoppingNorm::Preconditioned {
                    res = monitor.measure(&r, Some(&z));
                    if let Some(last) = history.last_mut() {
                        *last = res;
                    }
                }
                if stop || breakdown || iterations >= settings.max_iter {
                    break 'outer;
                }
                continue 'outer;
            }
            basis.push(w.into_iter().map(|v| v / hn).collect());
        }
    }
    Ok(SolveReport {
        solution: x,
        iterations,
        converged: res <= settings.tol,
        residual_history: history,
        diverged: false,
        wall_time: start.elapsed(),
    })
}

/// `x + V y` with `y` solving the rotated upper triangular system.
fn update(x: &[f64], hess: &[Vec<f64>], g: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let k = hess.len();
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for j in i + 1..k {
            s -= hess[j][i] * y[j];
        }
        y[i] = s / hess[i][i];
    }
    let mut out = x.to_vec();
    for (yi, v) in y.iter().zip(basis) {
        axpy(*yi, v, &mut out);
    }
    out
}

/// Ratio of extreme singular values of `P⁻¹ A`, formed densely.
pub fn condition_estimate(a: &dyn BlockOperator, prec: &Model2Propagator, limit: usize) -> Result<f64> {
    struct Preconditioned<'x, 'y, 'z> {
        a: &'x dyn BlockOperator,
        p: &'y Model2Propagator<'z>,
    }
    impl BlockOperator for Preconditioned<'_, '_, '_> {
        fn len(&self) -> usize {
            self.a.len()
        }
        fn apply(&self, x: &[f64]) -> Vec<f64> {
            self.p.apply_inverse(&self.a.apply(x))
        }
    }
    let n = a.len();
    let dense = densify(&Preconditioned { a, p: prec }, limit)?;
    let m = nalgebra::DMatrix::from_row_slice(n, n, &dense);
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    Ok(if min > 0.0 { max / min } else { f64::INFINITY })
}
