//! Plain and control-variate Monte Carlo for the classical model, with the
//! Wick-type chaos solution as the control variate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::ChaosExpansion;
use crate::fem::{BandedCholesky, FemSpace};
use crate::randomfield::LognormalCoefficient;
use crate::{Error, Result};

/// Samples solved per parallel batch before they are folded into the
/// running moments in index order.
const BATCH: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Weight of the control variate; 1 gives `ũ = u_II,0 + u_I - u_II`
    /// and 0 gives plain Monte Carlo.
    #[serde(default = "default_alpha")]
    pub cv_alpha: f64,
}

fn default_alpha() -> f64 {
    1.0
}

impl McConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        McConfig {
            n_samples,
            seed,
            cv_alpha: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::Config(format!("need at least 2 samples, got {}", self.n_samples)));
        }
        if !self.cv_alpha.is_finite() {
            return Err(Error::Config("cv_alpha must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Plain,
    ControlVariate,
}

/// Nodal mean and unbiased variance (divisor `N - 1`) of the estimand.
#[derive(Clone, Debug)]
pub struct McEstimate {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub kind: EstimatorKind,
    pub n_samples: usize,
}

impl McEstimate {
    pub fn std_dev(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.sqrt()).collect()
    }
}

/// `ξ⁽ⁱ⁾` for one sample: a ChaCha8 stream selected by the sample index, so
/// every sample is reproducible on its own.
pub fn draw_sample(m: usize, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    (0..m).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn draw_samples(m: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..n as u64).into_par_iter().map(|i| draw_sample(m, seed, i)).collect()
}

/// Welford accumulator over nodal fields.
struct Moments {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Moments {
            n: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    fn finish(self, kind: EstimatorKind) -> McEstimate {
        let div = (self.n - 1) as f64;
        McEstimate {
            variance: self.m2.iter().map(|s| (s / div).max(0.0)).collect(),
            mean: self.mean,
            kind,
            n_samples: self.n,
        }
    }
}

/// Solves the deterministic problem for one coefficient realization.
pub fn solve_sample(
    space: &FemSpace,
    coefficient: &LognormalCoefficient,
    qp_coords: &[f64],
    load: &[f64],
    xi: &[f64],
) -> Result<Vec<f64>> {
    let a = coefficient.sample_coefficient(qp_coords, space.dim(), xi)?;
    let s = space.assemble_stiffness(&a);
    Ok(BandedCholesky::factor(&s)?.solve(load))
}

/// Runs `n` samples through `estimand` in index-ordered batches.
fn accumulate(
    cfg: &McConfig,
    len: usize,
    m: usize,
    kind: EstimatorKind,
    estimand: impl Fn(&[f64]) -> Result<Vec<f64>> + Sync,
) -> Result<McEstimate> {
    cfg.validate()?;
    let mut moments = Moments::new(len);
    let mut start = 0;
    while start < cfg.n_samples {
        let end = (start + BATCH).min(cfg.n_samples);
        let batch: Vec<Vec<f64>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let xi = draw_sample(m, cfg.seed, i as u64);
                estimand(&xi).map_err(|e| Error::Sample {
                    index: i,
                    source: Box::new(e),
                })
            })
            .collect::<Result<_>>()?;
        for x in &batch {
            moments.push(x);
        }
        start = end;
    }
    Ok(moments.finish(kind))
}

/// Plain Monte Carlo estimate of the classical model's mean and variance.
pub fn mc_plain(
    space: &FemSpace,
    coefficient: &LognormalCoefficient,
    force: impl Fn(&[f64]) -> f64 + Sync,
    cfg: &McConfig,
) -> Result<McEstimate> {
    let load = space.assemble_load(force);
    let qp = space.all_qp_coords();
    accumulate(cfg, space.n_dofs(), coefficient.dim(), EstimatorKind::Plain, |xi| {
        solve_sample(space, coefficient, &qp, &load, xi)
    })
}

/// Control-variate estimate `ũ = u_I(ξ) - α (u_II(ξ) - u_II,0)`, which for
/// `α = 1` is `u_II,0 + (u_I - u_II)`,
/// with the same `ξ⁽ⁱ⁾` feeding the classical solve and the chaos
/// evaluation of the Wick-type solution.
pub fn mc_control_variate(
    space: &FemSpace,
    coefficient: &LognormalCoefficient,
    u2: &ChaosExpansion,
    force: impl Fn(&[f64]) -> f64 + Sync,
    cfg: &McConfig,
) -> Result<McEstimate> {
    let chaos_dim = check_control(space, coefficient, u2)?;
    let u2 = u2.to_normalization(crate::chaos::Normalization::Hermite);
    let load = space.assemble_load(force);
    let qp = space.all_qp_coords();
    let mean2 = u2.mean().to_vec();
    let alpha = cfg.cv_alpha;
    accumulate(
        cfg,
        space.n_dofs(),
        coefficient.dim(),
        EstimatorKind::ControlVariate,
        |xi| {
            let mut u = solve_sample(space, coefficient, &qp, &load, xi)?;
            let v = u2.eval(&xi[..chaos_dim])?;
            for ((u, v), m) in u.iter_mut().zip(&v).zip(&mean2) {
                *u -= alpha * (v - m);
            }
            Ok(u)
        },
    )
}

/// Plain and control-variate estimates from one pass over the samples:
/// each classical solve feeds both estimators, so the pair is identical to
/// separate [`mc_plain`] and [`mc_control_variate`] runs with the same seed
/// at half the cost.
pub fn mc_paired(
    space: &FemSpace,
    coefficient: &LognormalCoefficient,
    u2: &ChaosExpansion,
    force: impl Fn(&[f64]) -> f64 + Sync,
    cfg: &McConfig,
) -> Result<(McEstimate, McEstimate)> {
    let chaos_dim = check_control(space, coefficient, u2)?;
    let u2 = u2.to_normalization(crate::chaos::Normalization::Hermite);
    let load = space.assemble_load(force);
    let qp = space.all_qp_coords();
    let mean2 = u2.mean().to_vec();
    let alpha = cfg.cv_alpha;
    let n = space.n_dofs();
    let both = accumulate(cfg, 2 * n, coefficient.dim(), EstimatorKind::Plain, |xi| {
        let u = solve_sample(space, coefficient, &qp, &load, xi)?;
        let v = u2.eval(&xi[..chaos_dim])?;
        let mut out = u.clone();
        out.extend(u.iter().zip(&v).zip(&mean2).map(|((u, v), m)| u - alpha * (v - m)));
        Ok(out)
    })?;
    let split = |range: std::ops::Range<usize>, kind| McEstimate {
        mean: both.mean[range.clone()].to_vec(),
        variance: both.variance[range].to_vec(),
        kind,
        n_samples: both.n_samples,
    };
    Ok((
        split(0..n, EstimatorKind::Plain),
        split(n..2 * n, EstimatorKind::ControlVariate),
    ))
}

fn check_control(space: &FemSpace, coefficient: &LognormalCoefficient, u2: &ChaosExpansion) -> Result<usize> {
    if u2.field_len() != space.n_dofs() {
        return Err(Error::DimensionMismatch {
            expected: space.n_dofs(),
            got: u2.field_len(),
        });
    }
    let chaos_dim = u2.index_set().dim();
    if chaos_dim > coefficient.dim() {
        return Err(Error::DimensionMismatch {
            expected: coefficient.dim(),
            got: chaos_dim,
        });
    }
    Ok(chaos_dim)
}

/// Norms of the two variance fields and their ratios.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReduction {
    pub h1_plain: f64,
    pub h1_control: f64,
    pub l2_plain: f64,
    pub l2_control: f64,
    /// `‖var ũ‖_{H¹} / ‖var u‖_{H¹}`.
    pub ratio_h1: f64,
    pub ratio_l2: f64,
    /// `‖var ũ‖_{H¹} / N`: the control-variate estimator's variance.
    pub estimator_variance_h1: f64,
}

pub fn variance_reduction_report(
    space: &FemSpace,
    plain: &McEstimate,
    control: &McEstimate,
) -> Result<VarianceReduction> {
    let n = space.n_dofs();
    for e in [plain, control] {
        if e.variance.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: e.variance.len(),
            });
        }
    }
    let h1_plain = space.h1_seminorm(&plain.variance);
    let h1_control = space.h1_seminorm(&control.variance);
    let l2_plain = space.l2_norm(&plain.variance);
    let l2_control = space.l2_norm(&control.variance);
    Ok(VarianceReduction {
        h1_plain,
        h1_control,
        l2_plain,
        l2_control,
        ratio_h1: h1_control / h1_plain,
        ratio_l2: l2_control / l2_plain,
        estimator_variance_h1: h1_control / control.n_samples as f64,
    })
}

/// `α* = cov(u_I, u_II) / var(u_II)` from paired samples at a probe point.
pub fn estimate_optimal_alpha(u1: &[f64], u2: &[f64]) -> Result<f64> {
    if u1.len() != u2.len() {
        return Err(Error::DimensionMismatch {
            expected: u1.len(),
            got: u2.len(),
        });
    }
    if u1.len() < 30 {
        return Err(Error::InvalidArgument(format!("need at least 30 paired samples, got {}", u1.len())));
    }
    let n = u1.len() as f64;
    let m1 = u1.iter().sum::<f64>() / n;
    let m2 = u2.iter().sum::<f64>() / n;
    let cov: f64 = u1.iter().zip(u2).map(|(a, b)| (a - m1) * (b - m2)).sum();
    let var: f64 = u2.iter().map(|b| (b - m2) * (b - m2)).sum();
    if var == 0.0 {
        return Err(Error::InvalidArgument("control samples have zero variance".into()));
    }
    Ok(cov / var)
}
