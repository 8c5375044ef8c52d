//! Config-driven runners for the benchmark tables and figures.
//!
//! [`execute`] computes an [`ExperimentResult`] without touching the file
//! system; [`run`] also writes one CSV per table plus a `manifest.json`
//! holding the full config, so `run` on the manifest reproduces the CSVs.
//! A failing row is recorded in its `error` column and the remaining rows
//! still run.

mod config;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

pub use config::{
    Case, ExperimentConfig, ExperimentKind, Force, KernelSpec, McSpec, MeshSpec, PerturbationShape, SolverSpec,
    Sweep, PRESETS,
};

use crate::chaos::{ChaosExpansion, IndexSet};
use crate::fem::FemSpace;
use crate::galerkin::{
    block_gauss_seidel, gmres, richardson, AssemblyMode, GalerkinSystem, Model1Operator, Model2Propagator,
    SolveReport,
};
use crate::montecarlo::{mc_paired, mc_plain, variance_reduction_report, McConfig};
use crate::randomfield::{CovarianceKernel, KlBasis, LognormalCoefficient, NystromGrid, Truncation};
use crate::{Error, Result};

/// Largest `M` for which the classical model is solved by stochastic
/// Galerkin in `model_compare`; above it, plain Monte Carlo is used.
pub const GALERKIN_LIMIT: usize = 20;

/// Environment variable naming the output root (default `./output`).
pub const OUTPUT_ENV: &str = "WICK_GALERKIN_OUTPUT";

/// An iteration count; `censored` marks runs that hit `max_iter` or
/// diverged, whose count is then reported as `max_iter`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Count {
    pub iterations: usize,
    pub censored: bool,
}

impl Count {
    fn of(report: &SolveReport, max_iter: usize) -> Self {
        if report.converged {
            Count {
                iterations: report.iterations,
                censored: false,
            }
        } else {
            Count {
                iterations: max_iter,
                censored: true,
            }
        }
    }
}

/// Shared leading columns of every row.
#[derive(Clone, Debug, Serialize)]
pub struct RowInfo {
    pub correlation_length: f64,
    pub sigma: f64,
    /// `M`; zero if the row failed before the K-L step finished.
    pub modes: usize,
    pub degree: usize,
    /// `N_{M,p}`.
    pub n_modes: usize,
    pub error: Option<String>,
    pub wall_time: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PrecondRow {
    pub info: RowInfo,
    pub gauss_seidel: Option<Count>,
    pub richardson: Option<Count>,
    pub gmres: Option<Count>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SlicePoint {
    pub x: f64,
    pub mean_1: f64,
    pub mean_2: f64,
    pub std_1: f64,
    pub std_2: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareRow {
    pub info: RowInfo,
    /// `galerkin` or `monte_carlo`.
    pub method: &'static str,
    /// `max |mean_I - mean_II| / max |mean_I|` along the slice.
    pub max_rel_mean_gap: f64,
    pub slice: Vec<SlicePoint>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbationRow {
    pub info: RowInfo,
    pub epsilon: f64,
    /// `‖u_I - u_II‖ / ‖u_I‖` in the chaos-`H¹₀` norm.
    pub relative_gap: f64,
}

/// `log ε_r ≈ intercept + eps_exponent·log ε + sigma_exponent·log σ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PlaneFit {
    pub intercept: f64,
    pub eps_exponent: f64,
    pub sigma_exponent: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VarianceRow {
    pub info: RowInfo,
    pub n_samples: usize,
    pub h1_plain: f64,
    pub h1_control: f64,
    pub l2_plain: f64,
    pub l2_control: f64,
    pub ratio_h1: f64,
    pub ratio_l2: f64,
    /// `‖var ũ‖_{H¹} / N`.
    pub estimator_variance_h1: f64,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentResult {
    PrecondTable(Vec<PrecondRow>),
    PowellBesselTable(Vec<PrecondRow>),
    ModelCompare(Vec<CompareRow>),
    PerturbationStudy {
        rows: Vec<PerturbationRow>,
        fit: Option<PlaneFit>,
    },
    McVarianceReduction(Vec<VarianceRow>),
}

impl ExperimentResult {
    pub fn infos(&self) -> Vec<&RowInfo> {
        match self {
            ExperimentResult::PrecondTable(r) | ExperimentResult::PowellBesselTable(r) => {
                r.iter().map(|r| &r.info).collect()
            }
            ExperimentResult::ModelCompare(r) => r.iter().map(|r| &r.info).collect(),
            ExperimentResult::PerturbationStudy { rows, .. } => rows.iter().map(|r| &r.info).collect(),
            ExperimentResult::McVarianceReduction(r) => r.iter().map(|r| &r.info).collect(),
        }
    }

    /// `(file name, CSV text)` for every output table.
    pub fn tables(&self) -> Vec<(String, String)> {
        match self {
            ExperimentResult::PrecondTable(rows) => vec![("results.csv".into(), precond_csv(rows, true))],
            ExperimentResult::PowellBesselTable(rows) => vec![("results.csv".into(), precond_csv(rows, false))],
            ExperimentResult::ModelCompare(rows) => {
                let mut out = vec![("results.csv".into(), compare_csv(rows))];
                for (i, r) in rows.iter().enumerate() {
                    let mut s = String::from("x,mean_I,mean_II,std_I,std_II\n");
                    for p in &r.slice {
                        let _ = writeln!(s, "{},{},{},{},{}", p.x, p.mean_1, p.mean_2, p.std_1, p.std_2);
                    }
                    out.push((format!("slice_{i:03}.csv"), s));
                }
                out
            }
            ExperimentResult::PerturbationStudy { rows, fit } => {
                let mut s = String::from("epsilon,sigma,M,p,N_Mp,eps_r,error\n");
                for r in rows {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{}",
                        r.epsilon,
                        r.info.sigma,
                        r.info.modes,
                        r.info.degree,
                        r.info.n_modes,
                        r.relative_gap,
                        error_cell(&r.info)
                    );
                }
                let mut f = String::from("intercept,eps_exponent,sigma_exponent\n");
                if let Some(p) = fit {
                    let _ = writeln!(f, "{},{},{}", p.intercept, p.eps_exponent, p.sigma_exponent);
                }
                vec![("results.csv".into(), s), ("plane_fit.csv".into(), f)]
            }
            ExperimentResult::McVarianceReduction(rows) => {
                let mut s = String::from(
                    "l_c,sigma,M,p,N_Mp,N_mc,var_H1_plain,var_H1_cv,var_L2_plain,var_L2_cv,ratio_H1,ratio_L2,estimator_var_H1,error\n",
                );
                for r in rows {
                    let i = &r.info;
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                        i.correlation_length,
                        i.sigma,
                        i.modes,
                        i.degree,
                        i.n_modes,
                        r.n_samples,
                        r.h1_plain,
                        r.h1_control,
                        r.l2_plain,
                        r.l2_control,
                        r.ratio_h1,
                        r.ratio_l2,
                        r.estimator_variance_h1,
                        error_cell(i)
                    );
                }
                vec![("results.csv".into(), s)]
            }
        }
    }
}

fn error_cell(info: &RowInfo) -> String {
    match &info.error {
        None => String::new(),
        Some(e) => format!("\"{}\"", e.replace('"', "'")),
    }
}

fn count_cells(c: &Option<Count>) -> (String, String) {
    match c {
        Some(c) => (c.iterations.to_string(), c.censored.to_string()),
        None => (String::new(), String::new()),
    }
}

fn precond_csv(rows: &[PrecondRow], with_gs: bool) -> String {
    let mut s = if with_gs {
        String::from("l_c,sigma,M,p,N_Mp,n_GS,n_gamma,n_GMRES,censored_GS,censored_gamma,censored_GMRES,error\n")
    } else {
        String::from("sigma,p,M,N_Mp,n_gamma,n_GMRES,censored_gamma,censored_GMRES,error\n")
    };
    for r in rows {
        let i = &r.info;
        let (gs, gs_c) = count_cells(&r.gauss_seidel);
        let (ri, ri_c) = count_cells(&r.richardson);
        let (gm, gm_c) = count_cells(&r.gmres);
        if with_gs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{gs},{ri},{gm},{gs_c},{ri_c},{gm_c},{}",
                i.correlation_length,
                i.sigma,
                i.modes,
                i.degree,
                i.n_modes,
                error_cell(i)
            );
        } else {
            let _ = writeln!(
                s,
                "{},{},{},{},{ri},{gm},{ri_c},{gm_c},{}",
                i.sigma,
                i.degree,
                i.modes,
                i.n_modes,
                error_cell(i)
            );
        }
    }
    s
}

fn compare_csv(rows: &[CompareRow]) -> String {
    let mut s = String::from("slice,l_c,sigma,M,p,N_Mp,method_I,max_rel_mean_gap,error\n");
    for (k, r) in rows.iter().enumerate() {
        let i = &r.info;
        let _ = writeln!(
            s,
            "slice_{k:03}.csv,{},{},{},{},{},{},{},{}",
            i.correlation_length,
            i.sigma,
            i.modes,
            i.degree,
            i.n_modes,
            r.method,
            r.max_rel_mean_gap,
            error_cell(i)
        );
    }
    s
}

/// Everything a row needs: the mesh, the load and a K-L cache.
struct Context<'a> {
    cfg: &'a ExperimentConfig,
    space: Arc<FemSpace>,
    grid: NystromGrid,
    // unit-σ bases per correlation length, with the most modes any
    // pinned row asks for
    kl: HashMap<u64, Arc<KlBasis>>,
    max_modes: HashMap<u64, usize>,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a ExperimentConfig, cases: &[Case]) -> Result<Self> {
        let cells = vec![cfg.mesh.cells; cfg.dim()];
        let space = Arc::new(FemSpace::new(cfg.domain.clone(), &cells, cfg.mesh.order)?);
        let mut max_modes = HashMap::new();
        for c in cases {
            if let Some(m) = c.modes {
                let e = max_modes.entry(c.correlation_length.to_bits()).or_insert(0);
                *e = (*e).max(m);
            }
        }
        Ok(Context {
            cfg,
            space,
            grid: cfg.kernel.nystrom.unwrap_or(NystromGrid::default_for(cfg.dim())),
            kl: HashMap::new(),
            max_modes,
        })
    }

    fn kernel(&self, l_c: f64, sigma: f64) -> Result<CovarianceKernel> {
        CovarianceKernel::new(self.cfg.kernel.kind, l_c, sigma)
    }

    fn basis(&mut self, case: &Case) -> Result<KlBasis> {
        match case.truncation() {
            Truncation::Modes(m) => {
                let key = case.correlation_length.to_bits();
                if !self.kl.contains_key(&key) {
                    let cap = self.max_modes.get(&key).copied().unwrap_or(m);
                    let kernel = self.kernel(case.correlation_length, 1.0)?;
                    let kl = KlBasis::for_kernel(kernel, &self.cfg.domain, self.grid, Truncation::Modes(cap))?;
                    self.kl.insert(key, Arc::new(kl));
                }
                Ok(self.kl[&key].truncated(m)?.with_sigma(case.sigma))
            }
            t => {
                let kernel = self.kernel(case.correlation_length, case.sigma)?;
                KlBasis::for_kernel(kernel, &self.cfg.domain, self.grid, t)
            }
        }
    }

    fn coefficient(&mut self, case: &Case) -> Result<LognormalCoefficient> {
        Ok(LognormalCoefficient::from_kl(self.basis(case)?).with_scaling(self.cfg.kernel.scaling))
    }

    fn system(&self, coefficient: LognormalCoefficient, dim: usize, degree: usize) -> Result<GalerkinSystem> {
        let force = self.cfg.force;
        let set = Arc::new(IndexSet::new(dim, degree)?);
        GalerkinSystem::new(self.space.clone(), coefficient, set, move |x| force.eval(x))
    }

    fn mc_config(&self) -> Result<McConfig> {
        let mc = self
            .cfg
            .mc
            .ok_or_else(|| Error::Config("this experiment needs an [mc] table".into()))?;
        Ok(McConfig {
            n_samples: mc.n_samples,
            seed: self.cfg.seed,
            cv_alpha: mc.cv_alpha,
        })
    }
}

fn info(case: &Case) -> RowInfo {
    RowInfo {
        correlation_length: case.correlation_length,
        sigma: case.sigma,
        modes: case.modes.unwrap_or(0),
        degree: case.degree,
        n_modes: 0,
        error: None,
        wall_time: 0.0,
    }
}

/// Runs every row of `cfg` in order. `progress` is called after each row
/// with its index, the row count and the row's wall time.
pub fn execute(cfg: &ExperimentConfig, mut progress: impl FnMut(usize, usize, f64)) -> Result<ExperimentResult> {
    cfg.validate()?;
    let cases = cfg.expanded_cases();
    let mut ctx = Context::new(cfg, &cases)?;
    let total = cases.len();
    macro_rules! rows {
        ($f:ident) => {{
            let mut rows = Vec::with_capacity(total);
            for (i, case) in cases.iter().enumerate() {
                let start = Instant::now();
                let mut row = $f(&mut ctx, case);
                row.info.wall_time = start.elapsed().as_secs_f64();
                progress(i, total, row.info.wall_time);
                rows.push(row);
            }
            rows
        }};
    }
    Ok(match cfg.kind {
        ExperimentKind::PrecondTable => ExperimentResult::PrecondTable(rows!(precond_row)),
        ExperimentKind::PowellBesselTable => ExperimentResult::PowellBesselTable(rows!(bessel_grid_row)),
        ExperimentKind::ModelCompare => ExperimentResult::ModelCompare(rows!(compare_row)),
        ExperimentKind::PerturbationStudy => {
            let rows = rows!(perturbation_row);
            let fit = plane_fit_rows(&rows);
            ExperimentResult::PerturbationStudy { rows, fit }
        }
        ExperimentKind::McVarianceReduction => ExperimentResult::McVarianceReduction(rows!(variance_row)),
    })
}

fn iteration_counts(ctx: &mut Context, case: &Case, info: &mut RowInfo, with_gs: bool) -> Result<[Option<Count>; 3]> {
    let coef = ctx.coefficient(case)?;
    info.modes = coef.dim();
    let sys = ctx.system(coef, info.modes, case.degree)?;
    info.n_modes = sys.n_modes();
    let settings = ctx.cfg.solver.settings();
    let max_iter = settings.max_iter;
    let a = Model1Operator::new(&sys, AssemblyMode::ExactMoments)?;
    let prop = Model2Propagator::new(&sys)?;
    let f = sys.block_load();
    let gs = if with_gs {
        Some(Count::of(&block_gauss_seidel(&sys, &settings)?, max_iter))
    } else {
        None
    };
    let rich = Count::of(&richardson(&a, &prop, &f, &settings)?, max_iter);
    let gm = Count::of(&gmres(&a, &prop, &f, &settings)?, max_iter);
    Ok([gs, Some(rich), Some(gm)])
}

fn precond_row(ctx: &mut Context, case: &Case) -> PrecondRow {
    table_row(ctx, case, true)
}

fn bessel_grid_row(ctx: &mut Context, case: &Case) -> PrecondRow {
    table_row(ctx, case, false)
}

fn table_row(ctx: &mut Context, case: &Case, with_gs: bool) -> PrecondRow {
    let mut info = info(case);
    match iteration_counts(ctx, case, &mut info, with_gs) {
        Ok([gs, rich, gm]) => PrecondRow {
            info,
            gauss_seidel: gs,
            richardson: rich,
            gmres: gm,
        },
        Err(e) => {
            info.error = Some(e.to_string());
            PrecondRow {
                info,
                gauss_seidel: None,
                richardson: None,
                gmres: None,
            }
        }
    }
}

fn compare_row(ctx: &mut Context, case: &Case) -> CompareRow {
    let mut info = info(case);
    let mut method = "galerkin";
    let result = (|| -> Result<(f64, Vec<SlicePoint>)> {
        let coef = ctx.coefficient(case)?;
        info.modes = coef.dim();
        let sys = ctx.system(coef.clone(), info.modes, case.degree)?;
        info.n_modes = sys.n_modes();
        let prop = Model2Propagator::new(&sys)?;
        let f = sys.block_load();
        let u2 = sys.to_expansion(prop.solve(&f))?;
        let (mean1, var1) = if info.modes <= GALERKIN_LIMIT {
            let a = Model1Operator::new(&sys, AssemblyMode::ExactMoments)?;
            let report = gmres(&a, &prop, &f, &ctx.cfg.solver.settings())?;
            if !report.converged {
                return Err(Error::InvalidArgument(format!(
                    "GMRES stopped after {} iterations without converging",
                    report.iterations
                )));
            }
            let u1 = sys.to_expansion(report.solution)?;
            (u1.mean().to_vec(), u1.variance())
        } else {
            method = "monte_carlo";
            let force = ctx.cfg.force;
            let est = mc_plain(&ctx.space, &coef, move |x| force.eval(x), &ctx.mc_config()?)?;
            (est.mean, est.variance)
        };
        let slice = compare_slice(&ctx.space, &ctx.cfg.domain, [&mean1, u2.mean(), &var1, &u2.variance()]);
        let scale = slice.iter().map(|p| p.mean_1.abs()).fold(0.0, f64::max);
        let gap = slice.iter().map(|p| (p.mean_1 - p.mean_2).abs()).fold(0.0, f64::max);
        Ok((if scale > 0.0 { gap / scale } else { gap }, slice))
    })();
    match result {
        Ok((gap, slice)) => CompareRow {
            info,
            method,
            max_rel_mean_gap: gap,
            slice,
        },
        Err(e) => {
            info.error = Some(e.to_string());
            CompareRow {
                info,
                method,
                max_rel_mean_gap: f64::NAN,
                slice: Vec::new(),
            }
        }
    }
}

/// Nodes on the horizontal midline (the whole interval in 1D).
fn compare_slice(space: &FemSpace, domain: &crate::fem::Domain, fields: [&[f64]; 4]) -> Vec<SlicePoint> {
    let y0 = if domain.dim() == 2 {
        0.5 * (domain.lower[1] + domain.upper[1])
    } else {
        0.0
    };
    let std: Vec<Vec<f64>> = [fields[2], fields[3]]
        .iter()
        .map(|v| v.iter().map(|x| x.max(0.0).sqrt()).collect())
        .collect();
    let m1 = space.line_slice(fields[0], y0);
    let m2 = space.line_slice(fields[1], y0);
    let s1 = space.line_slice(&std[0], y0);
    let s2 = space.line_slice(&std[1], y0);
    (0..m1.len())
        .map(|i| SlicePoint {
            x: m1[i].0,
            mean_1: m1[i].1,
            mean_2: m2[i].1,
            std_1: s1[i].1,
            std_2: s2[i].1,
        })
        .collect()
}

fn perturbation_row(ctx: &mut Context, case: &Case) -> PerturbationRow {
    let mut info = info(case);
    let epsilon = case.epsilon.unwrap_or(0.0);
    let result = (|| -> Result<f64> {
        let shape = ctx.cfg.shape;
        let coef = LognormalCoefficient::perturbed(case.sigma, epsilon, move |x| shape.eval(x))
            .with_scaling(ctx.cfg.kernel.scaling);
        info.modes = 1;
        let sys = ctx.system(coef, 1, case.degree)?;
        info.n_modes = sys.n_modes();
        let (u1, u2) = both_models(&sys, &ctx.cfg.solver)?;
        let d: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a - b).collect();
        Ok(sys.chaos_h1_norm(&d) / sys.chaos_h1_norm(&u1))
    })();
    let relative_gap = result.unwrap_or_else(|e| {
        info.error = Some(e.to_string());
        f64::NAN
    });
    PerturbationRow {
        info,
        epsilon,
        relative_gap,
    }
}

/// Galerkin coefficients of the classical model (by GMRES) and of the
/// Wick-type model.
fn both_models(sys: &GalerkinSystem, solver: &SolverSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let a = Model1Operator::new(sys, AssemblyMode::ExactMoments)?;
    let prop = Model2Propagator::new(sys)?;
    let f = sys.block_load();
    let report = gmres(&a, &prop, &f, &solver.settings())?;
    if !report.converged {
        return Err(Error::InvalidArgument(format!(
            "GMRES stopped after {} iterations without converging",
            report.iterations
        )));
    }
    Ok((report.solution, prop.solve(&f)))
}

fn plane_fit_rows(rows: &[PerturbationRow]) -> Option<PlaneFit> {
    let pts: Vec<[f64; 3]> = rows
        .iter()
        .filter(|r| r.epsilon > 0.0 && r.info.sigma > 0.0 && r.relative_gap > 0.0 && r.relative_gap.is_finite())
        .map(|r| [r.epsilon, r.info.sigma, r.relative_gap])
        .collect();
    plane_fit(&pts)
}

/// Least-squares fit of `log z = c + a log x + b log y` to `(x, y, z)`
/// triples; `None` if the points do not determine a plane.
pub fn plane_fit(points: &[[f64; 3]]) -> Option<PlaneFit> {
    if points.len() < 3 {
        return None;
    }
    let a = nalgebra::DMatrix::from_fn(points.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => points[i][0].ln(),
        _ => points[i][1].ln(),
    });
    let b = nalgebra::DVector::from_iterator(points.len(), points.iter().map(|p| p[2].ln()));
    let svd = a.svd(true, true);
    if svd.rank(1e-10) < 3 {
        return None;
    }
    let c = svd.solve(&b, 1e-12).ok()?;
    Some(PlaneFit {
        intercept: c[0],
        eps_exponent: c[1],
        sigma_exponent: c[2],
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

fn variance_row(ctx: &mut Context, case: &Case) -> VarianceRow {
    let mut info = info(case);
    let mut row = VarianceRow {
        info: info.clone(),
        n_samples: ctx.cfg.mc.map_or(0, |m| m.n_samples),
        h1_plain: f64::NAN,
        h1_control: f64::NAN,
        l2_plain: f64::NAN,
        l2_control: f64::NAN,
        ratio_h1: f64::NAN,
        ratio_l2: f64::NAN,
        estimator_variance_h1: f64::NAN,
    };
    let result = (|| -> Result<_> {
        let coef = ctx.coefficient(case)?;
        info.modes = coef.dim();
        let sys = ctx.system(coef.clone(), info.modes, case.degree)?;
        info.n_modes = sys.n_modes();
        let u2: ChaosExpansion = crate::galerkin::solve_model2(&sys)?;
        let force = ctx.cfg.force;
        let (plain, cv) = mc_paired(&ctx.space, &coef, &u2, move |x| force.eval(x), &ctx.mc_config()?)?;
        variance_reduction_report(&ctx.space, &plain, &cv)
    })();
    match result {
        Ok(r) => {
            row.h1_plain = r.h1_plain;
            row.h1_control = r.h1_control;
            row.l2_plain = r.l2_plain;
            row.l2_control = r.l2_control;
            row.ratio_h1 = r.ratio_h1;
            row.ratio_l2 = r.ratio_l2;
            row.estimator_variance_h1 = r.estimator_variance_h1;
        }
        Err(e) => info.error = Some(e.to_string()),
    }
    row.info = info;
    row
}

/// Output directory of a run: the config's `output_dir`, else
/// `$WICK_GALERKIN_OUTPUT`, else `./output`, joined with the run name.
pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    let root = cfg
        .output_dir
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("output"));
    root.join(cfg.name.as_deref().unwrap_or(cfg.kind.name()))
}

/// Writes `contents` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub crate_version: &'static str,
    pub threads: usize,
    pub files: Vec<String>,
    pub row_wall_times: Vec<f64>,
    pub total_wall_time: f64,
    pub notes: Vec<String>,
}

/// Writes the tables of `result` and the manifest into `dir`.
pub fn write_outputs(cfg: &ExperimentConfig, result: &ExperimentResult, dir: &Path, total: f64) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (name, text) in result.tables() {
        write_atomic(&dir.join(&name), text.as_bytes())?;
        files.push(name);
    }
    let manifest = Manifest {
        config: cfg.clone(),
        seed: cfg.seed,
        crate_version: env!("CARGO_PKG_VERSION"),
        threads: rayon::current_num_threads(),
        files,
        row_wall_times: result.infos().iter().map(|i| i.wall_time).collect(),
        total_wall_time: total,
        notes: cfg.notes.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse {
        context: "manifest".into(),
        message: e.to_string(),
    })?;
    write_atomic(&dir.join("manifest.json"), json.as_bytes())?;
    Ok(manifest)
}

/// [`execute`] followed by [`write_outputs`] into [`output_dir`].
pub fn run(cfg: &ExperimentConfig, progress: impl FnMut(usize, usize, f64)) -> Result<(ExperimentResult, PathBuf)> {
    let start = Instant::now();
    let result = execute(cfg, progress)?;
    let dir = output_dir(cfg);
    write_outputs(cfg, &result, &dir, start.elapsed().as_secs_f64())?;
    Ok((result, dir))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: &str) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::preset(kind).unwrap();
        cfg.mesh.cells = 6;
        cfg
    }

    #[test]
    fn plane_fit_recovers_exponents() {
        let mut pts = Vec::new();
        for e in [0.05, 0.1, 0.2] {
            for s in [0.1, 0.2, 0.4] {
                pts.push([e, s, 3.0 * e * s * s]);
            }
        }
        let f = plane_fit(&pts).unwrap();
        assert!((f.eps_exponent - 1.0).abs() < 1e-10);
        assert!((f.sigma_exponent - 2.0).abs() < 1e-10);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-10);
        // one σ only: the plane is not determined
        assert!(plane_fit(&[[0.1, 0.2, 1.0], [0.2, 0.2, 2.0], [0.4, 0.2, 4.0]]).is_none());
        assert!((log_log_slope(&[1.0, 2.0, 4.0], &[3.0, 12.0, 48.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn precond_rows_report_counts_and_sizes() {
        let mut cfg = small("precond-gaussian-1d");
        cfg.cases.truncate(4);
        let ExperimentResult::PrecondTable(rows) = execute(&cfg, |_, _, _| {}).unwrap() else {
            panic!("wrong result kind")
        };
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].info.n_modes, 11);
        assert_eq!(rows[3].info.n_modes, 286);
        for r in &rows {
            assert!(r.info.error.is_none(), "{:?}", r.info.error);
        }
        // σ = 1 with l_c = 20: Gauss-Seidel does not converge in 100 steps
        let gs = rows[2].gauss_seidel.unwrap();
        assert!(gs.censored && gs.iterations == 100);
        assert!(!rows[2].gmres.unwrap().censored);
    }

    #[test]
    fn failing_rows_are_annotated() {
        let mut cfg = small("precond-gaussian-1d");
        cfg.cases.truncate(2);
        // more modes than the index-set cap allows
        cfg.cases[1].modes = Some(60);
        cfg.cases[1].degree = 10;
        let result = execute(&cfg, |_, _, _| {}).unwrap();
        let infos = result.infos();
        assert!(infos[0].error.is_none());
        assert!(infos[1].error.is_some());
        let csv = &result.tables()[0].1;
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(2).unwrap().ends_with('"'));
    }

    #[test]
    fn zero_variance_models_coincide_on_the_slice() {
        let mut cfg = small("compare-gaussian-2d");
        cfg.sweep = None;
        cfg.cases = vec![Case {
            correlation_length: 2.0,
            sigma: 0.0,
            modes: Some(2),
            kl_tolerance: None,
            degree: 2,
            epsilon: None,
        }];
        let ExperimentResult::ModelCompare(rows) = execute(&cfg, |_, _, _| {}).unwrap() else {
            panic!("wrong result kind")
        };
        let r = &rows[0];
        assert!(r.info.error.is_none(), "{:?}", r.info.error);
        // one node per element end and interior node along y = 0
        assert_eq!(r.slice.len(), 6 * 2 + 1);
        assert!(r.max_rel_mean_gap < 1e-12);
        for p in &r.slice {
            assert!(p.std_1.abs() < 1e-12 && p.std_2.abs() < 1e-12);
        }
    }

    #[test]
    fn perturbation_gap_vanishes_without_perturbation() {
        let mut cfg = small("perturbation");
        cfg.sweep = None;
        cfg.cases = vec![Case {
            correlation_length: 1.0,
            sigma: 0.3,
            modes: None,
            kl_tolerance: None,
            degree: 12,
            epsilon: Some(0.0),
        }];
        let ExperimentResult::PerturbationStudy { rows, fit } = execute(&cfg, |_, _, _| {}).unwrap() else {
            panic!("wrong result kind")
        };
        // equal up to chaos truncation
        assert!(rows[0].relative_gap < 1e-8, "{}", rows[0].relative_gap);
        assert!(fit.is_none());
    }

    #[test]
    fn outputs_are_written_and_reproducible_from_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small("variance-1d");
        cfg.sweep = None;
        cfg.cases.truncate(1);
        cfg.cases[0].degree = 2;
        cfg.cases[0].modes = Some(2);
        cfg.mc = Some(McSpec {
            n_samples: 64,
            cv_alpha: 1.0,
        });
        cfg.output_dir = Some(dir.path().to_path_buf());
        let (result, out) = run(&cfg, |_, _, _| {}).unwrap();
        let ExperimentResult::McVarianceReduction(rows) = &result else {
            panic!("wrong result kind")
        };
        assert!(rows[0].ratio_h1 < 1.0);
        let first = std::fs::read_to_string(out.join("results.csv")).unwrap();
        assert!(first.starts_with("l_c,sigma,M,p,N_Mp,N_mc,"));

        let again = ExperimentConfig::load(&out.join("manifest.json")).unwrap();
        assert_eq!(again, cfg);
        run(&again, |_, _, _| {}).unwrap();
        assert_eq!(std::fs::read_to_string(out.join("results.csv")).unwrap(), first);
        let leftovers = std::fs::read_dir(&out)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".tmp"))
            .count();
        assert_eq!(leftovers, 0);
    }
}
