//! Experiment configuration: a TOML document describing one table or
//! figure.
//!
//! ```toml
//! kind = "precond_table"          # see ExperimentKind
//! name = "gaussian-1d"            # output subdirectory, optional
//! seed = 7                        # Monte Carlo seed, optional
//! force = "benchmark"             # or "unit"
//!
//! [domain]
//! lower = [-1.0]
//! upper = [1.0]
//!
//! [mesh]
//! cells = 25                      # per axis
//! order = 4
//!
//! [kernel]
//! kind = "gaussian"               # gaussian | exponential | bessel_matern
//! scaling = "wick"                # wick | truncated
//!
//! [solver]
//! tol = 1e-3
//! max_iter = 100
//!
//! [[cases]]
//! correlation_length = 20.0
//! sigma = 0.2
//! modes = 1                       # or kl_tolerance = 2e-3
//! degree = 10
//! ```
//!
//! Instead of listing `cases`, a `[sweep]` table expands the Cartesian
//! product of its lists into cases.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fem::Domain;
use crate::galerkin::{InitialGuess, SolverSettings, StoppingNorm};
use crate::montecarlo::McConfig;
use crate::randomfield::{CoefficientScaling, KernelKind, NystromGrid, Truncation};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Means and standard deviations of both models along `y = 0`.
    ModelCompare,
    /// `ε_r` over an `(ε, σ)` grid for the perturbed single-variable field.
    PerturbationStudy,
    /// Plain against control-variate Monte Carlo.
    McVarianceReduction,
    /// Gauss-Seidel, Richardson and GMRES iteration counts.
    PrecondTable,
    /// Richardson and GMRES counts over a `σ × p` grid.
    PowellBesselTable,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::ModelCompare,
        ExperimentKind::PerturbationStudy,
        ExperimentKind::McVarianceReduction,
        ExperimentKind::PrecondTable,
        ExperimentKind::PowellBesselTable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ModelCompare => "model_compare",
            ExperimentKind::PerturbationStudy => "perturbation_study",
            ExperimentKind::McVarianceReduction => "mc_variance_reduction",
            ExperimentKind::PrecondTable => "precond_table",
            ExperimentKind::PowellBesselTable => "powell_bessel_table",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ExperimentKind::ModelCompare => "mean and standard deviation of both models on the line y = 0",
            ExperimentKind::PerturbationStudy => "relative model gap over an (epsilon, sigma) grid, with a plane fit",
            ExperimentKind::McVarianceReduction => "variance of plain and control-variate Monte Carlo",
            ExperimentKind::PrecondTable => "Gauss-Seidel, Richardson and GMRES iteration counts",
            ExperimentKind::PowellBesselTable => "Richardson and GMRES counts over sigma and chaos degree",
        }
    }
}

/// Right-hand side of the PDE.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Force {
    /// `Π (x_k² + 4x_k + 1) e^{x_k}`.
    #[default]
    Benchmark,
    /// `f ≡ 1`.
    Unit,
}

impl Force {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            Force::Benchmark => crate::fem::benchmark_force(x),
            Force::Unit => 1.0,
        }
    }
}

/// Spatial profile of the amplitude perturbation in the perturbation study.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationShape {
    /// `cos(πx/2)`, positive inside `[-1, 1]`.
    #[default]
    Cosine,
    /// `x`.
    Linear,
}

impl PerturbationShape {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            PerturbationShape::Cosine => (std::f64::consts::FRAC_PI_2 * x[0]).cos(),
            PerturbationShape::Linear => x[0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    /// Elements per axis.
    pub cells: usize,
    /// Lagrange order.
    pub order: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: KernelKind,
    #[serde(default)]
    pub scaling: CoefficientScaling,
    /// Grid of the Nyström eigensolve; defaults per dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nystrom: Option<NystromGrid>,
}

/// One row of a table or one point of a figure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    #[serde(default = "one")]
    pub correlation_length: f64,
    pub sigma: f64,
    /// Pinned K-L dimension `M`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    /// K-L tolerance used when `modes` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_tolerance: Option<f64>,
    /// Total chaos degree `p`.
    pub degree: usize,
    /// Perturbation amplitude (perturbation study only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl Case {
    pub fn truncation(&self) -> Truncation {
        match (self.modes, self.kl_tolerance) {
            (Some(m), _) => Truncation::Modes(m),
            (None, Some(t)) => Truncation::Tolerance(t),
            (None, None) => Truncation::Modes(1),
        }
    }
}

/// Cartesian product of parameter lists; expands into cases in
/// row-major order (`correlation_lengths` outermost, `epsilons`
/// innermost).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default = "unit_list")]
    pub correlation_lengths: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub degrees: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilons: Vec<f64>,
}

fn unit_list() -> Vec<f64> {
    vec![1.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub tol: f64,
    pub max_iter: usize,
    /// Richardson step; `1/(1 + 3σ²)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relaxation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restart: Option<usize>,
    #[serde(default)]
    pub initial: InitialGuess,
    #[serde(default = "preconditioned")]
    pub norm: StoppingNorm,
}

fn preconditioned() -> StoppingNorm {
    StoppingNorm::Preconditioned
}

impl SolverSpec {
    pub fn settings(&self) -> SolverSettings {
        let mut s = SolverSettings::new(self.tol, self.max_iter)
            .with_norm(self.norm)
            .with_initial(self.initial);
        if let Some(g) = self.relaxation {
            s = s.with_relaxation(g);
        }
        if let Some(r) = self.restart {
            s = s.with_restart(r);
        }
        s
    }
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            tol: 1e-8,
            max_iter: 200,
            relaxation: None,
            restart: None,
            initial: InitialGuess::Model2,
            norm: StoppingNorm::Preconditioned,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSpec {
    pub n_samples: usize,
    #[serde(default = "alpha_one")]
    pub cv_alpha: f64,
}

fn alpha_one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub force: Force,
    #[serde(default)]
    pub shape: PerturbationShape,
    /// Overrides the output root for this run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub domain: Domain,
    pub mesh: MeshSpec,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cases: Vec<Case>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    /// Free-form remarks copied into the manifest.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Built-in configurations, one per reproduced table or figure.
pub const PRESETS: [(&str, &str); 10] = [
    ("precond-gaussian-1d", include_str!("../../configs/precond-gaussian-1d.toml")),
    ("precond-exponential-1d", include_str!("../../configs/precond-exponential-1d.toml")),
    ("precond-gaussian-2d", include_str!("../../configs/precond-gaussian-2d.toml")),
    ("precond-exponential-2d", include_str!("../../configs/precond-exponential-2d.toml")),
    ("precond-bessel-2d", include_str!("../../configs/precond-bessel-2d.toml")),
    ("compare-gaussian-2d", include_str!("../../configs/compare-gaussian-2d.toml")),
    ("compare-exponential-2d", include_str!("../../configs/compare-exponential-2d.toml")),
    ("perturbation", include_str!("../../configs/perturbation.toml")),
    ("variance-1d", include_str!("../../configs/variance-1d.toml")),
    ("variance-2d", include_str!("../../configs/variance-2d.toml")),
];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            context: "experiment config".into(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            context: "experiment config".into(),
            message: e.to_string(),
        })
    }

    /// Reads a TOML config, or the `config` entry of a run manifest when
    /// the file ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
                context: path.display().to_string(),
                message: e.to_string(),
            })?;
            let config = manifest
                .get("config")
                .ok_or_else(|| Error::Config(format!("{} has no `config` entry", path.display())))?;
            return serde_json::from_value(config.clone()).map_err(|e| Error::Parse {
                context: path.display().to_string(),
                message: e.to_string(),
            });
        }
        Self::from_toml(&text)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let (_, text) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::Config(format!("no preset named `{name}`")))?;
        Self::from_toml(text)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Explicit cases followed by the sweep's expansion.
    pub fn expanded_cases(&self) -> Vec<Case> {
        let mut out = self.cases.clone();
        if let Some(s) = &self.sweep {
            let eps: Vec<Option<f64>> = if s.epsilons.is_empty() {
                vec![None]
            } else {
                s.epsilons.iter().map(|&e| Some(e)).collect()
            };
            for &l in &s.correlation_lengths {
                for &sigma in &s.sigmas {
                    for &degree in &s.degrees {
                        for &epsilon in &eps {
                            out.push(Case {
                                correlation_length: l,
                                sigma,
                                modes: s.modes,
                                kl_tolerance: s.kl_tolerance,
                                degree,
                                epsilon,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Checks every parameter before anything is computed.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.domain.validate()?;
        if self.mesh.cells == 0 || !(1..=4).contains(&self.mesh.order) {
            return bad(format!(
                "mesh needs cells ≥ 1 and order in 1..=4, got cells = {} order = {}",
                self.mesh.cells, self.mesh.order
            ));
        }
        if let Some(g) = self.kernel.nystrom {
            if g.cells == 0 || g.points == 0 {
                return bad("nystrom grid needs positive cells and points".into());
            }
        }
        self.solver.settings().validate()?;
        let cases = self.expanded_cases();
        if cases.is_empty() {
            return bad("no cases: give [[cases]] or a [sweep]".into());
        }
        for (i, c) in cases.iter().enumerate() {
            let row = |msg: &str| Error::Config(format!("case {i}: {msg}"));
            if !(c.correlation_length > 0.0 && c.correlation_length.is_finite()) {
                return Err(row("correlation_length must be positive"));
            }
            if !(c.sigma >= 0.0 && c.sigma.is_finite()) {
                return Err(row("sigma must be non-negative"));
            }
            if c.degree == 0 {
                return Err(row("degree must be at least 1"));
            }
            if c.modes == Some(0) {
                return Err(row("modes must be at least 1"));
            }
            if let Some(t) = c.kl_tolerance {
                if !(t > 0.0 && t < 1.0) {
                    return Err(row("kl_tolerance must lie in (0, 1)"));
                }
            }
            match self.kind {
                ExperimentKind::PerturbationStudy => {
                    if self.dim() != 1 {
                        return bad("the perturbation study is one-dimensional".into());
                    }
                    match c.epsilon {
                        Some(e) if e.is_finite() && e >= 0.0 => {}
                        _ => return Err(row("perturbation cases need a non-negative epsilon")),
                    }
                }
                _ => {
                    if c.modes.is_none() && c.kl_tolerance.is_none() {
                        return Err(row("give modes or kl_tolerance"));
                    }
                }
            }
        }
        if self.kind == ExperimentKind::McVarianceReduction {
            match self.mc {
                Some(mc) => McConfig {
                    n_samples: mc.n_samples,
                    seed: self.seed,
                    cv_alpha: mc.cv_alpha,
                }
                .validate()?,
                None => return bad("mc_variance_reduction needs an [mc] table".into()),
            }
        }
        if self.kind == ExperimentKind::ModelCompare {
            let needs_mc = cases.iter().any(|c| c.modes.is_none_or(|m| m > super::GALERKIN_LIMIT));
            if needs_mc && self.mc.is_none() {
                return bad("model_compare with large or tolerance-chosen M needs an [mc] table".into());
            }
        }
        Ok(())
    }
}
