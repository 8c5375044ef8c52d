//! Karhunen-Loève eigenpairs of a covariance kernel.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{distance, CovarianceKernel, KernelKind};
use crate::fem::{composite_gauss_legendre, Domain};
use crate::{Error, Result};

/// How many modes to keep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Smallest `M` with `λ_{M+1} / λ_1 ≤ tol`.
    Tolerance(f64),
    /// Exactly `M` modes.
    Modes(usize),
}

/// Smallest `M` with `λ_{M+1}/λ_1 ≤ tol` among the available eigenvalues
/// (all of them if none qualifies).
pub fn modes_for_tolerance(eigenvalues: &[f64], tol: f64) -> usize {
    let first = eigenvalues.first().copied().unwrap_or(0.0);
    (1..eigenvalues.len())
        .find(|&m| eigenvalues[m] <= tol * first)
        .unwrap_or(eigenvalues.len())
}

/// Quadrature grid for the Nyström eigensolve: a tensor composite
/// Gauss-Legendre rule with `cells` subintervals and `points` nodes each,
/// per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NystromGrid {
    pub cells: usize,
    pub points: usize,
}

impl NystromGrid {
    pub fn default_for(dim: usize) -> Self {
        match dim {
            1 => NystromGrid { cells: 100, points: 4 },
            _ => NystromGrid { cells: 16, points: 3 },
        }
    }
}

#[derive(Clone, Debug)]
enum Modes {
    /// Closed form for the exponential kernel on an interval.
    Exponential1d {
        lower: f64,
        length: f64,
        eps: f64,
        roots: Vec<f64>,
        norms: Vec<f64>,
    },
    /// Eigenvectors at quadrature nodes, extended by the Nyström formula.
    Nystrom {
        kernel: CovarianceKernel,
        dim: usize,
        nodes: Vec<f64>,
        weights: Vec<f64>,
        // mode-major values φ_i(x_j)
        values: Vec<f64>,
    },
}

/// Truncated eigenpairs `(λ_i, φ_i)` of the correlation kernel, with the
/// eigenfunctions available at any point of the domain.
#[derive(Clone, Debug)]
pub struct KlBasis {
    sigma: f64,
    eigenvalues: Vec<f64>,
    trace: f64,
    modes: Modes,
}

impl KlBasis {
    /// Exponential kernel on an interval from the roots of
    /// `(w² - ε²) tan w - 2εw = 0`.
    pub fn exponential_1d(
        correlation_length: f64,
        sigma: f64,
        lower: f64,
        upper: f64,
        truncation: Truncation,
    ) -> Result<Self> {
        if !(upper > lower) || !(correlation_length > 0.0) {
            return Err(Error::InvalidArgument(
                "exponential K-L needs a non-empty interval and l_c > 0".into(),
            ));
        }
        let length = upper - lower;
        // on [0,1] after rescaling x = lower + length·t
        let eps = length / correlation_length;
        let wanted = match truncation {
            Truncation::Modes(m) => m,
            Truncation::Tolerance(_) => 0,
        };
        let mut roots = Vec::new();
        let mut eigenvalues = Vec::new();
        let mut branch = 0;
        loop {
            let w = exponential_root(eps, branch)?;
            let lambda = length * 2.0 * eps / (w * w + eps * eps);
            roots.push(w);
            eigenvalues.push(lambda);
            branch += 1;
            let done = match truncation {
                Truncation::Modes(_) => roots.len() > wanted,
                Truncation::Tolerance(tol) => lambda <= tol * eigenvalues[0],
            };
            if done {
                break;
            }
            if branch > 100_000 {
                return Err(Error::RootFinding {
                    branch,
                    reason: "truncation tolerance not reached".into(),
                });
            }
        }
        let m = match truncation {
            Truncation::Modes(m) => m,
            Truncation::Tolerance(tol) => modes_for_tolerance(&eigenvalues, tol),
        };
        // one extra pair was computed to decide truncation
        roots.truncate(m);
        eigenvalues.truncate(m);
        let norms = roots
            .iter()
            .map(|&w| {
                (0.5 * (eps * eps + w * w)
                    + (w * w - eps * eps) * (2.0 * w).sin() / (4.0 * w)
                    + 0.5 * eps * (1.0 - (2.0 * w).cos()))
                .sqrt()
            })
            .collect();
        Ok(KlBasis {
            sigma,
            eigenvalues,
            trace: length,
            modes: Modes::Exponential1d {
                lower,
                length,
                eps,
                roots,
                norms,
            },
        })
    }

    /// Nyström discretization `W^{1/2} K W^{1/2} v = λ v` on a tensor
    /// Gauss-Legendre grid, followed by a dense symmetric eigensolve.
    pub fn nystrom(
        kernel: CovarianceKernel,
        domain: &Domain,
        grid: NystromGrid,
        truncation: Truncation,
    ) -> Result<Self> {
        domain.validate()?;
        let dim = domain.dim();
        let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..dim)
            .map(|k| composite_gauss_legendre(domain.lower[k], domain.upper[k], grid.cells, grid.points))
            .collect();
        let n1 = axes[0].0.len();
        let n = n1.pow(dim as u32);
        if n > 6000 {
            return Err(Error::TooLarge { size: n, limit: 6000 });
        }
        let mut nodes = Vec::with_capacity(n * dim);
        let mut weights = Vec::with_capacity(n);
        for j in 0..n {
            let mut rest = j;
            let mut w = 1.0;
            for axis in &axes {
                let i = rest % n1;
                rest /= n1;
                nodes.push(axis.0[i]);
                w *= axis.1[i];
            }
            weights.push(w);
        }
        let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let entries: Vec<f64> = (0..n * n)
            .into_par_iter()
            .map(|ij| {
                let (i, j) = (ij / n, ij % n);
                let r = distance(&nodes[i * dim..(i + 1) * dim], &nodes[j * dim..(j + 1) * dim]);
                sqrt_w[i] * kernel.correlation(r) * sqrt_w[j]
            })
            .collect();
        let matrix = DMatrix::from_row_slice(n, n, &entries);
        let eig = SymmetricEigen::try_new(matrix, 1e-14, 0)
            .ok_or_else(|| Error::Eigensolve("symmetric eigensolve did not converge".into()))?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let all: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let top = all[0];
        if let Some(&neg) = all.iter().find(|&&l| l < -1e-12 * top * (n as f64).sqrt()) {
            return Err(Error::Eigensolve(format!(
                "kernel matrix has eigenvalue {neg:e}, far below zero"
            )));
        }
        let all: Vec<f64> = all.into_iter().map(|l| l.max(0.0)).collect();
        let m = match truncation {
            Truncation::Modes(m) if m <= n => m,
            Truncation::Modes(m) => return Err(Error::TooLarge { size: m, limit: n }),
            Truncation::Tolerance(tol) => modes_for_tolerance(&all, tol),
        };
        let mut values = Vec::with_capacity(m * n);
        for &col in order.iter().take(m) {
            let v = eig.eigenvectors.column(col);
            // fix the sign so that ∫φ ≥ 0 (or the first node is positive)
            let mean: f64 = (0..n).map(|j| sqrt_w[j] * v[j]).sum();
            let sign = if mean.abs() > 1e-10 {
                mean.signum()
            } else if v[0] != 0.0 {
                v[0].signum()
            } else {
                1.0
            };
            values.extend((0..n).map(|j| sign * v[j] / sqrt_w[j]));
        }
        Ok(KlBasis {
            sigma: kernel.sigma,
            eigenvalues: all[..m].to_vec(),
            trace: domain.volume(),
            modes: Modes::Nystrom {
                kernel,
                dim,
                nodes,
                weights,
                values,
            },
        })
    }

    /// Chooses the closed form for the 1D exponential kernel and the
    /// Nyström solve otherwise.
    pub fn for_kernel(
        kernel: CovarianceKernel,
        domain: &Domain,
        grid: NystromGrid,
        truncation: Truncation,
    ) -> Result<Self> {
        if kernel.kind == KernelKind::Exponential && domain.dim() == 1 {
            KlBasis::exponential_1d(
                kernel.correlation_length,
                kernel.sigma,
                domain.lower[0],
                domain.upper[0],
                truncation,
            )
        } else {
            KlBasis::nystrom(kernel, domain, grid, truncation)
        }
    }

    /// Number of retained modes `M`.
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `∫ K(x, x) dx` of the unit correlation, the upper bound of `Σ λ_i`.
    pub fn trace(&self) -> f64 {
        self.trace
    }

    /// Copy keeping only the first `m` modes.
    pub fn truncated(&self, m: usize) -> Result<KlBasis> {
        if m > self.len() {
            return Err(Error::TooLarge { size: m, limit: self.len() });
        }
        let mut out = self.clone();
        out.eigenvalues.truncate(m);
        match &mut out.modes {
            Modes::Exponential1d { roots, norms, .. } => {
                roots.truncate(m);
                norms.truncate(m);
            }
            Modes::Nystrom { weights, values, .. } => values.truncate(m * weights.len()),
        }
        Ok(out)
    }

    /// Same eigenpairs with a different `σ`.
    pub fn with_sigma(&self, sigma: f64) -> KlBasis {
        let mut out = self.clone();
        out.sigma = sigma;
        out
    }

    /// `φ_i(x)` for every retained mode.
    pub fn eigenfunctions_at(&self, x: &[f64], out: &mut [f64]) {
        match &self.modes {
            Modes::Exponential1d {
                lower,
                length,
                eps,
                roots,
                norms,
            } => {
                let t = (x[0] - lower) / length;
                let scale = 1.0 / length.sqrt();
                for ((o, &w), &nrm) in out.iter_mut().zip(roots).zip(norms) {
                    *o = scale * (w * (w * t).cos() + eps * (w * t).sin()) / nrm;
                }
            }
            Modes::Nystrom {
                kernel,
                dim,
                nodes,
                weights,
                values,
            } => {
                let n = weights.len();
                let kx: Vec<f64> = (0..n)
                    .map(|j| weights[j] * kernel.correlation(distance(x, &nodes[j * dim..(j + 1) * dim])))
                    .collect();
                for (i, o) in out.iter_mut().enumerate().take(self.eigenvalues.len()) {
                    let lambda = self.eigenvalues[i];
                    let row = &values[i * n..(i + 1) * n];
                    let s: f64 = kx.iter().zip(row).map(|(a, b)| a * b).sum();
                    *o = if lambda > 0.0 { s / lambda } else { 0.0 };
                }
            }
        }
    }

    /// `Φ(x) = (σ √λ_i φ_i(x))_i`.
    pub fn phi_vector(&self, x: &[f64], out: &mut [f64]) {
        self.eigenfunctions_at(x, out);
        for (o, l) in out.iter_mut().zip(&self.eigenvalues) {
            *o *= self.sigma * l.sqrt();
        }
    }

    /// `max_x |Σ_i λ_i φ_i(x)² - 1|` over the given points (stride `dim`).
    pub fn variance_defect(&self, points: &[f64], dim: usize) -> f64 {
        let m = self.len();
        points
            .par_chunks(dim)
            .map(|x| {
                let mut phi = vec![0.0; m];
                self.eigenfunctions_at(x, &mut phi);
                let v: f64 = phi.iter().zip(&self.eigenvalues).map(|(p, l)| l * p * p).sum();
                (v - 1.0).abs()
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Saves a Nyström basis as plain text.
    ///
    /// Layout: a header line, `kernel <kind> <l_c> <sigma>`, `dim <d>`,
    /// `nodes <n>` followed by `n` rows `x_1 .. x_d w`, `modes <M>` followed
    /// by `M` rows `λ φ(x_1) .. φ(x_n)`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let Modes::Nystrom {
            kernel,
            dim,
            nodes,
            weights,
            values,
        } = &self.modes
        else {
            return Err(Error::InvalidArgument(
                "only Nyström bases are persisted; closed forms are recomputed".into(),
            ));
        };
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# wick-galerkin kl basis v1")?;
        let kind = serde_json::to_string(&kernel.kind).map_err(|e| Error::Config(e.to_string()))?;
        writeln!(
            out,
            "kernel {} {:e} {:e}",
            kind.trim_matches('"'),
            kernel.correlation_length,
            kernel.sigma
        )?;
        writeln!(out, "dim {dim}")?;
        writeln!(out, "nodes {}", weights.len())?;
        for (j, w) in weights.iter().enumerate() {
            let mut row: Vec<String> = nodes[j * dim..(j + 1) * dim].iter().map(|v| format!("{v:e}")).collect();
            row.push(format!("{w:e}"));
            writeln!(out, "{}", row.join(" "))?;
        }
        writeln!(out, "modes {}", self.len())?;
        let n = weights.len();
        for (i, l) in self.eigenvalues.iter().enumerate() {
            let mut row = vec![format!("{l:e}")];
            row.extend(values[i * n..(i + 1) * n].iter().map(|v| format!("{v:e}")));
            writeln!(out, "{}", row.join(" "))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a basis written by [`KlBasis::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = file.lines().filter(|l| !matches!(l, Ok(s) if s.starts_with('#')));
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| parse_err(what, "unexpected end of file"))?
                .map_err(Error::from)
        };
        let head = next("kernel")?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "kernel" {
            return Err(parse_err("kernel", &head));
        }
        let kernel = CovarianceKernel::new(parts[1].parse()?, num(parts[2], "l_c")?, num(parts[3], "sigma")?)?;
        let dim = tagged(&next("dim")?, "dim")?;
        let n = tagged(&next("nodes")?, "nodes")?;
        let mut nodes = Vec::with_capacity(n * dim);
        let mut weights = Vec::with_capacity(n);
        for _ in 0..n {
            let row = floats(&next("node row")?)?;
            if row.len() != dim + 1 {
                return Err(parse_err("node row", "wrong column count"));
            }
            nodes.extend_from_slice(&row[..dim]);
            weights.push(row[dim]);
        }
        let m = tagged(&next("modes")?, "modes")?;
        let mut eigenvalues = Vec::with_capacity(m);
        let mut values = Vec::with_capacity(m * n);
        for _ in 0..m {
            let row = floats(&next("mode row")?)?;
            if row.len() != n + 1 {
                return Err(parse_err("mode row", "wrong column count"));
            }
            eigenvalues.push(row[0]);
            values.extend_from_slice(&row[1..]);
        }
        let trace = weights.iter().sum();
        Ok(KlBasis {
            sigma: kernel.sigma,
            eigenvalues,
            trace,
            modes: Modes::Nystrom {
                kernel,
                dim,
                nodes,
                weights,
                values,
            },
        })
    }
}

fn parse_err(context: &str, message: &str) -> Error {
    Error::Parse {
        context: context.to_string(),
        message: message.to_string(),
    }
}

fn num(s: &str, context: &str) -> Result<f64> {
    s.parse().map_err(|_| parse_err(context, s))
}

fn floats(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace().map(|t| num(t, "value")).collect()
}

fn tagged(line: &str, tag: &str) -> Result<usize> {
    match line.split_whitespace().collect::<Vec<_>>().as_slice() {
        [t, v] if *t == tag => v.parse().map_err(|_| parse_err(tag, line)),
        _ => Err(parse_err(tag, line)),
    }
}

/// `g(w) = (w² - ε²) sin w - 2εw cos w`, the pole-free form of the
/// characteristic equation.
fn characteristic(eps: f64, w: f64) -> f64 {
    (w * w - eps * eps) * w.sin() - 2.0 * eps * w * w.cos()
}

/// Root of the characteristic equation on branch `k`, the interval
/// `(kπ, (k+1)π)`, by bisection.
pub fn exponential_root(eps: f64, k: usize) -> Result<f64> {
    let mut a = k as f64 * PI;
    let mut b = a + PI;
    if k == 0 {
        // g < 0 just right of zero
        a = 1e-12 * b;
    }
    let (mut ga, gb) = (characteristic(eps, a), characteristic(eps, b));
    if ga == 0.0 {
        return Ok(a);
    }
    if ga.signum() == gb.signum() {
        return Err(Error::RootFinding {
            branch: k,
            reason: format!("no sign change on [{a}, {b}]"),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let gm = characteristic(eps, mid);
        if gm == 0.0 || b - a <= 4.0 * f64::EPSILON * mid {
            return Ok(mid);
        }
        if gm.signum() == ga.signum() {
            a = mid;
            ga = gm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_satisfy_the_characteristic_equation() {
        for &eps in &[0.05, 1.0, 5.0] {
            for k in 0..6 {
                let w = exponential_root(eps, k).unwrap();
                let residual = (w * w - eps * eps) * w.tan() - 2.0 * eps * w;
                // relative to the magnitude of the two balanced terms
                assert!(residual.abs() <= 1e-10 * (2.0 * eps * w).max(1.0), "eps={eps} k={k}");
            }
        }
        let w1 = exponential_root(1.0, 0).unwrap();
        assert!(w1 > 0.0 && w1 < PI / 2.0);
    }

    #[test]
    fn long_correlation_limit() {
        let kl = KlBasis::exponential_1d(1e4, 1.0, 0.0, 1.0, Truncation::Modes(2)).unwrap();
        assert!((kl.eigenvalues()[0] - 1.0).abs() < 1e-3);
        let mut phi = [0.0; 2];
        kl.eigenfunctions_at(&[0.3], &mut phi);
        assert!((phi[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn analytic_matches_nystrom() {
        let kernel = CovarianceKernel::new(KernelKind::Exponential, 0.5, 1.0).unwrap();
        let domain = Domain::reference(1);
        let exact = KlBasis::exponential_1d(0.5, 1.0, -1.0, 1.0, Truncation::Modes(6)).unwrap();
        let numeric = KlBasis::nystrom(kernel, &domain, NystromGrid { cells: 200, points: 4 }, Truncation::Modes(6))
            .unwrap();
        for i in 0..5 {
            let (a, b) = (exact.eigenvalues()[i], numeric.eigenvalues()[i]);
            assert!((a / b - 1.0).abs() < 1e-3, "mode {i}: {a} vs {b}");
        }
        let mut pa = [0.0; 6];
        let mut pb = [0.0; 6];
        for &x in &[-0.9, 0.1, 0.77] {
            exact.eigenfunctions_at(&[x], &mut pa);
            numeric.eigenfunctions_at(&[x], &mut pb);
            for i in 0..3 {
                assert!((pa[i].abs() - pb[i].abs()).abs() < 1e-3, "mode {i} at {x}");
            }
        }
    }

    #[test]
    fn nystrom_orthonormality_and_trace() {
        let kernel = CovarianceKernel::new(KernelKind::Gaussian, 0.5, 1.0).unwrap();
        let kl = KlBasis::nystrom(kernel, &Domain::reference(2), NystromGrid { cells: 8, points: 3 }, Truncation::Modes(8))
            .unwrap();
        let Modes::Nystrom { weights, values, .. } = &kl.modes else {
            unreachable!()
        };
        let n = weights.len();
        for i in 0..8 {
            for j in 0..8 {
                let ip: f64 = (0..n).map(|k| weights[k] * values[i * n + k] * values[j * n + k]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-8);
            }
        }
        assert!(kl.eigenvalues().iter().sum::<f64>() <= kl.trace() + 1e-10);
        assert!(kl.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn tolerance_truncation() {
        let kernel = CovarianceKernel::new(KernelKind::Gaussian, 20.0, 1.0).unwrap();
        let kl = KlBasis::nystrom(kernel, &Domain::reference(1), NystromGrid::default_for(1), Truncation::Tolerance(2e-3))
            .unwrap();
        assert_eq!(kl.len(), 1);
        assert_eq!(modes_for_tolerance(&[1.0, 0.5, 0.01, 0.001], 0.02), 2);
        assert_eq!(modes_for_tolerance(&[1.0, 0.5], 0.02), 2);
    }

    #[test]
    fn save_and_load_preserve_the_basis() {
        let kernel = CovarianceKernel::new(KernelKind::BesselMatern, 1.0, 0.4).unwrap();
        let kl = KlBasis::nystrom(kernel, &Domain::unit(2), NystromGrid { cells: 4, points: 2 }, Truncation::Modes(5))
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kl.txt");
        kl.save(&path).unwrap();
        let back = KlBasis::load(&path).unwrap();
        assert_eq!(back.len(), 5);
        let (mut a, mut b) = ([0.0; 5], [0.0; 5]);
        kl.phi_vector(&[0.3, 0.6], &mut a);
        back.phi_vector(&[0.3, 0.6], &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let exp = KlBasis::exponential_1d(1.0, 1.0, 0.0, 1.0, Truncation::Modes(2)).unwrap();
        assert!(exp.save(&path).is_err());
    }
}
