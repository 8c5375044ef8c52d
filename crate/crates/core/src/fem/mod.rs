//! Deterministic finite elements: structured meshes, Lagrange bases,
//! stiffness and load assembly, direct solves and norms.

mod quadrature;
mod space;
mod sparse;

use std::io::Write;
use std::path::Path;

pub use quadrature::{composite_gauss_legendre, gauss_legendre};
pub use space::{Domain, FemSpace};
pub use sparse::{factorization_count, BandedCholesky, CsrMatrix};

use crate::Result;

/// Solves `S u = b` for symmetric positive definite `S`.
pub fn solve_deterministic(s: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    Ok(BandedCholesky::factor(s)?.solve(b))
}

/// The smooth forcing `Π_k (x_k² + 4x_k + 1) e^{x_k}` used by the
/// benchmark problems on `[-1, 1]^d`.
pub fn benchmark_force(x: &[f64]) -> f64 {
    x.iter().map(|&t| (t * t + 4.0 * t + 1.0) * t.exp()).product()
}

/// Writes `coords... value` rows, one per node, space separated.
pub fn write_field(path: &Path, space: &FemSpace, u: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for row in space.nodal_rows(u) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()?;
    Ok(())
}
