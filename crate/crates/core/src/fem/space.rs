//! Continuous Lagrange spaces on uniform 1D meshes and structured 2D
//! quadrilateral grids, with homogeneous Dirichlet conditions built in.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quadrature::gauss_legendre;
use super::sparse::CsrMatrix;
use crate::{Error, Result};

const BOUNDARY: u32 = u32::MAX;

/// Axis-aligned box `Π [lower_k, upper_k]` in one or two dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Domain {
    /// `[-1, 1]^dim`.
    pub fn reference(dim: usize) -> Self {
        Domain {
            lower: vec![-1.0; dim],
            upper: vec![1.0; dim],
        }
    }

    /// `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Domain {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| b - a)
            .product()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.lower.len();
        if !(1..=2).contains(&d) || self.upper.len() != d {
            return Err(Error::InvalidArgument(format!(
                "domain must be 1D or 2D with matching bounds, got {d} lower and {} upper",
                self.upper.len()
            )));
        }
        if self.lower.iter().zip(&self.upper).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidArgument("domain bounds must satisfy lower < upper".into()));
        }
        Ok(())
    }
}

/// 1D Lagrange basis of order `q` on equispaced nodes of `[-1, 1]`.
#[derive(Clone, Debug)]
struct Lagrange1d {
    nodes: Vec<f64>,
}

impl Lagrange1d {
    fn new(q: usize) -> Self {
        Lagrange1d {
            nodes: (0..=q).map(|i| -1.0 + 2.0 * i as f64 / q as f64).collect(),
        }
    }

    fn value(&self, a: usize, x: f64) -> f64 {
        let xa = self.nodes[a];
        self.nodes
            .iter()
            .enumerate()
            .filter(|&(b, _)| b != a)
            .map(|(_, &xb)| (x - xb) / (xa - xb))
            .product()
    }

    fn derivative(&self, a: usize, x: f64) -> f64 {
        let xa = self.nodes[a];
        let mut total = 0.0;
        for (skip, &xs) in self.nodes.iter().enumerate() {
            if skip == a {
                continue;
            }
            let mut term = 1.0 / (xa - xs);
            for (b, &xb) in self.nodes.iter().enumerate() {
                if b != a && b != skip {
                    term *= (x - xb) / (xa - xb);
                }
            }
            total += term;
        }
        total
    }
}

/// Interior-DOF Lagrange space of order `q` on a uniform grid.
///
/// Nodes form a tensor grid with `n_k·q + 1` points per direction, numbered
/// lexicographically with `x` fastest; interior degrees of freedom inherit
/// that order. Every element of a uniform grid is a translate of one
/// reference cell, so shape data are stored once.
#[derive(Clone, Debug)]
pub struct FemSpace {
    domain: Domain,
    order: usize,
    cells: Vec<usize>,
    h: Vec<f64>,
    nodes_per_dir: Vec<usize>,
    node_dof: Vec<u32>,
    dof_node: Vec<usize>,
    element_dofs: Vec<u32>,
    n_local: usize,
    n_qp_local: usize,
    qp_weight: Vec<f64>,
    qp_ref: Vec<f64>,
    shape: Vec<f64>,
    grad: Vec<f64>,
}

impl FemSpace {
    /// Space on `domain` with `cells[k]` elements along axis `k`.
    pub fn new(domain: Domain, cells: &[usize], order: usize) -> Result<Self> {
        domain.validate()?;
        let dim = domain.dim();
        if cells.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: cells.len(),
            });
        }
        let max_order = if dim == 1 { 4 } else { 2 };
        if order == 0 || order > max_order {
            return Err(Error::InvalidArgument(format!(
                "element order {order} unsupported in {dim}D (1..={max_order})"
            )));
        }
        if cells.contains(&0) {
            return Err(Error::InvalidArgument("each axis needs at least one cell".into()));
        }
        let nodes_per_dir: Vec<usize> = cells.iter().map(|c| c * order + 1).collect();
        if nodes_per_dir.iter().any(|&n| n < 3) {
            return Err(Error::InvalidArgument(
                "mesh has no interior degrees of freedom".into(),
            ));
        }
        let h: Vec<f64> = (0..dim)
            .map(|k| (domain.upper[k] - domain.lower[k]) / cells[k] as f64)
            .collect();

        let n_nodes: usize = nodes_per_dir.iter().product();
        let mut node_dof = vec![BOUNDARY; n_nodes];
        let mut dof_node = Vec::new();
        for (node, slot) in node_dof.iter_mut().enumerate() {
            let coords = unravel(node, &nodes_per_dir);
            let interior = coords
                .iter()
                .zip(&nodes_per_dir)
                .all(|(&c, &n)| c > 0 && c + 1 < n);
            if interior {
                *slot = dof_node.len() as u32;
                dof_node.push(node);
            }
        }

        let n_local = (order + 1).pow(dim as u32);
        let n_elements: usize = cells.iter().product();
        let mut element_dofs = Vec::with_capacity(n_elements * n_local);
        for e in 0..n_elements {
            let ec = unravel(e, cells);
            for a in 0..n_local {
                let ac = unravel(a, &vec![order + 1; dim]);
                let gc: Vec<usize> = (0..dim).map(|k| ec[k] * order + ac[k]).collect();
                element_dofs.push(node_dof[ravel(&gc, &nodes_per_dir)]);
            }
        }

        let basis = Lagrange1d::new(order);
        let (gx, gw) = gauss_legendre(order + 2);
        let nq1 = gx.len();
        let n_qp_local = nq1.pow(dim as u32);
        let jac: f64 = h.iter().map(|hk| 0.5 * hk).product();
        let mut qp_weight = Vec::with_capacity(n_qp_local);
        let mut qp_ref = Vec::with_capacity(n_qp_local * dim);
        let mut shape = Vec::with_capacity(n_qp_local * n_local);
        let mut grad = Vec::with_capacity(n_qp_local * n_local * dim);
        for l in 0..n_qp_local {
            let lc = unravel(l, &vec![nq1; dim]);
            let r: Vec<f64> = lc.iter().map(|&i| gx[i]).collect();
            qp_weight.push(jac * lc.iter().map(|&i| gw[i]).product::<f64>());
            qp_ref.extend_from_slice(&r);
            for a in 0..n_local {
                let ac = unravel(a, &vec![order + 1; dim]);
                let vals: Vec<f64> = (0..dim).map(|k| basis.value(ac[k], r[k])).collect();
                shape.push(vals.iter().product());
                for k in 0..dim {
                    let mut g = 2.0 / h[k] * basis.derivative(ac[k], r[k]);
                    for (m, v) in vals.iter().enumerate() {
                        if m != k {
                            g *= v;
                        }
                    }
                    grad.push(g);
                }
            }
        }

        Ok(FemSpace {
            domain,
            order,
            cells: cells.to_vec(),
            h,
            nodes_per_dir,
            node_dof,
            dof_node,
            element_dofs,
            n_local,
            n_qp_local,
            qp_weight,
            qp_ref,
            shape,
            grad,
        })
    }

    /// `[-1, 1]^dim` with `n` cells per axis.
    pub fn reference(dim: usize, n: usize, order: usize) -> Result<Self> {
        FemSpace::new(Domain::reference(dim), &vec![n; dim], order)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Number of interior degrees of freedom `N_x`.
    pub fn n_dofs(&self) -> usize {
        self.dof_node.len()
    }

    pub fn n_elements(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn n_local(&self) -> usize {
        self.n_local
    }

    pub fn n_qp_per_element(&self) -> usize {
        self.n_qp_local
    }

    /// Total number of quadrature points; point `g` lives in element
    /// `g / n_qp_per_element()`.
    pub fn n_qp(&self) -> usize {
        self.n_elements() * self.n_qp_local
    }

    /// Interior DOF numbers of element `e`'s local nodes (`u32::MAX` on the
    /// boundary).
    pub fn element_dofs(&self, e: usize) -> &[u32] {
        &self.element_dofs[e * self.n_local..(e + 1) * self.n_local]
    }

    /// Physical quadrature weight of local point `l` (the same in every
    /// element).
    pub fn qp_weight(&self, l: usize) -> f64 {
        self.qp_weight[l]
    }

    pub fn shape(&self, l: usize, a: usize) -> f64 {
        self.shape[l * self.n_local + a]
    }

    /// Physical gradient of local basis function `a` at local point `l`.
    pub fn shape_grad(&self, l: usize, a: usize) -> &[f64] {
        let d = self.dim();
        let i = (l * self.n_local + a) * d;
        &self.grad[i..i + d]
    }

    /// Coordinates of global quadrature point `g`.
    pub fn qp_coords(&self, g: usize) -> Vec<f64> {
        let d = self.dim();
        let (e, l) = (g / self.n_qp_local, g % self.n_qp_local);
        let ec = unravel(e, &self.cells);
        (0..d)
            .map(|k| {
                self.domain.lower[k]
                    + self.h[k] * (ec[k] as f64 + 0.5 * (self.qp_ref[l * d + k] + 1.0))
            })
            .collect()
    }

    /// Coordinates of every quadrature point, flattened with stride `dim`.
    pub fn all_qp_coords(&self) -> Vec<f64> {
        (0..self.n_qp()).flat_map(|g| self.qp_coords(g)).collect()
    }

    /// Coordinates of interior DOF `i`.
    pub fn dof_coords(&self, i: usize) -> Vec<f64> {
        self.node_coords(self.dof_node[i])
    }

    fn node_coords(&self, node: usize) -> Vec<f64> {
        let c = unravel(node, &self.nodes_per_dir);
        (0..self.dim())
            .map(|k| {
                self.domain.lower[k] + c[k] as f64 * self.h[k] / self.order as f64
            })
            .collect()
    }

    /// Values of `f` at every quadrature point.
    pub fn eval_at_qps(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> Vec<f64> {
        (0..self.n_qp())
            .into_par_iter()
            .map(|g| f(&self.qp_coords(g)))
            .collect()
    }

    /// FE interpolant of `f` (nodal values at interior DOFs).
    pub fn interpolate(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.n_dofs()).map(|i| f(&self.dof_coords(i))).collect()
    }

    /// Values of the field `u` at every quadrature point.
    pub fn values_at_qps(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_qp()];
        out.par_chunks_mut(self.n_qp_local)
            .enumerate()
            .for_each(|(e, chunk)| {
                let dofs = self.element_dofs(e);
                for (l, o) in chunk.iter_mut().enumerate() {
                    *o = dofs
                        .iter()
                        .enumerate()
                        .filter(|(_, &d)| d != BOUNDARY)
                        .map(|(a, &d)| u[d as usize] * self.shape(l, a))
                        .sum();
                }
            });
        out
    }

    /// Gradients of `u` at every quadrature point, stride `dim`.
    pub fn gradients_at_qps(&self, u: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; self.n_qp() * d];
        out.par_chunks_mut(self.n_qp_local * d)
            .enumerate()
            .for_each(|(e, chunk)| self.element_gradients(e, u, chunk));
        out
    }

    /// Gradients of `u` at the quadrature points of element `e`.
    pub fn element_gradients(&self, e: usize, u: &[f64], out: &mut [f64]) {
        let d = self.dim();
        out.iter_mut().for_each(|v| *v = 0.0);
        for (a, &dof) in self.element_dofs(e).iter().enumerate() {
            if dof == BOUNDARY {
                continue;
            }
            let ua = u[dof as usize];
            if ua == 0.0 {
                continue;
            }
            for l in 0..self.n_qp_local {
                let g = self.shape_grad(l, a);
                for k in 0..d {
                    out[l * d + k] += ua * g[k];
                }
            }
        }
    }

    /// `r_i += Σ_g w_g flux_g · ∇θ_i(x_g)` for a flux given at every
    /// quadrature point (stride `dim`, quadrature weights not applied).
    pub fn add_flux_divergence(&self, flux: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for e in 0..self.n_elements() {
            let base = e * self.n_qp_local * d;
            self.add_element_flux(e, &flux[base..base + self.n_qp_local * d], out);
        }
    }

    /// Element `e` part of [`FemSpace::add_flux_divergence`].
    pub fn add_element_flux(&self, e: usize, flux: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (a, &dof) in self.element_dofs(e).iter().enumerate() {
            if dof == BOUNDARY {
                continue;
            }
            let mut s = 0.0;
            for l in 0..self.n_qp_local {
                let g = self.shape_grad(l, a);
                let w = self.qp_weight[l];
                for k in 0..d {
                    s += w * flux[l * d + k] * g[k];
                }
            }
            out[dof as usize] += s;
        }
    }

    /// `(S)_{ij} = ∫ c ∇θ_i·∇θ_j` with `c` given at every quadrature point.
    pub fn assemble_stiffness(&self, coeff: &[f64]) -> CsrMatrix {
        let d = self.dim();
        let triplets: Vec<(usize, usize, f64)> = (0..self.n_elements())
            .into_par_iter()
            .flat_map_iter(|e| {
                let dofs = self.element_dofs(e);
                let mut local = Vec::with_capacity(self.n_local * self.n_local);
                for (a, &da) in dofs.iter().enumerate() {
                    if da == BOUNDARY {
                        continue;
                    }
                    for (b, &db) in dofs.iter().enumerate() {
                        if db == BOUNDARY {
                            continue;
                        }
                        let mut s = 0.0;
                        for l in 0..self.n_qp_local {
                            let c = coeff[e * self.n_qp_local + l];
                            let (ga, gb) = (self.shape_grad(l, a), self.shape_grad(l, b));
                            let dot: f64 = (0..d).map(|k| ga[k] * gb[k]).sum();
                            s += self.qp_weight[l] * c * dot;
                        }
                        local.push((da as usize, db as usize, s));
                    }
                }
                local
            })
            .collect();
        CsrMatrix::from_triplets(self.n_dofs(), triplets)
    }

    /// Stiffness matrix for a coefficient given as a function of `x`.
    pub fn assemble_stiffness_fn(&self, c: impl Fn(&[f64]) -> f64 + Sync) -> CsrMatrix {
        self.assemble_stiffness(&self.eval_at_qps(c))
    }

    /// `b_i = ∫ f θ_i`.
    pub fn assemble_load(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> Vec<f64> {
        let fq = self.eval_at_qps(f);
        let mut b = vec![0.0; self.n_dofs()];
        for e in 0..self.n_elements() {
            for (a, &dof) in self.element_dofs(e).iter().enumerate() {
                if dof == BOUNDARY {
                    continue;
                }
                let mut s = 0.0;
                for l in 0..self.n_qp_local {
                    s += self.qp_weight[l] * fq[e * self.n_qp_local + l] * self.shape(l, a);
                }
                b[dof as usize] += s;
            }
        }
        b
    }

    /// `∫ |∇u|²`.
    pub fn h1_seminorm_sq(&self, u: &[f64]) -> f64 {
        let d = self.dim();
        let g = self.gradients_at_qps(u);
        (0..self.n_qp())
            .map(|q| {
                let w = self.qp_weight[q % self.n_qp_local];
                w * g[q * d..(q + 1) * d].iter().map(|v| v * v).sum::<f64>()
            })
            .sum()
    }

    pub fn h1_seminorm(&self, u: &[f64]) -> f64 {
        self.h1_seminorm_sq(u).sqrt()
    }

    /// `∫ u²`.
    pub fn l2_norm_sq(&self, u: &[f64]) -> f64 {
        let v = self.values_at_qps(u);
        v.iter()
            .enumerate()
            .map(|(q, x)| self.qp_weight[q % self.n_qp_local] * x * x)
            .sum()
    }

    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        self.l2_norm_sq(u).sqrt()
    }

    /// `‖u - exact‖_{L2}` by quadrature.
    pub fn l2_error(&self, u: &[f64], exact: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
        let v = self.values_at_qps(u);
        let e = self.eval_at_qps(exact);
        v.iter()
            .zip(&e)
            .enumerate()
            .map(|(q, (a, b))| self.qp_weight[q % self.n_qp_local] * (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Value of the FE field `u` at an arbitrary point of the domain.
    pub fn evaluate(&self, u: &[f64], x: &[f64]) -> f64 {
        let d = self.dim();
        let mut ec = Vec::with_capacity(d);
        let mut r = Vec::with_capacity(d);
        for k in 0..d {
            let t = (x[k] - self.domain.lower[k]) / self.h[k];
            let c = (t.floor().max(0.0) as usize).min(self.cells[k] - 1);
            ec.push(c);
            r.push(2.0 * (t - c as f64) - 1.0);
        }
        let e = ravel(&ec, &self.cells);
        let basis = Lagrange1d::new(self.order);
        self.element_dofs(e)
            .iter()
            .enumerate()
            .filter(|(_, &dof)| dof != BOUNDARY)
            .map(|(a, &dof)| {
                let ac = unravel(a, &vec![self.order + 1; d]);
                let phi: f64 = (0..d).map(|k| basis.value(ac[k], r[k])).product();
                u[dof as usize] * phi
            })
            .sum()
    }

    /// Node coordinates and values of `u` along the line `y = y0` (2D) or
    /// the whole interval (1D), boundary nodes included with value 0.
    pub fn line_slice(&self, u: &[f64], y0: f64) -> Vec<(f64, f64)> {
        let nx = self.nodes_per_dir[0];
        let xs = (0..nx).map(|i| self.domain.lower[0] + i as f64 * self.h[0] / self.order as f64);
        match self.dim() {
            1 => xs
                .enumerate()
                .map(|(i, x)| {
                    let v = match self.node_dof[i] {
                        BOUNDARY => 0.0,
                        dof => u[dof as usize],
                    };
                    (x, v)
                })
                .collect(),
            _ => xs.map(|x| (x, self.evaluate(u, &[x, y0]))).collect(),
        }
    }

    /// Rows of `(coords..., value)` for every node, boundary included.
    pub fn nodal_rows(&self, u: &[f64]) -> Vec<Vec<f64>> {
        (0..self.node_dof.len())
            .map(|node| {
                let mut row = self.node_coords(node);
                row.push(match self.node_dof[node] {
                    BOUNDARY => 0.0,
                    dof => u[dof as usize],
                });
                row
            })
            .collect()
    }
}

fn unravel(mut i: usize, dims: &[usize]) -> Vec<usize> {
    dims.iter()
        .map(|&n| {
            let c = i % n;
            i /= n;
            c
        })
        .collect()
}

fn ravel(c: &[usize], dims: &[usize]) -> usize {
    c.iter().zip(dims).rev().fold(0, |acc, (&ci, &n)| acc * n + ci)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dof_counts() {
        assert_eq!(FemSpace::reference(1, 25, 4).unwrap().n_dofs(), 99);
        assert_eq!(FemSpace::reference(2, 32, 2).unwrap().n_dofs(), 3969);
        assert!(FemSpace::new(Domain::unit(1), &[1], 1).is_err());
        assert!(FemSpace::reference(2, 4, 3).is_err());
        assert!(FemSpace::reference(1, 4, 5).is_err());
    }

    #[test]
    fn two_linear_elements() {
        let s = FemSpace::new(Domain::unit(1), &[2], 1).unwrap();
        assert_eq!(s.n_dofs(), 1);
        let k = s.assemble_stiffness_fn(|_| 1.0);
        assert!((k.get(0, 0) - 4.0).abs() < 1e-14);
        let b = s.assemble_load(|_| 1.0);
        assert!((b[0] - 0.5).abs() < 1e-14);
        let z = s.assemble_stiffness_fn(|_| 0.0);
        assert_eq!(z.get(0, 0), 0.0);
    }

    #[test]
    fn stiffness_is_linear_and_symmetric() {
        let s = FemSpace::reference(2, 3, 2).unwrap();
        let a = s.assemble_stiffness_fn(|x| 1.0 + x[0] * x[0]);
        let b = s.assemble_stiffness_fn(|x| (x[1]).exp());
        let ab = s.assemble_stiffness_fn(|x| 1.0 + x[0] * x[0] + (x[1]).exp());
        assert!(a.asymmetry() < 1e-14);
        for i in 0..s.n_dofs() {
            for j in 0..s.n_dofs() {
                assert!((a.get(i, j) + b.get(i, j) - ab.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn norms_of_a_quadratic() {
        let s = FemSpace::new(Domain::unit(1), &[8], 2).unwrap();
        let u = s.interpolate(|x| x[0] * (1.0 - x[0]));
        assert!((s.h1_seminorm_sq(&u) - 1.0 / 3.0).abs() < 1e-13);
        assert!((s.l2_norm_sq(&u) - 1.0 / 30.0).abs() < 1e-13);
        assert!((s.evaluate(&u, &[0.3]) - 0.21).abs() < 1e-14);
        assert_eq!(s.h1_seminorm(&vec![0.0; s.n_dofs()]), 0.0);
    }

    #[test]
    fn flux_divergence_matches_stiffness() {
        let s = FemSpace::reference(2, 3, 2).unwrap();
        let c = s.eval_at_qps(|x| 2.0 + x[0] * x[1]);
        let k = s.assemble_stiffness(&c);
        let u: Vec<f64> = (0..s.n_dofs()).map(|i| (i as f64).cos()).collect();
        let mut flux = s.gradients_at_qps(&u);
        for (q, c) in c.iter().enumerate() {
            flux[2 * q] *= c;
            flux[2 * q + 1] *= c;
        }
        let mut r = vec![0.0; s.n_dofs()];
        s.add_flux_divergence(&flux, &mut r);
        let ku = k.matvec(&u);
        for (a, b) in r.iter().zip(&ku) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn line_slice_covers_all_nodes() {
        let s = FemSpace::reference(2, 4, 2).unwrap();
        let u = s.interpolate(|x| (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1]));
        let slice = s.line_slice(&u, 0.0);
        assert_eq!(slice.len(), 9);
        assert!((slice[4].1 - 1.0).abs() < 1e-14);
        assert_eq!(slice[0].1, 0.0);
    }
}
