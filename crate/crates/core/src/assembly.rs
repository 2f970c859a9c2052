//! Assembly of the nodal FEM operators on the structured mesh.
//!
//! For P1 elements with basis functions `phi_i` and control basis `psi_k`
//! the operator set holds, per actuator side `a` and basis index `k`:
//!
//! * mass `M_ij = int phi_j phi_i`
//! * diffusion `A_ij = int mu grad phi_j . grad phi_i`
//! * transport `B_{a,k,ij} = int psi_k g_a dphi_j/dx_d phi_i` over the
//!   domain, where `g_a` is the side's decay profile and `d` its normal
//!   axis,
//! * reaction `C_{a,k,ij} = int psi_k (dg_a/dx_d) phi_j phi_i`,
//! * boundary flux `L_{a,k,ij} = -int_Gamma psi_k g_a phi_j phi_i n_d`.
//!
//! Integration by parts gives `B + B^T + C + L = 0` per side and index;
//! with non-polynomial weights the identity holds to quadrature accuracy
//! and is monitored by the diagnostics. All matrices share one sparsity
//! pattern (node adjacency), so control-dependent combinations reduce to
//! axpy over value arrays.

use crate::actuation::{ActuatorModel, ControlBasis};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Side};
use crate::quadrature::{EdgeRule, TriangleRule};
use crate::sparse::CsrMatrix;

/// Nodal coefficients of a probability density in the P1 basis.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    pub nodal: Vec<f64>,
}

/// All control-independent matrices plus the model data they were built
/// from. Immutable after assembly; safe to share across threads.
#[derive(Clone, Debug)]
pub struct OperatorSet {
    pub mesh: Mesh,
    pub mu: f64,
    pub quad_order: usize,
    pub basis: ControlBasis,
    pub model: ActuatorModel,
    pub mass: CsrMatrix,
    pub diffusion: CsrMatrix,
    /// Transport matrices B, indexed by `family_index`.
    pub transport: Vec<CsrMatrix>,
    /// Reaction matrices C.
    pub reaction: Vec<CsrMatrix>,
    /// Boundary flux matrices L.
    pub boundary_flux: Vec<CsrMatrix>,
    /// Precomputed B + C + L per family; the building block of the
    /// control coupling.
    pub coupling: Vec<CsrMatrix>,
    /// M * 1: the integral of each nodal basis function.
    pub integral_weights: Vec<f64>,
    /// Half bandwidth of every matrix in the set.
    pub bandwidth: usize,
}

impl OperatorSet {
    pub fn n_nodes(&self) -> usize {
        self.mesh.n_nodes()
    }

    pub fn n_basis(&self) -> usize {
        self.basis.n_basis()
    }

    /// Storage index of family (side, k) with 0-based basis index k.
    pub fn family_index(&self, side: Side, k: usize) -> usize {
        side.index() * self.n_basis() + k
    }

    /// Integral of the P1 function with the given nodal coefficients.
    pub fn integral(&self, nodal: &[f64]) -> f64 {
        self.integral_weights
            .iter()
            .zip(nodal)
            .map(|(w, q)| w * q)
            .sum()
    }

    /// Squared L2 norm q^T M q.
    pub fn l2_norm_sq(&self, nodal: &[f64]) -> f64 {
        self.mass.bilinear(nodal, nodal)
    }

    /// Squared H1 seminorm q^T (A / mu) q.
    pub fn h1_seminorm_sq(&self, nodal: &[f64]) -> f64 {
        self.diffusion.bilinear(nodal, nodal) / self.mu
    }

    pub fn h1_norm_sq(&self, nodal: &[f64]) -> f64 {
        self.l2_norm_sq(nodal) + self.h1_seminorm_sq(nodal)
    }

    /// Interpolate a pointwise density onto the mesh and rescale it to
    /// unit mass under the mass matrix.
    pub fn project_density(&self, f: impl Fn([f64; 2]) -> f64) -> Result<DensityField> {
        project_density(&self.mesh, &self.integral_weights, f)
    }
}

/// Nodal interpolation followed by mass rescaling. Cheaper than an L2
/// projection and preserves nonnegativity of nonnegative data.
pub fn project_density(
    mesh: &Mesh,
    integral_weights: &[f64],
    f: impl Fn([f64; 2]) -> f64,
) -> Result<DensityField> {
    let nodal: Vec<f64> = mesh.nodes.iter().map(|&p| f(p)).collect();
    let mass: f64 = integral_weights.iter().zip(&nodal).map(|(w, q)| w * q).sum();
    if !(mass.is_finite() && mass > 1e-300) {
        return Err(Error::DegenerateDensity);
    }
    Ok(DensityField {
        nodal: nodal.into_iter().map(|q| q / mass).collect(),
    })
}

/// Node-adjacency sparsity pattern (nodes sharing a triangle, plus the
/// diagonal).
fn adjacency_pattern(mesh: &Mesh) -> CsrMatrix {
    let n = mesh.n_nodes();
    let mut neighbors: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for tri in &mesh.triangles {
        for &i in tri {
            for &j in tri {
                neighbors[i].push(j);
            }
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    row_ptr.push(0);
    for row in &mut neighbors {
        row.sort_unstable();
        row.dedup();
        col_idx.extend_from_slice(row);
        row_ptr.push(col_idx.len());
    }
    CsrMatrix::from_pattern(n, n, row_ptr, col_idx)
}

/// Assemble the full operator set with one shared volume rule and one
/// shared edge rule of the given order.
pub fn assemble_operators(
    mesh: &Mesh,
    basis: &ControlBasis,
    model: &ActuatorModel,
    mu: f64,
    quad_order: usize,
) -> Result<OperatorSet> {
    if mu <= 0.0 {
        return Err(Error::NonPositiveDiffusion(mu));
    }
    let volume_rule = TriangleRule::with_order(quad_order)?;
    let edge_rule = EdgeRule::with_order(quad_order)?;
    let nb = basis.n_basis();
    let pattern = adjacency_pattern(mesh);

    let mut mass = pattern.zeros_like();
    let mut diffusion = pattern.zeros_like();
    let mut transport: Vec<CsrMatrix> = (0..4 * nb).map(|_| pattern.zeros_like()).collect();
    let mut reaction: Vec<CsrMatrix> = (0..4 * nb).map(|_| pattern.zeros_like()).collect();
    let mut boundary_flux: Vec<CsrMatrix> = (0..4 * nb).map(|_| pattern.zeros_like()).collect();

    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangles[t];
        let p0 = mesh.nodes[tri[0]];
        let p1 = mesh.nodes[tri[1]];
        let p2 = mesh.nodes[tri[2]];
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let area = 0.5 * det;
        // gradients of the barycentric coordinates
        let g1 = [(p2[1] - p0[1]) / det, -(p2[0] - p0[0]) / det];
        let g2 = [-(p1[1] - p0[1]) / det, (p1[0] - p0[0]) / det];
        let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
        let grads = [g0, g1, g2];

        for (lam, &w) in volume_rule.points.iter().zip(&volume_rule.weights) {
            let x = [
                lam[0] * p0[0] + lam[1] * p1[0] + lam[2] * p2[0],
                lam[0] * p0[1] + lam[1] * p1[1] + lam[2] * p2[1],
            ];
            let ww = w * area;
            for i in 0..3 {
                for j in 0..3 {
                    mass.add_at(tri[i], tri[j], ww * lam[i] * lam[j]);
                    diffusion.add_at(
                        tri[i],
                        tri[j],
                        ww * mu * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]),
                    );
                }
            }
            // psi_k along each axis, reused by the two side pairs
            for side in Side::ALL {
                let prof = model.profile(side, x);
                let dprof = model.profile_derivative(side, x);
                let s = x[side.tangent_axis()];
                let axis = side.axis();
                for k in 0..nb {
                    let fam = side.index() * nb + k;
                    let psi = basis.eval(k, s);
                    for i in 0..3 {
                        for j in 0..3 {
                            transport[fam].add_at(
                                tri[i],
                                tri[j],
                                ww * psi * prof * grads[j][axis] * lam[i],
                            );
                            reaction[fam].add_at(tri[i], tri[j], ww * psi * dprof * lam[i] * lam[j]);
                        }
                    }
                }
            }
        }
    }

    for edge in &mesh.boundary_edges {
        let pa = mesh.nodes[edge.nodes[0]];
        let pb = mesh.nodes[edge.nodes[1]];
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        for (&t, &w) in edge_rule.points.iter().zip(&edge_rule.weights) {
            let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
            let phis = [1.0 - t, t];
            for side in Side::ALL {
                // the flux integrand carries n_d with d = the family's
                // normal axis; it vanishes on edges orthogonal to it
                if side.axis() != edge.side.axis() {
                    continue;
                }
                let n_comp = edge.side.normal_sign();
                let prof = model.profile(side, x);
                let s = x[side.tangent_axis()];
                for k in 0..nb {
                    let fam = side.index() * nb + k;
                    let psi = basis.eval(k, s);
                    for i in 0..2 {
                        for j in 0..2 {
                            boundary_flux[fam].add_at(
                                edge.nodes[i],
                                edge.nodes[j],
                                -w * len * psi * prof * phis[j] * phis[i] * n_comp,
                            );
                        }
                    }
                }
            }
        }
    }

    let coupling: Vec<CsrMatrix> = (0..4 * nb)
        .map(|f| {
            CsrMatrix::linear_combination(&[
                (1.0, &transport[f]),
                (1.0, &reaction[f]),
                (1.0, &boundary_flux[f]),
            ])
            .expect("shared pattern")
        })
        .collect();
    let integral_weights = mass.row_sums();
    let bandwidth = mesh.bandwidth();

    Ok(OperatorSet {
        mesh: mesh.clone(),
        mu,
        quad_order,
        basis: basis.clone(),
        model: *model,
        mass,
        diffusion,
        transport,
        reaction,
        boundary_flux,
        coupling,
        integral_weights,
        bandwidth,
    })
}

/// Max-abs of B + B^T + C + L for one family; the integration-by-parts
/// residual that bounds how far the discrete operators are from the exact
/// divergence structure.
pub fn ibp_residual(ops: &OperatorSet, side: Side, k: usize) -> f64 {
    let fam = ops.family_index(side, k);
    let bt = ops.transport[fam].transpose();
    let mut worst: f64 = 0.0;
    for (i, j, v) in ops.transport[fam].iter() {
        let r = v + bt.get(i, j) + ops.reaction[fam].get(i, j) + ops.boundary_flux[fam].get(i, j);
        worst = worst.max(r.abs());
    }
    worst
}
