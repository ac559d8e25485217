//! Nyström discretization of the single-layer operator `𝕊`, the
//! Neumann–Poincaré operator `𝕂*` and its adjoint `𝕂` on multi-component
//! meshes, off-boundary evaluation of single-layer potentials, the energy
//! Gram matrix and rigid-motion projections.
//!
//! Self-interaction blocks split the kernel per component: the logarithmic
//! part of `Γ` is integrated with the trigonometric log-quadrature weights
//! `R_j(t)`, and the Cauchy part of the traction kernel is applied as an exact
//! periodic Hilbert transform on trigonometric polynomials of degree `< N/2`.
//! Remainders and all cross-component blocks use the trapezoid rule.

use std::f64::consts::PI;

use faer::Mat;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryMesh, Component, Vec2};
use crate::kernels::{gamma, rigid_rows, stokes_pressure, traction_kernel, Coefficients, Family, KernelSpec, SourceCorrection};
use crate::linalg::{self, Lu};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    STrace,
    Kstar,
    K,
    DtnExt,
    DtnInt,
    Gram,
}

/// Dense operator between DOF vectors of meshes.
#[derive(Clone, Debug)]
pub struct BoundaryOperator {
    pub matrix: Mat<f64>,
    pub domain: u64,
    pub codomain: u64,
    pub role: Role,
    pub spec: KernelSpec,
}

impl BoundaryOperator {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        linalg::matvec(&self.matrix, x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldRole {
    Density,
    Trace,
}

/// Node values (interleaved components) on a mesh.
#[derive(Clone, Debug)]
pub struct DensityField {
    pub mesh: u64,
    pub values: Vec<f64>,
    pub role: FieldRole,
}

/// Trigonometric log-quadrature weight: `∫₀^{2π} log(4 sin²((t−s)/2)) f(s) ds ≈ Σ_j R(t − t_j) f(t_j)`.
pub(crate) fn log_weight(n: usize, theta: f64) -> f64 {
    let h = n / 2;
    let mut s = 0.0;
    for m in 1..h {
        s += (m as f64 * theta).cos() / m as f64;
    }
    -4.0 * PI / n as f64 * s - 4.0 * PI / (n * n) as f64 * (h as f64 * theta).cos()
}

/// Periodic Hilbert weight: `p.v.∫₀^{2π} ½cot((s−t)/2) f(s) ds ≈ Σ_j Q(t − t_j) f(t_j)`.
pub(crate) fn hilbert_weight(n: usize, theta: f64) -> f64 {
    let mut s = 0.0;
    for m in 1..n / 2 {
        s += (m as f64 * theta).sin();
    }
    -2.0 * PI / n as f64 * s
}

fn put(out: &mut Mat<f64>, row: usize, col: usize, m: &[[f64; 2]; 2], scale: f64) {
    for a in 0..2 {
        for b in 0..2 {
            out[(row + a, col + b)] = scale * m[a][b];
        }
    }
}

fn diff(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

/// Self block of `𝕊` on one component (`2N × 2N`).
fn self_single_layer(comp: &Component, c: &Coefficients) -> Mat<f64> {
    let n = comp.n;
    let mut out = Mat::<f64>::zeros(2 * n, 2 * n);
    let h = 2.0 * PI / n as f64;
    let log_w: Vec<f64> = (0..n).map(|d| log_weight(n, 2.0 * PI * d as f64 / n as f64)).collect();
    for i in 0..n {
        for j in 0..n {
            let v = comp.speeds[j];
            let rw = c.c1 / (4.0 * PI) * log_w[(i + n - j) % n] * v;
            let mut hm = if i == j {
                let tau = [comp.tangents[j][0] / v, comp.tangents[j][1] / v];
                let lg = c.c1 / (2.0 * PI) * v.ln();
                let k = c.c2 / (2.0 * PI);
                [[lg - k * tau[0] * tau[0], -k * tau[0] * tau[1]], [-k * tau[1] * tau[0], lg - k * tau[1] * tau[1]]]
            } else {
                let g = gamma(c, diff(comp.nodes[i], comp.nodes[j]));
                let s2 = (0.5 * (comp.t[i] - comp.t[j])).sin();
                let l = c.c1 / (4.0 * PI) * (4.0 * s2 * s2).ln();
                [[g[0][0] - l, g[0][1]], [g[1][0], g[1][1] - l]]
            };
            for row in hm.iter_mut() {
                for e in row.iter_mut() {
                    *e *= h * v;
                }
            }
            hm[0][0] += rw;
            hm[1][1] += rw;
            put(&mut out, 2 * i, 2 * j, &hm, 1.0);
        }
    }
    out
}

/// Self block of `𝕂*` on one component (`2N × 2N`).
fn self_np(comp: &Component, c: &Coefficients) -> Mat<f64> {
    let n = comp.n;
    let mut out = Mat::<f64>::zeros(2 * n, 2 * n);
    let h = 2.0 * PI / n as f64;
    let k = c.kappa / (2.0 * PI);
    let q: Vec<f64> = (0..n).map(|d| hilbert_weight(n, 2.0 * PI * d as f64 / n as f64)).collect();
    for i in 0..n {
        let nrm = comp.normals[i];
        for j in 0..n {
            let l = if i == j {
                let (d1, d2) = (comp.tangents[i], comp.second[i]);
                let v = comp.speeds[i];
                let tau = [d1[0] / v, d1[1] / v];
                let curv = -(d2[0] * nrm[0] + d2[1] * nrm[1]) / (2.0 * v);
                let rot = (d1[0] * d2[0] + d1[1] * d2[1]) / (2.0 * v * v);
                let mut m = [[0.0; 2]; 2];
                for a in 0..2 {
                    for b in 0..2 {
                        let delta = if a == b { 1.0 } else { 0.0 };
                        let jab = [[0.0, 1.0], [-1.0, 0.0]][a][b];
                        m[a][b] = (c.kappa * delta * curv
                            + c.kappa * jab * rot
                            + 2.0 * (1.0 - c.kappa) * tau[a] * tau[b] * curv)
                            / (2.0 * PI);
                    }
                }
                m
            } else {
                let t = traction_kernel(c, diff(comp.nodes[i], comp.nodes[j]), nrm);
                let v = comp.speeds[j];
                let cot = 0.5 / (0.5 * (comp.t[j] - comp.t[i])).tan();
                [[t[0][0] * v, t[0][1] * v - k * cot], [t[1][0] * v + k * cot, t[1][1] * v]]
            };
            let qij = q[(i + n - j) % n];
            let m = [[h * l[0][0], h * l[0][1] + k * qij], [h * l[1][0] - k * qij, h * l[1][1]]];
            put(&mut out, 2 * i, 2 * j, &m, 1.0);
        }
    }
    out
}

fn assemble_free(mesh: &BoundaryMesh, c: &Coefficients, np: bool) -> Mat<f64> {
    let dof = mesh.dof();
    let mut out = Mat::<f64>::zeros(dof, dof);
    for ct in &mesh.components {
        for cs in &mesh.components {
            if ct.offset == cs.offset {
                let b = if np { self_np(ct, c) } else { self_single_layer(ct, c) };
                out.submatrix_mut(2 * ct.offset, 2 * ct.offset, 2 * ct.n, 2 * ct.n).copy_from(&b);
                continue;
            }
            for i in 0..ct.n {
                for j in 0..cs.n {
                    let r = diff(ct.nodes[i], cs.nodes[j]);
                    let m = if np { traction_kernel(c, r, ct.normals[i]) } else { gamma(c, r) };
                    put(&mut out, 2 * (ct.offset + i), 2 * (cs.offset + j), &m, cs.weights[j]);
                }
            }
        }
    }
    out
}

pub(crate) fn free_single_layer(mesh: &BoundaryMesh, c: &Coefficients) -> Mat<f64> {
    assemble_free(mesh, c, false)
}

pub(crate) fn free_np(mesh: &BoundaryMesh, c: &Coefficients) -> Mat<f64> {
    assemble_free(mesh, c, true)
}

/// A mesh paired with a kernel, holding the outer-curve correction of every
/// source node when the kernel is corrected.
pub struct Layer<'a> {
    pub mesh: &'a BoundaryMesh,
    pub spec: KernelSpec,
    correction: Option<SourceCorrection>,
}

impl<'a> Layer<'a> {
    pub fn new(mesh: &'a BoundaryMesh, spec: &KernelSpec) -> Result<Self> {
        spec.family.validate()?;
        let correction = match &spec.correction {
            None => None,
            Some(op) => {
                if op.outer.id == mesh.id {
                    return Err(Error::MeshMismatch("inclusion mesh coincides with the outer mesh".into()));
                }
                for c in &mesh.components {
                    if let Some(p) = c.nodes.iter().find(|p| !op.outer_contains(**p)) {
                        return Err(Error::MeshMismatch(format!("node {p:?} lies outside the outer curve")));
                    }
                }
                let nodes: Vec<Vec2> = mesh.nodes().copied().collect();
                Some(op.solve_sources(&nodes)?)
            }
        };
        Ok(Layer { mesh, spec: spec.clone(), correction })
    }

    fn source_weights(&self) -> Vec<f64> {
        self.mesh.dof_weights()
    }

    fn nodes(&self) -> Vec<Vec2> {
        self.mesh.nodes().copied().collect()
    }

    /// Matrix of `𝕊` (trace of `𝒮φ` at the nodes).
    pub fn single_layer(&self) -> Result<Mat<f64>> {
        let mut s = free_single_layer(self.mesh, &self.spec.coefficients());
        if let (Some(op), Some(corr)) = (&self.spec.correction, &self.correction) {
            let mut r = op.field(corr, &self.nodes())?;
            linalg::scale_cols(&mut r, &self.source_weights());
            s += &r;
        }
        Ok(s)
    }

    /// Matrix of `𝕂*`.
    pub fn np(&self) -> Result<Mat<f64>> {
        let mut k = free_np(self.mesh, &self.spec.coefficients());
        if let (Some(op), Some(corr)) = (&self.spec.correction, &self.correction) {
            let normals: Vec<Vec2> = self.mesh.normals().copied().collect();
            let mut r = op.traction(corr, &self.nodes(), &normals)?;
            linalg::scale_cols(&mut r, &self.source_weights());
            k += &r;
        }
        Ok(k)
    }

    fn check_points(&self, points: &[Vec2]) -> Result<()> {
        for p in points {
            let (d, h) = self.mesh.nearest(*p);
            if d < 5.0 * h {
                return Err(Error::NearBoundary { distance: d, limit: 5.0 * h });
            }
            if let Some(op) = &self.spec.correction {
                let (d, h) = op.outer.nearest(*p);
                if d < 5.0 * h || !op.outer_contains(*p) {
                    return Err(Error::NearBoundary { distance: d, limit: 5.0 * h });
                }
            }
        }
        Ok(())
    }

    fn weighted(&self, density: &[f64]) -> Result<Vec<f64>> {
        if density.len() != self.mesh.dof() {
            return Err(Error::MeshMismatch(format!("density has {} values, mesh has {} DOFs", density.len(), self.mesh.dof())));
        }
        Ok(density.iter().zip(self.source_weights()).map(|(p, w)| p * w).collect())
    }

    /// `𝒮φ` at off-boundary points by trapezoid quadrature.
    pub fn eval(&self, density: &[f64], points: &[Vec2]) -> Result<Vec<Vec2>> {
        self.check_points(points)?;
        let wphi = self.weighted(density)?;
        let c = self.spec.coefficients();
        let mut out: Vec<Vec2> = points
            .iter()
            .map(|x| {
                let mut u = [0.0; 2];
                for (j, z) in self.mesh.nodes().enumerate() {
                    let g = gamma(&c, diff(*x, *z));
                    for a in 0..2 {
                        u[a] += g[a][0] * wphi[2 * j] + g[a][1] * wphi[2 * j + 1];
                    }
                }
                u
            })
            .collect();
        if let (Some(op), Some(corr)) = (&self.spec.correction, &self.correction) {
            let r = linalg::matvec(&op.field(corr, points)?, &wphi);
            for (i, u) in out.iter_mut().enumerate() {
                u[0] += r[2 * i];
                u[1] += r[2 * i + 1];
            }
        }
        Ok(out)
    }

    /// Traction of `𝒮φ` (with the kernel's own moduli) at off-boundary points for given normals.
    pub fn eval_traction(&self, density: &[f64], points: &[Vec2], normals: &[Vec2]) -> Result<Vec<Vec2>> {
        self.check_points(points)?;
        let wphi = self.weighted(density)?;
        let c = self.spec.coefficients();
        let mut out: Vec<Vec2> = points
            .iter()
            .zip(normals)
            .map(|(x, n)| {
                let mut t = [0.0; 2];
                for (j, z) in self.mesh.nodes().enumerate() {
                    let k = traction_kernel(&c, diff(*x, *z), *n);
                    for a in 0..2 {
                        t[a] += k[a][0] * wphi[2 * j] + k[a][1] * wphi[2 * j + 1];
                    }
                }
                t
            })
            .collect();
        if let (Some(op), Some(corr)) = (&self.spec.correction, &self.correction) {
            let r = linalg::matvec(&op.traction(corr, points, normals)?, &wphi);
            for (i, t) in out.iter_mut().enumerate() {
                t[0] += r[2 * i];
                t[1] += r[2 * i + 1];
            }
        }
        Ok(out)
    }

    /// Pressure `𝒫φ` of a free-space Stokes single layer at off-boundary points.
    pub fn eval_pressure(&self, density: &[f64], points: &[Vec2]) -> Result<Vec<f64>> {
        if !matches!(self.spec.family, Family::Stokes { .. }) || self.spec.correction.is_some() {
            return Err(Error::Invalid("pressure is defined for free-space Stokes kernels only".into()));
        }
        self.check_points(points)?;
        let wphi = self.weighted(density)?;
        Ok(points
            .iter()
            .map(|x| {
                self.mesh
                    .nodes()
                    .enumerate()
                    .map(|(j, z)| {
                        let q = stokes_pressure(diff(*x, *z));
                        q[0] * wphi[2 * j] + q[1] * wphi[2 * j + 1]
                    })
                    .sum()
            })
            .collect())
    }

    /// Trace of `𝒮φ` at the outer-curve nodes (corrected kernels only).
    pub fn outer_trace(&self, density: &[f64]) -> Result<Vec<f64>> {
        let (op, corr) = match (&self.spec.correction, &self.correction) {
            (Some(op), Some(corr)) => (op, corr),
            _ => return Err(Error::Invalid("outer trace requires a corrected kernel".into())),
        };
        let wphi = self.weighted(density)?;
        let c = self.spec.coefficients();
        let outer = &op.outer.components[0];
        let mut u = vec![0.0; op.outer.dof()];
        for (i, x) in outer.nodes.iter().enumerate() {
            for (j, z) in self.mesh.nodes().enumerate() {
                let g = gamma(&c, diff(*x, *z));
                for a in 0..2 {
                    u[2 * i + a] += g[a][0] * wphi[2 * j] + g[a][1] * wphi[2 * j + 1];
                }
            }
        }
        let r = linalg::matvec(&op.outer_trace(corr), &wphi);
        Ok(u.iter().zip(r).map(|(a, b)| a + b).collect())
    }
}

#[allow(non_snake_case)]
pub fn assemble_S(mesh: &BoundaryMesh, spec: &KernelSpec) -> Result<BoundaryOperator> {
    let matrix = Layer::new(mesh, spec)?.single_layer()?;
    Ok(BoundaryOperator { matrix, domain: mesh.id, codomain: mesh.id, role: Role::STrace, spec: spec.clone() })
}

#[allow(non_snake_case)]
pub fn assemble_Kstar(mesh: &BoundaryMesh, spec: &KernelSpec) -> Result<BoundaryOperator> {
    let matrix = Layer::new(mesh, spec)?.np()?;
    Ok(BoundaryOperator { matrix, domain: mesh.id, codomain: mesh.id, role: Role::Kstar, spec: spec.clone() })
}

/// `𝕂 = W⁻¹ (𝕂*)ᵀ W`, the adjoint in the weighted L² pairing.
#[allow(non_snake_case)]
pub fn assemble_K(mesh: &BoundaryMesh, spec: &KernelSpec) -> Result<BoundaryOperator> {
    let kstar = assemble_Kstar(mesh, spec)?;
    let w = mesh.dof_weights();
    let mut k = linalg::transpose(&kstar.matrix);
    linalg::scale_rows(&mut k, &w.iter().map(|x| 1.0 / x).collect::<Vec<_>>());
    linalg::scale_cols(&mut k, &w);
    Ok(BoundaryOperator { matrix: k, role: Role::K, ..kstar })
}

/// Values of `𝒮φ` at off-boundary points.
pub fn eval_potential(mesh: &BoundaryMesh, density: &[f64], spec: &KernelSpec, points: &[Vec2]) -> Result<Vec<Vec2>> {
    Layer::new(mesh, spec)?.eval(density, points)
}

/// `sym(−W S)`, with a positive-definiteness check.
pub fn gram_from_single_layer(s: &Mat<f64>, weights: &[f64]) -> Result<Mat<f64>> {
    let mut g = s * -1.0;
    linalg::scale_rows(&mut g, weights);
    let g = linalg::symmetrize(&g);
    if linalg::cholesky(&g, "").is_err() {
        let ev = linalg::sym_eigenvalues(&g)?;
        return Err(Error::Indefinite(format!(
            "smallest eigenvalue {:.3e}, largest {:.3e}",
            ev[0],
            ev[ev.len() - 1]
        )));
    }
    Ok(g)
}

/// Energy Gram matrix `(φ,ψ)_{𝕊} = −φᵀ W S ψ`.
#[allow(non_snake_case)]
pub fn gram_SN(mesh: &BoundaryMesh, spec: &KernelSpec) -> Result<BoundaryOperator> {
    let s = assemble_S(mesh, spec)?;
    let matrix = gram_from_single_layer(&s.matrix, &mesh.dof_weights())?;
    Ok(BoundaryOperator { matrix, role: Role::Gram, ..s })
}

/// Per-component rigid motions centered at component centroids.
#[derive(Clone, Debug)]
pub struct RigidMotionBasis {
    pub mesh: u64,
    pub centers: Vec<Vec2>,
    /// `2N_i × 3` samples per component.
    pub fields: Vec<Mat<f64>>,
    /// `3 × 3` L² Gram matrices per component.
    pub grams: Vec<Mat<f64>>,
    offsets: Vec<usize>,
    weights: Vec<Vec<f64>>,
    gram_inv: Vec<Mat<f64>>,
}

pub fn rigid_basis(mesh: &BoundaryMesh) -> RigidMotionBasis {
    let mut b = RigidMotionBasis {
        mesh: mesh.id,
        centers: vec![],
        fields: vec![],
        grams: vec![],
        offsets: vec![],
        weights: vec![],
        gram_inv: vec![],
    };
    for c in &mesh.components {
        let center = c.centroid();
        let r = rigid_rows(&c.nodes, center);
        let w: Vec<f64> = c.weights.iter().flat_map(|&x| [x, x]).collect();
        let mut wr = r.clone();
        linalg::scale_rows(&mut wr, &w);
        let g = wr.transpose() * &r;
        let inv = Lu::new(&g, "rigid Gram").expect("rigid Gram of a closed curve is definite").inverse();
        b.centers.push(center);
        b.fields.push(r);
        b.grams.push(g);
        b.offsets.push(2 * c.offset);
        b.weights.push(w);
        b.gram_inv.push(inv);
    }
    b
}

impl RigidMotionBasis {
    pub fn num_components(&self) -> usize {
        self.fields.len()
    }

    /// Block-diagonal `dof × 3n_c` basis matrix.
    pub fn matrix(&self) -> Mat<f64> {
        let dof = self.offsets.last().map(|o| o + self.fields.last().unwrap().nrows()).unwrap_or(0);
        let mut m = Mat::<f64>::zeros(dof, 3 * self.fields.len());
        for (c, f) in self.fields.iter().enumerate() {
            m.submatrix_mut(self.offsets[c], 3 * c, f.nrows(), 3).copy_from(f);
        }
        m
    }

    /// Moments `∫_{∂D_i} φ·𝐫_j` per component (length `3n_c`).
    pub fn moments(&self, phi: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.fields.len());
        for (c, f) in self.fields.iter().enumerate() {
            for j in 0..3 {
                let mut s = 0.0;
                for d in 0..f.nrows() {
                    s += f[(d, j)] * self.weights[c][d] * phi[self.offsets[c] + d];
                }
                out.push(s);
            }
        }
        out
    }

    /// Coefficients of the per-component L² projection onto rigid motions.
    pub fn coefficients(&self, trace: &[f64]) -> Vec<f64> {
        let m = self.moments(trace);
        let mut out = Vec::with_capacity(m.len());
        for c in 0..self.fields.len() {
            let g = &self.gram_inv[c];
            for i in 0..3 {
                out.push((0..3).map(|j| g[(i, j)] * m[3 * c + j]).sum());
            }
        }
        out
    }

    /// Rigid field with the given coefficients.
    pub fn synthesize(&self, coef: &[f64]) -> Vec<f64> {
        let dof = self.offsets.last().map(|o| o + self.fields.last().unwrap().nrows()).unwrap_or(0);
        let mut out = vec![0.0; dof];
        for (c, f) in self.fields.iter().enumerate() {
            for d in 0..f.nrows() {
                out[self.offsets[c] + d] = (0..3).map(|j| f[(d, j)] * coef[3 * c + j]).sum();
            }
        }
        out
    }
}

/// Removes the per-component rigid moments of a density.
pub fn project_rigid_orthogonal(basis: &RigidMotionBasis, phi: &[f64]) -> Vec<f64> {
    let r = basis.synthesize(&basis.coefficients(phi));
    phi.iter().zip(r).map(|(a, b)| a - b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_curve, mesh_curve, CurveSpec};
    use crate::kernels::LamePair;
    use crate::quadrature;

    fn circle(r: f64) -> crate::geometry::ClosedCurve {
        make_curve(CurveSpec::Circle { center: [0.0, 0.0], radius: r }).unwrap()
    }

    fn lame() -> Family {
        Family::Lame(LamePair { lambda: 1.0, mu: 1.0 })
    }

    #[test]
    fn log_weights_integrate_trig_modes() {
        let n = 32;
        for m in 0..n / 2 {
            let exact = if m == 0 { 0.0 } else { -2.0 * PI / m as f64 };
            let t = 0.3;
            let approx: f64 = (0..n)
                .map(|j| {
                    let s = 2.0 * PI * j as f64 / n as f64;
                    log_weight(n, t - s) * (m as f64 * s).cos()
                })
                .sum();
            assert!((approx - exact * (m as f64 * t).cos()).abs() < 1e-12, "mode {m}");
        }
    }

    #[test]
    fn hilbert_weights_are_exact_below_nyquist() {
        let n = 32;
        let t = 2.0 * PI * 5.0 / n as f64;
        for m in 1..n / 2 {
            let approx: f64 = (0..n)
                .map(|j| {
                    let s = 2.0 * PI * j as f64 / n as f64;
                    hilbert_weight(n, t - s) * (m as f64 * s).sin()
                })
                .sum();
            assert!((approx - PI * (m as f64 * t).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_density_single_layer_matches_adaptive_quadrature() {
        let c = circle(1.0);
        let mesh = mesh_curve(&c, 128).unwrap();
        let spec = KernelSpec::free(lame());
        let s = assemble_S(&mesh, &spec).unwrap();
        let phi: Vec<f64> = (0..128).flat_map(|_| [1.0, 0.0]).collect();
        let u = s.apply(&phi);
        let coef = lame().coefficients();
        let i = 7;
        let t = mesh.components[0].t[i];
        let f = |s: f64| {
            let h = 2.0 * (0.5 * (t - s)).sin();
            let g = gamma(&coef, [-h * (0.5 * (t + s)).sin(), h * (0.5 * (t + s)).cos()]);
            [g[0][0], g[1][0]]
        };
        let a = quadrature::integrate(f, t, t + 2.0 * PI, 1e-14);
        assert!((u[2 * i] - a[0]).abs() < 1e-8 * a[0].abs().max(1e-3));
        assert!((u[2 * i + 1] - a[1]).abs() < 1e-8 * a[0].abs().max(1e-3));
    }

    #[test]
    fn single_layer_converges_spectrally() {
        let e = make_curve(CurveSpec::Ellipse { center: [0.0, 0.0], a: 1.0, b: 0.6, angle: 0.2 }).unwrap();
        let spec = KernelSpec::free(lame());
        let mut vals = vec![];
        for n in [128usize, 256] {
            let mesh = mesh_curve(&e, n).unwrap();
            let phi: Vec<f64> = mesh.components[0].t.iter().flat_map(|t| [t.cos() + 0.5, (2.0 * t).sin()]).collect();
            let u = assemble_S(&mesh, &spec).unwrap().apply(&phi);
            let stride = n / 128;
            vals.push((0..128).flat_map(|i| [u[2 * i * stride], u[2 * i * stride + 1]]).collect::<Vec<_>>());
        }
        let d = vals[0].iter().zip(&vals[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-10, "{d}");
    }

    #[test]
    fn np_diagonal_limit_matches_nearby_entries() {
        let k = make_curve(CurveSpec::Kite { center: [0.0, 0.0], scale: 1.0, a: 0.65, b: 1.5, c: 0.0 }).unwrap();
        let coef = lame().coefficients();
        let n = 4096;
        let mesh = mesh_curve(&k, n).unwrap();
        let comp = &mesh.components[0];
        let block = self_np(comp, &coef);
        let h = 2.0 * PI / n as f64;
        let i = 700;
        let qd = hilbert_weight(n, 0.0);
        let ql = hilbert_weight(n, h);
        let qr = hilbert_weight(n, -h);
        let kk = coef.kappa / (2.0 * PI);
        for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let sgn = if (a, b) == (0, 1) { 1.0 } else if (a, b) == (1, 0) { -1.0 } else { 0.0 };
            let diag = (block[(2 * i + a, 2 * i + b)] - sgn * kk * qd) / h;
            let left = (block[(2 * i + a, 2 * (i - 1) + b)] - sgn * kk * ql) / h;
            let right = (block[(2 * i + a, 2 * (i + 1) + b)] - sgn * kk * qr) / h;
            assert!((diag - 0.5 * (left + right)).abs() < 1e-3, "{a}{b}: {diag} vs {left} {right}");
        }
    }

    #[test]
    fn rigid_projection_is_idempotent() {
        let mesh = crate::geometry::BoundaryMesh::from_curves(&[circle(0.3), circle(0.3).transformed(1.0, [1.0, 0.0])], 32).unwrap();
        let b = rigid_basis(&mesh);
        let phi: Vec<f64> = (0..mesh.dof()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let p = project_rigid_orthogonal(&b, &phi);
        let pp = project_rigid_orthogonal(&b, &p);
        let nrm = linalg::dot(&phi, &phi).sqrt();
        assert!(b.moments(&p).iter().all(|m| m.abs() < 1e-12 * nrm));
        assert!(p.iter().zip(&pp).all(|(x, y)| (x - y).abs() < 1e-12 * nrm));
        let r = b.matrix();
        for j in 0..r.ncols() {
            let col: Vec<f64> = (0..r.nrows()).map(|i| r[(i, j)]).collect();
            assert!({ let p = project_rigid_orthogonal(&b, &col); linalg::dot(&p, &p).sqrt() } < 1e-12);
        }
    }

    #[test]
    fn zero_density_gives_zero_potential() {
        let mesh = mesh_curve(&circle(1.0), 128).unwrap();
        let u = eval_potential(&mesh, &vec![0.0; 256], &KernelSpec::free(lame()), &[[0.1, 0.2], [3.0, 1.0]]).unwrap();
        assert!(u.iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
        let r = eval_potential(&mesh, &vec![0.0; 256], &KernelSpec::free(lame()), &[[1.001, 0.0]]);
        assert!(matches!(r, Err(Error::NearBoundary { .. })));
    }
}
