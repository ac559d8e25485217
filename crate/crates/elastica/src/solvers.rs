//! Dirichlet-to-Neumann maps and boundary-integral solvers for the
//! transmission problem and its three high-contrast limits.
//!
//! The exterior problem uses the Neumann-corrected kernel of the background
//! pair on the inclusion boundaries; every solution has the form
//! `u = 𝐆 + 𝒮ᴺφ` outside the inclusions, where `𝐆` is the affine background
//! field. Interior DtN maps are built per component from free-space kernels.

use std::sync::Arc;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryMesh, InclusionArray, Vec2};
use crate::kernels::{rigid_rows, Family, KernelSpec, LamePair, Mat2, Mode};
use crate::linalg::{self, Lu};
use crate::potentials::{free_np, free_single_layer, gram_from_single_layer, rigid_basis, BoundaryOperator, Layer, RigidMotionBasis, Role};

/// Affine background strain `u = A·x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    pub a: Mat2,
}

impl LoadSpec {
    pub fn new(a: Mat2) -> Result<Self> {
        if a.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("load matrix has non-finite entries".into()));
        }
        let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if (a[0][1] - a[1][0]).abs() > 1e-12 * scale.max(1e-300) {
            return Err(Error::Invalid(format!("load matrix must be symmetric, got {a:?}")));
        }
        Ok(LoadSpec { a })
    }

    pub fn zero() -> Self {
        LoadSpec { a: [[0.0; 2]; 2] }
    }

    /// Constant stress `λ tr A 𝕀 + 2μA`.
    pub fn stress(&self, pair: LamePair) -> Mat2 {
        let tr = self.a[0][0] + self.a[1][1];
        let mut s = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                s[i][j] = 2.0 * pair.mu * self.a[i][j] + if i == j { pair.lambda * tr } else { 0.0 };
            }
        }
        s
    }

    /// Traction `σ(A)·𝐍` at every node of a mesh.
    pub fn traction(&self, pair: LamePair, mesh: &BoundaryMesh) -> Vec<f64> {
        let s = self.stress(pair);
        mesh.normals().flat_map(|n| [s[0][0] * n[0] + s[0][1] * n[1], s[1][0] * n[0] + s[1][1] * n[1]]).collect()
    }
}

/// The background field `𝐆 = A·x − P_𝐑(A·x)`, with `P_𝐑` the L² projection
/// onto rigid motions on the outer curve.
#[derive(Clone, Debug)]
pub struct BackgroundTrace {
    pub load: LoadSpec,
    /// Trace of `𝐆` at the inclusion nodes.
    pub trace: Vec<f64>,
    /// Traction of `𝐆` at the inclusion nodes.
    pub traction: Vec<f64>,
    /// Removed rigid motion, about `center`.
    pub rigid: [f64; 3],
    pub center: Vec2,
}

impl BackgroundTrace {
    pub fn eval(&self, x: Vec2) -> Vec2 {
        let a = &self.load.a;
        let (dx, dy) = (x[0] - self.center[0], x[1] - self.center[1]);
        [
            a[0][0] * x[0] + a[0][1] * x[1] - self.rigid[0] - self.rigid[2] * dy,
            a[1][0] * x[0] + a[1][1] * x[1] - self.rigid[1] + self.rigid[2] * dx,
        ]
    }
}

pub fn background_trace(load: &LoadSpec, pair: LamePair, mesh: &BoundaryMesh, outer: &BoundaryMesh) -> BackgroundTrace {
    let comp = &outer.components[0];
    let center = comp.centroid();
    let basis = rigid_basis(outer);
    let ax: Vec<f64> = comp.nodes.iter().flat_map(|x| affine(&load.a, *x)).collect();
    let c = basis.coefficients(&ax);
    let shift = basis.centers[0];
    let mut out = BackgroundTrace { load: *load, trace: vec![], traction: load.traction(pair, mesh), rigid: [c[0], c[1], c[2]], center: shift };
    debug_assert!((center[0] - shift[0]).abs() + (center[1] - shift[1]).abs() < 1e-12);
    out.trace = mesh.nodes().flat_map(|x| out.eval(*x)).collect();
    out
}

fn affine(a: &Mat2, x: Vec2) -> [f64; 2] {
    [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]]
}

/// Trigonometric differentiation matrix on `n` equispaced parameter nodes.
fn diff_matrix(n: usize) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            let k = i as i64 - j as i64;
            let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            0.5 * sign / (std::f64::consts::PI * k as f64 / n as f64).tan()
        }
    })
}

/// Interior DtN block of one component, with the trace-to-density map and
/// (Stokes only) the trace-to-pressure map before normalization.
#[derive(Clone, Debug)]
pub struct InteriorBlock {
    pub dtn: Mat<f64>,
    pub density: Mat<f64>,
    pub pressure: Option<Mat<f64>>,
}

/// Interior DtN blocks for every component of `mesh`.
///
/// Lamé blocks are `(−½ + 𝕂̃*)𝕊̃⁻¹`, computed for `(λ̃/μ̃, 1)` and scaled by `μ̃`.
/// Stokes blocks solve `𝕊ψ + c𝐍 = h`, `∫ψ·𝐍 = 0`, take the traction
/// `(−½ + 𝕂*)ψ` and shift it by `−p̄𝐍`, where `p̄` is the node mean of the
/// pressure trace `p = 𝐍·t + 2μ τ·∂_τ h`.
pub fn interior_blocks(mesh: &BoundaryMesh, family: Family) -> Result<Vec<InteriorBlock>> {
    family.validate()?;
    mesh.components
        .iter()
        .enumerate()
        .map(|(c, _)| {
            let sub = mesh.component_mesh(c);
            match family {
                Family::Lame(p) => lame_block(&sub, p),
                Family::Stokes { mu } => stokes_block(&sub, mu),
            }
        })
        .collect()
}

fn lame_block(sub: &BoundaryMesh, pair: LamePair) -> Result<InteriorBlock> {
    let unit = Family::Lame(LamePair { lambda: pair.lambda / pair.mu, mu: 1.0 }).coefficients();
    let s = free_single_layer(sub, &unit);
    let mut k = free_np(sub, &unit);
    linalg::add_diagonal(&mut k, -0.5);
    let inv = Lu::new(&s, "interior single layer")?.inverse();
    Ok(InteriorBlock { dtn: (&k * &inv) * pair.mu, density: inv * pair.mu, pressure: None })
}

fn stokes_block(sub: &BoundaryMesh, mu: f64) -> Result<InteriorBlock> {
    let coef = Family::Stokes { mu }.coefficients();
    let comp = &sub.components[0];
    let m = sub.dof();
    let s = free_single_layer(sub, &coef);
    let mut big = Mat::<f64>::zeros(m + 1, m + 1);
    big.submatrix_mut(0, 0, m, m).copy_from(&s);
    for (i, (n, w)) in comp.normals.iter().zip(&comp.weights).enumerate() {
        for a in 0..2 {
            big[(2 * i + a, m)] = n[a];
            big[(m, 2 * i + a)] = n[a] * w;
        }
    }
    let lu = Lu::new(&big, "bordered Stokes single layer")?;
    let mut rhs = Mat::<f64>::zeros(m + 1, m);
    for i in 0..m {
        rhs[(i, i)] = 1.0;
    }
    let sol = lu.solve(&rhs);
    let density = sol.submatrix(0, 0, m, m).to_owned();
    let mut k = free_np(sub, &coef);
    linalg::add_diagonal(&mut k, -0.5);
    let t = &k * &density;
    let d = diff_matrix(comp.n);
    let mut p = Mat::<f64>::zeros(comp.n, m);
    for i in 0..comp.n {
        let (nv, tv, v) = (comp.normals[i], comp.tangents[i], comp.speeds[i]);
        for col in 0..m {
            p[(i, col)] = nv[0] * t[(2 * i, col)] + nv[1] * t[(2 * i + 1, col)];
        }
        for j in 0..comp.n {
            for a in 0..2 {
                p[(i, 2 * j + a)] += 2.0 * mu * d[(i, j)] * tv[a] / (v * v);
            }
        }
    }
    let mut dtn = t;
    for col in 0..m {
        let mean = (0..comp.n).map(|i| p[(i, col)]).sum::<f64>() / comp.n as f64;
        for i in 0..comp.n {
            for a in 0..2 {
                dtn[(2 * i + a, col)] -= mean * comp.normals[i][a];
            }
        }
    }
    Ok(InteriorBlock { dtn, density, pressure: Some(p) })
}

fn block_diagonal(mesh: &BoundaryMesh, blocks: &[Mat<f64>]) -> Mat<f64> {
    let mut out = Mat::<f64>::zeros(mesh.dof(), mesh.dof());
    for (comp, b) in mesh.components.iter().zip(blocks) {
        out.submatrix_mut(2 * comp.offset, 2 * comp.offset, b.nrows(), b.ncols()).copy_from(b);
    }
    out
}

/// `blocks · x` for a block-diagonal left factor.
fn block_mul(mesh: &BoundaryMesh, blocks: &[&Mat<f64>], x: &Mat<f64>) -> Mat<f64> {
    let mut out = Mat::<f64>::zeros(x.nrows(), x.ncols());
    for (comp, b) in mesh.components.iter().zip(blocks) {
        let (r, k) = (2 * comp.offset, 2 * comp.n);
        let prod = b.as_ref() * x.submatrix(r, 0, k, x.ncols());
        out.submatrix_mut(r, 0, k, x.ncols()).copy_from(&prod);
    }
    out
}

fn block_apply(mesh: &BoundaryMesh, blocks: &[&Mat<f64>], x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (comp, b) in mesh.components.iter().zip(blocks) {
        let (r, k) = (2 * comp.offset, 2 * comp.n);
        let y = linalg::matvec(b, &x[r..r + k]);
        out[r..r + k].copy_from_slice(&y);
    }
    out
}

/// Interior DtN map (block diagonal over components).
pub fn dtn_interior(mesh: &BoundaryMesh, family: Family) -> Result<BoundaryOperator> {
    let blocks = interior_blocks(mesh, family)?;
    let mats: Vec<Mat<f64>> = blocks.into_iter().map(|b| b.dtn).collect();
    Ok(BoundaryOperator { matrix: block_diagonal(mesh, &mats), domain: mesh.id, codomain: mesh.id, role: Role::DtnInt, spec: KernelSpec::free(family) })
}

/// Exterior DtN map `(½ + 𝕂*)𝕊⁻¹` for the given kernel.
pub fn dtn_exterior(mesh: &BoundaryMesh, spec: &KernelSpec) -> Result<BoundaryOperator> {
    let layer = Layer::new(mesh, spec)?;
    let s = layer.single_layer()?;
    let mut k = layer.np()?;
    linalg::add_diagonal(&mut k, 0.5);
    let inv = Lu::new(&s, "exterior single layer")?.inverse();
    Ok(BoundaryOperator { matrix: &k * &inv, domain: mesh.id, codomain: mesh.id, role: Role::DtnExt, spec: spec.clone() })
}

/// Operators of the background pair on an inclusion array, shared by all
/// solves on that array.
pub struct Assembly {
    pub array: InclusionArray,
    pub pair: LamePair,
    pub spec: KernelSpec,
    /// `𝕊ᴺ` on the inclusion boundaries.
    pub s: Mat<f64>,
    /// `𝕂ᴺ*` on the inclusion boundaries.
    pub kstar: Mat<f64>,
    /// Energy Gram `sym(−W𝕊)`.
    pub gram: Mat<f64>,
    pub weights: Vec<f64>,
    pub rigid: RigidMotionBasis,
    s_lu: Lu,
}

impl std::fmt::Debug for Assembly {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Assembly {{ inclusions: {}, dof: {}, pair: {:?} }}", self.array.cells.len(), self.array.inclusions.dof(), self.pair)
    }
}

impl Assembly {
    pub fn new(array: &InclusionArray, pair: LamePair) -> Result<Arc<Self>> {
        let pair = LamePair::new(pair.lambda, pair.mu)?;
        let spec = KernelSpec::corrected(Family::Lame(pair), Mode::NeumannCorrected, &array.outer_mesh)?;
        let layer = Layer::new(&array.inclusions, &spec)?;
        let s = layer.single_layer()?;
        let kstar = layer.np()?;
        let weights = array.inclusions.dof_weights();
        let gram = gram_from_single_layer(&s, &weights)?;
        let s_lu = Lu::new(&s, "Neumann single layer")?;
        let rigid = rigid_basis(&array.inclusions);
        Ok(Arc::new(Assembly { array: array.clone(), pair, spec, s, kstar, gram, weights, rigid, s_lu }))
    }

    pub fn mesh(&self) -> &BoundaryMesh {
        &self.array.inclusions
    }

    pub fn background(&self, load: &LoadSpec) -> BackgroundTrace {
        background_trace(load, self.pair, &self.array.inclusions, &self.array.outer_mesh)
    }

    /// `‖φ‖_{𝕊ᴺ}`.
    pub fn snorm(&self, phi: &[f64]) -> f64 {
        let g = linalg::matvec(&self.gram, phi);
        linalg::dot(phi, &g).max(0.0).sqrt()
    }

    /// Load-size proxy `‖𝕊⁻¹𝐆‖_{𝕊ᴺ}`.
    pub fn load_norm(&self, bg: &BackgroundTrace) -> f64 {
        self.snorm(&self.s_lu.solve_vec(&bg.trace))
    }

    /// Trace of `𝒮ᴺφ` on the outer curve.
    pub fn outer_trace(&self, phi: &[f64]) -> Result<Vec<f64>> {
        Layer::new(&self.array.inclusions, &self.spec)?.outer_trace(phi)
    }

    fn check_load(&self, bg: &BackgroundTrace) -> Result<()> {
        if bg.trace.len() != self.mesh().dof() {
            return Err(Error::MeshMismatch("background trace does not match the inclusion mesh".into()));
        }
        Ok(())
    }

    /// Largest per-component rigid moment of `φ`, relative to `‖φ‖_{L²}`.
    fn moment_defect(&self, phi: &[f64]) -> f64 {
        let m = self.rigid.moments(phi);
        let l2 = phi.iter().zip(&self.weights).map(|(p, w)| w * p * p).sum::<f64>().sqrt();
        let scale = l2 * self.mesh().components.iter().map(|c| c.length()).fold(0.0, f64::max).max(1.0);
        if scale == 0.0 {
            0.0
        } else {
            m.iter().fold(0.0f64, |a, v| a.max(v.abs())) / scale
        }
    }

    fn bundle(self: &Arc<Self>, case: Case, load: &LoadSpec, interior: Option<Family>, phi: Vec<f64>, trace: Vec<f64>) -> SolutionBundle {
        SolutionBundle {
            case,
            assembly: Arc::clone(self),
            load: *load,
            interior,
            moment_defect: self.moment_defect(&phi),
            phi,
            trace,
            psi: None,
            rigid: None,
            fit_residual: None,
            pressure: None,
        }
    }

    fn total_trace(&self, bg: &BackgroundTrace, phi: &[f64]) -> Vec<f64> {
        let sphi = linalg::matvec(&self.s, phi);
        bg.trace.iter().zip(sphi).map(|(a, b)| a + b).collect()
    }

    /// Transmission problem with interior pair `tilde`.
    pub fn transmission(self: &Arc<Self>, tilde: LamePair, load: &LoadSpec) -> Result<SolutionBundle> {
        let tilde = LamePair::new(tilde.lambda, tilde.mu)?;
        let bg = self.background(load);
        self.check_load(&bg)?;
        let mesh = self.mesh();
        let blocks = interior_blocks(mesh, Family::Lame(tilde))?;
        let dtn: Vec<&Mat<f64>> = blocks.iter().map(|b| &b.dtn).collect();
        let mut m = block_mul(mesh, &dtn, &self.s);
        m -= &self.kstar;
        linalg::add_diagonal(&mut m, -0.5);
        let lg = block_apply(mesh, &dtn, &bg.trace);
        let rhs: Vec<f64> = bg.traction.iter().zip(lg).map(|(a, b)| a - b).collect();
        let phi = Lu::new(&m, "transmission system")?.solve_vec(&rhs);
        let trace = self.total_trace(&bg, &phi);
        let dens: Vec<&Mat<f64>> = blocks.iter().map(|b| &b.density).collect();
        let psi = block_apply(mesh, &dens, &trace);
        let mut out = self.bundle(Case::Transmission, load, Some(Family::Lame(tilde)), phi, trace);
        out.psi = Some(psi);
        Ok(out)
    }

    /// Incompressible limit `λ̃ → ∞` with interior viscosity `mu_tilde`.
    pub fn limit_stokes(self: &Arc<Self>, mu_tilde: f64, load: &LoadSpec) -> Result<SolutionBundle> {
        let family = Family::Stokes { mu: mu_tilde };
        family.validate()?;
        let bg = self.background(load);
        self.check_load(&bg)?;
        let mesh = self.mesh();
        let (n, nc) = (mesh.dof(), mesh.components.len());
        let blocks = interior_blocks(mesh, family)?;
        let dtn: Vec<&Mat<f64>> = blocks.iter().map(|b| &b.dtn).collect();
        let mut top = block_mul(mesh, &dtn, &self.s);
        top -= &self.kstar;
        linalg::add_diagonal(&mut top, -0.5);
        let mut big = Mat::<f64>::zeros(n + nc, n + nc);
        big.submatrix_mut(0, 0, n, n).copy_from(&top);
        let mut rhs = vec![0.0; n + nc];
        let lg = block_apply(mesh, &dtn, &bg.trace);
        for i in 0..n {
            rhs[i] = bg.traction[i] - lg[i];
        }
        for (c, comp) in mesh.components.iter().enumerate() {
            for (j, (nv, w)) in comp.normals.iter().zip(&comp.weights).enumerate() {
                for a in 0..2 {
                    let d = 2 * (comp.offset + j) + a;
                    big[(d, n + c)] = nv[a];
                    for col in 0..n {
                        big[(n + c, col)] += w * nv[a] * self.s[(d, col)];
                    }
                    rhs[n + c] -= w * nv[a] * bg.trace[d];
                }
            }
        }
        let sol = Lu::new(&big, "Stokes limit system")?.solve_vec(&rhs);
        let phi = sol[..n].to_vec();
        let beta = &sol[n..];
        let trace = self.total_trace(&bg, &phi);
        let dens: Vec<&Mat<f64>> = blocks.iter().map(|b| &b.density).collect();
        let psi = block_apply(mesh, &dens, &trace);
        let mut pressure = Vec::with_capacity(mesh.num_nodes());
        for (c, (comp, b)) in mesh.components.iter().zip(&blocks).enumerate() {
            let r = 2 * comp.offset;
            let p = linalg::matvec(b.pressure.as_ref().expect("Stokes block carries a pressure map"), &trace[r..r + 2 * comp.n]);
            let mean = p.iter().sum::<f64>() / p.len() as f64;
            pressure.extend(p.iter().map(|v| v - mean + beta[c]));
        }
        let mean = pressure.iter().sum::<f64>() / pressure.len() as f64;
        pressure.iter_mut().for_each(|p| *p -= mean);
        let mut out = self.bundle(Case::LimitStokes, load, Some(family), phi, trace);
        out.psi = Some(psi);
        out.pressure = Some(pressure);
        Ok(out)
    }

    /// Soft-inclusion limit `(λ̃, μ̃) → 0`: `(½ + 𝕂*)φ = −∂𝐆/∂ν`.
    pub fn limit_soft(self: &Arc<Self>, load: &LoadSpec) -> Result<SolutionBundle> {
        let bg = self.background(load);
        self.check_load(&bg)?;
        let mut a = self.kstar.clone();
        linalg::add_diagonal(&mut a, 0.5);
        let rhs: Vec<f64> = bg.traction.iter().map(|v| -v).collect();
        let phi = Lu::new(&a, "soft limit system")?.solve_vec(&rhs);
        let trace = self.total_trace(&bg, &phi);
        Ok(self.bundle(Case::LimitSoft, load, None, phi, trace))
    }

    /// Rigid-inclusion limit `μ̃ → ∞`: `(−½ + 𝕂*)φ = −∂𝐆/∂ν` on rigid-orthogonal
    /// densities, followed by a least-squares rigid fit of `𝐆 + 𝕊φ`.
    pub fn limit_rigid(self: &Arc<Self>, load: &LoadSpec) -> Result<SolutionBundle> {
        let bg = self.background(load);
        self.check_load(&bg)?;
        let n = self.mesh().dof();
        let r = self.rigid.matrix();
        let k = r.ncols();
        let mut big = Mat::<f64>::zeros(n + k, n + k);
        let mut a = self.kstar.clone();
        linalg::add_diagonal(&mut a, -0.5);
        big.submatrix_mut(0, 0, n, n).copy_from(&a);
        big.submatrix_mut(0, n, n, k).copy_from(&r);
        let mut wr = r.clone();
        linalg::scale_rows(&mut wr, &self.weights);
        big.submatrix_mut(n, 0, k, n).copy_from(&wr.transpose());
        let mut rhs: Vec<f64> = bg.traction.iter().map(|v| -v).collect();
        rhs.resize(n + k, 0.0);
        let sol = Lu::new(&big, "rigid limit system")?.solve_vec(&rhs);
        let phi = sol[..n].to_vec();
        let trace = self.total_trace(&bg, &phi);
        let mut out = self.bundle(Case::LimitRigid, load, None, phi, trace);
        out.fit_rigid()?;
        Ok(out)
    }

    /// Rigid inclusions with prescribed force/torque resultants `c` (three per
    /// inclusion, about the origin) and the affine load on the outer curve.
    pub fn rigid_resultants(self: &Arc<Self>, resultants: &[f64], load: &LoadSpec) -> Result<ResultantSolution> {
        let mesh = self.mesh();
        let (n, nc) = (mesh.dof(), mesh.components.len());
        if resultants.len() != 3 * nc {
            return Err(Error::Invalid(format!("expected {} resultants, got {}", 3 * nc, resultants.len())));
        }
        let bg = self.background(load);
        let outer = &self.array.outer_mesh;
        let g_outer = load.traction(self.pair, outer);
        let r_outer = rigid_rows(&outer.components[0].nodes, [0.0, 0.0]);
        let w_outer = outer.dof_weights();
        let load_moments: Vec<f64> = (0..3).map(|j| (0..outer.dof()).map(|d| r_outer[(d, j)] * w_outer[d] * g_outer[d]).sum()).collect();
        let scale = resultants.iter().chain(&load_moments).fold(1.0f64, |m, v| m.max(v.abs()));
        for j in 0..3 {
            let total: f64 = (0..nc).map(|c| resultants[3 * c + j]).sum();
            if (total - load_moments[j]).abs() > 1e-8 * scale {
                return Err(Error::Incompatible(format!(
                    "resultant sum {total:.6e} differs from the outer load moment {:.6e} (component {j})",
                    load_moments[j]
                )));
            }
        }
        let nodes: Vec<Vec2> = mesh.nodes().copied().collect();
        let rg = rigid_rows(&nodes, [0.0, 0.0]);
        let mut big = Mat::<f64>::zeros(n + 3, n + 3);
        big.submatrix_mut(0, 0, n, n).copy_from(&self.s);
        big.submatrix_mut(0, n, n, 3).copy_from(&rg);
        let mut wr = rg.clone();
        linalg::scale_rows(&mut wr, &self.weights);
        big.submatrix_mut(n, 0, 3, n).copy_from(&wr.transpose());
        let lu = Lu::new(&big, "rigid-resultant basis system")?;
        let mut rhs = Mat::<f64>::zeros(n + 3, 1 + 3 * nc);
        for d in 0..n {
            rhs[(d, 0)] = -bg.trace[d];
        }
        for (c, comp) in mesh.components.iter().enumerate() {
            for d in 2 * comp.offset..2 * (comp.offset + comp.n) {
                for l in 0..3 {
                    rhs[(d, 1 + 3 * c + l)] = rg[(d, l)];
                }
            }
        }
        let sol = lu.solve(&rhs);
        let mut traction = &self.kstar * sol.submatrix(0, 0, n, 1 + 3 * nc);
        traction += &Mat::from_fn(n, 1 + 3 * nc, |i, j| 0.5 * sol[(i, j)]);
        for d in 0..n {
            traction[(d, 0)] += bg.traction[d];
        }
        let moments_of = |t: &[f64]| -> Vec<f64> {
            let mut m = vec![0.0; 3 * nc];
            for (c, comp) in mesh.components.iter().enumerate() {
                for d in 2 * comp.offset..2 * (comp.offset + comp.n) {
                    for j in 0..3 {
                        m[3 * c + j] += rg[(d, j)] * self.weights[d] * t[d];
                    }
                }
            }
            m
        };
        let moments = |col: usize| moments_of(&(0..n).map(|d| traction[(d, col)]).collect::<Vec<_>>());
        let mut stiffness = Mat::<f64>::zeros(3 * nc, 3 * nc);
        for col in 0..3 * nc {
            let m = moments(1 + col);
            for row in 0..3 * nc {
                stiffness[(row, col)] = m[row];
            }
        }
        let mv = moments(0);
        let b: Vec<f64> = resultants.iter().zip(&mv).map(|(c, v)| c - v).collect();
        let (coef, singular_values) = linalg::truncated_solve(&stiffness, &b, 3 * nc - 3)?;
        let mut combo = vec![1.0];
        combo.extend_from_slice(&coef);
        let total = linalg::matvec(&sol, &combo);
        let phi = total[..n].to_vec();
        let recovered = moments_of(&linalg::matvec(&traction, &combo));
        let trace = self.total_trace(&bg, &phi);
        let mut bundle = self.bundle(Case::LimitRigid, load, None, phi, trace);
        bundle.fit_rigid()?;
        let top = singular_values.first().copied().unwrap_or(0.0);
        let kernel_dim = singular_values.iter().filter(|s| **s <= 1e-8 * top).count();
        Ok(ResultantSolution { bundle, stiffness, singular_values, coefficients: coef, kernel_dim, recovered })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Transmission,
    LimitStokes,
    LimitSoft,
    LimitRigid,
}

/// Densities and derived quantities of one solve.
#[derive(Clone, Debug)]
pub struct SolutionBundle {
    pub case: Case,
    pub assembly: Arc<Assembly>,
    pub load: LoadSpec,
    /// Interior material (transmission and Stokes cases).
    pub interior: Option<Family>,
    /// Exterior density `φ` (`u = 𝐆 + 𝒮ᴺφ` outside the inclusions).
    pub phi: Vec<f64>,
    /// Interior density `ψ` (free-space kernel of the interior material).
    pub psi: Option<Vec<f64>>,
    /// Trace `𝐆 + 𝕊φ` on the inclusion boundaries.
    pub trace: Vec<f64>,
    /// Rigid motion of every inclusion about its centroid (rigid case).
    pub rigid: Option<Vec<f64>>,
    /// Residual of the rigid fit relative to the larger of the trace and background-trace norms.
    pub fit_residual: Option<f64>,
    /// Interior pressure trace, zero node mean (Stokes case).
    pub pressure: Option<Vec<f64>>,
    /// Largest rigid moment of `φ` on any component, relative to its size.
    pub moment_defect: f64,
}

impl SolutionBundle {
    pub fn snorm(&self) -> f64 {
        self.assembly.snorm(&self.phi)
    }

    /// Exterior traction `∂𝐆/∂ν + (½ + 𝕂*)φ` on the inclusion boundaries.
    pub fn exterior_traction(&self) -> Vec<f64> {
        let bg = self.assembly.background(&self.load);
        let k = linalg::matvec(&self.assembly.kstar, &self.phi);
        (0..self.phi.len()).map(|i| bg.traction[i] + 0.5 * self.phi[i] + k[i]).collect()
    }

    fn fit_rigid(&mut self) -> Result<()> {
        let basis = &self.assembly.rigid;
        let coef = basis.coefficients(&self.trace);
        let fit = basis.synthesize(&coef);
        let w = &self.assembly.weights;
        let num: f64 = self.trace.iter().zip(&fit).zip(w).map(|((a, b), w)| w * (a - b).powi(2)).sum();
        let bg = self.assembly.background(&self.load);
        let den: f64 = [&self.trace, &bg.trace].iter().map(|v| v.iter().zip(w).map(|(a, w)| w * a * a).sum::<f64>()).fold(0.0, f64::max);
        let residual = if den > 0.0 { (num / den).sqrt() } else { 0.0 };
        if residual > 1e-5 {
            return Err(Error::NotRigid(residual));
        }
        self.rigid = Some(coef);
        self.fit_residual = Some(residual);
        Ok(())
    }
}

/// Result of the rigid-resultant solve.
#[derive(Clone, Debug)]
pub struct ResultantSolution {
    pub bundle: SolutionBundle,
    /// Resultant stiffness matrix, `(3n_c) × (3n_c)`.
    pub stiffness: Mat<f64>,
    pub singular_values: Vec<f64>,
    /// Coefficients of the unit rigid-motion solutions.
    pub coefficients: Vec<f64>,
    /// Number of singular values below `10⁻⁸` of the largest.
    pub kernel_dim: usize,
    /// Resultants recomputed from the solution.
    pub recovered: Vec<f64>,
}

pub fn solve_transmission(array: &InclusionArray, pair: LamePair, tilde: LamePair, load: &LoadSpec) -> Result<SolutionBundle> {
    Assembly::new(array, pair)?.transmission(tilde, load)
}

pub fn solve_limit_stokes(array: &InclusionArray, pair: LamePair, mu_tilde: f64, load: &LoadSpec) -> Result<SolutionBundle> {
    Assembly::new(array, pair)?.limit_stokes(mu_tilde, load)
}

pub fn solve_limit_soft(array: &InclusionArray, pair: LamePair, load: &LoadSpec) -> Result<SolutionBundle> {
    Assembly::new(array, pair)?.limit_soft(load)
}

pub fn solve_limit_rigid(array: &InclusionArray, pair: LamePair, load: &LoadSpec) -> Result<SolutionBundle> {
    Assembly::new(array, pair)?.limit_rigid(load)
}

pub fn solve_rigid_resultants(array: &InclusionArray, pair: LamePair, resultants: &[f64], load: &LoadSpec) -> Result<ResultantSolution> {
    Assembly::new(array, pair)?.rigid_resultants(resultants, load)
}

/// `‖φ_a − φ_b‖_{𝕊ᴺ}` for bundles on the same mesh and background pair.
pub fn error_snorm(a: &SolutionBundle, b: &SolutionBundle) -> Result<f64> {
    let (x, y) = (&a.assembly, &b.assembly);
    if x.mesh().id != y.mesh().id || x.pair != y.pair {
        return Err(Error::MeshMismatch("bundles belong to different meshes or background pairs".into()));
    }
    let d: Vec<f64> = a.phi.iter().zip(&b.phi).map(|(p, q)| p - q).collect();
    Ok(x.snorm(&d))
}
