//! Kelvin matrix, traction kernel, Stokeslet and the Neumann/Dirichlet
//! corrections of the free-space kernel on an outer curve.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryMesh, Vec2};
use crate::linalg::{self, Lu};
use crate::potentials;

pub type Mat2 = [[f64; 2]; 2];

/// Lamé coefficients of an isotropic planar material.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LamePair {
    pub lambda: f64,
    pub mu: f64,
}

impl LamePair {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        let p = LamePair { lambda, mu };
        if p.is_admissible() {
            Ok(p)
        } else {
            Err(Error::Inadmissible { lambda, mu })
        }
    }

    /// `μ > 0` and `2λ + 2μ > 0`.
    pub fn is_admissible(&self) -> bool {
        self.mu > 0.0 && 2.0 * self.lambda + 2.0 * self.mu > 0.0 && self.lambda.is_finite() && self.mu.is_finite()
    }

    /// `δ ≤ min(2λ+2μ, μ)` and `max(2λ+2μ, μ) ≤ 1/δ`.
    pub fn is_uniformly_admissible(&self, delta: f64) -> bool {
        let a = 2.0 * self.lambda + 2.0 * self.mu;
        delta <= a.min(self.mu) && a.max(self.mu) <= 1.0 / delta
    }

    pub fn scaled(&self, t: f64) -> LamePair {
        LamePair { lambda: t * self.lambda, mu: t * self.mu }
    }
}

/// Young's modulus and bulk modulus of an admissible pair.
pub fn moduli_from_pair(pair: LamePair) -> Result<(f64, f64)> {
    if !pair.is_admissible() {
        return Err(Error::Inadmissible { lambda: pair.lambda, mu: pair.mu });
    }
    let (l, m) = (pair.lambda, pair.mu);
    Ok((2.0 * m * (2.0 * l + 2.0 * m) / (l + 2.0 * m), (2.0 * l + 2.0 * m) / 2.0))
}

/// Constants of the kernel `Γ = (c₁/2π) log ρ 𝕀 − (c₂/2π) r rᵀ/ρ²` and the
/// ratio `κ = μ/(2μ+λ)` entering its traction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficients {
    pub c1: f64,
    pub c2: f64,
    pub kappa: f64,
}

/// Lamé elasticity or incompressible Stokes flow with viscosity `mu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Lame(LamePair),
    Stokes { mu: f64 },
}

impl Family {
    pub fn coefficients(&self) -> Coefficients {
        match *self {
            Family::Lame(LamePair { lambda, mu }) => Coefficients {
                c1: 0.5 * (1.0 / mu + 1.0 / (2.0 * mu + lambda)),
                c2: 0.5 * (1.0 / mu - 1.0 / (2.0 * mu + lambda)),
                kappa: mu / (2.0 * mu + lambda),
            },
            Family::Stokes { mu } => Coefficients { c1: 0.5 / mu, c2: 0.5 / mu, kappa: 0.0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Family::Lame(p) => LamePair::new(p.lambda, p.mu).map(|_| ()),
            Family::Stokes { mu } if mu > 0.0 && mu.is_finite() => Ok(()),
            Family::Stokes { mu } => Err(Error::Invalid(format!("viscosity must be positive, got {mu}"))),
        }
    }
}

pub(crate) fn gamma(c: &Coefficients, r: Vec2) -> Mat2 {
    let rho2 = r[0] * r[0] + r[1] * r[1];
    let lg = c1_log(c, rho2);
    let k = c.c2 / (2.0 * PI * rho2);
    [[lg - k * r[0] * r[0], -k * r[0] * r[1]], [-k * r[1] * r[0], lg - k * r[1] * r[1]]]
}

fn c1_log(c: &Coefficients, rho2: f64) -> f64 {
    c.c1 / (4.0 * PI) * rho2.ln()
}

/// Traction at the target (normal `n`) of the columns of `Γ(·, z)`, `r = x − z`.
pub(crate) fn traction_kernel(c: &Coefficients, r: Vec2, n: Vec2) -> Mat2 {
    let rho2 = r[0] * r[0] + r[1] * r[1];
    let rn = r[0] * n[0] + r[1] * n[1];
    let a = c.kappa / (2.0 * PI * rho2);
    let b = (1.0 - c.kappa) * rn / (PI * rho2 * rho2);
    let mut t = [[0.0; 2]; 2];
    for i in 0..2 {
        for k in 0..2 {
            let delta = if i == k { rn } else { 0.0 };
            t[i][k] = a * (delta + n[k] * r[i] - n[i] * r[k]) + b * r[i] * r[k];
        }
    }
    t
}

fn offset(x: Vec2, z: Vec2) -> Result<Vec2> {
    let r = [x[0] - z[0], x[1] - z[1]];
    if r[0] == 0.0 && r[1] == 0.0 {
        return Err(Error::Singularity);
    }
    Ok(r)
}

/// Kelvin matrix `Γ(x, z)` of the Lamé operator `μΔ + (λ+μ)∇div`.
pub fn kelvin(x: Vec2, z: Vec2, pair: LamePair) -> Result<Mat2> {
    let family = Family::Lame(pair);
    family.validate()?;
    Ok(gamma(&family.coefficients(), offset(x, z)?))
}

/// Column `k` is the traction `σ(Γ e_k)(x)·n_x`.
pub fn traction(x: Vec2, z: Vec2, n_x: Vec2, pair: LamePair) -> Result<Mat2> {
    let family = Family::Lame(pair);
    family.validate()?;
    Ok(traction_kernel(&family.coefficients(), offset(x, z)?, n_x))
}

/// Stokeslet `G` and pressure vector `q` with `μ′ΔG + ∇qᵀ = δ𝕀`, `div G = 0`.
pub fn stokeslet_pressure(x: Vec2, z: Vec2, mu_prime: f64) -> Result<(Mat2, Vec2)> {
    let family = Family::Stokes { mu: mu_prime };
    family.validate()?;
    let r = offset(x, z)?;
    Ok((gamma(&family.coefficients(), r), stokes_pressure(r)))
}

pub(crate) fn stokes_pressure(r: Vec2) -> Vec2 {
    let rho2 = r[0] * r[0] + r[1] * r[1];
    [r[0] / (2.0 * PI * rho2), r[1] / (2.0 * PI * rho2)]
}

/// Traction `q N + 2μ′𝔻(G)N` of the Stokeslet columns (independent of μ′).
pub fn stokes_traction(x: Vec2, z: Vec2, n_x: Vec2) -> Result<Mat2> {
    Ok(traction_kernel(&Family::Stokes { mu: 1.0 }.coefficients(), offset(x, z)?, n_x))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    FreeSpace,
    NeumannCorrected,
    DirichletCorrected,
}

/// Kernel family plus boundary condition on the outer curve.
#[derive(Clone, Debug)]
pub struct KernelSpec {
    pub family: Family,
    pub mode: Mode,
    pub correction: Option<Arc<CorrectionOperator>>,
}

impl KernelSpec {
    pub fn free(family: Family) -> Self {
        KernelSpec { family, mode: Mode::FreeSpace, correction: None }
    }

    pub fn corrected(family: Family, mode: Mode, outer: &BoundaryMesh) -> Result<Self> {
        if mode == Mode::FreeSpace {
            return Ok(Self::free(family));
        }
        let c = correction_operator(family, mode, outer)?;
        Ok(KernelSpec { family, mode, correction: Some(Arc::new(c)) })
    }

    pub fn coefficients(&self) -> Coefficients {
        self.family.coefficients()
    }
}

/// Rigid motions `e₁, e₂, (x₂ − c₂, −(x₁ − c₁))` sampled at DOFs.
pub(crate) fn rigid_rows(points: &[Vec2], center: Vec2) -> Mat<f64> {
    Mat::from_fn(2 * points.len(), 3, |d, j| {
        let (p, k) = (points[d / 2], d % 2);
        match j {
            0 => (k == 0) as u8 as f64,
            1 => (k == 1) as u8 as f64,
            _ => {
                if k == 0 {
                    p[1] - center[1]
                } else {
                    -(p[0] - center[0])
                }
            }
        }
    })
}

/// Factored outer-boundary system producing the regular part `R` of
/// `Γᴺ = Γ + Rᴺ` or `Γᴰ = Γ + Rᴰ` as a single layer on the outer curve
/// (plus a rigid motion in Neumann mode).
///
/// Neumann data is `∂Rᴺ/∂ν = −∂Γ/∂ν + P_𝐑 ∂Γ/∂ν`, where `P_𝐑` is the L²
/// projection onto rigid motions; its force part is `e_k/|∂Ω|`. The trace of
/// `Γᴺ(·, z)` is L²-orthogonal to rigid motions on the outer curve.
#[derive(Debug)]
pub struct CorrectionOperator {
    pub family: Family,
    pub mode: Mode,
    pub outer: BoundaryMesh,
    pub center: Vec2,
    rigid: Mat<f64>,
    gram_inv: Mat<f64>,
    s_outer: Mat<f64>,
    lu: Lu,
}

/// Outer-curve densities `σ` (`2N_Ω × 2P`) and rigid coefficients `a`
/// (`3 × 2P`) for unit sources at `P` points, one column per source DOF.
#[derive(Clone, Debug)]
pub struct SourceCorrection {
    pub sigma: Mat<f64>,
    pub rigid: Mat<f64>,
}

pub fn correction_operator(family: Family, mode: Mode, outer: &BoundaryMesh) -> Result<CorrectionOperator> {
    family.validate()?;
    if !matches!(family, Family::Lame(_)) {
        return Err(Error::Invalid("corrected kernels are available for the Lamé family only".into()));
    }
    if outer.components.len() != 1 {
        return Err(Error::MeshMismatch("outer mesh must have one component".into()));
    }
    let c = family.coefficients();
    let comp = &outer.components[0];
    let m = outer.dof();
    let center = comp.centroid();
    let rigid = rigid_rows(&comp.nodes, center);
    let w = outer.dof_weights();
    let mut wr = rigid.clone();
    linalg::scale_rows(&mut wr, &w);
    let gram = wr.transpose() * &rigid;
    let gram_inv = Lu::new(&gram, "outer rigid Gram")?.inverse();
    let s = potentials::free_single_layer(outer, &c);
    let lu = match mode {
        Mode::FreeSpace => return Err(Error::Invalid("free-space kernel has no correction".into())),
        Mode::DirichletCorrected => Lu::new(&s, "Dirichlet correction")?,
        Mode::NeumannCorrected => {
            let mut a = potentials::free_np(outer, &c);
            linalg::add_diagonal(&mut a, -0.5);
            let constraint = wr.transpose() * &s;
            let mut big = Mat::<f64>::zeros(m + 3, m + 3);
            big.submatrix_mut(0, 0, m, m).copy_from(&a);
            big.submatrix_mut(0, m, m, 3).copy_from(&rigid);
            big.submatrix_mut(m, 0, 3, m).copy_from(&constraint);
            Lu::new(&big, "Neumann correction")?
        }
    };
    Ok(CorrectionOperator { family, mode, outer: outer.clone(), center, rigid, gram_inv, s_outer: s, lu })
}

impl CorrectionOperator {
    /// Whether `p` lies inside the polygon through the outer nodes.
    pub fn outer_contains(&self, p: Vec2) -> bool {
        crate::geometry::polygon_contains(&self.outer.components[0].nodes, p)
    }

    /// `Γ(y_m, z_j) e_k + R(y_m, z_j) e_k` at the outer nodes (`2N_Ω × 2P`)
    /// minus the free-space part, i.e. the regular part `R` on the outer curve.
    pub fn outer_trace(&self, corr: &SourceCorrection) -> Mat<f64> {
        &self.s_outer * &corr.sigma + &self.rigid * &corr.rigid
    }

    /// Outer rigid basis sampled at DOFs (`2N_Ω × 3`).
    pub fn rigid_basis(&self) -> &Mat<f64> {
        &self.rigid
    }

    /// Densities for unit sources at `points`.
    pub fn solve_sources(&self, points: &[Vec2]) -> Result<SourceCorrection> {
        let c = self.family.coefficients();
        let comp = &self.outer.components[0];
        let m = self.outer.dof();
        let p = 2 * points.len();
        let w = self.outer.dof_weights();
        let mut trace = Mat::<f64>::zeros(m, p);
        for (j, z) in points.iter().enumerate() {
            for (i, y) in comp.nodes.iter().enumerate() {
                let g = gamma(&c, offset(*y, *z)?);
                for a in 0..2 {
                    for b in 0..2 {
                        trace[(2 * i + a, 2 * j + b)] = g[a][b];
                    }
                }
            }
        }
        let mut wr = self.rigid.clone();
        linalg::scale_rows(&mut wr, &w);
        match self.mode {
            Mode::DirichletCorrected => {
                let sigma = self.lu.solve(&trace) * -1.0;
                Ok(SourceCorrection { sigma, rigid: Mat::zeros(3, p) })
            }
            Mode::NeumannCorrected => {
                let src_rigid = rigid_rows(points, self.center);
                let proj = &self.rigid * (&self.gram_inv * src_rigid.transpose());
                let mut rhs = Mat::<f64>::zeros(m + 3, p);
                for j in 0..points.len() {
                    for (i, (y, n)) in comp.nodes.iter().zip(&comp.normals).enumerate() {
                        let t = traction_kernel(&c, offset(*y, points[j])?, *n);
                        for a in 0..2 {
                            for b in 0..2 {
                                rhs[(2 * i + a, 2 * j + b)] = proj[(2 * i + a, 2 * j + b)] - t[a][b];
                            }
                        }
                    }
                }
                let sol = self.lu.solve(&rhs);
                let sigma = sol.submatrix(0, 0, m, p).to_owned();
                let rigid = (&self.gram_inv * (wr.transpose() * &trace)) * -1.0;
                Ok(SourceCorrection { sigma, rigid })
            }
            Mode::FreeSpace => unreachable!(),
        }
    }

    /// `R(x, z_j) e_k` at `targets` (`2T × 2P`).
    pub fn field(&self, corr: &SourceCorrection, targets: &[Vec2]) -> Result<Mat<f64>> {
        let e = self.outer_single_layer(targets)?;
        Ok(&e * &corr.sigma + rigid_rows(targets, self.center) * &corr.rigid)
    }

    /// Traction at `targets` with `normals` of `R(·, z_j) e_k` (`2T × 2P`).
    pub fn traction(&self, corr: &SourceCorrection, targets: &[Vec2], normals: &[Vec2]) -> Result<Mat<f64>> {
        let c = self.family.coefficients();
        let comp = &self.outer.components[0];
        let e = Mat::from_fn(2 * targets.len(), self.outer.dof(), |r, s| {
            let (i, a, j, b) = (r / 2, r % 2, s / 2, s % 2);
            let y = comp.nodes[j];
            let d = [targets[i][0] - y[0], targets[i][1] - y[1]];
            traction_kernel(&c, d, normals[i])[a][b] * comp.weights[j]
        });
        Ok(&e * &corr.sigma)
    }

    /// Trapezoid single layer of the outer curve evaluated at `targets` (`2T × 2N_Ω`).
    pub(crate) fn outer_single_layer(&self, targets: &[Vec2]) -> Result<Mat<f64>> {
        let c = self.family.coefficients();
        let comp = &self.outer.components[0];
        for t in targets {
            if comp.nodes.iter().any(|y| y[0] == t[0] && y[1] == t[1]) {
                return Err(Error::Singularity);
            }
        }
        Ok(Mat::from_fn(2 * targets.len(), self.outer.dof(), |r, s| {
            let (i, a, j, b) = (r / 2, r % 2, s / 2, s % 2);
            let y = comp.nodes[j];
            gamma(&c, [targets[i][0] - y[0], targets[i][1] - y[1]])[a][b] * comp.weights[j]
        }))
    }
}
