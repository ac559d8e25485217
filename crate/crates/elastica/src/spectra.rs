//! Neumann–Poincaré spectra in the single-layer energy inner product.
//!
//! The operator `𝕂*` of a corrected kernel is self-adjoint for
//! `(φ,ψ)_𝕊 = −∫φ·𝕊ψ`, so its discrete spectrum is the symmetric-definite
//! pencil `(sym(−W S K*), sym(−W S))`. Restriction to densities with zero
//! rigid moments on every component removes the eigenvalue `½`.

use std::fmt;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_array, make_curve, mesh_curve, BoundaryMesh, ClosedCurve, CurveSpec};
use crate::kernels::{Family, KernelSpec, LamePair, Mode};
use crate::linalg;
use crate::potentials::{assemble_Kstar, assemble_S, gram_from_single_layer, rigid_basis};
use crate::solvers::dtn_interior;

/// Distance from `½` below which an eigenvalue counts as a rigid mode.
pub const HALF_TOL: f64 = 1e-6;

/// Outer-boundary condition of the kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NpMode {
    #[serde(rename = "N")]
    Neumann,
    #[serde(rename = "D")]
    Dirichlet,
}

impl NpMode {
    pub fn kernel_mode(self) -> Mode {
        match self {
            NpMode::Neumann => Mode::NeumannCorrected,
            NpMode::Dirichlet => Mode::DirichletCorrected,
        }
    }
}

impl fmt::Display for NpMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NpMode::Neumann => "N",
            NpMode::Dirichlet => "D",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subspace {
    Full,
    RigidOrthogonal,
}

impl fmt::Display for Subspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subspace::Full => "full",
            Subspace::RigidOrthogonal => "rigid_orthogonal",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    pub mode: NpMode,
    pub subspace: Subspace,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    /// `min(m + ½, ½ − M)`.
    pub delta1: f64,
    /// Eigenvalues within `HALF_TOL` of `½`.
    pub near_half: usize,
    /// `‖WSK* − (WSK*)ᵀ‖ / ‖WSK*‖` before symmetrization.
    pub asymmetry: f64,
    pub components: usize,
    pub dof: usize,
}

impl SpectralReport {
    fn new(mode: NpMode, subspace: Subspace, eigenvalues: Vec<f64>, asymmetry: f64, mesh: &BoundaryMesh) -> Self {
        let m = eigenvalues.first().copied().unwrap_or(f64::NAN);
        let big_m = eigenvalues.last().copied().unwrap_or(f64::NAN);
        let near_half = eigenvalues.iter().filter(|t| (*t - 0.5).abs() < HALF_TOL).count();
        SpectralReport {
            mode,
            subspace,
            delta1: (m + 0.5).min(0.5 - big_m),
            eigenvalues,
            m,
            big_m,
            near_half,
            asymmetry,
            components: mesh.components.len(),
            dof: mesh.dof(),
        }
    }

    /// Eigenvalues within `tol` of `½` or `−½`.
    pub fn count_near_endpoints(&self, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|t| (t.abs() - 0.5).abs() < tol).count()
    }
}

/// Block-diagonal orthonormal basis of densities with zero rigid moments
/// on every component, stored as one block per component.
struct MomentFree {
    blocks: Vec<(usize, Mat<f64>)>,
    cols: usize,
}

impl MomentFree {
    fn new(mesh: &BoundaryMesh) -> Result<Self> {
        let basis = rigid_basis(mesh);
        let w = mesh.dof_weights();
        let mut blocks = vec![];
        let mut cols = 0;
        for (c, comp) in mesh.components.iter().enumerate() {
            let r0 = 2 * comp.offset;
            let mut wr = basis.fields[c].clone();
            linalg::scale_rows(&mut wr, &w[r0..r0 + 2 * comp.n]);
            let z = linalg::orthogonal_complement(&wr)?;
            cols += z.ncols();
            blocks.push((r0, z));
        }
        Ok(MomentFree { blocks, cols })
    }

    /// `Zᵀ A Z`.
    fn compress(&self, a: &Mat<f64>) -> Mat<f64> {
        let n = a.nrows();
        let mut az = Mat::<f64>::zeros(n, self.cols);
        let mut col = 0;
        for (r0, z) in &self.blocks {
            let piece = a.submatrix(0, *r0, n, z.nrows()) * z;
            az.submatrix_mut(0, col, n, z.ncols()).copy_from(&piece);
            col += z.ncols();
        }
        let mut out = Mat::<f64>::zeros(self.cols, self.cols);
        let mut row = 0;
        for (r0, z) in &self.blocks {
            let piece = z.transpose() * az.submatrix(*r0, 0, z.nrows(), self.cols);
            out.submatrix_mut(row, 0, z.ncols(), self.cols).copy_from(&piece);
            row += z.ncols();
        }
        out
    }
}

/// Pencil eigenvalues, optionally restricted to the moment-free subspace.
fn restricted_pencil(a: &Mat<f64>, b: &Mat<f64>, mesh: &BoundaryMesh, subspace: Subspace, context: &str) -> Result<Vec<f64>> {
    match subspace {
        Subspace::Full => linalg::pencil_eigenvalues(a, b, context),
        Subspace::RigidOrthogonal => {
            let z = MomentFree::new(mesh)?;
            linalg::pencil_eigenvalues(&z.compress(a), &z.compress(b), context)
        }
    }
}

/// Spectrum of `𝕂*` for the kernel of `pair` corrected on `outer`, acting on
/// densities on `mesh`.
pub fn np_spectrum(mesh: &BoundaryMesh, outer: &BoundaryMesh, pair: LamePair, mode: NpMode, subspace: Subspace) -> Result<SpectralReport> {
    let spec = KernelSpec::corrected(Family::Lame(pair), mode.kernel_mode(), outer)?;
    let s = assemble_S(mesh, &spec)?.matrix;
    let k = assemble_Kstar(mesh, &spec)?.matrix;
    let w = mesh.dof_weights();
    let gram = gram_from_single_layer(&s, &w)?;
    let mut ws = s;
    linalg::scale_rows(&mut ws, &w);
    let mut a = &ws * &k;
    drop(ws);
    let asymmetry = linalg::asymmetry(&a);
    a = linalg::symmetrize(&a) * -1.0;
    let ev = restricted_pencil(&a, &gram, mesh, subspace, "single-layer energy Gram")?;
    Ok(SpectralReport::new(mode, subspace, ev, asymmetry, mesh))
}

/// Spectrum of `−Λⁱ𝕊` in the Neumann-corrected energy inner product, where
/// `Λⁱ` is the interior DtN map of `interior` on each component. The
/// quadratic form is `∫ 𝕊φ·Λⁱ𝕊φ`, the interior energy of `𝕊φ`.
pub fn dtn_form_spectrum(mesh: &BoundaryMesh, outer: &BoundaryMesh, pair: LamePair, interior: Family, subspace: Subspace) -> Result<Vec<f64>> {
    let spec = KernelSpec::corrected(Family::Lame(pair), Mode::NeumannCorrected, outer)?;
    let s = assemble_S(mesh, &spec)?.matrix;
    let w = mesh.dof_weights();
    let gram = gram_from_single_layer(&s, &w)?;
    let mut ls = &dtn_interior(mesh, interior)?.matrix * &s;
    linalg::scale_rows(&mut ls, &w);
    let a = linalg::symmetrize(&(s.transpose() * &ls));
    restricted_pencil(&a, &gram, mesh, subspace, "single-layer energy Gram")
}

/// Unit cell `[−½,½]²` with rounded corners.
pub fn smoothed_cell() -> ClosedCurve {
    make_curve(CurveSpec::SmoothedSquare { center: [0.0, 0.0], half_width: 0.5, corner_radius: 0.05 }).expect("valid cell")
}

/// Nodes on the smoothed cell boundary.
pub const CELL_NODES: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CellConstants {
    /// Minimum of the Neumann spectrum on the full space.
    pub m_n: f64,
    /// Maximum of the Dirichlet spectrum on the rigid-orthogonal subspace.
    pub big_m_d: f64,
}

/// `m^N(ω)` and `M^D(ω)` for one inclusion in a given cell curve.
pub fn cell_constants(omega: &ClosedCurve, cell: &ClosedCurve, pair: LamePair, n: usize, n_cell: usize) -> Result<CellConstants> {
    let mesh = mesh_curve(omega, n)?;
    let outer = mesh_curve(cell, n_cell)?;
    let poly = cell.polygon(4 * n_cell);
    if mesh.nodes().any(|p| !crate::geometry::polygon_contains(&poly, *p)) {
        return Err(Error::Invalid("inclusion is not inside the cell".into()));
    }
    let n_rep = np_spectrum(&mesh, &outer, pair, NpMode::Neumann, Subspace::Full)?;
    let d_rep = np_spectrum(&mesh, &outer, pair, NpMode::Dirichlet, Subspace::RigidOrthogonal)?;
    Ok(CellConstants { m_n: n_rep.m, big_m_d: d_rep.big_m })
}

/// Cell constants of `ω` in the smoothed unit cell.
pub fn unit_cell_constants(omega: &ClosedCurve, pair: LamePair, n: usize) -> Result<CellConstants> {
    cell_constants(omega, &smoothed_cell(), pair, n, CELL_NODES)
}

/// Rigid-orthogonal endpoints of both kernels at one period.
#[derive(Clone, Debug, Serialize)]
pub struct GapRow {
    pub eps: f64,
    pub cells: usize,
    pub m_n: f64,
    pub big_m_n: f64,
    pub m_d: f64,
    pub big_m_d: f64,
    /// `min(min(m^N, m^D) + ½, ½ − max(M^N, M^D))`.
    pub delta1: f64,
    #[serde(skip)]
    pub neumann: SpectralReport,
    #[serde(skip)]
    pub dirichlet: SpectralReport,
}

impl GapRow {
    /// `min(m^D − m^N, M^D − M^N)`; non-negative when the orderings hold.
    pub fn ordering_slack(&self) -> f64 {
        (self.m_d - self.m_n).min(self.big_m_d - self.big_m_n)
    }

    /// `min(M^D(ω) − M^D_ε, m^N_ε − m^N(ω))`.
    pub fn cell_slack(&self, cell: &CellConstants) -> f64 {
        (cell.big_m_d - self.big_m_d).min(self.m_n - cell.m_n)
    }
}

pub fn gap_row(outer: &ClosedCurve, omega: &ClosedCurve, pair: LamePair, eps: f64, n_incl: usize, n_outer: usize) -> Result<GapRow> {
    let array = build_array(outer, omega, eps, n_incl, n_outer)?;
    let neumann = np_spectrum(&array.inclusions, &array.outer_mesh, pair, NpMode::Neumann, Subspace::RigidOrthogonal)?;
    let dirichlet = np_spectrum(&array.inclusions, &array.outer_mesh, pair, NpMode::Dirichlet, Subspace::RigidOrthogonal)?;
    let (m_n, big_m_n, m_d, big_m_d) = (neumann.m, neumann.big_m, dirichlet.m, dirichlet.big_m);
    Ok(GapRow {
        eps,
        cells: array.cells.len(),
        m_n,
        big_m_n,
        m_d,
        big_m_d,
        delta1: (m_n.min(m_d) + 0.5).min(0.5 - big_m_n.max(big_m_d)),
        neumann,
        dirichlet,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GapStudy {
    pub cell: CellConstants,
    pub rows: Vec<GapRow>,
}

impl GapStudy {
    /// Gap shared by every period.
    pub fn delta1(&self) -> f64 {
        self.rows.iter().map(|r| r.delta1).fold(f64::INFINITY, f64::min)
    }
}

pub fn gap_study(outer: &ClosedCurve, omega: &ClosedCurve, pair: LamePair, eps_list: &[f64], n_incl: usize, n_outer: usize) -> Result<GapStudy> {
    let cell = unit_cell_constants(omega, pair, n_incl)?;
    let rows = eps_list.iter().map(|&e| gap_row(outer, omega, pair, e, n_incl, n_outer)).collect::<Result<_>>()?;
    Ok(GapStudy { cell, rows })
}
