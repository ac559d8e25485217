//! Thin dense linear-algebra layer over faer.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// LU factorization with a pivot-ratio conditioning guard.
pub struct Lu {
    lu: PartialPivLu<f64>,
    n: usize,
    pub condition: f64,
}

impl Lu {
    pub fn new(a: &Mat<f64>, context: &str) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::Invalid(format!("{context}: non-square matrix")));
        }
        if a.col_iter().flat_map(|c| c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Singular { context: context.into(), condition: f64::INFINITY });
        }
        let lu = a.partial_piv_lu();
        let u = lu.U();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let d = u[(i, i)].abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition < 1e14) {
            return Err(Error::Singular { context: context.into(), condition });
        }
        Ok(Self { lu, n, condition })
    }

    pub fn solve(&self, b: &Mat<f64>) -> Mat<f64> {
        self.lu.solve(b)
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        col_to_vec(&self.lu.solve(&vec_to_col(b)))
    }

    /// Explicit inverse.
    pub fn inverse(&self) -> Mat<f64> {
        self.lu.solve(&Mat::<f64>::identity(self.n, self.n))
    }
}

impl std::fmt::Debug for Lu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Lu {{ n: {}, condition: {:.3e} }}", self.n, self.condition)
    }
}

pub fn vec_to_col(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

pub fn col_to_vec(m: &Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

pub fn matvec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.ncols(), x.len());
    let mut y = vec![0.0; a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        for (yi, aij) in y.iter_mut().zip(a.col(j).iter()) {
            *yi += aij * xj;
        }
    }
    y
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn transpose(a: &Mat<f64>) -> Mat<f64> {
    a.transpose().to_owned()
}

pub fn frobenius(a: &Mat<f64>) -> f64 {
    a.norm_l2()
}

/// (A + Aᵀ)/2.
pub fn symmetrize(a: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

/// ‖A − Aᵀ‖_F / ‖A‖_F.
pub fn asymmetry(a: &Mat<f64>) -> f64 {
    let n = a.nrows();
    let mut num = 0.0;
    for j in 0..n {
        for i in 0..n {
            let d = a[(i, j)] - a[(j, i)];
            num += d * d;
        }
    }
    num.sqrt() / frobenius(a)
}

/// Scales row i by d[i].
pub fn scale_rows(a: &mut Mat<f64>, d: &[f64]) {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            a[(i, j)] *= d[i];
        }
    }
}

/// Scales column j by d[j].
pub fn scale_cols(a: &mut Mat<f64>, d: &[f64]) {
    for j in 0..a.ncols() {
        let s = d[j];
        for i in 0..a.nrows() {
            a[(i, j)] *= s;
        }
    }
}

pub fn add_diagonal(a: &mut Mat<f64>, s: f64) {
    for i in 0..a.nrows().min(a.ncols()) {
        a[(i, i)] += s;
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &Mat<f64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
pub fn sym_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let e = a.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let vals = e.S().column_vector().iter().copied().collect();
    Ok((vals, e.U().to_owned()))
}

/// Minimum-norm least-squares solution of `a x = b` keeping the `rank`
/// largest singular values; also returns all singular values, descending.
pub fn truncated_solve(a: &Mat<f64>, b: &[f64], rank: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let svd = a.thin_svd().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let (u, v) = (svd.U(), svd.V());
    let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let mut x = vec![0.0; a.ncols()];
    for k in 0..rank.min(s.len()) {
        let c: f64 = (0..a.nrows()).map(|i| u[(i, k)] * b[i]).sum::<f64>() / s[k];
        for (j, xj) in x.iter_mut().enumerate() {
            *xj += c * v[(j, k)];
        }
    }
    Ok((x, s))
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &Mat<f64>, context: &str) -> Result<Mat<f64>> {
    let llt = a.llt(Side::Lower).map_err(|_| Error::Indefinite(context.into()))?;
    Ok(llt.L().to_owned())
}

/// Eigenvalues θ of the symmetric-definite pencil A v = θ B v, ascending.
pub fn pencil_eigenvalues(a: &Mat<f64>, b: &Mat<f64>, context: &str) -> Result<Vec<f64>> {
    let l = cholesky(b, context)?;
    let mut c = a.clone();
    l.solve_lower_triangular_in_place(c.as_mut());
    let mut ct = transpose(&c);
    l.solve_lower_triangular_in_place(ct.as_mut());
    sym_eigenvalues(&symmetrize(&ct))
}

/// Orthonormal basis of the orthogonal complement of the column span of `c`
/// (c has full column rank).
pub fn orthogonal_complement(c: &Mat<f64>) -> Result<Mat<f64>> {
    let (m, k) = (c.nrows(), c.ncols());
    let p = c * c.transpose();
    let (vals, vecs) = sym_eigen(&p)?;
    let top = vals.last().copied().unwrap_or(0.0).abs().max(1e-300);
    if vals[m - k] < 1e-12 * top {
        return Err(Error::Singular { context: "rank-deficient constraints".into(), condition: top / vals[m - k].abs() });
    }
    Ok(vecs.submatrix(0, 0, m, m - k).to_owned())
}
