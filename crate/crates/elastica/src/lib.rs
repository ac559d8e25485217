//! Boundary-integral toolkit for 2D linear elasticity with periodic arrays of
//! high-contrast inclusions.
//!
//! The crate assembles single-layer and Neumann–Poincaré operators for the
//! Lamé and Stokes systems on smooth closed curves (Nyström discretization
//! with spectral treatment of the logarithmic and Cauchy singularities),
//! solves transmission and high-contrast limit problems through
//! Dirichlet-to-Neumann maps, and computes Neumann–Poincaré spectra in the
//! energy inner product.
//!
//! ```
//! use elastica_np::geometry::{build_array, make_curve, CurveSpec};
//! use elastica_np::kernels::LamePair;
//! use elastica_np::solvers::{error_snorm, Assembly, LoadSpec};
//!
//! # fn main() -> elastica_np::error::Result<()> {
//! let outer = make_curve(CurveSpec::Circle { center: [0.0, 0.0], radius: 2.0 })?;
//! let omega = make_curve(CurveSpec::Circle { center: [0.0, 0.0], radius: 0.25 })?;
//! let array = build_array(&outer, &omega, 1.0, 32, 128)?;
//! let asm = Assembly::new(&array, LamePair::new(1.0, 1.0)?)?;
//! let load = LoadSpec::new([[1.0, 0.0], [0.0, -1.0]])?;
//! let stiff = asm.transmission(LamePair::new(1.0, 1e3)?, &load)?;
//! let rigid = asm.limit_rigid(&load)?;
//! assert!(error_snorm(&stiff, &rigid)? < 1e-2 * asm.load_norm(&asm.background(&load)));
//! # Ok(())
//! # }
//! ```

pub mod cli;
pub mod error;
pub mod geometry;
pub mod kernels;
pub(crate) mod linalg;
pub mod potentials;
pub mod solvers;
pub mod spectra;

#[cfg(test)]
#[path = "../tests/common/quadrature.rs"]
mod quadrature;

pub use error::{Error, Result};
