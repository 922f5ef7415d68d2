//! Continuous Lagrange finite elements (P1, P2) on structured triangle meshes.
//!
//! Assembly uses the degree-5 rule and error norms the degree-7 rule. All
//! global matrices share the sparsity pattern computed once per
//! [`FunctionSpace`], and element contributions are added in element order,
//! so repeated assemblies are bitwise identical.

mod assembly;
mod basis;
mod norms;
mod quadrature;
mod space;

pub use assembly::{
    apply_dirichlet, apply_dirichlet_values, assemble_load, assemble_load_from_qp, assemble_mass,
    assemble_mass_from_qp, assemble_mass_from_qp_into, assemble_stiffness, element_mass, element_stiffness,
    interpolate, l2_project, MassWeight,
};
pub use basis::{reference_basis, reference_nodes};
pub use norms::{error_norms, ErrorNorms, ExactSolution};
pub use quadrature::{quad_rule, QuadRule};
pub use space::{FEField, FunctionSpace, QuadCache};

use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::mesh::MeshError;
use crate::sparse::SparseError;

/// Quadrature degree used for assembly.
pub const ASSEMBLY_QUAD_DEGREE: usize = 5;
/// Quadrature degree used for error norms.
pub const ERROR_QUAD_DEGREE: usize = 7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FemError {
    #[error("unsupported quadrature degree {0} (supported: 2, 5, 7)")]
    UnsupportedQuadrature(usize),
    #[error("unsupported element degree {0} (supported: 1, 2)")]
    UnsupportedDegree(usize),
    #[error("field belongs to a different function space")]
    MismatchedSpace,
    #[error("vector length {got} does not match {expected} degrees of freedom")]
    Length { expected: usize, got: usize },
    #[error("diffusion coefficient must be positive, got {0}")]
    NonPositiveDiffusion(f64),
    #[error("point ({x}, {y}) lies outside the mesh")]
    OutsideDomain { x: f64, y: f64 },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Degree {
    P1,
    P2,
}

impl Degree {
    pub fn from_order(k: usize) -> Result<Self, FemError> {
        match k {
            1 => Ok(Degree::P1),
            2 => Ok(Degree::P2),
            other => Err(FemError::UnsupportedDegree(other)),
        }
    }

    pub fn order(self) -> usize {
        match self {
            Degree::P1 => 1,
            Degree::P2 => 2,
        }
    }

    pub fn local_dofs(self) -> usize {
        match self {
            Degree::P1 => 3,
            Degree::P2 => 6,
        }
    }
}

/// Anything that can be sampled at `(t, x, y)`.
pub trait ScalarField: Sync {
    fn value(&self, t: f64, x: f64, y: f64) -> Result<f64, ExprError>;
}

impl ScalarField for Expr {
    fn value(&self, t: f64, x: f64, y: f64) -> Result<f64, ExprError> {
        self.eval(t, x, y)
    }
}

impl<F> ScalarField for F
where
    F: Fn(f64, f64, f64) -> f64 + Sync,
{
    fn value(&self, t: f64, x: f64, y: f64) -> Result<f64, ExprError> {
        Ok(self(t, x, y))
    }
}
