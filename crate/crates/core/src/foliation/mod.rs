//! Distributions spanned by Hamiltonian fields of a commuting family, their
//! singular sets, and the leaves they integrate to.

mod abelian;
mod flow;
mod frame;
mod leaf;

pub use abelian::{compose_pair, prop_abelian_check, AbelianCheck, DEFAULT_ISOTROPY_TOL};
pub use flow::hamiltonian_flow;
pub use frame::{
    distribution_frame, involutivity_residual, isotropy_residual, richness_scan, DistributionFrame, Lattice,
    SingularCell, SingularSetEstimate, DEFAULT_RANK_TOL,
};
pub use leaf::{
    flow_commutation_residual, lagrangian_residual, leafwise_constancy, trace_leaf, LagrangianResidual,
    LeafDiagnostics, LeafGrid, LeafTrace, DEGENERATE_TANGENT,
};

use crate::symbol::SymbolError;
use crate::symplectic::GeometryError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FoliationError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("family has {got} members, need at least {needed}")]
    FamilyTooSmall { needed: usize, got: usize },
    #[error("point {point:?} is singular (sigma_n = {sigma_n:e})")]
    NotRegular { point: Vec<f64>, sigma_n: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("flow left the region at {point:?}")]
    Escaped { point: Vec<f64> },
    #[error("every leaf node through {base:?} escaped the region")]
    AllEscaped { base: Vec<f64> },
    #[error("{{{}, {}}} = {value:e} at {point:?}: level sets are not Lagrangian", names.0, names.1)]
    PreconditionViolated {
        pair: (usize, usize),
        names: (String, String),
        value: f64,
        point: Vec<f64>,
    },
}

impl From<SymbolError> for FoliationError {
    fn from(e: SymbolError) -> Self {
        FoliationError::Geometry(GeometryError::Symbol(e))
    }
}
