//! Composite objectives, sparse matrices and the cubic-regularized quadratic.

pub mod composite;
pub mod instance;
pub mod sparse;
pub mod vector;

pub use composite::{check_lipschitz_along_subspace, CompositeProblem, FnProblem};
pub use instance::{eval_gradient, eval_objective, CubicQuadraticInstance, InstanceFile};
pub use sparse::{spectral_norm, SparseMatrix, Triplets};
pub use vector::Vector;
