//! Adaptive ALE residual-distribution solver for the 2D unsteady Euler equations.
//!
//! The crate is organized around the pipeline of an adaptive moving-mesh run:
//!
//! - [`gas`]: polytropic ideal-gas thermodynamics and Euler flux algebra
//!   (fluxes, projected Jacobians, eigendecompositions, entropy variables).
//! - [`mesh`]: conforming triangular meshes with nodal normals, median-dual
//!   metrics and a validation report.
//! - [`ale`]: swept-area bookkeeping and the GCL-compliant interface
//!   velocities it induces.
//! - [`adapt`]: interpolation-free local adaptation (edge split, node
//!   deletion, edge swap) expressed as collapse-expansion deformations,
//!   Hessian-based sizing and spring-analogy mesh deformation.
//! - [`solver`]: the residual-distribution discretization itself with
//!   Lax-Friedrichs splitting, a bounded second-order distribution map,
//!   stabilization, weak boundary residuals and the implicit pseudo-time
//!   relaxation.
//! - [`cases`]: benchmark definitions with their analytic oracles.
//! - [`io`] and [`driver`]: configuration, Gmsh/VTK/CSV I/O and the
//!   run loop tying everything together.
//!
//! All numerics are generic over the scalar type through [`Real`];
//! concrete `f64` aliases are exported at the crate root.

pub mod adapt;
pub mod ale;
pub mod cases;
pub mod driver;
pub mod error;
pub mod gas;
pub mod io;
pub mod mesh;
pub mod solver;

pub use error::{Error, Result};


use num_traits::FromPrimitive;

/// Scalar type the solver is generic over: `f32` or `f64`.
pub trait Real:
    nalgebra::RealField + FromPrimitive + Copy + Send + Sync + std::fmt::LowerExp + 'static
{
    /// Shorthand for converting an `f64` literal into the scalar type.
    fn cst(v: f64) -> Self {
        Self::from_f64(v).expect("literal not representable in scalar type")
    }
}

impl<T> Real for T where
    T: nalgebra::RealField + FromPrimitive + Copy + Send + Sync + std::fmt::LowerExp + 'static
{
}

/// 2D point / vector in mesh space.
pub type Vec2<T> = nalgebra::Vector2<T>;
/// 4-vector of conserved quantities or residuals.
pub type Vec4<T> = nalgebra::Vector4<T>;
/// 4x4 matrix (Jacobians, eigenvector matrices).
pub type Mat4<T> = nalgebra::Matrix4<T>;

// Concrete double-precision aliases.
pub type GasParameters64 = gas::GasParameters<f64>;
pub type ConservativeState64 = gas::ConservativeState<f64>;
pub type PrimitiveState64 = gas::PrimitiveState<f64>;
pub type Mesh64 = mesh::Mesh<f64>;
pub type SweptAreaLedger64 = ale::SweptAreaLedger<f64>;
pub type MetricField64 = adapt::MetricField<f64>;
pub type SchemeConfig64 = solver::SchemeConfig<f64>;
pub type CaseDefinition64 = cases::CaseDefinition<f64>;
pub type RunConfig64 = io::config::RunConfig<f64>;


