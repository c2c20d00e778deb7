//! Reachability of states and hermitian functionals under unital completely
//! positive maps on finite-dimensional von Neumann algebras `⊕ᵢ M_{nᵢ}`.
//!
//! The crate decides when a functional `ρ` can be written as `ω ∘ φ` (or lies
//! in the closure of such functionals) for `φ` a unital completely positive
//! map with Kraus operators in the algebra, and constructs such maps:
//!
//! - [`algebra`]: block algebras, elements, the center and the ideal lattice.
//! - [`functional`]: hermitian functionals as block densities, Jordan parts,
//!   supports, ideal norms and the factorization through the center.
//! - [`channel`]: Kraus maps, Choi matrices of center-module maps, conversions.
//! - [`reachability`]: decision procedures, the explicit transport map and the
//!   maximal-mixedness check.
//! - [`exact_channel`]: exact reachability by a channel through the GNS
//!   representation and a commutant-extension feasibility problem.
//! - [`numerics`]: Jacobi eigensolver, PSD projections, Dykstra feasibility.
//! - [`oracle`]: independent brute-force validators and random instances.
//! - [`io`] / [`report`]: JSON file formats and decision reports.
//! - [`acceptance`]: seeded property suites shared by tests and the CLI.

pub mod acceptance;
pub mod algebra;
pub mod channel;
mod error;
pub mod exact_channel;
pub mod functional;
pub mod io;
pub mod numerics;
pub mod oracle;
pub mod reachability;
pub mod report;
mod tolerance;

pub use algebra::{AlgebraSpec, CenterElement, Element, Ideal, IdealLattice};
pub use channel::{KrausMap, ModuleMapChoi};
pub use error::{Error, Result};
pub use functional::{CentralDecomposition, Functional, JordanPair};
pub use numerics::{CMatrix, C64};
pub use reachability::{Decision, Verdict};
pub use tolerance::Tolerances;
