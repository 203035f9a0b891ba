//! Grid-refinement global optimization for discretized multi-marginal
//! optimal transport with Coulomb cost.
//!
//! The crate is `no_std` (with `alloc`). Enable the `std` feature to get
//! `std::error::Error` impls on the error types.
//!
//! Pipeline overview:
//!
//! 1. [`mesh`] partitions the domain into elements (equal-mass intervals in
//!    1D, quadtree or equal-mass bisection rectangles in 2D).
//! 2. [`assembly`] builds the pairwise cost matrix and the linear operator
//!    `B` describing the feasible set `S`.
//! 3. [`projection`] computes the Euclidean projection onto `S` with a
//!    semismooth Newton method on the dual.
//! 4. [`pbcd`] runs proximal block coordinate descent over the `N - 1`
//!    plan blocks.
//! 5. [`multistart`] globalizes PBCD on the coarsest level.
//! 6. [`grinit`] lifts a coarse plan onto the refined mesh.
//! 7. [`ggr`] ties the levels together.
//! 8. [`diagnostics`] extracts transport maps, measures errors against the
//!    exact 1D co-motion functions and checks first-order optimality.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![warn(missing_docs)]

extern crate alloc;

pub mod assembly;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod ggr;
pub mod grinit;
pub mod linalg;
pub mod mesh;
pub mod multistart;
pub mod pbcd;
pub mod projection;
pub mod quadrature;

pub(crate) mod math;

pub use assembly::{CostRule, PlanSet, ProblemData};
pub use density::{BuiltinSystem, DensitySpec, Domain, Profile};
pub use error::{Error, Result};
pub use linalg::Mat;
pub use mesh::{Cell, Element, Mesh, RefinementMap};
