//! Numerics for a fast-slow reaction-diffusion system near a transcritical
//! singularity: spectral Galerkin truncations, blow-up charts, quadratic
//! center-manifold expansions with an independent oracle, adaptive
//! integration with section events, and a chart-switching passage tracker.

// Negated float comparisons reject NaN; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod charts;
pub mod error;
pub mod jet;
pub mod manifolds;
pub mod model;
pub mod ode;
pub mod passage;
pub mod pdecheck;
pub mod spectral;

pub use error::{Error, Result};
