//! Numerical laboratory for a degenerate random porous-medium equation
//! coupled pointwise to a scalar Itô SDE.
//!
//! The PDE `∂_t β(c) = Δc + f(c, y)` is discretised in space on the unit
//! cube with standard finite differences and stepped explicitly in the
//! conservative variable `v = β(c)`. At every node the SDE
//! `dy = a(y) dW + b(c, y) dt` is driven by one shared scalar Wiener
//! process. On top of the solver sit pathwise Malliavin-derivative
//! propagation, tabulated regularising transformations and a harness that
//! measures the a priori estimates that control compactness of the scheme.
//!
//! Module map:
//!
//! * [`grid`]: discrete cube, difference operators, discrete norms.
//! * [`interp`]: projection and piecewise-constant / polyaffine splines.
//! * [`model`]: coefficient functions, assumption checks, `R₂`, `β_ε`.
//! * [`simulate`]: Wiener paths, the explicit scheme, trajectories, RPME1 I/O.
//! * [`malliavin`]: variational equations and a Cameron–Martin oracle.
//! * [`transform`]: `Φ_p`, `Ψ_p`, the boundary weight `γ`.
//! * [`analysis`]: estimate reports, refinement and ε studies.

pub mod analysis;
pub mod error;
pub mod grid;
pub mod interp;
pub mod malliavin;
pub mod model;
pub mod simulate;
pub mod transform;

pub use error::{Error, Result};
pub use grid::{BoundaryKind, Field, GridSpec};
pub use model::{Beta, CoefficientSet, Diffusion, Drift, Source};
pub use simulate::{InitialData, SimulationConfig, SystemState, Trajectory, WienerPath};
