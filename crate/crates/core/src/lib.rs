//! Numerical lab for the fractional unstable obstacle problem
//!
//! `min ∫_{Ω⁺} |∇v|² x_n^a − 2∫_{Ω′} (λ+v⁺ + λ−v⁻)`, posed on half-domains
//! `Ω⁺ = Ω ∩ {x_n > 0}` with the thin space `Ω′ = Ω ∩ {x_n = 0}`.
//!
//! The crate discretizes the weighted extension problem on structured
//! lattices, computes discrete minimizers, evaluates monotonicity quantities
//! and free boundaries, builds the explicit singular solutions from Riesz
//! potentials, and certifies their instability.

pub mod error;
pub mod field;
pub mod free_boundary;
pub mod functional;
pub mod grid;
pub mod linalg;
pub mod par;
pub mod params;
pub mod quadrature;
pub mod radial;
pub mod reference;
pub mod solver;
pub mod special;
pub mod stability;

pub use error::{Error, Result};
pub use field::ScalarField;
pub use grid::{build_halfball_grid, build_halfbox_grid, build_sector_grid, Domain, Point, WeightedGrid};
pub use params::Params;
