//! Numerical and algebraic tools for the kinetic Kolmogorov equation
//!
//! ```text
//! (∂_t + v · ∇_x) f = ∇_v · (a ∇_v f)
//! ```
//!
//! with rough, uniformly elliptic coefficients `a`.

pub mod chains;
pub mod coefficients;
pub mod error;
pub mod geometry;
pub mod nash_g;
pub mod profiles;
pub mod solver;
pub mod trajectories;

pub use error::{Error, Result};
