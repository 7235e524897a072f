//! Finite-volume / semi-Lagrangian solver for the one-dimensional kinetic
//! equation on a periodic-in-`x`, walled-in-`v` box.

mod grid;
mod kernel;
mod scheme;

pub use grid::{diagnostics, Diagnostics, Field, Grid};
pub use kernel::{
    chapman_kolmogorov_residual, estimate_kernel, estimate_kernel_observed, estimate_kernel_with_widths, init_delta,
    scaling_identity_residual, superpose_deltas, ChapmanKolmogorovReport, KernelEstimate, WALL_CLEARANCE,
};
pub use scheme::{
    evolve, step, step_with_dt, DiffusionScheme, Interpolation, RunRecord, Scheme, SolverConfig, TransportDirection,
};
