//! Strang-split time stepping for
//!
//! ```text
//! ∂_t f + s v ∂_x f = ∂_v (a ∂_v f)
//! ```
//!
//! with `s = +1` for the forward equation and `s = -1` for the adjoint
//! companion. One step is half a step of implicit diffusion, a full
//! semi-Lagrangian transport step, and another half diffusion step.

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{Field, Grid};
use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Strang splitting with implicit diffusion half steps.
    ImexStrang,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionScheme {
    /// Second order; substepped so that every substep is positivity preserving.
    CrankNicolson,
    /// First order, unconditionally positivity preserving.
    BackwardEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    /// Four-point Lagrange interpolation, clipped at zero with a
    /// row-mass-preserving rescale.
    ClippedCubic,
    /// Six-point Lagrange interpolation with the same clipping.
    ClippedQuintic,
}

impl Interpolation {
    fn stencil(self) -> usize {
        match self {
            Interpolation::ClippedCubic => 4,
            Interpolation::ClippedQuintic => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportDirection {
    /// `x ← x - v dt`.
    Forward,
    /// `x ← x + v dt`, the adjoint companion equation.
    Reversed,
}

impl TransportDirection {
    fn sign(self) -> f64 {
        match self {
            TransportDirection::Forward => 1.0,
            TransportDirection::Reversed => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Largest allowed time step; runs use the largest `dt' ≤ dt` dividing
    /// the requested interval evenly.
    pub dt: f64,
    pub scheme: Scheme,
    pub interpolation: Interpolation,
    pub diffusion: DiffusionScheme,
    /// Relative residual accepted from the tridiagonal diffusion solves.
    pub diffusion_tol: f64,
    /// Standard deviation of the mollified Dirac datum in grid cells.
    pub w0_cells: f64,
    pub direction: TransportDirection,
    /// Forces sequential reductions so results do not depend on the thread
    /// count. Column solves and row transports are independent and always
    /// bit-reproducible.
    pub deterministic: bool,
}

impl SolverConfig {
    /// Default configuration with the largest `dt` allowed by the transport
    /// CFL bound `dt ≤ Δx / Lv`, scaled by `cfl`.
    pub fn for_grid(grid: &Grid, cfl: f64) -> Self {
        Self {
            dt: cfl * grid.dx() / grid.lv,
            scheme: Scheme::ImexStrang,
            interpolation: Interpolation::ClippedCubic,
            diffusion: DiffusionScheme::CrankNicolson,
            diffusion_tol: 1e-10,
            w0_cells: 3.0,
            direction: TransportDirection::Forward,
            deterministic: true,
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        let cfl = grid.dx() / grid.lv;
        if self.dt > cfl * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "dt = {} violates the transport CFL bound dt <= dx/Lv = {}",
                self.dt, cfl
            )));
        }
        if !(self.w0_cells >= 2.0) {
            return Err(Error::Config(format!("mollification width must be at least 2 cells, got {}", self.w0_cells)));
        }
        if !(self.diffusion_tol > 0.0) {
            return Err(Error::Config("diffusion tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Mollifier standard deviations `(σx, σv)` on `grid`.
    pub fn mollifier_widths(&self, grid: &Grid) -> (f64, f64) {
        (self.w0_cells * grid.dx(), self.w0_cells * grid.dv())
    }
}

/// Solves the tridiagonal system `-l_j f_{j-1} + d_j f_j - u_j f_{j+1} = rhs_j`
/// in place (Thomas algorithm; the matrix is an M-matrix so no pivoting is
/// needed) and returns the relative residual.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64], scratch: &mut [f64]) -> f64 {
    let n = rhs.len();
    let orig: Vec<f64> = rhs.to_vec();
    let mut denom = diag[0];
    scratch[0] = upper[0] / denom;
    rhs[0] /= denom;
    for j in 1..n {
        denom = diag[j] - lower[j] * scratch[j - 1];
        scratch[j] = upper[j] / denom;
        rhs[j] = (rhs[j] + lower[j] * rhs[j - 1]) / denom;
    }
    for j in (0..n - 1).rev() {
        rhs[j] += scratch[j] * rhs[j + 1];
    }
    // componentwise relative residual; the floor keeps subnormal tails from
    // reporting spurious failures
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let mut r = diag[j] * rhs[j] - orig[j];
        let mut size = (diag[j] * rhs[j]).abs() + orig[j].abs();
        if j > 0 {
            r -= lower[j] * rhs[j - 1];
            size += (lower[j] * rhs[j - 1]).abs();
        }
        if j + 1 < n {
            r -= upper[j] * rhs[j + 1];
            size += (upper[j] * rhs[j + 1]).abs();
        }
        worst = worst.max(r.abs() / size.max(1e-250));
    }
    worst
}

/// Implicit step of length `h` for `∂_t f = ∂_v(a ∂_v f)` in every
/// `x`-column, with `a` frozen at time `t_coef`. Face coefficients are
/// harmonic means of the adjacent node values; the wall fluxes vanish.
///
/// Crank-Nicolson substeps are sized so the explicit half keeps a
/// nonnegative diagonal, which makes every substep positivity preserving.
fn diffuse(
    values: &mut Array2<f64>,
    grid: &Grid,
    a: &CoefficientField,
    t_coef: f64,
    h: f64,
    config: &SolverConfig,
) -> Result<()> {
    let nv = grid.nv;
    let rdv2 = h / (grid.dv() * grid.dv());
    let vs = grid.vs();
    let theta = match config.diffusion {
        DiffusionScheme::CrankNicolson => 0.5,
        DiffusionScheme::BackwardEuler => 1.0,
    };
    let mut cols = values.t().as_standard_layout().into_owned();
    let worst = cols
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .map(|(i, mut col)| {
            let x = grid.x(i);
            let node: Vec<f64> = vs.iter().map(|&v| a.value(t_coef, x, v)).collect();
            let face: Vec<f64> =
                (0..nv - 1).map(|j| rdv2 * 2.0 * node[j] * node[j + 1] / (node[j] + node[j + 1])).collect();
            let mut substeps = 1usize;
            if theta < 1.0 {
                let mut load: f64 = 0.0;
                for j in 0..nv {
                    let left = if j > 0 { face[j - 1] } else { 0.0 };
                    let right = if j + 1 < nv { face[j] } else { 0.0 };
                    load = load.max((1.0 - theta) * (left + right));
                }
                substeps = load.ceil().max(1.0) as usize;
            }
            let m = substeps as f64;
            let mut lower = vec![0.0; nv];
            let mut upper = vec![0.0; nv];
            let mut diag = vec![1.0; nv];
            for j in 0..nv - 1 {
                let r = theta * face[j] / m;
                upper[j] = r;
                lower[j + 1] = r;
                diag[j] += r;
                diag[j + 1] += r;
            }
            let col = col.as_slice_mut().expect("standard layout column");
            let mut scratch = vec![0.0; nv];
            let mut flux = vec![0.0; nv - 1];
            let mut worst: f64 = 0.0;
            for _ in 0..substeps {
                if theta < 1.0 {
                    let e = (1.0 - theta) / m;
                    for j in 0..nv - 1 {
                        flux[j] = e * face[j] * (col[j + 1] - col[j]);
                    }
                    for j in 0..nv - 1 {
                        col[j] += flux[j];
                        col[j + 1] -= flux[j];
                    }
                }
                worst = worst.max(solve_tridiagonal(&lower, &diag, &upper, col, &mut scratch));
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    if !(worst <= config.diffusion_tol) {
        return Err(Error::Solver(format!(
            "implicit diffusion solve did not converge: relative residual {worst:.3e} > {:.1e}",
            config.diffusion_tol
        )));
    }
    values.assign(&cols.t());
    Ok(())
}

/// Lagrange weights on the nodes `1 - width/2, ..., width/2` for the point
/// `q ∈ [0, 1]`.
fn lagrange_weights(q: f64, width: usize) -> Vec<f64> {
    let first = 1 - (width as i64) / 2;
    let nodes: Vec<f64> = (0..width as i64).map(|m| (first + m) as f64).collect();
    nodes
        .iter()
        .enumerate()
        .map(|(m, &xm)| {
            nodes.iter().enumerate().filter(|&(l, _)| l != m).map(|(_, &xl)| (q - xl) / (xm - xl)).product()
        })
        .collect()
}

#[cfg(test)]
#[inline]
fn cubic_weights(q: f64) -> [f64; 4] {
    [
        -q * (q - 1.0) * (q - 2.0) / 6.0,
        (q + 1.0) * (q - 1.0) * (q - 2.0) / 2.0,
        -(q + 1.0) * q * (q - 2.0) / 2.0,
        (q + 1.0) * q * (q - 1.0) / 6.0,
    ]
}

/// Shifts every velocity row by `s v_j dt` with periodic cubic interpolation.
/// Negative undershoots are clipped and the row rescaled to its previous sum,
/// so the step is positivity-preserving and conservative row by row.
fn transport(values: &mut Array2<f64>, grid: &Grid, dt: f64, sign: f64, width: usize) {
    let nx = grid.nx;
    let dx = grid.dx();
    values.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(j, mut row)| {
        let shift = sign * grid.v(j) * dt / dx;
        let k = shift.floor();
        let q = 1.0 - (shift - k);
        let w = lagrange_weights(q, width);
        // first stencil node for output node i is i - k - width/2, kept non-negative
        let offset = (-(k as i64) - (width / 2) as i64).rem_euclid(nx as i64) as usize;
        let old: Vec<f64> = row.to_vec();
        let before: f64 = old.iter().sum();
        let mut clipped = false;
        for (i, out) in row.iter_mut().enumerate() {
            let b = i + offset;
            let val: f64 = w.iter().enumerate().map(|(m, wm)| wm * old[(b + m) % nx]).sum();
            if val < 0.0 {
                clipped = true;
                *out = 0.0;
            } else {
                *out = val;
            }
        }
        if clipped {
            let after: f64 = row.iter().sum();
            if after > 0.0 && before > 0.0 {
                let s = before / after;
                row.mapv_inplace(|v| v * s);
            }
        }
    });
}

/// Advances `state` by one step of length `dt`.
pub fn step_with_dt(
    state: &Field,
    grid: &Grid,
    field: &CoefficientField,
    config: &SolverConfig,
    dt: f64,
) -> Result<Field> {
    state.check_shape(grid)?;
    let t = state.t;
    let half = 0.5 * dt;
    let mut values = state.values.clone();
    diffuse(&mut values, grid, field, t + 0.5 * half, half, config)?;
    transport(&mut values, grid, dt, config.direction.sign(), config.interpolation.stencil());
    diffuse(&mut values, grid, field, t + half + 0.5 * half, half, config)?;
    Ok(Field { t: t + dt, values })
}

/// One step of length `config.dt`.
pub fn step(state: &Field, grid: &Grid, field: &CoefficientField, config: &SolverConfig) -> Result<Field> {
    config.validate(grid)?;
    step_with_dt(state, grid, field, config, config.dt)
}

/// Per-run bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub steps: usize,
    pub dt: f64,
    pub initial_mass: f64,
    /// Largest `|mass(t) - mass(0)|` over all step ends.
    pub mass_drift: f64,
    /// Smallest value seen at any step end.
    pub min_value: f64,
}

/// Evolves `initial` to `t_end`, calling `observe` after every step.
pub fn evolve(
    initial: &Field,
    t_end: f64,
    grid: &Grid,
    field: &CoefficientField,
    config: &SolverConfig,
    mut observe: impl FnMut(&Field),
) -> Result<(Field, RunRecord)> {
    config.validate(grid)?;
    initial.check_shape(grid)?;
    let span = t_end - initial.t;
    if !(span >= 0.0) {
        return Err(Error::Domain(format!("cannot evolve backwards from {} to {}", initial.t, t_end)));
    }
    let steps = if span == 0.0 { 0 } else { (span / config.dt - 1e-9).ceil().max(1.0) as usize };
    let dt = if steps == 0 { 0.0 } else { span / steps as f64 };
    let initial_mass = initial.mass(grid);
    let mut record = RunRecord { steps, dt, initial_mass, mass_drift: 0.0, min_value: initial.min() };
    let mut state = initial.clone();
    for n in 0..steps {
        state = step_with_dt(&state, grid, field, config, dt)?;
        if n + 1 == steps {
            state.t = t_end;
        }
        record.mass_drift = record.mass_drift.max((state.mass(grid) - initial_mass).abs());
        record.min_value = record.min_value.min(state.min());
        observe(&state);
    }
    if !state.all_finite() {
        return Err(Error::Solver("non-finite values after evolution".into()));
    }
    Ok((state, record))
}
