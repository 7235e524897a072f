use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Uniform phase-space grid for `d = 1`.
///
/// Nodes are `x_i = -Lx + i Δx` (`i < Nx`, periodic, `Δx = 2Lx/Nx`) and
/// `v_j = -Lv + j Δv` (`j < Nv`, `Δv = 2Lv/Nv`). Each velocity node owns the
/// cell `[v_j - Δv/2, v_j + Δv/2)`; the zero-flux walls sit on the outer faces
/// of the first and last cells. The origin is always a node when `Nx`, `Nv`
/// are even.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lx: f64,
    pub lv: f64,
    pub nx: usize,
    pub nv: usize,
}

impl Grid {
    pub fn new(lx: f64, lv: f64, nx: usize, nv: usize) -> Result<Self> {
        if !(lx > 0.0 && lv > 0.0) || !lx.is_finite() || !lv.is_finite() {
            return domain(format!("box half-widths must be positive, got ({lx}, {lv})"));
        }
        if nx < 16 || nv < 16 {
            return domain(format!("resolution must be at least 16 per axis, got ({nx}, {nv})"));
        }
        Ok(Self { lx, lv, nx, nv })
    }

    /// Square `n × n` grid.
    pub fn square(lx: f64, lv: f64, n: usize) -> Result<Self> {
        Self::new(lx, lv, n, n)
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        2.0 * self.lx / self.nx as f64
    }

    #[inline]
    pub fn dv(&self) -> f64 {
        2.0 * self.lv / self.nv as f64
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dv()
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        -self.lx + i as f64 * self.dx()
    }

    #[inline]
    pub fn v(&self, j: usize) -> f64 {
        -self.lv + j as f64 * self.dv()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn vs(&self) -> Vec<f64> {
        (0..self.nv).map(|j| self.v(j)).collect()
    }

    /// Velocity of the lower and upper zero-flux walls.
    pub fn v_walls(&self) -> (f64, f64) {
        let h = 0.5 * self.dv();
        (-self.lv - h, self.lv - h)
    }

    /// Signed periodic distance `x - y` reduced to `[-Lx, Lx)`.
    #[inline]
    pub fn periodic_offset(&self, x: f64, y: f64) -> f64 {
        let p = 2.0 * self.lx;
        (x - y + self.lx).rem_euclid(p) - self.lx
    }

    /// The same grid dilated to time gap `τ` from a unit gap:
    /// `Lx ↦ τ^{3/2} Lx`, `Lv ↦ τ^{1/2} Lv`.
    pub fn kinetic_scaled(&self, tau: f64) -> Result<Self> {
        Self::new(self.lx * tau.powf(1.5), self.lv * tau.sqrt(), self.nx, self.nv)
    }
}

/// Grid values at a time stamp. Rows are indexed by velocity, columns by
/// position: `values[[j, i]] ≈ f(t, x_i, v_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub t: f64,
    pub values: Array2<f64>,
}

/// Quadrature summaries of a field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub mass: f64,
    /// `∫ |(y, w)| f`.
    pub first_moment: f64,
    /// `(∫ y f, ∫ w f) / ∫ f`, zero for a zero field.
    pub mean: [f64; 2],
}

impl Field {
    pub fn zeros(grid: &Grid, t: f64) -> Self {
        Self { t, values: Array2::zeros((grid.nv, grid.nx)) }
    }

    /// Samples `f(x, v)` at every node.
    pub fn from_fn(grid: &Grid, t: f64, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = Array2::from_shape_fn((grid.nv, grid.nx), |(j, i)| f(grid.x(i), grid.v(j)));
        Self { t, values }
    }

    pub fn check_shape(&self, grid: &Grid) -> Result<()> {
        if self.values.dim() != (grid.nv, grid.nx) {
            return domain(format!(
                "field shape {:?} does not match grid ({}, {})",
                self.values.dim(),
                grid.nv,
                grid.nx
            ));
        }
        Ok(())
    }

    pub fn mass(&self, grid: &Grid) -> f64 {
        self.values.iter().sum::<f64>() * grid.cell_area()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Grid index `(j, i)` of the largest value (first on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut m = f64::NEG_INFINITY;
        for ((j, i), &val) in self.values.indexed_iter() {
            if val > m {
                m = val;
                best = (j, i);
            }
        }
        best
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `∫ |f - g|`.
    pub fn l1_distance(&self, other: &Field, grid: &Grid) -> f64 {
        self.values.iter().zip(other.values.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>() * grid.cell_area()
    }

    /// `∫ |f - g|` against a function sampled at the nodes.
    pub fn l1_distance_to(&self, grid: &Grid, g: impl Fn(f64, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for ((j, i), val) in self.values.indexed_iter() {
            acc += (val - g(grid.x(i), grid.v(j))).abs();
        }
        acc * grid.cell_area()
    }

    /// Bilinear interpolation with periodic wrap in `x`. Points beyond the
    /// outermost velocity nodes take the value of the nearest row.
    pub fn sample(&self, grid: &Grid, x: f64, v: f64) -> f64 {
        let fx = (x + grid.lx).rem_euclid(2.0 * grid.lx) / grid.dx();
        let i0 = (fx.floor() as usize).min(grid.nx - 1);
        let ax = fx - i0 as f64;
        let i1 = (i0 + 1) % grid.nx;
        let fv = ((v + grid.lv) / grid.dv()).clamp(0.0, (grid.nv - 1) as f64);
        let j0 = (fv.floor() as usize).min(grid.nv - 2);
        let av = fv - j0 as f64;
        let j1 = j0 + 1;
        let f = &self.values;
        (1.0 - av) * ((1.0 - ax) * f[[j0, i0]] + ax * f[[j0, i1]]) + av * ((1.0 - ax) * f[[j1, i0]] + ax * f[[j1, i1]])
    }

    pub fn diagnostics(&self, grid: &Grid) -> Diagnostics {
        let mut mass = 0.0;
        let mut moment = 0.0;
        let (mut mx, mut mv) = (0.0, 0.0);
        for ((j, i), &f) in self.values.indexed_iter() {
            let (x, v) = (grid.x(i), grid.v(j));
            mass += f;
            moment += f * (x * x + v * v).sqrt();
            mx += f * x;
            mv += f * v;
        }
        let area = grid.cell_area();
        let mean = if mass != 0.0 { [mx / mass, mv / mass] } else { [0.0, 0.0] };
        Diagnostics { mass: mass * area, first_moment: moment * area, mean }
    }

    /// Largest value on the velocity walls and the periodic seam, relative
    /// to the peak.
    pub fn boundary_tail_ratio(&self) -> f64 {
        let peak = self.max();
        if !(peak > 0.0) {
            return 0.0;
        }
        let (nv, nx) = self.values.dim();
        let mut edge: f64 = 0.0;
        for i in 0..nx {
            edge = edge.max(self.values[[0, i]]).max(self.values[[nv - 1, i]]);
        }
        for j in 0..nv {
            edge = edge.max(self.values[[j, 0]]);
        }
        edge / peak
    }
}

/// `mass` and `first_moment` of a field.
pub fn diagnostics(f: &Field, grid: &Grid) -> Diagnostics {
    f.diagnostics(grid)
}
