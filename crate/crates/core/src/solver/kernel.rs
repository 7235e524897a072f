use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::grid::{Field, Grid};
use super::scheme::{evolve, RunRecord, SolverConfig};
use crate::coefficients::{CoefficientField, FieldDescriptor};
use crate::error::{domain, Result};
use crate::geometry::{NormalizedGap, PhasePoint};
use crate::profiles::{envelope_sample_offsets, KineticGaussian};

/// Number of standard deviations the mollified delta must keep from the
/// velocity walls.
pub const WALL_CLEARANCE: f64 = 4.0;

fn bump_1d(n: usize, node: impl Fn(usize) -> f64, center: f64, width: f64, periodic: Option<f64>) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let mut d = node(i) - center;
            if let Some(p) = periodic {
                d = (d + 0.5 * p).rem_euclid(p) - 0.5 * p;
            }
            (-0.5 * d * d / (width * width)).exp()
        })
        .collect()
}

/// Gaussian bump of standard deviations `widths = (σx, σv)` centred at
/// `(y, w)`, normalized to unit discrete mass. Periodic in `x`.
pub fn init_delta(center: (f64, f64), widths: (f64, f64), grid: &Grid, t: f64) -> Result<Field> {
    let (y, w) = center;
    let (sx, sv) = widths;
    if !(sx > 0.0 && sv > 0.0) {
        return domain(format!("mollifier widths must be positive, got ({sx}, {sv})"));
    }
    let (lo, hi) = grid.v_walls();
    if w - WALL_CLEARANCE * sv < lo || w + WALL_CLEARANCE * sv > hi {
        return domain(format!(
            "source velocity {w} is closer than {WALL_CLEARANCE} widths ({sv}) to the velocity walls [{lo}, {hi}]"
        ));
    }
    if WALL_CLEARANCE * sx > grid.lx {
        return domain(format!("position width {sx} is too large for the periodic box half-width {}", grid.lx));
    }
    let bx = bump_1d(grid.nx, |i| grid.x(i), y, sx, Some(2.0 * grid.lx));
    let bv = bump_1d(grid.nv, |j| grid.v(j), w, sv, None);
    let mut values = Array2::from_shape_fn((grid.nv, grid.nx), |(j, i)| bv[j] * bx[i]);
    let mass = values.sum() * grid.cell_area();
    values.mapv_inplace(|f| f / mass);
    Ok(Field { t, values })
}

/// A gridded approximation of `Γ(t, ·, ·, s, y, w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub source: PhasePoint,
    pub t: f64,
    pub field: Field,
    pub descriptor: FieldDescriptor,
    pub grid: Grid,
    pub config: SolverConfig,
    /// Mollifier standard deviations `(σx, σv)` of the initial datum.
    pub widths: (f64, f64),
    pub run: RunRecord,
    /// Largest value on the walls and seam relative to the peak.
    pub boundary_tail_ratio: f64,
}

impl KernelEstimate {
    pub fn mass_drift(&self) -> f64 {
        self.run.mass_drift
    }

    pub fn min_value(&self) -> f64 {
        self.run.min_value
    }

    /// `Γ` at `(x, v)` by bilinear interpolation.
    pub fn sample(&self, x: f64, v: f64) -> f64 {
        self.field.sample(&self.grid, x, v)
    }

    /// Kernel values at the normalized offsets of
    /// [`envelope_sample_offsets`], ready for [`crate::profiles::fit_envelope`].
    pub fn envelope_samples(&self, e_max: f64, per_axis: usize) -> Result<Vec<(NormalizedGap, f64)>> {
        let tau = self.t - self.source.t;
        let (y, w) = (self.source.x[0], self.source.v[0]);
        let (sx, sv) = (tau.powf(1.5), tau.sqrt());
        envelope_sample_offsets(e_max, per_axis)
            .into_iter()
            .map(|(xb, vb)| {
                let (big_x, big_v) = (sx * xb, sv * vb);
                let value = self.sample(y + tau * w + big_x, w + big_v);
                Ok((NormalizedGap::d1(tau, big_x, big_v)?, value))
            })
            .collect()
    }

    /// `∫ |Γ_h - G|` against the explicit kernel for `a = σ²`, convolved
    /// with the same Gaussian mollifier as the initial datum.
    pub fn oracle_l1_error(&self, sigma2: f64) -> Result<f64> {
        let tau = self.t - self.source.t;
        let (wx, wv) = self.widths;
        let g = KineticGaussian::explicit(sigma2, tau)?.with_initial_spread(tau, wx, wv);
        let (y, w) = (self.source.x[0], self.source.v[0]);
        let grid = self.grid;
        Ok(self.field.l1_distance_to(&grid, |x, v| g.density(&[grid.periodic_offset(x, y + tau * w)], &[v - w])))
    }

    /// Writes `<stem>.csv` (columns `x,v,value`) and `<stem>.json` holding
    /// everything except the values.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{stem}.csv"));
        let mut out = BufWriter::new(fs::File::create(&csv)?);
        writeln!(out, "x,v,value")?;
        for ((j, i), f) in self.field.values.indexed_iter() {
            writeln!(out, "{},{},{:e}", self.grid.x(i), self.grid.v(j), f)?;
        }
        out.flush()?;
        let json = dir.join(format!("{stem}.json"));
        let sidecar = KernelSidecar {
            source: &self.source,
            t: self.t,
            descriptor: &self.descriptor,
            grid: &self.grid,
            config: &self.config,
            widths: self.widths,
            w0_cells: self.config.w0_cells,
            run: &self.run,
            boundary_tail_ratio: self.boundary_tail_ratio,
            values_file: format!("{stem}.csv"),
        };
        fs::write(&json, serde_json::to_string_pretty(&sidecar)?)?;
        Ok((csv, json))
    }
}

#[derive(Serialize)]
struct KernelSidecar<'a> {
    source: &'a PhasePoint,
    t: f64,
    descriptor: &'a FieldDescriptor,
    grid: &'a Grid,
    config: &'a SolverConfig,
    widths: (f64, f64),
    w0_cells: f64,
    run: &'a RunRecord,
    boundary_tail_ratio: f64,
    values_file: String,
}

fn source_1d(source: &PhasePoint) -> Result<(f64, f64, f64)> {
    if source.dim() != 1 {
        return domain(format!("the solver is one-dimensional, got a {}-dimensional source", source.dim()));
    }
    Ok((source.t, source.x[0], source.v[0]))
}

/// Evolves a mollified delta with explicit widths. The widths default to
/// `config.w0_cells` grid cells in [`estimate_kernel`].
pub fn estimate_kernel_with_widths(
    source: &PhasePoint,
    t_final: f64,
    field: &CoefficientField,
    grid: &Grid,
    config: &SolverConfig,
    widths: (f64, f64),
) -> Result<KernelEstimate> {
    let (s, y, w) = source_1d(source)?;
    if !(t_final > s) {
        return domain(format!("evaluation time {t_final} must exceed the source time {s}"));
    }
    config.validate(grid)?;
    let initial = init_delta((y, w), widths, grid, s)?;
    let (state, run) = evolve(&initial, t_final, grid, field, config, |_| {})?;
    let boundary_tail_ratio = state.boundary_tail_ratio();
    Ok(KernelEstimate {
        source: source.clone(),
        t: t_final,
        field: state,
        descriptor: field.descriptor().clone(),
        grid: *grid,
        config: *config,
        widths,
        run,
        boundary_tail_ratio,
    })
}

/// Approximates `Γ(t_final, ·, ·, s, y, w)` from a mollified delta of width
/// `config.w0_cells` cells.
pub fn estimate_kernel(
    source: &PhasePoint,
    t_final: f64,
    field: &CoefficientField,
    grid: &Grid,
    config: &SolverConfig,
) -> Result<KernelEstimate> {
    estimate_kernel_with_widths(source, t_final, field, grid, config, config.mollifier_widths(grid))
}

/// Like [`estimate_kernel`], also handing every intermediate state to
/// `observe`.
pub fn estimate_kernel_observed(
    source: &PhasePoint,
    t_final: f64,
    field: &CoefficientField,
    grid: &Grid,
    config: &SolverConfig,
    observe: impl FnMut(&Field),
) -> Result<KernelEstimate> {
    let (s, y, w) = source_1d(source)?;
    if !(t_final > s) {
        return domain(format!("evaluation time {t_final} must exceed the source time {s}"));
    }
    config.validate(grid)?;
    let widths = config.mollifier_widths(grid);
    let initial = init_delta((y, w), widths, grid, s)?;
    let (state, run) = evolve(&initial, t_final, grid, field, config, observe)?;
    let boundary_tail_ratio = state.boundary_tail_ratio();
    Ok(KernelEstimate {
        source: source.clone(),
        t: t_final,
        field: state,
        descriptor: field.descriptor().clone(),
        grid: *grid,
        config: *config,
        widths,
        run,
        boundary_tail_ratio,
    })
}

/// `Σ_q g(z_q) ΔxΔv · δ_{z_q}` with every discrete delta replaced by the
/// mollified bump of [`init_delta`] centred at that node. Nodes closer to
/// the velocity walls than the bump allows carry no mass in any admissible
/// input and are skipped.
pub fn superpose_deltas(g: &Field, grid: &Grid, widths: (f64, f64)) -> Result<Field> {
    g.check_shape(grid)?;
    let (sx, sv) = widths;
    let (lo, hi) = grid.v_walls();
    // x-kernel is translation invariant on the periodic grid
    let kx: Vec<f64> = bump_1d(grid.nx, |i| grid.x(i), grid.x(0), sx, Some(2.0 * grid.lx));
    let kx_sum: f64 = kx.iter().sum();
    let mut partial = Array2::<f64>::zeros((grid.nv, grid.nx));
    for j in 0..grid.nv {
        let row = g.values.row(j);
        if row.iter().all(|&f| f == 0.0) {
            continue;
        }
        let mut out = partial.row_mut(j);
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (q, &f) in row.iter().enumerate() {
                if f != 0.0 {
                    acc += f * kx[(i + grid.nx - q) % grid.nx];
                }
            }
            *o = acc / kx_sum;
        }
    }
    let mut values = Array2::<f64>::zeros((grid.nv, grid.nx));
    for q in 0..grid.nv {
        let w = grid.v(q);
        if w - WALL_CLEARANCE * sv < lo || w + WALL_CLEARANCE * sv > hi {
            continue;
        }
        let kv = bump_1d(grid.nv, |j| grid.v(j), w, sv, None);
        let kv_sum: f64 = kv.iter().sum();
        let src = partial.row(q);
        for (j, &k) in kv.iter().enumerate() {
            if k > 1e-300 {
                values.row_mut(j).scaled_add(k / kv_sum, &src);
            }
        }
    }
    // weights g ΔxΔv against bumps of unit discrete mass 1/(ΔxΔv)
    Ok(Field { t: g.t, values })
}

/// Outcome of a semigroup comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChapmanKolmogorovReport {
    pub times: [f64; 3],
    /// `∫ |direct - composed|`.
    pub residual: f64,
    pub direct_mass: f64,
    pub composed_mass: f64,
    pub widths: (f64, f64),
}

/// Compares the direct kernel `Γ(t2, ·, t0, y, w)` with the quadrature
/// composition `∫ Γ(t2, ·, t1, ξ, η) Γ(t1, ξ, η, t0, y, w) d(ξ, η)` in `L¹`.
///
/// The inner kernels `Γ(·, t1, ξ, η)` are mollified deltas at every grid
/// node. The equation is linear, so the composition is evaluated by
/// evolving their weighted superposition once.
pub fn chapman_kolmogorov_residual(
    source: &PhasePoint,
    times: (f64, f64, f64),
    field: &CoefficientField,
    grid: &Grid,
    config: &SolverConfig,
) -> Result<ChapmanKolmogorovReport> {
    let (t0, t1, t2) = times;
    if !(t0 <= t1 && t1 < t2) {
        return domain(format!("need t0 <= t1 < t2, got ({t0}, {t1}, {t2})"));
    }
    let direct = estimate_kernel(&at_time(source, t0), t2, field, grid, config)?;
    let widths = config.mollifier_widths(grid);
    let first = if t1 > t0 {
        estimate_kernel(&at_time(source, t0), t1, field, grid, config)?.field
    } else {
        let (_, y, w) = source_1d(source)?;
        init_delta((y, w), widths, grid, t0)?
    };
    let composed_start = superpose_deltas(&first, grid, widths)?;
    let (composed, _) = evolve(&composed_start, t2, grid, field, config, |_| {})?;
    Ok(ChapmanKolmogorovReport {
        times: [t0, t1, t2],
        residual: direct.field.l1_distance(&composed, grid),
        direct_mass: direct.field.mass(grid),
        composed_mass: composed.mass(grid),
        widths,
    })
}

fn at_time(z: &PhasePoint, t: f64) -> PhasePoint {
    PhasePoint { t, x: z.x.clone(), v: z.v.clone() }
}

/// `∫ |τ^{2} Γ_a(τ; τ^{3/2} x, τ^{1/2} v) - Γ_{δ_r a}(1; x, v)| d(x, v)` with
/// `r = τ^{1/2}`, both kernels from the origin at time 0.
///
/// The unit-gap run uses `unit_grid` and its mollifier widths; the gap-`τ`
/// run uses `tau_grid` with the same widths dilated, so both approximate the
/// same mollified kernel. The comparison is taken on the unit grid with the
/// gap-`τ` field sampled bilinearly.
pub fn scaling_identity_residual(
    field: &CoefficientField,
    tau: f64,
    unit_grid: &Grid,
    unit_config: &SolverConfig,
    tau_grid: &Grid,
    tau_config: &SolverConfig,
) -> Result<f64> {
    if !(tau > 0.0) {
        return domain(format!("time gap must be positive, got {tau}"));
    }
    let origin = PhasePoint::d1(0.0, 0.0, 0.0);
    let (wx, wv) = unit_config.mollifier_widths(unit_grid);
    let unit =
        estimate_kernel_with_widths(&origin, 1.0, &field.dilated(tau.sqrt())?, unit_grid, unit_config, (wx, wv))?;
    let scaled_widths = (wx * tau.powf(1.5), wv * tau.sqrt());
    let gap = estimate_kernel_with_widths(&origin, tau, field, tau_grid, tau_config, scaled_widths)?;
    let (sx, sv) = (tau.powf(1.5), tau.sqrt());
    let tau2 = tau * tau;
    Ok(unit.field.l1_distance_to(unit_grid, |x, v| tau2 * gap.sample(sx * x, sv * v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_delta_is_normalized_and_centred() {
        let grid = Grid::square(4.0, 4.0, 64).unwrap();
        let (dx, dv) = (grid.dx(), grid.dv());
        let f = init_delta((0.0, 0.0), (2.0 * dx, 2.0 * dv), &grid, 0.0).unwrap();
        let d = f.diagnostics(&grid);
        assert!((d.mass - 1.0).abs() < 1e-12);
        assert_eq!(f.argmax(), (32, 32));
        assert!(d.mean[0].abs() < 1e-12 && d.mean[1].abs() < 1e-12);
        assert!(f.min() >= 0.0);
        assert!(init_delta((0.0, 3.9), (2.0 * dx, 2.0 * dv), &grid, 0.0).is_err());
    }

    #[test]
    fn superposition_matches_individual_deltas() {
        let grid = Grid::square(3.0, 3.0, 32).unwrap();
        let widths = (2.0 * grid.dx(), 2.0 * grid.dv());
        let mut g = Field::zeros(&grid, 0.0);
        g.values[[14, 3]] = 2.0;
        g.values[[17, 30]] = 0.5;
        let sum = superpose_deltas(&g, &grid, widths).unwrap();
        let a = init_delta((grid.x(3), grid.v(14)), widths, &grid, 0.0).unwrap();
        let b = init_delta((grid.x(30), grid.v(17)), widths, &grid, 0.0).unwrap();
        let area = grid.cell_area();
        for ((j, i), s) in sum.values.indexed_iter() {
            let expect = area * (2.0 * a.values[[j, i]] + 0.5 * b.values[[j, i]]);
            assert!((s - expect).abs() < 1e-12 * (1.0 + expect.abs()), "{j} {i} {s} {expect}");
        }
    }
}
