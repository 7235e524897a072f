//! Gaussian-weighted logarithmic functionals of kernel estimates: the
//! `G(1)` lower bound, the weak-`L¹` level-set statistic for `log f`, the
//! good-set measures, and the duality check between forward and adjoint
//! kernels.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::error::{domain, Error, Result};
use crate::geometry::PhasePoint;
use crate::solver::{estimate_kernel, superpose_deltas, Field, Grid, SolverConfig, TransportDirection};

/// Default floor applied before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-30;

/// The weight `exp(-π(|y|² + |w|²))` truncated to `[-R, R]²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GWeight {
    pub radius: f64,
}

impl Default for GWeight {
    fn default() -> Self {
        Self { radius: 4.0 }
    }
}

impl GWeight {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return domain(format!("weight truncation radius must be positive, got {radius}"));
        }
        Ok(Self { radius })
    }

    #[inline]
    pub fn value(&self, y: f64, w: f64) -> f64 {
        if y.abs() > self.radius || w.abs() > self.radius {
            0.0
        } else {
            (-PI * (y * y + w * w)).exp()
        }
    }

    /// Quadrature mass of the truncated weight on `grid`.
    pub fn mass(&self, grid: &Grid) -> f64 {
        let mut acc = 0.0;
        for j in 0..grid.nv {
            for i in 0..grid.nx {
                acc += self.value(grid.x(i), grid.v(j));
            }
        }
        acc * grid.cell_area()
    }

    fn fits(&self, grid: &Grid) -> Result<()> {
        let (lo, hi) = grid.v_walls();
        if self.radius > grid.lx || -self.radius < lo || self.radius > hi {
            return domain(format!(
                "weight box [-{r}, {r}]² does not fit inside the grid (Lx = {}, Lv = {})",
                grid.lx,
                grid.lv,
                r = self.radius
            ));
        }
        Ok(())
    }
}

fn weighted_log(f: &Field, grid: &Grid, weight: &GWeight, floor: f64) -> Result<f64> {
    f.check_shape(grid)?;
    weight.fits(grid)?;
    if !(floor > 0.0) {
        return domain(format!("log floor must be positive, got {floor}"));
    }
    if f.values.iter().all(|&v| v <= 0.0) {
        return domain("cannot take the logarithm of an all-zero field");
    }
    let mut acc = 0.0;
    for ((j, i), &val) in f.values.indexed_iter() {
        let wgt = weight.value(grid.x(i), grid.v(j));
        if wgt > 0.0 {
            acc += wgt * val.max(floor).ln();
        }
    }
    Ok(acc * grid.cell_area())
}

/// `G = ∫ φ² log max(f, ε)` for a time-one kernel slice, reported together
/// with its sensitivity to halving the floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GValue {
    pub value: f64,
    pub floor: f64,
    /// `|G(ε/2) - G(ε)|`.
    pub floor_sensitivity: f64,
    pub weight_mass: f64,
}

pub fn g_functional(f: &Field, grid: &Grid, weight: &GWeight, floor: f64) -> Result<GValue> {
    let value = weighted_log(f, grid, weight, floor)?;
    let halved = weighted_log(f, grid, weight, 0.5 * floor)?;
    Ok(GValue { value, floor, floor_sensitivity: (halved - value).abs(), weight_mass: weight.mass(grid) })
}

/// `c(f) = ∫ φ² log max(f, ε)`.
pub fn log_mean_c(f: &Field, grid: &Grid, weight: &GWeight, floor: f64) -> Result<f64> {
    weighted_log(f, grid, weight, floor)
}

/// Time slices of a solution on a space-time region, each carrying the
/// length of the time slab it represents.
#[derive(Debug, Clone, Default)]
pub struct SpaceTimeSamples {
    pub slices: Vec<(f64, Field)>,
}

impl SpaceTimeSamples {
    pub fn push(&mut self, weight: f64, f: Field) {
        self.slices.push((weight, f));
    }

    pub fn duration(&self) -> f64 {
        self.slices.iter().map(|(w, _)| w).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }
}

/// Axis-aligned box `[-hx, hx] × [-hv, hv]` in `(x, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseBox {
    pub hx: f64,
    pub hv: f64,
}

impl Default for PhaseBox {
    fn default() -> Self {
        Self { hx: 2.0, hv: 2.0 }
    }
}

impl PhaseBox {
    #[inline]
    pub fn contains(&self, x: f64, v: f64) -> bool {
        x.abs() <= self.hx && v.abs() <= self.hv
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { hx: s * self.hx, hv: s * self.hv }
    }
}

/// `s_k = 2^k` for `k = -4, ..., 12`.
pub fn default_s_grid() -> Vec<f64> {
    (-4..=12).map(|k| 2f64.powi(k)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSetPoint {
    pub s: f64,
    pub measure: f64,
    pub product: f64,
}

/// `s ↦ s |{(t, x, v) : log f - c > s}|` on the sampled region restricted to
/// `region`, with the supremum over `s_grid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetCurve {
    pub c: f64,
    pub statistic: f64,
    pub curve: Vec<LevelSetPoint>,
}

pub fn level_set_statistic(
    samples: &SpaceTimeSamples,
    grid: &Grid,
    region: &PhaseBox,
    c: f64,
    s_grid: &[f64],
    floor: f64,
) -> Result<LevelSetCurve> {
    if samples.is_empty() {
        return domain("no time slices in the level-set region");
    }
    if region.hx > grid.lx || region.hv > grid.lv {
        return domain(format!("region {region:?} is not inside the grid"));
    }
    // gather the excess log f - c over the region once, weighted by cell volume
    let area = grid.cell_area();
    let mut excess: Vec<(f64, f64)> = Vec::new();
    for (dt, f) in &samples.slices {
        f.check_shape(grid)?;
        for ((j, i), &val) in f.values.indexed_iter() {
            if region.contains(grid.x(i), grid.v(j)) {
                excess.push((val.max(floor).ln() - c, dt * area));
            }
        }
    }
    let curve: Vec<LevelSetPoint> = s_grid
        .iter()
        .map(|&s| {
            let measure: f64 = excess.iter().filter(|(e, _)| *e > s).map(|(_, m)| m).sum();
            LevelSetPoint { s, measure, product: s * measure }
        })
        .collect();
    let statistic = curve.iter().map(|p| p.product).fold(0.0, f64::max);
    Ok(LevelSetCurve { c, statistic, curve })
}

/// Writes the curve as CSV with columns `s,measure,s_times_measure`.
pub fn write_level_set_csv(curve: &LevelSetCurve, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "s,measure,s_times_measure")?;
    for p in &curve.curve {
        writeln!(out, "{},{:e},{:e}", p.s, p.measure, p.product)?;
    }
    out.flush()?;
    Ok(())
}

/// Cell-counting measures of `Ω = {f > η}` and `Ω_S = {f > η, log f - G1 ≤ S}`
/// on the sampled region intersected with the ball `|(y, w)| ≤ radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodSetMeasures {
    pub eta: f64,
    pub radius: f64,
    pub omega: f64,
    pub omega_s: f64,
    pub s_level: f64,
    /// Smallest `S` with `|Ω_S| ≥ |Ω| / 2`; `None` when `Ω` is empty.
    pub smallest_half_s: Option<f64>,
    /// The total sampled measure `|Q|`.
    pub q_measure: f64,
}

pub fn good_set_measures(
    samples: &SpaceTimeSamples,
    grid: &Grid,
    radius: f64,
    eta: f64,
    s_level: f64,
    g1: f64,
) -> Result<GoodSetMeasures> {
    if !(eta > 0.0) {
        return domain(format!("threshold eta must be positive, got {eta}"));
    }
    let area = grid.cell_area();
    let mut levels: Vec<(f64, f64)> = Vec::new();
    let mut q_measure = 0.0;
    for (dt, f) in &samples.slices {
        f.check_shape(grid)?;
        for ((j, i), &val) in f.values.indexed_iter() {
            let (y, w) = (grid.x(i), grid.v(j));
            if y * y + w * w <= radius * radius {
                q_measure += dt * area;
                if val > eta {
                    levels.push((val.ln() - g1, dt * area));
                }
            }
        }
    }
    let omega: f64 = levels.iter().map(|(_, m)| m).sum();
    let omega_s: f64 = levels.iter().filter(|(l, _)| *l <= s_level).map(|(_, m)| m).sum();
    let smallest_half_s = if levels.is_empty() {
        None
    } else {
        levels.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        let mut found = levels.last().map(|l| l.0);
        for (l, m) in &levels {
            acc += m;
            if acc >= 0.5 * omega {
                found = Some(*l);
                break;
            }
        }
        found
    };
    Ok(GoodSetMeasures { eta, radius, omega, omega_s, s_level, smallest_half_s, q_measure })
}

/// Moment and mass-in-ball summary over the sampled times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    /// `max_t ∫ |(y, w)| f(t)`.
    pub moment_bound: f64,
    /// `min_t ∫_{|(y,w)| ≤ 2 C0} f(t)` with `C0 = moment_bound`.
    pub min_mass_in_ball: f64,
}

pub fn moment_summary(samples: &SpaceTimeSamples, grid: &Grid) -> Result<MomentSummary> {
    if samples.is_empty() {
        return domain("no time slices to summarize");
    }
    let moment_bound = samples.slices.iter().map(|(_, f)| f.diagnostics(grid).first_moment).fold(0.0, f64::max);
    let r2 = (2.0 * moment_bound).powi(2);
    let area = grid.cell_area();
    let min_mass_in_ball = samples
        .slices
        .iter()
        .map(|(_, f)| {
            f.values
                .indexed_iter()
                .filter(|((j, i), _)| {
                    let (y, w) = (grid.x(*i), grid.v(*j));
                    y * y + w * w <= r2
                })
                .map(|(_, v)| v)
                .sum::<f64>()
                * area
        })
        .fold(f64::INFINITY, f64::min);
    Ok(MomentSummary { moment_bound, min_mass_in_ball })
}

/// Everything measured on one kernel run from a source at time 0 to time 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetReport {
    pub c_f: f64,
    pub statistic: f64,
    pub curve: Vec<LevelSetPoint>,
    pub eta_good: f64,
    pub omega_measure: f64,
    pub omega_s_measure: f64,
    #[serde(rename = "S")]
    pub s_level: f64,
    pub smallest_half_s: Option<f64>,
    #[serde(rename = "G1")]
    pub g1: f64,
    pub g_floor_sensitivity: f64,
    pub floor_used: f64,
    pub moments: MomentSummary,
    pub region: PhaseBox,
}

/// Parameters of [`nash_campaign`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NashParams {
    pub weight: GWeight,
    pub region: PhaseBox,
    pub s_grid: Vec<f64>,
    pub floor: f64,
    pub eta: f64,
    #[serde(rename = "S")]
    pub s_level: f64,
    /// Keep every `stride`-th step in `(¼, ¾)`.
    pub stride: usize,
}

impl Default for NashParams {
    fn default() -> Self {
        Self {
            weight: GWeight::default(),
            region: PhaseBox::default(),
            s_grid: default_s_grid(),
            floor: LOG_FLOOR,
            eta: 0.01,
            s_level: 10.0,
            stride: 1,
        }
    }
}

/// Runs the kernel from `(0, x, v)` to time 1 and evaluates `G(1)`, the
/// level-set statistic on `(¼, ¾) × region`, the moment bound and the good
/// set measures on `(¼, ¾) × B_{2 C0}`.
pub fn nash_campaign(
    source: (f64, f64),
    field: &CoefficientField,
    grid: &Grid,
    config: &SolverConfig,
    params: &NashParams,
) -> Result<LevelSetReport> {
    if params.stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let mut samples = SpaceTimeSamples::default();
    let mut count = 0usize;
    let steps = (1.0 / config.dt - 1e-9).ceil().max(1.0);
    let dt = 1.0 / steps;
    let stride = params.stride;
    let kernel = crate::solver::estimate_kernel_observed(
        &PhasePoint::d1(0.0, source.0, source.1),
        1.0,
        field,
        grid,
        config,
        |f| {
            if f.t > 0.25 && f.t < 0.75 {
                if count % stride == 0 {
                    samples.push(dt * stride as f64, f.clone());
                }
                count += 1;
            }
        },
    )?;
    let g = g_functional(&kernel.field, grid, &params.weight, params.floor)?;
    let curve = level_set_statistic(&samples, grid, &params.region, g.value, &params.s_grid, params.floor)?;
    let moments = moment_summary(&samples, grid)?;
    let good = good_set_measures(&samples, grid, 2.0 * moments.moment_bound, params.eta, params.s_level, g.value)?;
    Ok(LevelSetReport {
        c_f: g.value,
        statistic: curve.statistic,
        curve: curve.curve,
        eta_good: params.eta,
        omega_measure: good.omega,
        omega_s_measure: good.omega_s,
        s_level: params.s_level,
        smallest_half_s: good.smallest_half_s,
        g1: g.value,
        g_floor_sensitivity: g.floor_sensitivity,
        floor_used: params.floor,
        moments,
        region: params.region,
    })
}

/// Result of comparing forward and adjoint kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjointReport {
    pub target: (f64, f64),
    pub points: Vec<(f64, f64)>,
    pub forward: Vec<f64>,
    pub adjoint: Vec<f64>,
    pub max_relative_error: f64,
    pub adjoint_mass: f64,
}

/// Compares `Γ(2, x, v, 1, y, w)` from forward runs started at every point
/// `(y, w)` with `Γ♯(1, y, w, 0, x, v)` from one run of the companion
/// equation `∂_σ g - w·∇_y g = ∇_w·(a_2 ∇_w g)`, `a_2(σ) = a(2 - σ)`.
///
/// Each run smooths its own source with the mollifier; both outputs are
/// smoothed once more in their evaluation variable, so the two sides
/// approximate the same doubly mollified kernel.
pub fn adjoint_kernel_residual(
    field: &CoefficientField,
    target: (f64, f64),
    points: &[(f64, f64)],
    grid: &Grid,
    config: &SolverConfig,
) -> Result<AdjointReport> {
    if points.is_empty() {
        return domain("no comparison points given");
    }
    let widths = config.mollifier_widths(grid);
    let mut adjoint_cfg = *config;
    adjoint_cfg.direction = TransportDirection::Reversed;
    let shifted = field.time_reversed(2.0);
    let adj = estimate_kernel(&PhasePoint::d1(0.0, target.0, target.1), 1.0, &shifted, grid, &adjoint_cfg)?;
    let adjoint_mass = adj.field.mass(grid);
    let adj_smooth = superpose_deltas(&adj.field, grid, widths)?;
    let mut forward = Vec::with_capacity(points.len());
    let mut adjoint = Vec::with_capacity(points.len());
    let mut worst: f64 = 0.0;
    for &(y, w) in points {
        let fwd = estimate_kernel(&PhasePoint::d1(1.0, y, w), 2.0, field, grid, config)?;
        let fwd_smooth = superpose_deltas(&fwd.field, grid, widths)?;
        let a = fwd_smooth.sample(grid, target.0, target.1);
        let b = adj_smooth.sample(grid, y, w);
        if !(b > 0.0) {
            return domain(format!("adjoint kernel vanishes at ({y}, {w}); choose points nearer the target"));
        }
        worst = worst.max((a - b).abs() / b);
        forward.push(a);
        adjoint.push(b);
    }
    Ok(AdjointReport { target, points: points.to_vec(), forward, adjoint, max_relative_error: worst, adjoint_mass })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::square(4.5, 4.5, 96).unwrap()
    }

    #[test]
    fn weight_mass_is_one() {
        let g = grid();
        assert!((GWeight::default().mass(&g) - 1.0).abs() < 1e-10);
        assert!(GWeight::default().fits(&Grid::square(3.0, 6.0, 32).unwrap()).is_err());
    }

    #[test]
    fn g_of_constants() {
        let g = grid();
        let w = GWeight::default();
        let one = Field::from_fn(&g, 1.0, |_, _| 1.0);
        assert!(g_functional(&one, &g, &w, LOG_FLOOR).unwrap().value.abs() < 1e-15);
        let e = Field::from_fn(&g, 1.0, |_, _| std::f64::consts::E);
        assert!((log_mean_c(&e, &g, &w, LOG_FLOOR).unwrap() - w.mass(&g)).abs() < 1e-12);
        assert!(g_functional(&Field::zeros(&g, 1.0), &g, &w, LOG_FLOOR).is_err());
    }

    #[test]
    fn scaling_shifts_by_log_kappa() {
        let g = grid();
        let w = GWeight::default();
        let f = Field::from_fn(&g, 1.0, |x, v| (-(x * x + 2.0 * v * v)).exp() + 1e-3);
        let kappa = 3.7;
        let mut kf = f.clone();
        kf.values.mapv_inplace(|x| kappa * x);
        let a = log_mean_c(&f, &g, &w, LOG_FLOOR).unwrap();
        let b = log_mean_c(&kf, &g, &w, LOG_FLOOR).unwrap();
        assert!((b - a - kappa.ln() * w.mass(&g)).abs() < 1e-12);
    }

    #[test]
    fn level_set_of_flat_log_is_zero() {
        let g = grid();
        let c: f64 = -1.3;
        let f = Field::from_fn(&g, 0.5, |_, _| c.exp());
        let mut s = SpaceTimeSamples::default();
        s.push(0.5, f);
        let curve = level_set_statistic(&s, &g, &PhaseBox::default(), c, &default_s_grid(), LOG_FLOOR).unwrap();
        assert_eq!(curve.statistic, 0.0);
        assert_eq!(curve.curve.len(), 17);
    }

    #[test]
    fn good_set_relations() {
        let g = grid();
        let f = Field::from_fn(&g, 0.5, |x, v| 0.3 * (-(x * x + v * v)).exp());
        let mut s = SpaceTimeSamples::default();
        s.push(0.5, f);
        let m = good_set_measures(&s, &g, 3.0, 1.0, 10.0, -2.0).unwrap();
        assert_eq!(m.omega, 0.0);
        assert_eq!(m.smallest_half_s, None);
        let m = good_set_measures(&s, &g, 3.0, 0.01, 0.5, -2.0).unwrap();
        assert!(m.omega > 0.0 && m.omega_s <= m.omega && m.omega <= m.q_measure);
        let half = m.smallest_half_s.unwrap();
        let again = good_set_measures(&s, &g, 3.0, 0.01, half, -2.0).unwrap();
        assert!(again.omega_s >= 0.5 * again.omega);
    }
}
