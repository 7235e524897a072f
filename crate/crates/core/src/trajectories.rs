//! Kinetic trajectory families between two phase points and numerical
//! checkers for the structural properties they are asked to satisfy.
//!
//! A family is written as
//!
//! ```text
//! γ(r) = (t0 + T r,  A_T(r) (x1, v1) + B_T(r) (x0, v0)),   r ∈ [0, 1]
//! ```
//!
//! Every shipped family is built from a pair of scalar velocity profiles
//! `φ, ψ` with `φ(0) = ψ(0) = 0`, `φ(1) = 1`, `ψ(1) = 0` and primitives
//! `Φ, Ψ` vanishing at 0. The velocity path is
//! `γ_v = v0 + (v1 - v0) φ + (ψ / Ψ(1)) ((x1 - x0)/T - v0 - (v1 - v0) Φ(1))`
//! and `γ_x = x0 + T ∫ γ_v`, so the kinetic relation `γ̇_x = γ̇_t γ_v` holds
//! exactly. The `2d × 2d` matrices are the scalar `2 × 2` blocks tensored
//! with `I_d`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::geometry::PhasePoint;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Osc {
    Flat,
    Cos,
    Sin,
}

/// `coef · r^power · osc(β log r)`.
#[derive(Debug, Clone, Copy)]
struct Term {
    coef: f64,
    power: f64,
    osc: Osc,
}

#[derive(Debug, Clone)]
struct Profile {
    terms: Vec<Term>,
    beta: f64,
}

impl Profile {
    fn value(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        let l = self.beta * r.ln();
        self.terms
            .iter()
            .map(|t| {
                let base = t.coef * r.powf(t.power);
                match t.osc {
                    Osc::Flat => base,
                    Osc::Cos => base * l.cos(),
                    Osc::Sin => base * l.sin(),
                }
            })
            .sum()
    }

    fn derivative(&self, r: f64) -> f64 {
        let l = self.beta * r.ln();
        let (c, s) = (l.cos(), l.sin());
        self.terms
            .iter()
            .map(|t| {
                let m = t.power;
                let base = t.coef * r.powf(m - 1.0);
                match t.osc {
                    Osc::Flat => base * m,
                    Osc::Cos => base * (m * c - self.beta * s),
                    Osc::Sin => base * (m * s + self.beta * c),
                }
            })
            .sum()
    }

    /// `∫_0^r`, exact for every term with `power > -1`.
    fn integral(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        let l = self.beta * r.ln();
        let (c, s) = (l.cos(), l.sin());
        self.terms
            .iter()
            .map(|t| {
                let n = t.power + 1.0;
                let base = t.coef * r.powf(n);
                let q = n * n + self.beta * self.beta;
                match t.osc {
                    Osc::Flat => base / n,
                    Osc::Cos => base * (n * c + self.beta * s) / q,
                    Osc::Sin => base * (n * s - self.beta * c) / q,
                }
            })
            .sum()
    }
}

/// Parameters of the log-oscillatory candidate
/// `φ = r^p (1 + ε cos(β log r)) / (1 + ε)`,
/// `ψ = r^q (1 - r) (1 + ε sin(β log r))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationParams {
    pub p: f64,
    pub q: f64,
    pub eps: f64,
    pub beta: f64,
}

impl Default for OscillationParams {
    fn default() -> Self {
        Self { p: 0.5, q: 0.5, eps: 0.5, beta: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyKind {
    /// `φ = 3r² - 2r`, `ψ = 6(r - r²)`: the interpolation with quadratic
    /// velocity.
    Straight,
    LogOscillatory(OscillationParams),
}

impl FamilyKind {
    fn profiles(&self) -> (Profile, Profile) {
        let flat = |coef, power| Term { coef, power, osc: Osc::Flat };
        match *self {
            FamilyKind::Straight => (
                Profile { terms: vec![flat(3.0, 2.0), flat(-2.0, 1.0)], beta: 0.0 },
                Profile { terms: vec![flat(6.0, 1.0), flat(-6.0, 2.0)], beta: 0.0 },
            ),
            FamilyKind::LogOscillatory(OscillationParams { p, q, eps, beta }) => {
                let n = 1.0 + eps;
                let phi = vec![flat(1.0 / n, p), Term { coef: eps / n, power: p, osc: Osc::Cos }];
                let psi = vec![
                    flat(1.0, q),
                    Term { coef: eps, power: q, osc: Osc::Sin },
                    flat(-1.0, q + 1.0),
                    Term { coef: -eps, power: q + 1.0, osc: Osc::Sin },
                ];
                (Profile { terms: phi, beta }, Profile { terms: psi, beta })
            }
        }
    }
}

/// Scalar `2 × 2` blocks of `A_T(r)` and `B_T(r)`, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blocks {
    pub a: [[f64; 2]; 2],
    pub b: [[f64; 2]; 2],
}

impl Blocks {
    pub fn det_a(&self) -> f64 {
        self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0]
    }

    pub fn det_b(&self) -> f64 {
        self.b[0][0] * self.b[1][1] - self.b[0][1] * self.b[1][0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFamily {
    pub name: String,
    /// Time gap `T = t1 - t0`.
    pub gap: f64,
    pub dim: usize,
    pub kind: FamilyKind,
}

pub fn straight_family(gap: f64, d: usize) -> Result<TrajectoryFamily> {
    TrajectoryFamily::new("straight", gap, d, FamilyKind::Straight)
}

pub fn log_oscillatory_family(gap: f64, d: usize, params: OscillationParams) -> Result<TrajectoryFamily> {
    let OscillationParams { p, q, eps, beta } = params;
    if !(p > 0.0 && q > 0.0) || !p.is_finite() || !q.is_finite() {
        return domain(format!("profile exponents must be positive, got p = {p}, q = {q}"));
    }
    if !(eps.abs() < 1.0) || !(beta >= 0.0) || !beta.is_finite() {
        return domain(format!("need |eps| < 1 and finite beta >= 0, got eps = {eps}, beta = {beta}"));
    }
    TrajectoryFamily::new("log-oscillatory", gap, d, FamilyKind::LogOscillatory(params))
}

impl TrajectoryFamily {
    pub fn new(name: &str, gap: f64, dim: usize, kind: FamilyKind) -> Result<Self> {
        if gap == 0.0 || !gap.is_finite() {
            return domain(format!("time gap must be finite and nonzero, got {gap}"));
        }
        if dim == 0 {
            return domain("dimension must be at least 1");
        }
        let (_, psi) = kind.profiles();
        let psi1 = psi.integral(1.0);
        if psi1 == 0.0 || !psi1.is_finite() {
            return domain(format!("profile ψ has zero or non-finite integral {psi1}"));
        }
        Ok(Self { name: name.to_string(), gap, dim, kind })
    }

    /// The same family for another time gap.
    pub fn with_gap(&self, gap: f64) -> Result<Self> {
        Self::new(&self.name, gap, self.dim, self.kind)
    }

    pub fn gamma_t(&self, t0: f64, r: f64) -> f64 {
        t0 + self.gap * r
    }

    pub fn blocks(&self, r: f64) -> Blocks {
        let (phi, psi) = self.kind.profiles();
        let t = self.gap;
        let (f, ff, g, gg) = (phi.value(r), phi.integral(r), psi.value(r), psi.integral(r));
        let (ff1, gg1) = (phi.integral(1.0), psi.integral(1.0));
        Blocks {
            a: [[gg / gg1, t * (ff - gg * ff1 / gg1)], [g / (t * gg1), f - g * ff1 / gg1]],
            b: [
                [1.0 - gg / gg1, t * (r - ff - gg * (1.0 - ff1) / gg1)],
                [-g / (t * gg1), 1.0 - f - g * (1.0 - ff1) / gg1],
            ],
        }
    }

    pub fn a(&self, r: f64) -> DMatrix<f64> {
        self.tensor(self.blocks(r).a)
    }

    pub fn b(&self, r: f64) -> DMatrix<f64> {
        self.tensor(self.blocks(r).b)
    }

    fn tensor(&self, c: [[f64; 2]; 2]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[c[0][0], c[0][1], c[1][0], c[1][1]])
            .kronecker(&DMatrix::identity(self.dim, self.dim))
    }

    /// `dγ_v/dr` along the trajectory joining `z0` and `z1`.
    fn velocity_rate(&self, r: f64, z0: &PhasePoint, z1: &PhasePoint) -> Vec<f64> {
        let (phi, psi) = self.kind.profiles();
        let (ff1, gg1) = (phi.integral(1.0), psi.integral(1.0));
        let (df, dg) = (phi.derivative(r), psi.derivative(r));
        (0..self.dim)
            .map(|c| {
                let dv = z1.v[c] - z0.v[c];
                dv * df + dg / gg1 * ((z1.x[c] - z0.x[c]) / self.gap - z0.v[c] - dv * ff1)
            })
            .collect()
    }

    fn eval_unchecked(&self, r: f64, z0: &PhasePoint, z1: &PhasePoint) -> PhasePoint {
        let bl = self.blocks(r);
        let (a, b) = (bl.a, bl.b);
        let mut x = Vec::with_capacity(self.dim);
        let mut v = Vec::with_capacity(self.dim);
        for c in 0..self.dim {
            let (x1, v1, x0, v0) = (z1.x[c], z1.v[c], z0.x[c], z0.v[c]);
            x.push(a[0][0] * x1 + a[0][1] * v1 + b[0][0] * x0 + b[0][1] * v0);
            v.push(a[1][0] * x1 + a[1][1] * v1 + b[1][0] * x0 + b[1][1] * v0);
        }
        PhasePoint { t: self.gamma_t(z0.t, r), x, v }
    }
}

/// `γ(r)` for the endpoints `z0`, `z1`; requires `z1.t - z0.t` to match the
/// family's gap.
pub fn eval_trajectory(fam: &TrajectoryFamily, r: f64, z0: &PhasePoint, z1: &PhasePoint) -> Result<PhasePoint> {
    if !(0.0..=1.0).contains(&r) {
        return domain(format!("trajectory parameter must lie in [0, 1], got {r}"));
    }
    if z0.dim() != fam.dim || z1.dim() != fam.dim {
        return domain(format!(
            "endpoint dimensions ({}, {}) do not match the family dimension {}",
            z0.dim(),
            z1.dim(),
            fam.dim
        ));
    }
    let gap = z1.t - z0.t;
    if (gap - fam.gap).abs() > 1e-12 * fam.gap.abs().max(1.0) {
        return domain(format!("endpoint time gap {gap} does not match the family gap {}", fam.gap));
    }
    Ok(fam.eval_unchecked(r, z0, z1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub endpoint: f64,
    pub kinetic: f64,
    /// Allowed distance of a fitted slope from its target.
    pub exponent: f64,
    /// Slopes are fitted on `r ≤ fit_r_max`.
    pub fit_r_max: f64,
    /// `det B` is inspected on `(0, b_det_r_star]`.
    pub b_det_r_star: f64,
    pub b_det_floor: f64,
    /// Largest acceptable measured constant in the property (4) bounds.
    pub property4_cap: f64,
    pub endpoint_pairs: usize,
    /// Interior points of the uniform grid used for the kinetic relation.
    pub kinetic_points: usize,
    /// Relative step of the endpoint Jacobian finite differences.
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            endpoint: 1e-10,
            kinetic: 1e-8,
            exponent: 0.02,
            fit_r_max: 1e-2,
            b_det_r_star: 0.1,
            b_det_floor: 0.1,
            property4_cap: 100.0,
            endpoint_pairs: 16,
            kinetic_points: 1000,
            fd_step: 1e-5,
            seed: 0,
        }
    }
}

/// Log-spaced grid on `[1e-6, 1]`, 20 points per decade.
pub fn default_r_grid() -> Vec<f64> {
    (0..=120).map(|i| 10f64.powf(-6.0 + i as f64 / 20.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub r: f64,
    pub det_a: f64,
    /// Norm of the velocity column block of `A⁻¹`; `NaN` where `A` is singular.
    pub inv_column: f64,
    pub jacobian_det: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub lower_half: f64,
    pub upper_half: f64,
    pub points: usize,
}

impl ExponentFit {
    pub fn spread(&self) -> f64 {
        (self.lower_half - self.upper_half).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndpointErrors {
    /// Largest `|γ(0) - z0| + |γ(1) - z1|` over the sampled pairs.
    pub gamma: f64,
    pub a_at_zero: f64,
    pub a_at_one: f64,
    pub b_at_zero: f64,
    pub b_at_one: f64,
}

impl EndpointErrors {
    fn max(&self) -> f64 {
        [self.gamma, self.a_at_zero, self.a_at_one, self.b_at_zero, self.b_at_one].into_iter().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassFlags {
    pub endpoints: bool,
    pub kinetic_relation: bool,
    pub det_a: bool,
    pub inv_column: bool,
    pub det_b: bool,
    pub property4: bool,
    pub jacobian: bool,
}

impl PassFlags {
    /// Every condition, including both criticality rates.
    pub fn critical(&self) -> bool {
        self.endpoints
            && self.kinetic_relation
            && self.det_a
            && self.inv_column
            && self.det_b
            && self.property4
            && self.jacobian
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub family: TrajectoryFamily,
    pub kinetic_residual: f64,
    pub endpoint_errors: EndpointErrors,
    pub det_a_exponent: f64,
    pub det_a_target: f64,
    pub inv_column_exponent: f64,
    pub inv_column_target: f64,
    pub jacobian_exponent: f64,
    pub jacobian_target: f64,
    pub fits: [ExponentFit; 3],
    /// `max r^{1/2} |(A⁻¹)_{·;2}| / (1 + |T|)` over the grid.
    pub inv_column_constant: f64,
    pub b_det_near_zero: f64,
    pub property4_margins: [f64; 3],
    pub singular_points: Vec<f64>,
    pub pass: PassFlags,
    pub curve: Vec<CurvePoint>,
}

impl PropertyReport {
    /// Writes `r,det_a,inv_column,jacobian_det`.
    pub fn write_curve_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut out = BufWriter::new(fs::File::create(path)?);
        writeln!(out, "r,det_a,inv_column,jacobian_det")?;
        for p in &self.curve {
            writeln!(out, "{:e},{:e},{:e},{:e}", p.r, p.det_a, p.inv_column, p.jacobian_det)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn point_dist(a: &PhasePoint, b: &PhasePoint) -> f64 {
    ((a.t - b.t).powi(2) + dist(&a.x, &b.x).powi(2) + dist(&a.v, &b.v).powi(2)).sqrt()
}

fn max_abs_diff(m: &DMatrix<f64>, identity: bool) -> f64 {
    let n = m.nrows();
    let mut e: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if identity && i == j { 1.0 } else { 0.0 };
            e = e.max((m[(i, j)] - target).abs());
        }
    }
    e
}

/// Least-squares slope of `log y` against `log r`.
fn slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return f64::NAN;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn fit_exponent(curve: &[CurvePoint], r_max: f64, y: impl Fn(&CurvePoint) -> f64) -> ExponentFit {
    let mut pts: Vec<(f64, f64)> = curve
        .iter()
        .filter(|p| p.r <= r_max)
        .filter_map(|p| {
            let v = y(p).abs();
            (v > 0.0 && v.is_finite()).then(|| (p.r.ln(), v.ln()))
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let half = pts.len() / 2;
    ExponentFit {
        slope: slope(&pts),
        lower_half: slope(&pts[..half]),
        upper_half: slope(&pts[half..]),
        points: pts.len(),
    }
}

fn random_pairs(fam: &TrajectoryFamily, count: usize, seed: u64) -> Vec<(PhasePoint, PhasePoint)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = fam.dim;
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect() };
    (0..count)
        .map(|_| {
            let t0 = draw(1)[0];
            let z0 = PhasePoint { t: t0, x: draw(d), v: draw(d) };
            let z1 = PhasePoint { t: t0 + fam.gap, x: draw(d), v: draw(d) };
            (z0, z1)
        })
        .collect()
}

/// Largest `|γ̇_x - T γ_v|` on the interior grid `r_i = i / (n + 1)`, with a
/// fourth-order central difference of step `1e-3 · min(r, 1 - r)`.
fn kinetic_residual(fam: &TrajectoryFamily, pairs: &[(PhasePoint, PhasePoint)], n: usize) -> f64 {
    (1..=n)
        .into_par_iter()
        .map(|i| {
            let r = i as f64 / (n + 1) as f64;
            let h = 1e-3 * r.min(1.0 - r);
            let mut worst: f64 = 0.0;
            for (z0, z1) in pairs {
                let at = |s: f64| fam.eval_unchecked(s, z0, z1);
                let (p2, p1, m1, m2) = (at(r + 2.0 * h), at(r + h), at(r - h), at(r - 2.0 * h));
                let mid = at(r);
                let res: Vec<f64> = (0..fam.dim)
                    .map(|c| {
                        let dx = (-p2.x[c] + 8.0 * p1.x[c] - 8.0 * m1.x[c] + m2.x[c]) / (12.0 * h);
                        dx - fam.gap * mid.v[c]
                    })
                    .collect();
                worst = worst.max(norm(&res));
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

/// `det ∇_{(t1, x1, v1)} γ(r)` at `z0 = 0`, `z1 = (T, 1, 1)`, by central
/// differences.
fn jacobian_det(fam: &TrajectoryFamily, r: f64, step: f64) -> f64 {
    let d = fam.dim;
    let n = 1 + 2 * d;
    let z0 = PhasePoint::identity(d);
    let base: Vec<f64> = std::iter::once(fam.gap).chain(std::iter::repeat(1.0).take(2 * d)).collect();
    let gamma = |z: &[f64]| -> Option<Vec<f64>> {
        let f = fam.with_gap(z[0]).ok()?;
        let z1 = PhasePoint { t: z[0], x: z[1..=d].to_vec(), v: z[d + 1..].to_vec() };
        let p = f.eval_unchecked(r, &z0, &z1);
        Some(std::iter::once(p.t).chain(p.x).chain(p.v).collect())
    };
    let mut jac = DMatrix::zeros(n, n);
    for col in 0..n {
        let h = step * base[col].abs().max(1.0);
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[col] += h;
        minus[col] -= h;
        let (Some(gp), Some(gm)) = (gamma(&plus), gamma(&minus)) else {
            return f64::NAN;
        };
        for row in 0..n {
            jac[(row, col)] = (gp[row] - gm[row]) / (2.0 * h);
        }
    }
    jac.determinant()
}

fn validate_r_grid(r_grid: &[f64]) -> Result<()> {
    if r_grid.len() < 64 {
        return domain(format!("r grid needs at least 64 points, got {}", r_grid.len()));
    }
    if let Some(r) = r_grid.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
        return domain(format!("r grid must lie in (0, 1], found {r}"));
    }
    let smallest = r_grid.iter().copied().fold(f64::INFINITY, f64::min);
    if smallest > 1e-6 * (1.0 + 1e-9) {
        return domain(format!("r grid must reach 1e-6, smallest point is {smallest}"));
    }
    Ok(())
}

pub fn check_properties(fam: &TrajectoryFamily, tol: &Tolerances, r_grid: &[f64]) -> Result<PropertyReport> {
    validate_r_grid(r_grid)?;
    let d = fam.dim as f64;
    let gap = fam.gap;
    let pairs = random_pairs(fam, tol.endpoint_pairs, tol.seed);

    let curve: Vec<CurvePoint> = r_grid
        .par_iter()
        .map(|&r| {
            let bl = fam.blocks(r);
            let det2 = bl.det_a();
            let inv_column = if det2 != 0.0 && det2.is_finite() {
                d.sqrt() * bl.a[0][1].hypot(bl.a[0][0]) / det2.abs()
            } else {
                f64::NAN
            };
            CurvePoint {
                r,
                det_a: det2.powi(fam.dim as i32),
                inv_column,
                jacobian_det: jacobian_det(fam, r, tol.fd_step),
            }
        })
        .collect();
    let singular_points: Vec<f64> = curve.iter().filter(|p| p.inv_column.is_nan()).map(|p| p.r).collect();

    let fits = [
        fit_exponent(&curve, tol.fit_r_max, |p| p.det_a),
        fit_exponent(&curve, tol.fit_r_max, |p| p.inv_column),
        fit_exponent(&curve, tol.fit_r_max, |p| p.jacobian_det),
    ];
    let targets = [2.0 * d, -0.5, 2.0 + 4.0 * d];
    let hit = |i: usize| (fits[i].slope - targets[i]).abs() <= tol.exponent;

    let inv_column_constant = curve
        .iter()
        .filter(|p| p.inv_column.is_finite())
        .map(|p| p.r.sqrt() * p.inv_column / (1.0 + gap.abs()))
        .fold(0.0, f64::max);

    let mut gamma_err: f64 = 0.0;
    for (z0, z1) in &pairs {
        let e = point_dist(&fam.eval_unchecked(0.0, z0, z1), z0) + point_dist(&fam.eval_unchecked(1.0, z0, z1), z1);
        gamma_err = gamma_err.max(e);
    }
    let endpoint_errors = EndpointErrors {
        gamma: gamma_err,
        a_at_zero: max_abs_diff(&fam.a(0.0), false),
        a_at_one: max_abs_diff(&fam.a(1.0), true),
        b_at_zero: max_abs_diff(&fam.b(0.0), true),
        b_at_one: max_abs_diff(&fam.b(1.0), false),
    };

    let kinetic = kinetic_residual(fam, &pairs, tol.kinetic_points);

    let b_det_near_zero = r_grid
        .iter()
        .filter(|&&r| r <= tol.b_det_r_star)
        .map(|&r| fam.blocks(r).det_b().powi(fam.dim as i32))
        .fold(f64::INFINITY, f64::min);

    let margins: Vec<[f64; 3]> = r_grid
        .par_iter()
        .map(|&r| {
            let mut m = [0.0f64; 3];
            for (z0, z1) in &pairs {
                let g = fam.eval_unchecked(r, z0, z1);
                let sx = norm(&z0.x) + norm(&z1.x);
                let sv = norm(&z0.v) + norm(&z1.v);
                let drift: Vec<f64> = (0..fam.dim).map(|c| g.x[c] - z0.x[c] - r * gap * z0.v[c]).collect();
                let lhs = [norm(&drift), dist(&g.v, &z0.v), norm(&fam.velocity_rate(r, z0, z1))];
                let rhs = [
                    sx * r.powf(1.5) + gap.abs() * r.powf(1.5) * sv,
                    (sx / gap.abs() + sv) * r.sqrt(),
                    (sx / gap.abs() + sv) / r.sqrt(),
                ];
                for i in 0..3 {
                    if rhs[i] > 0.0 {
                        m[i] = m[i].max(lhs[i] / rhs[i]);
                    }
                }
            }
            m
        })
        .collect();
    let mut property4_margins = [0.0f64; 3];
    for m in &margins {
        for i in 0..3 {
            property4_margins[i] = property4_margins[i].max(m[i]);
        }
    }

    let pass = PassFlags {
        endpoints: endpoint_errors.max() <= tol.endpoint,
        kinetic_relation: kinetic <= tol.kinetic,
        det_a: hit(0),
        inv_column: hit(1),
        det_b: b_det_near_zero >= tol.b_det_floor,
        property4: property4_margins.iter().all(|m| m.is_finite() && *m <= tol.property4_cap),
        jacobian: hit(2),
    };

    Ok(PropertyReport {
        family: fam.clone(),
        kinetic_residual: kinetic,
        endpoint_errors,
        det_a_exponent: fits[0].slope,
        det_a_target: targets[0],
        inv_column_exponent: fits[1].slope,
        inv_column_target: targets[1],
        jacobian_exponent: fits[2].slope,
        jacobian_target: targets[2],
        fits,
        inv_column_constant,
        b_det_near_zero,
        property4_margins,
        singular_points,
        pass,
        curve,
    })
}

/// `(det_a_exponent, inv_column_exponent)` on the default grid.
pub fn criticality_exponents(fam: &TrajectoryFamily) -> Result<(f64, f64)> {
    let report = check_properties(fam, &Tolerances::default(), &default_r_grid())?;
    Ok((report.det_a_exponent, report.inv_column_exponent))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_integrals_match_quadrature() {
        let (phi, psi) = FamilyKind::LogOscillatory(OscillationParams::default()).profiles();
        for prof in [&phi, &psi] {
            let r: f64 = 0.7;
            let n = 200_000;
            // midpoint rule on a log-substituted integrand
            let (a, b) = (1e-12f64.ln(), r.ln());
            let h = (b - a) / n as f64;
            let quad: f64 = (0..n)
                .map(|i| {
                    let s = (a + (i as f64 + 0.5) * h).exp();
                    prof.value(s) * s * h
                })
                .sum();
            assert!((quad - prof.integral(r)).abs() < 1e-8, "{quad} vs {}", prof.integral(r));
            let e = 1e-6;
            let fd = (prof.value(r + e) - prof.value(r - e)) / (2.0 * e);
            assert!((fd - prof.derivative(r)).abs() < 1e-6);
        }
    }

    #[test]
    fn straight_blocks_closed_form() {
        let f = straight_family(2.0, 1).unwrap();
        let r = 0.3;
        let bl = f.blocks(r);
        let a =
            [[3.0 * r * r - 2.0 * r.powi(3), 2.0 * (r.powi(3) - r * r)], [3.0 * (r - r * r), 3.0 * r * r - 2.0 * r]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((bl.a[i][j] - a[i][j]).abs() < 1e-15);
            }
        }
        assert!((bl.det_a() - r.powi(4)).abs() < 1e-15);
    }

    #[test]
    fn gap_validation() {
        assert!(straight_family(0.0, 1).is_err());
        assert!(straight_family(1.0, 0).is_err());
        let bad = OscillationParams { eps: 1.0, ..Default::default() };
        assert!(log_oscillatory_family(1.0, 1, bad).is_err());
        let f = straight_family(1.0, 1).unwrap();
        let z0 = PhasePoint::d1(0.0, 0.0, 0.0);
        let z1 = PhasePoint::d1(2.0, 0.0, 1.0);
        assert!(eval_trajectory(&f, 0.5, &z0, &z1).is_err());
        let z1 = PhasePoint::d1(1.0, 0.0, 1.0);
        assert!(eval_trajectory(&f, 1.5, &z0, &z1).is_err());
    }

    #[test]
    fn short_grid_rejected() {
        let f = straight_family(1.0, 1).unwrap();
        let grid: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        assert!(check_properties(&f, &Tolerances::default(), &grid).is_err());
    }
}
