//! Rough diffusion coefficients `a(t, x, v)` and measurement of their
//! ellipticity constants
//!
//! ```text
//! λ = inf ⟨a ξ, ξ⟩ / |ξ|²,    Λ = sup |a ξ|² / ⟨a ξ, ξ⟩.
//! ```
//!
//! Every shipped field is a scalar multiple of the identity; the matrix
//! interface exists so anisotropic fields can be added without touching the
//! measurement code.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldKind {
    Constant {
        value: f64,
    },
    /// Two values alternating on half-open boxes `[k c, (k+1) c)` in `(t, x, v)`.
    Checkerboard {
        low: f64,
        high: f64,
        /// Cell sizes in `(t, x, v)`.
        cell: [f64; 3],
    },
    /// `base + amplitude · sin(2π kx x) sin(2π kv v) · cos(2π kt t)`.
    Oscillatory {
        base: f64,
        amplitude: f64,
        /// Wavenumbers `(kx, kv)`.
        wavenumber: [f64; 2],
        #[serde(default)]
        time_frequency: f64,
    },
    /// Independent per-cell values drawn from the seed, either uniformly from
    /// `[low, high]` or from the two endpoints only.
    RandomPiecewise {
        low: f64,
        high: f64,
        cell: [f64; 3],
        #[serde(default)]
        two_valued: bool,
    },
}

/// Affine reparametrization of the coefficient's arguments:
/// `a'(t, x, v) = a(t₀ + s_t t, x₀ + s_x x + c t, v₀ + s_v v)`.
///
/// Covers the time reversal used by the adjoint equation, kinetic dilations
/// and left translations by group elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArgMap {
    pub t_offset: f64,
    pub t_scale: f64,
    pub x_offset: f64,
    pub x_scale: f64,
    pub x_shear: f64,
    pub v_offset: f64,
    pub v_scale: f64,
}

impl Default for ArgMap {
    fn default() -> Self {
        Self { t_offset: 0.0, t_scale: 1.0, x_offset: 0.0, x_scale: 1.0, x_shear: 0.0, v_offset: 0.0, v_scale: 1.0 }
    }
}

impl ArgMap {
    /// `a(t, x, v) ↦ a(t_ref - t, x, v)`.
    pub fn time_reversal(t_ref: f64) -> Self {
        Self { t_offset: t_ref, t_scale: -1.0, ..Self::default() }
    }

    /// `a ↦ δ_r a = a(r² t, r³ x, r v)`.
    pub fn dilation(r: f64) -> Self {
        Self { t_scale: r * r, x_scale: r * r * r, v_scale: r, ..Self::default() }
    }

    /// `a ↦ a((t₀, x₀, v₀) ∘ ·)`.
    pub fn translation(t0: f64, x0: f64, v0: f64) -> Self {
        Self { t_offset: t0, x_offset: x0, x_shear: v0, v_offset: v0, ..Self::default() }
    }

    /// The map `z ↦ self(inner(z))`.
    pub fn after(&self, inner: &ArgMap) -> ArgMap {
        ArgMap {
            t_offset: self.t_offset + self.t_scale * inner.t_offset,
            t_scale: self.t_scale * inner.t_scale,
            x_offset: self.x_offset + self.x_scale * inner.x_offset + self.x_shear * inner.t_offset,
            x_scale: self.x_scale * inner.x_scale,
            x_shear: self.x_scale * inner.x_shear + self.x_shear * inner.t_scale,
            v_offset: self.v_offset + self.v_scale * inner.v_offset,
            v_scale: self.v_scale * inner.v_scale,
        }
    }

    #[inline]
    fn apply(&self, t: f64, x: f64, v: f64) -> (f64, f64, f64) {
        (
            self.t_offset + self.t_scale * t,
            self.x_offset + self.x_scale * x + self.x_shear * t,
            self.v_offset + self.v_scale * v,
        )
    }
}

/// Serializable description of a coefficient field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDescriptor {
    #[serde(flatten)]
    pub kind: FieldKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub map: ArgMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    descriptor: FieldDescriptor,
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn cell_index(u: f64, size: f64) -> i64 {
    (u / size).floor() as i64
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return domain(format!("{name} must be positive and finite, got {v}"));
    }
    Ok(())
}

fn check_cells(cell: &[f64; 3]) -> Result<()> {
    for (name, c) in ["t-cell", "x-cell", "v-cell"].iter().zip(cell) {
        check_positive(name, *c)?;
    }
    Ok(())
}

impl CoefficientField {
    pub fn new(descriptor: FieldDescriptor) -> Result<Self> {
        match &descriptor.kind {
            FieldKind::Constant { value } => check_positive("constant value", *value)?,
            FieldKind::Checkerboard { low, high, cell } | FieldKind::RandomPiecewise { low, high, cell, .. } => {
                check_positive("low value", *low)?;
                check_positive("high value", *high)?;
                if low > high {
                    return domain(format!("low value {low} exceeds high value {high}"));
                }
                check_cells(cell)?;
            }
            FieldKind::Oscillatory { base, amplitude, wavenumber, time_frequency } => {
                check_positive("base", *base)?;
                if !(amplitude.abs() < *base) {
                    return domain(format!("amplitude {amplitude} must be smaller than base {base} in magnitude"));
                }
                if wavenumber.iter().chain([time_frequency]).any(|k| !k.is_finite()) {
                    return domain("wavenumbers must be finite");
                }
            }
        }
        let m = &descriptor.map;
        if [m.t_offset, m.t_scale, m.x_offset, m.x_scale, m.x_shear, m.v_offset, m.v_scale]
            .iter()
            .any(|c| !c.is_finite())
        {
            return domain("argument map has non-finite entries");
        }
        Ok(Self { descriptor })
    }

    pub fn constant(value: f64) -> Result<Self> {
        make_field(FieldKind::Constant { value }, 0)
    }

    pub fn descriptor(&self) -> &FieldDescriptor {
        &self.descriptor
    }

    /// The same field seen through an additional inner argument map.
    pub fn remapped(&self, inner: &ArgMap) -> Self {
        let mut descriptor = self.descriptor.clone();
        descriptor.map = descriptor.map.after(inner);
        Self { descriptor }
    }

    /// `a_t(σ, ·) = a(t - σ, ·)`.
    pub fn time_reversed(&self, t_ref: f64) -> Self {
        self.remapped(&ArgMap::time_reversal(t_ref))
    }

    /// `δ_r a`.
    pub fn dilated(&self, r: f64) -> Result<Self> {
        check_positive("dilation factor", r)?;
        Ok(self.remapped(&ArgMap::dilation(r)))
    }

    /// Scalar value of a one-dimensional field.
    #[inline]
    pub fn value(&self, t: f64, x: f64, v: f64) -> f64 {
        let (t, x, v) = self.descriptor.map.apply(t, x, v);
        self.raw_value(t, &[x], &[v])
    }

    fn raw_value(&self, t: f64, x: &[f64], v: &[f64]) -> f64 {
        match &self.descriptor.kind {
            FieldKind::Constant { value } => *value,
            FieldKind::Checkerboard { low, high, cell } => {
                let mut parity = cell_index(t, cell[0]) + (self.descriptor.seed & 1) as i64;
                for (xi, vi) in x.iter().zip(v) {
                    parity += cell_index(*xi, cell[1]) + cell_index(*vi, cell[2]);
                }
                if parity.rem_euclid(2) == 0 {
                    *low
                } else {
                    *high
                }
            }
            FieldKind::Oscillatory { base, amplitude, wavenumber, time_frequency } => {
                let mut prod = (2.0 * PI * time_frequency * t).cos();
                for (xi, vi) in x.iter().zip(v) {
                    prod *= (2.0 * PI * wavenumber[0] * xi).sin() * (2.0 * PI * wavenumber[1] * vi).sin();
                }
                base + amplitude * prod
            }
            FieldKind::RandomPiecewise { low, high, cell, two_valued } => {
                let mut h = mix64(self.descriptor.seed ^ 0x9e37_79b9_7f4a_7c15);
                h = mix64(h ^ cell_index(t, cell[0]) as u64);
                for (xi, vi) in x.iter().zip(v) {
                    h = mix64(h ^ cell_index(*xi, cell[1]) as u64);
                    h = mix64(h ^ cell_index(*vi, cell[2]) as u64);
                }
                if *two_valued {
                    if h & 1 == 0 {
                        *low
                    } else {
                        *high
                    }
                } else {
                    let u = (h >> 11) as f64 / (1u64 << 53) as f64;
                    low + (high - low) * u
                }
            }
        }
    }

    /// The `d×d` matrix `a(t, x, v)` in row-major order.
    pub fn matrix(&self, t: f64, x: &[f64], v: &[f64]) -> Vec<f64> {
        let d = x.len();
        let m = &self.descriptor.map;
        let tt = m.t_offset + m.t_scale * t;
        let xs: Vec<f64> = x.iter().map(|xi| m.x_offset + m.x_scale * xi + m.x_shear * t).collect();
        let vs: Vec<f64> = v.iter().map(|vi| m.v_offset + m.v_scale * vi).collect();
        let s = self.raw_value(tt, &xs, &vs);
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            out[i * d + i] = s;
        }
        out
    }
}

/// Builds a validated field from its kind and seed.
pub fn make_field(kind: FieldKind, seed: u64) -> Result<CoefficientField> {
    CoefficientField::new(FieldDescriptor { kind, seed, map: ArgMap::default() })
}

/// Measured ellipticity constants over a sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub lambda_hat: f64,
    #[serde(rename = "Lambda_hat")]
    pub big_lambda_hat: f64,
    pub sample_count: usize,
}

/// Tensor-product sample points in `(t, x, v)` plus the number of test
/// directions `ξ` on the unit sphere. In `d > 1` the spatial samples lie on
/// the diagonal `(x, …, x)`, `(v, …, v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticitySampling {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub vs: Vec<f64>,
    pub directions: usize,
    pub dim: usize,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

impl EllipticitySampling {
    /// Uniform samples of `[t0, t1] × [-lx, lx] × [-lv, lv]` in one dimension.
    pub fn uniform(t_range: (f64, f64), nt: usize, lx: f64, nx: usize, lv: f64, nv: usize) -> Self {
        Self {
            times: linspace(t_range.0, t_range.1, nt),
            xs: linspace(-lx, lx, nx),
            vs: linspace(-lv, lv, nv),
            directions: 16,
            dim: 1,
        }
    }

    fn unit_directions(&self) -> Vec<Vec<f64>> {
        if self.dim == 1 {
            return (0..self.directions).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }]).collect();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        (0..self.directions)
            .map(|_| loop {
                let xi: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = xi.iter().map(|c| c * c).sum::<f64>().sqrt();
                if n > 1e-3 && n <= 1.0 {
                    break xi.into_iter().map(|c| c / n).collect();
                }
            })
            .collect()
    }
}

/// Evaluates both ellipticity quotients at every sample and direction.
pub fn measure_ellipticity(field: &CoefficientField, sampling: &EllipticitySampling) -> Result<EllipticityReport> {
    if sampling.directions < 16 {
        return Err(Error::Config(format!("need at least 16 directions, got {}", sampling.directions)));
    }
    if sampling.times.is_empty() || sampling.xs.is_empty() || sampling.vs.is_empty() || sampling.dim == 0 {
        return Err(Error::Config("empty ellipticity sample set".into()));
    }
    let d = sampling.dim;
    let dirs = sampling.unit_directions();
    let mut lambda_hat = f64::INFINITY;
    let mut big_lambda_hat: f64 = 0.0;
    let mut count = 0usize;
    let mut a_xi = vec![0.0; d];
    for &t in &sampling.times {
        for &x in &sampling.xs {
            for &v in &sampling.vs {
                let xv = vec![x; d];
                let vv = vec![v; d];
                let a = field.matrix(t, &xv, &vv);
                for xi in &dirs {
                    for i in 0..d {
                        a_xi[i] = (0..d).map(|j| a[i * d + j] * xi[j]).sum();
                    }
                    let quad: f64 = a_xi.iter().zip(xi).map(|(p, q)| p * q).sum();
                    let xi2: f64 = xi.iter().map(|c| c * c).sum();
                    if !(quad > 0.0) || !quad.is_finite() {
                        return Err(Error::Ellipticity { t, x: xv, v: vv, quadratic_form: quad });
                    }
                    let norm2: f64 = a_xi.iter().map(|c| c * c).sum();
                    lambda_hat = lambda_hat.min(quad / xi2);
                    big_lambda_hat = big_lambda_hat.max(norm2 / quad);
                    count += 1;
                }
            }
        }
    }
    Ok(EllipticityReport { lambda_hat, big_lambda_hat, sample_count: count })
}

/// A family of two-valued random piecewise-constant fields on a common cell
/// size, one per seed; seed `0` is the plain checkerboard.
pub fn checkerboard_ensemble(low: f64, high: f64, cell: [f64; 3], members: usize) -> Result<Vec<CoefficientField>> {
    (0..members as u64)
        .map(|seed| {
            if seed == 0 {
                make_field(FieldKind::Checkerboard { low, high, cell }, 0)
            } else {
                make_field(FieldKind::RandomPiecewise { low, high, cell, two_valued: true }, seed)
            }
        })
        .collect()
}
