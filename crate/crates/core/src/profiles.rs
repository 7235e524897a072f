//! Anisotropic Gaussian profiles `τ^{-2d} exp(-c E)` in the kinetic exponent
//! `E = |X|²/τ³ + |V|²/τ`, the constant-coefficient Kolmogorov kernel, and
//! empirical fitting of two-sided envelope constants.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::geometry::{normalize_gap, NormalizedGap, PhasePoint};

/// Ellipticity constants `0 < λ ≤ Λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityBounds {
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
}

impl EllipticityBounds {
    pub fn new(lambda: f64, big_lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !(big_lambda >= lambda) || !big_lambda.is_finite() {
            return domain(format!("need 0 < lambda <= Lambda, got ({lambda}, {big_lambda})"));
        }
        Ok(Self { lambda, big_lambda })
    }

    /// The combination `1/λ + Λ`.
    pub fn weight(&self) -> f64 {
        1.0 / self.lambda + self.big_lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileConstants {
    pub c0_up: f64,
    pub c1_up: f64,
    pub c0_low: f64,
    pub c1_low: f64,
}

impl ProfileConstants {
    pub fn new(c0_up: f64, c1_up: f64, c0_low: f64, c1_low: f64) -> Result<Self> {
        if [c0_up, c1_up, c0_low, c1_low].iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return domain("profile constants must be positive and finite");
        }
        Ok(Self { c0_up, c1_up, c0_low, c1_low })
    }

    /// Whether the ordering `c0_low ≤ C0_up`, `c1_low ≥ C1_up` holds, which
    /// makes the lower profile sit below the upper one everywhere.
    pub fn is_ordered(&self) -> bool {
        self.c0_low <= self.c0_up && self.c1_low >= self.c1_up
    }
}

pub fn kinetic_exponent(gap: &NormalizedGap) -> f64 {
    let tau = gap.tau;
    let x2: f64 = gap.x.iter().map(|c| c * c).sum();
    let v2: f64 = gap.v.iter().map(|c| c * c).sum();
    x2 / (tau * tau * tau) + v2 / tau
}

fn gaussian_profile(c0: f64, c1: f64, gap: &NormalizedGap, d: usize) -> f64 {
    c0 * gap.tau.powi(-2 * d as i32) * (-c1 * kinetic_exponent(gap)).exp()
}

/// `C0_up τ^{-2d} exp(-C1_up E)`.
pub fn upper_profile(c: &ProfileConstants, gap: &NormalizedGap, d: usize) -> f64 {
    gaussian_profile(c.c0_up, c.c1_up, gap, d)
}

/// `c0_low τ^{-2d} exp(-c1_low E)`.
pub fn lower_profile(c: &ProfileConstants, gap: &NormalizedGap, d: usize) -> f64 {
    gaussian_profile(c.c0_low, c.c1_low, gap, d)
}

/// A centred Gaussian in the transported offsets `(X, V)`, with the same
/// 2×2 covariance `[[cxx, cxv], [cxv, cvv]]` in every dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticGaussian {
    pub cxx: f64,
    pub cxv: f64,
    pub cvv: f64,
}

impl KineticGaussian {
    /// Law of `(X, V)` for the constant coefficient `a = σ² Id` after a gap `τ`:
    /// covariance `2σ² [[τ³/3, τ²/2], [τ²/2, τ]]`.
    pub fn explicit(sigma2: f64, tau: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !(tau > 0.0) {
            return domain(format!("need sigma2 > 0 and tau > 0, got ({sigma2}, {tau})"));
        }
        Ok(Self { cxx: 2.0 * sigma2 * tau.powi(3) / 3.0, cxv: sigma2 * tau * tau, cvv: 2.0 * sigma2 * tau })
    }

    /// The same law started from a Gaussian bump of standard deviations
    /// `(wx, wv)` instead of a point mass: the bump is sheared by free
    /// transport over the gap and adds to the covariance.
    pub fn with_initial_spread(self, tau: f64, wx: f64, wv: f64) -> Self {
        let (sx, sv) = (wx * wx, wv * wv);
        Self { cxx: self.cxx + sx + tau * tau * sv, cxv: self.cxv + tau * sv, cvv: self.cvv + sv }
    }

    pub fn det(&self) -> f64 {
        self.cxx * self.cvv - self.cxv * self.cxv
    }

    /// Density at per-dimension offsets `(X_i, V_i)`.
    pub fn density(&self, x: &[f64], v: &[f64]) -> f64 {
        let det = self.det();
        let norm = 1.0 / (2.0 * PI * det.sqrt());
        let mut q = 0.0;
        for (a, b) in x.iter().zip(v) {
            q += (self.cvv * a * a - 2.0 * self.cxv * a * b + self.cxx * b * b) / det;
        }
        norm.powi(x.len() as i32) * (-0.5 * q).exp()
    }
}

/// The fundamental solution of the Kolmogorov equation with constant
/// coefficient `a = σ² Id`, evaluated between `z_from` and `z_to`.
pub fn explicit_kernel(sigma2: f64, z_to: &PhasePoint, z_from: &PhasePoint, d: usize) -> Result<f64> {
    if z_to.dim() != d || z_from.dim() != d {
        return domain(format!("points are not {d}-dimensional"));
    }
    let gap = normalize_gap(z_from, z_to)?;
    Ok(KineticGaussian::explicit(sigma2, gap.tau)?.density(&gap.x, &gap.v))
}

/// Per-axis exponential rates fitted from samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRates {
    /// Samples with `V = 0`.
    pub x_axis: f64,
    /// Samples with `X = 0`.
    pub v_axis: f64,
    /// All samples together.
    pub overall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub constants: ProfileConstants,
    pub axis_rates: AxisRates,
    /// Root-mean-square residual of the overall log-linear fit.
    pub residual: f64,
    pub sample_count: usize,
}

impl FitReport {
    /// Checks `lower ≤ value ≤ upper` on every sample, with a relative slack.
    pub fn brackets(&self, samples: &[(NormalizedGap, f64)], d: usize, rel_tol: f64) -> bool {
        samples.iter().all(|(gap, value)| {
            let lo = lower_profile(&self.constants, gap, d);
            let hi = upper_profile(&self.constants, gap, d);
            lo <= value * (1.0 + rel_tol) && *value <= hi * (1.0 + rel_tol)
        })
    }
}

/// Samples count as lying on an axis when the other normalized offset is
/// below this magnitude.
pub const AXIS_TOLERANCE: f64 = 1e-9;

/// Least-squares line `y = a - rate * e`, returning `(a, rate, rms)`.
fn log_linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let me = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let see: f64 = points.iter().map(|p| (p.0 - me).powi(2)).sum();
    if see <= 1e-12 * (1.0 + me * me) * n {
        return None;
    }
    let sey: f64 = points.iter().map(|p| (p.0 - me) * (p.1 - my)).sum();
    let slope = sey / see;
    let a = my - slope * me;
    let rms = (points.iter().map(|p| (p.1 - a - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Some((a, -slope, rms))
}

/// Fits two-sided Gaussian envelopes to kernel samples.
///
/// `log(value · τ^{2d})` is regressed on `E` over all samples and separately on
/// the `X`-axis (`V = 0`) and `V`-axis (`X = 0`) samples. The upper rate is the
/// smaller axis rate and the lower rate the larger one; the prefactors are then
/// the tightest constants that bracket every sample. An axis with fewer than
/// two distinct exponents falls back to the overall rate.
pub fn fit_envelope(samples: &[(NormalizedGap, f64)], d: usize) -> Result<FitReport> {
    if samples.len() < 8 {
        return Err(Error::Fit(format!("need at least 8 samples, got {}", samples.len())));
    }
    let mut all = Vec::with_capacity(samples.len());
    let mut x_axis = Vec::new();
    let mut v_axis = Vec::new();
    for (gap, value) in samples {
        if !(*value > 0.0) || !value.is_finite() {
            return domain(format!("sample value must be positive, got {value}"));
        }
        if gap.dim() != d {
            return domain("sample gap has the wrong dimension");
        }
        let e = kinetic_exponent(gap);
        let y = (value * gap.tau.powi(2 * d as i32)).ln();
        all.push((e, y));
        let xn = gap.x_bar.iter().map(|c| c * c).sum::<f64>().sqrt();
        let vn = gap.v_bar.iter().map(|c| c * c).sum::<f64>().sqrt();
        if vn <= AXIS_TOLERANCE {
            x_axis.push((e, y));
        }
        if xn <= AXIS_TOLERANCE {
            v_axis.push((e, y));
        }
    }
    let (_, overall, residual) =
        log_linear_fit(&all).ok_or_else(|| Error::Fit("kinetic exponents do not vary".into()))?;
    let rate_x = log_linear_fit(&x_axis).map(|f| f.1).unwrap_or(overall);
    let rate_v = log_linear_fit(&v_axis).map(|f| f.1).unwrap_or(overall);
    for (name, rate) in [("overall", overall), ("x-axis", rate_x), ("v-axis", rate_v)] {
        if !(rate > 1e-12) {
            return Err(Error::Fit(format!("{name} decay rate {rate:.3e} is not positive")));
        }
    }
    let c1_up = rate_x.min(rate_v);
    let c1_low = rate_x.max(rate_v);
    let c0_up = all.iter().map(|(e, y)| (y + c1_up * e).exp()).fold(0.0, f64::max);
    let c0_low = all.iter().map(|(e, y)| (y + c1_low * e).exp()).fold(f64::INFINITY, f64::min);
    Ok(FitReport {
        constants: ProfileConstants::new(c0_up, c1_up, c0_low, c1_low)?,
        axis_rates: AxisRates { x_axis: rate_x, v_axis: rate_v, overall },
        residual,
        sample_count: samples.len(),
    })
}

/// Normalized sampling offsets used when fitting envelopes to a unit-gap
/// kernel: both axes plus an off-axis lattice, all with `E ≤ e_max`.
pub fn envelope_sample_offsets(e_max: f64, per_axis: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let r = e_max.sqrt();
    for i in 0..=per_axis {
        let s = r * i as f64 / per_axis as f64;
        out.push((s, 0.0));
        out.push((0.0, s));
        if i > 0 {
            out.push((-s, 0.0));
            out.push((0.0, -s));
        }
    }
    let n = per_axis as i64;
    for i in -n..=n {
        for j in -n..=n {
            if i == 0 || j == 0 {
                continue;
            }
            let (x, v) = (r * i as f64 / n as f64, r * j as f64 / n as f64);
            if x * x + v * v <= e_max {
                out.push((x, v));
            }
        }
    }
    out
}
