//! The kinetic Galilean group on phase space `R^{1+2d}`, its anisotropic
//! dilations, and the gap normalization that maps a pair of points onto a
//! unit time gap.
//!
//! The group law is
//!
//! ```text
//! (t1, x1, v1) ∘ (t2, x2, v2) = (t1 + t2, x1 + x2 + t2 v1, v1 + v2)
//! ```
//!
//! with identity `(0, 0, 0)` and inverse `(t, x, v)^{-1} = (-t, -x + t v, -v)`.
//! The dilation `δ_r` acts on points as `(t, x, v) ↦ (r² t, r³ x, r v)` and is a
//! group homomorphism.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl PhasePoint {
    pub fn new(t: f64, x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if x.len() != v.len() || x.is_empty() {
            return domain(format!(
                "position and velocity must share a dimension d >= 1 (got {} and {})",
                x.len(),
                v.len()
            ));
        }
        if !t.is_finite() || x.iter().chain(v.iter()).any(|c| !c.is_finite()) {
            return domain("phase point has non-finite components");
        }
        Ok(Self { t, x, v })
    }

    /// A one-dimensional point `(t, x, v)`.
    pub fn d1(t: f64, x: f64, v: f64) -> Self {
        Self { t, x: vec![x], v: vec![v] }
    }

    pub fn identity(d: usize) -> Self {
        Self { t: 0.0, x: vec![0.0; d], v: vec![0.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Group law `self ∘ other`.
    pub fn compose(&self, other: &PhasePoint) -> PhasePoint {
        assert_eq!(self.dim(), other.dim(), "phase points of different dimension");
        let x = self.x.iter().zip(&other.x).zip(&self.v).map(|((x1, x2), v1)| x1 + x2 + other.t * v1).collect();
        let v = self.v.iter().zip(&other.v).map(|(a, b)| a + b).collect();
        PhasePoint { t: self.t + other.t, x, v }
    }

    pub fn inverse(&self) -> PhasePoint {
        let x = self.x.iter().zip(&self.v).map(|(x, v)| -x + self.t * v).collect();
        let v = self.v.iter().map(|v| -v).collect();
        PhasePoint { t: -self.t, x, v }
    }

    /// Point action of the kinetic dilation `δ_r`.
    pub fn scale(&self, r: f64) -> Result<PhasePoint> {
        if !(r > 0.0) || !r.is_finite() {
            return domain(format!("dilation factor must be positive and finite, got {r}"));
        }
        let r3 = r * r * r;
        Ok(PhasePoint {
            t: r * r * self.t,
            x: self.x.iter().map(|x| r3 * x).collect(),
            v: self.v.iter().map(|v| r * v).collect(),
        })
    }

    /// Largest componentwise deviation from `other`, relative to the
    /// magnitude of the larger component (absolute below 1).
    pub fn max_rel_diff(&self, other: &PhasePoint) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        let mut err = rel(self.t, other.t);
        for (a, b) in self.x.iter().zip(&other.x).chain(self.v.iter().zip(&other.v)) {
            err = err.max(rel(*a, *b));
        }
        err
    }
}

pub fn compose(z1: &PhasePoint, z2: &PhasePoint) -> PhasePoint {
    z1.compose(z2)
}

pub fn inverse(z: &PhasePoint) -> PhasePoint {
    z.inverse()
}

pub fn scale_point(r: f64, z: &PhasePoint) -> Result<PhasePoint> {
    z.scale(r)
}

/// The time gap `τ = t - s` between two phase points together with the
/// transported offsets `X = x - y - τ w`, `V = v - w` and their unit-gap
/// dilations `X̄ = X / τ^{3/2}`, `V̄ = V / τ^{1/2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedGap {
    pub tau: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub x_bar: Vec<f64>,
    pub v_bar: Vec<f64>,
}

impl NormalizedGap {
    /// Builds a gap directly from `(τ, X, V)`.
    pub fn from_offsets(tau: f64, x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return domain(format!("time gap must be positive, got {tau}"));
        }
        if x.len() != v.len() || x.is_empty() {
            return domain("offsets must share a dimension d >= 1");
        }
        let sx = tau.powf(1.5);
        let sv = tau.sqrt();
        let x_bar = x.iter().map(|c| c / sx).collect();
        let v_bar = v.iter().map(|c| c / sv).collect();
        Ok(Self { tau, x, v, x_bar, v_bar })
    }

    /// One-dimensional shorthand.
    pub fn d1(tau: f64, x: f64, v: f64) -> Result<Self> {
        Self::from_offsets(tau, vec![x], vec![v])
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Left-translates `z_to` by `z_from^{-1}` and reads off the gap.
pub fn normalize_gap(z_from: &PhasePoint, z_to: &PhasePoint) -> Result<NormalizedGap> {
    if z_from.dim() != z_to.dim() {
        return domain("phase points of different dimension");
    }
    let tau = z_to.t - z_from.t;
    if !(tau > 0.0) {
        return domain(format!("non-positive time gap {tau}"));
    }
    let x = z_to.x.iter().zip(&z_from.x).zip(&z_from.v).map(|((x, y), w)| x - y - tau * w).collect();
    let v = z_to.v.iter().zip(&z_from.v).map(|(v, w)| v - w).collect();
    NormalizedGap::from_offsets(tau, x, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(t: f64, x: f64, v: f64) -> PhasePoint {
        PhasePoint::d1(t, x, v)
    }

    #[test]
    fn compose_examples() {
        let z = p(1.3, -0.2, 0.7);
        assert_eq!(z.compose(&PhasePoint::identity(1)), z);
        assert_eq!(p(1.0, 0.0, 2.0).compose(&p(1.0, 3.0, 0.0)), p(2.0, 5.0, 2.0));
        let ab = p(1.0, 0.0, 1.0).compose(&p(1.0, 0.0, 0.0));
        let ba = p(1.0, 0.0, 0.0).compose(&p(1.0, 0.0, 1.0));
        assert_eq!(ab, p(2.0, 1.0, 1.0));
        assert_eq!(ba, p(2.0, 0.0, 1.0));
        assert_ne!(ab, ba);
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(PhasePoint::identity(1).inverse(), p(-0.0, 0.0, -0.0));
        let z = p(2.0, 4.0, 1.0);
        assert_eq!(z.inverse(), p(-2.0, -2.0, -1.0));
        assert_eq!(z.compose(&z.inverse()), p(0.0, 0.0, 0.0));
        let u = p(1.0, 1.0, 1.0);
        assert_eq!(u.inverse().compose(&u), p(0.0, 0.0, 0.0));
    }

    #[test]
    fn scale_examples() {
        let z = p(0.4, -1.1, 2.5);
        assert_eq!(z.scale(1.0).unwrap(), z);
        assert_eq!(p(1.0, 1.0, 1.0).scale(2.0).unwrap(), p(4.0, 8.0, 2.0));
        let z1 = p(1.0, 0.0, 1.0);
        let z2 = p(1.0, 3.0, 0.0);
        let lhs = z1.compose(&z2).scale(2.0).unwrap();
        let rhs = z1.scale(2.0).unwrap().compose(&z2.scale(2.0).unwrap());
        assert_eq!(lhs, p(8.0, 32.0, 2.0));
        assert_eq!(rhs, p(8.0, 32.0, 2.0));
        assert!(z.scale(0.0).is_err());
        assert!(z.scale(-1.0).is_err());
    }

    #[test]
    fn normalize_gap_examples() {
        let g = normalize_gap(&p(0.0, 0.0, 0.0), &p(1.0, 0.3, -0.4)).unwrap();
        assert_eq!(g.tau, 1.0);
        assert_eq!(g.x_bar, vec![0.3]);
        assert_eq!(g.v_bar, vec![-0.4]);

        let g = normalize_gap(&p(0.0, 0.0, 1.0), &p(4.0, 4.0, 1.0)).unwrap();
        assert_eq!((g.tau, g.x[0], g.v[0], g.x_bar[0], g.v_bar[0]), (4.0, 0.0, 0.0, 0.0, 0.0));

        let g = normalize_gap(&p(0.0, 0.0, 0.0), &p(4.0, 8.0, 2.0)).unwrap();
        assert_eq!((g.tau, g.x[0], g.v[0], g.x_bar[0], g.v_bar[0]), (4.0, 8.0, 2.0, 1.0, 1.0));

        assert!(normalize_gap(&p(1.0, 0.0, 0.0), &p(1.0, 0.0, 0.0)).is_err());
        assert!(normalize_gap(&p(2.0, 0.0, 0.0), &p(1.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn normalize_gap_matches_translate_then_dilate() {
        let from = p(0.5, -0.3, 0.8);
        let to = p(2.75, 1.9, -0.4);
        let g = normalize_gap(&from, &to).unwrap();
        let moved = from.inverse().compose(&to);
        let unit = moved.scale(g.tau.powf(-0.5)).unwrap();
        assert!((unit.t - 1.0).abs() < 1e-14);
        assert!((unit.x[0] - g.x_bar[0]).abs() < 1e-14);
        assert!((unit.v[0] - g.v_bar[0]).abs() < 1e-14);
    }

    #[test]
    fn rejects_malformed_points() {
        assert!(PhasePoint::new(f64::NAN, vec![0.0], vec![0.0]).is_err());
        assert!(PhasePoint::new(0.0, vec![0.0, 1.0], vec![0.0]).is_err());
        assert!(PhasePoint::new(0.0, vec![], vec![]).is_err());
        assert!(PhasePoint::new(0.0, vec![1.0, 2.0], vec![3.0, 4.0]).is_ok());
    }
}
