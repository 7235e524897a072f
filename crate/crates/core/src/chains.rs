//! Harnack chains between a source at the origin and a normalized target
//! `(1, X̄, V̄)`: centres `(x_j, v_j)` at times `j/k` whose consecutive gaps all
//! lie in the near-diagonal region, the tube perturbation check, and the
//! chained lower bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::geometry::{normalize_gap, PhasePoint};
use crate::solver::KernelEstimate;

/// Largest step count tried by [`build_chain`].
pub const MAX_STEPS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearDiagonalParams {
    pub rho0: f64,
    pub c0: f64,
}

impl Default for NearDiagonalParams {
    fn default() -> Self {
        Self { rho0: 0.25, c0: 0.1 }
    }
}

impl NearDiagonalParams {
    pub fn new(rho0: f64, c0: f64) -> Result<Self> {
        if !(rho0 > 0.0 && rho0 <= 1.0) {
            return domain(format!("rho0 must lie in (0, 1], got {rho0}"));
        }
        if !(c0 > 0.0) {
            return domain(format!("c0 must be positive, got {c0}"));
        }
        Ok(Self { rho0, c0 })
    }

    /// Step-count constant used when none is given: `64 / ρ0²`.
    pub fn default_k0(&self) -> f64 {
        64.0 / (self.rho0 * self.rho0)
    }
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Whether `|V| ≤ ρ0 τ^{1/2}` and `|X| ≤ ρ0 τ^{3/2}` for the gap between the
/// two points.
pub fn near_diagonal_check(z_from: &PhasePoint, z_to: &PhasePoint, p: &NearDiagonalParams) -> Result<bool> {
    let gap = normalize_gap(z_from, z_to)?;
    Ok(norm(&gap.v) <= p.rho0 * gap.tau.sqrt() && norm(&gap.x) <= p.rho0 * gap.tau.powf(1.5))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub k: usize,
    pub dt: f64,
    pub x_bar: Vec<f64>,
    pub v_bar: Vec<f64>,
    /// Positions `x_0, ..., x_k`, row-major with `d` entries per centre.
    pub positions: Vec<f64>,
    /// Velocities `v_0, ..., v_k`, same layout.
    pub velocities: Vec<f64>,
    pub mu: Vec<f64>,
    pub eta: f64,
    pub rho0: f64,
    pub k0: f64,
}

impl ChainSpec {
    pub fn dim(&self) -> usize {
        self.x_bar.len()
    }

    #[inline]
    pub fn x(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.positions[j * d..(j + 1) * d]
    }

    #[inline]
    pub fn v(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.velocities[j * d..(j + 1) * d]
    }

    /// Centre `j` as a phase point at time `j Δt`.
    pub fn centre(&self, j: usize) -> PhasePoint {
        PhasePoint { t: j as f64 * self.dt, x: self.x(j).to_vec(), v: self.v(j).to_vec() }
    }

    /// Largest `|v_j - v_{j-1}|`.
    pub fn max_increment(&self) -> f64 {
        (1..=self.k).map(|j| dist(self.v(j), self.v(j - 1))).fold(0.0, f64::max)
    }

    /// Largest `|x_j - x_{j-1} - Δt v_{j-1}|`.
    pub fn max_transport_defect(&self) -> f64 {
        (1..=self.k)
            .map(|j| {
                let (x1, x0, v0) = (self.x(j), self.x(j - 1), self.v(j - 1));
                (0..self.dim()).map(|c| (x1[c] - x0[c] - self.dt * v0[c]).powi(2)).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// `max(|x_k - X̄|, |v_k - V̄|, |x_0|, |v_0|)`.
    pub fn endpoint_error(&self) -> f64 {
        let k = self.k;
        dist(self.x(k), &self.x_bar).max(dist(self.v(k), &self.v_bar)).max(norm(self.x(0))).max(norm(self.v(0)))
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Quadratic-correction coefficient making `Σ_{j<k} v_j Δt = X̄`.
fn mu_for(k: usize, x_bar: &[f64], v_bar: &[f64]) -> Vec<f64> {
    if k < 2 {
        return vec![0.0; x_bar.len()];
    }
    let kf = k as f64;
    x_bar.iter().zip(v_bar).map(|(x, v)| 6.0 * kf * (x * kf - v * (kf - 1.0) / 2.0) / (kf * kf - 1.0)).collect()
}

/// `max_j |v_j - v_{j-1}|`; the increment is affine in `j` so the maximum is
/// attained at `j = 1` or `j = k`.
fn endpoint_increment(k: usize, v_bar: &[f64], mu: &[f64]) -> f64 {
    let kf = k as f64;
    let at = |j: f64| -> f64 {
        v_bar.iter().zip(mu).map(|(v, m)| (v / kf + m * (kf - 2.0 * j + 1.0) / (kf * kf)).powi(2)).sum::<f64>().sqrt()
    };
    at(1.0).max(at(kf))
}

fn assemble(k: usize, x_bar: &[f64], v_bar: &[f64], mu: Vec<f64>, p: &NearDiagonalParams, k0: f64) -> ChainSpec {
    let d = x_bar.len();
    let kf = k as f64;
    let dt = 1.0 / kf;
    let mut velocities = Vec::with_capacity((k + 1) * d);
    for j in 0..=k {
        let jf = j as f64;
        for c in 0..d {
            velocities.push((jf / kf) * v_bar[c] + mu[c] * jf * (kf - jf) / (kf * kf));
        }
    }
    // compensated transport recursion
    let mut positions = vec![0.0; (k + 1) * d];
    for c in 0..d {
        let mut comp = 0.0;
        for j in 1..=k {
            let prev = positions[(j - 1) * d + c];
            let add = dt * velocities[(j - 1) * d + c];
            let sum = prev + add;
            if prev.abs() >= add.abs() {
                comp += (prev - sum) + add;
            } else {
                comp += (add - sum) + prev;
            }
            positions[j * d + c] = sum;
        }
        positions[k * d + c] += comp;
    }
    ChainSpec {
        k,
        dt,
        x_bar: x_bar.to_vec(),
        v_bar: v_bar.to_vec(),
        positions,
        velocities,
        mu,
        eta: p.rho0 / 4.0,
        rho0: p.rho0,
        k0,
    }
}

/// Builds the chain with the smallest admissible `k ≥ ⌈k0(|V̄|² + |X̄|²)⌉`.
pub fn build_chain(x_bar: &[f64], v_bar: &[f64], p: &NearDiagonalParams, k0: f64) -> Result<ChainSpec> {
    if x_bar.len() != v_bar.len() || x_bar.is_empty() {
        return domain("X̄ and V̄ must share a dimension d >= 1");
    }
    if x_bar.iter().chain(v_bar).any(|c| !c.is_finite()) {
        return domain("chain target has non-finite components");
    }
    if !(k0 > 0.0) {
        return domain(format!("k0 must be positive, got {k0}"));
    }
    let size = norm(v_bar).powi(2) + norm(x_bar).powi(2);
    let start = (k0 * size).ceil().max(1.0);
    if start > MAX_STEPS as f64 {
        return Err(Error::Construction(format!("starting step count {start} exceeds the limit {MAX_STEPS}")));
    }
    let tol = 1e-10 * (1.0 + norm(x_bar));
    let mut last_increment = f64::INFINITY;
    for k in start as usize..=MAX_STEPS {
        let bound = 0.5 * p.rho0 / (k as f64).sqrt();
        if k == 1 {
            // a single step moves x by v_0 Δt = 0
            if norm(x_bar) != 0.0 {
                continue;
            }
            last_increment = norm(v_bar);
            if last_increment > bound {
                continue;
            }
        } else {
            let mu = mu_for(k, x_bar, v_bar);
            last_increment = endpoint_increment(k, v_bar, &mu);
            if last_increment > bound {
                continue;
            }
        }
        let chain = assemble(k, x_bar, v_bar, mu_for(k, x_bar, v_bar), p, k0);
        if chain.endpoint_error() > tol {
            return Err(Error::Construction(format!(
                "transport recursion misses the endpoint by {:.3e} at k = {k}",
                chain.endpoint_error()
            )));
        }
        if chain.max_increment() > bound {
            continue;
        }
        return Ok(chain);
    }
    Err(Error::Construction(format!(
        "no k <= {MAX_STEPS} satisfies the increment bound; last increment {last_increment:.3e} exceeds {:.3e}",
        0.5 * p.rho0 / (MAX_STEPS as f64).sqrt()
    )))
}

/// The `2^d` corners of the cube `[-1, 1]^d`, scaled onto the unit sphere.
fn sphere_corners(d: usize) -> Vec<Vec<f64>> {
    let s = 1.0 / (d as f64).sqrt();
    (0..1usize << d).map(|mask| (0..d).map(|c| if mask >> c & 1 == 1 { s } else { -s }).collect()).collect()
}

/// Appends a point uniformly distributed in the ball of radius `r`.
fn push_ball_point(rng: &mut ChaCha8Rng, d: usize, r: f64, out: &mut Vec<f64>) {
    let mut p = [0.0f64; 8];
    let p = if d <= 8 { &mut p[..d] } else { return push_ball_point_slow(rng, d, r, out) };
    loop {
        for c in p.iter_mut() {
            *c = rng.gen_range(-1.0..=1.0);
        }
        if norm(p) <= 1.0 {
            out.extend(p.iter().map(|c| c * r));
            return;
        }
    }
}

fn push_ball_point_slow(rng: &mut ChaCha8Rng, d: usize, r: f64, out: &mut Vec<f64>) {
    loop {
        let p: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        if norm(&p) <= 1.0 {
            out.extend(p.iter().map(|c| c * r));
            return;
        }
    }
}

/// Checks both near-diagonal inequalities for every consecutive pair of
/// perturbed centres `ξ_j ∈ B(x_j, η Δt^{3/2})`, `η_j ∈ B(v_j, η Δt^{1/2})`,
/// `0 < j < k`, with the chain endpoints held fixed. Every pair of corner
/// perturbations is checked, plus `random_per_box` interior samples per box.
pub fn perturbation_check(chain: &ChainSpec, eta: f64, random_per_box: usize, seed: u64) -> bool {
    let d = chain.dim();
    let k = chain.k;
    let dt = chain.dt;
    let (rx, rv) = (eta * dt.powf(1.5), eta * dt.sqrt());
    let vel_bound = chain.rho0 * dt.sqrt() * (1.0 + 1e-12);
    let pos_bound = chain.rho0 * dt.powf(1.5) * (1.0 + 1e-12);
    // offsets are stored flat as [dx_0..dx_d, dv_0..dv_d]
    let zero = vec![0.0; 2 * d];
    let mut corners: Vec<f64> = Vec::new();
    if eta > 0.0 {
        let unit = sphere_corners(d);
        for cx in &unit {
            for cv in &unit {
                corners.extend(cx.iter().map(|c| c * rx));
                corners.extend(cv.iter().map(|c| c * rv));
            }
        }
    } else {
        corners = zero.clone();
    }
    let pair_ok = |j: usize, a: &[f64], b: &[f64]| -> bool {
        let (x0, x1, v0, v1) = (chain.x(j - 1), chain.x(j), chain.v(j - 1), chain.v(j));
        let mut dv2 = 0.0;
        let mut dx2 = 0.0;
        for c in 0..d {
            let v_prev = v0[c] + a[d + c];
            let v_next = v1[c] + b[d + c];
            dv2 += (v_next - v_prev).powi(2);
            dx2 += (x1[c] + b[c] - x0[c] - a[c] - dt * v_prev).powi(2);
        }
        dv2.sqrt() <= vel_bound && dx2.sqrt() <= pos_bound
    };
    let all_pairs = |j: usize, prev: &[f64], next: &[f64]| -> bool {
        prev.chunks_exact(2 * d).all(|a| next.chunks_exact(2 * d).all(|b| pair_ok(j, a, b)))
    };
    // endpoints take the zero offset only
    let set = |j: usize| -> &[f64] {
        if j == 0 || j == k {
            &zero
        } else {
            &corners
        }
    };
    for j in 1..=k {
        if !all_pairs(j, set(j - 1), set(j)) {
            return false;
        }
    }
    if eta > 0.0 && random_per_box > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prev = zero.clone();
        let mut next = Vec::with_capacity(2 * d * random_per_box);
        for j in 1..=k {
            next.clear();
            if j == k {
                next.extend_from_slice(&zero);
            } else {
                for _ in 0..random_per_box {
                    push_ball_point(&mut rng, d, rx, &mut next);
                    push_ball_point(&mut rng, d, rv, &mut next);
                }
            }
            if !all_pairs(j, &prev, &next) {
                return false;
            }
            std::mem::swap(&mut prev, &mut next);
        }
    }
    true
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * std::f64::consts::PI / d as f64,
    }
}

/// `c_d`: volume of `B(0, 1) × B(0, 1) ⊂ R^d × R^d`.
pub fn box_factor(d: usize) -> f64 {
    unit_ball_volume(d).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainBound {
    pub log_value: f64,
    pub value: f64,
    /// `α = c0 c_d η^{2d}`.
    pub alpha: f64,
}

/// `(c0 Δt^{-2d})^k (c_d η^{2d})^{k-1} Δt^{2d(k-1)} = Δt^{-2d} α^k / (c_d η^{2d})`.
pub fn chain_lower_bound(k: usize, eta: f64, p: &NearDiagonalParams, d: usize) -> Result<ChainBound> {
    if k == 0 || d == 0 {
        return domain("chain length and dimension must be positive");
    }
    if !(eta > 0.0) {
        return domain(format!("tube radius must be positive, got {eta}"));
    }
    let dd = 2.0 * d as f64;
    let dt = 1.0 / k as f64;
    let tube = box_factor(d) * eta.powf(dd);
    let alpha = p.c0 * tube;
    let log_value = -dd * dt.ln() + k as f64 * alpha.ln() - tube.ln();
    Ok(ChainBound { log_value, value: log_value.exp(), alpha })
}

/// `min τ^{2d} Γ` over an `m × m` lattice of the near-diagonal region
/// `|V| ≤ ρ0 τ^{1/2}`, `|X| ≤ ρ0 τ^{3/2}` around the estimate's source.
pub fn near_diagonal_minimum(kernel: &KernelEstimate, rho0: f64, m: usize) -> Result<f64> {
    if m < 2 {
        return domain("need at least two samples per axis");
    }
    let (s, y, w) = (kernel.source.t, kernel.source.x[0], kernel.source.v[0]);
    let tau = kernel.t - s;
    let (hx, hv) = (rho0 * tau.powf(1.5), rho0 * tau.sqrt());
    let mut best = f64::INFINITY;
    for a in 0..m {
        for b in 0..m {
            let big_x = -hx + 2.0 * hx * a as f64 / (m - 1) as f64;
            let big_v = -hv + 2.0 * hv * b as f64 / (m - 1) as f64;
            let v = w + big_v;
            let x = y + tau * w + big_x;
            best = best.min(tau * tau * kernel.sample(x, v));
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainVerification {
    /// `min Δt^{2d} Γ` over each step's near-diagonal samples.
    pub step_minima: Vec<f64>,
    pub c0_hat: f64,
    pub c0_claimed: f64,
    pub passes: bool,
}

/// Checks `Δt^{2d} Γ(t_j, ·, t_{j-1}, x_{j-1}, v_{j-1}) ≥ c0` on every step's
/// near-diagonal set. `kernel_for_step(j)` must return the estimate started
/// at centre `j - 1` and evaluated after one step.
pub fn verify_chain_against_kernel(
    chain: &ChainSpec,
    p: &NearDiagonalParams,
    samples_per_axis: usize,
    mut kernel_for_step: impl FnMut(usize, &PhasePoint) -> Result<KernelEstimate>,
) -> Result<ChainVerification> {
    if chain.dim() != 1 {
        return domain("kernel verification is only available for d = 1");
    }
    let mut step_minima = Vec::with_capacity(chain.k);
    for j in 1..=chain.k {
        let source = chain.centre(j - 1);
        let kernel = kernel_for_step(j, &source)?;
        if (kernel.t - kernel.source.t - chain.dt).abs() > 1e-9 * chain.dt.max(1.0) {
            return domain(format!("kernel for step {j} does not span one chain step"));
        }
        step_minima.push(near_diagonal_minimum(&kernel, p.rho0, samples_per_axis)?);
    }
    let c0_hat = step_minima.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ChainVerification { step_minima, c0_hat, c0_claimed: p.c0, passes: c0_hat >= p.c0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> NearDiagonalParams {
        NearDiagonalParams::new(0.25, 0.1).unwrap()
    }

    #[test]
    fn near_diagonal_examples() {
        let o = PhasePoint::d1(0.0, 0.0, 0.0);
        assert!(near_diagonal_check(&o, &PhasePoint::d1(3.0, 0.0, 0.0), &p()).unwrap());
        assert!(near_diagonal_check(&o, &PhasePoint::d1(1.0, 0.2, 0.1), &p()).unwrap());
        assert!(!near_diagonal_check(&o, &PhasePoint::d1(1.0, 0.0, 0.3), &p()).unwrap());
        assert!(near_diagonal_check(&o, &o, &p()).is_err());
    }

    #[test]
    fn trivial_chain() {
        let c = build_chain(&[0.0], &[0.0], &p(), 16.0).unwrap();
        assert_eq!(c.k, 1);
        assert_eq!(c.endpoint_error(), 0.0);
        assert!(perturbation_check(&c, 0.0, 0, 1));
    }

    #[test]
    fn endpoint_increment_matches_scan() {
        for &k in &[2usize, 3, 17, 64, 1000] {
            let xb = [0.7];
            let vb = [-1.3];
            let mu = mu_for(k, &xb, &vb);
            let c = assemble(k, &xb, &vb, mu.clone(), &p(), 1.0);
            assert!((endpoint_increment(k, &vb, &mu) - c.max_increment()).abs() < 1e-12);
        }
    }

    #[test]
    fn lower_bound_examples() {
        assert!((chain_lower_bound(1, 0.05, &p(), 1).unwrap().value - 0.1).abs() < 1e-15);
        let b = chain_lower_bound(64, 0.05, &p(), 1).unwrap();
        let expect = 64.0 * (0.001f64).ln() + 2.0 * 64f64.ln() - 0.01f64.ln();
        assert!((b.log_value - expect).abs() < 1e-9);
        assert!((b.alpha - 0.001).abs() < 1e-15);
        assert_eq!(box_factor(1), 4.0);
        assert!((box_factor(2) - std::f64::consts::PI.powi(2)).abs() < 1e-12);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-12);
    }
}
