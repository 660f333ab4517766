//! Circular cone families with additive half-angle coupling.
//!
//! A family `{K_i}` of circular cones `K_i = {x : angle(x, c_i) ≤ α_i}` is
//! enlarged by `γ ≥ 0` to half-angles `α_i(γ) = min(α_i + γ, π/2)`. This rule
//! leaves the family unchanged at `γ = 0`, nests monotonically in `γ`, and keeps
//! every cone closed and convex. The coupled intersection is nonempty (beyond
//! the origin) iff
//!
//! ```text
//! φ_γ(x) = max_i ( angle(x, c_i) − α_i(γ) ) ≤ 0
//! ```
//!
//! for some unit `x`. Feasibility is monotone in `γ`, so the threshold
//! `γ* = inf{γ : feasible}` is located by bisection. The compatibility measure
//! `Φ(γ)` is the normalized spherical area of the intersection, estimated by
//! Monte Carlo.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::vector::{angle_between, axpy, dot, norm, normalized};

/// A point is feasible when its maximal angular violation is at most this (radians).
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Points this far inside every cone need no further refinement.
const CLEAR_MARGIN: f64 = 1e-6;

const DEFAULT_SEED: u64 = 0x5eed_c0de;

/// `{x : angle(x, axis) ≤ half_angle}` with `half_angle ∈ [0, π/2]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircularCone {
    axis: Vec<f64>,
    half_angle: f64,
}

impl CircularCone {
    /// Normalizes `axis`; rejects the zero axis and angles outside `[0, π/2]`.
    pub fn new(axis: &[f64], half_angle: f64) -> Result<Self> {
        let axis = normalized(axis).ok_or(Error::ZeroVector)?;
        if !(0.0..=FRAC_PI_2).contains(&half_angle) {
            return Err(Error::InvalidInput(format!(
                "half-angle {half_angle} rad is outside [0, π/2]"
            )));
        }
        Ok(CircularCone { axis, half_angle })
    }

    pub fn from_degrees(axis: &[f64], half_angle_deg: f64) -> Result<Self> {
        Self::new(axis, half_angle_deg.to_radians())
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    pub fn half_angle(&self) -> f64 {
        self.half_angle
    }

    pub fn dim(&self) -> usize {
        self.axis.len()
    }

    /// Half-angle after coupling at level `gamma`.
    pub fn enlarged_half_angle(&self, gamma: f64) -> f64 {
        (self.half_angle + gamma).min(FRAC_PI_2)
    }

    pub fn enlarged(&self, gamma: f64) -> CircularCone {
        CircularCone {
            axis: self.axis.clone(),
            half_angle: self.enlarged_half_angle(gamma),
        }
    }

    /// Membership of a nonzero vector (the origin is excluded).
    pub fn contains(&self, x: &[f64]) -> bool {
        norm(x) > 0.0 && angle_between(x, &self.axis) <= self.half_angle
    }
}

/// Cone file entry: `{"axis": [...], "half_angle_deg": x}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConeSpec {
    pub axis: Vec<f64>,
    pub half_angle_deg: f64,
}

impl TryFrom<&ConeSpec> for CircularCone {
    type Error = Error;

    fn try_from(spec: &ConeSpec) -> Result<Self> {
        CircularCone::from_degrees(&spec.axis, spec.half_angle_deg)
    }
}

/// A nonempty list of cones of a common dimension, coupled by half-angle
/// enlargement.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingFamily {
    cones: Vec<CircularCone>,
}

impl CouplingFamily {
    pub fn new(cones: Vec<CircularCone>) -> Result<Self> {
        let first = cones
            .first()
            .ok_or_else(|| Error::InvalidInput("a coupling family needs at least one cone".into()))?;
        let dim = first.dim();
        for c in &cones {
            check_dim(dim, c.dim())?;
        }
        Ok(CouplingFamily { cones })
    }

    pub fn from_specs(specs: &[ConeSpec]) -> Result<Self> {
        Self::new(specs.iter().map(CircularCone::try_from).collect::<Result<_>>()?)
    }

    pub fn cones(&self) -> &[CircularCone] {
        &self.cones
    }

    pub fn dim(&self) -> usize {
        self.cones[0].dim()
    }

    pub fn enlarged(&self, gamma: f64) -> Vec<CircularCone> {
        self.cones.iter().map(|c| c.enlarged(gamma)).collect()
    }

    /// `φ_γ(x) = max_i (angle(x, c_i) − α_i(γ))` for nonzero `x`.
    pub fn violation(&self, x: &[f64], gamma: f64) -> f64 {
        self.cones
            .iter()
            .map(|c| angle_between(x, &c.axis) - c.enlarged_half_angle(gamma))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// True iff nonzero `x` lies in every enlarged cone.
    pub fn contains(&self, x: &[f64], gamma: f64) -> bool {
        norm(x) > 0.0
            && self
                .cones
                .iter()
                .all(|c| angle_between(x, &c.axis) <= c.enlarged_half_angle(gamma))
    }
}

/// Result of minimizing `φ_γ` over the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityOutcome {
    pub feasible: bool,
    /// The minimizer, present iff feasible.
    pub witness: Option<Vec<f64>>,
    /// Smallest `φ_γ` value found (radians); positive means infeasible.
    pub residual: f64,
}

/// Minimizer of the maximal angular violation over the unit sphere.
///
/// A global phase runs projected subgradient descent (`step0/√t`) from
/// seeded restarts, including the cone axes themselves. The best restarts are
/// then polished by prox-linear steps: the pieces `angle(x, c_i) − α_i` are
/// linearized on the tangent space, the small max-of-affine model plus a
/// proximal term is solved through its dual over the simplex, and the
/// proximal weight adapts to the ratio of actual to predicted decrease.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilitySolver {
    pub restarts: usize,
    pub iterations: usize,
    pub step0: f64,
    pub polish_starts: usize,
    pub polish_iterations: usize,
    pub seed: u64,
}

impl Default for FeasibilitySolver {
    fn default() -> Self {
        FeasibilitySolver {
            restarts: 64,
            iterations: 500,
            step0: 0.1,
            polish_starts: 3,
            polish_iterations: 400,
            seed: DEFAULT_SEED,
        }
    }
}

/// Decides whether the coupled intersection at `gamma` contains a unit vector.
pub fn is_feasible(family: &CouplingFamily, gamma: f64, restarts: usize) -> Result<FeasibilityOutcome> {
    FeasibilitySolver {
        restarts,
        ..FeasibilitySolver::default()
    }
    .solve(family, gamma)
}

struct Piece {
    value: f64,
    grad: Vec<f64>,
}

impl FeasibilitySolver {
    pub fn solve(&self, family: &CouplingFamily, gamma: f64) -> Result<FeasibilityOutcome> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidInput(format!("gamma must be finite and ≥ 0, got {gamma}")));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidInput("at least one restart is required".into()));
        }
        let betas: Vec<f64> = family.cones.iter().map(|c| c.enlarged_half_angle(gamma)).collect();
        let axes: Vec<&[f64]> = family.cones.iter().map(|c| c.axis.as_slice()).collect();
        let problem = Problem { axes, betas };

        let mut candidates: Vec<(f64, Vec<f64>)> = (0..self.restarts)
            .map(|j| {
                let x0 = self.start_point(&problem, j);
                problem.subgradient(x0, self.iterations, self.step0)
            })
            .collect();
        // Ties broken by restart index through the stable sort.
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut best = candidates[0].clone();
        for (value, x) in candidates.into_iter().take(self.polish_starts.max(1)) {
            let polished = problem.polish(x, value, self.polish_iterations);
            if polished.0 < best.0 {
                best = polished;
            }
        }

        let (residual, x) = best;
        let feasible = residual <= FEASIBILITY_TOL;
        Ok(FeasibilityOutcome {
            feasible,
            witness: feasible.then_some(x),
            residual,
        })
    }

    fn start_point(&self, problem: &Problem<'_>, j: usize) -> Vec<f64> {
        let m = problem.axes.len();
        if j < m {
            return problem.axes[j].to_vec();
        }
        if j == m {
            let mut mean = vec![0.0; problem.dim()];
            for a in &problem.axes {
                axpy(1.0, a, &mut mean);
            }
            if let Some(x) = normalized(&mean) {
                return x;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(j as u64);
        uniform_on_sphere(&mut rng, problem.dim())
    }
}

struct Problem<'a> {
    axes: Vec<&'a [f64]>,
    betas: Vec<f64>,
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        self.axes[0].len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.axes
            .iter()
            .zip(&self.betas)
            .map(|(c, b)| angle_between(x, c) - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Values and Riemannian gradients of every piece at unit `x`.
    fn pieces(&self, x: &[f64]) -> Vec<Piece> {
        self.axes
            .iter()
            .zip(&self.betas)
            .map(|(c, b)| {
                let value = angle_between(x, c) - b;
                // The angle grows fastest away from the axis: -(c - ⟨x,c⟩x)/‖·‖.
                let mut t = c.to_vec();
                axpy(-dot(x, c), x, &mut t);
                let tn = norm(&t);
                let grad = if tn > 1e-15 {
                    t.iter().map(|v| -v / tn).collect()
                } else {
                    vec![0.0; x.len()]
                };
                Piece { value, grad }
            })
            .collect()
    }

    fn subgradient(&self, mut x: Vec<f64>, iterations: usize, step0: f64) -> (f64, Vec<f64>) {
        let mut best = (self.value(&x), x.clone());
        for t in 0..iterations {
            if best.0 < -CLEAR_MARGIN {
                break;
            }
            let pieces = self.pieces(&x);
            let active = pieces
                .iter()
                .max_by(|a, b| a.value.total_cmp(&b.value))
                .expect("family is nonempty");
            if norm(&active.grad) == 0.0 {
                break;
            }
            let step: Vec<f64> = active.grad.iter().map(|g| -step0 / ((t + 1) as f64).sqrt() * g).collect();
            x = exp_map(&x, &step);
            let v = self.value(&x);
            if v < best.0 {
                best = (v, x.clone());
            }
        }
        best
    }

    fn polish(&self, mut x: Vec<f64>, mut value: f64, iterations: usize) -> (f64, Vec<f64>) {
        let mut rho = 0.1;
        for _ in 0..iterations {
            let pieces = self.pieces(&x);
            let mu = simplex_dual(&pieces, rho);
            let mut p = vec![0.0; x.len()];
            for (w, piece) in mu.iter().zip(&pieces) {
                axpy(-rho * w, &piece.grad, &mut p);
            }
            let model = pieces
                .iter()
                .map(|pc| pc.value + dot(&pc.grad, &p))
                .fold(f64::NEG_INFINITY, f64::max);
            let predicted = value - model;
            // Deep inside the intersection the verdict cannot change.
            if predicted <= 1e-12 || value < -CLEAR_MARGIN {
                break;
            }
            let candidate = exp_map(&x, &p);
            let cand_value = self.value(&candidate);
            let ratio = (value - cand_value) / predicted;
            if ratio >= 0.1 {
                x = candidate;
                value = cand_value;
                if ratio >= 0.75 {
                    rho = (rho * 2.0).min(10.0);
                }
            } else {
                rho *= 0.25;
                if rho < 1e-16 {
                    break;
                }
            }
        }
        (value, x)
    }
}

/// Maximizes `Σ μ_i a_i − (ρ/2)‖Σ μ_i g_i‖²` over the probability simplex by
/// accelerated projected gradient.
fn simplex_dual(pieces: &[Piece], rho: f64) -> Vec<f64> {
    let m = pieces.len();
    if m == 1 {
        return vec![1.0];
    }
    let gram: Vec<f64> = (0..m * m)
        .map(|k| dot(&pieces[k / m].grad, &pieces[k % m].grad))
        .collect();
    let lipschitz = rho * (0..m).map(|i| gram[i * m + i]).sum::<f64>().max(1e-300);
    // Start on the most violated piece.
    let top = (0..m)
        .max_by(|&i, &j| pieces[i].value.total_cmp(&pieces[j].value))
        .unwrap_or(0);
    let mut mu = vec![0.0; m];
    mu[top] = 1.0;
    let mut y = mu.clone();
    let mut t = 1.0_f64;
    for _ in 0..300 {
        // gradient of the minimization form (ρ/2) μᵀGμ − aᵀμ
        let grad: Vec<f64> = (0..m)
            .map(|i| rho * (0..m).map(|j| gram[i * m + j] * y[j]).sum::<f64>() - pieces[i].value)
            .collect();
        let stepped: Vec<f64> = y.iter().zip(&grad).map(|(v, g)| v - g / lipschitz).collect();
        let next = project_simplex(&stepped);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let moved = next.iter().zip(&mu).map(|(n, o)| (n - o).abs()).fold(0.0, f64::max);
        y = next.iter().zip(&mu).map(|(n, o)| n + beta * (n - o)).collect();
        mu = next;
        t = t_next;
        if moved <= 1e-15 {
            break;
        }
    }
    mu
}

/// Euclidean projection onto `{μ ≥ 0, Σμ = 1}`.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, s) in sorted.iter().enumerate() {
        cumulative += s;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if s - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Moves unit `x` along the great circle with tangent `p`.
fn exp_map(x: &[f64], p: &[f64]) -> Vec<f64> {
    let len = norm(p);
    if len == 0.0 {
        return x.to_vec();
    }
    let (s, c) = len.sin_cos();
    let y: Vec<f64> = x.iter().zip(p).map(|(xi, pi)| c * xi + s * pi / len).collect();
    normalized(&y).unwrap_or_else(|| x.to_vec())
}

pub(crate) fn uniform_on_sphere<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(u) = normalized(&v) {
            return u;
        }
    }
}

/// Bisection outcome for the coupling threshold `γ*`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdResult {
    /// Midpoint of the final bracket.
    pub gamma_star: f64,
    /// `(largest γ certified infeasible, smallest γ found feasible)`; both 0
    /// when the uncoupled family is already feasible.
    pub bracket: (f64, f64),
    /// A unit vector in every cone enlarged to the upper bracket end.
    pub witness: Vec<f64>,
    /// Final bracket width.
    pub tolerance: f64,
}

/// Bisects `[0, π/2]` for the smallest coupling level at which the cones
/// share a direction.
pub fn find_gamma_star(family: &CouplingFamily, tol: f64) -> Result<ThresholdResult> {
    FeasibilitySolver::default().find_gamma_star(family, tol)
}

impl FeasibilitySolver {
    pub fn find_gamma_star(&self, family: &CouplingFamily, tol: f64) -> Result<ThresholdResult> {
        if !(tol > 0.0) {
            return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
        }
        let at_zero = self.solve(family, 0.0)?;
        if let Some(witness) = at_zero.witness {
            return Ok(ThresholdResult {
                gamma_star: 0.0,
                bracket: (0.0, 0.0),
                witness,
                tolerance: 0.0,
            });
        }
        let at_max = self.solve(family, FRAC_PI_2)?;
        let mut witness = match at_max.witness {
            Some(w) => w,
            None => {
                return Err(Error::InfeasibleAtMax {
                    residual: at_max.residual,
                })
            }
        };
        let (mut lo, mut hi) = (0.0, FRAC_PI_2);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            match self.solve(family, mid)?.witness {
                Some(w) => {
                    hi = mid;
                    witness = w;
                }
                None => lo = mid,
            }
        }
        Ok(ThresholdResult {
            gamma_star: 0.5 * (lo + hi),
            bracket: (lo, hi),
            witness,
            tolerance: hi - lo,
        })
    }
}

/// Monte-Carlo estimate of the normalized spherical measure of the coupled
/// intersection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiPoint {
    pub gamma: f64,
    pub estimate: f64,
    pub std_error: f64,
}

pub fn phi(family: &CouplingFamily, gamma: f64, samples: usize, seed: u64) -> Result<PhiPoint> {
    Ok(phi_curve(family, &[gamma], samples, seed)?[0])
}

/// Estimates `Φ` along an ascending grid from one shared sample set, so the
/// curve is exactly nondecreasing.
pub fn phi_curve(family: &CouplingFamily, gammas: &[f64], samples: usize, seed: u64) -> Result<Vec<PhiPoint>> {
    if gammas.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if samples == 0 {
        return Err(Error::InvalidInput("at least one sample is required".into()));
    }
    if gammas.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
        return Err(Error::InvalidInput("gamma values must be finite and ≥ 0".into()));
    }
    if gammas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("gamma grid must be strictly ascending".into()));
    }
    let enlarged: Vec<Vec<f64>> = gammas
        .iter()
        .map(|&g| family.cones.iter().map(|c| c.enlarged_half_angle(g)).collect())
        .collect();
    let mut hits = vec![0usize; gammas.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut angles = vec![0.0; family.cones.len()];
    for _ in 0..samples {
        let x = uniform_on_sphere(&mut rng, family.dim());
        for (a, c) in angles.iter_mut().zip(&family.cones) {
            *a = angle_between(&x, &c.axis);
        }
        for (h, betas) in hits.iter_mut().zip(&enlarged) {
            if angles.iter().zip(betas).all(|(a, b)| a <= b) {
                *h += 1;
            }
        }
    }
    let n = samples as f64;
    Ok(gammas
        .iter()
        .zip(hits)
        .map(|(&gamma, h)| {
            let p = h as f64 / n;
            PhiPoint {
                gamma,
                estimate: p,
                std_error: (p * (1.0 - p) / n).sqrt(),
            }
        })
        .collect())
}

/// `steps + 1` evenly spaced values from 0 to `gamma_max`.
pub fn uniform_grid(gamma_max: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 || !(gamma_max > 0.0) {
        return Err(Error::InvalidInput("grid needs steps ≥ 1 and gamma_max > 0".into()));
    }
    Ok((0..=steps).map(|i| gamma_max * i as f64 / steps as f64).collect())
}
