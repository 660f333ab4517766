//! The unit-effort direction maximizing first-order gain `⟨g, d⟩` over the
//! reachable subspace.
//!
//! Writing `⟨u, v⟩_H = ⟨u, H v⟩`, any `d ∈ Im(H)` satisfies
//! `⟨g, d⟩ = ⟨H†g, d⟩_H ≤ ‖H†g‖_H ‖d‖_H`, so the maximizer over unit effort is
//! `H†g / ‖H†g‖_H` and the maximal gain is `‖H†g‖_H = sqrt(Σ ⟨g,u_i⟩² / λ_i)`.
//! When `H g = 0` every admissible direction has zero gain.

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::operator::ConstraintOperator;
use crate::vector::{dot, norm, scale};

/// `‖H g‖ ≤ DEGENERACY_RATIO · ‖H‖_op · ‖g‖` selects the kernel branch.
pub const DEGENERACY_RATIO: f64 = 1e-12;

/// Tolerance used by [`first_order_gain`] to accept a direction as admissible.
pub const ADMISSIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionKind {
    Optimal,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionResult {
    pub kind: DirectionKind,
    /// Unit-effort direction; `None` on the degenerate branch.
    pub direction: Option<Vec<f64>>,
    /// `⟨g, direction⟩`, zero when degenerate.
    pub first_order_gain: f64,
    /// `‖H†g‖_H` (or the norm of the constrained analogue).
    pub gradient_norm_h: f64,
}

impl DirectionResult {
    pub fn degenerate() -> Self {
        DirectionResult {
            kind: DirectionKind::Degenerate,
            direction: None,
            first_order_gain: 0.0,
            gradient_norm_h: 0.0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.kind == DirectionKind::Optimal
    }
}

/// Builds the optimal result from an unnormalized direction `w ∈ Im(H)`.
///
/// `w_norm_h` is `‖w‖_H`; returns the degenerate result if it is zero.
pub(crate) fn from_unnormalized(g: &[f64], w: &[f64], w_norm_h: f64) -> DirectionResult {
    if !(w_norm_h > 0.0) || !w_norm_h.is_finite() {
        return DirectionResult::degenerate();
    }
    let direction = scale(1.0 / w_norm_h, w);
    let gain = dot(g, &direction);
    DirectionResult {
        kind: DirectionKind::Optimal,
        direction: Some(direction),
        first_order_gain: gain,
        gradient_norm_h: w_norm_h,
    }
}

/// Unit-effort maximizer of `⟨g, d⟩` over `d ∈ Im(H)`, or the degenerate
/// branch when `g` lies in `ker(H)` (including `g = 0`).
pub fn optimal_direction(h: &ConstraintOperator, g: &[f64]) -> Result<DirectionResult> {
    check_dim(h.dim(), g.len())?;
    let spectrum = h.spectrum();
    let lambdas = spectrum.positive_eigenvalues();
    let coeffs = spectrum.coefficients(g)?;

    // ‖H g‖ and ‖H†g‖_H² evaluated on the retained modes.
    let mut hg_sq = 0.0;
    let mut w_norm_h_sq = 0.0;
    for (l, c) in lambdas.iter().zip(&coeffs) {
        hg_sq += (l * c) * (l * c);
        w_norm_h_sq += c * c / l;
    }
    if hg_sq.sqrt() <= DEGENERACY_RATIO * spectrum.op_norm() * norm(g) || lambdas.is_empty() {
        return Ok(DirectionResult::degenerate());
    }
    let w = spectrum.apply_pseudoinverse(g)?;
    Ok(from_unnormalized(g, &w, w_norm_h_sq.sqrt()))
}

/// `⟨g, d⟩` for an admissible direction `d`.
pub fn first_order_gain(h: &ConstraintOperator, g: &[f64], d: &[f64]) -> Result<f64> {
    check_dim(h.dim(), g.len())?;
    let (image_residual, effort) = h.admissibility_residuals(d)?;
    if image_residual > ADMISSIBILITY_TOL || (effort - 1.0).abs() > ADMISSIBILITY_TOL {
        return Err(Error::InadmissibleDirection {
            image_residual,
            effort,
        });
    }
    Ok(dot(g, d))
}
