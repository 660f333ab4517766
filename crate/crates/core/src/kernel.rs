//! Rank-k rule kernels: spectral truncations `K_k = Σ_{i≤k} (1/λ_i) u_i u_iᵀ`
//! of the pseudoinverse, with residual reports and operator-norm errors.
//!
//! The residual of `K_k g` against `H†g` is the tail `Σ_{k<i≤r} (⟨g,u_i⟩/λ_i) u_i`
//! with squared norm `Σ_{k<i≤r} ⟨g,u_i⟩²/λ_i²`. The difference `H† − K_k`
//! has eigenvalues `1/λ_{k+1} ≤ … ≤ 1/λ_r` on the discarded modes, so its
//! operator norm is `1/λ_r`, the reciprocal of the *smallest* retained
//! eigenvalue, for every `k < r`. The leading discarded mode only contributes
//! `1/λ_{k+1}`, which is reported separately.

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::spectral::{SpectralDecomposition, SymmetricMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct RuleKernel<'a> {
    k: usize,
    kernel_matrix: SymmetricMatrix,
    op_error: f64,
    leading_mode_gain: f64,
    source: &'a SpectralDecomposition,
}

/// Per-mode breakdown of a truncation residual.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub residual_vector: Vec<f64>,
    pub residual_norm_sq: f64,
    pub per_mode: Vec<ModeContribution>,
}

/// Contribution `⟨g,u_i⟩² / λ_i²` of discarded mode `index` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeContribution {
    pub index: usize,
    pub contribution: f64,
}

/// Exact operator-norm error `‖H† − K_k‖_op` for a truncation at `k`.
pub fn truncation_error(d: &SpectralDecomposition, k: usize) -> f64 {
    let r = d.rank();
    if k >= r {
        0.0
    } else {
        1.0 / d.eigenvalues()[r - 1]
    }
}

/// `1/λ_{k+1}`: the gain of the largest discarded mode (0 when nothing is discarded).
pub fn leading_mode_gain(d: &SpectralDecomposition, k: usize) -> f64 {
    if k >= d.rank() {
        0.0
    } else {
        1.0 / d.eigenvalues()[k]
    }
}

/// Keeps the `k` leading modes of the pseudoinverse.
pub fn truncate(d: &SpectralDecomposition, k: usize) -> Result<RuleKernel<'_>> {
    if k > d.rank() {
        return Err(Error::RankOutOfRange { k, rank: d.rank() });
    }
    let kernel_matrix = SymmetricMatrix::from_outer_products(
        d.dim(),
        (0..k).map(|i| (1.0 / d.eigenvalues()[i], d.eigenvector(i))),
    )?;
    Ok(RuleKernel {
        k,
        kernel_matrix,
        op_error: truncation_error(d, k),
        leading_mode_gain: leading_mode_gain(d, k),
        source: d,
    })
}

impl<'a> RuleKernel<'a> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kernel_matrix(&self) -> &SymmetricMatrix {
        &self.kernel_matrix
    }

    /// `‖H† − K_k‖_op`.
    pub fn op_error(&self) -> f64 {
        self.op_error
    }

    /// `1/λ_{k+1}`, or 0 when `k` equals the rank.
    pub fn leading_mode_gain(&self) -> f64 {
        self.leading_mode_gain
    }

    pub fn source_spectrum(&self) -> &'a SpectralDecomposition {
        self.source
    }

    /// Returns `K_k g` and the residual `H†g − K_k g` mode by mode.
    pub fn apply_with_residual(&self, g: &[f64]) -> Result<(Vec<f64>, ResidualReport)> {
        let d = self.source;
        check_dim(d.dim(), g.len())?;
        let lambdas = d.eigenvalues();
        let kept = d.synthesize(g, 0..self.k, |i, c| c / lambdas[i]);
        let residual_vector = d.synthesize(g, self.k..d.rank(), |i, c| c / lambdas[i]);
        let per_mode: Vec<ModeContribution> = (self.k..d.rank())
            .map(|i| {
                let c = crate::vector::dot(g, d.eigenvector(i)) / lambdas[i];
                ModeContribution {
                    index: i,
                    contribution: c * c,
                }
            })
            .collect();
        let residual_norm_sq = per_mode.iter().fold(0.0, |acc, m| acc + m.contribution);
        Ok((
            kept,
            ResidualReport {
                residual_vector,
                residual_norm_sq,
                per_mode,
            },
        ))
    }
}

/// Smallest `k` whose exact operator-norm error is at most `eps`.
///
/// Because the error of every proper truncation equals `1/λ_r`, the answer is
/// either 0 (when `eps ≥ 1/λ_r`) or the full rank.
pub fn smallest_k_for_error(d: &SpectralDecomposition, eps: f64) -> usize {
    (0..=d.rank())
        .find(|&k| truncation_error(d, k) <= eps)
        .unwrap_or(d.rank())
}

/// One row of an error-versus-rank sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub op_error: f64,
    pub leading_mode_gain: f64,
    pub residual_norm_sq: f64,
}

/// Truncation diagnostics for every `k` in `0..=rank` against gradient `g`.
pub fn error_sweep(d: &SpectralDecomposition, g: &[f64]) -> Result<Vec<SweepRow>> {
    (0..=d.rank())
        .map(|k| {
            let kernel = truncate(d, k)?;
            let (_, report) = kernel.apply_with_residual(g)?;
            Ok(SweepRow {
                k,
                op_error: kernel.op_error(),
                leading_mode_gain: kernel.leading_mode_gain(),
                residual_norm_sq: report.residual_norm_sq,
            })
        })
        .collect()
}
