//! Dense symmetric eigendecomposition (cyclic Jacobi), Moore–Penrose
//! pseudoinversion and projection onto the image of a PSD matrix.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::vector::{dot, norm};

/// Maximum number of cyclic Jacobi sweeps before giving up.
pub const MAX_SWEEPS: usize = 100;

/// Relative rank tolerance used by [`decompose_auto`]: `1e-10 · λ_max`.
pub const RELATIVE_RANK_TOLERANCE: f64 = 1e-10;

/// Eigenvalues in `[-NEGATIVE_CLAMP · max(1, |λ|_max), 0)` are treated as
/// rounding noise and clamped to zero; anything below is rejected.
pub const NEGATIVE_CLAMP: f64 = 1e-10;

/// A dense real symmetric matrix stored row-major.
///
/// Construction always symmetrizes the input as `(A + Aᵀ) / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixFile", into = "MatrixFile")]
pub struct SymmetricMatrix {
    dim: usize,
    data: Vec<f64>,
}

/// On-disk JSON form: `{"dim": n, "entries": [[...], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixFile {
    pub dim: usize,
    pub entries: Vec<Vec<f64>>,
}

impl TryFrom<MatrixFile> for SymmetricMatrix {
    type Error = Error;

    fn try_from(file: MatrixFile) -> Result<Self> {
        check_dim(file.dim, file.entries.len())?;
        Self::from_rows(&file.entries)
    }
}

impl From<SymmetricMatrix> for MatrixFile {
    fn from(m: SymmetricMatrix) -> Self {
        MatrixFile {
            dim: m.dim,
            entries: m.to_rows(),
        }
    }
}

impl SymmetricMatrix {
    /// Builds a matrix from row-major entries, symmetrizing them.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("matrix dimension must be at least 1".into()));
        }
        check_dim(dim * dim, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        let mut m = SymmetricMatrix { dim, data };
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = 0.5 * (m.data[i * dim + j] + m.data[j * dim + i]);
                m.data[i * dim + j] = avg;
                m.data[j * dim + i] = avg;
            }
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            check_dim(dim, row.len())?;
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(dim, vec![0.0; dim * dim])
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let dim = diag.len();
        let mut data = vec![0.0; dim * dim];
        for (i, d) in diag.iter().enumerate() {
            data[i * dim + i] = *d;
        }
        Self::new(dim, data)
    }

    /// `Σ_i w_i v_i v_iᵀ` over the given weighted vectors.
    pub fn from_outer_products<'a, I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, &'a [f64])>,
    {
        let mut data = vec![0.0; dim * dim];
        for (w, v) in terms {
            check_dim(dim, v.len())?;
            for i in 0..dim {
                let wi = w * v[i];
                for j in 0..dim {
                    data[i * dim + j] += wi * v[j];
                }
            }
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, v.len())?;
        Ok((0..self.dim).map(|i| dot(self.row(i), v)).collect())
    }

    /// `vᵀ A v`
    pub fn quadratic_form(&self, v: &[f64]) -> Result<f64> {
        Ok(dot(v, &self.mul_vec(v)?))
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn sub(&self, other: &SymmetricMatrix) -> Result<SymmetricMatrix> {
        check_dim(self.dim, other.dim)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(SymmetricMatrix { dim: self.dim, data })
    }
}

/// Eigenpairs of a PSD matrix sorted by descending eigenvalue.
///
/// All `dim` eigenpairs are kept; the first `rank` span the image and the
/// remainder span the kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
    rank: usize,
    rank_tolerance: f64,
}

/// Raw output of the Jacobi solver: unsorted eigenvalues and the columns of
/// the accumulated rotation.
pub(crate) struct JacobiEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic (row-ordered) Jacobi eigenvalue iteration for a symmetric matrix.
pub(crate) fn jacobi_eigen(a: &SymmetricMatrix) -> Result<JacobiEigen> {
    let n = a.dim();
    let mut m = a.as_slice().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = a.frobenius_norm();
    let target = 1e-15 * scale;

    let off_norm = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * m[i * n + j] * m[i * n + j];
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let off = off_norm(&m);
        if off <= target || off == 0.0 {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::NotConverged {
                sweeps,
                off_diagonal: off,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // A ← A J
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                // A ← Jᵀ A
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                // V ← V J
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let values = (0..n).map(|i| m[i * n + i]).collect();
    let vectors = (0..n)
        .map(|col| (0..n).map(|row| v[row * n + col]).collect())
        .collect();
    Ok(JacobiEigen { values, vectors })
}

/// Decomposes a PSD matrix, counting eigenvalues strictly above
/// `rank_tolerance` towards the rank.
///
/// Eigenvalues that are negative only by rounding are clamped to zero; a
/// genuinely negative eigenvalue yields [`Error::NotPsd`].
pub fn decompose(a: &SymmetricMatrix, rank_tolerance: f64) -> Result<SpectralDecomposition> {
    if !(rank_tolerance >= 0.0) || !rank_tolerance.is_finite() {
        return Err(Error::InvalidInput(format!(
            "rank tolerance must be a nonnegative finite number, got {rank_tolerance}"
        )));
    }
    build(a, |_| rank_tolerance)
}

/// [`decompose`] with the default relative tolerance `1e-10 · λ_max`.
pub fn decompose_auto(a: &SymmetricMatrix) -> Result<SpectralDecomposition> {
    build(a, |lambda_max| RELATIVE_RANK_TOLERANCE * lambda_max)
}

fn build<F>(a: &SymmetricMatrix, tolerance: F) -> Result<SpectralDecomposition>
where
    F: FnOnce(f64) -> f64,
{
    let raw = jacobi_eigen(a)?;
    let mut order: Vec<usize> = (0..a.dim()).collect();
    // Stable sort keeps ties in solver order, so the output is reproducible.
    order.sort_by(|&i, &j| raw.values[j].total_cmp(&raw.values[i]));

    let magnitude = raw.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let negative_floor = -NEGATIVE_CLAMP * magnitude.max(1.0);

    let mut eigenvalues = Vec::with_capacity(a.dim());
    let mut eigenvectors = Vec::with_capacity(a.dim());
    for idx in order {
        let lambda = raw.values[idx];
        if lambda < negative_floor {
            return Err(Error::NotPsd { eigenvalue: lambda });
        }
        eigenvalues.push(lambda.max(0.0));
        let mut u = raw.vectors[idx].clone();
        fix_sign(&mut u);
        eigenvectors.push(u);
    }
    let rank_tolerance = tolerance(eigenvalues[0]);
    let rank = eigenvalues.iter().filter(|&&l| l > rank_tolerance).count();
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
        rank,
        rank_tolerance,
    })
}

/// Makes the first non-negligible component positive.
fn fix_sign(u: &mut [f64]) {
    let threshold = 1e-12 * norm(u);
    if let Some(first) = u.iter().find(|x| x.abs() > threshold) {
        if *first < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// All eigenvalues, descending (clamped to be nonnegative).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// The retained positive eigenvalues `λ_1 ≥ … ≥ λ_rank`.
    pub fn positive_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues[..self.rank]
    }

    pub fn eigenvectors(&self) -> &[Vec<f64>] {
        &self.eigenvectors
    }

    pub fn eigenvector(&self, i: usize) -> &[f64] {
        &self.eigenvectors[i]
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rank_tolerance(&self) -> f64 {
        self.rank_tolerance
    }

    pub fn kernel_dim(&self) -> usize {
        self.dim() - self.rank
    }

    /// Largest eigenvalue, i.e. the operator norm of the PSD matrix.
    pub fn op_norm(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0).max(0.0)
    }

    /// Coordinates `⟨v, u_i⟩` of `v` in the eigenbasis.
    pub fn coefficients(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len())?;
        Ok(self.eigenvectors.iter().map(|u| dot(u, v)).collect())
    }

    /// `Σ_{i∈modes} w(i, ⟨v,u_i⟩) u_i`
    pub(crate) fn synthesize<F>(&self, v: &[f64], modes: std::ops::Range<usize>, weight: F) -> Vec<f64>
    where
        F: Fn(usize, f64) -> f64,
    {
        let mut out = vec![0.0; self.dim()];
        for i in modes {
            let u = &self.eigenvectors[i];
            let w = weight(i, dot(u, v));
            if w != 0.0 {
                crate::vector::axpy(w, u, &mut out);
            }
        }
        out
    }

    /// `Σ_{i≤rank} λ_i u_i u_iᵀ`
    pub fn reconstruct(&self) -> SymmetricMatrix {
        SymmetricMatrix::from_outer_products(
            self.dim(),
            (0..self.rank).map(|i| (self.eigenvalues[i], self.eigenvectors[i].as_slice())),
        )
        .expect("eigenvectors have the ambient dimension")
    }

    /// Moore–Penrose pseudoinverse `Σ_{i≤rank} (1/λ_i) u_i u_iᵀ`.
    pub fn pseudoinverse(&self) -> SymmetricMatrix {
        SymmetricMatrix::from_outer_products(
            self.dim(),
            (0..self.rank).map(|i| (1.0 / self.eigenvalues[i], self.eigenvectors[i].as_slice())),
        )
        .expect("eigenvectors have the ambient dimension")
    }

    /// `A† v` evaluated mode by mode, without forming the matrix.
    pub fn apply_pseudoinverse(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len())?;
        Ok(self.synthesize(v, 0..self.rank, |i, c| c / self.eigenvalues[i]))
    }

    /// `A v` restricted to the retained modes.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len())?;
        Ok(self.synthesize(v, 0..self.rank, |i, c| c * self.eigenvalues[i]))
    }

    /// Orthogonal projection onto the image: `Σ_{i≤rank} ⟨v,u_i⟩ u_i`.
    pub fn project_onto_image(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len())?;
        Ok(self.synthesize(v, 0..self.rank, |_, c| c))
    }

    /// Orthogonal projection onto the kernel (the complement of the image).
    pub fn project_onto_kernel(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len())?;
        Ok(self.synthesize(v, self.rank..self.dim(), |_, c| c))
    }
}
