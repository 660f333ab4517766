//! The constraint operator `H` at a point: a PSD matrix whose image is the
//! reachable subspace and whose quadratic form is the effort of a direction.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::spectral::{decompose_auto, SpectralDecomposition, SymmetricMatrix};
use crate::vector::{dot, norm, scale, sub};

/// Directions whose effort falls below this are treated as lying in the kernel.
pub const EFFORT_FLOOR: f64 = 1e-14;

/// A symmetric PSD operator together with its cached spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintOperator {
    matrix: SymmetricMatrix,
    spectrum: SpectralDecomposition,
}

/// Nonnegative value of the effort functional `⟨d, H d⟩`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EffortValue(f64);

impl EffortValue {
    /// Wraps a raw quadratic-form value, clamping rounding negatives to zero.
    pub fn new(raw: f64) -> Self {
        EffortValue(raw.max(0.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl ConstraintOperator {
    /// Decomposes `matrix` with the default relative rank tolerance.
    pub fn new(matrix: SymmetricMatrix) -> Result<Self> {
        let spectrum = decompose_auto(&matrix)?;
        Ok(ConstraintOperator { matrix, spectrum })
    }

    pub fn with_rank_tolerance(matrix: SymmetricMatrix, rank_tolerance: f64) -> Result<Self> {
        let spectrum = crate::spectral::decompose(&matrix, rank_tolerance)?;
        Ok(ConstraintOperator { matrix, spectrum })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(SymmetricMatrix::identity(dim)?)
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(SymmetricMatrix::diagonal(diag)?)
    }

    pub fn matrix(&self) -> &SymmetricMatrix {
        &self.matrix
    }

    pub fn spectrum(&self) -> &SpectralDecomposition {
        &self.spectrum
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Dimension of the reachable subspace `Im(H)`.
    pub fn reachable_dim(&self) -> usize {
        self.spectrum.rank()
    }

    pub fn effort(&self, d: &[f64]) -> Result<EffortValue> {
        Ok(EffortValue::new(self.matrix.quadratic_form(d)?))
    }

    /// The same effort evaluated in the eigenbasis: `Σ λ_i ⟨d,u_i⟩²`.
    pub fn effort_spectral(&self, d: &[f64]) -> Result<EffortValue> {
        let coeffs = self.spectrum.coefficients(d)?;
        let value = self
            .spectrum
            .positive_eigenvalues()
            .iter()
            .zip(&coeffs)
            .map(|(l, c)| l * c * c)
            .sum();
        Ok(EffortValue::new(value))
    }

    /// True iff `d` lies in `Im(H)` and has unit effort, both within `tol`.
    pub fn is_admissible(&self, d: &[f64], tol: f64) -> Result<bool> {
        let (image_residual, effort) = self.admissibility_residuals(d)?;
        Ok(image_residual <= tol && (effort - 1.0).abs() <= tol)
    }

    /// Relative distance of `d` from `Im(H)` and its effort.
    pub(crate) fn admissibility_residuals(&self, d: &[f64]) -> Result<(f64, f64)> {
        check_dim(self.dim(), d.len())?;
        let n = norm(d);
        if n == 0.0 {
            return Err(Error::ZeroVector);
        }
        let projected = self.spectrum.project_onto_image(d)?;
        let image_residual = norm(&sub(d, &projected)) / n;
        Ok((image_residual, self.effort(d)?.value()))
    }

    /// Rescales `d` to unit effort.
    pub fn normalize_effort(&self, d: &[f64]) -> Result<Vec<f64>> {
        let effort = self.effort(d)?.value();
        if effort <= EFFORT_FLOOR {
            return Err(Error::DegenerateDirection { effort });
        }
        Ok(scale(1.0 / effort.sqrt(), d))
    }

    /// Splits `v` into its image and kernel components.
    pub fn split(&self, v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let image = self.spectrum.project_onto_image(v)?;
        let kernel = sub(v, &image);
        Ok((image, kernel))
    }

    /// Semi-inner product `⟨u, H v⟩`.
    pub fn h_inner(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        Ok(dot(u, &self.matrix.mul_vec(v)?))
    }
}

/// A map from points to constraint operators.
///
/// Implementations must be pure: the same point always yields the same operator.
pub trait OperatorField {
    fn operator_at(&self, theta: &[f64]) -> Result<Cow<'_, ConstraintOperator>>;
}

impl<F> OperatorField for F
where
    F: Fn(&[f64]) -> Result<ConstraintOperator>,
{
    fn operator_at(&self, theta: &[f64]) -> Result<Cow<'_, ConstraintOperator>> {
        self(theta).map(Cow::Owned)
    }
}

/// An operator field that ignores the point.
#[derive(Debug, Clone)]
pub struct ConstantField(pub ConstraintOperator);

impl OperatorField for ConstantField {
    fn operator_at(&self, theta: &[f64]) -> Result<Cow<'_, ConstraintOperator>> {
        check_dim(self.0.dim(), theta.len())?;
        Ok(Cow::Borrowed(&self.0))
    }
}

/// Built-in operator fields as they appear in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorFieldSpec {
    /// A fixed matrix.
    Constant { entries: Vec<Vec<f64>> },
    /// `diag(a, a·ρ, a·ρ², …)`
    DiagDecay { dim: usize, scale: f64, ratio: f64 },
    /// `scale · diag(mask)`: only the flagged coordinates are reachable.
    Mask {
        mask: Vec<bool>,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl OperatorFieldSpec {
    pub fn build(&self) -> Result<ConstantField> {
        let op = match self {
            OperatorFieldSpec::Constant { entries } => {
                ConstraintOperator::new(SymmetricMatrix::from_rows(entries)?)?
            }
            OperatorFieldSpec::DiagDecay { dim, scale, ratio } => {
                if *scale < 0.0 || *ratio < 0.0 {
                    return Err(Error::InvalidInput(
                        "diag_decay needs nonnegative scale and ratio".into(),
                    ));
                }
                let diag: Vec<f64> = (0..*dim).map(|i| scale * ratio.powi(i as i32)).collect();
                ConstraintOperator::diagonal(&diag)?
            }
            OperatorFieldSpec::Mask { mask, scale } => {
                if *scale <= 0.0 {
                    return Err(Error::InvalidInput("mask scale must be positive".into()));
                }
                let diag: Vec<f64> = mask.iter().map(|&m| if m { *scale } else { 0.0 }).collect();
                ConstraintOperator::diagonal(&diag)?
            }
        };
        Ok(ConstantField(op))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(d: &[f64]) -> ConstraintOperator {
        ConstraintOperator::diagonal(d).unwrap()
    }

    #[test]
    fn effort_examples() {
        let id = ConstraintOperator::identity(2).unwrap();
        assert_eq!(id.effort(&[3.0, 4.0]).unwrap().value(), 25.0);
        assert_eq!(diag(&[4.0, 0.0]).effort(&[0.0, 1.0]).unwrap().value(), 0.0);
        assert_eq!(diag(&[4.0, 2.0]).effort(&[1.0, 1.0]).unwrap().value(), 6.0);
        assert!(matches!(
            id.effort(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn effort_value_clamps_rounding() {
        assert_eq!(EffortValue::new(-1e-13).value(), 0.0);
    }

    #[test]
    fn admissibility_examples() {
        let id = ConstraintOperator::identity(2).unwrap();
        assert!(id.is_admissible(&[1.0, 0.0], 1e-8).unwrap());
        assert!(!diag(&[1.0, 0.0]).is_admissible(&[0.0, 1.0], 1e-8).unwrap());
        assert!(diag(&[4.0, 1.0]).is_admissible(&[0.5, 0.0], 1e-8).unwrap());
        assert_eq!(id.is_admissible(&[0.0, 0.0], 1e-8), Err(Error::ZeroVector));
    }

    #[test]
    fn normalization_examples() {
        let id = ConstraintOperator::identity(2).unwrap();
        let d = id.normalize_effort(&[3.0, 4.0]).unwrap();
        assert!((d[0] - 0.6).abs() < 1e-15 && (d[1] - 0.8).abs() < 1e-15);
        let h = diag(&[4.0, 0.0]);
        assert_eq!(h.normalize_effort(&[1.0, 0.0]).unwrap(), vec![0.5, 0.0]);
        assert!(matches!(
            h.normalize_effort(&[0.0, 1.0]),
            Err(Error::DegenerateDirection { .. })
        ));
    }

    #[test]
    fn split_is_orthogonal() {
        let m = SymmetricMatrix::from_rows(&[
            vec![2.0, 1.0, 0.0],
            vec![1.0, 0.5, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let h = ConstraintOperator::new(m).unwrap();
        assert_eq!(h.reachable_dim(), 2);
        let v = [0.7, -1.2, 2.0];
        let (img, ker) = h.split(&v).unwrap();
        assert!(dot(&img, &ker).abs() < 1e-12);
        for i in 0..3 {
            assert!((img[i] + ker[i] - v[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn builtin_fields() {
        let spec: OperatorFieldSpec =
            serde_json::from_str(r#"{"kind":"diag_decay","dim":3,"scale":2.0,"ratio":0.5}"#).unwrap();
        let field = spec.build().unwrap();
        assert_eq!(field.0.spectrum().eigenvalues(), &[2.0, 1.0, 0.5]);

        let spec: OperatorFieldSpec =
            serde_json::from_str(r#"{"kind":"mask","mask":[true,false,true]}"#).unwrap();
        let field = spec.build().unwrap();
        assert_eq!(field.0.reachable_dim(), 2);
        assert!(field.operator_at(&[0.0, 0.0]).is_err());

        let spec: OperatorFieldSpec =
            serde_json::from_str(r#"{"kind":"constant","entries":[[1.0,0.0],[0.0,0.0]]}"#).unwrap();
        let field = spec.build().unwrap();
        assert_eq!(field.operator_at(&[5.0, 5.0]).unwrap().reachable_dim(), 1);
    }

    #[test]
    fn closures_are_fields() {
        let field = |theta: &[f64]| ConstraintOperator::diagonal(&[1.0 + theta[0] * theta[0], 1.0]);
        let h = field.operator_at(&[2.0, 0.0]).unwrap();
        assert_eq!(h.spectrum().eigenvalues()[0], 5.0);
    }
}
