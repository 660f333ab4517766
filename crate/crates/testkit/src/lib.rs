//! Test oracles that share no code with the library under test.
//!
//! Matrices are plain `Vec<Vec<f64>>`; everything here is computed by a route
//! independent of the library (explicit products, power iteration, polynomial
//! roots, quadrature, brute-force sampling).

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub type Mat = Vec<Vec<f64>>;

pub fn zeros(n: usize, m: usize) -> Mat {
    vec![vec![0.0; m]; n]
}

pub fn identity(n: usize) -> Mat {
    let mut a = zeros(n, n);
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    a
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut c = zeros(n, m);
    for i in 0..n {
        for l in 0..k {
            let ail = a[i][l];
            for j in 0..m {
                c[i][j] += ail * b[l][j];
            }
        }
    }
    c
}

pub fn transpose(a: &Mat) -> Mat {
    let (n, m) = (a.len(), a[0].len());
    (0..m).map(|j| (0..n).map(|i| a[i][j]).collect()).collect()
}

pub fn mat_sub(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x - y).collect())
        .collect()
}

pub fn frobenius(a: &Mat) -> f64 {
    a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn max_abs(a: &Mat) -> f64 {
    a.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn mat_vec(a: &Mat, v: &[f64]) -> Vec<f64> {
    a.iter().map(|r| dot(r, v)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn gaussian_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Random orthogonal matrix (columns orthonormal) by twice-applied
/// modified Gram–Schmidt on a Gaussian matrix. Returned as a list of columns.
pub fn random_orthonormal_columns<R: Rng>(rng: &mut R, n: usize) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v = gaussian_vec(rng, n);
        for _ in 0..2 {
            for c in &cols {
                let p = dot(&v, c);
                for (vi, ci) in v.iter_mut().zip(c) {
                    *vi -= p * ci;
                }
            }
        }
        let nv = norm(&v);
        if nv > 1e-6 {
            cols.push(v.iter().map(|x| x / nv).collect());
        }
    }
    cols
}

/// `Σ_i w_i u_i u_iᵀ`
pub fn outer_sum(n: usize, weights: &[f64], cols: &[Vec<f64>]) -> Mat {
    let mut a = zeros(n, n);
    for (w, u) in weights.iter().zip(cols) {
        for i in 0..n {
            for j in 0..n {
                a[i][j] += w * u[i] * u[j];
            }
        }
    }
    a
}

/// A PSD matrix with a prescribed spectrum in a random orthonormal basis.
///
/// `spectrum` is padded with zeros to `n`; the returned basis is ordered like
/// the padded spectrum.
pub struct PlantedPsd {
    pub matrix: Mat,
    pub spectrum: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
}

impl PlantedPsd {
    pub fn new<R: Rng>(rng: &mut R, n: usize, spectrum: &[f64]) -> Self {
        let mut padded = spectrum.to_vec();
        padded.resize(n, 0.0);
        let basis = random_orthonormal_columns(rng, n);
        let matrix = outer_sum(n, &padded, &basis);
        PlantedPsd {
            matrix,
            spectrum: padded,
            basis,
        }
    }

    /// Indices of the nonzero planted eigenvalues.
    pub fn image_indices(&self) -> Vec<usize> {
        (0..self.spectrum.len()).filter(|&i| self.spectrum[i] > 0.0).collect()
    }

    pub fn kernel_indices(&self) -> Vec<usize> {
        (0..self.spectrum.len()).filter(|&i| self.spectrum[i] == 0.0).collect()
    }

    /// `Σ_{λ_i>0} (1/λ_i) u_i u_iᵀ` from the planted factors.
    pub fn planted_pseudoinverse(&self) -> Mat {
        let w: Vec<f64> = self.spectrum.iter().map(|&l| if l > 0.0 { 1.0 / l } else { 0.0 }).collect();
        outer_sum(self.spectrum.len(), &w, &self.basis)
    }
}

/// `r` eigenvalues drawn log-uniformly from `[lo, hi]`, sorted descending.
pub fn random_spectrum<R: Rng>(rng: &mut R, r: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut s: Vec<f64> = (0..r)
        .map(|_| (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp())
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `BᵀB` for a Gaussian `r × n` matrix `B` (rank `min(r, n)` almost surely).
pub fn gram_psd<R: Rng>(rng: &mut R, n: usize, r: usize) -> Mat {
    let b: Mat = (0..r).map(|_| gaussian_vec(rng, n)).collect();
    matmul(&transpose(&b), &b)
}

/// Characteristic polynomial coefficients `c_0..c_n` of `det(λI − A)`
/// (`c_n = 1`) by the Faddeev–LeVerrier recursion.
pub fn characteristic_polynomial(a: &Mat) -> Vec<f64> {
    let n = a.len();
    let mut coeffs = vec![0.0; n + 1];
    coeffs[n] = 1.0;
    let mut m = zeros(n, n);
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{n-k+1} I
        let mut next = matmul(a, &m);
        for (i, row) in next.iter_mut().enumerate() {
            row[i] += coeffs[n - k + 1];
        }
        m = next;
        let am = matmul(a, &m);
        let trace: f64 = (0..n).map(|i| am[i][i]).sum();
        coeffs[n - k] = -trace / k as f64;
    }
    coeffs
}

/// Roots of a monic polynomial (coefficients low to high) as eigenvalues of
/// its companion matrix, real parts only, sorted descending.
pub fn real_roots_descending(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len() - 1;
    let mut c = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        c[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        c[(i, n - 1)] = -coeffs[i] / coeffs[n];
    }
    let mut roots: Vec<f64> = c.complex_eigenvalues().iter().map(|z| z.re).collect();
    roots.sort_by(|a, b| b.total_cmp(a));
    roots
}

/// Largest absolute eigenvalue of a symmetric matrix by power iteration.
pub fn power_iteration_norm<R: Rng>(rng: &mut R, a: &Mat, iterations: usize) -> f64 {
    let n = a.len();
    let mut v = gaussian_vec(rng, n);
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let w = mat_vec(a, &v);
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        estimate = nw;
        v = w.iter().map(|x| x / nw).collect();
    }
    estimate
}

/// Unit-effort direction in `span(basis)` with Gaussian coordinates:
/// `d = Σ z_i u_i / sqrt(Σ λ_i z_i²)`.
pub fn sample_admissible<R: Rng>(rng: &mut R, basis: &[&[f64]], lambdas: &[f64]) -> Vec<f64> {
    let n = basis[0].len();
    loop {
        let z = gaussian_vec(rng, basis.len());
        let effort: f64 = z.iter().zip(lambdas).map(|(zi, l)| l * zi * zi).sum();
        if effort <= 0.0 {
            continue;
        }
        let s = effort.sqrt();
        let mut d = vec![0.0; n];
        for (zi, u) in z.iter().zip(basis) {
            for (dj, uj) in d.iter_mut().zip(u.iter()) {
                *dj += zi / s * uj;
            }
        }
        return d;
    }
}

/// Angle in degrees between two nonzero vectors.
pub fn angle_deg(a: &[f64], b: &[f64]) -> f64 {
    let c = (dot(a, b) / (norm(a) * norm(b))).clamp(-1.0, 1.0);
    c.acos().to_degrees()
}

/// Fraction of the unit sphere in `R^dim` within angle `beta` of a fixed
/// axis: `∫_0^β sin^{dim-2} t dt / ∫_0^π sin^{dim-2} t dt`, by composite
/// Simpson quadrature.
pub fn cap_fraction(dim: usize, beta: f64) -> f64 {
    assert!(dim >= 2);
    let f = |t: f64| t.sin().powi(dim as i32 - 2);
    let simpson = |a: f64, b: f64| {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    };
    simpson(0.0, beta) / simpson(0.0, std::f64::consts::PI)
}

/// Exact coupling threshold of two circular cones whose axes are `theta`
/// apart (`theta ≤ π`), with half-angles enlarged as `min(α + γ, π/2)`.
///
/// Two spherical caps meet iff the axis angle is at most the sum of their
/// radii, so this is the smallest `γ` with `β_1(γ) + β_2(γ) ≥ theta`.
pub fn two_cone_gamma_star(theta: f64, a1: f64, a2: f64) -> f64 {
    use std::f64::consts::FRAC_PI_2;
    let unclamped = ((theta - a1 - a2) / 2.0).max(0.0);
    let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
    if hi + unclamped <= FRAC_PI_2 {
        return unclamped;
    }
    // The wider cone saturates at π/2 first; the narrower one must cover the rest.
    (theta - FRAC_PI_2 - lo).max(FRAC_PI_2 - hi).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn cap_fraction_closed_forms() {
        // circle: arc fraction β/π; 2-sphere: (1 − cos β)/2
        assert!((cap_fraction(2, 0.7) - 0.7 / PI).abs() < 1e-12);
        assert!((cap_fraction(3, 1.1) - (1.0 - 1.1_f64.cos()) / 2.0).abs() < 1e-12);
        assert!((cap_fraction(5, FRAC_PI_2) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn diagonal_roots() {
        let a = vec![vec![3.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 2.0]];
        let roots = real_roots_descending(&characteristic_polynomial(&a));
        for (r, e) in roots.iter().zip([3.0, 2.0, 1.0]) {
            assert!((r - e).abs() < 1e-10);
        }
    }

    #[test]
    fn planted_matrix_has_planted_inverse() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let p = PlantedPsd::new(&mut rng, 4, &[5.0, 2.0]);
        let hph = matmul(&matmul(&p.matrix, &p.planted_pseudoinverse()), &p.matrix);
        assert!(frobenius(&mat_sub(&hph, &p.matrix)) < 1e-12);
        assert_eq!(p.kernel_indices(), vec![2, 3]);
        let q = identity(4);
        let b = &p.basis;
        let gram: Mat = (0..4).map(|i| (0..4).map(|j| dot(&b[i], &b[j])).collect()).collect();
        assert!(frobenius(&mat_sub(&gram, &q)) < 1e-12);
    }

    #[test]
    fn two_cone_threshold_regimes() {
        assert!((two_cone_gamma_star(PI / 3.0, PI / 9.0, PI / 9.0) - PI / 18.0).abs() < 1e-15);
        assert_eq!(two_cone_gamma_star(0.3, 0.2, 0.2), 0.0);
        assert_eq!(two_cone_gamma_star(PI, 0.0, 0.0), FRAC_PI_2);
        // wider cone saturates: 1.4 + γ hits π/2 first, then 0.1 + γ + π/2 = 3.0
        let g = two_cone_gamma_star(3.0, 0.1, 1.4);
        assert!((g - (3.0 - FRAC_PI_2 - 0.1)).abs() < 1e-15);
        assert!((0.1 + g).min(FRAC_PI_2) + (1.4 + g).min(FRAC_PI_2) >= 3.0 - 1e-12);
    }

    #[test]
    fn power_iteration_on_diagonal() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(2);
        let a = vec![vec![0.5, 0.0], vec![0.0, 2.0]];
        assert!((power_iteration_norm(&mut rng, &a, 200) - 2.0).abs() < 1e-12);
    }
}
