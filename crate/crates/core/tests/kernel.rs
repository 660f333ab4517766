use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spectral_ascent::kernel::{error_sweep, smallest_k_for_error, truncate};
use spectral_ascent::{decompose_auto, SymmetricMatrix};
use spectral_ascent_testkit as tk;

fn planted(seed: u64, n: usize, r: usize) -> (tk::PlantedPsd, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spectrum = tk::random_spectrum(&mut rng, r, 0.1, 10.0);
    (tk::PlantedPsd::new(&mut rng, n, &spectrum), rng)
}

#[test]
fn residual_matches_direct_difference() {
    for case in 0..200u64 {
        let n = 2 + (case as usize % 7);
        let r = 1 + (case as usize / 7) % n;
        let (p, mut rng) = planted(case, n, r);
        let d = decompose_auto(&SymmetricMatrix::from_rows(&p.matrix).unwrap()).unwrap();
        let g = tk::gaussian_vec(&mut rng, n);
        let full = tk::mat_vec(&p.planted_pseudoinverse(), &g);
        for k in 0..=r {
            let kernel = truncate(&d, k).unwrap();
            let (kg, report) = kernel.apply_with_residual(&g).unwrap();
            let direct: Vec<f64> = full.iter().zip(&kg).map(|(a, b)| a - b).collect();
            let direct_sq = tk::dot(&direct, &direct);
            assert!((report.residual_norm_sq - direct_sq).abs() <= 1e-9 * direct_sq.max(1.0));
            let tail: f64 = (k..r).map(|i| tk::dot(&g, &p.basis[i]).powi(2) / p.spectrum[i].powi(2)).sum();
            assert!((report.residual_norm_sq - tail).abs() <= 1e-9 * tail.max(1.0));
        }
    }
}

#[test]
fn certified_error_matches_power_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..30u64 {
        let (p, _) = planted(1000 + case, 6, 4);
        let d = decompose_auto(&SymmetricMatrix::from_rows(&p.matrix).unwrap()).unwrap();
        for k in 0..4 {
            let kernel = truncate(&d, k).unwrap();
            let diff = tk::mat_sub(&p.planted_pseudoinverse(), &kernel.kernel_matrix().to_rows());
            let measured = tk::power_iteration_norm(&mut rng, &diff, 2000);
            assert!((kernel.op_error() - measured).abs() <= 1e-6 * measured);
            assert!((kernel.op_error() - 1.0 / p.spectrum[3]).abs() <= 1e-9 / p.spectrum[3]);
            assert!((kernel.leading_mode_gain() - 1.0 / p.spectrum[k]).abs() <= 1e-9 / p.spectrum[k]);
        }
    }
}

#[test]
fn smallest_k_is_zero_or_full() {
    let d = decompose_auto(&SymmetricMatrix::diagonal(&[8.0, 4.0, 2.0, 1.0, 0.0]).unwrap()).unwrap();
    assert_eq!(smallest_k_for_error(&d, 1.0), 0);
    assert_eq!(smallest_k_for_error(&d, 0.999), 4);
    assert_eq!(smallest_k_for_error(&d, 100.0), 0);
}

#[test]
fn repeated_eigenvalues_keep_sweep_consistent() {
    let d = decompose_auto(&SymmetricMatrix::diagonal(&[2.0, 2.0, 2.0, 1.0]).unwrap()).unwrap();
    let g = [1.0, -1.0, 2.0, 0.5];
    let rows = error_sweep(&d, &g).unwrap();
    assert_eq!(rows.len(), 5);
    assert!((rows[0].residual_norm_sq - (1.0 + 1.0 + 4.0) / 4.0 - 0.25).abs() < 1e-12);
    for w in rows.windows(2) {
        assert!(w[1].residual_norm_sq <= w[0].residual_norm_sq + 1e-15);
    }
    assert_eq!(rows[4].residual_norm_sq, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernels_are_nested((n, r, seed) in (2usize..=8).prop_flat_map(|n| (Just(n), 1usize..=n, any::<u64>()))) {
        let (p, mut rng) = planted(seed, n, r);
        let d = decompose_auto(&SymmetricMatrix::from_rows(&p.matrix).unwrap()).unwrap();
        let g = tk::gaussian_vec(&mut rng, n);
        for k in 0..r {
            let lo = truncate(&d, k).unwrap();
            let hi = truncate(&d, k + 1).unwrap();
            // K_{k+1} − K_k is exactly the (k+1)-th mode.
            let u = d.eigenvector(k);
            let step = tk::mat_sub(&hi.kernel_matrix().to_rows(), &lo.kernel_matrix().to_rows());
            let mode = tk::outer_sum(n, &[1.0 / d.eigenvalues()[k]], &[u.to_vec()]);
            prop_assert!(tk::max_abs(&tk::mat_sub(&step, &mode)) <= 1e-12);
            let (_, rl) = lo.apply_with_residual(&g).unwrap();
            let (_, rh) = hi.apply_with_residual(&g).unwrap();
            prop_assert!(rh.residual_norm_sq <= rl.residual_norm_sq + 1e-12);
            prop_assert!(lo.op_error() >= hi.op_error());
        }
    }
}
