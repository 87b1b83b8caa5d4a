use mrc_align::linalg::{column_basis, complement_projector, intersection_basis, nullspace_basis, numerical_rank};
use mrc_align::rng::{complex_gaussian_matrix, random_unitary, trial_rng};
use mrc_align::{ComplexMatrix, Tolerance};
use proptest::prelude::*;

fn identity_gap(q: &ComplexMatrix) -> f64 {
    (q.adjoint() * q - ComplexMatrix::identity(q.ncols(), q.ncols())).norm()
}

/// Product of two Gaussian factors: generically rank `min(rows, inner, cols)`.
fn low_rank(seed: u64, rows: usize, inner: usize, cols: usize) -> ComplexMatrix {
    let mut rng = trial_rng(seed, 0);
    complex_gaussian_matrix(&mut rng, rows, inner) * complex_gaussian_matrix(&mut rng, inner, cols)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn rank_nullity(seed in any::<u64>(), rows in 1usize..10, inner in 1usize..10, cols in 1usize..10) {
        let tol = Tolerance::default();
        let a = low_rank(seed, rows, inner, cols);
        let rank = numerical_rank(&a, &tol).unwrap();
        prop_assert_eq!(rank, rows.min(inner).min(cols));
        let null = nullspace_basis(&a, &tol).unwrap();
        prop_assert_eq!(null.ncols(), cols - rank);
        if null.ncols() > 0 {
            prop_assert!(identity_gap(&null) < 1e-9);
            prop_assert!((&a * &null).norm() < 1e-9 * a.norm().max(1.0));
        }
        let basis = column_basis(&a, &tol).unwrap();
        prop_assert_eq!(basis.ncols(), rank);
        // Every column of A lies in the basis span.
        let residual = &a - &basis * (basis.adjoint() * &a);
        prop_assert!(residual.norm() < 1e-9 * a.norm().max(1.0));
    }

    #[test]
    fn projector_is_orthogonal_complement(seed in any::<u64>(), n in 2usize..10, k in 0usize..10) {
        let k = k % n;
        let tol = Tolerance::default();
        let b = complex_gaussian_matrix(&mut trial_rng(seed, 1), n, k);
        let p = complement_projector(&b, &tol).unwrap();
        prop_assert!((&p * &p - &p).norm() < 1e-9);
        prop_assert!((p.adjoint() - &p).norm() < 1e-9);
        prop_assert!((&p * &b).norm() < 1e-9 * b.norm().max(1.0));
        prop_assert_eq!(numerical_rank(&p, &tol).unwrap(), n - k);
    }

    #[test]
    fn generic_intersection_dimension(seed in any::<u64>(), n in 2usize..9, a in 1usize..9, b in 1usize..9) {
        prop_assume!(a <= n && b <= n);
        let tol = Tolerance::default();
        let mut rng = trial_rng(seed, 2);
        let x = complex_gaussian_matrix(&mut rng, n, a);
        let y = complex_gaussian_matrix(&mut rng, n, b);
        let both = intersection_basis(&x, &y, &tol).unwrap();
        prop_assert_eq!(both.ncols(), (a + b).saturating_sub(n));
        if both.ncols() > 0 {
            let px = complement_projector(&x, &tol).unwrap();
            let py = complement_projector(&y, &tol).unwrap();
            prop_assert!((px * &both).norm() < 1e-8);
            prop_assert!((py * &both).norm() < 1e-8);
        }
    }

    #[test]
    fn unitary_draws(seed in any::<u64>(), n in 1usize..12) {
        let u = random_unitary(&mut trial_rng(seed, 3), n);
        prop_assert!(identity_gap(&u) < 1e-10);
    }
}
