//! Property tests for the structural invariants.

use lae_core::data::{center, make_synthetic, spectrum_of, SyntheticSpec};
use lae_core::metrics::{axis_alignment_distance, balance_residual, subspace_distance};
use lae_core::objective::{eval_nonuniform_l2, geometric_prior, WeightPair};
use lae_core::rag::skew_term;
use lae_core::Mat;
use proptest::prelude::*;

fn matrix_strategy(max_m: usize, max_n: usize) -> impl Strategy<Value = Mat> {
    (2..=max_m, 2..=max_n)
        .prop_flat_map(|(m, n)| {
            proptest::collection::vec(-10.0f64..10.0, m * n)
                .prop_map(move |v| Mat::from_vec(m, n, v))
        })
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 48,
        ..ProptestConfig::default()
    })]

    #[test]
    fn centering_removes_row_means_and_is_idempotent(raw in matrix_strategy(6, 12)) {
        let once = center(raw).unwrap();
        for i in 0..once.m() {
            let mean: f64 = once.values().row(i).sum() / once.n() as f64;
            let scale = once.values().row(i).norm().max(1.0);
            prop_assert!(mean.abs() <= 1e-10 * scale);
        }
        let twice = once.center();
        let drift = (once.values() - twice.values()).norm();
        prop_assert!(drift <= 1e-12 * once.values().norm().max(1.0));
    }

    #[test]
    fn skew_term_is_exactly_skew(y in matrix_strategy(5, 9)) {
        let a = skew_term(&y).into_matrix();
        prop_assert_eq!(a.transpose(), -&a);
        for i in 0..a.nrows() {
            prop_assert_eq!(a[(i, i)], 0.0);
        }
    }

    #[test]
    fn alignment_is_invariant_to_column_symmetries(
        seed in 0u64..1000,
        scales in proptest::collection::vec(0.25f64..4.0, 3),
        flip in proptest::collection::vec(any::<bool>(), 3),
    ) {
        let spec = SyntheticSpec {
            m: 6,
            n: 30,
            k: 3,
            singular_values: vec![3.0, 2.0, 1.0, 0.5, 0.25, 0.1],
            seed,
        };
        let (_, s) = make_synthetic(&spec).unwrap();
        let w2 = Mat::from_fn(6, 3, |i, j| ((i * 3 + j + seed as usize) as f64 * 0.731).sin() + 0.1);
        let base = axis_alignment_distance(&w2, s.u()).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&base));

        // Permute (rotate-by-one), rescale, and flip columns.
        let mut mapped = Mat::zeros(6, 3);
        for j in 0..3 {
            let src = (j + 1) % 3;
            let sign = if flip[j] { -1.0 } else { 1.0 };
            let col = w2.column(src) * (scales[j] * sign);
            mapped.set_column(j, &col);
        }
        let moved = axis_alignment_distance(&mapped, s.u()).unwrap();
        prop_assert!((base - moved).abs() <= 1e-12);
    }

    #[test]
    fn subspace_distance_ignores_invertible_mixing(
        seed in 0u64..1000,
        g_entries in proptest::collection::vec(-2.0f64..2.0, 9),
    ) {
        let g = Mat::from_vec(3, 3, g_entries);
        // Skip near-singular mixings.
        prop_assume!(g.determinant().abs() > 0.05);
        let spec = SyntheticSpec {
            m: 7,
            n: 35,
            k: 3,
            singular_values: vec![3.0, 2.0, 1.0, 0.5, 0.25, 0.12, 0.06],
            seed,
        };
        let (_, s) = make_synthetic(&spec).unwrap();
        let w2 = Mat::from_fn(7, 3, |i, j| ((i * 5 + 2 * j + seed as usize) as f64).cos() + 0.2);
        prop_assume!(subspace_distance(&w2, s.u()).is_ok());
        let base = subspace_distance(&w2, s.u()).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&base));
        let mixed = subspace_distance(&(&w2 * &g), s.u()).unwrap();
        prop_assert!((base - mixed).abs() <= 1e-9, "{} vs {}", base, mixed);
    }

    #[test]
    fn synthetic_spectrum_round_trips(
        seed in 0u64..500,
        gaps in proptest::collection::vec(0.2f64..1.5, 4),
    ) {
        // Strictly descending singular values from positive gaps.
        let mut sv = vec![0.5];
        for g in &gaps {
            sv.push(sv.last().unwrap() + g);
        }
        sv.reverse();
        let spec = SyntheticSpec { m: 5, n: 40, k: 5, singular_values: sv.clone(), seed };
        let (x, truth) = make_synthetic(&spec).unwrap();
        let got = spectrum_of(&x, 5).unwrap();
        for i in 0..5 {
            let want = sv[i] * sv[i];
            prop_assert!((got.sigma2()[i] - want).abs() <= 1e-8 * want);
            prop_assert!((truth.sigma2()[i] - want).abs() <= 1e-12 * want);
        }
    }

    #[test]
    fn geometric_prior_is_a_distribution(rho in 0.05f64..0.95, k in 1usize..24) {
        let p = geometric_prior(rho, k).unwrap();
        let sum: f64 = p.pb().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        prop_assert_eq!(p.keep()[0], 1.0);
        for w in p.keep().windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-15);
        }
        prop_assert!(*p.keep().last().unwrap() > 0.0);
    }

    #[test]
    fn nonuniform_loss_invariant_under_matched_sign_flips(
        seed in 0u64..300,
        unit in 0usize..3,
    ) {
        let spec = SyntheticSpec {
            m: 5,
            n: 25,
            k: 3,
            singular_values: vec![2.0, 1.4, 1.0, 0.5, 0.25],
            seed,
        };
        let (x, _) = make_synthetic(&spec).unwrap();
        let w = WeightPair::random_normal(5, 3, 0.6, seed ^ 0x5a5a);
        let lambda = [0.08, 0.21, 0.4];
        let base = eval_nonuniform_l2(&w, &x, &lambda).unwrap().loss;

        let mut w1 = w.w1().clone();
        let mut w2 = w.w2().clone();
        for j in 0..5 {
            w1[(unit, j)] = -w1[(unit, j)];
            w2[(j, unit)] = -w2[(j, unit)];
        }
        let flipped = WeightPair::new(w1, w2).unwrap();
        let loss = eval_nonuniform_l2(&flipped, &x, &lambda).unwrap().loss;
        prop_assert_eq!(base, loss);
    }

    #[test]
    fn balance_residual_is_zero_iff_balanced(seed in 0u64..300) {
        let w1 = Mat::from_fn(3, 5, |i, j| ((seed as usize + i * 5 + j) as f64 * 0.37).sin());
        let balanced = WeightPair::new(w1.clone(), w1.transpose()).unwrap();
        prop_assert_eq!(balance_residual(&balanced), 0.0);

        let mut w2 = w1.transpose();
        w2[(0, 0)] += 0.5;
        let skewed = WeightPair::new(w1, w2).unwrap();
        prop_assert!(balance_residual(&skewed) > 0.0);
    }
}
