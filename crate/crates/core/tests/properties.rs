use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

use prior_bandits::agents::HyperposteriorState;
use prior_bandits::gp::{dense, MaterializedPrior, PosteriorState};
use prior_bandits::kernels::{gram_matrix, ArmSet, KernelKind, KernelSpec};
use prior_bandits::metrics::quantile;
use prior_bandits::rng::{sample_categorical, SeedRoot, Stream};

fn kernel_strategy() -> impl Strategy<Value = KernelSpec> {
    let kind = prop_oneof![
        Just(KernelKind::Rbf),
        (0.2f64..5.0).prop_map(|alpha| KernelKind::RationalQuadratic { alpha }),
        Just(KernelKind::Matern32),
        Just(KernelKind::Matern52),
        (0.5f64..6.0).prop_map(|period| KernelKind::Periodic { period }),
        (0.001f64..1.0).prop_map(|variance| KernelKind::Linear { variance }),
    ];
    (kind, 0.2f64..5.0).prop_map(|(k, l)| KernelSpec::new(k, l).unwrap())
}

fn arms_strategy() -> impl Strategy<Value = ArmSet> {
    (1usize..=3, 2usize..=15).prop_flat_map(|(dim, n)| {
        proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, dim), n)
            .prop_map(|pts| ArmSet::new(pts).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_matrices_are_symmetric_psd(spec in kernel_strategy(), arms in arms_strategy()) {
        let k = gram_matrix(&spec, &arms).unwrap();
        let scale = k.diagonal().iter().copied().fold(1e-12, f64::max);
        prop_assert!((&k - k.transpose()).abs().max() <= 1e-12 * scale);
        let min_eig = k.symmetric_eigen().eigenvalues.min();
        prop_assert!(min_eig >= -1e-9 * scale, "min eigenvalue {}", min_eig);
    }

    #[test]
    fn kernel_specs_round_trip(spec in kernel_strategy()) {
        let parsed: KernelSpec = spec.to_string().parse().unwrap();
        prop_assert_eq!(parsed.to_string(), spec.to_string());
    }

    #[test]
    fn conditioning_matches_dense_and_shrinks_variance(
        spec in kernel_strategy(),
        arms in arms_strategy(),
        obs in proptest::collection::vec((0usize..1000, -3.0f64..3.0), 0..12),
        noise in 0.01f64..1.0,
    ) {
        let n = arms.len();
        let prior = Arc::new(MaterializedPrior::from_kernel("p", &spec, &arms).unwrap());
        let mut state = PosteriorState::new(Arc::clone(&prior), noise).unwrap();
        let mut idx = Vec::new();
        let mut ys = Vec::new();
        for (a, y) in obs {
            let arm = a % n;
            let before = state.variance().to_vec();
            state.condition(arm, y).unwrap();
            for (v, b) in state.variance().iter().zip(&before) {
                prop_assert!(*v <= b + 1e-12);
                prop_assert!(*v >= 0.0);
            }
            idx.push(arm);
            ys.push(y);
        }
        let reference = dense::posterior(&prior, noise, &idx, &ys);
        let scale = prior.max_variance().max(1.0);
        for i in 0..n {
            prop_assert!((state.mean()[i] - reference.mean[i]).abs() <= 1e-7 * scale);
            prop_assert!((state.variance()[i] - reference.cov[(i, i)]).abs() <= 1e-7 * scale);
        }
    }

    #[test]
    fn categorical_draws_land_on_positive_weights(
        weights in proptest::collection::vec(prop_oneof![Just(0.0), 1e-12f64..10.0], 1..10),
        seed in 0u64..1000,
    ) {
        prop_assume!(weights.iter().any(|w| *w > 0.0));
        let mut rng = SeedRoot::new("cat", seed).stream(Stream::Environment);
        for _ in 0..50 {
            let i = sample_categorical(&mut rng, &weights);
            prop_assert!(weights[i] > 0.0);
        }
    }

    #[test]
    fn quantiles_are_monotone_and_bounded(
        mut xs in proptest::collection::vec(-100.0f64..100.0, 1..40),
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        xs.sort_by(f64::total_cmp);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (qa, qb) = (quantile(&xs, lo), quantile(&xs, hi));
        prop_assert!(qa <= qb + 1e-12);
        prop_assert!(qa >= xs[0] && qb <= xs[xs.len() - 1]);
    }

    #[test]
    fn hyperposterior_update_is_order_free(
        lls in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 4), 1..20),
    ) {
        let mut a = HyperposteriorState::new(&[0.25; 4]);
        let mut b = a.clone();
        for ll in &lls {
            a.update(ll);
        }
        for ll in lls.iter().rev() {
            b.update(ll);
        }
        for (x, y) in a.weights().iter().zip(b.weights()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn hyperposterior_survives_extreme_likelihoods() {
    let mut rng = SeedRoot::new("hyper-fuzz", 0).stream(Stream::Environment);
    let k = 6;
    let mut state = HyperposteriorState::new(&[1.0 / k as f64; 6]);
    let mut ll = vec![0.0; k];
    for step in 0..100_000 {
        for v in &mut ll {
            // Mostly moderate values with occasional huge swings, one prior
            // occasionally receiving a zero likelihood.
            *v = match rng.random_range(0..100) {
                0 => rng.random_range(-1e6..1e6),
                1 => rng.random_range(-800.0..-700.0),
                _ => rng.random_range(-5.0..5.0),
            };
        }
        if step % 997 == 0 {
            ll[step % k] = f64::NEG_INFINITY;
            ll[(step + 1) % k] = 0.0;
        }
        state.update(&ll);
        let w = state.weights();
        let total: f64 = w.iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "step {step}: total {total}");
        assert!(w.iter().all(|x| x.is_finite() && *x >= 0.0));
        let h = state.entropy();
        assert!(h.is_finite() && h >= -1e-12 && h <= (k as f64).ln() + 1e-12, "step {step}: entropy {h}");
        assert!(w[state.map()] >= w.iter().copied().fold(0.0, f64::max));
    }
}

#[test]
fn near_singular_priors_still_factor() {
    // Duplicate arms make the Gram matrix exactly singular.
    let arms = ArmSet::new(vec![vec![1.0], vec![1.0], vec![2.0], vec![2.0 + 1e-12]]).unwrap();
    let prior = MaterializedPrior::from_kernel("dup", &KernelSpec::rbf(10.0).unwrap(), &arms).unwrap();
    assert!(prior.jitter() > 0.0);
    let l = prior.chol();
    let rebuilt = l * l.transpose();
    let target = prior.cov() + DMatrix::identity(4, 4) * prior.jitter();
    assert!((rebuilt - target).abs().max() < 1e-12);
}
