use ppsloo_core::psis::{fit_gpd, psis_smooth};
use ppsloo_core::math::log_sum_exp;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Inverse-CDF draws from GPD(k, σ) with location 0.
fn gpd_sample(k: f64, sigma: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            if k == 0.0 {
                -sigma * (-u).ln_1p()
            } else {
                sigma / k * ((1.0 - u).powf(-k) - 1.0)
            }
        })
        .collect()
}

#[test]
fn shape_recovery_at_ten_thousand() {
    for (j, k) in [-0.2, 0.0, 0.3, 0.7].into_iter().enumerate() {
        let fit = fit_gpd(&gpd_sample(k, 1.5, 10_000, 100 + j as u64)).unwrap();
        assert!((fit.k - k).abs() <= 0.05, "k = {k}: fitted {}", fit.k);
    }
}

#[test]
fn shape_error_shrinks_with_sample_size() {
    for k in [-0.2, 0.0, 0.3, 0.7] {
        let err = |n: usize, seeds: std::ops::Range<u64>| {
            let count = seeds.end - seeds.start;
            seeds
                .map(|s| (fit_gpd(&gpd_sample(k, 1.0, n, s)).unwrap().k - k).abs())
                .sum::<f64>()
                / count as f64
        };
        let small = err(1_000, 0..20);
        let large = err(100_000, 50..53);
        assert!(large < small, "k = {k}: error {large} at 1e5 vs {small} at 1e3");
    }
}

fn log_weights() -> impl Strategy<Value = Vec<f64>> {
    (25usize..600, any::<u64>(), 0.1f64..5.0, prop::bool::ANY).prop_map(|(s, seed, scale, heavy)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..s)
            .map(|_| {
                let u: f64 = rng.random();
                if heavy {
                    -scale * (1.0 - u).ln()
                } else {
                    scale * (u - 0.5) * 4.0
                }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn smoothing_invariants(lw in log_weights()) {
        let res = psis_smooth(&lw).unwrap();
        let sw = &res.smoothed_log_weights;
        prop_assert_eq!(sw.len(), lw.len());

        let total: f64 = sw.iter().map(|w| w.exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-10, "sum = {}", total);
        prop_assert!(log_sum_exp(sw).abs() < 1e-10);

        let mut order: Vec<usize> = (0..lw.len()).collect();
        order.sort_by(|&a, &b| lw[a].total_cmp(&lw[b]));
        for pair in order.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if lw[a] < lw[b] {
                prop_assert!(sw[a] <= sw[b], "rank broken: {} -> {}, {} -> {}", lw[a], sw[a], lw[b], sw[b]);
            }
        }

        // Undo the normalization through the smallest raw weight, which is
        // never in the tail: the largest smoothed weight must not exceed the
        // largest raw one.
        let max_raw = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let body = order[0];
        let norm = (lw[body] - max_raw) - sw[body];
        let sw_max = sw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(sw_max + norm <= 1e-12, "smoothed max {} above raw max", sw_max + norm);
        prop_assert!(res.k_hat.is_finite());
    }

    #[test]
    fn uniform_weights_pass_through(s in 25usize..500, c in -50f64..50.0) {
        let res = psis_smooth(&vec![c; s]).unwrap();
        prop_assert!(res.degenerate);
        let u = -(s as f64).ln();
        prop_assert!(res.smoothed_log_weights.iter().all(|w| (w - u).abs() < 1e-12));
    }
}
