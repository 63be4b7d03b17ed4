//! Property-based invariants over randomized channels, covariances and
//! precoders.

use ndarray::Array2;
use num_complex::Complex64 as c64;
use proptest::prelude::*;

use secrecy_precoding::channel::{make_toeplitz, sample_channel, ChannelVector, RngStream};
use secrecy_precoding::linalg::{self, adjoint, frobenius_norm, CMat};
use secrecy_precoding::precoder::{build_precoder, NullSpaceMethod};
use secrecy_precoding::rates::{effective_channels, rate_r01, rate_r02, rate_r1};

fn toeplitz_action_matches_convolution(taps: Vec<(f64, f64)>, xs: Vec<(f64, f64)>, n: usize) {
    let taps: Vec<c64> = taps.into_iter().map(|(re, im)| c64::new(re, im)).collect();
    if taps.iter().all(|t| t.norm_sqr() == 0.0) {
        return;
    }
    let l = taps.len() - 1;
    let ch = ChannelVector::new(taps.clone()).unwrap();
    let t = make_toeplitz(&ch, n).unwrap();
    let x: Vec<c64> = xs
        .into_iter()
        .cycle()
        .take(n + l)
        .map(|(re, im)| c64::new(re, im))
        .collect();
    let xv = ndarray::Array1::from(x.clone());
    let y = t.matrix().dot(&xv);
    for i in 0..n {
        let mut direct = c64::new(0.0, 0.0);
        for (j, &tap) in taps.iter().enumerate() {
            direct += tap * x[i + j];
        }
        let scale = direct.norm().max(1.0);
        prop_assert_eq_approx(y[i], direct, 1e-12 * scale);
    }
}

fn prop_assert_eq_approx(a: c64, b: c64, tol: f64) {
    assert!((a - b).norm() <= tol, "{a} != {b} within {tol}");
}

fn random_psd_with_trace(n: usize, trace: f64, seed: u64) -> CMat {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = RngStream::new(seed, 0).rng();
    let mut a: CMat = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            a[[i, j]] = c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
    }
    let s = a.dot(&adjoint(&a));
    let t = linalg::trace_re(&s);
    linalg::scale(&s, trace / t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn toeplitz_is_windowed_convolution(
        taps in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..8),
        xs in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..8),
        n in 1usize..12,
    ) {
        toeplitz_action_matches_convolution(taps, xs, n);
    }

    #[test]
    fn rates_are_monotone_in_psd_order(
        seed in 0u64..500,
        trace in 0.5f64..30.0,
        bump in 0.1f64..5.0,
    ) {
        let g = sample_channel(3, RngStream::new(seed, 0));
        let h = sample_channel(3, RngStream::new(seed, 1));
        let (prec, _) = build_precoder(&g, &h, 8, 2, NullSpaceMethod::Svd).unwrap();
        let th = make_toeplitz(&h, 8).unwrap();
        let tg = make_toeplitz(&g, 8).unwrap();
        let eff = effective_channels(&th, &tg, &prec).unwrap();
        let s1 = random_psd_with_trace(2, trace, seed.wrapping_add(1));
        let extra = random_psd_with_trace(2, bump, seed.wrapping_add(2));
        let bigger = &s1 + &extra;
        prop_assert!(rate_r1(&eff, &bigger).unwrap() >= rate_r1(&eff, &s1).unwrap() - 1e-12);

        let s0 = random_psd_with_trace(9, trace, seed.wrapping_add(3));
        let extra0 = random_psd_with_trace(9, bump, seed.wrapping_add(4));
        let bigger0 = &s0 + &extra0;
        prop_assert!(rate_r02(&eff, &bigger0).unwrap() >= rate_r02(&eff, &s0).unwrap() - 1e-12);
        // R01 is monotone in S0 for fixed S1
        prop_assert!(
            rate_r01(&eff, &bigger0, &s1).unwrap() >= rate_r01(&eff, &s0, &s1).unwrap() - 1e-12
        );
    }

    #[test]
    fn nulling_and_rank_hold_for_random_precoders(
        seed in 0u64..500,
        l in 1usize..5,
    ) {
        let g = sample_channel(4, RngStream::new(seed, 10));
        let h = sample_channel(4, RngStream::new(seed, 11));
        let (prec, cert) = build_precoder(&g, &h, 12, l, NullSpaceMethod::Svd).unwrap();
        prop_assert!(cert.holds());
        let tg = make_toeplitz(&g, 12).unwrap();
        let leak = frobenius_norm(&tg.matrix().dot(&prec.confidential_blocks()[0]));
        prop_assert!(leak <= 1e-10 * frobenius_norm(tg.matrix()));
        // [V0 V1] unitary
        let v0 = prec.common_block();
        let v1 = &prec.confidential_blocks()[0];
        let full = ndarray::concatenate![ndarray::Axis(1), v0.clone(), v1.clone()];
        prop_assert!(linalg::orthonormality_residual(&full) <= 1e-9);
    }

    #[test]
    fn waterfill_budget_binds_and_matches_bisection(
        weights in proptest::collection::vec(0.01f64..2.0, 1..6),
        gains in proptest::collection::vec(0.01f64..8.0, 1..6),
        budget in 0.1f64..50.0,
    ) {
        let streams: Vec<(f64, f64)> = weights
            .iter()
            .zip(gains.iter().cycle())
            .map(|(&w, &g)| (w, g))
            .collect();
        let sol = secrecy_precoding::optimizer::waterfill(&streams, budget).unwrap();
        prop_assert!((sol.total_power() - budget).abs() <= 1e-8 * budget.max(1.0));
        // independent bisection on the multiplier
        let total = |mu: f64| -> f64 {
            streams.iter().map(|&(w, g)| (w / mu - 1.0 / g).max(0.0)).sum()
        };
        let (mut lo, mut hi) = (1e-12f64, 1e12f64);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if total(mid) > budget { lo = mid } else { hi = mid }
        }
        let mu = (lo * hi).sqrt();
        for (i, &(w, g)) in streams.iter().enumerate() {
            let want = (w / mu - 1.0 / g).max(0.0);
            prop_assert!((sol.allocations[i] - want).abs() <= 1e-6 * budget.max(1.0));
        }
    }
}
