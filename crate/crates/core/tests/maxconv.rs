use fastrings::maxconv::*;
use fastrings::norm_projection::{build_p_schedule, relative_error_bound, EstimatorConfig, Projection};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// FFT round-off on norm powers just above `tau`. Relative noise there is about
/// `eps * |x^p| * |y^p| / tau`, which matters only on one- and two-element
/// diagonals where the raw bound is (nearly) zero.
const ROUNDOFF: f64 = 1e-3;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

#[test]
fn fft_matches_naive_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [1usize, 2, 33, 100, 257, 1000] {
        let x = random_vec(&mut rng, n);
        let y = random_vec(&mut rng, n + 3);
        let a = naive_convolution(&x, &y);
        let b = fft_convolution(&x, &y);
        assert_eq!(a.len(), b.len());
        let worst = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-10, "n={n}: {worst}");
    }
}

#[test]
fn fast_max_convolution_respects_raw_bound_per_index() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let schedule = build_p_schedule(512, 2).unwrap();
    let mut rel_errors = Vec::new();
    for _ in 0..10 {
        let x = NonNegVector::new(random_vec(&mut rng, 256)).unwrap();
        let y = NonNegVector::new(random_vec(&mut rng, 256)).unwrap();
        let exact = naive_max_convolution(&x, &y);
        let approx = fast_max_convolution_detailed(&x, &y, &schedule, &EstimatorConfig::default()).unwrap();
        for (m, est) in approx.estimates.iter().enumerate() {
            let p = est.exponent.expect("random inputs never fully underflow");
            let rel = (est.value - exact[m]).abs() / exact[m];
            let bound = relative_error_bound(diagonal_len(m, 256, 256), p, false);
            assert!(rel <= bound + ROUNDOFF, "m={m} p={p} rel={rel} bound={bound}");
            rel_errors.push(rel);
        }
    }
    rel_errors.sort_by(f64::total_cmp);
    let median = rel_errors[rel_errors.len() / 2];
    assert!(median < 0.01, "median {median}");
}

#[test]
fn raw_estimates_bracket_from_above() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let schedule = build_p_schedule(256, 1).unwrap();
    let config = EstimatorConfig {
        projection: Projection::Raw,
        ..Default::default()
    };
    let x = NonNegVector::new(random_vec(&mut rng, 64)).unwrap();
    let y = NonNegVector::new(random_vec(&mut rng, 50)).unwrap();
    let exact = naive_max_convolution(&x, &y);
    let approx = fast_max_convolution(&x, &y, &schedule, &config).unwrap();
    for (a, e) in approx.iter().zip(exact.iter()) {
        assert!(*a >= e * (1.0 - ROUNDOFF), "{a} < {e}");
    }
}

#[test]
fn unequal_lengths() {
    let schedule = build_p_schedule(512, 2).unwrap();
    let x = NonNegVector::new(vec![0.1, 0.9, 0.4]).unwrap();
    let y = NonNegVector::new(vec![0.5, 0.2, 0.8, 0.3, 0.6]).unwrap();
    let exact = naive_max_convolution(&x, &y);
    let approx = fast_max_convolution_detailed(&x, &y, &schedule, &EstimatorConfig::default()).unwrap();
    assert_eq!(approx.values.len(), 7);
    for (m, est) in approx.estimates.iter().enumerate() {
        let rel = (est.value - exact[m]).abs() / exact[m];
        let bound = relative_error_bound(diagonal_len(m, 3, 5), est.exponent.unwrap(), false);
        assert!(rel <= bound + ROUNDOFF, "m={m}: {} vs {}", est.value, exact[m]);
        assert!(rel < 0.02, "m={m}: {} vs {}", est.value, exact[m]);
    }
}

// Entries are 0 or well away from it; a norm power sitting exactly on `tau` may
// legitimately flip stability under a rescale that is not a power of two.
fn arb_entry() -> impl Strategy<Value = f64> {
    prop_oneof![1 => Just(0.0), 4 => 1e-3f64..1.0]
}

fn arb_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..40, 1usize..40).prop_flat_map(|(nx, ny)| {
        (
            prop::collection::vec(arb_entry(), nx),
            prop::collection::vec(arb_entry(), ny),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn commutative_bit_for_bit((x, y) in arb_pair()) {
        let schedule = build_p_schedule(512, 2).unwrap();
        let config = EstimatorConfig::default();
        let x = NonNegVector::new(x).unwrap();
        let y = NonNegVector::new(y).unwrap();
        let a = fast_max_convolution(&x, &y, &schedule, &config).unwrap();
        let b = fast_max_convolution(&y, &x, &schedule, &config).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn power_of_two_scaling_is_exact((x, y) in arb_pair(), k in -20i32..20) {
        let c = 2f64.powi(k);
        let schedule = build_p_schedule(512, 2).unwrap();
        let config = EstimatorConfig::default();
        let scaled = NonNegVector::new(x.iter().map(|v| v * c).collect()).unwrap();
        let x = NonNegVector::new(x).unwrap();
        let y = NonNegVector::new(y).unwrap();
        let a = fast_max_convolution(&x, &y, &schedule, &config).unwrap();
        let b = fast_max_convolution(&scaled, &y, &schedule, &config).unwrap();
        for (u, w) in a.iter().zip(b.iter()) {
            prop_assert!((u * c - w).abs() <= 1e-9 * w.abs(), "{} vs {}", u * c, w);
        }
    }

    #[test]
    fn scaling_one_input_scales_output((x, y) in arb_pair(), c in 0.01f64..100.0) {
        let schedule = build_p_schedule(512, 2).unwrap();
        let config = EstimatorConfig::default();
        let scaled = NonNegVector::new(x.iter().map(|v| v * c).collect()).unwrap();
        let x = NonNegVector::new(x).unwrap();
        let y = NonNegVector::new(y).unwrap();
        let a = fast_max_convolution(&x, &y, &schedule, &config).unwrap();
        let b = fast_max_convolution(&scaled, &y, &schedule, &config).unwrap();
        for (u, w) in a.iter().zip(b.iter()) {
            prop_assert!((u * c - w).abs() <= ROUNDOFF * w.abs(), "{} vs {}", u * c, w);
        }
    }
}
