use proptest::prelude::*;
use starlk::mix::{build_star_mask, mix_batch, one_hot, MixParams, MixPath, Mixer};
use starlk::rng;
use starlk::Tensor;

fn batch(b: usize, side: usize, seed: u64) -> (Tensor<f64>, Tensor<f64>) {
    let x = Tensor::from_fn([b, 1, side, side], |i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 1000.0);
    let labels: Vec<usize> = (0..b).map(|i| (i + seed as usize) % 3).collect();
    (x, one_hot(&labels, 3).unwrap())
}

fn kahan_mean(v: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for &x in v {
        let y = x - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s / v.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn star_path_labels_use_the_emitted_mask_mean(lambda in 0.3f64..=0.7, b in 2usize..6, seed: u64) {
        let (x, y) = batch(b, 16, seed);
        let perm: Vec<usize> = (0..b).rev().collect();
        let mb = Mixer::new(MixParams::default()).unwrap().mix_with(&x, &y, lambda, perm.clone()).unwrap();
        prop_assert_eq!(mb.path, MixPath::Star);
        let mask = mb.mask.as_ref().unwrap();
        let lh = kahan_mean(&mask.g);
        prop_assert!((lh - mb.lambda_effective).abs() <= 1e-12);
        for (i, &j) in perm.iter().enumerate() {
            for k in 0..3 {
                let want = lh * y.data()[i * 3 + k] + (1.0 - lh) * y.data()[j * 3 + k];
                prop_assert!((mb.soft_labels.data()[i * 3 + k] - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn mask_entries_stay_in_range(lambda in 0.01f64..0.99, side in 2usize..40) {
        let m = build_star_mask(lambda, side, side).unwrap();
        prop_assert!(m.g.iter().all(|&v| v > lambda / 2.0 && v <= lambda * 0.73106));
        prop_assert!(m.lambda_hat < lambda);
    }

    #[test]
    fn exactly_one_path_per_ratio(lambda in 0.0f64..=1.0, lo in -0.5f64..1.5, width in 0.0f64..1.0) {
        let p = MixParams { alpha: 1.0, threshold_lo: lo, threshold_hi: lo + width };
        let path = p.select_path(lambda);
        let inside = lambda >= p.threshold_lo && lambda <= p.threshold_hi;
        prop_assert_eq!(path == MixPath::Star, inside);
        prop_assert_eq!(path, p.select_path(lambda));
    }

    #[test]
    fn pairing_is_a_bijection_and_mixing_is_seeded(b in 2usize..12, seed: u64) {
        let (x, y) = batch(b, 8, seed);
        let run = || mix_batch(&x, &y, &MixParams::default(), &mut rng::stream(seed, rng::TAG_MIX)).unwrap();
        let (m1, m2) = (run(), run());
        let mut sorted = m1.permutation.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..b).collect::<Vec<_>>());
        prop_assert_eq!(&m1, &m2);
        for row in m1.soft_labels.data().chunks(3) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        }
    }
}
