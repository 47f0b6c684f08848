use nodule_core::augment::{add_noise, augment_set, rotate, AugmentConfig, NoiseKind};
use nodule_core::seed;
use nodule_core::tensor::ProjectionTensor;
use proptest::prelude::*;

fn arb_tensor() -> impl Strategy<Value = ProjectionTensor<f64>> {
    (2usize..12).prop_flat_map(|s| {
        prop::collection::vec(-100.0f64..100.0, 3 * s * s).prop_map(move |d| ProjectionTensor::new(s, d).unwrap())
    })
}

/// Quarter-turn index oracle: output (u, v) reads input (S-1-v, u).
fn quarter_turn(t: &ProjectionTensor<f64>) -> ProjectionTensor<f64> {
    let s = t.side();
    let mut data = Vec::with_capacity(t.data().len());
    for c in 0..3 {
        for v in 0..s {
            for u in 0..s {
                data.push(t.get(c, s - 1 - v, u));
            }
        }
    }
    ProjectionTensor::new(s, data).unwrap()
}

proptest! {
    #[test]
    fn right_angle_rotations_permute_pixels(t in arb_tensor(), k in -4i32..8) {
        let mut expected = t.clone();
        for _ in 0..k.rem_euclid(4) {
            expected = quarter_turn(&expected);
        }
        prop_assert_eq!(rotate(&t, 90.0 * k as f64), expected);
    }

    #[test]
    fn salt_pepper_is_local(t in arb_tensor(), frac in 0.0f64..0.5, s in any::<u64>()) {
        let cfg = AugmentConfig { sp_fraction: frac, ..AugmentConfig::default() };
        let out = add_noise(&t, NoiseKind::SaltPepper, &cfg, &mut seed::rng(s));
        let n = t.side() * t.side();
        let bound = (frac * n as f64).ceil() as usize;
        for c in 0..3 {
            let changed = t.channel(c).iter().zip(out.channel(c)).filter(|(a, b)| a != b).count();
            prop_assert!(changed <= bound, "channel {} changed {} > {}", c, changed, bound);
        }
    }

    #[test]
    fn augmentation_keeps_shape_and_is_deterministic(t in arb_tensor(), s in any::<u64>()) {
        let cfg = AugmentConfig { count: 6, seed: s, ..AugmentConfig::default() };
        let a = augment_set(&t, &cfg).unwrap();
        prop_assert_eq!(a.len(), 6);
        for x in &a {
            prop_assert_eq!(x.side(), t.side());
            prop_assert!(x.data().iter().all(|v| v.is_finite()));
        }
        prop_assert_eq!(a, augment_set(&t, &cfg).unwrap());
    }
}
