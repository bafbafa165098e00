use fedft_core::data::{FeatureMatrix, LabelVector};
use fedft_core::nn::{
    deserialize_params, grad_check, init_params, serialize_params, train, Architecture, Dataset,
    FineTuneConfig, TrainScope,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small() -> Architecture {
    Architecture::default_for(8).unwrap()
}

#[test]
fn gradients_match_finite_differences() {
    let arch = small();
    for scope in [TrainScope::FcTail(1), TrainScope::FcTail(3), TrainScope::Full] {
        for batch in [1, 4] {
            let r = grad_check(&arch, 7, batch, 1e-3, scope);
            assert!(r.checked > 0);
            assert!(r.max_rel_error < 1e-4, "{scope:?} batch {batch}: {r:?}");
        }
    }
}

#[test]
fn full_check_covers_every_parameter() {
    let arch = small();
    let total: usize = init_params(&arch, 1).param_count();
    let r = grad_check(&arch, 3, 2, 1e-3, TrainScope::Full);
    assert_eq!(r.checked + r.skipped_at_kinks, total);
}

fn toy_data(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as u8;
        for _ in 0..d {
            x.push(rng.random_range(-1.0..1.0) + 1.5 * f64::from(label));
        }
        y.push(label);
    }
    Dataset::new(&FeatureMatrix::from_vec(n, d, x).unwrap(), &LabelVector::new(y)).unwrap()
}

#[test]
fn tail_training_never_touches_frozen_tensors() {
    let arch = small();
    let data = toy_data(64, 8, 2);
    for k in 1..=3 {
        let cfg = FineTuneConfig {
            scope: TrainScope::FcTail(k),
            ..FineTuneConfig::default()
        };
        let before = init_params(&arch, 4);
        let mut after = before.clone();
        train(&mut after, &arch, &data, &cfg, 3, 5).unwrap();
        let trainable = arch.trainable_tensors(cfg.scope);
        for (i, (a, b)) in before.tensors.iter().zip(&after.tensors).enumerate() {
            assert_eq!(a.bit_eq(b), !trainable.contains(&i), "k={k} {}", a.name);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn params_roundtrip_byte_stable(seed in any::<u64>(), dim in 8usize..40) {
        let arch = Architecture::default_for(dim).unwrap();
        let p = init_params(&arch, seed);
        let bytes = serialize_params(&p);
        let back = deserialize_params(&bytes, &arch).unwrap();
        prop_assert!(back.bit_eq(&p));
        prop_assert_eq!(serialize_params(&back), bytes);
    }
}
