use fedft_core::federation::{aggregation_weights, fedavg, ClientUpdate};
use fedft_core::nn::{init_params, Architecture, ModelParams, TrainScope};
use proptest::prelude::*;

fn arch() -> Architecture {
    Architecture::new(8, &[2, 3], 3, 2, &[4, 3]).unwrap()
}

fn update(global: &ModelParams, id: u32, n: u64, values: &[f32]) -> ClientUpdate {
    let a = arch();
    let mut it = values.iter().cycle();
    let tensors = a
        .trainable_tensors(TrainScope::FcTail(2))
        .into_iter()
        .map(|i| {
            let mut t = global.tensors[i].clone();
            t.data.iter_mut().for_each(|v| *v = *it.next().unwrap());
            t
        })
        .collect();
    ClientUpdate {
        client_id: id,
        round: 1,
        tensors,
        num_samples: n,
        local_loss: 0.0,
        local_time_ms: 0,
    }
}

fn clients() -> impl Strategy<Value = Vec<(u64, Vec<f32>)>> {
    proptest::collection::vec(
        (1u64..100_000, proptest::collection::vec(-1e4f32..1e4, 1..40)),
        1..8,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn one_client_is_identity(n in 1u64..u32::MAX as u64, values in proptest::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 1..40), seed in any::<u64>()) {
        let g = init_params(&arch(), seed);
        let u = update(&g, 0, n, &values);
        let out = fedavg(&g, std::slice::from_ref(&u)).unwrap();
        for t in &u.tensors {
            prop_assert!(t.bit_eq(out.get(&t.name).unwrap()));
        }
    }

    #[test]
    fn result_lies_in_convex_hull(cs in clients(), seed in any::<u64>()) {
        let g = init_params(&arch(), seed);
        let ups: Vec<ClientUpdate> = cs.iter().enumerate().map(|(i, (n, v))| update(&g, i as u32, *n, v)).collect();
        let out = fedavg(&g, &ups).unwrap();
        let trainable = arch().trainable_tensors(TrainScope::FcTail(2));
        for (ti, &gi) in trainable.iter().enumerate() {
            for (e, &v) in out.tensors[gi].data.iter().enumerate() {
                let vals = ups.iter().map(|u| u.tensors[ti].data[e]);
                let lo = vals.clone().fold(f32::INFINITY, f32::min);
                let hi = vals.fold(f32::NEG_INFINITY, f32::max);
                prop_assert!(lo <= v && v <= hi, "{} not in [{}, {}]", v, lo, hi);
            }
        }
        for (i, t) in g.tensors.iter().enumerate() {
            if !trainable.contains(&i) {
                prop_assert!(t.bit_eq(&out.tensors[i]));
            }
        }
    }

    #[test]
    fn weights_are_normalized(ns in proptest::collection::vec(1u64..1_000_000, 1..16)) {
        let g = init_params(&arch(), 0);
        let ups: Vec<ClientUpdate> = ns.iter().enumerate().map(|(i, &n)| update(&g, i as u32, n, &[0.0])).collect();
        let w = aggregation_weights(&ups).unwrap();
        let total: u64 = ns.iter().sum();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (wi, &n) in w.iter().zip(&ns) {
            prop_assert!(*wi > 0.0);
            prop_assert!((wi - n as f64 / total as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn one_to_three_mean_is_three(m in 1u64..1_000_000, seed in any::<u64>()) {
        let g = init_params(&arch(), seed);
        let out = fedavg(&g, &[update(&g, 0, m, &[0.0]), update(&g, 1, 3 * m, &[4.0])]).unwrap();
        for &i in &arch().trainable_tensors(TrainScope::FcTail(2)) {
            prop_assert!(out.tensors[i].data.iter().all(|&v| v == 3.0));
        }
    }

    #[test]
    fn client_order_does_not_matter(cs in clients()) {
        let g = init_params(&arch(), 1);
        let ups: Vec<ClientUpdate> = cs.iter().enumerate().map(|(i, (n, v))| update(&g, i as u32, *n, v)).collect();
        let mut rev = ups.clone();
        rev.reverse();
        let (a, b) = (fedavg(&g, &ups).unwrap(), fedavg(&g, &rev).unwrap());
        for (x, y) in a.tensors.iter().zip(&b.tensors) {
            for (p, q) in x.data.iter().zip(&y.data) {
                prop_assert!((p - q).abs() <= 1e-6 * p.abs().max(1.0));
            }
        }
    }
}

#[test]
fn malformed_updates_are_rejected() {
    let g = init_params(&arch(), 0);
    assert!(fedavg(&g, &[]).is_err());
    assert!(fedavg(&g, &[update(&g, 0, 0, &[1.0])]).is_err());
    let mut late = update(&g, 1, 5, &[1.0]);
    late.round = 2;
    assert!(fedavg(&g, &[update(&g, 0, 5, &[1.0]), late]).is_err());
    let mut short = update(&g, 1, 5, &[1.0]);
    short.tensors.pop();
    assert!(fedavg(&g, &[update(&g, 0, 5, &[1.0]), short]).is_err());
}
