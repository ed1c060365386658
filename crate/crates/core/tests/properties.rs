//! Property tests for metric, aggregation, buffer and serialization invariants.

use fedledger::cl::{replay_update_buffer, ReplayBuffer};
use fedledger::config::parse_config_str;
use fedledger::data::{AnomalyLabel, EncodedBatch, SegmentLayout};
use fedledger::eval::average_precision;
use fedledger::fl::{fedavg_aggregate, ClientUpdate};
use fedledger::nn::{LayerShape, ParamVector};
use fedledger::rng;
use ndarray::Array2;
use proptest::prelude::*;

fn scored_pool() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (1usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec((0u32..40).prop_map(f64::from), n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

fn params(values: Vec<f64>) -> ParamVector {
    let n = values.len();
    ParamVector {
        values,
        shapes: vec![LayerShape { fan_in: 0, fan_out: n }],
    }
}

proptest! {
    #[test]
    fn ap_ignores_monotone_rescaling((scores, labels) in scored_pool()) {
        // integer scores keep both maps exact, so ties survive unchanged
        let affine: Vec<f64> = scores.iter().map(|s| 3.0 * s + 7.0).collect();
        let cubed: Vec<f64> = scores.iter().map(|s| s * s * s).collect();
        let base = average_precision(&scores, &labels);
        prop_assert_eq!(base, average_precision(&affine, &labels));
        prop_assert_eq!(base, average_precision(&cubed, &labels));
    }

    #[test]
    fn ap_is_bounded_and_one_for_a_perfect_ranking((scores, labels) in scored_pool()) {
        match average_precision(&scores, &labels) {
            None => prop_assert!(labels.iter().all(|l| !l)),
            Some(ap) => {
                prop_assert!(ap > 0.0 && ap <= 1.0 + 1e-12);
                let perfect: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
                prop_assert!((average_precision(&perfect, &labels).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fedavg_stays_inside_the_client_hull(
        clients in prop::collection::vec((prop::collection::vec(-10.0f64..10.0, 4), 1usize..500), 1..6)
    ) {
        let updates: Vec<ClientUpdate> = clients
            .iter()
            .enumerate()
            .map(|(c, (v, n))| ClientUpdate { client: c, params: params(v.clone()), samples: *n, control_delta: None })
            .collect();
        let avg = fedavg_aggregate(&updates).unwrap();
        for i in 0..4 {
            let lo = clients.iter().map(|c| c.0[i]).fold(f64::INFINITY, f64::min);
            let hi = clients.iter().map(|c| c.0[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(avg.values[i] >= lo - 1e-12 && avg.values[i] <= hi + 1e-12);
        }
    }

    #[test]
    fn checkpoint_bytes_round_trip(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..64)) {
        let p = params(values);
        let back = ParamVector::from_bytes(&p.to_bytes()).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn canonical_config_round_trips(t in 1usize..40, r in 1usize..8, seeds in prop::collection::btree_set(0u64..1000, 1..5), mu in 0.0f64..5.0) {
        let seeds: Vec<u64> = seeds.into_iter().collect();
        let cfg = parse_config_str(&format!(r#"{{"T": {t}, "R": {r}, "mu": {mu}, "seeds": {seeds:?}}}"#), &[]).unwrap();
        let again = parse_config_str(&cfg.canonical_json(), &[]).unwrap();
        prop_assert_eq!(again.run_id(), cfg.run_id());
        prop_assert_eq!(again, cfg);
    }

    #[test]
    fn replay_buffer_respects_department_quotas(
        capacity in 0usize..60,
        experiences in prop::collection::vec(prop::collection::vec(0usize..6, 1..80), 1..5),
        seed in any::<u64>(),
    ) {
        let layout = SegmentLayout { categorical: vec![], numeric_offset: 0, numeric_count: 2 };
        let mut buffer = ReplayBuffer::new(capacity, 2);
        for (t, depts) in experiences.iter().enumerate() {
            let n = depts.len();
            let batch = EncodedBatch {
                rows: Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64),
                layout: layout.clone(),
                departments: depts.iter().map(|d| format!("D{d}")).collect(),
                labels: vec![AnomalyLabel::None; n],
                entry_ids: (0..n).collect(),
            };
            replay_update_buffer(&mut buffer, &batch, false, &mut rng::stream(seed, "replay", &[t as u64]));
            prop_assert!(buffer.len() <= capacity);
            let quotas = buffer.quotas();
            for (d, q) in buffer.departments.iter().zip(&quotas) {
                prop_assert!(buffer.count(d) <= *q, "{} holds {} > {}", d, buffer.count(d), q);
            }
        }
    }
}

#[test]
fn random_scores_give_ap_near_prevalence() {
    use rand::{Rng, SeedableRng};
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(12);
    let n = 20_000;
    let labels: Vec<bool> = (0..n).map(|_| r.gen_bool(0.1)).collect();
    let scores: Vec<f64> = (0..n).map(|_| r.gen()).collect();
    let prevalence = labels.iter().filter(|&&l| l).count() as f64 / n as f64;
    let ap = average_precision(&scores, &labels).unwrap();
    assert!((ap - prevalence).abs() < 0.02, "ap {ap} prevalence {prevalence}");
}
