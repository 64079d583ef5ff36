//! Property tests for the contract invariants that hold on arbitrary
//! inputs, not just the synthetic corpus.

use std::collections::HashSet;

use proptest::prelude::*;

use teq::alert::{group_incidents, RawAlert, INCIDENT_WINDOW_SECS};
use teq::ensemble::{ensemble_score, incident_score, EnsembleStrategy, ALL_STRATEGIES};
use teq::featurize::{fit_feature_spec, flatten_document, transform_record};
use teq::metrics::roc_auc;

fn arb_alert_stream() -> impl Strategy<Value = Vec<RawAlert>> {
    // (time gap, machine id) pairs turned into a nondecreasing stream.
    prop::collection::vec((0i64..40_000, 0u8..6), 1..120).prop_map(|steps| {
        let mut t = 0i64;
        steps
            .into_iter()
            .enumerate()
            .map(|(i, (gap, machine))| {
                t += gap;
                RawAlert {
                    alert_id: format!("a{i}"),
                    event_time: t,
                    customer_id: "c0".into(),
                    machine_id: format!("m{machine}"),
                    sensor_id: "s0".into(),
                    severity: 1.0,
                    body: serde_json::Value::Null,
                }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grouping_partitions_the_stream_with_bounded_span(alerts in arb_alert_stream()) {
        let incidents = group_incidents(&alerts);
        let mut seen: HashSet<&str> = HashSet::new();
        for inc in &incidents {
            prop_assert!(!inc.alert_ids.is_empty());
            for id in &inc.alert_ids {
                prop_assert!(seen.insert(id), "alert {id} in two incidents");
            }
            let times: Vec<i64> = inc
                .alert_ids
                .iter()
                .map(|id| alerts.iter().find(|a| &a.alert_id == id).unwrap().event_time)
                .collect();
            prop_assert!(times.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(times[0], inc.anchor_time);
            prop_assert!(times.last().unwrap() - inc.anchor_time <= INCIDENT_WINDOW_SECS);
        }
        prop_assert_eq!(seen.len(), alerts.len());
    }

    #[test]
    fn incident_score_dominates_members(scores in prop::collection::vec(0.0f64..=1.0, 1..200)) {
        let max = incident_score(&scores).unwrap();
        for &s in &scores {
            prop_assert!(max >= s);
        }
        prop_assert!(scores.contains(&max));
        let mut rotated = scores.clone();
        rotated.rotate_left(scores.len() / 2);
        prop_assert_eq!(incident_score(&rotated).unwrap(), max);
    }

    #[test]
    fn ensemble_strategies_are_monotone_and_bounded(
        a in 0.0f64..=1.0,
        b in 0.0f64..=1.0,
        bump in 0.0f64..=1.0,
    ) {
        for strategy in ALL_STRATEGIES {
            let base = ensemble_score(a, b, strategy).unwrap();
            prop_assert!((0.0..=1.0).contains(&base));
            let lifted = ensemble_score((a + bump).min(1.0), b, strategy).unwrap();
            prop_assert!(lifted >= base - 1e-12);
        }
        // Equal inputs are a fixed point of every strategy.
        for strategy in [EnsembleStrategy::Average, EnsembleStrategy::Max] {
            prop_assert!((ensemble_score(a, a, strategy).unwrap() - a).abs() < 1e-12);
        }
    }

    #[test]
    fn one_hot_blocks_stay_valid_on_arbitrary_bodies(
        names in prop::collection::vec("[a-c]{1,2}", 1..20),
        probe in prop::collection::vec(("[a-e]{1,3}", "[a-z0-9]{0,4}"), 0..12),
    ) {
        let corpus: Vec<_> = names
            .iter()
            .map(|n| {
                flatten_document(&serde_json::json!({ "k": { "v": n } })).unwrap()
            })
            .collect();
        let spec = fit_feature_spec(&corpus, 1).unwrap();
        let width = spec.width();
        let doc: serde_json::Map<String, serde_json::Value> = probe
            .into_iter()
            .map(|(k, v)| (k, serde_json::Value::String(v)))
            .collect();
        let record = flatten_document(&serde_json::Value::Object(doc)).unwrap();
        let v: Vec<f64> = transform_record(&record, &spec);
        prop_assert_eq!(v.len(), width);
        let mut offset = spec.numeric.len();
        for col in &spec.categorical {
            let block = &v[offset..offset + col.vocab.len() + 2];
            prop_assert_eq!(block.iter().filter(|&&x| x == 1.0).count(), 1);
            offset += block.len();
        }
    }

    #[test]
    fn roc_auc_is_invariant_under_monotone_transforms(
        raw in prop::collection::vec((0.0f64..1.0, prop::bool::ANY), 4..200),
    ) {
        let scores: Vec<f64> = raw.iter().map(|(s, _)| *s).collect();
        let mut labels: Vec<bool> = raw.iter().map(|(_, l)| *l).collect();
        labels[0] = true;
        labels[1] = false;
        let base = roc_auc(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp()).collect();
        prop_assert!((roc_auc(&squashed, &labels).unwrap() - base).abs() < 1e-12);
    }
}
