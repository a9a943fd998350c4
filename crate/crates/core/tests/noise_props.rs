use proptest::prelude::*;
use relabel_core::corpus::{is_valid_bio, TagSet};
use relabel_core::noise_lab::{compare_students, evaluate_detection, generate, inject_noise, ConfusionRule, NoiseSpec, SynthConfig};
use relabel_core::tagger::TrainConfig;
use relabel_core::Corpus;

fn synthetic(n: usize, seed: u64, prefix: &str) -> Corpus {
    let cfg = SynthConfig { num_utterances: n, seed, id_prefix: prefix.into(), ..Default::default() };
    generate(&cfg, &TagSet::business_default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn ledger_restores_the_clean_corpus(seed in any::<u64>(), rate in 0.05f64..0.9, drop in 0.0f64..0.5) {
        let clean = synthetic(200, seed % 7, "c");
        let spec = NoiseSpec { rate, drop_prob: drop, seed, ..Default::default() };
        let (noisy, ledger) = inject_noise(&clean, &spec).unwrap();
        let eligible = clean
            .utterances
            .iter()
            .filter(|u| relabel_core::corpus::extract_spans(&u.gold_tags, &clean.tag_set).iter().any(|s| s.entity_type == "ORG" || s.entity_type == "PROD"))
            .count();
        prop_assert_eq!(ledger.len(), (rate * eligible as f64).round() as usize);
        for u in &noisy.utterances {
            prop_assert!(is_valid_bio(&u.gold_tags, &noisy.tag_set));
            let orig = clean.get(&u.id).unwrap();
            prop_assert_eq!(ledger.contains(&u.id), u.gold_tags != orig.gold_tags);
        }
        for e in ledger.records() {
            let changed = e.original_tags.iter().zip(&e.corrupted_tags).filter(|(a, b)| a != b).count();
            prop_assert!(changed >= 1);
        }
        prop_assert_eq!(ledger.restore(&noisy), clean);
    }

    #[test]
    fn detection_ignores_input_order(seed in any::<u64>(), picks in prop::collection::vec(0usize..200, 0..60)) {
        let clean = synthetic(200, 2, "c");
        let (_, ledger) = inject_noise(&clean, &NoiseSpec { seed, ..Default::default() }).unwrap();
        let ids: Vec<String> = picks.iter().map(|&i| clean.utterances[i].id.clone()).collect();
        let mut rev = ids.clone();
        rev.reverse();
        let a = evaluate_detection(ids.iter().map(String::as_str), &ledger, 200);
        let b = evaluate_detection(rev.iter().map(String::as_str), &ledger, 200);
        prop_assert_eq!(a, b);
        let shuffled = relabel_core::noise_lab::CorruptionLedger::from_records(ledger.records().cloned().collect::<Vec<_>>().into_iter().rev());
        prop_assert_eq!(evaluate_detection(ids.iter().map(String::as_str), &shuffled, 200), a);
    }
}

#[test]
fn only_org_to_prod_rule_retypes_org() {
    let clean = synthetic(300, 1, "c");
    let spec = NoiseSpec { rate: 0.3, confusion: vec![ConfusionRule::new("ORG", "PROD")], seed: 3, ..Default::default() };
    let (_, ledger) = inject_noise(&clean, &spec).unwrap();
    assert!(ledger.records().all(|e| e.rule_applied == "ORG->PROD"));
    for e in ledger.records() {
        for (a, b) in e.original_tags.iter().zip(&e.corrupted_tags) {
            if a != b {
                assert_eq!(a.replace("ORG", "PROD"), *b);
            }
        }
    }
}

#[test]
fn full_and_empty_restoration_bound_recovery() {
    let clean = synthetic(400, 8, "t");
    let eval = synthetic(300, 9, "e");
    let (noisy, ledger) = inject_noise(&clean, &NoiseSpec { rate: 0.3, seed: 1, ..Default::default() }).unwrap();
    let cfg = TrainConfig { epochs: 3, ..Default::default() };

    let full = ledger.restore_only(&noisy, ledger.ids());
    let r = compare_students(&clean, &noisy, &full, &cfg, &eval).unwrap();
    for t in r.values() {
        assert_eq!(t.f1_repaired, t.f1_clean);
        if let Some(x) = t.recovery_fraction {
            assert!((x - 1.0).abs() < 1e-12);
        }
    }

    let none = ledger.restore_only(&noisy, std::iter::empty());
    let r = compare_students(&clean, &noisy, &none, &cfg, &eval).unwrap();
    for t in r.values() {
        assert_eq!(t.f1_repaired, t.f1_corrupted);
        if let Some(x) = t.recovery_fraction {
            assert_eq!(x, 0.0);
        }
    }
}
