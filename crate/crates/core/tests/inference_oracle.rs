//! Forward-backward and Viterbi against exhaustive path enumeration.

use proptest::prelude::*;
use relabel_core::corpus::{TagSet, Utterance};
use relabel_core::tagger::inference::{marginals, viterbi, ForwardBackward, Potentials};
use relabel_core::tagger::{Capacity, ModelWeights};

fn all_paths(n: usize, l: usize) -> Vec<Vec<usize>> {
    (0..l.pow(n as u32))
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let y = code % l;
                    code /= l;
                    y
                })
                .collect()
        })
        .collect()
}

/// (marginals, best path, best score) by brute force.
fn enumerate(p: &Potentials) -> (Vec<Vec<f64>>, Vec<usize>, f64) {
    let (n, l) = (p.len(), p.num_labels());
    let scored: Vec<(Vec<usize>, f64)> = all_paths(n, l).into_iter().map(|path| {
        let s = p.path_score(&path);
        (path, s)
    }).collect();
    let max = scored.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scored.iter().map(|(_, s)| (s - max).exp()).sum();
    let mut marg = vec![vec![0.0; l]; n];
    for (path, s) in &scored {
        let w = (s - max).exp() / z;
        for (t, &y) in path.iter().enumerate() {
            marg[t][y] += w;
        }
    }
    let (best, score) = scored.iter().filter(|(_, s)| *s == max).min_by(|a, b| a.0.cmp(&b.0)).cloned().unwrap();
    (marg, best, score)
}

fn potentials() -> impl Strategy<Value = Potentials> {
    (1usize..=4, 1usize..=4).prop_flat_map(|(n, l)| {
        let weight = -3.0f64..3.0;
        (
            Just((n, l)),
            prop::collection::vec(weight.clone(), n * l),
            prop::collection::vec((weight.clone(), prop::bool::weighted(0.15)), l * l),
            prop::collection::vec((weight, prop::bool::weighted(0.15)), l),
        )
    })
    .prop_filter_map("label 0 stays reachable", |((_, l), em, tr, st)| {
        let mask = |(w, forbid): (f64, bool)| if forbid { f64::NEG_INFINITY } else { w };
        let mut tr: Vec<f64> = tr.into_iter().map(mask).collect();
        let mut st: Vec<f64> = st.into_iter().map(mask).collect();
        // keep at least the all-zero path feasible, like the O label
        tr[0] = tr[0].max(0.0);
        st[0] = st[0].max(0.0);
        Some(Potentials::new(l, em, tr, st))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn marginals_match_enumeration(p in potentials()) {
        let (oracle, best, score) = enumerate(&p);
        let got = marginals(&p);
        for (row, want) in got.iter().zip(&oracle) {
            for (a, b) in row.iter().zip(want) {
                prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
        let (path, s) = viterbi(&p);
        prop_assert!((s - score).abs() < 1e-9);
        prop_assert_eq!(p.path_score(&path), s);
        prop_assert_eq!(path, best);
    }

    #[test]
    fn log_z_is_log_sum_of_path_scores(p in potentials()) {
        let fb = ForwardBackward::compute(&p);
        let z: f64 = all_paths(p.len(), p.num_labels()).iter().map(|path| p.path_score(path).exp()).sum();
        prop_assert!((fb.log_z - z.ln()).abs() < 1e-9);
    }
}

#[test]
fn model_marginals_match_enumeration_under_bio_mask() {
    let ts = TagSet::new(["ORG"]).unwrap();
    let mut m = ModelWeights::new(ts, Capacity::Student);
    let words = ["acme", "corp", "called"];
    for (k, w) in words.iter().enumerate() {
        let id = relabel_core::tagger::features::hash_feature(&format!("word={w}"), m.hash_bits());
        for y in 0..3 {
            m.set_emission_weight(id, y, 0.3 * (k as f64 + 1.0) - 0.4 * y as f64);
        }
    }
    m.set_transition(1, 2, 1.1);
    let u = Utterance::new("x", words, vec![0; 3]).unwrap();
    let (oracle, best, _) = enumerate(&m.potentials(&words));
    let got = m.token_marginals(&u);
    for (row, want) in got.iter().zip(&oracle) {
        for (a, b) in row.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    assert_eq!(got[0][2], 0.0);
    assert_eq!(m.viterbi_decode(&u).0, best);
}
