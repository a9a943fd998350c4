//! Hashed sparse feature templates.

use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use super::Capacity;
use crate::corpus::Utterance;

/// Width of the hashed feature space, in bits.
pub const DEFAULT_HASH_BITS: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureId(pub u32);

/// Sorted, de-duplicated ids of the binary features active at one token.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureVector(Vec<FeatureId>);

impl FeatureVector {
    pub fn ids(&self) -> &[FeatureId] {
        &self.0
    }

    pub fn contains(&self, id: FeatureId) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn hash_feature(name: &str, hash_bits: u32) -> FeatureId {
    let mut h = FnvHasher::default();
    h.write(name.as_bytes());
    let mask = if hash_bits >= 32 { u32::MAX } else { (1u32 << hash_bits) - 1 };
    FeatureId((h.finish() as u32) & mask)
}

/// Collapsed case/digit pattern: `Google` -> `Xx`, `A380` -> `Xd`.
pub fn word_shape(word: &str) -> String {
    let mut shape = String::new();
    for c in word.chars() {
        let s = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_ascii_digit() {
            'd'
        } else {
            c
        };
        if !shape.ends_with(s) {
            shape.push(s);
        }
    }
    shape
}

fn affix(word: &str, len: usize, prefix: bool) -> Option<String> {
    let chars: Vec<char> = word.chars().collect();
    if chars.len() < len {
        return None;
    }
    Some(if prefix { chars[..len].iter().collect() } else { chars[chars.len() - len..].iter().collect() })
}

/// Template instantiations for `words[position]`, in a fixed order.
pub fn feature_names<S: AsRef<str>>(words: &[S], position: usize, capacity: Capacity) -> Vec<String> {
    let word = words[position].as_ref();
    let lower = word.to_lowercase();
    let max_affix = match capacity {
        Capacity::Teacher => 3,
        Capacity::Student => 2,
    };
    let window: isize = match capacity {
        Capacity::Teacher => 2,
        Capacity::Student => 1,
    };

    let mut names = vec!["bias".to_string(), format!("word={word}"), format!("lower={lower}")];
    for len in 1..=max_affix {
        if let Some(p) = affix(&lower, len, true) {
            names.push(format!("prefix{len}={p}"));
        }
        if let Some(s) = affix(&lower, len, false) {
            names.push(format!("suffix{len}={s}"));
        }
    }
    names.push(format!("shape={}", word_shape(word)));
    if position == 0 {
        names.push("first".into());
    }
    if position + 1 == words.len() {
        names.push("last".into());
    }
    for offset in 1..=window {
        if let Some(prev) = position.checked_sub(offset as usize) {
            names.push(format!("prev_{offset}={}", words[prev].as_ref()));
        }
        if let Some(next) = words.get(position + offset as usize) {
            names.push(format!("next_{offset}={}", next.as_ref()));
        }
    }
    names
}

pub fn features_for_words<S: AsRef<str>>(words: &[S], position: usize, capacity: Capacity, hash_bits: u32) -> FeatureVector {
    let mut ids: Vec<FeatureId> =
        feature_names(words, position, capacity).iter().map(|n| hash_feature(n, hash_bits)).collect();
    ids.sort_unstable();
    ids.dedup();
    FeatureVector(ids)
}

pub fn extract_features(utterance: &Utterance, position: usize, capacity: Capacity) -> FeatureVector {
    let words: Vec<&str> = utterance.words().collect();
    features_for_words(&words, position, capacity, DEFAULT_HASH_BITS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_token_templates() {
        let names = feature_names(&["a"], 0, Capacity::Teacher);
        for expected in ["word=a", "lower=a", "shape=x", "first", "last"] {
            assert!(names.iter().any(|n| n == expected), "missing {expected} in {names:?}");
        }
    }

    #[test]
    fn boundary_neighbours() {
        let names = feature_names(&["Google", "crash"], 0, Capacity::Teacher);
        assert!(names.contains(&"next_1=crash".to_string()));
        assert!(!names.iter().any(|n| n.starts_with("prev_")));
        assert!(names.contains(&"shape=Xx".to_string()));
    }

    #[test]
    fn student_drops_wide_window_and_long_affixes() {
        let words = ["we", "called", "Microsoft", "support", "today"];
        let teacher = feature_names(&words, 2, Capacity::Teacher);
        let student = feature_names(&words, 2, Capacity::Student);
        assert!(teacher.contains(&"prev_2=we".to_string()));
        assert!(teacher.contains(&"suffix3=oft".to_string()));
        assert!(!student.iter().any(|n| n.starts_with("prev_2") || n.starts_with("next_2")));
        assert!(!student.iter().any(|n| n.starts_with("prefix3") || n.starts_with("suffix3")));
        assert!(student.contains(&"next_1=support".to_string()));
        assert!(student.iter().all(|n| teacher.contains(n)));
    }

    #[test]
    fn shapes() {
        assert_eq!(word_shape("Google"), "Xx");
        assert_eq!(word_shape("iPhone"), "xXx");
        assert_eq!(word_shape("A380"), "Xd");
        assert_eq!(word_shape("um-hum"), "x-x");
    }

    #[test]
    fn hashing_stays_in_range() {
        for name in ["bias", "word=zoom", "next_2=crash"] {
            assert!(hash_feature(name, 20).0 < (1 << 20));
        }
    }

    proptest! {
        #[test]
        fn extraction_is_deterministic(words in prop::collection::vec("[A-Za-z0-9]{1,8}", 1..8), pos in 0usize..8) {
            let pos = pos % words.len();
            for cap in [Capacity::Teacher, Capacity::Student] {
                let a = features_for_words(&words, pos, cap, DEFAULT_HASH_BITS);
                let b = features_for_words(&words.clone(), pos, cap, DEFAULT_HASH_BITS);
                prop_assert_eq!(a, b);
            }
        }
    }
}
