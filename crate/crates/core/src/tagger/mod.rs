//! Linear-chain CRF tagger: feature extraction, training, Viterbi decoding
//! and forward-backward token marginals.
//!
//! Two capacities share one implementation and differ only in their feature
//! templates. The teacher sees a ±2 word window and affixes up to length 3;
//! the student sees ±1 and affixes up to length 2.

pub mod features;
pub mod inference;
mod io;
pub mod objective;
mod train;

use std::fmt;
use std::str::FromStr;

use fnv::FnvHashMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rayon::prelude::*;

use crate::corpus::{Corpus, TagSet, Utterance};
pub use features::{extract_features, FeatureId, FeatureVector, DEFAULT_HASH_BITS};
use inference::{ForwardBackward, Potentials};
pub use io::ModelFormatError;
pub use objective::{Instance, Params};
pub use train::{train, train_from, train_with_report, TrainError, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capacity {
    Teacher,
    Student,
}

impl fmt::Display for Capacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Capacity::Teacher => "teacher",
            Capacity::Student => "student",
        })
    }
}

impl FromStr for Capacity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "teacher" => Ok(Capacity::Teacher),
            "student" => Ok(Capacity::Student),
            other => Err(format!("unknown capacity `{other}` (expected teacher or student)")),
        }
    }
}

/// Optimizer settings. Defaults: 5 epochs, batches of 64, sequences cut at
/// 200 tokens, AdaGrad step 0.1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub max_sequence_length: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 5, batch_size: 64, learning_rate: 0.1, l2: 1e-4, max_sequence_length: 200, seed: 0 }
    }
}

impl TrainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Trained CRF parameters with the feature dictionary that indexes them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    tag_set: TagSet,
    capacity: Capacity,
    hash_bits: u32,
    rows: FnvHashMap<FeatureId, usize>,
    row_ids: Vec<FeatureId>,
    params: Params,
}

/// `-inf` wherever BIO forbids `to` after `from`, else 0.
pub fn transition_mask(tag_set: &TagSet) -> Vec<f64> {
    let l = tag_set.num_labels();
    let mut m = vec![0.0; l * l];
    for from in 0..l {
        for to in 0..l {
            if !tag_set.allowed_transition(Some(from), to) {
                m[from * l + to] = f64::NEG_INFINITY;
            }
        }
    }
    m
}

/// `-inf` for labels that cannot open a sequence (`I-X`), else 0.
pub fn start_mask(tag_set: &TagSet) -> Vec<f64> {
    (0..tag_set.num_labels())
        .map(|y| if tag_set.allowed_transition(None, y) { 0.0 } else { f64::NEG_INFINITY })
        .collect()
}

impl ModelWeights {
    /// All-zero model (forbidden transitions excepted).
    pub fn new(tag_set: TagSet, capacity: Capacity) -> Self {
        let l = tag_set.num_labels();
        let params = Params { num_labels: l, emission: Vec::new(), transition: transition_mask(&tag_set) };
        ModelWeights { tag_set, capacity, hash_bits: DEFAULT_HASH_BITS, rows: FnvHashMap::default(), row_ids: Vec::new(), params }
    }

    pub fn tag_set(&self) -> &TagSet {
        &self.tag_set
    }

    pub fn capacity(&self) -> Capacity {
        self.capacity
    }

    pub fn hash_bits(&self) -> u32 {
        self.hash_bits
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn num_features(&self) -> usize {
        self.row_ids.len()
    }

    pub fn has_feature(&self, id: FeatureId) -> bool {
        self.rows.contains_key(&id)
    }

    pub fn feature_ids(&self) -> &[FeatureId] {
        &self.row_ids
    }

    pub(crate) fn row_or_insert(&mut self, id: FeatureId) -> usize {
        if let Some(&r) = self.rows.get(&id) {
            return r;
        }
        let r = self.row_ids.len();
        self.rows.insert(id, r);
        self.row_ids.push(id);
        self.params.emission.extend(std::iter::repeat_n(0.0, self.params.num_labels));
        r
    }

    pub(crate) fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn emission_weight(&self, id: FeatureId, label: usize) -> f64 {
        self.rows.get(&id).map_or(0.0, |&r| self.params.emission[r * self.params.num_labels + label])
    }

    pub fn set_emission_weight(&mut self, id: FeatureId, label: usize, w: f64) {
        let r = self.row_or_insert(id);
        let l = self.params.num_labels;
        self.params.emission[r * l + label] = w;
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.params.transition[from * self.params.num_labels + to]
    }

    /// Sets an allowed transition weight; forbidden entries stay `-inf`.
    pub fn set_transition(&mut self, from: usize, to: usize, w: f64) {
        let l = self.params.num_labels;
        if self.params.transition[from * l + to] != f64::NEG_INFINITY {
            self.params.transition[from * l + to] = w;
        }
    }

    /// Known feature rows per position; unseen features are dropped.
    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Vec<Vec<usize>> {
        (0..words.len())
            .map(|t| {
                features::features_for_words(words, t, self.capacity, self.hash_bits)
                    .ids()
                    .iter()
                    .filter_map(|id| self.rows.get(id).copied())
                    .collect()
            })
            .collect()
    }

    pub fn potentials<S: AsRef<str>>(&self, words: &[S]) -> Potentials {
        self.params.potentials(&self.encode(words), &start_mask(&self.tag_set))
    }

    fn utterance_potentials(&self, utterance: &Utterance) -> Potentials {
        let words: Vec<&str> = utterance.words().collect();
        self.potentials(&words)
    }

    /// Best tag sequence and its unnormalized log-score.
    pub fn viterbi_decode(&self, utterance: &Utterance) -> (Vec<usize>, f64) {
        inference::viterbi(&self.utterance_potentials(utterance))
    }

    /// Copy of `corpus` with every utterance's tags replaced by the Viterbi path.
    pub fn predict(&self, corpus: &Corpus) -> Corpus {
        let utterances = corpus
            .utterances
            .par_iter()
            .map(|u| Utterance { gold_tags: self.viterbi_decode(u).0, ..u.clone() })
            .collect();
        Corpus { tag_set: corpus.tag_set.clone(), utterances, split: corpus.split }
    }

    /// `n x |labels|` probabilities; each row sums to one.
    pub fn token_marginals(&self, utterance: &Utterance) -> Vec<Vec<f64>> {
        inference::marginals(&self.utterance_potentials(utterance))
    }

    /// Natural log of [`Self::token_marginals`]; `-inf` on unreachable cells.
    pub fn token_log_scores(&self, utterance: &Utterance) -> Vec<Vec<f64>> {
        ForwardBackward::compute(&self.utterance_potentials(utterance)).log_marginals()
    }

    /// `log p(gold | words)`; `-inf` when the gold path is not BIO-valid.
    pub fn log_likelihood(&self, utterance: &Utterance) -> f64 {
        let p = self.utterance_potentials(utterance);
        p.path_score(&utterance.gold_tags) - ForwardBackward::compute(&p).log_z
    }

    /// Mean negative log-likelihood over a corpus.
    pub fn mean_nll(&self, corpus: &Corpus) -> f64 {
        if corpus.is_empty() {
            return 0.0;
        }
        -corpus.utterances.iter().map(|u| self.log_likelihood(u)).sum::<f64>() / corpus.len() as f64
    }

    /// SHA-256 of the serialized model, hex encoded.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Every trainable weight is finite; forbidden transitions are `-inf`.
    pub fn all_finite(&self) -> bool {
        self.params.emission.iter().all(|w| w.is_finite())
            && self.params.transition.iter().all(|w| w.is_finite() || *w == f64::NEG_INFINITY)
    }
}
