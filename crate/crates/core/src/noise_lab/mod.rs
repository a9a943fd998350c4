//! Controlled label corruption and ground-truth scoring of the flagging loop.

pub mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::active_loop::{run_active_loop, ActiveLoopError, LoopConfig};
use crate::corpus::{extract_spans, Corpus, TagSet};
use crate::metrics::{entity_f1, EvalReport, MetricsError, OVERALL};
use crate::tagger::{self, Capacity, TrainConfig, TrainError};

pub use synth::{generate, SynthConfig};

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("no utterance contains a span of a confusion-rule source type")]
    NoEligibleUtterances,
    #[error("rate {rate} over {eligible} eligible utterances corrupts nothing")]
    NothingToCorrupt { rate: f64, eligible: usize },
    #[error("invalid noise spec: {0}")]
    InvalidSpec(String),
    #[error("clean and corrupted {entity_type} F1 are {clean:.2} and {corrupted:.2}; the noise is too weak to measure recovery")]
    DegenerateExperiment { entity_type: String, clean: f64, corrupted: f64 },
    #[error("evaluation set shares utterance `{0}` with the training corpus")]
    OverlappingEvalSet(String),
    #[error(transparent)]
    Loop(#[from] ActiveLoopError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub type Result<T> = std::result::Result<T, NoiseError>;

/// Retype spans of `from` as `to`, chosen with relative `weight`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionRule {
    pub from: String,
    pub to: String,
    pub weight: f64,
}

impl ConfusionRule {
    pub fn new(from: &str, to: &str) -> Self {
        ConfusionRule { from: from.into(), to: to.into(), weight: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Fraction of eligible utterances to corrupt, in (0, 1).
    pub rate: f64,
    pub confusion: Vec<ConfusionRule>,
    /// Chance that a corrupted utterance loses one entity to `O` instead.
    pub drop_prob: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            rate: 0.1,
            confusion: vec![ConfusionRule::new("ORG", "PROD"), ConfusionRule::new("PROD", "ORG")],
            drop_prob: 0.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    fn validate(&self, tag_set: &TagSet) -> Result<()> {
        let bad = |m: String| Err(NoiseError::InvalidSpec(m));
        if !(self.rate > 0.0 && self.rate < 1.0) {
            return bad(format!("rate {} must be in (0, 1)", self.rate));
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return bad(format!("drop_prob {} must be in [0, 1]", self.drop_prob));
        }
        if self.confusion.is_empty() {
            return bad("at least one confusion rule is required".into());
        }
        for r in &self.confusion {
            for ty in [&r.from, &r.to] {
                if tag_set.type_index(ty).is_none() {
                    return bad(format!("entity type `{ty}` is not in the tag set"));
                }
            }
            if r.from == r.to || !(r.weight > 0.0 && r.weight.is_finite()) {
                return bad(format!("rule {}->{} needs distinct types and a positive weight", r.from, r.to));
            }
        }
        Ok(())
    }
}

/// One injected error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub utterance_id: String,
    pub original_tags: Vec<String>,
    pub corrupted_tags: Vec<String>,
    /// `FROM->TO` or `FROM->O`.
    pub rule_applied: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionLedger {
    pub entries: BTreeMap<String, LedgerEntry>,
}

impl CorruptionLedger {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Puts back the original tags of every ledger utterance listed in `ids`.
    pub fn restore_only<'a>(&self, corpus: &Corpus, ids: impl IntoIterator<Item = &'a str>) -> Corpus {
        let wanted: BTreeSet<&str> = ids.into_iter().filter(|id| self.contains(id)).collect();
        let mut out = corpus.clone();
        for u in &mut out.utterances {
            if wanted.contains(u.id.as_str()) {
                let entry = &self.entries[&u.id];
                u.gold_tags =
                    entry.original_tags.iter().map(|t| corpus.tag_set.label_index(t).expect("ledger labels")).collect();
            }
        }
        out
    }

    /// Undoes every corruption.
    pub fn restore(&self, corpus: &Corpus) -> Corpus {
        self.restore_only(corpus, self.entries.keys().map(String::as_str))
    }

    pub fn records(&self) -> impl Iterator<Item = &LedgerEntry> {
        self.entries.values()
    }

    pub fn from_records(records: impl IntoIterator<Item = LedgerEntry>) -> Self {
        CorruptionLedger { entries: records.into_iter().map(|e| (e.utterance_id.clone(), e)).collect() }
    }
}

fn names(tags: &[usize], ts: &TagSet) -> Vec<String> {
    tags.iter().map(|&t| ts.label_name(t).to_string()).collect()
}

/// Corrupts `round(rate * |eligible|)` utterances, one span each. An
/// utterance is eligible when it has a span whose type is some rule's source.
pub fn inject_noise(corpus: &Corpus, spec: &NoiseSpec) -> Result<(Corpus, CorruptionLedger)> {
    let ts = &corpus.tag_set;
    spec.validate(ts)?;
    let sources: BTreeSet<&str> = spec.confusion.iter().map(|r| r.from.as_str()).collect();
    let eligible: Vec<usize> = (0..corpus.len())
        .filter(|&i| extract_spans(&corpus.utterances[i].gold_tags, ts).iter().any(|s| sources.contains(s.entity_type.as_str())))
        .collect();
    if eligible.is_empty() {
        return Err(NoiseError::NoEligibleUtterances);
    }
    let count = (spec.rate * eligible.len() as f64).round() as usize;
    if count == 0 {
        return Err(NoiseError::NothingToCorrupt { rate: spec.rate, eligible: eligible.len() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut chosen: Vec<usize> = eligible.choose_multiple(&mut rng, count).copied().collect();
    chosen.sort_unstable();

    let mut out = corpus.clone();
    let mut ledger = CorruptionLedger::default();
    for i in chosen {
        let u = &mut out.utterances[i];
        let spans: Vec<_> =
            extract_spans(&u.gold_tags, ts).into_iter().filter(|s| sources.contains(s.entity_type.as_str())).collect();
        let span = &spans[rng.random_range(0..spans.len())];
        let original = u.gold_tags.clone();
        let rule_applied = if spec.drop_prob > 0.0 && rng.random_bool(spec.drop_prob) {
            u.gold_tags[span.start..span.end].fill(0);
            format!("{}->O", span.entity_type)
        } else {
            let rules: Vec<&ConfusionRule> = spec.confusion.iter().filter(|r| r.from == span.entity_type).collect();
            let pick = WeightedIndex::new(rules.iter().map(|r| r.weight)).expect("validated weights");
            let rule = rules[pick.sample(&mut rng)];
            let to = ts.type_index(&rule.to).expect("validated type");
            u.gold_tags[span.start] = ts.begin(to);
            u.gold_tags[span.start + 1..span.end].fill(ts.inside(to));
            format!("{}->{}", rule.from, rule.to)
        };
        ledger.entries.insert(
            u.id.clone(),
            LedgerEntry {
                utterance_id: u.id.clone(),
                original_tags: names(&original, ts),
                corrupted_tags: names(&u.gold_tags, ts),
                rule_applied,
            },
        );
    }
    Ok((out, ledger))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub precision: f64,
    pub recall: f64,
    /// Precision over the corruption base rate; 1.0 is chance level.
    pub lift: f64,
    pub flagged: usize,
    pub corrupted: usize,
    pub hits: usize,
}

pub fn evaluate_detection<'a>(
    flagged: impl IntoIterator<Item = &'a str>,
    ledger: &CorruptionLedger,
    train_size: usize,
) -> DetectionReport {
    let flagged: BTreeSet<&str> = flagged.into_iter().collect();
    let hits = flagged.iter().filter(|id| ledger.contains(id)).count();
    let corrupted = ledger.len();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(hits, flagged.len());
    let base_rate = ratio(corrupted, train_size);
    DetectionReport {
        precision,
        recall: ratio(hits, corrupted),
        lift: if base_rate > 0.0 { precision / base_rate } else { 0.0 },
        flagged: flagged.len(),
        corrupted,
        hits,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeRecovery {
    pub f1_clean: f64,
    pub f1_corrupted: f64,
    pub f1_repaired: f64,
    /// `None` when the noise did not lower this type's F1.
    pub recovery_fraction: Option<f64>,
}

impl TypeRecovery {
    fn new(clean: f64, corrupted: f64, repaired: f64) -> Self {
        let gap = clean - corrupted;
        TypeRecovery {
            f1_clean: clean,
            f1_corrupted: corrupted,
            f1_repaired: repaired,
            recovery_fraction: (gap > 0.0).then(|| (repaired - corrupted) / gap),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// Per entity type plus an `overall` entry.
    pub per_type: BTreeMap<String, TypeRecovery>,
    pub detection: DetectionReport,
    pub restored: usize,
}

impl RecoveryReport {
    pub fn recovery(&self, entity_type: &str) -> Option<f64> {
        self.per_type.get(entity_type).and_then(|r| r.recovery_fraction)
    }
}

impl fmt::Display for RecoveryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>9} {:>10} {:>9} {:>9}", "type", "clean", "corrupted", "repaired", "recovery")?;
        for (ty, r) in &self.per_type {
            let rec = r.recovery_fraction.map_or("-".to_string(), |x| format!("{x:.3}"));
            writeln!(f, "{ty:<10} {:>9.2} {:>10.2} {:>9.2} {rec:>9}", r.f1_clean, r.f1_corrupted, r.f1_repaired)?;
        }
        let d = &self.detection;
        write!(
            f,
            "flagged {} / corrupted {} / hits {}: precision {:.3} recall {:.3} lift {:.2}; restored {}",
            d.flagged, d.corrupted, d.hits, d.precision, d.recall, d.lift, self.restored
        )
    }
}

/// Trains a student on each of `clean`, `corrupted` and `repaired` (in
/// parallel) and compares held-out F1.
pub fn compare_students(
    clean: &Corpus,
    corrupted: &Corpus,
    repaired: &Corpus,
    train: &TrainConfig,
    eval_set: &Corpus,
) -> Result<BTreeMap<String, TypeRecovery>> {
    let fit = |c: &Corpus| -> Result<EvalReport> {
        let model = tagger::train(c, train, Capacity::Student)?;
        Ok(entity_f1(&model.predict(eval_set), eval_set)?)
    };
    let (a, (b, c)) = rayon::join(|| fit(clean), || rayon::join(|| fit(corrupted), || fit(repaired)));
    let (a, b, c) = (a?, b?, c?);
    let mut out: BTreeMap<String, TypeRecovery> = a
        .per_type
        .keys()
        .map(|t| (t.clone(), TypeRecovery::new(a.f1(t), b.f1(t), c.f1(t))))
        .collect();
    out.insert(OVERALL.into(), TypeRecovery::new(a.overall.f1, b.overall.f1, c.overall.f1));
    Ok(out)
}

/// Corrupt, flag, restore flagged utterances from the ledger (an oracle
/// annotator), then compare students trained on the three versions.
pub fn f1_recovery_experiment(clean: &Corpus, spec: &NoiseSpec, loop_cfg: &LoopConfig, eval_set: &Corpus) -> Result<RecoveryReport> {
    let train_ids = clean.index();
    if let Some(u) = eval_set.utterances.iter().find(|u| train_ids.contains_key(u.id.as_str())) {
        return Err(NoiseError::OverlappingEvalSet(u.id.clone()));
    }
    let (corrupted, ledger) = inject_noise(clean, spec)?;
    let outcome = run_active_loop(&corrupted, loop_cfg)?;
    let flagged: Vec<&str> = outcome.selected.iter().map(|s| s.utterance_id.as_str()).collect();
    let detection = evaluate_detection(flagged.iter().copied(), &ledger, clean.len());
    let repaired = ledger.restore_only(&corrupted, flagged.iter().copied());

    let per_type = compare_students(clean, &corrupted, &repaired, &loop_cfg.train, eval_set)?;
    let focus: Vec<String> = match &loop_cfg.flag.focus_types {
        Some(f) => f.iter().cloned().collect(),
        None => vec![OVERALL.to_string()],
    };
    for ty in focus {
        if let Some(r) = per_type.get(&ty) {
            if r.f1_clean <= r.f1_corrupted {
                return Err(NoiseError::DegenerateExperiment { entity_type: ty, clean: r.f1_clean, corrupted: r.f1_corrupted });
            }
        }
    }
    Ok(RecoveryReport { per_type, detection, restored: detection.hits })
}
