//! Cross-fold annotation-error detection.
//!
//! Every training utterance is predicted by a model that never saw it. For
//! each predicted entity the flagging signal is the log-marginal gap between
//! the predicted tag and the gold tag, maximised over the span's tokens; an
//! utterance goes to review when some gap exceeds the threshold.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{extract_spans, is_valid_bio, Corpus, EntitySpan, Source, TagSet};
use crate::tagger::{self, Capacity, ModelWeights, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum ActiveLoopError {
    #[error("need at least {k} utterances for {k} folds, found {n}")]
    TooFewUtterances { n: usize, k: usize },
    #[error("fold count must be at least 2, got {0}")]
    TooFewFolds(usize),
    #[error("fold {fold} out of range for a {k}-fold plan")]
    InvalidFold { fold: usize, k: usize },
    #[error("fold {0} has no utterances to predict")]
    EmptyPredictionSet(usize),
    #[error("fold plan does not cover utterance `{0}`")]
    Unassigned(String),
    #[error("unknown utterance `{0}`")]
    UnknownUtterance(String),
    #[error("invalid tags for `{id}`: {reason}")]
    InvalidTags { id: String, reason: String },
    #[error("invalid flag config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Train(#[from] TrainError),
}

pub type Result<T> = std::result::Result<T, ActiveLoopError>;

/// Assignment of every training utterance to exactly one prediction fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// Ids predicted in `fold`, sorted.
    pub fn prediction_set(&self, fold: usize) -> Vec<&str> {
        self.assignment.iter().filter(|(_, &f)| f == fold).map(|(id, _)| id.as_str()).collect()
    }
}

/// Seeded shuffle, then round-robin: fold sizes differ by at most one.
pub fn make_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(ActiveLoopError::TooFewFolds(k));
    }
    if corpus.len() < k {
        return Err(ActiveLoopError::TooFewUtterances { n: corpus.len(), k });
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let assignment = order
        .iter()
        .enumerate()
        .map(|(pos, &i)| (corpus.utterances[i].id.clone(), pos % k))
        .collect();
    Ok(FoldPlan { k, seed, assignment })
}

/// Held-out prediction of one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPrediction {
    pub utterance_id: String,
    pub fold: usize,
    pub predicted_tags: Vec<usize>,
    /// `n x |labels|` token log-marginals.
    pub log_scores: Vec<Vec<f64>>,
}

fn fold_train_config(base: &TrainConfig, fold: usize) -> TrainConfig {
    base.clone().with_seed(base.seed.wrapping_add(fold as u64))
}

/// The model `run_fold` predicts with: trained on every utterance outside `fold`.
pub fn train_fold_model(corpus: &Corpus, plan: &FoldPlan, fold: usize, config: &TrainConfig, capacity: Capacity) -> Result<ModelWeights> {
    if fold >= plan.k {
        return Err(ActiveLoopError::InvalidFold { fold, k: plan.k });
    }
    let mut training = Vec::new();
    let mut held_out = 0;
    for u in &corpus.utterances {
        match plan.fold_of(&u.id) {
            Some(f) if f == fold => held_out += 1,
            Some(_) => training.push(u.clone()),
            None => return Err(ActiveLoopError::Unassigned(u.id.clone())),
        }
    }
    if held_out == 0 {
        return Err(ActiveLoopError::EmptyPredictionSet(fold));
    }
    let train_corpus = Corpus { tag_set: corpus.tag_set.clone(), utterances: training, split: corpus.split };
    Ok(tagger::train(&train_corpus, &fold_train_config(config, fold), capacity)?)
}

/// Trains on everything outside `fold` and predicts the fold's utterances
/// (returned in corpus order).
pub fn run_fold(corpus: &Corpus, plan: &FoldPlan, fold: usize, config: &TrainConfig, capacity: Capacity) -> Result<Vec<FoldPrediction>> {
    let model = train_fold_model(corpus, plan, fold, config, capacity)?;
    Ok(corpus
        .utterances
        .iter()
        .filter(|u| plan.fold_of(&u.id) == Some(fold))
        .map(|u| FoldPrediction {
            utterance_id: u.id.clone(),
            fold,
            predicted_tags: model.viterbi_decode(u).0,
            log_scores: model.token_log_scores(u),
        })
        .collect())
}

/// All folds, trained in parallel; output is in fold order, so identical to
/// a sequential run.
pub fn run_all_folds(corpus: &Corpus, plan: &FoldPlan, config: &TrainConfig, capacity: Capacity) -> Result<Vec<FoldPrediction>> {
    let per_fold: Vec<Result<Vec<FoldPrediction>>> =
        (0..plan.k).into_par_iter().map(|f| run_fold(corpus, plan, f, config, capacity)).collect();
    let mut out = Vec::with_capacity(corpus.len());
    for r in per_fold {
        out.extend(r?);
    }
    Ok(out)
}

/// How the predicted-vs-gold difference is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMode {
    /// Difference of natural-log marginals (nats).
    #[default]
    LogMarginal,
    /// Difference of raw marginal probabilities; bounded by 1.
    Probability,
}

/// Evidence for one predicted entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub utterance_id: String,
    pub span: EntitySpan,
    /// Predicted label at the maximizing token.
    pub p_tag: String,
    /// Gold label at the maximizing token.
    pub g_tag: String,
    pub gap: f64,
    pub fold: usize,
}

/// Log-scores below this are clamped so gaps stay finite.
pub const MIN_LOG_SCORE: f64 = -745.0;

/// One record per predicted entity span, in prediction order. Spans whose
/// tokens all agree with gold get gap 0 and are kept for threshold sweeps.
pub fn score_gaps(predictions: &[FoldPrediction], corpus: &Corpus, mode: GapMode) -> Result<Vec<GapRecord>> {
    let index = corpus.index();
    let ts = &corpus.tag_set;
    let mut records = Vec::new();
    for p in predictions {
        let u = index
            .get(p.utterance_id.as_str())
            .map(|&i| &corpus.utterances[i])
            .ok_or_else(|| ActiveLoopError::UnknownUtterance(p.utterance_id.clone()))?;
        for span in extract_spans(&p.predicted_tags, ts) {
            let mut best: Option<(f64, usize)> = None;
            for t in span.start..span.end {
                let (pt, gt) = (p.predicted_tags[t], u.gold_tags[t]);
                let lp = p.log_scores[t][pt].max(MIN_LOG_SCORE);
                let lg = p.log_scores[t][gt].max(MIN_LOG_SCORE);
                let gap = match mode {
                    GapMode::LogMarginal => lp - lg,
                    GapMode::Probability => lp.exp() - lg.exp(),
                };
                let gap = if pt == gt { 0.0 } else { gap };
                if best.is_none_or(|(b, _)| gap > b) {
                    best = Some((gap, t));
                }
            }
            let (gap, t) = best.expect("spans are non-empty");
            records.push(GapRecord {
                utterance_id: p.utterance_id.clone(),
                span,
                p_tag: ts.label_name(p.predicted_tags[t]).to_string(),
                g_tag: ts.label_name(u.gold_tags[t]).to_string(),
                gap,
                fold: p.fold,
            });
        }
    }
    Ok(records)
}

/// Selection rule parameters. The threshold is in nats under
/// [`GapMode::LogMarginal`]; 2.0 means the predicted tag is about 7.4 times
/// more likely than the gold one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagConfig {
    pub threshold: f64,
    /// Entity types whose predicted spans may trigger a flag; `None` = all.
    pub focus_types: Option<BTreeSet<String>>,
    /// Cap on the flagged fraction of the training set.
    pub budget: Option<f64>,
    pub gap_mode: GapMode,
}

impl Default for FlagConfig {
    fn default() -> Self {
        FlagConfig {
            threshold: 2.0,
            focus_types: Some(BTreeSet::from(["ORG".to_string()])),
            budget: None,
            gap_mode: GapMode::LogMarginal,
        }
    }
}

impl FlagConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(ActiveLoopError::InvalidConfig(format!("threshold {} must be >= 0", self.threshold)));
        }
        if let Some(b) = self.budget {
            if !(b > 0.0 && b <= 1.0) {
                return Err(ActiveLoopError::InvalidConfig(format!("budget {b} must be in (0, 1]")));
            }
        }
        Ok(())
    }

    fn in_focus(&self, entity_type: &str) -> bool {
        self.focus_types.as_ref().is_none_or(|f| f.contains(entity_type))
    }
}

/// An utterance selected for review with its strongest qualifying gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub utterance_id: String,
    pub max_gap: f64,
}

/// Utterances with at least one in-focus record whose gap is strictly above
/// the threshold, by max gap descending (ties by id), truncated to
/// `floor(budget * train_size)` when a budget is set.
pub fn select_for_reannotation(gaps: &[GapRecord], config: &FlagConfig, train_size: usize) -> Vec<Selection> {
    let mut best: HashMap<&str, f64> = HashMap::new();
    for r in gaps {
        if r.gap > config.threshold && config.in_focus(&r.span.entity_type) {
            let e = best.entry(r.utterance_id.as_str()).or_insert(r.gap);
            *e = e.max(r.gap);
        }
    }
    let mut out: Vec<Selection> =
        best.into_iter().map(|(id, g)| Selection { utterance_id: id.to_string(), max_gap: g }).collect();
    out.sort_by(|a, b| b.max_gap.total_cmp(&a.max_gap).then_with(|| a.utterance_id.cmp(&b.utterance_id)));
    if let Some(budget) = config.budget {
        out.truncate((budget * train_size as f64).floor() as usize);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    CorrectAsIs,
    Corrected,
}

/// An annotator's verdict on a flagged utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub utterance_id: String,
    pub verdict: Verdict,
    /// Full label sequence, required when `verdict` is `corrected`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_tags: Option<Vec<String>>,
    pub annotator_id: String,
    pub timestamp: DateTime<Utc>,
}

impl ReviewDecision {
    /// Resolves `new_tags` to label indices and checks length and BIO form.
    pub fn resolve_tags(&self, tag_set: &TagSet, len: usize) -> Result<Option<Vec<usize>>> {
        let invalid = |reason: String| ActiveLoopError::InvalidTags { id: self.utterance_id.clone(), reason };
        match (self.verdict, &self.new_tags) {
            (Verdict::CorrectAsIs, _) => Ok(None),
            (Verdict::Corrected, None) => Err(invalid("corrected verdict without new_tags".into())),
            (Verdict::Corrected, Some(tags)) => {
                if tags.len() != len {
                    return Err(invalid(format!("{} tags for {len} tokens", tags.len())));
                }
                let idx = tags
                    .iter()
                    .map(|t| tag_set.label_index(t).ok_or_else(|| invalid(format!("unknown label `{t}`"))))
                    .collect::<Result<Vec<usize>>>()?;
                if !is_valid_bio(&idx, tag_set) {
                    return Err(invalid("not a valid BIO sequence".into()));
                }
                Ok(Some(idx))
            }
        }
    }
}

/// Applies the latest decision (by timestamp, then list order) for each
/// utterance: corrections replace the tags and mark the utterance
/// re-annotated; accepts keep the tags. Either way the revision goes up by one.
pub fn merge_reannotations(corpus: &Corpus, decisions: &[ReviewDecision]) -> Result<Corpus> {
    let index = corpus.index();
    let mut latest: BTreeMap<usize, &ReviewDecision> = BTreeMap::new();
    for d in decisions {
        let &i = index.get(d.utterance_id.as_str()).ok_or_else(|| ActiveLoopError::UnknownUtterance(d.utterance_id.clone()))?;
        d.resolve_tags(&corpus.tag_set, corpus.utterances[i].len())?;
        match latest.get(&i) {
            Some(prev) if prev.timestamp > d.timestamp => {}
            _ => {
                latest.insert(i, d);
            }
        }
    }
    let mut merged = corpus.clone();
    for (i, d) in latest {
        let u = &mut merged.utterances[i];
        if let Some(tags) = d.resolve_tags(&corpus.tag_set, u.len())? {
            u.gold_tags = tags;
            u.source = Source::Reannotated;
        }
        u.revision += 1;
    }
    Ok(merged)
}

/// Everything a flagging run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub folds: usize,
    pub fold_seed: u64,
    pub train: TrainConfig,
    pub capacity: Capacity,
    pub flag: FlagConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig { folds: 5, fold_seed: 0, train: TrainConfig::default(), capacity: Capacity::Teacher, flag: FlagConfig::default() }
    }
}

#[derive(Debug, Clone)]
pub struct LoopOutcome {
    pub plan: FoldPlan,
    pub predictions: Vec<FoldPrediction>,
    pub gaps: Vec<GapRecord>,
    pub selected: Vec<Selection>,
}

/// `make_folds -> run_fold x k -> score_gaps -> select_for_reannotation`.
pub fn run_active_loop(corpus: &Corpus, config: &LoopConfig) -> Result<LoopOutcome> {
    config.flag.validate()?;
    let plan = make_folds(corpus, config.folds, config.fold_seed)?;
    let predictions = run_all_folds(corpus, &plan, &config.train, config.capacity)?;
    let gaps = score_gaps(&predictions, corpus, config.flag.gap_mode)?;
    let selected = select_for_reannotation(&gaps, &config.flag, corpus.len());
    Ok(LoopOutcome { plan, predictions, gaps, selected })
}
