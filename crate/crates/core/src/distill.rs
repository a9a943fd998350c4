//! Teacher pseudo labels and two-stage student training.

use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{parse_conll, write_conll, Corpus, CorpusError, Source, Split, Utterance, ValidationMode};
use crate::tagger::{self, Capacity, ModelWeights, TrainConfig, TrainError, TrainReport};

pub const DEFAULT_CONFIDENCE_FLOOR: f64 = 0.7;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("pseudo labels need a teacher-capacity model, got {0}")]
    NotATeacher(Capacity),
    #[error("gold corpus is empty")]
    EmptyGold,
    #[error("sidecar metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DistillError>;

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabeledSet {
    pub corpus: Corpus,
    pub teacher_fingerprint: String,
    pub confidence_floor: f64,
}

/// The sidecar record written next to the CoNLL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelMeta {
    pub teacher_fingerprint: String,
    pub confidence_floor: f64,
    pub utterances: usize,
}

impl PseudoLabeledSet {
    pub fn meta(&self) -> PseudoLabelMeta {
        PseudoLabelMeta {
            teacher_fingerprint: self.teacher_fingerprint.clone(),
            confidence_floor: self.confidence_floor,
            utterances: self.corpus.len(),
        }
    }

    pub fn write<W: Write, M: Write>(&self, conll: W, mut meta: M) -> Result<()> {
        write_conll(&self.corpus, conll)?;
        serde_json::to_writer_pretty(&mut meta, &self.meta())?;
        writeln!(meta)?;
        Ok(())
    }

    pub fn read<R: BufRead, M: std::io::Read>(conll: R, meta: M, tag_set: &crate::TagSet) -> Result<Self> {
        let meta: PseudoLabelMeta = serde_json::from_reader(meta)?;
        let corpus = parse_conll(conll, tag_set, ValidationMode::Strict, Split::Train)?;
        Ok(PseudoLabeledSet { corpus, teacher_fingerprint: meta.teacher_fingerprint, confidence_floor: meta.confidence_floor })
    }

    /// Writes `path` and `path.meta.json`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let conll = std::io::BufWriter::new(std::fs::File::create(path)?);
        let meta = std::fs::File::create(meta_path(path))?;
        self.write(conll, meta)
    }

    pub fn load(path: impl AsRef<Path>, tag_set: &crate::TagSet) -> Result<Self> {
        let path = path.as_ref();
        let conll = std::io::BufReader::new(std::fs::File::open(path)?);
        let meta = std::fs::File::open(meta_path(path))?;
        Self::read(conll, meta, tag_set)
    }
}

pub fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    s.into()
}

/// Viterbi-labels every utterance and keeps those whose least confident
/// token still has a max marginal of at least `confidence_floor` (0 keeps
/// everything). Output follows input order.
pub fn pseudo_label(teacher: &ModelWeights, unlabeled: &Corpus, confidence_floor: f64) -> Result<PseudoLabeledSet> {
    if teacher.capacity() != Capacity::Teacher {
        return Err(DistillError::NotATeacher(teacher.capacity()));
    }
    let utterances: Vec<Utterance> = unlabeled
        .utterances
        .par_iter()
        .filter_map(|u| {
            if confidence_floor > 0.0 {
                let confidence = teacher
                    .token_marginals(u)
                    .iter()
                    .map(|row| row.iter().copied().fold(0.0, f64::max))
                    .fold(1.0, f64::min);
                if confidence < confidence_floor {
                    return None;
                }
            }
            let (tags, _) = teacher.viterbi_decode(u);
            Some(Utterance { gold_tags: tags, source: Source::PseudoLabeled, ..u.clone() })
        })
        .collect();
    Ok(PseudoLabeledSet {
        corpus: Corpus { tag_set: unlabeled.tag_set.clone(), utterances, split: Split::Train },
        teacher_fingerprint: teacher.fingerprint(),
        confidence_floor,
    })
}

#[derive(Debug, Clone)]
pub struct TwoStageOutcome {
    pub student: ModelWeights,
    /// `None` when the pseudo set was empty and stage A was skipped.
    pub stage_a: Option<(ModelWeights, TrainReport)>,
    pub stage_b: TrainReport,
}

/// Stage A: student on pseudo labels. Stage B: continue from the stage-A
/// weights on gold with the same config.
pub fn two_stage_train_with_report(pseudo: &PseudoLabeledSet, gold: &Corpus, config: &TrainConfig) -> Result<TwoStageOutcome> {
    if gold.is_empty() {
        return Err(DistillError::EmptyGold);
    }
    let stage_a = if pseudo.corpus.is_empty() {
        None
    } else {
        Some(tagger::train_with_report(&pseudo.corpus, config, Capacity::Student, None)?)
    };
    let (student, stage_b) = tagger::train_with_report(gold, config, Capacity::Student, stage_a.as_ref().map(|(m, _)| m))?;
    Ok(TwoStageOutcome { student, stage_a, stage_b })
}

pub fn two_stage_train(pseudo: &PseudoLabeledSet, gold: &Corpus, config: &TrainConfig) -> Result<ModelWeights> {
    two_stage_train_with_report(pseudo, gold, config).map(|o| o.student)
}
