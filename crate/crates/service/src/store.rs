//! File-backed pipeline store: the ingested corpus, the review queue and the
//! append-only decision log.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use relabel_core::active_loop::{merge_reannotations, ActiveLoopError, GapRecord, ReviewDecision, Selection, Verdict};
use relabel_core::corpus::{parse_conll, write_conll, CorpusError, EntitySpan, Split, ValidationMode};
use relabel_core::jsonl::{self, JsonlError};
use relabel_core::{Corpus, TagSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Corpus { path: PathBuf, source: CorpusError },
    #[error("{path}: {source}")]
    Jsonl { path: PathBuf, source: JsonlError },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("queue item `{0}` is not in the corpus")]
    QueueMismatch(String),
    #[error("merge: {0}")]
    Merge(ActiveLoopError),
    #[error("decision log line {line}: {source}")]
    BadLogRecord { line: usize, source: ActiveLoopError },
}

pub type Result<T> = std::result::Result<T, StoreError>;

/// Layout of a data directory.
#[derive(Debug, Clone)]
pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DataDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus.conll")
    }

    pub fn tag_set(&self) -> PathBuf {
        self.root.join("tagset.json")
    }

    pub fn folds(&self) -> PathBuf {
        self.root.join("folds.json")
    }

    pub fn gaps(&self) -> PathBuf {
        self.root.join("gaps.jsonl")
    }

    pub fn queue(&self) -> PathBuf {
        self.root.join("queue.jsonl")
    }

    pub fn queue_meta(&self) -> PathBuf {
        self.root.join("queue_meta.json")
    }

    pub fn decisions(&self) -> PathBuf {
        self.root.join("decisions.jsonl")
    }

    pub fn merged(&self) -> PathBuf {
        self.root.join("merged.conll")
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn create(&self) -> Result<()> {
        fs::create_dir_all(&self.root).map_err(io_err(&self.root))
    }

    pub fn load_tag_set(&self) -> Result<TagSet> {
        read_json(&self.tag_set())
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        let ts = self.load_tag_set()?;
        read_corpus(&self.corpus(), &ts, ValidationMode::Strict, Split::Train)
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

pub fn read_corpus(path: &Path, ts: &TagSet, mode: ValidationMode, split: Split) -> Result<Corpus> {
    let f = File::open(path).map_err(io_err(path))?;
    parse_conll(BufReader::new(f), ts, mode, split).map_err(|source| StoreError::Corpus { path: path.into(), source })
}

pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    let f = File::create(path).map_err(io_err(path))?;
    write_conll(corpus, BufWriter::new(f)).map_err(|source| StoreError::Corpus { path: path.into(), source })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|source| StoreError::Json { path: path.into(), source })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| StoreError::Json { path: path.into(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(io_err(path))?;
    jsonl::read_records(BufReader::new(f)).map_err(|source| StoreError::Jsonl { path: path.into(), source })
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let f = File::create(path).map_err(io_err(path))?;
    jsonl::write_records(records, BufWriter::new(f)).map_err(|source| StoreError::Jsonl { path: path.into(), source })
}

/// A gap record without the utterance id and fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub span: EntitySpan,
    pub p_tag: String,
    pub g_tag: String,
    pub gap: f64,
}

impl From<&GapRecord> for Evidence {
    fn from(r: &GapRecord) -> Self {
        Evidence { span: r.span.clone(), p_tag: r.p_tag.clone(), g_tag: r.g_tag.clone(), gap: r.gap }
    }
}

/// One line of `queue.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub utterance_id: String,
    pub max_gap: f64,
    pub evidence: Vec<Evidence>,
}

/// Builds queue entries in selection order. Evidence is every record of the
/// utterance that could have triggered the flag, by span position.
pub fn build_queue(selected: &[Selection], gaps: &[GapRecord], qualifies: impl Fn(&GapRecord) -> bool) -> Vec<QueueEntry> {
    let mut by_id: HashMap<&str, Vec<&GapRecord>> = HashMap::new();
    for g in gaps.iter().filter(|g| qualifies(g)) {
        by_id.entry(g.utterance_id.as_str()).or_default().push(g);
    }
    selected
        .iter()
        .map(|s| {
            let mut evidence: Vec<Evidence> =
                by_id.get(s.utterance_id.as_str()).into_iter().flatten().map(|g| Evidence::from(*g)).collect();
            evidence.sort_by(|a, b| a.span.cmp(&b.span));
            QueueEntry { utterance_id: s.utterance_id.clone(), max_gap: s.max_gap, evidence }
        })
        .collect()
}

/// Facts about the run that produced the queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueMeta {
    pub train_size: usize,
    pub threshold: f64,
    pub folds: usize,
    pub seed: u64,
    pub focus_types: Option<Vec<String>>,
    pub budget: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pending,
    Done,
}

impl std::str::FromStr for Status {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pending" => Ok(Status::Pending),
            "done" => Ok(Status::Done),
            other => Err(format!("unknown status `{other}` (expected pending or done)")),
        }
    }
}

/// A queued utterance as the annotator sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub utterance_id: String,
    pub tokens: Vec<String>,
    /// Gold tags, or the corrected tags once a correction is in effect.
    pub current_tags: Vec<String>,
    pub evidence: Vec<Evidence>,
    pub status: Status,
    pub decision: Option<ReviewDecision>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub pending: usize,
    pub done: usize,
    pub corrected: usize,
    pub accepted: usize,
    pub flag_fraction_of_train: f64,
}

/// What happened to a submitted decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Identical to the decision in effect; nothing logged.
    Duplicate,
    Appended,
}

#[derive(Debug, Error)]
pub enum DecisionError {
    #[error("utterance `{0}` is not in the review queue")]
    NotQueued(String),
    #[error(transparent)]
    Invalid(#[from] ActiveLoopError),
}

/// In-memory review state: the initial queue plus the decisions replayed over it.
#[derive(Debug, Clone)]
pub struct QueueState {
    pub tag_set: TagSet,
    pub train_size: usize,
    items: Vec<ReviewItem>,
    original_tags: Vec<Vec<String>>,
    max_gaps: Vec<f64>,
    index: HashMap<String, usize>,
    log_len: usize,
}

impl QueueState {
    pub fn new(entries: Vec<QueueEntry>, corpus: &Corpus, train_size: usize) -> Result<Self> {
        let corpus_index = corpus.index();
        let ts = &corpus.tag_set;
        let mut items = Vec::with_capacity(entries.len());
        let mut original_tags = Vec::with_capacity(entries.len());
        let mut max_gaps = Vec::with_capacity(entries.len());
        for e in entries {
            let &i = corpus_index.get(e.utterance_id.as_str()).ok_or_else(|| StoreError::QueueMismatch(e.utterance_id.clone()))?;
            let u = &corpus.utterances[i];
            let tags: Vec<String> = u.gold_tags.iter().map(|&t| ts.label_name(t).to_string()).collect();
            original_tags.push(tags.clone());
            max_gaps.push(e.max_gap);
            items.push(ReviewItem {
                utterance_id: e.utterance_id,
                tokens: u.words().map(str::to_string).collect(),
                current_tags: tags,
                evidence: e.evidence,
                status: Status::Pending,
                decision: None,
            });
        }
        let index = items.iter().enumerate().map(|(i, it)| (it.utterance_id.clone(), i)).collect();
        Ok(QueueState { tag_set: ts.clone(), train_size, items, original_tags, max_gaps, index, log_len: 0 })
    }

    /// Items in queue order.
    pub fn items(&self) -> &[ReviewItem] {
        &self.items
    }

    pub fn max_gap(&self, position: usize) -> f64 {
        self.max_gaps[position]
    }

    pub fn get(&self, id: &str) -> Option<&ReviewItem> {
        self.index.get(id).map(|&i| &self.items[i])
    }

    /// Number of decisions logged so far.
    pub fn log_len(&self) -> usize {
        self.log_len
    }

    /// Validates `d` against the item without changing anything.
    pub fn check(&self, d: &ReviewDecision) -> std::result::Result<Outcome, DecisionError> {
        let &i = self.index.get(&d.utterance_id).ok_or_else(|| DecisionError::NotQueued(d.utterance_id.clone()))?;
        let item = &self.items[i];
        d.resolve_tags(&self.tag_set, item.tokens.len())?;
        match &item.decision {
            Some(cur) if cur.annotator_id == d.annotator_id && cur.verdict == d.verdict && cur.new_tags == d.new_tags => {
                Ok(Outcome::Duplicate)
            }
            _ => Ok(Outcome::Appended),
        }
    }

    /// Records a decision that has been logged. The latest timestamp wins;
    /// on equal timestamps the later log entry wins.
    pub fn apply(&mut self, d: ReviewDecision) -> std::result::Result<(), DecisionError> {
        let &i = self.index.get(&d.utterance_id).ok_or_else(|| DecisionError::NotQueued(d.utterance_id.clone()))?;
        d.resolve_tags(&self.tag_set, self.items[i].tokens.len())?;
        self.log_len += 1;
        let item = &mut self.items[i];
        if item.decision.as_ref().is_some_and(|cur| cur.timestamp > d.timestamp) {
            return Ok(());
        }
        item.current_tags = match (d.verdict, &d.new_tags) {
            (Verdict::Corrected, Some(tags)) => tags.clone(),
            _ => self.original_tags[i].clone(),
        };
        item.status = Status::Done;
        item.decision = Some(d);
        Ok(())
    }

    pub fn stats(&self) -> Stats {
        let done = self.items.iter().filter(|i| i.status == Status::Done).count();
        let corrected =
            self.items.iter().filter(|i| i.decision.as_ref().is_some_and(|d| d.verdict == Verdict::Corrected)).count();
        Stats {
            pending: self.items.len() - done,
            done,
            corrected,
            accepted: done - corrected,
            flag_fraction_of_train: if self.train_size == 0 { 0.0 } else { self.items.len() as f64 / self.train_size as f64 },
        }
    }
}

/// Append-only decision log. Every append is flushed to disk before it
/// returns, so an acknowledged decision survives a crash.
#[derive(Debug)]
pub struct DecisionLog {
    path: PathBuf,
    file: File,
}

impl DecisionLog {
    /// Opens (creating if needed) and returns the complete records. A torn
    /// final line from an interrupted write is cut off.
    pub fn open(path: &Path) -> Result<(Self, Vec<ReviewDecision>)> {
        let mut file =
            OpenOptions::new().read(true).append(true).create(true).open(path).map_err(io_err(path))?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(io_err(path))?;
        let complete = text.rfind('\n').map_or(0, |i| i + 1);
        if complete < text.len() {
            log::warn!("{}: dropping an incomplete trailing record", path.display());
            file.set_len(complete as u64).map_err(io_err(path))?;
            file.seek(SeekFrom::End(0)).map_err(io_err(path))?;
        }
        let records = jsonl::read_records(&text.as_bytes()[..complete])
            .map_err(|source| StoreError::Jsonl { path: path.into(), source })?;
        Ok((DecisionLog { path: path.into(), file }, records))
    }

    pub fn append(&mut self, d: &ReviewDecision) -> Result<()> {
        let mut line = serde_json::to_string(d).map_err(|source| StoreError::Json { path: self.path.clone(), source })?;
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
        self.file.sync_data().map_err(io_err(&self.path))
    }
}

/// Reads the decision log without opening it for writing.
pub fn read_decisions(path: &Path) -> Result<Vec<ReviewDecision>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let complete = text.rfind('\n').map_or(0, |i| i + 1);
    jsonl::read_records(&text.as_bytes()[..complete]).map_err(|source| StoreError::Jsonl { path: path.into(), source })
}

/// Loads the queue and replays the decision log over it. Decisions about
/// utterances no longer in the queue (after a re-flag) are skipped.
pub fn open_queue(dir: &DataDir) -> Result<(QueueState, DecisionLog)> {
    let corpus = dir.load_corpus()?;
    let entries: Vec<QueueEntry> = read_jsonl(&dir.queue())?;
    let meta: QueueMeta = read_json(&dir.queue_meta())?;
    let mut state = QueueState::new(entries, &corpus, meta.train_size)?;
    let (log, records) = DecisionLog::open(&dir.decisions())?;
    replay(&mut state, records)?;
    Ok((state, log))
}

pub fn replay(state: &mut QueueState, records: Vec<ReviewDecision>) -> Result<()> {
    for (n, d) in records.into_iter().enumerate() {
        match state.apply(d) {
            Ok(()) => {}
            Err(DecisionError::NotQueued(id)) => {
                log::warn!("decision log line {}: `{id}` is not queued; skipped", n + 1);
                state.log_len += 1;
            }
            Err(DecisionError::Invalid(source)) => return Err(StoreError::BadLogRecord { line: n + 1, source }),
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeSummary {
    pub output: String,
    pub utterances: usize,
    pub decisions: usize,
    pub reannotated: usize,
}

/// Applies the decision log at `decisions` to the corpus at `corpus` and
/// writes the result to `out`. With no decisions the input bytes are copied
/// unchanged.
pub fn merge_files(ts: &TagSet, corpus: &Path, decisions: &Path, out: &Path) -> Result<MergeSummary> {
    let input = read_corpus(corpus, ts, ValidationMode::Strict, Split::Train)?;
    let log = read_decisions(decisions)?;
    let merged = merge_reannotations(&input, &log).map_err(StoreError::Merge)?;
    if log.is_empty() {
        fs::copy(corpus, out).map_err(io_err(out))?;
    } else {
        write_corpus(out, &merged)?;
    }
    let reannotated = merged.utterances.iter().zip(&input.utterances).filter(|(m, c)| m.gold_tags != c.gold_tags).count();
    Ok(MergeSummary { output: out.display().to_string(), utterances: merged.len(), decisions: log.len(), reannotated })
}
