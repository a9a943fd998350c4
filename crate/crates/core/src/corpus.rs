//! BIO-tagged corpora: tag sets, utterances, span extraction and the
//! two-column CoNLL reader/writer.
//!
//! Label indices are laid out as `O` at 0, then `B-X`, `I-X` pairs in
//! entity-type order, so a tag set over `k` types has `2k + 1` labels.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building, parsing or validating corpora.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: unknown label `{label}`")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: expected 2 columns (token, tag), found {found}")]
    RaggedLine { line: usize, found: usize },
    #[error("line {line}: `# id` comment inside an utterance block")]
    MisplacedComment { line: usize },
    #[error("corpus contains no utterances")]
    EmptyCorpus,
    #[error("{}BIO violation at token {position}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    BioViolation { position: usize, line: Option<usize> },
    #[error("duplicate utterance id `{0}`")]
    DuplicateId(String),
    #[error("utterance `{id}`: {reason}")]
    InvalidUtterance { id: String, reason: String },
    #[error("invalid tag set: {0}")]
    InvalidTagSet(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// What a label index denotes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Outside,
    Begin(usize),
    Inside(usize),
}

/// Ordered entity types plus the derived BIO label list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TagSetRepr", into = "TagSetRepr")]
pub struct TagSet {
    entity_types: Vec<String>,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct TagSetRepr {
    entity_types: Vec<String>,
}

impl TryFrom<TagSetRepr> for TagSet {
    type Error = CorpusError;
    fn try_from(r: TagSetRepr) -> Result<Self> {
        TagSet::new(r.entity_types)
    }
}

impl From<TagSet> for TagSetRepr {
    fn from(t: TagSet) -> Self {
        TagSetRepr { entity_types: t.entity_types }
    }
}

impl TagSet {
    pub fn new<I, S>(entity_types: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entity_types: Vec<String> = entity_types.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for t in &entity_types {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(CorpusError::InvalidTagSet(format!("bad entity type `{t}`")));
            }
            if !seen.insert(t.as_str()) {
                return Err(CorpusError::InvalidTagSet(format!("duplicate entity type `{t}`")));
            }
        }
        let mut labels = Vec::with_capacity(2 * entity_types.len() + 1);
        labels.push("O".to_string());
        for t in &entity_types {
            labels.push(format!("B-{t}"));
            labels.push(format!("I-{t}"));
        }
        Ok(TagSet { entity_types, labels })
    }

    /// The four types of the business-call NER task: PER, PROD, ORG, GPE.
    pub fn business_default() -> Self {
        TagSet::new(["PER", "PROD", "ORG", "GPE"]).expect("static tag set")
    }

    pub fn entity_types(&self) -> &[String] {
        &self.entity_types
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label_name(&self, label: usize) -> &str {
        &self.labels[label]
    }

    pub fn type_index(&self, entity_type: &str) -> Option<usize> {
        self.entity_types.iter().position(|t| t == entity_type)
    }

    pub fn kind(&self, label: usize) -> LabelKind {
        match label {
            0 => LabelKind::Outside,
            l if l % 2 == 1 => LabelKind::Begin((l - 1) / 2),
            l => LabelKind::Inside((l - 2) / 2),
        }
    }

    /// Entity type index of a `B-X`/`I-X` label, `None` for `O`.
    pub fn entity_of(&self, label: usize) -> Option<usize> {
        match self.kind(label) {
            LabelKind::Outside => None,
            LabelKind::Begin(t) | LabelKind::Inside(t) => Some(t),
        }
    }

    pub fn begin(&self, entity_type: usize) -> usize {
        1 + 2 * entity_type
    }

    pub fn inside(&self, entity_type: usize) -> usize {
        2 + 2 * entity_type
    }

    /// Whether label `to` may directly follow label `from` (`None` = sequence start).
    pub fn allowed_transition(&self, from: Option<usize>, to: usize) -> bool {
        match self.kind(to) {
            LabelKind::Inside(t) => from.and_then(|f| self.entity_of(f)) == Some(t),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    #[default]
    Original,
    Reannotated,
    PseudoLabeled,
}

impl Source {
    fn as_str(self) -> &'static str {
        match self {
            Source::Original => "original",
            Source::Reannotated => "reannotated",
            Source::PseudoLabeled => "pseudo_labeled",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "original" => Some(Source::Original),
            "reannotated" => Some(Source::Reannotated),
            "pseudo_labeled" => Some(Source::PseudoLabeled),
            _ => None,
        }
    }
}

/// A tokenized sentence with its gold label indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub tokens: Vec<Token>,
    pub gold_tags: Vec<usize>,
    pub revision: u32,
    pub source: Source,
}

impl Utterance {
    /// Builds an original-revision utterance, checking token text and tag count.
    pub fn new<S: Into<String>>(id: impl Into<String>, words: impl IntoIterator<Item = S>, gold_tags: Vec<usize>) -> Result<Self> {
        let id = id.into();
        let tokens: Vec<Token> = words
            .into_iter()
            .enumerate()
            .map(|(index, w)| Token { text: w.into(), index })
            .collect();
        if tokens.is_empty() {
            return Err(CorpusError::InvalidUtterance { id, reason: "no tokens".into() });
        }
        if let Some(t) = tokens.iter().find(|t| t.text.is_empty() || t.text.chars().any(char::is_whitespace)) {
            return Err(CorpusError::InvalidUtterance {
                id,
                reason: format!("token {} is empty or contains whitespace", t.index),
            });
        }
        if tokens.len() != gold_tags.len() {
            return Err(CorpusError::InvalidUtterance {
                id,
                reason: format!("{} tokens but {} tags", tokens.len(), gold_tags.len()),
            });
        }
        Ok(Utterance { id, tokens, gold_tags, revision: 0, source: Source::Original })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub entity_type: String,
    pub start: usize,
    pub end: usize,
}

impl fmt::Display for EntitySpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.entity_type, self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
    Unlabeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValidationMode {
    Strict,
    #[default]
    Repair,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub tag_set: TagSet,
    pub utterances: Vec<Utterance>,
    pub split: Split,
}

impl Corpus {
    /// Checks id uniqueness, label range and the all-`O` rule for unlabeled splits.
    pub fn new(tag_set: TagSet, utterances: Vec<Utterance>, split: Split) -> Result<Self> {
        let mut ids = HashSet::with_capacity(utterances.len());
        for u in &utterances {
            if !ids.insert(u.id.as_str()) {
                return Err(CorpusError::DuplicateId(u.id.clone()));
            }
            if u.gold_tags.iter().any(|&t| t >= tag_set.num_labels()) {
                return Err(CorpusError::InvalidUtterance { id: u.id.clone(), reason: "label index out of range".into() });
            }
            if split == Split::Unlabeled && u.gold_tags.iter().any(|&t| t != 0) {
                return Err(CorpusError::InvalidUtterance {
                    id: u.id.clone(),
                    reason: "unlabeled corpora must carry only O placeholders".into(),
                });
            }
        }
        Ok(Corpus { tag_set, utterances, split })
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn index(&self) -> HashMap<&str, usize> {
        self.utterances.iter().enumerate().map(|(i, u)| (u.id.as_str(), i)).collect()
    }

    pub fn get(&self, id: &str) -> Option<&Utterance> {
        self.utterances.iter().find(|u| u.id == id)
    }

    /// Copy with every tag reset to `O`.
    pub fn strip_labels(&self) -> Corpus {
        let utterances = self
            .utterances
            .iter()
            .map(|u| Utterance { gold_tags: vec![0; u.len()], ..u.clone() })
            .collect();
        Corpus { tag_set: self.tag_set.clone(), utterances, split: Split::Unlabeled }
    }
}

/// Checks BIO well-formedness; in repair mode every orphan `I-X` becomes `B-X`.
pub fn validate_bio(utterance: &Utterance, tag_set: &TagSet, mode: ValidationMode) -> Result<Utterance> {
    let mut out = utterance.clone();
    validate_tags(&mut out.gold_tags, tag_set, mode)?;
    Ok(out)
}

/// In-place form of [`validate_bio`] over a bare tag sequence.
pub fn validate_tags(tags: &mut [usize], tag_set: &TagSet, mode: ValidationMode) -> Result<()> {
    let mut prev = None;
    for (position, tag) in tags.iter_mut().enumerate() {
        if !tag_set.allowed_transition(prev, *tag) {
            match mode {
                ValidationMode::Strict => return Err(CorpusError::BioViolation { position, line: None }),
                ValidationMode::Repair => {
                    let t = tag_set.entity_of(*tag).expect("only I-X can be disallowed");
                    *tag = tag_set.begin(t);
                }
            }
        }
        prev = Some(*tag);
    }
    Ok(())
}

pub fn is_valid_bio(tags: &[usize], tag_set: &TagSet) -> bool {
    let mut prev = None;
    tags.iter().all(|&t| {
        let ok = t < tag_set.num_labels() && tag_set.allowed_transition(prev, t);
        prev = Some(t);
        ok
    })
}

/// Maximal `B-X (I-X)*` runs. Orphan `I-X` (unvalidated input) opens a new span.
pub fn extract_spans(tags: &[usize], tag_set: &TagSet) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for (i, &tag) in tags.iter().enumerate() {
        match tag_set.kind(tag) {
            LabelKind::Inside(t) if open.is_some_and(|(ot, _)| ot == t) => {}
            kind => {
                if let Some((t, start)) = open.take() {
                    spans.push(EntitySpan { entity_type: tag_set.entity_types[t].clone(), start, end: i });
                }
                if let LabelKind::Begin(t) | LabelKind::Inside(t) = kind {
                    open = Some((t, i));
                }
            }
        }
    }
    if let Some((t, start)) = open {
        spans.push(EntitySpan { entity_type: tag_set.entity_types[t].clone(), start, end: tags.len() });
    }
    spans
}

/// Inverse of [`extract_spans`] for non-overlapping spans.
pub fn render_spans(spans: &[EntitySpan], len: usize, tag_set: &TagSet) -> Vec<usize> {
    let mut tags = vec![0; len];
    for s in spans {
        let t = tag_set.type_index(&s.entity_type).expect("span type in tag set");
        tags[s.start] = tag_set.begin(t);
        for tag in &mut tags[s.start + 1..s.end] {
            *tag = tag_set.inside(t);
        }
    }
    tags
}

#[derive(Default)]
struct PendingBlock {
    id: Option<String>,
    revision: u32,
    source: Source,
    words: Vec<String>,
    tags: Vec<usize>,
    lines: Vec<usize>,
    meta_line: Option<usize>,
}

/// Reads two-column CoNLL (token, tag), tab or single-space separated.
///
/// `# id = ...`, `# revision = ...` and `# source = ...` lines before a block
/// set that utterance's metadata; other `# key = value` lines are skipped.
/// Blocks without an id get `u{n}` where `n` is the 1-based block number.
pub fn parse_conll<R: BufRead>(reader: R, tag_set: &TagSet, mode: ValidationMode, split: Split) -> Result<Corpus> {
    let mut utterances = Vec::new();
    let mut block = PendingBlock::default();

    let flush = |block: &mut PendingBlock, utterances: &mut Vec<Utterance>| -> Result<()> {
        if block.words.is_empty() {
            return Ok(());
        }
        let b = std::mem::take(block);
        let id = b.id.unwrap_or_else(|| format!("u{}", utterances.len() + 1));
        let mut u = Utterance::new(id, b.words, b.tags)?;
        u.revision = b.revision;
        u.source = b.source;
        let mut tags = u.gold_tags.clone();
        validate_tags(&mut tags, tag_set, mode).map_err(|e| match e {
            CorpusError::BioViolation { position, .. } => CorpusError::BioViolation { position, line: Some(b.lines[position]) },
            other => other,
        })?;
        u.gold_tags = tags;
        utterances.push(u);
        Ok(())
    };

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut block, &mut utterances)?;
            continue;
        }
        if let Some((key, value)) = metadata(line) {
            if !block.words.is_empty() {
                return Err(CorpusError::MisplacedComment { line: line_no });
            }
            block.meta_line.get_or_insert(line_no);
            match key {
                "id" => block.id = Some(value.to_string()),
                "revision" => {
                    block.revision = value.parse().map_err(|_| CorpusError::InvalidUtterance {
                        id: block.id.clone().unwrap_or_default(),
                        reason: format!("line {line_no}: bad revision `{value}`"),
                    })?
                }
                "source" => {
                    block.source = Source::parse(value).ok_or_else(|| CorpusError::InvalidUtterance {
                        id: block.id.clone().unwrap_or_default(),
                        reason: format!("line {line_no}: bad source `{value}`"),
                    })?
                }
                _ => {}
            }
            continue;
        }
        let cols: Vec<&str> = if line.contains('\t') { line.split('\t').collect() } else { line.split(' ').collect() };
        if cols.len() != 2 || cols.iter().any(|c| c.is_empty()) {
            return Err(CorpusError::RaggedLine { line: line_no, found: cols.len() });
        }
        let tag = tag_set
            .label_index(cols[1])
            .ok_or_else(|| CorpusError::UnknownLabel { line: line_no, label: cols[1].to_string() })?;
        block.words.push(cols[0].to_string());
        block.tags.push(tag);
        block.lines.push(line_no);
    }
    flush(&mut block, &mut utterances)?;
    if let Some(line) = block.meta_line {
        // metadata with no tokens after it
        return Err(CorpusError::MisplacedComment { line });
    }

    if utterances.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Corpus::new(tag_set.clone(), utterances, split)
}

fn metadata(line: &str) -> Option<(&str, &str)> {
    let rest = line.strip_prefix("# ")?;
    let (key, value) = rest.split_once(" = ")?;
    let key = key.trim();
    if key.is_empty() || key.contains(char::is_whitespace) {
        return None;
    }
    Some((key, value.trim()))
}

/// Writes `# id` comments, tab-separated token/tag rows and blank-line delimiters.
/// Revision and source are emitted only when they differ from the defaults.
pub fn write_conll<W: Write>(corpus: &Corpus, mut out: W) -> Result<()> {
    for u in &corpus.utterances {
        writeln!(out, "# id = {}", u.id)?;
        if u.revision != 0 {
            writeln!(out, "# revision = {}", u.revision)?;
        }
        if u.source != Source::Original {
            writeln!(out, "# source = {}", u.source.as_str())?;
        }
        for (tok, &tag) in u.tokens.iter().zip(&u.gold_tags) {
            writeln!(out, "{}\t{}", tok.text, corpus.tag_set.label_name(tag))?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn to_conll_string(corpus: &Corpus) -> String {
    let mut buf = Vec::new();
    write_conll(corpus, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("utf-8 corpus")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts() -> TagSet {
        TagSet::business_default()
    }

    fn tags(names: &[&str]) -> Vec<usize> {
        let t = ts();
        names.iter().map(|n| t.label_index(n).unwrap()).collect()
    }

    fn parse(s: &str, mode: ValidationMode) -> Result<Corpus> {
        parse_conll(s.as_bytes(), &ts(), mode, Split::Train)
    }

    #[test]
    fn tag_set_layout() {
        let t = ts();
        assert_eq!(t.num_labels(), 9);
        assert_eq!(t.label_name(0), "O");
        assert_eq!(t.label_name(t.begin(2)), "B-ORG");
        assert_eq!(t.label_name(t.inside(2)), "I-ORG");
        assert_eq!(t.kind(t.inside(1)), LabelKind::Inside(1));
        assert!(TagSet::new(["ORG", "ORG"]).is_err());
    }

    #[test]
    fn empty_stream_is_rejected() {
        assert!(matches!(parse("", ValidationMode::Repair), Err(CorpusError::EmptyCorpus)));
        assert!(matches!(parse("\n\n", ValidationMode::Repair), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn minimal_block() {
        let c = parse("Google B-ORG\ncrash O\n\n", ValidationMode::Strict).unwrap();
        assert_eq!(c.len(), 1);
        let u = &c.utterances[0];
        assert_eq!(u.id, "u1");
        assert_eq!(u.words().collect::<Vec<_>>(), ["Google", "crash"]);
        assert_eq!(u.gold_tags, tags(&["B-ORG", "O"]));
    }

    #[test]
    fn strict_mode_reports_line_of_violation() {
        let err = parse("zoom B-PROD\ncrash I-ORG\n\n", ValidationMode::Strict).unwrap_err();
        assert!(matches!(err, CorpusError::BioViolation { position: 1, line: Some(2) }), "{err}");
        let repaired = parse("zoom B-PROD\ncrash I-ORG\n\n", ValidationMode::Repair).unwrap();
        assert_eq!(repaired.utterances[0].gold_tags, tags(&["B-PROD", "B-ORG"]));
    }

    #[test]
    fn parse_errors_are_positioned() {
        assert!(matches!(parse("a O\nb B-FOO\n", ValidationMode::Repair), Err(CorpusError::UnknownLabel { line: 2, .. })));
        assert!(matches!(parse("a O x\n", ValidationMode::Repair), Err(CorpusError::RaggedLine { line: 1, found: 3 })));
        assert!(matches!(parse("a\n", ValidationMode::Repair), Err(CorpusError::RaggedLine { line: 1, found: 1 })));
        assert!(matches!(parse("a O\n# id = x\nb O\n", ValidationMode::Repair), Err(CorpusError::MisplacedComment { line: 2 })));
        assert!(matches!(
            parse("# id = a\nx O\n\n# id = a\ny O\n", ValidationMode::Repair),
            Err(CorpusError::DuplicateId(_))
        ));
    }

    #[test]
    fn id_comments_and_tabs() {
        let c = parse("# id = call-7\n#\tO\nhi\tO\n\nbye O\n", ValidationMode::Strict).unwrap();
        assert_eq!(c.utterances[0].id, "call-7");
        assert_eq!(c.utterances[0].tokens[0].text, "#");
        assert_eq!(c.utterances[1].id, "u2");
    }

    #[test]
    fn validate_examples() {
        let t = ts();
        let mut u = Utterance::new("x", ["a", "b", "c"], tags(&["O", "O", "O"])).unwrap();
        assert_eq!(validate_bio(&u, &t, ValidationMode::Strict).unwrap(), u);

        u = Utterance::new("x", ["a", "b"], tags(&["I-ORG", "O"])).unwrap();
        assert!(validate_bio(&u, &t, ValidationMode::Strict).is_err());
        assert_eq!(validate_bio(&u, &t, ValidationMode::Repair).unwrap().gold_tags, tags(&["B-ORG", "O"]));

        u = Utterance::new("x", ["a", "b"], tags(&["B-ORG", "I-PROD"])).unwrap();
        let r = validate_bio(&u, &t, ValidationMode::Repair).unwrap();
        assert_eq!(r.gold_tags, tags(&["B-ORG", "B-PROD"]));
        assert_eq!(r.revision, u.revision);
        let spans = extract_spans(&r.gold_tags, &t);
        assert_eq!(spans.len(), 2);
        assert!(spans.iter().all(|s| s.end - s.start == 1));
    }

    #[test]
    fn span_examples() {
        let t = ts();
        assert!(extract_spans(&tags(&["O", "O"]), &t).is_empty());
        assert_eq!(
            extract_spans(&tags(&["B-ORG", "I-ORG", "O"]), &t),
            vec![EntitySpan { entity_type: "ORG".into(), start: 0, end: 2 }]
        );
        assert_eq!(
            extract_spans(&tags(&["B-ORG", "B-ORG"]), &t),
            vec![
                EntitySpan { entity_type: "ORG".into(), start: 0, end: 1 },
                EntitySpan { entity_type: "ORG".into(), start: 1, end: 2 },
            ]
        );
    }

    /// Brute force: try every set of run boundaries and keep the segmentation
    /// whose segments are each a single well-formed entity or a single O.
    fn brute_force_spans(tags: &[usize], t: &TagSet) -> Vec<EntitySpan> {
        let n = tags.len();
        for mask in 0u32..(1 << n.saturating_sub(1)) {
            let mut cuts = vec![0];
            cuts.extend((1..n).filter(|i| mask & (1 << (i - 1)) != 0));
            cuts.push(n);
            let segs: Vec<(usize, usize)> = cuts.windows(2).map(|w| (w[0], w[1])).collect();
            let well_formed = segs.iter().all(|&(s, e)| match t.kind(tags[s]) {
                LabelKind::Outside => e - s == 1,
                LabelKind::Begin(x) => tags[s + 1..e].iter().all(|&g| t.kind(g) == LabelKind::Inside(x)),
                LabelKind::Inside(_) => false,
            });
            // maximal: no entity segment is followed by a continuation of itself
            let maximal = segs.iter().all(|&(s, e)| {
                e == n || t.entity_of(tags[s]).is_none() || t.kind(tags[e]) != LabelKind::Inside(t.entity_of(tags[s]).unwrap())
            });
            if well_formed && maximal {
                return segs
                    .into_iter()
                    .filter_map(|(s, e)| {
                        t.entity_of(tags[s]).map(|x| EntitySpan { entity_type: t.entity_types()[x].clone(), start: s, end: e })
                    })
                    .collect();
            }
        }
        panic!("no valid segmentation");
    }

    #[test]
    fn spans_match_brute_force_segmentation() {
        let t = TagSet::new(["ORG", "PROD"]).unwrap();
        // every valid BIO sequence up to length 5
        for n in 1..=5usize {
            for code in 0..t.num_labels().pow(n as u32) {
                let mut c = code;
                let seq: Vec<usize> = (0..n)
                    .map(|_| {
                        let l = c % t.num_labels();
                        c /= t.num_labels();
                        l
                    })
                    .collect();
                if !is_valid_bio(&seq, &t) {
                    continue;
                }
                let spans = extract_spans(&seq, &t);
                assert_eq!(spans, brute_force_spans(&seq, &t), "{seq:?}");
                assert_eq!(render_spans(&spans, n, &t), seq);
            }
        }
    }

    #[test]
    fn write_single_utterance() {
        let c = parse("Google B-ORG\ncrash O\n\n", ValidationMode::Strict).unwrap();
        assert_eq!(to_conll_string(&c), "# id = u1\nGoogle\tB-ORG\ncrash\tO\n\n");
    }

    #[test]
    fn revision_and_source_round_trip() {
        let mut c = parse("a B-ORG\n", ValidationMode::Strict).unwrap();
        c.utterances[0].revision = 3;
        c.utterances[0].source = Source::Reannotated;
        let back = parse(&to_conll_string(&c), ValidationMode::Strict).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unlabeled_requires_placeholders() {
        let u = Utterance::new("a", ["x"], vec![1]).unwrap();
        assert!(Corpus::new(ts(), vec![u.clone()], Split::Unlabeled).is_err());
        let c = Corpus::new(ts(), vec![u], Split::Train).unwrap();
        assert!(c.strip_labels().utterances[0].gold_tags.iter().all(|&t| t == 0));
    }
}
