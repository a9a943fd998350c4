//! Finding and fixing annotation errors in BIO-tagged corpora.
//!
//! The pipeline: split the training set into folds, train a CRF on every
//! fold's complement, score each predicted entity by the log-probability gap
//! between the predicted and the gold tag, send utterances whose gap exceeds
//! a threshold to human review, merge the verdicts, and finally train a
//! compact student tagger, optionally distilled from a teacher's pseudo
//! labels.
//!
//! ```
//! use relabel_core::corpus::{parse_conll, Split, TagSet, ValidationMode};
//!
//! let ts = TagSet::business_default();
//! let text = "# id = call-1\nopen\tO\nzoom\tB-PROD\n\n";
//! let corpus = parse_conll(text.as_bytes(), &ts, ValidationMode::Repair, Split::Train).unwrap();
//! assert_eq!(corpus.utterances[0].id, "call-1");
//! ```

pub mod active_loop;
pub mod corpus;
pub mod distill;
pub mod jsonl;
pub mod metrics;
pub mod noise_lab;
pub mod tagger;

pub use corpus::{Corpus, EntitySpan, Split, TagSet, Utterance};
pub use tagger::{Capacity, ModelWeights, TrainConfig};
