//! Entity-level precision, recall and F1 with exact span matching.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{extract_spans, Corpus, EntitySpan};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("utterance `{0}` is missing from the predicted corpus")]
    MissingUtterance(String),
    #[error("utterance `{id}` has {pred} predicted tokens but {gold} gold tokens")]
    LengthMismatch { id: String, pred: usize, gold: usize },
    #[error("predicted and gold corpora have different tag sets")]
    TagSetMismatch,
    #[error("predicted corpus has {pred} utterances, gold has {gold}")]
    CountMismatch { pred: usize, gold: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    /// Percentages; 0/0 is defined as 0.
    pub fn scores(&self) -> Scores {
        let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        let precision = pct(self.tp, self.tp + self.fp);
        let recall = pct(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Scores { precision, recall, f1 }
    }

    fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-type and micro-averaged overall scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_type: BTreeMap<String, Scores>,
    pub overall: Scores,
    pub counts: BTreeMap<String, Counts>,
    /// Tag-set order, for display.
    #[serde(skip)]
    type_order: Vec<String>,
}

/// One row of the machine-readable report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(rename = "type")]
    pub entity_type: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

pub const OVERALL: &str = "overall";

impl EvalReport {
    pub fn f1(&self, entity_type: &str) -> f64 {
        self.per_type.get(entity_type).map_or(0.0, |s| s.f1)
    }

    pub fn overall_counts(&self) -> Counts {
        let mut total = Counts::default();
        for c in self.counts.values() {
            total.add(*c);
        }
        total
    }

    /// One row per type (tag-set order) followed by the overall row.
    pub fn rows(&self) -> Vec<ReportRow> {
        let row = |name: &str, s: &Scores, c: &Counts| ReportRow {
            entity_type: name.to_string(),
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
        };
        let order: Vec<&String> =
            if self.type_order.is_empty() { self.per_type.keys().collect() } else { self.type_order.iter().collect() };
        let mut rows: Vec<ReportRow> = order.into_iter().map(|t| row(t, &self.per_type[t], &self.counts[t])).collect();
        rows.push(row(OVERALL, &self.overall, &self.overall_counts()));
        rows
    }

    /// Tab-separated table with header `type precision recall f1 tp fp fn`;
    /// scores printed with two decimals.
    pub fn write_tsv<W: Write>(&self, out: W) -> Result<(), MetricsError> {
        let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
        w.write_record(["type", "precision", "recall", "f1", "tp", "fp", "fn"])?;
        for r in self.rows() {
            w.write_record([
                r.entity_type,
                format!("{:.2}", r.precision),
                format!("{:.2}", r.recall),
                format!("{:.2}", r.f1),
                r.tp.to_string(),
                r.fp.to_string(),
                r.fn_.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8")
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>9} {:>9} {:>9} {:>6} {:>6} {:>6}", "type", "precision", "recall", "f1", "tp", "fp", "fn")?;
        for r in self.rows() {
            writeln!(
                f,
                "{:<10} {:>9.2} {:>9.2} {:>9.2} {:>6} {:>6} {:>6}",
                r.entity_type, r.precision, r.recall, r.f1, r.tp, r.fp, r.fn_
            )?;
        }
        Ok(())
    }
}

/// Scores `pred` against `gold`, pairing utterances by id.
pub fn entity_f1(pred: &Corpus, gold: &Corpus) -> Result<EvalReport, MetricsError> {
    if pred.tag_set != gold.tag_set {
        return Err(MetricsError::TagSetMismatch);
    }
    if pred.len() != gold.len() {
        return Err(MetricsError::CountMismatch { pred: pred.len(), gold: gold.len() });
    }
    let index = pred.index();
    let mut counts: BTreeMap<String, Counts> =
        gold.tag_set.entity_types().iter().map(|t| (t.clone(), Counts::default())).collect();

    for g in &gold.utterances {
        let p = index
            .get(g.id.as_str())
            .map(|&i| &pred.utterances[i])
            .ok_or_else(|| MetricsError::MissingUtterance(g.id.clone()))?;
        if p.len() != g.len() {
            return Err(MetricsError::LengthMismatch { id: g.id.clone(), pred: p.len(), gold: g.len() });
        }
        let gold_spans: HashSet<EntitySpan> = extract_spans(&g.gold_tags, &gold.tag_set).into_iter().collect();
        let pred_spans: HashSet<EntitySpan> = extract_spans(&p.gold_tags, &pred.tag_set).into_iter().collect();
        for s in &pred_spans {
            let c = counts.get_mut(&s.entity_type).expect("type in tag set");
            if gold_spans.contains(s) {
                c.tp += 1;
            } else {
                c.fp += 1;
            }
        }
        for s in gold_spans.difference(&pred_spans) {
            counts.get_mut(&s.entity_type).expect("type in tag set").fn_ += 1;
        }
    }

    let per_type = counts.iter().map(|(t, c)| (t.clone(), c.scores())).collect();
    let mut total = Counts::default();
    for c in counts.values() {
        total.add(*c);
    }
    Ok(EvalReport { per_type, overall: total.scores(), counts, type_order: gold.tag_set.entity_types().to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{render_spans, Split, TagSet, Utterance};

    fn corpus(ts: &TagSet, spans: &[Vec<(&str, usize, usize)>], len: usize) -> Corpus {
        let utts = spans
            .iter()
            .enumerate()
            .map(|(i, ss)| {
                let ss: Vec<EntitySpan> =
                    ss.iter().map(|&(t, s, e)| EntitySpan { entity_type: t.into(), start: s, end: e }).collect();
                let words: Vec<String> = (0..len).map(|k| format!("w{k}")).collect();
                Utterance::new(format!("u{i}"), words, render_spans(&ss, len, ts)).unwrap()
            })
            .collect();
        Corpus::new(ts.clone(), utts, Split::Test).unwrap()
    }

    #[test]
    fn identity_is_perfect() {
        let ts = TagSet::business_default();
        let g = corpus(&ts, &[vec![("ORG", 0, 2), ("PER", 3, 4)], vec![("GPE", 1, 2)]], 5);
        let r = entity_f1(&g, &g).unwrap();
        assert_eq!(r.overall, Scores { precision: 100.0, recall: 100.0, f1: 100.0 });
        assert_eq!(r.f1("ORG"), 100.0);
    }

    #[test]
    fn extra_prediction_of_unseen_type() {
        let ts = TagSet::business_default();
        let g = corpus(&ts, &[vec![("ORG", 0, 1)]], 5);
        let p = corpus(&ts, &[vec![("ORG", 0, 1), ("PROD", 3, 4)]], 5);
        let r = entity_f1(&p, &g).unwrap();
        assert_eq!(r.per_type["ORG"], Scores { precision: 100.0, recall: 100.0, f1: 100.0 });
        assert_eq!(r.per_type["PROD"], Scores { precision: 0.0, recall: 0.0, f1: 0.0 });
        assert_eq!(r.overall.precision, 50.0);
        assert_eq!(r.overall.recall, 100.0);
        assert!((r.overall.f1 - 66.67).abs() < 0.005);
        assert_eq!(r.counts["PROD"], Counts { tp: 0, fp: 1, fn_: 0 });
    }

    #[test]
    fn boundary_mismatch_gets_no_credit() {
        let ts = TagSet::business_default();
        let g = corpus(&ts, &[vec![("ORG", 0, 2)]], 3);
        let p = corpus(&ts, &[vec![("ORG", 0, 1)]], 3);
        let r = entity_f1(&p, &g).unwrap();
        assert_eq!(r.counts["ORG"], Counts { tp: 0, fp: 1, fn_: 1 });
        assert_eq!(r.f1("ORG"), 0.0);
    }

    #[test]
    fn misaligned_corpora_are_rejected() {
        let ts = TagSet::business_default();
        let g = corpus(&ts, &[vec![("ORG", 0, 1)]], 3);
        let p = corpus(&ts, &[vec![("ORG", 0, 1)]], 4);
        assert!(matches!(entity_f1(&p, &g), Err(MetricsError::LengthMismatch { .. })));
        let mut renamed = g.clone();
        renamed.utterances[0].id = "other".into();
        assert!(matches!(entity_f1(&renamed, &g), Err(MetricsError::MissingUtterance(_))));
    }

    #[test]
    fn tsv_has_fixed_columns() {
        let ts = TagSet::business_default();
        let g = corpus(&ts, &[vec![("ORG", 0, 1)]], 2);
        let tsv = entity_f1(&g, &g).unwrap().to_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "type\tprecision\trecall\tf1\ttp\tfp\tfn");
        assert_eq!(lines[1], "PER\t0.00\t0.00\t0.00\t0\t0\t0");
        assert_eq!(lines[3], "ORG\t100.00\t100.00\t100.00\t1\t0\t0");
        assert_eq!(lines[5], "overall\t100.00\t100.00\t100.00\t1\t0\t0");
    }
}
