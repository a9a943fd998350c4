//! Plain-text model files.
//!
//! ```text
//! relabel-crf 1
//! capacity teacher
//! hash_bits 20
//! entity_types PER PROD ORG GPE
//! transition
//! <L rows of L space-separated weights, -inf for forbidden>
//! emission <count>
//! <feature id> <label index> <weight>      (sorted, zero weights omitted)
//! end
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so a model survives
//! write/read bit-for-bit and equal models serialize to equal bytes.

use std::io::{BufRead, Write};
use std::path::Path;

use thiserror::Error;

use super::{Capacity, FeatureId, ModelWeights};
use crate::corpus::TagSet;

const MAGIC: &str = "relabel-crf";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFormatError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn malformed(line: usize, msg: impl Into<String>) -> ModelFormatError {
    ModelFormatError::Malformed { line, msg: msg.into() }
}

impl ModelWeights {
    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii model")
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let l = self.params.num_labels;
        writeln!(out, "{MAGIC} {VERSION}")?;
        writeln!(out, "capacity {}", self.capacity)?;
        writeln!(out, "hash_bits {}", self.hash_bits)?;
        writeln!(out, "entity_types {}", self.tag_set.entity_types().join(" "))?;
        writeln!(out, "transition")?;
        for row in self.params.transition.chunks(l) {
            let cells: Vec<String> = row.iter().map(|w| w.to_string()).collect();
            writeln!(out, "{}", cells.join(" "))?;
        }
        let mut triples: Vec<(FeatureId, usize, f64)> = self
            .row_ids
            .iter()
            .enumerate()
            .flat_map(|(r, &id)| (0..l).map(move |y| (id, y, r)))
            .map(|(id, y, r)| (id, y, self.params.emission[r * l + y]))
            .filter(|&(_, _, w)| w != 0.0)
            .collect();
        triples.sort_by_key(|&(id, y, _)| (id, y));
        writeln!(out, "emission {}", triples.len())?;
        for (id, y, w) in triples {
            writeln!(out, "{} {} {}", id.0, y, w)?;
        }
        writeln!(out, "end")?;
        out.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ModelWeights, ModelFormatError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }

    pub fn from_text(text: &str) -> Result<ModelWeights, ModelFormatError> {
        Self::read_from(text.as_bytes())
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<ModelWeights, ModelFormatError> {
        let mut lines = reader.lines().enumerate().map(|(i, l)| l.map(|s| (i + 1, s)));
        let mut next = |what: &str| -> Result<(usize, String), ModelFormatError> {
            lines.next().transpose()?.ok_or_else(|| malformed(0, format!("unexpected end of file, expected {what}")))
        };

        let (n, header) = next("header")?;
        let version = header
            .strip_prefix(MAGIC)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| malformed(n, "not a relabel-crf model"))?;
        if version != VERSION {
            return Err(ModelFormatError::UnsupportedVersion(version));
        }
        let (n, cap) = next("capacity")?;
        let capacity: Capacity = field(&cap, "capacity", n)?.parse().map_err(|e: String| malformed(n, e))?;
        let (n, hb) = next("hash_bits")?;
        let hash_bits: u32 = field(&hb, "hash_bits", n)?.parse().map_err(|_| malformed(n, "bad hash_bits"))?;
        let (n, et) = next("entity_types")?;
        let types: Vec<&str> = field(&et, "entity_types", n)?.split_whitespace().collect();
        let tag_set = TagSet::new(types).map_err(|e| malformed(n, e.to_string()))?;
        let l = tag_set.num_labels();

        let (n, t) = next("transition")?;
        if t != "transition" {
            return Err(malformed(n, "expected `transition`"));
        }
        let mut model = ModelWeights::new(tag_set, capacity);
        model.hash_bits = hash_bits;
        for from in 0..l {
            let (n, row) = next("transition row")?;
            let cells: Vec<f64> = row
                .split(' ')
                .map(|c| c.parse::<f64>().map_err(|_| malformed(n, format!("bad weight `{c}`"))))
                .collect::<Result<_, _>>()?;
            if cells.len() != l {
                return Err(malformed(n, format!("expected {l} transition weights, found {}", cells.len())));
            }
            for (to, w) in cells.into_iter().enumerate() {
                let forbidden = model.params.transition[from * l + to] == f64::NEG_INFINITY;
                if forbidden != (w == f64::NEG_INFINITY) || w.is_nan() || w == f64::INFINITY {
                    return Err(malformed(n, format!("transition {from}->{to} = {w} violates the BIO mask")));
                }
                model.params.transition[from * l + to] = w;
            }
        }

        let (n, em) = next("emission")?;
        let count: usize = field(&em, "emission", n)?.parse().map_err(|_| malformed(n, "bad emission count"))?;
        for _ in 0..count {
            let (n, line) = next("emission triple")?;
            let mut parts = line.split(' ');
            let (Some(id), Some(y), Some(w), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                return Err(malformed(n, "expected `<feature> <label> <weight>`"));
            };
            let id: u32 = id.parse().map_err(|_| malformed(n, "bad feature id"))?;
            let y: usize = y.parse().map_err(|_| malformed(n, "bad label index"))?;
            let w: f64 = w.parse().map_err(|_| malformed(n, "bad weight"))?;
            if y >= l || !w.is_finite() {
                return Err(malformed(n, "label out of range or non-finite weight"));
            }
            model.set_emission_weight(FeatureId(id), y, w);
        }
        let (n, end) = next("end")?;
        if end != "end" {
            return Err(malformed(n, "expected `end`"));
        }
        Ok(model)
    }
}

fn field<'a>(line: &'a str, key: &str, n: usize) -> Result<&'a str, ModelFormatError> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| malformed(n, format!("expected `{key} ...`")))
}
