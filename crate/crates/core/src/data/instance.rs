use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FieldSchema;
use crate::error::{Error, Result};

/// One nonzero coordinate of an input vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub feature: u32,
    pub field: u32,
    pub value: f64,
}

impl Entry {
    pub fn new(feature: u32, field: u32, value: f64) -> Self {
        Entry { feature, field, value }
    }
}

/// Training or test example: nonzero entries sorted by feature id, plus the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseInstance {
    entries: Vec<Entry>,
    target: f64,
}

impl SparseInstance {
    /// Sorts entries by feature, drops zero values and rejects duplicates or
    /// non-finite numbers.
    pub fn new(mut entries: Vec<Entry>, target: f64) -> Result<Self> {
        if !target.is_finite() {
            return Err(Error::Parameter(format!("target {target}")));
        }
        entries.retain(|e| e.value != 0.0);
        if let Some(e) = entries.iter().find(|e| !e.value.is_finite()) {
            return Err(Error::Parameter(format!("feature {} has value {}", e.feature, e.value)));
        }
        entries.sort_by_key(|e| e.feature);
        if let Some(w) = entries.windows(2).find(|w| w[0].feature == w[1].feature) {
            return Err(Error::Parameter(format!("duplicate feature {}", w[0].feature)));
        }
        Ok(SparseInstance { entries, target })
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn set_target(&mut self, target: f64) {
        self.target = target;
    }

    /// p(p-1)/2 for p nonzero features.
    pub fn pair_count(&self) -> usize {
        let p = self.entries.len();
        p * p.saturating_sub(1) / 2
    }

    pub fn feature_ids(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.feature).collect()
    }

    pub fn check_schema(&self, schema: &FieldSchema) -> Result<()> {
        for e in &self.entries {
            match schema.field_of(e.feature) {
                None => {
                    return Err(Error::Schema(format!(
                        "feature {} out of range (m = {})",
                        e.feature,
                        schema.n_features()
                    )))
                }
                Some(f) if f != e.field => {
                    return Err(Error::Schema(format!(
                        "feature {} tagged with field {} but schema says {f}",
                        e.feature, e.field
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Parses one `label field:feature:value ...` line. `lineno` is only used in
/// error messages.
pub fn parse_instance(line: &str, lineno: usize, schema: Option<&FieldSchema>) -> Result<SparseInstance> {
    let err = |msg: String| Error::Parse { line: lineno, msg };
    let mut tokens = line.split_whitespace();
    let label = tokens.next().ok_or_else(|| err("empty line".into()))?;
    let target: f64 = label.parse().map_err(|_| err(format!("bad label {label:?}")))?;
    if !target.is_finite() {
        return Err(err(format!("bad label {label:?}")));
    }
    let mut entries = Vec::new();
    for tok in tokens {
        let mut parts = tok.split(':');
        let (field, feature, value) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c), None) => (a, b, c),
            _ => return Err(err(format!("malformed token {tok:?}, expected field:feature:value"))),
        };
        let field: u32 = field.parse().map_err(|_| err(format!("bad field id in {tok:?}")))?;
        let feature: u32 = feature.parse().map_err(|_| err(format!("bad feature id in {tok:?}")))?;
        let value: f64 = value.parse().map_err(|_| err(format!("bad value in {tok:?}")))?;
        if !value.is_finite() {
            return Err(err(format!("non-finite value in {tok:?}")));
        }
        if let Some(s) = schema {
            if field as usize >= s.n_fields() {
                return Err(err(format!("field {field} out of range (n = {})", s.n_fields())));
            }
            match s.field_of(feature) {
                None => return Err(err(format!("feature {feature} out of range (m = {})", s.n_features()))),
                Some(f) if f != field => {
                    return Err(err(format!("feature {feature} belongs to field {f}, not {field}")))
                }
                _ => {}
            }
        }
        entries.push(Entry::new(feature, field, value));
    }
    SparseInstance::new(entries, target).map_err(|e| err(e.to_string()))
}

pub fn format_instance(inst: &SparseInstance) -> String {
    let mut s = format!("{}", inst.target);
    for e in &inst.entries {
        let _ = write!(s, " {}:{}:{}", e.field, e.feature, e.value);
    }
    s
}

/// Reads an instance stream; `#` lines and blank lines are skipped.
pub fn read_instances_from<R: Read>(reader: R, schema: Option<&FieldSchema>) -> Result<Vec<SparseInstance>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push(parse_instance(trimmed, i + 1, schema)?);
    }
    Ok(out)
}

pub fn read_instances(path: &Path, schema: Option<&FieldSchema>) -> Result<Vec<SparseInstance>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_instances_from(file, schema).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse { line, msg: format!("{}: {msg}", path.display()) },
        other => other,
    })
}

pub fn write_instances(path: &Path, data: &[SparseInstance]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for inst in data {
        writeln!(w, "{}", format_instance(inst)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
