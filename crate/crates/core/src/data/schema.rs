use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SparseInstance;
use crate::error::{Error, Result};

/// Total mapping from feature id to field id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSchema {
    n_fields: usize,
    feature_to_field: Vec<u32>,
    feature_names: Option<Vec<String>>,
    field_names: Option<Vec<String>>,
}

impl FieldSchema {
    pub fn new(n_fields: usize, feature_to_field: Vec<u32>) -> Result<Self> {
        let schema = FieldSchema { n_fields, feature_to_field, feature_names: None, field_names: None };
        schema.validate()?;
        Ok(schema)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features() {
            return Err(Error::Schema(format!("{} feature names for {} features", names.len(), self.n_features())));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn with_field_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_fields {
            return Err(Error::Schema(format!("{} field names for {} fields", names.len(), self.n_fields)));
        }
        self.field_names = Some(names);
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.n_fields == 0 {
            return Err(Error::Schema("schema has no fields".into()));
        }
        let mut used = vec![false; self.n_fields];
        for (feature, &field) in self.feature_to_field.iter().enumerate() {
            let f = field as usize;
            if f >= self.n_fields {
                return Err(Error::Schema(format!(
                    "feature {feature} maps to field {field}, but n = {}",
                    self.n_fields
                )));
            }
            used[f] = true;
        }
        if let Some(missing) = used.iter().position(|u| !u) {
            return Err(Error::Schema(format!("field {missing} has no features; field ids must be contiguous")));
        }
        Ok(())
    }

    /// n
    pub fn n_fields(&self) -> usize {
        self.n_fields
    }

    /// m
    pub fn n_features(&self) -> usize {
        self.feature_to_field.len()
    }

    pub fn field_of(&self, feature: u32) -> Option<u32> {
        self.feature_to_field.get(feature as usize).copied()
    }

    pub fn feature_to_field(&self) -> &[u32] {
        &self.feature_to_field
    }

    pub fn features_of_field(&self, field: u32) -> Vec<u32> {
        (0..self.feature_to_field.len() as u32).filter(|&f| self.feature_to_field[f as usize] == field).collect()
    }

    pub fn feature_name(&self, feature: u32) -> Option<&str> {
        self.feature_names.as_ref()?.get(feature as usize).map(String::as_str)
    }

    pub fn field_name(&self, field: u32) -> String {
        self.field_names
            .as_ref()
            .and_then(|n| n.get(field as usize).cloned())
            .unwrap_or_else(|| format!("field{field}"))
    }

    pub fn field_names(&self) -> Option<&[String]> {
        self.field_names.as_deref()
    }

    /// Writes `field<TAB>feature<TAB>name` lines, preceded by
    /// `#field<TAB>id<TAB>name` comment lines when field names are known.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        if let Some(names) = &self.field_names {
            for (i, name) in names.iter().enumerate() {
                writeln!(w, "#field\t{i}\t{name}").map_err(io)?;
            }
        }
        for (feature, &field) in self.feature_to_field.iter().enumerate() {
            let name = self.feature_name(feature as u32).map(str::to_owned).unwrap_or_else(|| feature.to_string());
            writeln!(w, "{field}\t{feature}\t{name}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut field_names: Vec<(usize, String)> = Vec::new();
        let mut rows: Vec<(u32, usize, String)> = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let lineno = i + 1;
            if let Some(rest) = line.strip_prefix("#field\t") {
                let (id, name) = rest
                    .split_once('\t')
                    .ok_or_else(|| Error::Parse { line: lineno, msg: "malformed field-name line".into() })?;
                let id = id.parse().map_err(|_| Error::Parse { line: lineno, msg: format!("bad field id {id:?}") })?;
                field_names.push((id, name.to_owned()));
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let (field, feature, name) = (parts.next(), parts.next(), parts.next());
            let bad =
                || Error::Parse { line: lineno, msg: format!("expected field<TAB>feature<TAB>name, got {line:?}") };
            let field: u32 = field.and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let feature: usize = feature.and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            rows.push((field, feature, name.unwrap_or_default().to_owned()));
        }
        let m = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let mut map = vec![u32::MAX; m];
        let mut names = vec![String::new(); m];
        for (field, feature, name) in rows {
            if map[feature] != u32::MAX && map[feature] != field {
                return Err(Error::Schema(format!("feature {feature} listed in fields {} and {field}", map[feature])));
            }
            map[feature] = field;
            names[feature] = name;
        }
        if let Some(gap) = map.iter().position(|&f| f == u32::MAX) {
            return Err(Error::Schema(format!("feature {gap} missing from schema file")));
        }
        let n = map.iter().map(|&f| f as usize + 1).max().unwrap_or(0);
        let mut schema = FieldSchema::new(n, map)?.with_feature_names(names)?;
        if !field_names.is_empty() {
            field_names.sort();
            let names: Vec<String> = field_names.into_iter().map(|(_, n)| n).collect();
            schema = schema.with_field_names(names)?;
        }
        Ok(schema)
    }
}

/// Infers the schema observed in a corpus: m = max feature id + 1,
/// n = max field id + 1.
pub fn build_schema<'a, I>(corpus: I) -> Result<FieldSchema>
where
    I: IntoIterator<Item = &'a SparseInstance>,
{
    let mut map: Vec<u32> = Vec::new();
    let mut any = false;
    for inst in corpus {
        any = true;
        for e in inst.entries() {
            let f = e.feature as usize;
            if f >= map.len() {
                map.resize(f + 1, u32::MAX);
            }
            if map[f] == u32::MAX {
                map[f] = e.field;
            } else if map[f] != e.field {
                return Err(Error::Schema(format!(
                    "feature {} assigned to fields {} and {}",
                    e.feature, map[f], e.field
                )));
            }
        }
    }
    if !any {
        return Err(Error::Schema("empty corpus".into()));
    }
    if let Some(gap) = map.iter().position(|&f| f == u32::MAX) {
        return Err(Error::Schema(format!("feature {gap} never observed; ids must be dense")));
    }
    let n = map.iter().map(|&f| f as usize + 1).max().unwrap_or(0);
    FieldSchema::new(n, map)
}
