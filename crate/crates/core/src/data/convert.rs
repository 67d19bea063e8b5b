//! Converters from the raw Frappe and MovieLens tag logs into the instance
//! format.
//!
//! Every selected column becomes one field; every distinct value of a column
//! becomes one one-hot feature named `<field>=<value>`. Feature ids are dense
//! and grouped by field in column order, and within a field follow first
//! appearance in the file, so conversion is deterministic.

use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use log::info;

use super::{Entry, FieldSchema, NegativeSampler, SamplingStats, SparseInstance, DEFAULT_NEGATIVE_LABEL};
use crate::error::{Error, Result};
use crate::numeric::SeededRng;

/// Column layout of a raw log table.
#[derive(Debug, Clone)]
pub struct TableFormat {
    pub delimiter: u8,
    /// `(column header, field name)` in field order.
    pub columns: Vec<(String, String)>,
    /// Field name corrupted by negative sampling.
    pub default_target: String,
}

impl TableFormat {
    /// `frappe.csv`: tab-separated, 10 context/app columns (the `cnt` column is ignored).
    pub fn frappe() -> Self {
        let cols =
            ["user", "item", "daytime", "weekday", "isweekend", "homework", "cost", "weather", "country", "city"];
        TableFormat {
            delimiter: b'\t',
            columns: cols.iter().map(|c| (c.to_string(), c.to_string())).collect(),
            default_target: "item".into(),
        }
    }

    /// MovieLens `tags.csv`: `userId,movieId,tag,timestamp`.
    pub fn movielens() -> Self {
        TableFormat {
            delimiter: b',',
            columns: vec![
                ("userId".into(), "user".into()),
                ("movieId".into(), "movie".into()),
                ("tag".into(), "tag".into()),
            ],
            default_target: "tag".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvertOptions {
    /// Negatives drawn per log.
    pub negatives: usize,
    /// Field to corrupt; `None` uses the format's default.
    pub target_field: Option<String>,
    pub negative_label: f64,
    pub seed: u64,
}

impl Default for ConvertOptions {
    fn default() -> Self {
        ConvertOptions { negatives: 2, target_field: None, negative_label: DEFAULT_NEGATIVE_LABEL, seed: 2019 }
    }
}

#[derive(Debug, Clone)]
pub struct Converted {
    pub instances: Vec<SparseInstance>,
    pub schema: FieldSchema,
    pub stats: SamplingStats,
}

pub fn convert_table<R: Read>(reader: R, format: &TableFormat, opts: &ConvertOptions) -> Result<Converted> {
    let mut rdr =
        csv::ReaderBuilder::new().delimiter(format.delimiter).has_headers(true).flexible(false).from_reader(reader);
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line() as usize);
        Error::Parse { line, msg: e.to_string() }
    };
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col_idx: Vec<usize> = format
        .columns
        .iter()
        .map(|(col, _)| {
            headers
                .iter()
                .position(|h| h.trim() == col)
                .ok_or_else(|| Error::Parse { line: 1, msg: format!("missing column {col:?}") })
        })
        .collect::<Result<_>>()?;
    let n_fields = format.columns.len();

    let mut vocab: Vec<HashMap<String, u32>> = vec![HashMap::new(); n_fields];
    let mut values: Vec<Vec<String>> = vec![Vec::new(); n_fields];
    let mut rows: Vec<u32> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        for (f, &c) in col_idx.iter().enumerate() {
            let raw = record.get(c).unwrap_or_default().trim();
            let next = vocab[f].len() as u32;
            let local = *vocab[f].entry(raw.to_owned()).or_insert_with(|| {
                values[f].push(raw.to_owned());
                next
            });
            rows.push(local);
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 1, msg: "no log records".into() });
    }

    let mut offsets = Vec::with_capacity(n_fields);
    let mut feature_to_field = Vec::new();
    let mut feature_names = Vec::new();
    for (f, vals) in values.iter().enumerate() {
        offsets.push(feature_to_field.len() as u32);
        for v in vals {
            feature_to_field.push(f as u32);
            feature_names.push(format!("{}={v}", format.columns[f].1));
        }
    }
    let schema = FieldSchema::new(n_fields, feature_to_field)?
        .with_feature_names(feature_names)?
        .with_field_names(format.columns.iter().map(|(_, name)| name.clone()).collect())?;

    let logs: Vec<SparseInstance> = rows
        .chunks(n_fields)
        .map(|row| {
            let entries =
                row.iter().enumerate().map(|(f, &local)| Entry::new(offsets[f] + local, f as u32, 1.0)).collect();
            SparseInstance::new(entries, 1.0)
        })
        .collect::<Result<_>>()?;

    let target_name = opts.target_field.as_deref().unwrap_or(&format.default_target);
    let target = format
        .columns
        .iter()
        .position(|(_, name)| name == target_name)
        .ok_or_else(|| Error::Parameter(format!("unknown target field {target_name:?}")))?;

    let sampler = NegativeSampler::new(&schema, target as u32, &logs)?.with_negative_label(opts.negative_label);
    let mut rng = SeededRng::new(opts.seed, "negatives");
    let (instances, stats) = sampler.augment(&logs, opts.negatives, &mut rng)?;
    info!(
        "converted {} logs into {} records ({} features, {} fields, {} skipped negatives)",
        stats.logs,
        instances.len(),
        schema.n_features(),
        schema.n_fields(),
        stats.skipped
    );
    Ok(Converted { instances, schema, stats })
}

pub fn convert_file(path: &Path, format: &TableFormat, opts: &ConvertOptions) -> Result<Converted> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    convert_table(file, format, opts)
}
