use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{auc, rmse};
use crate::data::{FieldSchema, SparseInstance};
use crate::error::{Error, Result};
use crate::model::{FieldTable, IfmModel, SampleScheme};
use crate::train::predict_dataset;

/// One row of the field-importance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldPairImportance {
    pub field_a: String,
    pub field_b: String,
    pub norm: f64,
    pub proportion: f64,
}

/// `‖F(a, b)‖` for every unordered pair of distinct fields with its share of
/// the total, sorted by decreasing norm (ties keep field order).
pub fn field_importance_report(model: &IfmModel, schema: &FieldSchema) -> Result<Vec<FieldPairImportance>> {
    if model.iam.field.is_none() || !model.mode.uses_field_aspect() {
        return Err(Error::Contract(format!("mode {} has no field aspect to report", model.mode)));
    }
    if schema.n_fields() != model.n_fields {
        return Err(Error::Schema(format!("schema has {} fields, model {}", schema.n_fields(), model.n_fields)));
    }
    let table = FieldTable::build(model);
    let n = model.n_fields;
    let mut rows = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            rows.push(FieldPairImportance {
                field_a: schema.field_name(a as u32),
                field_b: schema.field_name(b as u32),
                norm: table.norm(a as u32, b as u32),
                proportion: 0.0,
            });
        }
    }
    let total: f64 = rows.iter().map(|r| r.norm).sum();
    let uniform = 1.0 / rows.len().max(1) as f64;
    for r in &mut rows {
        r.proportion = if total > 0.0 { r.norm / total } else { uniform };
    }
    rows.sort_by(|x, y| y.norm.total_cmp(&x.norm));
    Ok(rows)
}

/// Outcome of evaluating one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub run: String,
    pub mode: String,
    pub test_rmse: f64,
    pub auc: Option<f64>,
    pub param_count: usize,
    pub runtime_seconds: f64,
    pub best_epoch: Option<usize>,
    pub probe_rmse: Option<f64>,
    pub field_importance: Vec<FieldPairImportance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    pub sampling: Option<(usize, SampleScheme)>,
    pub seed: u64,
    /// Clip predictions into `[lo, hi]` before scoring.
    pub clamp: Option<(f64, f64)>,
    pub with_auc: bool,
}

/// Test RMSE (and optionally AUC) of `model` on `data`, plus its parameter
/// count and, when it has a field aspect, the importance table.
pub fn evaluate_model(
    model: &IfmModel,
    schema: &FieldSchema,
    data: &[SparseInstance],
    opts: &EvalOptions,
    run: &str,
) -> Result<MetricsReport> {
    let mut preds = predict_dataset(model, data, opts.sampling, opts.seed)?;
    if let Some((lo, hi)) = opts.clamp {
        preds.iter_mut().for_each(|p| *p = p.clamp(lo, hi));
    }
    let targets: Vec<f64> = data.iter().map(SparseInstance::target).collect();
    let field_importance =
        if model.mode.uses_field_aspect() { field_importance_report(model, schema)? } else { Vec::new() };
    Ok(MetricsReport {
        run: run.to_owned(),
        mode: model.mode.to_string(),
        test_rmse: rmse(&preds, &targets)?,
        auc: if opts.with_auc { Some(auc(&preds, &targets)?) } else { None },
        param_count: model.summary().total,
        runtime_seconds: 0.0,
        best_epoch: None,
        probe_rmse: None,
        field_importance,
    })
}

pub const REPORT_HEADER: &str = "# ifm-report v1";

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| v.to_string())
}

impl MetricsReport {
    /// Tab-separated `key value` lines after a fixed header line; each
    /// importance row is `pair field_a field_b norm proportion`. Reals are
    /// printed with round-trip precision.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{REPORT_HEADER}");
        let _ = writeln!(s, "run\t{}", self.run);
        let _ = writeln!(s, "mode\t{}", self.mode);
        let _ = writeln!(s, "test_rmse\t{:?}", self.test_rmse);
        let _ = writeln!(s, "auc\t{}", fmt_opt(self.auc.map(|v| format!("{v:?}"))));
        let _ = writeln!(s, "param_count\t{}", self.param_count);
        let _ = writeln!(s, "runtime_seconds\t{:.3}", self.runtime_seconds);
        let _ = writeln!(s, "best_epoch\t{}", fmt_opt(self.best_epoch));
        let _ = writeln!(s, "probe_rmse\t{}", fmt_opt(self.probe_rmse.map(|v| format!("{v:?}"))));
        for r in &self.field_importance {
            let _ = writeln!(s, "pair\t{}\t{}\t{:?}\t{:?}", r.field_a, r.field_b, r.norm, r.proportion);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, REPORT_HEADER)) => {}
            _ => return Err(Error::Parse { line: 1, msg: "missing report header".into() }),
        }
        let mut r = MetricsReport {
            run: String::new(),
            mode: String::new(),
            test_rmse: f64::NAN,
            auc: None,
            param_count: 0,
            runtime_seconds: 0.0,
            best_epoch: None,
            probe_rmse: None,
            field_importance: Vec::new(),
        };
        for (i, line) in lines {
            let lineno = i + 1;
            let err = |msg: &str| Error::Parse { line: lineno, msg: msg.to_owned() };
            let num = |v: &str| v.parse::<f64>().map_err(|_| err("bad number"));
            let cols: Vec<&str> = line.split('\t').collect();
            match cols.as_slice() {
                ["run", v] => r.run = (*v).to_owned(),
                ["mode", v] => r.mode = (*v).to_owned(),
                ["test_rmse", v] => r.test_rmse = num(v)?,
                ["auc", "-"] => r.auc = None,
                ["auc", v] => r.auc = Some(num(v)?),
                ["param_count", v] => r.param_count = v.parse().map_err(|_| err("bad count"))?,
                ["runtime_seconds", v] => r.runtime_seconds = num(v)?,
                ["best_epoch", "-"] => r.best_epoch = None,
                ["best_epoch", v] => r.best_epoch = Some(v.parse().map_err(|_| err("bad epoch"))?),
                ["probe_rmse", "-"] => r.probe_rmse = None,
                ["probe_rmse", v] => r.probe_rmse = Some(num(v)?),
                ["pair", a, b, norm, prop] => r.field_importance.push(FieldPairImportance {
                    field_a: (*a).to_owned(),
                    field_b: (*b).to_owned(),
                    norm: num(norm)?,
                    proportion: num(prop)?,
                }),
                [""] => {}
                _ => return Err(err("unrecognized report line")),
            }
        }
        Ok(r)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        MetricsReport::from_text(&text)
    }
}
