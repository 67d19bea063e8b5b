use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use super::metrics::mean_std;
use super::report::{evaluate_model, EvalOptions, MetricsReport};
use crate::data::{read_instances, split_dataset, FieldSchema, DEFAULT_RATIOS};
use crate::error::{Error, Result};
use crate::model::{load_model, IfmModel};
use crate::numeric::SeededRng;
use crate::train::{train, train_from, TrainConfig, TrainOutcome};

/// One swept hyperparameter: a `TrainConfig` key and its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<serde_json::Value>,
}

/// An experiment: a dataset, a base training config, an optional grid and a
/// list of seeds. Every grid point runs once per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Instance file holding the whole dataset.
    pub data: PathBuf,
    pub schema: PathBuf,
    pub out: PathBuf,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Seed of the train/probe/test split, shared by every run.
    #[serde(default = "default_split_seed")]
    pub split_seed: u64,
    #[serde(default = "default_ratios")]
    pub ratios: [f64; 3],
    /// Model file whose `w0`, `w`, `V` initialize every run.
    #[serde(default)]
    pub pretrain_from: Option<PathBuf>,
    #[serde(default)]
    pub clamp: Option<[f64; 2]>,
    #[serde(default)]
    pub auc: bool,
    #[serde(default)]
    pub train: TrainConfig,
    /// Cartesian grid over all entries; empty means a single base run.
    #[serde(default)]
    pub sweep: Vec<SweepSpec>,
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_split_seed() -> u64 {
    2019
}

fn default_ratios() -> [f64; 3] {
    DEFAULT_RATIOS
}

impl ExperimentConfig {
    /// Parses a TOML file; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::Parameter(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data, &mut cfg.schema, &mut cfg.out] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = &mut cfg.pretrain_from {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for p in [Some(&self.data), Some(&self.schema), self.pretrain_from.as_ref()].into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::Parameter(format!("{} does not exist", p.display())));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Parameter("experiment needs at least one seed".into()));
        }
        for s in &self.sweep {
            if s.values.is_empty() {
                return Err(Error::Parameter(format!("sweep over {} has no values", s.param)));
            }
        }
        self.train.validate()?;
        for point in self.grid() {
            self.config_at(&point, self.seeds[0])?;
        }
        Ok(())
    }

    /// Grid points in row-major order of the sweep list.
    pub fn grid(&self) -> Vec<Vec<(String, serde_json::Value)>> {
        let mut points = vec![Vec::new()];
        for spec in &self.sweep {
            points = points
                .into_iter()
                .flat_map(|p| {
                    spec.values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((spec.param.clone(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        points
    }

    /// The base config with `point` applied and the seed replaced.
    pub fn config_at(&self, point: &[(String, serde_json::Value)], seed: u64) -> Result<TrainConfig> {
        let mut value = serde_json::to_value(&self.train).map_err(|e| Error::Format(e.to_string()))?;
        let obj = value.as_object_mut().expect("config serializes to an object");
        for (key, v) in point {
            if !obj.contains_key(key) && key != "sample_c" {
                return Err(Error::Parameter(format!("unknown sweep parameter {key:?}")));
            }
            obj.insert(key.clone(), v.clone());
        }
        obj.insert("seed".into(), seed.into());
        let cfg: TrainConfig = serde_json::from_value(value).map_err(|e| Error::Parameter(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn point_label(point: &[(String, serde_json::Value)]) -> String {
    if point.is_empty() {
        return "base".into();
    }
    point
        .iter()
        .map(|(k, v)| match v {
            serde_json::Value::String(s) => format!("{k}={s}"),
            other => format!("{k}={other}"),
        })
        .collect::<Vec<_>>()
        .join(",")
}

/// Mean and standard deviation of test RMSE over the seeds of one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub point: String,
    pub runs: usize,
    pub mean_rmse: f64,
    pub std_rmse: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub reports: Vec<MetricsReport>,
    pub summary: Vec<SummaryRow>,
}

pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut s = String::from("point\truns\ttest_rmse_mean\ttest_rmse_std\n");
    for r in rows {
        let _ = writeln!(s, "{}\t{}\t{:.6}\t{:.6}", r.point, r.runs, r.mean_rmse, r.std_rmse);
    }
    s
}

fn run_file_stem(label: &str, seed: u64) -> String {
    let clean: String =
        label.chars().map(|c| if c.is_ascii_alphanumeric() || "=.-_".contains(c) { c } else { '_' }).collect();
    format!("{clean}-seed{seed}")
}

/// Runs every grid point for every seed on a fixed split. Each finished run
/// writes `<point>-seed<s>.report` and `.log` under `out`; runs whose report
/// already exists are loaded instead of retrained.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let schema = FieldSchema::read(&cfg.schema)?;
    let data = read_instances(&cfg.data, Some(&schema))?;
    let split = split_dataset(data, cfg.ratios, &mut SeededRng::new(cfg.split_seed, "split"))?;
    let pretrained: Option<IfmModel> = match &cfg.pretrain_from {
        Some(p) => Some(load_model(p)?.0),
        None => None,
    };
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;

    let mut reports = Vec::new();
    let mut summary = Vec::new();
    for point in cfg.grid() {
        let label = point_label(&point);
        let mut rmses = Vec::new();
        for &seed in &cfg.seeds {
            let stem = run_file_stem(&label, seed);
            let report_path = cfg.out.join(format!("{stem}.report"));
            if report_path.is_file() {
                let r = MetricsReport::load(&report_path)?;
                info!("{stem}: reusing finished run (test RMSE {:.5})", r.test_rmse);
                rmses.push(r.test_rmse);
                reports.push(r);
                continue;
            }
            let tc = cfg.config_at(&point, seed)?;
            let start = Instant::now();
            let outcome = run_one(&tc, &schema, &split, pretrained.as_ref())?;
            outcome.history.write_log(&cfg.out.join(format!("{stem}.log")))?;
            let opts = EvalOptions {
                sampling: tc.sampling(),
                seed: tc.seed,
                clamp: cfg.clamp.map(|[lo, hi]| (lo, hi)),
                with_auc: cfg.auc,
            };
            let mut report = evaluate_model(&outcome.model, &schema, &split.test, &opts, &stem)?;
            report.runtime_seconds = start.elapsed().as_secs_f64();
            report.best_epoch = outcome.history.best_epoch;
            report.probe_rmse = outcome.history.best().map(|r| r.probe_rmse);
            report.save(&report_path)?;
            info!("{stem}: test RMSE {:.5}", report.test_rmse);
            rmses.push(report.test_rmse);
            reports.push(report);
        }
        let (mean_rmse, std_rmse) = mean_std(&rmses);
        summary.push(SummaryRow { point: label, runs: rmses.len(), mean_rmse, std_rmse });
    }
    let summary_path = cfg.out.join("summary.tsv");
    std::fs::write(&summary_path, format_summary(&summary)).map_err(|e| Error::io(&summary_path, e))?;
    Ok(ExperimentOutcome { reports, summary })
}

fn run_one(
    tc: &TrainConfig,
    schema: &FieldSchema,
    split: &crate::data::DatasetSplit,
    pretrained: Option<&IfmModel>,
) -> Result<TrainOutcome> {
    match pretrained {
        Some(p) => {
            let root = SeededRng::new(tc.seed, "train");
            let mut model = IfmModel::new(schema.n_fields(), schema.n_features(), &tc.model, &root.derive("init"))?;
            model.load_fm(&p.fm)?;
            train_from(tc, model, split)
        }
        None => train(tc, schema, split),
    }
}
