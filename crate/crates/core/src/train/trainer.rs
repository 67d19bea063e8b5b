use std::path::Path;
use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::backward::{batch_gradients, Perturbation};
use super::loss::LossKind;
use super::optimizer::{OptimizerKind, OptimizerState};
use crate::data::{batch_iter, DatasetSplit, FieldSchema, SparseInstance};
use crate::error::{Error, Result};
use crate::model::io::{model_container, model_from_container};
use crate::model::{
    enumerate_interactions, forward, sample_interactions, Container, FieldTable, FmParams, IfmModel, Mode, ModelConfig,
    SampleScheme,
};
use crate::numeric::SeededRng;

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub model: ModelConfig,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub keep_prob: f64,
    pub lambda_f: f64,
    /// Evaluate only this many interactions per instance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_c: Option<usize>,
    /// Take the `c` largest-norm pairs instead of sampling.
    pub sample_top_c: bool,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Pretrain `V`, `w`, `w0` with an FM before training.
    pub pretrain: bool,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            learning_rate: 0.05,
            optimizer: OptimizerKind::Adagrad,
            batch_size: 128,
            keep_prob: 1.0,
            lambda_f: 0.0,
            sample_c: None,
            sample_top_c: false,
            max_epochs: 100,
            patience: 10,
            seed: 2019,
            pretrain: false,
            loss: LossKind::Squared,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::Parameter(format!("keep probability must be in (0, 1], got {}", self.keep_prob)));
        }
        if !(self.lambda_f >= 0.0) {
            return Err(Error::Parameter(format!("lambda_F must be >= 0, got {}", self.lambda_f)));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Parameter(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.sample_c == Some(0) {
            return Err(Error::Parameter("sample count c must be >= 1".into()));
        }
        Ok(())
    }

    pub fn sampling(&self) -> Option<(usize, SampleScheme)> {
        self.sample_c.map(|c| {
            let scheme = if self.sample_top_c { SampleScheme::TopC } else { SampleScheme::Proportional };
            (c, scheme)
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Parameter(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_rmse: f64,
    pub probe_rmse: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch with the lowest probe RMSE.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch.and_then(|e| self.epochs.get(e - 1))
    }

    /// Training log, one `epoch,train_rmse,probe_rmse,seconds` line per epoch.
    pub fn log_lines(&self) -> Vec<String> {
        self.epochs
            .iter()
            .map(|r| format!("{},{:.17e},{:.17e},{:.3}", r.epoch, r.train_rmse, r.probe_rmse, r.seconds))
            .collect()
    }

    pub fn write_log(&self, path: &Path) -> Result<()> {
        let mut text = String::from("epoch,train_rmse,probe_rmse,seconds\n");
        for line in self.log_lines() {
            text.push_str(&line);
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Result of [`train`]: the best-epoch model, the history and the optimizer
/// state at the end of the last epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: IfmModel,
    pub history: TrainHistory,
    pub optimizer: OptimizerState,
}

impl TrainOutcome {
    /// Model, optimizer accumulators and config in one container.
    pub fn checkpoint(&self, cfg: &TrainConfig) -> Result<Container> {
        let mut c = model_container(&self.model, "checkpoint", config_value(cfg)?)?;
        self.optimizer.write_into(&mut c);
        Ok(c)
    }
}

pub(crate) fn config_value(cfg: &TrainConfig) -> Result<serde_json::Value> {
    serde_json::to_value(cfg).map_err(|e| Error::Format(e.to_string()))
}

/// Loads a checkpoint written by [`TrainOutcome::checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(IfmModel, OptimizerState, TrainConfig)> {
    let mut c = Container::load(path)?;
    let (model, cfg) = model_from_container(&mut c)?;
    let cfg: TrainConfig = serde_json::from_value(cfg).map_err(|e| Error::Format(e.to_string()))?;
    let opt = OptimizerState::read_from(cfg.optimizer, cfg.learning_rate, &c)?;
    Ok((model, opt, cfg))
}

/// Evaluation-mode predictions (no dropout). With `sampling`, instance `idx`
/// draws its pairs from a stream derived from `seed` and `idx`, so repeated
/// evaluations agree.
pub fn predict_dataset(
    model: &IfmModel,
    data: &[SparseInstance],
    sampling: Option<(usize, SampleScheme)>,
    seed: u64,
) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    let table = FieldTable::build(model);
    let root = SeededRng::new(seed, "eval-sample");
    data.par_iter()
        .enumerate()
        .map(|(idx, inst)| {
            let all = enumerate_interactions(inst, model.pair_policy);
            let pairs = match sampling {
                Some((c, scheme)) => sample_interactions(&table, &all, c, scheme, &mut root.derive(idx))?,
                None => all,
            };
            Ok(forward(model, inst, &table, pairs, None)?.pred)
        })
        .collect()
}

pub(crate) fn rmse_of(preds: &[f64], data: &[SparseInstance]) -> f64 {
    let sq: f64 = preds.iter().zip(data).map(|(p, x)| (p - x.target()).powi(2)).sum();
    (sq / data.len() as f64).sqrt()
}

/// Trains a freshly initialized model on `split.train`, selecting the epoch
/// with the lowest probe RMSE.
pub fn train(cfg: &TrainConfig, schema: &FieldSchema, split: &DatasetSplit) -> Result<TrainOutcome> {
    cfg.validate()?;
    let root = SeededRng::new(cfg.seed, "train");
    let mut model = IfmModel::new(schema.n_fields(), schema.n_features(), &cfg.model, &root.derive("init"))?;
    if cfg.pretrain && cfg.model.mode != Mode::Fm {
        let (fm, _) = pretrain_fm(cfg, schema, split)?;
        model.load_fm(&fm)?;
    }
    train_from(cfg, model, split)
}

/// Trains mode FM to early stopping with the same embedding size and
/// optimizer settings, returning its `w0`, `w` and `V`.
pub fn pretrain_fm(cfg: &TrainConfig, schema: &FieldSchema, split: &DatasetSplit) -> Result<(FmParams, TrainHistory)> {
    let fm_cfg = TrainConfig {
        model: ModelConfig { mode: Mode::Fm, ..cfg.model.clone() },
        sample_c: None,
        pretrain: false,
        ..cfg.clone()
    };
    info!("pretraining FM embeddings");
    let out = train(&fm_cfg, schema, split)?;
    Ok((out.model.fm, out.history))
}

/// Trains starting from `model`.
pub fn train_from(cfg: &TrainConfig, mut model: IfmModel, split: &DatasetSplit) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    let mut optimizer = OptimizerState::new(cfg.optimizer, cfg.learning_rate)?;
    let mut history = TrainHistory::default();
    if cfg.max_epochs == 0 {
        return Ok(TrainOutcome { model, history, optimizer });
    }
    if split.train.is_empty() || split.probe.is_empty() {
        return Err(Error::Split("training needs nonempty train and probe sets".into()));
    }
    let root = SeededRng::new(cfg.seed, "train");
    let sampling = cfg.sampling();
    let mut best: Option<(f64, IfmModel)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let plan = batch_iter(split.train.len(), cfg.batch_size, true, &mut root.derive(format!("shuffle{epoch}")))?;
        let perturb =
            Perturbation { keep_prob: cfg.keep_prob, sample: sampling, rng: root.derive(format!("epoch{epoch}")) };
        let mut sq_err = 0.0;
        for (b, batch) in plan.iter().enumerate() {
            let res = batch_gradients(&model, &split.train, batch, cfg.lambda_f, cfg.loss, Some(&perturb))?;
            if !res.objective.is_finite() || !res.grads.all_finite() {
                return Err(Error::Divergence { epoch, batch: b + 1, msg: format!("objective {}", res.objective) });
            }
            optimizer.step(&mut model, &res.grads)?;
            sq_err += res.sq_err;
        }
        let train_rmse = (sq_err / split.train.len() as f64).sqrt();
        let probe_preds = predict_dataset(&model, &split.probe, sampling, cfg.seed)?;
        let probe_rmse = rmse_of(&probe_preds, &split.probe);
        if !probe_rmse.is_finite() {
            return Err(Error::Divergence { epoch, batch: plan.len(), msg: "probe RMSE is not finite".into() });
        }
        let seconds = start.elapsed().as_secs_f64();
        history.epochs.push(EpochRecord { epoch, train_rmse, probe_rmse, seconds });
        debug!("epoch {epoch}: train {train_rmse:.5} probe {probe_rmse:.5} ({seconds:.1}s)");
        if best.as_ref().is_none_or(|(b, _)| probe_rmse < *b) {
            best = Some((probe_rmse, model.clone()));
            history.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    let (best_rmse, best_model) = best.expect("at least one epoch ran");
    info!(
        "{}: best probe RMSE {best_rmse:.5} at epoch {} of {}",
        cfg.model.mode,
        history.best_epoch.unwrap_or(0),
        history.epochs.len()
    );
    Ok(TrainOutcome { model: best_model, history, optimizer })
}
