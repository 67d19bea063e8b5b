use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::backward::Gradients;
use crate::error::{Error, Result};
use crate::model::{Container, IfmModel};
use crate::numeric::DenseMatrix;

pub const ADAGRAD_EPS: f64 = 1e-8;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adagrad,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adagrad" => Ok(OptimizerKind::Adagrad),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Parameter(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// Per-group accumulators: adagrad keeps the sum of squared gradients in
/// `first`; adam keeps the two moment estimates.
#[derive(Debug, Clone, PartialEq, Default)]
struct Slot {
    first: Vec<f64>,
    second: Vec<f64>,
}

/// Optimizer state. Sparse groups (`w`, `V`) are updated lazily: only the
/// rows present in the gradient move, and only their accumulators change.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    step: u64,
    slots: BTreeMap<String, Slot>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0) || !learning_rate.is_finite() {
            return Err(Error::Parameter(format!("learning rate must be > 0, got {learning_rate}")));
        }
        Ok(OptimizerState { kind, learning_rate, step: 0, slots: BTreeMap::new() })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter group present in `grads`.
    pub fn step(&mut self, model: &mut IfmModel, grads: &Gradients) -> Result<()> {
        self.step += 1;
        let rule = Rule { kind: self.kind, lr: self.learning_rate, step: self.step };

        let mut dense: Vec<(String, Vec<f64>)> = vec![("w0".into(), vec![grads.w0])];
        dense.extend(grads.dense_groups().into_iter().map(|(n, g)| (n, g.to_vec())));
        for (name, g) in &dense {
            let params = model
                .param_group_mut(name)
                .ok_or_else(|| Error::Shape(format!("model has no parameter group {name}")))?;
            if params.len() != g.len() {
                return Err(Error::Shape(format!(
                    "gradient for {name} has {} entries, parameters {}",
                    g.len(),
                    params.len()
                )));
            }
            let slot = slot(&mut self.slots, rule.kind, name, params.len());
            rule.apply(params, g, slot, 0);
        }

        let m = model.n_features();
        let k = model.k();
        {
            let w = &mut model.fm.w;
            let slot = slot(&mut self.slots, rule.kind, "w", m);
            for (&i, &g) in &grads.w {
                let i = i as usize;
                if i >= m {
                    return Err(Error::Shape(format!("gradient row {i} beyond {m} features")));
                }
                rule.apply(&mut w[i..=i], &[g], slot, i);
            }
        }
        let slot = slot(&mut self.slots, rule.kind, "V", m * k);
        for (&i, g) in &grads.v {
            let i = i as usize;
            if i >= m || g.len() != k {
                return Err(Error::Shape(format!("embedding gradient row {i} of length {}", g.len())));
            }
            rule.apply(model.fm.v.row_mut(i), g, slot, i * k);
        }
        Ok(())
    }

    /// Adds the state as `opt.*` tensors.
    pub fn write_into(&self, c: &mut Container) {
        c.push_vec("opt.step", &[self.step as f64]);
        for (name, slot) in &self.slots {
            if !slot.first.is_empty() {
                c.push_vec(format!("opt.{name}.first"), &slot.first);
            }
            if !slot.second.is_empty() {
                c.push_vec(format!("opt.{name}.second"), &slot.second);
            }
        }
    }

    /// Restores state written by [`OptimizerState::write_into`].
    pub fn read_from(kind: OptimizerKind, learning_rate: f64, c: &Container) -> Result<Self> {
        let mut state = OptimizerState::new(kind, learning_rate)?;
        state.step = c
            .get("opt.step")
            .map(|t| t.get(0, 0) as u64)
            .ok_or_else(|| Error::Format("checkpoint has no optimizer step".into()))?;
        for (name, t) in &c.tensors {
            let Some(rest) = name.strip_prefix("opt.") else { continue };
            let Some((group, which)) = rest.rsplit_once('.') else { continue };
            let slot = state.slots.entry(group.to_owned()).or_default();
            match which {
                "first" => slot.first = t.as_slice().to_vec(),
                "second" => slot.second = t.as_slice().to_vec(),
                _ => return Err(Error::Format(format!("unexpected optimizer tensor {name}"))),
            }
        }
        Ok(state)
    }

    /// Accumulator tensors, for inspection.
    pub fn accumulators(&self) -> Vec<(String, DenseMatrix)> {
        let mut c = Container::new("opt", serde_json::Value::Null);
        self.write_into(&mut c);
        c.tensors
    }
}

fn slot<'a>(slots: &'a mut BTreeMap<String, Slot>, kind: OptimizerKind, name: &str, len: usize) -> &'a mut Slot {
    let s = slots.entry(name.to_owned()).or_default();
    match kind {
        OptimizerKind::Sgd => {}
        OptimizerKind::Adagrad => s.first.resize(len, 0.0),
        OptimizerKind::Adam => {
            s.first.resize(len, 0.0);
            s.second.resize(len, 0.0);
        }
    }
    s
}

struct Rule {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
}

impl Rule {
    /// Updates `params` (located at `offset` within its group) with `grads`.
    fn apply(&self, params: &mut [f64], grads: &[f64], slot: &mut Slot, offset: usize) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adagrad => {
                let acc = &mut slot.first[offset..offset + params.len()];
                for ((p, g), a) in params.iter_mut().zip(grads).zip(acc) {
                    *a += g * g;
                    *p -= self.lr * g / (*a + ADAGRAD_EPS).sqrt();
                }
            }
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                let range = offset..offset + params.len();
                let m = &mut slot.first[range.clone()];
                let v = &mut slot.second[range];
                for (((p, g), m), v) in params.iter_mut().zip(grads).zip(m).zip(v) {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}
