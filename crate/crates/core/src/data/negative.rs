use std::collections::HashSet;

use log::debug;

use super::{FieldSchema, SparseInstance};
use crate::error::{Error, Result};
use crate::numeric::SeededRng;

pub const DEFAULT_NEGATIVE_LABEL: f64 = -1.0;
pub const DEFAULT_MAX_ATTEMPTS: usize = 100;

/// Corrupts one field of observed logs to produce negative examples.
///
/// Each negative replaces the log's feature in `target_field` with a uniformly
/// drawn different feature of that field. Corruptions that reproduce an
/// observed positive are redrawn up to `max_attempts` times, after which the
/// negative is skipped.
#[derive(Debug)]
pub struct NegativeSampler {
    target_field: u32,
    candidates: Vec<u32>,
    positives: HashSet<Vec<u32>>,
    negative_label: f64,
    max_attempts: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SamplingStats {
    pub logs: usize,
    pub negatives: usize,
    pub skipped: usize,
}

impl NegativeSampler {
    pub fn new(schema: &FieldSchema, target_field: u32, positives: &[SparseInstance]) -> Result<Self> {
        if target_field as usize >= schema.n_fields() {
            return Err(Error::Sampling(format!(
                "target field {target_field} out of range (n = {})",
                schema.n_fields()
            )));
        }
        let candidates = schema.features_of_field(target_field);
        if candidates.len() < 2 {
            return Err(Error::Sampling(format!(
                "field {target_field} has {} feature(s); need at least 2 to corrupt",
                candidates.len()
            )));
        }
        Ok(NegativeSampler {
            target_field,
            candidates,
            positives: positives.iter().map(SparseInstance::feature_ids).collect(),
            negative_label: DEFAULT_NEGATIVE_LABEL,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        })
    }

    pub fn with_negative_label(mut self, label: f64) -> Self {
        self.negative_label = label;
        self
    }

    pub fn with_max_attempts(mut self, attempts: usize) -> Self {
        self.max_attempts = attempts.max(1);
        self
    }

    /// Draws up to `k` negatives for one log. The second value counts skips.
    pub fn sample(&self, log: &SparseInstance, k: usize, rng: &mut SeededRng) -> Result<(Vec<SparseInstance>, usize)> {
        if k == 0 {
            return Err(Error::Parameter("negatives per log must be >= 1".into()));
        }
        let slot = log
            .entries()
            .iter()
            .position(|e| e.field == self.target_field)
            .ok_or_else(|| Error::Sampling(format!("log has no feature in field {}", self.target_field)))?;
        let current = log.entries()[slot].feature;
        let current_idx = self
            .candidates
            .binary_search(&current)
            .map_err(|_| Error::Sampling(format!("feature {current} is not in field {}", self.target_field)))?;

        let mut out = Vec::with_capacity(k);
        let mut skipped = 0;
        for _ in 0..k {
            let mut accepted = None;
            for _ in 0..self.max_attempts {
                // uniform over the other features of the field
                let mut r = rng.below(self.candidates.len() - 1);
                if r >= current_idx {
                    r += 1;
                }
                let mut entries = log.entries().to_vec();
                entries[slot].feature = self.candidates[r];
                let neg = SparseInstance::new(entries, self.negative_label)?;
                if !self.positives.contains(&neg.feature_ids()) {
                    accepted = Some(neg);
                    break;
                }
            }
            match accepted {
                Some(neg) => out.push(neg),
                None => skipped += 1,
            }
        }
        Ok((out, skipped))
    }

    /// Emits each log (label +1) followed by its negatives.
    pub fn augment(
        &self,
        logs: &[SparseInstance],
        k: usize,
        rng: &mut SeededRng,
    ) -> Result<(Vec<SparseInstance>, SamplingStats)> {
        let mut out = Vec::with_capacity(logs.len() * (k + 1));
        let mut stats = SamplingStats { logs: logs.len(), ..Default::default() };
        for log in logs {
            let (negs, skipped) = self.sample(log, k, rng)?;
            let mut pos = log.clone();
            pos.set_target(1.0);
            out.push(pos);
            stats.negatives += negs.len();
            stats.skipped += skipped;
            out.extend(negs);
        }
        if stats.skipped > 0 {
            debug!("negative sampling skipped {} corruptions", stats.skipped);
        }
        Ok((out, stats))
    }
}
