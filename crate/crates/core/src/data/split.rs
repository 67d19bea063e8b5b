use serde::{Deserialize, Serialize};

use super::SparseInstance;
use crate::error::{Error, Result};
use crate::numeric::SeededRng;

pub const DEFAULT_RATIOS: [f64; 3] = [0.7, 0.2, 0.1];

/// Train / probe / test partition of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<SparseInstance>,
    pub probe: Vec<SparseInstance>,
    pub test: Vec<SparseInstance>,
    pub ratios: [f64; 3],
}

impl DatasetSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.probe.len(), self.test.len())
    }
}

/// Partition sizes for `n` items: probe and test are floored, the remainder
/// goes to train.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<(usize, usize, usize)> {
    if ratios.iter().any(|r| !(*r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!("ratios {ratios:?} must be positive and sum to 1")));
    }
    if n < 3 {
        return Err(Error::Split(format!("cannot split {n} instances three ways")));
    }
    // the nudge keeps products such as 0.29 * 100 from flooring one short
    let probe = (ratios[1] * n as f64 + 1e-9).floor() as usize;
    let test = (ratios[2] * n as f64 + 1e-9).floor() as usize;
    Ok((n - probe - test, probe, test))
}

/// Shuffles with `rng` and cuts the permutation into train, probe and test.
pub fn split_dataset(data: Vec<SparseInstance>, ratios: [f64; 3], rng: &mut SeededRng) -> Result<DatasetSplit> {
    let (n_train, n_probe, _) = split_sizes(data.len(), ratios)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    rng.shuffle(&mut order);

    let mut slots: Vec<Option<SparseInstance>> = data.into_iter().map(Some).collect();
    let mut take = |idx: &[usize]| -> Vec<SparseInstance> {
        idx.iter().map(|&i| slots[i].take().expect("permutation visits each index once")).collect()
    };
    let train = take(&order[..n_train]);
    let probe = take(&order[n_train..n_train + n_probe]);
    let test = take(&order[n_train + n_probe..]);
    Ok(DatasetSplit { train, probe, test, ratios })
}
