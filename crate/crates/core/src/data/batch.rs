use crate::error::{Error, Result};
use crate::numeric::SeededRng;

/// One epoch's visiting order, cut into mini-batches of indices.
#[derive(Debug, Clone)]
pub struct BatchPlan {
    order: Vec<usize>,
    batch_size: usize,
}

impl BatchPlan {
    pub fn iter(&self) -> std::slice::Chunks<'_, usize> {
        self.order.chunks(self.batch_size)
    }

    pub fn len(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

/// Plans batches over `len` instances. With `shuffle` the order is a
/// permutation drawn from `rng`; otherwise dataset order is kept.
pub fn batch_iter(len: usize, batch_size: usize, shuffle: bool, rng: &mut SeededRng) -> Result<BatchPlan> {
    if batch_size == 0 {
        return Err(Error::Parameter("batch size must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..len).collect();
    if shuffle {
        rng.shuffle(&mut order);
    }
    Ok(BatchPlan { order, batch_size })
}
