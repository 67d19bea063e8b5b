use super::forward::{FieldTable, InteractionPair};
use crate::error::{Error, Result};
use crate::numeric::SeededRng;

/// How pairs are chosen when only `c` of them are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleScheme {
    /// Without replacement, probability proportional to the field-importance norm.
    #[default]
    Proportional,
    /// The `c` pairs with the largest norms; ties keep enumeration order.
    TopC,
}

/// Picks `c` of `pairs` by the norms of their field-importance vectors. The
/// result keeps enumeration order. With `c >= pairs.len()` every pair is
/// returned and `rng` is not touched.
pub fn sample_interactions(
    table: &FieldTable,
    pairs: &[InteractionPair],
    c: usize,
    scheme: SampleScheme,
    rng: &mut SeededRng,
) -> Result<Vec<InteractionPair>> {
    if c == 0 {
        return Err(Error::Parameter("sample count c must be >= 1".into()));
    }
    if c >= pairs.len() {
        return Ok(pairs.to_vec());
    }
    let weights: Vec<f64> = pairs.iter().map(|p| table.norm(p.field_i, p.field_j)).collect();
    let chosen = match scheme {
        SampleScheme::Proportional => weighted_without_replacement(&weights, c, rng),
        SampleScheme::TopC => top_c(&weights, c),
    };
    Ok(chosen.into_iter().map(|idx| pairs[idx]).collect())
}

/// Indices of `c` items drawn without replacement with probability
/// proportional to `weights`, in ascending index order. Uses one exponential
/// key `ln(u) / w` per item and keeps the `c` largest. All-zero weights fall
/// back to uniform.
pub fn weighted_without_replacement(weights: &[f64], c: usize, rng: &mut SeededRng) -> Vec<usize> {
    let uniform = weights.iter().all(|&w| !(w > 0.0));
    let mut keys: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(idx, &w)| {
            let u = rng.open_uniform();
            let w = if uniform { 1.0 } else { w };
            let key = if w > 0.0 { u.ln() / w } else { f64::NEG_INFINITY };
            (key, idx)
        })
        .collect();
    keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<usize> = keys.into_iter().take(c).map(|(_, idx)| idx).collect();
    out.sort_unstable();
    out
}

fn top_c(weights: &[f64], c: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    idx.truncate(c);
    idx.sort_unstable();
    idx
}
