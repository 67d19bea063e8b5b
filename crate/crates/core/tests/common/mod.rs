#![allow(dead_code, clippy::needless_range_loop)]

use ifm::data::{Entry, FieldSchema, SparseInstance};
use ifm::model::{FieldAspect, IfmModel, Mode, ModelConfig};
use ifm::numeric::SeededRng;

pub const N_FIELDS: usize = 4;
pub const PER_FIELD: usize = 3;
pub const M: usize = N_FIELDS * PER_FIELD;

pub fn tiny_config(mode: Mode, raw: bool) -> ModelConfig {
    ModelConfig {
        mode,
        k: 8,
        k_f: 4,
        k_a: 4,
        tau: 0.7,
        non_factorized_f: raw,
        hidden: vec![5, 3],
        init_sigma: 0.6,
        ..Default::default()
    }
}

/// Random tiny model with every parameter group perturbed away from its
/// initial zeros.
pub fn tiny_model(mode: Mode, raw: bool, seed: u64) -> IfmModel {
    let mut model = IfmModel::new(N_FIELDS, M, &tiny_config(mode, raw), &SeededRng::new(seed, "tiny")).unwrap();
    let mut rng = SeededRng::new(seed, "tiny-extra");
    model.fm.w0 = rng.gaussian(0.3);
    model.fm.w.iter_mut().for_each(|w| *w = rng.gaussian(0.3));
    if let Some(a) = &mut model.iam.attention {
        a.h.iter_mut().for_each(|h| *h = rng.gaussian(1.0));
        a.b.iter_mut().for_each(|b| *b = rng.gaussian(0.2));
    }
    if let Some(mlp) = &mut model.mlp {
        for layer in &mut mlp.layers {
            layer.z.iter_mut().for_each(|z| *z = rng.gaussian(0.2));
        }
    }
    model
}

pub fn tiny_schema() -> FieldSchema {
    FieldSchema::new(N_FIELDS, (0..M).map(|i| (i / PER_FIELD) as u32).collect()).unwrap()
}

/// One active feature per field, values in [0.5, 1.5).
pub fn tiny_instance(rng: &mut SeededRng) -> SparseInstance {
    let entries = (0..N_FIELDS)
        .map(|f| {
            let feature = (f * PER_FIELD + rng.below(PER_FIELD)) as u32;
            Entry::new(feature, f as u32, 0.5 + rng.uniform())
        })
        .collect();
    SparseInstance::new(entries, rng.gaussian(1.0)).unwrap()
}

/// Random subset of the 12 features (possibly several per field, possibly
/// fewer than two in total).
pub fn ragged_instance(rng: &mut SeededRng) -> SparseInstance {
    let mut entries = Vec::new();
    for i in 0..M {
        if rng.bernoulli(0.4) {
            entries.push(Entry::new(i as u32, (i / PER_FIELD) as u32, rng.uniform() * 2.0 - 1.0));
        }
    }
    SparseInstance::new(entries, rng.gaussian(1.0)).unwrap()
}

pub fn tiny_data(count: usize, seed: u64) -> Vec<SparseInstance> {
    let mut rng = SeededRng::new(seed, "tiny-data");
    (0..count).map(|_| tiny_instance(&mut rng)).collect()
}

/// Dense copy of `x` over all m features.
fn dense(inst: &SparseInstance, m: usize) -> (Vec<f64>, Vec<u32>) {
    let mut x = vec![0.0; m];
    let mut field = vec![u32::MAX; m];
    for e in inst.entries() {
        x[e.feature as usize] = e.value;
        field[e.feature as usize] = e.field;
    }
    (x, field)
}

/// Straight double loop over all feature pairs.
pub fn naive_fm(model: &IfmModel, inst: &SparseInstance) -> f64 {
    let m = model.n_features();
    let k = model.k();
    let (x, _) = dense(inst, m);
    let mut y = model.fm.w0;
    for i in 0..m {
        y += model.fm.w[i] * x[i];
    }
    for i in 0..m {
        for j in i + 1..m {
            let mut ip = 0.0;
            for f in 0..k {
                ip += model.fm.v.get(i, f) * model.fm.v.get(j, f);
            }
            y += ip * x[i] * x[j];
        }
    }
    y
}

/// `F(a, b)` from the raw parameters.
pub fn naive_field(model: &IfmModel, a: usize, b: usize) -> Vec<f64> {
    let k = model.k();
    match &model.iam.field {
        Some(FieldAspect::Factorized { u, d }) => {
            (0..k).map(|c| (0..u.cols()).map(|r| u.get(a, r) * u.get(b, r) * d.get(r, c)).sum()).collect()
        }
        Some(FieldAspect::Raw { f }) => {
            let (lo, hi) = (a.min(b), a.max(b));
            let mut row = 0;
            for p in 0..model.n_fields {
                for q in p + 1..model.n_fields {
                    if (p, q) == (lo, hi) {
                        return f.row(row).to_vec();
                    }
                    row += 1;
                }
            }
            panic!("no raw row for ({a}, {b})")
        }
        None => vec![1.0; k],
    }
}

pub struct NaivePair {
    pub fields: (usize, usize),
    pub e: Vec<f64>,
    pub t: f64,
    pub f: Vec<f64>,
}

/// Pair vectors, attention scores and field vectors by direct evaluation.
pub fn naive_pairs(model: &IfmModel, inst: &SparseInstance, drop_same_field: bool) -> Vec<NaivePair> {
    let m = model.n_features();
    let k = model.k();
    let (x, field) = dense(inst, m);
    let mut out = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            if x[i] == 0.0 || x[j] == 0.0 || (drop_same_field && field[i] == field[j]) {
                continue;
            }
            let e: Vec<f64> = (0..k).map(|c| model.fm.v.get(i, c) * model.fm.v.get(j, c) * x[i] * x[j]).collect();
            let (fi, fj) = (field[i] as usize, field[j] as usize);
            let f = if model.mode.uses_field_aspect() { naive_field(model, fi, fj) } else { vec![1.0; k] };
            out.push(NaivePair { fields: (fi, fj), e, t: 1.0, f });
        }
    }
    if model.mode.uses_attention() && !out.is_empty() {
        let a = model.iam.attention.as_ref().unwrap();
        let logits: Vec<f64> = out
            .iter()
            .map(|p| {
                (0..a.h.len())
                    .map(|r| {
                        let s: f64 = (0..k).map(|c| a.w.get(r, c) * p.e[c]).sum::<f64>() + a.b[r];
                        a.h[r] * s.max(0.0)
                    })
                    .sum::<f64>()
            })
            .collect();
        let z: f64 = logits.iter().map(|l| (l / model.iam.tau).exp()).sum();
        for (p, l) in out.iter_mut().zip(&logits) {
            p.t = (l / model.iam.tau).exp() / z;
        }
    }
    out
}

fn linear(model: &IfmModel, inst: &SparseInstance) -> f64 {
    model.fm.w0 + inst.entries().iter().map(|e| model.fm.w[e.feature as usize] * e.value).sum::<f64>()
}

pub fn naive_ifm(model: &IfmModel, inst: &SparseInstance) -> f64 {
    let drop = model.pair_policy == ifm::model::PairPolicy::Drop;
    let g: f64 = naive_pairs(model, inst, drop)
        .iter()
        .map(|p| p.t * p.e.iter().zip(&p.f).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    linear(model, inst) + g
}

fn naive_mlp(model: &IfmModel, input: Vec<f64>) -> f64 {
    let mlp = model.mlp.as_ref().unwrap();
    let mut h = input;
    for (l, layer) in mlp.layers.iter().enumerate() {
        let mut next = Vec::with_capacity(layer.q.rows());
        for r in 0..layer.q.rows() {
            let mut s = layer.z[r];
            for c in 0..layer.q.cols() {
                s += layer.q.get(r, c) * h[c];
            }
            next.push(if l + 1 < mlp.layers.len() { s.max(0.0) } else { s });
        }
        h = next;
    }
    h[0]
}

pub fn naive_inn(model: &IfmModel, inst: &SparseInstance) -> f64 {
    let k = model.k();
    let n = model.n_fields;
    let pairs = naive_pairs(model, inst, false);
    let mut h0 = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let p = pairs.iter().find(|p| p.fields == (a, b) || p.fields == (b, a)).unwrap();
            h0.extend((0..k).map(|c| p.f[c] * p.t * p.e[c]));
        }
    }
    naive_mlp(model, h0)
}

pub fn naive_deep_ifm(model: &IfmModel, inst: &SparseInstance) -> f64 {
    let k = model.k();
    let mut input = vec![0.0; model.n_fields * k];
    for e in inst.entries() {
        for c in 0..k {
            input[e.field as usize * k + c] = model.fm.v.get(e.feature as usize, c) * e.value;
        }
    }
    naive_ifm(model, inst) + naive_mlp(model, input)
}

/// One-hot data over `n_fields` fields of `per_field` features each, with
/// `±1` targets from a planted interaction score in which the pair of fields
/// (0, 1) dominates.
pub fn planted_dataset(
    n_fields: usize,
    per_field: usize,
    count: usize,
    seed: u64,
) -> (FieldSchema, Vec<SparseInstance>) {
    let m = n_fields * per_field;
    let schema = FieldSchema::new(n_fields, (0..m).map(|i| (i / per_field) as u32).collect()).unwrap();
    let mut rng = SeededRng::new(seed, "planted");
    let latent: Vec<[f64; 3]> = (0..m).map(|_| [rng.gaussian(1.0), rng.gaussian(1.0), rng.gaussian(1.0)]).collect();
    let weight = |a: usize, b: usize| if (a, b) == (0, 1) { 1.0 } else { 0.1 };
    let mut scored: Vec<(Vec<Entry>, f64)> = (0..count)
        .map(|_| {
            let feats: Vec<usize> = (0..n_fields).map(|f| f * per_field + rng.below(per_field)).collect();
            let mut score = 0.0;
            for a in 0..n_fields {
                for b in a + 1..n_fields {
                    let (i, j) = (feats[a], feats[b]);
                    score += weight(a, b) * (0..3).map(|c| latent[i][c] * latent[j][c]).sum::<f64>();
                }
            }
            let entries = feats.iter().enumerate().map(|(f, &i)| Entry::new(i as u32, f as u32, 1.0)).collect();
            (entries, score)
        })
        .collect();
    let mut scores: Vec<f64> = scored.iter().map(|s| s.1).collect();
    scores.sort_by(f64::total_cmp);
    let cut = scores[scores.len() / 2];
    let data =
        scored.drain(..).map(|(e, s)| SparseInstance::new(e, if s > cut { 1.0 } else { -1.0 }).unwrap()).collect();
    (schema, data)
}
