//! Forward evaluation of every predictor.
//!
//! The per-operation functions at the top ([`fm_predict`], [`attention_scores`],
//! [`ifm_predict`], ...) are the public building blocks. [`forward`] is the
//! cached pass used by training: it keeps every intermediate the backward pass
//! needs and takes an optional dropout mask and an explicit set of active pairs.

use super::params::{field_pair_index, AttentionNet, FieldAspect, FmParams, IfmModel, MlpParams, Mode, PairPolicy};
use crate::data::SparseInstance;
use crate::error::{Error, Result};
use crate::numeric::{axpy, dot, relu, softmax_temp_into, DenseMatrix, DenseVector};

/// Pair of nonzero features `(i, j)`, `i < j`, of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteractionPair {
    pub i: u32,
    pub j: u32,
    pub field_i: u32,
    pub field_j: u32,
    /// Positions of the two features in the instance's entry list.
    pub a: usize,
    pub b: usize,
}

/// All pairs of nonzero features in lexicographic order.
pub fn enumerate_interactions(inst: &SparseInstance, policy: PairPolicy) -> Vec<InteractionPair> {
    let e = inst.entries();
    let mut out = Vec::with_capacity(inst.pair_count());
    for a in 0..e.len() {
        for b in a + 1..e.len() {
            if policy == PairPolicy::Drop && e[a].field == e[b].field {
                continue;
            }
            out.push(InteractionPair {
                i: e[a].feature,
                j: e[b].feature,
                field_i: e[a].field,
                field_j: e[b].field,
                a,
                b,
            });
        }
    }
    out
}

fn linear_part(fm: &FmParams, inst: &SparseInstance) -> f64 {
    fm.w0 + inst.entries().iter().map(|e| fm.w[e.feature as usize] * e.value).sum::<f64>()
}

/// `w0 + Σ w_i x_i + Σ_{i<j} <V_i, V_j> x_i x_j`, evaluated in O(pK).
pub fn fm_predict(fm: &FmParams, inst: &SparseInstance) -> f64 {
    let k = fm.k();
    let mut sum = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    for e in inst.entries() {
        let row = fm.v.row(e.feature as usize);
        for f in 0..k {
            let t = row[f] * e.value;
            sum[f] += t;
            sum_sq[f] += t * t;
        }
    }
    let pairwise: f64 = sum.iter().zip(&sum_sq).map(|(s, q)| s * s - q).sum::<f64>() * 0.5;
    linear_part(fm, inst) + pairwise
}

/// `(V_i ⊙ V_j) x_i x_j` for each pair.
pub fn pairwise_vectors(fm: &FmParams, inst: &SparseInstance, pairs: &[InteractionPair]) -> Vec<DenseVector> {
    let k = fm.k();
    pairs
        .iter()
        .map(|p| {
            let mut out = vec![0.0; k];
            write_pair_vector(fm, inst, p, &mut out);
            DenseVector::from(out)
        })
        .collect()
}

#[inline]
fn write_pair_vector(fm: &FmParams, inst: &SparseInstance, p: &InteractionPair, out: &mut [f64]) {
    let e = inst.entries();
    let scale = e[p.a].value * e[p.b].value;
    let vi = fm.v.row(p.i as usize);
    let vj = fm.v.row(p.j as usize);
    for ((o, x), y) in out.iter_mut().zip(vi).zip(vj) {
        *o = x * y * scale;
    }
}

/// Writes the attention pre-activations `W e + b` into `s` and returns the
/// logit `hᵀ Relu(W e + b)`.
#[inline]
fn attention_logit(net: &AttentionNet, e: &[f64], s: &mut [f64]) -> f64 {
    net.w.matvec_into(e, s);
    let mut logit = 0.0;
    for ((sv, b), h) in s.iter_mut().zip(&net.b).zip(&net.h) {
        *sv += b;
        logit += h * relu(*sv);
    }
    logit
}

/// Softmax-with-temperature attention over the given pair vectors. Empty input
/// yields an empty result.
pub fn attention_scores(net: &AttentionNet, vectors: &[DenseVector], tau: f64) -> Result<Vec<f64>> {
    if vectors.is_empty() {
        return Ok(Vec::new());
    }
    let mut s = vec![0.0; net.b.len()];
    let logits: Vec<f64> = vectors
        .iter()
        .map(|v| {
            if v.len() != net.w.cols() {
                return Err(Error::Dimension(format!("pair vector of length {} for K = {}", v.len(), net.w.cols())));
            }
            Ok(attention_logit(net, v.as_slice(), &mut s))
        })
        .collect::<Result<_>>()?;
    let mut t = vec![0.0; logits.len()];
    softmax_temp_into(&logits, tau, &mut t)?;
    Ok(t)
}

impl FieldAspect {
    /// The K-vector `F(a, b)`.
    pub fn importance(&self, n_fields: usize, a: u32, b: u32) -> Result<DenseVector> {
        let (a, b) = (a as usize, b as usize);
        if a >= n_fields || b >= n_fields {
            return Err(Error::Parameter(format!("field pair ({a}, {b}) out of range (n = {n_fields})")));
        }
        match self {
            FieldAspect::Factorized { u, d } => {
                let proto: Vec<f64> = u.row(a).iter().zip(u.row(b)).map(|(x, y)| x * y).collect();
                let mut out = vec![0.0; d.cols()];
                d.matvec_t_into(&proto, &mut out);
                Ok(out.into())
            }
            FieldAspect::Raw { f } => {
                if a == b {
                    return Err(Error::Contract("raw field importance has no same-field rows".into()));
                }
                Ok(f.row(field_pair_index(n_fields, a, b)).to_vec().into())
            }
        }
    }
}

/// `F(f_i, f_j)` for a model with a field aspect.
pub fn field_importance(model: &IfmModel, field_i: u32, field_j: u32) -> Result<DenseVector> {
    model
        .iam
        .field
        .as_ref()
        .ok_or_else(|| Error::Contract(format!("mode {} has no field aspect", model.mode)))?
        .importance(model.n_fields, field_i, field_j)
}

/// `cᵀ D e`.
pub fn bilinear_similarity(c: &[f64], e: &[f64], d: &DenseMatrix) -> Result<f64> {
    if c.len() != d.rows() || e.len() != d.cols() {
        return Err(Error::Dimension(format!(
            "c has {} entries, e has {}, D is {}x{}",
            c.len(),
            e.len(),
            d.rows(),
            d.cols()
        )));
    }
    Ok(c.iter().enumerate().map(|(r, cr)| cr * dot(d.row(r), e)).sum())
}

/// Field-importance vectors (and field prototypes `U_a ⊙ U_b`) for every
/// ordered field pair, computed once per mini-batch.
#[derive(Debug, Clone)]
pub struct FieldTable {
    n: usize,
    k: usize,
    k_f: usize,
    /// n*n*K, or empty when the model has no field aspect (all-ones).
    values: Vec<f64>,
    /// n*n*K_F for the factorized form.
    protos: Vec<f64>,
    ones: Vec<f64>,
}

impl FieldTable {
    pub fn build(model: &IfmModel) -> Self {
        let n = model.n_fields;
        let k = model.k();
        let mut table = FieldTable { n, k, k_f: 0, values: Vec::new(), protos: Vec::new(), ones: vec![1.0; k] };
        if !model.mode.uses_field_aspect() {
            return table;
        }
        match &model.iam.field {
            Some(FieldAspect::Factorized { u, d }) => {
                let k_f = u.cols();
                table.k_f = k_f;
                table.values = vec![0.0; n * n * k];
                table.protos = vec![0.0; n * n * k_f];
                for a in 0..n {
                    for b in a..n {
                        let cell = a * n + b;
                        let proto = &mut table.protos[cell * k_f..(cell + 1) * k_f];
                        for ((p, x), y) in proto.iter_mut().zip(u.row(a)).zip(u.row(b)) {
                            *p = x * y;
                        }
                        let mut out = vec![0.0; k];
                        d.matvec_t_into(&table.protos[cell * k_f..(cell + 1) * k_f], &mut out);
                        table.values[cell * k..(cell + 1) * k].copy_from_slice(&out);
                        if a != b {
                            let mirror = b * n + a;
                            table.values.copy_within(cell * k..(cell + 1) * k, mirror * k);
                            table.protos.copy_within(cell * k_f..(cell + 1) * k_f, mirror * k_f);
                        }
                    }
                }
            }
            Some(FieldAspect::Raw { f }) => {
                table.values = vec![0.0; n * n * k];
                for a in 0..n {
                    for b in 0..n {
                        if a != b {
                            let cell = a * n + b;
                            table.values[cell * k..(cell + 1) * k].copy_from_slice(f.row(field_pair_index(n, a, b)));
                        }
                    }
                }
            }
            None => {}
        }
        table
    }

    pub fn has_field_aspect(&self) -> bool {
        !self.values.is_empty()
    }

    #[inline]
    pub fn importance(&self, a: u32, b: u32) -> &[f64] {
        if self.values.is_empty() {
            return &self.ones;
        }
        let cell = a as usize * self.n + b as usize;
        &self.values[cell * self.k..(cell + 1) * self.k]
    }

    /// `U_a ⊙ U_b`; empty unless factorized.
    #[inline]
    pub fn prototype(&self, a: u32, b: u32) -> &[f64] {
        if self.protos.is_empty() {
            return &[];
        }
        let cell = a as usize * self.n + b as usize;
        &self.protos[cell * self.k_f..(cell + 1) * self.k_f]
    }

    /// Euclidean norm of `F(a, b)`; 1-vectors give `sqrt(K)`.
    pub fn norm(&self, a: u32, b: u32) -> f64 {
        let v = self.importance(a, b);
        dot(v, v).sqrt()
    }

    pub fn n_fields(&self) -> usize {
        self.n
    }
}

/// Activations kept for the MLP backward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// Input to each layer.
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer.
    pub pre: Vec<Vec<f64>>,
}

pub fn mlp_forward(mlp: &MlpParams, input: Vec<f64>) -> (f64, MlpTrace) {
    let last = mlp.layers.len() - 1;
    let mut trace =
        MlpTrace { inputs: Vec::with_capacity(mlp.layers.len()), pre: Vec::with_capacity(mlp.layers.len()) };
    let mut h = input;
    for (l, layer) in mlp.layers.iter().enumerate() {
        let mut z = vec![0.0; layer.q.rows()];
        layer.q.matvec_into(&h, &mut z);
        for (zv, b) in z.iter_mut().zip(&layer.z) {
            *zv += b;
        }
        let next = if l < last { z.iter().map(|&v| relu(v)).collect() } else { z.clone() };
        trace.inputs.push(std::mem::replace(&mut h, next));
        trace.pre.push(z);
    }
    (h[0], trace)
}

/// Cached forward pass over one instance.
#[derive(Debug, Clone)]
pub struct Forward {
    pub pairs: Vec<InteractionPair>,
    /// Dropout mask, |pairs| x K, when training.
    pub mask: Option<Vec<f64>>,
    /// Masked pair vectors, |pairs| x K.
    pub e: Vec<f64>,
    /// Attention pre-activations, |pairs| x K_a.
    pub s: Vec<f64>,
    /// Feature-aspect scores (all 1 when the mode has no attention).
    pub t: Vec<f64>,
    /// `<F_p, e_p>` per pair.
    pub phi: Vec<f64>,
    pub mlp: Option<MlpTrace>,
    pub pred: f64,
}

/// Requires exactly one active feature per field; returns the entry index of
/// each field.
pub(crate) fn one_feature_per_field(inst: &SparseInstance, n: usize) -> Result<Vec<usize>> {
    let mut slot = vec![usize::MAX; n];
    for (idx, e) in inst.entries().iter().enumerate() {
        let f = e.field as usize;
        if f >= n || slot[f] != usize::MAX {
            return Err(Error::Shape(format!(
                "instance must have exactly one active feature in each of the {n} fields"
            )));
        }
        slot[f] = idx;
    }
    if slot.contains(&usize::MAX) {
        return Err(Error::Shape(format!("instance has {} active fields, expected all {n}", inst.entries().len())));
    }
    Ok(slot)
}

/// Evaluates the model on `inst` restricted to `pairs`, applying `mask` to each
/// pair vector when given.
pub fn forward(
    model: &IfmModel,
    inst: &SparseInstance,
    table: &FieldTable,
    pairs: Vec<InteractionPair>,
    mask: Option<Vec<f64>>,
) -> Result<Forward> {
    let k = model.k();
    let np = pairs.len();
    if let Some(m) = &mask {
        if m.len() != np * k {
            return Err(Error::Dimension(format!("dropout mask has {} entries for {np} pairs", m.len())));
        }
    }
    let mut e = vec![0.0; np * k];
    for (p, pair) in pairs.iter().enumerate() {
        let out = &mut e[p * k..(p + 1) * k];
        write_pair_vector(&model.fm, inst, pair, out);
        if let Some(m) = &mask {
            for (o, mv) in out.iter_mut().zip(&m[p * k..(p + 1) * k]) {
                *o *= mv;
            }
        }
    }

    let mut s = Vec::new();
    let mut t = vec![1.0; np];
    if model.mode.uses_attention() && np > 0 {
        let net = model.iam.attention.as_ref().ok_or_else(|| Error::Contract("attention network missing".into()))?;
        let ka = net.b.len();
        s = vec![0.0; np * ka];
        let logits: Vec<f64> =
            (0..np).map(|p| attention_logit(net, &e[p * k..(p + 1) * k], &mut s[p * ka..(p + 1) * ka])).collect();
        softmax_temp_into(&logits, model.iam.tau, &mut t)?;
    }

    let phi: Vec<f64> = pairs
        .iter()
        .enumerate()
        .map(|(p, pair)| dot(table.importance(pair.field_i, pair.field_j), &e[p * k..(p + 1) * k]))
        .collect();

    let linear = if model.mode.uses_linear() { linear_part(&model.fm, inst) } else { 0.0 };
    let interaction: f64 = t.iter().zip(&phi).map(|(a, b)| a * b).sum();

    let (pred, mlp) = match model.mode {
        Mode::Fm | Mode::Ifm | Mode::FaOnly | Mode::IaOnly => (linear + interaction, None),
        Mode::Inn => {
            let mlp = model.mlp.as_ref().ok_or_else(|| Error::Contract("INN needs an MLP".into()))?;
            one_feature_per_field(inst, model.n_fields)?;
            let mut h0 = vec![0.0; mlp.input_width()];
            for (p, pair) in pairs.iter().enumerate() {
                let block = field_pair_index(model.n_fields, pair.field_i as usize, pair.field_j as usize);
                let dst = &mut h0[block * k..(block + 1) * k];
                let f = table.importance(pair.field_i, pair.field_j);
                for ((d, fv), ev) in dst.iter_mut().zip(f).zip(&e[p * k..(p + 1) * k]) {
                    *d = fv * t[p] * ev;
                }
            }
            let (out, trace) = mlp_forward(mlp, h0);
            (out, Some(trace))
        }
        Mode::DeepIfm => {
            let mlp = model.mlp.as_ref().ok_or_else(|| Error::Contract("DeepIFM needs an MLP".into()))?;
            let slots = one_feature_per_field(inst, model.n_fields)?;
            let mut input = vec![0.0; model.n_fields * k];
            for (f, &idx) in slots.iter().enumerate() {
                let entry = inst.entries()[idx];
                axpy(entry.value, model.fm.v.row(entry.feature as usize), &mut input[f * k..(f + 1) * k]);
            }
            let (out, trace) = mlp_forward(mlp, input);
            (linear + interaction + out, Some(trace))
        }
    };

    Ok(Forward { pairs, mask, e, s, t, phi, mlp, pred })
}

impl IfmModel {
    /// Evaluation-mode prediction over all interactions.
    pub fn predict(&self, inst: &SparseInstance) -> Result<f64> {
        let table = FieldTable::build(self);
        self.predict_with(inst, &table)
    }

    /// Same as [`IfmModel::predict`] with a precomputed field table.
    pub fn predict_with(&self, inst: &SparseInstance, table: &FieldTable) -> Result<f64> {
        let pairs = enumerate_interactions(inst, self.pair_policy);
        Ok(forward(self, inst, table, pairs, None)?.pred)
    }

    pub fn predict_all(&self, data: &[SparseInstance]) -> Result<Vec<f64>> {
        let table = FieldTable::build(self);
        data.iter().map(|inst| self.predict_with(inst, &table)).collect()
    }
}

fn require_mode(model: &IfmModel, allowed: &[Mode], op: &str) -> Result<()> {
    if allowed.contains(&model.mode) {
        Ok(())
    } else {
        Err(Error::Contract(format!("{op} is not defined for mode {}", model.mode)))
    }
}

/// `Σ T_ij <F(f_i, f_j), (V_i ⊙ V_j) x_i x_j> + Σ w_i x_i + w0` for the IFM
/// family (IFM, FA-only, IA-only).
pub fn ifm_predict(model: &IfmModel, inst: &SparseInstance) -> Result<f64> {
    require_mode(model, &[Mode::Ifm, Mode::FaOnly, Mode::IaOnly], "ifm_predict")?;
    model.predict(inst)
}

/// The aspect embedding sets `(F_X, I_X)`, aligned with the pair order of
/// [`enumerate_interactions`]: `T_ij (V_i ⊙ V_j) x_i x_j` and `F(f_i, f_j)`.
pub fn gim_embedding_sets(model: &IfmModel, inst: &SparseInstance) -> Result<(Vec<DenseVector>, Vec<DenseVector>)> {
    if !model.mode.uses_field_aspect() || !model.mode.uses_attention() {
        return Err(Error::Contract(format!("mode {} lacks one of the two aspects", model.mode)));
    }
    let table = FieldTable::build(model);
    let pairs = enumerate_interactions(inst, model.pair_policy);
    let fwd = forward_interactions_only(model, inst, &table, pairs)?;
    let k = model.k();
    let feature_set = (0..fwd.pairs.len())
        .map(|p| fwd.e[p * k..(p + 1) * k].iter().map(|v| v * fwd.t[p]).collect::<Vec<_>>().into())
        .collect();
    let field_set = fwd.pairs.iter().map(|pair| table.importance(pair.field_i, pair.field_j).to_vec().into()).collect();
    Ok((feature_set, field_set))
}

// Pair vectors and attention only; skips the mode-specific head so the sets
// can be formed for INN and DeepIFM models without their shape checks.
fn forward_interactions_only(
    model: &IfmModel,
    inst: &SparseInstance,
    table: &FieldTable,
    pairs: Vec<InteractionPair>,
) -> Result<Forward> {
    let mut shadow = model.clone();
    shadow.mode = Mode::Ifm;
    shadow.mlp = None;
    forward(&shadow, inst, table, pairs, None)
}

pub fn inn_forward(model: &IfmModel, inst: &SparseInstance) -> Result<f64> {
    require_mode(model, &[Mode::Inn], "inn_forward")?;
    model.predict(inst)
}

pub fn deep_ifm_predict(model: &IfmModel, inst: &SparseInstance) -> Result<f64> {
    require_mode(model, &[Mode::DeepIfm], "deep_ifm_predict")?;
    model.predict(inst)
}
