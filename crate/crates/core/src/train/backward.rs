use std::collections::BTreeMap;

use super::loss::LossKind;
use crate::data::SparseInstance;
use crate::error::{Error, Result};
use crate::model::forward::{forward, one_feature_per_field, MlpTrace};
use crate::model::{
    enumerate_interactions, field_pair_index, sample_interactions, FieldAspect, FieldTable, Forward, IfmModel,
    MlpParams, Mode, SampleScheme,
};
use crate::numeric::{axpy, dot, relu, SeededRng};

/// Gradient bundle. `w` and `V` are sparse (rows touched by the batch only);
/// every other group is dense and empty when the model lacks it.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w0: f64,
    pub w: BTreeMap<u32, f64>,
    pub v: BTreeMap<u32, Vec<f64>>,
    pub u: Vec<f64>,
    pub d: Vec<f64>,
    pub f: Vec<f64>,
    pub att_w: Vec<f64>,
    pub att_b: Vec<f64>,
    pub att_h: Vec<f64>,
    /// `(dQ, dz)` per layer.
    pub mlp: Vec<(Vec<f64>, Vec<f64>)>,
    /// Field-importance gradients per field cell `(a, b)`, `a <= b`, before
    /// they are pushed through `U`, `D` or the raw table.
    cells: Vec<f64>,
    k: usize,
    n_fields: usize,
}

impl Gradients {
    pub fn zeros(model: &IfmModel) -> Self {
        let k = model.k();
        let n = model.n_fields;
        let (u, d, f) = match &model.iam.field {
            Some(FieldAspect::Factorized { u, d }) => (vec![0.0; u.len()], vec![0.0; d.len()], Vec::new()),
            Some(FieldAspect::Raw { f }) => (Vec::new(), Vec::new(), vec![0.0; f.len()]),
            None => (Vec::new(), Vec::new(), Vec::new()),
        };
        let (att_w, att_b, att_h) = match &model.iam.attention {
            Some(a) => (vec![0.0; a.w.len()], vec![0.0; a.b.len()], vec![0.0; a.h.len()]),
            None => (Vec::new(), Vec::new(), Vec::new()),
        };
        let mlp = model
            .mlp
            .as_ref()
            .map_or_else(Vec::new, |m| m.layers.iter().map(|l| (vec![0.0; l.q.len()], vec![0.0; l.z.len()])).collect());
        let cells =
            if model.iam.field.is_some() && model.mode.uses_field_aspect() { vec![0.0; n * n * k] } else { Vec::new() };
        Gradients {
            w0: 0.0,
            w: BTreeMap::new(),
            v: BTreeMap::new(),
            u,
            d,
            f,
            att_w,
            att_b,
            att_h,
            mlp,
            cells,
            k,
            n_fields: n,
        }
    }

    /// Adds `other` into `self`; sparse rows are merged in key order.
    pub fn add(&mut self, other: &Gradients) {
        fn add_slice(a: &mut [f64], b: &[f64]) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.w0 += other.w0;
        for (&i, g) in &other.w {
            *self.w.entry(i).or_insert(0.0) += g;
        }
        for (&i, g) in &other.v {
            match self.v.get_mut(&i) {
                Some(row) => add_slice(row, g),
                None => {
                    self.v.insert(i, g.clone());
                }
            }
        }
        add_slice(&mut self.u, &other.u);
        add_slice(&mut self.d, &other.d);
        add_slice(&mut self.f, &other.f);
        add_slice(&mut self.att_w, &other.att_w);
        add_slice(&mut self.att_b, &other.att_b);
        add_slice(&mut self.att_h, &other.att_h);
        for ((q, z), (oq, oz)) in self.mlp.iter_mut().zip(&other.mlp) {
            add_slice(q, oq);
            add_slice(z, oz);
        }
        add_slice(&mut self.cells, &other.cells);
    }

    pub fn scale(&mut self, s: f64) {
        let all =
            [&mut self.u, &mut self.d, &mut self.f, &mut self.att_w, &mut self.att_b, &mut self.att_h, &mut self.cells];
        for g in all {
            g.iter_mut().for_each(|x| *x *= s);
        }
        self.w0 *= s;
        self.w.values_mut().for_each(|x| *x *= s);
        self.v.values_mut().flat_map(|r| r.iter_mut()).for_each(|x| *x *= s);
        for (q, z) in &mut self.mlp {
            q.iter_mut().chain(z.iter_mut()).for_each(|x| *x *= s);
        }
    }

    /// Pushes the accumulated field-cell gradients through `U, D` (or the raw
    /// table) and adds `2 λ_F` times the field-aspect parameters.
    pub fn finalize(&mut self, model: &IfmModel, table: &FieldTable, lambda_f: f64) {
        let k = self.k;
        let n = self.n_fields;
        match &model.iam.field {
            Some(FieldAspect::Factorized { u, d }) => {
                let k_f = u.cols();
                if !self.cells.is_empty() {
                    let mut dc = vec![0.0; k_f];
                    for a in 0..n {
                        for b in a..n {
                            let cell = a * n + b;
                            let gf = &self.cells[cell * k..(cell + 1) * k];
                            if gf.iter().all(|&x| x == 0.0) {
                                continue;
                            }
                            let proto = table.prototype(a as u32, b as u32);
                            for (r, dcr) in dc.iter_mut().enumerate() {
                                axpy(proto[r], gf, &mut self.d[r * k..(r + 1) * k]);
                                *dcr = dot(d.row(r), gf);
                            }
                            for (r, &dcr) in dc.iter().enumerate() {
                                self.u[a * k_f + r] += dcr * u.get(b, r);
                                self.u[b * k_f + r] += dcr * u.get(a, r);
                            }
                        }
                    }
                }
                if lambda_f != 0.0 {
                    axpy(2.0 * lambda_f, u.as_slice(), &mut self.u);
                    axpy(2.0 * lambda_f, d.as_slice(), &mut self.d);
                }
            }
            Some(FieldAspect::Raw { f }) => {
                if !self.cells.is_empty() {
                    for a in 0..n {
                        for b in a + 1..n {
                            let cell = a * n + b;
                            let row = field_pair_index(n, a, b);
                            let gf = &self.cells[cell * k..(cell + 1) * k];
                            axpy(1.0, gf, &mut self.f[row * k..(row + 1) * k]);
                        }
                    }
                }
                if lambda_f != 0.0 {
                    axpy(2.0 * lambda_f, f.as_slice(), &mut self.f);
                }
            }
            None => {}
        }
        self.cells.iter_mut().for_each(|x| *x = 0.0);
    }

    /// Dense view of one group, named as in [`IfmModel::param_groups`].
    pub fn dense(&self, name: &str, model: &IfmModel) -> Option<Vec<f64>> {
        match name {
            "w0" => Some(vec![self.w0]),
            "w" => {
                let mut out = vec![0.0; model.n_features()];
                for (&i, g) in &self.w {
                    out[i as usize] = *g;
                }
                Some(out)
            }
            "V" => {
                let k = model.k();
                let mut out = vec![0.0; model.n_features() * k];
                for (&i, g) in &self.v {
                    out[i as usize * k..(i as usize + 1) * k].copy_from_slice(g);
                }
                Some(out)
            }
            _ => self.dense_groups().into_iter().find(|(n, _)| n == name).map(|(_, g)| g.to_vec()),
        }
    }

    /// The dense groups other than `w0`, with their parameter-group names.
    pub fn dense_groups(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (name, g) in
            [("U", &self.u), ("D", &self.d), ("F", &self.f), ("W", &self.att_w), ("b", &self.att_b), ("h", &self.att_h)]
        {
            if !g.is_empty() {
                out.push((name.to_owned(), g));
            }
        }
        for (l, (q, z)) in self.mlp.iter().enumerate() {
            out.push((format!("Q{l}"), q));
            out.push((format!("z{l}"), z));
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.w0.is_finite()
            && self.w.values().all(|g| g.is_finite())
            && self.v.values().flatten().all(|g| g.is_finite())
            && self.dense_groups().iter().all(|(_, g)| g.iter().all(|x| x.is_finite()))
    }
}

/// Backpropagates `g = dL/dpred` through the cached forward pass of `inst`,
/// accumulating into `grads`. Field-aspect gradients stay in per-cell form
/// until [`Gradients::finalize`].
pub fn backward(
    model: &IfmModel,
    inst: &SparseInstance,
    fwd: &Forward,
    table: &FieldTable,
    g: f64,
    grads: &mut Gradients,
) -> Result<()> {
    let k = model.k();
    let np = fwd.pairs.len();
    let entries = inst.entries();
    if model.mode.uses_linear() {
        grads.w0 += g;
        for e in entries {
            *grads.w.entry(e.feature).or_insert(0.0) += g * e.value;
        }
    }

    let mut g_t = vec![0.0; np];
    let mut g_f = vec![0.0; np * k];
    let mut g_e = vec![0.0; np * k];

    match model.mode {
        Mode::Inn => {
            let mlp = model.mlp.as_ref().ok_or_else(|| Error::Contract("INN needs an MLP".into()))?;
            let trace = fwd.mlp.as_ref().ok_or_else(|| Error::Contract("missing MLP activations".into()))?;
            let d_in = mlp_backward(mlp, trace, g, &mut grads.mlp);
            for (p, pair) in fwd.pairs.iter().enumerate() {
                let block = field_pair_index(model.n_fields, pair.field_i as usize, pair.field_j as usize);
                let u = &d_in[block * k..(block + 1) * k];
                let f = table.importance(pair.field_i, pair.field_j);
                let e = &fwd.e[p * k..(p + 1) * k];
                let t = fwd.t[p];
                let mut gt = 0.0;
                for c in 0..k {
                    gt += u[c] * f[c] * e[c];
                    g_f[p * k + c] = u[c] * t * e[c];
                    g_e[p * k + c] = u[c] * t * f[c];
                }
                g_t[p] = gt;
            }
        }
        _ => {
            for (p, pair) in fwd.pairs.iter().enumerate() {
                let f = table.importance(pair.field_i, pair.field_j);
                let e = &fwd.e[p * k..(p + 1) * k];
                let gt = g * fwd.t[p];
                g_t[p] = g * fwd.phi[p];
                for c in 0..k {
                    g_f[p * k + c] = gt * e[c];
                    g_e[p * k + c] = gt * f[c];
                }
            }
            if model.mode == Mode::DeepIfm {
                let mlp = model.mlp.as_ref().ok_or_else(|| Error::Contract("DeepIFM needs an MLP".into()))?;
                let trace = fwd.mlp.as_ref().ok_or_else(|| Error::Contract("missing MLP activations".into()))?;
                let d_in = mlp_backward(mlp, trace, g, &mut grads.mlp);
                let slots = one_feature_per_field(inst, model.n_fields)?;
                for (f, &idx) in slots.iter().enumerate() {
                    let entry = entries[idx];
                    let row = grads.v.entry(entry.feature).or_insert_with(|| vec![0.0; k]);
                    axpy(entry.value, &d_in[f * k..(f + 1) * k], row);
                }
            }
        }
    }

    if model.mode.uses_attention() && np > 0 {
        let net = model.iam.attention.as_ref().ok_or_else(|| Error::Contract("attention network missing".into()))?;
        let ka = net.b.len();
        let tau = model.iam.tau;
        let mean: f64 = fwd.t.iter().zip(&g_t).map(|(t, gt)| t * gt).sum();
        let mut delta = vec![0.0; ka];
        for p in 0..np {
            let ga = fwd.t[p] / tau * (g_t[p] - mean);
            if ga == 0.0 {
                continue;
            }
            let s = &fwd.s[p * ka..(p + 1) * ka];
            let e = &fwd.e[p * k..(p + 1) * k];
            let ge = &mut g_e[p * k..(p + 1) * k];
            for r in 0..ka {
                grads.att_h[r] += ga * relu(s[r]);
                delta[r] = if s[r] > 0.0 { net.h[r] } else { 0.0 };
                if delta[r] == 0.0 {
                    continue;
                }
                let coef = ga * delta[r];
                grads.att_b[r] += coef;
                axpy(coef, e, &mut grads.att_w[r * k..(r + 1) * k]);
                axpy(coef, net.w.row(r), ge);
            }
        }
    }

    if !grads.cells.is_empty() {
        let n = model.n_fields;
        for (p, pair) in fwd.pairs.iter().enumerate() {
            let (a, b) = if pair.field_i <= pair.field_j {
                (pair.field_i as usize, pair.field_j as usize)
            } else {
                (pair.field_j as usize, pair.field_i as usize)
            };
            let cell = a * n + b;
            axpy(1.0, &g_f[p * k..(p + 1) * k], &mut grads.cells[cell * k..(cell + 1) * k]);
        }
    }

    for (p, pair) in fwd.pairs.iter().enumerate() {
        let ge = &g_e[p * k..(p + 1) * k];
        let scale = entries[pair.a].value * entries[pair.b].value;
        let vi = model.fm.v.row(pair.i as usize);
        let vj = model.fm.v.row(pair.j as usize);
        let mask = fwd.mask.as_ref().map(|m| &m[p * k..(p + 1) * k]);
        let coef = |c: usize| ge[c] * scale * mask.map_or(1.0, |m| m[c]);
        {
            let row = grads.v.entry(pair.i).or_insert_with(|| vec![0.0; k]);
            for c in 0..k {
                row[c] += coef(c) * vj[c];
            }
        }
        let row = grads.v.entry(pair.j).or_insert_with(|| vec![0.0; k]);
        for c in 0..k {
            row[c] += coef(c) * vi[c];
        }
    }
    Ok(())
}

/// Backpropagates a scalar output gradient through the MLP; returns the
/// gradient with respect to its input.
fn mlp_backward(mlp: &MlpParams, trace: &MlpTrace, g: f64, grads: &mut [(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    let mut delta = vec![g];
    for l in (0..mlp.layers.len()).rev() {
        let layer = &mlp.layers[l];
        let input = &trace.inputs[l];
        let (dq, dz) = &mut grads[l];
        let cols = layer.q.cols();
        let mut d_in = vec![0.0; cols];
        for (r, &dr) in delta.iter().enumerate() {
            if dr == 0.0 {
                continue;
            }
            dz[r] += dr;
            axpy(dr, input, &mut dq[r * cols..(r + 1) * cols]);
            axpy(dr, layer.q.row(r), &mut d_in);
        }
        if l > 0 {
            for (d, &pre) in d_in.iter_mut().zip(&trace.pre[l - 1]) {
                if pre <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        delta = d_in;
    }
    delta
}

/// Stochastic perturbations applied during training.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub keep_prob: f64,
    pub sample: Option<(usize, SampleScheme)>,
    /// Parent stream; instance `idx` uses `rng.derive(idx)`.
    pub rng: SeededRng,
}

/// Loss and gradients of one mini-batch.
#[derive(Debug, Clone)]
pub struct BatchResult {
    /// Mean data loss plus the L2 term.
    pub objective: f64,
    pub reg: f64,
    pub sq_err: f64,
    pub grads: Gradients,
}

const CHUNK: usize = 64;

/// `λ_F (‖U‖² + ‖D‖²)`, or `λ_F ‖F‖²` for the raw table.
pub fn regularization(model: &IfmModel, lambda_f: f64) -> f64 {
    if lambda_f == 0.0 {
        return 0.0;
    }
    lambda_f
        * match &model.iam.field {
            Some(FieldAspect::Factorized { u, d }) => u.sum_squares() + d.sum_squares(),
            Some(FieldAspect::Raw { f }) => f.sum_squares(),
            None => 0.0,
        }
}

/// Objective and gradients over `data[idx]` for every `idx` in `batch`.
/// Instances are processed in fixed chunks whose partial gradients are summed
/// in order, so the result does not depend on the thread count.
pub fn batch_gradients(
    model: &IfmModel,
    data: &[SparseInstance],
    batch: &[usize],
    lambda_f: f64,
    loss: LossKind,
    perturb: Option<&Perturbation>,
) -> Result<BatchResult> {
    use rayon::prelude::*;
    if batch.is_empty() {
        return Err(Error::Parameter("empty mini-batch".into()));
    }
    let table = FieldTable::build(model);
    let inv_b = 1.0 / batch.len() as f64;
    let partials: Vec<(f64, f64, Gradients)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = Gradients::zeros(model);
            let mut loss_sum = 0.0;
            let mut sq = 0.0;
            for &idx in chunk {
                let inst =
                    data.get(idx).ok_or_else(|| Error::Parameter(format!("instance index {idx} out of range")))?;
                let fwd = perturbed_forward(model, inst, &table, idx, perturb)?;
                let (l, dl) = loss.eval(fwd.pred, inst.target());
                loss_sum += l;
                sq += (fwd.pred - inst.target()).powi(2);
                backward(model, inst, &fwd, &table, dl * inv_b, &mut grads)?;
            }
            Ok((loss_sum, sq, grads))
        })
        .collect::<Result<_>>()?;
    let mut iter = partials.into_iter();
    let (mut loss_sum, mut sq, mut grads) = iter.next().expect("nonempty batch");
    for (l, s, g) in iter {
        loss_sum += l;
        sq += s;
        grads.add(&g);
    }
    grads.finalize(model, &table, lambda_f);
    let reg = regularization(model, lambda_f);
    Ok(BatchResult { objective: loss_sum * inv_b + reg, reg, sq_err: sq, grads })
}

fn perturbed_forward(
    model: &IfmModel,
    inst: &SparseInstance,
    table: &FieldTable,
    idx: usize,
    perturb: Option<&Perturbation>,
) -> Result<Forward> {
    let all = enumerate_interactions(inst, model.pair_policy);
    let Some(p) = perturb else {
        return forward(model, inst, table, all, None);
    };
    let rng = p.rng.derive(idx);
    let pairs = match p.sample {
        Some((c, scheme)) => sample_interactions(table, &all, c, scheme, &mut rng.derive("sample"))?,
        None => all,
    };
    let mask = if p.keep_prob < 1.0 {
        Some(super::dropout_mask(pairs.len() * model.k(), p.keep_prob, &mut rng.derive("dropout"))?)
    } else {
        None
    };
    forward(model, inst, table, pairs, mask)
}
