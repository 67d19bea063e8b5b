use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{init_params, DenseMatrix, InitScheme, SeededRng};

/// Which predictor an [`IfmModel`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Plain factorization machine.
    Fm,
    /// Both aspects: attention scores and field importance.
    Ifm,
    /// Feature aspect only (field importance fixed to all-ones).
    FaOnly,
    /// Field aspect only (every attention score fixed to 1).
    IaOnly,
    /// MLP over the aspect-weighted interaction vectors.
    Inn,
    /// IFM interaction sum plus a DeepFM-style MLP over the embeddings.
    DeepIfm,
}

impl Mode {
    pub const ALL: [Mode; 6] = [Mode::Fm, Mode::Ifm, Mode::FaOnly, Mode::IaOnly, Mode::Inn, Mode::DeepIfm];

    pub fn uses_attention(self) -> bool {
        matches!(self, Mode::Ifm | Mode::FaOnly | Mode::Inn | Mode::DeepIfm)
    }

    pub fn uses_field_aspect(self) -> bool {
        matches!(self, Mode::Ifm | Mode::IaOnly | Mode::Inn | Mode::DeepIfm)
    }

    pub fn uses_mlp(self) -> bool {
        matches!(self, Mode::Inn | Mode::DeepIfm)
    }

    /// INN drops the bias and linear terms.
    pub fn uses_linear(self) -> bool {
        self != Mode::Inn
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Fm => "fm",
            Mode::Ifm => "ifm",
            Mode::FaOnly => "fa",
            Mode::IaOnly => "ia",
            Mode::Inn => "inn",
            Mode::DeepIfm => "deepifm",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fm" => Ok(Mode::Fm),
            "ifm" => Ok(Mode::Ifm),
            "fa" | "fa_only" => Ok(Mode::FaOnly),
            "ia" | "ia_only" => Ok(Mode::IaOnly),
            "inn" => Ok(Mode::Inn),
            "deepifm" | "deep_ifm" => Ok(Mode::DeepIfm),
            other => Err(Error::Parameter(format!("unknown mode {other:?}"))),
        }
    }
}

/// Treatment of pairs whose two features share a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairPolicy {
    #[default]
    Keep,
    Drop,
}

impl FromStr for PairPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "keep" => Ok(PairPolicy::Keep),
            "drop" => Ok(PairPolicy::Drop),
            other => Err(Error::Parameter(format!("same-field pair policy {other:?}"))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub mode: Mode,
    /// Feature embedding size K.
    pub k: usize,
    /// Field-aspect rank K_F.
    pub k_f: usize,
    /// Attention hidden size K_a.
    pub k_a: usize,
    pub tau: f64,
    /// Store the field-importance table as n(n-1)/2 raw rows instead of U, D.
    pub non_factorized_f: bool,
    pub same_field_pairs: PairPolicy,
    /// Hidden widths of the INN / DeepIFM MLP.
    pub hidden: Vec<usize>,
    /// Standard deviation for V, U, D, W (and raw F).
    pub init_sigma: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mode: Mode::Ifm,
            k: 256,
            k_f: 16,
            k_a: 64,
            tau: 10.0,
            non_factorized_f: false,
            same_field_pairs: PairPolicy::Keep,
            hidden: vec![64, 64],
            init_sigma: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmParams {
    pub w0: f64,
    /// Linear weights, length m.
    pub w: Vec<f64>,
    /// m x K; row i is the embedding of feature i.
    pub v: DenseMatrix,
}

impl FmParams {
    pub fn k(&self) -> usize {
        self.v.cols()
    }

    pub fn n_features(&self) -> usize {
        self.w.len()
    }
}

/// `a = hᵀ Relu(W e + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionNet {
    /// K_a x K
    pub w: DenseMatrix,
    pub b: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldAspect {
    /// `F(a, b) = Dᵀ (U_a ⊙ U_b)`; `u` is n x K_F, `d` is K_F x K.
    Factorized { u: DenseMatrix, d: DenseMatrix },
    /// One K-vector per unordered pair of distinct fields.
    Raw { f: DenseMatrix },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IamParams {
    pub tau: f64,
    pub attention: Option<AttentionNet>,
    pub field: Option<FieldAspect>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// out x in
    pub q: DenseMatrix,
    pub z: Vec<f64>,
}

/// Relu on every layer except the last, which is linear with width 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
}

impl MlpParams {
    pub fn init(input: usize, hidden: &[usize], rng: &mut SeededRng) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let sigma = (2.0 / (w[0] + w[1]) as f64).sqrt();
                Ok(DenseLayer {
                    q: init_params(w[1], w[0], InitScheme::Gaussian(sigma), &mut rng.derive(format!("mlp{l}")))?,
                    z: vec![0.0; w[1]],
                })
            })
            .collect::<Result<_>>()?;
        Ok(MlpParams { layers })
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.q.cols())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.q.len() + l.z.len()).sum()
    }
}

/// Number of unordered pairs of distinct fields.
pub fn field_pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Row of the pair `(a, b)`, `a != b`, in the upper-triangular enumeration
/// (0,1), (0,2), ..., (1,2), ...
pub fn field_pair_index(n: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    debug_assert!(a != b && b < n);
    a * n - a * (a + 1) / 2 + (b - a - 1)
}

/// Parameter counts per group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub fm: usize,
    pub field_aspect: usize,
    pub attention: usize,
    pub mlp: usize,
    pub total: usize,
}

/// All learnable parameters plus the mode selector.
#[derive(Debug, Clone, PartialEq)]
pub struct IfmModel {
    pub mode: Mode,
    pub n_fields: usize,
    pub pair_policy: PairPolicy,
    pub fm: FmParams,
    pub iam: IamParams,
    pub mlp: Option<MlpParams>,
}

impl IfmModel {
    pub fn new(n_fields: usize, n_features: usize, cfg: &ModelConfig, rng: &SeededRng) -> Result<Self> {
        if n_fields == 0 || n_features == 0 {
            return Err(Error::Parameter("model needs at least one field and one feature".into()));
        }
        if cfg.k == 0 || cfg.k_f == 0 || cfg.k_a == 0 {
            return Err(Error::Parameter("K, K_F and K_a must be >= 1".into()));
        }
        if !(cfg.tau > 0.0) {
            return Err(Error::Parameter(format!("temperature must be > 0, got {}", cfg.tau)));
        }
        if cfg.mode.uses_field_aspect() && !cfg.non_factorized_f && cfg.k_f > cfg.k {
            warn!("K_F = {} exceeds K = {}", cfg.k_f, cfg.k);
        }
        let g = InitScheme::Gaussian(cfg.init_sigma);
        let k = cfg.k;
        let fm =
            FmParams { w0: 0.0, w: vec![0.0; n_features], v: init_params(n_features, k, g, &mut rng.derive("V"))? };
        let attention = if cfg.mode.uses_attention() {
            Some(AttentionNet {
                w: init_params(cfg.k_a, k, g, &mut rng.derive("W"))?,
                b: vec![0.0; cfg.k_a],
                h: vec![0.0; cfg.k_a],
            })
        } else {
            None
        };
        let field = if !cfg.mode.uses_field_aspect() {
            None
        } else if cfg.non_factorized_f {
            Some(FieldAspect::Raw { f: init_params(field_pair_count(n_fields), k, g, &mut rng.derive("F"))? })
        } else {
            Some(FieldAspect::Factorized {
                u: init_params(n_fields, cfg.k_f, g, &mut rng.derive("U"))?,
                d: init_params(cfg.k_f, k, g, &mut rng.derive("D"))?,
            })
        };
        let mlp = match cfg.mode {
            Mode::Inn => Some(MlpParams::init(field_pair_count(n_fields) * k, &cfg.hidden, &mut rng.derive("mlp"))?),
            Mode::DeepIfm => Some(MlpParams::init(n_fields * k, &cfg.hidden, &mut rng.derive("mlp"))?),
            _ => None,
        };
        // the raw table has no rows for same-field pairs
        let pair_policy =
            if cfg.non_factorized_f && cfg.mode.uses_field_aspect() { PairPolicy::Drop } else { cfg.same_field_pairs };
        let model = IfmModel {
            mode: cfg.mode,
            n_fields,
            pair_policy,
            fm,
            iam: IamParams { tau: cfg.tau, attention, field },
            mlp,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn k(&self) -> usize {
        self.fm.k()
    }

    pub fn n_features(&self) -> usize {
        self.fm.n_features()
    }

    /// Checks that the groups the mode needs are present and that all shapes agree.
    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        let m = self.n_features();
        let n = self.n_fields;
        let shape = |what: &str| Err(Error::Shape(what.to_owned()));
        if self.fm.v.rows() != m {
            return shape("V rows != m");
        }
        if !(self.iam.tau > 0.0) {
            return Err(Error::Parameter(format!("temperature {}", self.iam.tau)));
        }
        if self.mode.uses_attention() {
            let Some(a) = &self.iam.attention else {
                return Err(Error::Contract(format!("mode {} needs the attention network", self.mode)));
            };
            if a.w.cols() != k || a.b.len() != a.w.rows() || a.h.len() != a.w.rows() {
                return shape("attention network dimensions");
            }
        }
        if self.mode.uses_field_aspect() {
            match &self.iam.field {
                None => return Err(Error::Contract(format!("mode {} needs the field aspect", self.mode))),
                Some(FieldAspect::Factorized { u, d }) => {
                    if u.rows() != n || u.cols() != d.rows() || d.cols() != k {
                        return shape("U/D dimensions");
                    }
                }
                Some(FieldAspect::Raw { f }) => {
                    if f.rows() != field_pair_count(n) || f.cols() != k {
                        return shape("raw field-importance table dimensions");
                    }
                    if self.pair_policy == PairPolicy::Keep {
                        return Err(Error::Contract("raw field importance cannot score same-field pairs".into()));
                    }
                }
            }
        }
        if self.mode.uses_mlp() {
            let Some(mlp) = &self.mlp else {
                return Err(Error::Contract(format!("mode {} needs an MLP", self.mode)));
            };
            let want = if self.mode == Mode::Inn { field_pair_count(n) * k } else { n * k };
            if mlp.input_width() != want {
                return Err(Error::Shape(format!("MLP input width {} != {want}", mlp.input_width())));
            }
            let mut width = want;
            for (l, layer) in mlp.layers.iter().enumerate() {
                if layer.q.cols() != width || layer.z.len() != layer.q.rows() {
                    return Err(Error::Shape(format!("MLP layer {l} dimensions")));
                }
                width = layer.q.rows();
            }
            if width != 1 {
                return shape("MLP output width must be 1");
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> ModelSummary {
        let fm = self.fm.v.len() + self.fm.w.len() + 1;
        let field_aspect = match &self.iam.field {
            Some(FieldAspect::Factorized { u, d }) => u.len() + d.len(),
            Some(FieldAspect::Raw { f }) => f.len(),
            None => 0,
        };
        let attention = self.iam.attention.as_ref().map_or(0, |a| a.w.len() + a.b.len() + a.h.len());
        let mlp = self.mlp.as_ref().map_or(0, MlpParams::param_count);
        ModelSummary { fm, field_aspect, attention, mlp, total: fm + field_aspect + attention + mlp }
    }

    /// Named flat views of every parameter group, in a fixed order.
    pub fn param_groups(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![
            ("w0".into(), std::slice::from_ref(&self.fm.w0)),
            ("w".into(), &self.fm.w),
            ("V".into(), self.fm.v.as_slice()),
        ];
        match &self.iam.field {
            Some(FieldAspect::Factorized { u, d }) => {
                out.push(("U".into(), u.as_slice()));
                out.push(("D".into(), d.as_slice()));
            }
            Some(FieldAspect::Raw { f }) => out.push(("F".into(), f.as_slice())),
            None => {}
        }
        if let Some(a) = &self.iam.attention {
            out.push(("W".into(), a.w.as_slice()));
            out.push(("b".into(), &a.b));
            out.push(("h".into(), &a.h));
        }
        if let Some(mlp) = &self.mlp {
            for (l, layer) in mlp.layers.iter().enumerate() {
                out.push((format!("Q{l}"), layer.q.as_slice()));
                out.push((format!("z{l}"), &layer.z));
            }
        }
        out
    }

    pub fn param_group_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        match name {
            "w0" => return Some(std::slice::from_mut(&mut self.fm.w0)),
            "w" => return Some(&mut self.fm.w),
            "V" => return Some(self.fm.v.as_mut_slice()),
            _ => {}
        }
        match (name, &mut self.iam.field) {
            ("U", Some(FieldAspect::Factorized { u, .. })) => return Some(u.as_mut_slice()),
            ("D", Some(FieldAspect::Factorized { d, .. })) => return Some(d.as_mut_slice()),
            ("F", Some(FieldAspect::Raw { f })) => return Some(f.as_mut_slice()),
            _ => {}
        }
        if let Some(a) = &mut self.iam.attention {
            match name {
                "W" => return Some(a.w.as_mut_slice()),
                "b" => return Some(&mut a.b),
                "h" => return Some(&mut a.h),
                _ => {}
            }
        }
        let mlp = self.mlp.as_mut()?;
        let (kind, idx) = name.split_at(1);
        let layer = mlp.layers.get_mut(idx.parse::<usize>().ok()?)?;
        match kind {
            "Q" => Some(layer.q.as_mut_slice()),
            "z" => Some(&mut layer.z),
            _ => None,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.param_groups().iter().all(|(_, g)| g.iter().all(|v| v.is_finite()))
    }

    /// Copies `w0`, `w` and `V` from a trained FM.
    pub fn load_fm(&mut self, fm: &FmParams) -> Result<()> {
        if fm.v.rows() != self.fm.v.rows() || fm.v.cols() != self.fm.v.cols() {
            return Err(Error::Shape(format!(
                "pretrained embeddings are {}x{}, model expects {}x{}",
                fm.v.rows(),
                fm.v.cols(),
                self.fm.v.rows(),
                self.fm.v.cols()
            )));
        }
        self.fm = fm.clone();
        Ok(())
    }
}
