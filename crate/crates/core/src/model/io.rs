//! Self-describing binary container for models and checkpoints.
//!
//! Layout: the 8-byte magic `IFMMODEL`, a little-endian `u32` format version,
//! a `u64` header length, a UTF-8 JSON header, then every tensor's values as
//! little-endian `f64` in header order. Values round-trip bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{
    AttentionNet, DenseLayer, FieldAspect, FmParams, IamParams, IfmModel, MlpParams, Mode, PairPolicy,
};
use crate::error::{Error, Result};
use crate::numeric::DenseMatrix;

const MAGIC: &[u8; 8] = b"IFMMODEL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<TensorHeader>,
}

/// Named tensors plus free-form metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, DenseMatrix)>,
}

impl Container {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value) -> Self {
        Container { kind: kind.into(), meta, tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: DenseMatrix) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn push_vec(&mut self, name: impl Into<String>, values: &[f64]) {
        let t = DenseMatrix::from_vec(1, values.len(), values.to_vec()).unwrap_or_else(|_| {
            // non-finite values are stored as-is
            let mut m = DenseMatrix::zeros(1, values.len());
            m.as_mut_slice().copy_from_slice(values);
            m
        });
        self.push(name, t);
    }

    pub fn get(&self, name: &str) -> Option<&DenseMatrix> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn take(&mut self, name: &str) -> Result<DenseMatrix> {
        self.take_opt(name).ok_or_else(|| Error::Format(format!("missing tensor {name:?}")))
    }

    fn take_opt(&mut self, name: &str) -> Option<DenseMatrix> {
        let pos = self.tensors.iter().position(|(n, _)| n == name)?;
        Some(self.tensors.remove(pos).1)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| TensorHeader { name: name.clone(), rows: t.rows(), cols: t.cols() })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
        let io = |e| Error::io("<container>", e);
        out.write_all(MAGIC).map_err(io)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
        out.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
        out.write_all(&json).map_err(io)?;
        for (_, t) in &self.tensors {
            let mut buf = Vec::with_capacity(t.len() * 8);
            for v in t.as_slice() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&buf).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let fmt = |msg: &str| Error::Format(msg.to_owned());
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(|_| fmt("truncated header"))?;
        if &magic != MAGIC {
            return Err(fmt("not a model container (bad magic)"));
        }
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b4).map_err(|_| fmt("truncated header"))?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported container version {version}")));
        }
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b8).map_err(|_| fmt("truncated header"))?;
        let len = u64::from_le_bytes(b8) as usize;
        let mut json = vec![0u8; len];
        input.read_exact(&mut json).map_err(|_| fmt("truncated header"))?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| Error::Format(e.to_string()))?;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for th in header.tensors {
            let n = th.rows.checked_mul(th.cols).ok_or_else(|| fmt("tensor size overflow"))?;
            let mut bytes = vec![0u8; n * 8];
            input.read_exact(&mut bytes).map_err(|_| Error::Format(format!("truncated tensor {:?}", th.name)))?;
            let mut m = DenseMatrix::zeros(th.rows, th.cols);
            for (dst, chunk) in m.as_mut_slice().iter_mut().zip(bytes.chunks_exact(8)) {
                *dst = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            }
            tensors.push((th.name, m));
        }
        let mut rest = [0u8; 1];
        if input.read(&mut rest).map_err(|e| Error::io("<container>", e))? != 0 {
            return Err(fmt("trailing bytes after last tensor"));
        }
        Ok(Container { kind: header.kind, meta: header.meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file)).map_err(|e| relabel(e, path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Container::read_from(BufReader::new(file)).map_err(|e| relabel(e, path))
    }
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelMeta {
    mode: Mode,
    n_fields: usize,
    n_features: usize,
    k: usize,
    tau: f64,
    pair_policy: PairPolicy,
    #[serde(default)]
    config: serde_json::Value,
}

fn row_vec(v: &[f64]) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(1, v.len());
    m.as_mut_slice().copy_from_slice(v);
    m
}

fn expect_shape(name: &str, t: &DenseMatrix, rows: usize, cols: usize) -> Result<()> {
    if t.rows() != rows || t.cols() != cols {
        return Err(Error::Shape(format!("tensor {name} is {}x{}, expected {rows}x{cols}", t.rows(), t.cols())));
    }
    Ok(())
}

/// Packs `model` into a container of kind `kind`; `config` is stored verbatim
/// in the metadata.
pub fn model_container(model: &IfmModel, kind: &str, config: serde_json::Value) -> Result<Container> {
    let meta = ModelMeta {
        mode: model.mode,
        n_fields: model.n_fields,
        n_features: model.n_features(),
        k: model.k(),
        tau: model.iam.tau,
        pair_policy: model.pair_policy,
        config,
    };
    let mut c = Container::new(kind, serde_json::to_value(&meta).map_err(|e| Error::Format(e.to_string()))?);
    c.push("fm.w0", row_vec(&[model.fm.w0]));
    c.push("fm.w", row_vec(&model.fm.w));
    c.push("fm.V", model.fm.v.clone());
    if let Some(a) = &model.iam.attention {
        c.push("iam.W", a.w.clone());
        c.push("iam.b", row_vec(&a.b));
        c.push("iam.h", row_vec(&a.h));
    }
    match &model.iam.field {
        Some(FieldAspect::Factorized { u, d }) => {
            c.push("iam.U", u.clone());
            c.push("iam.D", d.clone());
        }
        Some(FieldAspect::Raw { f }) => c.push("iam.F", f.clone()),
        None => {}
    }
    if let Some(mlp) = &model.mlp {
        for (l, layer) in mlp.layers.iter().enumerate() {
            c.push(format!("mlp.{l}.Q"), layer.q.clone());
            c.push(format!("mlp.{l}.z"), row_vec(&layer.z));
        }
    }
    Ok(c)
}

/// Rebuilds a model, consuming its tensors from `c`. Other tensors (optimizer
/// state) are left in place. Returns the stored config value.
pub fn model_from_container(c: &mut Container) -> Result<(IfmModel, serde_json::Value)> {
    let meta: ModelMeta = serde_json::from_value(c.meta.clone()).map_err(|e| Error::Format(e.to_string()))?;
    let w0 = c.take("fm.w0")?;
    expect_shape("fm.w0", &w0, 1, 1)?;
    let w = c.take("fm.w")?;
    expect_shape("fm.w", &w, 1, meta.n_features)?;
    let v = c.take("fm.V")?;
    expect_shape("fm.V", &v, meta.n_features, meta.k)?;
    let attention = match c.take_opt("iam.W") {
        Some(wm) => Some(AttentionNet {
            b: c.take("iam.b")?.as_slice().to_vec(),
            h: c.take("iam.h")?.as_slice().to_vec(),
            w: wm,
        }),
        None => None,
    };
    let field = match (c.take_opt("iam.U"), c.take_opt("iam.F")) {
        (Some(u), None) => Some(FieldAspect::Factorized { u, d: c.take("iam.D")? }),
        (None, Some(f)) => Some(FieldAspect::Raw { f }),
        (None, None) => None,
        (Some(_), Some(_)) => return Err(Error::Format("both factorized and raw field importance present".into())),
    };
    let mut layers = Vec::new();
    while let Some(q) = c.take_opt(&format!("mlp.{}.Q", layers.len())) {
        let z = c.take(&format!("mlp.{}.z", layers.len()))?.as_slice().to_vec();
        layers.push(DenseLayer { q, z });
    }
    let model = IfmModel {
        mode: meta.mode,
        n_fields: meta.n_fields,
        pair_policy: meta.pair_policy,
        fm: FmParams { w0: w0.get(0, 0), w: w.as_slice().to_vec(), v },
        iam: IamParams { tau: meta.tau, attention, field },
        mlp: if layers.is_empty() { None } else { Some(MlpParams { layers }) },
    };
    model.validate()?;
    Ok((model, meta.config))
}

pub fn save_model(model: &IfmModel, config: serde_json::Value, path: &Path) -> Result<()> {
    model_container(model, "model", config)?.save(path)
}

/// Loads a model (or the model part of a checkpoint) and its stored config.
pub fn load_model(path: &Path) -> Result<(IfmModel, serde_json::Value)> {
    let mut c = Container::load(path)?;
    model_from_container(&mut c)
}
