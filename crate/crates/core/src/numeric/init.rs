use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DenseMatrix, SeededRng};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "scheme", content = "scale")]
pub enum InitScheme {
    /// Normal with mean 0 and the given standard deviation.
    Gaussian(f64),
    /// Uniform on `[-r, r]`.
    Uniform(f64),
    Zeros,
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitScheme::Gaussian(s) => write!(f, "gaussian({s})"),
            InitScheme::Uniform(r) => write!(f, "uniform({r})"),
            InitScheme::Zeros => f.write_str("zeros"),
        }
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    /// Accepts `zeros`, `gaussian(0.01)` and `uniform(0.1)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "zeros" {
            return Ok(InitScheme::Zeros);
        }
        let (name, rest) = s.split_once('(').ok_or_else(|| Error::Parameter(format!("unknown init scheme {s:?}")))?;
        let arg: f64 = rest
            .strip_suffix(')')
            .and_then(|a| a.trim().parse().ok())
            .ok_or_else(|| Error::Parameter(format!("bad init scheme argument in {s:?}")))?;
        match name.trim() {
            "gaussian" => Ok(InitScheme::Gaussian(arg)),
            "uniform" => Ok(InitScheme::Uniform(arg)),
            other => Err(Error::Parameter(format!("unknown init scheme {other:?}"))),
        }
    }
}

pub fn init_params(rows: usize, cols: usize, scheme: InitScheme, rng: &mut SeededRng) -> Result<DenseMatrix> {
    let n = rows * cols;
    let data: Vec<f64> = match scheme {
        InitScheme::Zeros => vec![0.0; n],
        InitScheme::Gaussian(sigma) => {
            if !(sigma >= 0.0) || !sigma.is_finite() {
                return Err(Error::Parameter(format!("gaussian sigma {sigma}")));
            }
            (0..n).map(|_| rng.gaussian(sigma)).collect()
        }
        InitScheme::Uniform(r) => {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(Error::Parameter(format!("uniform radius {r}")));
            }
            (0..n).map(|_| (2.0 * rng.uniform() - 1.0) * r).collect()
        }
    };
    DenseMatrix::from_vec(rows, cols, data)
}
