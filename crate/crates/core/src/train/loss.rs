use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// `(pred - target)^2` and its derivative in `pred`.
pub fn squared_loss(pred: f64, target: f64) -> (f64, f64) {
    let r = pred - target;
    (r * r, 2.0 * r)
}

/// `ln(1 + exp(-y pred))` with `y = +1` for positive targets and `-1`
/// otherwise, and its derivative in `pred`.
pub fn logistic_loss(pred: f64, target: f64) -> (f64, f64) {
    let y = if target > 0.0 { 1.0 } else { -1.0 };
    let m = -y * pred;
    // ln(1 + e^m) without overflow
    let loss = if m > 0.0 { m + (-m).exp().ln_1p() } else { m.exp().ln_1p() };
    let sig = 1.0 / (1.0 + (-m).exp());
    (loss, -y * sig)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Squared,
    Logistic,
}

impl LossKind {
    pub fn eval(self, pred: f64, target: f64) -> (f64, f64) {
        match self {
            LossKind::Squared => squared_loss(pred, target),
            LossKind::Logistic => logistic_loss(pred, target),
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "squared" => Ok(LossKind::Squared),
            "logistic" => Ok(LossKind::Logistic),
            other => Err(Error::Parameter(format!("unknown loss {other:?}"))),
        }
    }
}
