//! Models under interrogation, h = f ∘ g, and their losses.
//!
//! Every model is assumed to be a deterministic function of its input row:
//! the paired tests compare the same instance before and after
//! perturbation, and rows a perturbation leaves bit-identical reuse the
//! unperturbed output.

mod adapter;
mod synthetic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::error::{invalid, Error, Result};

pub use adapter::{ExternalModel, Handshake};
pub use synthetic::{make_synthetic_model, SyntheticModel};

/// Final output mapping f applied to the pre-transfer value g(x).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transfer {
    #[default]
    Identity,
    Logistic,
}

impl Transfer {
    #[inline]
    pub fn apply(self, g: f64) -> f64 {
        match self {
            Transfer::Identity => g,
            Transfer::Logistic => 1.0 / (1.0 + (-g).exp()),
        }
    }

    /// Loss used when none is configured: squared error for identity,
    /// cross-entropy for logistic outputs.
    pub fn default_loss(self) -> LossFunction {
        match self {
            Transfer::Identity => LossFunction::SquaredError,
            Transfer::Logistic => LossFunction::BinaryCrossEntropy,
        }
    }
}

impl FromStr for Transfer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Transfer::Identity),
            "logistic" => Ok(Transfer::Logistic),
            other => Err(invalid(format!("unknown transfer function `{other}`"))),
        }
    }
}

/// A scoring function over row batches.
pub trait Model: Send + Sync {
    /// Number of input columns.
    fn arity(&self) -> usize;

    fn transfer(&self) -> Transfer;

    /// h(x) for every row of `x`.
    fn predict(&self, x: &Matrix) -> Result<Vec<f64>>;

    /// Whether [`Model::pre_transfer`] is available.
    fn supports_pre_transfer(&self) -> bool {
        self.transfer() == Transfer::Identity
    }

    /// g(x) for every row of `x`; identity-transfer models reuse `predict`.
    fn pre_transfer(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self.transfer() {
            Transfer::Identity => self.predict(x),
            t => Err(Error::Capability(format!(
                "model with {t:?} transfer exposes no pre-transfer values"
            ))),
        }
    }
}

/// Which model output an evaluation asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Output {
    Predict,
    PreTransfer,
}

pub(crate) fn evaluate(model: &dyn Model, x: &Matrix, output: Output) -> Result<Vec<f64>> {
    if x.cols() != model.arity() {
        return Err(Error::Arity {
            expected: model.arity(),
            found: x.cols(),
        });
    }
    let values = match output {
        Output::Predict => model.predict(x)?,
        Output::PreTransfer => {
            if !model.supports_pre_transfer() {
                return Err(Error::Capability(
                    "interaction tests need pre-transfer values g(x) or an identity transfer".into(),
                ));
            }
            model.pre_transfer(x)?
        }
    };
    if values.len() != x.rows() {
        return Err(Error::Internal(format!(
            "model returned {} values for {} rows",
            values.len(),
            x.rows()
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("model output for row {i} is not finite")));
    }
    Ok(values)
}

/// h(x) for every row, checking arity and finiteness.
pub fn predict(model: &dyn Model, x: &Matrix) -> Result<Vec<f64>> {
    evaluate(model, x, Output::Predict)
}

/// g(x) for every row.
pub fn pre_transfer(model: &dyn Model, x: &Matrix) -> Result<Vec<f64>> {
    evaluate(model, x, Output::PreTransfer)
}

/// Per-instance loss L[y, h(x)].
pub fn losses(model: &dyn Model, data: &Dataset, loss: LossFunction) -> Result<Vec<f64>> {
    let preds = predict(model, &data.x)?;
    Ok(loss.per_instance(&data.y, &preds))
}

/// Probability clamp used by cross-entropy.
pub const PROBABILITY_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFunction {
    SquaredError,
    BinaryCrossEntropy,
}

impl LossFunction {
    /// Loss of one prediction, with no clamping notice.
    #[inline]
    pub fn eval(self, y: f64, prediction: f64) -> f64 {
        match self {
            LossFunction::SquaredError => {
                let d = y - prediction;
                d * d
            }
            LossFunction::BinaryCrossEntropy => {
                let p = prediction.clamp(PROBABILITY_EPSILON, 1.0 - PROBABILITY_EPSILON);
                let l = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
                l.max(0.0)
            }
        }
    }

    /// Elementwise losses. Cross-entropy predictions outside
    /// `[ε, 1 − ε]` are clamped and reported once per call.
    pub fn per_instance(self, y: &[f64], predictions: &[f64]) -> Vec<f64> {
        if self == LossFunction::BinaryCrossEntropy {
            let clamped = predictions
                .iter()
                .filter(|&&p| !(PROBABILITY_EPSILON..=1.0 - PROBABILITY_EPSILON).contains(&p))
                .count();
            if clamped > 0 {
                log::warn!("clamped {clamped} predictions into [1e-12, 1 - 1e-12] for cross-entropy");
            }
        }
        y.iter()
            .zip(predictions)
            .map(|(&y, &p)| self.eval(y, p))
            .collect()
    }
}

impl FromStr for LossFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared_error" | "squared-error" | "mse" => Ok(LossFunction::SquaredError),
            "binary_cross_entropy" | "binary-cross-entropy" | "bce" => {
                Ok(LossFunction::BinaryCrossEntropy)
            }
            other => Err(invalid(format!("unknown loss `{other}`"))),
        }
    }
}

impl fmt::Display for LossFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossFunction::SquaredError => "squared_error",
            LossFunction::BinaryCrossEntropy => "binary_cross_entropy",
        })
    }
}

type RowFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A model built from a per-row closure for g, with a declared transfer.
pub struct FnModel {
    arity: usize,
    transfer: Transfer,
    g: RowFn,
}

impl FnModel {
    pub fn new(arity: usize, transfer: Transfer, g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        FnModel {
            arity,
            transfer,
            g: Box::new(g),
        }
    }

    /// Identity-transfer model h = g.
    pub fn regression(arity: usize, h: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(arity, Transfer::Identity, h)
    }
}

impl Model for FnModel {
    fn arity(&self) -> usize {
        self.arity
    }

    fn transfer(&self) -> Transfer {
        self.transfer
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(x.row_iter().map(|r| self.transfer.apply((self.g)(r))).collect())
    }

    fn supports_pre_transfer(&self) -> bool {
        true
    }

    fn pre_transfer(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(x.row_iter().map(|r| (self.g)(r)).collect())
    }
}
