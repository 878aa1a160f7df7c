use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Pointwise nonlinearities. All satisfy `σ(0) = 0` and are 1-Lipschitz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Relu,
    Tanh,
    Identity,
}

impl Nonlinearity {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::Identity => x,
        }
    }

    /// Derivative at `x`; ReLU's kink at 0 takes the value 0.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Nonlinearity::Identity => 1.0,
        }
    }

    pub fn apply_all(self, x: &Array2<f64>) -> Array2<f64> {
        match self {
            Nonlinearity::Identity => x.clone(),
            _ => x.mapv(|v| self.apply(v)),
        }
    }

    pub fn derivative_all(self, x: &Array2<f64>) -> Array2<f64> {
        x.mapv(|v| self.derivative(v))
    }
}

impl FromStr for Nonlinearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Nonlinearity::Relu),
            "tanh" => Ok(Nonlinearity::Tanh),
            "identity" | "linear" => Ok(Nonlinearity::Identity),
            other => Err(Error::invalid(format!("unknown nonlinearity {other:?}"))),
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Nonlinearity::Relu => "relu",
            Nonlinearity::Tanh => "tanh",
            Nonlinearity::Identity => "identity",
        })
    }
}
