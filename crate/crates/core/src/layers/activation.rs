use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    Sigmoid,
    Tanh,
    #[default]
    Relu,
    Identity,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply_scalar(self, x: f64) -> f64 {
        match self {
            Self::Sigmoid => sigmoid(x),
            Self::Tanh => libm::tanh(x),
            Self::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Self::Identity => x,
        }
    }

    /// Derivative at pre-activation `x`. The relu derivative at 0 is 0.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Self::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Self::Tanh => {
                let t = libm::tanh(x);
                1.0 - t * t
            }
            Self::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Identity => 1.0,
        }
    }

    pub fn apply(self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.apply_scalar(v)).collect()
    }

    /// Upstream gradient times the elementwise derivative at `input`.
    pub fn backward(self, input: &[f64], upstream: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), upstream.len());
        if self == Self::Identity {
            return upstream.to_vec();
        }
        input.iter().zip(upstream).map(|(&x, &g)| g * self.derivative(x)).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sigmoid => "sigmoid",
            Self::Tanh => "tanh",
            Self::Relu => "relu",
            Self::Identity => "identity",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "sigmoid" => Ok(Self::Sigmoid),
            "tanh" => Ok(Self::Tanh),
            "relu" => Ok(Self::Relu),
            "identity" => Ok(Self::Identity),
            other => Err(Error::Config(alloc::format!("unknown activation {other:?}"))),
        }
    }
}
