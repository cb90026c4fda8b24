use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Element-wise nonlinearity applied after every hidden layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    LeakyRelu { slope: f64 },
    Silu,
}

impl Activation {
    pub const MENU: [Activation; 5] = [
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::LeakyRelu { slope: 0.01 },
        Activation::Silu,
    ];

    pub fn validate(self) -> Result<()> {
        match self {
            Activation::LeakyRelu { slope } if !(slope > 0.0 && slope < 1.0) => Err(
                Error::config(format!("leaky_relu slope must lie in (0, 1), got {slope}")),
            ),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Silu => z * sigmoid(z),
        }
    }

    /// Derivative at pre-activation `z`, given `y = apply(z)`.
    #[inline]
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Silu => {
                let s = sigmoid(z);
                s + z * s * (1.0 - s)
            }
        }
    }

    /// Discriminant-level equality (ignores the leaky slope).
    pub fn same_kind(self, other: Activation) -> bool {
        std::mem::discriminant(&self) == std::mem::discriminant(&other)
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Relu => write!(f, "relu"),
            Activation::Sigmoid => write!(f, "sigmoid"),
            Activation::Tanh => write!(f, "tanh"),
            Activation::LeakyRelu { slope } => write!(f, "leaky_relu({slope})"),
            Activation::Silu => write!(f, "silu"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = super::parse_call(s)?;
        let act = match (name.as_str(), args.as_slice()) {
            ("relu", []) => Activation::Relu,
            ("sigmoid", []) => Activation::Sigmoid,
            ("tanh", []) => Activation::Tanh,
            ("silu", []) => Activation::Silu,
            ("leaky_relu", []) => Activation::LeakyRelu { slope: 0.01 },
            ("leaky_relu", [slope]) => Activation::LeakyRelu { slope: *slope },
            _ => return Err(Error::Parse(format!("unknown activation `{s}`"))),
        };
        act.validate()?;
        Ok(act)
    }
}

impl TryFrom<String> for Activation {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Activation> for String {
    fn from(a: Activation) -> String {
        a.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        for a in Activation::MENU {
            assert_eq!(a.to_string().parse::<Activation>().unwrap(), a);
        }
        assert!("leaky_relu(1.5)".parse::<Activation>().is_err());
        assert!("gelu".parse::<Activation>().is_err());
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-6;
        for a in Activation::MENU {
            for &z in &[-2.3, -0.4, 0.3, 1.7] {
                let fd = (a.apply(z + h) - a.apply(z - h)) / (2.0 * h);
                let an = a.derivative(z, a.apply(z));
                assert!((fd - an).abs() < 1e-8, "{a} at {z}: {fd} vs {an}");
            }
        }
    }
}
