use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-sample regression loss on the residual `r = target - prediction`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LossKind {
    L2,
    L1,
    Huber { delta: f64 },
    LogCosh,
}

impl LossKind {
    pub const MENU: [LossKind; 4] = [
        LossKind::L2,
        LossKind::L1,
        LossKind::Huber { delta: 1.0 },
        LossKind::LogCosh,
    ];

    pub fn validate(self) -> Result<()> {
        match self {
            LossKind::Huber { delta } if !(delta > 0.0 && delta.is_finite()) => {
                Err(Error::config(format!("huber delta must be > 0, got {delta}")))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn value(self, r: f64) -> f64 {
        match self {
            LossKind::L2 => r * r,
            LossKind::L1 => r.abs(),
            LossKind::Huber { delta } => {
                let a = r.abs();
                if a <= delta {
                    0.5 * r * r
                } else {
                    delta * (a - 0.5 * delta)
                }
            }
            // log(cosh r) = |r| + log1p(exp(-2|r|)) - ln 2, stable for large |r|
            LossKind::LogCosh => {
                let a = r.abs();
                a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
            }
        }
    }

    /// d value / d r.
    #[inline]
    pub fn d_residual(self, r: f64) -> f64 {
        match self {
            LossKind::L2 => 2.0 * r,
            LossKind::L1 => {
                if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            LossKind::Huber { delta } => r.clamp(-delta, delta),
            LossKind::LogCosh => r.tanh(),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::L2 => write!(f, "l2"),
            LossKind::L1 => write!(f, "l1"),
            LossKind::Huber { delta } => write!(f, "huber({delta})"),
            LossKind::LogCosh => write!(f, "log_cosh"),
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = super::parse_call(s)?;
        let loss = match (name.as_str(), args.as_slice()) {
            ("l2" | "mse", []) => LossKind::L2,
            ("l1", []) => LossKind::L1,
            ("huber", []) => LossKind::Huber { delta: 1.0 },
            ("huber", [d]) => LossKind::Huber { delta: *d },
            ("log_cosh" | "logcosh", []) => LossKind::LogCosh,
            _ => return Err(Error::Parse(format!("unknown loss `{s}`"))),
        };
        loss.validate()?;
        Ok(loss)
    }
}

impl TryFrom<String> for LossKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LossKind> for String {
    fn from(l: LossKind) -> String {
        l.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_piecewise_values() {
        let h = LossKind::Huber { delta: 1.0 };
        assert!((h.value(0.5) - 0.125).abs() < 1e-15);
        assert!((h.value(2.0) - 1.5).abs() < 1e-15);
        assert!((h.value(-2.0) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn log_cosh_is_stable() {
        let l = LossKind::LogCosh;
        assert!((l.value(0.3) - 0.3f64.cosh().ln()).abs() < 1e-14);
        assert!((l.value(800.0) - (800.0 - std::f64::consts::LN_2)).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_delta() {
        assert!("huber(0)".parse::<LossKind>().is_err());
        assert_eq!("huber(2.5)".parse::<LossKind>().unwrap(), LossKind::Huber { delta: 2.5 });
    }
}
