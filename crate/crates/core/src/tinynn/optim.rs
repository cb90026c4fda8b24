use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ParamVector;
use crate::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const RMS_DECAY: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OptimizerKind {
    Sgd,
    Adam { eps: f64 },
    AdamW { weight_decay: f64, eps: f64 },
    RmsProp { eps: f64 },
}

impl OptimizerKind {
    pub const MENU: [OptimizerKind; 4] = [
        OptimizerKind::Sgd,
        OptimizerKind::Adam { eps: 1e-8 },
        OptimizerKind::AdamW {
            weight_decay: 1e-2,
            eps: 1e-8,
        },
        OptimizerKind::RmsProp { eps: 1e-8 },
    ];

    pub fn validate(self) -> Result<()> {
        let ok = match self {
            OptimizerKind::Sgd => true,
            OptimizerKind::Adam { eps } | OptimizerKind::RmsProp { eps } => eps > 0.0,
            OptimizerKind::AdamW { weight_decay, eps } => eps > 0.0 && weight_decay >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid optimizer constants: {self}")))
        }
    }

    pub fn same_kind(self, other: OptimizerKind) -> bool {
        std::mem::discriminant(&self) == std::mem::discriminant(&other)
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimizerKind::Sgd => write!(f, "sgd"),
            OptimizerKind::Adam { eps } => write!(f, "adam({eps:e})"),
            OptimizerKind::AdamW { weight_decay, eps } => {
                write!(f, "adamw({weight_decay:e}, {eps:e})")
            }
            OptimizerKind::RmsProp { eps } => write!(f, "rmsprop({eps:e})"),
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    /// `sgd`, `adam`, `adam(eps)`, `adamw`, `adamw(weight_decay, eps)`,
    /// `rmsprop`, `rmsprop(eps)`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = super::parse_call(s)?;
        let kind = match (name.as_str(), args.as_slice()) {
            ("sgd", []) => OptimizerKind::Sgd,
            ("adam", []) => OptimizerKind::Adam { eps: 1e-8 },
            ("adam", [eps]) => OptimizerKind::Adam { eps: *eps },
            ("adamw", []) => OptimizerKind::AdamW {
                weight_decay: 1e-2,
                eps: 1e-8,
            },
            ("adamw", [wd]) => OptimizerKind::AdamW {
                weight_decay: *wd,
                eps: 1e-8,
            },
            ("adamw", [wd, eps]) => OptimizerKind::AdamW {
                weight_decay: *wd,
                eps: *eps,
            },
            ("rmsprop", []) => OptimizerKind::RmsProp { eps: 1e-8 },
            ("rmsprop", [eps]) => OptimizerKind::RmsProp { eps: *eps },
            _ => return Err(Error::Parse(format!("unknown optimizer `{s}`"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl TryFrom<String> for OptimizerKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<OptimizerKind> for String {
    fn from(k: OptimizerKind) -> String {
        k.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        let c = Self {
            kind,
            learning_rate,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam { eps: 1e-8 },
            learning_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        self.kind.validate()
    }
}

/// Optimizer constants plus moment accumulators sized like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    config: OptimizerConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, num_params: usize) -> Self {
        Self {
            config,
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second
    }

    /// Applies one update. A non-finite gradient leaves everything untouched.
    pub fn step(&mut self, params: &mut ParamVector, grad: &[f64]) -> Result<()> {
        let n = self.first.len();
        for (len, context) in [(params.len(), "optimizer params"), (grad.len(), "optimizer grad")] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: n,
                    got: len,
                });
            }
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {i} = {}", grad[i])));
        }
        self.step += 1;
        let lr = self.config.learning_rate;
        match self.config.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam { eps } => self.adam(params, grad, eps, 0.0),
            OptimizerKind::AdamW { weight_decay, eps } => {
                self.adam(params, grad, eps, weight_decay)
            }
            OptimizerKind::RmsProp { eps } => {
                for ((p, g), v) in params.iter_mut().zip(grad).zip(&mut self.second) {
                    *v = RMS_DECAY * *v + (1.0 - RMS_DECAY) * g * g;
                    *p -= lr * g / (v.sqrt() + eps);
                }
            }
        }
        Ok(())
    }

    fn adam(&mut self, params: &mut [f64], grad: &[f64], eps: f64, weight_decay: f64) {
        let lr = self.config.learning_rate;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            if weight_decay > 0.0 {
                *p -= lr * weight_decay * *p;
            }
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(kind: OptimizerKind, lr: f64, n: usize) -> OptimizerState {
        OptimizerState::new(OptimizerConfig::new(kind, lr).unwrap(), n)
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        for kind in [
            OptimizerKind::Sgd,
            OptimizerKind::Adam { eps: 1e-8 },
            OptimizerKind::AdamW {
                weight_decay: 0.0,
                eps: 1e-8,
            },
            OptimizerKind::RmsProp { eps: 1e-8 },
        ] {
            let mut opt = state(kind, 0.1, 3);
            let mut p = ParamVector::from_vec(vec![1.0, -2.0, 0.5]);
            opt.step(&mut p, &[0.0; 3]).unwrap();
            assert_eq!(&p[..], &[1.0, -2.0, 0.5], "{kind}");
            assert_eq!(opt.steps(), 1);
        }
    }

    #[test]
    fn sgd_step() {
        let mut opt = state(OptimizerKind::Sgd, 0.1, 1);
        let mut p = ParamVector::from_vec(vec![1.0]);
        opt.step(&mut p, &[2.0]).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_by_hand() {
        // m_hat = 3, v_hat = 9 -> delta = lr * 3 / (3 + eps)
        let mut opt = state(OptimizerKind::Adam { eps: 1e-8 }, 1e-3, 1);
        let mut p = ParamVector::from_vec(vec![0.0]);
        opt.step(&mut p, &[3.0]).unwrap();
        let expected = -1e-3 * 3.0 / (3.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] + 9.999e-4).abs() < 1e-7);
    }

    #[test]
    fn adamw_decays_independently_of_gradient() {
        let mut opt = state(
            OptimizerKind::AdamW {
                weight_decay: 0.5,
                eps: 1e-8,
            },
            0.1,
            1,
        );
        let mut p = ParamVector::from_vec(vec![2.0]);
        opt.step(&mut p, &[0.0]).unwrap();
        assert!((p[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn rmsprop_first_step_by_hand() {
        let mut opt = state(OptimizerKind::RmsProp { eps: 1e-8 }, 0.01, 1);
        let mut p = ParamVector::from_vec(vec![0.0]);
        opt.step(&mut p, &[2.0]).unwrap();
        let v: f64 = 0.01 * 4.0;
        assert!((p[0] + 0.01 * 2.0 / (v.sqrt() + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_refused() {
        let mut opt = state(OptimizerKind::Adam { eps: 1e-8 }, 1e-3, 2);
        let mut p = ParamVector::from_vec(vec![1.0, 1.0]);
        assert!(opt.step(&mut p, &[1.0, f64::INFINITY]).is_err());
        assert_eq!(&p[..], &[1.0, 1.0]);
        assert_eq!(opt.steps(), 0);
        assert!(opt.first_moment().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn parse_kinds() {
        assert_eq!(
            "adam(1.5e-4)".parse::<OptimizerKind>().unwrap(),
            OptimizerKind::Adam { eps: 1.5e-4 }
        );
        for k in OptimizerKind::MENU {
            assert_eq!(k.to_string().parse::<OptimizerKind>().unwrap(), k);
        }
        assert!(OptimizerConfig::new(OptimizerKind::Sgd, 0.0).is_err());
    }
}
