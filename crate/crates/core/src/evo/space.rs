use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::adadqn::HyperparamSet;
use crate::rng::Rng;
use crate::tinynn::{Activation, LossKind, MlpSpec, OptimizerConfig, OptimizerKind};
use crate::{Error, Result};

/// Ranges and menus every member's hyperparameters must stay within.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    pub activations: Vec<Activation>,
    pub optimizers: Vec<OptimizerKind>,
    pub losses: Vec<LossKind>,
    pub lr_min: f64,
    pub lr_max: f64,
    pub min_layers: usize,
    pub max_layers: usize,
    pub min_width: usize,
    pub max_width: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            activations: Activation::MENU.to_vec(),
            optimizers: OptimizerKind::MENU.to_vec(),
            losses: LossKind::MENU.to_vec(),
            lr_min: 1e-6,
            lr_max: 1e-3,
            min_layers: 1,
            max_layers: 3,
            min_width: 16,
            max_width: 128,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.activations.is_empty() || self.optimizers.is_empty() || self.losses.is_empty() {
            return Err(Error::config("search-space menus must be non-empty"));
        }
        for a in &self.activations {
            a.validate()?;
        }
        for o in &self.optimizers {
            o.validate()?;
        }
        for l in &self.losses {
            l.validate()?;
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max && self.lr_max.is_finite()) {
            return Err(Error::config("learning-rate range must satisfy 0 < lr_min <= lr_max"));
        }
        if self.min_layers > self.max_layers || self.min_width == 0 || self.min_width > self.max_width {
            return Err(Error::config("architecture ranges are empty"));
        }
        Ok(())
    }

    pub fn contains(&self, h: &HyperparamSet) -> bool {
        let layers = &h.spec.hidden_layers;
        let lr = h.optimizer.learning_rate;
        (self.min_layers..=self.max_layers).contains(&layers.len())
            && layers.iter().all(|w| (self.min_width..=self.max_width).contains(w))
            && self.activations.contains(&h.spec.activation)
            && self.losses.contains(&h.loss)
            && self.optimizers.contains(&h.optimizer.kind)
            && (self.lr_min..=self.lr_max).contains(&lr)
    }

    pub fn clip_lr(&self, lr: f64) -> f64 {
        lr.clamp(self.lr_min, self.lr_max)
    }

    pub fn clip_width(&self, w: i64) -> usize {
        w.clamp(self.min_width as i64, self.max_width as i64) as usize
    }

    /// Uniform draw: layer count and widths uniform, learning rate
    /// log-uniform, menus uniform.
    pub fn sample(&self, input_dim: usize, output_dim: usize, rng: &mut Rng) -> Result<HyperparamSet> {
        self.validate()?;
        let n = rng.random_range(self.min_layers..=self.max_layers);
        let hidden = (0..n).map(|_| rng.random_range(self.min_width..=self.max_width)).collect();
        let activation = *self.activations.choose(rng).expect("non-empty");
        let loss = *self.losses.choose(rng).expect("non-empty");
        let kind = *self.optimizers.choose(rng).expect("non-empty");
        let lr = (rng.random_range(self.lr_min.ln()..=self.lr_max.ln())).exp();
        Ok(HyperparamSet {
            spec: MlpSpec::new(input_dim, hidden, output_dim, activation)?,
            loss,
            optimizer: OptimizerConfig::new(kind, self.clip_lr(lr))?,
            discount: None,
        })
    }
}
