//! Adaptive Q-network ensembles.
//!
//! Several Q-networks, each trained with its own hyperparameters, regress onto
//! one shared target. At every target update the member with the smallest
//! accumulated regression loss becomes the next target. The crate contains
//! the dense-network substrate ([`tinynn`]), desk-scale environments
//! ([`envs`]), the tabular instantiation ([`tabular`]), the deep value-based
//! and actor-critic agents ([`adadqn`], [`adasac`]), the evolutionary
//! infinite-search-space mode ([`evo`]) and the evaluation toolkit
//! ([`harness`]).

pub mod adadqn;
pub mod adasac;
pub mod envs;
mod error;
pub mod evo;
pub mod harness;
pub mod rng;
mod schedule;
pub mod tabular;
pub mod tinynn;

pub use error::{Error, Result};
pub use schedule::LinearSchedule;

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the smallest value; ties resolve to the lowest index.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arg_extrema_break_ties_low() {
        assert_eq!(argmin(&[3.2, 1.1, 5.0]), 1);
        assert_eq!(argmin(&[2.0, 2.0]), 0);
        assert_eq!(argmax(&[3.2, 1.1, 5.0]), 2);
        assert_eq!(argmax(&[5.0, 5.0]), 0);
    }
}
