use std::f64::consts::PI;

use rand::Rng as _;

use super::Step;
use crate::rng::Rng;

const G: f64 = 10.0;
const MASS: f64 = 1.0;
const LENGTH: f64 = 1.0;
const DT: f64 = 0.05;
const MAX_SPEED: f64 = 8.0;
pub const MAX_TORQUE: f64 = 2.0;
pub const PENDULUM_HORIZON: usize = 200;

/// Angle (0 is upright) and angular velocity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendulumState {
    pub theta: f64,
    pub theta_dot: f64,
}

impl PendulumState {
    pub fn observation(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }
}

/// Maps an angle into `[-pi, pi)`.
pub fn angle_normalize(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

pub fn pendulum_step(s: PendulumState, torque: f64) -> (PendulumState, f64, bool) {
    let u = torque.clamp(-MAX_TORQUE, MAX_TORQUE);
    let th = angle_normalize(s.theta);
    let cost = th * th + 0.1 * s.theta_dot * s.theta_dot + 0.001 * u * u;
    let acc = 3.0 * G / (2.0 * LENGTH) * s.theta.sin() + 3.0 / (MASS * LENGTH * LENGTH) * u;
    let theta_dot = (s.theta_dot + acc * DT).clamp(-MAX_SPEED, MAX_SPEED);
    let theta = s.theta + theta_dot * DT;
    (PendulumState { theta, theta_dot }, -cost, false)
}

/// Fixed-horizon pendulum swing-up; the horizon only truncates.
#[derive(Clone, Debug)]
pub struct PendulumEnv {
    state: PendulumState,
    steps: usize,
    horizon: usize,
}

impl Default for PendulumEnv {
    fn default() -> Self {
        Self::new(PENDULUM_HORIZON)
    }
}

impl PendulumEnv {
    pub fn new(horizon: usize) -> Self {
        Self {
            state: PendulumState {
                theta: PI,
                theta_dot: 0.0,
            },
            steps: 0,
            horizon,
        }
    }

    pub const OBS_DIM: usize = 3;
    pub const ACTION_DIM: usize = 1;

    pub fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.state = PendulumState {
            theta: rng.random_range(-PI..PI),
            theta_dot: rng.random_range(-1.0..1.0),
        };
        self.steps = 0;
        self.state.observation()
    }

    pub fn step(&mut self, torque: f64) -> Step {
        let (next, reward, _) = pendulum_step(self.state, torque);
        self.state = next;
        self.steps += 1;
        Step {
            obs: next.observation(),
            reward,
            terminated: false,
            truncated: self.steps >= self.horizon,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn hanging_still_costs_pi_squared() {
        let (_, r, done) = pendulum_step(PendulumState { theta: PI, theta_dot: 0.0 }, 0.0);
        assert!((r + PI * PI).abs() < 1e-12);
        assert!(!done);
    }

    #[test]
    fn upright_equilibrium() {
        let s = PendulumState { theta: 0.0, theta_dot: 0.0 };
        let (n, r, _) = pendulum_step(s, 0.0);
        assert_eq!(r, 0.0);
        assert_eq!(n, s);
    }

    #[test]
    fn speed_stays_clamped() {
        let mut env = PendulumEnv::default();
        let mut r = rng::stream(0, 0, rng::ENV);
        env.reset(&mut r);
        for t in 0..2000 {
            let torque = if (t / 30) % 2 == 0 { 5.0 } else { -5.0 };
            let st = env.step(torque);
            assert!(st.obs[2].abs() <= MAX_SPEED);
            if st.truncated {
                env.reset(&mut r);
            }
        }
    }

    #[test]
    fn torque_is_clamped() {
        let s = PendulumState { theta: 0.0, theta_dot: 0.0 };
        assert_eq!(pendulum_step(s, 100.0), pendulum_step(s, 2.0));
    }
}
