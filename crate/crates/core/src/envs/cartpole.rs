use rand::Rng as _;

use super::{DiscreteEnv, Step};
use crate::rng::Rng;

const GRAVITY: f64 = 9.8;
const CART_MASS: f64 = 1.0;
const POLE_MASS: f64 = 0.1;
const TOTAL_MASS: f64 = CART_MASS + POLE_MASS;
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = POLE_MASS * HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const DT: f64 = 0.02;
const X_THRESHOLD: f64 = 2.4;
const ANGLE_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;

pub const CARTPOLE_MAX_STEPS: usize = 500;

/// `(x, x_dot, phi, phi_dot)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub phi: f64,
    pub phi_dot: f64,
}

impl CartPoleState {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.x, self.x_dot, self.phi, self.phi_dot]
    }

    pub fn out_of_bounds(&self) -> bool {
        self.x.abs() > X_THRESHOLD || self.phi.abs() > ANGLE_THRESHOLD
    }
}

/// One explicit Euler step under an arbitrary horizontal force.
pub fn cartpole_dynamics(s: CartPoleState, force: f64) -> CartPoleState {
    let (sin, cos) = s.phi.sin_cos();
    let temp = (force + POLE_MASS_LENGTH * s.phi_dot * s.phi_dot * sin) / TOTAL_MASS;
    let phi_acc = (GRAVITY * sin - cos * temp)
        / (HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / TOTAL_MASS));
    let x_acc = temp - POLE_MASS_LENGTH * phi_acc * cos / TOTAL_MASS;
    CartPoleState {
        x: s.x + DT * s.x_dot,
        x_dot: s.x_dot + DT * x_acc,
        phi: s.phi + DT * s.phi_dot,
        phi_dot: s.phi_dot + DT * phi_acc,
    }
}

/// Action 1 pushes right, 0 pushes left. A state already out of bounds ends
/// the episode without moving.
pub fn cartpole_step(s: CartPoleState, action: usize) -> (CartPoleState, f64, bool) {
    if s.out_of_bounds() {
        return (s, 0.0, true);
    }
    let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
    let next = cartpole_dynamics(s, force);
    (next, 1.0, next.out_of_bounds())
}

#[derive(Clone, Debug)]
pub struct CartPoleEnv {
    state: CartPoleState,
    steps: usize,
    max_steps: usize,
}

impl Default for CartPoleEnv {
    fn default() -> Self {
        Self::new(CARTPOLE_MAX_STEPS)
    }
}

impl CartPoleEnv {
    pub fn new(max_steps: usize) -> Self {
        Self {
            state: CartPoleState {
                x: 0.0,
                x_dot: 0.0,
                phi: 0.0,
                phi_dot: 0.0,
            },
            steps: 0,
            max_steps,
        }
    }

    pub fn state(&self) -> CartPoleState {
        self.state
    }
}

impl DiscreteEnv for CartPoleEnv {
    fn obs_dim(&self) -> usize {
        4
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        let mut u = || rng.random_range(-0.05..0.05);
        self.state = CartPoleState {
            x: u(),
            x_dot: u(),
            phi: u(),
            phi_dot: u(),
        };
        self.steps = 0;
        self.state.to_vec()
    }

    fn step(&mut self, action: usize, _rng: &mut Rng) -> Step {
        let (next, reward, done) = cartpole_step(self.state, action);
        self.state = next;
        self.steps += 1;
        Step {
            obs: next.to_vec(),
            reward,
            terminated: done,
            truncated: !done && self.steps >= self.max_steps,
        }
    }
}
