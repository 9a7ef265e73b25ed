//! Cart-pole balancing with the classic parameters: g = 9.8, cart mass 1.0,
//! pole mass 0.1, half-pole length 0.5, force ±10, explicit Euler at τ = 0.02.
//! Reward +1 every step; ends when |x| > 2.4, |θ| > 12°, or 500 steps.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::StepResult;

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
const X_THRESHOLD: f64 = 2.4;
const THETA_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;

pub const MAX_STEPS: u32 = 500;

#[derive(Clone, Debug)]
pub struct CartPole {
    /// (x, ẋ, θ, θ̇)
    state: [f64; 4],
    steps: u32,
    done: bool,
}

impl CartPole {
    pub fn new() -> Self {
        CartPole {
            state: [0.0; 4],
            steps: 0,
            done: true,
        }
    }

    /// Overwrite the physical state (x, ẋ, θ, θ̇) and arm a fresh episode.
    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.steps = 0;
        self.done = false;
    }

    /// Uniform ±0.05 on all four components, drawn in state order.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = SplitMix64::new(seed);
        for v in &mut self.state {
            *v = rng.uniform(-0.05, 0.05);
        }
        self.steps = 0;
        self.done = false;
        self.state.to_vec()
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if action > 1 {
            return Err(Error::InvalidArgument(format!(
                "cartpole action {action} not in {{0, 1}}"
            )));
        }
        if self.done {
            return Err(Error::InvalidArgument(
                "step on finished episode; reset first".into(),
            ));
        }
        let [x, x_dot, theta, theta_dot] = self.state;
        let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
        let cos_theta = theta.cos();
        let sin_theta = theta.sin();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin_theta) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin_theta - cos_theta * temp)
            / (LENGTH * (4.0 / 3.0 - MASS_POLE * cos_theta * cos_theta / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos_theta / TOTAL_MASS;
        self.state = [
            x + TAU * x_dot,
            x_dot + TAU * x_acc,
            theta + TAU * theta_dot,
            theta_dot + TAU * theta_acc,
        ];
        self.steps += 1;
        let terminated = self.state[0].abs() > X_THRESHOLD || self.state[2].abs() > THETA_THRESHOLD;
        let truncated = !terminated && self.steps >= MAX_STEPS;
        self.done = terminated || truncated;
        Ok(StepResult {
            observation: self.state.to_vec(),
            reward: 1.0,
            terminated,
            truncated,
        })
    }
}

impl Default for CartPole {
    fn default() -> Self {
        CartPole::new()
    }
}
