//! Acrobot swing-up: two-link pendulum with torque on the second joint,
//! integrated with a single RK4 step of dt = 0.2 per action using the
//! book-form dynamics (unit masses and lengths, COM at 0.5, unit inertia,
//! g = 9.8). Angles wrap to [−π, π]; velocities clip to ±4π and ±9π. Reward
//! −1 every step; ends when −cosθ₁ − cos(θ₂+θ₁) > 1 or after 500 steps.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::StepResult;

const DT: f64 = 0.2;
const LINK_LENGTH_1: f64 = 1.0;
const LINK_MASS_1: f64 = 1.0;
const LINK_MASS_2: f64 = 1.0;
const LINK_COM_1: f64 = 0.5;
const LINK_COM_2: f64 = 0.5;
const LINK_MOI: f64 = 1.0;
const GRAVITY: f64 = 9.8;
const MAX_VEL_1: f64 = 4.0 * PI;
const MAX_VEL_2: f64 = 9.0 * PI;
const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];

pub const MAX_STEPS: u32 = 500;

#[derive(Clone, Debug)]
pub struct Acrobot {
    /// (θ₁, θ₂, θ̇₁, θ̇₂)
    state: [f64; 4],
    steps: u32,
    done: bool,
}

impl Acrobot {
    pub fn new() -> Self {
        Acrobot {
            state: [0.0; 4],
            steps: 0,
            done: true,
        }
    }

    /// Overwrite the internal state (θ₁, θ₂, θ̇₁, θ̇₂) and arm a fresh episode.
    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.steps = 0;
        self.done = false;
    }

    /// Uniform ±0.1 on all four internal components, drawn in state order.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = SplitMix64::new(seed);
        for v in &mut self.state {
            *v = rng.uniform(-0.1, 0.1);
        }
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn observation(&self) -> Vec<f64> {
        let [t1, t2, dt1, dt2] = self.state;
        vec![t1.cos(), t1.sin(), t2.cos(), t2.sin(), dt1, dt2]
    }

    fn terminal(&self) -> bool {
        -self.state[0].cos() - (self.state[1] + self.state[0]).cos() > 1.0
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if action > 2 {
            return Err(Error::InvalidArgument(format!(
                "acrobot action {action} not in {{0, 1, 2}}"
            )));
        }
        if self.done {
            return Err(Error::InvalidArgument(
                "step on finished episode; reset first".into(),
            ));
        }
        let torque = TORQUES[action];
        let s = self.state;
        let ns = rk4_step(s, torque);
        self.state = [
            wrap(ns[0], -PI, PI),
            wrap(ns[1], -PI, PI),
            ns[2].clamp(-MAX_VEL_1, MAX_VEL_1),
            ns[3].clamp(-MAX_VEL_2, MAX_VEL_2),
        ];
        self.steps += 1;
        let terminated = self.terminal();
        let truncated = !terminated && self.steps >= MAX_STEPS;
        self.done = terminated || truncated;
        Ok(StepResult {
            observation: self.observation(),
            reward: -1.0,
            terminated,
            truncated,
        })
    }
}

impl Default for Acrobot {
    fn default() -> Self {
        Acrobot::new()
    }
}

fn dynamics(s: [f64; 4], torque: f64) -> [f64; 4] {
    let (m1, m2) = (LINK_MASS_1, LINK_MASS_2);
    let l1 = LINK_LENGTH_1;
    let (lc1, lc2) = (LINK_COM_1, LINK_COM_2);
    let (i1, i2) = (LINK_MOI, LINK_MOI);
    let g = GRAVITY;
    let [theta1, theta2, dtheta1, dtheta2] = s;

    let d1 = m1 * lc1 * lc1
        + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos())
        + i1
        + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
    let phi2 = m2 * lc2 * g * (theta1 + theta2 - PI / 2.0).cos();
    let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * theta2.sin()
        - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
        + (m1 * lc1 + m2 * l1) * g * (theta1 - PI / 2.0).cos()
        + phi2;
    let ddtheta2 = (torque + d2 / d1 * phi1
        - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin()
        - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2]
}

fn rk4_step(s: [f64; 4], torque: f64) -> [f64; 4] {
    let add = |a: [f64; 4], k: [f64; 4], h: f64| {
        [a[0] + h * k[0], a[1] + h * k[1], a[2] + h * k[2], a[3] + h * k[3]]
    };
    let k1 = dynamics(s, torque);
    let k2 = dynamics(add(s, k1, DT / 2.0), torque);
    let k3 = dynamics(add(s, k2, DT / 2.0), torque);
    let k4 = dynamics(add(s, k3, DT), torque);
    let mut out = s;
    for i in 0..4 {
        out[i] += DT / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn wrap(mut x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    while x > hi {
        x -= span;
    }
    while x < lo {
        x += span;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hanging_rest_is_a_fixed_point() {
        // cos(−π/2) is ~6e-17 rather than 0 in f64, so the equilibrium holds
        // to rounding noise, not bit-exactly.
        let mut env = Acrobot::new();
        env.reset(0);
        env.state = [0.0; 4];
        let rest = [1.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        for _ in 0..10 {
            let out = env.step(1).unwrap();
            for (got, want) in out.observation.iter().zip(rest) {
                assert!((got - want).abs() < 1e-12, "{:?}", out.observation);
            }
            assert!(!out.terminated);
            assert_eq!(out.reward, -1.0);
        }
    }

    #[test]
    fn reset_ranges_and_observation_shape() {
        let mut env = Acrobot::new();
        let obs = env.reset(42);
        assert_eq!(obs.len(), 6);
        // cos of a small angle stays near 1, sin near the angle itself.
        assert!(obs[0] > 0.99 && obs[2] > 0.99);
        assert!(obs[1].abs() <= 0.1 + 1e-12 && obs[3].abs() <= 0.1 + 1e-12);
        assert!(obs[4].abs() <= 0.1 && obs[5].abs() <= 0.1);
        assert_eq!(Acrobot::new().reset(42), obs);
    }

    #[test]
    fn velocities_stay_clipped_and_angles_wrapped() {
        let mut env = Acrobot::new();
        env.reset(3);
        for i in 0..MAX_STEPS {
            // Bang-bang torque following the second link's velocity pumps energy.
            let action = if env.state[3] >= 0.0 { 2 } else { 0 };
            let out = env.step(action).unwrap();
            assert!(env.state[0].abs() <= PI && env.state[1].abs() <= PI);
            assert!(env.state[2].abs() <= MAX_VEL_1 + 1e-12);
            assert!(env.state[3].abs() <= MAX_VEL_2 + 1e-12);
            if out.terminated {
                let h = -env.state[0].cos() - (env.state[0] + env.state[1]).cos();
                assert!(h > 1.0);
                assert!(i + 1 < MAX_STEPS);
                return;
            }
        }
        panic!("energy pumping should raise the tip within 500 steps");
    }

    #[test]
    fn single_step_matches_direct_rk4_evaluation() {
        let mut env = Acrobot::new();
        env.reset(0);
        let start = [0.05, -0.03, 0.02, 0.08];
        env.state = start;
        let out = env.step(0).unwrap();
        let expect = rk4_step(start, -1.0);
        assert!((out.observation[0] - expect[0].cos()).abs() < 1e-15);
        assert!((out.observation[1] - expect[0].sin()).abs() < 1e-15);
        assert!((out.observation[4] - expect[2]).abs() < 1e-15);
        assert!((out.observation[5] - expect[3]).abs() < 1e-15);
    }

    #[test]
    fn gravity_pulls_displaced_first_link_back() {
        // Lift link 1 slightly: restoring acceleration must oppose the offset.
        let deriv = dynamics([0.3, 0.0, 0.0, 0.0], 0.0);
        assert!(deriv[2] < 0.0);
        let deriv = dynamics([-0.3, 0.0, 0.0, 0.0], 0.0);
        assert!(deriv[2] > 0.0);
    }

    #[test]
    fn invalid_action_rejected() {
        let mut env = Acrobot::new();
        env.reset(1);
        assert!(env.step(5).is_err());
    }
}
