//! Mountain-car with the classic closed-form update: force 0.001 per action
//! unit, gravity term −0.0025·cos(3x), speed clipped to ±0.07, position to
//! [−1.2, 0.6]. Reward −1 every step; reaching x ≥ 0.5 terminates, otherwise
//! the episode truncates at 200 steps.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::StepResult;

const MIN_POSITION: f64 = -1.2;
const MAX_POSITION: f64 = 0.6;
const MAX_SPEED: f64 = 0.07;
const GOAL_POSITION: f64 = 0.5;
const FORCE: f64 = 0.001;
const GRAVITY: f64 = 0.0025;

pub const MAX_STEPS: u32 = 200;

#[derive(Clone, Debug)]
pub struct MountainCar {
    position: f64,
    velocity: f64,
    steps: u32,
    done: bool,
}

impl MountainCar {
    pub fn new() -> Self {
        MountainCar {
            position: 0.0,
            velocity: 0.0,
            steps: 0,
            done: true,
        }
    }

    /// Overwrite the physical state and arm a fresh episode.
    pub fn set_state(&mut self, position: f64, velocity: f64) {
        self.position = position;
        self.velocity = velocity;
        self.steps = 0;
        self.done = false;
    }

    /// Position uniform in [−0.6, −0.4), velocity exactly 0.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = SplitMix64::new(seed);
        self.position = rng.uniform(-0.6, -0.4);
        self.velocity = 0.0;
        self.steps = 0;
        self.done = false;
        vec![self.position, self.velocity]
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if action > 2 {
            return Err(Error::InvalidArgument(format!(
                "mountaincar action {action} not in {{0, 1, 2}}"
            )));
        }
        if self.done {
            return Err(Error::InvalidArgument(
                "step on finished episode; reset first".into(),
            ));
        }
        self.velocity += (action as f64 - 1.0) * FORCE + (3.0 * self.position).cos() * (-GRAVITY);
        self.velocity = self.velocity.clamp(-MAX_SPEED, MAX_SPEED);
        self.position += self.velocity;
        self.position = self.position.clamp(MIN_POSITION, MAX_POSITION);
        // Inelastic wall on the far left.
        if self.position == MIN_POSITION && self.velocity < 0.0 {
            self.velocity = 0.0;
        }
        self.steps += 1;
        let terminated = self.position >= GOAL_POSITION;
        let truncated = !terminated && self.steps >= MAX_STEPS;
        self.done = terminated || truncated;
        Ok(StepResult {
            observation: vec![self.position, self.velocity],
            reward: -1.0,
            terminated,
            truncated,
        })
    }
}

impl Default for MountainCar {
    fn default() -> Self {
        MountainCar::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coast_from_valley_hand_value() {
        let mut env = MountainCar::new();
        env.reset(0);
        env.position = -0.5;
        env.velocity = 0.0;
        let out = env.step(1).unwrap();
        let expect = -0.0025 * 1.5f64.cos();
        assert!((out.observation[1] - expect).abs() < 1e-15);
        assert!((out.observation[1] - (-0.000177)).abs() < 1e-6);
        assert!((out.observation[0] - (-0.5 + expect)).abs() < 1e-15);
        assert_eq!(out.reward, -1.0);
    }

    #[test]
    fn reset_ranges() {
        let mut env = MountainCar::new();
        for seed in 0..50 {
            let obs = env.reset(seed);
            assert!((-0.6..-0.4).contains(&obs[0]), "position {}", obs[0]);
            assert_eq!(obs[1], 0.0);
        }
        let a = env.reset(99);
        assert_eq!(MountainCar::new().reset(99), a);
    }

    #[test]
    fn idle_policy_truncates_at_minus_200() {
        let mut env = MountainCar::new();
        env.reset(5);
        let mut total = 0.0;
        for i in 0..MAX_STEPS {
            let out = env.step(1).unwrap();
            total += out.reward;
            assert!(!out.terminated, "idle car cannot reach the goal");
            assert_eq!(out.truncated, i + 1 == MAX_STEPS);
        }
        assert_eq!(total, -200.0);
    }

    #[test]
    fn speed_and_position_stay_clipped() {
        let mut env = MountainCar::new();
        env.reset(6);
        for i in 0..MAX_STEPS {
            // Oscillation heuristic: push in the direction of motion.
            let action = if env.velocity >= 0.0 { 2 } else { 0 };
            let out = env.step(action).unwrap();
            assert!(out.observation[1].abs() <= MAX_SPEED);
            assert!((MIN_POSITION..=MAX_POSITION).contains(&out.observation[0]));
            if out.terminated {
                assert!(out.observation[0] >= GOAL_POSITION);
                assert!(i + 1 < MAX_STEPS);
                return;
            }
        }
        panic!("direction-following policy should summit within 200 steps");
    }

    #[test]
    fn left_wall_zeroes_velocity() {
        let mut env = MountainCar::new();
        env.reset(0);
        env.position = -1.19;
        env.velocity = -0.07;
        let out = env.step(0).unwrap();
        assert_eq!(out.observation[0], MIN_POSITION);
        assert_eq!(out.observation[1], 0.0);
    }

    #[test]
    fn invalid_action_rejected() {
        let mut env = MountainCar::new();
        env.reset(1);
        assert!(env.step(3).is_err());
    }
}
