//! Self-contained classic-control environments and the episode runner.
//!
//! Every environment is bit-deterministic: the reset seed feeds a dedicated
//! SplitMix64 stream and the dynamics use only scalar f64 arithmetic, so a
//! (seed, action sequence) pair reproduces the exact trajectory.

pub mod acrobot;
pub mod cartpole;
pub mod mountain_car;

pub use acrobot::Acrobot;
pub use cartpole::CartPole;
pub use mountain_car::MountainCar;

use crate::error::{Error, Result};
use crate::policy::PolicyNetwork;

/// One transition. `terminated` means the task ended on its own terms;
/// `truncated` means the step limit cut it off. At most one is set.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Environment ids accepted across the crate and the CLI.
pub const ENV_IDS: [&str; 3] = ["cartpole", "mountaincar", "acrobot"];

#[derive(Clone, Debug)]
pub enum Env {
    CartPole(CartPole),
    MountainCar(MountainCar),
    Acrobot(Acrobot),
}

impl Env {
    pub fn make(id: &str) -> Result<Env> {
        match id {
            "cartpole" => Ok(Env::CartPole(CartPole::new())),
            "mountaincar" => Ok(Env::MountainCar(MountainCar::new())),
            "acrobot" => Ok(Env::Acrobot(Acrobot::new())),
            other => Err(Error::InvalidArgument(format!(
                "unknown environment '{other}'; expected one of {ENV_IDS:?}"
            ))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Env::CartPole(_) => "cartpole",
            Env::MountainCar(_) => "mountaincar",
            Env::Acrobot(_) => "acrobot",
        }
    }

    pub fn observation_dim(&self) -> usize {
        match self {
            Env::CartPole(_) => 4,
            Env::MountainCar(_) => 2,
            Env::Acrobot(_) => 6,
        }
    }

    pub fn action_count(&self) -> usize {
        match self {
            Env::CartPole(_) => 2,
            Env::MountainCar(_) | Env::Acrobot(_) => 3,
        }
    }

    pub fn max_steps(&self) -> u32 {
        match self {
            Env::CartPole(_) => cartpole::MAX_STEPS,
            Env::MountainCar(_) => mountain_car::MAX_STEPS,
            Env::Acrobot(_) => acrobot::MAX_STEPS,
        }
    }

    /// Inject an internal physical state (lengths 4 / 2 / 4) and arm a fresh
    /// episode; used to pin dynamics against hand-derived values.
    pub fn set_state(&mut self, state: &[f64]) -> Result<()> {
        let want = match self {
            Env::CartPole(_) | Env::Acrobot(_) => 4,
            Env::MountainCar(_) => 2,
        };
        if state.len() != want {
            return Err(Error::Shape(format!(
                "{} internal state has {} components, got {}",
                self.id(),
                want,
                state.len()
            )));
        }
        match self {
            Env::CartPole(env) => env.set_state([state[0], state[1], state[2], state[3]]),
            Env::MountainCar(env) => env.set_state(state[0], state[1]),
            Env::Acrobot(env) => env.set_state([state[0], state[1], state[2], state[3]]),
        }
        Ok(())
    }

    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        match self {
            Env::CartPole(e) => e.reset(seed),
            Env::MountainCar(e) => e.reset(seed),
            Env::Acrobot(e) => e.reset(seed),
        }
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        match self {
            Env::CartPole(e) => e.step(action),
            Env::MountainCar(e) => e.step(action),
            Env::Acrobot(e) => e.step(action),
        }
    }
}

/// The solved thresholds used throughout evaluation: CartPole mean ≥ 195,
/// MountainCar mean > −200, Acrobot mean > −500.
pub fn is_solved(env_id: &str, mean_reward: f64) -> Result<bool> {
    match env_id {
        "cartpole" => Ok(mean_reward >= 195.0),
        "mountaincar" => Ok(mean_reward > -200.0),
        "acrobot" => Ok(mean_reward > -500.0),
        other => Err(Error::InvalidArgument(format!(
            "unknown environment '{other}'; expected one of {ENV_IDS:?}"
        ))),
    }
}

/// Inclusive bounds on the total episode reward (step limit times per-step
/// reward), used for histogram axes and sanity checks.
pub fn reward_bounds(env_id: &str) -> Result<(f64, f64)> {
    match env_id {
        "cartpole" => Ok((0.0, 500.0)),
        "mountaincar" => Ok((-200.0, 0.0)),
        "acrobot" => Ok((-500.0, 0.0)),
        other => Err(Error::InvalidArgument(format!(
            "unknown environment '{other}'; expected one of {ENV_IDS:?}"
        ))),
    }
}

/// Greedy rollout from a seeded reset; returns the undiscounted reward sum.
pub fn run_episode(network: &PolicyNetwork, env: &mut Env, seed: u64) -> Result<f64> {
    run_episode_counted(network, env, seed).map(|(reward, _)| reward)
}

/// As [`run_episode`], also returning the episode length in steps (the unit
/// of interaction budgets).
pub fn run_episode_counted(
    network: &PolicyNetwork,
    env: &mut Env,
    seed: u64,
) -> Result<(f64, u32)> {
    if network.input_dim() != env.observation_dim() {
        return Err(Error::Shape(format!(
            "policy input {} != {} observation dim {}",
            network.input_dim(),
            env.id(),
            env.observation_dim()
        )));
    }
    if network.output_dim() != env.action_count() {
        return Err(Error::Shape(format!(
            "policy output {} != {} action count {}",
            network.output_dim(),
            env.id(),
            env.action_count()
        )));
    }
    let mut obs = env.reset(seed);
    let mut total = 0.0;
    let mut steps = 0u32;
    loop {
        let action = network.act(&obs)?;
        let step = env.step(action)?;
        total += step.reward;
        steps += 1;
        if step.done() {
            return Ok((total, steps));
        }
        obs = step.observation;
    }
}

/// Mean episode reward of `network` over `episodes` consecutive seeds derived
/// from `seed`.
pub fn mean_episode_reward(
    network: &PolicyNetwork,
    env: &mut Env,
    seed: u64,
    episodes: usize,
) -> Result<f64> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be positive".into()));
    }
    let mut total = 0.0;
    for e in 0..episodes {
        total += run_episode(network, env, crate::rng::derive_seed(seed, e as u64))?;
    }
    Ok(total / episodes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::Mat;
    use crate::policy::PolicySource;

    fn constant_policy(obs_dim: usize, actions: usize, pick: usize) -> PolicyNetwork {
        // One linear layer whose `pick` column dominates regardless of input
        // sign: weights 0 except a bias-like trick is unavailable, so use a
        // zero matrix; argmax of all-zero output is action 0. For other
        // actions, route through a ReLU pair that is positive for any input.
        if pick == 0 {
            return PolicyNetwork::new(
                vec![Mat::zeros(obs_dim, actions)],
                PolicySource::DenseBaseline,
            )
            .unwrap();
        }
        // Hidden pair (x, −x): one of the two ReLUs is positive unless x = 0.
        let mut w0 = Mat::zeros(obs_dim, 2);
        w0[(0, 0)] = 1.0;
        w0[(0, 1)] = -1.0;
        let mut w1 = Mat::zeros(2, actions);
        w1[(0, pick)] = 1.0;
        w1[(1, pick)] = 1.0;
        PolicyNetwork::new(vec![w0, w1], PolicySource::DenseBaseline).unwrap()
    }

    #[test]
    fn make_env_ids() {
        for id in ENV_IDS {
            assert_eq!(Env::make(id).unwrap().id(), id);
        }
        assert!(Env::make("lunarlander").is_err());
    }

    #[test]
    fn solved_thresholds() {
        assert!(is_solved("cartpole", 195.0).unwrap());
        assert!(!is_solved("cartpole", 194.999).unwrap());
        assert!(is_solved("mountaincar", -199.9).unwrap());
        assert!(!is_solved("mountaincar", -200.0).unwrap());
        assert!(is_solved("acrobot", -499.9).unwrap());
        assert!(!is_solved("acrobot", -500.0).unwrap());
        assert!(is_solved("pong", 0.0).is_err());
    }

    #[test]
    fn always_push_left_cartpole_fails_fast() {
        let net = constant_policy(4, 2, 0);
        for seed in 0..20 {
            let mut env = Env::make("cartpole").unwrap();
            let reward = run_episode(&net, &mut env, seed).unwrap();
            assert!((1.0..=11.0).contains(&reward), "seed {seed}: reward {reward}");
        }
    }

    #[test]
    fn idle_mountaincar_scores_exactly_minus_200() {
        let net = constant_policy(2, 3, 1);
        let mut env = Env::make("mountaincar").unwrap();
        for seed in 0..5 {
            assert_eq!(run_episode(&net, &mut env, seed).unwrap(), -200.0);
        }
    }

    #[test]
    fn reward_bounds_hold_for_random_policies() {
        let mut rng_seed = 0u64;
        for (id, lo, hi) in [
            ("cartpole", 1.0, 500.0),
            ("mountaincar", -200.0, -1.0),
            ("acrobot", -500.0, -1.0),
        ] {
            let mut env = Env::make(id).unwrap();
            let dims = crate::model::ModelDims::new(
                vec![env.observation_dim(), 8, env.action_count()],
                3,
                2,
            )
            .unwrap();
            for s in 0..3 {
                rng_seed += 1;
                let g = crate::model::Genotype::<f64>::random(dims.clone(), None, 1.0, rng_seed)
                    .unwrap();
                let net = PolicyNetwork::mean_agent(&g).unwrap();
                let reward = run_episode(&net, &mut env, s).unwrap();
                assert!(
                    (lo..=hi).contains(&reward),
                    "{id} reward {reward} outside [{lo}, {hi}]"
                );
            }
        }
    }

    #[test]
    fn trajectories_are_bit_identical_across_runs() {
        for id in ENV_IDS {
            let mut env_a = Env::make(id).unwrap();
            let mut env_b = Env::make(id).unwrap();
            let mut obs_a = env_a.reset(2024);
            let mut obs_b = env_b.reset(2024);
            assert_eq!(obs_a, obs_b);
            let actions = env_a.action_count();
            let mut x = crate::rng::SplitMix64::new(7);
            for _ in 0..200 {
                let action = (x.next_u64() % actions as u64) as usize;
                let sa = env_a.step(action).unwrap();
                let sb = env_b.step(action).unwrap();
                assert_eq!(sa, sb, "{id} diverged");
                if sa.done() {
                    obs_a = env_a.reset(2025);
                    obs_b = env_b.reset(2025);
                    assert_eq!(obs_a, obs_b);
                } else {
                    obs_a = sa.observation;
                    obs_b = sb.observation;
                }
            }
            let _ = (obs_a, obs_b);
        }
    }

    #[test]
    fn run_episode_rejects_mismatched_policy() {
        let net = constant_policy(4, 2, 0);
        let mut env = Env::make("mountaincar").unwrap();
        assert!(run_episode(&net, &mut env, 0).is_err());
    }

    #[test]
    fn mean_episode_reward_averages_derived_seeds() {
        let net = constant_policy(2, 3, 1);
        let mut env = Env::make("mountaincar").unwrap();
        let mean = mean_episode_reward(&net, &mut env, 11, 4).unwrap();
        assert_eq!(mean, -200.0);
        assert!(mean_episode_reward(&net, &mut env, 11, 0).is_err());
    }
}
