//! DQN training of a genotype: ε-greedy rollouts into a replay ring, Huber
//! TD loss on minibatches, Adam over the flattened raw parameters, hard
//! target-network copies, and periodic mean-agent validation with
//! best-checkpoint retention.
//!
//! All randomness forks from the config seed: stream 0 seeds environment
//! resets, 1 the exploration policy, 2 replay sampling, 3 the fixed
//! validation episode seeds. Fixed validation seeds make scores comparable
//! across checkpoints and runs exactly reproducible.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::envs::{Env, mean_episode_reward};
use crate::error::{Error, Result};
use crate::grad::{NetworkCache, WeightGrads, accumulate_weight_grads, factor_backward};
use crate::mat::Mat;
use crate::model::{Genotype, ModelDims};
use crate::policy::{PolicyNetwork, argmax};
use crate::rng::{chacha, derive_seed};

/// The learning-rate grid searched during training.
pub const LEARNING_RATE_GRID: [f64; 3] = [0.03, 0.003, 0.0003];

#[derive(Clone, Debug)]
pub struct TrainConfig {
    /// Environment interactions to run.
    pub total_steps: u64,
    /// Validate every this many environment steps.
    pub validation_interval: u64,
    pub validation_episodes: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Hard-copy the target network every this many gradient steps.
    pub target_update_interval: u64,
    /// One gradient step per this many environment steps.
    pub train_frequency: u64,
    /// Environment steps before the first gradient step.
    pub learning_starts: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of total_steps over which ε anneals linearly.
    pub epsilon_fraction: f64,
    /// Master seed for every stream in the run.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_steps: 500_000,
            validation_interval: 10_000,
            validation_episodes: 10,
            learning_rate: 0.003,
            gamma: 0.99,
            buffer_capacity: 100_000,
            batch_size: 64,
            target_update_interval: 600,
            train_frequency: 4,
            learning_starts: 1000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.validation_interval == 0
            || self.validation_episodes == 0
            || self.buffer_capacity == 0
            || self.batch_size == 0
            || self.target_update_interval == 0
            || self.train_frequency == 0
        {
            return Err(Error::InvalidArgument(
                "counts in the training config must be positive".into(),
            ));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be finite and nonnegative",
                self.learning_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidArgument(format!(
                "gamma {} outside [0, 1]",
                self.gamma
            )));
        }
        for (name, v) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} {v} outside [0, 1]")));
            }
        }
        if !(self.epsilon_fraction > 0.0 && self.epsilon_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon_fraction {} outside (0, 1]",
                self.epsilon_fraction
            )));
        }
        Ok(())
    }

    fn epsilon_at(&self, step: u64) -> f64 {
        let anneal = (self.total_steps as f64 * self.epsilon_fraction).max(1.0);
        let progress = (step as f64 / anneal).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * progress
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// True task termination; truncated episodes still bootstrap.
    pub terminated: bool,
}

/// Ring buffer of transitions; oldest entries are evicted first.
#[derive(Debug)]
pub struct ReplayBuffer {
    entries: VecDeque<Transition>,
    capacity: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            entries: VecDeque::with_capacity(capacity.min(1 << 20)),
            capacity,
            inserted: 0,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(t);
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.entries.iter()
    }

    /// Uniform sample of `batch` distinct stored transitions (Floyd's
    /// algorithm keeps it allocation-light for batch ≪ len).
    pub fn sample(&self, batch: usize, rng: &mut ChaCha8Rng) -> Result<Vec<&Transition>> {
        let len = self.entries.len();
        if batch == 0 || batch > len {
            return Err(Error::InvalidArgument(format!(
                "cannot sample {batch} transitions from {len} stored"
            )));
        }
        let mut picked: Vec<usize> = Vec::with_capacity(batch);
        for j in (len - batch)..len {
            let t = rng.random_range(0..=j);
            if picked.contains(&t) {
                picked.push(j);
            } else {
                picked.push(t);
            }
        }
        Ok(picked.into_iter().map(|i| &self.entries[i]).collect())
    }
}

/// Adam first/second-moment state over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// One bias-corrected Adam step in place.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam shapes disagree: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Diverged(
            "non-finite gradient entering the optimizer".into(),
        ));
    }
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for i in 0..params.len() {
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * grads[i];
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// A retained parameter snapshot with its validation score.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub genotype: Genotype<f64>,
    pub config: TrainConfig,
    pub validation_mean: f64,
    pub step: u64,
}

/// One training-curve row; `loss` is the mean minibatch loss since the
/// previous validation (NaN before any gradient step).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainPoint {
    pub step: u64,
    pub validation_mean: f64,
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub best: Checkpoint,
    pub curve: Vec<TrainPoint>,
    pub gradient_steps: u64,
}

fn validate_policy(
    genotype: &Genotype<f64>,
    env_id: &str,
    episodes: usize,
    val_seed: u64,
) -> Result<f64> {
    let network = PolicyNetwork::mean_agent(genotype)?;
    let mut env = Env::make(env_id)?;
    mean_episode_reward(&network, &mut env, val_seed, episodes)
}

/// Runs the DQN loop and returns the best-validation checkpoint plus curve.
pub fn train(genotype: Genotype<f64>, env_id: &str, config: &TrainConfig) -> Result<TrainResult> {
    config.validate()?;
    let probe = Env::make(env_id)?;
    if genotype.dims.input_dim() != probe.observation_dim()
        || genotype.dims.output_dim() != probe.action_count()
    {
        return Err(Error::Shape(format!(
            "genotype is {}->{} but {env_id} needs {}->{}",
            genotype.dims.input_dim(),
            genotype.dims.output_dim(),
            probe.observation_dim(),
            probe.action_count()
        )));
    }
    let mut env = probe;
    let actions = env.action_count();

    let reset_base = derive_seed(config.seed, 0);
    let mut explore_rng = chacha(derive_seed(config.seed, 1));
    let mut sample_rng = chacha(derive_seed(config.seed, 2));
    let val_seed = derive_seed(config.seed, 3);

    let mut online = genotype;
    let mut params = online.flatten();
    let mut adam = AdamState::new(params.len());
    let mut cache = NetworkCache::build(&online)?;
    let mut target = online.clone();
    let mut target_cache: Arc<NetworkCache<f64>> = NetworkCache::build(&target)?;

    let initial_score = validate_policy(&online, env_id, config.validation_episodes, val_seed)?;
    let mut best = Checkpoint {
        genotype: online.clone(),
        config: config.clone(),
        validation_mean: initial_score,
        step: 0,
    };
    let mut curve = vec![TrainPoint {
        step: 0,
        validation_mean: initial_score,
        loss: f64::NAN,
    }];
    if config.total_steps == 0 {
        return Ok(TrainResult {
            best,
            curve,
            gradient_steps: 0,
        });
    }

    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut reset_count = 0u64;
    let mut obs = env.reset(derive_seed(reset_base, reset_count));
    reset_count += 1;
    let mut gradient_steps = 0u64;
    let mut interval_loss_sum = 0.0;
    let mut interval_loss_count = 0u64;

    for step in 1..=config.total_steps {
        let action = if explore_rng.random::<f64>() < config.epsilon_at(step) {
            explore_rng.random_range(0..actions)
        } else {
            argmax(&cache.infer(&obs)?)
        };
        let out = env.step(action)?;
        buffer.push(Transition {
            obs: std::mem::take(&mut obs),
            action,
            reward: out.reward,
            next_obs: out.observation.clone(),
            terminated: out.terminated,
        });
        obs = if out.done() {
            let o = env.reset(derive_seed(reset_base, reset_count));
            reset_count += 1;
            o
        } else {
            out.observation
        };

        if step >= config.learning_starts
            && step % config.train_frequency == 0
            && buffer.len() >= config.batch_size
        {
            let batch = buffer.sample(config.batch_size, &mut sample_rng)?;
            let mut wg = WeightGrads::zeros(&cache);
            let mut loss_sum = 0.0;
            let inv_batch = 1.0 / config.batch_size as f64;
            for t in batch {
                let (q, trace) = cache.forward(&t.obs)?;
                let bootstrap = if t.terminated {
                    0.0
                } else {
                    let q_next = target_cache.infer(&t.next_obs)?;
                    q_next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                };
                let td = q[t.action] - (t.reward + config.gamma * bootstrap);
                // Huber with δ = 1 on the chosen action only.
                loss_sum += if td.abs() <= 1.0 {
                    0.5 * td * td
                } else {
                    td.abs() - 0.5
                };
                let mut loss_grad = vec![0.0; actions];
                loss_grad[t.action] = td.clamp(-1.0, 1.0) * inv_batch;
                accumulate_weight_grads(&trace, &loss_grad, &mut wg)?;
            }
            let loss = loss_sum * inv_batch;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite minibatch loss {loss} at env step {step}"
                )));
            }
            interval_loss_sum += loss;
            interval_loss_count += 1;

            let grads = factor_backward(&cache, &wg)?.flatten();
            adam_update(&mut params, &grads, &mut adam, config.learning_rate)?;
            online.set_from_flat(&params)?;
            cache = NetworkCache::build(&online)?;
            gradient_steps += 1;
            if gradient_steps % config.target_update_interval == 0 {
                target.set_from_flat(&params)?;
                target_cache = NetworkCache::build(&target)?;
            }
        }

        if step % config.validation_interval == 0 {
            let score = validate_policy(&online, env_id, config.validation_episodes, val_seed)?;
            let loss = if interval_loss_count > 0 {
                interval_loss_sum / interval_loss_count as f64
            } else {
                f64::NAN
            };
            interval_loss_sum = 0.0;
            interval_loss_count = 0;
            curve.push(TrainPoint {
                step,
                validation_mean: score,
                loss,
            });
            if score > best.validation_mean {
                best = Checkpoint {
                    genotype: online.clone(),
                    config: config.clone(),
                    validation_mean: score,
                    step,
                };
            }
        }
    }
    Ok(TrainResult {
        best,
        curve,
        gradient_steps,
    })
}

/// Outcome of one grid cell.
#[derive(Clone, Debug)]
pub struct GridCell {
    pub learning_rate: f64,
    pub seed: u64,
    pub best_score: Option<f64>,
    pub best_step: u64,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct GridSearchResult {
    pub best: Checkpoint,
    pub best_curve: Vec<TrainPoint>,
    pub cells: Vec<GridCell>,
}

/// Trains one cell per (learning rate, seed) pair; cell failures are logged
/// and skipped. Fails only when the grid is empty or no cell succeeds.
pub fn grid_search(
    env_id: &str,
    dims: ModelDims,
    mask: Option<Mat<u8>>,
    temperature: f64,
    base: &TrainConfig,
    learning_rates: &[f64],
    seeds: &[u64],
) -> Result<GridSearchResult> {
    if learning_rates.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("empty hyperparameter grid".into()));
    }
    let mut cells = Vec::new();
    let mut best: Option<(Checkpoint, Vec<TrainPoint>)> = None;
    for &lr in learning_rates {
        for &seed in seeds {
            let mut config = base.clone();
            config.learning_rate = lr;
            config.seed = seed;
            let cell = Genotype::random(dims.clone(), mask.clone(), temperature, seed)
                .and_then(|g| train(g, env_id, &config));
            match cell {
                Ok(result) => {
                    cells.push(GridCell {
                        learning_rate: lr,
                        seed,
                        best_score: Some(result.best.validation_mean),
                        best_step: result.best.step,
                        error: None,
                    });
                    let better = best
                        .as_ref()
                        .is_none_or(|(b, _)| result.best.validation_mean > b.validation_mean);
                    if better {
                        best = Some((result.best, result.curve));
                    }
                }
                Err(e) => cells.push(GridCell {
                    learning_rate: lr,
                    seed,
                    best_score: None,
                    best_step: 0,
                    error: Some(e.to_string()),
                }),
            }
        }
    }
    match best {
        Some((best, best_curve)) => Ok(GridSearchResult {
            best,
            best_curve,
            cells,
        }),
        None => Err(Error::Stage {
            stage: "grid-search".into(),
            source: Box::new(Error::InvalidArgument(
                "every grid cell failed; see the cell log".into(),
            )),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(seed: u64) -> TrainConfig {
        TrainConfig {
            total_steps: 600,
            validation_interval: 200,
            validation_episodes: 2,
            learning_rate: 0.003,
            buffer_capacity: 500,
            batch_size: 8,
            target_update_interval: 20,
            train_frequency: 4,
            learning_starts: 50,
            seed,
            ..TrainConfig::default()
        }
    }

    fn cartpole_genotype(seed: u64) -> Genotype<f64> {
        let dims = ModelDims::new(vec![4, 16, 2], 4, 2).unwrap();
        Genotype::random(dims, None, 1.0, seed).unwrap()
    }

    #[test]
    fn replay_buffer_evicts_oldest_first() {
        let mut buf = ReplayBuffer::new(4);
        for i in 0..6 {
            buf.push(Transition {
                obs: vec![i as f64],
                action: 0,
                reward: 0.0,
                next_obs: vec![],
                terminated: false,
            });
        }
        assert_eq!(buf.len(), 4);
        assert_eq!(buf.inserted(), 6);
        let kept: Vec<f64> = buf.iter().map(|t| t.obs[0]).collect();
        assert_eq!(kept, vec![2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn replay_sampling_is_distinct_and_stored_only() {
        let mut buf = ReplayBuffer::new(32);
        for i in 0..20 {
            buf.push(Transition {
                obs: vec![i as f64],
                action: i,
                reward: 0.0,
                next_obs: vec![],
                terminated: false,
            });
        }
        let mut rng = chacha(8);
        for _ in 0..200 {
            let batch = buf.sample(10, &mut rng).unwrap();
            let mut seen: Vec<usize> = batch.iter().map(|t| t.action).collect();
            assert!(seen.iter().all(|&a| a < 20));
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), 10, "duplicate transition in batch");
        }
        assert!(buf.sample(21, &mut rng).is_err());
        assert!(buf.sample(0, &mut rng).is_err());
    }

    #[test]
    fn replay_sampling_is_roughly_uniform() {
        let mut buf = ReplayBuffer::new(16);
        for i in 0..16 {
            buf.push(Transition {
                obs: vec![],
                action: i,
                reward: 0.0,
                next_obs: vec![],
                terminated: false,
            });
        }
        let mut rng = chacha(9);
        let mut counts = [0u32; 16];
        let draws = 4000;
        for _ in 0..draws {
            for t in buf.sample(4, &mut rng).unwrap() {
                counts[t.action] += 1;
            }
        }
        // Each index has inclusion probability 1/4: expect 1000 ± noise.
        for (i, &c) in counts.iter().enumerate() {
            assert!((800..1200).contains(&c), "index {i} drawn {c} times");
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut params = vec![1.0, -2.0, 3.0];
        let mut state = AdamState::new(3);
        adam_update(&mut params, &[0.0; 3], &mut state, 0.1).unwrap();
        assert_eq!(params, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn adam_first_step_moves_by_lr_sign() {
        let mut params = vec![0.0, 0.0];
        let mut state = AdamState::new(2);
        let lr = 0.05;
        adam_update(&mut params, &[0.3, -4.0], &mut state, lr).unwrap();
        assert!((params[0] - (-lr)).abs() < 1e-6);
        assert!((params[1] - lr).abs() < 1e-6);
    }

    #[test]
    fn adam_constant_gradient_descends_monotonically() {
        let mut param = vec![5.0];
        let mut state = AdamState::new(1);
        let mut last = param[0];
        for _ in 0..1000 {
            adam_update(&mut param, &[2.0], &mut state, 0.01).unwrap();
            assert!(param[0] < last);
            last = param[0];
        }
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut params = vec![0.0];
        let mut state = AdamState::new(1);
        assert!(adam_update(&mut params, &[f64::NAN], &mut state, 0.1).is_err());
    }

    #[test]
    fn zero_steps_returns_initial_genotype_with_score() {
        let g = cartpole_genotype(60);
        let flat = g.flatten();
        let mut config = tiny_config(60);
        config.total_steps = 0;
        let result = train(g, "cartpole", &config).unwrap();
        assert_eq!(result.best.step, 0);
        assert_eq!(result.best.genotype.flatten(), flat);
        assert_eq!(result.curve.len(), 1);
        assert!(result.curve[0].loss.is_nan());
        assert_eq!(result.gradient_steps, 0);
    }

    #[test]
    fn training_is_deterministic() {
        let config = tiny_config(61);
        let a = train(cartpole_genotype(61), "cartpole", &config).unwrap();
        let b = train(cartpole_genotype(61), "cartpole", &config).unwrap();
        assert_eq!(a.curve.len(), b.curve.len());
        for (x, y) in a.curve.iter().zip(&b.curve) {
            assert_eq!(x.step, y.step);
            assert_eq!(x.validation_mean, y.validation_mean);
            assert!(x.loss == y.loss || (x.loss.is_nan() && y.loss.is_nan()));
        }
        assert_eq!(a.best.genotype.flatten(), b.best.genotype.flatten());
    }

    #[test]
    fn zero_learning_rate_freezes_validation_scores() {
        let mut config = tiny_config(62);
        config.learning_rate = 0.0;
        let result = train(cartpole_genotype(62), "cartpole", &config).unwrap();
        assert!(result.gradient_steps > 0);
        let first = result.curve[0].validation_mean;
        for p in &result.curve {
            assert_eq!(p.validation_mean, first);
        }
        assert_eq!(result.best.step, 0);
    }

    #[test]
    fn target_interval_changes_the_trajectory() {
        let mut fast = tiny_config(63);
        fast.target_update_interval = 1;
        let mut slow = tiny_config(63);
        slow.target_update_interval = 1_000_000;
        let a = train(cartpole_genotype(63), "cartpole", &fast).unwrap();
        let b = train(cartpole_genotype(63), "cartpole", &slow).unwrap();
        let la: Vec<f64> = a.curve.iter().skip(1).map(|p| p.loss).collect();
        let lb: Vec<f64> = b.curve.iter().skip(1).map(|p| p.loss).collect();
        assert_ne!(la, lb, "target network must shape the TD targets");
    }

    #[test]
    fn best_is_max_over_curve() {
        let result = train(cartpole_genotype(64), "cartpole", &tiny_config(64)).unwrap();
        let max = result
            .curve
            .iter()
            .map(|p| p.validation_mean)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(result.best.validation_mean, max);
        assert_eq!(result.curve.len(), 4);
    }

    #[test]
    fn polarity_and_mask_never_trained() {
        let dims = ModelDims::new(vec![4, 8, 2], 3, 2).unwrap();
        let mask = Mat::from_fn(3, 3, |r, c| u8::from(r == c));
        let g = Genotype::random(dims, Some(mask.clone()), 1.0, 65).unwrap();
        let polarity = g.polarity.clone();
        let result = train(g, "cartpole", &tiny_config(65)).unwrap();
        assert_eq!(result.best.genotype.polarity, polarity);
        assert_eq!(result.best.genotype.coexpression_mask, Some(mask));
    }

    #[test]
    fn huge_learning_rate_aborts_with_diagnostic() {
        // Adam bounds each step by ~lr, so the rate must be large enough that
        // the next forward pass overflows and the loss check trips.
        let mut config = tiny_config(66);
        config.learning_rate = 1e100;
        config.total_steps = 2000;
        assert!(train(cartpole_genotype(66), "cartpole", &config).is_err());
    }

    #[test]
    fn mismatched_env_rejected_up_front() {
        let g = cartpole_genotype(67);
        assert!(train(g, "acrobot", &tiny_config(67)).is_err());
    }

    #[test]
    fn one_cell_grid_equals_train() {
        let dims = ModelDims::new(vec![4, 16, 2], 4, 2).unwrap();
        let base = tiny_config(68);
        let direct = train(
            Genotype::random(dims.clone(), None, 1.0, 68).unwrap(),
            "cartpole",
            &base,
        )
        .unwrap();
        let grid = grid_search(
            "cartpole",
            dims,
            None,
            1.0,
            &base,
            &[base.learning_rate],
            &[68],
        )
        .unwrap();
        assert_eq!(grid.cells.len(), 1);
        assert_eq!(grid.best.validation_mean, direct.best.validation_mean);
        assert_eq!(grid.best.step, direct.best.step);
    }

    #[test]
    fn grid_logs_failures_and_keeps_going() {
        let dims = ModelDims::new(vec![4, 8, 2], 3, 2).unwrap();
        let base = tiny_config(69);
        let grid = grid_search(
            "cartpole",
            dims.clone(),
            None,
            1.0,
            &base,
            &[f64::NAN, 0.003],
            &[69, 70],
        )
        .unwrap();
        assert_eq!(grid.cells.len(), 4);
        let failed = grid.cells.iter().filter(|c| c.error.is_some()).count();
        assert_eq!(failed, 2);
        assert!(grid.best.validation_mean.is_finite());
        for cell in &grid.cells {
            assert_eq!(cell.best_score.is_none(), cell.error.is_some());
        }
        assert!(grid_search("cartpole", dims, None, 1.0, &base, &[], &[1]).is_err());
    }
}
