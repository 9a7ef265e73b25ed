//! Separable natural evolution strategies over the flattened raw genotype:
//! mirrored Gaussian offspring, fitness from sampled agents, and closed-form
//! μ/σ updates under an environment-step budget.
//!
//! The σ gradient uses the elementwise form `s⊙s − 1`; a scalar reading of
//! that line would make the exponential σ update dimensionally inconsistent.
//! Raw fitness is centered per generation by default (which cancels exactly
//! in ∇μ under mirroring and only rescales ∇σ); a rank-utility mode is
//! available for reward scales that destabilize σ.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::envs::{Env, run_episode_counted};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::model::{Genotype, ModelDims};
use crate::policy::PolicyNetwork;
use crate::rng::{chacha, derive_seed};
use crate::sampler::{choose_alpha, sample_from_factors};

/// Episodes averaged per sampled agent inside one fitness evaluation.
pub const EPISODES_PER_AGENT: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitnessShaping {
    /// Raw fitness minus the generation mean.
    Centered,
    /// Log-rank utilities (ties share the mean utility of their block).
    RankUtilities,
}

#[derive(Clone, Debug)]
pub struct SnesConfig {
    /// Population size; must be even for mirrored sampling.
    pub lambda: usize,
    pub eta_mu: f64,
    pub eta_sigma: f64,
    pub shaping: FitnessShaping,
}

impl SnesConfig {
    /// Canonical defaults for `d` parameters: λ = 4 + ⌊3 ln d⌋ (rounded up to
    /// even), η_μ = 1, η_σ = (3 + ln d)/(5√d).
    pub fn for_dimension(d: usize) -> Self {
        let ln_d = (d.max(1) as f64).ln();
        let mut lambda = 4 + (3.0 * ln_d).floor() as usize;
        if lambda % 2 == 1 {
            lambda += 1;
        }
        SnesConfig {
            lambda,
            eta_mu: 1.0,
            eta_sigma: (3.0 + ln_d) / (5.0 * (d.max(1) as f64).sqrt()),
            shaping: FitnessShaping::Centered,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda == 0 || self.lambda % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "lambda {} must be positive and even for mirrored sampling",
                self.lambda
            )));
        }
        if !(self.eta_mu.is_finite() && self.eta_sigma.is_finite())
            || self.eta_mu <= 0.0
            || self.eta_sigma <= 0.0
        {
            return Err(Error::InvalidArgument(
                "SNES learning rates must be positive finite reals".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SnesState {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub generation: u64,
    /// Environment steps consumed so far (budget accounting).
    pub env_steps: u64,
}

impl SnesState {
    pub fn new(mu: Vec<f64>, sigma_init: f64) -> Result<Self> {
        if !(sigma_init > 0.0) || !sigma_init.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sigma_init {sigma_init} must be a positive finite real"
            )));
        }
        let d = mu.len();
        Ok(SnesState {
            mu,
            sigma: vec![sigma_init; d],
            generation: 0,
            env_steps: 0,
        })
    }
}

/// One generation's summary. `env_steps` is cumulative at generation end.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenerationLog {
    pub generation: u64,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub env_steps: u64,
}

fn shaped_weights(fitness: &[f64], shaping: FitnessShaping) -> Vec<f64> {
    let lambda = fitness.len();
    match shaping {
        FitnessShaping::Centered => {
            let mean = fitness.iter().sum::<f64>() / lambda as f64;
            fitness.iter().map(|f| f - mean).collect()
        }
        FitnessShaping::RankUtilities => {
            let mut order: Vec<usize> = (0..lambda).collect();
            order.sort_by(|&a, &b| fitness[b].partial_cmp(&fitness[a]).unwrap());
            let raw: Vec<f64> = (1..=lambda)
                .map(|rank| ((lambda as f64 / 2.0 + 1.0).ln() - (rank as f64).ln()).max(0.0))
                .collect();
            let total: f64 = raw.iter().sum();
            let mut weights = vec![0.0; lambda];
            // Tied fitness values share the mean utility of their rank block.
            let mut i = 0;
            while i < lambda {
                let mut j = i;
                while j + 1 < lambda && fitness[order[j + 1]] == fitness[order[i]] {
                    j += 1;
                }
                let block: f64 =
                    raw[i..=j].iter().map(|u| u / total).sum::<f64>() / (j - i + 1) as f64;
                for &k in &order[i..=j] {
                    weights[k] = block - 1.0 / lambda as f64;
                }
                i = j + 1;
            }
            weights
        }
    }
}

/// Runs one generation: mirrored draws, fitness evaluation, μ/σ update.
/// The fitness closure returns (fitness, env steps consumed).
pub fn snes_step<R, F>(
    state: &mut SnesState,
    config: &SnesConfig,
    fitness_fn: &mut F,
    rng: &mut R,
) -> Result<GenerationLog>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> Result<(f64, u64)>,
{
    config.validate()?;
    let d = state.mu.len();
    let lambda = config.lambda;
    let half = lambda / 2;

    let mut draws: Vec<Vec<f64>> = Vec::with_capacity(lambda);
    for _ in 0..half {
        let s: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        draws.push(s);
    }
    for k in 0..half {
        draws.push(draws[k].iter().map(|v| -v).collect());
    }

    let mut fitness = Vec::with_capacity(lambda);
    let mut theta = vec![0.0; d];
    for s in &draws {
        for i in 0..d {
            theta[i] = state.mu[i] + state.sigma[i] * s[i];
        }
        let (f, steps) = fitness_fn(&theta)?;
        if !f.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite fitness {f} in generation {}",
                state.generation + 1
            )));
        }
        state.env_steps += steps;
        fitness.push(f);
    }

    let weights = shaped_weights(&fitness, config.shaping);
    for i in 0..d {
        let mut grad_mu = 0.0;
        let mut grad_sigma = 0.0;
        for (w, s) in weights.iter().zip(&draws) {
            grad_mu += w * s[i];
            grad_sigma += w * (s[i] * s[i] - 1.0);
        }
        state.mu[i] += config.eta_mu * state.sigma[i] * grad_mu;
        state.sigma[i] *= (config.eta_sigma / 2.0 * grad_sigma).exp();
        if !(state.sigma[i] > 0.0 && state.sigma[i].is_finite()) {
            return Err(Error::Diverged(format!(
                "sigma[{i}] left (0, inf) in generation {}; consider rank utilities",
                state.generation + 1
            )));
        }
    }
    state.generation += 1;
    Ok(GenerationLog {
        generation: state.generation,
        best_fitness: fitness.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_fitness: fitness.iter().sum::<f64>() / lambda as f64,
        env_steps: state.env_steps,
    })
}

/// Fitness of one parameter vector: mean over `m` sampled agents of each
/// agent's mean reward across [`EPISODES_PER_AGENT`] episodes. Agent `a`
/// samples under seed stream `2a` and runs episodes under stream `2a + 1` of
/// `eval_seed`. Returns (fitness, env steps consumed).
pub fn snes_fitness(
    prototype: &Genotype<f64>,
    theta: &[f64],
    env_id: &str,
    m: usize,
    alpha: f64,
    eval_seed: u64,
) -> Result<(f64, u64)> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let mut genotype = prototype.clone();
    genotype.set_from_flat(theta)?;
    let factors = genotype.map_params()?;
    let mut env = Env::make(env_id)?;
    let mut total = 0.0;
    let mut steps = 0u64;
    for a in 0..m {
        let agent = sample_from_factors(&factors, alpha, derive_seed(eval_seed, 2 * a as u64))?;
        let network = PolicyNetwork::from_sampled(&agent)?;
        let episode_base = derive_seed(eval_seed, 2 * a as u64 + 1);
        let mut agent_total = 0.0;
        for e in 0..EPISODES_PER_AGENT {
            let (reward, len) =
                run_episode_counted(&network, &mut env, derive_seed(episode_base, e as u64))?;
            agent_total += reward;
            steps += len as u64;
        }
        total += agent_total / EPISODES_PER_AGENT as f64;
    }
    Ok((total / m as f64, steps))
}

#[derive(Clone, Debug)]
pub struct SnesTrainConfig {
    /// Population size; None picks the dimension-based default.
    pub lambda: Option<usize>,
    /// Sampled agents per fitness evaluation.
    pub m: usize,
    /// Environment-step budget.
    pub budget: u64,
    /// Target mean degree handed to [`choose_alpha`] per evaluation.
    pub target_degree: f64,
    pub sigma_init: f64,
    pub shaping: FitnessShaping,
    pub seed: u64,
}

impl Default for SnesTrainConfig {
    fn default() -> Self {
        SnesTrainConfig {
            lambda: None,
            m: 10,
            budget: 500_000,
            target_degree: 1e4,
            sigma_init: 1.0,
            shaping: FitnessShaping::Centered,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SnesTrainResult {
    pub best_genotype: Genotype<f64>,
    pub best_fitness: f64,
    pub generations: Vec<GenerationLog>,
    pub env_steps: u64,
    pub lambda: usize,
}

/// Evolves a genotype on `env_id` until the step budget is exhausted,
/// retaining the best θ ever evaluated. The initial μ is evaluated first (and
/// charged to the budget), so a budget below one generation's cost returns
/// the initial genotype.
pub fn snes_train(
    env_id: &str,
    dims: ModelDims,
    mask: Option<Mat<u8>>,
    temperature: f64,
    config: &SnesTrainConfig,
) -> Result<SnesTrainResult> {
    if config.budget == 0 {
        return Err(Error::InvalidArgument("budget must be positive".into()));
    }
    let prototype = Genotype::random(dims, mask, temperature, derive_seed(config.seed, 0))?;
    let mu = prototype.flatten();
    let d = mu.len();
    let mut snes = SnesConfig::for_dimension(d);
    if let Some(lambda) = config.lambda {
        snes.lambda = lambda;
    }
    snes.shaping = config.shaping;
    snes.validate()?;

    let mut state = SnesState::new(mu, config.sigma_init)?;
    let mut rng = chacha(derive_seed(config.seed, 1));
    let eval_base = derive_seed(config.seed, 2);
    let mut eval_count = 0u64;

    let proto_ref = prototype.clone();
    let target_degree = config.target_degree;
    let m = config.m;
    let env_owned = env_id.to_string();
    let mut evaluate = move |theta: &[f64]| -> Result<(f64, u64)> {
        let mut genotype = proto_ref.clone();
        genotype.set_from_flat(theta)?;
        let alpha = choose_alpha(&genotype.map_params()?, target_degree)?;
        let seed = derive_seed(eval_base, eval_count);
        eval_count += 1;
        snes_fitness(&proto_ref, theta, &env_owned, m, alpha, seed)
    };

    let (f0, steps0) = evaluate(&state.mu)?;
    if !f0.is_finite() {
        return Err(Error::Diverged(format!("non-finite initial fitness {f0}")));
    }
    state.env_steps += steps0;
    let mut best: Option<(f64, Vec<f64>)> = Some((f0, state.mu.clone()));

    let mut generations = Vec::new();
    while state.env_steps < config.budget {
        let mut tracked = |theta: &[f64]| -> Result<(f64, u64)> {
            let (f, steps) = evaluate(theta)?;
            if f.is_finite() && best.as_ref().is_none_or(|(bf, _)| f > *bf) {
                best = Some((f, theta.to_vec()));
            }
            Ok((f, steps))
        };
        generations.push(snes_step(&mut state, &snes, &mut tracked, &mut rng)?);
    }

    let (best_fitness, best_theta) = best.expect("initial evaluation always sets a best");
    let mut best_genotype = prototype;
    best_genotype.set_from_flat(&best_theta)?;
    Ok(SnesTrainResult {
        best_genotype,
        best_fitness,
        generations,
        env_steps: state.env_steps,
        lambda: snes.lambda,
    })
}
