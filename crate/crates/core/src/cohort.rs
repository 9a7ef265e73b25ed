//! Cohort evaluation protocol: realize a group of agents from a trained
//! genotype (synaptogenesis sampling) or from lineal initialization (bio
//! baseline), score each agent as its mean reward over a fixed number of
//! episodes, and compare cohorts pairwise with Mann-Whitney tests under
//! Bonferroni correction.

use serde::{Deserialize, Serialize};

use crate::envs::{Env, mean_episode_reward};
use crate::error::{Error, Result};
use crate::lineage::bio_genotype;
use crate::model::Genotype;
use crate::policy::PolicyNetwork;
use crate::rng::derive_seed;
use crate::sampler::{choose_alpha, sample_agent};
use crate::stats::{SummaryRow, bonferroni, mann_whitney_u, summarize};

pub const DEFAULT_COHORT_SIZE: usize = 100;
pub const DEFAULT_EPISODES: u32 = 10;

/// Which model family produced a cohort.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelTag {
    Synaptogen,
    Snes,
    BioPlausible,
}

impl ModelTag {
    pub fn label(&self) -> &'static str {
        match self {
            ModelTag::Synaptogen => "synaptogen",
            ModelTag::Snes => "snes",
            ModelTag::BioPlausible => "bio-plausible",
        }
    }
}

/// How to realize each agent of a cohort.
#[derive(Clone, Debug)]
pub enum CohortSource {
    /// Synaptogenesis-sample every agent from one trained genotype at a fixed
    /// connection density factor.
    Sampled { tag: ModelTag, genotype: Genotype<f64>, alpha: f64 },
    /// Lineal-initialize each agent's expression from scratch, keeping the
    /// donor's rules and conductances; alpha is chosen per agent to hit the
    /// target mean degree under that agent's own expression.
    Bio { donor: Genotype<f64>, target_degree: f64 },
}

impl CohortSource {
    pub fn tag(&self) -> ModelTag {
        match self {
            CohortSource::Sampled { tag, .. } => *tag,
            CohortSource::Bio { .. } => ModelTag::BioPlausible,
        }
    }
}

/// One agent's evaluation outcome: a score, or the error that stopped it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub agent: usize,
    pub seed: u64,
    pub score: Option<f64>,
    pub error: Option<String>,
}

/// Per-agent scores for one (model, environment) cohort.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CohortScores {
    pub tag: ModelTag,
    pub env_id: String,
    pub episodes: u32,
    pub seed: u64,
    pub outcomes: Vec<AgentOutcome>,
}

impl CohortScores {
    /// Scores of the agents that evaluated successfully, in agent order.
    pub fn scores(&self) -> Vec<f64> {
        self.outcomes.iter().filter_map(|o| o.score).collect()
    }

    pub fn failed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.error.is_some()).count()
    }

    pub fn summary(&self) -> Result<SummaryRow> {
        summarize(&self.env_id, &self.scores())
    }
}

fn realize_agent(source: &CohortSource, agent_seed: u64) -> Result<PolicyNetwork> {
    match source {
        CohortSource::Sampled { genotype, alpha, .. } => {
            let sampled = sample_agent(genotype, *alpha, agent_seed)?;
            PolicyNetwork::from_sampled(&sampled)
        }
        CohortSource::Bio { donor, target_degree } => {
            let agent_genotype = bio_genotype(donor, agent_seed)?;
            let factors = agent_genotype.map_params()?;
            let alpha = choose_alpha(&factors, *target_degree)?;
            let sampled = sample_agent(&agent_genotype, alpha, derive_seed(agent_seed, 1))?;
            PolicyNetwork::from_sampled(&sampled)
        }
    }
}

/// Evaluate a cohort: each agent is realized from its derived seed and scored
/// as the mean reward over `episodes` episodes with distinct derived seeds.
/// A failing agent records its error and the cohort continues.
pub fn evaluate_cohort(
    source: &CohortSource,
    env_id: &str,
    n_agents: usize,
    episodes: u32,
    seed: u64,
) -> Result<CohortScores> {
    if n_agents == 0 {
        return Err(Error::InvalidArgument("cohort needs at least one agent".into()));
    }
    if episodes == 0 {
        return Err(Error::InvalidArgument("need at least one episode per agent".into()));
    }
    Env::make(env_id)?; // validate the id once up front
    let mut outcomes = Vec::with_capacity(n_agents);
    for agent in 0..n_agents {
        let agent_seed = derive_seed(seed, agent as u64);
        let episode_seed = derive_seed(agent_seed, 0);
        let outcome = realize_agent(source, agent_seed).and_then(|network| {
            let mut env = Env::make(env_id)?;
            mean_episode_reward(&network, &mut env, episode_seed, episodes as usize)
        });
        outcomes.push(match outcome {
            Ok(score) => AgentOutcome { agent, seed: agent_seed, score: Some(score), error: None },
            Err(e) => AgentOutcome { agent, seed: agent_seed, score: None, error: Some(e.to_string()) },
        });
    }
    Ok(CohortScores {
        tag: source.tag(),
        env_id: env_id.to_string(),
        episodes,
        seed,
        outcomes,
    })
}

/// One pairwise Mann-Whitney comparison between two cohorts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub left: ModelTag,
    pub right: ModelTag,
    pub u: f64,
    pub p: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

/// Summary rows plus the pairwise test matrix for a set of cohorts on one
/// environment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub env_id: String,
    pub rows: Vec<(ModelTag, SummaryRow)>,
    pub tests: Vec<PairwiseTest>,
    pub significance: f64,
}

/// Compare cohorts pairwise; the Bonferroni factor is the number of pairwise
/// comparisons (3 for the usual three-model protocol).
pub fn compare_cohorts(cohorts: &[CohortScores], significance: f64) -> Result<ComparisonReport> {
    if cohorts.len() < 2 {
        return Err(Error::InvalidArgument("need at least two cohorts to compare".into()));
    }
    let env_id = cohorts[0].env_id.clone();
    if cohorts.iter().any(|c| c.env_id != env_id) {
        return Err(Error::InvalidArgument(
            "cohorts must share one environment for comparison".into(),
        ));
    }
    let mut rows = Vec::with_capacity(cohorts.len());
    for cohort in cohorts {
        rows.push((cohort.tag, cohort.summary()?));
    }
    let k = cohorts.len() * (cohorts.len() - 1) / 2;
    let mut tests = Vec::with_capacity(k);
    for i in 0..cohorts.len() {
        for j in i + 1..cohorts.len() {
            let a = cohorts[i].scores();
            let b = cohorts[j].scores();
            let (u, p) = mann_whitney_u(&a, &b)?;
            let p_adjusted = bonferroni(p, k)?;
            tests.push(PairwiseTest {
                left: cohorts[i].tag,
                right: cohorts[j].tag,
                u,
                p,
                p_adjusted,
                significant: p_adjusted < significance,
            });
        }
    }
    Ok(ComparisonReport { env_id, rows, tests, significance })
}
