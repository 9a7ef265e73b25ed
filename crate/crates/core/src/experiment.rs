//! End-to-end experiment orchestration: train (or load) the gradient and
//! evolution models, realize and score the three cohorts (sampled, evolved,
//! lineal baseline), compare them, and persist every artifact plus a manifest
//! that records the seeds and versions needed to reproduce the run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_genotype, save_genotype};
use crate::cohort::{CohortScores, CohortSource, ComparisonReport, ModelTag, compare_cohorts, evaluate_cohort};
use crate::dqn::{LEARNING_RATE_GRID, TrainConfig, grid_search};
use crate::envs::{Env, reward_bounds};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::model::{Genotype, ModelDims};
use crate::report::{
    comparison_table_csv, histogram_svg, p_value_matrix_csv, read_mask_csv, snes_curve_csv,
    training_curve_csv, write_labeled_csv,
};
use crate::rng::derive_seed;
use crate::sampler::choose_alpha;
use crate::snes::{FitnessShaping, SnesTrainConfig, snes_train};
use crate::stats::SummaryRow;

fn default_neurotransmitters() -> usize {
    3
}
fn default_temperature() -> f64 {
    1.0
}
fn default_target_degree() -> f64 {
    1e4
}
fn default_cohort_size() -> usize {
    100
}
fn default_episodes() -> u32 {
    10
}
fn default_significance() -> f64 {
    0.05
}

/// DQN stage settings (defaults mirror the full-scale protocol; override for
/// desk-scale runs).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DqnSection {
    #[serde(default = "DqnSection::default_steps")]
    pub steps: u64,
    #[serde(default = "DqnSection::default_validation_interval")]
    pub validation_interval: u64,
    #[serde(default = "DqnSection::default_validation_episodes")]
    pub validation_episodes: usize,
    /// Learning rates searched; the best validation score wins.
    #[serde(default = "DqnSection::default_learning_rates")]
    pub learning_rates: Vec<f64>,
    /// Independent seeds per learning rate.
    #[serde(default = "DqnSection::default_grid_seeds")]
    pub grid_seeds: usize,
    /// Skip training and load this genotype checkpoint instead.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

impl DqnSection {
    fn default_steps() -> u64 {
        TrainConfig::default().total_steps
    }
    fn default_validation_interval() -> u64 {
        TrainConfig::default().validation_interval
    }
    fn default_validation_episodes() -> usize {
        TrainConfig::default().validation_episodes
    }
    fn default_learning_rates() -> Vec<f64> {
        LEARNING_RATE_GRID.to_vec()
    }
    fn default_grid_seeds() -> usize {
        1
    }

    /// Cell-independent base trainer settings for this section.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            total_steps: self.steps,
            validation_interval: self.validation_interval,
            validation_episodes: self.validation_episodes,
            seed,
            ..TrainConfig::default()
        }
    }

    /// One derived seed per grid repetition.
    pub fn grid_seeds(&self, seed: u64) -> Vec<u64> {
        (0..self.grid_seeds).map(|i| derive_seed(seed, i as u64)).collect()
    }
}

impl Default for DqnSection {
    fn default() -> Self {
        DqnSection {
            steps: Self::default_steps(),
            validation_interval: Self::default_validation_interval(),
            validation_episodes: Self::default_validation_episodes(),
            learning_rates: Self::default_learning_rates(),
            grid_seeds: Self::default_grid_seeds(),
            checkpoint: None,
        }
    }
}

/// SNES stage settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnesSection {
    /// Population size; omit for the dimension-based default.
    #[serde(default)]
    pub lambda: Option<usize>,
    #[serde(default = "SnesSection::default_m")]
    pub m: usize,
    #[serde(default = "SnesSection::default_budget")]
    pub budget: u64,
    #[serde(default = "SnesSection::default_sigma_init")]
    pub sigma_init: f64,
    /// "centered" (raw fitness minus mean) or "rank" (log-rank utilities).
    #[serde(default = "SnesSection::default_shaping")]
    pub shaping: String,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

impl SnesSection {
    fn default_m() -> usize {
        SnesTrainConfig::default().m
    }
    fn default_budget() -> u64 {
        SnesTrainConfig::default().budget
    }
    fn default_sigma_init() -> f64 {
        SnesTrainConfig::default().sigma_init
    }
    fn default_shaping() -> String {
        "centered".into()
    }

    pub fn parsed_shaping(&self) -> Result<FitnessShaping> {
        match self.shaping.as_str() {
            "centered" => Ok(FitnessShaping::Centered),
            "rank" | "rank-utilities" => Ok(FitnessShaping::RankUtilities),
            other => Err(Error::InvalidArgument(format!(
                "unknown fitness shaping '{other}' (expected 'centered' or 'rank')"
            ))),
        }
    }

    pub fn train_config(&self, target_degree: f64, seed: u64) -> Result<SnesTrainConfig> {
        Ok(SnesTrainConfig {
            lambda: self.lambda,
            m: self.m,
            budget: self.budget,
            target_degree,
            sigma_init: self.sigma_init,
            shaping: self.parsed_shaping()?,
            seed,
        })
    }
}

impl Default for SnesSection {
    fn default() -> Self {
        SnesSection {
            lambda: None,
            m: Self::default_m(),
            budget: Self::default_budget(),
            sigma_init: Self::default_sigma_init(),
            shaping: Self::default_shaping(),
            checkpoint: None,
        }
    }
}

/// One experiment: environment, model dimensions, seeds, trainer settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: String,
    pub genes: usize,
    #[serde(default = "default_neurotransmitters")]
    pub neurotransmitters: usize,
    pub hidden: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Labeled CSV with a genes x genes 0/1 co-expression mask; presence
    /// switches the rules map to the constrained form.
    #[serde(default)]
    pub mask_csv: Option<PathBuf>,
    #[serde(default = "default_target_degree")]
    pub target_degree: f64,
    #[serde(default = "default_cohort_size")]
    pub cohort_size: usize,
    #[serde(default = "default_episodes")]
    pub episodes: u32,
    #[serde(default = "default_significance")]
    pub significance: f64,
    pub seed: u64,
    #[serde(default)]
    pub dqn: DqnSection,
    #[serde(default)]
    pub snes: SnesSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(format!("config serialize: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        Env::make(&self.env)?;
        if self.genes == 0 || self.hidden == 0 {
            return Err(Error::InvalidArgument("genes and hidden width must be >= 1".into()));
        }
        if self.cohort_size == 0 || self.episodes == 0 {
            return Err(Error::InvalidArgument("cohort size and episodes must be >= 1".into()));
        }
        self.snes.parsed_shaping()?;
        Ok(())
    }

    /// Layer sizes [observation, hidden, action] for the configured env.
    pub fn model_dims(&self) -> Result<ModelDims> {
        let probe = Env::make(&self.env)?;
        ModelDims::new(
            vec![probe.observation_dim(), self.hidden, probe.action_count()],
            self.genes,
            self.neurotransmitters,
        )
    }

    /// Reads and shape-checks the co-expression mask when one is configured.
    pub fn load_mask(&self) -> Result<Option<Mat<u8>>> {
        match &self.mask_csv {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                let (_, _, m) = read_mask_csv(&text)?;
                if m.rows() != self.genes || m.cols() != self.genes {
                    return Err(Error::Shape(format!(
                        "mask is {}x{}, expected {2}x{2} for {2} genes",
                        m.rows(),
                        m.cols(),
                        self.genes
                    )));
                }
                Ok(Some(m))
            }
            None => Ok(None),
        }
    }
}

/// Seeds derived from the master seed, recorded in the manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DerivedSeeds {
    pub dqn: u64,
    pub snes: u64,
    pub cohort_synaptogen: u64,
    pub cohort_snes: u64,
    pub cohort_bio: u64,
}

impl DerivedSeeds {
    pub fn from_master(seed: u64) -> Self {
        DerivedSeeds {
            dqn: derive_seed(seed, 1),
            snes: derive_seed(seed, 2),
            cohort_synaptogen: derive_seed(seed, 3),
            cohort_snes: derive_seed(seed, 4),
            cohort_bio: derive_seed(seed, 5),
        }
    }
}

/// Everything needed to reproduce a finished run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub seeds: DerivedSeeds,
    pub artifacts: Vec<String>,
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub report: ComparisonReport,
    pub out_dir: PathBuf,
    pub artifacts: Vec<PathBuf>,
}

struct ArtifactWriter {
    out_dir: PathBuf,
    written: Vec<String>,
}

impl ArtifactWriter {
    fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, contents)?;
        self.written.push(name.to_string());
        Ok(path)
    }
}

fn in_stage<T>(stage: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(stage))
}

fn cohort_stage(
    stage: &str,
    writer: &mut ArtifactWriter,
    source: &CohortSource,
    config: &ExperimentConfig,
    seed: u64,
    file_tag: &str,
) -> Result<CohortScores> {
    let mut run = || -> Result<CohortScores> {
        let cohort = evaluate_cohort(source, &config.env, config.cohort_size, config.episodes, seed)?;
        let json = serde_json::to_string_pretty(&cohort)
            .map_err(|e| Error::Parse(format!("cohort serialize: {e}")))?;
        writer.write(&format!("cohort_{file_tag}.json"), &json)?;
        let (lo, hi) = reward_bounds(&config.env)?;
        let svg = histogram_svg(
            &format!("{} rewards on {}", source.tag().label(), config.env),
            &cohort.scores(),
            20,
            lo,
            hi,
        )?;
        writer.write(&format!("hist_{file_tag}.svg"), &svg)?;
        Ok(cohort)
    };
    in_stage(stage, run())
}

/// Run the full three-model protocol, writing artifacts into `out_dir`.
/// Any stage failure halts with that stage's name; artifacts written by
/// completed stages stay on disk.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut writer = ArtifactWriter { out_dir: out_dir.to_path_buf(), written: Vec::new() };
    writer.write("config.toml", &config.to_toml()?)?;

    let seeds = DerivedSeeds::from_master(config.seed);
    let dims = config.model_dims()?;
    let mask = config.load_mask()?;

    // stage: train-dqn (or load the precomputed checkpoint)
    let dqn_genotype: Genotype<f64> = in_stage("train-dqn", {
        match &config.dqn.checkpoint {
            Some(path) => load_genotype(path),
            None => {
                let base = config.dqn.train_config(seeds.dqn);
                grid_search(
                    &config.env,
                    dims.clone(),
                    mask.clone(),
                    config.temperature,
                    &base,
                    &config.dqn.learning_rates,
                    &config.dqn.grid_seeds(seeds.dqn),
                )
                .and_then(|result| {
                    writer.write("dqn_curve.csv", &training_curve_csv(&result.best_curve))?;
                    Ok(result.best.genotype)
                })
            }
        }
    })?;
    in_stage("train-dqn", {
        save_genotype(&writer.out_dir.join("dqn_genotype.json"), &dqn_genotype)
    })?;
    writer.written.push("dqn_genotype.json".into());

    // stage: sample + evaluate the gradient-trained cohort
    let alpha_syn = in_stage(
        "sample-synaptogen",
        dqn_genotype.map_params().and_then(|f| choose_alpha(&f, config.target_degree)),
    )?;
    let cohort_syn = cohort_stage(
        "sample-synaptogen",
        &mut writer,
        &CohortSource::Sampled {
            tag: ModelTag::Synaptogen,
            genotype: dqn_genotype.clone(),
            alpha: alpha_syn,
        },
        config,
        seeds.cohort_synaptogen,
        "synaptogen",
    )?;

    // stage: train-snes (or load)
    let snes_genotype: Genotype<f64> = in_stage("train-snes", {
        match &config.snes.checkpoint {
            Some(path) => load_genotype(path),
            None => {
                let snes_config = config.snes.train_config(config.target_degree, seeds.snes)?;
                snes_train(&config.env, dims.clone(), mask.clone(), config.temperature, &snes_config)
                    .and_then(|result| {
                        writer.write("snes_curve.csv", &snes_curve_csv(&result.generations))?;
                        Ok(result.best_genotype)
                    })
            }
        }
    })?;
    in_stage("train-snes", {
        save_genotype(&writer.out_dir.join("snes_genotype.json"), &snes_genotype)
    })?;
    writer.written.push("snes_genotype.json".into());

    // stage: sample + evaluate the evolved cohort
    let alpha_snes = in_stage(
        "sample-snes",
        snes_genotype.map_params().and_then(|f| choose_alpha(&f, config.target_degree)),
    )?;
    let cohort_snes = cohort_stage(
        "sample-snes",
        &mut writer,
        &CohortSource::Sampled {
            tag: ModelTag::Snes,
            genotype: snes_genotype,
            alpha: alpha_snes,
        },
        config,
        seeds.cohort_snes,
        "snes",
    )?;

    // stage: lineal baseline from the gradient-trained donor
    let cohort_bio = cohort_stage(
        "baseline-bio",
        &mut writer,
        &CohortSource::Bio { donor: dqn_genotype, target_degree: config.target_degree },
        config,
        seeds.cohort_bio,
        "bio",
    )?;

    // stage: compare
    let report = in_stage("compare", {
        let run = || -> Result<ComparisonReport> {
            let report =
                compare_cohorts(&[cohort_syn, cohort_snes, cohort_bio], config.significance)?;
            writer.write("table.csv", &comparison_table_csv(&report))?;
            writer.write("p_values.csv", &p_value_matrix_csv(&report)?)?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Parse(format!("report serialize: {e}")))?;
            writer.write("report.json", &json)?;
            Ok(report)
        };
        run()
    })?;

    let manifest = Manifest {
        format_version: 1,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        seeds,
        artifacts: writer.written.clone(),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Parse(format!("manifest serialize: {e}")))?;
    writer.write("manifest.json", &manifest_json)?;

    let artifacts = writer.written.iter().map(|name| out_dir.join(name)).collect();
    Ok(ExperimentOutput { report, out_dir: out_dir.to_path_buf(), artifacts })
}

/// Summary row lookup by model tag (convenience for assertions and the CLI).
pub fn report_row<'a>(report: &'a ComparisonReport, tag: ModelTag) -> Option<&'a SummaryRow> {
    report.rows.iter().find(|(t, _)| *t == tag).map(|(_, row)| row)
}

/// Write a standalone labeled CSV for an arbitrary matrix artifact.
pub fn write_matrix_artifact(
    path: &Path,
    row_labels: &[String],
    col_labels: &[String],
    matrix: &Mat<f64>,
) -> Result<()> {
    std::fs::write(path, write_labeled_csv(row_labels, col_labels, matrix)?)?;
    Ok(())
}
