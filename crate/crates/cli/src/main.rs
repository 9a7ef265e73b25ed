//! `synaptoforge` command line: train, sample, evaluate, and compare
//! genetically wired agents. Exit codes: 0 success, 1 validation error,
//! 2 stage failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use synaptoforge::checkpoint::{load_genotype, save_agent, save_genotype};
use synaptoforge::cohort::{
    CohortScores, CohortSource, ComparisonReport, ModelTag, compare_cohorts, evaluate_cohort,
};
use synaptoforge::dqn::grid_search;
use synaptoforge::envs::reward_bounds;
use synaptoforge::error::{Error, Result};
use synaptoforge::experiment::{DerivedSeeds, ExperimentConfig, run_experiment};
use synaptoforge::grad::{Loss, finite_diff_check};
use synaptoforge::model::{Genotype, ModelDims};
use synaptoforge::ndge::{CoexpressionInput, NdgeOptions, global_ndge};
use synaptoforge::report::{
    comparison_table_csv, histogram_svg, p_value_matrix_csv, read_labeled_csv, read_mask_csv,
    snes_curve_csv, training_curve_csv, write_labeled_csv, write_mask_csv,
};
use synaptoforge::rng::{chacha, derive_seed};
use synaptoforge::sampler::{choose_alpha, sample_agent};
use synaptoforge::snes::snes_train;

use rand::Rng;

#[derive(Parser)]
#[command(
    name = "synaptoforge",
    version,
    about = "Genetically wired neural agents: factorized genotypes, synaptogenesis sampling, training, and cohort statistics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full protocol: DQN, sampled cohort, SNES, evolved cohort,
    /// lineal baseline, comparison, manifest
    Experiment(ConfigArgs),
    /// Train the gradient model and write its genotype checkpoint
    TrainDqn(ConfigArgs),
    /// Evolve a genotype and write its checkpoint
    TrainSnes(ConfigArgs),
    /// Evaluate the lineal-baseline cohort grown from a donor checkpoint
    BaselineBio {
        #[command(flatten)]
        common: ConfigArgs,
        /// Donor genotype checkpoint providing rules and conductances
        #[arg(long)]
        donor: PathBuf,
    },
    /// Realize agents from a genotype checkpoint and write agent checkpoints
    SampleAgents {
        /// Genotype checkpoint to sample from
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Expected mean synapses per neuron used to pick the density factor
        #[arg(long, default_value_t = 1e4)]
        target_degree: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for agent_<k>.json files
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a cohort sampled from a genotype checkpoint
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Environment id: cartpole, mountaincar, or acrobot
        #[arg(long)]
        env: String,
        /// Cohort label recorded in the scores file: synaptogen or snes
        #[arg(long, default_value = "synaptogen")]
        tag: String,
        #[arg(long, default_value_t = 100)]
        agents: usize,
        #[arg(long, default_value_t = 10)]
        episodes: u32,
        #[arg(long, default_value_t = 1e4)]
        target_degree: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cohort scores JSON to write
        #[arg(long)]
        out: PathBuf,
        /// Also write an SVG score histogram here
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
    /// Rank cohort score files against each other
    Compare {
        /// Two or more cohort scores JSON files
        #[arg(required = true, num_args = 2..)]
        cohorts: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        significance: f64,
        /// Output directory for table.csv, p_values.csv, report.json
        #[arg(long)]
        out: PathBuf,
    },
    /// Infer which gene pairs drive synaptogenesis from expression and wiring
    Ndge {
        /// Labeled CSV, genes x neurons
        #[arg(long)]
        expression: PathBuf,
        /// Labeled 0/1 CSV, neurons x neurons synapse adjacency
        #[arg(long)]
        connectome: PathBuf,
        /// Labeled 0/1 CSV, neurons x neurons physical contact
        #[arg(long)]
        contactome: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        significance: f64,
        /// Test the one-sided alternative (synapse pairs co-express more)
        #[arg(long)]
        one_sided: bool,
        /// Output directory for mask.csv, p_values.csv, t_values.csv
        #[arg(long)]
        out: PathBuf,
    },
    /// Check analytic gradients against central finite differences
    VerifyGradients {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Print the comparison table from a finished experiment directory
    Report {
        /// Experiment output directory containing report.json
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Stage { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

/// SYNAPTOFORGE_SEED overrides the master seed from configs and flags.
fn seed_override() -> Result<Option<u64>> {
    match std::env::var("SYNAPTOFORGE_SEED") {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| Error::InvalidArgument(format!("SYNAPTOFORGE_SEED must be a u64, got '{text}'"))),
        Err(_) => Ok(None),
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = seed_override()? {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn effective_seed(seed: u64) -> Result<u64> {
    Ok(seed_override()?.unwrap_or(seed))
}

fn parse_tag(tag: &str) -> Result<ModelTag> {
    match tag {
        "synaptogen" => Ok(ModelTag::Synaptogen),
        "snes" => Ok(ModelTag::Snes),
        other => Err(Error::InvalidArgument(format!(
            "unknown cohort tag '{other}' (expected 'synaptogen' or 'snes')"
        ))),
    }
}

fn print_report(report: &ComparisonReport) {
    println!(
        "{:<14} {:>6} {:>10} {:>10} {:>10} {:>10} {:>9}",
        "model", "n", "mean", "std", "top10", "top10 std", "solved %"
    );
    for (tag, row) in &report.rows {
        let fmt_opt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.2}"),
            None => "-".into(),
        };
        println!(
            "{:<14} {:>6} {:>10.2} {:>10.2} {:>10} {:>10} {:>9.1}",
            tag.label(),
            row.n,
            row.mean,
            row.std,
            fmt_opt(row.top10_mean),
            fmt_opt(row.top10_std),
            row.solved_percent
        );
    }
    for test in &report.tests {
        println!(
            "{} vs {}: U = {:.1}, p = {:.4e} (adjusted {:.4e}){}",
            test.left.label(),
            test.right.label(),
            test.u,
            test.p,
            test.p_adjusted,
            if test.significant { "  *" } else { "" }
        );
    }
}

fn write_cohort(out: &Path, cohort: &CohortScores) -> Result<()> {
    let json = serde_json::to_string_pretty(cohort)
        .map_err(|e| Error::Parse(format!("cohort serialize: {e}")))?;
    std::fs::write(out, json)?;
    Ok(())
}

fn summarize_cohort(cohort: &CohortScores) -> Result<()> {
    let row = cohort.summary()?;
    println!(
        "{}: n = {}, mean = {:.2}, std = {:.2}, solved = {:.1}%, failures = {}",
        cohort.tag.label(),
        row.n,
        row.mean,
        row.std,
        row.solved_percent,
        cohort.failed()
    );
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Experiment(args) => {
            let config = load_config(&args.config)?;
            let output = run_experiment(&config, &args.out)?;
            print_report(&output.report);
            println!("artifacts in {}", output.out_dir.display());
            Ok(())
        }
        Command::TrainDqn(args) => {
            let config = load_config(&args.config)?;
            let seeds = DerivedSeeds::from_master(config.seed);
            std::fs::create_dir_all(&args.out)?;
            let result = grid_search(
                &config.env,
                config.model_dims()?,
                config.load_mask()?,
                config.temperature,
                &config.dqn.train_config(seeds.dqn),
                &config.dqn.learning_rates,
                &config.dqn.grid_seeds(seeds.dqn),
            )
            .map_err(|e| e.in_stage("train-dqn"))?;
            std::fs::write(args.out.join("dqn_curve.csv"), training_curve_csv(&result.best_curve))?;
            save_genotype(&args.out.join("dqn_genotype.json"), &result.best.genotype)?;
            println!(
                "best validation {:.2} at step {} (lr {}); checkpoint {}",
                result.best.validation_mean,
                result.best.step,
                result.best.config.learning_rate,
                args.out.join("dqn_genotype.json").display()
            );
            Ok(())
        }
        Command::TrainSnes(args) => {
            let config = load_config(&args.config)?;
            let seeds = DerivedSeeds::from_master(config.seed);
            std::fs::create_dir_all(&args.out)?;
            let result = snes_train(
                &config.env,
                config.model_dims()?,
                config.load_mask()?,
                config.temperature,
                &config.snes.train_config(config.target_degree, seeds.snes)?,
            )
            .map_err(|e| e.in_stage("train-snes"))?;
            std::fs::write(args.out.join("snes_curve.csv"), snes_curve_csv(&result.generations))?;
            save_genotype(&args.out.join("snes_genotype.json"), &result.best_genotype)?;
            println!(
                "best fitness {:.2} over {} generations ({} env steps); checkpoint {}",
                result.best_fitness,
                result.generations.len(),
                result.env_steps,
                args.out.join("snes_genotype.json").display()
            );
            Ok(())
        }
        Command::BaselineBio { common, donor } => {
            let config = load_config(&common.config)?;
            let seeds = DerivedSeeds::from_master(config.seed);
            std::fs::create_dir_all(&common.out)?;
            let donor = load_genotype(&donor)?;
            let source = CohortSource::Bio { donor, target_degree: config.target_degree };
            let cohort = evaluate_cohort(
                &source,
                &config.env,
                config.cohort_size,
                config.episodes,
                seeds.cohort_bio,
            )
            .map_err(|e| e.in_stage("baseline-bio"))?;
            write_cohort(&common.out.join("cohort_bio.json"), &cohort)?;
            summarize_cohort(&cohort)?;
            Ok(())
        }
        Command::SampleAgents { checkpoint, count, target_degree, seed, out } => {
            if count == 0 {
                return Err(Error::InvalidArgument("count must be >= 1".into()));
            }
            let seed = effective_seed(seed)?;
            let genotype = load_genotype(&checkpoint)?;
            let alpha = choose_alpha(&genotype.map_params()?, target_degree)?;
            std::fs::create_dir_all(&out)?;
            for k in 0..count {
                let agent = sample_agent(&genotype, alpha, derive_seed(seed, k as u64))
                    .map_err(|e| e.in_stage("sample-agents"))?;
                save_agent(&out.join(format!("agent_{k}.json")), &genotype, &agent)?;
            }
            println!("wrote {count} agents (alpha = {alpha:.6e}) to {}", out.display());
            Ok(())
        }
        Command::Evaluate {
            checkpoint,
            env,
            tag,
            agents,
            episodes,
            target_degree,
            seed,
            out,
            histogram,
        } => {
            let seed = effective_seed(seed)?;
            let genotype = load_genotype(&checkpoint)?;
            let alpha = choose_alpha(&genotype.map_params()?, target_degree)?;
            let source = CohortSource::Sampled { tag: parse_tag(&tag)?, genotype, alpha };
            let cohort = evaluate_cohort(&source, &env, agents, episodes, seed)
                .map_err(|e| e.in_stage("evaluate"))?;
            write_cohort(&out, &cohort)?;
            if let Some(path) = histogram {
                let (lo, hi) = reward_bounds(&env)?;
                let svg = histogram_svg(
                    &format!("{} rewards on {env}", source.tag().label()),
                    &cohort.scores(),
                    20,
                    lo,
                    hi,
                )?;
                std::fs::write(path, svg)?;
            }
            summarize_cohort(&cohort)?;
            Ok(())
        }
        Command::Compare { cohorts, significance, out } => {
            let mut loaded = Vec::new();
            for path in &cohorts {
                let text = std::fs::read_to_string(path)?;
                let cohort: CohortScores = serde_json::from_str(&text)
                    .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
                loaded.push(cohort);
            }
            let report = compare_cohorts(&loaded, significance).map_err(|e| e.in_stage("compare"))?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("table.csv"), comparison_table_csv(&report))?;
            std::fs::write(out.join("p_values.csv"), p_value_matrix_csv(&report)?)?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Parse(format!("report serialize: {e}")))?;
            std::fs::write(out.join("report.json"), json)?;
            print_report(&report);
            Ok(())
        }
        Command::Ndge { expression, connectome, contactome, significance, one_sided, out } => {
            let (gene_labels, _, expr) = read_labeled_csv(&std::fs::read_to_string(expression)?)?;
            let (_, _, b) = read_mask_csv(&std::fs::read_to_string(connectome)?)?;
            let (_, _, cc) = read_mask_csv(&std::fs::read_to_string(contactome)?)?;
            let input = CoexpressionInput::new(expr, b, cc)?;
            let opts = NdgeOptions { significance, one_sided };
            let result = global_ndge(&input, &opts).map_err(|e| e.in_stage("ndge"))?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("mask.csv"), write_mask_csv(&gene_labels, &gene_labels, &result.g)?)?;
            std::fs::write(
                out.join("p_values.csv"),
                write_labeled_csv(&gene_labels, &gene_labels, &result.p_values)?,
            )?;
            std::fs::write(
                out.join("t_values.csv"),
                write_labeled_csv(&gene_labels, &gene_labels, &result.t_values)?,
            )?;
            let hits = result.g.data().iter().filter(|&&v| v == 1).count();
            println!(
                "{} synapse pairs, {} contact-only pairs, {hits} significant gene pairs; outputs in {}",
                result.with_synapses_count,
                result.contact_only_count,
                out.display()
            );
            Ok(())
        }
        Command::VerifyGradients { trials, seed, tolerance } => {
            if trials == 0 {
                return Err(Error::InvalidArgument("trials must be >= 1".into()));
            }
            let seed = effective_seed(seed)?;
            let mut worst = 0.0f64;
            for trial in 0..trials as u64 {
                let mut rng = chacha(derive_seed(seed, trial));
                let dims = ModelDims::new(
                    vec![
                        rng.random_range(1..=8),
                        rng.random_range(1..=8),
                        rng.random_range(1..=8),
                    ],
                    rng.random_range(2..=8),
                    rng.random_range(1..=4),
                )?;
                let genes = dims.genes;
                let mask = (trial % 2 == 1).then(|| {
                    synaptoforge::mat::Mat::from_fn(genes, genes, |i, j| {
                        u8::from(rng.random_bool(0.5) || i == j)
                    })
                });
                let genotype =
                    Genotype::<f64>::random(dims, mask, 1.0, derive_seed(seed, 1000 + trial))?;
                let input: Vec<f64> =
                    (0..genotype.dims.input_dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
                let target: Vec<f64> =
                    (0..genotype.dims.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let report =
                    finite_diff_check(&genotype, &input, &Loss::SquaredError { target }, 1e-5)
                        .map_err(|e| e.in_stage("verify-gradients"))?;
                println!("trial {trial}: max relative error {:.3e}", report.max_rel_err);
                worst = worst.max(report.max_rel_err);
                if !report.passes(tolerance) {
                    return Err(Error::Degenerate(format!(
                        "gradient mismatch {:.3e} exceeds tolerance {tolerance:.1e}\n{report}",
                        report.max_rel_err
                    ))
                    .in_stage("verify-gradients"));
                }
            }
            println!("{trials} trials passed; worst relative error {worst:.3e}");
            Ok(())
        }
        Command::Report { run } => {
            let path = run.join("report.json");
            let text = std::fs::read_to_string(&path)
                .map_err(|_| Error::InvalidArgument(format!("no report.json in {}", run.display())))?;
            let report: ComparisonReport = serde_json::from_str(&text)
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            println!("environment: {}", report.env_id);
            print_report(&report);
            Ok(())
        }
    }
}
