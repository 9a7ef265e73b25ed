use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_synaptoforge"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_desk_config(path: &Path, seed: u64) {
    let config = format!(
        r#"
env = "cartpole"
genes = 4
hidden = 8
target_degree = 200.0
cohort_size = 4
episodes = 2
seed = {seed}

[dqn]
steps = 400
validation_interval = 200
validation_episodes = 2
learning_rates = [0.003]

[snes]
lambda = 4
m = 2
budget = 800
shaping = "rank"
"#
    );
    std::fs::write(path, config).unwrap();
}

#[test]
fn help_and_version_exit_zero() {
    for args in [&["--help"][..], &["--version"][..], &["experiment", "--help"][..]] {
        let out = run(args);
        assert!(out.status.success(), "{args:?} failed: {out:?}");
    }
}

#[test]
fn unknown_flags_and_bad_configs_exit_one() {
    let out = run(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["evaluate", "--nonsense"]);
    assert_eq!(out.status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "env = \"not-an-env\"\ngenes = 4\nhidden = 8\nseed = 1\n").unwrap();
    let out = run(&[
        "experiment",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "{out:?}");
}

#[test]
fn missing_checkpoint_is_a_stage_failure() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    write_desk_config(&config, 3);
    let text = std::fs::read_to_string(&config).unwrap();
    let text = text.replace(
        "[dqn]",
        &format!("[dqn]\ncheckpoint = \"{}\"", dir.path().join("absent.json").display()),
    );
    std::fs::write(&config, text).unwrap();
    let out = run(&[
        "experiment",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("train-dqn"), "stage name missing: {stderr}");
}

#[test]
fn experiment_pipeline_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    write_desk_config(&config, 17);
    let run_dir = dir.path().join("run");

    let out = run(&[
        "experiment",
        "--config",
        config.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for label in ["synaptogen", "snes", "bio-plausible"] {
        assert!(stdout.contains(label), "missing {label} in:\n{stdout}");
    }
    assert!(run_dir.join("manifest.json").exists());

    let out = run(&["report", "--run", run_dir.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("environment: cartpole"));
}

#[test]
fn stagewise_commands_compose() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    write_desk_config(&config, 29);
    let config = config.to_str().unwrap();

    let dqn_dir = dir.path().join("dqn");
    let out = run(&["train-dqn", "--config", config, "--out", dqn_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let checkpoint = dqn_dir.join("dqn_genotype.json");
    assert!(checkpoint.exists());
    assert!(dqn_dir.join("dqn_curve.csv").exists());

    let snes_dir = dir.path().join("snes");
    let out = run(&["train-snes", "--config", config, "--out", snes_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(snes_dir.join("snes_genotype.json").exists());

    let agents_dir = dir.path().join("agents");
    let out = run(&[
        "sample-agents",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--count",
        "3",
        "--target-degree",
        "200",
        "--seed",
        "5",
        "--out",
        agents_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for k in 0..3 {
        assert!(agents_dir.join(format!("agent_{k}.json")).exists());
    }

    let eval = |tag: &str, seed: &str, ckpt: &Path, out_path: &Path| {
        let out = run(&[
            "evaluate",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--env",
            "cartpole",
            "--tag",
            tag,
            "--agents",
            "4",
            "--episodes",
            "2",
            "--target-degree",
            "200",
            "--seed",
            seed,
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    let syn_json = dir.path().join("cohort_syn.json");
    let snes_json = dir.path().join("cohort_snes.json");
    eval("synaptogen", "41", &checkpoint, &syn_json);
    eval("snes", "43", &snes_dir.join("snes_genotype.json"), &snes_json);

    let bio_dir = dir.path().join("bio");
    let out = run(&[
        "baseline-bio",
        "--config",
        config,
        "--donor",
        checkpoint.to_str().unwrap(),
        "--out",
        bio_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bio_json = bio_dir.join("cohort_bio.json");
    assert!(bio_json.exists());

    let cmp_dir = dir.path().join("cmp");
    let out = run(&[
        "compare",
        syn_json.to_str().unwrap(),
        snes_json.to_str().unwrap(),
        bio_json.to_str().unwrap(),
        "--out",
        cmp_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["table.csv", "p_values.csv", "report.json"] {
        assert!(cmp_dir.join(name).exists(), "missing {name}");
    }
    let table = std::fs::read_to_string(cmp_dir.join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 4, "header + three cohorts:\n{table}");
}

#[test]
fn seed_env_var_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    write_desk_config(&config, 1);
    let config = config.to_str().unwrap();

    let train = |out_dir: &Path, env_seed: Option<&str>| {
        let mut cmd = bin();
        cmd.args(["train-dqn", "--config", config, "--out", out_dir.to_str().unwrap()]);
        match env_seed {
            Some(seed) => cmd.env("SYNAPTOFORGE_SEED", seed),
            None => cmd.env_remove("SYNAPTOFORGE_SEED"),
        };
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(out_dir.join("dqn_genotype.json")).unwrap()
    };
    let base = train(&dir.path().join("a"), None);
    let overridden = train(&dir.path().join("b"), Some("999"));
    let repeated = train(&dir.path().join("c"), Some("999"));
    assert_ne!(base, overridden, "env var must change the run");
    assert_eq!(overridden, repeated, "same override must reproduce bit-exactly");

    let out = bin()
        .args(["train-dqn", "--config", config, "--out", dir.path().join("d").to_str().unwrap()])
        .env("SYNAPTOFORGE_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_gradients_command_passes() {
    let out = run(&["verify-gradients", "--trials", "3", "--seed", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("3 trials passed"), "{stdout}");
}

#[test]
fn ndge_command_recovers_planted_pair() {
    let dir = tempfile::tempdir().unwrap();
    // Planted instance: neuron pairs (2k, 2k+1); the first 6 have synapses
    // driven by gene pair (g0, g1), the next 6 are contact-only.
    let n = 24;
    let gene_labels = ["g0", "g1"];
    let neuron_labels: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let mut expression = vec![vec![0.0f64; n]; 2];
    let mut connectome = vec![vec![0u8; n]; n];
    let mut contactome = vec![vec![0u8; n]; n];
    for k in 0..12 {
        let (u, v) = (2 * k, 2 * k + 1);
        contactome[u][v] = 1;
        if k < 6 {
            connectome[u][v] = 1;
            expression[0][u] = 2.0;
            expression[1][v] = 1.0;
        }
    }
    let csv = |rows: &[Vec<f64>]| {
        let mut text = String::from("gene");
        for l in &neuron_labels {
            text.push(',');
            text.push_str(l);
        }
        text.push('\n');
        for (g, row) in rows.iter().enumerate() {
            text.push_str(gene_labels[g]);
            for v in row {
                text.push_str(&format!(",{v}"));
            }
            text.push('\n');
        }
        text
    };
    let mask_csv = |rows: &[Vec<u8>]| {
        let mut text = String::from("neuron");
        for l in &neuron_labels {
            text.push(',');
            text.push_str(l);
        }
        text.push('\n');
        for (u, row) in rows.iter().enumerate() {
            text.push_str(&neuron_labels[u]);
            for v in row {
                text.push_str(&format!(",{v}"));
            }
            text.push('\n');
        }
        text
    };
    let expr_path = dir.path().join("expression.csv");
    let conn_path = dir.path().join("connectome.csv");
    let contact_path = dir.path().join("contactome.csv");
    std::fs::write(&expr_path, csv(&expression)).unwrap();
    std::fs::write(&conn_path, mask_csv(&connectome)).unwrap();
    std::fs::write(&contact_path, mask_csv(&contactome)).unwrap();

    let out_dir = dir.path().join("ndge");
    let out = run(&[
        "ndge",
        "--expression",
        expr_path.to_str().unwrap(),
        "--connectome",
        conn_path.to_str().unwrap(),
        "--contactome",
        contact_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mask = std::fs::read_to_string(out_dir.join("mask.csv")).unwrap();
    let lines: Vec<&str> = mask.lines().collect();
    assert_eq!(lines[0], ",g0,g1");
    assert_eq!(lines[1], "g0,0,1", "planted pair (g0, g1) must be recovered");
    assert_eq!(lines[2], "g1,0,0");
}
