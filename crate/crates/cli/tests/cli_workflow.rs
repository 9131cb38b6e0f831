//! End-to-end checks of the command-line surface: defaults, file formats,
//! exit codes, and manifest integrity.

use std::path::{Path, PathBuf};
use std::process::Command;

use clap::Parser;
use trajflow_cli::{Cli, Command as CliCommand};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trajflow"))
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("trajflow-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn sha256(path: &Path) -> String {
    trajflow_cli::manifest::hex_digest(&std::fs::read(path).unwrap())
}

#[test]
fn simulate_defaults_match_the_documented_scenarios() {
    let cli =
        Cli::try_parse_from(["trajflow", "simulate", "simple", "--out", "/tmp/x"]).unwrap();
    let CliCommand::Simulate(args) = cli.command else { panic!("wrong subcommand") };
    assert_eq!(args.duration, 100.0);
    assert_eq!(args.dt, 0.1);
    assert_eq!(args.speed, 200.0);
    assert_eq!((args.min_maneuver, args.max_maneuver), (5.0, 50.0));
    assert_eq!((args.min_accel, args.max_accel), (3.0, 20.0));
    // Ballistic defaults.
    assert_eq!(args.air_density, 1.225);
    assert_eq!((args.bc_min, args.bc_max), (200.0, 800.0));
    assert_eq!(args.sigma, 1.0);
    assert_eq!(args.gravity, 9.81);
}

#[test]
fn train_defaults_match_the_documented_hyperparameters() {
    let cli = Cli::try_parse_from([
        "trajflow", "train", "--data", "/tmp/d", "--out-model", "/tmp/m.json",
    ])
    .unwrap();
    let CliCommand::Train(args) = cli.command else { panic!("wrong subcommand") };
    assert_eq!(args.epochs, 1000);
    assert_eq!(args.batch_size, 1000);
    assert_eq!(args.learning_rate, 0.003);
    assert_eq!(args.train_fraction, 0.8);
    assert_eq!(args.noise_std, 0.01);
    assert_eq!(args.layers, 4);
    assert_eq!((args.hidden_layers, args.hidden_units), (2, 32));
    assert_eq!(args.bins, 8);
}

#[test]
fn cluster_defaults_match_the_documented_parameters() {
    let cli = Cli::try_parse_from([
        "trajflow", "cluster", "--model", "m", "--targets", "t", "--out", "o", "--summary", "s",
    ])
    .unwrap();
    let CliCommand::Cluster(args) = cli.command else { panic!("wrong subcommand") };
    assert_eq!(args.steps, 10);
    assert_eq!(args.tolerance, 1e-4);
    assert_eq!(args.max_iter, 300);
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    let dir = tmp_dir("usage");
    let status = bin()
        .args(["simulate", "zigzag", "--out"])
        .arg(dir.join("x"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn missing_input_file_is_a_data_error() {
    let dir = tmp_dir("missing");
    let status = bin()
        .args(["train", "--data"])
        .arg(dir.join("nope"))
        .arg("--out-model")
        .arg(dir.join("m.json"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn corrupt_dataset_is_a_data_error_with_line_number() {
    let dir = tmp_dir("corrupt");
    std::fs::write(
        dir.join("bad.json"),
        r#"{"format_version":1,"dim":2,"n_psi":0,"meta":{}}"#,
    )
    .unwrap();
    std::fs::write(dir.join("bad.csv"), "traj_id,t,p0,p1\r\n0,0.0,oops,2.0\r\n").unwrap();
    let out = bin()
        .args(["train", "--data"])
        .arg(dir.join("bad"))
        .arg("--out-model")
        .arg(dir.join("m.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "stderr was: {stderr}");
}

#[test]
fn zero_epoch_training_checkpoints_the_identity_model() {
    let dir = tmp_dir("epoch0");
    assert!(bin()
        .args(["simulate", "simple", "--n", "3", "--seed", "1", "--duration", "5", "--out"])
        .arg(dir.join("data"))
        .status()
        .unwrap()
        .success());
    assert!(bin()
        .args(["train", "--epochs", "0", "--data"])
        .arg(dir.join("data"))
        .arg("--out-model")
        .arg(dir.join("model.json"))
        .status()
        .unwrap()
        .success());
    let model = trajflow_core::io::load_checkpoint(&dir.join("model.json")).unwrap();
    // Identity-initialized: log density at the origin is the standard
    // normal value regardless of t.
    let lp = model.log_density(&[0.0, 0.0], 0.3, &[]).unwrap();
    approx::assert_abs_diff_eq!(lp, -trajflow_core::flow::LN_2PI, epsilon = 1e-9);
}

#[test]
fn periodic_checkpoints_are_written() {
    let dir = tmp_dir("periodic");
    assert!(bin()
        .args(["simulate", "simple", "--n", "3", "--seed", "1", "--duration", "5", "--out"])
        .arg(dir.join("data"))
        .status()
        .unwrap()
        .success());
    assert!(bin()
        .args([
            "train",
            "--epochs",
            "4",
            "--subsample-points",
            "0.2",
            "--checkpoint-every",
            "2",
            "--data",
        ])
        .arg(dir.join("data"))
        .arg("--out-model")
        .arg(dir.join("model.json"))
        .status()
        .unwrap()
        .success());
    assert!(dir.join("model.epoch2.json").exists());
    assert!(dir.join("model.epoch4.json").exists());
    assert!(dir.join("model.json").exists());
}

#[test]
fn manifests_record_matching_artifact_hashes() {
    let dir = tmp_dir("manifest");
    assert!(bin()
        .args(["simulate", "simple", "--n", "4", "--seed", "9", "--duration", "5", "--out"])
        .arg(dir.join("data"))
        .status()
        .unwrap()
        .success());
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("data.csv.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["subcommand"], "simulate");
    let hashes = manifest["artifact_hashes"].as_object().unwrap();
    assert_eq!(hashes["dataset_csv"], sha256(&dir.join("data.csv")));
    assert_eq!(hashes["dataset_json"], sha256(&dir.join("data.json")));
}

#[test]
fn sample_csv_covers_every_target_id() {
    let dir = tmp_dir("targets");
    assert!(bin()
        .args(["simulate", "simple", "--n", "5", "--seed", "2", "--duration", "20", "--out"])
        .arg(dir.join("data"))
        .status()
        .unwrap()
        .success());
    assert!(bin()
        .args([
            "train", "--epochs", "1", "--subsample-points", "0.05", "--seed", "1", "--data",
        ])
        .arg(dir.join("data"))
        .arg("--out-model")
        .arg(dir.join("model.json"))
        .status()
        .unwrap()
        .success());
    std::fs::write(
        dir.join("targets.csv"),
        "target_id,p0,p1,v0,v1\r\n0,0,0,0,200\r\n1,1000,0,0,200\r\n2,-1000,0,0,200\r\n",
    )
    .unwrap();
    assert!(bin()
        .args(["sample", "--times", "5,10", "--n-samples", "30", "--seed", "3", "--model"])
        .arg(dir.join("model.json"))
        .arg("--targets")
        .arg(dir.join("targets.csv"))
        .arg("--out")
        .arg(dir.join("samples.csv"))
        .status()
        .unwrap()
        .success());
    let csv = std::fs::read_to_string(dir.join("samples.csv")).unwrap();
    let mut seen = [false; 3];
    for line in csv.lines().skip(1) {
        if let Some(id) = line.split(',').next() {
            if let Ok(i) = id.parse::<usize>() {
                seen[i] = true;
            }
        }
    }
    assert_eq!(seen, [true, true, true]);
}

#[test]
fn sampling_outside_the_trained_range_is_refused() {
    let dir = tmp_dir("refuse");
    assert!(bin()
        .args(["simulate", "simple", "--n", "3", "--seed", "2", "--duration", "20", "--out"])
        .arg(dir.join("data"))
        .status()
        .unwrap()
        .success());
    assert!(bin()
        .args(["train", "--epochs", "0", "--data"])
        .arg(dir.join("data"))
        .arg("--out-model")
        .arg(dir.join("model.json"))
        .status()
        .unwrap()
        .success());
    std::fs::write(dir.join("targets.csv"), "target_id,p0,p1,v0,v1\r\n0,0,0,0,200\r\n").unwrap();
    let out = bin()
        .args(["sample", "--times", "5,500", "--n-samples", "5", "--model"])
        .arg(dir.join("model.json"))
        .arg("--targets")
        .arg(dir.join("targets.csv"))
        .arg("--out")
        .arg(dir.join("samples.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("outside the trained range"), "stderr: {stderr}");
}
