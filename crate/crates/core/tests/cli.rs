mod common;

use std::path::Path;
use std::process::Command;

use common::{small_config, write_config};
use tierguard::cli::{self, CommonArgs, EvaluateArgs, ReportArgs, SweepArgs, TrainArgs};
use tierguard::report::{self, ReportFile};

fn common_args(config: &Path, out: &Path) -> CommonArgs {
    CommonArgs {
        config: Some(config.to_path_buf()),
        out: Some(out.to_path_buf()),
        ..CommonArgs::default()
    }
}

fn train(config: &Path, out: &Path, overwrite: bool) -> anyhow::Result<String> {
    cli::cmd_train(&TrainArgs {
        common: common_args(config, out),
        overwrite,
    })
}

#[test]
fn train_writes_artifacts_that_reload_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config(1));
    let out = dir.path().join("art");
    train(&cfg_path, &out, false).unwrap();
    for f in cli::artifact_files() {
        assert!(out.join(&f).exists(), "{f}");
    }
    let (manifest, system) = cli::load_artifacts(&out).unwrap();
    let again = dir.path().join("again");
    cli::save_artifacts(&again, &small_config(1), &system, false).unwrap();
    for f in cli::artifact_files() {
        assert_eq!(std::fs::read(out.join(&f)).unwrap(), std::fs::read(again.join(&f)).unwrap(), "{f}");
    }
    assert_eq!(manifest.code_size, 4);
}

#[test]
fn retraining_with_same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config(2));
    let out = dir.path().join("art");
    train(&cfg_path, &out, false).unwrap();
    let first: Vec<Vec<u8>> = cli::artifact_files().iter().map(|f| std::fs::read(out.join(f)).unwrap()).collect();
    train(&cfg_path, &out, true).unwrap();
    let second: Vec<Vec<u8>> = cli::artifact_files().iter().map(|f| std::fs::read(out.join(f)).unwrap()).collect();
    assert_eq!(first, second);
}

#[test]
fn train_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config(3));
    let out = dir.path().join("art");
    train(&cfg_path, &out, false).unwrap();
    let err = train(&cfg_path, &out, false).unwrap_err().to_string();
    assert!(err.contains("--overwrite"), "{err}");
}

#[test]
fn missing_dataset_path_is_a_field_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.toml");
    std::fs::write(&cfg_path, "[dataset]\nsource = \"csv\"\n").unwrap();
    let err = format!("{:#}", train(&cfg_path, &dir.path().join("art"), false).unwrap_err());
    assert!(err.contains("dataset.path"), "{err}");
}

#[test]
fn evaluate_writes_per_unit_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config(4));
    let out = dir.path().join("run");
    train(&cfg_path, &out, false).unwrap();
    let r = cli::cmd_evaluate(&EvaluateArgs {
        common: common_args(&cfg_path, &out),
        artifacts: None,
    })
    .unwrap();
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = metrics.lines().skip(1).collect();
    let per_unit = |scope: &str| rows.iter().filter(|l| !l.starts_with("all,") && l.contains(&format!(",{scope},"))).count();
    assert_eq!(per_unit("local"), 3);
    assert_eq!(per_unit("cloud"), 3);
    assert_eq!(metrics.lines().next().unwrap(), "unit_id,scope,accuracy,mcc,ur,tp,tn,fp,fn");
    assert!(out.join("metadata.json").exists());
    match report::read_report(&out.join("report.json")).unwrap() {
        ReportFile::Evaluation(back) => assert_eq!(*back, r),
        ReportFile::Sweep(_) => panic!("wrong kind"),
    }
}

#[test]
fn evaluate_rejects_code_size_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config(5));
    let out = dir.path().join("run");
    train(&cfg_path, &out, false).unwrap();
    let mut other = small_config(5);
    other.autoencoder.code_size = 5;
    let other_path = dir.path().join("other.toml");
    std::fs::write(&other_path, other.to_toml_string()).unwrap();
    let err = cli::cmd_evaluate(&EvaluateArgs {
        common: common_args(&other_path, &dir.path().join("eval")),
        artifacts: Some(out),
    })
    .unwrap_err()
    .to_string();
    assert!(err.contains("code size 4"), "{err}");
}

#[test]
fn trusted_and_ablation_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config(6));
    let out = dir.path().join("run");
    train(&cfg_path, &out, false).unwrap();
    let mut common = common_args(&cfg_path, &out);
    common.trust_mode = Some(tierguard::config::TrustMode::Trusted);
    let r = cli::cmd_evaluate(&EvaluateArgs {
        common: common.clone(),
        artifacts: None,
    })
    .unwrap();
    assert_eq!(r.ledger.messages, 0);
    assert!(r.ledger.addai_bytes as f64 / r.n_test as f64 <= 1.0);

    common.trust_mode = None;
    common.ablation = Some(tierguard::config::Ablation::Attack);
    let r = cli::cmd_evaluate(&EvaluateArgs { common, artifacts: None }).unwrap();
    assert_eq!(r.routed.attack, r.n_test as u64);
}

fn sweep_config() -> tierguard::config::ExperimentConfig {
    let mut cfg = small_config(7);
    cfg.dataset.synthetic.n_normal = 200;
    cfg.dataset.synthetic.n_attack = 30;
    cfg.dataset.synthetic.features = 40;
    cfg.autoencoder.epochs = 2;
    cfg.adaboost.rounds = 4;
    cfg
}

#[test]
fn sweep_reports_exact_message_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &sweep_config());
    let out = dir.path().join("sweep");
    let args = SweepArgs {
        common: common_args(&cfg_path, &out),
        sizes: vec![30, 10, 20, 15, 25],
        plot: true,
    };
    let s = cli::cmd_sweep(&args).unwrap();
    let bytes: Vec<usize> = s.rows.iter().map(|r| r.message_bytes).collect();
    assert_eq!(bytes, vec![45, 65, 85, 105, 125]);
    assert!(out.join("sweep.png").exists());
    let again = cli::cmd_sweep(&args).unwrap();
    let mcc = |s: &tierguard::report::SweepReport| s.rows.iter().map(|r| r.cloud_mcc).collect::<Vec<_>>();
    assert_eq!(mcc(&s), mcc(&again));

    let single = cli::cmd_sweep(&SweepArgs {
        sizes: vec![25],
        plot: false,
        ..args
    })
    .unwrap();
    assert_eq!(single.rows.len(), 1);
}

#[test]
fn report_merges_and_preserves_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &sweep_config());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, sizes) in [(&a, vec![25, 10]), (&b, vec![15])] {
        cli::cmd_sweep(&SweepArgs {
            common: common_args(&cfg_path, out),
            sizes,
            plot: false,
        })
        .unwrap();
    }
    let merged = dir.path().join("merged");
    cli::cmd_report(&ReportArgs {
        inputs: vec![a.join("sweep.json"), b.join("sweep.json")],
        out: merged.clone(),
        plot: true,
    })
    .unwrap();
    let table = std::fs::read_to_string(merged.join("sweep_merged.csv")).unwrap();
    let hs: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(hs, ["10", "15", "25"]);
    assert!(merged.join("report.png").exists());

    // one report in: the same numbers come out
    let single = dir.path().join("single");
    cli::cmd_report(&ReportArgs {
        inputs: vec![a.join("sweep.json")],
        out: single.clone(),
        plot: false,
    })
    .unwrap();
    let original = std::fs::read_to_string(a.join("sweep.csv")).unwrap();
    let merged_single = std::fs::read_to_string(single.join("sweep_merged.csv")).unwrap();
    let strip = |l: &str| l.split_once(',').unwrap().1.to_string();
    let got: Vec<String> = merged_single.lines().skip(1).map(strip).collect();
    let want: Vec<String> = original.lines().skip(1).map(String::from).collect();
    assert_eq!(got, want);
}

#[test]
fn malformed_report_names_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"kind\": \"sweep\",\n  \"rows\": [1,\n").unwrap();
    let err = cli::cmd_report(&ReportArgs {
        inputs: vec![bad.clone()],
        out: dir.path().join("out"),
        plot: false,
    })
    .unwrap_err()
    .to_string();
    assert!(err.contains("bad.json:"), "{err}");
    assert!(err.contains(":4:") || err.contains(":3:"), "{err}");
}

#[test]
fn binary_reports_errors_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.toml");
    std::fs::write(&cfg_path, "[run]\nn_units = 0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tierguard"))
        .args(["train", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path().join("art"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("run.n_units"), "{stderr}");
}

#[test]
fn binary_train_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config(8));
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_tierguard"))
            .args(args)
            .arg("--config")
            .arg(&cfg_path)
            .arg("--out")
            .arg(dir.path().join("run"))
            .output()
            .unwrap()
    };
    assert!(run(&["train"]).status.success());
    let eval = run(&["evaluate", "--seed", "8"]);
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    assert!(String::from_utf8_lossy(&eval.stdout).contains("ratio"));
}
