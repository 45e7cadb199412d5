//! Black-box tests of the command-line interface: happy paths, diagnostics
//! on stderr, and exit codes (1 for config/contract problems, 2 for I/O and
//! checksum failures).

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_modalnet"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_small_setup(dir: &Path) -> (String, String) {
    let spec = dir.join("spec.toml");
    fs::write(
        &spec,
        "num_classes = 3\nn_train = 90\nn_val = 20\nn_test = 40\n\
         d_v = 6\nd_a = 5\nd_t = 4\nseed = 8\n",
    )
    .unwrap();
    let cfg = dir.join("cfg.toml");
    fs::write(
        &cfg,
        "[model]\nfeature_dim = 8\nd_v = 6\nd_a = 5\nd_t = 4\n\
         encoder_total_params = 900\npool_size = 8\nprompt_len = 3\n\
         top_k = 2\ninherent_len = 2\ngate_hidden = 8\n\
         [train]\nmax_epochs = 3\nseed = 8\n",
    )
    .unwrap();
    (
        spec.to_str().unwrap().to_owned(),
        cfg.to_str().unwrap().to_owned(),
    )
}

#[test]
fn full_workflow_gen_train_eval() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, cfg) = write_small_setup(dir.path());
    let data = dir.path().join("data");
    let ckpt = dir.path().join("model.json");
    let report = dir.path().join("report.json");
    let confusion = dir.path().join("confusion.csv");

    let out = run(&["gen-data", "--spec", &spec, "--out", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(data.join("manifest.json").exists());

    let out = run(&[
        "train",
        "--config",
        &cfg,
        "--data",
        data.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(ckpt.exists());

    let out = run(&[
        "eval",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--pattern",
        "VAT",
        "--report",
        report.to_str().unwrap(),
        "--confusion",
        confusion.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(table.contains("WAR"));
    assert!(table.contains("UAR"));

    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert!(json["war"].as_f64().unwrap() >= 0.0);
    assert_eq!(json["presence_pattern"], serde_json::json!([true, true, true]));
    assert!(json["checkpoint_hash"].as_str().unwrap().len() == 64);

    let csv = fs::read_to_string(&confusion).unwrap();
    assert_eq!(csv.lines().count(), 4); // header + 3 classes
    assert!(csv.starts_with("class0,class1,class2"));
}

#[test]
fn eval_accepts_hyphen_patterns_and_subsets() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, cfg) = write_small_setup(dir.path());
    let data = dir.path().join("data");
    let ckpt = dir.path().join("model.json");
    run(&["gen-data", "--spec", &spec, "--out", data.to_str().unwrap()]);
    run(&[
        "train",
        "--config",
        &cfg,
        "--data",
        data.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
        "--stage",
        "single",
    ]);

    for pattern in ["--T", "-A-", "V--", "VA-", "-AT", "V-T"] {
        let out = run(&[
            "eval",
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--pattern",
            pattern,
        ]);
        assert!(out.status.success(), "pattern {pattern}: {}", stderr(&out));
    }

    let out = run(&[
        "eval",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--classes",
        "0,2",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(table.contains("recall[1]"));
    assert!(!table.contains("recall[2]")); // two-class subset
}

#[test]
fn all_absent_pattern_is_rejected_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, cfg) = write_small_setup(dir.path());
    let data = dir.path().join("data");
    let ckpt = dir.path().join("model.json");
    run(&["gen-data", "--spec", &spec, "--out", data.to_str().unwrap()]);
    run(&[
        "train",
        "--config",
        &cfg,
        "--data",
        data.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
        "--stage",
        "single",
    ]);
    let out = run(&[
        "eval",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--pattern",
        "---",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn missing_data_directory_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("nope.json");
    let out = run(&[
        "eval",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--data",
        dir.path().join("missing").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn corrupted_dataset_fails_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, cfg) = write_small_setup(dir.path());
    let data = dir.path().join("data");
    run(&["gen-data", "--spec", &spec, "--out", data.to_str().unwrap()]);
    // flip a payload bit
    let victim = data.join("train_visual.bin");
    let mut bytes = fs::read(&victim).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&victim, bytes).unwrap();

    let out = run(&[
        "train",
        "--config",
        &cfg,
        "--data",
        data.to_str().unwrap(),
        "--out",
        dir.path().join("m.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("manifest"));
}

#[test]
fn bad_config_fails_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, _) = write_small_setup(dir.path());
    let data = dir.path().join("data");
    run(&["gen-data", "--spec", &spec, "--out", data.to_str().unwrap()]);
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[model]\nfeature_dim = 8\nno_such_key = 1\n").unwrap();
    let out = run(&[
        "train",
        "--config",
        bad.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        dir.path().join("m.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn stage_2_requires_an_init_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, cfg) = write_small_setup(dir.path());
    let data = dir.path().join("data");
    run(&["gen-data", "--spec", &spec, "--out", data.to_str().unwrap()]);
    let out = run(&[
        "train",
        "--config",
        &cfg,
        "--data",
        data.to_str().unwrap(),
        "--out",
        dir.path().join("m.json").to_str().unwrap(),
        "--stage",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--init"));
}

#[test]
fn staged_training_resumes_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, cfg) = write_small_setup(dir.path());
    let data = dir.path().join("data");
    let s1 = dir.path().join("s1.json");
    let s2 = dir.path().join("s2.json");
    run(&["gen-data", "--spec", &spec, "--out", data.to_str().unwrap()]);
    let out = run(&[
        "train",
        "--config",
        &cfg,
        "--data",
        data.to_str().unwrap(),
        "--out",
        s1.to_str().unwrap(),
        "--stage",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = run(&[
        "train",
        "--config",
        &cfg,
        "--data",
        data.to_str().unwrap(),
        "--out",
        s2.to_str().unwrap(),
        "--stage",
        "2",
        "--init",
        s1.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = run(&[
        "eval",
        "--ckpt",
        s2.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn stage_2_rejects_checkpoint_from_other_config() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, cfg) = write_small_setup(dir.path());
    let data = dir.path().join("data");
    let s1 = dir.path().join("s1.json");
    run(&["gen-data", "--spec", &spec, "--out", data.to_str().unwrap()]);
    run(&[
        "train",
        "--config",
        &cfg,
        "--data",
        data.to_str().unwrap(),
        "--out",
        s1.to_str().unwrap(),
        "--stage",
        "1",
    ]);
    // same dims, different hyperparameter -> different config hash
    let other = dir.path().join("other.toml");
    fs::write(
        &other,
        "[model]\nfeature_dim = 8\nd_v = 6\nd_a = 5\nd_t = 4\n\
         encoder_total_params = 900\npool_size = 8\nprompt_len = 3\n\
         top_k = 2\ninherent_len = 2\ngate_hidden = 8\nlambda_l1 = 0.05\n\
         [train]\nmax_epochs = 3\nseed = 8\n",
    )
    .unwrap();
    let out = run(&[
        "train",
        "--config",
        other.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        dir.path().join("s2.json").to_str().unwrap(),
        "--stage",
        "2",
        "--init",
        s1.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_command_reports_and_succeeds() {
    let out = run(&["gradcheck", "--seed", "5", "--configs", "8"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(text.contains("max relative error"));
}
