//! The `trajscene` binary: exit codes, flags and stage-tagged errors.

use std::path::Path;
use std::process::{Command, Output};

use trajscene::pipeline::manifest::digest_path;

fn trajscene(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trajscene"))
        .args(args)
        .current_dir(dir)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

const CONFIG: &str = r#"
[paths]
geolife_root = "corpus"
osm_extract = "corpus/osm.xml"
out_dir = "run"

[embedding]
dim = 32

[train]
epochs = 3

[remote]
token_env = "TRAJSCENE_CLI_TEST_TOKEN_UNSET"
"#;

#[test]
fn synth_then_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let synth = trajscene(d, &["synth", "--seed", "5", "--per-mode", "4", "--out", "corpus"]);
    assert!(synth.status.success(), "{}", text(&synth.stderr));
    assert!(text(&synth.stdout).contains("20 segments"));

    let again = tempfile::tempdir().unwrap();
    assert!(trajscene(again.path(), &["synth", "--seed", "5", "--per-mode", "4", "--out", "corpus"]).status.success());
    assert_eq!(digest_path(&d.join("corpus")).unwrap(), digest_path(&again.path().join("corpus")).unwrap());

    std::fs::write(d.join("run.toml"), CONFIG).unwrap();
    let run = trajscene(d, &["--config", "run.toml", "pipeline"]);
    assert!(run.status.success(), "{}", text(&run.stderr));
    let stdout = text(&run.stdout);
    assert!(stdout.contains("train: ran") && stdout.contains("macro"), "{stdout}");

    let rerun = trajscene(d, &["--config", "run.toml", "pipeline"]);
    assert!(rerun.status.success());
    assert_eq!(text(&rerun.stdout).matches("skipped").count(), 9);

    // --out redirects the run; single stages work once inputs exist.
    let ingest = trajscene(d, &["--config", "run.toml", "--out", "other", "ingest"]);
    assert!(ingest.status.success());
    assert!(d.join("other/segments.jsonl").is_file());
    let features = trajscene(d, &["--config", "run.toml", "--out", "other", "features"]);
    assert!(features.status.success());
    assert_eq!(
        std::fs::read(d.join("other/kinematics.jsonl")).unwrap(),
        std::fs::read(d.join("run/kinematics.jsonl")).unwrap()
    );
}

#[test]
fn failures_exit_nonzero_with_stage_tag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let missing = trajscene(d, &["--config", "nope.toml", "pipeline"]);
    assert!(!missing.status.success());
    assert!(text(&missing.stderr).contains("stage config"), "{}", text(&missing.stderr));

    assert!(trajscene(d, &["synth", "--per-mode", "2", "--out", "corpus"]).status.success());
    std::fs::write(d.join("remote.toml"), format!("{CONFIG}\n[narrative]\nsource = \"remote\"\n")).unwrap();
    let preflight = trajscene(d, &["--config", "remote.toml", "pipeline"]);
    assert!(!preflight.status.success());
    assert!(text(&preflight.stderr).contains("stage preflight"), "{}", text(&preflight.stderr));
    assert!(!d.join("run").exists());

    std::fs::write(d.join("run.toml"), CONFIG).unwrap();
    let out_of_order = trajscene(d, &["--config", "run.toml", "train"]);
    assert!(!out_of_order.status.success());
    assert!(text(&out_of_order.stderr).contains("stage train"), "{}", text(&out_of_order.stderr));
}

#[test]
fn show_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = trajscene(dir.path(), &["--seed", "9", "show-config"]);
    assert!(out.status.success());
    let cfg = trajscene::pipeline::PipelineConfig::from_toml(&text(&out.stdout), dir.path()).unwrap();
    assert_eq!((cfg.synth.seed, cfg.train.split_seed, cfg.train.init_seed), (9, 9, 10));
}
