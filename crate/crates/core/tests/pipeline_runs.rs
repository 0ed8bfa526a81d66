//! Whole-pipeline behaviour on a small synthetic corpus.

mod common;

use std::path::Path;

use common::MockServer;
use trajscene::narrative::{SceneText, TextSource, DYNAMICS_HEADER, SUMMARY_HEADER, TEMPORAL_HEADER};
use trajscene::pipeline::{
    read_jsonl, EmbedderKind, NarrativeSource, PipelineConfig, Runner, Stage, StageStatus, EVAL_JSON_FILE, MANIFEST_FILE,
    MODEL_FILE, NARRATIVES_FILE,
};
use trajscene::synth::{generate, SynthConfig};

fn small_corpus(root: &Path) {
    let cfg = SynthConfig { segments_per_mode: 6, ..SynthConfig::default() };
    generate(&cfg).unwrap().write_geolife(root).unwrap();
}

fn small_config(root: &Path, out: &Path) -> PipelineConfig {
    let mut cfg = common::config_for(root, out);
    cfg.train.epochs = 4;
    cfg.embedding.dim = 32;
    cfg
}

fn statuses(r: &Runner) -> Vec<(Stage, StageStatus)> {
    r.history.clone()
}

#[test]
fn full_run_then_resume() {
    let root = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    small_corpus(root.path());

    let mut first = Runner::new(small_config(root.path(), out.path())).unwrap();
    first.run_all().unwrap();
    assert!(statuses(&first).iter().all(|(_, s)| *s == StageStatus::Ran));
    assert_eq!(statuses(&first).len(), Stage::ALL.len());
    assert!(out.path().join(EVAL_JSON_FILE).is_file());
    let manifest = first.manifest().clone();
    assert_eq!(manifest.stages.len(), Stage::ALL.len());
    assert!(manifest.stages.values().all(|r| !r.outputs.is_empty()));
    assert_eq!(manifest.segment_counts.values().sum::<usize>(), 30);

    let mut second = Runner::new(small_config(root.path(), out.path())).unwrap();
    second.run_all().unwrap();
    assert!(statuses(&second).iter().all(|(_, s)| *s == StageStatus::Skipped));

    // Losing only the checkpoint reruns training and nothing upstream.
    std::fs::remove_file(out.path().join(MODEL_FILE)).unwrap();
    let mut third = Runner::new(small_config(root.path(), out.path())).unwrap();
    third.run_all().unwrap();
    let ran: Vec<Stage> = statuses(&third).into_iter().filter(|(_, s)| *s == StageStatus::Ran).map(|(st, _)| st).collect();
    assert_eq!(ran, vec![Stage::Train]);
    assert_eq!(third.manifest(), &manifest);
}

#[test]
fn single_byte_change_reruns_downstream() {
    let root = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    small_corpus(root.path());
    Runner::new(small_config(root.path(), out.path())).unwrap().run_all().unwrap();

    let path = out.path().join(NARRATIVES_FILE);
    let mut bytes = std::fs::read(&path).unwrap();
    let i = bytes.iter().position(|b| *b == b'k').unwrap();
    bytes[i] = b'K';
    std::fs::write(&path, bytes).unwrap();

    let mut runner = Runner::new(small_config(root.path(), out.path())).unwrap();
    runner.run_all().unwrap();
    let status = |st: Stage| runner.history.iter().find(|(s, _)| *s == st).unwrap().1;
    assert_eq!(status(Stage::Render), StageStatus::Skipped);
    // The edited file is narrate's own output, so narrate repairs it.
    assert_eq!(status(Stage::Narrate), StageStatus::Ran);
}

#[test]
fn remote_without_token_fails_before_work() {
    let root = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    small_corpus(root.path());
    let mut cfg = small_config(root.path(), out.path());
    cfg.embedding.embedder = EmbedderKind::Remote;
    cfg.remote.token_env = "TRAJSCENE_TEST_PIPELINE_TOKEN_UNSET".into();
    let err = Runner::new(cfg).unwrap().run_all().unwrap_err();
    assert_eq!(err.stage, "preflight");
    assert!(!out.path().join(MANIFEST_FILE).exists());
}

#[test]
fn offline_run_never_touches_the_network() {
    let server = MockServer::start(|_| (500, "{}".into()));
    let root = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    small_corpus(root.path());
    let mut cfg = small_config(root.path(), out.path());
    cfg.remote.reasoner_endpoint = format!("{}/reason", server.base_url);
    cfg.remote.embed_endpoint = format!("{}/embed", server.base_url);
    Runner::new(cfg).unwrap().run_all().unwrap();
    assert_eq!(server.count(), 0);
}

#[test]
fn remote_stages_through_mock_provider() {
    let completion = format!("{TEMPORAL_HEADER}\nMorning.\n\n{DYNAMICS_HEADER}\nSteady.\n\n{SUMMARY_HEADER}\nDone.\n");
    let reason = serde_json::json!({ "completion": completion }).to_string();
    let server = MockServer::start(move |req| {
        if req.path == "/reason" {
            return (200, reason.clone());
        }
        // A vector that depends on the payload length so segments differ.
        let n = req.body["payload"].as_str().unwrap_or("").len();
        let mut v = vec![0.0; 32];
        v[n % 32] = 1.0;
        v[(n / 32) % 32] += 0.5;
        (200, serde_json::json!({ "vector": v, "dimension": 32 }).to_string())
    });
    std::env::set_var("TRAJSCENE_TEST_PIPELINE_TOKEN", "t");
    let root = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    small_corpus(root.path());
    let mut cfg = small_config(root.path(), out.path());
    cfg.narrative.source = NarrativeSource::Remote;
    cfg.embedding.embedder = EmbedderKind::Remote;
    cfg.remote.token_env = "TRAJSCENE_TEST_PIPELINE_TOKEN".into();
    cfg.remote.reasoner_endpoint = format!("{}/reason", server.base_url);
    cfg.remote.embed_endpoint = format!("{}/embed", server.base_url);
    cfg.remote.requests_per_minute = 100_000;
    Runner::new(cfg).unwrap().run_all().unwrap();
    // 30 narratives plus an image and a text embedding per segment.
    assert_eq!(server.count(), 90);
    let narratives: Vec<SceneText> = read_jsonl(&out.path().join(NARRATIVES_FILE)).unwrap();
    assert_eq!(narratives.len(), 30);
    assert!(narratives.iter().all(|t| t.source == TextSource::RemoteLlm && t.summary_block.contains("Done.")));
}
