mod common;

use std::io::Write;
use std::time::Instant;

use qlabel::classify::TrainedModel;
use qlabel::corpus::{read_labeled_issues, ClassLabel};
use qlabel::eval::{EvalReport, ReportFormat};
use qlabel::pipeline::{read_manifest, Stage};

use common::{e2e_pipeline, fixture, pipeline, read_bytes};

#[test]
fn prepare_keeps_ten_of_twelve() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(dir.path(), &fixture("pipeline/prepare_issues.jsonl"), &[("min_count", "1")]);
    let out = p.run_stage(Stage::Prepare).unwrap();
    assert!(out.summary.contains("12 issues read"), "{}", out.summary);
    let labeled: Vec<_> = read_labeled_issues(&p.config().labeled_path())
        .unwrap()
        .collect::<Result<_, _>>()
        .unwrap();
    let ids = |c: ClassLabel| labeled.iter().filter(|l| l.class == c).map(|l| l.issue.id).collect::<Vec<_>>();
    assert_eq!(ids(ClassLabel::Question), [1, 3, 6, 9]);
    assert_eq!(ids(ClassLabel::NotQuestion), [2, 4, 5, 7, 10, 11]);
    let summary: serde_json::Value =
        serde_json::from_slice(&read_bytes(&p.config().prepare_summary_path())).unwrap();
    assert_eq!(summary["excluded"], 2);
    assert_eq!(summary["question"], 4);
    assert_eq!(summary["not_question"], 6);
}

#[test]
fn prepare_rejects_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let p = pipeline(&dir.path().join("out"), &empty, &[]);
    let err = p.run_stage(Stage::Prepare).unwrap_err();
    assert!(err.to_string().contains("no issues"), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn default_min_count_recorded_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.jsonl");
    let mut f = std::fs::File::create(&raw).unwrap();
    for id in 0..120 {
        let labels = if id % 2 == 0 { "question" } else { "bug" };
        writeln!(f, r#"{{"id": {id}, "title": "t", "body": "b", "labels": "{labels}", "state": "closed"}}"#).unwrap();
    }
    drop(f);
    let p = pipeline(&dir.path().join("out"), &raw, &[]);
    p.run_stage(Stage::Prepare).unwrap();
    let manifest = read_manifest(&p.config().manifest_path()).unwrap();
    assert_eq!(manifest.len(), 1);
    assert_eq!(manifest[0].stage, Stage::Prepare);
    assert_eq!(manifest[0].params["min_count"], "50");
    assert_eq!(manifest[0].input_digest.len(), 64);
}

#[test]
fn end_to_end_fixture_run() {
    let dir = tempfile::tempdir().unwrap();
    let p = e2e_pipeline(dir.path(), 2);
    let start = Instant::now();
    let outcomes = p.run_all().unwrap();
    let elapsed = start.elapsed();
    assert_eq!(outcomes.len(), 6);
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    let report = EvalReport::from_json(&String::from_utf8(read_bytes(&p.config().report_path())).unwrap()).unwrap();
    assert!(report.accuracy >= 0.80, "accuracy {}", report.accuracy);
    assert_eq!(report.provider, "hashed");
    let text = p.report(ReportFormat::Text).unwrap();
    assert!(text.contains("accuracy"));

    let manifest = read_manifest(&p.config().manifest_path()).unwrap();
    assert_eq!(manifest.iter().map(|m| m.stage).collect::<Vec<_>>(), Stage::ALL);
    for pair in manifest.windows(2) {
        assert_eq!(pair[0].output_digest.len(), 64);
        assert_eq!(pair[1].input_digest.len(), 64);
    }

    let model = TrainedModel::load(&p.config().model_path()).unwrap();
    let q = p.predict(&model, "How do I enable dark mode in settings?", "").unwrap();
    assert_eq!(q.prediction.class, ClassLabel::Question);
    assert!(q.prediction.score > 0.5);
    let nq = p
        .predict(
            &model,
            "Crash when saving a file with a long name",
            "The editor crashes every time I save a file whose name is longer than 200 characters.",
        )
        .unwrap();
    assert_eq!(nq.prediction.class, ClassLabel::NotQuestion);
}

fn artifacts(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file() && p.file_name().unwrap() != "timings.jsonl")
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), read_bytes(p)))
        .collect()
}

#[test]
fn runs_identical_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    e2e_pipeline(a.path(), 1).run_all().unwrap();
    e2e_pipeline(b.path(), 8).run_all().unwrap();
    let (fa, fb) = (artifacts(a.path()), artifacts(b.path()));
    assert_eq!(fa.iter().map(|f| &f.0).collect::<Vec<_>>(), fb.iter().map(|f| &f.0).collect::<Vec<_>>());
    for (x, y) in fa.iter().zip(&fb) {
        assert!(x.1 == y.1, "{} differs", x.0);
    }
    assert!(fa.iter().any(|f| f.0 == "model.json"));
    assert!(fa.iter().any(|f| f.0 == "report.json"));
}

#[test]
fn rerunning_one_stage_reproduces_its_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let p = e2e_pipeline(dir.path(), 3);
    p.run_all().unwrap();
    let cfg = p.config();
    for (stage, path) in [
        (Stage::Clean, cfg.cleaned_path()),
        (Stage::Filter, cfg.filtered_path()),
        (Stage::Embed, cfg.vectors_path()),
        (Stage::Train, cfg.model_path()),
        (Stage::Eval, cfg.report_path()),
    ] {
        let before = read_bytes(&path);
        let manifest_before = read_bytes(&cfg.manifest_path());
        std::fs::remove_file(&path).unwrap();
        p.run_stage(stage).unwrap();
        assert!(read_bytes(&path) == before, "{stage} output changed");
        assert!(read_bytes(&cfg.manifest_path()) == manifest_before, "{stage} manifest changed");
    }
}

#[test]
fn stage_without_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let p = e2e_pipeline(dir.path(), 1);
    for stage in [Stage::Clean, Stage::Filter, Stage::Embed, Stage::Train, Stage::Eval] {
        assert!(p.run_stage(stage).is_err(), "{stage}");
    }
    assert!(p.report(ReportFormat::Json).is_err());
}

#[test]
fn seed_changes_split() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = common::pipeline(a.path(), &fixture("pipeline/e2e_issues.jsonl"), &[("min_count", "1"), ("seed", "1")]);
    let pb = common::pipeline(b.path(), &fixture("pipeline/e2e_issues.jsonl"), &[("min_count", "1"), ("seed", "2")]);
    pa.run_all().unwrap();
    pb.run_all().unwrap();
    assert_eq!(read_bytes(&pa.config().vectors_path()), read_bytes(&pb.config().vectors_path()));
    assert_ne!(read_bytes(&pa.config().model_path()), read_bytes(&pb.config().model_path()));
}

#[test]
fn report_shows_master_seed() {
    let dir = tempfile::tempdir().unwrap();
    let p = common::pipeline(dir.path(), &fixture("pipeline/e2e_issues.jsonl"), &[("min_count", "1"), ("seed", "7")]);
    p.run_all().unwrap();
    let report = EvalReport::from_json(&String::from_utf8(read_bytes(&p.config().report_path())).unwrap()).unwrap();
    assert_eq!(report.seed, 7);
    let model = TrainedModel::load(&p.config().model_path()).unwrap();
    assert_eq!(model.seed, p.config().stage_seed("train"));
}
