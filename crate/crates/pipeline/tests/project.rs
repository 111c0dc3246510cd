use std::fs;
use std::path::PathBuf;

use deidpose::project::{create_project, load_project, NewVideo, Settings, Step, TargetMode};
use deidpose::PipelineError;

fn video(stem: &str) -> NewVideo {
    NewVideo {
        stem: stem.into(),
        source: Some(format!("/in/{stem}.mp4").into()),
        pose_dir: format!("/in/poses/{stem}").into(),
        frame_dir: None,
    }
}

#[test]
fn create_then_load_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let settings = Settings {
        targets: TargetMode::All,
        presence_threshold: 0.75,
        target_height: Some(720),
        ..Default::default()
    };
    let mut cfg = create_project(tmp.path(), "study", vec![video("a"), video("b")], &[], settings).unwrap();
    cfg.mark("a", Step::Track);
    cfg.save().unwrap();
    let loaded = load_project(&tmp.path().join("study")).unwrap();
    assert_eq!(loaded, cfg);
    assert_eq!(loaded.videos[0].frame_dir, tmp.path().join("study/videos/a/frames"));
    assert!(loaded.completed("a", Step::Track));
}

#[test]
fn existing_project_is_a_conflict() {
    let tmp = tempfile::tempdir().unwrap();
    create_project(tmp.path(), "study", vec![video("a")], &[], Settings::default()).unwrap();
    let err = create_project(tmp.path(), "study", vec![video("b")], &[], Settings::default()).unwrap_err();
    assert!(matches!(err, PipelineError::Conflict { .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn missing_config_is_not_found() {
    let tmp = tempfile::tempdir().unwrap();
    let err = load_project(&tmp.path().join("nope/project.toml")).unwrap_err();
    assert!(matches!(err, PipelineError::NotFound(_)));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn malformed_config_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("project.toml");
    fs::write(&path, "name = 3\n").unwrap();
    assert!(matches!(load_project(&path).unwrap_err(), PipelineError::Config { .. }));
}

#[test]
fn rejects_bad_names_and_settings() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_name = create_project(tmp.path(), "a/b", vec![video("a")], &[], Settings::default());
    assert!(matches!(bad_name, Err(PipelineError::Input(_))));
    let dup = create_project(tmp.path(), "p", vec![video("a"), video("a")], &[], Settings::default());
    assert!(matches!(dup, Err(PipelineError::Input(_))));
    let none = create_project(tmp.path(), "p", vec![], &[], Settings::default());
    assert!(matches!(none, Err(PipelineError::Input(_))));
    let settings = Settings {
        presence_threshold: 1.5,
        ..Default::default()
    };
    assert!(matches!(create_project(tmp.path(), "p", vec![video("a")], &[], settings), Err(PipelineError::Input(_))));
    assert!(!tmp.path().join("p").exists());
}

#[test]
fn sidecars_link_by_stem() {
    let tmp = tempfile::tempdir().unwrap();
    let sidecars: Vec<PathBuf> = vec!["/meta/a.xlsx".into(), "/meta/c.csv".into()];
    let cfg = create_project(tmp.path(), "study", vec![video("a"), video("b")], &sidecars, Settings::default()).unwrap();
    assert_eq!(cfg.video("a").unwrap().metadata, Some("/meta/a.xlsx".into()));
    assert_eq!(cfg.video("b").unwrap().metadata, None);
    let log = fs::read_to_string(cfg.log_path()).unwrap();
    assert!(log.contains("[a] metadata linked: /meta/a.xlsx"));
    assert!(log.contains("[b] no metadata"));
}

#[test]
fn log_only_grows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = create_project(tmp.path(), "study", vec![video("a")], &[], Settings::default()).unwrap();
    let before = fs::read_to_string(cfg.log_path()).unwrap();
    cfg.log(Some("a"), "first").unwrap();
    cfg.log(None, "second").unwrap();
    let after = fs::read_to_string(cfg.log_path()).unwrap();
    assert!(after.starts_with(&before));
    let tail: Vec<&str> = after[before.len()..].lines().collect();
    assert_eq!(tail.len(), 2);
    assert!(tail[0].ends_with("[a] first"));
    assert!(tail[1].ends_with(" second"));
    // RFC 3339 timestamp with millisecond precision in UTC.
    let ts = tail[0].split(' ').next().unwrap();
    assert!(chrono::DateTime::parse_from_rfc3339(ts).is_ok() && ts.ends_with('Z'), "{ts}");
}

#[test]
fn invalidation_clears_later_steps() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = create_project(tmp.path(), "study", vec![video("a")], &[], Settings::default()).unwrap();
    for s in Step::PIPELINE {
        cfg.mark("a", s);
    }
    cfg.mark("a", Step::QualityCheck);
    cfg.invalidate_from("a", Step::Interpolate);
    let left: Vec<Step> = cfg.ledger["a"].completed.iter().copied().collect();
    assert_eq!(left, [Step::Standardize, Step::LoadPoses, Step::Track]);
}

#[test]
fn step_names_parse() {
    for s in Step::PIPELINE {
        assert_eq!(s.name().parse::<Step>().unwrap(), s);
    }
    assert_eq!("identify-patient".parse::<Step>().unwrap(), Step::IdentifyPatient);
    assert!("blur".parse::<Step>().is_err());
}
