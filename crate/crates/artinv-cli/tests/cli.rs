//! Black-box tests of the `artinv` binary: exit codes, dependency-order
//! errors, and the evaluate surface.

use std::path::Path;
use std::process::{Command, Output};

fn artinv(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_artinv"))
        .args(args)
        .env("ARTINV_THREADS", "2")
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_and_version() {
    let dir = tempfile::tempdir().unwrap();
    assert!(artinv(&["--help"], dir.path()).status.success());
    assert!(artinv(&["--version"], dir.path()).status.success());
}

#[test]
fn missing_artifact_exits_3_and_names_producer() {
    let dir = tempfile::tempdir().unwrap();
    let out = artinv(
        &["evaluate", "--condition", "seen", "--profile", "mini", "--out", "o"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("synth"), "{}", stderr(&out));
}

#[test]
fn invalid_config_key_exits_2_with_key_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(
        &config,
        serde_json::to_string(&{
            let mut v = serde_json::to_value(artinv::pipeline::ExperimentConfig::mini(1)).unwrap();
            v["train"]["aai"]["learning_rte"] = serde_json::json!(0.1);
            v
        })
        .unwrap(),
    )
    .unwrap();
    let out = artinv(
        &["synth", "--config", "bad.json", "--out", "o"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("learning_rte"), "{}", stderr(&out));
}

#[test]
fn xsc_without_embedding_cache_names_train_embedder() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in [&["synth"][..], &["preprocess"][..]] {
        let out = artinv(
            &[cmd, &["--profile", "mini", "--out", "o"][..]].concat(),
            dir.path(),
        );
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let out = artinv(
        &[
            "train-aai",
            "--scheme",
            "xsc",
            "--profile",
            "mini",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("train-embedder"), "{}", stderr(&out));
}

#[test]
fn embed_flag_must_match_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let out = artinv(
        &[
            "train-aai",
            "--scheme",
            "sc",
            "--embed",
            "xvector",
            "--profile",
            "mini",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    let out = artinv(
        &[
            "train-aai",
            "--scheme",
            "gm",
            "--embed",
            "onehot",
            "--profile",
            "mini",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn mini_reproduce_then_unseen_evaluate_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = artinv(
        &["reproduce", "--profile", "mini", "--seed", "7", "--out", "o"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(stdout.contains("reproduce: config"), "{stdout}");

    let out = artinv(
        &[
            "evaluate",
            "--condition",
            "unseen",
            "--schemes",
            "gm,xsc,usc",
            "--profile",
            "mini",
            "--seed",
            "7",
            "--out",
            "o",
            "--format",
            "csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));

    // Three report rows (gm, xsc, usc) per unseen speaker.
    let per_speaker =
        std::fs::read_to_string(dir.path().join("o/reports/per_speaker_unseen.csv")).unwrap();
    let mini = artinv::pipeline::ExperimentConfig::mini(7);
    let n_unseen = mini.corpus.unseen_speakers as usize;
    let rows: Vec<&str> = per_speaker.lines().skip(1).collect();
    assert_eq!(rows.len(), 3 * n_unseen, "{per_speaker}");
    for scheme in ["gm", "xsc", "usc"] {
        assert_eq!(
            rows.iter().filter(|r| r.starts_with(&format!("{scheme},"))).count(),
            n_unseen
        );
    }

    // Projection output exists and is CSV-shaped.
    let out = artinv(
        &["project-embeddings", "--profile", "mini", "--seed", "7", "--out", "o"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let proj =
        std::fs::read_to_string(dir.path().join("o/projections/embeddings_2d.csv")).unwrap();
    assert!(proj.starts_with("speaker,sentence,x,y\n"));
}
