//! The checked-in fuzz corpus seeds must parse as valid inputs; a seed that
//! trips its own parser would start every fuzz run in a dead end.

use std::path::PathBuf;

fn corpus_dir(target: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fuzz/corpus")
        .join(target)
}

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = corpus_dir(target);
    let mut out = Vec::new();
    for entry in std::fs::read_dir(&dir).unwrap_or_else(|e| panic!("{}: {e}", dir.display())) {
        let path = entry.unwrap().path();
        out.push((
            path.file_name().unwrap().to_string_lossy().into_owned(),
            std::fs::read(&path).unwrap(),
        ));
    }
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn wave_seeds_parse() {
    for (name, bytes) in seeds("wave_f32") {
        artinv::io::parse_wave_bytes(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn matrix_seeds_parse() {
    for (name, bytes) in seeds("matrix_f32") {
        artinv::io::parse_matrix_bytes(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn checkpoint_seeds_parse() {
    for (name, bytes) in seeds("checkpoint") {
        artinv::nncore::checkpoint::parse_checkpoint_bytes(&bytes)
            .unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn corpus_meta_seeds_parse() {
    for (name, bytes) in seeds("corpus_meta") {
        artinv::corpus::parse_corpus_meta(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn split_seeds_parse() {
    for (name, bytes) in seeds("split_json") {
        artinv::corpus::parse_split(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn config_seeds_parse() {
    for (name, bytes) in seeds("config_json") {
        artinv::pipeline::parse_config(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
