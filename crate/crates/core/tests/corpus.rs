//! The scenario files under `corpus/` must match the built-in catalog.
//! Set `UPDATE_GOLDEN=1` to regenerate them.

use std::fs;
use std::path::PathBuf;

use nrule_core::scenario::{build_builtin, parse, validate_semantics, CATALOG_NAMES};

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

#[test]
fn builtins_match_corpus_files() {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for name in CATALOG_NAMES {
        let path = corpus_dir().join(format!("{name}.scn"));
        let text = build_builtin(name).unwrap().to_text();
        if update {
            fs::write(&path, &text).unwrap();
        }
        let on_disk = fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("{}: {e}; run with UPDATE_GOLDEN=1", path.display()));
        assert_eq!(on_disk, text, "{name} drifted from its corpus file");
        let parsed = parse(&on_disk).unwrap();
        assert_eq!(parsed, build_builtin(name).unwrap());
        assert!(validate_semantics(&parsed).is_empty(), "{name} has lint warnings");
    }
}

#[test]
fn invalid_files_report_expected_code() {
    let mut seen = 0;
    for entry in fs::read_dir(corpus_dir().join("invalid")).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let expected = text
            .lines()
            .next()
            .and_then(|l| l.strip_prefix("# expect "))
            .expect("first line names the expected code")
            .trim();
        let diags = parse(&text).expect_err("invalid corpus file parsed");
        let codes: Vec<String> = diags.iter().map(|d| d.code.as_str().to_string()).collect();
        assert!(
            codes.iter().any(|c| c == expected),
            "{}: expected {expected}, got {codes:?}",
            path.display()
        );
        seen += 1;
    }
    assert!(seen >= 3);
}
