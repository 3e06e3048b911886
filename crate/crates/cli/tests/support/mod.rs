#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dualspace_core::schema::{parse_record_for, serialize_record, ColorName, ColorProportion, HsvSummary, StructuralFeatures};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualspace")).args(args).output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

pub fn files(root: &Path, ext: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for scene in fs::read_dir(root).unwrap() {
        for f in fs::read_dir(scene.unwrap().path()).unwrap() {
            let p = f.unwrap().path();
            if p.extension().is_some_and(|e| e == ext) {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Replaces every record's perceptual fields with placeholders.
pub fn scrub(root: &Path) {
    for (rel, raw) in files(root, "json") {
        let stem = rel.file_stem().unwrap().to_str().unwrap();
        let mut r = parse_record_for(stem, &raw).unwrap();
        r.color_proportion = ColorProportion::only(ColorName::Gray);
        r.average_color = HsvSummary::default();
        r.structural = StructuralFeatures::default();
        fs::write(root.join(rel), serialize_record(&r).unwrap()).unwrap();
    }
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Extraction run with 1 and 8 workers from scrubbed copies of the fixture
/// corpus must reproduce the fixtures byte for byte.
pub fn extraction_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for workers in ["1", "8"] {
        let root = dir.path().join(format!("corpus{workers}"));
        let out = dir.path().join(format!("out{workers}"));
        copy_dir(&fixtures().join("corpus"), &root);
        scrub(&root);
        let o = run(&["--root", s(&root), "--out", s(&out), "--workers", workers, "extract"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push((files(&root, "json"), fs::read(out.join("features.jsonl")).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0].0, files(&fixtures().join("corpus"), "json"));
}
