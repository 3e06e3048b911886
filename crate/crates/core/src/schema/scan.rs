use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Image extensions recognised when pairing, in preference order.
pub const IMAGE_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct CorpusEntry {
    pub scene: String,
    pub stem: String,
    pub image_path: PathBuf,
    pub json_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrphanKind {
    MissingJson,
    MissingImage,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Orphan {
    pub scene: String,
    pub stem: String,
    pub kind: OrphanKind,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[error("{}: {message}", path.display())]
pub struct ScanError {
    pub path: PathBuf,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CorpusScan {
    pub pairs: Vec<CorpusEntry>,
    pub orphans: Vec<Orphan>,
    pub errors: Vec<ScanError>,
}

impl CorpusScan {
    pub fn find(&self, scene: &str, stem: &str) -> Option<&CorpusEntry> {
        self.pairs
            .binary_search_by(|e| (e.scene.as_str(), e.stem.as_str()).cmp(&(scene, stem)))
            .ok()
            .map(|i| &self.pairs[i])
    }

    pub fn find_stem(&self, stem: &str) -> Option<&CorpusEntry> {
        self.pairs.iter().find(|e| e.stem == stem)
    }
}

#[derive(Default)]
struct StemFiles {
    images: Vec<PathBuf>,
    json: Option<PathBuf>,
}

/// Enumerates `<root>/<scene>/<stem>.{jpg,jpeg,png,json}` and pairs files by
/// stem. Output is sorted by `(scene, stem)` regardless of directory order;
/// unreadable entries are collected in `errors` without aborting the scan.
pub fn scan_corpus(root: &Path) -> Result<CorpusScan, ScanError> {
    let io_err = |path: &Path, e: std::io::Error| ScanError {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut scan = CorpusScan::default();
    let mut scenes = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| io_err(root, e))? {
        match entry {
            Ok(entry) => {
                let path = entry.path();
                match entry.file_type() {
                    Ok(ft) if ft.is_dir() => scenes.push(path),
                    Ok(_) => {}
                    Err(e) => scan.errors.push(io_err(&path, e)),
                }
            }
            Err(e) => scan.errors.push(io_err(root, e)),
        }
    }
    scenes.sort();

    for scene_dir in scenes {
        let Some(scene) = scene_dir.file_name().and_then(|s| s.to_str()).map(str::to_string) else {
            scan.errors.push(ScanError {
                path: scene_dir.clone(),
                message: "scene directory name is not valid UTF-8".into(),
            });
            continue;
        };
        if scene.starts_with('.') {
            continue;
        }
        let entries = match fs::read_dir(&scene_dir) {
            Ok(e) => e,
            Err(e) => {
                scan.errors.push(io_err(&scene_dir, e));
                continue;
            }
        };
        let mut stems: BTreeMap<String, StemFiles> = BTreeMap::new();
        for entry in entries {
            let entry = match entry {
                Ok(e) => e,
                Err(e) => {
                    scan.errors.push(io_err(&scene_dir, e));
                    continue;
                }
            };
            let path = entry.path();
            if !path.is_file() {
                continue;
            }
            let (Some(stem), Some(ext)) = (
                path.file_stem().and_then(|s| s.to_str()),
                path.extension().and_then(|s| s.to_str()),
            ) else {
                continue;
            };
            let ext = ext.to_ascii_lowercase();
            if ext == "json" {
                stems.entry(stem.to_string()).or_default().json = Some(path.clone());
            } else if IMAGE_EXTENSIONS.contains(&ext.as_str()) {
                stems.entry(stem.to_string()).or_default().images.push(path.clone());
            }
        }
        for (stem, mut files) in stems {
            files.images.sort_by_key(|p| {
                let ext = p
                    .extension()
                    .and_then(|s| s.to_str())
                    .map(|s| s.to_ascii_lowercase())
                    .unwrap_or_default();
                (
                    IMAGE_EXTENSIONS.iter().position(|e| *e == ext).unwrap_or(usize::MAX),
                    p.clone(),
                )
            });
            match (files.images.into_iter().next(), files.json) {
                (Some(image_path), Some(json_path)) => scan.pairs.push(CorpusEntry {
                    scene: scene.clone(),
                    stem,
                    image_path,
                    json_path,
                }),
                (Some(image_path), None) => scan.orphans.push(Orphan {
                    scene: scene.clone(),
                    stem,
                    kind: OrphanKind::MissingJson,
                    path: image_path,
                }),
                (None, Some(json_path)) => scan.orphans.push(Orphan {
                    scene: scene.clone(),
                    stem,
                    kind: OrphanKind::MissingImage,
                    path: json_path,
                }),
                (None, None) => {}
            }
        }
    }
    scan.pairs.sort();
    scan.orphans.sort();
    scan.errors.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(scan)
}
