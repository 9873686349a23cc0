//! Dataset ingestion: class-per-directory trees, Outex-style suite index
//! files, and in-memory synthetic corpora.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::GrayImage;

const IMAGE_EXTENSIONS: [&str; 7] = ["png", "pgm", "pnm", "ppm", "jpg", "jpeg", "bmp"];

/// Where a sample's pixels come from.
#[derive(Debug, Clone)]
pub enum SampleSource {
    File(PathBuf),
    Memory(GrayImage),
}

/// One labeled sample.
#[derive(Debug, Clone)]
pub struct Sample {
    /// Path relative to the dataset root; synthetic samples use a
    /// generated pseudo-path. Keys the feature cache.
    pub rel_path: String,
    pub label: usize,
    pub source: SampleSource,
}

/// Suite-defined train/test partition (index lists into `samples`).
#[derive(Debug, Clone)]
pub struct SuiteSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// A labeled image collection.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub root: Option<PathBuf>,
    pub class_names: Vec<String>,
    pub samples: Vec<Sample>,
    pub suite_split: Option<SuiteSplit>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    /// Per-class sample counts, indexed by label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_count()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count() < 2 {
            return Err(Error::InvalidParameter(format!(
                "dataset '{}' needs at least 2 classes, found {}",
                self.name,
                self.class_count()
            )));
        }
        if let Some(bad) = self.samples.iter().find(|s| s.label >= self.class_count()) {
            return Err(Error::InvalidParameter(format!(
                "sample {} has label {} outside the {} classes",
                bad.rel_path,
                bad.label,
                self.class_count()
            )));
        }
        Ok(())
    }

    pub fn load_image(&self, index: usize) -> Result<GrayImage> {
        let sample = &self.samples[index];
        match &sample.source {
            SampleSource::Memory(img) => Ok(img.clone()),
            SampleSource::File(path) => GrayImage::load(path),
        }
    }

    /// Reads a dataset from disk. A directory holding an Outex-style suite
    /// (an `images/` directory plus a problem directory with `train.txt`
    /// and `test.txt`) is ingested through the index files; anything else
    /// is treated as one directory per class.
    pub fn from_directory(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        if !root.is_dir() {
            return Err(Error::InvalidParameter(format!(
                "{} is not a directory",
                root.display()
            )));
        }
        if let Some(problem_dir) = find_outex_problem_dir(root)? {
            Self::from_outex_suite(root, &problem_dir)
        } else {
            Self::from_class_directories(root)
        }
    }

    /// `root/<class>/<image>` layout; classes and files sorted by name.
    pub fn from_class_directories(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let mut class_dirs: Vec<PathBuf> = std::fs::read_dir(root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        class_dirs.sort();

        let mut class_names = Vec::new();
        let mut samples = Vec::new();
        for dir in &class_dirs {
            let class_name = dir
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| Error::Format(format!("unreadable directory name in {}", root.display())))?
                .to_string();
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| is_image_file(p))
                .collect();
            files.sort();
            if files.is_empty() {
                continue;
            }
            let label = class_names.len();
            class_names.push(class_name.clone());
            for file in files {
                let file_name = file.file_name().and_then(|n| n.to_str()).unwrap_or("?");
                samples.push(Sample {
                    rel_path: format!("{class_name}/{file_name}"),
                    label,
                    source: SampleSource::File(file.clone()),
                });
            }
        }

        let dataset = Dataset {
            name: root
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or("dataset")
                .to_string(),
            root: Some(root.to_path_buf()),
            class_names,
            samples,
            suite_split: None,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    /// Outex-style suite: images under `root/images/`, and a problem
    /// directory whose `train.txt` / `test.txt` list `<file> <label>` pairs
    /// (an optional leading count line is skipped). Both halves are loaded;
    /// the suite split records which indices belong to each.
    pub fn from_outex_suite(root: impl AsRef<Path>, problem_dir: &Path) -> Result<Self> {
        let root = root.as_ref();
        let images_dir = root.join("images");
        let train_entries = parse_index_file(&problem_dir.join("train.txt"))?;
        let test_entries = parse_index_file(&problem_dir.join("test.txt"))?;

        let mut samples = Vec::new();
        let mut train = Vec::new();
        let mut test = Vec::new();
        let mut labels_seen = BTreeMap::new();
        for (entries, indices) in [(&train_entries, &mut train), (&test_entries, &mut test)] {
            for (file, raw_label) in entries.iter() {
                labels_seen.entry(*raw_label).or_insert(0usize);
                indices.push(samples.len());
                samples.push((file.clone(), *raw_label));
            }
        }
        // Remap raw labels (arbitrary integers in the index files) onto
        // contiguous 0..C-1.
        for (i, slot) in labels_seen.values_mut().enumerate() {
            *slot = i;
        }
        let class_names: Vec<String> = labels_seen
            .keys()
            .map(|raw| format!("class_{raw:03}"))
            .collect();
        let samples: Vec<Sample> = samples
            .into_iter()
            .map(|(file, raw_label)| Sample {
                rel_path: format!("images/{file}"),
                label: labels_seen[&raw_label],
                source: SampleSource::File(images_dir.join(&file)),
            })
            .collect();

        let dataset = Dataset {
            name: root
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or("suite")
                .to_string(),
            root: Some(root.to_path_buf()),
            class_names,
            samples,
            suite_split: Some(SuiteSplit { train, test }),
        };
        dataset.validate()?;
        Ok(dataset)
    }
}

fn is_image_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false)
}

/// Looks for a subdirectory containing both `train.txt` and `test.txt`
/// next to an `images/` directory; returns the lexicographically first.
fn find_outex_problem_dir(root: &Path) -> Result<Option<PathBuf>> {
    if !root.join("images").is_dir() {
        return Ok(None);
    }
    let mut candidates: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join("train.txt").is_file() && p.join("test.txt").is_file())
        .collect();
    candidates.sort();
    Ok(candidates.into_iter().next())
}

/// Parses `<filename> <label>` lines; a line holding a single integer (the
/// customary record count header) is skipped.
fn parse_index_file(path: &Path) -> Result<Vec<(String, usize)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::from(e).with_path(path.to_path_buf()))?;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [single] if single.parse::<usize>().is_ok() => continue,
            [file, label] => {
                let label = label.parse::<usize>().map_err(|_| {
                    Error::Format(format!(
                        "{}:{}: label '{}' is not an integer",
                        path.display(),
                        lineno + 1,
                        label
                    ))
                })?;
                entries.push((file.to_string(), label));
            }
            _ => {
                return Err(Error::Format(format!(
                    "{}:{}: expected '<file> <label>', got '{line}'",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    Ok(entries)
}
