//! Experiment harness: image standardization, noise injection, stratified
//! k-fold cross-validation, and report assembly.

pub mod dataset;
pub mod report;
pub mod synth;

pub use dataset::{Dataset, Sample, SampleSource, SuiteSplit};
pub use report::{ExperimentReport, TimingReport};
pub use synth::{generate_synthetic, write_dataset_images, SynthSpec};

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{fit_nsc, nnc_predict, nsc_predict, sqrt_preprocess, LabeledFeature, SubspaceRule};
use crate::encoder::cache::{self, CacheRecord};
use crate::encoder::{extract_feature, FeatureConfig, Fnv1a};
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Target intensity statistics of standardized images.
pub const STANDARD_MEAN: f64 = 128.0;
pub const STANDARD_STD: f64 = 20.0;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from the experiment seed and a
/// context path (stage tag, class index, sample index, ...). Every random
/// draw in the harness flows from the one experiment seed through here.
pub(crate) fn split_seed(seed: u64, path: &[u64]) -> u64 {
    let mut acc = splitmix64(seed);
    for &p in path {
        acc = splitmix64(acc ^ splitmix64(p));
    }
    acc
}

/// Caps the global rayon pool at `threads` workers (0 keeps the default).
/// Call once, before any parallel work.
pub fn build_global_pool(threads: usize) -> Result<()> {
    if threads == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

/// Affinely rescales an image to mean 128 and standard deviation 20; a
/// zero-variance image maps to constant 128.
pub fn standardize(image: &GrayImage) -> GrayImage {
    let mean = image.mean();
    let std = image.variance().sqrt();
    if std < 1e-12 {
        return GrayImage::constant(image.width(), image.height(), STANDARD_MEAN);
    }
    let scale = STANDARD_STD / std;
    let pixels = image
        .pixels()
        .iter()
        .map(|&p| (p - mean) * scale + STANDARD_MEAN)
        .collect();
    GrayImage::new(image.width(), image.height(), pixels).expect("standardized pixels are finite")
}

/// Adds white Gaussian noise with variance `Var(image) / 10^(snr_db / 10)`;
/// the same seed always produces the identical image.
pub fn add_awgn(image: &GrayImage, snr_db: f64, seed: u64) -> GrayImage {
    debug_assert!(snr_db.is_finite());
    let noise_std = (image.variance() / 10f64.powf(snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, noise_std).expect("non-negative std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = image
        .pixels()
        .iter()
        .map(|&p| p + normal.sample(&mut rng))
        .collect();
    GrayImage::new(image.width(), image.height(), pixels).expect("noisy pixels are finite")
}

/// One cross-validation fold: indices into the dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits the dataset into `k` folds preserving per-class proportions:
/// each sample lands in exactly one test fold and per-class counts across
/// folds differ by at most one. Deterministic in the seed.
pub fn stratified_kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "k-fold needs k >= 2, got {k}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.class_count()];
    for (i, sample) in dataset.samples.iter().enumerate() {
        by_class[sample.label].push(i);
    }
    for (label, members) in by_class.iter().enumerate() {
        if members.len() < k {
            return Err(Error::ClassTooSmall {
                name: dataset.class_names[label].clone(),
                count: members.len(),
                k,
            });
        }
    }

    let mut test_sets: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (label, members) in by_class.iter().enumerate() {
        let mut shuffled = members.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, &[3, label as u64]));
        // Fisher-Yates; round-robin dealing then keeps per-class counts
        // within one of each other.
        for i in (1..shuffled.len()).rev() {
            let j = rng.gen_range(0..=i);
            shuffled.swap(i, j);
        }
        for (pos, idx) in shuffled.into_iter().enumerate() {
            test_sets[pos % k].push(idx);
        }
    }

    let all: Vec<usize> = (0..dataset.len()).collect();
    Ok(test_sets
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let train = all
                .iter()
                .copied()
                .filter(|i| test.binary_search(i).is_err())
                .collect();
            FoldSplit { train, test }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classifier {
    Nnc,
    Nsc,
}

impl FromStr for Classifier {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nnc" => Ok(Classifier::Nnc),
            "nsc" => Ok(Classifier::Nsc),
            _ => Err(Error::InvalidParameter(format!("unknown classifier '{s}'"))),
        }
    }
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classifier::Nnc => "nnc",
            Classifier::Nsc => "nsc",
        })
    }
}

/// How train/test splits are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Stratified k-fold cross-validation.
    KFold,
    /// The dataset's own train/test index lists (Outex-style suites).
    Suite,
}

impl FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kfold" => Ok(Protocol::KFold),
            "suite" => Ok(Protocol::Suite),
            _ => Err(Error::InvalidParameter(format!("unknown protocol '{s}'"))),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::KFold => "kfold",
            Protocol::Suite => "suite",
        })
    }
}

/// Everything a run needs beyond the dataset itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub feature: FeatureConfig,
    pub classifier: Classifier,
    /// Fold count for the k-fold protocol.
    pub k: usize,
    pub seed: u64,
    /// When set, additive white Gaussian noise at this SNR (dB) is injected
    /// after standardization; the noisy image is not re-standardized.
    pub snr_db: Option<f64>,
    /// Subspace dimension rule for the nearest-subspace classifier.
    pub nsc_dim: SubspaceRule,
    pub protocol: Protocol,
    /// Worker thread cap; 0 selects the default pool.
    pub threads: usize,
    /// Feature cache directory (disk datasets only).
    pub cache_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            feature: FeatureConfig::default(),
            classifier: Classifier::Nsc,
            k: 10,
            seed: 0,
            snr_db: None,
            nsc_dim: SubspaceRule::default(),
            protocol: Protocol::KFold,
            threads: 0,
            cache_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.feature.validate()?;
        self.nsc_dim.validate()?;
        if self.k < 2 {
            return Err(Error::InvalidParameter(format!(
                "k-fold needs k >= 2, got {}",
                self.k
            )));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "snr_db must be finite, got {snr}"
                )));
            }
        }
        Ok(())
    }
}

/// Cache key: the feature fingerprint extended with everything else that
/// changes extracted values (noise level and seed) plus the dataset
/// identity, so unrelated runs never share records.
pub fn experiment_fingerprint(config: &ExperimentConfig, dataset: &Dataset) -> u64 {
    let mut h = Fnv1a::new();
    h.write(b"experiment-v1");
    h.write(&config.feature.fingerprint().to_le_bytes());
    if let Some(snr) = config.snr_db {
        h.write(b"awgn");
        h.write(&snr.to_bits().to_le_bytes());
        h.write(&config.seed.to_le_bytes());
    }
    match &dataset.root {
        Some(root) => h.write(root.to_string_lossy().as_bytes()),
        None => h.write(dataset.name.as_bytes()),
    }
    h.finish()
}

/// Features extracted for a whole dataset, in sample order.
#[derive(Debug, Clone)]
pub struct ExtractedFeatures {
    pub records: Vec<CacheRecord>,
    /// Mean seconds per freshly extracted image; 0 when everything came
    /// from the cache.
    pub mean_extract_seconds: f64,
    /// How many images were extracted rather than served from the cache.
    pub fresh_count: usize,
}

/// Standardizes, optionally injects noise, and featurizes every sample,
/// reusing the on-disk cache when one is configured (disk-backed datasets
/// only; in-memory datasets always extract since their identity is not
/// stable across specs).
pub fn extract_dataset_features(
    dataset: &Dataset,
    config: &ExperimentConfig,
) -> Result<ExtractedFeatures> {
    config.validate()?;
    dataset.validate()?;
    let fingerprint = experiment_fingerprint(config, dataset);
    let cache_path = match (&config.cache_dir, &dataset.root) {
        (Some(dir), Some(_)) => Some(dir.join(format!("features-{fingerprint:016x}.bin"))),
        _ => None,
    };
    let cached: HashMap<String, CacheRecord> = match &cache_path {
        Some(path) => cache::load_matching(path, fingerprint)?,
        None => HashMap::new(),
    };

    let extracted: Vec<(Vec<f64>, Option<f64>)> = dataset
        .samples
        .par_iter()
        .enumerate()
        .map(|(idx, sample)| {
            if let Some(rec) = cached.get(&sample.rel_path) {
                return Ok((rec.values.clone(), None));
            }
            let attach = |e: Error| e.with_path(sample.rel_path.clone());
            let image = dataset.load_image(idx)?;
            let image = standardize(&image);
            let image = match config.snr_db {
                Some(snr) => add_awgn(&image, snr, split_seed(config.seed, &[4, idx as u64])),
                None => image,
            };
            let started = Instant::now();
            let feature = extract_feature(&image, &config.feature).map_err(attach)?;
            Ok((feature.values, Some(started.elapsed().as_secs_f64())))
        })
        .collect::<Result<_>>()?;

    let records: Vec<CacheRecord> = dataset
        .samples
        .iter()
        .zip(&extracted)
        .map(|(sample, (values, _))| CacheRecord {
            rel_path: sample.rel_path.clone(),
            label: sample.label as u32,
            fingerprint,
            values: values.clone(),
        })
        .collect();

    let fresh: Vec<f64> = extracted.iter().filter_map(|(_, s)| *s).collect();
    if let Some(path) = &cache_path {
        if !fresh.is_empty() {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            cache::write_cache(path, &records)?;
        }
    }

    Ok(ExtractedFeatures {
        records,
        mean_extract_seconds: if fresh.is_empty() {
            0.0
        } else {
            fresh.iter().sum::<f64>() / fresh.len() as f64
        },
        fresh_count: fresh.len(),
    })
}

/// Runs the full pipeline: standardize, optionally inject noise, extract
/// features (cached on disk when configured), evaluate the chosen
/// classifier under the chosen protocol, and assemble the report.
pub fn run_experiment(dataset: &Dataset, config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    dataset.validate()?;
    if config.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(|| run_experiment_inner(dataset, config))
    } else {
        run_experiment_inner(dataset, config)
    }
}

fn run_experiment_inner(
    dataset: &Dataset,
    config: &ExperimentConfig,
) -> Result<ExperimentReport> {
    let extraction = extract_dataset_features(dataset, config)?;
    let features: Vec<&Vec<f64>> = extraction.records.iter().map(|r| &r.values).collect();
    let labels: Vec<usize> = dataset.samples.iter().map(|s| s.label).collect();

    let (folds, protocol_name) = match config.protocol {
        Protocol::KFold => (
            stratified_kfold(dataset, config.k, config.seed)?,
            format!("stratified-{}-fold", config.k),
        ),
        Protocol::Suite => {
            let split = dataset.suite_split.as_ref().ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "dataset '{}' carries no suite-defined train/test split",
                    dataset.name
                ))
            })?;
            if split.train.is_empty() || split.test.is_empty() {
                return Err(Error::InvalidParameter(
                    "suite split has an empty train or test list".into(),
                ));
            }
            (
                vec![FoldSplit {
                    train: split.train.clone(),
                    test: split.test.clone(),
                }],
                "suite-split".to_string(),
            )
        }
    };

    // NSC consumes square-rooted histograms; compute them once.
    let nsc_features: Option<Vec<Vec<f64>>> = match config.classifier {
        Classifier::Nsc => Some(
            features
                .iter()
                .map(|f| sqrt_preprocess(f))
                .collect::<Result<_>>()?,
        ),
        Classifier::Nnc => None,
    };

    let class_count = dataset.class_count();
    let mut confusion = vec![vec![0u64; class_count]; class_count];
    let mut per_fold_accuracy = Vec::with_capacity(folds.len());
    let mut match_seconds = 0.0;
    let mut query_count = 0usize;

    for fold in &folds {
        let predictions: Vec<(usize, usize, f64)> = match config.classifier {
            Classifier::Nnc => {
                let train: Vec<LabeledFeature> = fold
                    .train
                    .iter()
                    .map(|&i| LabeledFeature {
                        values: features[i].clone(),
                        label: labels[i],
                    })
                    .collect();
                fold.test
                    .par_iter()
                    .map(|&i| {
                        let started = Instant::now();
                        let pred = nnc_predict(&train, features[i])?;
                        Ok((labels[i], pred, started.elapsed().as_secs_f64()))
                    })
                    .collect::<Result<_>>()?
            }
            Classifier::Nsc => {
                let sqrt_feats = nsc_features.as_ref().expect("precomputed for nsc");
                let train: Vec<LabeledFeature> = fold
                    .train
                    .iter()
                    .map(|&i| LabeledFeature {
                        values: sqrt_feats[i].clone(),
                        label: labels[i],
                    })
                    .collect();
                let models = fit_nsc(&train, config.nsc_dim)?;
                fold.test
                    .par_iter()
                    .map(|&i| {
                        let started = Instant::now();
                        let pred = nsc_predict(&models, &sqrt_feats[i])?;
                        Ok((labels[i], pred, started.elapsed().as_secs_f64()))
                    })
                    .collect::<Result<_>>()?
            }
        };

        let correct = predictions.iter().filter(|(t, p, _)| t == p).count();
        per_fold_accuracy.push(correct as f64 / predictions.len() as f64);
        for (truth, pred, seconds) in predictions {
            confusion[truth][pred] += 1;
            match_seconds += seconds;
            query_count += 1;
        }
    }

    let timing = TimingReport {
        feature_extraction_s_per_image: extraction.mean_extract_seconds,
        matching_s_per_query: if query_count == 0 {
            0.0
        } else {
            match_seconds / query_count as f64
        },
    };

    Ok(ExperimentReport {
        config: config.clone(),
        protocol: protocol_name,
        class_names: dataset.class_names.clone(),
        sample_count: dataset.len(),
        mean_accuracy: report::mean(&per_fold_accuracy),
        std_accuracy: report::sample_std(&per_fold_accuracy),
        per_fold_accuracy,
        confusion_matrix: confusion,
        timing: Some(timing),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy_test_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut state = seed;
        GrayImage::from_fn(w, h, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) % 4096) as f64 / 16.0
        })
    }

    #[test]
    fn standardize_hits_target_statistics() {
        let img = noisy_test_image(64, 64, 1);
        let out = standardize(&img);
        assert!((out.mean() - 128.0).abs() <= 1e-6);
        assert!((out.variance().sqrt() - 20.0).abs() <= 1e-6);
        // Idempotent on an already-standardized image.
        let twice = standardize(&out);
        for (a, b) in out.pixels().iter().zip(twice.pixels()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn standardize_flat_image_maps_to_constant_128() {
        let img = GrayImage::constant(16, 16, 77.0);
        let out = standardize(&img);
        assert!(out.pixels().iter().all(|&p| p == 128.0));
    }

    #[test]
    fn awgn_high_snr_is_negligible() {
        let img = standardize(&noisy_test_image(64, 64, 2));
        let noisy = add_awgn(&img, 100.0, 7);
        let noise_var = img
            .pixels()
            .iter()
            .zip(noisy.pixels())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / img.pixels().len() as f64;
        assert!(noise_var.sqrt() <= 1e-3 * img.variance().sqrt());
    }

    #[test]
    fn awgn_zero_db_matches_signal_variance() {
        let img = standardize(&noisy_test_image(256, 256, 3));
        let noisy = add_awgn(&img, 0.0, 11);
        let noise_var = img
            .pixels()
            .iter()
            .zip(noisy.pixels())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / img.pixels().len() as f64;
        assert!((noise_var / img.variance() - 1.0).abs() <= 0.05);
    }

    #[test]
    fn awgn_is_deterministic_per_seed() {
        let img = standardize(&noisy_test_image(32, 32, 4));
        let a = add_awgn(&img, 10.0, 99);
        let b = add_awgn(&img, 10.0, 99);
        assert_eq!(a.pixels(), b.pixels());
        let c = add_awgn(&img, 10.0, 100);
        assert_ne!(a.pixels(), c.pixels());
    }

    fn balanced_dataset(classes: usize, per_class: usize) -> Dataset {
        let spec = SynthSpec {
            classes,
            samples_per_class: per_class,
            size: 24,
            rotations_deg: vec![0.0],
            brightness_jitter: 0.0,
            seed: 5,
        };
        generate_synthetic(&spec).unwrap()
    }

    #[test]
    fn kfold_counts_and_coverage() {
        let ds = balanced_dataset(10, 20);
        let folds = stratified_kfold(&ds, 10, 42).unwrap();
        assert_eq!(folds.len(), 10);
        let mut seen = vec![0usize; ds.len()];
        for fold in &folds {
            assert_eq!(fold.test.len(), 20);
            // Exactly two test samples per class per fold.
            let mut per_class = vec![0usize; 10];
            for &i in &fold.test {
                per_class[ds.samples[i].label] += 1;
                seen[i] += 1;
            }
            assert!(per_class.iter().all(|&c| c == 2));
            assert_eq!(fold.train.len() + fold.test.len(), ds.len());
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn kfold_is_seed_deterministic() {
        let ds = balanced_dataset(4, 8);
        let a = stratified_kfold(&ds, 4, 7).unwrap();
        let b = stratified_kfold(&ds, 4, 7).unwrap();
        assert_eq!(a, b);
        let c = stratified_kfold(&ds, 4, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn kfold_rejects_small_classes_by_name() {
        let ds = balanced_dataset(3, 4);
        let err = stratified_kfold(&ds, 5, 1).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("00_grating"), "got: {msg}");
        assert!(stratified_kfold(&ds, 1, 1).is_err());
    }

    #[test]
    fn self_matching_suite_split_scores_perfectly() {
        let mut ds = balanced_dataset(3, 4);
        let all: Vec<usize> = (0..ds.len()).collect();
        ds.suite_split = Some(SuiteSplit {
            train: all.clone(),
            test: all,
        });
        let config = ExperimentConfig {
            classifier: Classifier::Nnc,
            protocol: Protocol::Suite,
            ..ExperimentConfig::default()
        };
        let report = run_experiment(&ds, &config).unwrap();
        assert_eq!(report.mean_accuracy, 1.0);
        assert_eq!(report.protocol, "suite-split");
        // Row sums equal per-class test counts.
        for (row, count) in report.confusion_matrix.iter().zip(ds.class_counts()) {
            assert_eq!(row.iter().sum::<u64>() as usize, count);
        }
    }

    #[test]
    fn report_summary_is_consistent_and_deterministic() {
        let ds = balanced_dataset(3, 6);
        let config = ExperimentConfig {
            classifier: Classifier::Nnc,
            k: 3,
            seed: 11,
            ..ExperimentConfig::default()
        };
        let mut a = run_experiment(&ds, &config).unwrap();
        let mut b = run_experiment(&ds, &config).unwrap();
        assert_eq!(a.mean_accuracy, report::mean(&a.per_fold_accuracy));
        assert_eq!(a.std_accuracy, report::sample_std(&a.per_fold_accuracy));
        a.timing = None;
        b.timing = None;
        assert_eq!(a, b);
        assert_eq!(a.per_fold_accuracy.len(), 3);
    }

    #[test]
    fn experiment_rejects_bad_config() {
        let ds = balanced_dataset(2, 4);
        let mut config = ExperimentConfig::default();
        config.k = 1;
        assert!(run_experiment(&ds, &config).is_err());
        let mut config = ExperimentConfig::default();
        config.snr_db = Some(f64::NAN);
        assert!(run_experiment(&ds, &config).is_err());
        let config = ExperimentConfig {
            protocol: Protocol::Suite,
            ..ExperimentConfig::default()
        };
        assert!(run_experiment(&ds, &config).is_err());
    }

    #[test]
    fn split_seed_separates_contexts() {
        let a = split_seed(1, &[1, 2, 3]);
        let b = split_seed(1, &[1, 2, 4]);
        let c = split_seed(2, &[1, 2, 3]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, split_seed(1, &[1, 2, 3]));
    }
}
