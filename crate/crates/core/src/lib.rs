//! Local jet pattern texture descriptor and evaluation toolkit.
//!
//! The pipeline: an image is convolved with the six-member
//! derivative-of-Gaussian family up to second order ([`kernels`]), giving a
//! per-pixel jet that is scale- and contrast-normalized ([`jetspace`]).
//! Each jet channel is encoded into LBP-style circular binary codes whose
//! uniform-pattern histograms concatenate into the feature vector
//! ([`encoder`]). Chi-square nearest-neighbor and nearest-subspace
//! classifiers ([`classify`]) plus a reproducible k-fold experiment runner
//! with dataset loaders, synthetic textures, and noise injection
//! ([`harness`]) sit on top.

pub mod classify;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod image;
pub mod jetspace;
pub mod kernels;

pub use classify::{
    chi_square, fit_nsc, load_models, nnc_predict, nsc_predict, save_models, sqrt_preprocess,
    ClassModel, LabeledFeature, SubspaceRule,
};
pub use encoder::{
    code_map, extract_feature, histogram, histogram_counts, ljp_code, sample_neighbor,
    uniform_map, ChannelView, Descriptor, FeatureConfig, FeatureVector, Interpolation,
    LjpCodeMap, Mapping, SamplingGeometry, UniformTable,
};
pub use encoder::cache::CacheRecord;
pub use error::{Error, Result};
pub use harness::{
    add_awgn, experiment_fingerprint, extract_dataset_features, generate_synthetic,
    run_experiment, standardize, stratified_kfold, write_dataset_images, Classifier, Dataset,
    ExperimentConfig, ExperimentReport, ExtractedFeatures, FoldSplit, Protocol, Sample,
    SampleSource, SuiteSplit, SynthSpec, TimingReport,
};
pub use image::GrayImage;
pub use jetspace::{
    compute_jet, compute_jet_unnormalized, contrast_normalize, contrast_normalize_with,
    reflect_jet, rotate_jet, JetVector, WEBER_CONSTANT,
};
pub use kernels::{
    default_support_radius, dtg_kernel_2d, dtg_taps_1d, hermite_eval, DtgKernel, JET_ORDERS,
};
