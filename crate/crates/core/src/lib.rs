//! Few-shot classification by distribution calibration.
//!
//! Novel-class features are power-transformed toward Gaussianity, each
//! support feature borrows mean and covariance from its nearest base classes,
//! and a linear classifier is trained on features sampled from the resulting
//! Gaussians.

pub mod calibration;
pub mod classifiers;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod projection;
pub mod rng;
pub mod sampling;
pub mod statistics;
pub mod synthetic;
pub mod transform;

pub use calibration::{
    calibrate, calibrate_support_set, nearest_base_classes, CalibratedDistribution, CalibrationParams,
};
pub use classifiers::{
    max_likelihood_classify, predict, train_logistic, train_svm, LinearModel, MaxLikelihoodClassifier, MlAggregate,
    ModelKind, OptimizerConfig, TrainSet,
};
pub use dataset::{load_dataset, save_dataset, DataFormat, Dataset, FeatureVector, SplitManifest};
pub use error::{Error, Result};
pub use harness::{
    sample_episode, Baseline, Benchmark, ClassifierKind, Episode, EpisodeSpec, EvalReport, PipelineConfig, SweepParam,
    SweepPoint,
};
pub use linalg::Matrix;
pub use projection::{project_2d, Pca};
pub use sampling::{cholesky_psd, sample_features, Cholesky, SamplerConfig};
pub use statistics::{
    build_base_stats, build_base_stats_with, class_covariance, class_mean, BaseStatsTable, ClassStatistics,
};
pub use synthetic::{generate_synthetic, GroundTruth, SyntheticSpec};
pub use transform::{mean_marginal_skewness, sample_skewness, tukey_transform, TukeyParams};
