//! Episodic N-way-K-shot evaluation of the calibration pipeline.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rand::seq::index::sample;
use rand::Rng as _;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate_support_set, retrieve_nearest_class_features, CalibratedDistribution, CalibrationParams,
};
use crate::classifiers::{
    predict, train_logistic, train_svm, MaxLikelihoodClassifier, MlAggregate, OptimizerConfig, TrainSet,
};
use crate::dataset::{Dataset, SplitManifest};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, tag};
use crate::sampling::{sample_features, SamplerConfig};
use crate::statistics::{build_base_stats, build_base_stats_with, BaseStatsTable};
use crate::transform::{tukey_transform_in_place, TukeyParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_queries: usize,
    pub num_episodes: usize,
    pub seed: u64,
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        EpisodeSpec {
            n_way: 5,
            k_shot: 1,
            q_queries: 15,
            num_episodes: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    #[default]
    Logistic,
    Svm,
    MaxLikelihood,
    /// Uniform random guessing; a sanity floor.
    Chance,
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" | "lr" => Ok(ClassifierKind::Logistic),
            "svm" => Ok(ClassifierKind::Svm),
            "max_likelihood" | "ml" => Ok(ClassifierKind::MaxLikelihood),
            "chance" => Ok(ClassifierKind::Chance),
            other => Err(Error::InvalidParams(format!(
                "unknown classifier '{other}' (logistic, svm, max_likelihood, chance)"
            ))),
        }
    }
}

/// Training-set augmentation used instead of calibrated sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Baseline {
    #[default]
    None,
    /// Add `m` real features of the nearest base class per support feature.
    NearestClass(usize),
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Baseline::None => f.write_str("none"),
            Baseline::NearestClass(m) => write!(f, "nearest:{m}"),
        }
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "none" {
            return Ok(Baseline::None);
        }
        s.strip_prefix("nearest:")
            .and_then(|m| m.parse().ok())
            .filter(|&m: &usize| m > 0)
            .map(Baseline::NearestClass)
            .ok_or_else(|| Error::InvalidParams(format!("bad baseline '{s}', expected none or nearest:<m>")))
    }
}

impl TryFrom<String> for Baseline {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Baseline> for String {
    fn from(b: Baseline) -> String {
        b.to_string()
    }
}

/// Everything that determines how one task is solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub tukey: TukeyParams,
    pub calib: CalibrationParams,
    pub sampler: SamplerConfig,
    pub optimizer: OptimizerConfig,
    pub classifier: ClassifierKind,
    pub ml_aggregate: MlAggregate,
    pub use_tukey: bool,
    pub use_generation: bool,
    pub baseline: Baseline,
    /// Transform base features before computing their statistics.
    pub tukey_base: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tukey: TukeyParams::default(),
            calib: CalibrationParams::default(),
            sampler: SamplerConfig::default(),
            optimizer: OptimizerConfig::default(),
            classifier: ClassifierKind::default(),
            ml_aggregate: MlAggregate::default(),
            use_tukey: true,
            use_generation: true,
            baseline: Baseline::None,
            tukey_base: true,
        }
    }
}

impl PipelineConfig {
    /// Transform applied to task features, if any.
    pub fn task_transform(&self) -> Option<&TukeyParams> {
        self.use_tukey.then_some(&self.tukey)
    }

    /// Transform applied to base features before statistics, if any.
    pub fn base_transform(&self) -> Option<&TukeyParams> {
        (self.use_tukey && self.tukey_base).then_some(&self.tukey)
    }

    pub fn validate(&self) -> Result<()> {
        if self.use_tukey {
            self.tukey.validate()?;
        }
        if self.classifier != ClassifierKind::MaxLikelihood {
            self.optimizer.validate()?;
        }
        Ok(())
    }
}

/// One sampled task. Features are untransformed; labels are task-local.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub index: u64,
    /// `classes[label]` is the dataset class id behind task label `label`.
    pub classes: Vec<u32>,
    pub support: Vec<(Vec<f64>, usize)>,
    pub query: Vec<(Vec<f64>, usize)>,
}

/// Samples episode `index`: `n_way` distinct novel classes, then disjoint
/// support and query draws within each. Depends only on `(spec.seed, index)`.
pub fn sample_episode(ds: &Dataset, split: &SplitManifest, spec: &EpisodeSpec, index: u64) -> Result<Episode> {
    let novel: Vec<u32> = split.novel_classes.iter().copied().collect();
    if spec.n_way == 0 || spec.k_shot == 0 || spec.q_queries == 0 {
        return Err(Error::Unsatisfiable(
            "n_way, k_shot and q_queries must be positive".into(),
        ));
    }
    if spec.n_way > novel.len() {
        return Err(Error::Unsatisfiable(format!(
            "{}-way tasks need {} novel classes, split has {}",
            spec.n_way,
            spec.n_way,
            novel.len()
        )));
    }
    let per_class = spec.k_shot + spec.q_queries;
    for &c in &novel {
        let have = ds.class_count(c);
        if have < per_class {
            return Err(Error::Unsatisfiable(format!(
                "novel class {c} has {have} samples, each episode needs {per_class}"
            )));
        }
    }
    let mut rng = stream(spec.seed, &[tag::EPISODE, index]);
    let chosen: Vec<u32> = sample(&mut rng, novel.len(), spec.n_way)
        .into_iter()
        .map(|i| novel[i])
        .collect();
    let mut support = Vec::with_capacity(spec.n_way * spec.k_shot);
    let mut query = Vec::with_capacity(spec.n_way * spec.q_queries);
    for (label, &class_id) in chosen.iter().enumerate() {
        let idx = ds.class_indices(class_id)?;
        let picks = sample(&mut rng, idx.len(), per_class);
        for (j, p) in picks.into_iter().enumerate() {
            let x = ds.records()[idx[p]].to_f64();
            if j < spec.k_shot {
                support.push((x, label));
            } else {
                query.push((x, label));
            }
        }
    }
    Ok(Episode {
        index,
        classes: chosen,
        support,
        query,
    })
}

/// Task features after every pre-classifier stage of the pipeline.
#[derive(Debug, Clone)]
pub struct PreparedEpisode {
    pub support: Vec<(Vec<f64>, usize)>,
    pub query: Vec<(Vec<f64>, usize)>,
    /// Generated or retrieved training features.
    pub augmented: Vec<(Vec<f64>, usize)>,
    pub distributions: Option<BTreeMap<usize, Vec<CalibratedDistribution>>>,
    pub repairs: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOutcome {
    pub accuracy: f64,
    pub repaired_distributions: usize,
    pub max_jitter: f64,
}

enum StatsSource {
    Fixed(Arc<BaseStatsTable>),
    Derived {
        raw: Arc<BaseStatsTable>,
        transformed: Mutex<HashMap<(u64, u64), Arc<BaseStatsTable>>>,
    },
}

/// A dataset, its split and the base statistics the pipeline draws from.
pub struct Benchmark<'a> {
    dataset: &'a Dataset,
    split: &'a SplitManifest,
    stats: StatsSource,
}

impl<'a> Benchmark<'a> {
    /// Base statistics are computed from `dataset`, per transform when
    /// `tukey_base` asks for it.
    pub fn new(dataset: &'a Dataset, split: &'a SplitManifest) -> Result<Self> {
        split.validate()?;
        split.check_against(dataset)?;
        let raw = Arc::new(build_base_stats(dataset, split)?);
        Ok(Benchmark {
            dataset,
            split,
            stats: StatsSource::Derived {
                raw,
                transformed: Mutex::new(HashMap::new()),
            },
        })
    }

    /// Uses `stats` for every configuration, whatever its transform settings.
    pub fn with_stats(dataset: &'a Dataset, split: &'a SplitManifest, stats: BaseStatsTable) -> Result<Self> {
        split.validate()?;
        split.check_against(dataset)?;
        if stats.dim() != dataset.dim() {
            return Err(Error::Dimension {
                expected: dataset.dim(),
                found: stats.dim(),
            });
        }
        Ok(Benchmark {
            dataset,
            split,
            stats: StatsSource::Fixed(Arc::new(stats)),
        })
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    pub fn split(&self) -> &SplitManifest {
        self.split
    }

    /// The statistics table `cfg` calibrates against.
    pub fn stats_for(&self, cfg: &PipelineConfig) -> Result<Arc<BaseStatsTable>> {
        match &self.stats {
            StatsSource::Fixed(t) => Ok(Arc::clone(t)),
            StatsSource::Derived { raw, transformed } => match cfg.base_transform() {
                None => Ok(Arc::clone(raw)),
                Some(p) if p.lambda == 1.0 => Ok(Arc::clone(raw)),
                Some(p) => {
                    let key = (p.lambda.to_bits(), p.log_epsilon.to_bits());
                    if let Some(t) = transformed.lock().expect("stats cache").get(&key) {
                        return Ok(Arc::clone(t));
                    }
                    let t = Arc::new(build_base_stats_with(self.dataset, self.split, Some(p))?);
                    transformed.lock().expect("stats cache").insert(key, Arc::clone(&t));
                    Ok(t)
                }
            },
        }
    }

    pub fn episode(&self, spec: &EpisodeSpec, index: u64) -> Result<Episode> {
        sample_episode(self.dataset, self.split, spec, index)
    }

    /// Transforms, calibrates and augments one episode without training.
    pub fn prepare(&self, ep: &Episode, cfg: &PipelineConfig) -> Result<PreparedEpisode> {
        self.prepare_inner(ep, cfg).map_err(|e| e.in_episode(ep.index))
    }

    fn prepare_inner(&self, ep: &Episode, cfg: &PipelineConfig) -> Result<PreparedEpisode> {
        cfg.validate()?;
        let transform = |set: &[(Vec<f64>, usize)]| -> Result<Vec<(Vec<f64>, usize)>> {
            let mut out = set.to_vec();
            if let Some(p) = cfg.task_transform() {
                for (x, _) in out.iter_mut() {
                    tukey_transform_in_place(x, p)?;
                }
            }
            Ok(out)
        };
        let support = transform(&ep.support)?;
        let query = transform(&ep.query)?;
        let stats = self.stats_for(cfg)?;
        let mut prepared = PreparedEpisode {
            support,
            query,
            augmented: Vec::new(),
            distributions: None,
            repairs: Vec::new(),
        };

        let needs_dists = cfg.classifier == ClassifierKind::MaxLikelihood
            || (cfg.baseline == Baseline::None && cfg.use_generation && cfg.sampler.total_per_class > 0);
        if let Baseline::NearestClass(m) = cfg.baseline {
            if cfg.classifier != ClassifierKind::MaxLikelihood {
                for (i, (x, y)) in prepared.support.iter().enumerate() {
                    let mut rng = stream(cfg.sampler.seed, &[tag::RETRIEVE, ep.index, i as u64]);
                    for mut f in retrieve_nearest_class_features(x, self.dataset, &stats, m, &mut rng)? {
                        if let Some(p) = cfg.task_transform() {
                            tukey_transform_in_place(&mut f, p)?;
                        }
                        prepared.augmented.push((f, *y));
                    }
                }
            }
        }
        if needs_dists {
            let dists = calibrate_support_set(&prepared.support, &stats, &cfg.calib)?;
            if cfg.classifier != ClassifierKind::MaxLikelihood {
                let sampler = SamplerConfig {
                    seed: derive_seed(cfg.sampler.seed, &[ep.index]),
                    ..cfg.sampler
                };
                let generated = sample_features(&dists, &sampler)?;
                prepared.augmented = generated.samples;
                prepared.repairs = generated.repairs;
            }
            prepared.distributions = Some(dists);
        }
        Ok(prepared)
    }

    /// Runs the full pipeline on one episode and returns its query accuracy.
    pub fn run_episode(&self, ep: &Episode, cfg: &PipelineConfig) -> Result<EpisodeOutcome> {
        self.run_inner(ep, cfg).map_err(|e| match e {
            e @ Error::Episode { .. } => e,
            e => e.in_episode(ep.index),
        })
    }

    fn run_inner(&self, ep: &Episode, cfg: &PipelineConfig) -> Result<EpisodeOutcome> {
        let prepared = self.prepare(ep, cfg)?;
        let n_way = ep.classes.len();
        let dim = self.dataset.dim();
        let mut repairs = prepared.repairs.clone();
        let predictions: Vec<usize> = match cfg.classifier {
            ClassifierKind::MaxLikelihood => {
                let dists = prepared.distributions.as_ref().expect("calibrated for max likelihood");
                let ml = MaxLikelihoodClassifier::new(dists, cfg.sampler.jitter, cfg.ml_aggregate)?;
                if ml.max_jitter() > 0.0 {
                    repairs.push((0, 0, ml.max_jitter()));
                }
                prepared
                    .query
                    .iter()
                    .map(|(x, _)| ml.classify(x))
                    .collect::<Result<_>>()?
            }
            ClassifierKind::Chance => {
                let mut rng = stream(cfg.optimizer.seed, &[tag::CHANCE, ep.index]);
                prepared.query.iter().map(|_| rng.random_range(0..n_way)).collect()
            }
            kind => {
                let mut ts = TrainSet::new(dim, ep.classes.clone());
                ts.extend(&prepared.support)?;
                ts.extend(&prepared.augmented)?;
                let optimizer = OptimizerConfig {
                    seed: derive_seed(cfg.optimizer.seed, &[ep.index]),
                    ..cfg.optimizer
                };
                let model = if kind == ClassifierKind::Svm {
                    train_svm(&ts, &optimizer)?
                } else {
                    train_logistic(&ts, &optimizer)?
                };
                prepared
                    .query
                    .iter()
                    .map(|(x, _)| predict(&model, x))
                    .collect::<Result<_>>()?
            }
        };
        let correct = predictions
            .iter()
            .zip(&prepared.query)
            .filter(|(p, (_, y))| *p == y)
            .count();
        Ok(EpisodeOutcome {
            accuracy: correct as f64 / prepared.query.len() as f64,
            repaired_distributions: repairs.len(),
            max_jitter: repairs.iter().map(|r| r.2).fold(0.0, f64::max),
        })
    }

    /// Mean accuracy and 95% interval over `spec.num_episodes` episodes.
    ///
    /// Episodes run in parallel when the `parallel` feature is on; results
    /// are merged by episode index, so the report does not depend on
    /// scheduling.
    pub fn evaluate(&self, spec: &EpisodeSpec, cfg: &PipelineConfig) -> Result<EvalReport> {
        cfg.validate()?;
        if spec.num_episodes == 0 {
            return Err(Error::InvalidParams("num_episodes must be positive".into()));
        }
        // Surface dataset-level problems once rather than per episode.
        self.episode(spec, 0)?;
        self.stats_for(cfg)?;
        let one = |i: u64| -> Result<EpisodeOutcome> {
            let ep = self.episode(spec, i)?;
            self.run_episode(&ep, cfg)
        };
        let indices: Vec<u64> = (0..spec.num_episodes as u64).collect();
        #[cfg(feature = "parallel")]
        let outcomes: Result<Vec<EpisodeOutcome>> = indices.par_iter().map(|&i| one(i)).collect();
        #[cfg(not(feature = "parallel"))]
        let outcomes: Result<Vec<EpisodeOutcome>> = indices.iter().map(|&i| one(i)).collect();
        Ok(EvalReport::from_outcomes(&outcomes?, *cfg, *spec))
    }

    /// One evaluation per value of `param`, all on the same episodes.
    pub fn sweep(
        &self,
        param: SweepParam,
        values: &[f64],
        base_cfg: &PipelineConfig,
        spec: &EpisodeSpec,
    ) -> Result<Vec<SweepPoint>> {
        if values.is_empty() {
            return Err(Error::InvalidParams("sweep needs at least one value".into()));
        }
        values
            .iter()
            .map(|&v| {
                let cfg = param.apply(base_cfg, v)?;
                Ok(SweepPoint {
                    value: v,
                    report: self.evaluate(spec, &cfg)?,
                })
            })
            .collect()
    }
}

/// Free-function form of [`Benchmark::run_episode`] against fixed statistics.
pub fn run_episode(
    ep: &Episode,
    ds: &Dataset,
    split: &SplitManifest,
    stats: &BaseStatsTable,
    cfg: &PipelineConfig,
) -> Result<f64> {
    let bench = Benchmark::with_stats(ds, split, stats.clone())?;
    Ok(bench.run_episode(ep, cfg)?.accuracy)
}

/// Aggregated evaluation result; serialized as the `eval` JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_accuracy: f64,
    pub ci95_halfwidth: f64,
    pub num_episodes: usize,
    pub per_episode_accuracies: Vec<f64>,
    pub config: PipelineConfig,
    pub episode_spec: EpisodeSpec,
    pub episode_seed_base: u64,
    pub repaired_distributions: usize,
    pub max_jitter: f64,
}

/// Mean and `1.96 σ / √n` with the population standard deviation.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.96 * var.sqrt() / n.sqrt())
}

impl EvalReport {
    fn from_outcomes(outcomes: &[EpisodeOutcome], config: PipelineConfig, spec: EpisodeSpec) -> Self {
        let accs: Vec<f64> = outcomes.iter().map(|o| o.accuracy).collect();
        let (mean, ci) = mean_ci95(&accs);
        EvalReport {
            mean_accuracy: mean,
            ci95_halfwidth: ci,
            num_episodes: accs.len(),
            per_episode_accuracies: accs,
            config,
            episode_spec: spec,
            episode_seed_base: spec.seed,
            repaired_distributions: outcomes.iter().map(|o| o.repaired_distributions).sum(),
            max_jitter: outcomes.iter().map(|o| o.max_jitter).fold(0.0, f64::max),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Mean of per-episode differences `a - b` and its 95% half-width.
pub fn paired_difference(a: &EvalReport, b: &EvalReport) -> Result<(f64, f64)> {
    if a.per_episode_accuracies.len() != b.per_episode_accuracies.len() || a.episode_spec != b.episode_spec {
        return Err(Error::InvalidParams("reports do not share episodes".into()));
    }
    let diffs: Vec<f64> = a
        .per_episode_accuracies
        .iter()
        .zip(&b.per_episode_accuracies)
        .map(|(x, y)| x - y)
        .collect();
    Ok(mean_ci95(&diffs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Lambda,
    NumGenerated,
    K,
    Alpha,
    NearestM,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(SweepParam::Lambda),
            "num_generated" | "num-generated" => Ok(SweepParam::NumGenerated),
            "k" => Ok(SweepParam::K),
            "alpha" => Ok(SweepParam::Alpha),
            "nearest_m" | "nearest-m" | "nearest" => Ok(SweepParam::NearestM),
            other => Err(Error::InvalidParams(format!(
                "unknown sweep parameter '{other}' (lambda, num_generated, k, alpha, nearest_m)"
            ))),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Lambda => "lambda",
            SweepParam::NumGenerated => "num_generated",
            SweepParam::K => "k",
            SweepParam::Alpha => "alpha",
            SweepParam::NearestM => "nearest_m",
        })
    }
}

fn as_count(v: f64, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::InvalidParams(format!(
            "{what} must be a non-negative integer, got {v}"
        )))
    }
}

impl SweepParam {
    /// `base` with this parameter set to `value`. A lambda sweep always
    /// enables the transform; `nearest_m = 0` means no retrieval baseline.
    pub fn apply(self, base: &PipelineConfig, value: f64) -> Result<PipelineConfig> {
        let mut cfg = *base;
        match self {
            SweepParam::Lambda => {
                cfg.use_tukey = true;
                cfg.tukey.lambda = value;
            }
            SweepParam::NumGenerated => cfg.sampler.total_per_class = as_count(value, "num_generated")?,
            SweepParam::K => cfg.calib.k = as_count(value, "k")?,
            SweepParam::Alpha => cfg.calib.alpha = value,
            SweepParam::NearestM => {
                cfg.baseline = match as_count(value, "nearest_m")? {
                    0 => Baseline::None,
                    m => Baseline::NearestClass(m),
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub report: EvalReport,
}
