//! Deterministic synthetic feature datasets with known generating parameters.
//!
//! Every class owns a latent Gaussian `N(m_c, S_c)`. Classes in one similarity
//! group share a centre (`m_c` is the centre plus a small offset) and most of
//! their covariance structure. A feature is `|z|^skew_power` of a latent draw
//! `z`, which mimics the non-negative, right-skewed activations a ReLU layer
//! produces; a power transform with `lambda = 1/skew_power` recovers the
//! folded latent Gaussian.

use rand::Rng as _;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureVector, SplitManifest};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{stream, tag};
use crate::sampling::cholesky_psd;

/// Shape of the latent class Gaussians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentShape {
    /// Group centres are drawn uniformly from `[center_low, center_high]` per dimension.
    pub center_low: f64,
    pub center_high: f64,
    /// Standard deviation of a class mean around its group centre.
    pub group_offset: f64,
    /// Overall latent noise scale.
    pub noise_sd: f64,
    /// Rank of the covariance factor shared within a group.
    pub factor_rank: usize,
}

impl Default for LatentShape {
    fn default() -> Self {
        LatentShape {
            center_low: 0.3,
            center_high: 1.5,
            group_offset: 0.2,
            noise_sd: 0.5,
            factor_rank: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub skew_power: f64,
    /// Partition of `0..num_classes`; classes in a group have nearby means.
    pub class_similarity_groups: Vec<Vec<u32>>,
    pub seed: u64,
    /// The last `novel_per_group` classes of each group form the novel split.
    #[serde(default = "one")]
    pub novel_per_group: usize,
    /// Classes just before the novel ones in each group form the validation split.
    #[serde(default)]
    pub val_per_group: usize,
    #[serde(default)]
    pub shape: LatentShape,
}

fn one() -> usize {
    1
}

impl SyntheticSpec {
    /// `num_classes` split into `num_groups` contiguous groups of near-equal size.
    pub fn grouped(num_classes: usize, num_groups: usize, dim: usize, samples_per_class: usize, seed: u64) -> Self {
        let groups = num_groups.clamp(1, num_classes.max(1));
        let class_similarity_groups = (0..groups)
            .map(|g| {
                let lo = g * num_classes / groups;
                let hi = (g + 1) * num_classes / groups;
                (lo as u32..hi as u32).collect()
            })
            .collect();
        SyntheticSpec {
            num_classes,
            dim,
            samples_per_class,
            skew_power: 2.0,
            class_similarity_groups,
            seed,
            novel_per_group: 1,
            val_per_group: 0,
            shape: LatentShape::default(),
        }
    }

    /// The benchmark used throughout the tests: 5 groups of 4 base + 1 novel
    /// class, `d = 16`, 200 samples per class, squared features.
    pub fn benchmark(seed: u64) -> Self {
        SyntheticSpec::grouped(25, 5, 16, 200, seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.dim < 2 {
            return bad(format!("dim must be at least 2, got {}", self.dim));
        }
        if self.num_classes == 0 || self.samples_per_class == 0 {
            return bad("num_classes and samples_per_class must be positive".into());
        }
        if !(self.skew_power >= 1.0 && self.skew_power.is_finite()) {
            return bad(format!("skew_power must be >= 1, got {}", self.skew_power));
        }
        let mut seen = vec![false; self.num_classes];
        for g in &self.class_similarity_groups {
            if g.is_empty() {
                return bad("similarity groups must be nonempty".into());
            }
            if self.novel_per_group + self.val_per_group > g.len() {
                return bad(format!(
                    "group {g:?} is too small for {} novel + {} validation classes",
                    self.novel_per_group, self.val_per_group
                ));
            }
            for &c in g {
                match seen.get_mut(c as usize) {
                    Some(s) if !*s => *s = true,
                    Some(_) => return bad(format!("class {c} appears in two groups")),
                    None => return bad(format!("class {c} is out of range")),
                }
            }
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return bad(format!("class {c} is not in any similarity group"));
        }
        let s = &self.shape;
        if !(s.center_high >= s.center_low && s.group_offset >= 0.0 && s.noise_sd > 0.0 && s.factor_rank > 0) {
            return bad("invalid latent shape".into());
        }
        Ok(())
    }

    fn split(&self) -> Result<SplitManifest> {
        let (mut base, mut val, mut novel) = (Vec::new(), Vec::new(), Vec::new());
        for g in &self.class_similarity_groups {
            let n_base = g.len() - self.novel_per_group - self.val_per_group;
            base.extend_from_slice(&g[..n_base]);
            val.extend_from_slice(&g[n_base..n_base + self.val_per_group]);
            novel.extend_from_slice(&g[n_base + self.val_per_group..]);
        }
        SplitManifest::new(base, val, novel)
    }
}

/// Generating parameters of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTruth {
    pub class_id: u32,
    pub group: usize,
    pub latent_mean: Vec<f64>,
    /// Row-major `dim × dim`.
    pub latent_covariance: Vec<f64>,
    /// Exact per-dimension mean of the emitted features.
    pub feature_mean: Vec<f64>,
    /// Exact per-dimension variance of the emitted features.
    pub feature_variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub skew_power: f64,
    pub classes: Vec<ClassTruth>,
}

impl GroundTruth {
    pub fn class(&self, class_id: u32) -> Option<&ClassTruth> {
        self.classes.iter().find(|c| c.class_id == class_id)
    }
}

/// `E|Z|^p` and `E|Z|^{2p}` for `Z ~ N(mu, sd²)` by composite Simpson quadrature.
fn folded_power_moments(mu: f64, sd: f64, p: f64) -> (f64, f64) {
    const STEPS: usize = 4000;
    let (lo, hi) = (mu - 12.0 * sd, mu + 12.0 * sd);
    let h = (hi - lo) / STEPS as f64;
    let norm = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
    let (mut m1, mut m2) = (0.0, 0.0);
    for i in 0..=STEPS {
        let z = lo + i as f64 * h;
        let w = match i {
            0 => 1.0,
            i if i == STEPS => 1.0,
            i if i % 2 == 1 => 4.0,
            _ => 2.0,
        };
        let dens = norm * (-0.5 * ((z - mu) / sd).powi(2)).exp();
        let a = z.abs().powf(p);
        m1 += w * a * dens;
        m2 += w * a * a * dens;
    }
    (m1 * h / 3.0, m2 * h / 3.0)
}

/// Generates the dataset, its split and the generating parameters.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, SplitManifest, GroundTruth)> {
    spec.validate()?;
    let split = spec.split()?;
    let d = spec.dim;
    let shape = spec.shape;
    let rank = shape.factor_rank;
    let factor_sd = shape.noise_sd / (rank as f64).sqrt();
    let diag_sd = 0.6 * shape.noise_sd;
    let center_dist =
        Uniform::new_inclusive(shape.center_low, shape.center_high).map_err(|e| Error::InvalidParams(e.to_string()))?;

    let mut truths = Vec::with_capacity(spec.num_classes);
    let mut records = Vec::with_capacity(spec.num_classes * spec.samples_per_class);
    for (g, members) in spec.class_similarity_groups.iter().enumerate() {
        let mut rng = stream(spec.seed, &[tag::SYNTH, g as u64]);
        let center: Vec<f64> = (0..d).map(|_| rng.sample(center_dist)).collect();
        let factor: Vec<f64> = (0..d * rank)
            .map(|_| factor_sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        for &class_id in members {
            let mut rng = stream(spec.seed, &[tag::SYNTH, g as u64, u64::from(class_id) + 1]);
            let latent_mean: Vec<f64> = center
                .iter()
                .map(|c| c + shape.group_offset * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let class_factor: Vec<f64> = factor
                .iter()
                .map(|f| f + 0.1 * factor_sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let mut cov = Matrix::identity(d);
            cov.scale(diag_sd * diag_sd);
            for a in 0..d {
                for b in 0..d {
                    let fa = &class_factor[a * rank..(a + 1) * rank];
                    let fb = &class_factor[b * rank..(b + 1) * rank];
                    cov[(a, b)] += fa.iter().zip(fb).map(|(x, y)| x * y).sum::<f64>();
                }
            }
            let chol = cholesky_psd(&cov, 1e-12)?;
            let mut z = vec![0.0; d];
            let mut x = vec![0.0; d];
            for _ in 0..spec.samples_per_class {
                z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                chol.transform_into(&latent_mean, &z, &mut x);
                let values = x.iter().map(|v| v.abs().powf(spec.skew_power) as f32).collect();
                records.push(FeatureVector::new(class_id, values));
            }
            let (feature_mean, feature_variance) = (0..d)
                .map(|j| {
                    let (m1, m2) = folded_power_moments(latent_mean[j], cov[(j, j)].sqrt(), spec.skew_power);
                    (m1, m2 - m1 * m1)
                })
                .unzip();
            truths.push(ClassTruth {
                class_id,
                group: g,
                latent_mean,
                latent_covariance: cov.as_slice().to_vec(),
                feature_mean,
                feature_variance,
            });
        }
    }
    records.sort_by_key(|r| r.class_id);
    truths.sort_by_key(|t| t.class_id);
    let ds = Dataset::new(d, records)?;
    Ok((
        ds,
        split,
        GroundTruth {
            skew_power: spec.skew_power,
            classes: truths,
        },
    ))
}
