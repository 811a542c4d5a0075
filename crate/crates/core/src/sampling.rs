//! Drawing labeled synthetic features from calibrated Gaussians.

use std::collections::BTreeMap;

use log::debug;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calibration::CalibratedDistribution;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{stream, tag};

/// Largest jitter multiplier tried by [`cholesky_psd`].
const MAX_JITTER_STEPS: i32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    /// Generated features per class, split across that class's distributions.
    /// Zero disables generation.
    pub total_per_class: usize,
    pub seed: u64,
    /// Initial diagonal jitter for factorization repair.
    pub jitter: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            total_per_class: 750,
            seed: 0,
            jitter: 1e-6,
        }
    }
}

/// Lower Cholesky factor of `Σ + cI` and the `c` that made it succeed.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    pub lower: Matrix,
    pub jitter: f64,
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    /// Solves `L y = b` by forward substitution.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let row = self.lower.row(i);
            let s: f64 = row[..i].iter().zip(&y[..i]).map(|(l, v)| l * v).sum();
            y[i] = (b[i] - s) / row[i];
        }
        y
    }

    /// `log det(LLᵀ)`
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<f64>()
    }

    /// Gaussian log-density of `x` under mean `mean` and covariance `LLᵀ`.
    pub fn log_density(&self, x: &[f64], mean: &[f64]) -> f64 {
        let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
        let z = self.solve_lower(&diff);
        let maha: f64 = z.iter().map(|v| v * v).sum();
        let d = self.dim() as f64;
        -0.5 * (maha + self.log_det() + d * (2.0 * std::f64::consts::PI).ln())
    }

    /// `out = mean + L z`
    pub fn transform_into(&self, mean: &[f64], z: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.lower.row(i)[..=i];
            *o = mean[i] + row.iter().zip(z).map(|(l, v)| l * v).sum::<f64>();
        }
    }
}

fn try_cholesky(a: &Matrix, shift: f64) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            if i == j {
                s += shift;
            }
            let (li, lj) = (l.row(i), l.row(j));
            s -= li[..j].iter().zip(&lj[..j]).map(|(x, y)| x * y).sum::<f64>();
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Cholesky factorization with escalating diagonal repair.
///
/// Tries `c = 0, jitter, 10·jitter, …, 10⁶·jitter` in turn and returns the
/// first factor of `Σ + cI` that exists.
pub fn cholesky_psd(sigma: &Matrix, jitter: f64) -> Result<Cholesky> {
    if !sigma.is_square() {
        return Err(Error::Dimension {
            expected: sigma.rows(),
            found: sigma.cols(),
        });
    }
    if !(jitter > 0.0 && jitter.is_finite()) {
        return Err(Error::InvalidParams(format!("jitter must be positive, got {jitter}")));
    }
    let shifts = std::iter::once(0.0).chain((0..=MAX_JITTER_STEPS).map(|p| jitter * 10f64.powi(p)));
    for c in shifts {
        if let Some(lower) = try_cholesky(sigma, c) {
            return Ok(Cholesky { lower, jitter: c });
        }
    }
    Err(Error::NotFactorizable {
        max_jitter: jitter * 10f64.powi(MAX_JITTER_STEPS),
    })
}

/// Sample counts per distribution: even split, remainder to the earliest.
pub fn split_counts(total: usize, parts: usize) -> Vec<usize> {
    if parts == 0 {
        return Vec::new();
    }
    let (base, rem) = (total / parts, total % parts);
    (0..parts).map(|i| base + usize::from(i < rem)).collect()
}

/// Features sampled for a task, plus the jitter each distribution needed.
#[derive(Debug, Clone, Default)]
pub struct GeneratedFeatures {
    pub samples: Vec<(Vec<f64>, usize)>,
    /// `(label, distribution index, jitter)` for every factorization that
    /// needed repair.
    pub repairs: Vec<(usize, usize, f64)>,
}

/// Draws `cfg.total_per_class` features for every label of `dists`.
///
/// Each `(label, distribution index)` pair owns an independent stream derived
/// from `cfg.seed`, so the output does not depend on iteration order.
pub fn sample_features(
    dists: &BTreeMap<usize, Vec<CalibratedDistribution>>,
    cfg: &SamplerConfig,
) -> Result<GeneratedFeatures> {
    let mut out = GeneratedFeatures::default();
    if cfg.total_per_class == 0 {
        return Ok(out);
    }
    out.samples.reserve(cfg.total_per_class * dists.len());
    for (&label, class_dists) in dists {
        if class_dists.is_empty() {
            return Err(Error::InvalidParams(format!("class {label} has no distributions")));
        }
        let counts = split_counts(cfg.total_per_class, class_dists.len());
        for (j, (dist, &count)) in class_dists.iter().zip(&counts).enumerate() {
            let chol = cholesky_psd(&dist.covariance, cfg.jitter).map_err(|e| Error::Sampling {
                class: label,
                distribution: j,
                source: Box::new(e),
            })?;
            if chol.jitter > 0.0 {
                debug!(
                    "class {label} distribution {j}: covariance repaired with jitter {:e}",
                    chol.jitter
                );
                out.repairs.push((label, j, chol.jitter));
            }
            let mut rng = stream(cfg.seed, &[tag::SAMPLER, label as u64, j as u64]);
            let d = dist.mean.len();
            let mut z = vec![0.0; d];
            for _ in 0..count {
                z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                let mut x = vec![0.0; d];
                chol.transform_into(&dist.mean, &z, &mut x);
                out.samples.push((x, label));
            }
        }
    }
    Ok(out)
}
