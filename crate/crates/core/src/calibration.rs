//! Statistics transfer from base classes to few-shot support features.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{check_dim, squared_distance, Matrix};
use crate::rng::Rng;
use crate::statistics::BaseStatsTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationParams {
    /// Number of nearest base classes averaged into each calibrated distribution.
    pub k: usize,
    /// Dispersion constant added to the averaged covariance.
    pub alpha: f64,
    /// Include the support feature itself in the calibrated mean.
    pub use_novel_feature: bool,
    /// Add `alpha` to the diagonal only instead of to every entry.
    pub alpha_diagonal: bool,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        CalibrationParams {
            k: 2,
            alpha: 0.21,
            use_novel_feature: true,
            alpha_diagonal: false,
        }
    }
}

impl CalibrationParams {
    pub fn validate(&self, num_base: usize) -> Result<()> {
        if self.k == 0 || self.k > num_base {
            return Err(Error::InvalidParams(format!(
                "k must be in 1..={num_base}, got {}",
                self.k
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "alpha must be finite and non-negative, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// One Gaussian `(mean, covariance)` obtained from a single support feature.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedDistribution {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
    pub source_support_index: usize,
    pub neighbor_class_ids: Vec<u32>,
}

/// The `k` base classes whose means are closest (squared Euclidean) to `x`,
/// nearest first. Equal distances are ordered by ascending class id.
pub fn nearest_base_classes(x: &[f64], table: &BaseStatsTable, k: usize) -> Result<Vec<u32>> {
    check_dim(table.dim(), x.len())?;
    if k == 0 || k > table.len() {
        return Err(Error::InvalidParams(format!(
            "k must be in 1..={}, got {k}",
            table.len()
        )));
    }
    let mut dist: Vec<(f64, u32)> = table
        .iter()
        .map(|s| (squared_distance(&s.mean, x), s.class_id))
        .collect();
    let by_dist = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, by_dist);
        dist.truncate(k);
    }
    dist.sort_by(by_dist);
    Ok(dist.into_iter().map(|(_, id)| id).collect())
}

/// Calibrated mean and covariance for one (already transformed) support feature.
///
/// `mean = (Σ μ_i + x) / (k + 1)` over the `k` nearest base classes (or
/// `Σ μ_i / k` without the novel feature) and `cov = Σ Σ_i / k + alpha`, the
/// constant added to every entry unless `alpha_diagonal` is set.
pub fn calibrate(
    x: &[f64],
    table: &BaseStatsTable,
    params: &CalibrationParams,
    source_support_index: usize,
) -> Result<CalibratedDistribution> {
    params.validate(table.len())?;
    let neighbors = nearest_base_classes(x, table, params.k)?;
    let d = table.dim();
    let mut mean = vec![0.0; d];
    let mut covariance = Matrix::zeros(d, d);
    for id in &neighbors {
        let s = table.get(*id).ok_or(Error::MissingClass(*id))?;
        mean.iter_mut().zip(&s.mean).for_each(|(m, v)| *m += v);
        covariance.add_assign(&s.covariance)?;
    }
    let k = params.k as f64;
    if params.use_novel_feature {
        mean.iter_mut().zip(x).for_each(|(m, v)| *m = (*m + v) / (k + 1.0));
    } else {
        mean.iter_mut().for_each(|m| *m /= k);
    }
    covariance.scale(1.0 / k);
    if params.alpha_diagonal {
        covariance.add_diagonal(params.alpha);
    } else {
        covariance.add_scalar(params.alpha);
    }
    Ok(CalibratedDistribution {
        mean,
        covariance,
        source_support_index,
        neighbor_class_ids: neighbors,
    })
}

/// Calibrates every support feature, grouping the distributions by label.
///
/// Distribution order within a label follows support order.
pub fn calibrate_support_set(
    support: &[(Vec<f64>, usize)],
    table: &BaseStatsTable,
    params: &CalibrationParams,
) -> Result<BTreeMap<usize, Vec<CalibratedDistribution>>> {
    if support.is_empty() {
        return Err(Error::InvalidParams("support set is empty".into()));
    }
    let mut out: BTreeMap<usize, Vec<CalibratedDistribution>> = BTreeMap::new();
    for (i, (x, y)) in support.iter().enumerate() {
        out.entry(*y).or_default().push(calibrate(x, table, params, i)?);
    }
    Ok(out)
}

/// `m` features drawn without replacement from the base class nearest to `x`.
///
/// `ds` must contain that class's samples; the returned vectors are untransformed.
pub fn retrieve_nearest_class_features(
    x: &[f64],
    ds: &Dataset,
    table: &BaseStatsTable,
    m: usize,
    rng: &mut Rng,
) -> Result<Vec<Vec<f64>>> {
    let nearest = nearest_base_classes(x, table, 1)?[0];
    let indices = ds.class_indices(nearest)?;
    if m > indices.len() {
        return Err(Error::InsufficientSamples {
            class_id: nearest,
            count: indices.len(),
            required: m,
        });
    }
    Ok(sample(rng, indices.len(), m)
        .into_iter()
        .map(|i| ds.records()[indices[i]].to_f64())
        .collect())
}
