//! Per-class means and covariances, the base-class statistics table, and
//! class-similarity diagnostics.
//!
//! Table layout (`FSST`, little-endian):
//!
//! ```text
//! magic "FSST" | version u32 = 1 | num_classes u32 | dim u32
//! num_classes × ( class_id u32 | dim × f64 mean | dim² × f64 covariance, row-major )
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::dataset::{Dataset, SplitManifest};
use crate::error::{Error, Result};
use crate::linalg::{check_dim, cosine, Matrix};
use crate::transform::{tukey_transform_in_place, TukeyParams};

pub const STATS_MAGIC: &[u8; 4] = b"FSST";
pub const STATS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStatistics {
    pub class_id: u32,
    pub mean: Vec<f64>,
    pub covariance: Matrix,
    pub count: usize,
}

impl ClassStatistics {
    /// Mean and unbiased covariance of one class's features.
    pub fn from_features<V: AsRef<[f64]>>(class_id: u32, features: &[V]) -> Result<Self> {
        if features.len() < 2 {
            return Err(Error::InsufficientSamples {
                class_id,
                count: features.len(),
                required: 2,
            });
        }
        let mean = class_mean(features)?;
        let covariance = class_covariance(features, &mean)?;
        Ok(ClassStatistics {
            class_id,
            mean,
            covariance,
            count: features.len(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Per-dimension arithmetic mean.
pub fn class_mean<V: AsRef<[f64]>>(features: &[V]) -> Result<Vec<f64>> {
    let first = features.first().ok_or(Error::EmptyClass)?.as_ref();
    let mut mean = vec![0.0; first.len()];
    for f in features {
        let f = f.as_ref();
        check_dim(mean.len(), f.len())?;
        mean.iter_mut().zip(f).for_each(|(m, v)| *m += v);
    }
    let n = features.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// Unbiased covariance `1/(n-1) Σ (x - μ)(x - μ)ᵀ`.
///
/// The upper triangle is accumulated and mirrored, so the result is exactly
/// symmetric.
pub fn class_covariance<V: AsRef<[f64]>>(features: &[V], mean: &[f64]) -> Result<Matrix> {
    let n = features.len();
    if n < 2 {
        return Err(Error::InsufficientSamples {
            class_id: u32::MAX,
            count: n,
            required: 2,
        });
    }
    let d = mean.len();
    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for f in features {
        let f = f.as_ref();
        check_dim(d, f.len())?;
        centered
            .iter_mut()
            .zip(f.iter().zip(mean))
            .for_each(|(c, (x, m))| *c = x - m);
        for a in 0..d {
            let ca = centered[a];
            let row = cov.row_mut(a);
            for b in a..d {
                row[b] += ca * centered[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(cov)
}

/// Statistics of every base class, keyed by class id.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseStatsTable {
    dim: usize,
    entries: BTreeMap<u32, ClassStatistics>,
}

impl BaseStatsTable {
    pub fn new(dim: usize, entries: impl IntoIterator<Item = ClassStatistics>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for e in entries {
            check_dim(dim, e.dim())?;
            check_dim(dim * dim, e.covariance.as_slice().len())?;
            map.insert(e.class_id, e);
        }
        if map.is_empty() {
            return Err(Error::Data("statistics table has no classes".into()));
        }
        Ok(BaseStatsTable { dim, entries: map })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, class_id: u32) -> Option<&ClassStatistics> {
        self.entries.get(&class_id)
    }

    /// Entries in ascending class-id order.
    pub fn iter(&self) -> impl Iterator<Item = &ClassStatistics> {
        self.entries.values()
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(STATS_MAGIC)?;
        w.write_all(&STATS_VERSION.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for e in self.iter() {
            w.write_all(&e.class_id.to_le_bytes())?;
            for v in e.mean.iter().chain(e.covariance.as_slice()) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a table written by [`BaseStatsTable::write_to`]. Sample counts are
    /// not stored in the format and come back as zero.
    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let eof = |e: std::io::Error| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Format("unexpected end of statistics file".into())
            } else {
                Error::Io(e)
            }
        };
        let mut word = [0u8; 4];
        r.read_exact(&mut word).map_err(eof)?;
        if &word != STATS_MAGIC {
            return Err(Error::Format("bad magic, expected \"FSST\"".into()));
        }
        let mut next_u32 = |r: &mut dyn Read| -> Result<u32> {
            r.read_exact(&mut word).map_err(eof)?;
            Ok(u32::from_le_bytes(word))
        };
        let version = next_u32(&mut r)?;
        if version != STATS_VERSION {
            return Err(Error::Format(format!("unsupported statistics version {version}")));
        }
        let classes = next_u32(&mut r)? as usize;
        let dim = next_u32(&mut r)? as usize;
        if dim == 0 {
            return Err(Error::Format("zero dimension".into()));
        }
        let mut entries = Vec::with_capacity(classes.min(1 << 16));
        let mut buf = vec![0u8; 8 * (dim + dim * dim)];
        for _ in 0..classes {
            let class_id = next_u32(&mut r)?;
            r.read_exact(&mut buf).map_err(eof)?;
            let vals: Vec<f64> = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let (mean, cov) = vals.split_at(dim);
            entries.push(ClassStatistics {
                class_id,
                mean: mean.to_vec(),
                covariance: Matrix::from_vec(dim, dim, cov.to_vec())?,
                count: 0,
            });
        }
        BaseStatsTable::new(dim, entries)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        BaseStatsTable::read_from(BufReader::new(File::open(path)?))
    }
}

/// Statistics for every base class of `split`, on untransformed features.
pub fn build_base_stats(ds: &Dataset, split: &SplitManifest) -> Result<BaseStatsTable> {
    build_base_stats_with(ds, split, None)
}

/// Like [`build_base_stats`], optionally applying the power transform to the
/// base features before the statistics are computed.
pub fn build_base_stats_with(
    ds: &Dataset,
    split: &SplitManifest,
    transform: Option<&TukeyParams>,
) -> Result<BaseStatsTable> {
    if split.base_classes.is_empty() {
        return Err(Error::InvalidParams("split has no base classes".into()));
    }
    for &id in &split.base_classes {
        if !ds.contains_class(id) {
            return Err(Error::MissingClass(id));
        }
    }
    let one = |&id: &u32| -> Result<ClassStatistics> {
        let mut feats = ds.class_features(id)?;
        if let Some(p) = transform {
            for f in feats.iter_mut() {
                tukey_transform_in_place(f, p)?;
            }
        }
        ClassStatistics::from_features(id, &feats)
    };
    let ids: Vec<u32> = split.base_classes.iter().copied().collect();
    #[cfg(feature = "parallel")]
    let stats: Result<Vec<_>> = ids.par_iter().map(one).collect();
    #[cfg(not(feature = "parallel"))]
    let stats: Result<Vec<_>> = ids.iter().map(one).collect();
    BaseStatsTable::new(ds.dim(), stats?)
}

/// Cosine similarity of the class means and of the variance vectors
/// (covariance diagonals), as `(mean_sim, var_sim)`.
pub fn class_similarity(a: &ClassStatistics, b: &ClassStatistics) -> Result<(f64, f64)> {
    check_dim(a.dim(), b.dim())?;
    let mean_sim = cosine(&a.mean, &b.mean).ok_or(Error::UndefinedSimilarity)?;
    let var_sim = cosine(&a.covariance.diagonal(), &b.covariance.diagonal()).ok_or(Error::UndefinedSimilarity)?;
    Ok((mean_sim, var_sim))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityRow {
    pub class_a: u32,
    pub class_b: u32,
    pub mean_sim: f64,
    pub var_sim: f64,
}

/// Pairwise similarities over all unordered pairs of distinct classes.
pub fn similarity_report<'a>(stats: impl IntoIterator<Item = &'a ClassStatistics>) -> Result<Vec<SimilarityRow>> {
    let stats: Vec<&ClassStatistics> = stats.into_iter().collect();
    let mut rows = Vec::new();
    for (i, a) in stats.iter().enumerate() {
        for b in &stats[i + 1..] {
            let (mean_sim, var_sim) = class_similarity(a, b)?;
            rows.push(SimilarityRow {
                class_a: a.class_id,
                class_b: b.class_id,
                mean_sim,
                var_sim,
            });
        }
    }
    Ok(rows)
}
