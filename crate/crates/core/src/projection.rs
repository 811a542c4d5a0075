//! Two-component PCA for visualizing episodes.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Principal axes of a feature set, strongest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit eigenvectors of the sample covariance, one per dimension.
    pub components: Vec<Vec<f64>>,
    /// Matching eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
}

impl Pca {
    pub fn fit(points: &[&[f64]]) -> Result<Pca> {
        if points.len() < 2 {
            return Err(Error::InvalidParams(format!(
                "projection needs at least 2 points, got {}",
                points.len()
            )));
        }
        let d = points[0].len();
        if d == 0 {
            return Err(Error::InvalidParams("projection of zero-dimensional points".into()));
        }
        if let Some(bad) = points.iter().find(|p| p.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                found: bad.len(),
            });
        }
        let n = points.len() as f64;
        let mut mean = vec![0.0; d];
        for p in points {
            for (m, v) in mean.iter_mut().zip(p.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for p in points {
            for i in 0..d {
                let di = p[i] - mean[i];
                for j in i..d {
                    cov[(i, j)] += di * (p[j] - mean[j]);
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                let v = cov[(i, j)] / (n - 1.0);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        if cov.trace() <= 0.0 {
            return Err(Error::Data("projection input has zero variance".into()));
        }
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut components = Vec::with_capacity(d);
        let mut eigenvalues = Vec::with_capacity(d);
        for &i in &order {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let lead =
                v.iter().copied().enumerate().fold(
                    (0, 0.0f64),
                    |best, (j, x)| if x.abs() > best.1.abs() { (j, x) } else { best },
                );
            if lead.1 < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            components.push(v);
            eigenvalues.push(eig.eigenvalues[i].max(0.0));
        }
        Ok(Pca {
            mean,
            components,
            eigenvalues,
        })
    }

    /// Coordinates of `x` on the first `r` components.
    pub fn project(&self, x: &[f64], r: usize) -> Vec<f64> {
        self.components
            .iter()
            .take(r)
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect()
    }

    /// Maps `r`-component coordinates back to feature space.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &a) in self.components.iter().zip(coords) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += a * v;
            }
        }
        out
    }
}

/// Projects labeled features onto their first two principal components.
/// One-dimensional input gets a zero second coordinate.
pub fn project_2d(features: &[(Vec<f64>, usize)]) -> Result<Vec<(f64, f64, usize)>> {
    let points: Vec<&[f64]> = features.iter().map(|(x, _)| x.as_slice()).collect();
    let pca = Pca::fit(&points)?;
    Ok(features
        .iter()
        .map(|(x, label)| {
            let c = pca.project(x, 2);
            (c[0], c.get(1).copied().unwrap_or(0.0), *label)
        })
        .collect())
}
