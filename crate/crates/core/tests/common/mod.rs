#![allow(dead_code)]

use fsdc::rng::{stream, Rng};
use fsdc::{BaseStatsTable, ClassStatistics, Matrix};
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> Rng {
    stream(seed, &[0x7e57])
}

pub fn normals(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// `A Aᵀ / d + floor·I` for a Gaussian `A`.
pub fn random_spd(rng: &mut Rng, d: usize, floor: f64) -> Matrix {
    let a = DMatrix::from_vec(d, d, normals(rng, d * d));
    let s = &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * floor;
    from_na(&s)
}

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect();
    Matrix::from_rows(&rows).unwrap()
}

/// Gaussian draws through nalgebra's own Cholesky.
pub fn mvn(rng: &mut Rng, mean: &[f64], cov: &Matrix, n: usize) -> Vec<Vec<f64>> {
    let l = to_na(cov).cholesky().expect("positive definite").l();
    let mu = DVector::from_column_slice(mean);
    (0..n)
        .map(|_| {
            let z = DVector::from_vec(normals(rng, mean.len()));
            (&mu + &l * z).iter().copied().collect()
        })
        .collect()
}

/// Base table with Gaussian means and random SPD covariances.
pub fn random_table(rng: &mut Rng, classes: u32, d: usize) -> BaseStatsTable {
    let entries: Vec<ClassStatistics> = (0..classes)
        .map(|id| ClassStatistics {
            class_id: id,
            mean: normals(rng, d).into_iter().map(|v| 2.0 * v).collect(),
            covariance: random_spd(rng, d, 0.05),
            count: 100,
        })
        .collect();
    BaseStatsTable::new(d, entries).unwrap()
}

pub fn sample_mean(xs: &[Vec<f64>]) -> Vec<f64> {
    let d = xs[0].len();
    let mut m = vec![0.0; d];
    for x in xs {
        for (a, b) in m.iter_mut().zip(x) {
            *a += b;
        }
    }
    m.iter().map(|v| v / xs.len() as f64).collect()
}

/// Covariance with the `1/n` normalization, computed in nalgebra.
pub fn sample_cov(xs: &[Vec<f64>]) -> DMatrix<f64> {
    let d = xs[0].len();
    let m = DVector::from_vec(sample_mean(xs));
    let mut c = DMatrix::zeros(d, d);
    for x in xs {
        let v = DVector::from_column_slice(x) - &m;
        c += &v * v.transpose();
    }
    c / xs.len() as f64
}

pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}
