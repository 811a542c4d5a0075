//! Task-level classifiers trained on support plus generated features.
//!
//! Both linear models are trained by full-batch gradient descent on a flat
//! parameter vector, one row `[w_c | b_c]` per class. The step size is
//! `learning_rate / L`, where `L` bounds the curvature of the objective on the
//! training set, so one `learning_rate` works across feature scales. The
//! logistic objective uses monotone accelerated steps (the iterate only moves
//! when the loss does not increase); the hinge objective uses a decaying
//! subgradient step and keeps the best iterate.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::calibration::CalibratedDistribution;
use crate::error::{Error, Result};
use crate::linalg::{axpy, check_dim, dot, Matrix};
use crate::rng::{stream, tag};
use crate::sampling::{cholesky_psd, Cholesky};

/// Training data for one task: row-major features and task-local labels `0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSet {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    class_map: Vec<u32>,
}

impl TrainSet {
    /// Empty set for `class_map.len()` classes; `class_map[i]` is the original
    /// class id behind task label `i`.
    pub fn new(dim: usize, class_map: Vec<u32>) -> Self {
        TrainSet {
            dim,
            features: Vec::new(),
            labels: Vec::new(),
            class_map,
        }
    }

    pub fn from_samples(dim: usize, class_map: Vec<u32>, samples: &[(Vec<f64>, usize)]) -> Result<Self> {
        let mut ts = TrainSet::new(dim, class_map);
        ts.extend(samples)?;
        Ok(ts)
    }

    pub fn push(&mut self, x: &[f64], label: usize) -> Result<()> {
        check_dim(self.dim, x.len())?;
        if label >= self.class_map.len() {
            return Err(Error::InvalidParams(format!(
                "label {label} out of range for {} classes",
                self.class_map.len()
            )));
        }
        self.features.extend_from_slice(x);
        self.labels.push(label);
        Ok(())
    }

    pub fn extend(&mut self, samples: &[(Vec<f64>, usize)]) -> Result<()> {
        self.features.reserve(samples.len() * self.dim);
        for (x, y) in samples {
            self.push(x, *y)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.class_map.len()
    }

    pub fn class_map(&self) -> &[u32] {
        &self.class_map
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// At least two classes and every class represented.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_classes();
        if n < 2 {
            return Err(Error::InvalidParams(format!("need at least 2 classes, got {n}")));
        }
        let mut seen = vec![false; n];
        self.labels.iter().for_each(|&y| seen[y] = true);
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParams(format!(
                "class index {missing} has no training samples"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Svm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// One row per class.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub kind: ModelKind,
}

impl LinearModel {
    pub fn zeros(num_classes: usize, dim: usize, kind: ModelKind) -> Self {
        LinearModel {
            weights: Matrix::zeros(num_classes, dim),
            bias: vec![0.0; num_classes],
            kind,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok((0..self.num_classes())
            .map(|c| dot(self.weights.row(c), x) + self.bias[c])
            .collect())
    }

    fn to_flat(&self) -> Vec<f64> {
        let d = self.dim();
        let mut theta = Vec::with_capacity(self.num_classes() * (d + 1));
        for c in 0..self.num_classes() {
            theta.extend_from_slice(self.weights.row(c));
            theta.push(self.bias[c]);
        }
        theta
    }

    fn from_flat(theta: &[f64], num_classes: usize, dim: usize, kind: ModelKind) -> Self {
        let mut m = LinearModel::zeros(num_classes, dim, kind);
        for (c, row) in theta.chunks_exact(dim + 1).enumerate() {
            m.weights.row_mut(c).copy_from_slice(&row[..dim]);
            m.bias[c] = row[dim];
        }
        m
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    scores
        .iter()
        .enumerate()
        .fold(0, |best, (i, &s)| if s > scores[best] { i } else { best })
}

/// Predicted task label for `x`.
pub fn predict(model: &LinearModel, x: &[f64]) -> Result<usize> {
    Ok(argmax(&model.scores(x)?))
}

/// Gradient of a training objective, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradient {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Step size as a fraction of the inverse curvature bound.
    pub learning_rate: f64,
    pub epochs: usize,
    /// `None` trains on the full batch each epoch.
    pub batch_size: Option<usize>,
    /// L2 penalty on weights (not biases).
    pub l2: f64,
    pub seed: u64,
    /// Accelerated (momentum) steps in full-batch mode.
    pub momentum: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1.0,
            epochs: 100,
            batch_size: None,
            l2: 1e-3,
            seed: 0,
            momentum: true,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParams("epochs must be at least 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidParams("batch_size must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "l2 must be non-negative, got {}",
                self.l2
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Objective {
    Logistic,
    Hinge,
}

/// `c = a · b` for an `m × p` by `p × n` product; each buffer is described
/// by its (row stride, column stride).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    p: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    assert!(m > 0 && p > 0 && n > 0);
    assert!((m - 1) * rsa + (p - 1) * csa < a.len());
    assert!((p - 1) * rsb + (n - 1) * csb < b.len());
    assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: the asserts above keep every addressed element inside the
    // slices, and `c` is exclusively borrowed. With beta = 0, `c` is only
    // written.
    unsafe {
        matrixmultiply::dgemm(
            m,
            p,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

impl Objective {
    /// Mean loss over `rows` (all rows when `None`) plus the L2 term; writes
    /// the gradient into `grad` when given.
    fn eval(self, theta: &[f64], ts: &TrainSet, l2: f64, rows: Option<&[usize]>, grad: Option<&mut [f64]>) -> f64 {
        let d = ts.dim;
        let stride = d + 1;
        let k = ts.num_classes();
        let gathered: (Vec<f64>, Vec<usize>);
        let (x, labels): (&[f64], &[usize]) = match rows {
            None => (&ts.features, &ts.labels),
            Some(rows) => {
                gathered = (
                    rows.iter().flat_map(|&i| ts.feature(i).iter().copied()).collect(),
                    rows.iter().map(|&i| ts.labels[i]).collect(),
                );
                (&gathered.0, &gathered.1)
            }
        };
        let n = labels.len();
        let inv_n = 1.0 / n as f64;

        // scores[i k + c] = w_c · x_i, then overwritten with d loss / d score.
        let mut scores = vec![0.0; n * k];
        gemm(n, d, k, x, (d, 1), theta, (1, stride), &mut scores, (k, 1));
        let mut loss = 0.0;
        for (s, &y) in scores.chunks_exact_mut(k).zip(labels) {
            for (v, row) in s.iter_mut().zip(theta.chunks_exact(stride)) {
                *v += row[d];
            }
            match self {
                Objective::Logistic => {
                    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let shifted_y = s[y] - max;
                    let mut sum = 0.0;
                    for v in s.iter_mut() {
                        *v = (*v - max).exp();
                        sum += *v;
                    }
                    loss += sum.ln() - shifted_y;
                    let scale = inv_n / sum;
                    s.iter_mut().for_each(|v| *v *= scale);
                    s[y] -= inv_n;
                }
                Objective::Hinge => {
                    for (c, v) in s.iter_mut().enumerate() {
                        let t = if c == y { 1.0 } else { -1.0 };
                        let margin = 1.0 - t * *v;
                        if margin > 0.0 {
                            loss += margin;
                            *v = -t * inv_n;
                        } else {
                            *v = 0.0;
                        }
                    }
                }
            }
        }
        if let Some(g) = grad {
            gemm(k, n, d, &scores, (1, k), x, (d, 1), g, (stride, 1));
            for (c, gr) in g.chunks_exact_mut(stride).enumerate() {
                gr[d] = scores.iter().skip(c).step_by(k).sum();
                axpy(l2, &theta[c * stride..c * stride + d], &mut gr[..d]);
            }
        }
        let reg: f64 = theta.chunks_exact(stride).map(|row| dot(&row[..d], &row[..d])).sum();
        loss * inv_n + 0.5 * l2 * reg
    }
}

/// Largest eigenvalue of the augmented second-moment matrix `X̃ᵀX̃ / n`.
fn second_moment_bound(ts: &TrainSet) -> f64 {
    let d = ts.dim + 1;
    let mut gram = vec![0.0; d * d];
    let mut xa = vec![1.0; d];
    for i in 0..ts.len() {
        xa[..ts.dim].copy_from_slice(ts.feature(i));
        for a in 0..d {
            let v = xa[a];
            axpy(v, &xa[a..], &mut gram[a * d + a..(a + 1) * d]);
        }
    }
    for a in 0..d {
        for b in 0..a {
            gram[a * d + b] = gram[b * d + a];
        }
    }
    let g = nalgebra::DMatrix::from_row_slice(d, d, &gram) / ts.len() as f64;
    g.symmetric_eigenvalues().max()
}

fn check_loss(loss: f64, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { epoch, loss })
    }
}

/// Trained model plus the full-batch objective after every epoch.
#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub model: LinearModel,
    pub losses: Vec<f64>,
}

fn train(ts: &TrainSet, cfg: &OptimizerConfig, objective: Objective, kind: ModelKind) -> Result<TrainTrace> {
    cfg.validate()?;
    ts.validate()?;
    let (k, d) = (ts.num_classes(), ts.dim());
    let p = k * (d + 1);
    let l2 = cfg.l2;
    let moment = second_moment_bound(ts);
    let curvature = match objective {
        Objective::Logistic => 0.5 * moment + l2,
        Objective::Hinge => moment + l2,
    }
    .max(f64::MIN_POSITIVE);
    let step = cfg.learning_rate / curvature;
    let full = |theta: &[f64], grad: Option<&mut [f64]>| objective.eval(theta, ts, l2, None, grad);

    let mut x = vec![0.0; p];
    let mut grad = vec![0.0; p];
    let mut losses = Vec::with_capacity(cfg.epochs);
    let minibatch = cfg.batch_size.filter(|&b| b < ts.len());

    match (objective, minibatch) {
        (_, Some(batch)) => {
            let mut order: Vec<usize> = (0..ts.len()).collect();
            let mut rng = stream(cfg.seed, &[tag::OPTIMIZER]);
            let mut t = 0usize;
            for epoch in 0..cfg.epochs {
                order.shuffle(&mut rng);
                for rows in order.chunks(batch) {
                    objective.eval(&x, ts, l2, Some(rows), Some(&mut grad));
                    let eta = match objective {
                        Objective::Logistic => step,
                        Objective::Hinge => step / ((t + 1) as f64).sqrt(),
                    };
                    axpy(-eta, &grad, &mut x);
                    t += 1;
                }
                let loss = full(&x, None);
                check_loss(loss, epoch)?;
                losses.push(loss);
            }
        }
        (Objective::Logistic, None) if cfg.momentum => {
            let mut fx = full(&x, None);
            let mut y = x.clone();
            let mut z = vec![0.0; p];
            let mut t = 1.0f64;
            for epoch in 0..cfg.epochs {
                let fy = full(&y, Some(&mut grad));
                check_loss(fy, epoch)?;
                z.iter_mut()
                    .zip(y.iter().zip(&grad))
                    .for_each(|(zi, (yi, gi))| *zi = yi - step * gi);
                let fz = full(&z, None);
                check_loss(fz, epoch)?;
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let accept = fz <= fx;
                for i in 0..p {
                    let prev = x[i];
                    let cur = if accept { z[i] } else { prev };
                    y[i] = cur + (t / t_next) * (z[i] - cur) + ((t - 1.0) / t_next) * (cur - prev);
                    x[i] = cur;
                }
                if accept {
                    fx = fz;
                }
                t = t_next;
                losses.push(fx);
            }
        }
        (Objective::Logistic, None) => {
            for epoch in 0..cfg.epochs {
                full(&x, Some(&mut grad));
                axpy(-step, &grad, &mut x);
                let loss = full(&x, None);
                check_loss(loss, epoch)?;
                losses.push(loss);
            }
        }
        (Objective::Hinge, None) => {
            let mut best = (full(&x, None), x.clone());
            for epoch in 0..cfg.epochs {
                full(&x, Some(&mut grad));
                axpy(-step / ((epoch + 1) as f64).sqrt(), &grad, &mut x);
                let loss = full(&x, None);
                check_loss(loss, epoch)?;
                if loss < best.0 {
                    best = (loss, x.clone());
                }
                losses.push(best.0);
            }
            x = best.1;
        }
    }
    Ok(TrainTrace {
        model: LinearModel::from_flat(&x, k, d, kind),
        losses,
    })
}

/// Multinomial logistic regression: softmax cross-entropy plus L2.
pub fn train_logistic(ts: &TrainSet, cfg: &OptimizerConfig) -> Result<LinearModel> {
    Ok(train_logistic_traced(ts, cfg)?.model)
}

pub fn train_logistic_traced(ts: &TrainSet, cfg: &OptimizerConfig) -> Result<TrainTrace> {
    train(ts, cfg, Objective::Logistic, ModelKind::Logistic)
}

/// One-vs-rest linear SVM: summed per-class hinge losses plus L2.
pub fn train_svm(ts: &TrainSet, cfg: &OptimizerConfig) -> Result<LinearModel> {
    Ok(train_svm_traced(ts, cfg)?.model)
}

pub fn train_svm_traced(ts: &TrainSet, cfg: &OptimizerConfig) -> Result<TrainTrace> {
    train(ts, cfg, Objective::Hinge, ModelKind::Svm)
}

fn objective_with_gradient(
    objective: Objective,
    model: &LinearModel,
    ts: &TrainSet,
    l2: f64,
) -> Result<(f64, ModelGradient)> {
    check_dim(ts.dim(), model.dim())?;
    check_dim(ts.num_classes(), model.num_classes())?;
    let theta = model.to_flat();
    let mut grad = vec![0.0; theta.len()];
    let loss = objective.eval(&theta, ts, l2, None, Some(&mut grad));
    let g = LinearModel::from_flat(&grad, model.num_classes(), model.dim(), model.kind);
    Ok((
        loss,
        ModelGradient {
            weights: g.weights,
            bias: g.bias,
        },
    ))
}

/// Mean softmax cross-entropy plus `l2/2 ‖W‖²`, and its gradient.
pub fn logistic_loss_gradient(model: &LinearModel, ts: &TrainSet, l2: f64) -> Result<(f64, ModelGradient)> {
    objective_with_gradient(Objective::Logistic, model, ts, l2)
}

/// Mean one-vs-rest hinge loss plus `l2/2 ‖W‖²`, and a subgradient.
pub fn hinge_loss_gradient(model: &LinearModel, ts: &TrainSet, l2: f64) -> Result<(f64, ModelGradient)> {
    objective_with_gradient(Objective::Hinge, model, ts, l2)
}

/// How per-distribution log-densities of one class are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlAggregate {
    #[default]
    Max,
    Mean,
}

/// Classifies by Gaussian log-likelihood under each class's calibrated distributions.
#[derive(Debug, Clone)]
pub struct MaxLikelihoodClassifier {
    classes: Vec<(usize, Vec<(Vec<f64>, Cholesky)>)>,
    aggregate: MlAggregate,
}

impl MaxLikelihoodClassifier {
    pub fn new(
        dists: &BTreeMap<usize, Vec<CalibratedDistribution>>,
        jitter: f64,
        aggregate: MlAggregate,
    ) -> Result<Self> {
        let mut classes = Vec::with_capacity(dists.len());
        for (&label, ds) in dists {
            if ds.is_empty() {
                return Err(Error::InvalidParams(format!("class {label} has no distributions")));
            }
            let factors = ds
                .iter()
                .enumerate()
                .map(|(j, d)| {
                    cholesky_psd(&d.covariance, jitter)
                        .map(|c| (d.mean.clone(), c))
                        .map_err(|e| Error::Sampling {
                            class: label,
                            distribution: j,
                            source: Box::new(e),
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            classes.push((label, factors));
        }
        if classes.is_empty() {
            return Err(Error::InvalidParams("no classes to classify".into()));
        }
        Ok(MaxLikelihoodClassifier { classes, aggregate })
    }

    /// Aggregated log-likelihood per class label, ascending by label.
    pub fn class_scores(&self, x: &[f64]) -> Result<Vec<(usize, f64)>> {
        self.classes
            .iter()
            .map(|(label, factors)| {
                let mut agg = match self.aggregate {
                    MlAggregate::Max => f64::NEG_INFINITY,
                    MlAggregate::Mean => 0.0,
                };
                for (mean, chol) in factors {
                    check_dim(chol.dim(), x.len())?;
                    let ld = chol.log_density(x, mean);
                    agg = match self.aggregate {
                        MlAggregate::Max => agg.max(ld),
                        MlAggregate::Mean => agg + ld / factors.len() as f64,
                    };
                }
                Ok((*label, agg))
            })
            .collect()
    }

    /// Label with the highest score; ties go to the lowest label.
    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        let scores = self.class_scores(x)?;
        let values: Vec<f64> = scores.iter().map(|s| s.1).collect();
        Ok(scores[argmax(&values)].0)
    }

    /// Largest jitter any factorization needed.
    pub fn max_jitter(&self) -> f64 {
        self.classes
            .iter()
            .flat_map(|(_, f)| f.iter().map(|(_, c)| c.jitter))
            .fold(0.0, f64::max)
    }
}

pub fn max_likelihood_classify(
    x: &[f64],
    dists: &BTreeMap<usize, Vec<CalibratedDistribution>>,
    jitter: f64,
    aggregate: MlAggregate,
) -> Result<usize> {
    MaxLikelihoodClassifier::new(dists, jitter, aggregate)?.classify(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> TrainSet {
        let mut ts = TrainSet::new(2, vec![10, 20]);
        for i in 0..20 {
            let o = (i as f64) * 0.05;
            ts.push(&[2.0 + o, 1.0 - o], 0).unwrap();
            ts.push(&[-2.0 - o, -1.0 + o], 1).unwrap();
        }
        ts
    }

    fn accuracy(m: &LinearModel, ts: &TrainSet) -> f64 {
        let hits = (0..ts.len())
            .filter(|&i| predict(m, ts.feature(i)).unwrap() == ts.labels()[i])
            .count();
        hits as f64 / ts.len() as f64
    }

    #[test]
    fn separable_blobs_fit_exactly() {
        let ts = blobs();
        let cfg = OptimizerConfig::default();
        assert_eq!(accuracy(&train_logistic(&ts, &cfg).unwrap(), &ts), 1.0);
        assert_eq!(accuracy(&train_svm(&ts, &cfg).unwrap(), &ts), 1.0);
        let plain = OptimizerConfig { momentum: false, ..cfg };
        assert_eq!(accuracy(&train_logistic(&ts, &plain).unwrap(), &ts), 1.0);
        let mini = OptimizerConfig {
            batch_size: Some(8),
            epochs: 50,
            ..cfg
        };
        assert_eq!(accuracy(&train_logistic(&ts, &mini).unwrap(), &ts), 1.0);
        assert_eq!(accuracy(&train_svm(&ts, &mini).unwrap(), &ts), 1.0);
    }

    #[test]
    fn symmetric_points_give_zero_bias() {
        let ts =
            TrainSet::from_samples(3, vec![0, 1], &[(vec![1.0, 0.5, -2.0], 0), (vec![-1.0, -0.5, 2.0], 1)]).unwrap();
        let m = train_logistic(&ts, &OptimizerConfig::default()).unwrap();
        assert!(m.bias.iter().all(|b| b.abs() < 1e-3), "{:?}", m.bias);
        assert_eq!(predict(&m, &[1.0, 0.5, -2.0]).unwrap(), 0);
    }

    #[test]
    fn single_class_rejected() {
        let ts = TrainSet::from_samples(1, vec![5], &[(vec![1.0], 0), (vec![2.0], 0)]).unwrap();
        assert!(train_svm(&ts, &OptimizerConfig::default()).is_err());
        let missing = TrainSet::from_samples(1, vec![5, 6], &[(vec![1.0], 0)]).unwrap();
        assert!(train_logistic(&missing, &OptimizerConfig::default()).is_err());
    }

    #[test]
    fn predict_rules() {
        let m = LinearModel {
            weights: Matrix::identity(3),
            bias: vec![0.0; 3],
            kind: ModelKind::Logistic,
        };
        assert_eq!(predict(&m, &[0.0, 1.0, 0.0]).unwrap(), 1);
        assert_eq!(predict(&m, &[0.5, 0.5, 0.5]).unwrap(), 0);
        assert_eq!(predict(&m, &[0.0, 0.7, 0.7]).unwrap(), 1);
        assert!(matches!(predict(&m, &[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn divergence_names_epoch() {
        let ts = TrainSet::from_samples(1, vec![0, 1], &[(vec![f64::MAX], 0), (vec![-f64::MAX], 1)]).unwrap();
        let err = train_logistic(&ts, &OptimizerConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn full_batch_loss_is_monotone() {
        let ts = blobs();
        for momentum in [false, true] {
            for lr in [1e-3, 1.0] {
                let cfg = OptimizerConfig {
                    learning_rate: lr,
                    momentum,
                    ..Default::default()
                };
                let trace = train_logistic_traced(&ts, &cfg).unwrap();
                assert_eq!(trace.losses.len(), cfg.epochs);
                assert!(trace.losses.windows(2).all(|w| w[1] <= w[0]));
            }
        }
    }

    #[test]
    fn max_likelihood_picks_density_peak_and_lowest_tie() {
        let d = |m: Vec<f64>| CalibratedDistribution {
            mean: m,
            covariance: Matrix::identity(2),
            source_support_index: 0,
            neighbor_class_ids: vec![0],
        };
        let mut dists = BTreeMap::new();
        dists.insert(0, vec![d(vec![0.0, 0.0])]);
        dists.insert(1, vec![d(vec![4.0, 0.0])]);
        assert_eq!(
            max_likelihood_classify(&[4.0, 0.0], &dists, 1e-6, MlAggregate::Max).unwrap(),
            1
        );
        assert_eq!(
            max_likelihood_classify(&[2.0, 3.0], &dists, 1e-6, MlAggregate::Max).unwrap(),
            0
        );
        assert_eq!(
            max_likelihood_classify(&[2.0, 3.0], &dists, 1e-6, MlAggregate::Mean).unwrap(),
            0
        );
    }
}
