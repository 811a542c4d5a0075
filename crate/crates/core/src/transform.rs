//! Tukey's ladder of powers and the skewness diagnostics that motivate it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power `lambda` of the ladder; `log_epsilon` is added inside the logarithm
/// for exact zeros when `lambda == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TukeyParams {
    pub lambda: f64,
    pub log_epsilon: f64,
}

impl Default for TukeyParams {
    fn default() -> Self {
        TukeyParams {
            lambda: 0.5,
            log_epsilon: 1e-6,
        }
    }
}

impl TukeyParams {
    pub fn with_lambda(lambda: f64) -> Self {
        TukeyParams {
            lambda,
            ..TukeyParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() {
            return Err(Error::InvalidParams(format!(
                "lambda must be finite, got {}",
                self.lambda
            )));
        }
        if !(self.log_epsilon > 0.0 && self.log_epsilon.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "log_epsilon must be positive, got {}",
                self.log_epsilon
            )));
        }
        Ok(())
    }

    #[inline]
    fn apply(&self, v: f64) -> f64 {
        if self.lambda == 1.0 {
            v
        } else if self.lambda == 0.0 {
            if v == 0.0 {
                self.log_epsilon.ln()
            } else {
                v.ln()
            }
        } else if self.lambda == 0.5 {
            v.sqrt()
        } else {
            v.powf(self.lambda)
        }
    }
}

/// Component-wise `x^lambda` (natural log at `lambda == 0`).
///
/// Inputs must be finite and non-negative. `lambda == 1` returns the input
/// bit-for-bit.
pub fn tukey_transform(x: &[f64], params: &TukeyParams) -> Result<Vec<f64>> {
    let mut out = x.to_vec();
    tukey_transform_in_place(&mut out, params)?;
    Ok(out)
}

pub fn tukey_transform_in_place(x: &mut [f64], params: &TukeyParams) -> Result<()> {
    params.validate()?;
    for (i, v) in x.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Data(format!("component {i} is not finite ({v})")));
        }
        if *v < 0.0 {
            return Err(Error::Domain(format!(
                "component {i} is negative ({v}); the power transform needs non-negative input"
            )));
        }
    }
    for v in x.iter_mut() {
        *v = params.apply(*v);
    }
    if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Data(format!("component {i} transformed to non-finite {v}")));
    }
    Ok(())
}

/// Adjusted Fisher–Pearson sample skewness `G1 = g1 * sqrt(n(n-1)) / (n-2)`.
pub fn sample_skewness(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 3 {
        return Err(Error::UndefinedSkewness(format!("need at least 3 values, got {n}")));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (m2, m3) = values.iter().fold((0.0, 0.0), |(m2, m3), v| {
        let d = v - mean;
        (m2 + d * d, m3 + d * d * d)
    });
    let (m2, m3) = (m2 / nf, m3 / nf);
    if m2 <= f64::EPSILON * mean.abs().max(1.0).powi(2) * 1e-4 || m2 == 0.0 {
        return Err(Error::UndefinedSkewness("zero variance".into()));
    }
    let g1 = m3 / m2.powf(1.5);
    Ok(g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0))
}

/// Mean over dimensions of the per-dimension sample skewness of `features`.
pub fn mean_marginal_skewness(features: &[Vec<f64>]) -> Result<f64> {
    let dim = features.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(Error::UndefinedSkewness("no features".into()));
    }
    let mut column = vec![0.0; features.len()];
    let mut total = 0.0;
    for j in 0..dim {
        for (c, f) in column.iter_mut().zip(features) {
            *c = f[j];
        }
        total += sample_skewness(&column)?;
    }
    Ok(total / dim as f64)
}
