//! Data transforms: per-dimension z-scoring and bounded-to-unbounded logit
//! maps. Models are trained and sampled in the transformed ("model") space;
//! the public sampling APIs map results back to original coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, invalid, Error, Result};

/// Standard deviations below this are clamped before division.
pub const MIN_STD: f64 = 1e-8;

/// Relative clamp width for the logit map.
pub const LOGIT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
    fitted: bool,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
            fitted: false,
        }
    }

    /// Column means and population standard deviations of `rows`.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "standardizer needs at least 2 rows, got {}",
                rows.len()
            )));
        }
        let dim = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            ensure_dim("standardizer row", dim, r.len())?;
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                let sd = (s / n).sqrt();
                if sd < MIN_STD {
                    log::warn!("standardizer: column {i} is constant (std {sd:e}); clamping to {MIN_STD:e}");
                    MIN_STD
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { mean, std, fitted: true })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn forward(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn inverse(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(self.mean.iter().zip(&self.std)).map(|(z, (m, s))| z * s + m).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitTransform {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl LogitTransform {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        ensure_dim("logit bounds", lo.len(), hi.len())?;
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite()) || l >= h {
                return invalid(format!("logit bounds for dim {i}: need finite lo < hi, got ({l}, {h})"));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    pub fn forward(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&x, (&lo, &hi))| {
                let eps = LOGIT_EPS * (hi - lo);
                let x = x.clamp(lo + eps, hi - eps);
                ((x - lo) / (hi - x)).ln()
            })
            .collect()
    }

    pub fn inverse(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&z, (&lo, &hi))| {
                let s = if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                };
                lo + (hi - lo) * s
            })
            .collect()
    }
}

/// Optional logit followed by z-scoring; the parameter-space transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VecTransform {
    pub logit: Option<LogitTransform>,
    pub standardizer: Standardizer,
}

impl VecTransform {
    pub fn identity(dim: usize) -> Self {
        Self {
            logit: None,
            standardizer: Standardizer::identity(dim),
        }
    }

    pub fn fit(rows: &[Vec<f64>], logit: Option<LogitTransform>) -> Result<Self> {
        let standardizer = match &logit {
            Some(l) => {
                let mapped: Vec<Vec<f64>> = rows.iter().map(|r| l.forward(r)).collect();
                Standardizer::fit(&mapped)?
            }
            None => Standardizer::fit(rows)?,
        };
        Ok(Self { logit, standardizer })
    }

    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    pub fn forward(&self, v: &[f64]) -> Vec<f64> {
        match &self.logit {
            Some(l) => self.standardizer.forward(&l.forward(v)),
            None => self.standardizer.forward(v),
        }
    }

    pub fn inverse(&self, v: &[f64]) -> Vec<f64> {
        let z = self.standardizer.inverse(v);
        match &self.logit {
            Some(l) => l.inverse(&z),
            None => z,
        }
    }
}

/// Parameter and observation transforms shared by every model of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transforms {
    pub theta: VecTransform,
    pub obs: Standardizer,
}

impl Transforms {
    pub fn identity(p: usize, d: usize) -> Self {
        Self {
            theta: VecTransform::identity(p),
            obs: Standardizer::identity(d),
        }
    }

    pub fn fit(thetas: &[Vec<f64>], obs: &[Vec<f64>], logit: Option<LogitTransform>) -> Result<Self> {
        Ok(Self {
            theta: VecTransform::fit(thetas, logit)?,
            obs: Standardizer::fit(obs)?,
        })
    }
}
