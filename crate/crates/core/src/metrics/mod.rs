//! Evaluation metrics over joint `(θ, y)` samples: exact W2, classifier
//! two-sample test accuracy, and posterior MSE.

mod assignment;
mod c2st;
mod report;

pub use assignment::solve_assignment;
pub use c2st::{jc2st, C2stConfig};
pub use report::{MetricReport, METRICS_HEADER};

use crate::error::{ensure_dim, invalid, Error, Result};
use crate::rng::RandomSource;

pub const DEFAULT_W2_CAP: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleLabel {
    Real,
    Generated,
}

/// Concatenated `θ ∥ y` vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSampleSet {
    vectors: Vec<Vec<f64>>,
    label: SampleLabel,
}

impl JointSampleSet {
    pub fn new(vectors: Vec<Vec<f64>>, label: SampleLabel) -> Result<Self> {
        if let Some(first) = vectors.first() {
            let dim = first.len();
            for (i, v) in vectors.iter().enumerate() {
                ensure_dim(&format!("joint vector {i}"), dim, v.len())?;
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(format!("joint vector {i} has non-finite entries")));
                }
            }
        }
        Ok(Self { vectors, label })
    }

    /// Pair each `θ_i` with `y_i`.
    pub fn from_pairs(thetas: &[Vec<f64>], obs: &[Vec<f64>], label: SampleLabel) -> Result<Self> {
        if thetas.len() != obs.len() {
            return invalid(format!("{} parameters but {} observations", thetas.len(), obs.len()));
        }
        let v = thetas.iter().zip(obs).map(|(t, y)| t.iter().chain(y).copied().collect()).collect();
        Self::new(v, label)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn label(&self) -> SampleLabel {
        self.label
    }
}

fn check_pair(a: &JointSampleSet, b: &JointSampleSet) -> Result<()> {
    if a.len() != b.len() {
        return invalid(format!("sample sizes differ: {} vs {}", a.len(), b.len()));
    }
    if !a.is_empty() {
        ensure_dim("joint dimension", a.dim(), b.dim())?;
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct W2Result {
    pub value: f64,
    /// True when both sets were subsampled down to the cap.
    pub subsampled: bool,
    pub n_used: usize,
}

/// Exact W2 between two equal-size empirical measures. Sets larger than
/// `cap` are an error unless `subsample` is set, in which case the same
/// deterministic index subset of size `cap` is taken from both.
pub fn w2_joint_with(real: &JointSampleSet, gen: &JointSampleSet, cap: usize, subsample: bool) -> Result<W2Result> {
    check_pair(real, gen)?;
    let n = real.len();
    if n == 0 {
        return invalid("W2 of empty samples");
    }
    let idx: Vec<usize> = if n > cap {
        if !subsample {
            return invalid(format!("{n} points exceed the exact-W2 cap {cap}"));
        }
        log::warn!("w2: subsampling {n} points to {cap}");
        let mut p = RandomSource::new(0).stream("w2-subsample").permutation(n);
        p.truncate(cap);
        p.sort_unstable();
        p
    } else {
        (0..n).collect()
    };
    let m = idx.len();
    let mut cost = Vec::with_capacity(m * m);
    for &i in &idx {
        for &j in &idx {
            cost.push(sq_dist(&real.vectors[i], &gen.vectors[j]));
        }
    }
    let (total, _) = solve_assignment(&cost, m)?;
    Ok(W2Result {
        value: (total.max(0.0) / m as f64).sqrt(),
        subsampled: m < n,
        n_used: m,
    })
}

/// Exact W2 with the default cap and no subsampling.
pub fn w2_joint(real: &JointSampleSet, gen: &JointSampleSet) -> Result<f64> {
    Ok(w2_joint_with(real, gen, DEFAULT_W2_CAP, false)?.value)
}

/// `(1 / (N·M)) Σ_j Σ_i ‖θ̃ʲᵢ − θ_j‖²`.
pub fn mse(gen_per_test: &[Vec<Vec<f64>>], truths: &[Vec<f64>]) -> Result<f64> {
    if gen_per_test.len() != truths.len() {
        return invalid(format!("{} sample groups but {} truths", gen_per_test.len(), truths.len()));
    }
    if truths.is_empty() {
        return invalid("mse of zero test points");
    }
    let m = gen_per_test[0].len();
    if m == 0 {
        return invalid("mse needs at least one sample per test point");
    }
    let mut total = 0.0;
    for (j, (group, truth)) in gen_per_test.iter().zip(truths).enumerate() {
        if group.len() != m {
            return invalid(format!("test point {j} has {} samples, expected {m}", group.len()));
        }
        for s in group {
            ensure_dim("mse sample", truth.len(), s.len())?;
            total += sq_dist(s, truth);
        }
    }
    Ok(total / (truths.len() * m) as f64)
}
