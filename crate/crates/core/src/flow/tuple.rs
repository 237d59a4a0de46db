use ndarray::{Array2, ArrayView2, Axis};

use super::{transport_batch, OdeConfig, VectorField};
use crate::baseline::ConditionalDensityModel;
use crate::error::{ensure_dim, invalid, Error, Result};
use crate::nn::from_rows;
use crate::rng::RandomSource;
use crate::tasks::{PairDataset, Simulator};

/// `(1 − t)·z0 + t·z1`.
pub fn interpolate(z0: &[f64], z1: &[f64], t: f64) -> Result<Vec<f64>> {
    ensure_dim("interpolation endpoint", z0.len(), z1.len())?;
    if !(0.0..=1.0).contains(&t) {
        return invalid(format!("interpolation time {t} outside [0, 1]"));
    }
    Ok(z0.iter().zip(z1).map(|(a, b)| (1.0 - t) * a + t * b).collect())
}

/// Row-wise interpolation with one time per row.
pub(crate) fn interpolate_rows(z0: ArrayView2<f64>, z1: ArrayView2<f64>, ts: &[f64]) -> Array2<f64> {
    let mut out = z0.to_owned();
    for ((mut row, r1), &t) in out.rows_mut().into_iter().zip(z1.rows()).zip(ts) {
        row.zip_mut_with(&r1, |a, &b| *a = (1.0 - t) * *a + t * b);
    }
    out
}

/// One training tuple, all vectors in model space.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTuple {
    pub y: Vec<f64>,
    pub theta1: Vec<f64>,
    pub theta0: Vec<f64>,
    pub x1: Vec<f64>,
    pub x0: Vec<f64>,
    /// The transported base draw the source θ₀ was sampled at.
    pub x_tilde: Vec<f64>,
}

/// A minibatch of tuples stored row-wise. It holds plain values only, so
/// nothing computed from it can depend on the data-space field's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TupleBatch {
    pub y: Array2<f64>,
    pub theta1: Array2<f64>,
    pub theta0: Array2<f64>,
    pub x1: Array2<f64>,
    pub x0: Array2<f64>,
    pub x_tilde: Array2<f64>,
}

impl TupleBatch {
    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> TrainingTuple {
        TrainingTuple {
            y: self.y.row(i).to_vec(),
            theta1: self.theta1.row(i).to_vec(),
            theta0: self.theta0.row(i).to_vec(),
            x1: self.x1.row(i).to_vec(),
            x0: self.x0.row(i).to_vec(),
            x_tilde: self.x_tilde.row(i).to_vec(),
        }
    }

    pub fn from_tuples(tuples: &[TrainingTuple]) -> Result<Self> {
        let Some(first) = tuples.first() else {
            return invalid("empty tuple list");
        };
        let (p, d) = (first.theta1.len(), first.y.len());
        let col =
            |f: &dyn Fn(&TrainingTuple) -> &Vec<f64>, w: usize| from_rows(&tuples.iter().map(|t| f(t).clone()).collect::<Vec<_>>(), w);
        Ok(Self {
            y: col(&|t| &t.y, d)?,
            theta1: col(&|t| &t.theta1, p)?,
            theta0: col(&|t| &t.theta0, p)?,
            x1: col(&|t| &t.x1, d)?,
            x0: col(&|t| &t.x0, d)?,
            x_tilde: col(&|t| &t.x_tilde, d)?,
        })
    }
}

/// Draws training tuples from a calibration set.
///
/// `(θ₁, y)` is drawn uniformly from the calibration pairs, `x₁ = S(θ₁)`,
/// `x₀ ~ N(y, σ²I)`, `x̃` is `x₀` pushed through the data-space flow, and
/// `θ₀ ~ p̂(θ | x̃)`. The baseline is only read.
pub struct TupleSampler<'a> {
    cal_theta_raw: Vec<Vec<f64>>,
    cal_theta: Array2<f64>,
    cal_y: Array2<f64>,
    simulator: &'a dyn Simulator,
    baseline: &'a ConditionalDensityModel,
    sigma: f64,
    ode: OdeConfig,
}

impl<'a> TupleSampler<'a> {
    pub fn new(
        cal: &PairDataset,
        simulator: &'a dyn Simulator,
        baseline: &'a ConditionalDensityModel,
        sigma: f64,
        ode: OdeConfig,
    ) -> Result<Self> {
        if cal.is_empty() {
            return Err(Error::InsufficientData("calibration set is empty".into()));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return invalid(format!("base noise scale must be finite and >= 0, got {sigma}"));
        }
        ensure_dim("calibration theta", baseline.param_dim(), cal.param_dim())?;
        ensure_dim("calibration obs", baseline.obs_dim(), cal.obs_dim())?;
        let tf = baseline.transforms();
        let th: Vec<_> = cal.thetas().iter().map(|t| tf.theta.forward(t)).collect();
        let ys: Vec<_> = cal.obs().iter().map(|y| tf.obs.forward(y)).collect();
        Ok(Self {
            cal_theta_raw: cal.thetas().to_vec(),
            cal_theta: from_rows(&th, cal.param_dim())?,
            cal_y: from_rows(&ys, cal.obs_dim())?,
            simulator,
            baseline,
            sigma,
            ode,
        })
    }

    pub fn len(&self) -> usize {
        self.cal_theta_raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cal_theta_raw.is_empty()
    }

    /// `n` tuples. `field_x` is only evaluated, never differentiated.
    pub fn sample(&self, field_x: &VectorField, n: usize, rng: &mut RandomSource) -> Result<TupleBatch> {
        if n == 0 {
            return invalid("tuple batch size must be >= 1");
        }
        let idx: Vec<usize> = (0..n).map(|_| rng.below(self.len())).collect();
        let y = self.cal_y.select(Axis(0), &idx);
        let theta1 = self.cal_theta.select(Axis(0), &idx);
        let obs_tf = &self.baseline.transforms().obs;
        let mut x1_rows = Vec::with_capacity(n);
        for &i in &idx {
            let x = self.simulator.simulate(&self.cal_theta_raw[i], rng)?;
            x1_rows.push(obs_tf.forward(&x));
        }
        let x1 = from_rows(&x1_rows, y.ncols())?;
        let mut x0 = y.clone();
        x0.iter_mut().for_each(|v| *v += self.sigma * rng.normal());
        let ctx = field_x.context(y.view())?;
        let x_tilde = transport_batch(field_x, x0.clone(), ctx.view(), self.ode)?;
        let theta0 = self.baseline.sample_model(x_tilde.view(), rng)?;
        Ok(TupleBatch {
            y,
            theta1,
            theta0,
            x1,
            x0,
            x_tilde,
        })
    }
}

/// A single tuple; see [`TupleSampler`].
pub fn sample_training_tuple(
    cal: &PairDataset,
    simulator: &dyn Simulator,
    baseline: &ConditionalDensityModel,
    field_x: &VectorField,
    sigma: f64,
    ode: OdeConfig,
    rng: &mut RandomSource,
) -> Result<TrainingTuple> {
    let s = TupleSampler::new(cal, simulator, baseline, sigma, ode)?;
    Ok(s.sample(field_x, 1, rng)?.get(0))
}
