use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{transport_batch, OdeConfig, VectorField};
use crate::baseline::ConditionalDensityModel;
use crate::error::{ensure_dim, invalid, Result};
use crate::nn::{checkpoint, from_rows, to_rows};
use crate::rng::RandomSource;

pub const CHECKPOINT_KIND: &str = "fmcpe-model";

/// Frozen baseline plus the two trained vector fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmcpeModel {
    pub(crate) baseline: ConditionalDensityModel,
    /// Parameter hash of the baseline the fields were trained against.
    pub(crate) baseline_hash: String,
    pub(crate) field_x: VectorField,
    pub(crate) field_theta: VectorField,
    pub(crate) sigma: f64,
    pub(crate) ode_train: OdeConfig,
    pub(crate) ode_infer: OdeConfig,
}

impl FmcpeModel {
    pub fn new(
        baseline: ConditionalDensityModel,
        field_x: VectorField,
        field_theta: VectorField,
        sigma: f64,
        ode_train: OdeConfig,
        ode_infer: OdeConfig,
    ) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return invalid(format!("base noise scale must be > 0, got {sigma}"));
        }
        ensure_dim("data field state", baseline.obs_dim(), field_x.state_dim())?;
        ensure_dim("data field condition", baseline.obs_dim(), field_x.cond_dim())?;
        ensure_dim("parameter field state", baseline.param_dim(), field_theta.state_dim())?;
        ensure_dim("parameter field condition", baseline.obs_dim(), field_theta.cond_dim())?;
        Ok(Self {
            baseline_hash: baseline.params_hash(),
            baseline,
            field_x,
            field_theta,
            sigma,
            ode_train,
            ode_infer,
        })
    }

    pub fn baseline(&self) -> &ConditionalDensityModel {
        &self.baseline
    }

    pub fn baseline_hash(&self) -> &str {
        &self.baseline_hash
    }

    pub fn field_x(&self) -> &VectorField {
        &self.field_x
    }

    pub fn field_theta(&self) -> &VectorField {
        &self.field_theta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn ode_infer(&self) -> OdeConfig {
        self.ode_infer
    }

    pub fn ode_train(&self) -> OdeConfig {
        self.ode_train
    }

    pub fn set_ode_infer(&mut self, cfg: OdeConfig) {
        self.ode_infer = cfg;
    }

    pub fn param_dim(&self) -> usize {
        self.baseline.param_dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.baseline.obs_dim()
    }

    /// Hash over both fields' parameters.
    pub fn fields_hash(&self) -> String {
        let mut p = self.field_x.params();
        p.extend(self.field_theta.params());
        checkpoint::params_hash(&p)
    }

    /// Surrogate observations `x̃`: `x₀ ~ N(y, σ²I)` pushed through the data
    /// flow, one per row of model-space `y`.
    pub fn surrogate_obs_model(&self, y: ArrayView2<f64>, rng: &mut RandomSource) -> Result<Array2<f64>> {
        let mut x0 = y.to_owned();
        x0.iter_mut().for_each(|v| *v += self.sigma * rng.normal());
        let ctx = self.field_x.context(y)?;
        transport_batch(&self.field_x, x0, ctx.view(), self.ode_infer)
    }

    /// Source draws `θ₀ ~ p̂(θ | x̃)`, model space.
    pub fn source_sample_model(&self, y: ArrayView2<f64>, rng: &mut RandomSource) -> Result<Array2<f64>> {
        let xt = self.surrogate_obs_model(y, rng)?;
        self.baseline.sample_model(xt.view(), rng)
    }

    /// Corrected posterior draws, one per row of model-space `y`.
    pub fn sample_model(&self, y: ArrayView2<f64>, rng: &mut RandomSource) -> Result<Array2<f64>> {
        ensure_dim("observation", self.obs_dim(), y.ncols())?;
        let theta0 = self.source_sample_model(y, rng)?;
        let ctx = self.field_theta.context(y)?;
        transport_batch(&self.field_theta, theta0, ctx.view(), self.ode_infer)
    }

    /// `n` corrected posterior draws for one raw observation, in original
    /// θ coordinates. Depends only on the model, `y` and `rng`.
    pub fn sample_posterior(&self, y: &[f64], n: usize, rng: &mut RandomSource) -> Result<Vec<Vec<f64>>> {
        ensure_dim("observation", self.obs_dim(), y.len())?;
        if n == 0 {
            return Ok(Vec::new());
        }
        let ym = self.baseline.transforms().obs.forward(y);
        let batch = from_rows(&vec![ym; n], self.obs_dim())?;
        let th = self.sample_model(batch.view(), rng)?;
        let tf = &self.baseline.transforms().theta;
        Ok(to_rows(&th).iter().map(|r| tf.inverse(r)).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        checkpoint::to_json(CHECKPOINT_KIND, self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        checkpoint::from_json(CHECKPOINT_KIND, text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, CHECKPOINT_KIND, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        checkpoint::load(path, CHECKPOINT_KIND)
    }
}
