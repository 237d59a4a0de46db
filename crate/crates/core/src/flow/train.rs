use serde::{Deserialize, Serialize};

use super::loss::{joint_loss, joint_loss_terms};
use super::{FmcpeModel, OdeConfig, TupleBatch, TupleSampler, VectorField, VectorFieldConfig};
use crate::baseline::ConditionalDensityModel;
use crate::error::{invalid, Error, Result};
use crate::nn::{clip_global_norm_in_place, AdamState, GradClipConfig};
use crate::rng::RandomSource;
use crate::tasks::{PairDataset, Simulator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmcpeConfig {
    pub field_x: VectorFieldConfig,
    pub field_theta: VectorFieldConfig,
    /// Base noise scale around `y`, standardized observation units.
    pub sigma: f64,
    pub ode_train: OdeConfig,
    pub ode_infer: OdeConfig,
    pub lr: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub eval_every: usize,
    /// Optimizer steps without validation improvement before stopping.
    pub patience: usize,
    /// No early stop before this many steps.
    pub min_steps: usize,
    pub val_fraction: f64,
    /// Tuples drawn from the validation pairs per evaluation.
    pub val_tuples: usize,
    pub clip: GradClipConfig,
}

impl Default for FmcpeConfig {
    fn default() -> Self {
        Self {
            field_x: VectorFieldConfig::default(),
            field_theta: VectorFieldConfig::default(),
            sigma: 0.1,
            ode_train: OdeConfig::euler(64),
            ode_infer: OdeConfig::rk4(64),
            lr: 3e-4,
            batch_size: 32,
            max_steps: 20_000,
            eval_every: 50,
            patience: 200,
            min_steps: 0,
            val_fraction: 0.2,
            val_tuples: 256,
            clip: GradClipConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmcpeReport {
    pub steps_run: usize,
    pub best_step: usize,
    pub best_val_loss: f64,
    pub history: Vec<LossPoint>,
    /// `(data term, parameter term)` on fixed training tuples at initialization.
    pub initial_train_terms: (f64, f64),
    /// The same evaluation after restoring the best parameters.
    pub final_train_terms: (f64, f64),
    pub train_size: usize,
    pub val_size: usize,
}

/// Loss terms on tuples from a fixed stream, so repeated evaluations share
/// their random numbers.
fn eval_terms(sampler: &TupleSampler, fx: &VectorField, ft: &VectorField, n: usize, stream: &RandomSource) -> Result<(f64, f64)> {
    let mut rng = stream.clone();
    let batch: TupleBatch = sampler.sample(fx, n, &mut rng)?;
    let ts: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    let taus: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    joint_loss_terms(&batch, &ts, &taus, fx, ft)
}

fn snapshot(baseline: &ConditionalDensityModel, fx: &VectorField, ft: &VectorField, cfg: &FmcpeConfig) -> Option<String> {
    FmcpeModel::new(baseline.clone(), fx.clone(), ft.clone(), cfg.sigma, cfg.ode_train, cfg.ode_infer)
        .and_then(|m| m.to_json())
        .ok()
}

/// Jointly train both vector fields on a calibration set against a frozen
/// baseline. Early-stops on the validation joint loss and restores the best
/// parameters.
pub fn train_fmcpe(
    cal: &PairDataset,
    simulator: &dyn Simulator,
    baseline: &ConditionalDensityModel,
    cfg: &FmcpeConfig,
    rng: &RandomSource,
) -> Result<(FmcpeModel, FmcpeReport)> {
    if cal.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 calibration pairs for a train/validation split, got {}",
            cal.len()
        )));
    }
    if cfg.batch_size == 0 || cfg.eval_every == 0 || cfg.val_tuples == 0 {
        return invalid("batch size, evaluation interval and validation tuple count must be >= 1");
    }
    let frozen = baseline.params_hash();
    let (train, val) = cal.split_validation(cfg.val_fraction, &mut rng.stream("split"))?;
    let (p, d) = (baseline.param_dim(), baseline.obs_dim());
    let mut init = rng.stream("init");
    let mut fx = VectorField::new(d, d, &cfg.field_x, &mut init)?;
    let mut ft = VectorField::new(p, d, &cfg.field_theta, &mut init)?;

    let train_s = TupleSampler::new(&train, simulator, baseline, cfg.sigma, cfg.ode_train)?;
    let val_s = TupleSampler::new(&val, simulator, baseline, cfg.sigma, cfg.ode_train)?;
    let train_eval = rng.stream("train-eval");
    let val_eval = rng.stream("val-eval");
    let initial_train_terms = eval_terms(&train_s, &fx, &ft, cfg.val_tuples, &train_eval)?;

    let mut opt_x = AdamState::new(fx.param_count(), cfg.lr);
    let mut opt_t = AdamState::new(ft.param_count(), cfg.lr);
    let mut px = fx.params();
    let mut pt = ft.params();
    let mut steps = rng.stream("steps");

    let val_loss = |fx: &VectorField, ft: &VectorField| -> Result<f64> {
        let (a, b) = eval_terms(&val_s, fx, ft, cfg.val_tuples, &val_eval)?;
        Ok(a + b)
    };
    let mut best = val_loss(&fx, &ft)?;
    let mut best_step = 0;
    let mut best_params = (px.clone(), pt.clone());
    let mut history = vec![LossPoint { step: 0, val_loss: best }];
    let mut step = 0;
    let diverged = |step: usize, msg: String, bp: &(Vec<f64>, Vec<f64>), fx: &VectorField, ft: &VectorField| {
        let (mut gx, mut gt) = (fx.clone(), ft.clone());
        let last_good = gx
            .set_params(&bp.0)
            .and(gt.set_params(&bp.1))
            .ok()
            .and_then(|_| snapshot(baseline, &gx, &gt, cfg));
        Error::Diverged {
            step,
            message: msg,
            last_good,
        }
    };

    while step < cfg.max_steps {
        let batch = train_s.sample(&fx, cfg.batch_size, &mut steps)?;
        let mut jl = match joint_loss(&batch, &fx, &ft, &mut steps) {
            Ok(jl) => jl,
            Err(Error::NonFinite(m)) => return Err(diverged(step, m, &best_params, &fx, &ft)),
            Err(e) => return Err(e),
        };
        clip_global_norm_in_place(&mut jl.grad_x, cfg.clip);
        clip_global_norm_in_place(&mut jl.grad_theta, cfg.clip);
        if let Err(e) = opt_x.step(&mut px, &jl.grad_x).and(opt_t.step(&mut pt, &jl.grad_theta)) {
            return Err(diverged(step, e.to_string(), &best_params, &fx, &ft));
        }
        fx.set_params(&px)?;
        ft.set_params(&pt)?;
        step += 1;

        if step % cfg.eval_every == 0 || step == cfg.max_steps {
            let v = match val_loss(&fx, &ft) {
                Ok(v) if v.is_finite() => v,
                Ok(v) => return Err(diverged(step, format!("validation loss is {v}"), &best_params, &fx, &ft)),
                Err(Error::NonFinite(m)) => return Err(diverged(step, m, &best_params, &fx, &ft)),
                Err(e) => return Err(e),
            };
            history.push(LossPoint { step, val_loss: v });
            log::debug!("fmcpe step {step}: train {:.5} val {v:.5}", jl.loss);
            if v < best {
                best = v;
                best_step = step;
                best_params = (px.clone(), pt.clone());
            } else if step - best_step >= cfg.patience && step >= cfg.min_steps {
                break;
            }
        }
    }

    fx.set_params(&best_params.0)?;
    ft.set_params(&best_params.1)?;
    if baseline.params_hash() != frozen {
        return Err(Error::InvalidArgument("baseline parameters changed during training".into()));
    }
    let final_train_terms = eval_terms(&train_s, &fx, &ft, cfg.val_tuples, &train_eval)?;
    let report = FmcpeReport {
        steps_run: step,
        best_step,
        best_val_loss: best,
        history,
        initial_train_terms,
        final_train_terms,
        train_size: train.len(),
        val_size: val.len(),
    };
    let model = FmcpeModel::new(baseline.clone(), fx, ft, cfg.sigma, cfg.ode_train, cfg.ode_infer)?;
    Ok((model, report))
}
