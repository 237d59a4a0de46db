use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{ConditionalDensityModel, HeadKind};
use crate::error::{Error, Result};
use crate::nn::{clip_global_norm_in_place, from_rows, AdamState, GradClipConfig};
use crate::rng::RandomSource;
use crate::tasks::PairDataset;
use crate::transform::{LogitTransform, Transforms};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpeConfig {
    pub hidden: Vec<usize>,
    pub head: HeadKind,
    /// Context width fed to the coupling head.
    pub ctx_dim: usize,
    pub coupling_layers: usize,
    pub coupling_hidden: Vec<usize>,
    pub lr: f64,
    /// Fine-tuning learning rate as a fraction of `lr`.
    pub finetune_lr_factor: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub val_fraction: f64,
    pub clip: Option<GradClipConfig>,
}

impl Default for NpeConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            head: HeadKind::Gaussian,
            ctx_dim: 16,
            coupling_layers: 4,
            coupling_hidden: vec![64, 64],
            lr: 1e-3,
            finetune_lr_factor: 0.1,
            batch_size: 128,
            max_epochs: 200,
            patience: 10,
            val_fraction: 0.2,
            clip: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// Epoch (1-based) whose parameters were kept; 0 means initialization.
    pub best_epoch: usize,
    pub initial_val_nll: f64,
    pub best_val_nll: f64,
    pub final_val_nll: f64,
    pub train_size: usize,
    pub val_size: usize,
}

const MIN_PAIRS: usize = 10;

struct ModelData {
    theta: Array2<f64>,
    obs: Array2<f64>,
}

impl ModelData {
    fn new(ds: &PairDataset, tf: &Transforms) -> Result<Self> {
        let th: Vec<Vec<f64>> = ds.thetas().iter().map(|t| tf.theta.forward(t)).collect();
        let ob: Vec<Vec<f64>> = ds.obs().iter().map(|o| tf.obs.forward(o)).collect();
        Ok(Self {
            theta: from_rows(&th, ds.param_dim())?,
            obs: from_rows(&ob, ds.obs_dim())?,
        })
    }

    fn len(&self) -> usize {
        self.theta.nrows()
    }
}

fn mean_nll(model: &ConditionalDensityModel, data: &ModelData) -> Result<f64> {
    let lp = model.log_prob_model(data.theta.view(), data.obs.view())?;
    Ok(-lp.iter().sum::<f64>() / lp.len() as f64)
}

fn fit(
    model: &mut ConditionalDensityModel,
    train: &ModelData,
    val: &ModelData,
    lr: f64,
    cfg: &NpeConfig,
    rng: &mut RandomSource,
) -> Result<TrainReport> {
    let mut params = model.params();
    let mut opt = AdamState::new(params.len(), lr);
    let initial = mean_nll(model, val)?;
    let mut best = (initial, 0usize, params.clone());
    let mut last = initial;
    let mut epochs_run = 0;
    let bs = cfg.batch_size.max(1);
    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        let perm = rng.permutation(train.len());
        for idx in perm.chunks(bs) {
            let th = train.theta.select(Axis(0), idx);
            let ob = train.obs.select(Axis(0), idx);
            let (nll, mut g) = model.nll_grad(th.view(), ob.view())?;
            if !nll.is_finite() {
                return Err(Error::NonFinite(format!("training loss is {nll} in epoch {epoch}")));
            }
            let scale = 1.0 / idx.len() as f64;
            g.iter_mut().for_each(|v| *v *= scale);
            if let Some(c) = cfg.clip {
                clip_global_norm_in_place(&mut g, c);
            }
            opt.step(&mut params, &g)?;
            model.set_params(&params)?;
        }
        last = mean_nll(model, val)?;
        if !last.is_finite() {
            return Err(Error::NonFinite(format!("validation loss is {last} after epoch {epoch}")));
        }
        if last < best.0 {
            best = (last, epoch, params.clone());
        } else if epoch - best.1 >= cfg.patience {
            break;
        }
    }
    model.set_params(&best.2)?;
    Ok(TrainReport {
        epochs_run,
        best_epoch: best.1,
        initial_val_nll: initial,
        best_val_nll: best.0,
        final_val_nll: last,
        train_size: train.len(),
        val_size: val.len(),
    })
}

fn check_size(pairs: &PairDataset) -> Result<()> {
    if pairs.len() < MIN_PAIRS {
        return Err(Error::InsufficientData(format!(
            "density training needs at least {MIN_PAIRS} pairs, got {}",
            pairs.len()
        )));
    }
    Ok(())
}

/// Fit transforms on the training split, then train a fresh model by
/// maximum likelihood with early stopping on the validation split.
pub fn train_npe(
    pairs: &PairDataset,
    logit: Option<LogitTransform>,
    cfg: &NpeConfig,
    rng: &mut RandomSource,
) -> Result<(ConditionalDensityModel, TrainReport)> {
    check_size(pairs)?;
    let (train, val) = pairs.split_validation(cfg.val_fraction, &mut rng.stream("split"))?;
    let tf = Transforms::fit(train.thetas(), train.obs(), logit)?;
    let mut model = ConditionalDensityModel::new(cfg, tf, &mut rng.stream("init"))?;
    let (tr, va) = (
        ModelData::new(&train, model.transforms())?,
        ModelData::new(&val, model.transforms())?,
    );
    let report = fit(&mut model, &tr, &va, cfg.lr, cfg, &mut rng.stream("epochs"))?;
    log::info!(
        "npe: {} epochs, best val nll {:.4} at epoch {}",
        report.epochs_run,
        report.best_val_nll,
        report.best_epoch
    );
    Ok((model, report))
}

/// As [`train_npe`] with externally fitted transforms.
pub fn train_npe_with_transforms(
    pairs: &PairDataset,
    transforms: &Transforms,
    cfg: &NpeConfig,
    rng: &mut RandomSource,
) -> Result<(ConditionalDensityModel, TrainReport)> {
    check_size(pairs)?;
    let (train, val) = pairs.split_validation(cfg.val_fraction, &mut rng.stream("split"))?;
    let mut model = ConditionalDensityModel::new(cfg, transforms.clone(), &mut rng.stream("init"))?;
    let (tr, va) = (ModelData::new(&train, transforms)?, ModelData::new(&val, transforms)?);
    let report = fit(&mut model, &tr, &va, cfg.lr, cfg, &mut rng.stream("epochs"))?;
    Ok((model, report))
}

/// NPE trained on calibration `(θ, y)` pairs alone.
pub fn train_npe_calibration_only(
    cal: &PairDataset,
    transforms: &Transforms,
    cfg: &NpeConfig,
    rng: &mut RandomSource,
) -> Result<(ConditionalDensityModel, TrainReport)> {
    train_npe_with_transforms(cal, transforms, cfg, rng)
}

/// Continue maximum-likelihood training of a simulation-pretrained model on
/// calibration pairs at `finetune_lr_factor × lr`, early-stopped on a
/// validation split. An empty calibration set returns the model unchanged.
pub fn finetune(
    model: &ConditionalDensityModel,
    cal: &PairDataset,
    cfg: &NpeConfig,
    rng: &mut RandomSource,
) -> Result<(ConditionalDensityModel, Option<TrainReport>)> {
    if cal.is_empty() {
        log::warn!("finetune: empty calibration set, returning the pretrained model unchanged");
        return Ok((model.clone(), None));
    }
    if cal.len() < 2 {
        return Err(Error::InsufficientData("finetune needs at least 2 calibration pairs".into()));
    }
    let (train, val) = cal.split_validation(cfg.val_fraction, &mut rng.stream("split"))?;
    let mut tuned = model.clone();
    let (tr, va) = (
        ModelData::new(&train, model.transforms())?,
        ModelData::new(&val, model.transforms())?,
    );
    let report = fit(
        &mut tuned,
        &tr,
        &va,
        cfg.lr * cfg.finetune_lr_factor,
        cfg,
        &mut rng.stream("epochs"),
    )?;
    Ok((tuned, Some(report)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::Provenance;

    fn independent_pairs(n: usize, seed: u64) -> PairDataset {
        let mut rng = RandomSource::new(seed);
        let th: Vec<Vec<f64>> = (0..n).map(|_| vec![1.0 + 2.0 * rng.normal(), -0.5 + 0.5 * rng.normal()]).collect();
        let ob: Vec<Vec<f64>> = (0..n).map(|_| rng.normal_vec(3)).collect();
        PairDataset::new(th, ob, Provenance::Simulated).unwrap()
    }

    fn small_cfg() -> NpeConfig {
        NpeConfig {
            hidden: vec![16, 16],
            max_epochs: 60,
            ..NpeConfig::default()
        }
    }

    #[test]
    fn rejects_tiny_dataset() {
        let ds = independent_pairs(1, 0);
        let err = train_npe(&ds, None, &small_cfg(), &mut RandomSource::new(0));
        assert!(matches!(err, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn report_invariant_and_determinism() {
        let ds = independent_pairs(400, 1);
        let (m1, r1) = train_npe(&ds, None, &small_cfg(), &mut RandomSource::new(2)).unwrap();
        let (m2, _) = train_npe(&ds, None, &small_cfg(), &mut RandomSource::new(2)).unwrap();
        assert!(r1.best_val_nll <= r1.final_val_nll + 1e-9);
        assert_eq!(m1.params_hash(), m2.params_hash());
    }

    /// With θ independent of x the conditional should match the
    /// unconditional Gaussian fit, which in z-scored space has NLL
    /// `p/2 · (1 + ln 2π)`.
    #[test]
    fn independent_data_learns_marginal() {
        let ds = independent_pairs(4000, 3);
        let (model, report) = train_npe(&ds, None, &small_cfg(), &mut RandomSource::new(4)).unwrap();
        let marginal = 0.5 * 2.0 * (1.0 + (2.0 * std::f64::consts::PI).ln());
        let rel = (report.best_val_nll - marginal).abs() / marginal;
        assert!(rel < 0.02, "val nll {} vs marginal {marginal}", report.best_val_nll);
        assert_eq!(model.param_dim(), 2);
    }

    #[test]
    fn finetune_empty_is_identity() {
        let ds = independent_pairs(100, 5);
        let (m, _) = train_npe(&ds, None, &small_cfg(), &mut RandomSource::new(6)).unwrap();
        let empty = PairDataset::empty(2, 3, Provenance::Calibration);
        let (tuned, report) = finetune(&m, &empty, &small_cfg(), &mut RandomSource::new(7)).unwrap();
        assert!(report.is_none());
        assert_eq!(tuned, m);
    }

    #[test]
    fn finetune_without_shift_does_not_degrade() {
        let ds = independent_pairs(3000, 8);
        let (m, _) = train_npe(&ds, None, &small_cfg(), &mut RandomSource::new(9)).unwrap();
        let more = independent_pairs(500, 10);
        let (_, report) = finetune(&m, &more, &small_cfg(), &mut RandomSource::new(11)).unwrap();
        let r = report.unwrap();
        assert!(r.best_val_nll <= r.initial_val_nll * 1.05);
    }
}
