use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_pair, JointSampleSet};
use crate::error::{invalid, Error, Result};
use crate::nn::{from_rows, AdamState, Mlp};
use crate::rng::RandomSource;
use crate::transform::Standardizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C2stConfig {
    pub folds: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub min_per_class: usize,
}

impl Default for C2stConfig {
    fn default() -> Self {
        Self {
            folds: 3,
            hidden: vec![64, 64],
            lr: 1e-3,
            max_epochs: 300,
            patience: 20,
            batch_size: 128,
            min_per_class: 30,
        }
    }
}

/// Mean binary cross-entropy of logits and its gradient w.r.t. the logits.
fn bce(logits: &Array2<f64>, labels: &[f64]) -> (f64, Array2<f64>) {
    let n = labels.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let z = logits[[i, 0]];
        // log(1 + e^z) − y z, stable form
        loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
        let p = 1.0 / (1.0 + (-z).exp());
        grad[[i, 0]] = (p - y) / n;
    }
    (loss / n, grad)
}

fn accuracy(logits: &Array2<f64>, labels: &[f64]) -> f64 {
    let hits = labels
        .iter()
        .enumerate()
        .filter(|(i, &y)| (logits[[*i, 0]] > 0.0) == (y > 0.5))
        .count();
    hits as f64 / labels.len() as f64
}

fn train_fold(x_tr: &Array2<f64>, y_tr: &[f64], x_va: &Array2<f64>, y_va: &[f64], cfg: &C2stConfig, rng: &mut RandomSource) -> Result<f64> {
    let mut widths = vec![x_tr.ncols()];
    widths.extend_from_slice(&cfg.hidden);
    widths.push(1);
    let mut net = Mlp::new(&widths, 1.0, &mut rng.stream("init"))?;
    let mut opt = AdamState::new(net.param_count(), cfg.lr);
    let mut params = net.flatten();
    let mut order_rng = rng.stream("order");
    let val_loss = |net: &Mlp| -> Result<f64> { Ok(bce(&net.forward_batch(x_va.view())?, y_va).0) };
    let mut best = val_loss(&net)?;
    let mut best_params = params.clone();
    let mut since = 0;
    let n = x_tr.nrows();
    for _ in 0..cfg.max_epochs {
        let perm = order_rng.permutation(n);
        for chunk in perm.chunks(cfg.batch_size.max(1)) {
            let xb = x_tr.select(Axis(0), chunk);
            let yb: Vec<f64> = chunk.iter().map(|&i| y_tr[i]).collect();
            let trace = net.forward_trace(xb.view())?;
            let (_, g_out) = bce(trace.output(), &yb);
            let (g, _) = net.backward_batch(&trace, g_out.view())?;
            opt.step(&mut params, &g)?;
            net.set_params(&params)?;
        }
        let v = val_loss(&net)?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("classifier validation loss is {v}")));
        }
        if v < best {
            best = v;
            best_params.clone_from(&params);
            since = 0;
        } else {
            since += 1;
            if since >= cfg.patience {
                break;
            }
        }
    }
    net.set_params(&best_params)?;
    Ok(accuracy(&net.forward_batch(x_va.view())?, y_va))
}

/// Cross-validated accuracy of a classifier separating `real` from `gen`.
/// Vectors are z-scored with statistics of the pooled sample; folds are
/// stratified so every fold holds equally many points of each class.
pub fn jc2st(real: &JointSampleSet, gen: &JointSampleSet, rng: &RandomSource, cfg: &C2stConfig) -> Result<f64> {
    check_pair(real, gen)?;
    let n = real.len();
    if n < cfg.min_per_class {
        return Err(Error::InsufficientData(format!(
            "jc2st needs at least {} points per class, got {n}",
            cfg.min_per_class
        )));
    }
    if cfg.folds < 2 || cfg.folds > n {
        return invalid(format!("fold count {} must lie in [2, {n}]", cfg.folds));
    }
    let pooled: Vec<Vec<f64>> = real.vectors().iter().chain(gen.vectors()).cloned().collect();
    let sd = Standardizer::fit(&pooled)?;
    let z: Vec<Vec<f64>> = pooled.iter().map(|v| sd.forward(v)).collect();
    let x = from_rows(&z, real.dim())?;
    let labels: Vec<f64> = (0..2 * n).map(|i| if i < n { 1.0 } else { 0.0 }).collect();

    let mut split = rng.stream("folds");
    let mut fold_of = vec![0usize; 2 * n];
    for class in 0..2 {
        for (pos, i) in split.permutation(n).into_iter().enumerate() {
            fold_of[class * n + i] = pos % cfg.folds;
        }
    }
    let mut total = 0.0;
    for k in 0..cfg.folds {
        let (tr, va): (Vec<usize>, Vec<usize>) = (0..2 * n).partition(|&i| fold_of[i] != k);
        let pick = |idx: &[usize]| (x.select(Axis(0), idx), idx.iter().map(|&i| labels[i]).collect::<Vec<_>>());
        let (xt, yt) = pick(&tr);
        let (xv, yv) = pick(&va);
        let acc = train_fold(&xt, &yt, &xv, &yv, cfg, &mut rng.stream_indexed("fold", k as u64))?;
        log::debug!("jc2st fold {k}: accuracy {acc:.4}");
        total += acc;
    }
    Ok(total / cfg.folds as f64)
}
