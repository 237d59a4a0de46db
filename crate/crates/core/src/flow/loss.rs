use super::tuple::interpolate_rows;
use super::{TupleBatch, VectorField};
use crate::error::{invalid, Error, Result};
use crate::rng::RandomSource;

/// Batch-mean joint loss and its two terms, with gradients for each field.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLoss {
    pub loss: f64,
    pub loss_x: f64,
    pub loss_theta: f64,
    pub grad_x: Vec<f64>,
    pub grad_theta: Vec<f64>,
}

/// All four (term, field) gradient blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBlocks {
    pub x_term_wrt_x: Vec<f64>,
    pub x_term_wrt_theta: Vec<f64>,
    pub theta_term_wrt_x: Vec<f64>,
    pub theta_term_wrt_theta: Vec<f64>,
}

/// Draw `t_i` and an independent `τ_i` per tuple, then evaluate.
pub fn joint_loss(batch: &TupleBatch, field_x: &VectorField, field_theta: &VectorField, rng: &mut RandomSource) -> Result<JointLoss> {
    let n = batch.len();
    let mut ts = Vec::with_capacity(n);
    let mut taus = Vec::with_capacity(n);
    for _ in 0..n {
        ts.push(rng.uniform());
        taus.push(rng.uniform());
    }
    joint_loss_at(batch, &ts, &taus, field_x, field_theta)
}

fn x_term(batch: &TupleBatch, ts: &[f64], field_x: &VectorField) -> Result<(f64, Vec<f64>)> {
    let xt = interpolate_rows(batch.x0.view(), batch.x1.view(), ts);
    let target = &batch.x1 - &batch.x0;
    field_x.regression_loss_grad(ts, xt.view(), batch.y.view(), target.view())
}

fn theta_term(batch: &TupleBatch, taus: &[f64], field_theta: &VectorField) -> Result<(f64, Vec<f64>)> {
    let tht = interpolate_rows(batch.theta0.view(), batch.theta1.view(), taus);
    let target = &batch.theta1 - &batch.theta0;
    field_theta.regression_loss_grad(taus, tht.view(), batch.y.view(), target.view())
}

/// Joint loss at given times `t` (data-space term) and `τ` (parameter-space term).
pub fn joint_loss_at(batch: &TupleBatch, ts: &[f64], taus: &[f64], field_x: &VectorField, field_theta: &VectorField) -> Result<JointLoss> {
    let n = batch.len();
    if n == 0 {
        return invalid("joint loss needs a non-empty batch");
    }
    if ts.len() != n || taus.len() != n {
        return invalid("one t and one τ per tuple required");
    }
    let (lx, mut gx) = x_term(batch, ts, field_x)?;
    let (lt, mut gt) = theta_term(batch, taus, field_theta)?;
    let scale = 1.0 / n as f64;
    gx.iter_mut().for_each(|g| *g *= scale);
    gt.iter_mut().for_each(|g| *g *= scale);
    let (loss_x, loss_theta) = (lx * scale, lt * scale);
    let loss = loss_x + loss_theta;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("joint loss is {loss}")));
    }
    Ok(JointLoss {
        loss,
        loss_x,
        loss_theta,
        grad_x: gx,
        grad_theta: gt,
    })
}

/// Per-term gradient blocks. The data-space term involves only the data
/// field. The parameter-space term involves only the parameter field, since
/// the batch's θ₀ is a constant once sampled. Cross blocks are therefore zero.
pub fn gradient_blocks(
    batch: &TupleBatch,
    ts: &[f64],
    taus: &[f64],
    field_x: &VectorField,
    field_theta: &VectorField,
) -> Result<GradientBlocks> {
    let jl = joint_loss_at(batch, ts, taus, field_x, field_theta)?;
    Ok(GradientBlocks {
        x_term_wrt_x: jl.grad_x,
        x_term_wrt_theta: vec![0.0; field_theta.param_count()],
        theta_term_wrt_x: vec![0.0; field_x.param_count()],
        theta_term_wrt_theta: jl.grad_theta,
    })
}

/// Term values only, no gradients.
pub fn joint_loss_terms(
    batch: &TupleBatch,
    ts: &[f64],
    taus: &[f64],
    field_x: &VectorField,
    field_theta: &VectorField,
) -> Result<(f64, f64)> {
    let n = batch.len() as f64;
    let xt = interpolate_rows(batch.x0.view(), batch.x1.view(), ts);
    let lx = field_x.regression_loss(ts, xt.view(), batch.y.view(), (&batch.x1 - &batch.x0).view())?;
    let tht = interpolate_rows(batch.theta0.view(), batch.theta1.view(), taus);
    let lt = field_theta.regression_loss(taus, tht.view(), batch.y.view(), (&batch.theta1 - &batch.theta0).view())?;
    Ok((lx / n, lt / n))
}
