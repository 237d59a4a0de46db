use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::VectorField;
use crate::error::{ensure_dim, invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    Rk4,
}

/// Fixed-step integration on `[0, 1]` with `steps` uniform steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OdeConfig {
    pub integrator: Integrator,
    pub steps: usize,
}

impl OdeConfig {
    pub fn euler(steps: usize) -> Self {
        Self {
            integrator: Integrator::Euler,
            steps,
        }
    }

    pub fn rk4(steps: usize) -> Self {
        Self {
            integrator: Integrator::Rk4,
            steps,
        }
    }
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self::rk4(64)
    }
}

fn check_finite(z: &Array2<f64>, step: usize) -> Result<()> {
    if z.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("ode state became non-finite at step {step}")))
    }
}

/// Integrate `dz/dt = f(t, z)` from `t = 0` to `t = 1` for every row of `z0`.
pub fn integrate<F>(mut f: F, z0: Array2<f64>, cfg: OdeConfig) -> Result<Array2<f64>>
where
    F: FnMut(f64, ArrayView2<f64>) -> Result<Array2<f64>>,
{
    if cfg.steps == 0 {
        return invalid("ode step count must be >= 1");
    }
    check_finite(&z0, 0)?;
    let h = 1.0 / cfg.steps as f64;
    let mut z = z0;
    for k in 0..cfg.steps {
        let t = k as f64 * h;
        match cfg.integrator {
            Integrator::Euler => {
                let v = f(t, z.view())?;
                z.scaled_add(h, &v);
            }
            Integrator::Rk4 => {
                let k1 = f(t, z.view())?;
                let k2 = f(t + 0.5 * h, (&z + &(&k1 * (0.5 * h))).view())?;
                let k3 = f(t + 0.5 * h, (&z + &(&k2 * (0.5 * h))).view())?;
                let k4 = f(t + h, (&z + &(&k3 * h)).view())?;
                let incr = k1 + &(k2 * 2.0) + &(k3 * 2.0) + &k4;
                z.scaled_add(h / 6.0, &incr);
            }
        }
        check_finite(&z, k + 1)?;
    }
    Ok(z)
}

/// Push each row of `z0` through the field's flow, with precomputed
/// condition contexts.
pub fn transport_batch(field: &VectorField, z0: Array2<f64>, ctx: ArrayView2<f64>, cfg: OdeConfig) -> Result<Array2<f64>> {
    integrate(|t, z| field.eval_at(t, z, ctx), z0, cfg)
}

/// `ψ(1, z0, y)`: the state at `t = 1` of the flow started at `z0`.
pub fn ode_transport(field: &VectorField, z0: &[f64], y: &[f64], cfg: OdeConfig) -> Result<Vec<f64>> {
    ensure_dim("transport start", field.state_dim(), z0.len())?;
    ensure_dim("transport condition", field.cond_dim(), y.len())?;
    let yv = ArrayView2::from_shape((1, y.len()), y).expect("row");
    let ctx = field.context(yv)?;
    let z = Array2::from_shape_vec((1, z0.len()), z0.to_vec()).expect("row");
    Ok(transport_batch(field, z, ctx.view(), cfg)?.row(0).to_vec())
}
