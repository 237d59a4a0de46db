//! Conditional affine coupling stack over model-space θ.
//!
//! Normalizing direction, per layer: the "conditioning" coordinates pass
//! through unchanged, the "transformed" coordinates become
//! `u · exp(s) + shift` where `(s_raw, shift) = net([u_cond, ctx])` and
//! `s = B · tanh(s_raw / B)`. The base distribution is standard normal.

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{ensure_dim, invalid, Result};
use crate::nn::{hcat, Mlp, Trace};
use crate::rng::RandomSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingLayer {
    cond: Vec<usize>,
    trans: Vec<usize>,
    net: Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingStack {
    dim: usize,
    ctx_dim: usize,
    scale_bound: f64,
    layers: Vec<CouplingLayer>,
}

/// Per-layer quantities kept for the backward pass.
struct LayerTrace {
    input: Array2<f64>,
    net: Trace,
    s: Array2<f64>,
    tanh_arg: Array2<f64>,
}

fn select(x: &ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(1), idx)
}

impl CouplingStack {
    pub fn new(dim: usize, ctx_dim: usize, n_layers: usize, hidden: &[usize], rng: &mut RandomSource) -> Result<Self> {
        if dim == 0 || n_layers == 0 {
            return invalid("coupling stack needs dim >= 1 and at least one layer");
        }
        let mut layers = Vec::with_capacity(n_layers);
        for k in 0..n_layers {
            // alternate parity masks; with one coordinate every layer
            // transforms it conditioned on the context alone
            let (cond, trans): (Vec<usize>, Vec<usize>) = if dim == 1 {
                (vec![], vec![0])
            } else {
                (0..dim).partition(|i| (i + k) % 2 == 0)
            };
            let mut widths = vec![cond.len() + ctx_dim];
            widths.extend_from_slice(hidden);
            widths.push(2 * trans.len());
            let net = Mlp::new(&widths, 0.1, rng)?;
            layers.push(CouplingLayer { cond, trans, net });
        }
        Ok(Self {
            dim,
            ctx_dim,
            scale_bound: 2.0,
            layers,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ctx_dim(&self) -> usize {
        self.ctx_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.net.param_count()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.net.params().iter().copied()).collect()
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        ensure_dim("coupling params", self.param_count(), p.len())?;
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.net.param_count();
            l.net.set_params(&p[off..off + n])?;
            off += n;
        }
        Ok(())
    }

    fn net_input(&self, layer: &CouplingLayer, x: &ArrayView2<f64>, ctx: &ArrayView2<f64>) -> Array2<f64> {
        let cond = select(x, &layer.cond);
        hcat(&[cond.view(), ctx.view()])
    }

    fn scales(&self, raw: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let b = self.scale_bound;
        let arg = raw.mapv(|r| r / b);
        let s = arg.mapv(|a| b * a.tanh());
        (s, arg)
    }

    /// θ → z with per-row log|det J|.
    pub fn forward(&self, theta: ArrayView2<f64>, ctx: ArrayView2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
        let (z, logdet, _) = self.forward_traced(theta, ctx, false)?;
        Ok((z, logdet))
    }

    fn forward_traced(&self, theta: ArrayView2<f64>, ctx: ArrayView2<f64>, keep: bool) -> Result<(Array2<f64>, Vec<f64>, Vec<LayerTrace>)> {
        ensure_dim("coupling theta", self.dim, theta.ncols())?;
        ensure_dim("coupling context", self.ctx_dim, ctx.ncols())?;
        let n = theta.nrows();
        let mut x = theta.to_owned();
        let mut logdet = vec![0.0; n];
        let mut traces = Vec::new();
        for layer in &self.layers {
            let inp = self.net_input(layer, &x.view(), &ctx);
            let tr = layer.net.forward_trace(inp.view())?;
            let m = layer.trans.len();
            let out = tr.output();
            let (s, arg) = self.scales(out.slice(s![.., ..m]));
            let shift = out.slice(s![.., m..]);
            let mut y = x.clone();
            for r in 0..n {
                for (j, &c) in layer.trans.iter().enumerate() {
                    y[[r, c]] = x[[r, c]] * s[[r, j]].exp() + shift[[r, j]];
                    logdet[r] += s[[r, j]];
                }
            }
            if keep {
                traces.push(LayerTrace {
                    input: x,
                    net: tr,
                    s,
                    tanh_arg: arg,
                });
            }
            x = y;
        }
        Ok((x, logdet, traces))
    }

    /// z → θ.
    pub fn inverse(&self, z: ArrayView2<f64>, ctx: ArrayView2<f64>) -> Result<Array2<f64>> {
        ensure_dim("coupling z", self.dim, z.ncols())?;
        ensure_dim("coupling context", self.ctx_dim, ctx.ncols())?;
        let n = z.nrows();
        let mut y = z.to_owned();
        for layer in self.layers.iter().rev() {
            let inp = self.net_input(layer, &y.view(), &ctx);
            let out = layer.net.forward_batch(inp.view())?;
            let m = layer.trans.len();
            let (s, _) = self.scales(out.slice(s![.., ..m]));
            for r in 0..n {
                for (j, &c) in layer.trans.iter().enumerate() {
                    y[[r, c]] = (y[[r, c]] - out[[r, m + j]]) * (-s[[r, j]]).exp();
                }
            }
        }
        Ok(y)
    }

    pub fn log_prob(&self, theta: ArrayView2<f64>, ctx: ArrayView2<f64>) -> Result<Vec<f64>> {
        let (z, logdet) = self.forward(theta, ctx)?;
        let c = 0.5 * self.dim as f64 * (2.0 * PI).ln();
        Ok(z.rows()
            .into_iter()
            .zip(logdet)
            .map(|(row, ld)| -0.5 * row.dot(&row) - c + ld)
            .collect())
    }

    /// Summed negative log-likelihood over rows, gradient w.r.t. the stack's
    /// parameters and w.r.t. the context.
    pub fn nll_grad(&self, theta: ArrayView2<f64>, ctx: ArrayView2<f64>) -> Result<(f64, Vec<f64>, Array2<f64>)> {
        let (z, logdet, traces) = self.forward_traced(theta, ctx, true)?;
        let c = 0.5 * self.dim as f64 * (2.0 * PI).ln();
        let n = theta.nrows();
        let nll: f64 = z
            .rows()
            .into_iter()
            .zip(&logdet)
            .map(|(row, ld)| 0.5 * row.dot(&row) + c - ld)
            .sum();
        let mut g = z;
        let mut ctx_grad = Array2::<f64>::zeros((n, self.ctx_dim));
        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (layer, tr) in self.layers.iter().zip(&traces).rev() {
            let m = layer.trans.len();
            let mut out_grad = Array2::<f64>::zeros((n, 2 * m));
            let mut gx = g.clone();
            for r in 0..n {
                for (j, &col) in layer.trans.iter().enumerate() {
                    let es = tr.s[[r, j]].exp();
                    let gy = g[[r, col]];
                    let ds = gy * tr.input[[r, col]] * es - 1.0;
                    let th = tr.tanh_arg[[r, j]].tanh();
                    out_grad[[r, j]] = ds * (1.0 - th * th);
                    out_grad[[r, m + j]] = gy;
                    gx[[r, col]] = gy * es;
                }
            }
            let (pg, ig) = layer.net.backward_batch(&tr.net, out_grad.view())?;
            for (j, &col) in layer.cond.iter().enumerate() {
                for r in 0..n {
                    gx[[r, col]] += ig[[r, j]];
                }
            }
            ctx_grad += &ig.slice(s![.., layer.cond.len()..]);
            grads.push(pg);
            g = gx;
        }
        grads.reverse();
        Ok((nll, grads.concat(), ctx_grad))
    }
}
