use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, invalid, Result};
use crate::nn::{hcat, Mlp, TimeEmbedding};
use crate::rng::RandomSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldConfig {
    pub hidden: Vec<usize>,
    /// Hidden widths of the condition embedder `y → context`.
    pub embed_hidden: Vec<usize>,
    pub ctx_dim: usize,
    pub time: TimeEmbedding,
    /// Scale of the body's initial output layer.
    pub output_scale: f64,
}

impl Default for VectorFieldConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128, 128],
            embed_hidden: vec![64],
            ctx_dim: 32,
            time: TimeEmbedding::default(),
            output_scale: 0.1,
        }
    }
}

/// Time- and condition-dependent velocity `u(t, z, y)`.
///
/// The body sees `[z, embed(t), ctx(y)]`, where `ctx` is a separate MLP over
/// the condition. Parameters are ordered body first, then embedder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    body: Mlp,
    embedder: Mlp,
    time: TimeEmbedding,
    state_dim: usize,
    cond_dim: usize,
}

impl VectorField {
    pub fn new(state_dim: usize, cond_dim: usize, cfg: &VectorFieldConfig, rng: &mut RandomSource) -> Result<Self> {
        let mut ew = vec![cond_dim];
        ew.extend_from_slice(&cfg.embed_hidden);
        ew.push(cfg.ctx_dim);
        let embedder = Mlp::new(&ew, 1.0, rng)?;
        let mut bw = vec![state_dim + cfg.time.dim() + cfg.ctx_dim];
        bw.extend_from_slice(&cfg.hidden);
        bw.push(state_dim);
        let body = Mlp::new(&bw, cfg.output_scale, rng)?;
        Ok(Self {
            body,
            embedder,
            time: cfg.time,
            state_dim,
            cond_dim,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn body(&self) -> &Mlp {
        &self.body
    }

    pub fn embedder(&self) -> &Mlp {
        &self.embedder
    }

    pub fn param_count(&self) -> usize {
        self.body.param_count() + self.embedder.param_count()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.body.flatten();
        p.extend_from_slice(self.embedder.params());
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        ensure_dim("vector field params", self.param_count(), p.len())?;
        let n = self.body.param_count();
        self.body.set_params(&p[..n])?;
        self.embedder.set_params(&p[n..])
    }

    /// The zero field: every parameter set to 0.
    pub fn zeroed(mut self) -> Self {
        self.body.params_mut().iter_mut().for_each(|v| *v = 0.0);
        self.embedder.params_mut().iter_mut().for_each(|v| *v = 0.0);
        self
    }

    /// Condition embeddings, one row per row of `y`.
    pub fn context(&self, y: ArrayView2<f64>) -> Result<Array2<f64>> {
        ensure_dim("vector field condition", self.cond_dim, y.ncols())?;
        self.embedder.forward_batch(y)
    }

    fn time_block(&self, ts: &[f64]) -> Array2<f64> {
        let k = self.time.dim();
        let mut out = Array2::zeros((ts.len(), k));
        for (mut row, &t) in out.rows_mut().into_iter().zip(ts) {
            self.time.embed_into(t, row.as_slice_mut().expect("standard layout"));
        }
        out
    }

    fn body_input(&self, ts: &[f64], z: ArrayView2<f64>, ctx: ArrayView2<f64>) -> Result<Array2<f64>> {
        ensure_dim("vector field state", self.state_dim, z.ncols())?;
        if ts.len() != z.nrows() || ctx.nrows() != z.nrows() {
            return invalid("vector field batch: times, states and contexts differ in length");
        }
        Ok(hcat(&[z, self.time_block(ts).view(), ctx]))
    }

    /// Velocities for per-row times with precomputed contexts.
    pub fn eval_with_context(&self, ts: &[f64], z: ArrayView2<f64>, ctx: ArrayView2<f64>) -> Result<Array2<f64>> {
        let inp = self.body_input(ts, z, ctx)?;
        self.body.forward_batch(inp.view())
    }

    pub fn eval_at(&self, t: f64, z: ArrayView2<f64>, ctx: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.eval_with_context(&vec![t; z.nrows()], z, ctx)
    }

    /// Single-point evaluation `u(t, z, y)`.
    pub fn evaluate(&self, t: f64, z: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        ensure_dim("vector field state", self.state_dim, z.len())?;
        ensure_dim("vector field condition", self.cond_dim, y.len())?;
        let zv = ArrayView2::from_shape((1, z.len()), z).expect("row");
        let yv = ArrayView2::from_shape((1, y.len()), y).expect("row");
        let ctx = self.context(yv)?;
        Ok(self.eval_at(t, zv, ctx.view())?.row(0).to_vec())
    }

    /// Summed squared regression error `Σ_rows ‖u(t, z, y) − target‖²` and
    /// its gradient w.r.t. this field's parameters.
    pub fn regression_loss_grad(
        &self,
        ts: &[f64],
        z: ArrayView2<f64>,
        y: ArrayView2<f64>,
        target: ArrayView2<f64>,
    ) -> Result<(f64, Vec<f64>)> {
        ensure_dim("vector field condition", self.cond_dim, y.ncols())?;
        let ctx_trace = self.embedder.forward_trace(y)?;
        let inp = self.body_input(ts, z, ctx_trace.output().view())?;
        let body_trace = self.body.forward_trace(inp.view())?;
        let resid = body_trace.output() - &target;
        let loss = resid.iter().map(|r| r * r).sum();
        let out_grad = resid.mapv(|r| 2.0 * r);
        let (mut g, in_grad) = self.body.backward_batch(&body_trace, out_grad.view())?;
        let off = self.state_dim + self.time.dim();
        let ctx_grad = in_grad.slice(ndarray::s![.., off..]);
        let (eg, _) = self.embedder.backward_batch(&ctx_trace, ctx_grad)?;
        g.extend(eg);
        Ok((loss, g))
    }

    pub fn regression_loss(&self, ts: &[f64], z: ArrayView2<f64>, y: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
        let ctx = self.context(y)?;
        let out = self.eval_with_context(ts, z, ctx.view())?;
        Ok((&out - &target).iter().map(|r| r * r).sum())
    }
}
