//! Simulation-trained conditional density `p̂(θ|x)` and the two comparison
//! baselines (calibration-only NPE and fine-tuning).
//!
//! Models work in model space: θ goes through the task's parameter
//! transform (optional logit, then z-scoring) and observations are z-scored.
//! `sample` takes and returns original coordinates.

mod coupling;
mod train;

pub use coupling::CouplingStack;
pub use train::{finetune, train_npe, train_npe_calibration_only, train_npe_with_transforms, NpeConfig, TrainReport};

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{ensure_dim, invalid, Result};
use crate::nn::checkpoint::{self, params_hash};
use crate::nn::{from_rows, to_rows, Mlp};
use crate::rng::RandomSource;
use crate::transform::Transforms;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Diagonal Gaussian with network-predicted mean and log-std.
    Gaussian,
    /// Conditional affine coupling flow.
    Coupling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Head {
    Gaussian,
    Coupling(CouplingStack),
}

pub const CHECKPOINT_KIND: &str = "density-model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDensityModel {
    conditioner: Mlp,
    head: Head,
    transforms: Transforms,
}

impl ConditionalDensityModel {
    pub fn new(cfg: &NpeConfig, transforms: Transforms, rng: &mut RandomSource) -> Result<Self> {
        let p = transforms.theta.dim();
        let d = transforms.obs.dim();
        let mut widths = vec![d];
        widths.extend_from_slice(&cfg.hidden);
        let (head, out) = match cfg.head {
            HeadKind::Gaussian => (Head::Gaussian, 2 * p),
            HeadKind::Coupling => {
                let stack = CouplingStack::new(p, cfg.ctx_dim, cfg.coupling_layers, &cfg.coupling_hidden, rng)?;
                (Head::Coupling(stack), cfg.ctx_dim)
            }
        };
        widths.push(out);
        let conditioner = Mlp::new(&widths, 0.1, rng)?;
        Ok(Self {
            conditioner,
            head,
            transforms,
        })
    }

    pub fn head_kind(&self) -> HeadKind {
        match self.head {
            Head::Gaussian => HeadKind::Gaussian,
            Head::Coupling(_) => HeadKind::Coupling,
        }
    }

    pub fn param_dim(&self) -> usize {
        self.transforms.theta.dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.transforms.obs.dim()
    }

    pub fn transforms(&self) -> &Transforms {
        &self.transforms
    }

    pub fn conditioner(&self) -> &Mlp {
        &self.conditioner
    }

    pub fn param_count(&self) -> usize {
        self.conditioner.param_count()
            + match &self.head {
                Head::Gaussian => 0,
                Head::Coupling(s) => s.param_count(),
            }
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.conditioner.flatten();
        if let Head::Coupling(s) = &self.head {
            p.extend(s.params());
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        ensure_dim("density model params", self.param_count(), p.len())?;
        let n = self.conditioner.param_count();
        self.conditioner.set_params(&p[..n])?;
        if let Head::Coupling(s) = &mut self.head {
            s.set_params(&p[n..])?;
        }
        Ok(())
    }

    /// Hash of the exact parameter bits; used to assert the frozen contract.
    pub fn params_hash(&self) -> String {
        params_hash(&self.params())
    }

    /// Model-space log-density of each row of `theta` given the matching row
    /// of `obs`.
    pub fn log_prob_model(&self, theta: ArrayView2<f64>, obs: ArrayView2<f64>) -> Result<Vec<f64>> {
        ensure_dim("theta", self.param_dim(), theta.ncols())?;
        if theta.nrows() != obs.nrows() {
            return invalid("theta and observation batches differ in length");
        }
        let out = self.conditioner.forward_batch(obs)?;
        match &self.head {
            Head::Gaussian => {
                let p = self.param_dim();
                let c = 0.5 * (2.0 * PI).ln();
                Ok((0..theta.nrows())
                    .map(|r| {
                        (0..p)
                            .map(|k| {
                                let (mu, ls) = (out[[r, k]], out[[r, p + k]]);
                                let z = (theta[[r, k]] - mu) / ls.exp();
                                -0.5 * z * z - ls - c
                            })
                            .sum()
                    })
                    .collect())
            }
            Head::Coupling(stack) => stack.log_prob(theta, out.view()),
        }
    }

    /// Summed NLL over the batch and its gradient w.r.t. all parameters.
    pub(crate) fn nll_grad(&self, theta: ArrayView2<f64>, obs: ArrayView2<f64>) -> Result<(f64, Vec<f64>)> {
        let trace = self.conditioner.forward_trace(obs)?;
        let out = trace.output();
        match &self.head {
            Head::Gaussian => {
                let p = self.param_dim();
                let n = theta.nrows();
                let c = 0.5 * (2.0 * PI).ln();
                let mut nll = 0.0;
                let mut g = Array2::<f64>::zeros((n, 2 * p));
                for r in 0..n {
                    for k in 0..p {
                        let (mu, ls) = (out[[r, k]], out[[r, p + k]]);
                        let sd = ls.exp();
                        let z = (theta[[r, k]] - mu) / sd;
                        nll += 0.5 * z * z + ls + c;
                        g[[r, k]] = -z / sd;
                        g[[r, p + k]] = 1.0 - z * z;
                    }
                }
                let (pg, _) = self.conditioner.backward_batch(&trace, g.view())?;
                Ok((nll, pg))
            }
            Head::Coupling(stack) => {
                let (nll, head_grad, ctx_grad) = stack.nll_grad(theta, out.view())?;
                let (mut pg, _) = self.conditioner.backward_batch(&trace, ctx_grad.view())?;
                pg.extend(head_grad);
                Ok((nll, pg))
            }
        }
    }

    /// One model-space draw per row of `obs`.
    pub fn sample_model(&self, obs: ArrayView2<f64>, rng: &mut RandomSource) -> Result<Array2<f64>> {
        let p = self.param_dim();
        let n = obs.nrows();
        let out = self.conditioner.forward_batch(obs)?;
        let mut z = Array2::<f64>::zeros((n, p));
        z.iter_mut().for_each(|v| *v = rng.normal());
        match &self.head {
            Head::Gaussian => {
                let mu = out.slice(s![.., ..p]);
                let sd = out.slice(s![.., p..]).mapv(f64::exp);
                Ok(&mu + &(&z * &sd))
            }
            Head::Coupling(stack) => stack.inverse(z.view(), out.view()),
        }
    }

    /// `n` draws of θ (original coordinates) given one raw observation.
    pub fn sample(&self, obs: &[f64], n: usize, rng: &mut RandomSource) -> Result<Vec<Vec<f64>>> {
        ensure_dim("observation", self.obs_dim(), obs.len())?;
        if n == 0 {
            return Ok(Vec::new());
        }
        let x = self.transforms.obs.forward(obs);
        let batch = from_rows(&vec![x; n], self.obs_dim())?;
        let th = self.sample_model(batch.view(), rng)?;
        Ok(to_rows(&th).iter().map(|r| self.transforms.theta.inverse(r)).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        checkpoint::to_json(CHECKPOINT_KIND, self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        checkpoint::from_json(CHECKPOINT_KIND, text)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        checkpoint::save(path, CHECKPOINT_KIND, self)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        checkpoint::load(path, CHECKPOINT_KIND)
    }

    /// Model-space predicted mean (Gaussian head only).
    pub fn predicted_mean_model(&self, obs_model: &[f64]) -> Result<Vec<f64>> {
        match self.head {
            Head::Gaussian => Ok(self.conditioner.forward(obs_model)?[..self.param_dim()].to_vec()),
            Head::Coupling(_) => Err(crate::Error::Unsupported("predicted mean needs the Gaussian head".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(head: HeadKind) -> ConditionalDensityModel {
        let cfg = NpeConfig {
            hidden: vec![8, 8],
            head,
            ctx_dim: 4,
            coupling_hidden: vec![8],
            ..NpeConfig::default()
        };
        let mut rng = RandomSource::new(1);
        let mut m = ConditionalDensityModel::new(&cfg, Transforms::identity(2, 3), &mut rng).unwrap();
        let p: Vec<f64> = (0..m.param_count()).map(|_| 0.4 * rng.normal()).collect();
        m.set_params(&p).unwrap();
        m
    }

    #[test]
    fn gaussian_log_prob_closed_form() {
        let m = model(HeadKind::Gaussian);
        let obs = [0.3, -0.2, 1.0];
        let theta = [0.5, -1.5];
        let out = m.conditioner().forward(&obs).unwrap();
        let expected: f64 = (0..2)
            .map(|k| {
                let sd = out[2 + k].exp();
                -0.5 * ((theta[k] - out[k]) / sd).powi(2) - sd.ln() - 0.5 * (2.0 * PI).ln()
            })
            .sum();
        let th = from_rows(&[theta.to_vec()], 2).unwrap();
        let ob = from_rows(&[obs.to_vec()], 3).unwrap();
        let lp = m.log_prob_model(th.view(), ob.view()).unwrap()[0];
        assert!((lp - expected).abs() < 1e-14);
    }

    #[test]
    fn nll_gradient_matches_finite_differences() {
        for head in [HeadKind::Gaussian, HeadKind::Coupling] {
            let m = model(head);
            let mut rng = RandomSource::new(2);
            let th = from_rows(&(0..5).map(|_| rng.normal_vec(2)).collect::<Vec<_>>(), 2).unwrap();
            let ob = from_rows(&(0..5).map(|_| rng.normal_vec(3)).collect::<Vec<_>>(), 3).unwrap();
            let (_, g) = m.nll_grad(th.view(), ob.view()).unwrap();
            let nll = |mm: &ConditionalDensityModel| -mm.log_prob_model(th.view(), ob.view()).unwrap().iter().sum::<f64>();
            let base = m.params();
            let h = 1e-5;
            for k in 0..base.len() {
                let mut p = base.clone();
                p[k] += h;
                let mut a = m.clone();
                a.set_params(&p).unwrap();
                p[k] -= 2.0 * h;
                let mut b = m.clone();
                b.set_params(&p).unwrap();
                let fd = (nll(&a) - nll(&b)) / (2.0 * h);
                assert!(
                    (fd - g[k]).abs() <= 1e-4 * fd.abs().max(g[k].abs()).max(1e-3),
                    "{head:?} param {k}: {fd} vs {}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn degenerate_std_gives_mean() {
        let mut m = model(HeadKind::Gaussian);
        // zero the last layer's log-std rows, set their bias to -inf
        let widths = m.conditioner().widths().to_vec();
        let (i, o) = (widths[widths.len() - 2], widths[widths.len() - 1]);
        let mut p = m.params();
        let off = p.len() - (o * i + o);
        for r in 2..4 {
            for c in 0..i {
                p[off + r * i + c] = 0.0;
            }
            p[off + o * i + r] = f64::NEG_INFINITY;
        }
        m.set_params(&p).unwrap();
        let obs = [0.1, 0.2, 0.3];
        let mean = &m.conditioner().forward(&obs).unwrap()[..2];
        let draws = m.sample(&obs, 20, &mut RandomSource::new(3)).unwrap();
        for d in draws {
            assert_eq!(d, mean.to_vec());
        }
    }

    #[test]
    fn sample_zero_and_determinism() {
        let m = model(HeadKind::Coupling);
        assert!(m.sample(&[0.0; 3], 0, &mut RandomSource::new(0)).unwrap().is_empty());
        let a = m.sample(&[0.0; 3], 10, &mut RandomSource::new(5)).unwrap();
        let b = m.sample(&[0.0; 3], 10, &mut RandomSource::new(5)).unwrap();
        assert_eq!(a, b);
        let th = from_rows(&a.iter().map(|r| m.transforms().theta.forward(r)).collect::<Vec<_>>(), 2).unwrap();
        let ob = from_rows(&vec![vec![0.0; 3]; 10], 3).unwrap();
        assert!(m.log_prob_model(th.view(), ob.view()).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = model(HeadKind::Coupling);
        let text = crate::nn::checkpoint::to_json("density-model", &m).unwrap();
        let back: ConditionalDensityModel = crate::nn::checkpoint::from_json("density-model", &text).unwrap();
        assert_eq!(back, m);
    }
}
