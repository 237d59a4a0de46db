use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, invalid, Error, Result};
use crate::rng::RandomSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

/// Fully connected network: affine + tanh on every hidden layer, affine
/// output. Parameters live in one flat vector, layer by layer, each layer as
/// its row-major `out x in` weight matrix followed by its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRepr", into = "MlpRepr")]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct MlpRepr {
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

impl TryFrom<MlpRepr> for Mlp {
    type Error = Error;

    fn try_from(r: MlpRepr) -> Result<Self> {
        let mut net = Mlp::zeros(&r.widths)?;
        net.activation = r.activation;
        net.set_params(&r.params)?;
        Ok(net)
    }
}

impl From<Mlp> for MlpRepr {
    fn from(m: Mlp) -> Self {
        MlpRepr {
            widths: m.widths,
            activation: m.activation,
            params: m.params,
        }
    }
}

/// Layer activations recorded by [`Mlp::forward_trace`] for backprop.
#[derive(Debug, Clone)]
pub struct Trace {
    acts: Vec<Array2<f64>>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("trace has at least the input")
    }
}

impl Mlp {
    /// All-zero parameters.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return invalid(format!("mlp widths must have >= 2 positive entries, got {widths:?}"));
        }
        let mut offsets = Vec::with_capacity(widths.len());
        let mut total = 0;
        for w in widths.windows(2) {
            offsets.push(total);
            total += w[0] * w[1] + w[1];
        }
        offsets.push(total);
        Ok(Self {
            widths: widths.to_vec(),
            activation: Activation::Tanh,
            params: vec![0.0; total],
            offsets,
        })
    }

    /// LeCun-normal weights, zero biases. `output_scale` multiplies the last
    /// layer's weights.
    pub fn new(widths: &[usize], output_scale: f64, rng: &mut RandomSource) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        let n_layers = net.n_layers();
        for l in 0..n_layers {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let scale = (1.0 / fan_in as f64).sqrt() * if l + 1 == n_layers { output_scale } else { 1.0 };
            let off = net.offsets[l];
            for v in &mut net.params[off..off + fan_in * fan_out] {
                *v = scale * rng.normal();
            }
        }
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Flattened parameter vector (copy).
    pub fn flatten(&self) -> Vec<f64> {
        self.params.clone()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        ensure_dim("mlp parameter vector", self.params.len(), params.len())?;
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        let (i, o) = (self.widths[l], self.widths[l + 1]);
        let off = self.offsets[l];
        ArrayView2::from_shape((o, i), &self.params[off..off + o * i]).expect("layout")
    }

    fn bias(&self, l: usize) -> ArrayView1<'_, f64> {
        let (i, o) = (self.widths[l], self.widths[l + 1]);
        let off = self.offsets[l] + o * i;
        ArrayView1::from(&self.params[off..off + o])
    }

    fn layer(&self, l: usize, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut h = x.dot(&self.weight(l).t());
        h += &self.bias(l);
        if l + 1 < self.n_layers() {
            h.mapv_inplace(f64::tanh);
        }
        h
    }

    fn check_batch(&self, x: &ArrayView2<f64>) -> Result<()> {
        ensure_dim("mlp input", self.input_dim(), x.ncols())
    }

    /// Batched forward pass; rows are samples.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_batch(&x)?;
        let mut h = self.layer(0, &x);
        for l in 1..self.n_layers() {
            h = self.layer(l, &h.view());
        }
        Ok(h)
    }

    /// Forward pass keeping every layer's activations.
    pub fn forward_trace(&self, x: ArrayView2<f64>) -> Result<Trace> {
        self.check_batch(&x)?;
        let mut acts = Vec::with_capacity(self.widths.len());
        acts.push(x.to_owned());
        for l in 0..self.n_layers() {
            let h = self.layer(l, &acts[l].view());
            acts.push(h);
        }
        Ok(Trace { acts })
    }

    /// Reverse-mode gradients of `sum_rows <output, out_grad>`: returns the
    /// flat parameter gradient (summed over the batch) and the input gradient.
    pub fn backward_batch(&self, trace: &Trace, out_grad: ArrayView2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
        let out = trace.output();
        if out_grad.dim() != out.dim() {
            return invalid(format!(
                "mlp output gradient shape {:?} does not match output {:?}",
                out_grad.dim(),
                out.dim()
            ));
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = out_grad.to_owned();
        for l in (0..self.n_layers()).rev() {
            let (i, o) = (self.widths[l], self.widths[l + 1]);
            let off = self.offsets[l];
            let a_prev = &trace.acts[l];
            let dw = delta.t().dot(a_prev);
            for (g, v) in grads[off..off + o * i].iter_mut().zip(dw.iter()) {
                *g = *v;
            }
            let db = delta.sum_axis(Axis(0));
            grads[off + o * i..off + o * i + o].copy_from_slice(db.as_slice().expect("contiguous"));
            let mut da = delta.dot(&self.weight(l));
            if l > 0 {
                ndarray::Zip::from(&mut da).and(a_prev).for_each(|d, &a| *d *= 1.0 - a * a);
            }
            delta = da;
        }
        Ok((grads, delta))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        ensure_dim("mlp input", self.input_dim(), input.len())?;
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Single-sample backward; see [`Mlp::backward_batch`].
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        ensure_dim("mlp input", self.input_dim(), input.len())?;
        ensure_dim("mlp output gradient", self.output_dim(), output_grad.len())?;
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row");
        let trace = self.forward_trace(x)?;
        let g = ArrayView2::from_shape((1, output_grad.len()), output_grad).expect("row");
        let (pg, ig) = self.backward_batch(&trace, g)?;
        Ok((pg, ig.row(0).to_vec()))
    }
}

/// Concatenate column blocks into one batch matrix.
pub fn hcat(blocks: &[ArrayView2<f64>]) -> Array2<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Array2::zeros((rows, cols));
    let mut c = 0;
    for b in blocks {
        out.slice_mut(s![.., c..c + b.ncols()]).assign(b);
        c += b.ncols();
    }
    out
}

pub fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((rows.len(), cols));
    for (i, r) in rows.iter().enumerate() {
        ensure_dim("row", cols, r.len())?;
        out.row_mut(i).assign(&Array1::from(r.clone()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let w = net.widths().to_vec();
        let p = net.params();
        let mut off = 0;
        let mut h = x.to_vec();
        for l in 0..w.len() - 1 {
            let (i, o) = (w[l], w[l + 1]);
            let mut next = vec![0.0; o];
            for r in 0..o {
                let mut acc = p[off + o * i + r];
                for c in 0..i {
                    acc += p[off + r * i + c] * h[c];
                }
                next[r] = if l + 2 < w.len() { acc.tanh() } else { acc };
            }
            off += o * i + o;
            h = next;
        }
        h
    }

    fn random_net(widths: &[usize], rng: &mut RandomSource) -> Mlp {
        let mut net = Mlp::zeros(widths).unwrap();
        let p: Vec<f64> = (0..net.param_count()).map(|_| 0.7 * rng.normal()).collect();
        net.set_params(&p).unwrap();
        net
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[4, 8, 3]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn single_affine_layer() {
        let mut net = Mlp::zeros(&[2, 2]).unwrap();
        net.set_params(&[1.0, 2.0, 3.0, 4.0, 0.5, -0.5]).unwrap();
        assert_eq!(net.forward(&[1.0, 1.0]).unwrap(), vec![3.5, 6.5]);
    }

    #[test]
    fn matches_naive_reimplementation() {
        let mut rng = RandomSource::new(4);
        for _ in 0..20 {
            let net = random_net(&[5, 7, 3], &mut rng);
            let x = rng.normal_vec(5);
            let a = net.forward(&x).unwrap();
            let b = naive_forward(&net, &x);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let net = Mlp::zeros(&[3, 2]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::InvalidArgument(_))));
        assert!(net.backward(&[1.0, 2.0, 3.0], &[1.0]).is_err());
    }

    #[test]
    fn linear_net_gradient_is_input() {
        let mut rng = RandomSource::new(8);
        let net = random_net(&[3, 2], &mut rng);
        let x = [0.3, -1.2, 2.0];
        let (pg, _) = net.backward(&x, &[0.0, 1.0]).unwrap();
        // row 1 of W sits at [3..6]
        assert_eq!(&pg[3..6], &x);
        assert_eq!(&pg[0..3], &[0.0; 3]);
        assert_eq!(&pg[6..8], &[0.0, 1.0]);
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let mut rng = RandomSource::new(8);
        let net = random_net(&[3, 5, 2], &mut rng);
        let (pg, ig) = net.backward(&[1.0, 2.0, 3.0], &[0.0, 0.0]).unwrap();
        assert!(pg.iter().chain(&ig).all(|&g| g == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = RandomSource::new(99);
        for _ in 0..25 {
            let widths = [1 + rng.below(6), 1 + rng.below(8), 1 + rng.below(8), 1 + rng.below(4)];
            let net = random_net(&widths, &mut rng);
            let x = rng.normal_vec(widths[0]);
            let og = rng.normal_vec(widths[3]);
            let (pg, ig) = net.backward(&x, &og).unwrap();
            let f = |n: &Mlp, x: &[f64]| -> f64 { n.forward(x).unwrap().iter().zip(&og).map(|(a, b)| a * b).sum() };
            let h = 1e-5;
            for k in 0..net.param_count() {
                let mut p = net.flatten();
                p[k] += h;
                let mut up = net.clone();
                up.set_params(&p).unwrap();
                p[k] -= 2.0 * h;
                let mut dn = net.clone();
                dn.set_params(&p).unwrap();
                let fd = (f(&up, &x) - f(&dn, &x)) / (2.0 * h);
                assert!(
                    (fd - pg[k]).abs() <= 1e-4 * fd.abs().max(pg[k].abs()).max(1e-3),
                    "param {k}: {fd} vs {}",
                    pg[k]
                );
            }
            for k in 0..x.len() {
                let mut xp = x.clone();
                xp[k] += h;
                let mut xm = x.clone();
                xm[k] -= h;
                let fd = (f(&net, &xp) - f(&net, &xm)) / (2.0 * h);
                assert!((fd - ig[k]).abs() <= 1e-4 * fd.abs().max(ig[k].abs()).max(1e-3));
            }
        }
    }

    #[test]
    fn batch_backward_sums_per_sample_gradients() {
        let mut rng = RandomSource::new(21);
        let net = random_net(&[3, 6, 2], &mut rng);
        let xs: Vec<Vec<f64>> = (0..4).map(|_| rng.normal_vec(3)).collect();
        let gs: Vec<Vec<f64>> = (0..4).map(|_| rng.normal_vec(2)).collect();
        let mut summed = vec![0.0; net.param_count()];
        for (x, g) in xs.iter().zip(&gs) {
            let (pg, _) = net.backward(x, g).unwrap();
            summed.iter_mut().zip(pg).for_each(|(a, b)| *a += b);
        }
        let x = from_rows(&xs, 3).unwrap();
        let g = from_rows(&gs, 2).unwrap();
        let trace = net.forward_trace(x.view()).unwrap();
        let (pg, _) = net.backward_batch(&trace, g.view()).unwrap();
        for (a, b) in summed.iter().zip(&pg) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn serde_round_trip_is_exact() {
        let mut rng = RandomSource::new(3);
        let net = Mlp::new(&[4, 16, 2], 0.5, &mut rng).unwrap();
        let json = serde_json::to_string(&net).unwrap();
        let back: Mlp = serde_json::from_str(&json).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn deserialize_rejects_wrong_param_count() {
        let bad = r#"{"widths":[2,2],"activation":"tanh","params":[1.0]}"#;
        assert!(serde_json::from_str::<Mlp>(bad).is_err());
    }
}
