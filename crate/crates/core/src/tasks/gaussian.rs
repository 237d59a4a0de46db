//! Linear-Gaussian task: Gaussian prior, simulator `N(Aθ + b, Σ_x)` and
//! real process `N(Cθ + d, Σ_y)`, with a closed-form posterior oracle.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Result};
use crate::linalg::{gaussian_sample, random_spd, DenseMatrix};
use crate::rng::RandomSource;

const SPD_JITTER: f64 = 1e-3;
const SPD_FACTOR_SCALE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianTaskParams {
    pub mu_theta: Vec<f64>,
    pub sigma_theta: DenseMatrix,
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    pub sigma_x: DenseMatrix,
    pub c: DenseMatrix,
    pub d: Vec<f64>,
    pub sigma_y: DenseMatrix,
}

impl GaussianTaskParams {
    /// Random draw: means and matrices entrywise N(0, 1), covariances
    /// `L Lᵀ + 1e-3 I` with `L` entrywise N(0, 0.3²).
    pub fn random(param_dim: usize, obs_dim: usize, rng: &mut RandomSource) -> Self {
        let vec_n = |n: usize, rng: &mut RandomSource| rng.normal_vec(n);
        let mu_theta = vec_n(param_dim, rng);
        let sigma_theta = random_spd(param_dim, SPD_FACTOR_SCALE, SPD_JITTER, rng);
        let a = DenseMatrix::random_normal(obs_dim, param_dim, 1.0, rng);
        let b = vec_n(obs_dim, rng);
        let sigma_x = random_spd(obs_dim, SPD_FACTOR_SCALE, SPD_JITTER, rng);
        let c = DenseMatrix::random_normal(obs_dim, param_dim, 1.0, rng);
        let d = vec_n(obs_dim, rng);
        let sigma_y = random_spd(obs_dim, SPD_FACTOR_SCALE, SPD_JITTER, rng);
        Self {
            mu_theta,
            sigma_theta,
            a,
            b,
            sigma_x,
            c,
            d,
            sigma_y,
        }
    }

    /// Same task with the real process replaced by the simulator.
    pub fn well_specified(mut self) -> Self {
        self.c = self.a.clone();
        self.d = self.b.clone();
        self.sigma_y = self.sigma_x.clone();
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTask {
    params: GaussianTaskParams,
    chol_theta: DenseMatrix,
    pub(crate) chol_x: DenseMatrix,
    pub(crate) chol_y: DenseMatrix,
}

impl GaussianTask {
    pub const DEFAULT_PARAM_DIM: usize = 3;
    pub const DEFAULT_OBS_DIM: usize = 10;

    pub fn new(params: GaussianTaskParams) -> Result<Self> {
        let p = params.mu_theta.len();
        let dd = params.b.len();
        ensure_dim("sigma_theta", p, params.sigma_theta.rows())?;
        ensure_dim("A rows", dd, params.a.rows())?;
        ensure_dim("A cols", p, params.a.cols())?;
        ensure_dim("C rows", params.d.len(), params.c.rows())?;
        ensure_dim("C cols", p, params.c.cols())?;
        ensure_dim("simulator and real observation dims", dd, params.d.len())?;
        ensure_dim("sigma_x", dd, params.sigma_x.rows())?;
        ensure_dim("sigma_y", dd, params.sigma_y.rows())?;
        Ok(Self {
            chol_theta: params.sigma_theta.cholesky()?,
            chol_x: params.sigma_x.cholesky()?,
            chol_y: params.sigma_y.cholesky()?,
            params,
        })
    }

    pub fn random(rng: &mut RandomSource) -> Result<Self> {
        Self::new(GaussianTaskParams::random(Self::DEFAULT_PARAM_DIM, Self::DEFAULT_OBS_DIM, rng))
    }

    pub fn params(&self) -> &GaussianTaskParams {
        &self.params
    }

    pub fn param_dim(&self) -> usize {
        self.params.mu_theta.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.params.b.len()
    }

    pub fn prior_sample(&self, rng: &mut RandomSource) -> Result<Vec<f64>> {
        gaussian_sample(rng, &self.params.mu_theta, &self.chol_theta)
    }

    fn affine(m: &DenseMatrix, theta: &[f64], offset: &[f64]) -> Result<Vec<f64>> {
        Ok(m.matvec(theta)?.into_iter().zip(offset).map(|(v, o)| v + o).collect())
    }

    pub fn simulate(&self, theta: &[f64], rng: &mut RandomSource) -> Result<Vec<f64>> {
        let mean = Self::affine(&self.params.a, theta, &self.params.b)?;
        gaussian_sample(rng, &mean, &self.chol_x)
    }

    pub fn observe_real(&self, theta: &[f64], rng: &mut RandomSource) -> Result<Vec<f64>> {
        let mean = Self::affine(&self.params.c, theta, &self.params.d)?;
        gaussian_sample(rng, &mean, &self.chol_y)
    }

    /// Exact posterior of θ given a real observation `y`.
    pub fn analytic_posterior(&self, y: &[f64]) -> Result<(Vec<f64>, DenseMatrix)> {
        let p = &self.params;
        linear_gaussian_posterior(&p.mu_theta, &p.sigma_theta, &p.c, &p.d, &p.sigma_y, y)
    }

    /// Exact posterior of θ given a simulator output `x`.
    pub fn simulator_posterior(&self, x: &[f64]) -> Result<(Vec<f64>, DenseMatrix)> {
        let p = &self.params;
        linear_gaussian_posterior(&p.mu_theta, &p.sigma_theta, &p.a, &p.b, &p.sigma_x, x)
    }
}

/// Conjugate update for `θ ~ N(μ, Σ_θ)`, `y | θ ~ N(Mθ + o, Σ)`:
/// `cov = (Σ_θ⁻¹ + Mᵀ Σ⁻¹ M)⁻¹`, `mean = cov (Σ_θ⁻¹ μ + Mᵀ Σ⁻¹ (y − o))`.
pub fn linear_gaussian_posterior(
    mu: &[f64],
    sigma_theta: &DenseMatrix,
    m: &DenseMatrix,
    offset: &[f64],
    sigma: &DenseMatrix,
    y: &[f64],
) -> Result<(Vec<f64>, DenseMatrix)> {
    ensure_dim("observation", offset.len(), y.len())?;
    let prior_prec = sigma_theta.spd_inverse()?;
    let noise_prec = sigma.spd_inverse()?;
    let mt = m.transpose();
    let mt_np = mt.matmul(&noise_prec)?;
    let post_prec = prior_prec.add(&mt_np.matmul(m)?)?;
    let cov = post_prec.spd_inverse()?;
    let resid: Vec<f64> = y.iter().zip(offset).map(|(a, b)| a - b).collect();
    let rhs: Vec<f64> = prior_prec
        .matvec(mu)?
        .into_iter()
        .zip(mt_np.matvec(&resid)?)
        .map(|(a, b)| a + b)
        .collect();
    let mean = cov.matvec(&rhs)?;
    Ok((mean, cov))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(seed: u64) -> GaussianTask {
        GaussianTask::random(&mut RandomSource::new(seed)).unwrap()
    }

    #[test]
    fn prior_mean_clt_bound() {
        let t = task(1);
        let mut rng = RandomSource::new(2);
        let n = 100_000;
        let mut mean = [0.0; 3];
        for _ in 0..n {
            let th = t.prior_sample(&mut rng).unwrap();
            for (m, v) in mean.iter_mut().zip(&th) {
                *m += v / n as f64;
            }
        }
        for (i, m) in mean.iter().enumerate() {
            let sd = t.params().sigma_theta.get(i, i).sqrt();
            assert!((m - t.params().mu_theta[i]).abs() < 3.0 * sd / (n as f64).sqrt());
        }
    }

    #[test]
    fn noiseless_simulator_is_affine() {
        let mut t = task(3);
        t.chol_x = DenseMatrix::zeros(10, 10);
        let theta = [0.5, -1.0, 2.0];
        let x = t.simulate(&theta, &mut RandomSource::new(0)).unwrap();
        let expect = GaussianTask::affine(&t.params().a, &theta, &t.params().b).unwrap();
        assert_eq!(x, expect);
    }

    #[test]
    fn zero_forward_map_gives_prior() {
        let mut params = GaussianTaskParams::random(3, 10, &mut RandomSource::new(4));
        params.c = DenseMatrix::zeros(10, 3);
        let t = GaussianTask::new(params).unwrap();
        let (mean, cov) = t.analytic_posterior(&[1.0; 10]).unwrap();
        for (i, m) in mean.iter().enumerate() {
            assert!((m - t.params().mu_theta[i]).abs() < 1e-10);
            for j in 0..3 {
                assert!((cov.get(i, j) - t.params().sigma_theta.get(i, j)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn noiseless_square_limit_inverts_forward_map() {
        let mut rng = RandomSource::new(5);
        let mut params = GaussianTaskParams::random(3, 3, &mut rng);
        params.sigma_y = DenseMatrix::identity(3).scale(1e-12);
        let t = GaussianTask::new(params).unwrap();
        let y = [0.3, -0.7, 1.1];
        let (mean, _) = t.analytic_posterior(&y).unwrap();
        let resid: Vec<f64> = y.iter().zip(&t.params().d).map(|(a, b)| a - b).collect();
        let direct = t.params().c.inverse().unwrap().matvec(&resid).unwrap();
        for (a, b) in mean.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-6 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    /// p = 1 variant checked against Bayes' rule evaluated on a dense grid.
    #[test]
    fn matches_grid_quadrature() {
        let mut rng = RandomSource::new(6);
        for _ in 0..5 {
            let params = GaussianTaskParams::random(1, 4, &mut rng);
            let t = GaussianTask::new(params).unwrap();
            let theta = t.prior_sample(&mut rng).unwrap();
            let y = t.observe_real(&theta, &mut rng).unwrap();
            let (mean, cov) = t.analytic_posterior(&y).unwrap();

            let p = t.params();
            let prior_var = p.sigma_theta.get(0, 0);
            let prec = p.sigma_y.spd_inverse().unwrap();
            let log_post = |th: f64| -> f64 {
                let r: Vec<f64> = (0..4).map(|i| y[i] - p.c.get(i, 0) * th - p.d[i]).collect();
                let pr = prec.matvec(&r).unwrap();
                let quad: f64 = r.iter().zip(&pr).map(|(a, b)| a * b).sum();
                -0.5 * (th - p.mu_theta[0]).powi(2) / prior_var - 0.5 * quad
            };
            let (lo, hi, n) = (mean[0] - 12.0 * cov.get(0, 0).sqrt(), mean[0] + 12.0 * cov.get(0, 0).sqrt(), 20_001);
            let h = (hi - lo) / (n - 1) as f64;
            let grid: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
            let lmax = grid.iter().map(|&g| log_post(g)).fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = grid.iter().map(|&g| (log_post(g) - lmax).exp()).collect();
            let z: f64 = w.iter().sum();
            let gm: f64 = grid.iter().zip(&w).map(|(g, w)| g * w).sum::<f64>() / z;
            let gv: f64 = grid.iter().zip(&w).map(|(g, w)| (g - gm).powi(2) * w).sum::<f64>() / z;
            let scale = cov.get(0, 0).sqrt();
            assert!((gm - mean[0]).abs() < 0.01 * scale.max(mean[0].abs()));
            assert!((gv - cov.get(0, 0)).abs() < 0.01 * cov.get(0, 0));
        }
    }

    #[test]
    fn posterior_cov_is_spd() {
        for seed in 0..20 {
            let t = task(seed);
            let (_, cov) = t.analytic_posterior(&[0.0; 10]).unwrap();
            assert!(cov.is_symmetric(1e-12));
            assert!(cov.cholesky().is_ok());
        }
    }
}
