//! Pendulum task: the simulator is an undamped oscillator, the real process
//! adds exponential damping with a random friction coefficient per series.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Result};
use crate::rng::RandomSource;
use crate::transform::LogitTransform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendulumTask {
    times: Vec<f64>,
    pub noise_std: f64,
    pub max_damping: f64,
}

impl PendulumTask {
    pub const N_STEPS: usize = 200;
    pub const T_MAX: f64 = 10.0;
    pub const DEFAULT_NOISE_STD: f64 = 0.1;
    /// Prior box: amplitude `A ∈ [0, 3]`, frequency `ω₀ ∈ [0.5, 10]`.
    pub const PRIOR_LO: [f64; 2] = [0.0, 0.5];
    pub const PRIOR_HI: [f64; 2] = [3.0, 10.0];

    /// Draws the shared time grid (sorted) from `rng`.
    pub fn new(n_steps: usize, noise_std: f64, rng: &mut RandomSource) -> Self {
        let mut times: Vec<f64> = (0..n_steps).map(|_| rng.uniform_range(0.0, Self::T_MAX)).collect();
        times.sort_by(f64::total_cmp);
        Self {
            times,
            noise_std,
            max_damping: 1.0,
        }
    }

    pub fn with_defaults(rng: &mut RandomSource) -> Self {
        Self::new(Self::N_STEPS, Self::DEFAULT_NOISE_STD, rng)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn param_dim(&self) -> usize {
        2
    }

    pub fn obs_dim(&self) -> usize {
        self.times.len()
    }

    pub fn logit(&self) -> LogitTransform {
        LogitTransform::new(Self::PRIOR_LO.to_vec(), Self::PRIOR_HI.to_vec()).expect("valid prior box")
    }

    pub fn prior_sample(&self, rng: &mut RandomSource) -> Vec<f64> {
        (0..2).map(|i| rng.uniform_range(Self::PRIOR_LO[i], Self::PRIOR_HI[i])).collect()
    }

    /// Noise-free series `e^{-α t} A cos(ω₀ t + φ)`.
    pub fn signal(&self, theta: &[f64], phase: f64, damping: f64) -> Vec<f64> {
        let (amp, omega) = (theta[0], theta[1]);
        self.times
            .iter()
            .map(|&t| (-damping * t).exp() * amp * (omega * t + phase).cos())
            .collect()
    }

    /// One series with the given phase and damping plus Gaussian noise.
    pub fn series(&self, theta: &[f64], phase: f64, damping: f64, rng: &mut RandomSource) -> Result<Vec<f64>> {
        ensure_dim("pendulum theta", 2, theta.len())?;
        let mut s = self.signal(theta, phase, damping);
        for v in &mut s {
            *v += self.noise_std * rng.normal();
        }
        Ok(s)
    }

    pub fn simulate(&self, theta: &[f64], rng: &mut RandomSource) -> Result<Vec<f64>> {
        let phase = rng.uniform_range(0.0, TAU);
        self.series(theta, phase, 0.0, rng)
    }

    pub fn observe_real(&self, theta: &[f64], rng: &mut RandomSource) -> Result<Vec<f64>> {
        let phase = rng.uniform_range(0.0, TAU);
        let damping = rng.uniform_range(0.0, self.max_damping);
        self.series(theta, phase, damping, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task() -> PendulumTask {
        PendulumTask::with_defaults(&mut RandomSource::new(0))
    }

    #[test]
    fn grid_shape() {
        let t = task();
        assert_eq!(t.obs_dim(), 200);
        assert!(t.times().iter().all(|&s| (0.0..=10.0).contains(&s)));
        assert!(t.times().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn prior_draws_in_box() {
        let t = task();
        let mut rng = RandomSource::new(1);
        for _ in 0..10_000 {
            let th = t.prior_sample(&mut rng);
            assert!((0.0..=3.0).contains(&th[0]) && (0.5..=10.0).contains(&th[1]));
        }
    }

    #[test]
    fn zero_amplitude_is_pure_noise() {
        let t = task();
        let x = t.simulate(&[0.0, 3.0], &mut RandomSource::new(2)).unwrap();
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((var.sqrt() - 0.1).abs() < 0.02);
    }

    #[test]
    fn noiseless_zero_phase_closed_form() {
        let mut t = task();
        t.noise_std = 0.0;
        let theta = [1.7, 2.3];
        let x = t.series(&theta, 0.0, 0.0, &mut RandomSource::new(3)).unwrap();
        for (xi, ti) in x.iter().zip(t.times()) {
            assert_eq!(*xi, 1.7 * (2.3 * ti).cos());
        }
    }

    #[test]
    fn damped_envelope() {
        let t = task();
        let mut rng = RandomSource::new(4);
        let (mut inside, mut total) = (0usize, 0usize);
        for _ in 0..500 {
            let th = t.prior_sample(&mut rng);
            let alpha = rng.uniform_range(0.9, 1.0);
            let phase = rng.uniform_range(0.0, TAU);
            let y = t.series(&th, phase, alpha, &mut rng).unwrap();
            for (yi, ti) in y.iter().zip(t.times()) {
                if *ti > 5.0 {
                    total += 1;
                    if yi.abs() <= th[0] * (-alpha * ti).exp() + 5.0 * t.noise_std {
                        inside += 1;
                    }
                }
            }
        }
        assert!(inside as f64 / total as f64 >= 0.9999);
    }

    #[test]
    fn real_values_bounded() {
        let t = task();
        let mut rng = RandomSource::new(5);
        for _ in 0..200 {
            let th = t.prior_sample(&mut rng);
            let y = t.observe_real(&th, &mut rng).unwrap();
            assert!(y.iter().all(|v| v.is_finite() && v.abs() <= th[0] + 6.0 * t.noise_std));
        }
    }
}
