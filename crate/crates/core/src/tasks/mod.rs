//! Generative worlds: prior, low-fidelity simulator, real data-generating
//! process, and dataset assembly.

mod dataset;
mod gaussian;
mod pendulum;

use std::collections::HashMap;

pub use dataset::{format_float, ingest_csv, CsvSchema, PairDataset, Provenance};
pub use gaussian::{linear_gaussian_posterior, GaussianTask, GaussianTaskParams};
pub use pendulum::PendulumTask;

use crate::error::{ensure_dim, Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::RandomSource;
use crate::transform::LogitTransform;

/// Anything that can draw a simulator output for a parameter.
pub trait Simulator {
    fn simulate(&self, theta: &[f64], rng: &mut RandomSource) -> Result<Vec<f64>>;
}

/// A task backed only by recorded data. Its "simulator" replays recorded
/// simulator outputs for known parameters (e.g. calibration θs), choosing
/// uniformly among the draws recorded for that exact θ.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestedTask {
    param_dim: usize,
    obs_dim: usize,
    logit: Option<LogitTransform>,
    replay: HashMap<Vec<u64>, Vec<Vec<f64>>>,
}

impl IngestedTask {
    pub fn new(param_dim: usize, obs_dim: usize, logit: Option<LogitTransform>) -> Result<Self> {
        if let Some(l) = &logit {
            ensure_dim("logit bounds", param_dim, l.dim())?;
        }
        Ok(Self {
            param_dim,
            obs_dim,
            logit,
            replay: HashMap::new(),
        })
    }

    /// Register recorded simulator draws `(θ, x)`.
    pub fn with_replay(mut self, sims: &PairDataset) -> Result<Self> {
        ensure_dim("replay theta", self.param_dim, sims.param_dim())?;
        ensure_dim("replay obs", self.obs_dim, sims.obs_dim())?;
        for (t, x) in sims.thetas().iter().zip(sims.obs()) {
            self.replay.entry(key(t)).or_default().push(x.clone());
        }
        Ok(self)
    }

    pub fn has_replay(&self) -> bool {
        !self.replay.is_empty()
    }
}

fn key(theta: &[f64]) -> Vec<u64> {
    theta.iter().map(|v| v.to_bits()).collect()
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Gaussian(GaussianTask),
    Pendulum(PendulumTask),
    Ingested(IngestedTask),
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Gaussian(_) => "gaussian",
            Task::Pendulum(_) => "pendulum",
            Task::Ingested(_) => "csv",
        }
    }

    pub fn param_dim(&self) -> usize {
        match self {
            Task::Gaussian(t) => t.param_dim(),
            Task::Pendulum(t) => t.param_dim(),
            Task::Ingested(t) => t.param_dim,
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            Task::Gaussian(t) => t.obs_dim(),
            Task::Pendulum(t) => t.obs_dim(),
            Task::Ingested(t) => t.obs_dim,
        }
    }

    /// Logit map for bounded (uniform) priors.
    pub fn logit(&self) -> Option<LogitTransform> {
        match self {
            Task::Gaussian(_) => None,
            Task::Pendulum(t) => Some(t.logit()),
            Task::Ingested(t) => t.logit.clone(),
        }
    }

    pub fn prior_sample(&self, rng: &mut RandomSource, n: usize) -> Result<Vec<Vec<f64>>> {
        match self {
            Task::Gaussian(t) => (0..n).map(|_| t.prior_sample(rng)).collect(),
            Task::Pendulum(t) => Ok((0..n).map(|_| t.prior_sample(rng)).collect()),
            Task::Ingested(_) => Err(Error::Unsupported("ingested tasks have no prior sampler".into())),
        }
    }

    pub fn observe_real(&self, theta: &[f64], rng: &mut RandomSource) -> Result<Vec<f64>> {
        match self {
            Task::Gaussian(t) => t.observe_real(theta, rng),
            Task::Pendulum(t) => t.observe_real(theta, rng),
            Task::Ingested(_) => Err(Error::Unsupported("ingested tasks cannot generate real observations".into())),
        }
    }

    pub fn analytic_posterior(&self, y: &[f64]) -> Result<(Vec<f64>, DenseMatrix)> {
        match self {
            Task::Gaussian(t) => t.analytic_posterior(y),
            other => Err(Error::Unsupported(format!("no analytic posterior for the {} task", other.name()))),
        }
    }
}

impl Simulator for Task {
    fn simulate(&self, theta: &[f64], rng: &mut RandomSource) -> Result<Vec<f64>> {
        match self {
            Task::Gaussian(t) => t.simulate(theta, rng),
            Task::Pendulum(t) => t.simulate(theta, rng),
            Task::Ingested(t) => {
                let draws = t
                    .replay
                    .get(&key(theta))
                    .ok_or_else(|| Error::Unsupported(format!("no recorded simulator output for theta {theta:?}")))?;
                Ok(draws[rng.below(draws.len())].clone())
            }
        }
    }
}

/// Simulation set, calibration pool and test set of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Datasets {
    pub sim: PairDataset,
    pub cal_pool: PairDataset,
    pub test: PairDataset,
}

fn generate(task: &Task, rng: &RandomSource, n: usize, provenance: Provenance, real: bool) -> Result<PairDataset> {
    let mut theta_rng = rng.stream("theta");
    let mut obs_rng = rng.stream("obs");
    let mut ds = PairDataset::empty(task.param_dim(), task.obs_dim(), provenance);
    for theta in task.prior_sample(&mut theta_rng, n)? {
        let obs = if real {
            task.observe_real(&theta, &mut obs_rng)?
        } else {
            task.simulate(&theta, &mut obs_rng)?
        };
        ds.push(theta, obs)?;
    }
    Ok(ds)
}

/// Simulation pairs `(θ, S(θ))` plus calibration pool and test pairs from
/// the real process, each on its own stream of `rng`.
pub fn build_datasets(task: &Task, rng: &RandomSource, n_sim: usize, n_cal_pool: usize, n_test: usize) -> Result<Datasets> {
    Ok(Datasets {
        sim: generate(task, &rng.stream("sim"), n_sim, Provenance::Simulated, false)?,
        cal_pool: generate(task, &rng.stream("cal"), n_cal_pool, Provenance::Calibration, true)?,
        test: generate(task, &rng.stream("test"), n_test, Provenance::Test, true)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_determinism() {
        let task = Task::Gaussian(GaussianTask::random(&mut RandomSource::new(0)).unwrap());
        let rng = RandomSource::new(1);
        let a = build_datasets(&task, &rng, 300, 50, 20).unwrap();
        let b = build_datasets(&task, &rng, 300, 50, 20).unwrap();
        assert_eq!((a.sim.len(), a.cal_pool.len(), a.test.len()), (300, 50, 20));
        assert_eq!(a, b);
        assert_ne!(a.cal_pool.thetas()[0], a.test.thetas()[0]);
    }

    #[test]
    fn empty_simulation_set() {
        let task = Task::Pendulum(PendulumTask::with_defaults(&mut RandomSource::new(0)));
        let ds = build_datasets(&task, &RandomSource::new(1), 0, 5, 5).unwrap();
        assert!(ds.sim.is_empty());
        assert_eq!(ds.sim.obs_dim(), 200);
    }

    #[test]
    fn replay_simulator() {
        let sims = PairDataset::new(
            vec![vec![1.0], vec![1.0], vec![2.0]],
            vec![vec![10.0], vec![11.0], vec![20.0]],
            Provenance::Ingested,
        )
        .unwrap();
        let task = Task::Ingested(IngestedTask::new(1, 1, None).unwrap().with_replay(&sims).unwrap());
        let mut rng = RandomSource::new(0);
        for _ in 0..20 {
            let x = task.simulate(&[1.0], &mut rng).unwrap();
            assert!(x == vec![10.0] || x == vec![11.0]);
        }
        assert_eq!(task.simulate(&[2.0], &mut rng).unwrap(), vec![20.0]);
        assert!(matches!(task.simulate(&[3.0], &mut rng), Err(Error::Unsupported(_))));
        assert!(task.analytic_posterior(&[0.0]).is_err());
    }
}
