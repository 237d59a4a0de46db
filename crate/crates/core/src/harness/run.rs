use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    build_nested_calibration, dump_posterior_samples, write_sample_dump, ExperimentConfig, Method, PosteriorSampler, SampleRecord,
    TaskChoice,
};
use crate::baseline::{finetune, train_npe_calibration_only, train_npe_with_transforms, ConditionalDensityModel};
use crate::error::{Error, Result};
use crate::flow::train_fmcpe;
use crate::metrics::{jc2st, mse, w2_joint_with, C2stConfig, JointSampleSet, MetricReport, SampleLabel, METRICS_HEADER};
use crate::nn::checkpoint::sha256_hex;
use crate::rng::RandomSource;
use crate::tasks::{
    build_datasets, ingest_csv, Datasets, GaussianTask, GaussianTaskParams, IngestedTask, PairDataset, PendulumTask, Provenance, Task,
};
use crate::transform::Transforms;

/// Task, datasets and the transforms shared by every model of a run.
#[derive(Debug, Clone)]
pub struct World {
    pub task: Task,
    pub data: Datasets,
    pub transforms: Transforms,
}

fn retag(ds: PairDataset, p: Provenance) -> Result<PairDataset> {
    PairDataset::new(ds.thetas().to_vec(), ds.obs().to_vec(), p)
}

pub fn build_world(cfg: &ExperimentConfig) -> Result<World> {
    let root = RandomSource::new(cfg.experiment_seed);
    let (task, data) = match &cfg.task {
        TaskChoice::Gaussian | TaskChoice::Pendulum => {
            let mut trng = root.stream("task");
            let task = if cfg.task == TaskChoice::Gaussian {
                let mut params = GaussianTaskParams::random(3, 10, &mut trng);
                if cfg.well_specified {
                    params = params.well_specified();
                }
                Task::Gaussian(GaussianTask::new(params)?)
            } else {
                Task::Pendulum(PendulumTask::new(200, cfg.pendulum_noise, &mut trng))
            };
            let data = build_datasets(&task, &root.stream("data"), cfg.n_sim, cfg.pool_size(), cfg.n_test)?;
            (task, data)
        }
        TaskChoice::Csv(dir) => {
            let sim = retag(ingest_csv(&dir.join("sim.csv"), None)?, Provenance::Simulated)?;
            let schema = Some(sim.schema());
            let cal_pool = retag(ingest_csv(&dir.join("cal_pool.csv"), schema)?, Provenance::Calibration)?;
            let test = retag(ingest_csv(&dir.join("test.csv"), schema)?, Provenance::Test)?;
            let mut t = IngestedTask::new(sim.param_dim(), sim.obs_dim(), None)?;
            let replay = dir.join("cal_sim.csv");
            t = if replay.exists() {
                t.with_replay(&ingest_csv(&replay, schema)?)?
            } else {
                log::warn!("{} missing; replaying the simulation set instead", replay.display());
                t.with_replay(&sim)?
            };
            (Task::Ingested(t), Datasets { sim, cal_pool, test })
        }
    };
    let transforms = if data.sim.len() >= 2 {
        Transforms::fit(data.sim.thetas(), data.sim.obs(), task.logit())?
    } else {
        log::warn!("simulation set too small for transform statistics; fitting on the calibration pool");
        Transforms::fit(data.cal_pool.thetas(), data.cal_pool.obs(), task.logit())?
    };
    Ok(World { task, data, transforms })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub w2: f64,
    pub jc2st: f64,
    pub mse: f64,
    pub w2_subsampled: bool,
    /// Per test point, the draws used for MSE. The first one also forms the
    /// single-draw joint sample.
    pub draws: Vec<Vec<Vec<f64>>>,
}

/// Metrics from per-test-point draws.
pub fn evaluate_draws(
    test: &PairDataset,
    draws: Vec<Vec<Vec<f64>>>,
    w2_cap: usize,
    w2_subsample: bool,
    c2st: &C2stConfig,
    c2st_rng: &RandomSource,
) -> Result<EvalOutcome> {
    if draws.len() != test.len() || draws.iter().any(|d| d.is_empty()) {
        return Err(Error::InvalidArgument("need at least one draw for every test point".into()));
    }
    let real = JointSampleSet::from_pairs(test.thetas(), test.obs(), SampleLabel::Real)?;
    let single: Vec<Vec<f64>> = draws.iter().map(|d| d[0].clone()).collect();
    let gen = JointSampleSet::from_pairs(&single, test.obs(), SampleLabel::Generated)?;
    let w2 = w2_joint_with(&real, &gen, w2_cap, w2_subsample)?;
    let acc = jc2st(&real, &gen, c2st_rng, c2st)?;
    let m = mse(&draws, test.thetas())?;
    Ok(EvalOutcome {
        w2: w2.value,
        jc2st: acc,
        mse: m,
        w2_subsampled: w2.subsampled,
        draws,
    })
}

/// Draw `m` samples per test point (point `j` on stream `j` of `rng`) and
/// compute all three metrics.
pub fn evaluate_sampler(
    sampler: &dyn PosteriorSampler,
    test: &PairDataset,
    m: usize,
    cfg: &ExperimentConfig,
    rng: &RandomSource,
    c2st_rng: &RandomSource,
) -> Result<EvalOutcome> {
    let draws = test
        .obs()
        .iter()
        .enumerate()
        .map(|(j, y)| sampler.sample_posterior(y, m, &mut rng.stream_indexed("point", j as u64)))
        .collect::<Result<Vec<_>>>()?;
    evaluate_draws(test, draws, cfg.w2_cap, cfg.w2_subsample, &cfg.c2st, c2st_rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub method: String,
    pub n_cal: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub files: Vec<FileEntry>,
    pub failures: Vec<CellFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub out: PathBuf,
    pub reports: Vec<MetricReport>,
    pub failures: Vec<CellFailure>,
    pub files: Vec<FileEntry>,
}

struct Writer {
    out: PathBuf,
    files: Vec<FileEntry>,
}

impl Writer {
    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn record(&mut self, rel: &str) -> Result<()> {
        let bytes = fs::read(self.path(rel))?;
        self.files.push(FileEntry {
            path: rel.to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    fn write(&mut self, rel: &str, text: &str) -> Result<()> {
        fs::write(self.path(rel), text)?;
        self.record(rel)
    }
}

#[allow(clippy::large_enum_variant)]
enum Trained {
    Density(ConditionalDensityModel),
    Fmcpe(Box<crate::flow::FmcpeModel>),
}

impl Trained {
    fn sampler(&self) -> &dyn PosteriorSampler {
        match self {
            Trained::Density(m) => m,
            Trained::Fmcpe(m) => m.as_ref(),
        }
    }

    fn to_json(&self) -> Result<String> {
        match self {
            Trained::Density(m) => m.to_json(),
            Trained::Fmcpe(m) => m.to_json(),
        }
    }
}

fn train_cell(
    method: Method,
    world: &World,
    baseline: Option<&ConditionalDensityModel>,
    cal: &PairDataset,
    cfg: &ExperimentConfig,
    rng: &RandomSource,
) -> Result<Trained> {
    let need = || baseline.ok_or_else(|| Error::InvalidArgument("baseline unavailable".into()));
    Ok(match method {
        Method::Npe => Trained::Density(train_npe_calibration_only(cal, &world.transforms, &cfg.npe, &mut rng.clone())?.0),
        Method::Finetune => Trained::Density(finetune(need()?, cal, &cfg.npe, &mut rng.clone())?.0),
        Method::Baseline => Trained::Density(need()?.clone()),
        Method::Fmcpe => {
            let (m, r) = train_fmcpe(cal, &world.task, need()?, &cfg.fmcpe, rng)?;
            log::info!(
                "fmcpe: {} steps, best validation loss {:.4} at step {}",
                r.steps_run,
                r.best_val_loss,
                r.best_step
            );
            Trained::Fmcpe(Box::new(m))
        }
    })
}

/// Run every (seed, calibration size, method) cell. Cell failures are
/// recorded and the remaining cells still run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let world = build_world(cfg)?;
    let root = RandomSource::new(cfg.experiment_seed);
    let family = build_nested_calibration(world.data.cal_pool.len(), &cfg.n_cal, &cfg.seeds, &root.stream("calibration"))?;
    for d in ["", "samples", "checkpoints", "data"] {
        fs::create_dir_all(cfg.out.join(d))?;
    }
    let mut w = Writer {
        out: cfg.out.clone(),
        files: Vec::new(),
    };
    world.data.test.export_csv(&w.path("data/test.csv"))?;
    w.record("data/test.csv")?;

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let needs_baseline = cfg.methods.iter().any(|m| m.needs_baseline());
    for &seed in &cfg.seeds {
        let srng = root.stream_indexed("seed", seed);
        let baseline = if needs_baseline {
            match train_npe_with_transforms(&world.data.sim, &world.transforms, &cfg.npe, &mut srng.stream("baseline")) {
                Ok((m, r)) => {
                    log::info!(
                        "seed {seed}: baseline trained, {} epochs, best val nll {:.4}",
                        r.epochs_run,
                        r.best_val_nll
                    );
                    let rel = format!("checkpoints/baseline_seed{seed}.json");
                    w.write(&rel, &m.to_json()?)?;
                    Ok(m)
                }
                Err(e) => Err(e.to_string()),
            }
        } else {
            Err("not trained".to_string())
        };
        for &n_cal in &cfg.n_cal {
            let cal = world.data.cal_pool.subset(family.indices(seed, n_cal)?)?;
            let c2st_rng = srng.stream(&format!("c2st/{n_cal}"));
            for &method in &cfg.methods {
                let cell = srng.stream(&format!("{}/{n_cal}", method.name()));
                let tag = format!("{}_ncal{n_cal}_seed{seed}", method.name());
                log::info!("cell {tag}");
                let start = Instant::now();
                let result = (|| -> Result<MetricReport> {
                    let base = match (&baseline, method.needs_baseline()) {
                        (Ok(b), _) => Some(b),
                        (Err(e), true) => return Err(Error::InvalidArgument(format!("baseline training failed: {e}"))),
                        (Err(_), false) => None,
                    };
                    let trained = train_cell(method, &world, base, &cal, cfg, &cell.stream("train"))?;
                    let ev = evaluate_sampler(
                        trained.sampler(),
                        &world.data.test,
                        cfg.mse_samples,
                        cfg,
                        &cell.stream("eval"),
                        &c2st_rng,
                    )?;
                    let seconds = if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 };
                    if method != Method::Baseline {
                        w.write(&format!("checkpoints/{tag}.json"), &trained.to_json()?)?;
                    }
                    if cfg.dump_points > 0 && cfg.dump_samples > 0 {
                        let pts: Vec<(usize, Vec<f64>)> = world.data.test.obs().iter().take(cfg.dump_points).cloned().enumerate().collect();
                        let rel = format!("samples/{tag}.csv");
                        dump_posterior_samples(
                            trained.sampler(),
                            method.name(),
                            &pts,
                            cfg.dump_samples,
                            &cell.stream("dump"),
                            &w.path(&rel),
                        )?;
                        w.record(&rel)?;
                    }
                    if cfg.save_eval_samples {
                        let rel = format!("samples/eval_{tag}.csv");
                        let recs: Vec<SampleRecord> = ev
                            .draws
                            .iter()
                            .enumerate()
                            .flat_map(|(j, d)| {
                                d.iter().enumerate().map(move |(k, t)| SampleRecord {
                                    method: method.name().to_string(),
                                    point: j,
                                    sample: k,
                                    theta: t.clone(),
                                })
                            })
                            .collect();
                        write_sample_dump(&w.path(&rel), world.task.param_dim(), &recs)?;
                        w.record(&rel)?;
                    }
                    let r = MetricReport {
                        method: method.name().to_string(),
                        task: world.task.name().to_string(),
                        n_cal,
                        seed,
                        w2: ev.w2,
                        jc2st: ev.jc2st,
                        mse: ev.mse,
                        seconds,
                    };
                    r.validate()?;
                    Ok(r)
                })();
                match result {
                    Ok(r) => {
                        log::info!("{tag}: w2 {:.4} jc2st {:.4} mse {:.4}", r.w2, r.jc2st, r.mse);
                        reports.push(r);
                    }
                    Err(e) => {
                        log::error!("{tag} failed: {e}");
                        failures.push(CellFailure {
                            method: method.name().to_string(),
                            n_cal,
                            seed,
                            error: e.to_string(),
                        });
                    }
                }
            }
        }
    }

    let mut csv = String::from(METRICS_HEADER);
    csv.push('\n');
    for r in &reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    w.write("metrics.csv", &csv)?;
    w.files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash()?,
        config: cfg.clone(),
        files: w.files.clone(),
        failures: failures.clone(),
    };
    fs::write(cfg.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(RunArtifacts {
        out: cfg.out.clone(),
        reports,
        failures,
        files: w.files,
    })
}

/// Read `metrics.csv` rows.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricReport>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: "unexpected metrics header".into(),
        });
    }
    lines.filter(|l| !l.is_empty()).map(MetricReport::parse_row).collect()
}
