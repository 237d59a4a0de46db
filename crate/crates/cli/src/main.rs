use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fmcpe::baseline::{train_npe_with_transforms, ConditionalDensityModel};
use fmcpe::flow::FmcpeModel;
use fmcpe::harness::{
    build_world, dump_posterior_samples, evaluate_draws, read_sample_dump, run_experiment, ExperimentConfig, PosteriorSampler,
};
use fmcpe::metrics::MetricReport;
use fmcpe::metrics::METRICS_HEADER;
use fmcpe::tasks::ingest_csv;
use fmcpe::RandomSource;

#[derive(Parser)]
#[command(name = "fmcpe", version, about = "Flow matching corrected posterior estimation benchmark")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate simulation, calibration-pool and test datasets as CSV.
    Generate(Common),
    /// Train the simulation-based posterior for one seed.
    TrainBaseline {
        #[command(flatten)]
        common: Common,
        /// Seed whose baseline stream is used.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the full experiment grid.
    Run(Common),
    /// Recompute a metrics row from a test set and an evaluation sample dump.
    Metrics {
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, default_value = "unknown")]
        task: String,
        #[arg(long, default_value_t = 0)]
        n_cal: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Seed of the classifier test.
        #[arg(long, default_value_t = 0)]
        c2st_seed: u64,
    },
    /// Draw posterior samples from a checkpoint for chosen test points.
    DumpSamples {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Test set CSV.
        #[arg(long)]
        test: PathBuf,
        /// Comma-separated test point indices.
        #[arg(long, default_value = "0")]
        points: String,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "samples.csv")]
        output: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Flat key = value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// gaussian, pendulum or csv:<dir>
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    n_sim: Option<String>,
    /// Comma-separated calibration sizes.
    #[arg(long)]
    n_cal: Option<String>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    n_test: Option<String>,
    /// Comma-separated methods: npe, finetune, fmcpe, baseline.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    ode_steps: Option<String>,
    /// Extra `key=value` overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        let flags = [
            ("task", &self.task),
            ("n_sim", &self.n_sim),
            ("n_cal", &self.n_cal),
            ("seeds", &self.seeds),
            ("n_test", &self.n_test),
            ("methods", &self.methods),
            ("out", &self.out),
            ("sigma", &self.sigma),
            ("ode_steps", &self.ode_steps),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("--set expects KEY=VALUE, got {kv:?}");
            };
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Load either checkpoint kind; returns the sampler and a method tag.
fn load_sampler(path: &Path) -> Result<(Box<dyn PosteriorSampler>, &'static str)> {
    let text = std::fs::read_to_string(path)?;
    if let Ok(m) = FmcpeModel::from_json(&text) {
        return Ok((Box::new(m), "fmcpe"));
    }
    let m = ConditionalDensityModel::from_json(&text).with_context(|| format!("{} is not a model checkpoint", path.display()))?;
    Ok((Box::new(m), "density"))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Generate(c) => {
            let cfg = c.config()?;
            let world = build_world(&cfg)?;
            let dir = cfg.out.join("data");
            std::fs::create_dir_all(&dir)?;
            world.data.sim.export_csv(&dir.join("sim.csv"))?;
            world.data.cal_pool.export_csv(&dir.join("cal_pool.csv"))?;
            world.data.test.export_csv(&dir.join("test.csv"))?;
            println!("wrote {}", dir.display());
        }
        Cmd::TrainBaseline { common, seed } => {
            let cfg = common.config()?;
            let world = build_world(&cfg)?;
            let rng = RandomSource::new(cfg.experiment_seed)
                .stream_indexed("seed", seed)
                .stream("baseline");
            let (m, r) = train_npe_with_transforms(&world.data.sim, &world.transforms, &cfg.npe, &mut rng.clone())?;
            std::fs::create_dir_all(cfg.out.join("checkpoints"))?;
            let path = cfg.out.join(format!("checkpoints/baseline_seed{seed}.json"));
            m.save(&path)?;
            println!(
                "{}: {} epochs, best validation nll {:.5}",
                path.display(),
                r.epochs_run,
                r.best_val_nll
            );
        }
        Cmd::Run(c) => {
            let cfg = c.config()?;
            log::info!("config hash {}", cfg.hash()?);
            let art = run_experiment(&cfg)?;
            log::info!(
                "{} cells done, {} failed; outputs in {}",
                art.reports.len(),
                art.failures.len(),
                cfg.out.display()
            );
            println!("{METRICS_HEADER}");
            for r in &art.reports {
                println!("{}", r.csv_row());
            }
            for f in &art.failures {
                eprintln!("FAILED {} n_cal={} seed={}: {}", f.method, f.n_cal, f.seed, f.error);
            }
            return Ok(art.failures.is_empty());
        }
        Cmd::Metrics {
            test,
            samples,
            task,
            n_cal,
            seed,
            c2st_seed,
        } => {
            let test = ingest_csv(&test, None)?;
            let recs = read_sample_dump(&samples)?;
            let method = recs.first().map(|r| r.method.clone()).unwrap_or_default();
            let mut draws = vec![Vec::new(); test.len()];
            for r in recs {
                let slot = draws
                    .get_mut(r.point)
                    .with_context(|| format!("sample for unknown test point {}", r.point))?;
                slot.push(r.theta);
            }
            let cfg = ExperimentConfig::default();
            let ev = evaluate_draws(&test, draws, cfg.w2_cap, cfg.w2_subsample, &cfg.c2st, &RandomSource::new(c2st_seed))?;
            let r = MetricReport {
                method,
                task,
                n_cal,
                seed,
                w2: ev.w2,
                jc2st: ev.jc2st,
                mse: ev.mse,
                seconds: 0.0,
            };
            println!("{METRICS_HEADER}\n{}", r.csv_row());
        }
        Cmd::DumpSamples {
            checkpoint,
            test,
            points,
            n,
            seed,
            output,
        } => {
            let (sampler, method) = load_sampler(&checkpoint)?;
            let test = ingest_csv(&test, None)?;
            let mut pts = Vec::new();
            for p in points.split(',') {
                let j: usize = p.trim().parse().with_context(|| format!("bad point index {p:?}"))?;
                let y = test.obs().get(j).with_context(|| format!("test point {j} out of range"))?;
                pts.push((j, y.clone()));
            }
            dump_posterior_samples(sampler.as_ref(), method, &pts, n, &RandomSource::new(seed), &output)?;
            println!("wrote {}", output.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
