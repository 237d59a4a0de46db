use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baseline::{HeadKind, NpeConfig};
use crate::error::{Error, Result};
use crate::flow::{FmcpeConfig, Integrator, OdeConfig};
use crate::metrics::C2stConfig;
use crate::nn::{checkpoint, GradClipConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskChoice {
    Gaussian,
    Pendulum,
    /// Directory holding `sim.csv`, `cal_pool.csv`, `test.csv` and
    /// optionally `cal_sim.csv`.
    Csv(PathBuf),
}

impl FromStr for TaskChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "pendulum" => Ok(Self::Pendulum),
            _ => match s.strip_prefix("csv:") {
                Some(p) if !p.is_empty() => Ok(Self::Csv(PathBuf::from(p))),
                _ => Err(Error::Config(format!("unknown task {s:?} (gaussian, pendulum or csv:<dir>)"))),
            },
        }
    }
}

impl fmt::Display for TaskChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian => write!(f, "gaussian"),
            Self::Pendulum => write!(f, "pendulum"),
            Self::Csv(p) => write!(f, "csv:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    /// NPE trained on the calibration set alone.
    Npe,
    /// Simulation-pretrained NPE fine-tuned on the calibration set.
    Finetune,
    Fmcpe,
    /// Simulation-pretrained NPE, uncorrected.
    Baseline,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Npe => "npe",
            Self::Finetune => "finetune",
            Self::Fmcpe => "fmcpe",
            Self::Baseline => "baseline",
        }
    }

    pub fn needs_baseline(self) -> bool {
        !matches!(self, Self::Npe)
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "npe" => Ok(Self::Npe),
            "finetune" => Ok(Self::Finetune),
            "fmcpe" => Ok(Self::Fmcpe),
            "baseline" => Ok(Self::Baseline),
            _ => Err(Error::Config(format!("unknown method {s:?}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: TaskChoice,
    /// Drives the task world, the datasets and the calibration subsets.
    pub experiment_seed: u64,
    pub n_sim: usize,
    pub n_cal: Vec<usize>,
    /// Calibration pool size; defaults to the largest calibration size.
    pub n_cal_pool: Option<usize>,
    pub seeds: Vec<u64>,
    pub n_test: usize,
    pub methods: Vec<Method>,
    #[serde(skip)]
    pub out: PathBuf,
    pub mse_samples: usize,
    pub w2_cap: usize,
    pub w2_subsample: bool,
    /// When false the `seconds` column is written as 0.
    pub timing: bool,
    pub dump_points: usize,
    pub dump_samples: usize,
    pub save_eval_samples: bool,
    pub pendulum_noise: f64,
    /// Gaussian task only: make the real process equal the simulator.
    pub well_specified: bool,
    pub npe: NpeConfig,
    pub fmcpe: FmcpeConfig,
    pub c2st: C2stConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskChoice::Gaussian,
            experiment_seed: 0,
            n_sim: 50_000,
            n_cal: vec![10, 50, 200, 1000],
            n_cal_pool: None,
            seeds: vec![0, 1, 2, 3, 4],
            n_test: 2000,
            methods: vec![Method::Npe, Method::Finetune, Method::Fmcpe],
            out: PathBuf::from("out"),
            mse_samples: 64,
            w2_cap: 2000,
            w2_subsample: true,
            timing: true,
            dump_points: 1,
            dump_samples: 2000,
            save_eval_samples: false,
            pendulum_noise: 0.1,
            well_specified: false,
            npe: NpeConfig::default(),
            fmcpe: FmcpeConfig::default(),
            c2st: C2stConfig::default(),
        }
    }
}

fn cfg_err(key: &str, value: &str, what: &str) -> Error {
    Error::Config(format!("{key} = {value:?}: {what}"))
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| cfg_err(key, v, "not a valid number"))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| num(key, s.trim())).collect()
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(cfg_err(key, v, "expected true or false")),
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "task",
    "experiment_seed",
    "n_sim",
    "n_cal",
    "n_cal_pool",
    "seeds",
    "n_test",
    "methods",
    "out",
    "mse_samples",
    "w2_cap",
    "w2_subsample",
    "timing",
    "dump_points",
    "dump_samples",
    "save_eval_samples",
    "pendulum_noise",
    "well_specified",
    "sigma",
    "ode_steps",
    "ode_integrator",
    "ode_train_steps",
    "fmcpe_hidden",
    "fmcpe_embed_hidden",
    "fmcpe_ctx_dim",
    "fmcpe_lr",
    "fmcpe_batch",
    "fmcpe_max_steps",
    "fmcpe_eval_every",
    "fmcpe_patience",
    "fmcpe_min_steps",
    "fmcpe_val_tuples",
    "fmcpe_clip",
    "npe_hidden",
    "npe_head",
    "npe_lr",
    "npe_finetune_lr_factor",
    "npe_batch",
    "npe_max_epochs",
    "npe_patience",
    "c2st_hidden",
    "c2st_max_epochs",
    "c2st_patience",
    "c2st_folds",
];

impl ExperimentConfig {
    /// Set one key from its text value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "task" => self.task = v.parse()?,
            "experiment_seed" => self.experiment_seed = num(key, v)?,
            "n_sim" => self.n_sim = num(key, v)?,
            "n_cal" => self.n_cal = list(key, v)?,
            "n_cal_pool" => self.n_cal_pool = Some(num(key, v)?),
            "seeds" => self.seeds = list(key, v)?,
            "n_test" => self.n_test = num(key, v)?,
            "methods" => self.methods = v.split(',').map(|m| m.trim().parse()).collect::<Result<_>>()?,
            "out" => self.out = PathBuf::from(v),
            "mse_samples" => self.mse_samples = num(key, v)?,
            "w2_cap" => self.w2_cap = num(key, v)?,
            "w2_subsample" => self.w2_subsample = flag(key, v)?,
            "timing" => self.timing = flag(key, v)?,
            "dump_points" => self.dump_points = num(key, v)?,
            "dump_samples" => self.dump_samples = num(key, v)?,
            "save_eval_samples" => self.save_eval_samples = flag(key, v)?,
            "pendulum_noise" => self.pendulum_noise = num(key, v)?,
            "well_specified" => self.well_specified = flag(key, v)?,
            "sigma" => self.fmcpe.sigma = num(key, v)?,
            "ode_steps" => self.fmcpe.ode_infer.steps = num(key, v)?,
            "ode_integrator" => {
                self.fmcpe.ode_infer.integrator = match v {
                    "euler" => Integrator::Euler,
                    "rk4" => Integrator::Rk4,
                    _ => return Err(cfg_err(key, v, "expected euler or rk4")),
                }
            }
            "ode_train_steps" => self.fmcpe.ode_train = OdeConfig::euler(num(key, v)?),
            "fmcpe_hidden" => {
                let h: Vec<usize> = list(key, v)?;
                self.fmcpe.field_x.hidden.clone_from(&h);
                self.fmcpe.field_theta.hidden = h;
            }
            "fmcpe_embed_hidden" => {
                let h: Vec<usize> = if v.is_empty() { Vec::new() } else { list(key, v)? };
                self.fmcpe.field_x.embed_hidden.clone_from(&h);
                self.fmcpe.field_theta.embed_hidden = h;
            }
            "fmcpe_ctx_dim" => {
                let c = num(key, v)?;
                self.fmcpe.field_x.ctx_dim = c;
                self.fmcpe.field_theta.ctx_dim = c;
            }
            "fmcpe_lr" => self.fmcpe.lr = num(key, v)?,
            "fmcpe_batch" => self.fmcpe.batch_size = num(key, v)?,
            "fmcpe_max_steps" => self.fmcpe.max_steps = num(key, v)?,
            "fmcpe_eval_every" => self.fmcpe.eval_every = num(key, v)?,
            "fmcpe_patience" => self.fmcpe.patience = num(key, v)?,
            "fmcpe_min_steps" => self.fmcpe.min_steps = num(key, v)?,
            "fmcpe_val_tuples" => self.fmcpe.val_tuples = num(key, v)?,
            "fmcpe_clip" => self.fmcpe.clip = GradClipConfig { max_norm: num(key, v)? },
            "npe_hidden" => self.npe.hidden = list(key, v)?,
            "npe_head" => {
                self.npe.head = match v {
                    "gaussian" => HeadKind::Gaussian,
                    "coupling" => HeadKind::Coupling,
                    _ => return Err(cfg_err(key, v, "expected gaussian or coupling")),
                }
            }
            "npe_lr" => self.npe.lr = num(key, v)?,
            "npe_finetune_lr_factor" => self.npe.finetune_lr_factor = num(key, v)?,
            "npe_batch" => self.npe.batch_size = num(key, v)?,
            "npe_max_epochs" => self.npe.max_epochs = num(key, v)?,
            "npe_patience" => self.npe.patience = num(key, v)?,
            "c2st_hidden" => self.c2st.hidden = list(key, v)?,
            "c2st_max_epochs" => self.c2st.max_epochs = num(key, v)?,
            "c2st_patience" => self.c2st.patience = num(key, v)?,
            "c2st_folds" => self.c2st.folds = num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Apply a flat `key = value` text. `#` starts a comment; blank lines
    /// are ignored; later lines override earlier ones.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", i + 1)))?;
            self.set(k.trim(), v).map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn pool_size(&self) -> usize {
        self.n_cal_pool.unwrap_or_else(|| self.n_cal.iter().copied().max().unwrap_or(0))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_cal.is_empty() {
            return bad("n_cal is empty".into());
        }
        if self.n_cal.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("calibration sizes must be strictly increasing: {:?}", self.n_cal));
        }
        if self.n_cal[0] < 2 {
            return bad("calibration sizes must be >= 2".into());
        }
        if self.pool_size() < *self.n_cal.last().unwrap() {
            return bad(format!("calibration pool {} smaller than largest size", self.pool_size()));
        }
        if self.seeds.is_empty() || self.methods.is_empty() {
            return bad("seeds and methods must be non-empty".into());
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.seeds.len() {
            return bad("duplicate seeds".into());
        }
        let mut m = self.methods.clone();
        m.sort_unstable();
        m.dedup();
        if m.len() != self.methods.len() {
            return bad("duplicate methods".into());
        }
        if self.n_test < self.c2st.min_per_class {
            return bad(format!("n_test must be >= {}", self.c2st.min_per_class));
        }
        if self.mse_samples == 0 {
            return bad("mse_samples must be >= 1".into());
        }
        if self.fmcpe.sigma.is_nan() || self.fmcpe.sigma <= 0.0 {
            return bad("sigma must be > 0".into());
        }
        if self.fmcpe.ode_infer.steps == 0 || self.fmcpe.ode_train.steps == 0 {
            return bad("ode step counts must be >= 1".into());
        }
        let needs_sim = self.methods.iter().any(|m| m.needs_baseline());
        if needs_sim && self.n_sim < 10 && !matches!(self.task, TaskChoice::Csv(_)) {
            return bad("n_sim must be >= 10 for simulation-pretrained methods".into());
        }
        Ok(())
    }

    /// Hash of every setting except the output directory.
    pub fn hash(&self) -> Result<String> {
        Ok(checkpoint::sha256_hex(serde_json::to_string(self)?.as_bytes()))
    }
}
