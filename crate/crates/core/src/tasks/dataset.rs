use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, invalid, Error, Result};
use crate::rng::RandomSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Simulated,
    Calibration,
    Test,
    Ingested,
}

/// Paired `(θ, observation)` samples of fixed dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    param_dim: usize,
    obs_dim: usize,
    thetas: Vec<Vec<f64>>,
    obs: Vec<Vec<f64>>,
    provenance: Provenance,
}

/// Expected CSV layout: `p` parameter columns then `d` observation columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvSchema {
    pub param_dim: usize,
    pub obs_dim: usize,
}

impl CsvSchema {
    pub fn header(&self) -> Vec<String> {
        (0..self.param_dim)
            .map(|i| format!("theta_{i}"))
            .chain((0..self.obs_dim).map(|i| format!("obs_{i}")))
            .collect()
    }

    /// Infer dimensions from a header, checking column names and order.
    pub fn from_header(cols: &[&str]) -> Result<Self> {
        let p = cols.iter().take_while(|c| c.starts_with("theta_")).count();
        let schema = CsvSchema {
            param_dim: p,
            obs_dim: cols.len() - p,
        };
        if schema.param_dim == 0 || schema.obs_dim == 0 {
            return Err(Error::Parse {
                line: 1,
                message: format!("header needs theta_* then obs_* columns, got {cols:?}"),
            });
        }
        let expected = schema.header();
        if let Some((i, (got, want))) = cols.iter().zip(&expected).enumerate().find(|(_, (g, w))| **g != w.as_str()) {
            return Err(Error::Parse {
                line: 1,
                message: format!("column {i} is {got:?}, expected {want:?}"),
            });
        }
        Ok(schema)
    }
}

impl PairDataset {
    pub fn new(thetas: Vec<Vec<f64>>, obs: Vec<Vec<f64>>, provenance: Provenance) -> Result<Self> {
        if thetas.len() != obs.len() {
            return invalid(format!("{} thetas but {} observations", thetas.len(), obs.len()));
        }
        let Some(first) = thetas.first() else {
            return invalid("cannot infer dimensions of an empty dataset; use PairDataset::empty");
        };
        let (p, d) = (first.len(), obs[0].len());
        let mut ds = Self::empty(p, d, provenance);
        for (t, o) in thetas.into_iter().zip(obs) {
            ds.push(t, o)?;
        }
        Ok(ds)
    }

    pub fn empty(param_dim: usize, obs_dim: usize, provenance: Provenance) -> Self {
        Self {
            param_dim,
            obs_dim,
            thetas: Vec::new(),
            obs: Vec::new(),
            provenance,
        }
    }

    pub fn push(&mut self, theta: Vec<f64>, obs: Vec<f64>) -> Result<()> {
        ensure_dim("theta", self.param_dim, theta.len())?;
        ensure_dim("observation", self.obs_dim, obs.len())?;
        if theta.iter().chain(&obs).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("pair {} has a non-finite entry", self.len())));
        }
        self.thetas.push(theta);
        self.obs.push(obs);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn thetas(&self) -> &[Vec<f64>] {
        &self.thetas
    }

    pub fn obs(&self) -> &[Vec<f64>] {
        &self.obs
    }

    pub fn subset(&self, indices: &[usize]) -> Result<PairDataset> {
        let mut out = Self::empty(self.param_dim, self.obs_dim, self.provenance);
        for &i in indices {
            if i >= self.len() {
                return invalid(format!("index {i} out of range for dataset of size {}", self.len()));
            }
            out.thetas.push(self.thetas[i].clone());
            out.obs.push(self.obs[i].clone());
        }
        Ok(out)
    }

    /// Random train/validation split with `round(frac * n)` validation pairs,
    /// at least one on each side when `n >= 2`.
    pub fn split_validation(&self, frac: f64, rng: &mut RandomSource) -> Result<(PairDataset, PairDataset)> {
        let n = self.len();
        if n < 2 {
            return Err(Error::InsufficientData(format!("cannot split {n} pairs into train and validation")));
        }
        let n_val = ((frac * n as f64).round() as usize).clamp(1, n - 1);
        let perm = rng.permutation(n);
        Ok((self.subset(&perm[n_val..])?, self.subset(&perm[..n_val])?))
    }

    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            param_dim: self.param_dim,
            obs_dim: self.obs_dim,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.schema().header())?;
        for (t, o) in self.thetas.iter().zip(&self.obs) {
            w.write_record(t.iter().chain(o).map(|v| format_float(*v)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn export_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(File::create(path)?)
    }
}

/// 17 significant digits: exact round-trip for every finite f64.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parse a pair CSV. With `schema`, the header must match it exactly;
/// otherwise dimensions are inferred from the header.
pub fn ingest_csv(path: &Path, schema: Option<CsvSchema>) -> Result<PairDataset> {
    let file = File::open(path)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let cols: Vec<&str> = header.iter().map(String::as_str).collect();
    let found = CsvSchema::from_header(&cols)?;
    if let Some(want) = schema {
        if want != found {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "header has {} theta / {} obs columns, expected {} / {}",
                    found.param_dim, found.obs_dim, want.param_dim, want.obs_dim
                ),
            });
        }
    }
    let mut ds = PairDataset::empty(found.param_dim, found.obs_dim, Provenance::Ingested);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut vals = Vec::with_capacity(rec.len());
        for (i, tok) in rec.iter().enumerate() {
            let v: f64 = tok.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {} ({}): {tok:?} is not a number", i, header[i]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column {} ({}) is not finite", i, header[i]),
                });
            }
            vals.push(v);
        }
        let obs = vals.split_off(found.param_dim);
        ds.push(vals, obs).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
    }
    Ok(ds)
}
