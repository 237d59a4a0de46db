use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::tasks::format_float;

pub const METRICS_HEADER: &str = "method,task,n_cal,seed,w2,jc2st,mse,seconds";

/// One evaluated (method, calibration size, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub task: String,
    pub n_cal: usize,
    pub seed: u64,
    pub w2: f64,
    pub jc2st: f64,
    pub mse: f64,
    pub seconds: f64,
}

impl MetricReport {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.jc2st) {
            return invalid(format!("jc2st {} outside [0, 1]", self.jc2st));
        }
        if !(self.w2 >= 0.0 && self.mse >= 0.0) {
            return invalid("w2 and mse must be non-negative");
        }
        Ok(())
    }

    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{}",
            self.method,
            self.task,
            self.n_cal,
            self.seed,
            format_float(self.w2),
            format_float(self.jc2st),
            format_float(self.mse),
            format_float(self.seconds)
        );
        s
    }

    pub fn parse_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 8 {
            return invalid(format!("metrics row has {} fields, expected 8", f.len()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| crate::Error::InvalidArgument(format!("{s:?}: {e}")));
        let int = |s: &str| s.parse::<u64>().map_err(|e| crate::Error::InvalidArgument(format!("{s:?}: {e}")));
        Ok(Self {
            method: f[0].into(),
            task: f[1].into(),
            n_cal: int(f[2])? as usize,
            seed: int(f[3])?,
            w2: num(f[4])?,
            jc2st: num(f[5])?,
            mse: num(f[6])?,
            seconds: num(f[7])?,
        })
    }
}
