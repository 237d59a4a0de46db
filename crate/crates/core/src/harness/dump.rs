use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::PosteriorSampler;
use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::tasks::format_float;

/// One row of a posterior sample dump.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub method: String,
    pub point: usize,
    pub sample: usize,
    pub theta: Vec<f64>,
}

pub fn dump_header(param_dim: usize) -> String {
    let mut h = String::from("method,point,sample");
    for i in 0..param_dim {
        h.push_str(&format!(",theta_{i}"));
    }
    h
}

pub fn write_sample_dump(path: &Path, param_dim: usize, records: &[SampleRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", dump_header(param_dim))?;
    for r in records {
        write!(w, "{},{},{}", r.method, r.point, r.sample)?;
        for v in &r.theta {
            write!(w, ",{}", format_float(*v))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Draw `n_per_point` samples for each `(point id, y)` and write them as CSV.
/// Each point uses its own stream of `rng`, keyed by the point id.
pub fn dump_posterior_samples(
    sampler: &dyn PosteriorSampler,
    method: &str,
    points: &[(usize, Vec<f64>)],
    n_per_point: usize,
    rng: &RandomSource,
    path: &Path,
) -> Result<Vec<SampleRecord>> {
    let mut records = Vec::with_capacity(points.len() * n_per_point);
    for (id, y) in points {
        let draws = sampler.sample_posterior(y, n_per_point, &mut rng.stream_indexed("point", *id as u64))?;
        for (k, theta) in draws.into_iter().enumerate() {
            records.push(SampleRecord {
                method: method.to_string(),
                point: *id,
                sample: k,
                theta,
            });
        }
    }
    write_sample_dump(path, sampler.param_dim(), &records)?;
    Ok(records)
}

pub fn read_sample_dump(path: &Path) -> Result<Vec<SampleRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = rdr.headers()?.clone();
    let p = header.len().saturating_sub(3);
    if header.len() < 3
        || &header[0] != "method"
        || &header[1] != "point"
        || &header[2] != "sample"
        || header.iter().skip(3).enumerate().any(|(i, h)| h != format!("theta_{i}"))
    {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected sample dump header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec?;
        let perr = |m: String| Error::Parse { line, message: m };
        if rec.len() != p + 3 {
            return Err(perr(format!("{} fields, expected {}", rec.len(), p + 3)));
        }
        let point = rec[1].parse().map_err(|_| perr(format!("bad point id {:?}", &rec[1])))?;
        let sample = rec[2].parse().map_err(|_| perr(format!("bad sample index {:?}", &rec[2])))?;
        let theta = (3..p + 3)
            .map(|k| rec[k].trim().parse::<f64>().map_err(|_| perr(format!("bad number {:?}", &rec[k]))))
            .collect::<Result<Vec<_>>>()?;
        out.push(SampleRecord {
            method: rec[0].to_string(),
            point,
            sample,
            theta,
        });
    }
    Ok(out)
}
