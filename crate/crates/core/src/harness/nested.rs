use std::collections::BTreeMap;

use crate::error::{invalid, Result};
use crate::rng::RandomSource;

/// Per-seed calibration index sets. The size-`n` set of a seed is the first
/// `n` entries of that seed's permutation of the pool, so smaller sets are
/// always contained in larger ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NestedCalibrationFamily {
    sizes: Vec<usize>,
    orders: BTreeMap<u64, Vec<usize>>,
}

impl NestedCalibrationFamily {
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        self.orders.keys().copied()
    }

    pub fn indices(&self, seed: u64, size: usize) -> Result<&[usize]> {
        match self.orders.get(&seed) {
            Some(o) if self.sizes.contains(&size) => Ok(&o[..size]),
            _ => invalid(format!("no calibration set for seed {seed}, size {size}")),
        }
    }
}

pub fn build_nested_calibration(pool_size: usize, sizes: &[usize], seeds: &[u64], rng: &RandomSource) -> Result<NestedCalibrationFamily> {
    let max = sizes.iter().copied().max().unwrap_or(0);
    if max > pool_size {
        return invalid(format!("calibration size {max} exceeds pool size {pool_size}"));
    }
    let orders = seeds
        .iter()
        .map(|&s| {
            let mut p = rng.stream_indexed("seed", s).permutation(pool_size);
            p.truncate(max);
            (s, p)
        })
        .collect();
    Ok(NestedCalibrationFamily {
        sizes: sizes.to_vec(),
        orders,
    })
}
