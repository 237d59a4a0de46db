use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Sinusoidal encoding of a time in [0, 1] on a geometric frequency ladder
/// `f_k = base * 2^k`. Output layout is `[sin f_0 t, cos f_0 t, sin f_1 t, ...]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeEmbedding {
    pub n_freq: usize,
    pub base_freq: f64,
}

impl Default for TimeEmbedding {
    /// Lowest frequency 1/4 keeps the encoding injective on [0, 1].
    fn default() -> Self {
        Self {
            n_freq: 6,
            base_freq: 0.25,
        }
    }
}

impl TimeEmbedding {
    pub fn new(n_freq: usize, base_freq: f64) -> Self {
        Self { n_freq, base_freq }
    }

    pub fn dim(&self) -> usize {
        2 * self.n_freq
    }

    pub fn frequency(&self, k: usize) -> f64 {
        self.base_freq * (1u64 << k) as f64
    }

    pub fn embed_into(&self, t: f64, out: &mut [f64]) {
        let t = if (0.0..=1.0).contains(&t) {
            t
        } else {
            log::warn!("time embedding: t = {t} outside [0, 1], clamping");
            t.clamp(0.0, 1.0)
        };
        for k in 0..self.n_freq {
            let (s, c) = (TAU * self.frequency(k) * t).sin_cos();
            out[2 * k] = s;
            out[2 * k + 1] = c;
        }
    }

    pub fn embed(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.embed_into(t, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_time() {
        let e = TimeEmbedding::default().embed(0.0);
        for k in 0..6 {
            assert_eq!(e[2 * k], 0.0);
            assert_eq!(e[2 * k + 1], 1.0);
        }
    }

    #[test]
    fn quarter_period() {
        let e = TimeEmbedding::new(1, 1.0).embed(0.25);
        assert!((e[0] - 1.0).abs() < 1e-15);
        assert!(e[1].abs() < 1e-15);
    }

    #[test]
    fn unit_norm_per_frequency() {
        let emb = TimeEmbedding::default();
        for i in 0..=100 {
            let e = emb.embed(i as f64 / 100.0);
            for pair in e.chunks(2) {
                assert!((pair[0].hypot(pair[1]) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn out_of_range_is_clamped() {
        let emb = TimeEmbedding::default();
        assert_eq!(emb.embed(1.5), emb.embed(1.0));
        assert_eq!(emb.embed(-0.1), emb.embed(0.0));
    }
}
