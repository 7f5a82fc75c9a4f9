use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RngStream;

/// Streaming mean / second central moment (Welford), mergeable across chunks.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (0 for fewer than two samples).
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn estimate(&self) -> MeanEstimate {
        let n = self.count.max(1) as f64;
        MeanEstimate {
            mean: self.mean,
            std_error: (self.variance() / n).sqrt(),
            samples: self.count,
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStats::default();
        for x in iter {
            s.push(x);
        }
        s
    }
}

/// Monte Carlo mean with its standard error `sd / sqrt(samples)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        xs.iter().copied().collect::<RunningStats>().estimate()
    }
}

const CHUNK: usize = 1024;

/// Draw `samples` independent values in parallel.
///
/// Sample `i` lives in chunk `i / 1024`, and every chunk draws from
/// `rng.fork(chunk)`, so the output is identical for any thread count.
pub fn par_samples<T, F>(samples: usize, rng: &RngStream, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RngStream) -> T + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let nested: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut local = rng.fork(c as u64);
            let len = CHUNK.min(samples - c * CHUNK);
            (0..len).map(|_| f(&mut local)).collect()
        })
        .collect();
    nested.into_iter().flatten().collect()
}
