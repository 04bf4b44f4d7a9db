//! Streaming moments, Monte Carlo estimates and goodness-of-fit statistics.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::rng::{stream, Stream, PAR_CHUNKS};

/// Mean/variance accumulator that merges deterministically.
#[derive(Debug, Clone, Copy, Default)]
pub struct StreamingMoments {
    n: u64,
    sum: f64,
    sumsq: f64,
}

impl StreamingMoments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sumsq += x * x;
    }

    pub fn merge(&mut self, other: &StreamingMoments) {
        self.n += other.n;
        self.sum += other.sum;
        self.sumsq += other.sumsq;
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.sum / self.n as f64
        }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        ((self.sumsq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn stderr(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            value: self.mean(),
            stderr: self.stderr(),
            n: self.n,
            diverged: false,
        }
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
    /// Set when a budget ladder kept growing instead of stabilizing.
    pub diverged: bool,
}

impl Estimate {
    /// Normalized deviation from a reference value.
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.value - reference) / self.stderr
    }
}

/// Runs `per_chunk(chunk_index, rng)` over the fixed chunk grid in parallel
/// and returns results in chunk order. Stream ids occupy
/// `[base, base + PAR_CHUNKS)` of the given seed.
pub fn parallel_reduce<A, F>(seed: u64, base: u64, per_chunk: F) -> Vec<A>
where
    A: Send,
    F: Fn(usize, &mut Stream) -> A + Sync,
{
    (0..PAR_CHUNKS as usize)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, base + i as u64);
            per_chunk(i, &mut rng)
        })
        .collect()
}

/// Number of samples chunk `i` of a total budget `n` is responsible for.
pub fn chunk_len(n: u64, i: usize) -> u64 {
    let q = n / PAR_CHUNKS;
    let r = n % PAR_CHUNKS;
    q + u64::from((i as u64) < r)
}

/// Deterministic parallel Monte Carlo mean of `f` over `n` draws.
pub fn mc_estimate<F>(seed: u64, base: u64, n: u64, f: F) -> Estimate
where
    F: Fn(&mut Stream) -> f64 + Sync,
{
    let parts = parallel_reduce(seed, base, |i, rng| {
        let mut m = StreamingMoments::default();
        for _ in 0..chunk_len(n, i) {
            m.push(f(rng));
        }
        m
    });
    let mut total = StreamingMoments::default();
    for p in &parts {
        total.merge(p);
    }
    total.estimate()
}

/// Deterministic parallel Monte Carlo of a pair of correlated observables;
/// returns merged moments of each coordinate and their mixed sum for
/// covariance-aware ratio errors.
pub fn mc_pair_estimate<F>(seed: u64, base: u64, n: u64, f: F) -> PairMoments
where
    F: Fn(&mut Stream) -> (f64, f64) + Sync,
{
    let parts = parallel_reduce(seed, base, |i, rng| {
        let mut m = PairMoments::default();
        for _ in 0..chunk_len(n, i) {
            let (a, b) = f(rng);
            m.push(a, b);
        }
        m
    });
    let mut total = PairMoments::default();
    for p in &parts {
        total.merge(p);
    }
    total
}

/// Moments of a correlated pair of observables.
#[derive(Debug, Clone, Copy, Default)]
pub struct PairMoments {
    pub a: StreamingMoments,
    pub b: StreamingMoments,
    sum_ab: f64,
}

impl PairMoments {
    pub fn push(&mut self, a: f64, b: f64) {
        self.a.push(a);
        self.b.push(b);
        self.sum_ab += a * b;
    }

    pub fn merge(&mut self, other: &PairMoments) {
        self.a.merge(&other.a);
        self.b.merge(&other.b);
        self.sum_ab += other.sum_ab;
    }

    pub fn covariance(&self) -> f64 {
        let n = self.a.n() as f64;
        if n < 2.0 {
            return f64::NAN;
        }
        (self.sum_ab - self.a.mean() * self.b.mean() * n) / (n - 1.0)
    }

    /// Delta-method estimate of `E[a]/E[b]` with its standard error.
    pub fn ratio_estimate(&self) -> Estimate {
        let n = self.a.n() as f64;
        let (ma, mb) = (self.a.mean(), self.b.mean());
        let r = ma / mb;
        let var = (self.a.variance() - 2.0 * r * self.covariance()
            + r * r * self.b.variance())
            / (mb * mb);
        Estimate {
            value: r,
            stderr: (var.max(0.0) / n).sqrt(),
            n: self.a.n(),
            diverged: false,
        }
    }
}

/// Kolmogorov–Smirnov statistic of `samples` against the CDF `cdf`.
/// Sorts the slice in place.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let c = cdf(x);
        d = d.max((c - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - c).abs());
    }
    d
}

/// Pearson chi-square statistic of observed counts against expected counts.
pub fn chi_square_stat(observed: &[f64], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o - e) * (o - e) / e)
        .sum()
}

/// Upper-tail p-value of a chi-square statistic with `dof` degrees of
/// freedom.
pub fn chi_square_pvalue(stat: f64, dof: f64) -> f64 {
    let dist = ChiSquared::new(dof).expect("dof must be positive");
    1.0 - dist.cdf(stat)
}
