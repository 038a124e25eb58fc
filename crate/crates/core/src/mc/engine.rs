use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimate::{Estimate, Moments};
use super::rng::derive_seed;
use super::splitting::{PathRng, PathSeed};
use crate::error::{invalid, Result};

pub const DEFAULT_CHUNK: u64 = 4096;

/// How levels for multilevel splitting are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Levels {
    Auto,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplittingConfig {
    pub levels: Levels,
    pub n_per_level: usize,
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default = "default_pilot")]
    pub pilot_n: usize,
}

fn default_batches() -> usize {
    8
}

fn default_pilot() -> usize {
    2000
}

impl Default for SplittingConfig {
    fn default() -> Self {
        Self {
            levels: Levels::Auto,
            n_per_level: 5000,
            batches: default_batches(),
            pilot_n: default_pilot(),
        }
    }
}

/// Simulation effort for one estimate. `paths` drives crude Monte Carlo;
/// when `splitting` is present, rare tails go through multilevel splitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    pub paths: u64,
    #[serde(default)]
    pub splitting: Option<SplittingConfig>,
}

impl Budget {
    pub fn crude(paths: u64) -> Self {
        Self {
            paths,
            splitting: None,
        }
    }

    pub fn splitting(paths: u64, n_per_level: usize, batches: usize) -> Self {
        Self {
            paths,
            splitting: Some(SplittingConfig {
                n_per_level,
                batches,
                ..SplittingConfig::default()
            }),
        }
    }

    /// Multiply every population size by `factor` (at least one path stays).
    pub fn scaled(&self, factor: f64) -> Self {
        let scale = |n: f64| ((n * factor).round() as u64).max(1);
        Self {
            paths: scale(self.paths as f64),
            splitting: self.splitting.as_ref().map(|s| SplittingConfig {
                n_per_level: scale(s.n_per_level as f64) as usize,
                pilot_n: scale(s.pilot_n as f64).max(1000) as usize,
                ..s.clone()
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(invalid("budget.paths must be at least 1"));
        }
        if let Some(s) = &self.splitting {
            if s.n_per_level < 10 {
                return Err(invalid("splitting.n_per_level must be at least 10"));
            }
            if s.batches == 0 {
                return Err(invalid("splitting.batches must be at least 1"));
            }
            if let Levels::Fixed(l) = &s.levels {
                if l.is_empty() || l.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(invalid("splitting levels must be strictly increasing"));
                }
            }
        }
        Ok(())
    }
}

/// Parallel replication driver.
///
/// Replication `i` under module tag `t` always replays the path whose seed is
/// derived from `(seed, t, i)`, and partial results are folded in chunk
/// order, so outputs depend on `(seed, chunk_size)` but never on scheduling.
#[derive(Clone)]
pub struct Engine {
    seed: u64,
    workers: usize,
    chunk_size: u64,
    pool: Arc<rayon::ThreadPool>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("seed", &self.seed)
            .field("workers", &self.workers)
            .field("chunk_size", &self.chunk_size)
            .finish()
    }
}

impl Engine {
    pub fn new(seed: u64, workers: usize) -> Result<Self> {
        Self::with_chunk(seed, workers, DEFAULT_CHUNK)
    }

    pub fn with_chunk(seed: u64, workers: usize, chunk_size: u64) -> Result<Self> {
        if workers == 0 {
            return Err(invalid("workers must be at least 1"));
        }
        if chunk_size == 0 {
            return Err(invalid("chunk_size must be at least 1"));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| invalid(format!("thread pool: {e}")))?;
        Ok(Self {
            seed,
            workers,
            chunk_size,
            pool: Arc::new(pool),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn chunk_size(&self) -> u64 {
        self.chunk_size
    }

    /// Same pool and chunking, different root seed.
    pub fn reseeded(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// Root seed of replication `index` under `tag`.
    pub fn path_seed(&self, tag: u32, index: u64) -> u64 {
        derive_seed(derive_seed(self.seed, u64::from(tag)), index)
    }

    pub(crate) fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    /// Generic fixed-order fold over `n` replications.
    pub fn fold<A, I, S, M>(&self, tag: u32, n: u64, init: I, step: S, merge: M) -> Result<A>
    where
        A: Send,
        I: Fn() -> A + Sync,
        S: Fn(&mut A, &mut PathRng) -> Result<()> + Sync,
        M: Fn(A, A) -> A,
    {
        let chunks = n.div_ceil(self.chunk_size);
        let partials: Vec<Result<A>> = self.install(|| {
            (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let lo = c * self.chunk_size;
                    let hi = (lo + self.chunk_size).min(n);
                    let mut acc = init();
                    for i in lo..hi {
                        let seed = PathSeed::new(self.path_seed(tag, i));
                        let mut path = PathRng::new(&seed);
                        step(&mut acc, &mut path)?;
                    }
                    Ok(acc)
                })
                .collect()
        });
        let mut out = init();
        for p in partials {
            out = merge(out, p?);
        }
        Ok(out)
    }

    /// Hit fraction of `event` over `n` replications.
    pub fn crude_event<F>(&self, tag: u32, n: u64, event: F) -> Result<Estimate>
    where
        F: Fn(&mut PathRng) -> Result<bool> + Sync,
    {
        if n == 0 {
            return Err(invalid("crude estimate needs n >= 1"));
        }
        let hits = self.fold(
            tag,
            n,
            || 0u64,
            |h, p| {
                *h += u64::from(event(p)?);
                Ok(())
            },
            |a, b| a + b,
        )?;
        Ok(Estimate::from_hits(hits, n))
    }

    /// Crude estimate of `P[stat > x]`.
    pub fn crude_tail<F>(&self, tag: u32, n: u64, x: f64, stat: F) -> Result<Estimate>
    where
        F: Fn(&mut PathRng) -> Result<f64> + Sync,
    {
        self.crude_event(tag, n, |p| Ok(stat(p)? > x))
    }

    /// Sample moments of a path functional.
    pub fn mean<F>(&self, tag: u32, n: u64, f: F) -> Result<Moments>
    where
        F: Fn(&mut PathRng) -> Result<f64> + Sync,
    {
        self.fold(
            tag,
            n,
            Moments::default,
            |m, p| {
                m.push(f(p)?);
                Ok(())
            },
            |a, b| a.merge(&b),
        )
    }

    /// Estimate `P[stat > x]` with the estimator selected by `budget`.
    pub fn tail<F>(&self, tag: u32, x: f64, budget: &Budget, stat: F) -> Result<Estimate>
    where
        F: Fn(&mut PathRng) -> Result<f64> + Sync,
    {
        budget.validate()?;
        match &budget.splitting {
            None => self.crude_tail(tag, budget.paths, x, stat),
            Some(cfg) => {
                let levels = match &cfg.levels {
                    Levels::Fixed(l) => {
                        let mut l: Vec<f64> = l.iter().copied().filter(|&v| v < x).collect();
                        l.push(x);
                        l
                    }
                    Levels::Auto => self.auto_levels(tag, &stat, x, cfg.pilot_n.max(1000))?,
                };
                if levels.len() == 1 {
                    self.crude_tail(tag, budget.paths, x, stat)
                } else {
                    self.splitting(tag, &stat, &levels, cfg.n_per_level, cfg.batches)
                }
            }
        }
    }
}

/// Crude estimate with a private engine (single worker).
pub fn estimate_crude<F>(event: F, n: u64, seed: u64) -> Result<Estimate>
where
    F: Fn(&mut PathRng) -> Result<bool> + Sync,
{
    Engine::new(seed, 1)?.crude_event(0, n, event)
}
