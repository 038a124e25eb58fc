//! Fixed-effort generalized splitting.
//!
//! A path is never stored as a trajectory. It is a root seed plus a short
//! list of per-block overrides; every random quantity a statistic needs is
//! read from numbered blocks, so a path can be regenerated exactly and moved
//! by an MCMC kernel that rewrites one block at a time.
//!
//! Heavy tails put the uniforms that matter within `1e-8` of zero, so the
//! local move is preconditioned Crank–Nicolson on the normal score of a
//! block's first draw: `z' = ρz + √(1 − ρ²)ξ` is scale-free in the tail and
//! reversible for the uniform law.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::{erfc, erfc_inv};

use super::engine::Engine;
use super::estimate::{Estimate, Method, Z95};
use super::rng::{derive_seed, RngStream, UniformSource};
use crate::error::{invalid, Result};

pub const MAX_LEVELS: usize = 12;
const PILOT_QUANTILE: f64 = 0.8;
/// Initial `√(1 − ρ²)` of the local move, and its adaptation range.
const STEP_START: f64 = 0.6;
const STEP_MIN: f64 = 0.02;
const STEP_MAX: f64 = 1.0;
const TARGET_ACCEPT: f64 = 0.3;
const U_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
struct BlockOverride {
    block: u32,
    seed: u64,
    /// Replacement for the block's first uniform.
    first: Option<f64>,
}

/// Regeneration recipe for one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSeed {
    base: u64,
    overrides: Vec<BlockOverride>,
}

impl PathSeed {
    pub fn new(base: u64) -> Self {
        Self {
            base,
            overrides: Vec::new(),
        }
    }

    // overrides are kept sorted by block
    fn lookup(&self, block: u32) -> (u64, Option<f64>) {
        match self.overrides.binary_search_by_key(&block, |o| o.block) {
            Ok(i) => (self.overrides[i].seed, self.overrides[i].first),
            Err(_) => (self.base, None),
        }
    }

    fn with_block(&self, block: u32, seed: u64, first: Option<f64>) -> Self {
        let mut next = self.clone();
        let o = BlockOverride { block, seed, first };
        match next.overrides.binary_search_by_key(&block, |o| o.block) {
            Ok(i) => next.overrides[i] = o,
            Err(i) => next.overrides.insert(i, o),
        }
        next
    }

    /// Replace the first uniform of blocks `0..k` by `f(current)`.
    fn with_firsts(&self, k: u32, mut f: impl FnMut(f64) -> f64) -> Self {
        let mut overrides = Vec::with_capacity(self.overrides.len().max(k as usize));
        for block in 0..k {
            let (seed, _) = self.lookup(block);
            overrides.push(BlockOverride {
                block,
                seed,
                first: Some(f(self.first_uniform(block))),
            });
        }
        overrides.extend(self.overrides.iter().filter(|o| o.block >= k).copied());
        Self {
            base: self.base,
            overrides,
        }
    }

    /// The first uniform block `j` hands out.
    fn first_uniform(&self, block: u32) -> f64 {
        let (seed, first) = self.lookup(block);
        first.unwrap_or_else(|| RngStream::new(seed, u64::from(block)).uniform())
    }
}

/// Uniform stream of a single block. An overridden first draw replaces the
/// stream's first value; later draws are untouched.
#[derive(Debug, Clone)]
pub struct BlockStream {
    inner: RngStream,
    first: Option<f64>,
}

impl UniformSource for BlockStream {
    #[inline]
    fn uniform(&mut self) -> f64 {
        let u = self.inner.uniform();
        self.first.take().unwrap_or(u)
    }
}

/// Per-evaluation view of a path: hands out block streams on demand and
/// records how many blocks the statistic touched.
pub struct PathRng<'a> {
    seed: &'a PathSeed,
    blocks: Vec<Option<BlockStream>>,
}

impl<'a> PathRng<'a> {
    pub fn new(seed: &'a PathSeed) -> Self {
        Self {
            seed,
            blocks: Vec::new(),
        }
    }

    pub fn block(&mut self, j: usize) -> &mut BlockStream {
        if j >= self.blocks.len() {
            self.blocks.resize(j + 1, None);
        }
        let seed = self.seed;
        self.blocks[j].get_or_insert_with(|| {
            let (s, first) = seed.lookup(j as u32);
            BlockStream {
                inner: RngStream::new(s, j as u64),
                first,
            }
        })
    }

    /// One past the highest block index read so far.
    pub fn used_blocks(&self) -> usize {
        self.blocks.len()
    }
}

#[derive(Clone)]
struct Particle {
    seed: PathSeed,
    stat: f64,
    blocks: usize,
}

fn evaluate<F>(stat: &F, seed: PathSeed) -> Result<Particle>
where
    F: Fn(&mut PathRng) -> Result<f64> + Sync,
{
    let (value, blocks) = {
        let mut p = PathRng::new(&seed);
        let v = stat(&mut p)?;
        (v, p.used_blocks())
    };
    if value.is_nan() {
        return Err(invalid("statistic returned NaN"));
    }
    Ok(Particle {
        seed,
        stat: value,
        blocks,
    })
}

#[derive(Default, Clone, Copy)]
struct MoveStats {
    proposed: u64,
    accepted: u64,
}

/// `Φ⁻¹(u)` and `Φ(z)` through `erfc`, accurate deep in the lower tail.
fn normal_score(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// pCN move of one uniform with step `b = √(1 − ρ²)`.
fn pcn(u: f64, b: f64, xi: f64) -> f64 {
    let rho = (1.0 - b * b).max(0.0).sqrt();
    normal_cdf(rho * normal_score(u) + b * xi).clamp(U_FLOOR, 1.0 - f64::EPSILON * 0.5)
}

/// Run `steps` Metropolis moves keeping `stat > level`. Half the moves
/// redraw one used block from its prior (with the block-count correction
/// for the state-dependent choice), half move the first uniform of every
/// block below `width` jointly by pCN with step `b`. `width` is fixed for
/// the whole level, so both kernels leave the block law invariant.
fn mcmc<F>(
    stat: &F,
    start: &Particle,
    level: f64,
    steps: usize,
    width: u32,
    b: f64,
    driver: &mut RngStream,
) -> Result<(Particle, MoveStats)>
where
    F: Fn(&mut PathRng) -> Result<f64> + Sync,
{
    let mut cur = start.clone();
    let mut joint = MoveStats::default();
    for _ in 0..steps {
        if cur.blocks == 0 {
            break;
        }
        let fresh = driver.uniform() < 0.5;
        let proposal = if fresh {
            let j = ((driver.uniform() * cur.blocks as f64) as usize).min(cur.blocks - 1) as u32;
            cur.seed.with_block(j, driver.next_u64(), None)
        } else {
            joint.proposed += 1;
            cur.seed.with_firsts(width, |u| pcn(u, b, driver.normal()))
        };
        let cand = evaluate(stat, proposal)?;
        let mh = if fresh {
            (cur.blocks as f64 / cand.blocks.max(1) as f64).min(1.0)
        } else {
            1.0
        };
        let u = driver.uniform();
        if cand.stat > level && u < mh {
            if !fresh {
                joint.accepted += 1;
            }
            cur = cand;
        }
    }
    Ok((cur, joint))
}

struct BatchOutcome {
    /// Conditional passage fractions, one per level reached.
    fractions: Vec<f64>,
    /// Product of fractions up to the point where survivors ran out.
    zero_after: Option<f64>,
}

fn steps_for(n: usize, survivors: usize) -> usize {
    (n as f64 / survivors as f64).ceil().clamp(3.0, 12.0) as usize
}

fn next_step(b: f64, stats: MoveStats) -> f64 {
    let acc = if stats.proposed > 0 {
        stats.accepted as f64 / stats.proposed as f64
    } else {
        TARGET_ACCEPT
    };
    (b * (acc / TARGET_ACCEPT).clamp(0.5, 2.0)).clamp(STEP_MIN, STEP_MAX)
}

impl Engine {
    /// `n` particles started from `survivors` (round robin) and moved above
    /// `level`; the pCN step is adapted towards the target acceptance.
    fn move_population<F>(
        &self,
        stat: &F,
        survivors: &[&Particle],
        level: f64,
        n: usize,
        level_seed: u64,
        step: &mut f64,
    ) -> Result<Vec<Particle>>
    where
        F: Fn(&mut PathRng) -> Result<f64> + Sync,
    {
        let steps = steps_for(n, survivors.len());
        let width = survivors.iter().map(|p| p.blocks).max().unwrap_or(0) as u32;
        let b = *step;
        let moved: Vec<Result<(Particle, MoveStats)>> = self.install(|| {
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let start = survivors[i % survivors.len()];
                    let mut driver = RngStream::new(level_seed, i as u64);
                    mcmc(stat, start, level, steps, width, b, &mut driver)
                })
                .collect()
        });
        let mut stats = MoveStats::default();
        let mut next = Vec::with_capacity(n);
        for m in moved {
            let (p, s) = m?;
            stats.proposed += s.proposed;
            stats.accepted += s.accepted;
            next.push(p);
        }
        *step = next_step(b, stats);
        Ok(next)
    }

    fn run_batch<F>(
        &self,
        tag: u32,
        batch: u64,
        stat: &F,
        levels: &[f64],
        n: usize,
    ) -> Result<BatchOutcome>
    where
        F: Fn(&mut PathRng) -> Result<f64> + Sync,
    {
        let root = derive_seed(derive_seed(self.seed(), u64::from(tag) | (1 << 40)), batch);
        let init: Vec<Result<Particle>> = self.install(|| {
            (0..n as u64)
                .into_par_iter()
                .map(|i| evaluate(stat, PathSeed::new(derive_seed(root, i))))
                .collect()
        });
        let mut pop = init.into_iter().collect::<Result<Vec<_>>>()?;
        let mut fractions = Vec::with_capacity(levels.len());
        let mut step = STEP_START;
        for (k, &level) in levels.iter().enumerate() {
            if k > 0 {
                let prev = levels[k - 1];
                let survivors: Vec<&Particle> = pop.iter().filter(|p| p.stat > prev).collect();
                if survivors.is_empty() {
                    let prod: f64 = fractions.iter().product();
                    return Ok(BatchOutcome {
                        fractions,
                        zero_after: Some(prod),
                    });
                }
                let level_seed = derive_seed(root, (k as u64) << 48);
                pop = self.move_population(stat, &survivors, prev, n, level_seed, &mut step)?;
            }
            let hits = pop.iter().filter(|p| p.stat > level).count();
            fractions.push(hits as f64 / n as f64);
        }
        let zero_after = if fractions.last() == Some(&0.0) {
            Some(fractions[..fractions.len() - 1].iter().product())
        } else {
            None
        };
        Ok(BatchOutcome {
            fractions,
            zero_after,
        })
    }

    /// Multilevel splitting estimate of `P[stat > levels.last()]`.
    ///
    /// `batches` independent runs of population `n_per_level` are averaged.
    /// The standard error is the larger of the between-batch and the
    /// delta-method figures, and the interval uses a Student-t quantile.
    pub fn splitting<F>(
        &self,
        tag: u32,
        stat: &F,
        levels: &[f64],
        n_per_level: usize,
        batches: usize,
    ) -> Result<Estimate>
    where
        F: Fn(&mut PathRng) -> Result<f64> + Sync,
    {
        if levels.is_empty() || levels.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("levels must be non-empty and strictly increasing"));
        }
        if n_per_level < 2 || batches == 0 {
            return Err(invalid("splitting needs n_per_level >= 2 and batches >= 1"));
        }
        let mut values = Vec::with_capacity(batches);
        let mut rel_var = 0.0;
        let mut zero_bound = 0.0;
        let mut all_zero = true;
        for b in 0..batches {
            let out = self.run_batch(tag, b as u64, stat, levels, n_per_level)?;
            if let Some(prod) = out.zero_after {
                values.push(0.0);
                zero_bound += prod;
                continue;
            }
            all_zero = false;
            let v: f64 = out.fractions.iter().product();
            values.push(v);
            rel_var += out
                .fractions
                .iter()
                .map(|&p| (1.0 - p) / (n_per_level as f64 * p))
                .sum::<f64>();
        }
        let r = batches as f64;
        if all_zero {
            let upper = (zero_bound / r).max(f64::MIN_POSITIVE);
            let n_eff = (n_per_level as f64 * r / upper).min(u64::MAX as f64) as u64;
            return Ok(Estimate::zero_hit(n_eff, Method::Splitting));
        }
        let mean = values.iter().sum::<f64>() / r;
        let batch_var = if batches > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0) / r
        } else {
            0.0
        };
        let delta_var = mean * mean * (rel_var / r) / r;
        let stderr = batch_var.max(delta_var).sqrt();
        let q = if batches > 1 {
            StudentsT::new(0.0, 1.0, r - 1.0)
                .map_err(|e| invalid(e.to_string()))?
                .inverse_cdf(0.975)
        } else {
            Z95
        };
        let mut est = Estimate::from_normal(mean, stderr, q, Method::Splitting);
        est.n_effective = (n_per_level * batches * levels.len()) as u64;
        Ok(est)
    }

    /// Adaptive quantile ladder ending at `x`: each level is the 80%
    /// quantile of a pilot population conditioned on the previous level.
    pub fn auto_levels<F>(&self, tag: u32, stat: &F, x: f64, pilot_n: usize) -> Result<Vec<f64>>
    where
        F: Fn(&mut PathRng) -> Result<f64> + Sync,
    {
        if pilot_n < 1000 {
            return Err(invalid("pilot_n must be at least 1000"));
        }
        let root = derive_seed(derive_seed(self.seed(), u64::from(tag) | (2 << 40)), 0);
        let init: Vec<Result<Particle>> = self.install(|| {
            (0..pilot_n as u64)
                .into_par_iter()
                .map(|i| evaluate(stat, PathSeed::new(derive_seed(root, i))))
                .collect()
        });
        let mut pop = init.into_iter().collect::<Result<Vec<_>>>()?;
        let mut levels: Vec<f64> = Vec::new();
        let mut step = STEP_START;
        loop {
            let mut stats: Vec<f64> = pop.iter().map(|p| p.stat).collect();
            stats.sort_by(f64::total_cmp);
            let idx = ((PILOT_QUANTILE * pilot_n as f64).ceil() as usize).clamp(1, pilot_n) - 1;
            let q = stats[idx];
            let above = stats.iter().filter(|&&s| s > q).count();
            if q >= x || above == 0 || levels.len() + 1 >= MAX_LEVELS {
                levels.push(x);
                return Ok(levels);
            }
            levels.push(q);
            let survivors: Vec<&Particle> = pop.iter().filter(|p| p.stat > q).collect();
            let level_seed = derive_seed(root, (levels.len() as u64) << 48);
            pop = self.move_population(stat, &survivors, q, pilot_n, level_seed, &mut step)?;
        }
    }
}

/// Splitting estimate with a private engine.
pub fn estimate_splitting<F>(
    stat: F,
    x: f64,
    levels: &[f64],
    n_per_level: usize,
    seed: u64,
) -> Result<Estimate>
where
    F: Fn(&mut PathRng) -> Result<f64> + Sync,
{
    let mut l: Vec<f64> = levels.iter().copied().filter(|&v| v < x).collect();
    l.push(x);
    Engine::new(seed, 1)?.splitting(0, &stat, &l, n_per_level, 8)
}

/// Auto levels with a private engine.
pub fn auto_levels<F>(stat: F, x: f64, pilot_n: usize, seed: u64) -> Result<Vec<f64>>
where
    F: Fn(&mut PathRng) -> Result<f64> + Sync,
{
    Engine::new(seed, 1)?.auto_levels(0, &stat, x, pilot_n)
}
