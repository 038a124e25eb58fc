//! Sums of claim vectors over rare sets: two-fold and n-fold convolutions,
//! the Kesten-type table and randomly stopped sums.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mc::{ratio_with_stderr, Budget, Engine, Estimate, PathRng};
use crate::rare_sets::RareSet;
use crate::report::{TrendReport, Verdict, DEFAULT_LAST_K};
use crate::scalar_laws::ScalarLaw;
use crate::vector_laws::VectorLaw;

pub const TAG_CONV: u32 = 0x31;
pub const TAG_NFOLD: u32 = 0x32;
pub const TAG_KESTEN: u32 = 0x33;
pub const TAG_STOPPED: u32 = 0x34;

pub const TAU_LIMIT: u64 = 1_000_000;
/// Relative tolerance for Monte Carlo trend checks.
pub const MC_TREND_TOL: f64 = 0.10;
/// Trend points whose relative standard error exceeds this are inconclusive.
pub const MC_MAX_REL_SE: f64 = 0.25;
/// Growth allowed across the top rows of a Kesten table.
pub const KESTEN_GROWTH: f64 = 1.10;
/// The stopping-time condition is judged to hold when its last ratio is
/// below this and the last three ratios do not increase.
pub const CONDITION_FINAL: f64 = 0.05;

fn check_dims(v: &VectorLaw, set: &RareSet) -> Result<()> {
    if v.dim() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            got: v.dim(),
        });
    }
    Ok(())
}

fn check_long_tailed(v: &VectorLaw) -> Result<()> {
    let laws: Vec<&ScalarLaw> = match v {
        VectorLaw::Independent { marginals } => marginals.iter().collect(),
        VectorLaw::Lwqd { common, .. } => vec![common],
        VectorLaw::Mrv { radial, .. } => vec![radial],
    };
    match laws.iter().find(|l| !l.is_long_tailed()) {
        Some(l) => Err(Error::NotLongTailed(format!(
            "{} inside {}",
            l.label(),
            v.label()
        ))),
        None => Ok(()),
    }
}

/// Adds `n` draws of `v` into `acc`, drawing claim `i` from the blocks
/// starting at `first + i·blocks_per_draw`.
fn add_draws(
    v: &VectorLaw,
    path: &mut PathRng,
    first: usize,
    n: usize,
    acc: &mut [f64],
    tmp: &mut [f64],
) {
    let k = v.blocks_per_draw();
    for i in 0..n {
        v.sample_blocks(path, first + i * k, tmp);
        acc.iter_mut().zip(tmp.iter()).for_each(|(a, t)| *a += t);
    }
}

/// `P[X⁽¹⁾ + X⁽²⁾ ∈ xA]`.
pub fn convolution_tail_over_set(
    v1: &VectorLaw,
    v2: &VectorLaw,
    set: &RareSet,
    x: f64,
    engine: &Engine,
    budget: &Budget,
) -> Result<Estimate> {
    check_dims(v1, set)?;
    check_dims(v2, set)?;
    if !(x > 0.0) {
        return Err(invalid(format!("x must be positive, got {x}")));
    }
    let d = set.dim();
    let k1 = v1.blocks_per_draw();
    engine.tail(TAG_CONV, x, budget, |p| {
        let mut s = vec![0.0; d];
        let mut t = vec![0.0; d];
        add_draws(v1, p, 0, 1, &mut s, &mut t);
        add_draws(v2, p, k1, 1, &mut s, &mut t);
        Ok(set.y(&s))
    })
}

fn mc_trend(grid: Vec<f64>, num: Vec<Estimate>, den: Vec<Estimate>, target: f64) -> TrendReport {
    let mut ratios = Vec::with_capacity(num.len());
    let mut se = Vec::with_capacity(num.len());
    let mut zero = false;
    for (n, d) in num.iter().zip(&den) {
        let (r, s) = ratio_with_stderr(n, d);
        zero |= n.zero_hit;
        ratios.push(r);
        se.push(s);
    }
    let mut rep = TrendReport::statistical(
        grid,
        ratios,
        se,
        target,
        MC_TREND_TOL,
        DEFAULT_LAST_K,
        MC_MAX_REL_SE,
    );
    if zero {
        rep.notes.push(
            "zero hits at some grid point; its ratio carries only a rule-of-three bound".into(),
        );
    }
    rep
}

/// `P[X⁽¹⁾+X⁽²⁾ ∈ xA] / (P[X⁽¹⁾ ∈ xA] + P[X⁽²⁾ ∈ xA]) → 1`.
pub fn maxsum_ratio(
    v1: &VectorLaw,
    v2: &VectorLaw,
    set: &RareSet,
    x_grid: &[f64],
    engine: &Engine,
    budget: &Budget,
) -> Result<TrendReport> {
    check_long_tailed(v1)?;
    check_long_tailed(v2)?;
    let mut num = Vec::new();
    let mut den = Vec::new();
    for &x in x_grid {
        num.push(convolution_tail_over_set(v1, v2, set, x, engine, budget)?);
        let a = v1.fa_tail(set, x, engine, budget)?;
        let b = v2.fa_tail(set, x, engine, budget)?;
        let mut s = a;
        s.value = a.value + b.value;
        s.stderr = a.stderr.hypot(b.stderr);
        den.push(s);
    }
    Ok(mc_trend(x_grid.to_vec(), num, den, 1.0))
}

/// `P[S_n ∈ xA]` for i.i.d. copies of `v`.
pub fn nfold_tail(
    v: &VectorLaw,
    set: &RareSet,
    n: usize,
    x: f64,
    engine: &Engine,
    budget: &Budget,
) -> Result<Estimate> {
    check_dims(v, set)?;
    if n == 0 {
        return Ok(Estimate::analytic(0.0));
    }
    if n == 1 {
        return v.fa_tail(set, x, engine, budget);
    }
    let d = set.dim();
    engine.tail(TAG_NFOLD, x, budget, |p| {
        let mut s = vec![0.0; d];
        let mut t = vec![0.0; d];
        add_draws(v, p, 0, n, &mut s, &mut t);
        Ok(set.y(&s))
    })
}

/// `P[S_n ∈ xA] / (n P[X ∈ xA]) → 1`.
pub fn nfold_ratio(
    v: &VectorLaw,
    set: &RareSet,
    n: usize,
    x_grid: &[f64],
    engine: &Engine,
    budget: &Budget,
) -> Result<TrendReport> {
    if n == 0 {
        return Err(invalid("n-fold ratio needs n >= 1"));
    }
    check_dims(v, set)?;
    if n == 1 {
        let g = x_grid.to_vec();
        let ones = vec![1.0; g.len()];
        return Ok(TrendReport::limit(
            g,
            ones,
            1.0,
            MC_TREND_TOL,
            DEFAULT_LAST_K,
        ));
    }
    check_long_tailed(v)?;
    let mut num = Vec::new();
    let mut den = Vec::new();
    for &x in x_grid {
        num.push(nfold_tail(v, set, n, x, engine, budget)?);
        let mut one = v.fa_tail(set, x, engine, budget)?;
        one.value *= n as f64;
        one.stderr *= n as f64;
        den.push(one);
    }
    Ok(mc_trend(x_grid.to_vec(), num, den, 1.0))
}

/// Empirical table `K_n(x) = P[S_n ∈ xA]/P[X ∈ xA] · P[X ∈ cnA]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KestenTable {
    pub c: f64,
    pub mean_fa: f64,
    pub x_grid: Vec<f64>,
    /// `k[n-1][j]` is `K_n(x_j)`.
    pub k: Vec<Vec<f64>>,
    /// `sup_x K_n(x)` per row.
    pub row_sup: Vec<f64>,
    pub sup: f64,
    pub bounded: bool,
    pub paths: u64,
}

/// One crude pass that accumulates `S_1, …, S_{n_max}` per path and counts
/// every `(n, x)` exceedance, so all rows share random numbers.
pub fn kesten_table(
    v: &VectorLaw,
    set: &RareSet,
    c: f64,
    n_max: usize,
    x_grid: &[f64],
    engine: &Engine,
    budget: &Budget,
) -> Result<KestenTable> {
    check_dims(v, set)?;
    if n_max == 0 || x_grid.is_empty() {
        return Err(invalid(
            "kesten table needs n_max >= 1 and a non-empty grid",
        ));
    }
    let mean_fa = v.fa_mean(set, engine, budget)?.value;
    if !(c > mean_fa) {
        return Err(Error::ViolatesKesten { c, mean: mean_fa });
    }
    let d = set.dim();
    let nx = x_grid.len();
    let counts = engine.fold(
        TAG_KESTEN,
        budget.paths,
        || vec![0u64; n_max * nx],
        |cnt, p| {
            let mut s = vec![0.0; d];
            let mut t = vec![0.0; d];
            for n in 0..n_max {
                add_draws(v, p, n * v.blocks_per_draw(), 1, &mut s, &mut t);
                let y = set.y(&s);
                for (j, &x) in x_grid.iter().enumerate() {
                    if y > x {
                        cnt[n * nx + j] += 1;
                    }
                }
            }
            Ok(())
        },
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        },
    )?;
    let paths = budget.paths as f64;
    let single: Vec<f64> = x_grid
        .iter()
        .enumerate()
        .map(|(j, &x)| match v.fa_tail_exact(set, x) {
            Ok(Some(p)) => p,
            _ => counts[j] as f64 / paths,
        })
        .collect();
    let mut k = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let far = match v.fa_tail_exact(set, c * n as f64)? {
            Some(p) => p,
            None => v.fa_tail(set, c * n as f64, engine, budget)?.value,
        };
        let row: Vec<f64> = (0..nx)
            .map(|j| {
                let pn = counts[(n - 1) * nx + j] as f64 / paths;
                if single[j] > 0.0 {
                    pn / single[j] * far
                } else {
                    f64::NAN
                }
            })
            .collect();
        k.push(row);
    }
    let row_sup: Vec<f64> = k
        .iter()
        .map(|r| {
            r.iter()
                .copied()
                .filter(|v| v.is_finite())
                .fold(0.0, f64::max)
        })
        .collect();
    let sup = row_sup.iter().copied().fold(0.0, f64::max);
    let bounded = kesten_bounded(&row_sup);
    Ok(KestenTable {
        c,
        mean_fa,
        x_grid: x_grid.to_vec(),
        k,
        row_sup,
        sup,
        bounded,
        paths: budget.paths,
    })
}

/// Bounded when the last three row suprema stay within `KESTEN_GROWTH`
/// of the largest earlier row supremum.
pub fn kesten_bounded(row_sup: &[f64]) -> bool {
    let n = row_sup.len();
    if n <= 3 {
        return row_sup.iter().all(|v| v.is_finite());
    }
    let earlier = row_sup[..n - 3].iter().copied().fold(0.0, f64::max);
    row_sup[n - 3..]
        .iter()
        .all(|&v| v.is_finite() && v <= KESTEN_GROWTH * earlier)
}

/// Randomly stopped sum `S_τ = Σ_{i ≤ τ} X⁽ⁱ⁾` with `τ` independent of the
/// claims. Continuous laws for `τ` are floored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppedSumModel {
    pub vlaw: VectorLaw,
    pub tau: ScalarLaw,
}

impl StoppedSumModel {
    pub fn new(vlaw: VectorLaw, tau: ScalarLaw) -> Result<Self> {
        vlaw.validate()?;
        tau.validate()?;
        if let ScalarLaw::Degenerate { value } = tau {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(invalid(format!(
                    "degenerate tau must be a nonnegative integer, got {value}"
                )));
            }
        }
        Ok(Self { vlaw, tau })
    }

    /// `E[τ]`; continuous laws use `E[⌊T⌋] = Σ_{k≥1} P[T ≥ k]`.
    pub fn tau_mean(&self) -> Result<f64> {
        match self.tau {
            ScalarLaw::Geometric { .. } | ScalarLaw::Degenerate { .. } => self.tau.mean(),
            law => {
                law.mean()?;
                const N: u32 = 4096;
                let head: f64 = (1..=N).map(|k| law.tail(k as f64)).sum();
                let n = N as f64;
                Ok(head + law.integrated_tail(n)? - 0.5 * law.tail(n))
            }
        }
    }

    /// `P[τ > t]`.
    pub fn tau_tail(&self, t: f64) -> f64 {
        match self.tau {
            ScalarLaw::Geometric { .. } | ScalarLaw::Degenerate { .. } => self.tau.tail(t),
            law => {
                if t < 0.0 {
                    1.0
                } else {
                    law.tail(t.floor() + 1.0)
                }
            }
        }
    }

    pub fn sample_tau(&self, path: &mut PathRng) -> Result<u64> {
        let t = self.tau.sample(path.block(0)).floor();
        if !(t <= TAU_LIMIT as f64) {
            return Err(Error::TauOverflow { limit: TAU_LIMIT });
        }
        Ok(t.max(0.0) as u64)
    }

    /// `Y_A(S_τ)` read from a path: block 0 for `τ`, then the claims.
    pub fn statistic(&self, set: &RareSet, path: &mut PathRng) -> Result<f64> {
        let tau = self.sample_tau(path)? as usize;
        let d = set.dim();
        let mut s = vec![0.0; d];
        let mut t = vec![0.0; d];
        add_draws(&self.vlaw, path, 1, tau, &mut s, &mut t);
        Ok(set.y(&s))
    }
}

/// `P[S_τ ∈ xA]`.
pub fn stopped_sum_tail(
    model: &StoppedSumModel,
    set: &RareSet,
    x: f64,
    engine: &Engine,
    budget: &Budget,
) -> Result<Estimate> {
    check_dims(&model.vlaw, set)?;
    if !(x > 0.0) {
        return Err(invalid(format!("x must be positive, got {x}")));
    }
    match model.tau {
        ScalarLaw::Degenerate { value: 0.0 } => return Ok(Estimate::analytic(0.0)),
        ScalarLaw::Degenerate { value: 1.0 } => return model.vlaw.fa_tail(set, x, engine, budget),
        _ => {}
    }
    engine.tail(TAG_STOPPED, x, budget, |p| model.statistic(set, p))
}

/// Numerical check that `P[cτ > x] = o(P[X ∈ xA])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingCondition {
    pub c: f64,
    pub grid: Vec<f64>,
    pub ratios: Vec<f64>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleBigJumpReport {
    pub mean_tau: f64,
    pub trend: TrendReport,
    pub condition: StoppingCondition,
    pub condition_suspect: bool,
}

/// Evaluates the stopping-time condition with `c = μ_{F_A} + 1`. When
/// `P[X ∈ xA]` has a closed form the grid is extended by eight doublings.
pub fn stopping_condition(
    model: &StoppedSumModel,
    set: &RareSet,
    x_grid: &[f64],
    engine: &Engine,
    budget: &Budget,
) -> Result<StoppingCondition> {
    let c = model.vlaw.fa_mean(set, engine, budget)?.value + 1.0;
    let mut grid = x_grid.to_vec();
    let last = *x_grid.last().ok_or_else(|| invalid("empty x grid"))?;
    let exact = model.vlaw.fa_tail_exact(set, last)?.is_some();
    if exact {
        grid.extend((1..=8).map(|k| last * 2f64.powi(k)));
    }
    let mut ratios = Vec::with_capacity(grid.len());
    for &x in &grid {
        let p = match model.vlaw.fa_tail_exact(set, x)? {
            Some(p) => p,
            None => model.vlaw.fa_tail(set, x, engine, budget)?.value,
        };
        ratios.push(if p > 0.0 {
            model.tau_tail(x / c) / p
        } else {
            f64::NAN
        });
    }
    let n = ratios.len();
    let tail = &ratios[n.saturating_sub(3)..];
    let holds = tail.iter().all(|r| r.is_finite())
        && tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12))
        && ratios[n - 1] < CONDITION_FINAL;
    Ok(StoppingCondition {
        c,
        grid,
        ratios,
        holds,
    })
}

/// `P[S_τ ∈ xA] / (E[τ] P[X ∈ xA]) → 1` together with the condition check.
pub fn single_big_jump_report(
    model: &StoppedSumModel,
    set: &RareSet,
    x_grid: &[f64],
    engine: &Engine,
    budget: &Budget,
) -> Result<SingleBigJumpReport> {
    let mean_tau = model.tau_mean()?;
    if !(model.tau_tail(0.0) > 0.0) {
        return Err(invalid("tau is degenerate at zero"));
    }
    check_long_tailed(&model.vlaw)?;
    let condition = stopping_condition(model, set, x_grid, engine, budget)?;
    let mut num = Vec::new();
    let mut den = Vec::new();
    for &x in x_grid {
        num.push(stopped_sum_tail(model, set, x, engine, budget)?);
        let mut one = model.vlaw.fa_tail(set, x, engine, budget)?;
        one.value *= mean_tau;
        one.stderr *= mean_tau;
        den.push(one);
    }
    let mut trend = mc_trend(x_grid.to_vec(), num, den, 1.0);
    let condition_suspect = !condition.holds;
    if condition_suspect {
        trend.notes.push(
            "stopping-time condition suspect: P[c tau > x] is not o(P[X in xA]) on the grid".into(),
        );
    }
    Ok(SingleBigJumpReport {
        mean_tau,
        trend,
        condition,
        condition_suspect,
    })
}

/// `E[τ] μ(A) V̄(x)` for an Mrv claim law.
pub fn mrv_stopped_closed_form(model: &StoppedSumModel, set: &RareSet, x: f64) -> Result<f64> {
    let VectorLaw::Mrv { alpha, radial, .. } = &model.vlaw else {
        return Err(Error::KindMismatch { expected: "mrv" });
    };
    if *alpha <= 1.0 {
        return Err(Error::MeanNotFinite { alpha: *alpha });
    }
    Ok(model.tau_mean()? * model.vlaw.mu_a(set)? * radial.tail(x))
}

/// Verdict of a Kesten table in the shared vocabulary.
pub fn kesten_verdict(t: &KestenTable) -> Verdict {
    if t.bounded {
        Verdict::Consistent
    } else {
        Verdict::Inconsistent
    }
}
