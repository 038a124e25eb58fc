//! Counting processes with independent inter-arrivals, the two arrival
//! assumptions, and precise large-deviation surfaces for fixed and random
//! sums.

use serde::{Deserialize, Serialize};
use statrs::distribution::{DiscreteCDF, Poisson};

use crate::error::{invalid, Error, Result};
use crate::mc::{
    ratio_with_stderr, Budget, Engine, Estimate, MeanEstimate, Method, PathRng, UniformSource,
};
use crate::rare_sets::RareSet;
use crate::report::{TrendReport, Verdict, DEFAULT_LAST_K, MONOTONE_SLACK};
use crate::scalar_laws::{h_inverse, InsensitivityFn, ScalarLaw};
use crate::vector_laws::VectorLaw;

pub const ARRIVAL_LIMIT: usize = 10_000_000;
pub const DEFAULT_DELTA: f64 = 0.5;
/// Below the Poisson critical value at `DEFAULT_DELTA` (≈ 0.0748).
pub const DEFAULT_EPS: f64 = 0.05;
pub const LLN_DELTAS: [f64; 2] = [0.1, 0.05];
pub const DEFAULT_X_MULTS: [f64; 4] = [1.0, 1.5, 2.0, 4.0];
/// Cells whose single-claim probability falls below this are unreachable.
pub const REACH_FLOOR: f64 = 1e-12;

pub const TAG_COUNT: u32 = 0x41;
pub const TAG_LLN: u32 = 0x42;
pub const TAG_LIGHT: u32 = 0x43;
/// Shared by random sums and the discounted risk paths, so that `r = 0`
/// reproduces the random-sum streams exactly.
pub const TAG_RANDOM_SUM: u32 = 0x45;
const TAG_PLD_BASE: u32 = 0x4400_0000;

/// Arrival process `N(t) = sup{n : θ_1 + … + θ_n ≤ t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CountingProcess {
    /// I.i.d. inter-arrivals.
    Renewal { law: ScalarLaw },
    /// `θ_i` drawn from `laws[(i − 1) mod k]`.
    Cyclic { laws: Vec<ScalarLaw> },
    /// `θ_i = (1 + ratio/i)·Y_i` with `Y_i` i.i.d. from `base`.
    Scaled { base: ScalarLaw, ratio: f64 },
}

impl CountingProcess {
    pub fn poisson(rate: f64) -> Result<Self> {
        Ok(Self::Renewal {
            law: ScalarLaw::exponential(rate)?,
        })
    }

    pub fn deterministic(spacing: f64) -> Result<Self> {
        Ok(Self::Renewal {
            law: ScalarLaw::degenerate(spacing)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |l: &ScalarLaw| -> Result<()> {
            l.validate()?;
            match *l {
                ScalarLaw::Degenerate { value } if value <= 0.0 => {
                    Err(invalid("inter-arrival times must be positive"))
                }
                _ => Ok(()),
            }
        };
        match self {
            Self::Renewal { law } => positive(law),
            Self::Cyclic { laws } => {
                if laws.is_empty() {
                    return Err(invalid("cyclic process needs at least one law"));
                }
                laws.iter().try_for_each(positive)
            }
            Self::Scaled { base, ratio } => {
                positive(base)?;
                if !(*ratio > -1.0 && ratio.is_finite()) {
                    return Err(invalid(format!("ratio must exceed -1, got {ratio}")));
                }
                Ok(())
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Renewal {
                law: ScalarLaw::Exponential { rate },
            } => format!("Poisson({rate})"),
            Self::Renewal { law } => format!("Renewal({})", law.label()),
            Self::Cyclic { laws } => {
                let parts: Vec<String> = laws.iter().map(|l| l.label()).collect();
                format!("Cyclic({})", parts.join(", "))
            }
            Self::Scaled { base, ratio } => format!("Scaled({}, {ratio})", base.label()),
        }
    }

    pub fn poisson_rate(&self) -> Option<f64> {
        match self {
            Self::Renewal {
                law: ScalarLaw::Exponential { rate },
            } => Some(*rate),
            _ => None,
        }
    }

    /// True when every inter-arrival law is a point mass.
    pub fn is_deterministic(&self) -> bool {
        let det = |l: &ScalarLaw| matches!(l, ScalarLaw::Degenerate { .. });
        match self {
            Self::Renewal { law } => det(law),
            Self::Cyclic { laws } => laws.iter().all(det),
            Self::Scaled { base, .. } => det(base),
        }
    }

    /// `θ_i`, 1-based.
    pub fn interarrival<R: UniformSource + ?Sized>(&self, i: usize, rng: &mut R) -> f64 {
        match self {
            Self::Renewal { law } => law.sample(rng),
            Self::Cyclic { laws } => laws[(i - 1) % laws.len()].sample(rng),
            Self::Scaled { base, ratio } => (1.0 + ratio / i as f64) * base.sample(rng),
        }
    }

    /// `N(t)` without storing epochs.
    pub fn count<R: UniformSource + ?Sized>(&self, t: f64, rng: &mut R) -> Result<usize> {
        let mut n = 0;
        self.walk(t, rng, |_| n += 1)?;
        Ok(n)
    }

    fn walk<R: UniformSource + ?Sized>(
        &self,
        t: f64,
        rng: &mut R,
        mut on_arrival: impl FnMut(f64),
    ) -> Result<()> {
        if !(t >= 0.0) {
            return Err(invalid(format!("t must be >= 0, got {t}")));
        }
        let mut tau = 0.0;
        let mut i = 0;
        loop {
            i += 1;
            tau += self.interarrival(i, rng);
            if tau > t {
                return Ok(());
            }
            if i > ARRIVAL_LIMIT {
                return Err(Error::ArrivalOverflow {
                    limit: ARRIVAL_LIMIT as u64,
                });
            }
            on_arrival(tau);
        }
    }

    /// Closed-form `λ(t)` when one is known.
    pub fn lambda_exact(&self, t: f64) -> Option<f64> {
        if let Some(rate) = self.poisson_rate() {
            return Some(rate * t);
        }
        if self.is_deterministic() {
            // No uniforms are consumed, so any source gives the single path.
            let mut dummy = crate::mc::RngStream::new(0, 0);
            return self.count(t, &mut dummy).ok().map(|n| n as f64);
        }
        None
    }
}

/// `(N(t), τ_1, …, τ_N)`.
pub fn simulate_counting<R: UniformSource + ?Sized>(
    cp: &CountingProcess,
    t: f64,
    rng: &mut R,
) -> Result<(usize, Vec<f64>)> {
    let mut epochs = Vec::new();
    cp.walk(t, rng, |tau| epochs.push(tau))?;
    Ok((epochs.len(), epochs))
}

/// `λ(t) = E[N(t)]`, exact when available.
pub fn lambda_mean(
    cp: &CountingProcess,
    t: f64,
    engine: &Engine,
    budget: &Budget,
) -> Result<MeanEstimate> {
    cp.validate()?;
    if let Some(l) = cp.lambda_exact(t) {
        return Ok(MeanEstimate::analytic(l));
    }
    let m = engine.mean(TAG_COUNT, budget.paths, |p| {
        Ok(cp.count(t, p.block(0))? as f64)
    })?;
    Ok(MeanEstimate::from_moments(&m))
}

/// Trend verdict for probabilities that should decrease to zero: the last
/// `k` values do not increase beyond two standard errors, and the last is
/// zero or at most half the first.
fn to_zero_verdict(values: &[f64], se: &[f64], k: usize) -> Verdict {
    let n = values.len();
    if n < 2 || values.iter().any(|v| v.is_nan()) {
        return Verdict::Inconclusive;
    }
    if values.iter().any(|v| v.is_infinite()) {
        return Verdict::Inconsistent;
    }
    let k = k.min(n);
    let tail = n - k;
    let monotone = (tail + 1..n)
        .all(|i| values[i] <= values[i - 1] + 2.0 * se[i].hypot(se[i - 1]) + MONOTONE_SLACK);
    let shrinks = values[n - 1] == 0.0 || values[n - 1] <= 0.5 * values[0];
    if monotone && shrinks {
        Verdict::Consistent
    } else {
        Verdict::Inconsistent
    }
}

fn zero_target_report(
    grid: Vec<f64>,
    values: Vec<f64>,
    se: Vec<f64>,
    verdict: Verdict,
) -> TrendReport {
    let dev = values
        .iter()
        .rev()
        .take(DEFAULT_LAST_K)
        .cloned()
        .fold(0.0, f64::max);
    TrendReport {
        grid,
        ratios: values,
        ratio_stderr: se,
        target: Some(0.0),
        verdict,
        max_dev_last_k: dev,
        tol: 0.0,
        k: DEFAULT_LAST_K,
        notes: Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlnCheck {
    /// One report per δ in [`LLN_DELTAS`], holding `P[|N(t)/λ(t) − 1| > δ]`.
    pub per_delta: Vec<(f64, TrendReport)>,
    pub verdict: Verdict,
}

/// Law of large numbers `N(t)/λ(t) → 1` in probability.
pub fn check_lln(
    cp: &CountingProcess,
    t_grid: &[f64],
    engine: &Engine,
    budget: &Budget,
) -> Result<LlnCheck> {
    cp.validate()?;
    let lambdas: Vec<f64> = t_grid
        .iter()
        .map(|&t| lambda_mean(cp, t, engine, budget).map(|m| m.value))
        .collect::<Result<_>>()?;
    if lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Precondition(
            "lambda(t) must be positive on the grid".into(),
        ));
    }
    let mut per_delta = Vec::new();
    for &delta in &LLN_DELTAS {
        let mut p = Vec::new();
        let mut se = Vec::new();
        for (&t, &lam) in t_grid.iter().zip(&lambdas) {
            let e = engine.crude_event(TAG_LLN, budget.paths, |path| {
                let n = cp.count(t, path.block(0))? as f64;
                Ok((n / lam - 1.0).abs() > delta)
            })?;
            p.push(e.value);
            se.push(e.stderr);
        }
        let v = to_zero_verdict(&p, &se, DEFAULT_LAST_K);
        per_delta.push((delta, zero_target_report(t_grid.to_vec(), p, se, v)));
    }
    let verdict = combine(per_delta.iter().map(|(_, r)| r.verdict));
    Ok(LlnCheck { per_delta, verdict })
}

fn combine(vs: impl Iterator<Item = Verdict>) -> Verdict {
    let vs: Vec<Verdict> = vs.collect();
    if vs.contains(&Verdict::Inconsistent) {
        Verdict::Inconsistent
    } else if vs.iter().all(|v| *v == Verdict::Consistent) {
        Verdict::Consistent
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightTail {
    pub t: f64,
    pub delta: f64,
    pub eps: f64,
    pub lambda: f64,
    /// `⌊(1 + δ)λ(t)⌋`.
    pub cutoff: u64,
    pub sum: f64,
    pub stderr: f64,
    pub method: Method,
    /// Paths whose count exceeded `n_cap`; nonzero makes the sum a lower bound.
    pub beyond_cap: u64,
}

/// `Σ_{n > ⌊(1+δ)λ(t)⌋} (1+ε)^n P[N(t) = n]`.
///
/// Poisson arrivals use `(1+ε)^n P[N = n] = e^{ελ} P[N' = n]` with
/// `N' ~ Poisson((1+ε)λ)`; deterministic arrivals give exactly zero; other
/// processes use a Monte Carlo histogram up to `n_cap`.
pub fn check_light_tail(
    cp: &CountingProcess,
    t: f64,
    delta: f64,
    eps: f64,
    n_cap: usize,
    engine: &Engine,
    budget: &Budget,
) -> Result<LightTail> {
    if !(delta > 0.0 && eps > 0.0) {
        return Err(invalid("delta and eps must be positive"));
    }
    let lambda = lambda_mean(cp, t, engine, budget)?.value;
    let cutoff = ((1.0 + delta) * lambda).floor() as u64;
    let mut out = LightTail {
        t,
        delta,
        eps,
        lambda,
        cutoff,
        sum: 0.0,
        stderr: 0.0,
        method: Method::Analytic,
        beyond_cap: 0,
    };
    if let Some(rate) = cp.poisson_rate() {
        let l = rate * t;
        if l > 0.0 {
            let shifted = Poisson::new((1.0 + eps) * l).map_err(|e| invalid(e.to_string()))?;
            out.sum = (eps * l).exp() * shifted.sf(cutoff);
        }
        return Ok(out);
    }
    if cp.is_deterministic() {
        return Ok(out);
    }
    let w = (1.0 + eps).ln();
    let (mut m, over) = engine.fold(
        TAG_LIGHT,
        budget.paths,
        || (crate::mc::Moments::default(), 0u64),
        |acc, p| {
            let n = cp.count(t, p.block(0))?;
            let v = if n as u64 > cutoff && n <= n_cap {
                (n as f64 * w).exp()
            } else {
                0.0
            };
            acc.0.push(v);
            acc.1 += u64::from(n > n_cap);
            Ok(())
        },
        |a, b| (a.0.merge(&b.0), a.1 + b.1),
    )?;
    if m.n == 0 {
        m.mean = f64::NAN;
    }
    out.sum = m.mean;
    out.stderr = m.stderr();
    out.method = Method::Crude;
    out.beyond_cap = over;
    Ok(out)
}

/// Supremum of the `ε` for which the light-tail sum of a Poisson process
/// vanishes: `ln(1 + ε) < I(1 + δ)/(1 + δ)` with `I(a) = a ln a − a + 1`.
pub fn poisson_critical_eps(delta: f64) -> f64 {
    let a = 1.0 + delta;
    ((a * a.ln() - a + 1.0) / a).exp() - 1.0
}

/// Light-tail sums over a `t` grid with a to-zero trend verdict.
pub fn light_tail_trend(
    cp: &CountingProcess,
    t_grid: &[f64],
    delta: f64,
    eps: f64,
    n_cap: usize,
    engine: &Engine,
    budget: &Budget,
) -> Result<(Vec<LightTail>, TrendReport)> {
    let rows: Vec<LightTail> = t_grid
        .iter()
        .map(|&t| check_light_tail(cp, t, delta, eps, n_cap, engine, budget))
        .collect::<Result<_>>()?;
    let v: Vec<f64> = rows.iter().map(|r| r.sum).collect();
    let se: Vec<f64> = rows.iter().map(|r| r.stderr).collect();
    let mut verdict = to_zero_verdict(&v, &se, DEFAULT_LAST_K);
    let mut rep_notes = Vec::new();
    if rows.iter().any(|r| r.beyond_cap > 0) {
        verdict = Verdict::Inconclusive;
        rep_notes.push(format!(
            "counts beyond n_cap = {n_cap}; sums are lower bounds"
        ));
    }
    let mut rep = zero_target_report(t_grid.to_vec(), v, se, verdict);
    rep.notes = rep_notes;
    Ok((rows, rep))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Evaluated,
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCell {
    /// `n` for fixed sums, `t` for random sums.
    pub key: f64,
    /// `n`, or `⌊λ(t)⌋`.
    pub n: u64,
    pub x_mult: f64,
    pub threshold: f64,
    pub x: f64,
    pub estimate: Option<Estimate>,
    /// `P[X ∈ xA]`.
    pub single: f64,
    /// `n·P[X ∈ xA]`.
    pub target: f64,
    pub ratio: f64,
    pub ratio_stderr: f64,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub gamma: f64,
    pub mean_fa: f64,
    pub cells: Vec<SurfaceCell>,
    /// Largest `|ratio − 1|` over evaluated cells.
    pub max_dev: f64,
    /// Largest deviation per `x_mult`, in grid order.
    pub max_dev_by_mult: Vec<(f64, f64)>,
    pub dev_nonincreasing_in_mult: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Surface {
    /// All evaluated cells within `tol` of 1.
    pub fn within(&self, tol: f64) -> bool {
        self.cells
            .iter()
            .filter(|c| c.status == CellStatus::Evaluated)
            .all(|c| (c.ratio - 1.0).abs() <= tol)
    }

    fn summarize(gamma: f64, mean_fa: f64, cells: Vec<SurfaceCell>, mults: &[f64]) -> Self {
        let dev = |c: &SurfaceCell| (c.ratio - 1.0).abs();
        let live = |c: &&SurfaceCell| c.status == CellStatus::Evaluated;
        let max_dev = cells.iter().filter(live).map(dev).fold(0.0, f64::max);
        let max_dev_by_mult: Vec<(f64, f64)> = mults
            .iter()
            .map(|&m| {
                (
                    m,
                    cells
                        .iter()
                        .filter(live)
                        .filter(|c| c.x_mult == m)
                        .map(dev)
                        .fold(0.0, f64::max),
                )
            })
            .collect();
        let dev_nonincreasing_in_mult = max_dev_by_mult
            .windows(2)
            .all(|w| w[1].1 <= w[0].1 + MONOTONE_SLACK);
        Self {
            gamma,
            mean_fa,
            cells,
            max_dev,
            max_dev_by_mult,
            dev_nonincreasing_in_mult,
            notes: Vec::new(),
        }
    }
}

/// Family-level check that each claim marginal sits in the strongly
/// subexponential class with a finite mean.
pub fn require_strongly_subexp(v: &VectorLaw) -> Result<()> {
    let laws: Vec<&ScalarLaw> = match v {
        VectorLaw::Independent { marginals } => marginals.iter().collect(),
        VectorLaw::Lwqd { common, .. } => vec![common],
        VectorLaw::Mrv { radial, .. } => vec![radial],
    };
    for l in laws {
        if !l.is_long_tailed() || l.is_discrete() {
            return Err(Error::NotLongTailed(l.label()));
        }
        l.mean()?;
    }
    Ok(())
}

/// Statistic for `Y_A(S_m)` with `m` read from block 0 and claims from
/// blocks `1, 2, …`. Fixed and random sums share this layout, so a point-mass
/// counting process reproduces the fixed-`n` streams exactly.
fn sum_statistic<'a, C>(
    v: &'a VectorLaw,
    set: &'a RareSet,
    count: C,
) -> impl Fn(&mut PathRng) -> Result<f64> + Sync + 'a
where
    C: Fn(&mut PathRng) -> Result<usize> + Sync + 'a,
{
    move |p: &mut PathRng| {
        let m = count(p)?;
        let d = set.dim();
        let k = v.blocks_per_draw();
        let mut s = vec![0.0; d];
        let mut t = vec![0.0; d];
        for i in 0..m {
            v.sample_blocks(p, 1 + i * k, &mut t);
            s.iter_mut().zip(&t).for_each(|(a, b)| *a += b);
        }
        Ok(set.y(&s))
    }
}

fn pld_tag(n: u64) -> u32 {
    TAG_PLD_BASE | (n.min(0x00ff_ffff) as u32)
}

struct CellPlan {
    key: f64,
    n: u64,
}

#[allow(clippy::too_many_arguments)]
fn pld_surface<S>(
    v: &VectorLaw,
    set: &RareSet,
    plans: &[CellPlan],
    x_mults: &[f64],
    gamma: f64,
    engine: &Engine,
    budget: &Budget,
    stat_for: S,
) -> Result<Surface>
where
    S: Fn(&CellPlan, &mut PathRng) -> Result<usize> + Sync,
{
    require_strongly_subexp(v)?;
    if x_mults.iter().any(|m| !(*m >= 1.0)) {
        return Err(invalid("x multipliers must be >= 1"));
    }
    let h = InsensitivityFn::new(gamma)?;
    let mean_fa = v.fa_mean(set, engine, budget)?.value;
    let mut cells = Vec::new();
    for plan in plans {
        let threshold = h_inverse(&h, plan.n as f64 * (mean_fa + 1.0));
        for &m in x_mults {
            let x = m * threshold;
            let single_est = v.fa_tail(set, x, engine, budget)?;
            let single = single_est.value;
            let target = plan.n as f64 * single;
            let mut cell = SurfaceCell {
                key: plan.key,
                n: plan.n,
                x_mult: m,
                threshold,
                x,
                estimate: None,
                single,
                target,
                ratio: f64::NAN,
                ratio_stderr: f64::NAN,
                status: CellStatus::Unreachable,
            };
            if plan.n == 0 || !(single >= REACH_FLOOR) {
                cells.push(cell);
                continue;
            }
            debug_assert!(x >= threshold);
            let est = if plan.n == 1 && single_est.method == Method::Analytic {
                single_est
            } else {
                let stat = sum_statistic(v, set, |p: &mut PathRng| stat_for(plan, p));
                engine.tail(pld_tag(plan.n), x, budget, stat)?
            };
            let mut den = single_est;
            den.value *= plan.n as f64;
            den.stderr *= plan.n as f64;
            let (r, se) = ratio_with_stderr(&est, &den);
            cell.ratio = r;
            cell.ratio_stderr = se;
            cell.estimate = Some(est);
            cell.status = CellStatus::Evaluated;
            cells.push(cell);
        }
    }
    Ok(Surface::summarize(gamma, mean_fa, cells, x_mults))
}

/// Ratios `P[S_n ∈ xA]/(n P[X ∈ xA])` at `x = x_mult·h^←[n(μ_{F_A}+1)]`.
pub fn pld_fixed_n_surface(
    v: &VectorLaw,
    set: &RareSet,
    n_list: &[u64],
    x_mults: &[f64],
    gamma: f64,
    engine: &Engine,
    budget: &Budget,
) -> Result<Surface> {
    let plans: Vec<CellPlan> = n_list
        .iter()
        .map(|&n| CellPlan { key: n as f64, n })
        .collect();
    pld_surface(v, set, &plans, x_mults, gamma, engine, budget, |plan, _| {
        Ok(plan.n as usize)
    })
}

/// Ratios `P[S_{N(t)} ∈ xA]/(⌊λ(t)⌋ P[X ∈ xA])` at
/// `x = x_mult·h^←[⌊λ(t)⌋(μ_{F_A}+1)]`. The arrival assumptions are
/// evaluated on `t_list` and recorded in the notes.
#[allow(clippy::too_many_arguments)]
pub fn pld_random_surface(
    v: &VectorLaw,
    cp: &CountingProcess,
    set: &RareSet,
    t_list: &[f64],
    x_mults: &[f64],
    gamma: f64,
    engine: &Engine,
    budget: &Budget,
) -> Result<Surface> {
    cp.validate()?;
    let mut plans = Vec::new();
    for &t in t_list {
        let lam = lambda_mean(cp, t, engine, budget)?.value;
        plans.push(CellPlan {
            key: t,
            n: lam.floor().max(0.0) as u64,
        });
    }
    let mut s = pld_surface(v, set, &plans, x_mults, gamma, engine, budget, |plan, p| {
        cp.count(plan.key, p.block(0))
    })?;
    for &t in t_list {
        let lt = check_light_tail(
            cp,
            t,
            DEFAULT_DELTA,
            DEFAULT_EPS,
            100_000,
            engine,
            &Budget::crude(budget.paths.min(20_000)),
        )?;
        s.notes.push(format!(
            "light-tail sum at t={t} (delta={}, eps={}): {:e} [{}]",
            DEFAULT_DELTA,
            DEFAULT_EPS,
            lt.sum,
            lt.method.as_str()
        ));
    }
    if t_list.len() >= 2 {
        let lln = check_lln(cp, t_list, engine, &Budget::crude(budget.paths.min(20_000)))?;
        s.notes.push(format!(
            "law-of-large-numbers check on t_list: {:?}",
            lln.verdict
        ));
    }
    Ok(s)
}

/// `P[S_{N(t)} ∈ xA]` with the count on block 0 and claims on blocks
/// `1 + i·k`.
pub fn random_sum_tail(
    v: &VectorLaw,
    cp: &CountingProcess,
    set: &RareSet,
    t: f64,
    x: f64,
    engine: &Engine,
    budget: &Budget,
) -> Result<Estimate> {
    cp.validate()?;
    if set.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: v.dim(),
            got: set.dim(),
        });
    }
    if !(x > 0.0) {
        return Err(invalid(format!("x must be positive, got {x}")));
    }
    let stat = sum_statistic(v, set, |p: &mut PathRng| cp.count(t, p.block(0)));
    engine.tail(TAG_RANDOM_SUM, x, budget, stat)
}

/// `n μ(A) V̄(x)`; pass `⌊λ(t)⌋` as `n` for random sums.
pub fn pld_mrv_closed_form(v: &VectorLaw, set: &RareSet, n: f64, x: f64) -> Result<f64> {
    let VectorLaw::Mrv { alpha, radial, .. } = v else {
        return Err(Error::KindMismatch { expected: "mrv" });
    };
    if *alpha <= 1.0 {
        return Err(Error::MeanNotFinite { alpha: *alpha });
    }
    Ok(n * v.mu_a(set)? * radial.tail(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::RngStream;

    fn engine() -> Engine {
        Engine::new(9, 2).unwrap()
    }

    fn p2() -> ScalarLaw {
        ScalarLaw::pareto(2.0, 1.0).unwrap()
    }

    fn half() -> RareSet {
        RareSet::halfspace(&[0.5, 0.5], 1.0).unwrap()
    }

    #[test]
    fn deterministic_counts() {
        let cp = CountingProcess::deterministic(1.0).unwrap();
        let mut r = RngStream::new(1, 0);
        assert_eq!(
            simulate_counting(&cp, 3.5, &mut r).unwrap(),
            (3, vec![1.0, 2.0, 3.0])
        );
        assert_eq!(simulate_counting(&cp, 0.0, &mut r).unwrap().0, 0);
        assert_eq!(cp.lambda_exact(3.5), Some(3.0));
        let p = CountingProcess::poisson(1.0).unwrap();
        assert_eq!(simulate_counting(&p, 0.0, &mut r).unwrap().0, 0);
        assert!(simulate_counting(&p, -1.0, &mut r).is_err());
    }

    #[test]
    fn poisson_mean_by_simulation() {
        let cp = CountingProcess::Cyclic {
            laws: vec![ScalarLaw::exponential(1.0).unwrap()],
        };
        let m = lambda_mean(&cp, 10.0, &engine(), &Budget::crude(100_000)).unwrap();
        assert_eq!(m.method, Method::Crude);
        assert!((m.value - 10.0).abs() < 3.0 * m.stderr, "{m:?}");
        let exact = lambda_mean(
            &CountingProcess::poisson(1.0).unwrap(),
            5.0,
            &engine(),
            &Budget::crude(1),
        )
        .unwrap();
        assert_eq!(exact.value, 5.0);
    }

    #[test]
    fn alternating_renewal_mean() {
        // Oracle: two-state renewal function, λ(t) = 4t/3 − (1 − e^{−3t})/9.
        let cp = CountingProcess::Cyclic {
            laws: vec![
                ScalarLaw::exponential(1.0).unwrap(),
                ScalarLaw::exponential(2.0).unwrap(),
            ],
        };
        let t = 10.0f64;
        let oracle = 4.0 * t / 3.0 - (1.0 - (-3.0 * t).exp()) / 9.0;
        let m = lambda_mean(&cp, t, &engine(), &Budget::crude(200_000)).unwrap();
        assert!(
            (m.value - oracle).abs() < 4.0 * m.stderr,
            "{} vs {oracle}",
            m.value
        );
    }

    #[test]
    fn arrival_overflow() {
        let cp = CountingProcess::deterministic(1e-9).unwrap();
        let mut r = RngStream::new(1, 0);
        assert!(matches!(
            cp.count(1.0, &mut r),
            Err(Error::ArrivalOverflow { .. })
        ));
    }

    #[test]
    fn lln_examples() {
        let b = Budget::crude(20_000);
        let p = check_lln(
            &CountingProcess::poisson(1.0).unwrap(),
            &[10.0, 100.0, 300.0, 1000.0],
            &engine(),
            &b,
        )
        .unwrap();
        assert_eq!(p.verdict, Verdict::Consistent);
        let at_1000 = p.per_delta[0].1.ratios[3];
        // Normal scale: P[|Z| > 0.1·√1000] ≈ 0.0016.
        assert!(at_1000 < 0.006, "{at_1000}");
        let d = check_lln(
            &CountingProcess::deterministic(1.0).unwrap(),
            &[10.5, 100.5, 1000.5],
            &engine(),
            &b,
        )
        .unwrap();
        assert!(d
            .per_delta
            .iter()
            .all(|(_, r)| r.ratios.iter().all(|&v| v == 0.0)));
        let heavy = CountingProcess::Renewal {
            law: ScalarLaw::pareto(0.8, 1.0).unwrap(),
        };
        let h = check_lln(
            &heavy,
            &[10.0, 100.0, 1000.0],
            &engine(),
            &Budget::crude(4000),
        )
        .unwrap();
        assert_eq!(h.verdict, Verdict::Inconsistent);
    }

    fn poisson_weighted_tail(l: f64, eps: f64, cutoff: u64) -> f64 {
        // Direct pmf sum in log space.
        let mut s = 0.0;
        let mut logp = -l;
        for n in 1..=4000u64 {
            logp += l.ln() - (n as f64).ln();
            if n > cutoff {
                s += (logp + n as f64 * (1.0 + eps).ln()).exp();
            }
        }
        s
    }

    #[test]
    fn light_tail_poisson() {
        let cp = CountingProcess::poisson(1.0).unwrap();
        let b = Budget::crude(1);
        let r = check_light_tail(&cp, 50.0, 0.5, 0.1, 1000, &engine(), &b).unwrap();
        assert_eq!(r.cutoff, 75);
        let oracle = poisson_weighted_tail(50.0, 0.1, 75);
        assert!(
            ((r.sum - oracle) / oracle).abs() < 1e-9,
            "{} vs {oracle}",
            r.sum
        );
        // Chernoff: Σ_{n>m} a^n p_n ≤ e^{−θm} exp(λ(a e^θ − 1)) at e^θ = m/(aλ).
        let (l, a, m) = (50.0f64, 1.1f64, 75.0f64);
        let th = (m / (a * l)).ln();
        assert!(r.sum <= (-th * m + l * (a * th.exp() - 1.0)).exp());
        // ε = 0.1 exceeds the critical value at δ = 0.5, so the sum grows.
        let crit = poisson_critical_eps(0.5);
        assert!((crit - 0.0748).abs() < 1e-4, "{crit}");
        let grid = [10.0, 50.0, 100.0, 200.0, 400.0];
        let (rows, rep) = light_tail_trend(&cp, &grid, 0.5, 0.1, 1000, &engine(), &b).unwrap();
        assert!((rows[1].sum - 0.62250).abs() < 1e-4);
        assert_eq!(rep.verdict, Verdict::Inconsistent);
        let (_, rep) = light_tail_trend(&cp, &grid, 0.5, DEFAULT_EPS, 1000, &engine(), &b).unwrap();
        assert_eq!(rep.verdict, Verdict::Consistent, "{:?}", rep.ratios);
        let (_, rep) = light_tail_trend(&cp, &grid, 0.5, 2.0, 1000, &engine(), &b).unwrap();
        assert_eq!(rep.verdict, Verdict::Inconsistent);
        let d = check_light_tail(
            &CountingProcess::deterministic(1.0).unwrap(),
            50.0,
            0.5,
            0.1,
            1000,
            &engine(),
            &b,
        )
        .unwrap();
        assert_eq!(d.sum, 0.0);
    }

    #[test]
    fn light_tail_histogram_matches_pgf() {
        let cp = CountingProcess::Cyclic {
            laws: vec![ScalarLaw::exponential(1.0).unwrap()],
        };
        let r = check_light_tail(
            &cp,
            20.0,
            0.33,
            0.05,
            1000,
            &engine(),
            &Budget::crude(200_000),
        )
        .unwrap();
        assert_eq!(r.method, Method::Crude);
        let exact = check_light_tail(
            &CountingProcess::poisson(1.0).unwrap(),
            20.0,
            0.33,
            0.05,
            1000,
            &engine(),
            &Budget::crude(1),
        )
        .unwrap();
        assert_eq!(r.cutoff, exact.cutoff);
        assert!(
            (r.sum - exact.sum).abs() < 4.0 * r.stderr + 0.02 * exact.sum,
            "{} vs {}",
            r.sum,
            exact.sum
        );
    }

    #[test]
    fn threshold_values() {
        let h = InsensitivityFn::new(0.9).unwrap();
        assert!((h_inverse(&h, 30.0) - 43.777).abs() < 1e-3);
    }

    #[test]
    fn surface_n1_and_threshold_law() {
        let v = VectorLaw::iid(p2(), 2).unwrap();
        let s = pld_fixed_n_surface(
            &v,
            &half(),
            &[1, 2],
            &[1.0, 2.0],
            0.9,
            &engine(),
            &Budget::crude(50_000),
        )
        .unwrap();
        assert_eq!(s.mean_fa, 2.0);
        for c in &s.cells {
            let thr = (c.n as f64 * 3.0).powf(1.0 / 0.9);
            assert_eq!(c.threshold, thr);
            assert!(c.x >= c.threshold);
            if c.n == 1 {
                assert_eq!(c.ratio, 1.0);
            }
        }
    }

    #[test]
    fn unreachable_cells_are_marked() {
        let v = VectorLaw::iid(ScalarLaw::pareto(6.0, 1.0).unwrap(), 2).unwrap();
        let s = pld_fixed_n_surface(
            &v,
            &half(),
            &[1, 2000],
            &[4.0],
            0.9,
            &engine(),
            &Budget::crude(1000),
        )
        .unwrap();
        let far = s.cells.iter().find(|c| c.n == 2000).unwrap();
        assert_eq!(far.status, CellStatus::Unreachable);
        assert!(far.estimate.is_none() && far.single < REACH_FLOOR);
    }

    #[test]
    fn reduction_is_bit_identical() {
        let v = VectorLaw::iid(p2(), 2).unwrap();
        let b = Budget::crude(20_000);
        let fixed =
            pld_fixed_n_surface(&v, &half(), &[2, 3], &[1.0, 2.0], 0.9, &engine(), &b).unwrap();
        let cp = CountingProcess::deterministic(1.0).unwrap();
        let random = pld_random_surface(
            &v,
            &cp,
            &half(),
            &[2.5, 3.5],
            &[1.0, 2.0],
            0.9,
            &engine(),
            &b,
        )
        .unwrap();
        for (a, r) in fixed.cells.iter().zip(&random.cells) {
            assert_eq!(a.n, r.n);
            assert_eq!(a.x, r.x);
            assert_eq!(a.estimate, r.estimate);
            assert_eq!(a.ratio.to_bits(), r.ratio.to_bits());
        }
    }

    #[test]
    fn floor_of_lambda() {
        let cp = CountingProcess::poisson(1.0).unwrap();
        let v = VectorLaw::iid(p2(), 2).unwrap();
        let s = pld_random_surface(
            &v,
            &cp,
            &half(),
            &[10.0, 10.9],
            &[1.0],
            0.9,
            &engine(),
            &Budget::crude(2000),
        )
        .unwrap();
        assert!(s.cells.iter().all(|c| c.n == 10));
        assert_eq!(s.cells[0].threshold, s.cells[1].threshold);
    }

    #[test]
    fn mrv_closed_form_values() {
        let v = VectorLaw::mrv(2.0, p2(), 2, vec![0.5, 0.5]).unwrap();
        let x = 43.8;
        assert!((pld_mrv_closed_form(&v, &half(), 1.0, x).unwrap() - 0.25 / (x * x)).abs() < 1e-15);
        let ten = pld_mrv_closed_form(&v, &half(), 10.0, x).unwrap();
        assert!((ten - 1.3e-3).abs() < 0.01e-3, "{ten}");
        let c =
            VectorLaw::mrv(1.0, ScalarLaw::pareto(1.0, 1.0).unwrap(), 2, vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            pld_mrv_closed_form(&c, &half(), 1.0, x),
            Err(Error::MeanNotFinite { .. })
        ));
    }

    #[test]
    fn config_round_trip() {
        let j = r#"{"kind":"scaled","base":{"family":"exponential","params":{"rate":1.0}},"ratio":0.5}"#;
        let cp: CountingProcess = serde_json::from_str(j).unwrap();
        assert_eq!(serde_json::to_string(&cp).unwrap(), j);
        assert!(serde_json::from_str::<CountingProcess>(&j.replace("ratio", "ratios")).is_err());
        assert!(CountingProcess::deterministic(0.0)
            .unwrap()
            .validate()
            .is_err());
    }
}
