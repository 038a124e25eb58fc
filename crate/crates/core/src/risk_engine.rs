//! Multivariate risk model with constant interest force: discounted
//! aggregate claims, entrance and ruin probabilities, and the integral
//! asymptote against the renewal measure.
//!
//! Surplus of line `i`: `U_i(t) = l_i x + ∫₀^t p_i(y) e^{r(t−y)} dy − Σ X_i⁽ᵏ⁾ e^{r(t−τ_k)}`.
//! Ruin with respect to a cone `L` means `U(s) ∈ L` for some `s ≤ t`,
//! which is `D_r(s) − P_r(s) ∈ x(l − L)` in discounted units.

use serde::{Deserialize, Serialize};
use statrs::distribution::{DiscreteCDF, Poisson};

use crate::convolution_stopped_sums::MC_MAX_REL_SE;
use crate::error::{invalid, Error, Result};
use crate::large_deviations::{simulate_counting, CountingProcess, ARRIVAL_LIMIT, TAG_RANDOM_SUM};
use crate::mc::{
    derive_seed, ratio_with_stderr, Budget, Engine, Estimate, MeanEstimate, PathRng, RngStream,
    UniformSource,
};
use crate::quad::{integrate, integrate_with_breaks, Tolerance};
use crate::rare_sets::{RareSet, RuinSetKind};
use crate::report::{TrendReport, DEFAULT_LAST_K};
use crate::vector_laws::VectorLaw;

pub const TAG_LAMBDA_TABLE: u32 = 0x51;
pub const TAG_SINGLE: u32 = 0x52;
pub const TAG_A62: u32 = 0x53;
pub const TAG_WEIGHTED: u32 = 0x54;
pub const TAG_DELAYED: u32 = 0x55;

/// Points of the uniform grid on which `λ` is tabulated when no closed
/// form exists.
pub const LAMBDA_GRID: usize = 256;
/// Summability needs the extrapolated remainder below this share of the
/// partial sum.
pub const REMAINDER_SHARE: f64 = 0.01;
/// Terms used by the ratio test.
pub const RATIO_WINDOW: usize = 10;
/// Tolerance on the worst weighted-sum deviation at the top of the grid.
pub const WEIGHTED_TOL: f64 = 0.20;
pub const PREMIUM_GRID: usize = 64;

const QTOL: Tolerance = Tolerance {
    abs: 0.0,
    rel: 1e-10,
    max_intervals: 100_000,
};

/// Premium density `0 ≤ p(t) ≤ cap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Premium {
    pub cap: f64,
    #[serde(default)]
    pub shape: PremiumShape,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PremiumShape {
    /// `p(t) = cap`.
    #[default]
    Constant,
    /// `p(t) = cap` from `start` on, zero before.
    Step { start: f64 },
    /// `p(t) = cap·min(t/ramp, 1)`.
    Ramp { ramp: f64 },
}

impl Premium {
    pub fn constant(cap: f64) -> Self {
        Self {
            cap,
            shape: PremiumShape::Constant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cap >= 0.0 && self.cap.is_finite()) {
            return Err(invalid(format!(
                "premium cap must be finite and >= 0, got {}",
                self.cap
            )));
        }
        match self.shape {
            PremiumShape::Constant => Ok(()),
            PremiumShape::Step { start } if start >= 0.0 && start.is_finite() => Ok(()),
            PremiumShape::Ramp { ramp } if ramp > 0.0 && ramp.is_finite() => Ok(()),
            _ => Err(invalid("premium shape parameter out of range")),
        }
    }

    pub fn density(&self, t: f64) -> f64 {
        match self.shape {
            PremiumShape::Constant => self.cap,
            PremiumShape::Step { start } => {
                if t >= start {
                    self.cap
                } else {
                    0.0
                }
            }
            PremiumShape::Ramp { ramp } => self.cap * (t / ramp).min(1.0),
        }
    }

    /// `∫₀^s p(y) e^{−ry} dy` in closed form.
    pub fn discounted_integral(&self, r: f64, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        // ∫_a^b e^{−ry} dy
        let flat = |a: f64, b: f64| {
            if r == 0.0 {
                b - a
            } else {
                (-r * a).exp() * -(-r * (b - a)).exp_m1() / r
            }
        };
        match self.shape {
            PremiumShape::Constant => self.cap * flat(0.0, s),
            PremiumShape::Step { start } => {
                if s <= start {
                    0.0
                } else {
                    self.cap * flat(start, s)
                }
            }
            PremiumShape::Ramp { ramp } => {
                let u = s.min(ramp);
                // ∫₀^u y e^{−ry} dy
                let lin = if r == 0.0 {
                    0.5 * u * u
                } else {
                    let ru = r * u;
                    (-(-ru).exp_m1() - ru * (-ru).exp()) / (r * r)
                };
                let mut v = self.cap / ramp * lin;
                if s > ramp {
                    v += self.cap * flat(ramp, s);
                }
                v
            }
        }
    }

    fn kinks(&self) -> Vec<f64> {
        match self.shape {
            PremiumShape::Constant => vec![],
            PremiumShape::Step { start } => vec![start],
            PremiumShape::Ramp { ramp } => vec![ramp],
        }
    }
}

fn default_ruin() -> RuinSetKind {
    RuinSetKind::SumNegative
}

/// Model configuration. Claim vectors are i.i.d. from `claims` and
/// independent of the arrival process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskModel {
    pub allocation: Vec<f64>,
    pub premiums: Vec<Premium>,
    pub interest: f64,
    pub claims: VectorLaw,
    pub arrivals: CountingProcess,
    pub horizon: f64,
    #[serde(default = "default_ruin")]
    pub ruin: RuinSetKind,
}

impl RiskModel {
    /// Model with constant premium densities at the given caps.
    pub fn new(
        allocation: Vec<f64>,
        caps: &[f64],
        interest: f64,
        claims: VectorLaw,
        arrivals: CountingProcess,
        horizon: f64,
        ruin: RuinSetKind,
    ) -> Result<Self> {
        let m = Self {
            allocation,
            premiums: caps.iter().map(|&c| Premium::constant(c)).collect(),
            interest,
            claims,
            arrivals,
            horizon,
            ruin,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.allocation.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || self.allocation.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("allocation entries must be positive"));
        }
        let sum: f64 = self.allocation.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("allocation must sum to 1, got {sum}")));
        }
        if self.premiums.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.premiums.len(),
            });
        }
        self.premiums.iter().try_for_each(Premium::validate)?;
        if !(self.interest >= 0.0 && self.interest.is_finite()) {
            return Err(invalid(format!(
                "interest must be finite and >= 0, got {}",
                self.interest
            )));
        }
        self.claims.validate()?;
        if self.claims.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.claims.dim(),
            });
        }
        self.arrivals.validate()?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        Ok(())
    }

    /// `l − L` for the configured ruin set.
    pub fn ruin_set(&self) -> Result<RareSet> {
        RareSet::ruin_translate(&self.allocation, self.ruin)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(invalid(format!("t = {t} outside [0, {}]", self.horizon)));
        }
        Ok(())
    }

    fn check_set(&self, set: &RareSet) -> Result<()> {
        if set.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: set.dim(),
            });
        }
        Ok(())
    }

    /// `P_r(s) = (∫₀^s p_i(y) e^{−ry} dy)_i`.
    pub fn discounted_premiums(&self, s: f64, out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.premiums) {
            *o = p.discounted_integral(self.interest, s);
        }
    }

    fn discount(&self, tau: f64) -> f64 {
        if self.interest == 0.0 {
            1.0
        } else {
            (-self.interest * tau).exp()
        }
    }

    /// Walks the claims up to `t`: epochs from block 0, claim `i` from
    /// blocks `1 + i·k`, the layout of the random-sum statistic. Calls
    /// `visit(τ, D_r(τ))` after each claim.
    fn walk_claims(
        &self,
        t: f64,
        p: &mut PathRng,
        mut visit: impl FnMut(f64, &[f64]),
    ) -> Result<Vec<f64>> {
        let (_, epochs) = simulate_counting(&self.arrivals, t, p.block(0))?;
        let d = self.dim();
        let k = self.claims.blocks_per_draw();
        let mut s = vec![0.0; d];
        let mut c = vec![0.0; d];
        for (i, &tau) in epochs.iter().enumerate() {
            self.claims.sample_blocks(p, 1 + i * k, &mut c);
            let q = self.discount(tau);
            if q == 1.0 {
                s.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
            } else {
                s.iter_mut().zip(&c).for_each(|(a, b)| *a += q * b);
            }
            visit(tau, &s);
        }
        Ok(s)
    }

    fn first_arrival_impossible(&self, t: f64) -> bool {
        let first = match &self.arrivals {
            CountingProcess::Renewal { law } => law.cdf(t),
            CountingProcess::Cyclic { laws } => laws[0].cdf(t),
            CountingProcess::Scaled { base, ratio } => base.cdf(t / (1.0 + ratio)),
        };
        first == 0.0
    }
}

/// `D_r(t) = Σ_{k ≤ N(t)} X⁽ᵏ⁾ e^{−rτ_k}` on one path.
pub fn discounted_claims(model: &RiskModel, t: f64, path: &mut PathRng) -> Result<Vec<f64>> {
    model.check_time(t)?;
    model.walk_claims(t, path, |_, _| {})
}

/// `(max_k Y_A(D_r(τ_k) − P_r(τ_k)), Y_A(D_r(t)))` on one path. The ruin
/// component is `Y_A(−P_r(t))` when no claim arrives.
fn ruin_and_entrance(
    model: &RiskModel,
    set: &RareSet,
    t: f64,
    p: &mut PathRng,
) -> Result<(f64, f64)> {
    let d = model.dim();
    let mut prem = vec![0.0; d];
    model.discounted_premiums(t, &mut prem);
    let neg: Vec<f64> = prem.iter().map(|v| -v).collect();
    let mut worst = set.y(&neg);
    let mut z = vec![0.0; d];
    let total = model.walk_claims(t, p, |tau, s| {
        model.discounted_premiums(tau, &mut prem);
        z.iter_mut()
            .zip(s.iter().zip(&prem))
            .for_each(|(z, (s, q))| *z = s - q);
        worst = worst.max(set.y(&z));
    })?;
    Ok((worst, set.y(&total)))
}

fn entrance_stat<'a>(
    model: &'a RiskModel,
    set: &'a RareSet,
    t: f64,
) -> impl Fn(&mut PathRng) -> Result<f64> + Sync + 'a {
    move |p: &mut PathRng| Ok(set.y(&model.walk_claims(t, p, |_, _| {})?))
}

fn ruin_stat<'a>(
    model: &'a RiskModel,
    set: &'a RareSet,
    t: f64,
) -> impl Fn(&mut PathRng) -> Result<f64> + Sync + 'a {
    move |p: &mut PathRng| Ok(ruin_and_entrance(model, set, t, p)?.0)
}

/// `P[D_r(t) ∈ xA]`. With `r = 0` this reproduces
/// [`crate::large_deviations::random_sum_tail`] path by path.
pub fn entrance_probability(
    model: &RiskModel,
    set: &RareSet,
    x: f64,
    t: f64,
    engine: &Engine,
    budget: &Budget,
) -> Result<Estimate> {
    model.validate()?;
    model.check_time(t)?;
    model.check_set(set)?;
    if !(x > 0.0) {
        return Err(invalid(format!("x must be positive, got {x}")));
    }
    if model.first_arrival_impossible(t) {
        return Ok(Estimate::analytic(0.0));
    }
    engine.tail(TAG_RANDOM_SUM, x, budget, entrance_stat(model, set, t))
}

/// `ψ_{r,L}(x, t)`, the probability that the surplus enters the configured
/// ruin set by time `t`. The surplus only drops at claim epochs, so it is
/// inspected there.
pub fn ruin_probability(
    model: &RiskModel,
    x: f64,
    t: f64,
    engine: &Engine,
    budget: &Budget,
) -> Result<Estimate> {
    model.validate()?;
    model.check_time(t)?;
    if !(x > 0.0) {
        return Err(invalid(format!("x must be positive, got {x}")));
    }
    if model.first_arrival_impossible(t) {
        return Ok(Estimate::analytic(0.0));
    }
    let set = model.ruin_set()?;
    engine.tail(TAG_RANDOM_SUM, x, budget, ruin_stat(model, &set, t))
}

/// Path-by-path comparison of ruin and entrance into `x(l − L)` on the
/// shared streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuinCoupling {
    pub paths: u64,
    pub ruin_hits: u64,
    pub entrance_hits: u64,
    /// Paths ruined without entering `x(l − L)` at `t`.
    pub violations: u64,
}

impl RuinCoupling {
    pub fn holds(&self) -> bool {
        self.violations == 0 && self.ruin_hits <= self.entrance_hits
    }
}

pub fn ruin_entrance_coupling(
    model: &RiskModel,
    x: f64,
    t: f64,
    engine: &Engine,
    paths: u64,
) -> Result<RuinCoupling> {
    model.validate()?;
    model.check_time(t)?;
    let set = model.ruin_set()?;
    let (r, e, v) = engine.fold(
        TAG_RANDOM_SUM,
        paths,
        || (0u64, 0u64, 0u64),
        |acc, p| {
            let (yr, ye) = ruin_and_entrance(model, &set, t, p)?;
            let (hit_r, hit_e) = (yr > x, ye > x);
            acc.0 += hit_r as u64;
            acc.1 += hit_e as u64;
            acc.2 += (hit_r && !hit_e) as u64;
            Ok(())
        },
        |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2),
    )?;
    Ok(RuinCoupling {
        paths,
        ruin_hits: r,
        entrance_hits: e,
        violations: v,
    })
}

/// `x ↦ P[X ∈ xA]`, exact or from one sorted sample of `Y_A(X)`.
enum SingleTail<'a> {
    Exact(&'a VectorLaw, &'a RareSet),
    Empirical(Vec<f64>),
}

impl<'a> SingleTail<'a> {
    fn new(v: &'a VectorLaw, set: &'a RareSet, engine: &Engine, budget: &Budget) -> Result<Self> {
        if v.fa_tail_exact(set, 1.0)?.is_some() {
            return Ok(Self::Exact(v, set));
        }
        let d = v.dim();
        let mut ys = engine.fold(
            TAG_SINGLE,
            budget.paths,
            Vec::new,
            |acc, p| {
                let mut z = vec![0.0; d];
                v.sample_blocks(p, 0, &mut z);
                acc.push(set.y(&z));
                Ok(())
            },
            |mut a, b| {
                a.extend(b);
                a
            },
        )?;
        ys.sort_by(f64::total_cmp);
        Ok(Self::Empirical(ys))
    }

    fn is_exact(&self) -> bool {
        matches!(self, Self::Exact(..))
    }

    fn at(&self, x: f64) -> f64 {
        match self {
            Self::Exact(v, set) => v.fa_tail_exact(set, x).ok().flatten().unwrap_or(f64::NAN),
            Self::Empirical(ys) => {
                let below = ys.partition_point(|&y| y <= x);
                (ys.len() - below) as f64 / ys.len() as f64
            }
        }
    }
}

/// `λ(s_j)` on `LAMBDA_GRID` uniform points of `[0, t]` from one pass of
/// paths, so the table is non-decreasing.
pub fn lambda_table(
    cp: &CountingProcess,
    t: f64,
    engine: &Engine,
    budget: &Budget,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = LAMBDA_GRID;
    let grid: Vec<f64> = (0..m).map(|j| t * j as f64 / (m - 1) as f64).collect();
    let hist = engine.fold(
        TAG_LAMBDA_TABLE,
        budget.paths,
        || vec![0u64; m],
        |h, p| {
            let (_, epochs) = simulate_counting(cp, t, p.block(0))?;
            for tau in epochs {
                let j = grid.partition_point(|&s| s < tau).min(m - 1);
                h[j] += 1;
            }
            Ok(())
        },
        |mut a, b| {
            a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            a
        },
    )?;
    let n = budget.paths as f64;
    let mut acc = 0u64;
    let lam = hist
        .iter()
        .map(|h| {
            acc += h;
            acc as f64 / n
        })
        .collect();
    Ok((grid, lam))
}

/// `∫₀^t g(s) λ(ds)`.
fn lambda_integral<G: Fn(f64) -> f64>(
    cp: &CountingProcess,
    t: f64,
    g: G,
    smooth: bool,
    engine: &Engine,
    budget: &Budget,
) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    if cp.is_deterministic() {
        let mut dummy = RngStream::new(0, 0);
        let (_, epochs) = simulate_counting(cp, t, &mut dummy)?;
        return Ok(epochs.into_iter().map(&g).sum());
    }
    if let Some(rate) = cp.poisson_rate() {
        if smooth {
            return Ok(rate * integrate(&g, 0.0, t, QTOL)?.value);
        }
        let m = LAMBDA_GRID;
        let grid: Vec<f64> = (0..m).map(|j| t * j as f64 / (m - 1) as f64).collect();
        let lam: Vec<f64> = grid.iter().map(|s| rate * s).collect();
        return Ok(trapezoid(&grid, &lam, &g));
    }
    let (grid, lam) = lambda_table(cp, t, engine, budget)?;
    Ok(trapezoid(&grid, &lam, &g))
}

fn trapezoid(grid: &[f64], lam: &[f64], g: &impl Fn(f64) -> f64) -> f64 {
    let mut acc = lam[0] * g(grid[0]);
    for j in 1..grid.len() {
        acc += (lam[j] - lam[j - 1]) * 0.5 * (g(grid[j - 1]) + g(grid[j]));
    }
    acc
}

/// `∫₀^t P[X ∈ x e^{rs} A] λ(ds)`.
pub fn theorem61_asymptote(
    model: &RiskModel,
    set: &RareSet,
    x: f64,
    t: f64,
    engine: &Engine,
    budget: &Budget,
) -> Result<f64> {
    model.validate()?;
    model.check_time(t)?;
    model.check_set(set)?;
    if !(x > 0.0) {
        return Err(invalid(format!("x must be positive, got {x}")));
    }
    let tail = SingleTail::new(&model.claims, set, engine, budget)?;
    let r = model.interest;
    let g = |s: f64| tail.at(x * (r * s).exp());
    let v = lambda_integral(&model.arrivals, t, g, tail.is_exact(), engine, budget)?;
    if !v.is_finite() {
        return Err(Error::Quadrature("non-finite asymptote".into()));
    }
    Ok(v)
}

/// `μ(A) V̄(x) ∫₀^t e^{−αrs} λ(ds)` for regularly varying claims.
pub fn mrv_closed_form(
    model: &RiskModel,
    set: &RareSet,
    x: f64,
    t: f64,
    engine: &Engine,
    budget: &Budget,
) -> Result<f64> {
    model.check_time(t)?;
    let VectorLaw::Mrv { alpha, radial, .. } = &model.claims else {
        return Err(Error::KindMismatch { expected: "mrv" });
    };
    if *alpha <= 1.0 {
        return Err(Error::MeanNotFinite { alpha: *alpha });
    }
    let mu = model.claims.mu_a(set)?;
    let ar = alpha * model.interest;
    let weight = lambda_integral(
        &model.arrivals,
        t,
        |s| (-ar * s).exp(),
        true,
        engine,
        budget,
    )?;
    Ok(mu * radial.tail(x) * weight)
}

/// Arrival count after dropping the first inter-arrival time:
/// `N*(t) = sup{n : θ_2 + … + θ_{n+1} ≤ t}`.
#[derive(Debug, Clone, Copy)]
pub struct DelayedCounting<'a> {
    cp: &'a CountingProcess,
}

impl<'a> DelayedCounting<'a> {
    pub fn new(cp: &'a CountingProcess) -> Self {
        Self { cp }
    }

    /// `min(N*(t), cap)`.
    pub fn count_capped<R: UniformSource + ?Sized>(
        &self,
        t: f64,
        cap: usize,
        rng: &mut R,
    ) -> usize {
        let mut tau = 0.0;
        let mut n = 0;
        while n < cap {
            tau += self.cp.interarrival(n + 2, rng);
            if tau > t {
                break;
            }
            n += 1;
        }
        n
    }

    /// `λ*(t) = E[N*(t)]`.
    pub fn lambda_star(&self, t: f64, engine: &Engine, budget: &Budget) -> Result<MeanEstimate> {
        if let Some(rate) = self.cp.poisson_rate() {
            return Ok(MeanEstimate::analytic(rate * t));
        }
        let m = engine.mean(TAG_DELAYED, budget.paths, |p| {
            let n = self.count_capped(t, ARRIVAL_LIMIT + 1, p.block(0));
            if n > ARRIVAL_LIMIT {
                return Err(Error::ArrivalOverflow {
                    limit: ARRIVAL_LIMIT as u64,
                });
            }
            Ok(n as f64)
        })?;
        Ok(MeanEstimate::from_moments(&m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Summability {
    Summable,
    NotSummable,
}

/// Truncated summability check of `Σ_n P[N*(t) ≥ n − 1] / P[X ∈ cnA]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assumption62 {
    pub c: f64,
    pub t_star: f64,
    pub n_cap: usize,
    /// `"exact"` or `"histogram"`.
    pub numerator: String,
    /// Terms for `n = 1 ..= n_cap`.
    pub terms: Vec<f64>,
    pub partial_sum: f64,
    pub ratio: f64,
    pub remainder: f64,
    /// Histogram partial sums from `P[N*(t) ≥ n − 1]` and from
    /// `P[θ_2 + … + θ_n ≤ t]`.
    pub partial_sum_count: f64,
    pub partial_sum_epochs: f64,
    /// Largest term-wise gap between the two histogram forms.
    pub max_term_gap: f64,
    pub verdict: Summability,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Checks the summability condition at `t_star` (the numerator grows in
/// `t`, so this covers `[0, t_star]`). `c` defaults to `μ_{F_A} + 1`.
pub fn check_assumption_62(
    model: &RiskModel,
    set: &RareSet,
    c: Option<f64>,
    t_star: f64,
    n_cap: usize,
    engine: &Engine,
    budget: &Budget,
) -> Result<Assumption62> {
    model.validate()?;
    model.check_set(set)?;
    if !(t_star > 0.0 && t_star.is_finite()) {
        return Err(invalid(format!("t_star must be positive, got {t_star}")));
    }
    if n_cap < RATIO_WINDOW + 2 {
        return Err(invalid(format!(
            "n_cap must be at least {}",
            RATIO_WINDOW + 2
        )));
    }
    let mean = model.claims.fa_mean(set, engine, budget)?.value;
    let c = c.unwrap_or(mean + 1.0);
    if !(c > mean) {
        return Err(Error::ViolatesKesten { c, mean });
    }
    let tail = SingleTail::new(&model.claims, set, engine, budget)?;
    let den: Vec<f64> = (1..=n_cap).map(|n| tail.at(c * n as f64)).collect();

    let cp = &model.arrivals;
    let delayed = DelayedCounting::new(cp);
    // hist[m]: paths with min(N*, n_cap − 1) = m; hits[n − 1]: paths with
    // θ_2 + … + θ_n ≤ t.
    let (hist, hits) = engine.fold(
        TAG_A62,
        budget.paths,
        || (vec![0u64; n_cap], vec![0u64; n_cap]),
        |(hist, hits), p| {
            // θ_2, θ_3, … until the running sum passes t or n_cap − 1 are drawn
            let mut theta = Vec::new();
            let mut run = 0.0;
            while theta.len() < n_cap - 1 && run <= t_star {
                let th = cp.interarrival(theta.len() + 2, p.block(0));
                run += th;
                theta.push(th);
            }
            let mut m = 0;
            let mut tau = 0.0;
            for th in &theta {
                tau += th;
                if tau > t_star {
                    break;
                }
                m += 1;
            }
            hist[m] += 1;
            hits[0] += 1;
            for n in 2..=theta.len() + 1 {
                let s: f64 = theta[..n - 1].iter().sum();
                if s <= t_star {
                    hits[n - 1] += 1;
                }
            }
            Ok(())
        },
        |mut a, b| {
            a.0.iter_mut().zip(&b.0).for_each(|(x, y)| *x += y);
            a.1.iter_mut().zip(&b.1).for_each(|(x, y)| *x += y);
            a
        },
    )?;
    let paths = budget.paths as f64;
    let mut suffix = vec![0u64; n_cap + 1];
    for m in (0..n_cap).rev() {
        suffix[m] = suffix[m + 1] + hist[m];
    }
    // P[N* ≥ n − 1] for n = 1 ..= n_cap
    let num_count: Vec<f64> = (1..=n_cap).map(|n| suffix[n - 1] as f64 / paths).collect();
    let num_epochs: Vec<f64> = hits.iter().map(|&h| h as f64 / paths).collect();
    let sum_over = |num: &[f64]| num.iter().zip(&den).map(|(a, b)| a / b).sum::<f64>();
    let partial_sum_count = sum_over(&num_count);
    let partial_sum_epochs = sum_over(&num_epochs);
    let max_term_gap = num_count
        .iter()
        .zip(&num_epochs)
        .zip(&den)
        .map(|((a, b), d)| (a / d - b / d).abs())
        .fold(0.0, f64::max);

    let (numerator, num) = if let Some(rate) = cp.poisson_rate() {
        let pois = Poisson::new(rate * t_star).map_err(|e| invalid(e.to_string()))?;
        let v = (1..=n_cap)
            .map(|n| if n < 2 { 1.0 } else { pois.sf(n as u64 - 2) })
            .collect();
        ("exact", v)
    } else if cp.is_deterministic() {
        let mut dummy = RngStream::new(0, 0);
        let m = delayed.count_capped(t_star, n_cap - 1, &mut dummy);
        (
            "exact",
            (1..=n_cap)
                .map(|n| if n - 1 <= m { 1.0 } else { 0.0 })
                .collect(),
        )
    } else {
        ("histogram", num_count.clone())
    };
    let terms: Vec<f64> = num
        .iter()
        .zip(&den)
        .map(|(a, b)| if *a == 0.0 { 0.0 } else { a / b })
        .collect();
    let partial_sum: f64 = terms.iter().sum();

    let mut notes = Vec::new();
    let last = terms.iter().rposition(|&a| a > 0.0).unwrap_or(0);
    if last + 1 < n_cap {
        notes.push(format!("numerator vanishes beyond n = {}", last + 1));
    }
    let lo = (last + 1).saturating_sub(RATIO_WINDOW);
    let window = &terms[lo..=last];
    let ratio = window
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max);
    let remainder = if !partial_sum.is_finite() || !(ratio < 1.0) {
        f64::INFINITY
    } else {
        terms[last] * ratio / (1.0 - ratio)
    };
    let verdict = if ratio < 1.0 && remainder < REMAINDER_SHARE * partial_sum {
        Summability::Summable
    } else {
        Summability::NotSummable
    };
    Ok(Assumption62 {
        c,
        t_star,
        n_cap,
        numerator: numerator.into(),
        terms,
        partial_sum,
        ratio,
        remainder,
        partial_sum_count,
        partial_sum_epochs,
        max_term_gap,
        verdict,
        notes,
    })
}

/// One coefficient vector against the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedCell {
    pub draw: usize,
    pub x: f64,
    pub joint: Estimate,
    pub singles: f64,
    pub ratio: f64,
    pub ratio_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedUniformity {
    pub coefficients: Vec<Vec<f64>>,
    pub cells: Vec<WeightedCell>,
    /// Worst cell per grid point.
    pub trend: TrendReport,
}

/// Ratios `P[Σ c_i X⁽ⁱ⁾ ∈ xA] / Σ P[c_i X ∈ xA]` for the corners `c ≡ a`,
/// `c ≡ b` and `c_samples` uniform draws from `[a, b]ⁿ`. Every vector uses
/// the same claim streams.
#[allow(clippy::too_many_arguments)]
pub fn weighted_sum_uniformity(
    v: &VectorLaw,
    set: &RareSet,
    n: usize,
    a: f64,
    b: f64,
    c_samples: usize,
    x_grid: &[f64],
    engine: &Engine,
    budget: &Budget,
) -> Result<WeightedUniformity> {
    if !(a > 0.0 && a <= b && b.is_finite()) {
        return Err(invalid(format!("need 0 < a <= b < inf, got [{a}, {b}]")));
    }
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    if set.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: v.dim(),
            got: set.dim(),
        });
    }
    if x_grid.is_empty() || x_grid.iter().any(|x| !(*x > 0.0)) {
        return Err(invalid("x grid must be non-empty and positive"));
    }
    let mut coefficients = vec![vec![a; n], vec![b; n]];
    let mut rng = RngStream::new(derive_seed(engine.seed(), TAG_WEIGHTED as u64), 0);
    for _ in 0..c_samples {
        coefficients.push((0..n).map(|_| a + (b - a) * rng.uniform()).collect());
    }
    let d = v.dim();
    let k = v.blocks_per_draw();
    let mut cells = Vec::new();
    for (j, c) in coefficients.iter().enumerate() {
        for &x in x_grid {
            let mut singles = Estimate::analytic(0.0);
            let (mut sv, mut sse) = (0.0, 0.0);
            for &ci in c {
                let e = v.fa_tail(set, x / ci, engine, budget)?;
                sv += e.value;
                sse += e.stderr * e.stderr;
            }
            singles.value = sv;
            singles.stderr = sse.sqrt();
            let (joint, ratio, se) = if n == 1 {
                (singles, 1.0, 0.0)
            } else {
                let stat = |p: &mut PathRng| {
                    let mut s = vec![0.0; d];
                    let mut z = vec![0.0; d];
                    for (i, ci) in c.iter().enumerate() {
                        v.sample_blocks(p, i * k, &mut z);
                        s.iter_mut().zip(&z).for_each(|(s, z)| *s += ci * z);
                    }
                    Ok(set.y(&s))
                };
                let joint = engine.tail(TAG_WEIGHTED, x, budget, stat)?;
                let (r, se) = ratio_with_stderr(&joint, &singles);
                (joint, r, se)
            };
            cells.push(WeightedCell {
                draw: j,
                x,
                joint,
                singles: sv,
                ratio,
                ratio_stderr: se,
            });
        }
    }
    let mut worst = Vec::new();
    let mut worst_se = Vec::new();
    for &x in x_grid {
        let pick = cells
            .iter()
            .filter(|c| c.x == x)
            .max_by(|p, q| {
                let dp = if p.ratio.is_finite() {
                    (p.ratio - 1.0).abs()
                } else {
                    f64::INFINITY
                };
                let dq = if q.ratio.is_finite() {
                    (q.ratio - 1.0).abs()
                } else {
                    f64::INFINITY
                };
                dp.total_cmp(&dq)
            })
            .expect("grid point has cells");
        worst.push(pick.ratio);
        worst_se.push(pick.ratio_stderr);
    }
    let k_last = DEFAULT_LAST_K.min(x_grid.len());
    let trend = TrendReport::statistical(
        x_grid.to_vec(),
        worst,
        worst_se,
        1.0,
        WEIGHTED_TOL,
        k_last,
        MC_MAX_REL_SE,
    );
    Ok(WeightedUniformity {
        coefficients,
        cells,
        trend,
    })
}

/// Per-premium result of the discounted-income bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiumBound {
    pub cap: f64,
    /// Largest quadrature value of `∫₀^t p(y) e^{−ry} dy` on the grid.
    pub max_integral: f64,
    /// `cap · T`.
    pub bound: f64,
    /// Largest gap between quadrature and closed form.
    pub max_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiumCheck {
    pub premiums: Vec<PremiumBound>,
    pub holds: bool,
}

/// Checks `∫₀^t p_i(y) e^{−ry} dy ≤ Λ_i T` on `PREMIUM_GRID` points of
/// `[0, T]` by quadrature.
pub fn premium_bound_check(model: &RiskModel) -> Result<PremiumCheck> {
    model.validate()?;
    let r = model.interest;
    let big_t = model.horizon;
    let mut out = Vec::new();
    let mut holds = true;
    for p in &model.premiums {
        let mut max_integral: f64 = 0.0;
        let mut max_gap: f64 = 0.0;
        for j in 1..=PREMIUM_GRID {
            let t = big_t * j as f64 / PREMIUM_GRID as f64;
            let mut pts = vec![0.0];
            pts.extend(p.kinks().into_iter().filter(|&k| k > 0.0 && k < t));
            pts.push(t);
            let q = integrate_with_breaks(
                |y| p.density(y) * (-r * y).exp(),
                &pts,
                Tolerance::default(),
            )?
            .value;
            max_integral = max_integral.max(q);
            max_gap = max_gap.max((q - p.discounted_integral(r, t)).abs());
        }
        let bound = p.cap * big_t;
        holds &= max_integral <= bound * (1.0 + 1e-12) + 1e-15;
        out.push(PremiumBound {
            cap: p.cap,
            max_integral,
            bound,
            max_gap,
        });
    }
    Ok(PremiumCheck {
        premiums: out,
        holds,
    })
}

/// `Y_A` threshold `x` at which the asymptote equals `target`, by bisection
/// on `log x` over `[lo, hi]`.
pub fn calibrate_x(
    model: &RiskModel,
    set: &RareSet,
    t: f64,
    target: f64,
    (lo, hi): (f64, f64),
    engine: &Engine,
    budget: &Budget,
) -> Result<f64> {
    if !(target > 0.0 && target < 1.0 && lo > 0.0 && lo < hi) {
        return Err(invalid("calibration needs 0 < target < 1 and 0 < lo < hi"));
    }
    let f = |x: f64| theorem61_asymptote(model, set, x, t, engine, budget).map(|v| v - target);
    let (mut a, mut b) = (lo.ln(), hi.ln());
    if f(lo)? < 0.0 || f(hi)? > 0.0 {
        return Err(invalid("calibration bracket does not straddle the target"));
    }
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if f(m.exp())? > 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-10 {
            break;
        }
    }
    Ok((0.5 * (a + b)).exp())
}
