//! Claim-vector laws and the induced projection laws `F_A`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mc::{Budget, Engine, Estimate, MeanEstimate, PathRng, UniformSource};
use crate::quad::{
    geometric_breaks, integrate_to_inf_with_breaks, integrate_with_breaks, Tolerance,
};
use crate::rare_sets::RareSet;
use crate::scalar_laws::ScalarLaw;

pub const TAG_FA_TAIL: u32 = 0x21;
pub const TAG_FA_MEAN: u32 = 0x22;
pub const TAG_LWQD: u32 = 0x23;
pub const TAG_SAMPLE: u32 = 0x24;

const QTOL: Tolerance = Tolerance {
    abs: 0.0,
    rel: 1e-10,
    max_intervals: 200_000,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorLaw {
    Independent {
        marginals: Vec<ScalarLaw>,
    },
    /// Common shock: `X_i = Z_i + θ·S` with `Z_i` i.i.d. from `common`.
    Lwqd {
        dim: usize,
        common: ScalarLaw,
        shock_weight: f64,
    },
    /// `X = R·Θ` with `Θ` on the axes and, if `angular_weights` has
    /// `dim + 1` entries, the diagonal `(1, …, 1)/√d`.
    Mrv {
        dim: usize,
        alpha: f64,
        radial: ScalarLaw,
        angular_weights: Vec<f64>,
    },
}

impl VectorLaw {
    pub fn independent(marginals: Vec<ScalarLaw>) -> Result<Self> {
        let v = Self::Independent { marginals };
        v.validate()?;
        Ok(v)
    }

    pub fn iid(law: ScalarLaw, dim: usize) -> Result<Self> {
        Self::independent(vec![law; dim])
    }

    pub fn lwqd(common: ScalarLaw, dim: usize, shock_weight: f64) -> Result<Self> {
        let v = Self::Lwqd {
            dim,
            common,
            shock_weight,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn mrv(
        alpha: f64,
        radial: ScalarLaw,
        dim: usize,
        angular_weights: Vec<f64>,
    ) -> Result<Self> {
        let v = Self::Mrv {
            dim,
            alpha,
            radial,
            angular_weights,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(invalid("vector law needs dim >= 1"));
        }
        match self {
            Self::Independent { marginals } => marginals.iter().try_for_each(|m| m.validate()),
            Self::Lwqd {
                common,
                shock_weight,
                ..
            } => {
                common.validate()?;
                if !(0.0..1.0).contains(shock_weight) {
                    return Err(invalid(format!(
                        "shock_weight must lie in [0, 1), got {shock_weight}"
                    )));
                }
                Ok(())
            }
            Self::Mrv {
                dim,
                alpha,
                radial,
                angular_weights,
            } => {
                radial.validate()?;
                if !(*alpha > 0.0 && alpha.is_finite()) {
                    return Err(invalid(format!("alpha must be positive, got {alpha}")));
                }
                match radial.tail_index() {
                    Some(a) if (a - alpha).abs() <= 1e-12 * alpha => {}
                    Some(a) => {
                        return Err(invalid(format!(
                            "radial tail index {a} differs from alpha {alpha}"
                        )))
                    }
                    None => return Err(invalid("radial law must be regularly varying")),
                }
                let n = angular_weights.len();
                if n != *dim && n != dim + 1 {
                    return Err(Error::DimensionMismatch {
                        expected: *dim,
                        got: n,
                    });
                }
                if angular_weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(invalid("angular weights must be nonnegative"));
                }
                let s: f64 = angular_weights.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(invalid(format!("angular weights must sum to 1, got {s}")));
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Independent { marginals } => marginals.len(),
            Self::Lwqd { dim, .. } | Self::Mrv { dim, .. } => *dim,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Independent { marginals } => {
                if marginals.windows(2).all(|w| w[0] == w[1]) {
                    format!("{}^{}", marginals[0].label(), marginals.len())
                } else {
                    let parts: Vec<String> = marginals.iter().map(|m| m.label()).collect();
                    parts.join(" x ")
                }
            }
            Self::Lwqd {
                dim,
                common,
                shock_weight,
            } => {
                format!("Lwqd({}, d={dim}, theta={shock_weight})", common.label())
            }
            Self::Mrv { dim, alpha, .. } => format!("Mrv(alpha={alpha}, d={dim})"),
        }
    }

    /// Law of the common shock `S` of the Lwqd kind.
    pub fn shock_law(common: &ScalarLaw) -> ScalarLaw {
        match *common {
            ScalarLaw::Pareto { alpha, xm } => ScalarLaw::Pareto {
                alpha: alpha + 1.0,
                xm,
            },
            other => other,
        }
    }

    /// Directions of the angular measure with their weights.
    pub fn angular_atoms(&self) -> Result<Vec<(Vec<f64>, f64)>> {
        let Self::Mrv {
            dim,
            angular_weights,
            ..
        } = self
        else {
            return Err(Error::KindMismatch { expected: "mrv" });
        };
        let d = *dim;
        let mut out = Vec::with_capacity(angular_weights.len());
        for (j, &w) in angular_weights.iter().enumerate() {
            let dir = if j < d {
                let mut e = vec![0.0; d];
                e[j] = 1.0;
                e
            } else {
                vec![1.0 / (d as f64).sqrt(); d]
            };
            out.push((dir, w));
        }
        Ok(out)
    }

    /// Number of path blocks one draw reads in [`Self::sample_blocks`].
    pub fn blocks_per_draw(&self) -> usize {
        match self {
            Self::Independent { marginals } => marginals.len(),
            Self::Lwqd { dim, .. } => dim + 1,
            Self::Mrv { .. } => 2,
        }
    }

    /// One draw from a single uniform stream.
    pub fn sample_into<R: UniformSource + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Self::Independent { marginals } => {
                for (o, m) in out.iter_mut().zip(marginals) {
                    *o = m.sample(rng);
                }
            }
            Self::Lwqd {
                common,
                shock_weight,
                ..
            } => {
                for o in out.iter_mut() {
                    *o = common.sample(rng);
                }
                let s = Self::shock_law(common).sample(rng);
                if *shock_weight > 0.0 {
                    out.iter_mut().for_each(|o| *o += shock_weight * s);
                }
            }
            Self::Mrv { radial, .. } => {
                let r = radial.sample(rng);
                let u = rng.uniform();
                self.place_mrv(r, u, out);
            }
        }
    }

    pub fn sample<R: UniformSource + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.sample_into(rng, &mut v);
        v
    }

    /// One draw whose component sources are the blocks
    /// `first .. first + blocks_per_draw()`, so a splitting move on one
    /// block perturbs one source only.
    pub fn sample_blocks(&self, path: &mut PathRng, first: usize, out: &mut [f64]) {
        match self {
            Self::Independent { marginals } => {
                for (i, (o, m)) in out.iter_mut().zip(marginals).enumerate() {
                    *o = m.sample(path.block(first + i));
                }
            }
            Self::Lwqd {
                dim,
                common,
                shock_weight,
            } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = common.sample(path.block(first + i));
                }
                let s = Self::shock_law(common).sample(path.block(first + dim));
                if *shock_weight > 0.0 {
                    out.iter_mut().for_each(|o| *o += shock_weight * s);
                }
            }
            Self::Mrv { radial, .. } => {
                let r = radial.sample(path.block(first));
                let u = path.block(first + 1).uniform();
                self.place_mrv(r, u, out);
            }
        }
    }

    fn place_mrv(&self, r: f64, u: f64, out: &mut [f64]) {
        let Self::Mrv {
            dim,
            angular_weights,
            ..
        } = self
        else {
            unreachable!()
        };
        let mut acc = 0.0;
        let mut pick = angular_weights.len() - 1;
        for (j, w) in angular_weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = j;
                break;
            }
        }
        if pick < *dim {
            out.iter_mut().for_each(|o| *o = 0.0);
            out[pick] = r;
        } else {
            let c = r / (*dim as f64).sqrt();
            out.iter_mut().for_each(|o| *o = c);
        }
    }

    /// `P[X_i > x]`.
    pub fn marginal_tail(&self, i: usize, x: f64) -> Result<f64> {
        let d = self.dim();
        if i >= d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: i + 1,
            });
        }
        match self {
            Self::Independent { marginals } => Ok(marginals[i].tail(x)),
            Self::Mrv {
                dim,
                radial,
                angular_weights,
                ..
            } => {
                let mut p = angular_weights[i] * radial.tail(x);
                if angular_weights.len() > *dim {
                    p += angular_weights[*dim] * radial.tail(x * (*dim as f64).sqrt());
                }
                Ok(p)
            }
            Self::Lwqd {
                common,
                shock_weight,
                ..
            } => shifted_tail(common, &Self::shock_law(common), *shock_weight, x),
        }
    }

    /// `E[X_i]`.
    pub fn marginal_mean(&self, i: usize) -> Result<f64> {
        match self {
            Self::Independent { marginals } => marginals
                .get(i)
                .ok_or(Error::DimensionMismatch {
                    expected: marginals.len(),
                    got: i + 1,
                })?
                .mean(),
            Self::Lwqd {
                common,
                shock_weight,
                ..
            } => {
                let mut m = common.mean()?;
                if *shock_weight > 0.0 {
                    m += shock_weight * Self::shock_law(common).mean()?;
                }
                Ok(m)
            }
            Self::Mrv { radial, .. } => {
                let er = radial.mean()?;
                Ok(er
                    * self
                        .angular_atoms()?
                        .iter()
                        .map(|(dir, w)| w * dir[i])
                        .sum::<f64>())
            }
        }
    }

    /// `μ(A) = Σ_j w_j · Y_A(θ_j)^α`, the limit of `P[X ∈ xA]/P[R > x]`.
    pub fn mu_a(&self, set: &RareSet) -> Result<f64> {
        let Self::Mrv { alpha, .. } = self else {
            return Err(Error::KindMismatch { expected: "mrv" });
        };
        self.check_set(set)?;
        let mut mu = 0.0;
        for (dir, w) in self.angular_atoms()? {
            let t = set.entry_scale(&dir)?;
            if t.is_finite() && w > 0.0 {
                mu += w * t.powf(-alpha);
            }
        }
        Ok(mu)
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

    /// Closed form or quadrature for `P[Y_A(X) > x]` when one exists.
    pub fn fa_tail_exact(&self, set: &RareSet, x: f64) -> Result<Option<f64>> {
        self.check_set(set)?;
        if !(x > 0.0) {
            return Err(invalid(format!("x must be positive, got {x}")));
        }
        match self {
            Self::Mrv { radial, .. } => {
                let mut p = 0.0;
                for (dir, w) in self.angular_atoms()? {
                    let y = set.y(&dir);
                    if y > 0.0 && w > 0.0 {
                        p += w * radial.tail(x / y);
                    }
                }
                Ok(Some(p))
            }
            Self::Independent { marginals } => {
                if let Some(b) = set.axis_thresholds() {
                    let keep: f64 = marginals
                        .iter()
                        .zip(&b)
                        .filter(|(_, b)| b.is_finite())
                        .map(|(m, b)| 1.0 - m.tail(b * x))
                        .product();
                    return Ok(Some(1.0 - keep));
                }
                match set.linear_weights() {
                    Some(l) => linear_independent_tail(marginals, l, x),
                    None => Ok(None),
                }
            }
            Self::Lwqd { .. } => Ok(None),
        }
    }

    /// The `x` with `P[X ∈ xA] = p`, by bisection on `log x` over
    /// `[1e-6, 1e12]`. `None` when the tail has no closed form.
    pub fn fa_tail_inverse(&self, set: &RareSet, p: f64) -> Result<Option<f64>> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid(format!(
                "target probability must lie in (0, 1), got {p}"
            )));
        }
        let (mut lo, mut hi) = (1e-6f64.ln(), 1e12f64.ln());
        let Some(top) = self.fa_tail_exact(set, hi.exp())? else {
            return Ok(None);
        };
        if top > p || self.fa_tail_exact(set, lo.exp())?.unwrap_or(1.0) < p {
            return Err(invalid(format!(
                "target {p} is outside the bracketed tail range"
            )));
        }
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if self.fa_tail_exact(set, m.exp())?.unwrap_or(0.0) > p {
                lo = m;
            } else {
                hi = m;
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        Ok(Some((0.5 * (lo + hi)).exp()))
    }

    /// `P[X ∈ xA]`: exact when available, otherwise simulated with the
    /// estimator chosen by `budget`.
    pub fn fa_tail(
        &self,
        set: &RareSet,
        x: f64,
        engine: &Engine,
        budget: &Budget,
    ) -> Result<Estimate> {
        match self.fa_tail_exact(set, x)? {
            Some(p) => Ok(Estimate::analytic(p)),
            None => self.fa_tail_simulated(set, x, engine, budget),
        }
    }

    /// Simulated `P[X ∈ xA]`, ignoring any closed form.
    pub fn fa_tail_simulated(
        &self,
        set: &RareSet,
        x: f64,
        engine: &Engine,
        budget: &Budget,
    ) -> Result<Estimate> {
        self.check_set(set)?;
        if !(x > 0.0) {
            return Err(invalid(format!("x must be positive, got {x}")));
        }
        let d = self.dim();
        engine.tail(TAG_FA_TAIL, x, budget, |p| {
            let mut v = vec![0.0; d];
            self.sample_blocks(p, 0, &mut v);
            Ok(set.y(&v))
        })
    }

    /// `μ_{F_A} = E[Y_A(X)]`.
    pub fn fa_mean(&self, set: &RareSet, engine: &Engine, budget: &Budget) -> Result<MeanEstimate> {
        self.check_set(set)?;
        let d = self.dim();
        if let Some(l) = set.linear_weights() {
            let mut m = 0.0;
            for (i, &w) in l.iter().enumerate() {
                if w != 0.0 {
                    m += w * self.marginal_mean(i)?;
                }
            }
            return Ok(MeanEstimate::analytic(m));
        }
        if let Self::Mrv { radial, .. } = self {
            let er = radial.mean()?;
            let s: f64 = self
                .angular_atoms()?
                .iter()
                .map(|(dir, w)| w * set.y(dir))
                .sum();
            return Ok(MeanEstimate::analytic(er * s));
        }
        for i in 0..d {
            self.marginal_mean(i)?;
        }
        if let (Self::Independent { marginals }, Some(b)) = (self, set.axis_thresholds()) {
            if set.directions().iter().flatten().all(|v| *v >= 0.0) {
                let tail = |y: f64| {
                    1.0 - marginals
                        .iter()
                        .zip(&b)
                        .filter(|(_, b)| b.is_finite())
                        .map(|(m, b)| 1.0 - m.tail(b * y))
                        .product::<f64>()
                };
                let mut breaks: Vec<f64> = marginals
                    .iter()
                    .zip(&b)
                    .filter(|(_, b)| b.is_finite())
                    .map(|(m, b)| m.support_min() / b)
                    .collect();
                breaks.sort_by(f64::total_cmp);
                let v = integrate_to_inf_with_breaks(tail, 0.0, &breaks, QTOL)?.value;
                return Ok(MeanEstimate::analytic(v));
            }
        }
        let m = engine.mean(TAG_FA_MEAN, budget.paths, |p| {
            let mut v = vec![0.0; d];
            self.sample_blocks(p, 0, &mut v);
            Ok(set.y(&v))
        })?;
        Ok(MeanEstimate::from_moments(&m))
    }

    /// Empirical conditional-ratio table
    /// `P[Σ_{j<n} X_j > x | X_n > y] / P[Σ_{j<n} X_j > x]` over `xs × ys`.
    pub fn lwqd_ratios(
        &self,
        n: usize,
        xs: &[f64],
        ys: &[f64],
        engine: &Engine,
        paths: u64,
    ) -> Result<LwqdTable> {
        let d = self.dim();
        if !(2..=d).contains(&n) {
            return Err(invalid(format!("n must lie in 2..={d}, got {n}")));
        }
        let (nx, ny) = (xs.len(), ys.len());
        // Counts: [sum > x] per x, [X_n > y] per y, joint per (x, y).
        let counts = engine.fold(
            TAG_LWQD,
            paths,
            || vec![0u64; nx + ny + nx * ny],
            |c, p| {
                let mut v = vec![0.0; d];
                self.sample_blocks(p, 0, &mut v);
                let s: f64 = v[..n - 1].iter().sum();
                let xn = v[n - 1];
                for (a, &x) in xs.iter().enumerate() {
                    if s > x {
                        c[a] += 1;
                        for (b, &y) in ys.iter().enumerate() {
                            if xn > y {
                                c[nx + ny + a * ny + b] += 1;
                            }
                        }
                    }
                }
                for (b, &y) in ys.iter().enumerate() {
                    if xn > y {
                        c[nx + b] += 1;
                    }
                }
                Ok(())
            },
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )?;
        let nf = paths as f64;
        let mut cells = Vec::with_capacity(nx * ny);
        for (a, &x) in xs.iter().enumerate() {
            for (b, &y) in ys.iter().enumerate() {
                let cs = counts[a] as f64;
                let cy = counts[nx + b] as f64;
                let cj = counts[nx + ny + a * ny + b] as f64;
                let ratio = if cs > 0.0 && cy > 0.0 {
                    cj * nf / (cs * cy)
                } else {
                    f64::NAN
                };
                // Delta method on log counts.
                let rel = if cj > 0.0 {
                    (1.0 / cj + 1.0 / cs.max(1.0) + 1.0 / cy.max(1.0)).sqrt()
                } else {
                    f64::INFINITY
                };
                cells.push(LwqdCell {
                    x,
                    y,
                    ratio,
                    stderr: ratio.abs() * rel,
                    joint_hits: cj as u64,
                });
            }
        }
        let g_hat = cells
            .iter()
            .filter(|c| c.joint_hits >= LwqdTable::MIN_JOINT_HITS)
            .map(|c| c.ratio)
            .fold(f64::NAN, f64::max);
        Ok(LwqdTable { n, cells, g_hat })
    }
}

/// The law `F_A` of `Y_A(X)` with its mean cached.
#[derive(Debug, Clone, PartialEq)]
pub struct FaLaw {
    pub parent: VectorLaw,
    pub set: RareSet,
    pub mean: MeanEstimate,
}

impl FaLaw {
    pub fn new(parent: VectorLaw, set: RareSet, engine: &Engine, budget: &Budget) -> Result<Self> {
        let mean = parent.fa_mean(&set, engine, budget)?;
        if !(mean.value > 0.0 && mean.value.is_finite()) {
            return Err(invalid(format!(
                "mean of F_A must lie in (0, inf), got {}",
                mean.value
            )));
        }
        Ok(Self { parent, set, mean })
    }

    pub fn tail(&self, x: f64, engine: &Engine, budget: &Budget) -> Result<Estimate> {
        self.parent.fa_tail(&self.set, x, engine, budget)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LwqdCell {
    pub x: f64,
    pub y: f64,
    pub ratio: f64,
    pub stderr: f64,
    pub joint_hits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LwqdTable {
    pub n: usize,
    pub cells: Vec<LwqdCell>,
    /// Largest ratio over cells with at least `MIN_JOINT_HITS` joint hits.
    pub g_hat: f64,
}

impl LwqdTable {
    pub const MIN_JOINT_HITS: u64 = 30;
}

/// `P[Z + θS > x]` for independent `Z`, `S`.
fn shifted_tail(z: &ScalarLaw, s: &ScalarLaw, theta: f64, x: f64) -> Result<f64> {
    if theta == 0.0 {
        return Ok(z.tail(x));
    }
    if let ScalarLaw::Degenerate { value } = *s {
        return Ok(z.tail(x - theta * value));
    }
    if s.density(0.0).is_none() {
        return Err(Error::Precondition(format!(
            "no marginal quadrature for shock {}",
            s.label()
        )));
    }
    let top = x / theta;
    let lo = s.support_min();
    if top <= lo {
        // θS ≥ x already and Z > 0 almost surely.
        return Ok(1.0);
    }
    let kinks = [(x - z.support_min()) / theta];
    let pts = geometric_breaks(lo, top, &kinks);
    let body = integrate_with_breaks(
        |v| s.density(v).unwrap_or(0.0) * z.tail(x - theta * v),
        &pts,
        QTOL,
    )?
    .value;
    Ok(s.tail(top) + body)
}

/// `P[Σ l_i X_i > x]` for independent marginals, when at most two
/// non-degenerate components carry weight.
fn linear_independent_tail(marginals: &[ScalarLaw], l: &[f64], x: f64) -> Result<Option<f64>> {
    let mut level = x;
    let mut live: Vec<(f64, &ScalarLaw)> = Vec::new();
    for (m, &w) in marginals.iter().zip(l) {
        if w == 0.0 {
            continue;
        }
        match *m {
            ScalarLaw::Degenerate { value } => level -= w * value,
            _ if w < 0.0 => return Ok(None),
            _ => live.push((w, m)),
        }
    }
    match live.as_slice() {
        [] => Ok(Some(if level < 0.0 { 1.0 } else { 0.0 })),
        [(w, m)] => Ok(Some(if level < 0.0 { 1.0 } else { m.tail(level / w) })),
        [(a, f), (b, g)] => {
            if level <= 0.0 {
                return Ok(Some(1.0));
            }
            if f.density(f.support_min().max(1e-300)).is_none() {
                return Ok(None);
            }
            // P[aF + bG > x] = P[F > x/a] + ∫_0^{x/a} f(s) P[G > (x − a s)/b] ds.
            let top = level / a;
            let lo = f.support_min();
            if top <= lo {
                return Ok(Some(1.0));
            }
            let kinks = [(level - b * g.support_min()) / a];
            let pts = geometric_breaks(lo, top, &kinks);
            let body = integrate_with_breaks(
                |s| f.density(s).unwrap_or(0.0) * g.tail((level - a * s) / b),
                &pts,
                QTOL,
            )?
            .value;
            Ok(Some((f.tail(top) + body).min(1.0)))
        }
        _ => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class_diagnostics::convolution_tail_2;
    use crate::mc::Method;
    use crate::mc::RngStream;
    use proptest::prelude::*;

    fn p2() -> ScalarLaw {
        ScalarLaw::pareto(2.0, 1.0).unwrap()
    }

    fn half() -> RareSet {
        RareSet::halfspace(&[0.5, 0.5], 1.0).unwrap()
    }

    #[test]
    fn fa_tail_inverse_round_trips() {
        let v = VectorLaw::iid(p2(), 2).unwrap();
        let x = v.fa_tail_inverse(&half(), 5e-4).unwrap().unwrap();
        let p = v.fa_tail_exact(&half(), x).unwrap().unwrap();
        assert!((p / 5e-4 - 1.0).abs() < 1e-9, "{p}");
        let m = VectorLaw::mrv(2.0, p2(), 2, vec![0.5, 0.5]).unwrap();
        // P[R > 2x] at the axes for l = (.5, .5): 0.25/x^2 = p
        let x = m.fa_tail_inverse(&half(), 1e-4).unwrap().unwrap();
        assert!((x - 50.0).abs() < 1e-6, "{x}");
        let lw = VectorLaw::lwqd(p2(), 2, 0.5).unwrap();
        assert_eq!(lw.fa_tail_inverse(&half(), 1e-3).unwrap(), None);
        assert!(v.fa_tail_inverse(&half(), 1.5).is_err());
    }

    fn orth() -> RareSet {
        RareSet::orthant(&[1.0, 1.0]).unwrap()
    }

    fn engine() -> Engine {
        Engine::new(17, 2).unwrap()
    }

    #[test]
    fn marginal_tail_by_sampling() {
        let v = VectorLaw::iid(p2(), 2).unwrap();
        let n = 200_000u64;
        let e = engine()
            .crude_event(TAG_SAMPLE, n, |p| {
                let mut x = [0.0; 2];
                v.sample_blocks(p, 0, &mut x);
                Ok(x[0] > 2.0)
            })
            .unwrap();
        let se = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((e.value - 0.25).abs() < 3.0 * se, "{}", e.value);
        assert!(v
            .sample(&mut RngStream::new(1, 0))
            .iter()
            .all(|&x| x >= 1.0));
    }

    #[test]
    fn lwqd_zero_weight_is_independent() {
        let a = VectorLaw::lwqd(p2(), 3, 0.0).unwrap();
        let b = VectorLaw::iid(p2(), 3).unwrap();
        for s in 0..50 {
            let x = a.sample(&mut RngStream::new(s, 0));
            let y = b.sample(&mut RngStream::new(s, 0));
            assert_eq!(x, y);
        }
        for x in [1.5, 10.0, 300.0] {
            assert_eq!(
                a.marginal_tail(0, x).unwrap(),
                b.marginal_tail(0, x).unwrap()
            );
        }
    }

    #[test]
    fn lwqd_marginal_tail_quadrature_matches_sampling() {
        let v = VectorLaw::lwqd(p2(), 2, 0.5).unwrap();
        let x = 5.0;
        let q = v.marginal_tail(1, x).unwrap();
        let e = engine()
            .crude_event(TAG_SAMPLE, 400_000, |p| {
                let mut z = [0.0; 2];
                v.sample_blocks(p, 0, &mut z);
                Ok(z[1] > x)
            })
            .unwrap();
        assert!((e.value - q).abs() < 4.0 * e.stderr, "{} vs {q}", e.value);
        assert!(q > p2().tail(x));
        assert_eq!(v.marginal_mean(0).unwrap(), 2.0 + 0.5 * 1.5);
    }

    #[test]
    fn mrv_marginals_and_support() {
        let v = VectorLaw::mrv(2.0, p2(), 2, vec![0.5, 0.5]).unwrap();
        for x in [2.0, 10.0, 100.0] {
            assert!((v.marginal_tail(0, x).unwrap() - 0.5 / (x * x)).abs() < 1e-15);
        }
        let mut rng = RngStream::new(3, 0);
        for _ in 0..100 {
            let s = v.sample(&mut rng);
            assert!(s.iter().all(|&c| c >= 0.0) && s.iter().any(|&c| c > 0.0));
        }
        assert!(VectorLaw::mrv(3.0, p2(), 2, vec![0.5, 0.5]).is_err());
        assert!(VectorLaw::mrv(2.0, p2(), 2, vec![0.5, 0.6]).is_err());
        assert!(
            VectorLaw::mrv(2.0, ScalarLaw::exponential(1.0).unwrap(), 2, vec![1.0, 0.0]).is_err()
        );
    }

    #[test]
    fn fa_tail_examples() {
        let v = VectorLaw::iid(p2(), 2).unwrap();
        let b = Budget::crude(10_000);
        let e = v.fa_tail(&orth(), 10.0, &engine(), &b).unwrap();
        assert_eq!(e.method, Method::Analytic);
        assert!((e.value - 0.0199).abs() < 1e-15);
        assert_eq!(v.fa_tail(&orth(), 1e-3, &engine(), &b).unwrap().value, 1.0);
        assert!(v.fa_tail(&orth(), 0.0, &engine(), &b).is_err());
        let small = v.fa_tail_simulated(&half(), 1e-3, &engine(), &b).unwrap();
        assert_eq!(small.value, 1.0);
    }

    #[test]
    fn halfspace_quadrature_matches_convolution() {
        let v = VectorLaw::iid(p2(), 2).unwrap();
        for x in [5.0, 10.0, 50.0] {
            let q = v.fa_tail_exact(&half(), x).unwrap().unwrap();
            let c = convolution_tail_2(&p2(), 2.0 * x).unwrap();
            assert!(((q - c) / c).abs() < 1e-7, "x={x}: {q} vs {c}");
        }
        let d = VectorLaw::iid(ScalarLaw::degenerate(1.0).unwrap(), 2).unwrap();
        assert_eq!(d.fa_tail_exact(&half(), 0.9).unwrap(), Some(1.0));
        assert_eq!(d.fa_tail_exact(&half(), 1.0).unwrap(), Some(0.0));
    }

    #[test]
    fn crude_and_splitting_agree_on_halfspace() {
        let v = VectorLaw::iid(p2(), 2).unwrap();
        let eng = engine();
        let crude = v
            .fa_tail_simulated(&half(), 10.0, &eng, &Budget::crude(400_000))
            .unwrap();
        let split = v
            .fa_tail_simulated(&half(), 10.0, &eng, &Budget::splitting(400_000, 4000, 8))
            .unwrap();
        assert_eq!(split.method, Method::Splitting);
        assert!(crude.overlaps(&split), "{crude:?} {split:?}");
        let exact = v.fa_tail_exact(&half(), 10.0).unwrap().unwrap();
        assert!(crude.contains(exact) || (crude.value - exact).abs() < 4.0 * crude.stderr);
    }

    #[test]
    fn fa_mean_examples() {
        let v = VectorLaw::iid(p2(), 2).unwrap();
        let b = Budget::crude(1000);
        let h = v.fa_mean(&half(), &engine(), &b).unwrap().value;
        assert!((h - 2.0).abs() < 1e-15, "{h}");
        let m = v.fa_mean(&orth(), &engine(), &b).unwrap();
        assert_eq!(m.method, Method::Analytic);
        assert!((m.value - 8.0 / 3.0).abs() < 1e-8, "{}", m.value);
        let d = VectorLaw::iid(ScalarLaw::degenerate(1.0).unwrap(), 2).unwrap();
        assert_eq!(d.fa_mean(&half(), &engine(), &b).unwrap().value, 1.0);
        let heavy = VectorLaw::iid(ScalarLaw::pareto(1.0, 1.0).unwrap(), 2).unwrap();
        assert!(matches!(
            heavy.fa_mean(&orth(), &engine(), &b),
            Err(Error::InfiniteMean(_))
        ));
    }

    #[test]
    fn fa_mean_simulated_for_lwqd_orthant() {
        let v = VectorLaw::lwqd(ScalarLaw::pareto(3.0, 1.0).unwrap(), 2, 0.3).unwrap();
        let m = v
            .fa_mean(&orth(), &engine(), &Budget::crude(200_000))
            .unwrap();
        assert_eq!(m.method, Method::Crude);
        // E[max] lies between the marginal mean and the sum of means.
        let mm = v.marginal_mean(0).unwrap();
        assert!(m.value > mm && m.value < 2.0 * mm, "{} {mm}", m.value);
        assert!(m.stderr > 0.0 && m.stderr < 0.01);
    }

    #[test]
    fn mu_a_examples() {
        let v = VectorLaw::mrv(2.0, p2(), 2, vec![0.5, 0.5]).unwrap();
        assert!((v.mu_a(&half()).unwrap() - 0.25).abs() < 1e-15);
        assert!((v.mu_a(&orth()).unwrap() - 1.0).abs() < 1e-15);
        let axis1 = VectorLaw::mrv(2.0, p2(), 2, vec![1.0, 0.0]).unwrap();
        let h01 = RareSet::halfspace(&[0.0, 1.0], 1.0).unwrap();
        assert_eq!(axis1.mu_a(&h01).unwrap(), 0.0);
        assert!(matches!(
            VectorLaw::iid(p2(), 2).unwrap().mu_a(&half()),
            Err(Error::KindMismatch { .. })
        ));
        // Diagonal mass: Y_A(u) = 1/√2 for the halfspace.
        let diag = VectorLaw::mrv(2.0, p2(), 2, vec![0.0, 0.0, 1.0]).unwrap();
        assert!((diag.mu_a(&half()).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mu_a_is_the_simulated_limit() {
        let v = VectorLaw::mrv(2.0, p2(), 2, vec![0.3, 0.3, 0.4]).unwrap();
        let x = 30.0;
        let e = v
            .fa_tail_simulated(&half(), x, &engine(), &Budget::crude(1_000_000))
            .unwrap();
        let r = e.value / p2().tail(x);
        let mu = v.mu_a(&half()).unwrap();
        assert!(
            (r - mu).abs() < 4.0 * e.stderr / p2().tail(x),
            "{r} vs {mu}"
        );
        let exact = v.fa_tail_exact(&half(), x).unwrap().unwrap();
        assert!((exact / p2().tail(x) - mu).abs() < 1e-12);
    }

    #[test]
    fn lwqd_ratio_table_is_bounded() {
        let v = VectorLaw::lwqd(p2(), 2, 0.5).unwrap();
        let t = v
            .lwqd_ratios(2, &[3.0, 6.0], &[3.0, 6.0], &engine(), 400_000)
            .unwrap();
        assert_eq!(t.cells.len(), 4);
        assert!(
            t.g_hat.is_finite() && t.g_hat >= 1.0 && t.g_hat < 3.0,
            "{t:?}"
        );
        let ind = VectorLaw::iid(p2(), 2).unwrap();
        let t = ind
            .lwqd_ratios(2, &[3.0], &[3.0], &engine(), 400_000)
            .unwrap();
        assert!((t.cells[0].ratio - 1.0).abs() < 4.0 * t.cells[0].stderr);
    }

    #[test]
    fn config_round_trip() {
        let v = VectorLaw::mrv(2.0, p2(), 2, vec![0.5, 0.5]).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<VectorLaw>(&s).unwrap(), v);
        let j = r#"{"kind":"lwqd","dim":3,"common":{"family":"pareto","params":{"alpha":2.0,"xm":1.0}},"shock_weight":0.2}"#;
        let l: VectorLaw = serde_json::from_str(j).unwrap();
        assert_eq!(l.dim(), 3);
        assert!(serde_json::from_str::<VectorLaw>(&j.replace("\"dim\"", "\"dims\"")).is_err());
    }

    proptest! {
        #[test]
        fn exact_tail_non_increasing(x in 0.05f64..500.0, f in 1.01f64..4.0, w in 0.05f64..0.95) {
            let set = RareSet::halfspace(&[w, 1.0 - w], 1.0).unwrap();
            let laws = [
                VectorLaw::iid(p2(), 2).unwrap(),
                VectorLaw::independent(vec![p2(), ScalarLaw::weibull(0.5, 1.0).unwrap()]).unwrap(),
                VectorLaw::mrv(2.0, p2(), 2, vec![0.2, 0.3, 0.5]).unwrap(),
            ];
            for v in &laws {
                for s in [&set, &orth()] {
                    let a = v.fa_tail_exact(s, x).unwrap().unwrap();
                    let b = v.fa_tail_exact(s, f * x).unwrap().unwrap();
                    prop_assert!((0.0..=1.0).contains(&a));
                    prop_assert!(b <= a * (1.0 + 1e-9) + 1e-15);
                }
            }
        }
    }
}
