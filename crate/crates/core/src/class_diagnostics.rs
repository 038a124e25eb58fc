//! Deterministic limit diagnostics for the classes L, D, R, S, S* and S_*.
//!
//! Every ratio is evaluated by closed forms or adaptive quadrature on a
//! geometric grid and judged by [`TrendReport`]; nothing here is sampled.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad::{geometric_breaks, integrate_with_breaks, Tolerance};
use crate::report::{TrendReport, Verdict, DEFAULT_LAST_K};
use crate::scalar_laws::ScalarLaw;

pub const TOL_LONG_TAIL: f64 = 0.02;
pub const TOL_RV: f64 = 0.02;
pub const TOL_SUBEXP: f64 = 0.05;
pub const SPREAD_DOMINATED: f64 = 0.10;
pub const UNDERFLOW_FLOOR: f64 = 1e-300;
pub const DEFAULT_U_GRID: [f64; 6] = [1.0, 2.0, 5.0, 10.0, 100.0, 1e6];

const QTOL: Tolerance = Tolerance {
    abs: 0.0,
    rel: 1e-10,
    max_intervals: 200_000,
};

/// `x₀·2^k` for `k = 0..=k_max`.
pub fn geometric_grid(x0: f64, k_max: u32) -> Vec<f64> {
    (0..=k_max).map(|k| x0 * 2f64.powi(k as i32)).collect()
}

/// Default grid `8·2^k`, `k = 0..17`.
pub fn default_grid() -> Vec<f64> {
    geometric_grid(8.0, 17)
}

fn guarded(law: &ScalarLaw, grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .copied()
        .take_while(|&x| law.tail(x) >= UNDERFLOW_FLOOR)
        .collect()
}

fn guard_note(rep: &mut TrendReport, requested: usize) {
    if rep.grid.len() < requested {
        rep.notes.push(format!(
            "grid stopped after {} of {requested} points: tail below {UNDERFLOW_FLOOR:e}",
            rep.grid.len()
        ));
    }
}

/// `tail(x − a)/tail(x) → 1`.
pub fn long_tail_ratio(law: &ScalarLaw, a: f64, grid: &[f64]) -> Result<TrendReport> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(invalid(format!("shift a must be >= 0, got {a}")));
    }
    let g = guarded(law, grid);
    let r = g.iter().map(|&x| law.tail(x - a) / law.tail(x)).collect();
    let mut rep = TrendReport::limit(g, r, 1.0, TOL_LONG_TAIL, DEFAULT_LAST_K);
    guard_note(&mut rep, grid.len());
    Ok(rep)
}

/// `tail(bx)/tail(x)` bounded.
pub fn dominated_variation_ratio(law: &ScalarLaw, b: f64, grid: &[f64]) -> Result<TrendReport> {
    if !(b > 0.0 && b < 1.0) {
        return Err(invalid(format!("b must lie in (0, 1), got {b}")));
    }
    let g = guarded(law, grid);
    let r = g
        .iter()
        .map(|&x| (law.log_tail(b * x) - law.log_tail(x)).exp())
        .collect();
    let mut rep = TrendReport::bounded(g, r, SPREAD_DOMINATED, DEFAULT_LAST_K);
    guard_note(&mut rep, grid.len());
    Ok(rep)
}

/// `tail(tx)/tail(x) → t^{−α}`; the target comes from the family when it is
/// regularly varying, otherwise from the caller.
pub fn rv_ratio(law: &ScalarLaw, t: f64, target: Option<f64>, grid: &[f64]) -> Result<TrendReport> {
    if !(t > 0.0) {
        return Err(invalid(format!("t must be positive, got {t}")));
    }
    let target = match (target, law.tail_index()) {
        (Some(v), _) => v,
        (None, Some(alpha)) => t.powf(-alpha),
        (None, None) => {
            return Err(invalid(format!(
                "{} is not regularly varying; supply a target",
                law.label()
            )))
        }
    };
    let g = guarded(law, grid);
    let r = g
        .iter()
        .map(|&x| (law.log_tail(t * x) - law.log_tail(x)).exp())
        .collect();
    let mut rep = TrendReport::limit(g, r, target, TOL_RV, DEFAULT_LAST_K);
    guard_note(&mut rep, grid.len());
    Ok(rep)
}

/// `P[X₁ + X₂ > x]` for a law given by its tail `t`, its density `g` and an
/// atom of mass `a0` at zero:
/// `t(x/2)² + 2·(a0·t(x) + ∫_{(0, x/2]} t(x − y) g(y) dy)`.
fn conv2_tail<T, G>(t: &T, g: &G, a0: f64, x: f64, kinks: &[f64]) -> Result<f64>
where
    T: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let half = 0.5 * x;
    let pts = geometric_breaks(0.0, half, kinks);
    let inner = integrate_with_breaks(|y| t(x - y) * g(y), &pts, QTOL)?.value;
    Ok(t(half).powi(2) + 2.0 * (a0 * t(x) + inner))
}

/// Two-fold convolution tail of a continuous scalar law.
pub fn convolution_tail_2(law: &ScalarLaw, x: f64) -> Result<f64> {
    if law.density(0.0).is_none() {
        return Err(Error::NotLongTailed(format!(
            "{} has no density; two-fold convolution needs a continuous law",
            law.label()
        )));
    }
    let dens = |y: f64| law.density(y).unwrap_or(0.0);
    conv2_tail(&|y| law.tail(y), &dens, 0.0, x, &[law.support_min()])
}

/// `V̄^{2*}(x)/V̄(x) → 2`.
pub fn subexp_ratio(law: &ScalarLaw, grid: &[f64]) -> Result<TrendReport> {
    if law.is_discrete() {
        return Err(Error::NotLongTailed(format!(
            "{} (lattice law)",
            law.label()
        )));
    }
    let g = guarded(law, grid);
    let mut notes = Vec::new();
    let r = g
        .iter()
        .map(|&x| match convolution_tail_2(law, x) {
            Ok(c) => c / law.tail(x),
            Err(e) => {
                notes.push(format!("x={x}: {e}"));
                f64::NAN
            }
        })
        .collect();
    let mut rep = TrendReport::limit(g, r, 2.0, TOL_SUBEXP, DEFAULT_LAST_K);
    rep.notes.extend(notes);
    guard_note(&mut rep, grid.len());
    Ok(rep)
}

fn tail_product_kinks(law: &ScalarLaw, x: f64) -> Vec<f64> {
    let m = law.support_min();
    vec![m, x - m]
}

/// `∫₀^x tail(x−y) tail(y) dy`, evaluated as twice the integral over `[0, x/2]`.
pub fn tail_convolution_integral(law: &ScalarLaw, x: f64) -> Result<f64> {
    let pts = geometric_breaks(0.0, 0.5 * x, &tail_product_kinks(law, x));
    Ok(2.0 * integrate_with_breaks(|y| law.tail(x - y) * law.tail(y), &pts, QTOL)?.value)
}

/// Same integral over the full range `[0, x]` without using the symmetry.
pub fn tail_convolution_integral_full(law: &ScalarLaw, x: f64) -> Result<f64> {
    let mut pts = geometric_breaks(0.0, 0.5 * x, &tail_product_kinks(law, x));
    let mirrored: Vec<f64> = pts.iter().rev().map(|&p| x - p).collect();
    pts.extend(mirrored);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    Ok(integrate_with_breaks(|y| law.tail(x - y) * law.tail(y), &pts, QTOL)?.value)
}

/// `∫₀^x tail(x−y)tail(y)dy / (2 μ tail(x)) → 1`.
pub fn strong_subexp_ratio(law: &ScalarLaw, grid: &[f64]) -> Result<TrendReport> {
    let mu = law.mean()?;
    let g = guarded(law, grid);
    let mut notes = Vec::new();
    let r = g
        .iter()
        .map(|&x| match tail_convolution_integral(law, x) {
            Ok(i) => i / (2.0 * mu * law.tail(x)),
            Err(e) => {
                notes.push(format!("x={x}: {e}"));
                f64::NAN
            }
        })
        .collect();
    let mut rep = TrendReport::limit(g, r, 1.0, TOL_SUBEXP, DEFAULT_LAST_K);
    rep.notes.extend(notes);
    guard_note(&mut rep, grid.len());
    Ok(rep)
}

/// The law `V_u` with tail `V̄_u(x) = min(1, ∫_x^{x+u} tail)`.
pub struct TruncatedLaw<'a> {
    law: &'a ScalarLaw,
    u: f64,
    /// Below `knee` the tail is clamped at 1.
    knee: f64,
}

impl<'a> TruncatedLaw<'a> {
    pub fn new(law: &'a ScalarLaw, u: f64) -> Result<Self> {
        law.mean()?;
        if !(u >= 1.0) {
            return Err(invalid(format!("u must be >= 1, got {u}")));
        }
        let raw = |x: f64| law.tail_window(x, x + u);
        let knee = if raw(0.0)? <= 1.0 {
            0.0
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            while raw(hi)? > 1.0 {
                lo = hi;
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if raw(mid)? > 1.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-14 * hi {
                    break;
                }
            }
            hi
        };
        Ok(Self { law, u, knee })
    }

    pub fn tail(&self, x: f64) -> f64 {
        if x < self.knee {
            return 1.0;
        }
        self.law
            .tail_window(x.max(0.0), x.max(0.0) + self.u)
            .map(|v| v.min(1.0))
            .unwrap_or(f64::NAN)
    }

    pub fn density(&self, y: f64) -> f64 {
        if y < self.knee {
            0.0
        } else {
            (self.law.tail(y) - self.law.tail(y + self.u)).max(0.0)
        }
    }

    pub fn atom_at_zero(&self) -> f64 {
        (1.0 - self.tail(0.0)).max(0.0)
    }

    fn kinks(&self) -> Vec<f64> {
        let m = self.law.support_min();
        vec![self.knee, m, m - self.u]
    }

    /// Two-fold convolution tail of `V_u` at `x`.
    pub fn convolution_tail_2(&self, x: f64) -> Result<f64> {
        let mut kinks = self.kinks();
        kinks.extend(self.kinks().iter().map(|k| x - k));
        conv2_tail(
            &|y| self.tail(y),
            &|y| self.density(y),
            self.atom_at_zero(),
            x,
            &kinks,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformReport {
    pub per_u: Vec<(f64, TrendReport)>,
    /// Largest deviation from 2 at the last grid point, over `u_grid`.
    pub uniform_max_dev: f64,
    pub verdict: Verdict,
    pub note: String,
}

/// `V̄_u^{2*}(x)/V̄_u(x) → 2` for each `u` in `u_grid`.
pub fn strongly_subexp_ratio(
    law: &ScalarLaw,
    u_grid: &[f64],
    x_grid: &[f64],
) -> Result<UniformReport> {
    law.mean()?;
    if u_grid.is_empty() {
        return Err(invalid("u_grid must be non-empty"));
    }
    let g = guarded(law, x_grid);
    let mut per_u = Vec::with_capacity(u_grid.len());
    let mut worst: f64 = 0.0;
    for &u in u_grid {
        let vu = TruncatedLaw::new(law, u)?;
        let mut notes = Vec::new();
        let mut xs = Vec::new();
        let mut rs = Vec::new();
        for &x in &g {
            let denom = vu.tail(x);
            if !(denom >= UNDERFLOW_FLOOR) {
                break;
            }
            xs.push(x);
            rs.push(match vu.convolution_tail_2(x) {
                Ok(c) => c / denom,
                Err(e) => {
                    notes.push(format!("x={x}: {e}"));
                    f64::NAN
                }
            });
        }
        let mut rep = TrendReport::limit(xs, rs, 2.0, TOL_SUBEXP, DEFAULT_LAST_K);
        rep.notes.extend(notes);
        if let Some(&last) = rep.ratios.last() {
            worst = worst.max(((last - 2.0) / 2.0).abs());
        } else {
            worst = f64::INFINITY;
        }
        per_u.push((u, rep));
    }
    let verdict = if per_u.iter().all(|(_, r)| r.verdict == Verdict::Consistent) {
        Verdict::Consistent
    } else if per_u
        .iter()
        .any(|(_, r)| r.verdict == Verdict::Inconsistent)
    {
        Verdict::Inconsistent
    } else {
        Verdict::Inconclusive
    };
    Ok(UniformReport {
        per_u,
        uniform_max_dev: worst,
        verdict,
        note: format!(
            "uniformity over u in [1, inf) is sampled at u = {u_grid:?}; the largest u stands in for the limit"
        ),
    })
}

/// Verdicts for every class on one law, with the default parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub law: String,
    pub long_tailed: TrendReport,
    pub dominated: TrendReport,
    pub regularly_varying: Option<TrendReport>,
    pub subexponential: Option<TrendReport>,
    pub strong_subexponential: Option<TrendReport>,
    pub strongly_subexponential: Option<UniformReport>,
}

pub fn classify(law: &ScalarLaw, grid: &[f64]) -> Result<ClassSummary> {
    let finite_mean = law.mean().is_ok();
    Ok(ClassSummary {
        law: law.label(),
        long_tailed: long_tail_ratio(law, 1.0, grid)?,
        dominated: dominated_variation_ratio(law, 0.5, grid)?,
        regularly_varying: match law.tail_index() {
            Some(_) => Some(rv_ratio(law, 2.0, None, grid)?),
            None => None,
        },
        subexponential: if law.is_discrete() {
            None
        } else {
            Some(subexp_ratio(law, grid)?)
        },
        strong_subexponential: if finite_mean {
            Some(strong_subexp_ratio(law, grid)?)
        } else {
            None
        },
        strongly_subexponential: if finite_mean {
            Some(strongly_subexp_ratio(law, &DEFAULT_U_GRID, grid)?)
        } else {
            None
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pareto(a: f64) -> ScalarLaw {
        ScalarLaw::pareto(a, 1.0).unwrap()
    }

    #[test]
    fn grid_shape() {
        let g = default_grid();
        assert_eq!(g.len(), 18);
        assert_eq!(g[0], 8.0);
        assert_eq!(*g.last().unwrap(), 8.0 * 131072.0);
    }

    #[test]
    fn long_tail_examples() {
        let r = long_tail_ratio(&pareto(2.0), 1.0, &[250.0, 500.0, 1000.0]).unwrap();
        assert!((r.ratios[2] - (1000.0f64 / 999.0).powi(2)).abs() < 1e-14);
        assert_eq!(r.verdict, Verdict::Consistent);
        let e = ScalarLaw::exponential(1.0).unwrap();
        let r = long_tail_ratio(&e, 1.0, &geometric_grid(1.0, 5)).unwrap();
        assert!(r
            .ratios
            .iter()
            .all(|v| (v - std::f64::consts::E).abs() < 1e-12));
        assert_eq!(r.verdict, Verdict::Inconsistent);
        let r = long_tail_ratio(&e, 0.0, &geometric_grid(1.0, 5)).unwrap();
        assert!(r.ratios.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn underflow_guard() {
        let e = ScalarLaw::exponential(1.0).unwrap();
        let r = long_tail_ratio(&e, 1.0, &default_grid()).unwrap();
        assert!(r.grid.iter().all(|&x| e.tail(x) >= UNDERFLOW_FLOOR));
        assert!(r.grid.len() < 18 && !r.notes.is_empty());
    }

    #[test]
    fn dominated_examples() {
        let r = dominated_variation_ratio(&pareto(2.0), 0.5, &default_grid()).unwrap();
        assert!(r.ratios.iter().all(|v| (v - 4.0).abs() < 1e-9));
        assert_eq!(r.verdict, Verdict::Consistent);
        let w = ScalarLaw::weibull(0.5, 1.0).unwrap();
        let r = dominated_variation_ratio(&w, 0.5, &default_grid()).unwrap();
        // Oracle: exp((1 − √b)√x).
        for (x, v) in r.grid.iter().zip(&r.ratios) {
            let o = ((1.0 - 0.5f64.sqrt()) * x.sqrt()).exp();
            assert!(((v - o) / o).abs() < 1e-9);
        }
        assert_eq!(r.verdict, Verdict::Inconsistent);
        let ln = ScalarLaw::lognormal(0.0, 1.0).unwrap();
        assert_eq!(
            dominated_variation_ratio(&ln, 0.5, &default_grid())
                .unwrap()
                .verdict,
            Verdict::Inconsistent
        );
    }

    #[test]
    fn rv_examples() {
        let r = rv_ratio(&pareto(2.0), 2.0, None, &default_grid()).unwrap();
        assert_eq!(r.target, Some(0.25));
        assert_eq!(r.verdict, Verdict::Consistent);
        let r = rv_ratio(&pareto(2.0), 1.0, None, &default_grid()).unwrap();
        assert!(r.ratios.iter().all(|&v| v == 1.0));
        let w = ScalarLaw::weibull(0.5, 1.0).unwrap();
        assert!(rv_ratio(&w, 2.0, None, &default_grid()).is_err());
        let r = rv_ratio(&w, 2.0, Some(0.25), &default_grid()).unwrap();
        assert_eq!(r.verdict, Verdict::Inconsistent);
    }

    #[test]
    fn exponential_convolution_closed_form() {
        // Gamma(2,1) tail: (1 + x)e^{-x}.
        let e = ScalarLaw::exponential(1.0).unwrap();
        for x in [0.5, 3.0, 20.0, 200.0] {
            let c = convolution_tail_2(&e, x).unwrap();
            let o = (1.0 + x) * (-x).exp();
            assert!(((c - o) / o).abs() < 1e-9, "x={x}: {c} vs {o}");
        }
        let r = subexp_ratio(&e, &default_grid()).unwrap();
        assert_eq!(r.verdict, Verdict::Inconsistent);
    }

    #[test]
    fn pareto_convolution_matches_exact() {
        // P[X₁+X₂ > s] for Pareto(2,1), from the closed-form convolution.
        let p = pareto(2.0);
        for (s, exact) in [
            (14.6, 0.012548),
            (40.4, 0.0013617),
            (87.6, 2.7337e-4),
            (175.0, 6.686e-5),
        ] {
            let c = convolution_tail_2(&p, s).unwrap();
            assert!(((c - exact) / exact).abs() < 2e-3, "s={s}: {c}");
        }
    }

    #[test]
    fn subexp_pareto() {
        let r = subexp_ratio(&pareto(2.0), &default_grid()).unwrap();
        let i = r.grid.iter().position(|&x| x >= 1000.0).unwrap();
        assert!((r.ratios[i] / 2.0 - 1.0).abs() < 0.03);
        assert_eq!(r.verdict, Verdict::Consistent);
        assert!(subexp_ratio(&ScalarLaw::degenerate(1.0).unwrap(), &default_grid()).is_err());
    }

    #[test]
    fn strong_subexp_examples() {
        let r = strong_subexp_ratio(&pareto(2.5), &default_grid()).unwrap();
        assert_eq!(r.verdict, Verdict::Consistent, "{r:?}");
        let i = r.grid.iter().position(|&x| x >= 1000.0).unwrap();
        assert!((r.ratios[i] - 1.0).abs() < 0.05);
        let e = ScalarLaw::exponential(1.0).unwrap();
        let r = strong_subexp_ratio(&e, &geometric_grid(2.0, 6)).unwrap();
        for (x, v) in r.grid.iter().zip(&r.ratios) {
            assert!((v - x / 2.0).abs() < 1e-8 * x, "x={x} v={v}");
        }
        assert_eq!(r.verdict, Verdict::Inconsistent);
        assert!(matches!(
            strong_subexp_ratio(&pareto(1.0), &default_grid()),
            Err(Error::InfiniteMean(_))
        ));
    }

    #[test]
    fn symmetric_split_matches_full_range() {
        let p = pareto(2.0);
        let a = tail_convolution_integral(&p, 100.0).unwrap();
        let b = tail_convolution_integral_full(&p, 100.0).unwrap();
        assert!(((a - b) / b).abs() < 1e-8);
    }

    #[test]
    fn truncated_law_pieces() {
        let p = pareto(2.0);
        let v1 = TruncatedLaw::new(&p, 1.0).unwrap();
        for x in [10.0, 100.0, 1000.0] {
            let o = 1.0 / x - 1.0 / (x + 1.0);
            assert!(((v1.tail(x) - o) / o).abs() < 1e-12);
        }
        // Tail is 1 below the knee and the law is proper.
        let big = TruncatedLaw::new(&p, 1e6).unwrap();
        assert_eq!(big.tail(0.0), 1.0);
        let total = big.atom_at_zero()
            + integrate_with_breaks(
                |y| big.density(y),
                &geometric_breaks(0.0, 1e9, &big.kinks()),
                Tolerance::rel(1e-10),
            )
            .unwrap()
            .value;
        assert!((total - 1.0).abs() < 1e-6, "{total}");
        // The large-u proxy approaches the integrated tail.
        let x = 50.0;
        let it = p.integrated_tail(x).unwrap();
        assert!(((big.tail(x) - it) / it).abs() < 1e-3);
    }

    #[test]
    fn strongly_subexp_pareto() {
        let r = strongly_subexp_ratio(&pareto(2.5), &DEFAULT_U_GRID, &default_grid()).unwrap();
        assert_eq!(
            r.verdict,
            Verdict::Consistent,
            "{:?}",
            r.per_u
                .iter()
                .map(|(u, t)| (u, t.max_dev_last_k, t.verdict))
                .collect::<Vec<_>>()
        );
        assert!(r.uniform_max_dev < 0.05);
    }

    #[test]
    fn weibull_chain() {
        let w = ScalarLaw::weibull(0.5, 1.0).unwrap();
        let s = classify(&w, &default_grid()).unwrap();
        assert_eq!(s.long_tailed.verdict, Verdict::Consistent);
        assert_eq!(s.dominated.verdict, Verdict::Inconsistent);
        assert_eq!(s.subexponential.unwrap().verdict, Verdict::Consistent);
        assert_eq!(
            s.strong_subexponential.unwrap().verdict,
            Verdict::Consistent
        );
    }
}
