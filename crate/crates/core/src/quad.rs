//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Stopping rule: total error ≤ max(abs, rel·|I|).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-10,
            rel: 1e-10,
            max_intervals: 1_000_000,
        }
    }
}

impl Tolerance {
    pub fn abs(abs: f64) -> Self {
        Self {
            abs,
            rel: 0.0,
            ..Self::default()
        }
    }

    pub fn rel(rel: f64) -> Self {
        Self {
            abs: 0.0,
            rel,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn qk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = WGK[7] * fc;
    let mut resg = WG[3] * fc;
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * resk;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = resk * h;
    let resabs = resabs * h.abs();
    let resasc = resasc * h.abs();
    let mut error = ((resk - resg) * h).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    Segment { a, b, value, error }
}

/// ∫_a^b f with global adaptive bisection of the worst interval.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Integral> {
    integrate_with_breaks(f, &[a, b], tol)
}

/// As [`integrate`], with the range pre-split at `points` (sorted, ends
/// included). Kinks and discontinuities belong in `points`.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    tol: Tolerance,
) -> Result<Integral> {
    if points.len() < 2 {
        return Err(Error::Quadrature("need at least two points".into()));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::Quadrature("non-finite limit".into()));
    }
    let mut heap = BinaryHeap::new();
    let mut frozen_value = 0.0;
    let mut frozen_error = 0.0;
    for w in points.windows(2) {
        if w[1] > w[0] {
            heap.push(qk15(&f, w[0], w[1]));
        } else if w[1] < w[0] {
            return Err(Error::Quadrature("break points must be sorted".into()));
        }
    }
    let mut count = heap.len();
    let mut value: f64 = heap.iter().map(|s| s.value).sum();
    let mut error: f64 = heap.iter().map(|s| s.error).sum();
    loop {
        if !value.is_finite() {
            return Err(Error::Quadrature(
                "integrand produced non-finite values".into(),
            ));
        }
        let target = tol.abs.max(tol.rel * value.abs());
        if error <= target || heap.is_empty() || count >= tol.max_intervals {
            // Resum to shed drift from the running totals.
            value = frozen_value + heap.iter().map(|s| s.value).sum::<f64>();
            error = frozen_error + heap.iter().map(|s| s.error).sum::<f64>();
            let target = tol.abs.max(tol.rel * value.abs());
            if error <= target || heap.is_empty() {
                return Ok(Integral {
                    value,
                    error,
                    intervals: count,
                });
            }
            if count >= tol.max_intervals {
                if error <= 10.0 * target {
                    return Ok(Integral {
                        value,
                        error,
                        intervals: count,
                    });
                }
                return Err(Error::Quadrature(format!(
                    "no convergence after {count} intervals (error {error:.3e}, target {target:.3e})"
                )));
            }
        }
        let worst = heap.pop().expect("heap checked non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        let floor = 1e3 * f64::EPSILON * worst.a.abs().max(worst.b.abs());
        if mid <= worst.a || mid >= worst.b || worst.b - worst.a < floor {
            // Width at the rounding floor: keep the estimate, stop refining.
            frozen_value += worst.value;
            frozen_error += worst.error;
            continue;
        }
        let left = qk15(&f, worst.a, mid);
        let right = qk15(&f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        count += 1;
    }
}

/// ∫_a^∞ f via the map y = a + t/(1 − t), t ∈ [0, 1).
pub fn integrate_to_inf<F: Fn(f64) -> f64>(f: F, a: f64, tol: Tolerance) -> Result<Integral> {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - t;
        let v = f(a + t / s) / (s * s);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, tol)
}

/// ∫_a^∞ f, with break points on the original axis mapped to the unit interval.
pub fn integrate_to_inf_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Integral> {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - t;
        let v = f(a + t / s) / (s * s);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let mut pts = vec![0.0];
    for &b in breaks {
        if b > a && b.is_finite() {
            let y = b - a;
            pts.push(y / (1.0 + y));
        }
    }
    pts.push(1.0);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    integrate_with_breaks(g, &pts, tol)
}

/// Break points for `[lo, hi]`: the endpoints, any kinks inside, and
/// geometric ladders (ratio 4) away from both ends so that mass piled near
/// either end is resolved.
pub fn geometric_breaks(lo: f64, hi: f64, kinks: &[f64]) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    pts.extend(kinks.iter().copied().filter(|&k| k > lo && k < hi));
    let w = hi - lo;
    let mut s = (w * 1e-9).max(1e-3).min(0.25 * w);
    while s < w {
        pts.push(lo + s);
        pts.push(hi - s);
        s *= 4.0;
    }
    pts.retain(|p| *p >= lo && *p <= hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    pts
}
