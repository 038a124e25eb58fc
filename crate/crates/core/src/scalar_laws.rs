//! Univariate laws on the half line.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{invalid, Error, Result};
use crate::mc::UniformSource;
use crate::quad::{integrate, integrate_to_inf, Tolerance};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "family",
    content = "params",
    rename_all = "snake_case",
    deny_unknown_fields
)]
pub enum ScalarLaw {
    /// `tail(x) = (xm/x)^alpha` for `x >= xm`.
    Pareto {
        alpha: f64,
        xm: f64,
    },
    /// `tail(x) = exp(-(x/scale)^shape)`, `0 < shape < 1`.
    Weibull {
        shape: f64,
        scale: f64,
    },
    Lognormal {
        mu: f64,
        sigma: f64,
    },
    Exponential {
        rate: f64,
    },
    /// Supported on {1, 2, ...} with `P[k] = (1-p)^(k-1) p`.
    Geometric {
        p: f64,
    },
    Degenerate {
        value: f64,
    },
}

fn finite_pos(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!(
            "{name} must be finite and positive, got {v}"
        )))
    }
}

impl ScalarLaw {
    pub fn pareto(alpha: f64, xm: f64) -> Result<Self> {
        Self::Pareto { alpha, xm }.validated()
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        Self::Weibull { shape, scale }.validated()
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        Self::Lognormal { mu, sigma }.validated()
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::Exponential { rate }.validated()
    }

    pub fn geometric(p: f64) -> Result<Self> {
        Self::Geometric { p }.validated()
    }

    pub fn degenerate(value: f64) -> Result<Self> {
        Self::Degenerate { value }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Pareto { alpha, xm } => {
                finite_pos("pareto alpha", alpha)?;
                finite_pos("pareto xm", xm)
            }
            Self::Weibull { shape, scale } => {
                finite_pos("weibull scale", scale)?;
                if shape > 0.0 && shape < 1.0 {
                    Ok(())
                } else {
                    Err(invalid(format!(
                        "weibull shape must lie in (0, 1), got {shape}"
                    )))
                }
            }
            Self::Lognormal { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(invalid("lognormal mu must be finite"));
                }
                finite_pos("lognormal sigma", sigma)
            }
            Self::Exponential { rate } => finite_pos("exponential rate", rate),
            Self::Geometric { p } => {
                if p > 0.0 && p <= 1.0 {
                    Ok(())
                } else {
                    Err(invalid(format!("geometric p must lie in (0, 1], got {p}")))
                }
            }
            Self::Degenerate { value } => {
                if value.is_finite() && value >= 0.0 {
                    Ok(())
                } else {
                    Err(invalid(format!(
                        "degenerate value must be finite and >= 0, got {value}"
                    )))
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Self::Pareto { alpha, xm } => format!("Pareto({alpha},{xm})"),
            Self::Weibull { shape, scale } => format!("Weibull({shape},{scale})"),
            Self::Lognormal { mu, sigma } => format!("Lognormal({mu},{sigma})"),
            Self::Exponential { rate } => format!("Exponential({rate})"),
            Self::Geometric { p } => format!("Geometric({p})"),
            Self::Degenerate { value } => format!("Degenerate({value})"),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Self::Geometric { .. } | Self::Degenerate { .. })
    }

    /// Families that are long-tailed for every admissible parameter.
    pub fn is_long_tailed(&self) -> bool {
        matches!(
            self,
            Self::Pareto { .. } | Self::Weibull { .. } | Self::Lognormal { .. }
        )
    }

    /// Regular-variation index, when the family is regularly varying.
    pub fn tail_index(&self) -> Option<f64> {
        match *self {
            Self::Pareto { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    /// Left end of the support.
    pub fn support_min(&self) -> f64 {
        match *self {
            Self::Pareto { xm, .. } => xm,
            Self::Geometric { .. } => 1.0,
            Self::Degenerate { value } => value,
            _ => 0.0,
        }
    }

    /// `P[X > x]`.
    pub fn tail(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        match *self {
            Self::Pareto { alpha, xm } => {
                if x <= xm {
                    1.0
                } else {
                    (xm / x).powf(alpha)
                }
            }
            Self::Weibull { shape, scale } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-(x / scale).powf(shape)).exp()
                }
            }
            Self::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    1.0
                } else {
                    0.5 * erfc((x.ln() - mu) / (sigma * SQRT_2))
                }
            }
            Self::Exponential { rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            Self::Geometric { p } => {
                if x < 1.0 {
                    1.0
                } else if p == 1.0 {
                    0.0
                } else {
                    (x.floor() * (-p).ln_1p()).exp()
                }
            }
            Self::Degenerate { value } => {
                if x < value {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `ln P[X > x]`, finite far beyond the point where `tail` underflows.
    pub fn log_tail(&self, x: f64) -> f64 {
        match *self {
            Self::Pareto { alpha, xm } if x > xm => alpha * (xm / x).ln(),
            Self::Weibull { shape, scale } if x > 0.0 => -(x / scale).powf(shape),
            Self::Exponential { rate } if x > 0.0 => -rate * x,
            Self::Geometric { p } if x >= 1.0 && p < 1.0 => x.floor() * (-p).ln_1p(),
            Self::Lognormal { mu, sigma } if x > 0.0 => {
                let z = (x.ln() - mu) / sigma;
                if z < 30.0 {
                    self.tail(x).ln()
                } else {
                    // Mills-ratio expansion of the normal tail.
                    let z2 = z * z;
                    -0.5 * z2 - (z * (2.0 * std::f64::consts::PI).sqrt()).ln()
                        + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
                }
            }
            _ => self.tail(x).ln(),
        }
    }

    /// `P[X <= x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.tail(x)
    }

    /// Smallest `x` with `tail(x) <= u`; the inverse of the tail.
    pub fn tail_quantile(&self, u: f64) -> f64 {
        if u >= 1.0 {
            return self.support_min();
        }
        if u <= 0.0 {
            return match *self {
                Self::Degenerate { value } => value,
                Self::Geometric { p: 1.0 } => 1.0,
                _ => f64::INFINITY,
            };
        }
        match *self {
            Self::Pareto { alpha, xm } => xm * u.powf(-1.0 / alpha),
            Self::Weibull { shape, scale } => scale * (-u.ln()).powf(1.0 / shape),
            Self::Lognormal { mu, sigma } => (mu + sigma * SQRT_2 * erfc_inv(2.0 * u)).exp(),
            Self::Exponential { rate } => -u.ln() / rate,
            Self::Geometric { p } => {
                if p == 1.0 {
                    return 1.0;
                }
                let k = (u.ln() / (-p).ln_1p()).ceil();
                // Guard the ceiling against rounding at exact integers.
                let k = if k > 1.0 && self.tail(k - 1.0) <= u {
                    k - 1.0
                } else {
                    k
                };
                k.max(1.0)
            }
            Self::Degenerate { value } => value,
        }
    }

    /// Inverse-transform draw; `u` plays the role of the tail probability,
    /// so small uniforms map to large values.
    pub fn sample<R: UniformSource + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Degenerate { value } => value,
            _ => self.tail_quantile(rng.uniform()),
        }
    }

    /// Lebesgue density; `None` for the lattice families.
    pub fn density(&self, x: f64) -> Option<f64> {
        let d = match *self {
            Self::Pareto { alpha, xm } => {
                if x < xm {
                    0.0
                } else {
                    alpha / x * (xm / x).powf(alpha)
                }
            }
            Self::Weibull { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    let z = (x / scale).powf(shape);
                    shape / x * z * (-z).exp()
                }
            }
            Self::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    let z = (x.ln() - mu) / sigma;
                    (-0.5 * z * z).exp() / (x * sigma * (2.0 * std::f64::consts::PI).sqrt())
                }
            }
            Self::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
            Self::Geometric { .. } | Self::Degenerate { .. } => return None,
        };
        Some(d)
    }

    /// Point masses `(k, P[X = k])` for lattice laws, truncated once the
    /// remaining mass drops below `eps`.
    pub fn atoms(&self, eps: f64) -> Vec<(f64, f64)> {
        match *self {
            Self::Degenerate { value } => vec![(value, 1.0)],
            Self::Geometric { p } => {
                let mut out = Vec::new();
                let mut k = 1.0;
                let mut left = 1.0;
                while left > eps && out.len() < 100_000_000 {
                    let mass = self.tail(k - 1.0) - self.tail(k);
                    out.push((k, mass));
                    left = self.tail(k);
                    k += 1.0;
                    if p == 1.0 {
                        break;
                    }
                }
                out
            }
            _ => Vec::new(),
        }
    }

    pub fn mean(&self) -> Result<f64> {
        Ok(match *self {
            Self::Pareto { alpha, xm } => {
                if alpha <= 1.0 {
                    return Err(Error::InfiniteMean(self.label()));
                }
                alpha * xm / (alpha - 1.0)
            }
            Self::Weibull { shape, scale } => scale * gamma(1.0 + 1.0 / shape),
            Self::Lognormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            Self::Exponential { rate } => 1.0 / rate,
            Self::Geometric { p } => 1.0 / p,
            Self::Degenerate { value } => value,
        })
    }

    /// `∫_a^∞ tail(y) dy`.
    pub fn integrated_tail(&self, a: f64) -> Result<f64> {
        if a < 0.0 {
            return Ok(-a + self.integrated_tail(0.0)?);
        }
        let v = match *self {
            Self::Pareto { alpha, xm } => {
                if alpha <= 1.0 {
                    return Err(Error::InfiniteMean(self.label()));
                }
                if a <= xm {
                    (xm - a) + xm / (alpha - 1.0)
                } else {
                    a * (xm / a).powf(alpha) / (alpha - 1.0)
                }
            }
            Self::Weibull { shape, scale } => {
                let z = (a / scale).powf(shape);
                if z == 0.0 {
                    return self.mean();
                }
                if !z.is_finite() {
                    return Ok(0.0);
                }
                scale * gamma(1.0 + 1.0 / shape) * gamma_ur(1.0 / shape, z)
            }
            Self::Lognormal { mu, sigma } => {
                if a == 0.0 {
                    return self.mean();
                }
                let d2 = (mu - a.ln()) / sigma;
                let d1 = d2 + sigma;
                let m = (mu + 0.5 * sigma * sigma).exp();
                let first = m * 0.5 * erfc(-d1 / SQRT_2);
                let v = first - a * 0.5 * erfc(-d2 / SQRT_2);
                if v > 1e-6 * first {
                    v
                } else {
                    let tol = Tolerance {
                        abs: 0.0,
                        rel: 1e-12,
                        ..Tolerance::default()
                    };
                    integrate_to_inf(|y| self.tail(y), a, tol)?.value
                }
            }
            Self::Exponential { rate } => (-rate * a).exp() / rate,
            Self::Geometric { p } => {
                if p == 1.0 {
                    (1.0 - a).max(0.0)
                } else {
                    let k0 = a.floor();
                    (k0 + 1.0 - a) * self.tail(k0) + self.tail(k0 + 1.0) / p
                }
            }
            Self::Degenerate { value } => (value - a).max(0.0),
        };
        Ok(v)
    }

    /// `V̄_u(x) = min(1, ∫_x^{x+u} tail(y) dy)`.
    pub fn truncated_tail_integral(&self, x: f64, u: f64) -> Result<f64> {
        if !(u >= 1.0) {
            return Err(invalid(format!("truncation width u must be >= 1, got {u}")));
        }
        if !(x >= 0.0) {
            return Err(invalid(format!("x must be >= 0, got {x}")));
        }
        let raw = self.tail_window(x, x + u)?;
        Ok(raw.min(1.0))
    }

    /// `∫_a^b tail(y) dy` for `0 <= a <= b`, unclamped.
    pub fn tail_window(&self, a: f64, b: f64) -> Result<f64> {
        if b <= a {
            return Ok(0.0);
        }
        if let Self::Weibull { .. }
        | Self::Lognormal { .. }
        | Self::Pareto { .. }
        | Self::Exponential { .. } = self
        {
            if self.tail(a) == 0.0 {
                return Ok(0.0);
            }
        }
        if let Ok(hi) = self.integrated_tail(a) {
            let lo = if b.is_finite() {
                self.integrated_tail(b)?
            } else {
                0.0
            };
            let diff = hi - lo;
            if diff > 1e-3 * hi || self.is_discrete() {
                return Ok(diff);
            }
        }
        // Short window far in the tail: integrate directly to avoid cancellation.
        let mut pts = vec![a];
        let m = self.support_min();
        if m > a && m < b {
            pts.push(m);
        }
        pts.push(b);
        let tol = Tolerance {
            abs: 0.0,
            rel: 1e-13,
            max_intervals: 10_000,
        };
        let mut total = 0.0;
        for w in pts.windows(2) {
            total += integrate(|y| self.tail(y), w[0], w[1], tol)?.value;
        }
        Ok(total)
    }

    /// Default insensitivity function for long-tailed families.
    pub fn insensitivity(&self) -> Result<InsensitivityFn> {
        match *self {
            Self::Pareto { .. } => Ok(InsensitivityFn { gamma: 0.9 }),
            Self::Weibull { shape, .. } => Ok(InsensitivityFn {
                gamma: (0.5 * (1.0 - shape)).min(0.9),
            }),
            Self::Lognormal { .. } => Ok(InsensitivityFn { gamma: 0.5 }),
            _ => Err(Error::NotLongTailed(self.label())),
        }
    }
}

/// `h(x) = x^gamma` with `0 < gamma < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InsensitivityFn {
    pub gamma: f64,
}

impl InsensitivityFn {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma > 0.0 && gamma < 1.0 {
            Ok(Self { gamma })
        } else {
            Err(invalid(format!(
                "insensitivity exponent must lie in (0, 1), got {gamma}"
            )))
        }
    }

    pub fn h(&self, x: f64) -> f64 {
        x.max(0.0).powf(self.gamma)
    }

    pub fn inverse(&self, y: f64) -> f64 {
        y.max(0.0).powf(1.0 / self.gamma)
    }
}

/// Free-function form of [`InsensitivityFn::inverse`].
pub fn h_inverse(h: &InsensitivityFn, y: f64) -> f64 {
    h.inverse(y)
}
