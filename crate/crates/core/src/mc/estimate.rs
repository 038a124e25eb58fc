use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Crude,
    Splitting,
    Analytic,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Crude => "crude",
            Method::Splitting => "splitting",
            Method::Analytic => "analytic",
        }
    }
}

/// A probability estimate with its uncertainty.
///
/// Invariants: `0 <= ci95.0 <= value <= ci95.1 <= 1`, `stderr >= 0`, and a
/// zero-hit estimate has `value == 0` with the rule-of-three upper bound
/// `ci95.1 == 3 / n_effective`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n_effective: u64,
    pub ci95: (f64, f64),
    pub method: Method,
    pub zero_hit: bool,
}

impl Estimate {
    /// Deterministic value (no sampling error).
    pub fn analytic(value: f64) -> Self {
        let v = value.clamp(0.0, 1.0);
        Self {
            value: v,
            stderr: 0.0,
            n_effective: 0,
            ci95: (v, v),
            method: Method::Analytic,
            zero_hit: false,
        }
    }

    /// Binomial hit fraction with a Wilson score interval; zero hits fall
    /// back to the rule of three.
    pub fn from_hits(hits: u64, n: u64) -> Self {
        assert!(n > 0, "estimate needs at least one replication");
        if hits == 0 {
            return Self::zero_hit(n, Method::Crude);
        }
        let nf = n as f64;
        let p = hits as f64 / nf;
        let stderr = (p * (1.0 - p) / nf).sqrt();
        let z2 = Z95 * Z95;
        let denom = 1.0 + z2 / nf;
        let centre = (p + z2 / (2.0 * nf)) / denom;
        let half = Z95 / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
        let lo = (centre - half).clamp(0.0, p);
        let hi = (centre + half).clamp(p, 1.0);
        Self {
            value: p,
            stderr,
            n_effective: n,
            ci95: (lo, hi),
            method: Method::Crude,
            zero_hit: false,
        }
    }

    /// Rule-of-three bound for an event never observed in `n` trials.
    pub fn zero_hit(n: u64, method: Method) -> Self {
        let n = n.max(1);
        Self {
            value: 0.0,
            stderr: 0.0,
            n_effective: n,
            ci95: (0.0, (3.0 / n as f64).min(1.0)),
            method,
            zero_hit: true,
        }
    }

    /// Normal-theory interval `value ± q·stderr`, clamped to [0, 1].
    pub fn from_normal(value: f64, stderr: f64, quantile: f64, method: Method) -> Self {
        let v = value.clamp(0.0, 1.0);
        let se = stderr.max(0.0);
        let n_effective = if se > 0.0 {
            (v * (1.0 - v) / (se * se)).round().max(1.0) as u64
        } else {
            0
        };
        Self {
            value: v,
            stderr: se,
            n_effective,
            ci95: ((v - quantile * se).max(0.0), (v + quantile * se).min(1.0)),
            method,
            zero_hit: false,
        }
    }

    pub fn relative_stderr(&self) -> f64 {
        if self.value > 0.0 {
            self.stderr / self.value
        } else {
            f64::INFINITY
        }
    }

    pub fn contains(&self, p: f64) -> bool {
        self.ci95.0 <= p && p <= self.ci95.1
    }

    /// Whether the two 95% intervals intersect.
    pub fn overlaps(&self, other: &Estimate) -> bool {
        self.ci95.0 <= other.ci95.1 && other.ci95.0 <= self.ci95.1
    }
}

/// Estimate of an unbounded expectation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
    pub method: Method,
}

impl MeanEstimate {
    pub fn analytic(value: f64) -> Self {
        Self {
            value,
            stderr: 0.0,
            n: 0,
            method: Method::Analytic,
        }
    }

    pub fn from_moments(m: &Moments) -> Self {
        Self {
            value: m.mean,
            stderr: m.stderr(),
            n: m.n,
            method: Method::Crude,
        }
    }
}

/// Ratio `num / den` of two independent estimates with a delta-method
/// standard error.
pub fn ratio_with_stderr(num: &Estimate, den: &Estimate) -> (f64, f64) {
    if den.value <= 0.0 {
        return (f64::NAN, f64::INFINITY);
    }
    let r = num.value / den.value;
    let rel_num = if num.value > 0.0 {
        num.stderr / num.value
    } else {
        f64::INFINITY
    };
    let rel_den = den.stderr / den.value;
    let se = if num.value > 0.0 {
        r * (rel_num * rel_num + rel_den * rel_den).sqrt()
    } else {
        f64::INFINITY
    };
    (r, se)
}

/// Streaming mean and variance (Welford), mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&self, other: &Moments) -> Moments {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let nf = n as f64;
        let mean = self.mean + delta * other.n as f64 / nf;
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64) * (other.n as f64) / nf;
        Moments { n, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            f64::INFINITY
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_hits() {
        let e = Estimate::from_hits(50, 50);
        assert_eq!(e.value, 1.0);
        assert_eq!(e.stderr, 0.0);
        assert_eq!(e.ci95.1, 1.0);
    }

    #[test]
    fn rule_of_three() {
        let e = Estimate::from_hits(0, 1000);
        assert!(e.zero_hit);
        assert_eq!(e.value, 0.0);
        assert_eq!(e.ci95, (0.0, 0.003));
    }

    #[test]
    fn wilson_contains_point() {
        for (h, n) in [(1, 10), (5, 10), (9, 10), (3, 100_000), (99_999, 100_000)] {
            let e = Estimate::from_hits(h, n);
            assert!(e.ci95.0 <= e.value && e.value <= e.ci95.1);
            assert!(e.ci95.0 >= 0.0 && e.ci95.1 <= 1.0);
        }
    }

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.25).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let mut parts = Vec::new();
        for chunk in xs.chunks(64) {
            let mut m = Moments::default();
            chunk.iter().for_each(|&x| m.push(x));
            parts.push(m);
        }
        let merged = parts.iter().fold(Moments::default(), |acc, m| acc.merge(m));
        assert_eq!(merged.n, whole.n);
        assert!((merged.mean - whole.mean).abs() < 1e-12);
        assert!((merged.variance() - whole.variance()).abs() < 1e-9);
        // A fixed fold order is bit-reproducible.
        let again = parts.iter().fold(Moments::default(), |acc, m| acc.merge(m));
        assert_eq!(merged, again);
    }
}
