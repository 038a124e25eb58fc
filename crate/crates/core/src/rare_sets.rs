//! Increasing sets represented by a finite direction set.
//!
//! `A = {x : p·x > 1 for some p in I_A}`, so `x ∈ sA` iff
//! `Y_A(x) = max_p p·x > s`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuinSetKind {
    /// `L₁ = {x : Σ x_i < 0}`.
    SumNegative,
    /// `L₂ = {x : x_i < 0 for some i}`.
    AnyNegative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RareSet {
    directions: Vec<Vec<f64>>,
    dim: usize,
    label: String,
}

/// Config form of a rare set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RareSetSpec {
    Halfspace { l: Vec<f64>, c: f64 },
    Orthant { b: Vec<f64> },
    RuinTranslate { l: Vec<f64>, ruin: RuinSetKind },
}

impl RareSetSpec {
    pub fn build(&self) -> Result<RareSet> {
        match self {
            Self::Halfspace { l, c } => RareSet::halfspace(l, *c),
            Self::Orthant { b } => RareSet::orthant(b),
            Self::RuinTranslate { l, ruin } => RareSet::ruin_translate(l, *ruin),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Halfspace { l, .. } | Self::RuinTranslate { l, .. } => l.len(),
            Self::Orthant { b } => b.len(),
        }
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("({})", parts.join(","))
}

impl RareSet {
    /// Set from an explicit direction list.
    pub fn from_directions(directions: Vec<Vec<f64>>, label: impl Into<String>) -> Result<Self> {
        let dim = directions
            .first()
            .map(Vec::len)
            .ok_or_else(|| invalid("direction set must be non-empty"))?;
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        for p in &directions {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(invalid("direction components must be finite and >= 0"));
            }
            if p.iter().all(|&v| v == 0.0) {
                return Err(invalid("zero direction vector"));
            }
        }
        Ok(Self {
            directions,
            dim,
            label: label.into(),
        })
    }

    /// `{x : l·x > c}`.
    pub fn halfspace(l: &[f64], c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid(format!(
                "halfspace level c must be positive, got {c}"
            )));
        }
        if l.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("halfspace weights must be finite and >= 0"));
        }
        if l.iter().all(|&v| v == 0.0) {
            return Err(invalid("halfspace weights are all zero"));
        }
        let p = l.iter().map(|v| v / c).collect();
        Self::from_directions(vec![p], format!("halfspace l={} c={c}", fmt_vec(l)))
    }

    /// `{x : x_i > b_i for some i}`.
    pub fn orthant(b: &[f64]) -> Result<Self> {
        if b.is_empty() {
            return Err(invalid("orthant thresholds must be non-empty"));
        }
        if b.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("orthant thresholds must be positive"));
        }
        let d = b.len();
        let dirs = (0..d)
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0 / b[i];
                e
            })
            .collect();
        Self::from_directions(dirs, format!("orthant b={}", fmt_vec(b)))
    }

    /// Rare set `l − L` for a ruin set `L`.
    ///
    /// `l − L₁ = {z : Σ z_i > 1}` whatever the allocation, and
    /// `l − L₂ = {z : z_i > l_i for some i}`.
    pub fn ruin_translate(l: &[f64], kind: RuinSetKind) -> Result<Self> {
        if l.is_empty() || l.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("allocation entries must be positive"));
        }
        let sum: f64 = l.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("allocation must sum to 1, got {sum}")));
        }
        let mut set = match kind {
            RuinSetKind::SumNegative => Self::from_directions(vec![vec![1.0; l.len()]], "")?,
            RuinSetKind::AnyNegative => Self::orthant(l)?,
        };
        set.label = format!("ruin_translate l={} {kind:?}", fmt_vec(l));
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `Y_A(x) = max_p p·x`.
    pub fn y_projection(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.y(x))
    }

    /// Unchecked projection for hot loops; `x.len()` must equal `dim`.
    #[inline]
    pub fn y(&self, x: &[f64]) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for p in &self.directions {
            let dot: f64 = p.iter().zip(x).map(|(a, b)| a * b).sum();
            if dot > best {
                best = dot;
            }
        }
        best
    }

    /// `x ∈ scale·A`.
    pub fn contains(&self, x: &[f64], scale: f64) -> Result<bool> {
        if !(scale > 0.0) {
            return Err(invalid(format!("scale must be positive, got {scale}")));
        }
        self.check_dim(x)?;
        Ok(self.directions.iter().any(|p| {
            let dot: f64 = p.iter().zip(x).map(|(a, b)| a * b).sum();
            dot > scale
        }))
    }

    /// The set `λA`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("scale factor must be positive"));
        }
        let dirs = self
            .directions
            .iter()
            .map(|p| p.iter().map(|v| v / lambda).collect())
            .collect();
        Self::from_directions(dirs, format!("{} x{lambda}", self.label))
    }

    /// `inf{t > 0 : t·v ∈ A} = 1 / Y_A(v)`, infinite when the ray misses A.
    pub fn entry_scale(&self, v: &[f64]) -> Result<f64> {
        let y = self.y_projection(v)?;
        Ok(if y > 0.0 { 1.0 / y } else { f64::INFINITY })
    }

    /// Weights of a single-direction (linear) set.
    pub fn linear_weights(&self) -> Option<&[f64]> {
        match self.directions.as_slice() {
            [p] => Some(p),
            _ => None,
        }
    }

    /// Thresholds `b` when the set is an axis-aligned union `{x_i > b_i}`;
    /// axes absent from the set get `+∞`.
    pub fn axis_thresholds(&self) -> Option<Vec<f64>> {
        let mut b = vec![f64::INFINITY; self.dim];
        for p in &self.directions {
            let nz: Vec<usize> = (0..self.dim).filter(|&i| p[i] != 0.0).collect();
            if nz.len() != 1 {
                return None;
            }
            let i = nz[0];
            b[i] = b[i].min(1.0 / p[i]);
        }
        Some(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn half() -> RareSet {
        RareSet::halfspace(&[0.5, 0.5], 1.0).unwrap()
    }

    /// Largest grid point `kΔ` with `contains(x, kΔ)`, found by bisection over
    /// the lattice (membership is monotone in the scale).
    fn grid_scan(a: &RareSet, x: &[f64], delta: f64) -> f64 {
        let mut lo = 0u64;
        let mut hi = 1u64;
        while a.contains(x, hi as f64 * delta).unwrap() {
            lo = hi;
            hi *= 2;
        }
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if a.contains(x, mid as f64 * delta).unwrap() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo as f64 * delta
    }

    #[test]
    fn halfspace_examples() {
        assert_eq!(half().y_projection(&[2.0, 0.0]).unwrap(), 1.0);
        assert_eq!(half().y_projection(&[4.0, 4.0]).unwrap(), 4.0);
        let d = 4;
        let c = 2.5;
        let a = RareSet::halfspace(&vec![1.0 / d as f64; d], c).unwrap();
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((a.y_projection(&x).unwrap() - 10.0 / (c * d as f64)).abs() < 1e-15);
    }

    #[test]
    fn orthant_examples() {
        let a = RareSet::orthant(&[2.0, 2.0]).unwrap();
        assert_eq!(a.y_projection(&[3.0, 6.0]).unwrap(), 3.0);
        assert_eq!(a.directions(), &[vec![0.5, 0.0], vec![0.0, 0.5]]);
        assert!(a.contains(&[3.0, 6.0], 2.9).unwrap());
        let ones = RareSet::orthant(&[1.0; 3]).unwrap();
        assert_eq!(ones.y_projection(&[0.0; 3]).unwrap(), 0.0);
        assert!(!ones.contains(&[0.0; 3], 1e-300).unwrap());
    }

    #[test]
    fn strict_boundary() {
        assert!(half().contains(&[2.0, 0.0], 0.999).unwrap());
        assert!(!half().contains(&[2.0, 0.0], 1.0).unwrap());
    }

    #[test]
    fn ruin_translates() {
        let s = RareSet::ruin_translate(&[0.5, 0.5], RuinSetKind::SumNegative).unwrap();
        assert_eq!(
            s.directions(),
            RareSet::halfspace(&[0.5, 0.5], 0.5).unwrap().directions()
        );
        let skew = RareSet::ruin_translate(&[0.2, 0.8], RuinSetKind::SumNegative).unwrap();
        // l − z has negative sum iff z sums past 1
        for z in [[0.6, 0.5], [0.1, 0.85], [0.9, 0.05]] {
            let in_l1 = (0.2 - z[0]) + (0.8 - z[1]) < 0.0;
            assert_eq!(skew.contains(&z, 1.0).unwrap(), in_l1);
        }
        let o = RareSet::ruin_translate(&[0.3, 0.7], RuinSetKind::AnyNegative).unwrap();
        assert_eq!(
            o.directions(),
            RareSet::orthant(&[0.3, 0.7]).unwrap().directions()
        );
        let one = RareSet::ruin_translate(&[1.0], RuinSetKind::SumNegative).unwrap();
        for x in [0.0, 0.5, 1.0, 17.25] {
            assert_eq!(one.y_projection(&[x]).unwrap(), x);
        }
        assert!(RareSet::ruin_translate(&[0.5, 0.6], RuinSetKind::SumNegative).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RareSet::halfspace(&[0.0, 0.0], 1.0).is_err());
        assert!(RareSet::halfspace(&[1.0, 0.0], 0.0).is_err());
        assert!(RareSet::orthant(&[1.0, 0.0]).is_err());
        assert!(matches!(
            half().y_projection(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
        assert!(RareSet::from_directions(vec![], "x").is_err());
    }

    #[test]
    fn entry_scales_and_shapes() {
        assert_eq!(half().entry_scale(&[1.0, 0.0]).unwrap(), 2.0);
        let l = RareSet::halfspace(&[0.0, 1.0], 1.0).unwrap();
        assert_eq!(l.entry_scale(&[1.0, 0.0]).unwrap(), f64::INFINITY);
        assert_eq!(
            RareSet::orthant(&[2.0, 3.0]).unwrap().axis_thresholds(),
            Some(vec![2.0, 3.0])
        );
        assert_eq!(half().axis_thresholds(), None);
        assert_eq!(l.axis_thresholds(), Some(vec![f64::INFINITY, 1.0]));
        assert_eq!(half().linear_weights(), Some(&[0.5, 0.5][..]));
    }

    #[test]
    fn spec_round_trip() {
        let s = RareSetSpec::RuinTranslate {
            l: vec![0.3, 0.7],
            ruin: RuinSetKind::AnyNegative,
        };
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(
            j,
            r#"{"kind":"ruin_translate","l":[0.3,0.7],"ruin":"any_negative"}"#
        );
        assert_eq!(serde_json::from_str::<RareSetSpec>(&j).unwrap(), s);
    }

    fn any_set() -> impl Strategy<Value = RareSet> {
        prop_oneof![
            prop::collection::vec(0.0f64..3.0, 2..5)
                .prop_filter("non-zero", |l| l.iter().any(|&v| v > 1e-3))
                .prop_flat_map(|l| (Just(l), 0.1f64..5.0))
                .prop_map(|(l, c)| RareSet::halfspace(&l, c).unwrap()),
            prop::collection::vec(0.1f64..5.0, 2..5).prop_map(|b| RareSet::orthant(&b).unwrap()),
            prop::collection::vec(0.05f64..1.0, 2..5).prop_flat_map(|w| {
                let s: f64 = w.iter().sum();
                let l: Vec<f64> = w.iter().map(|v| v / s).collect();
                let l = {
                    // Re-normalise the last entry so the sum is 1 to the last ulp.
                    let mut l = l;
                    let head: f64 = l[..l.len() - 1].iter().sum();
                    let n = l.len();
                    l[n - 1] = 1.0 - head;
                    l
                };
                prop_oneof![
                    Just(RuinSetKind::SumNegative),
                    Just(RuinSetKind::AnyNegative)
                ]
                .prop_map(move |k| RareSet::ruin_translate(&l, k).unwrap())
            }),
        ]
    }

    fn set_and_point() -> impl Strategy<Value = (RareSet, Vec<f64>, Vec<f64>)> {
        any_set().prop_flat_map(|a| {
            let d = a.dim();
            (
                Just(a),
                prop::collection::vec(0.0f64..10.0, d),
                prop::collection::vec(0.0f64..3.0, d),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn duality((a, x, _) in set_and_point(), s in 1e-6f64..20.0) {
            let y = a.y_projection(&x).unwrap();
            prop_assert_eq!(a.contains(&x, s).unwrap(), y > s);
        }

        #[test]
        fn grid_scan_oracle((a, x, _) in set_and_point()) {
            let y = a.y_projection(&x).unwrap();
            let g = grid_scan(&a, &x, 1e-4);
            prop_assert!(y >= g && y - g <= 1e-4 * (1.0 + 1e-9), "y={} scan={}", y, g);
        }

        #[test]
        fn monotone_and_increasing((a, x, dx) in set_and_point(), s in 1e-3f64..20.0) {
            let xp: Vec<f64> = x.iter().zip(&dx).map(|(u, v)| u + v).collect();
            prop_assert!(a.y(&xp) >= a.y(&x));
            if a.contains(&x, s).unwrap() {
                prop_assert!(a.contains(&xp, s).unwrap());
            }
        }

        #[test]
        fn scale_equivariance((a, x, _) in set_and_point(), t in 0.0f64..50.0) {
            let tx: Vec<f64> = x.iter().map(|v| t * v).collect();
            let lhs = a.y(&tx);
            let rhs = t * a.y(&x);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }

        #[test]
        fn cone_property((a, x, _) in set_and_point(), s in 0.01f64..10.0, lambda in 0.1f64..10.0) {
            // x ∈ (λs)A  ⇔  x ∈ s(λA), away from the boundary.
            let la = a.scaled(lambda).unwrap();
            let y = a.y(&x);
            prop_assume!((y - lambda * s).abs() > 1e-9 * y.max(1.0));
            prop_assert_eq!(a.contains(&x, lambda * s).unwrap(), la.contains(&x, s).unwrap());
        }
    }
}
