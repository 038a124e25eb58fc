//! Trend verdicts and the tabular output shared by every experiment.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::mc::Estimate;

/// Slack on the "deviations non-increasing" rule, absorbing rounding.
pub const MONOTONE_SLACK: f64 = 1e-12;
pub const DEFAULT_LAST_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Consistent,
    Inconsistent,
    Inconclusive,
}

/// Ratios along a grid compared against a limit.
///
/// Deterministic reports carry zero standard errors; Monte Carlo reports
/// carry the delta-method standard error of each ratio and are judged with
/// two-standard-error slack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub grid: Vec<f64>,
    pub ratios: Vec<f64>,
    pub ratio_stderr: Vec<f64>,
    pub target: Option<f64>,
    pub verdict: Verdict,
    pub max_dev_last_k: f64,
    pub tol: f64,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn rel_dev(r: f64, target: f64) -> f64 {
    if target == 0.0 {
        r.abs()
    } else {
        ((r - target) / target).abs()
    }
}

impl TrendReport {
    /// Deterministic limit check: the last `k` deviations must be within
    /// `tol` and non-increasing.
    pub fn limit(grid: Vec<f64>, ratios: Vec<f64>, target: f64, tol: f64, k: usize) -> Self {
        let n = ratios.len();
        let se = vec![0.0; n];
        let mut rep = Self {
            grid,
            ratios,
            ratio_stderr: se,
            target: Some(target),
            verdict: Verdict::Inconclusive,
            max_dev_last_k: f64::NAN,
            tol,
            k,
            notes: Vec::new(),
        };
        if n < k || k == 0 {
            rep.notes.push(format!("only {n} grid points, need {k}"));
            return rep;
        }
        let tail = &rep.ratios[n - k..];
        if tail.iter().any(|r| !r.is_finite()) {
            rep.notes
                .push("non-finite ratio among the last grid points".into());
            return rep;
        }
        let devs: Vec<f64> = tail.iter().map(|&r| rel_dev(r, target)).collect();
        rep.max_dev_last_k = devs.iter().cloned().fold(0.0, f64::max);
        let within = devs.iter().all(|&d| d <= tol);
        let monotone = devs.windows(2).all(|w| w[1] <= w[0] + MONOTONE_SLACK);
        rep.verdict = if within && monotone {
            Verdict::Consistent
        } else {
            Verdict::Inconsistent
        };
        rep
    }

    /// Boundedness check: the last `k` ratios must agree to within `spread`
    /// (`(max − min)/min`).
    pub fn bounded(grid: Vec<f64>, ratios: Vec<f64>, spread: f64, k: usize) -> Self {
        let n = ratios.len();
        let mut rep = Self {
            grid,
            ratio_stderr: vec![0.0; n],
            ratios,
            target: None,
            verdict: Verdict::Inconclusive,
            max_dev_last_k: f64::NAN,
            tol: spread,
            k,
            notes: Vec::new(),
        };
        if n < k || k == 0 {
            rep.notes.push(format!("only {n} grid points, need {k}"));
            return rep;
        }
        let tail = &rep.ratios[n - k..];
        if tail.iter().any(|r| !r.is_finite()) {
            rep.verdict = Verdict::Inconsistent;
            rep.max_dev_last_k = f64::INFINITY;
            rep.notes.push("ratio diverged".into());
            return rep;
        }
        let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        rep.max_dev_last_k = if lo > 0.0 {
            (hi - lo) / lo
        } else {
            f64::INFINITY
        };
        rep.verdict = if rep.max_dev_last_k <= spread {
            Verdict::Consistent
        } else {
            Verdict::Inconsistent
        };
        rep
    }

    /// Monte Carlo limit check. A point is inside the band when
    /// `|r − target| ≤ tol·target + 2·se`; the trend is monotone when each
    /// deviation exceeds its predecessor by at most two combined standard
    /// errors. Relative standard errors above `max_rel_se` make the report
    /// inconclusive.
    pub fn statistical(
        grid: Vec<f64>,
        ratios: Vec<f64>,
        ratio_stderr: Vec<f64>,
        target: f64,
        tol: f64,
        k: usize,
        max_rel_se: f64,
    ) -> Self {
        let n = ratios.len();
        let mut rep = Self {
            grid,
            ratios,
            ratio_stderr,
            target: Some(target),
            verdict: Verdict::Inconclusive,
            max_dev_last_k: f64::NAN,
            tol,
            k,
            notes: Vec::new(),
        };
        if n < k || k == 0 {
            rep.notes.push(format!("only {n} grid points, need {k}"));
            return rep;
        }
        let r = &rep.ratios[n - k..];
        let se = &rep.ratio_stderr[n - k..];
        if r.iter()
            .zip(se)
            .any(|(r, s)| !r.is_finite() || !s.is_finite())
        {
            rep.notes
                .push("zero hits or non-finite ratio among the last grid points".into());
            return rep;
        }
        let devs: Vec<f64> = r.iter().map(|&v| rel_dev(v, target)).collect();
        rep.max_dev_last_k = devs.iter().cloned().fold(0.0, f64::max);
        if r.iter()
            .zip(se)
            .any(|(v, s)| *v > 0.0 && s / v > max_rel_se)
        {
            rep.notes
                .push(format!("relative standard error above {max_rel_se}"));
            return rep;
        }
        let scale = if target == 0.0 { 1.0 } else { target.abs() };
        let within = devs
            .iter()
            .zip(se)
            .all(|(d, s)| *d <= tol + 2.0 * s / scale);
        let monotone = (1..k).all(|i| {
            let slack = 2.0 * (se[i] * se[i] + se[i - 1] * se[i - 1]).sqrt() / scale;
            devs[i] <= devs[i - 1] + slack + MONOTONE_SLACK
        });
        rep.verdict = if within && monotone {
            Verdict::Consistent
        } else {
            Verdict::Inconsistent
        };
        rep
    }

    pub fn devs(&self) -> Vec<f64> {
        match self.target {
            Some(t) => self.ratios.iter().map(|&r| rel_dev(r, t)).collect(),
            None => vec![f64::NAN; self.ratios.len()],
        }
    }

    /// Rows in the unified CSV layout.
    pub fn rows(&self, experiment: &str, series: &str) -> Vec<DataRow> {
        let devs = self.devs();
        self.grid
            .iter()
            .enumerate()
            .map(|(i, &x)| DataRow {
                experiment: experiment.to_string(),
                series: series.to_string(),
                index: i,
                x,
                ratio: self.ratios[i],
                stderr: self.ratio_stderr[i],
                target: self.target.unwrap_or(f64::NAN),
                dev: devs[i],
                method: "ratio".into(),
                ..DataRow::default()
            })
            .collect()
    }
}

pub const CSV_HEADER: &str =
    "experiment,series,index,x,threshold,estimate,stderr,ci_lo,ci_hi,target,ratio,dev,method";

/// One line of `data.csv`. Unused numeric columns are NaN and print empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRow {
    pub experiment: String,
    pub series: String,
    pub index: usize,
    pub x: f64,
    pub threshold: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub target: f64,
    pub ratio: f64,
    pub dev: f64,
    pub method: String,
}

impl Default for DataRow {
    fn default() -> Self {
        Self {
            experiment: String::new(),
            series: String::new(),
            index: 0,
            x: f64::NAN,
            threshold: f64::NAN,
            estimate: f64::NAN,
            stderr: f64::NAN,
            ci_lo: f64::NAN,
            ci_hi: f64::NAN,
            target: f64::NAN,
            ratio: f64::NAN,
            dev: f64::NAN,
            method: String::new(),
        }
    }
}

impl DataRow {
    pub fn with_estimate(mut self, e: &Estimate) -> Self {
        self.estimate = e.value;
        self.stderr = e.stderr;
        self.ci_lo = e.ci95.0;
        self.ci_hi = e.ci95.1;
        self.method = e.method.as_str().to_string();
        self
    }
}

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:e}")
    }
}

fn text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Render rows as CSV with a header line. Output is a pure function of the
/// rows, so identical inputs give byte-identical files.
pub fn to_csv(rows: &[DataRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            text(&r.experiment),
            text(&r.series),
            r.index,
            num(r.x),
            num(r.threshold),
            num(r.estimate),
            num(r.stderr),
            num(r.ci_lo),
            num(r.ci_hi),
            num(r.target),
            num(r.ratio),
            num(r.dev),
            text(&r.method),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limit_rules() {
        let g = vec![1.0, 2.0, 3.0, 4.0];
        let ok = TrendReport::limit(g.clone(), vec![1.2, 1.04, 1.02, 1.01], 1.0, 0.05, 3);
        assert_eq!(ok.verdict, Verdict::Consistent);
        assert!((ok.max_dev_last_k - 0.04).abs() < 1e-12);
        let growing = TrendReport::limit(g.clone(), vec![1.0, 1.0, 1.01, 1.02], 1.0, 0.05, 3);
        assert_eq!(growing.verdict, Verdict::Inconsistent);
        let far = TrendReport::limit(g.clone(), vec![2.7; 4], 1.0, 0.02, 3);
        assert_eq!(far.verdict, Verdict::Inconsistent);
        let short = TrendReport::limit(vec![1.0], vec![1.0], 1.0, 0.02, 3);
        assert_eq!(short.verdict, Verdict::Inconclusive);
        let nan = TrendReport::limit(g, vec![1.0, 1.0, f64::NAN, 1.0], 1.0, 0.02, 3);
        assert_eq!(nan.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn bounded_rules() {
        let g = vec![1.0, 2.0, 3.0];
        assert_eq!(
            TrendReport::bounded(g.clone(), vec![4.0, 4.1, 4.05], 0.1, 3).verdict,
            Verdict::Consistent
        );
        assert_eq!(
            TrendReport::bounded(g, vec![4.0, 8.0, 16.0], 0.1, 3).verdict,
            Verdict::Inconsistent
        );
    }

    #[test]
    fn statistical_rules() {
        let g = vec![1.0, 2.0, 3.0];
        let r = TrendReport::statistical(
            g.clone(),
            vec![1.09, 1.07, 1.05],
            vec![0.03; 3],
            1.0,
            0.05,
            3,
            0.5,
        );
        assert_eq!(r.verdict, Verdict::Consistent);
        let r = TrendReport::statistical(
            g.clone(),
            vec![1.5, 1.5, 1.5],
            vec![0.01; 3],
            1.0,
            0.05,
            3,
            0.5,
        );
        assert_eq!(r.verdict, Verdict::Inconsistent);
        let r = TrendReport::statistical(g, vec![1.0, 1.0, 1.0], vec![1.0; 3], 1.0, 0.05, 3, 0.5);
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn csv_layout() {
        let rep = TrendReport::limit(vec![8.0, 16.0, 32.0], vec![1.5, 1.2, 1.1], 1.0, 0.2, 3);
        let csv = to_csv(&rep.rows("class_diag", "L a=1"));
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(
            lines.next(),
            Some("class_diag,L a=1,0,8e0,,,0e0,,,1e0,1.5e0,5e-1,ratio")
        );
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(text("a,b"), "\"a,b\"");
    }
}
